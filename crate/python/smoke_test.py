"""Smoke test for the cyclic_momentum extension module.

Build first:

    cargo build -p cyclic-momentum-py --release --features extension-module

then run this script from the repository root. It copies the built library
next to itself as an importable module.
"""

import math
import pathlib
import shutil
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent
HERE = pathlib.Path(__file__).resolve().parent


def install():
    lib = ROOT / "target" / "release" / "libcyclic_momentum_py.so"
    if not lib.exists():
        sys.exit(f"missing {lib}; build the extension first")
    shutil.copy(lib, HERE / "cyclic_momentum.so")
    sys.path.insert(0, str(HERE))


def main():
    install()
    import cyclic_momentum as cm

    assert cm.cheb_t(3, 0.5) == 4 * 0.125 - 3 * 0.5

    spec = cm.SpectrumSet([(1.0, 2.0), (3.0, 4.0)])
    mu, L, kappa, rho, R, inner = spec.gap_params()
    assert (mu, L) == (1.0, 4.0)
    assert abs(R - 1 / 3) < 1e-12

    p = cm.tune_k2(spec)
    assert p.K == 2
    rep = cm.rate_report(p, spec)
    assert abs(rep.rate_factor - math.sqrt(p.m)) < 1e-6, rep
    rate, _ = cm.optimal_rate_k2(spec)
    assert abs(rate - rep.rate_factor) < 1e-6

    phb = cm.tune_phb(1.0, 4.0)
    assert cm.rate_report(phb, spec).rate_factor > rep.rate_factor

    g, grate = cm.tune_general(spec, 2, lp_points=500)
    assert abs(grate - rate) < 1e-3, (grate, rate)

    coeffs = cm.solve_sigma_lp(spec, 2, lp_points=500)
    assert cm.check_equioscillation(coeffs, spec, 1e-3)

    eigs = [1.0 + i / 49 for i in range(50)] + [3.0 + i / 49 for i in range(50)]
    trace = cm.run_hbk_diag(eigs, p, 400, seed=1)
    emp = cm.empirical_rate(trace, 50)
    assert emp <= rep.rate_factor + 0.05, (emp, rep.rate_factor)

    try:
        cm.SpectrumSet([(2.0, 1.0)])
    except ValueError:
        pass
    else:
        raise AssertionError("reversed interval accepted")

    print(f"ok: m={p.m:.6f} h={p.h} rate={rep.rate_factor:.6f} empirical={emp:.6f}")


if __name__ == "__main__":
    main()
