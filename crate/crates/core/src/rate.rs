//! Worst-case rate factors of cyclical heavy ball via the trace (link polynomial) formula.

use serde::{Deserialize, Serialize};

use crate::chebyshev::{cheb_t, Poly, RootFinder};
use crate::error::{Error, Result};
use crate::spectrum::{GapParams, SpectrumSet};

/// Largest cycle length supported by the symbolic expansion.
pub const MAX_CYCLE: usize = 8;

/// Grid density for extremum search, per unit of the normalized variable `λ / L`.
const EXTREMUM_GRID: f64 = 65536.0;

/// A step-size cycle `h_0..h_{K-1}` with constant momentum `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleParams {
    pub h: Vec<f64>,
    pub m: f64,
}

impl CycleParams {
    pub fn new(h: Vec<f64>, m: f64) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::InvalidParams("cycle must contain at least one step-size".into()));
        }
        if h.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidParams(format!("step-sizes must be positive, got {h:?}")));
        }
        if !(0.0..1.0).contains(&m) {
            return Err(Error::InvalidParams(format!("momentum must lie in [0, 1), got {m}")));
        }
        Ok(CycleParams { h, m })
    }

    pub fn k(&self) -> usize {
        self.h.len()
    }

    /// Rotates the cycle so that it starts at `h[shift]`.
    pub fn rotated(&self, shift: usize) -> CycleParams {
        let mut h = self.h.clone();
        h.rotate_left(shift % self.k());
        CycleParams { h, m: self.m }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Robust,
    Convergent,
    Divergent,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::Robust => "robust",
            Regime::Convergent => "convergent",
            Regime::Divergent => "divergent",
        };
        f.write_str(s)
    }
}

/// Worst-case behaviour of a cycle on a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub sigma_star: f64,
    pub regime: Regime,
    /// Asymptotic rate factor; values `>= 1` mean no convergence.
    pub rate_factor: f64,
    pub witness_lambda: f64,
}

fn check_momentum(params: &CycleParams) -> Result<()> {
    if params.m <= 0.0 {
        return Err(Error::InvalidMomentum);
    }
    Ok(())
}

/// `σ(λ) = ½ Tr(M(h_{K-1}) ⋯ M(h_0))` with `M(h) = [[(1+m-hλ)/√m, -1], [1, 0]]`.
pub fn sigma_cycle(params: &CycleParams, lambda: f64) -> Result<f64> {
    check_momentum(params)?;
    Ok(sigma_unchecked(params, lambda))
}

fn sigma_unchecked(params: &CycleParams, lambda: f64) -> f64 {
    let sm = params.m.sqrt();
    // running product [[p, q], [r, s]]
    let (mut p, mut q, mut r, mut s) = (1.0, 0.0, 0.0, 1.0);
    for &h in &params.h {
        let a = (1.0 + params.m - h * lambda) / sm;
        let (np, nq) = (a * p - r, a * q - s);
        r = p;
        s = q;
        p = np;
        q = nq;
    }
    0.5 * (p + s)
}

/// Coefficient form of the link polynomial of a cycle.
pub fn sigma_poly(params: &CycleParams) -> Result<Poly> {
    check_momentum(params)?;
    if params.k() > MAX_CYCLE {
        return Err(Error::InvalidParams(format!(
            "cycle length {} exceeds the supported maximum {MAX_CYCLE}",
            params.k()
        )));
    }
    let sm = params.m.sqrt();
    let one = Poly::constant(1.0);
    let (mut p, mut q, mut r, mut s) = (one.clone(), Poly::zero(), Poly::zero(), one);
    for &h in &params.h {
        let a = Poly::linear((1.0 + params.m) / sm, -h / sm);
        let np = a.mul(&p).sub(&r);
        let nq = a.mul(&q).sub(&s);
        r = p;
        s = q;
        p = np;
        q = nq;
    }
    Ok(p.add(&s).scale(0.5))
}

/// Value of σ at 0 for every cycle with momentum `m`: `T_K((1+m)/(2√m)) = (1+m^K)/(2 m^{K/2})`.
pub fn sigma_at_zero(m: f64, k: usize) -> f64 {
    cheb_t(k as u32, (1.0 + m) / (2.0 * m.sqrt()))
}

/// Largest `|p|` over the set, with the smallest maximizer.
///
/// Candidates are all interval endpoints plus interior critical points of `p`.
fn sup_abs_over<F: Fn(f64) -> f64>(p: &Poly, spec: &SpectrumSet, eval: F) -> Result<(f64, f64)> {
    Ok(argmax_abs(extremum_candidates(p, spec)?, eval))
}

/// Interval endpoints of the set plus every critical point of `p` inside it, sorted.
pub fn extremum_candidates(p: &Poly, spec: &SpectrumSet) -> Result<Vec<f64>> {
    let mut candidates: Vec<f64> = Vec::new();
    for &(lo, hi) in spec.intervals() {
        candidates.push(lo);
        candidates.push(hi);
        if hi > lo {
            candidates.extend(scaled_roots(&p.derivative(), lo, hi, spec.l())?);
        }
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    Ok(candidates)
}

/// Real roots of `p` in `[lo, hi]`, searched on `u = λ / scale` so the grid
/// density does not depend on the eigenvalue units.
pub fn scaled_roots(p: &Poly, lo: f64, hi: f64, scale: f64) -> Result<Vec<f64>> {
    if p.degree() == 0 {
        return Ok(Vec::new());
    }
    let finder = RootFinder {
        grid_per_unit: EXTREMUM_GRID,
    };
    let pu = p.compose_affine(0.0, scale);
    let mut out = Vec::new();
    for root in finder.roots_in(&pu, lo / scale, hi / scale, 1e-14)? {
        let x = (root.x * scale).clamp(lo, hi);
        out.push(x);
        if root.multiplicity == 2 {
            out.push(x);
        }
    }
    Ok(out)
}

fn argmax_abs<F: Fn(f64) -> f64>(mut candidates: Vec<f64>, eval: F) -> (f64, f64) {
    candidates.sort_by(f64::total_cmp);
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for x in candidates {
        let v = eval(x).abs();
        if v > best.0 || v.is_nan() {
            best = (v, x);
        }
    }
    best
}

/// `sup_{λ ∈ Λ} |σ(λ)|` and a maximizer.
///
/// For `K <= 2` the maximum is taken over the exact candidate set (endpoints
/// and the vertex of the parabola when inside the set); larger cycles use the
/// expanded polynomial and the roots of its derivative.
pub fn sigma_sup(params: &CycleParams, spec: &SpectrumSet) -> Result<(f64, f64)> {
    check_momentum(params)?;
    let eval = |x: f64| sigma_unchecked(params, x);
    match params.k() {
        1 | 2 => {
            let mut c: Vec<f64> = spec.intervals().iter().flat_map(|&(a, b)| [a, b]).collect();
            if params.k() == 2 {
                let (h0, h1) = (params.h[0], params.h[1]);
                let vertex = (1.0 + params.m) * (h0 + h1) / (2.0 * h0 * h1);
                if spec.contains(vertex) {
                    c.push(vertex);
                }
            }
            Ok(argmax_abs(c, eval))
        }
        _ => sup_abs_over(&sigma_poly(params)?, spec, eval),
    }
}

/// Largest σ* that still converges: `(1+m^K)/(2 m^{K/2})`.
pub fn divergence_threshold(m: f64, k: usize) -> f64 {
    sigma_at_zero(m, k)
}

/// Regime and asymptotic rate factor for a given `σ*`.
///
/// With `m = 0` the value `σ*` is read as `sup |Π(1 - h_i λ)|` of the
/// momentum-free cycle and the factor is its K-th root.
pub fn rate_factor(sigma_star: f64, m: f64, k: usize) -> (Regime, f64) {
    let kf = k.max(1) as f64;
    if m <= 0.0 {
        let rate = sigma_star.powf(1.0 / kf);
        let regime = if rate < 1.0 { Regime::Convergent } else { Regime::Divergent };
        return (regime, rate);
    }
    let sm = m.sqrt();
    if sigma_star <= 1.0 {
        return (Regime::Robust, sm);
    }
    let rate = sm * (sigma_star + (sigma_star * sigma_star - 1.0).sqrt()).powf(1.0 / kf);
    let regime = if sigma_star < divergence_threshold(m, k) {
        Regime::Convergent
    } else {
        Regime::Divergent
    };
    (regime, rate)
}

/// Full worst-case report for a cycle on a spectrum.
pub fn rate_report(params: &CycleParams, spec: &SpectrumSet) -> Result<RateReport> {
    let (sigma_star, witness) = if params.m == 0.0 {
        let prod = params
            .h
            .iter()
            .fold(Poly::constant(1.0), |acc, &h| acc.mul(&Poly::linear(1.0, -h)));
        sup_abs_over(&prod, spec, |x| prod.eval(x))?
    } else {
        sigma_sup(params, spec)?
    };
    let (regime, rate) = rate_factor(sigma_star, params.m, params.k());
    Ok(RateReport {
        sigma_star,
        regime,
        rate_factor: rate,
        witness_lambda: witness,
    })
}

/// Optimal two-step rate `(√(ρ²-R²) - √(ρ²-1)) / √(1-R²)`, and the
/// non-asymptotic bound `rate^t (1 + t √((ρ²-1)/(ρ²-R²)))` for even `t`.
pub fn optimal_rate_k2(gp: &GapParams, t: Option<u32>) -> Result<(f64, Option<f64>)> {
    let (rho, r) = (gp.rho, gp.r);
    // factored differences keep precision when ρ → 1 or R → 1
    let a = (rho - r) * (rho + r);
    let b = (rho - 1.0) * (rho + 1.0);
    let c = (1.0 - r) * (1.0 + r);
    let rate = (a.sqrt() - b.sqrt()) / c.sqrt();
    let bound = match t {
        None => None,
        Some(t) if t % 2 == 1 => {
            return Err(Error::InvalidArgument(format!("t must be even, got {t}")));
        }
        Some(t) => Some(rate.powi(t as i32) * (1.0 + t as f64 * (b / a).sqrt())),
    };
    Ok((rate, bound))
}

/// Leading-order rate factor for small κ with `K = 2` or `K = 3`.
pub fn asymptotic_expansion(r: f64, kappa: f64, k: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&r) || !(kappa > 0.0) {
        return Err(Error::InvalidArgument(format!("need 0 <= R < 1 and kappa > 0, got {r}, {kappa}")));
    }
    let sk = kappa.sqrt();
    match k {
        2 => Ok(1.0 - 2.0 * sk / (1.0 - r * r).sqrt()),
        3 => Ok(1.0 - 2.0 * sk * ((1.0 - r * r / 9.0) / (1.0 - r * r)).sqrt()),
        _ => Err(Error::InvalidArgument(format!("expansion known for K = 2 or 3, got {k}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::gap_params;
    use proptest::prelude::*;

    fn cp(h: &[f64], m: f64) -> CycleParams {
        CycleParams::new(h.to_vec(), m).unwrap()
    }

    #[test]
    fn sigma_cycle_examples() {
        assert!((sigma_cycle(&cp(&[1.0], 0.25), 0.0).unwrap() - 1.25).abs() < 1e-15);
        let v = sigma_cycle(&cp(&[4.0 / 7.0, 1.0 / 7.0], 1.0 / 7.0), 2.0).unwrap();
        assert!((v + 1.0).abs() < 1e-12);
        let v = sigma_cycle(&cp(&[0.1, 0.2, 0.3], 0.25), 0.0).unwrap();
        assert!((v - 4.0625).abs() < 1e-12);
        assert!((v - cheb_t(3, 1.25)).abs() < 1e-12);
    }

    #[test]
    fn zero_momentum_is_rejected_by_trace_formula() {
        let p = cp(&[0.2, 0.3], 0.0);
        assert_eq!(sigma_cycle(&p, 1.0), Err(Error::InvalidMomentum));
        assert_eq!(sigma_sup(&p, &SpectrumSet::interval(1.0, 9.0).unwrap()), Err(Error::InvalidMomentum));
    }

    #[test]
    fn sigma_sup_examples() {
        let single = SpectrumSet::interval(1.0, 9.0).unwrap();
        let (s, w) = sigma_sup(&cp(&[0.25, 0.25], 0.25), &single).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(w == 1.0 || w == 9.0);

        let two = SpectrumSet::two(1.0, 2.0, 8.0, 9.0).unwrap();
        let (s, w) = sigma_sup(&cp(&[4.0 / 7.0, 1.0 / 7.0], 1.0 / 7.0), &two).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(w, 1.0);

        // σ(λ) = (1.25 - 0.2 λ) / 1 is 1.05 at λ = 1 and -0.55 at λ = 9
        let (s, w) = sigma_sup(&cp(&[0.2], 0.25), &single).unwrap();
        assert!((s - 1.05).abs() < 1e-12);
        assert_eq!(w, 1.0);
        assert!((sigma_cycle(&cp(&[0.2], 0.25), 9.0).unwrap() + 0.55).abs() < 1e-12);
    }

    #[test]
    fn sigma_sup_general_k_matches_dense_scan() {
        let p = cp(&[0.05, 0.4, 0.2], 0.3);
        let spec = SpectrumSet::two(1.0, 3.0, 6.0, 9.0).unwrap();
        let (s, w) = sigma_sup(&p, &spec).unwrap();
        let scan = spec
            .grid(200_000)
            .into_iter()
            .map(|x| sigma_cycle(&p, x).unwrap().abs())
            .fold(0.0, f64::max);
        assert!(s >= scan - 1e-12);
        assert!(s <= scan * (1.0 + 1e-6));
        assert!(spec.contains(w));
    }

    #[test]
    fn rate_factor_examples() {
        let (reg, r) = rate_factor(0.9, 0.3, 2);
        assert_eq!(reg, Regime::Robust);
        assert!((r - 0.3f64.sqrt()).abs() < 1e-15);

        // threshold for K = 2, m = 0.25 is (1 + 1/16)/(2/4) = 2.125
        let (reg, r) = rate_factor(2.125, 0.25, 2);
        assert_eq!(reg, Regime::Divergent);
        assert!((r - 1.0).abs() < 1e-12);
        // for K = 1 the threshold is 1.25, so 2.125 is well past it
        let (reg, r) = rate_factor(2.125, 0.25, 1);
        assert_eq!(reg, Regime::Divergent);
        assert!((r - 2.0).abs() < 1e-12);

        let (reg, r) = rate_factor(1.5, 0.25, 2);
        assert_eq!(reg, Regime::Convergent);
        assert!((r - 0.5 * (1.5 + 1.25f64.sqrt()).sqrt()).abs() < 1e-12);
        assert!((r - 0.8090170).abs() < 1e-7);
    }

    #[test]
    fn rate_factor_continuous_at_one() {
        for k in 1..6 {
            let (_, a) = rate_factor(1.0, 0.4, k);
            let (_, b) = rate_factor(1.0 + 1e-12, 0.4, k);
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn gradient_descent_route() {
        let single = SpectrumSet::interval(1.0, 9.0).unwrap();
        let rep = rate_report(&cp(&[0.2], 0.0), &single).unwrap();
        assert!((rep.rate_factor - 0.8).abs() < 1e-12);
        assert_eq!(rep.regime, Regime::Convergent);
    }

    #[test]
    fn optimal_rate_k2_examples() {
        let gp = gap_params(&SpectrumSet::two(1.0, 2.0, 8.0, 9.0).unwrap()).unwrap();
        let (r, _) = optimal_rate_k2(&gp, None).unwrap();
        assert!((r - 1.0 / 7f64.sqrt()).abs() < 1e-12);

        let gp = gap_params(&SpectrumSet::interval(1.0, 9.0).unwrap()).unwrap();
        let (r, bound) = optimal_rate_k2(&gp, Some(2)).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        assert!((bound.unwrap() - 0.55).abs() < 1e-12);
        assert!(optimal_rate_k2(&gp, Some(3)).is_err());
    }

    #[test]
    fn optimal_rate_k2_against_coarse_search() {
        let spec = SpectrumSet::two(1.0, 2.0, 8.0, 9.0).unwrap();
        let mut best = f64::INFINITY;
        // a mesh of step 1/35 in h and 1/70 in m contains the optimum exactly
        for i in 1..=28 {
            for j in 1..=28 {
                for k in 1..35 {
                    let rep = rate_report(&cp(&[i as f64 / 35.0, j as f64 / 35.0], k as f64 / 70.0), &spec).unwrap();
                    best = best.min(rep.rate_factor);
                }
            }
        }
        let (r, _) = optimal_rate_k2(&gap_params(&spec).unwrap(), None).unwrap();
        assert!(best >= r - 1e-9, "search beat the optimum: {best} < {r}");
        // rounding puts σ* a hair above 1, which costs O(√ε) in the rate
        assert!(best - r < 1e-7, "{best} vs {r}");
    }

    #[test]
    fn optimal_rate_k2_decreasing_in_r() {
        let mut prev = f64::INFINITY;
        for i in 0..10 {
            let gp = GapParams::from_rho_r(1.25, i as f64 / 10.0).unwrap();
            let (r, _) = optimal_rate_k2(&gp, None).unwrap();
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn asymptotic_examples() {
        assert!((asymptotic_expansion(0.6, 1e-6, 2).unwrap() - 0.9975).abs() < 1e-12);
        assert!((asymptotic_expansion(0.0, 1e-6, 2).unwrap() - 0.998).abs() < 1e-12);
        let v = asymptotic_expansion(0.6, 1e-6, 3).unwrap();
        assert!((v - (1.0 - 2.449_489_7e-3)).abs() < 1e-9);
        assert!(asymptotic_expansion(0.6, 1e-6, 4).is_err());
    }

    fn k2_product_form(h0: f64, h1: f64, m: f64, x: f64) -> f64 {
        let sm = m.sqrt();
        2.0 * ((1.0 + m - x * h0) / (2.0 * sm)) * ((1.0 + m - x * h1) / (2.0 * sm)) - 1.0
    }

    proptest! {
        #[test]
        fn sigma_at_zero_identity(h in prop::collection::vec(0.01f64..2.0, 1..=6), m in 0.01f64..0.99) {
            let k = h.len() as i32;
            let p = CycleParams::new(h, m).unwrap();
            let s0 = sigma_cycle(&p, 0.0).unwrap();
            let expected = (1.0 + m.powi(k)) / (2.0 * m.powf(k as f64 / 2.0));
            prop_assert!((s0 - expected).abs() <= 1e-10 * expected);
        }

        #[test]
        fn cyclic_invariance(h in prop::collection::vec(0.01f64..2.0, 1..=6), m in 0.01f64..0.99, x in 0.0f64..10.0) {
            let p = CycleParams::new(h, m).unwrap();
            let base = sigma_cycle(&p, x).unwrap();
            for s in 1..p.k() {
                let v = sigma_cycle(&p.rotated(s), x).unwrap();
                prop_assert!((v - base).abs() <= 1e-12 * base.abs().max(1.0) * 10.0);
            }
        }

        #[test]
        fn k2_matches_product_form(h0 in 0.01f64..2.0, h1 in 0.01f64..2.0, m in 0.01f64..0.99, x in 0.0f64..10.0) {
            let p = CycleParams::new(vec![h0, h1], m).unwrap();
            let v = sigma_cycle(&p, x).unwrap();
            let e = k2_product_form(h0, h1, m, x);
            prop_assert!((v - e).abs() <= 1e-12 * e.abs().max(1.0) * 10.0);
        }

        #[test]
        fn expansion_matches_evaluation(h in prop::collection::vec(0.01f64..2.0, 1..=5), m in 0.05f64..0.95, x in 0.0f64..5.0) {
            let p = CycleParams::new(h, m).unwrap();
            let poly = sigma_poly(&p).unwrap();
            let a = poly.eval(x);
            let b = sigma_cycle(&p, x).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }

        #[test]
        fn phb_reduction(kappa in 1e-4f64..0.9) {
            let gp = gap_params(&SpectrumSet::interval(kappa, 1.0).unwrap()).unwrap();
            let (r, _) = optimal_rate_k2(&gp, None).unwrap();
            let sk = kappa.sqrt();
            let phb = (1.0 - sk) / (1.0 + sk);
            prop_assert!((r - phb).abs() <= 1e-12 * phb.max(1e-3) * 10.0);
        }
    }
}
