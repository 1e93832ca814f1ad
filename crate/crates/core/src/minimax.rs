//! Optimal link polynomials: the discretized linear program, closed forms and optimality certificates.
//!
//! The optimal degree-K link polynomial maximizes `σ(0)` subject to
//! `|σ| <= 1` on the spectrum. It is computed in the Chebyshev basis of the
//! hull `[μ, L]`, which keeps the program well conditioned.

use crate::chebyshev::{cheb_t, Poly};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::lp::solve_standard;
use crate::rate::{extremum_candidates, scaled_roots};
use crate::spectrum::{gap_params, SpectrumSet};

/// Chebyshev-basis coefficients at or below this fraction of the largest are treated as solver noise.
const CHEB_COEFF_NOISE: f64 = 1e-12;

/// Chebyshev–Lobatto points on `[lo, hi]`, endpoints included.
fn lobatto(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if hi == lo || n < 2 {
        return vec![lo];
    }
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    let mut pts: Vec<f64> = (0..n)
        .map(|j| mid - half * (std::f64::consts::PI * j as f64 / (n - 1) as f64).cos())
        .collect();
    pts[0] = lo;
    pts[n - 1] = hi;
    pts
}

/// Sample points: `n` Chebyshev points split across intervals by length, at least `K + 2` each.
pub fn sample_points(spec: &SpectrumSet, k: usize, n: usize) -> Vec<f64> {
    let total: f64 = spec.intervals().iter().map(|(a, b)| b - a).sum();
    let mut pts = Vec::with_capacity(n + spec.len() * (k + 2));
    for &(lo, hi) in spec.intervals() {
        let share = if total > 0.0 {
            ((hi - lo) / total * n as f64).round() as usize
        } else {
            n / spec.len()
        };
        pts.extend(lobatto(lo, hi, share.max(k + 2)));
    }
    pts
}

/// Chebyshev basis polynomials `T_i(s(λ))` for `i <= k`, expanded in powers of λ.
fn chebyshev_basis(spec: &SpectrumSet, k: usize) -> Vec<Poly> {
    let (mu, l) = (spec.mu(), spec.l());
    let s = Poly::linear(-(l + mu) / (l - mu), 2.0 / (l - mu));
    let mut basis = vec![Poly::constant(1.0), s.clone()];
    while basis.len() <= k {
        let n = basis.len();
        basis.push(s.mul(&basis[n - 1]).scale(2.0).sub(&basis[n - 2]));
    }
    basis.truncate(k + 1);
    basis
}

/// Maximizes `σ(0)` over degree-`k` polynomials bounded by 1 on the given points.
fn lp_on_points(spec: &SpectrumSet, k: usize, pts: &[f64]) -> Result<Poly> {
    let (mu, l) = (spec.mu(), spec.l());
    if !(l > mu) {
        return Err(Error::DegenerateInput("spectrum hull has zero width".into()));
    }
    let rho = (l + mu) / (l - mu);
    let n = pts.len();
    // dual program: min 1ᵀ(u + v)  s.t.  Aᵀ(u - v) = c,  u, v >= 0
    let mut a = DenseMatrix::zeros(k + 1, 2 * n);
    for (j, &x) in pts.iter().enumerate() {
        let s = (2.0 * x - (l + mu)) / (l - mu);
        for i in 0..=k {
            let v = cheb_t(i as u32, s.clamp(-1.0, 1.0));
            a[(i, j)] = v;
            a[(i, n + j)] = -v;
        }
    }
    let c: Vec<f64> = (0..=k).map(|i| cheb_t(i as u32, -rho)).collect();
    let sol = solve_standard(&a, &c, &vec![1.0; 2 * n]).map_err(|e| match e {
        // an infeasible dual means the primal objective is unbounded
        Error::Infeasible => Error::Unbounded,
        other => other,
    })?;
    let mut coef = sol.duals;
    let big = coef.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for v in coef.iter_mut() {
        if v.abs() <= CHEB_COEFF_NOISE * big {
            *v = 0.0;
        }
    }
    if coef.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let basis = chebyshev_basis(spec, k);
    Ok(basis
        .iter()
        .zip(&coef)
        .fold(Poly::zero(), |acc, (b, &w)| acc.add(&b.scale(w))))
}

/// The degree-`k` polynomial maximizing `σ(0)` subject to `|σ| <= 1` on `n` sample points of Λ.
pub fn solve_sigma_lp(spec: &SpectrumSet, k: usize, n: usize) -> Result<Poly> {
    if k == 0 {
        return Err(Error::InvalidArgument("degree must be at least 1".into()));
    }
    if n < 4 * (k + 1) {
        return Err(Error::InvalidArgument(format!(
            "need at least {} sample points for degree {k}, got {n}",
            4 * (k + 1)
        )));
    }
    lp_on_points(spec, k, &sample_points(spec, k, n))
}

/// [`solve_sigma_lp`] followed by exchange rounds that add the critical
/// points of the current solution to the sample set, then a final rescaling
/// so that `sup_Λ |σ| = 1` holds exactly rather than only on the samples.
pub fn solve_sigma_refined(spec: &SpectrumSet, k: usize, n: usize, rounds: usize) -> Result<Poly> {
    let mut pts = sample_points(spec, k, n);
    let mut sigma = solve_sigma_lp(spec, k, n)?;
    for _ in 0..rounds {
        let (sup, _) = sup_abs(&sigma, spec)?;
        if sup <= 1.0 + 1e-14 {
            break;
        }
        pts.extend(extremum_candidates(&sigma, spec)?);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        sigma = lp_on_points(spec, k, &pts)?;
    }
    let (sup, _) = sup_abs(&sigma, spec)?;
    if sup > 1.0 {
        sigma = sigma.scale(1.0 / sup);
    }
    Ok(sigma)
}

fn sup_abs(p: &Poly, spec: &SpectrumSet) -> Result<(f64, f64)> {
    let mut best = (0.0, spec.mu());
    for x in extremum_candidates(p, spec)? {
        let v = p.eval(x).abs();
        if v > best.0 {
            best = (v, x);
        }
    }
    Ok(best)
}

/// Outcome of [`check_equioscillation`].
#[derive(Debug, Clone, PartialEq)]
pub struct Equioscillation {
    pub ok: bool,
    /// Alternating extremal points `(λ, ±1)` in increasing λ.
    pub points: Vec<(f64, i8)>,
}

/// Searches Λ for `deg + 1` points where σ alternately reaches `+1` and `-1` within `tol`.
///
/// Also requires `sup_Λ |σ| <= 1 + tol`, since the alternation must happen at the maximum.
pub fn check_equioscillation(sigma: &Poly, spec: &SpectrumSet, tol: f64) -> Equioscillation {
    let k = sigma.degree();
    let Ok(candidates) = extremum_candidates(sigma, spec) else {
        return Equioscillation { ok: false, points: Vec::new() };
    };
    let mut points: Vec<(f64, i8)> = Vec::new();
    let mut sup = 0.0_f64;
    for x in candidates {
        let v = sigma.eval(x);
        sup = sup.max(v.abs());
        if (v.abs() - 1.0).abs() <= tol {
            let sign = if v > 0.0 { 1 } else { -1 };
            if points.last().is_none_or(|&(_, s)| s != sign) {
                points.push((x, sign));
            }
        }
    }
    let ok = k >= 1 && sup <= 1.0 + tol && points.len() >= k + 1;
    Equioscillation { ok, points }
}

/// True when every `λ > 0` with `|σ(λ)| <= 1` lies within `tol` of Λ.
pub fn check_strong_optimality(sigma: &Poly, spec: &SpectrumSet, tol: f64) -> bool {
    preimage_within(sigma, spec, tol).unwrap_or(false)
}

/// Closed intervals making up `{λ > 0 : |σ(λ)| <= 1}`.
pub fn unit_preimage(sigma: &Poly, scale: f64) -> Result<Vec<(f64, f64)>> {
    if sigma.degree() == 0 {
        return Err(Error::DegenerateInput("constant polynomial".into()));
    }
    let bound = [sigma.add_constant(-1.0), sigma.add_constant(1.0)]
        .iter()
        .map(crate::chebyshev::cauchy_root_bound)
        .fold(0.0_f64, f64::max)
        * 1.01;
    let mut breaks = vec![0.0];
    breaks.extend(scaled_roots(&sigma.add_constant(-1.0), 0.0, bound, scale)?);
    breaks.extend(scaled_roots(&sigma.add_constant(1.0), 0.0, bound, scale)?);
    breaks.push(bound);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut out: Vec<(f64, f64)> = Vec::new();
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let inside = sigma.eval(0.5 * (a + b)).abs() <= 1.0;
        let point_inside = |x: f64| x > 0.0 && sigma.eval(x).abs() <= 1.0 + 1e-9;
        if inside {
            match out.last_mut() {
                Some(last) if last.1 >= a => last.1 = b,
                _ => out.push((a, b)),
            }
        } else if point_inside(a) && out.last().is_none_or(|last| last.1 < a) {
            out.push((a, a));
        }
    }
    Ok(out)
}

fn preimage_within(sigma: &Poly, spec: &SpectrumSet, tol: f64) -> Result<bool> {
    for (a, b) in unit_preimage(sigma, spec.l())? {
        let covered = spec
            .intervals()
            .iter()
            .any(|&(lo, hi)| lo - tol <= a && b <= hi + tol);
        if !covered {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Exact optimal quadratic link polynomial of a two-interval set with equal lengths:
/// `2 (ρ²-R²)/(1-R²) (1 - λ/L_1)(1 - λ/μ_2) - 1`.
pub fn closed_form_sigma2(spec: &SpectrumSet) -> Result<Poly> {
    let gp = gap_params(spec)?;
    let (l1, mu2) = gp.inner;
    let lead = 2.0 * (gp.rho - gp.r) * (gp.rho + gp.r) / ((1.0 - gp.r) * (1.0 + gp.r));
    // lead (1 - λ/L1)(1 - λ/μ2) = lead/(L1 μ2) (λ - L1)(λ - μ2)
    Ok(Poly::from_roots(lead / (l1 * mu2), &[l1, mu2]).add_constant(-1.0))
}

/// The two-interval set on `[μ, L]` with relative gap `R` on which three
/// step-sizes are optimal, with its exact cubic link polynomial.
pub fn closed_form_sigma3(mu: f64, l: f64, r: f64) -> Result<(SpectrumSet, Poly)> {
    if !(0.0 < mu && mu < l) || !(0.0..1.0).contains(&r) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < mu < L and 0 <= R < 1, got mu={mu}, L={l}, R={r}"
        )));
    }
    let w = l - mu;
    let r1 = 0.5 - r / 2.0 + (1.0 - r * r) / 4.0;
    let r2 = 0.5 - r / 2.0 - (1.0 - r * r) / 4.0;
    let (mu1, l1, mu2, l2) = (mu, mu + r1 * w, l - r2 * w, l);
    let spec = SpectrumSet::two(mu1, l1, mu2, l2)?;
    let denom = (l2 - mu1) * (l2 - l1) * (l2 - mu2);
    let sigma = Poly::from_roots(-2.0 / denom, &[mu1, l1, mu2]).add_constant(1.0);
    Ok((spec, sigma))
}
