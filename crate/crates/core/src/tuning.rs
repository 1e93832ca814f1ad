//! Parameter tuning: closed forms for one and two step-sizes, and general cycles
//! recovered from an optimal link polynomial.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chebyshev::{cauchy_root_bound, Poly};
use crate::error::{Error, Result};
use crate::linalg::{solve_linear, DenseMatrix};
use crate::minimax::solve_sigma_refined;
use crate::rate::{scaled_roots, sigma_sup, CycleParams, RateReport, Regime, MAX_CYCLE};
use crate::spectrum::{gap_params, SpectrumSet};

/// Newton iterations per start.
pub const NEWTON_MAX_ITER: usize = 200;
/// Randomized starts tried after the deterministic ones.
pub const RANDOM_STARTS: usize = 64;
/// Cap on the number of root-assignment starts.
const MAX_DETERMINISTIC_STARTS: usize = 1000;
const RESTART_SEED: u64 = 0x5eed_c1c1e;
/// Slack allowed on `sup |σ|` when certifying recovered parameters.
pub const CERTIFY_SLACK: f64 = 1e-6;
/// Exchange rounds used to sharpen the discretized program before recovery.
const REFINE_ROUNDS: usize = 6;

/// Polyak heavy ball on `[μ, L]`.
pub fn tune_phb(mu: f64, l: f64) -> Result<CycleParams> {
    if !(0.0 < mu && mu < l && l.is_finite()) {
        return Err(Error::InvalidArgument(format!("need 0 < mu < L, got mu={mu}, L={l}")));
    }
    let sk = (mu / l).sqrt();
    let m = ((1.0 - sk) / (1.0 + sk)).powi(2);
    CycleParams::new(vec![2.0 * (1.0 + m) / (l + mu)], m)
}

/// Optimal alternating step-sizes on two equal-length intervals (or one interval).
///
/// Returns `h = [(1+m)/L_1, (1+m)/μ_2]` in that order.
pub fn tune_k2(spec: &SpectrumSet) -> Result<CycleParams> {
    let gp = gap_params(spec)?;
    let (rate, _) = crate::rate::optimal_rate_k2(&gp, None)?;
    let m = rate * rate;
    let (l1, mu2) = gp.inner;
    CycleParams::new(vec![(1.0 + m) / l1, (1.0 + m) / mu2], m)
}

/// `m = (σ_0 - √(σ_0² - 1))^{2/K}`.
pub fn momentum_from_sigma0(sigma0: f64, k: usize) -> Result<f64> {
    if !(sigma0 >= 1.0) || k == 0 {
        return Err(Error::InvalidArgument(format!("need sigma0 >= 1 and K >= 1, got {sigma0}, {k}")));
    }
    // 1 / (σ0 + √(σ0²-1)) avoids cancellation for large σ0
    let base = 1.0 / (sigma0 + ((sigma0 - 1.0) * (sigma0 + 1.0)).sqrt());
    Ok(base.powf(2.0 / k as f64))
}

/// Link polynomial of `(h, m)` without validation, for the Newton inner loop.
fn link_coeffs(h: &[f64], m: f64) -> Vec<f64> {
    let sm = m.sqrt();
    let one = Poly::constant(1.0);
    let (mut p, mut q, mut r, mut s) = (one.clone(), Poly::zero(), Poly::zero(), one);
    for &hi in h {
        let a = Poly::linear((1.0 + m) / sm, -hi / sm);
        let np = a.mul(&p).sub(&r);
        let nq = a.mul(&q).sub(&s);
        r = p;
        s = q;
        p = np;
        q = nq;
    }
    let mut c = p.add(&s).scale(0.5).coeffs().to_vec();
    c.resize(h.len() + 1, 0.0);
    c
}

fn residual(h: &[f64], m: f64, target: &[f64]) -> Vec<f64> {
    let c = link_coeffs(h, m);
    (1..target.len()).map(|j| c[j] - target[j]).collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

/// Damped Newton on the coefficient residual from one start; returns `(h, ‖r‖∞)`.
fn newton(start: Vec<f64>, m: f64, target: &[f64], goal: f64) -> (Vec<f64>, f64) {
    let k = start.len();
    let mut h = start;
    let mut r = residual(&h, m, target);
    let mut rn = inf_norm(&r);
    for _ in 0..NEWTON_MAX_ITER {
        if rn <= goal || !rn.is_finite() {
            break;
        }
        let mut jac = DenseMatrix::zeros(k, k);
        for j in 0..k {
            let step = 1e-7 * (1.0 + h[j].abs());
            let mut hp = h.clone();
            let mut hm = h.clone();
            hp[j] += step;
            hm[j] -= step;
            let (rp, rm) = (residual(&hp, m, target), residual(&hm, m, target));
            for i in 0..k {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * step);
            }
        }
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = match solve_linear(&jac, &neg) {
            Some(d) => d,
            None => {
                // singular at symmetric points: fall back to a regularized normal equation
                let jt = jac.transpose();
                let mut jtj = DenseMatrix::zeros(k, k);
                for a in 0..k {
                    for b in 0..k {
                        jtj[(a, b)] = (0..k).map(|i| jac[(i, a)] * jac[(i, b)]).sum();
                    }
                }
                let reg = 1e-10 * jtj.trace().max(f64::MIN_POSITIVE);
                for a in 0..k {
                    jtj[(a, a)] += reg;
                }
                match solve_linear(&jtj, &jt.matvec(&neg)) {
                    Some(d) => d,
                    None => break,
                }
            }
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-10 {
            let cand: Vec<f64> = h.iter().zip(&delta).map(|(a, d)| a + alpha * d).collect();
            if cand.iter().all(|x| *x > 0.0 && x.is_finite()) {
                let rc = residual(&cand, m, target);
                let rcn = inf_norm(&rc);
                if rcn < rn {
                    h = cand;
                    r = rc;
                    rn = rcn;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (h, rn)
}

fn permutations_fixing_first(items: &[f64], cap: usize) -> Vec<Vec<f64>> {
    // the link polynomial is invariant under rotation, so fixing items[0] first loses nothing
    let mut out = Vec::new();
    let rest: Vec<f64> = items[1..].to_vec();
    let mut used = vec![false; rest.len()];
    let mut cur = vec![items[0]];
    fn rec(rest: &[f64], used: &mut [bool], cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>, cap: usize) {
        if out.len() >= cap {
            return;
        }
        if cur.len() == rest.len() + 1 {
            if !out.contains(cur) {
                out.push(cur.clone());
            }
            return;
        }
        for i in 0..rest.len() {
            if !used[i] {
                used[i] = true;
                cur.push(rest[i]);
                rec(rest, used, cur, out, cap);
                cur.pop();
                used[i] = false;
            }
        }
    }
    rec(&rest, &mut used, &mut cur, &mut out, cap);
    out
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn lexicographic_better(a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)) -> bool {
    if a.1 != b.1 {
        return a.1 < b.1;
    }
    for (x, y) in a.0.iter().zip(&b.0) {
        if x != y {
            return x < y;
        }
    }
    false
}

fn pick_best(results: Vec<(Vec<f64>, f64)>) -> Option<(Vec<f64>, f64)> {
    results
        .into_iter()
        .filter(|r| r.1.is_finite())
        .fold(None, |best, r| match best {
            None => Some(r),
            Some(b) => Some(if lexicographic_better(&r, &b) { r } else { b }),
        })
}

/// Relative coefficient mismatch `‖c(h, m) - c(σ)‖∞ / ‖c(σ)‖∞`.
pub fn coefficient_residual(params: &CycleParams, sigma: &Poly) -> f64 {
    let target = sigma.coeffs();
    let mut c = link_coeffs(&params.h, params.m);
    c.resize(c.len().max(target.len()), 0.0);
    let diff = c
        .iter()
        .enumerate()
        .map(|(i, v)| (v - target.get(i).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max);
    diff / sigma.max_abs_coeff()
}

/// Finds a cycle whose link polynomial equals `sigma` coefficient-wise to relative `tol`.
///
/// Momentum is fixed by `σ(0)`; step-sizes come from damped Newton on the
/// coefficients of degree `1..K`, started from `(1+m)/r_i` for every
/// assignment of the roots `r_i` of `σ + 1`, then from seeded random starts.
/// The cycle is returned sorted ascending.
pub fn recover_cycle(sigma: &Poly, k: usize, tol: f64) -> Result<CycleParams> {
    if k == 0 || k > MAX_CYCLE {
        return Err(Error::InvalidArgument(format!("cycle length must be in 1..={MAX_CYCLE}, got {k}")));
    }
    if sigma.degree() != k {
        return Err(Error::InvalidArgument(format!(
            "polynomial degree {} does not match K = {k}",
            sigma.degree()
        )));
    }
    let sigma0 = sigma.eval(0.0);
    if !(sigma0 > 1.0) {
        return Err(Error::InvalidArgument(format!("need sigma(0) > 1, got {sigma0}")));
    }
    let m = momentum_from_sigma0(sigma0, k)?;

    // work in λ̃ = λ / s with s the largest positive root of σ + 1, so h̃ = h s is O(1)
    let plus = sigma.add_constant(1.0);
    let minus = sigma.add_constant(-1.0);
    let bound = cauchy_root_bound(&plus).max(cauchy_root_bound(&minus)) * 1.01;
    let plus_roots = scaled_roots(&plus, 0.0, bound, bound)?;
    let minus_roots = scaled_roots(&minus, 0.0, bound, bound)?;
    let s = plus_roots.iter().copied().fold(0.0_f64, f64::max);
    let s = if s > 0.0 { s } else { bound };
    let target_poly = sigma.compose_affine(0.0, s);
    let target: Vec<f64> = {
        let mut c = target_poly.coeffs().to_vec();
        c.resize(k + 1, 0.0);
        c
    };
    let tnorm = inf_norm(&target);
    let goal = 1e-3 * tol * tnorm;

    // deterministic starts: roots of σ + 1 (with multiplicity), padded with
    // near-touching minima when the polynomial only grazes -1
    let mut roots: Vec<f64> = plus_roots.iter().map(|r| r / s).collect();
    if roots.len() < k {
        let crit = scaled_roots(&sigma.derivative(), 0.0, s, s)?;
        for c in crit {
            if sigma.eval(c) < -1.0 + 1e-3 && !roots.iter().any(|r| (r - c / s).abs() < 1e-6) {
                roots.push(c / s);
                roots.push(c / s);
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if roots.len() >= k {
        for combo in combinations(roots.len(), k) {
            let chosen: Vec<f64> = combo.iter().map(|&i| (1.0 + m) / roots[i]).collect();
            for p in permutations_fixing_first(&chosen, MAX_DETERMINISTIC_STARTS) {
                if starts.len() < MAX_DETERMINISTIC_STARTS && !starts.contains(&p) {
                    starts.push(p);
                }
            }
        }
    }

    let run = |starts: Vec<Vec<f64>>| -> Option<(Vec<f64>, f64)> {
        let results: Vec<(Vec<f64>, f64)> = starts
            .into_par_iter()
            .map(|st| newton(st, m, &target, goal))
            .collect();
        pick_best(results)
    };
    let finish = |h: &[f64]| -> Result<(CycleParams, f64)> {
        let mut h: Vec<f64> = h.iter().map(|x| x / s).collect();
        h.sort_by(f64::total_cmp);
        let params = CycleParams::new(h, m)?;
        let res = coefficient_residual(&params, sigma);
        Ok((params, res))
    };

    let mut best: Option<(CycleParams, f64)> = None;
    if let Some((h, _)) = run(starts) {
        let cand = finish(&h)?;
        if cand.1 <= tol {
            return Ok(cand.0);
        }
        best = Some(cand);
    }

    // randomized restarts, log-uniform between the scaled extreme step-sizes
    let mu_t = minus_roots
        .iter()
        .copied()
        .filter(|x| *x > 0.0)
        .fold(f64::INFINITY, f64::min)
        / s;
    let mu_t = if mu_t.is_finite() && mu_t > 0.0 && mu_t < 1.0 { mu_t } else { 1e-3 };
    let (lo, hi) = ((1.0 + m).ln(), ((1.0 + m) / mu_t).ln());
    let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED);
    let random: Vec<Vec<f64>> = (0..RANDOM_STARTS)
        .map(|_| (0..k).map(|_| rng.random_range(lo..=hi).exp()).collect())
        .collect();
    if let Some((h, _)) = run(random) {
        let cand = finish(&h)?;
        if best.as_ref().is_none_or(|b| cand.1 < b.1) {
            best = Some(cand);
        }
    }
    match best {
        Some((p, res)) if res <= tol => Ok(p),
        Some((_, res)) => Err(Error::NoSolutionFound { residual: res }),
        None => Err(Error::NoSolutionFound { residual: f64::INFINITY }),
    }
}

/// Result of the general tuning pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneralTuning {
    pub params: CycleParams,
    /// Report with the optimal rate `(σ_0 - √(σ_0²-1))^{1/K}` and the certified `σ*`.
    pub report: RateReport,
    pub sigma: Vec<f64>,
    /// Relative coefficient mismatch of the recovered cycle.
    pub residual: f64,
}

/// Tolerance on the coefficient match used by [`tune_general`].
pub const GENERAL_TOL: f64 = 1e-10;

/// Optimal link polynomial, then momentum, then step-sizes, then certification.
pub fn tune_general(spec: &SpectrumSet, k: usize, n: usize) -> Result<GeneralTuning> {
    if k == 0 || k > MAX_CYCLE {
        return Err(Error::InvalidArgument(format!("cycle length must be in 1..={MAX_CYCLE}, got {k}")));
    }
    let sigma = solve_sigma_refined(spec, k, n, REFINE_ROUNDS)?;
    if sigma.degree() != k {
        return Err(Error::InvalidArgument(format!(
            "optimal polynomial has degree {} < K = {k}; a shorter cycle is optimal",
            sigma.degree()
        )));
    }
    let sigma0 = sigma.eval(0.0);
    let params = recover_cycle(&sigma, k, GENERAL_TOL)?;
    let (sigma_star, witness) = sigma_sup(&params, spec)?;
    if sigma_star > 1.0 + CERTIFY_SLACK {
        return Err(Error::CertificationFailed { sigma_star });
    }
    let rate = momentum_from_sigma0(sigma0, k)?.sqrt();
    Ok(GeneralTuning {
        residual: coefficient_residual(&params, &sigma),
        params,
        report: RateReport {
            sigma_star,
            regime: Regime::Robust,
            rate_factor: rate,
            witness_lambda: witness,
        },
        sigma: sigma.coeffs().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minimax::{closed_form_sigma2, closed_form_sigma3};
    use crate::rate::{rate_report, sigma_cycle};

    fn two() -> SpectrumSet {
        SpectrumSet::two(1.0, 2.0, 8.0, 9.0).unwrap()
    }

    #[test]
    fn phb_examples() {
        let p = tune_phb(1.0, 9.0).unwrap();
        assert!((p.m - 0.25).abs() < 1e-15 && (p.h[0] - 0.25).abs() < 1e-15);
        let p = tune_phb(1.0, 100.0).unwrap();
        assert!((p.m - (0.9f64 / 1.1).powi(2)).abs() < 1e-15);
        assert!((p.m - 0.669_421_5).abs() < 1e-7);
        let p = tune_phb(1.0, 1.0 + 1e-12).unwrap();
        assert!(p.m < 1e-20);
        assert!(tune_phb(2.0, 1.0).is_err());
    }

    #[test]
    fn k2_examples() {
        let p = tune_k2(&two()).unwrap();
        assert!((p.m - 1.0 / 7.0).abs() < 1e-12);
        assert!((p.h[0] - 4.0 / 7.0).abs() < 1e-12 && (p.h[1] - 1.0 / 7.0).abs() < 1e-12);

        let p = tune_k2(&SpectrumSet::interval(1.0, 9.0).unwrap()).unwrap();
        assert!((p.m - 0.25).abs() < 1e-12);
        assert!((p.h[0] - 0.25).abs() < 1e-12 && (p.h[1] - 0.25).abs() < 1e-12);

        let q = tune_k2(&two().scaled(2.0).unwrap()).unwrap();
        let p = tune_k2(&two()).unwrap();
        assert!((q.m - p.m).abs() < 1e-12);
        assert!((q.h[0] - p.h[0] / 2.0).abs() < 1e-12);
        assert!(matches!(
            tune_k2(&SpectrumSet::two(1.0, 2.0, 8.0, 9.5).unwrap()),
            Err(Error::UnequalIntervals { .. })
        ));
    }

    #[test]
    fn k2_is_robust() {
        for spec in [two(), SpectrumSet::two(1.0, 3.0, 5.0, 7.0).unwrap(), SpectrumSet::interval(0.1, 4.0).unwrap()] {
            let p = tune_k2(&spec).unwrap();
            let (s, _) = sigma_sup(&p, &spec).unwrap();
            assert!(s <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn momentum_examples() {
        assert!((momentum_from_sigma0(2.125, 2).unwrap() - 0.25).abs() < 1e-12);
        assert!((momentum_from_sigma0(25.0 / 7.0, 2).unwrap() - 1.0 / 7.0).abs() < 1e-12);
        assert_eq!(momentum_from_sigma0(1.0, 3).unwrap(), 1.0);
        assert!(momentum_from_sigma0(0.5, 1).is_err());
    }

    #[test]
    fn recover_examples() {
        let s2 = closed_form_sigma2(&two()).unwrap();
        let p = recover_cycle(&s2, 2, 1e-10).unwrap();
        assert!((p.m - 1.0 / 7.0).abs() < 1e-12);
        assert!((p.h[0] - 1.0 / 7.0).abs() < 1e-9 && (p.h[1] - 4.0 / 7.0).abs() < 1e-9);

        let s1 = Poly::new(vec![1.25, -0.25]);
        let p = recover_cycle(&s1, 1, 1e-12).unwrap();
        assert!((p.m - 0.25).abs() < 1e-12 && (p.h[0] - 0.25).abs() < 1e-12);

        // T_3 composed with the affine map of [1, 9]
        let (_, s3) = closed_form_sigma3(1.0, 9.0, 0.0).unwrap();
        let p = recover_cycle(&s3, 3, 1e-8).unwrap();
        assert!(coefficient_residual(&p, &s3) < 1e-8);
        assert!((p.m.sqrt() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn recover_round_trip_on_grid() {
        let spec = SpectrumSet::interval(1.0, 9.0).unwrap();
        let truth = CycleParams::new(vec![0.31, 0.12, 0.2], 0.2).unwrap();
        let s3 = crate::rate::sigma_poly(&truth).unwrap();
        let p = recover_cycle(&s3, 3, 1e-10).unwrap();
        for x in spec.grid(100) {
            let v = sigma_cycle(&p, x).unwrap();
            assert!((v - s3.eval(x)).abs() < 1e-8);
        }
        // for K = 3 the cycle is determined up to order by the symmetric functions
        for (a, b) in p.h.iter().zip([0.12, 0.2, 0.31]) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    /// For K = 3 the link polynomial is `½(a0 a1 a2 - a0 - a1 - a2)` with
    /// `a_i = c - b_i λ`, so its coefficients fix the elementary symmetric
    /// functions of `b_i = h_i/√m`: a real cycle exists iff the cubic with
    /// those symmetric functions has three real roots.
    fn k3_cubic_discriminant(sigma: &Poly) -> f64 {
        let c3: Vec<f64> = sigma.coeffs().to_vec();
        let m = momentum_from_sigma0(c3[0], 3).unwrap();
        let c = (1.0 + m) / m.sqrt();
        let e1 = 2.0 * c3[1] / (1.0 - c * c);
        let e2 = 2.0 * c3[2] / c;
        let e3 = -2.0 * c3[3];
        // z³ + p z² + q z + r with p = -e1, q = e2, r = -e3
        let (p, q, r) = (-e1, e2, -e3);
        18.0 * p * q * r - 4.0 * p.powi(3) * r + p * p * q * q - 4.0 * q.powi(3) - 27.0 * r * r
    }

    #[test]
    fn gapped_cubic_family_has_no_real_cycle() {
        let (_, touching) = closed_form_sigma3(1.0, 9.0, 0.0).unwrap();
        // double root of the cubic: discriminant zero up to rounding
        assert!(k3_cubic_discriminant(&touching).abs() < 1e-9);
        for r in [0.25, 0.5, 0.75] {
            let (_, s3) = closed_form_sigma3(1.0, 9.0, r).unwrap();
            assert!(k3_cubic_discriminant(&s3) < 0.0, "R = {r}");
            match recover_cycle(&s3, 3, 1e-8) {
                Err(Error::NoSolutionFound { residual }) => assert!(residual > 1e-6),
                other => panic!("R = {r}: {other:?}"),
            }
        }
        let truth = CycleParams::new(vec![0.31, 0.12, 0.2], 0.2).unwrap();
        assert!(k3_cubic_discriminant(&crate::rate::sigma_poly(&truth).unwrap()) > 0.0);
    }

    #[test]
    fn recover_rejects_bad_input() {
        let s1 = Poly::new(vec![1.25, -0.25]);
        assert!(recover_cycle(&s1, 2, 1e-10).is_err());
        assert!(recover_cycle(&Poly::new(vec![0.5, -0.1]), 1, 1e-10).is_err());
    }

    #[test]
    fn general_examples() {
        let g = tune_general(&two(), 2, 2000).unwrap();
        assert!((g.report.rate_factor - 1.0 / 7f64.sqrt()).abs() < 1e-6);

        let single = SpectrumSet::interval(1.0, 9.0).unwrap();
        let g = tune_general(&single, 1, 64).unwrap();
        let phb = tune_phb(1.0, 9.0).unwrap();
        assert!((g.report.rate_factor - 0.5).abs() < 1e-10);
        assert!((g.params.m - phb.m).abs() < 1e-10 && (g.params.h[0] - phb.h[0]).abs() < 1e-10);
    }

    #[test]
    fn general_k3_family_touching_intervals() {
        let (spec, s3) = closed_form_sigma3(1.0, 9.0, 0.0).unwrap();
        let g = tune_general(&spec, 3, 2000).unwrap();
        let s0 = s3.eval(0.0);
        let expected = (s0 - (s0 * s0 - 1.0).sqrt()).powf(1.0 / 3.0);
        assert!((g.report.rate_factor - expected).abs() < 1e-6);
    }

    #[test]
    fn more_steps_help_with_a_gap() {
        let k1 = tune_general(&two(), 1, 500).unwrap();
        let k2 = tune_general(&two(), 2, 500).unwrap();
        assert!(k2.report.rate_factor < k1.report.rate_factor);
        let direct = rate_report(&k2.params, &two()).unwrap();
        assert!(direct.sigma_star <= 1.0 + CERTIFY_SLACK);
    }
}
