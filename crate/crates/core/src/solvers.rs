//! Momentum iterations with per-step schedules, recording convergence traces.
//!
//! Quadratics are run on the error `e_t = x_t - x*`, whose recursion is linear;
//! the pair `(e_t, e_{t-1})` is rescaled whenever its norm leaves a safe range
//! and the scale is carried in log space. Traces therefore keep decaying
//! geometrically far below double precision, which is what rate measurements
//! over thousands of iterations need. Other objectives are run on `x_t` and
//! record `log ‖∇f(x_t)‖`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::problems::ObjectiveInstance;
use crate::rate::CycleParams;
use crate::spectrum::{gap_params, SpectrumSet};

/// Runs stop and are flagged once the metric exceeds this multiple of its initial value.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

const RESCALE_LOW: f64 = 1e-150;
const RESCALE_HIGH: f64 = 1e150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    /// `‖x_t - x*‖`.
    Distance,
    /// `‖∇f(x_t)‖`.
    GradNorm,
}

/// Per-iteration record of a run; entry 0 is the initial point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub metric: Metric,
    /// Natural logarithm of the metric at each iterate.
    pub log_values: Vec<f64>,
    pub schedule: String,
    pub params: Option<CycleParams>,
    pub wall_iterations: usize,
    pub diverged: bool,
}

impl RunTrace {
    /// The metric itself; may underflow to 0 for long quadratic runs.
    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|v| v.exp()).collect()
    }

    pub fn len(&self) -> usize {
        self.log_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_values.is_empty()
    }

    /// `metric_t / metric_0`.
    pub fn relative(&self, t: usize) -> f64 {
        (self.log_values[t] - self.log_values[0]).exp()
    }

    pub fn last_log(&self) -> f64 {
        *self.log_values.last().expect("trace holds the initial point")
    }
}

/// Step-size and momentum sequence of a two-step momentum method:
/// `x_1 = x_0 - first ∇f(x_0)`, then `x_{t+1} = x_t - h_t ∇f(x_t) + β_t (x_t - x_{t-1})`.
trait Schedule {
    fn first(&mut self) -> f64;
    fn step(&mut self, t: usize) -> (f64, f64);
}

struct Cyclic<'a> {
    p: &'a CycleParams,
}

impl Schedule for Cyclic<'_> {
    fn first(&mut self) -> f64 {
        self.p.h[0] / (1.0 + self.p.m)
    }
    fn step(&mut self, t: usize) -> (f64, f64) {
        (self.p.h[t % self.p.k()], self.p.m)
    }
}

/// `ω_t = 1 / (1 - ω_{t-1} / (4 c²))` from `ω_0 = 2`, with per-parity base steps.
struct OmegaRecursion {
    inv_four_c2: f64,
    omega: f64,
    base: [f64; 2],
}

impl Schedule for OmegaRecursion {
    fn first(&mut self) -> f64 {
        self.base[0]
    }
    fn step(&mut self, t: usize) -> (f64, f64) {
        self.omega = 1.0 / (1.0 - self.inv_four_c2 * self.omega);
        (self.omega * self.base[t % 2], self.omega - 1.0)
    }
}

/// First `n` values `ω_0..ω_{n-1}` of `ω_t = 1/(1 - ω_{t-1}/(4c²))`, `ω_0 = 2`.
pub fn omega_sequence(c: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut w = 2.0;
    for _ in 0..n {
        out.push(w);
        w = 1.0 / (1.0 - w / (4.0 * c * c));
    }
    out
}

fn axpy_step(x: &[f64], prev: &[f64], g: &[f64], h: f64, beta: f64) -> Vec<f64> {
    x.iter()
        .zip(prev)
        .zip(g)
        .map(|((xi, pi), gi)| xi - h * gi + beta * (xi - pi))
        .collect()
}

fn run_schedule<S: Schedule>(
    obj: &ObjectiveInstance,
    x0: &[f64],
    t_max: usize,
    mut sched: S,
    tag: String,
    params: Option<CycleParams>,
) -> Result<RunTrace> {
    if x0.len() != obj.dim {
        return Err(Error::DimensionMismatch {
            expected: obj.dim,
            got: x0.len(),
        });
    }
    if t_max == 0 {
        return Err(Error::InvalidArgument("need at least one iteration".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let limit = DIVERGENCE_FACTOR.ln();
    let mut trace = RunTrace {
        metric: if obj.is_quadratic() { Metric::Distance } else { Metric::GradNorm },
        log_values: Vec::with_capacity(t_max + 1),
        schedule: tag,
        params,
        wall_iterations: 0,
        diverged: false,
    };

    if let Some(xs) = obj.x_star() {
        // linear error recursion with log-domain rescaling
        let grad = |e: &[f64]| obj.hessian_vec(xs, e);
        let mut prev: Vec<f64> = x0.iter().zip(xs).map(|(a, b)| a - b).collect();
        let n0 = norm2(&prev);
        if n0 == 0.0 {
            // started at the minimizer: the iterates never move
            trace.log_values = vec![f64::NEG_INFINITY; t_max + 1];
            trace.wall_iterations = t_max;
            return Ok(trace);
        }
        let mut log_scale = n0.ln();
        prev.iter_mut().for_each(|v| *v /= n0);
        trace.log_values.push(log_scale);
        let g = grad(&prev)?;
        let first = sched.first();
        let mut cur: Vec<f64> = prev.iter().zip(&g).map(|(e, gi)| e - first * gi).collect();
        for t in 1..=t_max {
            let n = norm2(&cur);
            if !n.is_finite() {
                trace.diverged = true;
                break;
            }
            // an exact zero is recorded as -inf; momentum may still move the iterate
            let lv = if n == 0.0 { f64::NEG_INFINITY } else { log_scale + n.ln() };
            trace.log_values.push(lv);
            trace.wall_iterations = t;
            if lv - trace.log_values[0] > limit {
                trace.diverged = true;
                break;
            }
            if t == t_max {
                break;
            }
            if n > 0.0 && !(RESCALE_LOW..=RESCALE_HIGH).contains(&n) {
                cur.iter_mut().for_each(|v| *v /= n);
                prev.iter_mut().for_each(|v| *v /= n);
                log_scale += n.ln();
            }
            let (h, beta) = sched.step(t);
            let g = grad(&cur)?;
            let next = axpy_step(&cur, &prev, &g, h, beta);
            prev = cur;
            cur = next;
        }
        return Ok(trace);
    }

    let mut prev = x0.to_vec();
    let g0 = obj.gradient(&prev)?;
    let gn0 = norm2(&g0);
    if !gn0.is_finite() {
        return Err(Error::NonFinite);
    }
    if gn0 == 0.0 {
        trace.log_values = vec![f64::NEG_INFINITY; t_max + 1];
        trace.wall_iterations = t_max;
        return Ok(trace);
    }
    trace.log_values.push(gn0.ln());
    let first = sched.first();
    let mut cur: Vec<f64> = prev.iter().zip(&g0).map(|(x, gi)| x - first * gi).collect();
    for t in 1..=t_max {
        let g = obj.gradient(&cur)?;
        let gn = norm2(&g);
        if !gn.is_finite() || cur.iter().any(|v| !v.is_finite()) {
            trace.diverged = true;
            break;
        }
        let lv = gn.ln();
        trace.log_values.push(lv);
        trace.wall_iterations = t;
        if lv - trace.log_values[0] > limit {
            trace.diverged = true;
            break;
        }
        if t == t_max {
            break;
        }
        let (h, beta) = sched.step(t);
        let next = axpy_step(&cur, &prev, &g, h, beta);
        prev = cur;
        cur = next;
    }
    Ok(trace)
}

/// Cyclical heavy ball: `x_1 = x_0 - h_0/(1+m) ∇f(x_0)`, then
/// `x_{t+1} = x_t - h_{t mod K} ∇f(x_t) + m (x_t - x_{t-1})`.
///
/// Divergent runs return the partial trace with `diverged` set.
pub fn run_hbk(obj: &ObjectiveInstance, params: &CycleParams, x0: &[f64], t_max: usize) -> Result<RunTrace> {
    let tag = format!("hb{}", params.k());
    run_schedule(obj, x0, t_max, Cyclic { p: params }, tag, Some(params.clone()))
}

/// Chebyshev semi-iterative method on `[μ, L]`; quadratics only.
pub fn run_cheby_semi_iterative(obj: &ObjectiveInstance, mu: f64, l: f64, x0: &[f64], t_max: usize) -> Result<RunTrace> {
    if !obj.is_quadratic() {
        return Err(Error::NotQuadratic);
    }
    if !(0.0 < mu && mu < l) {
        return Err(Error::InvalidArgument(format!("need 0 < mu < L, got {mu}, {l}")));
    }
    let step = 2.0 / (l + mu);
    let q = (l - mu) / (l + mu);
    let sched = OmegaRecursion {
        inv_four_c2: 0.25 * q * q,
        omega: 2.0,
        base: [step, step],
    };
    run_schedule(obj, x0, t_max, sched, "cheby".into(), None)
}

/// Non-stationary optimal method with alternating step-sizes on two equal-length intervals.
pub fn run_cyclic_cheby2(obj: &ObjectiveInstance, spec: &SpectrumSet, x0: &[f64], t_max: usize) -> Result<RunTrace> {
    if !obj.is_quadratic() {
        return Err(Error::NotQuadratic);
    }
    let gp = gap_params(spec)?;
    let (l1, mu2) = gp.inner;
    let c2 = (gp.rho - gp.r) * (gp.rho + gp.r) / ((1.0 - gp.r) * (1.0 + gp.r));
    let sched = OmegaRecursion {
        inv_four_c2: 0.25 / c2,
        omega: 2.0,
        base: [1.0 / l1, 1.0 / mu2],
    };
    run_schedule(obj, x0, t_max, sched, "cheby2".into(), None)
}

/// `c = √((ρ² - R²)/(1 - R²))` of the alternating method.
pub fn cheby2_c(spec: &SpectrumSet) -> Result<f64> {
    let gp = gap_params(spec)?;
    Ok(((gp.rho - gp.r) * (gp.rho + gp.r) / ((1.0 - gp.r) * (1.0 + gp.r))).sqrt())
}

/// `exp` of the least-squares slope of `log metric` against `t` over `t >= burn_in`.
pub fn empirical_rate(trace: &RunTrace, burn_in: usize) -> Result<f64> {
    empirical_rate_window(trace, burn_in, trace.len())
}

/// Same as [`empirical_rate`] restricted to `start <= t < end`.
pub fn empirical_rate_window(trace: &RunTrace, start: usize, end: usize) -> Result<f64> {
    let end = end.min(trace.len());
    if end <= start + 10 {
        return Err(Error::InsufficientData(format!(
            "need more than 10 points after t = {start}, trace has {}",
            trace.len()
        )));
    }
    let ys = &trace.log_values[start..end];
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::InsufficientData("trace contains non-positive entries".into()));
    }
    let n = ys.len() as f64;
    let tm = (start + end - 1) as f64 / 2.0;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = (start + i) as f64 - tm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    Ok((sxy / sxx).exp())
}

/// Wraps a plain sequence of positive values as a distance trace.
pub fn trace_from_values(values: &[f64], tag: &str) -> RunTrace {
    RunTrace {
        metric: Metric::Distance,
        log_values: values.iter().map(|v| v.ln()).collect(),
        schedule: tag.into(),
        params: None,
        wall_iterations: values.len().saturating_sub(1),
        diverged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chebyshev::cheb_t;
    use crate::minimax::closed_form_sigma2;
    use crate::problems::make_diag_quadratic;
    use crate::rate::{optimal_rate_k2, sigma_sup, divergence_threshold};
    use crate::tuning::{tune_k2, tune_phb};

    fn two() -> SpectrumSet {
        SpectrumSet::two(1.0, 2.0, 8.0, 9.0).unwrap()
    }

    #[test]
    fn one_step_exact_solve() {
        let q = make_diag_quadratic(&[1.0], 0).unwrap();
        let xs = q.x_star().unwrap()[0];
        let p = CycleParams::new(vec![1.0], 0.0).unwrap();
        let tr = run_hbk(&q, &p, &[xs + 3.0], 1).unwrap();
        assert!((tr.log_values[0] - 3f64.ln()).abs() < 1e-12);
        assert_eq!(tr.log_values[1], f64::NEG_INFINITY);
    }

    #[test]
    fn two_steps_within_bound() {
        let q = make_diag_quadratic(&[1.0, 2.0, 8.0, 9.0], 1).unwrap();
        let xs = q.x_star().unwrap().to_vec();
        let dir = [0.5, -0.5, 0.5, 0.5];
        let x0: Vec<f64> = xs.iter().zip(dir).map(|(a, b)| a + b).collect();
        let p = tune_k2(&two()).unwrap();
        let tr = run_hbk(&q, &p, &x0, 2).unwrap();
        let (_, r2) = optimal_rate_k2(&gap_params(&two()).unwrap(), Some(2)).unwrap();
        assert!((r2.unwrap() - 5.0 / 14.0).abs() < 1e-12);
        assert!(tr.relative(2) <= r2.unwrap() + 1e-12);
    }

    #[test]
    fn divergent_parameters_are_flagged() {
        let q = make_diag_quadratic(&[1.0, 2.0, 8.0, 9.0], 1).unwrap();
        let x0 = vec![1.0; 4];
        let p = CycleParams::new(vec![3.0 / 8.0, 3.0 / 8.0], 1.0 / 7.0).unwrap();
        let (s, _) = sigma_sup(&p, &two()).unwrap();
        assert!(s >= divergence_threshold(p.m, 2));
        let tr = run_hbk(&q, &p, &x0, 500).unwrap();
        assert!(tr.diverged);
        assert!(tr.len() < 501);
    }

    #[test]
    fn scalar_polynomial_correspondence() {
        // independent scalar recurrence for the residual polynomial
        let lam = 3.7;
        let p = CycleParams::new(vec![0.3, 0.05, 0.2], 0.4).unwrap();
        let q = make_diag_quadratic(&[lam], 9).unwrap();
        let xs = q.x_star().unwrap()[0];
        let tr = run_hbk(&q, &p, &[xs + 1.0], 50).unwrap();
        let mut prev = 1.0;
        let mut cur = 1.0 - p.h[0] / (1.0 + p.m) * lam;
        for t in 1..=50 {
            let expected = cur.abs().ln();
            assert!((tr.log_values[t] - expected).abs() <= 1e-10 * expected.abs().max(1.0), "t = {t}");
            let next = cur - p.h[t % 3] * lam * cur + p.m * (cur - prev);
            prev = cur;
            cur = next;
        }
    }

    #[test]
    fn phb_reaches_its_rate() {
        let eigs: Vec<f64> = (0..50).map(|i| 1.0 + 8.0 * i as f64 / 49.0).collect();
        let q = make_diag_quadratic(&eigs, 2).unwrap();
        let p = tune_phb(1.0, 9.0).unwrap();
        let tr = run_hbk(&q, &p, &vec![0.0; 50], 1000).unwrap();
        let r = empirical_rate(&tr, 200).unwrap();
        assert!((r - 0.5).abs() < 0.02, "{r}");
    }

    #[test]
    fn cheby_examples() {
        let w = omega_sequence(1.25, 2);
        assert_eq!(w[0], 2.0);
        assert!((w[1] - 1.0 / 0.68).abs() < 1e-12);
        let last = *omega_sequence(1.25, 200).last().unwrap();
        assert!((last - 1.25).abs() < 1e-12);

        let q = make_diag_quadratic(&[1.0, 9.0], 4).unwrap();
        let xs = q.x_star().unwrap().to_vec();
        let x0 = vec![xs[0] + 0.6, xs[1] - 0.8];
        let tr = run_cheby_semi_iterative(&q, 1.0, 9.0, &x0, 30).unwrap();
        for t in 0..=30 {
            assert!(tr.relative(t) <= 1.0 / cheb_t(t as u32, 1.25) + 1e-12);
        }
        let ratio = tr.relative(10);
        assert!(ratio <= 1.0 / cheb_t(10, 1.25) + 1e-12);
    }

    #[test]
    fn cheby_requires_quadratic() {
        let a = crate::problems::make_spiked_covariance(2, 4, 0, 1.0, 1).unwrap();
        let b = vec![1.0, -1.0, 1.0, -1.0];
        let obj = crate::problems::make_logistic(a, b, 1e-3).unwrap();
        assert_eq!(run_cheby_semi_iterative(&obj, 1.0, 2.0, &[0.0, 0.0], 5), Err(Error::NotQuadratic));
        assert_eq!(run_cyclic_cheby2(&obj, &two(), &[0.0, 0.0], 5), Err(Error::NotQuadratic));
    }

    #[test]
    fn cheby2_examples() {
        let c = cheby2_c(&two()).unwrap();
        assert!((c - 4.0 / 7f64.sqrt()).abs() < 1e-12);
        let last = *omega_sequence(c, 300).last().unwrap();
        assert!((last - 8.0 / 7.0).abs() < 1e-12);

        let q = make_diag_quadratic(&[2.0], 3).unwrap();
        let xs = q.x_star().unwrap()[0];
        let tr = run_cyclic_cheby2(&q, &two(), &[xs + 1.0], 2).unwrap();
        assert!((tr.relative(2) - 0.28).abs() < 1e-12);
        assert!(matches!(
            run_cyclic_cheby2(&q, &SpectrumSet::two(1.0, 2.0, 8.0, 9.5).unwrap(), &[0.0], 2),
            Err(Error::UnequalIntervals { .. })
        ));
    }

    #[test]
    fn cheby2_matches_its_polynomial_at_even_steps() {
        let s2 = closed_form_sigma2(&two()).unwrap();
        let s0 = s2.eval(0.0);
        for lam in [1.0, 1.3, 2.0, 8.0, 8.7, 9.0] {
            let q = make_diag_quadratic(&[lam], 5).unwrap();
            let xs = q.x_star().unwrap()[0];
            let tr = run_cyclic_cheby2(&q, &two(), &[xs + 1.0], 20).unwrap();
            for n in 1..=10u32 {
                let expected = (cheb_t(n, s2.eval(lam)) / cheb_t(n, s0)).abs();
                let got = tr.relative(2 * n as usize);
                assert!((got - expected).abs() <= 1e-9 * expected.max(1e-300) + 1e-15, "λ={lam} n={n}");
            }
        }
    }

    #[test]
    fn empirical_rate_examples() {
        let geo: Vec<f64> = (0..40).map(|t| 0.5f64.powi(t)).collect();
        assert!((empirical_rate(&trace_from_values(&geo, "g"), 0).unwrap() - 0.5).abs() < 1e-12);
        let flat = vec![3.0; 40];
        assert!((empirical_rate(&trace_from_values(&flat, "c"), 0).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            empirical_rate(&trace_from_values(&flat, "c"), 35),
            Err(Error::InsufficientData(_))
        ));
    }
}
