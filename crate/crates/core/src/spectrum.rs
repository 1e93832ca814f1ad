//! Eigenvalue supports: unions of closed positive intervals and their derived parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the equal-length requirement on two-interval sets.
pub const EQUAL_LENGTH_RTOL: f64 = 1e-9;

/// Sorted union of disjoint closed intervals on the positive half-line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct SpectrumSet {
    intervals: Vec<(f64, f64)>,
}

impl SpectrumSet {
    /// Builds a set from arbitrary intervals. They are sorted, and overlapping
    /// or touching intervals are merged, since the result denotes a set of reals.
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidSpectrum("at least one interval is required".into()));
        }
        for &(lo, hi) in &intervals {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidSpectrum(format!("non-finite endpoint in [{lo}, {hi}]")));
            }
            if lo <= 0.0 {
                return Err(Error::InvalidSpectrum(format!(
                    "endpoints must be strictly positive, got [{lo}, {hi}]"
                )));
            }
            if hi < lo {
                return Err(Error::InvalidSpectrum(format!("reversed interval [{lo}, {hi}]")));
            }
        }
        let mut sorted = intervals;
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
        for (lo, hi) in sorted {
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        Ok(SpectrumSet { intervals: merged })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi)])
    }

    pub fn two(mu1: f64, l1: f64, mu2: f64, l2: f64) -> Result<Self> {
        Self::new(vec![(mu1, l1), (mu2, l2)])
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mu(&self) -> f64 {
        self.intervals[0].0
    }

    pub fn l(&self) -> f64 {
        self.intervals[self.intervals.len() - 1].1
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= x && x <= hi)
    }

    /// Distance from `x` to the set.
    pub fn distance(&self, x: f64) -> f64 {
        self.intervals
            .iter()
            .map(|&(lo, hi)| if x < lo { lo - x } else if x > hi { x - hi } else { 0.0 })
            .fold(f64::INFINITY, f64::min)
    }

    /// The set scaled by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.intervals.iter().map(|&(a, b)| (a * c, b * c)).collect())
    }

    /// `n` points spread uniformly over the set, in proportion to interval length.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        let total: f64 = self.intervals.iter().map(|(a, b)| b - a).sum();
        let mut out = Vec::with_capacity(n + 2 * self.intervals.len());
        for &(a, b) in &self.intervals {
            let k = if total > 0.0 {
                ((b - a) / total * n as f64).round().max(1.0) as usize
            } else {
                1
            };
            if b == a {
                out.push(a);
                continue;
            }
            out.extend((0..=k).map(|i| a + (b - a) * i as f64 / k as f64));
        }
        out
    }
}

impl TryFrom<Vec<(f64, f64)>> for SpectrumSet {
    type Error = Error;
    fn try_from(v: Vec<(f64, f64)>) -> Result<Self> {
        SpectrumSet::new(v)
    }
}

impl From<SpectrumSet> for Vec<(f64, f64)> {
    fn from(s: SpectrumSet) -> Self {
        s.intervals
    }
}

impl std::fmt::Display for SpectrumSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.intervals.iter().map(|(a, b)| format!("[{a}, {b}]")).collect();
        write!(f, "{}", parts.join(" ∪ "))
    }
}

/// Scalars derived from a one- or two-interval set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapParams {
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub kappa: f64,
    pub rho: f64,
    #[serde(rename = "R")]
    pub r: f64,
    /// Inner endpoints `(L_1, mu_2)`; both equal the midpoint for a single interval.
    pub inner: (f64, f64),
}

impl GapParams {
    /// Parameters from raw scalars, for callers that work with `(rho, R)` only.
    pub fn from_rho_r(rho: f64, r: f64) -> Result<Self> {
        if !(rho > 1.0) || !(0.0..1.0).contains(&r) {
            return Err(Error::InvalidArgument(format!("need rho > 1 and 0 <= R < 1, got {rho}, {r}")));
        }
        // normalized to [mu, L] = [rho - 1, rho + 1]
        let (mu, l) = (rho - 1.0, rho + 1.0);
        let mid = rho;
        Ok(GapParams {
            mu,
            l,
            kappa: mu / l,
            rho,
            r,
            inner: (mid - r, mid + r),
        })
    }
}

/// Derived parameters of a one- or two-interval set with equal lengths.
pub fn gap_params(spec: &SpectrumSet) -> Result<GapParams> {
    let iv = spec.intervals();
    let (mu, l) = (spec.mu(), spec.l());
    let (r, inner) = match iv.len() {
        1 => (0.0, (0.5 * (mu + l), 0.5 * (mu + l))),
        2 => {
            let (mu1, l1) = iv[0];
            let (mu2, l2) = iv[1];
            let (a, b) = (l1 - mu1, l2 - mu2);
            let tol = EQUAL_LENGTH_RTOL * a.max(b) + 4.0 * f64::EPSILON * l2;
            if (a - b).abs() > tol {
                return Err(Error::UnequalIntervals { left: a, right: b });
            }
            if a.max(b) == 0.0 {
                return Err(Error::DegenerateInput("two isolated points have no finite rate".into()));
            }
            ((mu2 - l1) / (l2 - mu1), (l1, mu2))
        }
        n => {
            return Err(Error::UnsupportedShape(format!(
                "gap parameters need one or two intervals, got {n}"
            )))
        }
    };
    if !(mu < l) {
        return Err(Error::DegenerateInput(format!("spectrum [{mu}, {l}] has zero width")));
    }
    Ok(GapParams {
        mu,
        l,
        kappa: mu / l,
        rho: (l + mu) / (l - mu),
        r,
        inner,
    })
}

/// Fits `[mu_1, mu_1 + len] ∪ [L_2 - len, L_2]` around the largest gap of a sorted eigenvalue list.
pub fn two_interval_fit(eigs: &[f64]) -> Result<SpectrumSet> {
    if eigs.is_empty() {
        return Err(Error::DegenerateInput("empty eigenvalue list".into()));
    }
    if eigs.iter().any(|e| !e.is_finite() || *e <= 0.0) {
        return Err(Error::InvalidSpectrum("eigenvalues must be finite and positive".into()));
    }
    let mut e = eigs.to_vec();
    e.sort_by(f64::total_cmp);
    let (lo, hi) = (e[0], e[e.len() - 1]);
    if lo == hi {
        return Err(Error::DegenerateInput("all eigenvalues coincide".into()));
    }
    // first index of the largest consecutive gap wins ties
    let mut best = 0;
    let mut best_gap = f64::NEG_INFINITY;
    for i in 0..e.len() - 1 {
        let g = e[i + 1] - e[i];
        if g > best_gap {
            best_gap = g;
            best = i;
        }
    }
    let left_len = e[best] - lo;
    let right_len = hi - e[best + 1];
    let len = left_len.max(right_len);
    // rounding in lo + len or hi - len must not drop the eigenvalues next to the gap
    let (l1, mu2) = ((lo + len).max(e[best]), (hi - len).min(e[best + 1]));
    if l1 >= mu2 {
        return SpectrumSet::interval(lo, hi);
    }
    SpectrumSet::two(lo, l1, mu2, hi)
}
