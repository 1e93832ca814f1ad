//! Dense two-phase tableau simplex for small standard-form programs.
//!
//! Solves `min cᵀy  s.t.  A y = b, y >= 0`. The pivot sequence is
//! deterministic; Bland's rule takes over on stalls so it terminates.

use crate::error::{Error, Result};
use crate::linalg::{solve_linear, DenseMatrix};

/// Smallest pivot magnitude accepted by the ratio test.
pub const PIVOT_TOL: f64 = 1e-12;

/// Reduced costs above `-REDUCED_COST_TOL` are treated as non-negative.
pub const REDUCED_COST_TOL: f64 = 1e-11;

const MAX_PIVOTS: usize = 1_000_000;

/// Degenerate pivots tolerated before switching to Bland's rule.
const STALL_LIMIT: usize = 50;

/// A pivot-free column must have a reduced cost below this to prove unboundedness.
const UNBOUNDED_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub y: Vec<f64>,
    pub objective: f64,
    /// Basic column per row; indices `>= n` are artificial columns.
    pub basis: Vec<usize>,
    /// Multipliers `x` with `B_basisᵀ x = c_basis`, i.e. a solution of the dual program.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

struct Tableau {
    m: usize,
    width: usize,
    t: Vec<f64>,
    z: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width - 1)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.t[r * w + c];
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + c];
            if f != 0.0 {
                for (j, pr) in pivot_row.iter().enumerate() {
                    self.t[i * w + j] -= f * pr;
                }
                self.t[i * w + c] = 0.0;
            }
        }
        let f = self.z[c];
        if f != 0.0 {
            for (j, pr) in pivot_row.iter().enumerate() {
                self.z[j] -= f * pr;
            }
            self.z[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Pivot row for entering column `c`: minimum ratio, ties to the smallest basic index.
    fn ratio_test(&self, c: usize) -> Option<usize> {
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let a = self.at(i, c);
            if a > PIVOT_TOL {
                let ratio = self.rhs(i) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br || (ratio == br && self.basis[i] < self.basis[bi]) {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
        }
        leave.map(|(r, _)| r)
    }

    /// Optimizes over columns `0..allowed`.
    ///
    /// Enters the most negative reduced cost; after a run of degenerate
    /// pivots it switches to Bland's rule, which cannot cycle. Columns whose
    /// reduced cost is within `UNBOUNDED_TOL` of zero and that admit no
    /// pivot are rounding noise and are skipped.
    fn optimize(&mut self, allowed: usize) -> Result<()> {
        let mut stalled = 0usize;
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::InvalidArgument("simplex pivot limit exceeded".into()));
            }
            let bland = stalled > STALL_LIMIT;
            let mut candidates: Vec<usize> = (0..allowed).filter(|&j| self.z[j] < -REDUCED_COST_TOL).collect();
            if candidates.is_empty() {
                return Ok(());
            }
            if !bland {
                candidates.sort_by(|&a, &b| self.z[a].total_cmp(&self.z[b]).then(a.cmp(&b)));
            }
            let mut chosen = None;
            for &c in &candidates {
                match self.ratio_test(c) {
                    Some(r) => {
                        chosen = Some((r, c));
                        break;
                    }
                    None if self.z[c] < -UNBOUNDED_TOL => return Err(Error::Unbounded),
                    None => continue,
                }
            }
            let Some((r, c)) = chosen else {
                return Ok(());
            };
            let before = self.z[self.width - 1];
            self.pivot(r, c);
            if self.z[self.width - 1] == before {
                stalled += 1;
            } else {
                stalled = 0;
            }
        }
    }
}

/// Solves `min cᵀy  s.t.  A y = b, y >= 0` where `a` is given row by row.
///
/// `Err(Infeasible)` when no feasible `y` exists, `Err(Unbounded)` when the
/// objective decreases without bound.
pub fn solve_standard(a: &DenseMatrix, b: &[f64], c: &[f64]) -> Result<LpSolution> {
    let (m, n) = (a.rows(), a.cols());
    if b.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: b.len() });
    }
    if c.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: c.len() });
    }
    let width = n + m + 1;
    let mut t = vec![0.0; m * width];
    let mut flip = vec![1.0; m];
    for i in 0..m {
        flip[i] = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i * width + j] = flip[i] * a[(i, j)];
        }
        t[i * width + n + i] = 1.0;
        t[i * width + width - 1] = flip[i] * b[i];
    }
    // phase one: minimize the sum of artificials
    let mut z = vec![0.0; width];
    for i in 0..m {
        for j in 0..n {
            z[j] -= t[i * width + j];
        }
        z[width - 1] -= t[i * width + width - 1];
    }
    let mut tab = Tableau {
        m,
        width,
        t,
        z,
        basis: (n..n + m).collect(),
        pivots: 0,
    };
    tab.optimize(n + m)?;
    let bscale = 1.0 + b.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
    if -tab.z[width - 1] > 1e-9 * bscale {
        return Err(Error::Infeasible);
    }
    // drive remaining zero-level artificials out of the basis where possible
    for r in 0..m {
        if tab.basis[r] >= n {
            let row_max = (0..n).fold(0.0_f64, |s, j| s.max(tab.at(r, j).abs()));
            if let Some(j) = (0..n).find(|&j| tab.at(r, j).abs() > 1e-9 * row_max.max(PIVOT_TOL)) {
                if row_max > PIVOT_TOL {
                    tab.pivot(r, j);
                }
            }
        }
    }
    // phase two on the original costs; artificials may not re-enter
    let mut z = vec![0.0; width];
    z[..n].copy_from_slice(c);
    for r in 0..m {
        let cb = if tab.basis[r] < n { c[tab.basis[r]] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..width {
                z[j] -= cb * tab.at(r, j);
            }
        }
    }
    tab.z = z;
    tab.optimize(n)?;

    let mut y = vec![0.0; n];
    for r in 0..m {
        if tab.basis[r] < n {
            y[tab.basis[r]] = tab.rhs(r).max(0.0);
        }
    }
    let objective = y.iter().zip(c).map(|(a, b)| a * b).sum();

    // dual multipliers from the final basis in original coordinates
    let mut bt = DenseMatrix::zeros(m, m);
    let mut cb = vec![0.0; m];
    for (k, &col) in tab.basis.iter().enumerate() {
        for i in 0..m {
            bt[(k, i)] = if col < n {
                a[(i, col)]
            } else if col - n == i {
                flip[i]
            } else {
                0.0
            };
        }
        cb[k] = if col < n { c[col] } else { 0.0 };
    }
    let duals = solve_linear(&bt, &cb).ok_or(Error::NonFinite)?;
    Ok(LpSolution {
        y,
        objective,
        basis: tab.basis,
        duals,
        pivots: tab.pivots,
    })
}
