//! Chebyshev kernels and the dense polynomial type shared by every other module.

use std::fmt;

use crate::error::{Error, Result};

/// Trailing coefficients at or below this magnitude are dropped by [`Poly::new`].
pub const TRIM_THRESHOLD: f64 = 1e-14;

/// Default sign-change grid density used by [`poly_roots_in`].
pub const DEFAULT_GRID_PER_UNIT: f64 = 4096.0;

const MIN_GRID_CELLS: usize = 256;
const MAX_GRID_CELLS: usize = 1 << 21;

/// First-kind Chebyshev polynomial `T_n(x)`.
///
/// Uses `cos(n acos x)` inside `[-1, 1]` and the explicit form
/// `((x + sqrt(x^2-1))^n + (x - sqrt(x^2-1))^n) / 2` outside, which stays
/// accurate for the large arguments produced by ill-conditioned spectra.
pub fn cheb_t(n: u32, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if x.abs() <= 1.0 {
        return (n as f64 * x.acos()).cos();
    }
    let sign = if x < 0.0 && n % 2 == 1 { -1.0 } else { 1.0 };
    let a = x.abs();
    let big = a + (a * a - 1.0).sqrt();
    // x - sqrt(x^2-1) == 1 / (x + sqrt(x^2-1)), without the cancellation
    let small = big.recip();
    sign * 0.5 * (big.powi(n as i32) + small.powi(n as i32))
}

/// Second-kind Chebyshev polynomial `U_n(x)`.
pub fn cheb_u(n: u32, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let a = x.abs();
    let sign = if x < 0.0 && n % 2 == 1 { -1.0 } else { 1.0 };
    if a <= 1.0 {
        let theta = a.acos();
        let s = theta.sin();
        if s < 1e-6 {
            // near x = ±1 the quotient loses precision; the recurrence is stable here
            let (mut prev, mut cur) = (1.0, 2.0 * a);
            for _ in 1..n {
                let next = 2.0 * a * cur - prev;
                prev = cur;
                cur = next;
            }
            return sign * cur;
        }
        return sign * ((n as f64 + 1.0) * theta).sin() / s;
    }
    let big = a + (a * a - 1.0).sqrt();
    let small = big.recip();
    let k = n as i32 + 1;
    sign * (big.powi(k) - small.powi(k)) / (big - small)
}

/// Dense real polynomial in ascending powers: `c_0 + c_1 x + ... + c_d x^d`.
///
/// Kept in canonical form: the trailing coefficient is nonzero unless the
/// polynomial is the constant zero, which is stored as `[0]`.
#[derive(Clone, PartialEq)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    /// Builds a polynomial, trimming trailing coefficients with magnitude `<= 1e-14`.
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self::with_trim(coeffs, TRIM_THRESHOLD)
    }

    /// Builds a polynomial, trimming trailing coefficients with magnitude `<= threshold`.
    pub fn with_trim(mut coeffs: Vec<f64>, threshold: f64) -> Self {
        while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.abs() <= threshold) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        if coeffs.len() == 1 && coeffs[0].abs() <= threshold {
            coeffs[0] = 0.0;
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly { coeffs: vec![0.0] }
    }

    pub fn constant(c: f64) -> Self {
        Poly { coeffs: vec![c] }
    }

    /// The affine polynomial `a + b x`.
    pub fn linear(a: f64, b: f64) -> Self {
        Self::with_trim(vec![a, b], 0.0)
    }

    /// `scale * prod (x - r_i)`.
    pub fn from_roots(scale: f64, roots: &[f64]) -> Self {
        roots
            .iter()
            .fold(Poly::constant(scale), |acc, &r| acc.mul(&Poly::linear(-r, 1.0)))
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == 0.0
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() == 1 {
            return Poly::zero();
        }
        let d = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &c)| i as f64 * c)
            .collect();
        Poly::with_trim(d, 0.0)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let c = (0..n)
            .map(|i| self.coeffs.get(i).unwrap_or(&0.0) + other.coeffs.get(i).unwrap_or(&0.0))
            .collect();
        Poly::with_trim(c, 0.0)
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly::with_trim(self.coeffs.iter().map(|c| c * s).collect(), 0.0)
    }

    pub fn add_constant(&self, c: f64) -> Poly {
        let mut coeffs = self.coeffs.clone();
        coeffs[0] += c;
        Poly::with_trim(coeffs, 0.0)
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::with_trim(out, 0.0)
    }

    /// `p(a + b x)`.
    pub fn compose_affine(&self, a: f64, b: f64) -> Poly {
        let inner = Poly::linear(a, b);
        self.coeffs
            .iter()
            .rev()
            .fold(Poly::zero(), |acc, &c| acc.mul(&inner).add_constant(c))
    }
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Poly{:?}", self.coeffs)
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate() {
            if *c == 0.0 && self.coeffs.len() > 1 {
                continue;
            }
            if !first {
                write!(f, " {} ", if *c < 0.0 { '-' } else { '+' })?;
            } else if *c < 0.0 {
                write!(f, "-")?;
            }
            first = false;
            match i {
                0 => write!(f, "{}", c.abs())?,
                1 => write!(f, "{}·λ", c.abs())?,
                _ => write!(f, "{}·λ^{}", c.abs(), i)?,
            }
        }
        Ok(())
    }
}

/// A real root located by [`poly_roots_in`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyRoot {
    pub x: f64,
    /// 1 for a sign-changing root, 2 for a touching (even multiplicity) root.
    pub multiplicity: u8,
}

/// Root isolation settings.
#[derive(Debug, Clone, Copy)]
pub struct RootFinder {
    /// Grid subintervals per unit length for the sign-change scan.
    pub grid_per_unit: f64,
}

impl Default for RootFinder {
    fn default() -> Self {
        RootFinder {
            grid_per_unit: DEFAULT_GRID_PER_UNIT,
        }
    }
}

/// All real roots of `p` in `[lo, hi]`, sorted, each to within `tol`.
pub fn poly_roots_in(p: &Poly, lo: f64, hi: f64, tol: f64) -> Result<Vec<PolyRoot>> {
    RootFinder::default().roots_in(p, lo, hi, tol)
}

impl RootFinder {
    pub fn roots_in(&self, p: &Poly, lo: f64, hi: f64, tol: f64) -> Result<Vec<PolyRoot>> {
        if p.is_zero() {
            return Err(Error::DegenerateInput("zero polynomial has no isolated roots".into()));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("bad bracket [{lo}, {hi}]")));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        if p.degree() == 0 {
            return Ok(Vec::new());
        }
        let value_tol = tol * (1.0 + p.max_abs_coeff());
        let cells = ((hi - lo) * self.grid_per_unit)
            .ceil()
            .clamp(MIN_GRID_CELLS as f64, MAX_GRID_CELLS as f64) as usize;
        let step = (hi - lo) / cells as f64;
        let grid = |k: usize| if k == cells { hi } else { lo + step * k as f64 };

        let dp = p.derivative();
        let mut roots: Vec<PolyRoot> = Vec::new();
        let mut prev_x = lo;
        let mut prev_v = p.eval(lo);
        if prev_v == 0.0 {
            roots.push(PolyRoot { x: lo, multiplicity: classify_exact(&dp, lo, value_tol) });
        }
        for k in 1..=cells {
            let x = grid(k);
            let v = p.eval(x);
            if v == 0.0 {
                roots.push(PolyRoot { x, multiplicity: classify_exact(&dp, x, value_tol) });
            } else if prev_v != 0.0 && (prev_v < 0.0) != (v < 0.0) {
                roots.push(PolyRoot {
                    x: bisect(p, prev_x, x, prev_v, tol, value_tol),
                    multiplicity: 1,
                });
            }
            prev_x = x;
            prev_v = v;
        }

        // touching roots: critical points where |p| is negligible
        if dp.degree() >= 1 {
            let crit = self.roots_in(&dp, lo, hi, tol)?;
            let near = (2.0 * step).max(tol);
            for c in crit {
                if p.eval(c.x).abs() <= value_tol && !roots.iter().any(|r| (r.x - c.x).abs() <= near)
                {
                    roots.push(PolyRoot { x: c.x, multiplicity: 2 });
                }
            }
        }
        roots.sort_by(|a, b| a.x.total_cmp(&b.x));
        Ok(roots)
    }
}

fn classify_exact(dp: &Poly, x: f64, value_tol: f64) -> u8 {
    if dp.eval(x).abs() <= value_tol {
        2
    } else {
        1
    }
}

fn bisect(p: &Poly, mut a: f64, mut b: f64, mut fa: f64, tol: f64, value_tol: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = p.eval(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fa < 0.0) != (fm < 0.0) {
            b = mid;
        } else {
            a = mid;
            fa = fm;
        }
        if b - a <= tol && p.eval(0.5 * (a + b)).abs() <= value_tol {
            break;
        }
    }
    0.5 * (a + b)
}

/// Upper bound on the magnitude of every complex root (Cauchy).
pub fn cauchy_root_bound(p: &Poly) -> f64 {
    let c = p.coeffs();
    let lead = c[c.len() - 1];
    if c.len() == 1 {
        return 0.0;
    }
    1.0 + c[..c.len() - 1].iter().fold(0.0_f64, |m, x| m.max((x / lead).abs()))
}
