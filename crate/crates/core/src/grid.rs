//! Uniform cell-centered mesh on (-1, 1), discrete norms, difference
//! operators and the tridiagonal solver shared by the implicit diffusion
//! and velocity solves.
//!
//! Cell `i` occupies `[x_{i-1/2}, x_{i+1/2}]` with center
//! `x_i = -1 + (i + 1/2) h`. All integrals use the midpoint rule with
//! weight `h`, so the discrete L1 norm of a constant `c` is exactly `2|c|`.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};

/// Smallest admissible cell count.
pub const MIN_CELLS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n: usize,
    h: f64,
    centers: Vec<f64>,
    faces: Vec<f64>,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < MIN_CELLS {
            return Err(Error::invalid(
                "grid.n",
                format!("cell count must be at least {MIN_CELLS}, got {n}"),
            ));
        }
        let h = 2.0 / n as f64;
        let centers = (0..n).map(|i| -1.0 + (i as f64 + 0.5) * h).collect();
        let faces = (0..=n).map(|i| -1.0 + i as f64 * h).collect();
        Ok(Grid {
            n,
            h,
            centers,
            faces,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    /// Samples `f` at every cell center.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Field {
        Field(self.centers.iter().map(|&x| f(x)).collect())
    }

    pub(crate) fn check(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.n {
            return Err(Error::Structural {
                expected: self.n,
                got: f.len(),
            });
        }
        Ok(())
    }
}

/// Cell-centered values of a scalar quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct Field(Vec<f64>);

impl Field {
    pub fn new(values: Vec<f64>) -> Self {
        Field(values)
    }

    pub fn constant(g: &Grid, c: f64) -> Self {
        Field(vec![c; g.n()])
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for Field {
    fn from(values: Vec<f64>) -> Self {
        Field(values)
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

// Unchecked kernels used on hot paths where lengths are known to agree.

pub(crate) fn l1(h: f64, f: &[f64]) -> f64 {
    h * f.iter().map(|v| v.abs()).sum::<f64>()
}

pub(crate) fn l2_squared(h: f64, f: &[f64]) -> f64 {
    h * f.iter().map(|v| v * v).sum::<f64>()
}

pub(crate) fn sup(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn integral(h: f64, f: &[f64]) -> f64 {
    h * f.iter().sum::<f64>()
}

#[cfg(test)]
pub(crate) fn inner(h: f64, f: &[f64], g: &[f64]) -> f64 {
    h * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
}

/// `h * sum |f_i|`.
pub fn norm_l1(f: &[f64], g: &Grid) -> Result<f64> {
    g.check(f)?;
    Ok(l1(g.h(), f))
}

/// `sqrt(h * sum f_i^2)`.
pub fn norm_l2(f: &[f64], g: &Grid) -> Result<f64> {
    g.check(f)?;
    Ok(l2_squared(g.h(), f).sqrt())
}

/// Maximum absolute value over cell centers.
pub fn norm_sup(f: &[f64], g: &Grid) -> Result<f64> {
    g.check(f)?;
    Ok(sup(f))
}

/// Signed integral `h * sum f_i`; equals [`norm_l1`] for nonnegative fields.
pub fn total_mass(f: &[f64], g: &Grid) -> Result<f64> {
    g.check(f)?;
    Ok(integral(g.h(), f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientBc {
    /// Reflected ghost `f_{-1} = f_0`, `f_n = f_{n-1}`.
    NeumannZero,
    /// First-order one-sided difference in the two wall cells.
    OneSided,
}

/// Centered difference `(f_{i+1} - f_{i-1}) / 2h` with the chosen wall closure.
pub fn centered_gradient(f: &[f64], g: &Grid, bc: GradientBc) -> Result<Field> {
    g.check(f)?;
    Ok(Field(gradient_with_ghosts(f, g.h(), bc)))
}

pub(crate) fn gradient_with_ghosts(f: &[f64], h: f64, bc: GradientBc) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    match bc {
        GradientBc::NeumannZero => {
            out[0] = (f[1] - f[0]) / (2.0 * h);
            out[n - 1] = (f[n - 1] - f[n - 2]) / (2.0 * h);
        }
        GradientBc::OneSided => {
            out[0] = (f[1] - f[0]) / h;
            out[n - 1] = (f[n - 1] - f[n - 2]) / h;
        }
    }
    out
}

/// Banded system `sub[i-1] x_{i-1} + diag[i] x_i + sup[i] x_{i+1} = rhs[i]`.
///
/// `sub` and `sup` have length `n - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn new(sub: Vec<f64>, diag: Vec<f64>, sup: Vec<f64>, rhs: Vec<f64>) -> Result<Self> {
        let sys = TridiagonalSystem {
            sub,
            diag,
            sup,
            rhs,
        };
        sys.check()?;
        Ok(sys)
    }

    fn check(&self) -> Result<()> {
        let n = self.diag.len();
        if n == 0 {
            return Err(Error::Structural {
                expected: 1,
                got: 0,
            });
        }
        for band in [&self.sub, &self.sup] {
            if band.len() != n - 1 {
                return Err(Error::Structural {
                    expected: n - 1,
                    got: band.len(),
                });
            }
        }
        if self.rhs.len() != n {
            return Err(Error::Structural {
                expected: n,
                got: self.rhs.len(),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Row-wise strict diagonal dominance.
    pub fn is_diagonally_dominant(&self) -> bool {
        let n = self.len();
        (0..n).all(|i| {
            let off = if i > 0 { self.sub[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.sup[i].abs() } else { 0.0 };
            self.diag[i].abs() > off
        })
    }

    /// Matrix-vector product with the banded matrix (ignores `rhs`).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.sub[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.sup[i] * x[i + 1];
                }
                v
            })
            .collect()
    }
}

/// Thomas algorithm. Fails on a zero pivot; callers assemble diagonally
/// dominant systems, for which no pivot can vanish.
pub fn thomas_solve(sys: &TridiagonalSystem) -> Result<Field> {
    sys.check()?;
    let n = sys.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];

    let mut pivot = sys.diag[0];
    if pivot == 0.0 {
        return Err(Error::Singular { row: 0 });
    }
    if n > 1 {
        c[0] = sys.sup[0] / pivot;
    }
    d[0] = sys.rhs[0] / pivot;
    for i in 1..n {
        pivot = sys.diag[i] - sys.sub[i - 1] * c[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::Singular { row: i });
        }
        if i + 1 < n {
            c[i] = sys.sup[i] / pivot;
        }
        d[i] = (sys.rhs[i] - sys.sub[i - 1] * d[i - 1]) / pivot;
    }

    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(Field(x))
}
