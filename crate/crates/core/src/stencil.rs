//! Nine-point stencils, their classical symbols, harmonic frequencies and
//! the fine-operator symbol on a periodic block.

use std::f64::consts::PI;

use faer::Mat;

use crate::error::{LfaError, Result};
use crate::linalg::{cis, cr, dft_matrix, ComplexMatrix};

pub use crate::linalg::c64;

/// Corner `c` of a unit element as `(dx, dy)`: 0=(0,0), 1=(1,0), 2=(0,1), 3=(1,1).
pub const CORNERS: [[i64; 2]; 4] = [[0, 0], [1, 0], [0, 1], [1, 1]];

/// A 3×3 stencil with coefficients `c[dy+1][dx+1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil9 {
    c: [[f64; 3]; 3],
}

impl Stencil9 {
    pub fn new(c: [[f64; 3]; 3]) -> Result<Self> {
        if c.iter().flatten().any(|v| !v.is_finite()) {
            return Err(LfaError::InvalidParameter("stencil has non-finite coefficients".into()));
        }
        Ok(Self { c })
    }

    /// Builds a stencil from the nine coefficients listed row by row from
    /// the bottom row (`dy = -1`) upward, each row from `dx = -1` to `dx = 1`.
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 9 {
            return Err(LfaError::InvalidParameter(format!(
                "stencil needs 9 coefficients, got {}",
                v.len()
            )));
        }
        let mut c = [[0.0; 3]; 3];
        for (k, x) in v.iter().enumerate() {
            c[k / 3][k % 3] = *x;
        }
        Self::new(c)
    }

    /// Bilinear finite elements for the Laplacian: `(1/3)[-1 -1 -1; -1 8 -1; -1 -1 -1]`.
    pub fn q1() -> Self {
        let e = -1.0 / 3.0;
        Self { c: [[e, e, e], [e, 8.0 / 3.0, e], [e, e, e]] }
    }

    pub fn coeff(&self, dx: i64, dy: i64) -> f64 {
        assert!(dx.abs() <= 1 && dy.abs() <= 1, "stencil offset out of range");
        self.c[(dy + 1) as usize][(dx + 1) as usize]
    }

    pub fn coefficients(&self) -> [[f64; 3]; 3] {
        self.c
    }

    pub fn center(&self) -> f64 {
        self.c[1][1]
    }

    pub fn row_sum(&self) -> f64 {
        self.c.iter().flatten().sum()
    }

    /// Nonzero offsets with their coefficients.
    pub fn entries(&self) -> impl Iterator<Item = ([i64; 2], f64)> + '_ {
        (-1..=1i64)
            .flat_map(|dy| (-1..=1i64).map(move |dx| [dx, dy]))
            .map(|k| (k, self.coeff(k[0], k[1])))
            .filter(|(_, v)| *v != 0.0)
    }

    fn max_coeff(&self) -> f64 {
        self.c.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300)
    }

    pub fn is_symmetric(&self) -> bool {
        let tol = 1e-14 * self.max_coeff();
        (-1..=1).all(|dy| (-1..=1).all(|dx| (self.coeff(dx, dy) - self.coeff(-dx, -dy)).abs() <= tol))
    }

    /// Invariance under `θ₁ → -θ₁` (and hence `θ₂ → -θ₂`) for symmetric stencils.
    pub fn has_axis_reflection(&self) -> bool {
        let tol = 1e-14 * self.max_coeff();
        self.is_symmetric() && (self.coeff(1, 1) - self.coeff(-1, 1)).abs() <= tol
    }

    /// Invariance under the full symmetry group of the square.
    pub fn has_square_symmetry(&self) -> bool {
        let tol = 1e-14 * self.max_coeff();
        self.has_axis_reflection() && (self.coeff(1, 0) - self.coeff(0, 1)).abs() <= tol
    }

    /// Splits a symmetric stencil into a 4×4 element matrix over [`CORNERS`]
    /// whose assembly on a uniform grid reproduces the stencil.
    pub fn element_matrix(&self) -> Result<[[f64; 4]; 4]> {
        if !self.is_symmetric() {
            return Err(LfaError::InvalidParameter("element split needs a symmetric stencil".into()));
        }
        let d = self.center() / 4.0;
        let h = self.coeff(1, 0) / 2.0;
        let v = self.coeff(0, 1) / 2.0;
        let x = self.coeff(1, 1);
        let y = self.coeff(-1, 1);
        Ok([[d, h, v, x], [h, d, y, v], [v, y, d, h], [x, v, h, d]])
    }

    /// Stencil obtained by assembling one 4×4 corner matrix on every element.
    pub fn from_corner_matrix(m: &[[f64; 4]; 4]) -> Result<Self> {
        let mut c = [[0.0; 3]; 3];
        for a in 0..4 {
            for b in 0..4 {
                let dx = CORNERS[b][0] - CORNERS[a][0];
                let dy = CORNERS[b][1] - CORNERS[a][1];
                c[(dy + 1) as usize][(dx + 1) as usize] += m[a][b];
            }
        }
        Self::new(c)
    }
}

/// A Fourier frequency `θ ∈ [-π, π)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frequency {
    pub t1: f64,
    pub t2: f64,
}

impl Frequency {
    pub fn new(t1: f64, t2: f64) -> Result<Self> {
        let ok = |t: f64| t.is_finite() && (-PI..PI).contains(&t);
        if !ok(t1) || !ok(t2) {
            return Err(LfaError::InvalidParameter(format!(
                "frequency ({t1}, {t2}) outside [-pi, pi)^2"
            )));
        }
        Ok(Self { t1, t2 })
    }

    /// Maps arbitrary angles into `[-π, π)²`.
    pub fn wrapped(t1: f64, t2: f64) -> Self {
        let w = |t: f64| {
            let mut x = (t + PI).rem_euclid(2.0 * PI) - PI;
            if x >= PI {
                x -= 2.0 * PI;
            }
            x
        };
        Self { t1: w(t1), t2: w(t2) }
    }

    pub fn is_zero(&self) -> bool {
        self.t1 == 0.0 && self.t2 == 0.0
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.t1, self.t2]
    }
}

/// The `p²` fine-grid frequencies `θ^{(q,r)} = (θ + 2π(q,r))/p` aliased to a
/// coarse frequency `θ`. Member `r*p + q` corresponds to column `r*p + q` of
/// [`dft_matrix`].
#[derive(Debug, Clone)]
pub struct HarmonicGrid {
    pub base: Frequency,
    pub p: usize,
    pub members: Vec<[f64; 2]>,
}

impl HarmonicGrid {
    pub fn new(theta: Frequency, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(LfaError::InvalidParameter("period must be positive".into()));
        }
        let pf = p as f64;
        let mut members = Vec::with_capacity(p * p);
        for r in 0..p {
            for q in 0..p {
                members.push([
                    (theta.t1 + 2.0 * PI * q as f64) / pf,
                    (theta.t2 + 2.0 * PI * r as f64) / pf,
                ]);
            }
        }
        Ok(Self { base: theta, p, members })
    }

    /// Classical symbol at every member.
    pub fn symbols(&self, s: &Stencil9) -> Vec<f64> {
        self.members.iter().map(|t| classical_symbol_at(s, *t).re).collect()
    }
}

/// `Σ_κ c_κ exp(iθ·κ)`.
pub fn classical_symbol(s: &Stencil9, theta: Frequency) -> c64 {
    classical_symbol_at(s, theta.as_array())
}

pub(crate) fn classical_symbol_at(s: &Stencil9, t: [f64; 2]) -> c64 {
    s.entries()
        .map(|(k, v)| cis(t[0] * k[0] as f64 + t[1] * k[1] as f64) * v)
        .fold(c64::new(0.0, 0.0), |a, b| a + b)
}

/// Symbol of the stencil on a periodic `p×p` block at coarse frequency `θ`,
/// in the sparse coefficient basis: `T · diag(L̃(θ^{(q,r)})) · T⁻¹`.
pub fn fine_symbol(s: &Stencil9, p: usize, theta: Frequency) -> Result<ComplexMatrix> {
    if p < 2 {
        return Err(LfaError::InvalidParameter("period must be at least 2".into()));
    }
    let t = dft_matrix(p)?;
    let lam = HarmonicGrid::new(theta, p)?.symbols(s);
    let n = p * p;
    let scale = 1.0 / n as f64;
    let td = Mat::from_fn(n, n, |i, j| t[(i, j)] * (lam[j] * scale));
    Ok(&td * t.adjoint())
}

/// Direct assembly of the same symbol: the coupling from grid point `a` to
/// the periodic image of `a + κ` carries the phase `exp(iθ·κ/p)`.
pub fn fine_symbol_direct(s: &Stencil9, p: usize, theta: Frequency) -> Result<ComplexMatrix> {
    if p < 2 {
        return Err(LfaError::InvalidParameter("period must be at least 2".into()));
    }
    let pi = p as i64;
    let n = p * p;
    let mut m = Mat::zeros(n, n);
    for y in 0..pi {
        for x in 0..pi {
            let a = (y * pi + x) as usize;
            for (k, v) in s.entries() {
                let b = ((y + k[1]).rem_euclid(pi) * pi + (x + k[0]).rem_euclid(pi)) as usize;
                let ph = (theta.t1 * k[0] as f64 + theta.t2 * k[1] as f64) / p as f64;
                m[(a, b)] += cis(ph) * v;
            }
        }
    }
    Ok(m)
}

/// Diagonal of the fine operator, used by the Jacobi-type smoother.
pub fn diagonal_value(s: &Stencil9) -> f64 {
    s.center()
}

/// Real diagonal matrix helper.
pub fn scalar_identity(n: usize, v: f64) -> ComplexMatrix {
    Mat::from_fn(n, n, |i, j| if i == j { cr(v) } else { cr(0.0) })
}
