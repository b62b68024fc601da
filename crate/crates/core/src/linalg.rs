//! Dense complex linear algebra used by the symbol machinery.
//!
//! Thin wrappers over `faer` that add the checks the analysis relies on:
//! finiteness, relative pivot size, and convergence of eigen solvers.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};

use crate::error::{LfaError, Result};

pub use faer::c64;

pub type ComplexMatrix = Mat<c64>;

/// Pivots smaller than this (relative to the largest) are treated as singular.
pub const PIVOT_TOL: f64 = 1e-12;

#[inline]
pub fn cis(x: f64) -> c64 {
    c64::new(x.cos(), x.sin())
}

#[inline]
pub fn cr(x: f64) -> c64 {
    c64::new(x, 0.0)
}

pub fn zeros(r: usize, c: usize) -> ComplexMatrix {
    Mat::zeros(r, c)
}

pub fn identity(n: usize) -> ComplexMatrix {
    Mat::identity(n, n)
}

pub fn from_real(m: &Mat<f64>) -> ComplexMatrix {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| cr(m[(i, j)]))
}

pub fn adjoint(m: &ComplexMatrix) -> ComplexMatrix {
    m.adjoint().to_owned()
}

pub fn check_finite(m: &ComplexMatrix, what: &'static str) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(LfaError::NonFinite(what));
            }
        }
    }
    Ok(())
}

fn check_square(m: &ComplexMatrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(LfaError::Shape(format!(
            "{what}: expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn max_abs(m: &ComplexMatrix) -> f64 {
    let mut v = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            v = v.max(m[(i, j)].norm());
        }
    }
    v
}

/// Largest entrywise deviation between two matrices of equal shape.
pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut v = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            v = v.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    v
}

pub fn is_hermitian(m: &ComplexMatrix, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = max_abs(m).max(1.0);
    for j in 0..m.ncols() {
        for i in 0..=j {
            if (m[(i, j)] - m[(j, i)].conj()).norm() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// One-dimensional Fourier matrix `(T1)_{ij} = z^{ij}` with `z = exp(2πi/p)`.
pub fn dft_1d(p: usize) -> Result<ComplexMatrix> {
    if p == 0 {
        return Err(LfaError::InvalidParameter("DFT size must be positive".into()));
    }
    let w = 2.0 * std::f64::consts::PI / p as f64;
    Ok(Mat::from_fn(p, p, |i, j| cis(w * ((i * j) % p) as f64)))
}

/// Two-dimensional Fourier matrix `T = T1 ⊗ T1` of size `p² × p²`.
///
/// Row `y*p + x` is the grid point `(x, y)`; column `r*p + q` is the
/// harmonic `(q, r)`.
pub fn dft_matrix(p: usize) -> Result<ComplexMatrix> {
    let t1 = dft_1d(p)?;
    Ok(kron(&t1, &t1))
}

/// Complex eigenvalues, in no particular order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<c64>,
}

impl Spectrum {
    pub fn new(values: Vec<c64>) -> Self {
        Self { values }
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self { values: values.iter().map(|&x| cr(x)).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_modulus(&self) -> f64 {
        self.values.iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |a, z| a.max(z.im.abs()))
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn conj(&self) -> Self {
        Self { values: self.values.iter().map(|z| z.conj()).collect() }
    }

    /// Largest distance under a greedy nearest-neighbour pairing.
    ///
    /// Adequate for comparing spectra that agree up to rounding; returns
    /// infinity when the lengths differ.
    pub fn matching_distance(&self, other: &Spectrum) -> f64 {
        if self.len() != other.len() {
            return f64::INFINITY;
        }
        let mut a = self.values.clone();
        let mut b = other.values.clone();
        let key = |z: &c64| (z.re, z.im);
        a.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        b.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        let mut used = vec![false; b.len()];
        let mut worst = 0.0f64;
        for z in &a {
            let mut best = usize::MAX;
            let mut bd = f64::INFINITY;
            for (k, w) in b.iter().enumerate() {
                if !used[k] {
                    let d = (z - w).norm();
                    if d < bd {
                        bd = d;
                        best = k;
                    }
                }
            }
            used[best] = true;
            worst = worst.max(bd);
        }
        worst
    }
}

/// Eigenvalues of a general square matrix.
pub fn eig(m: &ComplexMatrix) -> Result<Spectrum> {
    check_square(m, "eig")?;
    check_finite(m, "eig input")?;
    if m.nrows() == 0 {
        return Ok(Spectrum::new(Vec::new()));
    }
    let v = m.eigenvalues().map_err(|_| LfaError::NoConvergence)?;
    let s = Spectrum::new(v);
    if s.values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(LfaError::NoConvergence);
    }
    Ok(s)
}

/// Eigenvalues of a real general square matrix.
pub fn eig_real(m: &Mat<f64>) -> Result<Spectrum> {
    if m.nrows() != m.ncols() {
        return Err(LfaError::Shape("eig_real: expected square matrix".into()));
    }
    if m.nrows() == 0 {
        return Ok(Spectrum::new(Vec::new()));
    }
    let v = m.eigenvalues().map_err(|_| LfaError::NoConvergence)?;
    if v.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(LfaError::NoConvergence);
    }
    Ok(Spectrum::new(v))
}

/// Eigenvalues of a Hermitian matrix in ascending order. Only the lower
/// triangle is read.
pub fn eig_hermitian(m: &ComplexMatrix) -> Result<Vec<f64>> {
    check_square(m, "eig_hermitian")?;
    check_finite(m, "eig_hermitian input")?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    m.self_adjoint_eigenvalues(Side::Lower).map_err(|_| LfaError::NoConvergence)
}

/// Eigenpairs of a Hermitian matrix; eigenvalues ascending, eigenvectors
/// as orthonormal columns.
pub fn eigh(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    check_square(m, "eigh")?;
    check_finite(m, "eigh input")?;
    let n = m.nrows();
    let e = m.self_adjoint_eigen(Side::Lower).map_err(|_| LfaError::NoConvergence)?;
    let s = e.S();
    let vals: Vec<f64> = (0..n).map(|i| s[i].re).collect();
    Ok((vals, e.U().to_owned()))
}

/// Moore-Penrose inverse of a Hermitian matrix; eigenvalues with
/// `|λ| <= cutoff` are treated as zero.
pub fn pinv_hermitian(m: &ComplexMatrix, cutoff: f64) -> Result<ComplexMatrix> {
    let (vals, u) = eigh(m)?;
    let n = m.nrows();
    let mut us = u.clone();
    for (j, &v) in vals.iter().enumerate() {
        let inv = if v.abs() > cutoff { 1.0 / v } else { 0.0 };
        for i in 0..n {
            us[(i, j)] *= inv;
        }
    }
    Ok(&us * u.adjoint())
}

/// LU factorisation with partial pivoting and a relative pivot check.
pub struct Lu {
    inner: faer::linalg::solvers::PartialPivLu<c64>,
}

impl Lu {
    pub fn new(m: &ComplexMatrix) -> Result<Self> {
        check_square(m, "lu")?;
        check_finite(m, "lu input")?;
        let inner = m.partial_piv_lu();
        let u = inner.U();
        let n = u.nrows();
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..n {
            let d = u[(i, i)].norm();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if n > 0 {
            let rel = if hi > 0.0 { lo / hi } else { 0.0 };
            if !(rel >= PIVOT_TOL) {
                return Err(LfaError::Singular { pivot: rel });
            }
        }
        Ok(Self { inner })
    }

    pub fn solve(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.inner.solve(rhs)
    }

    pub fn inverse(&self) -> ComplexMatrix {
        self.inner.inverse()
    }
}

/// Solves `m x = rhs`.
pub fn solve(m: &ComplexMatrix, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
    if m.nrows() != rhs.nrows() {
        return Err(LfaError::Shape(format!(
            "solve: {}x{} system with {} right-hand-side rows",
            m.nrows(),
            m.ncols(),
            rhs.nrows()
        )));
    }
    let x = Lu::new(m)?.solve(rhs);
    check_finite(&x, "solve output")?;
    Ok(x)
}

pub fn inverse(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let x = Lu::new(m)?.inverse();
    check_finite(&x, "inverse output")?;
    Ok(x)
}

/// Cholesky factor `m = L L^H` of a Hermitian positive definite matrix.
pub struct Cholesky {
    inner: faer::linalg::solvers::Llt<c64>,
}

impl Cholesky {
    pub fn new(m: &ComplexMatrix) -> Result<Self> {
        check_square(m, "cholesky")?;
        check_finite(m, "cholesky input")?;
        let inner = m.llt(Side::Lower).map_err(|_| LfaError::NotPositiveDefinite)?;
        Ok(Self { inner })
    }

    pub fn dim(&self) -> usize {
        self.inner.L().nrows()
    }

    /// `L^{-1} rhs`, in place.
    pub fn solve_lower_in_place(&self, rhs: &mut ComplexMatrix) {
        faer::linalg::triangular_solve::solve_lower_triangular_in_place(
            self.inner.L(),
            rhs.as_mut(),
            faer::Par::Seq,
        );
    }

    /// `L^{-H} rhs`, in place.
    pub fn solve_lower_adjoint_in_place(&self, rhs: &mut ComplexMatrix) {
        faer::linalg::triangular_solve::solve_upper_triangular_in_place(
            self.inner.L().adjoint(),
            rhs.as_mut(),
            faer::Par::Seq,
        );
    }

    pub fn solve(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.inner.solve(rhs)
    }

    pub fn inverse(&self) -> ComplexMatrix {
        self.inner.inverse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) {
        let d = max_abs_diff(a, b);
        assert!(d <= tol, "max diff {d:e} > {tol:e}");
    }

    #[test]
    fn dft_is_scaled_unitary() {
        for p in 1..=6 {
            let t = dft_matrix(p).unwrap();
            let tth = &t * t.adjoint();
            let want = Mat::from_fn(p * p, p * p, |i, j| {
                if i == j { cr((p * p) as f64) } else { c64::new(0.0, 0.0) }
            });
            assert_close(&tth, &want, 1e-12 * (p * p) as f64);
        }
    }

    #[test]
    fn dft_rejects_zero() {
        assert!(matches!(dft_matrix(0), Err(LfaError::InvalidParameter(_))));
    }

    #[test]
    fn dft_entry_convention() {
        let t = dft_matrix(3).unwrap();
        let z = cis(2.0 * std::f64::consts::PI / 3.0);
        // row (x=2, y=1), column (q=1, r=2): z^{2*1 + 1*2}
        let v = t[(1 * 3 + 2, 2 * 3 + 1)];
        let w = z * z * z * z;
        assert!((v - w).norm() < 1e-14);
    }

    #[test]
    fn kron_shapes_and_entries() {
        let a = Mat::from_fn(2, 3, |i, j| cr((i * 3 + j) as f64));
        let b = Mat::from_fn(2, 2, |i, j| c64::new(i as f64, j as f64));
        let k = kron(&a, &b);
        assert_eq!((k.nrows(), k.ncols()), (4, 6));
        assert_eq!(k[(3, 5)], a[(1, 2)] * b[(1, 1)]);
    }

    #[test]
    fn solve_identity_and_singular() {
        let i3 = identity(3);
        let b = Mat::from_fn(3, 2, |i, j| c64::new(i as f64, j as f64));
        assert_close(&solve(&i3, &b).unwrap(), &b, 0.0);
        let s = Mat::from_fn(2, 2, |_, _| cr(1.0));
        match solve(&s, &identity(2)) {
            Err(LfaError::Singular { pivot }) => assert!(pivot < PIVOT_TOL),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn solve_rejects_nan() {
        let mut m = identity(2);
        m[(0, 1)] = cr(f64::NAN);
        assert!(matches!(solve(&m, &identity(2)), Err(LfaError::NonFinite(_))));
    }

    #[test]
    fn hermitian_eigenvalues_sorted() {
        let m = Mat::from_fn(3, 3, |i, j| if i == j { cr([3.0, 1.0, 2.0][i]) } else { cr(0.0) });
        assert_eq!(eig_hermitian(&m).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn general_eig_of_rotation() {
        let m = Mat::from_fn(2, 2, |i, j| cr([[0.0, -1.0], [1.0, 0.0]][i][j]));
        let s = eig(&m).unwrap();
        let want = Spectrum::new(vec![c64::new(0.0, 1.0), c64::new(0.0, -1.0)]);
        assert!(s.matching_distance(&want) < 1e-12);
    }

    #[test]
    fn cholesky_triangular_solves() {
        let a = Mat::from_fn(3, 3, |i, j| {
            if i == j { cr(4.0) } else { c64::new(0.5, if i < j { 0.25 } else { -0.25 }) }
        });
        let ch = Cholesky::new(&a).unwrap();
        let b = Mat::from_fn(3, 1, |i, _| cr(i as f64 + 1.0));
        let mut y = b.clone();
        ch.solve_lower_in_place(&mut y);
        ch.solve_lower_adjoint_in_place(&mut y);
        assert_close(&(&a * &y), &b, 1e-12);
    }
}
