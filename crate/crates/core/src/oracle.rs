//! Brute-force validator on a periodic grid of `m × m` subdomains of size
//! `p × p`.
//!
//! Everything here is assembled in real arithmetic from element matrices,
//! independently of the symbol code, and then compared against unions of
//! symbol spectra.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use faer::linalg::solvers::{DenseSolveCore, Llt, Solve};
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LfaError, Result};
use crate::linalg::{c64, eig, eig_real, ComplexMatrix, Spectrum};
use crate::preconditioners::{FineVariant, Multiplicative, PreconditionerSpec, SymbolContext};
use crate::stencil::{Frequency, Stencil9};

/// Largest fine-grid size the oracle accepts.
pub const MAX_FINE_DOFS: usize = 10_000;

/// Bilinear element stiffness of the Laplacian on a unit square, corners
/// ordered `(0,0), (1,0), (0,1), (1,1)`.
pub const Q1_ELEMENT: [[f64; 4]; 4] = [
    [2.0 / 3.0, -1.0 / 6.0, -1.0 / 6.0, -1.0 / 3.0],
    [-1.0 / 6.0, 2.0 / 3.0, -1.0 / 3.0, -1.0 / 6.0],
    [-1.0 / 6.0, -1.0 / 3.0, 2.0 / 3.0, -1.0 / 6.0],
    [-1.0 / 3.0, -1.0 / 6.0, -1.0 / 6.0, 2.0 / 3.0],
];

const CORNERS: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

/// Row-wise sparse real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Sparse {
    pub ncols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl Sparse {
    fn from_map(nrows: usize, ncols: usize, map: BTreeMap<(usize, usize), f64>) -> Self {
        let mut rows = vec![Vec::new(); nrows];
        for ((i, j), v) in map {
            if v != 0.0 {
                rows[i].push((j, v));
            }
        }
        Self { ncols, rows }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(j, v)| v * x[j]).sum()).collect()
    }

    pub fn apply_t(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                y[j] += v * x[i];
            }
        }
        y
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows(), self.ncols);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                m[(i, j)] += v;
            }
        }
        m
    }
}

/// Index bookkeeping for the periodic subdomain grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodicMesh {
    pub p: usize,
    pub m: usize,
    local_r: Vec<Option<usize>>,
}

impl PeriodicMesh {
    pub fn new(p: usize, m: usize) -> Result<Self> {
        if p < 2 || m < 2 {
            return Err(LfaError::InvalidParameter(format!("periodic mesh needs p, m >= 2, got p = {p}, m = {m}")));
        }
        let side = m * p;
        if side * side > MAX_FINE_DOFS {
            return Err(LfaError::InvalidParameter(format!(
                "{side}x{side} grid exceeds the validator limit of {MAX_FINE_DOFS} unknowns"
            )));
        }
        let mut local_r = Vec::with_capacity((p + 1) * (p + 1));
        let mut next = 0;
        for l in 0..=p {
            for k in 0..=p {
                if (k == 0 || k == p) && (l == 0 || l == p) {
                    local_r.push(None);
                } else {
                    local_r.push(Some(next));
                    next += 1;
                }
            }
        }
        Ok(Self { p, m, local_r })
    }

    pub fn side(&self) -> usize {
        self.m * self.p
    }

    pub fn n_fine(&self) -> usize {
        self.side() * self.side()
    }

    pub fn n_subdomains(&self) -> usize {
        self.m * self.m
    }

    pub fn n_local(&self) -> usize {
        (self.p + 1) * (self.p + 1)
    }

    /// Non-corner dofs per subdomain.
    pub fn n_rs(&self) -> usize {
        self.n_local() - 4
    }

    pub fn n_r(&self) -> usize {
        self.n_subdomains() * self.n_rs()
    }

    pub fn n_pi(&self) -> usize {
        self.n_subdomains()
    }

    pub fn n_broken(&self) -> usize {
        self.n_r() + self.n_pi()
    }

    pub fn node(&self, x: usize, y: usize) -> usize {
        let n = self.side();
        (y % n) * n + x % n
    }

    fn origin(&self, s: usize) -> (usize, usize) {
        ((s % self.m) * self.p, (s / self.m) * self.p)
    }

    /// Fine node of local dof `(k, l)` of subdomain `s`.
    pub fn local_node(&self, s: usize, k: usize, l: usize) -> usize {
        let (x, y) = self.origin(s);
        self.node(x + k, y + l)
    }

    /// Broken dof of local dof `(k, l)` of subdomain `s`: subdomain-major
    /// non-corner dofs first, then one dof per corner node.
    pub fn local_broken(&self, s: usize, k: usize, l: usize) -> usize {
        match self.local_r[l * (self.p + 1) + k] {
            Some(r) => s * self.n_rs() + r,
            None => {
                let (x, y) = self.origin(s);
                let cx = ((x + k) / self.p) % self.m;
                let cy = ((y + l) / self.p) % self.m;
                self.n_r() + cy * self.m + cx
            }
        }
    }

    fn local_dofs(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let q = self.p + 1;
        (0..q * q).map(move |i| (i, i % q, i / q))
    }

    fn is_corner(&self, k: usize, l: usize) -> bool {
        self.local_r[l * (self.p + 1) + k].is_none()
    }

    fn is_interior(&self, k: usize, l: usize) -> bool {
        k > 0 && k < self.p && l > 0 && l < self.p
    }
}

/// The assembled and partially subassembled operators of one periodic
/// problem, with the factorizations needed to apply BDDC.
pub struct AssembledSystem {
    pub mesh: PeriodicMesh,
    pub element: [[f64; 4]; 4],
    /// Subdomain Neumann matrix, local lexicographic order.
    pub local: Mat<f64>,
    pub a: Sparse,
    pub a_hat: Sparse,
    pub r1: Sparse,
    /// Scaled jump `J_D^T` on the broken space.
    pub jump_t: Sparse,
    /// `H^T`: interior values to subdomain interface dofs.
    pub harmonic_t: Sparse,
    pub r2: Sparse,
    pub d: Vec<f64>,
    pub s_pi: Mat<f64>,
    pub d_s: Vec<f64>,
    /// `(Ŝ_Π + J)⁻¹ - J`, `J` the projector onto constants.
    pub s_pinv: Mat<f64>,
    /// Schur complement of one subdomain onto its four corners.
    pub local_schur: [[f64; 4]; 4],
    rr: Vec<Llt<f64>>,
    r_pi: Mat<f64>,
    pi_ids: Vec<[usize; 4]>,
}

/// Q1 Laplacian on an `m × m` torus of `p × p` subdomains.
pub fn assemble(p: usize, m: usize) -> Result<AssembledSystem> {
    assemble_with(&Q1_ELEMENT, p, m)
}

pub fn assemble_with(element: &[[f64; 4]; 4], p: usize, m: usize) -> Result<AssembledSystem> {
    let mesh = PeriodicMesh::new(p, m)?;
    let q = p + 1;
    let nl = mesh.n_local();
    let mut local = Mat::<f64>::zeros(nl, nl);
    for ey in 0..p {
        for ex in 0..p {
            for (a, ca) in CORNERS.iter().enumerate() {
                for (b, cb) in CORNERS.iter().enumerate() {
                    let i = (ey + ca.1) * q + ex + ca.0;
                    let j = (ey + cb.1) * q + ex + cb.0;
                    local[(i, j)] += element[a][b];
                }
            }
        }
    }

    let (nf, nb, nr, ns) = (mesh.n_fine(), mesh.n_broken(), mesh.n_r(), mesh.n_subdomains());
    let mut a = BTreeMap::new();
    let mut a_hat = BTreeMap::new();
    let mut copies: Vec<Vec<usize>> = vec![Vec::new(); nf];
    for s in 0..ns {
        for (i, ki, li) in mesh.local_dofs() {
            let fi = mesh.local_node(s, ki, li);
            let bi = mesh.local_broken(s, ki, li);
            if !copies[fi].contains(&bi) {
                copies[fi].push(bi);
            }
            for (j, kj, lj) in mesh.local_dofs() {
                let v = local[(i, j)];
                if v != 0.0 {
                    *a.entry((fi, mesh.local_node(s, kj, lj))).or_insert(0.0) += v;
                    *a_hat.entry((bi, mesh.local_broken(s, kj, lj))).or_insert(0.0) += v;
                }
            }
        }
    }
    let a = Sparse::from_map(nf, nf, a);
    let a_hat = Sparse::from_map(nb, nb, a_hat);

    let mut r1 = BTreeMap::new();
    let mut jump = BTreeMap::new();
    for (f, cs) in copies.iter().enumerate() {
        let delta = 1.0 / cs.len() as f64;
        for &bi in cs {
            r1.insert((bi, f), delta);
            for &bj in cs {
                if bj != bi {
                    *jump.entry((bi, bi)).or_insert(0.0) += delta;
                    *jump.entry((bi, bj)).or_insert(0.0) -= delta;
                }
            }
        }
    }
    let r1 = Sparse::from_map(nb, nf, r1);
    let jump_t = Sparse::from_map(nb, nb, jump);

    // H = -A_II⁻¹ A_IΓ on each subdomain, Γ the non-corner boundary
    let interior: Vec<usize> = mesh.local_dofs().filter(|d| mesh.is_interior(d.1, d.2)).map(|d| d.0).collect();
    let gamma: Vec<usize> = mesh
        .local_dofs()
        .filter(|d| !mesh.is_interior(d.1, d.2) && !mesh.is_corner(d.1, d.2))
        .map(|d| d.0)
        .collect();
    let a_ii = Mat::from_fn(interior.len(), interior.len(), |i, j| local[(interior[i], interior[j])]);
    let a_ig = Mat::from_fn(interior.len(), gamma.len(), |i, j| local[(interior[i], gamma[j])]);
    let h = if interior.is_empty() {
        Mat::zeros(0, gamma.len())
    } else {
        let llt = a_ii.llt(Side::Lower).map_err(|_| LfaError::NotPositiveDefinite)?;
        -llt.solve(&a_ig)
    };
    let coords = |i: usize| (i % q, i / q);
    let mut ht = BTreeMap::new();
    for s in 0..ns {
        for (g, &lg) in gamma.iter().enumerate() {
            let (kg, lgy) = coords(lg);
            let bg = mesh.local_broken(s, kg, lgy);
            for (i, &li) in interior.iter().enumerate() {
                let (ki, lii) = coords(li);
                ht.insert((bg, mesh.local_node(s, ki, lii)), h[(i, g)]);
            }
        }
    }
    let harmonic_t = Sparse::from_map(nb, nf, ht);
    let mut r2 = BTreeMap::new();
    for (i, row) in r1.rows.iter().enumerate() {
        for &(j, v) in row {
            *r2.entry((i, j)).or_insert(0.0) += v;
        }
    }
    for (i, row) in jump_t.rows.iter().enumerate() {
        for &(k, jv) in row {
            for &(j, hv) in &harmonic_t.rows[k] {
                *r2.entry((i, j)).or_insert(0.0) -= jv * hv;
            }
        }
    }
    let r2 = Sparse::from_map(nb, nf, r2);

    let d: Vec<f64> = (0..nf).map(|i| a.get(i, i)).collect();

    // primal Schur complement
    let r_local: Vec<usize> = mesh.local_dofs().filter(|d| !mesh.is_corner(d.1, d.2)).map(|d| d.0).collect();
    let c_local: Vec<usize> = CORNERS.iter().map(|c| c.1 * p * q + c.0 * p).collect();
    let nrs = r_local.len();
    let a_rr = Mat::from_fn(nrs, nrs, |i, j| local[(r_local[i], r_local[j])]);
    let r_pi = Mat::from_fn(nrs, 4, |i, c| local[(r_local[i], c_local[c])]);
    let mut rr = Vec::with_capacity(ns);
    for _ in 0..ns {
        rr.push(a_rr.llt(Side::Lower).map_err(|_| LfaError::NotPositiveDefinite)?);
    }
    let x = rr[0].solve(&r_pi);
    let corr = r_pi.transpose() * &x;
    let mut local_schur = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            local_schur[a][b] = local[(c_local[a], c_local[b])] - corr[(a, b)];
        }
    }
    let pi_ids: Vec<[usize; 4]> = (0..ns)
        .map(|s| {
            let mut ids = [0; 4];
            for (c, cn) in CORNERS.iter().enumerate() {
                ids[c] = mesh.local_broken(s, cn.0 * p, cn.1 * p) - nr;
            }
            ids
        })
        .collect();
    let np = mesh.n_pi();
    let mut s_pi = Mat::from_fn(np, np, |i, j| a_hat.get(nr + i, nr + j));
    for (s, ids) in pi_ids.iter().enumerate() {
        let xs = rr[s].solve(&r_pi);
        let cs = r_pi.transpose() * &xs;
        for a in 0..4 {
            for b in 0..4 {
                s_pi[(ids[a], ids[b])] -= cs[(a, b)];
            }
        }
    }
    let d_s: Vec<f64> = (0..np).map(|i| s_pi[(i, i)]).collect();
    let j = 1.0 / np as f64;
    let shifted = Mat::from_fn(np, np, |a, b| s_pi[(a, b)] + j);
    let inv = shifted.llt(Side::Lower).map_err(|_| LfaError::NotPositiveDefinite)?.inverse();
    let s_pinv = Mat::from_fn(np, np, |a, b| inv[(a, b)] - j);

    Ok(AssembledSystem {
        mesh,
        element: *element,
        local,
        a,
        a_hat,
        r1,
        jump_t,
        harmonic_t,
        r2,
        d,
        s_pi,
        d_s,
        s_pinv,
        local_schur,
        rr,
        r_pi,
        pi_ids,
    })
}

impl AssembledSystem {
    pub fn stencil(&self) -> Result<Stencil9> {
        Stencil9::from_corner_matrix(&self.element)
    }

    pub fn restriction(&self, variant: FineVariant) -> &Sparse {
        match variant {
            FineVariant::Lumped => &self.r1,
            FineVariant::Dirichlet => &self.r2,
        }
    }

    /// Coarse problem whose elements are the subdomain corner Schur
    /// complements, split into subdomains of `p × p` coarse elements.
    pub fn coarse_system(&self) -> Result<AssembledSystem> {
        let (p, m) = (self.mesh.p, self.mesh.m);
        if m % p != 0 {
            return Err(LfaError::InvalidParameter(format!(
                "three-level validation needs m = {m} to be a multiple of p = {p}"
            )));
        }
        assemble_with(&self.local_schur, p, m / p)
    }

    /// Solves `Â x = g` by block elimination, with `y` standing in for the
    /// inverse of the primal Schur complement.
    pub fn broken_solve(&self, g: &[f64], y: &Mat<f64>) -> Vec<f64> {
        let nrs = self.mesh.n_rs();
        let nr = self.mesh.n_r();
        let np = self.mesh.n_pi();
        let block = |s: usize, v: &[f64]| -> Mat<f64> {
            let rhs = Mat::from_fn(nrs, 1, |i, _| v[s * nrs + i]);
            self.rr[s].solve(&rhs)
        };
        let mut h: Vec<f64> = g[nr..].to_vec();
        for (s, ids) in self.pi_ids.iter().enumerate() {
            let t = block(s, g);
            for c in 0..4 {
                let mut acc = 0.0;
                for i in 0..nrs {
                    acc += self.r_pi[(i, c)] * t[(i, 0)];
                }
                h[ids[c]] -= acc;
            }
        }
        let x_pi: Vec<f64> = (0..np).map(|i| (0..np).map(|j| y[(i, j)] * h[j]).sum()).collect();
        let mut rhs = g[..nr].to_vec();
        for (s, ids) in self.pi_ids.iter().enumerate() {
            for i in 0..nrs {
                let mut acc = 0.0;
                for c in 0..4 {
                    acc += self.r_pi[(i, c)] * x_pi[ids[c]];
                }
                rhs[s * nrs + i] -= acc;
            }
        }
        let mut x = vec![0.0; nr + np];
        for s in 0..self.mesh.n_subdomains() {
            let t = block(s, &rhs);
            for i in 0..nrs {
                x[s * nrs + i] = t[(i, 0)];
            }
        }
        x[nr..].copy_from_slice(&x_pi);
        x
    }

    /// `R^T Â⁻¹ R b` with primal block `y`.
    pub fn apply_bddc(&self, variant: FineVariant, y: &Mat<f64>, b: &[f64]) -> Vec<f64> {
        let r = self.restriction(variant);
        r.apply_t(&self.broken_solve(&r.apply(b), y))
    }

    fn apply_s(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n).map(|i| (0..n).map(|j| self.s_pi[(i, j)] * x[j]).sum()).collect()
    }
}

fn dense_from_columns<F: Fn(&[f64]) -> Vec<f64>>(n: usize, f: F) -> Mat<f64> {
    let mut out = Mat::zeros(n, n);
    let mut e = vec![0.0; n];
    for k in 0..n {
        e[k] = 1.0;
        let col = f(&e);
        for i in 0..n {
            out[(i, k)] = col[i];
        }
        e[k] = 0.0;
    }
    out
}

/// A preconditioned operator `G` on the periodic grid.
pub struct FiniteOperator<'a> {
    sys: &'a AssembledSystem,
    spec: PreconditionerSpec,
    y: Mat<f64>,
}

impl<'a> FiniteOperator<'a> {
    pub fn new(sys: &'a AssembledSystem, spec: &PreconditionerSpec) -> Result<Self> {
        let y = match spec.coarse {
            0 => sys.s_pinv.clone(),
            j => {
                let coarse = sys.coarse_system()?;
                let variant = FineVariant::from_index(j)?;
                let np = sys.mesh.n_pi();
                let mc = dense_from_columns(np, |e| coarse.apply_bddc(variant, &coarse.s_pinv, e));
                primal_block(sys, &mc, &spec.mult)
            }
        };
        Ok(Self { sys, spec: *spec, y })
    }

    pub fn dim(&self) -> usize {
        self.sys.mesh.n_fine()
    }

    /// The preconditioner alone.
    pub fn apply_preconditioner(&self, b: &[f64]) -> Vec<f64> {
        self.sys.apply_bddc(self.spec.fine, &self.y, b)
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let au = self.sys.a.apply(u);
        let g = self.apply_preconditioner(&au);
        let omega = match self.spec.mult {
            Multiplicative::Fine { omega } => omega,
            Multiplicative::FineCoarse { omega2, .. } => omega2,
            _ => return g,
        };
        let res: Vec<f64> = u.iter().zip(&g).map(|(a, b)| a - b).collect();
        let ar = self.sys.a.apply(&res);
        g.iter().zip(&ar).zip(&self.sys.d).map(|((gi, ai), di)| gi + omega * ai / di).collect()
    }

    pub fn dense(&self) -> Mat<f64> {
        dense_from_columns(self.dim(), |e| self.apply(e))
    }
}

/// Primal block for a coarse wrap, built by running the smoothing steps
/// on each unit vector.
fn primal_block(sys: &AssembledSystem, mc: &Mat<f64>, mult: &Multiplicative) -> Mat<f64> {
    let np = mc.nrows();
    let apply_mc = |b: &[f64]| -> Vec<f64> { (0..np).map(|i| (0..np).map(|j| mc[(i, j)] * b[j]).sum()).collect() };
    let jacobi = |x: &mut Vec<f64>, b: &[f64], w: f64| {
        let sx = sys.apply_s(x);
        for i in 0..np {
            x[i] += w * (b[i] - sx[i]) / sys.d_s[i];
        }
    };
    match *mult {
        Multiplicative::None | Multiplicative::Fine { .. } => mc.clone(),
        Multiplicative::Coarse { omega } | Multiplicative::FineCoarse { omega1: omega, .. } => {
            dense_from_columns(np, |b| {
                let mut x = apply_mc(b);
                jacobi(&mut x, b, omega);
                x
            })
        }
        Multiplicative::SymCoarse { omega1, omega2 } => dense_from_columns(np, |b| {
            let mut x = vec![0.0; np];
            jacobi(&mut x, b, omega2);
            let sx = sys.apply_s(&x);
            let r: Vec<f64> = b.iter().zip(&sx).map(|(a, c)| a - c).collect();
            for (xi, ci) in x.iter_mut().zip(apply_mc(&r)) {
                *xi += ci;
            }
            jacobi(&mut x, b, omega1);
            x
        }),
    }
}

/// Removes the constant mode from an operator that annihilates constants:
/// with a reflection `Q` sending `𝟙/√n` to `-e₀`, returns the trailing
/// `(n-1)²` block of `Q G Q`.
pub fn deflate_constant(g: &Mat<f64>) -> Mat<f64> {
    let n = g.nrows();
    let (v, beta) = reflector(n);
    let gv: Vec<f64> = (0..n).map(|i| (0..n).map(|j| g[(i, j)] * v[j]).sum()).collect();
    let vg: Vec<f64> = (0..n).map(|j| (0..n).map(|i| v[i] * g[(i, j)]).sum()).collect();
    let vgv: f64 = (0..n).map(|i| v[i] * gv[i]).sum();
    Mat::from_fn(n - 1, n - 1, |i, j| {
        let (i, j) = (i + 1, j + 1);
        g[(i, j)] - beta * v[i] * vg[j] - beta * gv[i] * v[j] + beta * beta * vgv * v[i] * v[j]
    })
}

/// Complex counterpart of [`deflate_constant`].
pub fn deflate_constant_complex(g: &ComplexMatrix) -> ComplexMatrix {
    let n = g.nrows();
    let (v, beta) = reflector(n);
    let zero = c64::new(0.0, 0.0);
    let gv: Vec<c64> = (0..n).map(|i| (0..n).fold(zero, |a, j| a + g[(i, j)] * v[j])).collect();
    let vg: Vec<c64> = (0..n).map(|j| (0..n).fold(zero, |a, i| a + g[(i, j)] * v[i])).collect();
    let vgv: c64 = (0..n).fold(zero, |a, i| a + gv[i] * v[i]);
    Mat::from_fn(n - 1, n - 1, |i, j| {
        let (i, j) = (i + 1, j + 1);
        g[(i, j)] - vg[j] * (beta * v[i]) - gv[i] * (beta * v[j]) + vgv * (beta * beta * v[i] * v[j])
    })
}

fn reflector(n: usize) -> (Vec<f64>, f64) {
    let s = 1.0 / (n as f64).sqrt();
    let mut v = vec![s; n];
    v[0] += 1.0;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    (v, 2.0 / vv)
}

/// Nonzero spectrum of the finite preconditioned operator by dense
/// eigenvalues of the deflated matrix.
pub fn finite_spectrum(sys: &AssembledSystem, spec: &PreconditionerSpec) -> Result<Spectrum> {
    let op = FiniteOperator::new(sys, spec)?;
    eig_real(&deflate_constant(&op.dense()))
}

/// Nonzero spectrum of an unwrapped `M⁻¹A` as the eigenvalues of the
/// symmetric `Lᵀ M_d L`, with `A_d = L Lᵀ` the deflated operator.
pub fn symmetric_spectrum(sys: &AssembledSystem, spec: &PreconditionerSpec) -> Result<Vec<f64>> {
    if spec.mult != Multiplicative::None {
        return Err(LfaError::InvalidParameter("the symmetric route needs an unwrapped preconditioner".into()));
    }
    let op = FiniteOperator::new(sys, spec)?;
    let n = op.dim();
    let md = deflate_constant(&dense_from_columns(n, |e| op.apply_preconditioner(e)));
    let ad = deflate_constant(&sys.a.to_dense());
    let l = ad.llt(Side::Lower).map_err(|_| LfaError::NotPositiveDefinite)?.L().to_owned();
    let k = l.transpose() * &md * &l;
    let ks = Mat::from_fn(n - 1, n - 1, |i, j| 0.5 * (k[(i, j)] + k[(j, i)]));
    let vals = ks.self_adjoint_eigenvalues(Side::Lower).map_err(|_| LfaError::NoConvergence)?;
    Ok(vals)
}

/// Nonzero spectra of the fine-wrapped two-level operators
/// `G + ω D⁻¹A(I - G)` for several weights.
///
/// With `A_d = L Lᵀ` and `Lᵀ M_d L - I = Q Λ Qᵀ ⪰ 0`, `G - I` is similar to
/// `(I - c LᵀL) Q Λ Qᵀ`, whose spectrum is that of the symmetric
/// `Λ - c Λ^{1/2} Qᵀ LᵀL Q Λ^{1/2}`, `c = ω/d`.
pub fn fine_wrap_spectra(sys: &AssembledSystem, fine: FineVariant, omegas: &[f64]) -> Result<Vec<Vec<f64>>> {
    let d = sys.d[0];
    if sys.d.iter().any(|&v| (v - d).abs() > 1e-12 * d) {
        return Err(LfaError::InvalidParameter("fine wrap route needs a constant diagonal".into()));
    }
    let spec = PreconditionerSpec::new(fine.index(), 0, Multiplicative::None)?;
    let op = FiniteOperator::new(sys, &spec)?;
    let n = op.dim();
    let md = deflate_constant(&dense_from_columns(n, |e| op.apply_preconditioner(e)));
    let ad = deflate_constant(&sys.a.to_dense());
    let l = ad.llt(Side::Lower).map_err(|_| LfaError::NotPositiveDefinite)?.L().to_owned();
    let k = l.transpose() * &md * &l;
    let e = Mat::from_fn(n - 1, n - 1, |i, j| 0.5 * (k[(i, j)] + k[(j, i)]) - if i == j { 1.0 } else { 0.0 });
    let eig = e.self_adjoint_eigen(Side::Lower).map_err(|_| LfaError::NoConvergence)?;
    let lam: Vec<f64> = (0..n - 1).map(|i| eig.S()[i]).collect();
    let top = lam.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if lam.iter().any(|&v| v < -1e-9 * top) {
        return Err(LfaError::DegenerateSpectrum("unwrapped operator has eigenvalues below one".into()));
    }
    let sq: Vec<f64> = lam.iter().map(|v| v.max(0.0).sqrt()).collect();
    let lq = &l * eig.U();
    let mut pm = lq.transpose() * &lq;
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            pm[(i, j)] *= sq[i] * sq[j];
        }
    }
    let mut out = Vec::with_capacity(omegas.len());
    for &w in omegas {
        let c = w / d;
        let h = Mat::from_fn(n - 1, n - 1, |i, j| {
            let base = if i == j { lam[i] } else { 0.0 };
            base - c * 0.5 * (pm[(i, j)] + pm[(j, i)])
        });
        let vals = h.self_adjoint_eigenvalues(Side::Lower).map_err(|_| LfaError::NoConvergence)?;
        out.push(vals.iter().map(|v| v + 1.0).collect());
    }
    Ok(out)
}

/// Union of symbol spectra at the frequencies resolved by an `m × m` grid
/// of `p × p` subdomains, with the constant mode removed from the zero
/// frequency block.
pub fn lfa_union(stencil: &Stencil9, p: usize, m: usize, spec: &PreconditionerSpec) -> Result<Spectrum> {
    let ctx = SymbolContext::new(stencil, p, spec)?;
    let side = m * p;
    let period = ctx.period();
    if side % period != 0 {
        return Err(LfaError::InvalidParameter(format!(
            "grid side {side} is not a multiple of the symbol period {period}"
        )));
    }
    let nb = side / period;
    let mut values = Vec::with_capacity(side * side);
    for k2 in 0..nb {
        for k1 in 0..nb {
            let sp = if k1 == 0 && k2 == 0 {
                let g = ctx.symbol_at_zero(&spec.mult)?.g;
                eig(&deflate_constant_complex(&g))?
            } else {
                let w = 2.0 * PI / nb as f64;
                ctx.spectrum(Frequency::wrapped(w * k1 as f64, w * k2 as f64))?
            };
            values.extend(sp.values);
        }
    }
    Ok(Spectrum::new(values))
}

#[derive(Debug, Clone)]
pub struct SpectraComparison {
    pub finite: Spectrum,
    pub lfa: Spectrum,
    /// Largest deviation between sorted (real case) or greedily matched
    /// (complex case) eigenvalues.
    pub max_deviation: f64,
}

impl SpectraComparison {
    pub fn relative_deviation(&self) -> f64 {
        self.max_deviation / self.finite.max_modulus().max(1.0)
    }
}

/// Compares the finite-grid spectrum with the matching symbol union.
pub fn spectra_match(sys: &AssembledSystem, spec: &PreconditionerSpec) -> Result<SpectraComparison> {
    let finite = finite_spectrum(sys, spec)?;
    let lfa = lfa_union(&sys.stencil()?, sys.mesh.p, sys.mesh.m, spec)?;
    if finite.len() != lfa.len() {
        return Err(LfaError::Shape(format!(
            "finite spectrum has {} values, symbol union {}",
            finite.len(),
            lfa.len()
        )));
    }
    let max_deviation = if spec.mult.real_spectrum() {
        let sorted = |s: &Spectrum| {
            let mut v = s.values.clone();
            v.sort_by(|a, b| a.re.total_cmp(&b.re));
            v
        };
        let (a, b) = (sorted(&finite), sorted(&lfa));
        a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    } else {
        finite.matching_distance(&lfa)
    };
    Ok(SpectraComparison { finite, lfa, max_deviation })
}

#[derive(Debug, Clone, Copy)]
pub struct RitzOptions {
    pub max_iter: usize,
    /// Relative residual at which the underlying GMRES iteration stops.
    pub tol: f64,
    pub seed: u64,
    /// Ritz values below `zero_tol·max|λ|` are treated as the null mode.
    pub zero_tol: f64,
}

impl Default for RitzOptions {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-12, seed: 0, zero_tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct RitzEstimate {
    /// `(k+1) × k` Hessenberg matrix, row-major.
    pub hessenberg: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub ritz_values: Vec<c64>,
    pub abs_min: f64,
    pub abs_max: f64,
    pub ratio: f64,
}

/// Arnoldi with modified Gram-Schmidt, as run by unrestarted GMRES on
/// `G x = 0` from a random zero-mean initial guess.
pub fn ritz_estimate<F: Fn(&[f64]) -> Vec<f64>>(apply: F, n: usize, opts: &RitzOptions) -> Result<RitzEstimate> {
    if opts.max_iter == 0 {
        return Err(LfaError::InvalidParameter("at least one iteration is needed".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mean = x0.iter().sum::<f64>() / n as f64;
    x0.iter_mut().for_each(|v| *v -= mean);
    let r0 = apply(&x0);
    let beta = norm(&r0);
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(LfaError::Breakdown("initial residual is zero or not finite".into()));
    }
    let mut basis = vec![r0.iter().map(|v| v / beta).collect::<Vec<f64>>()];
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut rot: Vec<(f64, f64)> = Vec::new();
    let mut res = beta;
    let mut converged = false;
    let mut k = 0;
    while k < opts.max_iter.min(n) {
        let mut w = apply(&basis[k]);
        let wn = norm(&w);
        let mut col = vec![0.0; k + 2];
        for (i, v) in basis.iter().enumerate() {
            let hij: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
            col[i] = hij;
            w.iter_mut().zip(v).for_each(|(a, b)| *a -= hij * b);
        }
        let hn = norm(&w);
        col[k + 1] = hn;
        h.push(col.clone());
        // GMRES residual through Givens rotations
        let mut c = col;
        for (i, &(cs, sn)) in rot.iter().enumerate() {
            let (a, b) = (c[i], c[i + 1]);
            c[i] = cs * a + sn * b;
            c[i + 1] = -sn * a + cs * b;
        }
        let den = c[k].hypot(c[k + 1]);
        let (cs, sn) = if den > 0.0 { (c[k] / den, c[k + 1] / den) } else { (1.0, 0.0) };
        rot.push((cs, sn));
        res *= sn.abs();
        k += 1;
        if hn <= 1e-14 * wn.max(f64::MIN_POSITIVE) || res <= opts.tol * beta {
            converged = true;
            break;
        }
        basis.push(w.iter().map(|v| v / hn).collect());
    }
    let hk = Mat::from_fn(k, k, |i, j| if i <= j + 1 { h[j][i] } else { 0.0 });
    let ritz = eig_real(&hk)?;
    let top = ritz.max_modulus();
    let kept: Vec<f64> =
        ritz.values.iter().map(|z| z.norm()).filter(|&a| a > opts.zero_tol * top).collect();
    let abs_min = kept.iter().cloned().fold(f64::INFINITY, f64::min);
    let abs_max = kept.iter().cloned().fold(0.0, f64::max);
    let hessenberg = (0..=k)
        .map(|i| (0..k).map(|j| if i < h[j].len() { h[j][i] } else { 0.0 }).collect())
        .collect();
    Ok(RitzEstimate {
        hessenberg,
        iterations: k,
        converged,
        ritz_values: ritz.values,
        abs_min,
        abs_max,
        ratio: abs_max / abs_min,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
