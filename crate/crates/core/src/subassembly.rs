//! Partially subassembled (broken) operators on a periodic macro-cell.
//!
//! A macro-cell holds `q × q` subdomains of `p × p` elements, so its period
//! in fine grid units is `P = q·p`. Each subdomain owns the non-corner nodes
//! of its closure (the `r` dofs, duplicated along shared edges); subdomain
//! corners are assembled into one primal (`Π`) dof per coarse node.
//! `q = 1` is the two-level setting, `q = p` the fine level of the
//! three-level setting.
//!
//! Every symbol is written in the sparse coefficient basis: a coupling from
//! a row dof to a column dof whose physical displacement is `d` (fine grid
//! units) carries the phase `exp(iθ·d/P)`. In this basis the weighted
//! injection and the jump operator are real and frequency independent.

use faer::Mat;

use crate::error::{LfaError, Result};
use crate::linalg::{cis, cr, ComplexMatrix, Lu};
use crate::stencil::{Frequency, Stencil9, CORNERS};

pub use crate::linalg::c64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofKind {
    Interior,
    Edge,
    Corner,
}

/// Index bookkeeping for the broken space of one macro-cell.
///
/// Broken dofs are numbered subdomain by subdomain (`s = sy*q + sx`), each
/// subdomain listing its `r` dofs lexicographically (x fastest) with the four
/// corners skipped; the `q²` primal dofs follow, numbered like subdomains by
/// their lower-left corner.
#[derive(Debug, Clone)]
pub struct BrokenLayout {
    p: usize,
    q: usize,
    local: Vec<[usize; 2]>,
    local_of: Vec<Option<usize>>,
}

impl BrokenLayout {
    pub fn new(p: usize, q: usize) -> Result<Self> {
        if p < 2 {
            return Err(LfaError::InvalidParameter(format!("subdomain size p = {p} must be at least 2")));
        }
        if q < 1 {
            return Err(LfaError::InvalidParameter("macro-cell needs at least one subdomain".into()));
        }
        let mut local = Vec::new();
        let mut local_of = vec![None; (p + 1) * (p + 1)];
        for l in 0..=p {
            for k in 0..=p {
                let corner = (k == 0 || k == p) && (l == 0 || l == p);
                if !corner {
                    local_of[l * (p + 1) + k] = Some(local.len());
                    local.push([k, l]);
                }
            }
        }
        Ok(Self { p, q, local, local_of })
    }

    /// The two-level map: a single subdomain per cell.
    pub fn two_level(p: usize) -> Result<Self> {
        Self::new(p, 1)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn period(&self) -> usize {
        self.p * self.q
    }

    pub fn n_fine(&self) -> usize {
        self.period() * self.period()
    }

    pub fn n_subdomains(&self) -> usize {
        self.q * self.q
    }

    /// `r` dofs per subdomain, `(p+1)² - 4`.
    pub fn n_rs(&self) -> usize {
        self.local.len()
    }

    pub fn n_r(&self) -> usize {
        self.n_rs() * self.n_subdomains()
    }

    pub fn n_pi(&self) -> usize {
        self.n_subdomains()
    }

    pub fn n_broken(&self) -> usize {
        self.n_r() + self.n_pi()
    }

    pub fn local_coords(&self, j: usize) -> [usize; 2] {
        self.local[j]
    }

    pub fn local_index(&self, k: usize, l: usize) -> Option<usize> {
        self.local_of[l * (self.p + 1) + k]
    }

    pub fn local_kind(&self, j: usize) -> DofKind {
        let [k, l] = self.local[j];
        if k == 0 || k == self.p || l == 0 || l == self.p {
            DofKind::Edge
        } else {
            DofKind::Interior
        }
    }

    pub fn kind(&self, b: usize) -> DofKind {
        if b >= self.n_r() {
            DofKind::Corner
        } else {
            self.local_kind(b % self.n_rs())
        }
    }

    pub fn subdomain_xy(&self, s: usize) -> [usize; 2] {
        [s % self.q, s / self.q]
    }

    pub fn r_index(&self, s: usize, j: usize) -> usize {
        s * self.n_rs() + j
    }

    /// Primal dof at corner `c` (see [`CORNERS`]) of subdomain `s`.
    pub fn corner_pi(&self, s: usize, c: usize) -> usize {
        let [sx, sy] = self.subdomain_xy(s);
        let x = (sx + CORNERS[c][0] as usize) % self.q;
        let y = (sy + CORNERS[c][1] as usize) % self.q;
        self.n_r() + y * self.q + x
    }

    /// Position of broken dof `b` in fine grid units. Right and top edge
    /// dofs of the last subdomain row/column sit at coordinate `P`.
    pub fn position(&self, b: usize) -> [i64; 2] {
        let p = self.p as i64;
        if b >= self.n_r() {
            let s = b - self.n_r();
            let [sx, sy] = self.subdomain_xy(s);
            [sx as i64 * p, sy as i64 * p]
        } else {
            let s = b / self.n_rs();
            let [sx, sy] = self.subdomain_xy(s);
            let [k, l] = self.local[b % self.n_rs()];
            [sx as i64 * p + k as i64, sy as i64 * p + l as i64]
        }
    }

    /// Fine dof index of the periodic image of a position.
    pub fn fine_index(&self, pos: [i64; 2]) -> usize {
        let pp = self.period() as i64;
        (pos[1].rem_euclid(pp) * pp + pos[0].rem_euclid(pp)) as usize
    }

    /// The duplicate of an edge dof held by the neighbouring subdomain.
    pub fn partner(&self, b: usize) -> Option<usize> {
        if b >= self.n_r() {
            return None;
        }
        let (s, j) = (b / self.n_rs(), b % self.n_rs());
        let [k, l] = self.local[j];
        let [sx, sy] = self.subdomain_xy(s);
        let (p, q) = (self.p, self.q);
        let (nx, ny, nk, nl) = if k == 0 && l != 0 && l != p {
            ((sx + q - 1) % q, sy, p, l)
        } else if k == p && l != 0 && l != p {
            ((sx + 1) % q, sy, 0, l)
        } else if l == 0 && k != 0 && k != p {
            (sx, (sy + q - 1) % q, k, p)
        } else if l == p && k != 0 && k != p {
            (sx, (sy + 1) % q, k, 0)
        } else {
            return None;
        };
        let jj = self.local_index(nk, nl).expect("edge partner is an r dof");
        Some(self.r_index(ny * q + nx, jj))
    }
}

/// Sparse real matrix stored by rows.
#[derive(Debug, Clone)]
pub struct SparseRows {
    pub ncols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn to_dense(&self) -> ComplexMatrix {
        let mut m = Mat::zeros(self.nrows(), self.ncols);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                m[(i, j)] += cr(w);
            }
        }
        m
    }

    /// `self · x` for a dense `x`.
    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(x.nrows(), self.ncols);
        let mut out = Mat::zeros(self.nrows(), x.ncols());
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                for c in 0..x.ncols() {
                    out[(i, c)] += x[(j, c)] * w;
                }
            }
        }
        out
    }
}

/// Weighted injection `R̃₁`: broken dof ← fine dof at the same node, with
/// weight ½ on duplicated edge dofs.
pub fn injection_r1(layout: &BrokenLayout) -> SparseRows {
    let rows = (0..layout.n_broken())
        .map(|b| {
            let w = if layout.kind(b) == DofKind::Edge { 0.5 } else { 1.0 };
            vec![(layout.fine_index(layout.position(b)), w)]
        })
        .collect();
    SparseRows { ncols: layout.n_fine(), rows }
}

/// Unweighted injection `R̃₀`; `R̃₀^H Ẫ R̃₀ = Ã`.
pub fn injection_r0(layout: &BrokenLayout) -> SparseRows {
    let rows = (0..layout.n_broken())
        .map(|b| vec![(layout.fine_index(layout.position(b)), 1.0)])
        .collect();
    SparseRows { ncols: layout.n_fine(), rows }
}

/// `J̃_D^T`: on each edge dof, half the difference to its duplicate.
pub fn jump_transpose(layout: &BrokenLayout) -> SparseRows {
    let rows = (0..layout.n_broken())
        .map(|b| match layout.partner(b) {
            Some(o) => vec![(b, 0.5), (o, -0.5)],
            None => Vec::new(),
        })
        .collect();
    SparseRows { ncols: layout.n_broken(), rows }
}

/// `(p+1)²` Neumann matrix of one subdomain, assembled from the element
/// split of `s`. Nodes are numbered `l*(p+1) + k`.
pub fn subdomain_matrix(s: &Stencil9, p: usize) -> Result<Mat<f64>> {
    if p < 1 {
        return Err(LfaError::InvalidParameter("subdomain size must be positive".into()));
    }
    let e = s.element_matrix()?;
    let n1 = p + 1;
    let mut m = Mat::zeros(n1 * n1, n1 * n1);
    for ey in 0..p {
        for ex in 0..p {
            let node = |c: usize| (ey + CORNERS[c][1] as usize) * n1 + ex + CORNERS[c][0] as usize;
            for a in 0..4 {
                for b in 0..4 {
                    m[(node(a), node(b))] += e[a][b];
                }
            }
        }
    }
    Ok(m)
}

/// Coefficients of the coarse stencil obtained by eliminating the `r` dofs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchurStencilCoeffs {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub center: f64,
    /// Local 4×4 Schur complement of one subdomain onto its corners.
    pub corner_matrix: [[f64; 4]; 4],
    pub stencil: Stencil9,
}

/// Per-subdomain data that does not depend on the frequency.
#[derive(Debug, Clone)]
pub struct Subassembly {
    stencil: Stencil9,
    layout: BrokenLayout,
    neumann: Mat<f64>,
    r_nodes: Vec<usize>,
    corner_nodes: [usize; 4],
    interior: Vec<usize>,
    edges: Vec<usize>,
}

impl Subassembly {
    pub fn new(stencil: &Stencil9, p: usize, q: usize) -> Result<Self> {
        let layout = BrokenLayout::new(p, q)?;
        let neumann = subdomain_matrix(stencil, p)?;
        let n1 = p + 1;
        let r_nodes = (0..layout.n_rs())
            .map(|j| {
                let [k, l] = layout.local_coords(j);
                l * n1 + k
            })
            .collect();
        let corner_nodes = [0, 1, 2, 3].map(|c| {
            CORNERS[c][1] as usize * p * n1 + CORNERS[c][0] as usize * p
        });
        let interior = (0..layout.n_rs()).filter(|&j| layout.local_kind(j) == DofKind::Interior).collect();
        let edges = (0..layout.n_rs()).filter(|&j| layout.local_kind(j) == DofKind::Edge).collect();
        Ok(Self { stencil: *stencil, layout, neumann, r_nodes, corner_nodes, interior, edges })
    }

    pub fn layout(&self) -> &BrokenLayout {
        &self.layout
    }

    pub fn stencil(&self) -> &Stencil9 {
        &self.stencil
    }

    pub fn neumann(&self) -> &Mat<f64> {
        &self.neumann
    }

    /// Local `r` indices of interior dofs.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Local `r` indices of edge dofs.
    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    /// All broken blocks at frequency `θ`.
    pub fn at(&self, theta: Frequency) -> Result<BrokenSymbol> {
        let p = self.layout.p();
        let n1 = p + 1;
        let period = self.layout.period() as f64;
        let phase = |a: usize, b: usize| {
            let (ka, la) = ((a % n1) as f64, (a / n1) as f64);
            let (kb, lb) = ((b % n1) as f64, (b / n1) as f64);
            cis((theta.t1 * (kb - ka) + theta.t2 * (lb - la)) / period)
        };
        let entry = |a: usize, b: usize| {
            let v = self.neumann[(a, b)];
            if v == 0.0 { c64::new(0.0, 0.0) } else { phase(a, b) * v }
        };
        let nrs = self.layout.n_rs();
        let rr = Mat::from_fn(nrs, nrs, |i, j| entry(self.r_nodes[i], self.r_nodes[j]));
        let r_corner = Mat::from_fn(nrs, 4, |i, c| entry(self.r_nodes[i], self.corner_nodes[c]));
        let corner_r = Mat::from_fn(4, nrs, |c, j| entry(self.corner_nodes[c], self.r_nodes[j]));
        let cc = Mat::from_fn(4, 4, |a, b| entry(self.corner_nodes[a], self.corner_nodes[b]));
        let npi = self.layout.n_pi();
        let nr = self.layout.n_r();
        let mut pi_pi = Mat::zeros(npi, npi);
        for s in 0..self.layout.n_subdomains() {
            for a in 0..4 {
                for b in 0..4 {
                    let (i, j) = (self.layout.corner_pi(s, a) - nr, self.layout.corner_pi(s, b) - nr);
                    pi_pi[(i, j)] += cc[(a, b)];
                }
            }
        }
        let rr_lu = Lu::new(&rr)?;
        Ok(BrokenSymbol {
            theta,
            layout: self.layout.clone(),
            interior: self.interior.clone(),
            edges: self.edges.clone(),
            rr,
            rr_lu,
            r_corner,
            corner_r,
            pi_pi,
        })
    }

    /// Schur complement stencil on the coarse grid of subdomain corners.
    pub fn schur_stencil(&self) -> Result<SchurStencilCoeffs> {
        let nrs = self.layout.n_rs();
        let n = &self.neumann;
        let rr = Mat::from_fn(nrs, nrs, |i, j| cr(n[(self.r_nodes[i], self.r_nodes[j])]));
        let rc = Mat::from_fn(nrs, 4, |i, c| cr(n[(self.r_nodes[i], self.corner_nodes[c])]));
        let x = Lu::new(&rr)?.solve(&rc);
        let mut s0 = [[0.0; 4]; 4];
        let mut local = [[0.0; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                let mut v = 0.0;
                for i in 0..nrs {
                    v += rc[(i, a)].re * x[(i, b)].re;
                }
                s0[a][b] = v;
            }
        }
        // symmetrise against rounding
        for a in 0..4 {
            for b in 0..4 {
                let v = 0.5 * (s0[a][b] + s0[b][a]);
                local[a][b] = n[(self.corner_nodes[a], self.corner_nodes[b])] - v;
            }
        }
        let stencil = Stencil9::from_corner_matrix(&local)?;
        Ok(SchurStencilCoeffs {
            s1: s0[0][0],
            s2: s0[0][1],
            s3: s0[0][3],
            center: stencil.center(),
            corner_matrix: local,
            stencil,
        })
    }
}

/// Schur complement stencil of `s` for subdomains of size `p`.
pub fn schur_stencil(s: &Stencil9, p: usize) -> Result<SchurStencilCoeffs> {
    Subassembly::new(s, p, 1)?.schur_stencil()
}

/// Broken operator `Ẫ(θ)` on one macro-cell, kept in block form.
///
/// All subdomains share the same `r` block, so `Ã_rr = I ⊗ rr`.
pub struct BrokenSymbol {
    pub theta: Frequency,
    pub layout: BrokenLayout,
    interior: Vec<usize>,
    edges: Vec<usize>,
    /// `r` block of a single subdomain.
    pub rr: ComplexMatrix,
    rr_lu: Lu,
    /// Coupling of one subdomain's `r` dofs to its four corners.
    pub r_corner: ComplexMatrix,
    pub corner_r: ComplexMatrix,
    /// Assembled primal block.
    pub pi_pi: ComplexMatrix,
}

impl BrokenSymbol {
    /// `rr⁻¹ x` for one subdomain block.
    pub fn rr_solve(&self, x: &ComplexMatrix) -> ComplexMatrix {
        self.rr_lu.solve(x)
    }

    /// Dense `Ã_Πr` (`q² × n_r`).
    pub fn pi_r(&self) -> ComplexMatrix {
        let l = &self.layout;
        let mut m = Mat::zeros(l.n_pi(), l.n_r());
        for s in 0..l.n_subdomains() {
            for c in 0..4 {
                let i = l.corner_pi(s, c) - l.n_r();
                for j in 0..l.n_rs() {
                    m[(i, l.r_index(s, j))] += self.corner_r[(c, j)];
                }
            }
        }
        m
    }

    /// Dense `Ã_rr` (block diagonal).
    pub fn rr_full(&self) -> ComplexMatrix {
        let l = &self.layout;
        let (nrs, nr) = (l.n_rs(), l.n_r());
        let mut m = Mat::zeros(nr, nr);
        for s in 0..l.n_subdomains() {
            m.as_mut().submatrix_mut(s * nrs, s * nrs, nrs, nrs).copy_from(&self.rr);
        }
        m
    }

    /// Dense `Ẫ`.
    pub fn assemble(&self) -> ComplexMatrix {
        let l = &self.layout;
        let (nr, nb) = (l.n_r(), l.n_broken());
        let mut m = Mat::zeros(nb, nb);
        m.as_mut().submatrix_mut(0, 0, nr, nr).copy_from(&self.rr_full());
        let pr = self.pi_r();
        for i in 0..l.n_pi() {
            for j in 0..nr {
                m[(nr + i, j)] = pr[(i, j)];
            }
        }
        for s in 0..l.n_subdomains() {
            for c in 0..4 {
                let i = l.corner_pi(s, c);
                for j in 0..l.n_rs() {
                    m[(l.r_index(s, j), i)] += self.r_corner[(j, c)];
                }
            }
        }
        m.as_mut().submatrix_mut(nr, nr, l.n_pi(), l.n_pi()).copy_from(&self.pi_pi);
        m
    }

    /// Schur complement `S̃_Π = Ã_ΠΠ - Ã_Πr Ã_rr⁻¹ Ã_rΠ`.
    pub fn schur(&self) -> ComplexMatrix {
        let l = &self.layout;
        let x = self.rr_solve(&self.r_corner);
        let local = &self.corner_r * &x;
        let mut s = self.pi_pi.clone();
        for sd in 0..l.n_subdomains() {
            for a in 0..4 {
                for b in 0..4 {
                    let (i, j) = (l.corner_pi(sd, a) - l.n_r(), l.corner_pi(sd, b) - l.n_r());
                    s[(i, j)] -= local[(a, b)];
                }
            }
        }
        s
    }

    /// Local harmonic extension `-A_II⁻¹ A_IΓ` of one subdomain; columns are
    /// the edge dofs followed by the four corners.
    pub fn harmonic_extension(&self) -> Result<HarmonicExtension> {
        let ni = self.interior.len();
        let ne = self.edges.len();
        let aii = Mat::from_fn(ni, ni, |i, j| self.rr[(self.interior[i], self.interior[j])]);
        let aig = Mat::from_fn(ni, ne + 4, |i, g| {
            if g < ne {
                self.rr[(self.interior[i], self.edges[g])]
            } else {
                self.r_corner[(self.interior[i], g - ne)]
            }
        });
        let block = if ni == 0 {
            Mat::zeros(0, ne + 4)
        } else {
            let x = Lu::new(&aii)?.solve(&aig);
            Mat::from_fn(ni, ne + 4, |i, j| -x[(i, j)])
        };
        Ok(HarmonicExtension {
            layout: self.layout.clone(),
            interior: self.interior.clone(),
            edges: self.edges.clone(),
            block,
        })
    }
}

/// Symbol `H̃` of the discrete harmonic extension (fine interior ← broken
/// boundary), block diagonal over subdomains.
pub struct HarmonicExtension {
    layout: BrokenLayout,
    interior: Vec<usize>,
    edges: Vec<usize>,
    pub block: ComplexMatrix,
}

impl HarmonicExtension {
    fn fine_row(&self, s: usize, i: usize) -> usize {
        self.layout.fine_index(self.layout.position(self.layout.r_index(s, self.interior[i])))
    }

    fn broken_col(&self, s: usize, g: usize) -> usize {
        let ne = self.edges.len();
        if g < ne {
            self.layout.r_index(s, self.edges[g])
        } else {
            self.layout.corner_pi(s, g - ne)
        }
    }

    /// Dense `H̃` (`n_fine × n_broken`).
    pub fn to_dense(&self) -> ComplexMatrix {
        let l = &self.layout;
        let mut h = Mat::zeros(l.n_fine(), l.n_broken());
        for s in 0..l.n_subdomains() {
            for i in 0..self.interior.len() {
                let row = self.fine_row(s, i);
                for g in 0..self.block.ncols() {
                    h[(row, self.broken_col(s, g))] += self.block[(i, g)];
                }
            }
        }
        h
    }

    /// `H̃^H x` for a dense `x` with fine-space rows.
    pub fn adjoint_apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let l = &self.layout;
        let (ni, ng, k) = (self.interior.len(), self.block.ncols(), x.ncols());
        let mut out = Mat::zeros(l.n_broken(), k);
        if ni == 0 {
            return out;
        }
        let bh = self.block.adjoint().to_owned();
        for s in 0..l.n_subdomains() {
            let xs = Mat::from_fn(ni, k, |i, c| x[(self.fine_row(s, i), c)]);
            let y = &bh * &xs;
            for g in 0..ng {
                let row = self.broken_col(s, g);
                for c in 0..k {
                    out[(row, c)] += y[(g, c)];
                }
            }
        }
        out
    }
}

/// Blocks of the two-level broken operator at one frequency.
pub struct BlockSymbol {
    pub a_rr: ComplexMatrix,
    pub a_pi_r: ComplexMatrix,
    pub a_pi_pi: ComplexMatrix,
    pub s_pi: ComplexMatrix,
}

/// Two-level broken blocks of `s` for subdomain size `p`.
pub fn broken_blocks(s: &Stencil9, p: usize, theta: Frequency) -> Result<BlockSymbol> {
    let b = Subassembly::new(s, p, 1)?.at(theta)?;
    Ok(BlockSymbol { a_rr: b.rr.clone(), a_pi_r: b.pi_r(), a_pi_pi: b.pi_pi.clone(), s_pi: b.schur() })
}

/// `K̃_LD = [[A_rr, 0], [A_Πr, S̃_Π]]` and `K̃_U = [[I, A_rr⁻¹A_Πr^H], [0, I]]`.
pub fn factor_symbols(b: &BlockSymbol) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let nr = b.a_rr.nrows();
    let np = b.a_pi_pi.nrows();
    let n = nr + np;
    let x = Lu::new(&b.a_rr)?.solve(&b.a_pi_r.adjoint().to_owned());
    let mut ld = Mat::zeros(n, n);
    let mut u = Mat::<c64>::identity(n, n);
    ld.as_mut().submatrix_mut(0, 0, nr, nr).copy_from(&b.a_rr);
    ld.as_mut().submatrix_mut(nr, 0, np, nr).copy_from(&b.a_pi_r);
    ld.as_mut().submatrix_mut(nr, nr, np, np).copy_from(&b.s_pi);
    u.as_mut().submatrix_mut(0, nr, nr, np).copy_from(&x);
    Ok((ld, u))
}
