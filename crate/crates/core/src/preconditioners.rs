//! Symbols of BDDC-preconditioned operators.
//!
//! With `Ẫ` in block form (`r` dofs first, primal dofs last) and
//! `X = Ã_rr⁻¹ Ã_rΠ`, every variant applies
//!
//! ```text
//! B = [[Ã_rr⁻¹ + X Y X^H, -X Y], [-Y X^H, Y]]
//! ```
//!
//! where `Y` stands in for the inverse of the primal Schur complement
//! (`Y = S̃⁻¹` for the exact two-level method, the coarse BDDC inverse for
//! three levels, and the coarse multiplicative blends otherwise).
//! The preconditioned operator is `G̃ = R̃^H B R̃ Ã`.
//!
//! Two evaluation routes are provided. [`SymbolContext::symbol`] forms
//! `G̃` explicitly. [`SymbolContext::spectra`] uses `Ã = U L U^H` with `U`
//! unitary to work with `M = W^H B W`, `W = R̃ U L^{1/2}`, which is similar
//! to `G̃`, Hermitian whenever `Y` is, and cheap to form because `Ã_rr` is
//! block diagonal.

use std::collections::HashMap;
use std::sync::OnceLock;

use faer::linalg::matmul::triangular::{matmul as tri_matmul, BlockStructure};
use faer::{Accum, Mat, Par};
use serde::{Deserialize, Serialize};

use crate::error::{LfaError, Result};
use crate::linalg::{
    c64, cis, cr, eig, eig_hermitian, eigh, identity, inverse, pinv_hermitian, Cholesky, ComplexMatrix, Spectrum,
};
use crate::stencil::{fine_symbol, Frequency, HarmonicGrid, Stencil9};
use crate::subassembly::{
    injection_r1, jump_transpose, BrokenSymbol, SchurStencilCoeffs, SparseRows, Subassembly,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FineVariant {
    /// `R₁`: weighted injection.
    Lumped,
    /// `R₂ = R₁ - J_D^T H^T`.
    Dirichlet,
}

impl FineVariant {
    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            1 => Ok(Self::Lumped),
            2 => Ok(Self::Dirichlet),
            _ => Err(LfaError::InvalidParameter(format!("fine variant i = {i} must be 1 or 2"))),
        }
    }

    pub fn index(&self) -> u8 {
        match self {
            Self::Lumped => 1,
            Self::Dirichlet => 2,
        }
    }
}

/// Multiplicative smoothing wrapped around the BDDC operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Multiplicative {
    None,
    /// `G + ω D⁻¹A(I - G)`.
    Fine { omega: f64 },
    /// Coarse block `Q + ω D_s⁻¹S(I - Q)` with `Q = M_s⁻¹S`.
    Coarse { omega: f64 },
    /// Coarse block `I - (I - ω₁D_s⁻¹S)(I - Q)(I - ω₂D_s⁻¹S)`.
    SymCoarse { omega1: f64, omega2: f64 },
    /// Coarse wrap with `ω₁`, then fine wrap with `ω₂`.
    FineCoarse { omega1: f64, omega2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MultKind {
    None,
    F,
    C,
    SC,
    FC,
}

impl std::str::FromStr for MultKind {
    type Err = LfaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "f" => Ok(Self::F),
            "c" => Ok(Self::C),
            "sc" => Ok(Self::SC),
            "fc" => Ok(Self::FC),
            _ => Err(LfaError::InvalidParameter(format!(
                "unknown multiplicative mode '{s}' (expected none, f, c, sc, fc)"
            ))),
        }
    }
}

impl std::fmt::Display for MultKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::None => "none",
            Self::F => "f",
            Self::C => "c",
            Self::SC => "sc",
            Self::FC => "fc",
        };
        f.write_str(s)
    }
}

impl Multiplicative {
    pub fn kind(&self) -> MultKind {
        match self {
            Self::None => MultKind::None,
            Self::Fine { .. } => MultKind::F,
            Self::Coarse { .. } => MultKind::C,
            Self::SymCoarse { .. } => MultKind::SC,
            Self::FineCoarse { .. } => MultKind::FC,
        }
    }

    /// Builds a wrap of the given kind; `w1` is the single or first weight.
    pub fn with_weights(kind: MultKind, w1: f64, w2: f64) -> Self {
        match kind {
            MultKind::None => Self::None,
            MultKind::F => Self::Fine { omega: w1 },
            MultKind::C => Self::Coarse { omega: w1 },
            MultKind::SC => Self::SymCoarse { omega1: w1, omega2: w2 },
            MultKind::FC => Self::FineCoarse { omega1: w1, omega2: w2 },
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        match *self {
            Self::None => vec![],
            Self::Fine { omega } | Self::Coarse { omega } => vec![omega],
            Self::SymCoarse { omega1, omega2 } | Self::FineCoarse { omega1, omega2 } => {
                vec![omega1, omega2]
            }
        }
    }

    fn touches_coarse(&self) -> bool {
        matches!(self, Self::Coarse { .. } | Self::SymCoarse { .. } | Self::FineCoarse { .. })
    }

    /// Whether the spectrum is known to be real.
    pub fn real_spectrum(&self) -> bool {
        matches!(self, Self::None | Self::Fine { .. })
    }
}

/// Which preconditioned operator to analyse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreconditionerSpec {
    pub fine: FineVariant,
    /// `0`: exact coarse solve (two levels); `1`, `2`: coarse BDDC with the
    /// lumped or Dirichlet variant (three levels).
    pub coarse: u8,
    pub mult: Multiplicative,
}

impl PreconditionerSpec {
    pub fn new(i: u8, j: u8, mult: Multiplicative) -> Result<Self> {
        let fine = FineVariant::from_index(i)?;
        if j > 2 {
            return Err(LfaError::InvalidParameter(format!("coarse variant j = {j} must be 0, 1 or 2")));
        }
        if j == 0 && mult.touches_coarse() {
            return Err(LfaError::InvalidParameter(
                "coarse multiplicative modes need an inexact coarse solve (j = 1 or 2)".into(),
            ));
        }
        for w in mult.weights() {
            if !(w.is_finite() && w > 0.0) {
                return Err(LfaError::InvalidParameter(format!("weight {w} must be positive and finite")));
            }
        }
        Ok(Self { fine, coarse: j, mult })
    }

    pub fn two_level(i: u8) -> Result<Self> {
        Self::new(i, 0, Multiplicative::None)
    }

    pub fn i(&self) -> u8 {
        self.fine.index()
    }

    pub fn j(&self) -> u8 {
        self.coarse
    }

    pub fn levels(&self) -> usize {
        if self.coarse == 0 { 2 } else { 3 }
    }

    pub fn with_mult(&self, mult: Multiplicative) -> Result<Self> {
        Self::new(self.i(), self.j(), mult)
    }

    pub fn label(&self) -> String {
        let base = format!("G{}{}", self.i(), self.j());
        match self.mult.kind() {
            MultKind::None => base,
            k => format!("{base}^{k}"),
        }
    }
}

/// A preconditioned operator symbol at one frequency.
#[derive(Debug, Clone)]
pub struct OperatorSymbol {
    pub theta: Frequency,
    pub g: ComplexMatrix,
    pub spec: PreconditionerSpec,
}

enum CoarseSolve {
    Exact,
    Bddc { sub: Subassembly, variant: FineVariant, r1: SparseRows, jt: SparseRows },
}

/// Eigenvalues of a singular primal Schur complement below this multiple
/// of its diagonal are treated as zero.
const PINV_CUTOFF: f64 = 1e-10;

/// Frequency-independent data for one (stencil, p, spec) combination.
pub struct SymbolContext {
    stencil: Stencil9,
    p: usize,
    spec: PreconditionerSpec,
    fine: Subassembly,
    r1: SparseRows,
    jt: SparseRows,
    coarse: CoarseSolve,
    schur: SchurStencilCoeffs,
    unitary: OnceLock<ComplexMatrix>,
}

/// Frequency-dependent pieces of `M = M₁ + V^H Y V`.
pub struct ReducedParts {
    pub lam: Vec<f64>,
    pub m1: ComplexMatrix,
    pub v: ComplexMatrix,
    pub s: ComplexMatrix,
    pub minv: Option<ComplexMatrix>,
}

impl SymbolContext {
    pub fn new(stencil: &Stencil9, p: usize, spec: &PreconditionerSpec) -> Result<Self> {
        let q = if spec.coarse == 0 { 1 } else { p };
        Self::build(stencil, p, q, spec)
    }

    /// Three-level layout with the coarse Schur complement solved exactly.
    /// Its spectrum is the union of two-level spectra over the aliased
    /// frequencies.
    pub fn three_level_exact(stencil: &Stencil9, p: usize, fine: FineVariant) -> Result<Self> {
        let spec = PreconditionerSpec { fine, coarse: 0, mult: Multiplicative::None };
        Self::build(stencil, p, p, &spec)
    }

    fn build(stencil: &Stencil9, p: usize, q: usize, spec: &PreconditionerSpec) -> Result<Self> {
        if !stencil.is_symmetric() {
            return Err(LfaError::InvalidParameter("stencil must be symmetric".into()));
        }
        if stencil.center() <= 0.0 {
            return Err(LfaError::InvalidParameter("stencil center must be positive".into()));
        }
        let fine = Subassembly::new(stencil, p, q)?;
        let schur = fine.schur_stencil()?;
        let coarse = match spec.coarse {
            0 => CoarseSolve::Exact,
            j => {
                let sub = Subassembly::new(&schur.stencil, p, 1)?;
                let r1 = injection_r1(sub.layout());
                let jt = jump_transpose(sub.layout());
                CoarseSolve::Bddc { sub, variant: FineVariant::from_index(j)?, r1, jt }
            }
        };
        Ok(Self {
            stencil: *stencil,
            p,
            spec: *spec,
            r1: injection_r1(fine.layout()),
            jt: jump_transpose(fine.layout()),
            fine,
            coarse,
            schur,
            unitary: OnceLock::new(),
        })
    }

    pub fn spec(&self) -> &PreconditionerSpec {
        &self.spec
    }

    pub fn stencil(&self) -> &Stencil9 {
        &self.stencil
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn schur(&self) -> &SchurStencilCoeffs {
        &self.schur
    }

    /// Size of the symbol, `P²` with `P` the macro-cell period.
    pub fn dim(&self) -> usize {
        self.fine.layout().n_fine()
    }

    pub fn period(&self) -> usize {
        self.fine.layout().period()
    }

    /// Diagonal of the fine operator.
    pub fn d(&self) -> f64 {
        self.stencil.center()
    }

    /// Diagonal of the primal Schur complement.
    pub fn d_s(&self) -> f64 {
        self.schur.center
    }

    fn unitary(&self) -> &ComplexMatrix {
        self.unitary.get_or_init(|| {
            let pp = self.period();
            let w = 2.0 * std::f64::consts::PI / pp as f64;
            let sc = 1.0 / pp as f64;
            Mat::from_fn(pp * pp, pp * pp, |a, h| {
                let (x, y) = (a % pp, a / pp);
                let (q, r) = (h % pp, h / pp);
                cis(w * ((x * q + y * r) % pp) as f64) * sc
            })
        })
    }

    fn check_theta(theta: Frequency) -> Result<()> {
        if theta.is_zero() {
            return Err(LfaError::InvalidParameter(
                "the zero frequency is singular and is never sampled".into(),
            ));
        }
        Ok(())
    }

    /// `M_s⁻¹` on the primal block, or `None` for an exact coarse solve.
    pub fn coarse_inverse(&self, theta: Frequency) -> Result<Option<ComplexMatrix>> {
        self.coarse_inverse_impl(theta, false)
    }

    fn coarse_inverse_impl(&self, theta: Frequency, singular: bool) -> Result<Option<ComplexMatrix>> {
        match &self.coarse {
            CoarseSolve::Exact => Ok(None),
            CoarseSolve::Bddc { sub, variant, r1, jt } => {
                let bs = sub.at(theta)?;
                let r = restriction_dense(&bs, *variant, r1, jt)?;
                let s = bs.schur();
                let sinv = if singular { pinv_hermitian(&s, PINV_CUTOFF * self.d_s())? } else { inverse(&s)? };
                let b = broken_inverse(&bs, &sinv);
                Ok(Some(&(&r.adjoint() * &b) * &r))
            }
        }
    }

    /// Primal block `Y` for a given wrap.
    pub fn primal_block(
        &self,
        s: &ComplexMatrix,
        minv: Option<&ComplexMatrix>,
        mult: &Multiplicative,
    ) -> Result<ComplexMatrix> {
        let minv = match minv {
            None => return inverse(s),
            Some(m) => m,
        };
        Ok(self.wrap_primal(s, minv, mult))
    }

    fn wrap_primal(&self, s: &ComplexMatrix, minv: &ComplexMatrix, mult: &Multiplicative) -> ComplexMatrix {
        let ds = self.d_s();
        let n = s.nrows();
        let blend = |w: f64| -> ComplexMatrix {
            let sm = s * minv;
            let mut y = minv.clone();
            for j in 0..n {
                for i in 0..n {
                    let id = if i == j { 1.0 } else { 0.0 };
                    y[(i, j)] += (cr(id) - sm[(i, j)]) * (w / ds);
                }
            }
            y
        };
        match *mult {
            Multiplicative::None | Multiplicative::Fine { .. } => minv.clone(),
            Multiplicative::Coarse { omega } => blend(omega),
            Multiplicative::FineCoarse { omega1, .. } => blend(omega1),
            Multiplicative::SymCoarse { omega1, omega2 } => {
                let yc = blend(omega1);
                let ys = &yc * s;
                let mut y = yc;
                for j in 0..n {
                    for i in 0..n {
                        let id = if i == j { 1.0 } else { 0.0 };
                        y[(i, j)] += (cr(id) - ys[(i, j)]) * (omega2 / ds);
                    }
                }
                y
            }
        }
    }

    /// Explicit `G̃(θ)` for the context's own spec.
    pub fn symbol(&self, theta: Frequency) -> Result<OperatorSymbol> {
        self.symbol_with(theta, &self.spec.mult)
    }

    /// Explicit `G̃(θ)` for another wrap of the same `(i, j)`.
    pub fn symbol_with(&self, theta: Frequency, mult: &Multiplicative) -> Result<OperatorSymbol> {
        Self::check_theta(theta)?;
        self.explicit(theta, mult, false)
    }

    /// `G̃(0)` with Moore-Penrose inverses in place of the singular primal
    /// Schur complements. The constant vector spans its kernel; the other
    /// eigenvalues belong to the zero-mean modes of a periodic problem.
    pub fn symbol_at_zero(&self, mult: &Multiplicative) -> Result<OperatorSymbol> {
        self.explicit(Frequency { t1: 0.0, t2: 0.0 }, mult, true)
    }

    fn explicit(&self, theta: Frequency, mult: &Multiplicative, singular: bool) -> Result<OperatorSymbol> {
        let bs = self.fine.at(theta)?;
        let s = bs.schur();
        let minv = self.coarse_inverse_impl(theta, singular)?;
        let y = match &minv {
            Some(m) => self.wrap_primal(&s, m, mult),
            None if singular => pinv_hermitian(&s, PINV_CUTOFF * self.d_s())?,
            None => inverse(&s)?,
        };
        let r = restriction_dense(&bs, self.spec.fine, &self.r1, &self.jt)?;
        let b = broken_inverse(&bs, &y);
        let a = fine_symbol(&self.stencil, self.period(), theta)?;
        let mut g = &(&(&r.adjoint() * &b) * &r) * &a;
        match *mult {
            Multiplicative::Fine { omega } => g = multiplicative_fine(&g, &a, self.d(), omega),
            Multiplicative::FineCoarse { omega2, .. } => g = multiplicative_fine(&g, &a, self.d(), omega2),
            _ => {}
        }
        let spec = PreconditionerSpec { mult: *mult, ..self.spec };
        Ok(OperatorSymbol { theta, g, spec })
    }

    /// Frequency-dependent pieces of the reduced operator.
    pub fn reduced_parts(&self, theta: Frequency) -> Result<ReducedParts> {
        Self::check_theta(theta)?;
        let layout = self.fine.layout();
        let n = layout.n_fine();
        let (nrs, nr, npi) = (layout.n_rs(), layout.n_r(), layout.n_pi());
        let lam = HarmonicGrid::new(theta, self.period())?.symbols(&self.stencil);
        if lam.iter().any(|&l| !(l > 0.0)) {
            return Err(LfaError::Singular { pivot: lam.iter().cloned().fold(f64::INFINITY, f64::min) });
        }
        let bs = self.fine.at(theta)?;
        let u = self.unitary();

        // W = R̃ U L^{1/2}
        let mut w = Mat::<c64>::zeros(layout.n_broken(), n);
        for (b, row) in self.r1.rows.iter().enumerate() {
            for &(f, wt) in row {
                for c in 0..n {
                    w[(b, c)] += u[(f, c)] * wt;
                }
            }
        }
        if self.spec.fine == FineVariant::Dirichlet {
            let hu = bs.harmonic_extension()?.adjoint_apply(u);
            for (b, row) in self.jt.rows.iter().enumerate() {
                for &(o, wt) in row {
                    for c in 0..n {
                        w[(b, c)] -= hu[(o, c)] * wt;
                    }
                }
            }
        }
        for c in 0..n {
            let sq = lam[c].sqrt();
            for b in 0..w.nrows() {
                w[(b, c)] *= sq;
            }
        }

        let chol = Cholesky::new(&bs.rr)?;
        let mut m1 = Mat::<c64>::zeros(n, n);
        let mut v = Mat::<c64>::zeros(npi, n);
        for s in 0..layout.n_subdomains() {
            let mut k = w.as_ref().submatrix(s * nrs, 0, nrs, n).to_owned();
            chol.solve_lower_in_place(&mut k);
            tri_matmul(
                m1.as_mut(),
                BlockStructure::TriangularLower,
                Accum::Add,
                k.adjoint(),
                BlockStructure::Rectangular,
                k.as_ref(),
                BlockStructure::Rectangular,
                cr(1.0),
                Par::Seq,
            );
            chol.solve_lower_adjoint_in_place(&mut k);
            let t = &bs.corner_r * &k;
            for c in 0..4 {
                let row = layout.corner_pi(s, c) - nr;
                for col in 0..n {
                    v[(row, col)] += t[(c, col)];
                }
            }
        }
        hermitian_fill(&mut m1);
        for i in 0..npi {
            for c in 0..n {
                v[(i, c)] -= w[(nr + i, c)];
            }
        }
        let s = bs.schur();
        let minv = self.coarse_inverse(theta)?;
        Ok(ReducedParts { lam, m1, v, s, minv })
    }

    /// `M = M₁ + V^H Y V` for a wrap, before any fine smoothing.
    pub fn reduced_operator(&self, parts: &ReducedParts, mult: &Multiplicative) -> Result<ComplexMatrix> {
        let y = self.primal_block(&parts.s, parts.minv.as_ref(), mult)?;
        let yv = &y * &parts.v;
        let mut m = parts.m1.clone();
        faer::linalg::matmul::matmul(m.as_mut(), Accum::Add, parts.v.adjoint(), yv.as_ref(), cr(1.0), Par::Seq);
        Ok(m)
    }

    /// Spectrum of `G̃(θ)` for the context's own spec.
    pub fn spectrum(&self, theta: Frequency) -> Result<Spectrum> {
        Ok(self.spectra(theta, &[self.spec.mult])?.remove(0))
    }

    /// Spectra of `G̃(θ)` for several wraps of the same `(i, j)`, sharing
    /// all weight-independent work.
    pub fn spectra(&self, theta: Frequency, mults: &[Multiplicative]) -> Result<Vec<Spectrum>> {
        let parts = self.reduced_parts(theta)?;
        let d = self.d();
        let mut plain: Option<ComplexMatrix> = None;
        let mut fine_split: Option<FineSplit> = None;
        let mut coarse_cache: HashMap<u64, ComplexMatrix> = HashMap::new();
        let mut out = Vec::with_capacity(mults.len());
        for mult in mults {
            let spec = match mult {
                Multiplicative::None | Multiplicative::Fine { .. } => {
                    if plain.is_none() {
                        plain = Some(self.reduced_operator(&parts, &Multiplicative::None)?);
                    }
                    let m = plain.as_ref().unwrap();
                    if let Multiplicative::Fine { omega } = *mult {
                        if fine_split.is_none() {
                            fine_split = Some(FineSplit::new(m, &parts.lam)?);
                        }
                        fine_split.as_ref().unwrap().spectrum(m, &parts.lam, omega / d)?
                    } else {
                        Spectrum::from_real(&eig_hermitian(m)?)
                    }
                }
                Multiplicative::Coarse { .. } | Multiplicative::SymCoarse { .. } => {
                    eig(&self.reduced_operator(&parts, mult)?)?
                }
                Multiplicative::FineCoarse { omega1, omega2 } => {
                    let key = omega1.to_bits();
                    if !coarse_cache.contains_key(&key) {
                        let m = self.reduced_operator(&parts, mult)?;
                        coarse_cache.insert(key, m);
                    }
                    let m = &coarse_cache[&key];
                    eig(&fine_wrap_reduced(m, &parts.lam, *omega2 / d))?
                }
            };
            out.push(spec);
        }
        Ok(out)
    }
}

/// `(I - c L)(M - I) + I`, the fine wrap in the reduced basis.
fn fine_wrap_reduced(m: &ComplexMatrix, lam: &[f64], c: f64) -> ComplexMatrix {
    let n = m.nrows();
    Mat::from_fn(n, n, |i, j| {
        let e = m[(i, j)] - if i == j { cr(1.0) } else { cr(0.0) };
        e * (1.0 - c * lam[i]) + if i == j { cr(1.0) } else { cr(0.0) }
    })
}

/// Hermitian route for fine-wrapped spectra: with `M - I = Q Λ Q^H ⪰ 0`,
/// `eig((I - cL)(M - I)) = eig(Λ - c Λ^{1/2} Q^H L Q Λ^{1/2})`.
struct FineSplit {
    lam: Vec<f64>,
    n: ComplexMatrix,
    ok: bool,
}

impl FineSplit {
    fn new(m: &ComplexMatrix, l: &[f64]) -> Result<Self> {
        let dim = m.nrows();
        let e = Mat::from_fn(dim, dim, |i, j| m[(i, j)] - if i == j { cr(1.0) } else { cr(0.0) });
        let (vals, q) = eigh(&e)?;
        let top = vals.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let ok = vals.iter().all(|&v| v >= -1e-9 * top);
        let sq: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
        let lq = Mat::from_fn(dim, dim, |i, j| q[(i, j)] * l[i]);
        let mut n = &q.adjoint() * &lq;
        for j in 0..dim {
            for i in 0..dim {
                n[(i, j)] *= sq[i] * sq[j];
            }
        }
        Ok(Self { lam: vals.iter().map(|v| v.max(0.0)).collect(), n, ok })
    }

    fn spectrum(&self, m: &ComplexMatrix, l: &[f64], c: f64) -> Result<Spectrum> {
        if !self.ok {
            return eig(&fine_wrap_reduced(m, l, c));
        }
        let dim = self.lam.len();
        let k = Mat::from_fn(dim, dim, |i, j| {
            let base = if i == j { cr(self.lam[i]) } else { cr(0.0) };
            base - self.n[(i, j)] * c
        });
        Ok(Spectrum::from_real(&eig_hermitian(&k)?.iter().map(|v| v + 1.0).collect::<Vec<_>>()))
    }
}

fn hermitian_fill(m: &mut ComplexMatrix) {
    let n = m.nrows();
    for j in 0..n {
        m[(j, j)] = cr(m[(j, j)].re);
        for i in 0..j {
            m[(i, j)] = m[(j, i)].conj();
        }
    }
}

/// Dense `R̃` (`n_broken × n_fine`) for the lumped or Dirichlet variant.
pub fn restriction_dense(
    bs: &BrokenSymbol,
    variant: FineVariant,
    r1: &SparseRows,
    jt: &SparseRows,
) -> Result<ComplexMatrix> {
    let mut r = r1.to_dense();
    if variant == FineVariant::Dirichlet {
        let h = bs.harmonic_extension()?.to_dense();
        let jh = jt.apply(&h.adjoint().to_owned());
        r -= &jh;
    }
    Ok(r)
}

/// Dense `B = K̃_U⁻¹ diag(I, Y S̃) K̃_LD⁻¹` with the primal block `Y`.
pub fn broken_inverse(bs: &BrokenSymbol, y: &ComplexMatrix) -> ComplexMatrix {
    let l = &bs.layout;
    let (nr, np) = (l.n_r(), l.n_pi());
    let pr = bs.pi_r();
    let nrs = l.n_rs();
    // X = Ã_rr⁻¹ Ã_rΠ, block by block
    let arp = pr.adjoint().to_owned();
    let mut x = Mat::<c64>::zeros(nr, np);
    let rr_inv = bs.rr_solve(&identity(nrs));
    for s in 0..l.n_subdomains() {
        let blk = arp.as_ref().submatrix(s * nrs, 0, nrs, np).to_owned();
        let xs = &rr_inv * &blk;
        x.as_mut().submatrix_mut(s * nrs, 0, nrs, np).copy_from(&xs);
    }
    let xy = &x * y;
    let mut b = Mat::<c64>::zeros(nr + np, nr + np);
    for s in 0..l.n_subdomains() {
        b.as_mut().submatrix_mut(s * nrs, s * nrs, nrs, nrs).copy_from(&rr_inv);
    }
    let xyx = &xy * x.adjoint();
    for j in 0..nr {
        for i in 0..nr {
            b[(i, j)] += xyx[(i, j)];
        }
    }
    let yxh = y * x.adjoint();
    for i in 0..nr {
        for j in 0..np {
            b[(i, nr + j)] = -xy[(i, j)];
        }
    }
    for i in 0..np {
        for j in 0..nr {
            b[(nr + i, j)] = -yxh[(i, j)];
        }
        for j in 0..np {
            b[(nr + i, nr + j)] = y[(i, j)];
        }
    }
    b
}

/// `G + ω D⁻¹ A (I - G)` with `D = d·I`.
pub fn multiplicative_fine(g: &ComplexMatrix, a: &ComplexMatrix, d: f64, omega: f64) -> ComplexMatrix {
    let n = g.nrows();
    let img = Mat::from_fn(n, n, |i, j| if i == j { cr(1.0) } else { cr(0.0) } - g[(i, j)]);
    let corr = a * &img;
    Mat::from_fn(n, n, |i, j| g[(i, j)] + corr[(i, j)] * (omega / d))
}

/// Coarse multiplicative wraps of the primal preconditioned block `Q = M_s⁻¹S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoarseWrap {
    /// `Q + ω D_s⁻¹S(I - Q)`.
    Plain { omega: f64 },
    /// `I - (I - ω₁D_s⁻¹S)(I - Q)(I - ω₂D_s⁻¹S)`.
    Symmetric { omega1: f64, omega2: f64 },
}

pub fn multiplicative_coarse(q: &ComplexMatrix, s: &ComplexMatrix, d_s: f64, wrap: CoarseWrap) -> ComplexMatrix {
    let n = q.nrows();
    let id = |i: usize, j: usize| if i == j { cr(1.0) } else { cr(0.0) };
    let smooth = |w: f64| Mat::from_fn(n, n, |i, j| id(i, j) - s[(i, j)] * (w / d_s));
    let iq = Mat::from_fn(n, n, |i, j| id(i, j) - q[(i, j)]);
    let err = match wrap {
        CoarseWrap::Plain { omega } => &smooth(omega) * &iq,
        CoarseWrap::Symmetric { omega1, omega2 } => &(&smooth(omega1) * &iq) * &smooth(omega2),
    };
    Mat::from_fn(n, n, |i, j| id(i, j) - err[(i, j)])
}

/// `G^c + ω₂ D⁻¹A(I - G^c)`.
pub fn multiplicative_fine_and_coarse(gc: &ComplexMatrix, a: &ComplexMatrix, d: f64, omega2: f64) -> ComplexMatrix {
    multiplicative_fine(gc, a, d, omega2)
}

/// Two-level symbol `G̃_{i,0}` (optionally fine-wrapped).
pub fn two_level_symbol(s: &Stencil9, p: usize, theta: Frequency, spec: &PreconditionerSpec) -> Result<OperatorSymbol> {
    if spec.coarse != 0 {
        return Err(LfaError::InvalidParameter("two-level symbol needs j = 0".into()));
    }
    SymbolContext::new(s, p, spec)?.symbol(theta)
}

/// Three-level symbol `G̃_{i,j}`, `j ∈ {1, 2}`, of size `p⁴`.
pub fn three_level_symbol(s: &Stencil9, p: usize, theta: Frequency, spec: &PreconditionerSpec) -> Result<OperatorSymbol> {
    if spec.coarse == 0 {
        return Err(LfaError::InvalidParameter("three-level symbol needs j = 1 or 2".into()));
    }
    SymbolContext::new(s, p, spec)?.symbol(theta)
}

/// Symbol of `M_{s,j}⁻¹ S̃_Π` on the coarse grid (identity for `j = 0`).
pub fn coarse_preconditioner_symbol(schur: &SchurStencilCoeffs, p: usize, theta: Frequency, j: u8) -> Result<ComplexMatrix> {
    if j == 0 {
        return Ok(identity(p * p));
    }
    let spec = PreconditionerSpec::new(FineVariant::from_index(j)?.index(), 0, Multiplicative::None)?;
    Ok(SymbolContext::new(&schur.stencil, p, &spec)?.symbol(theta)?.g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::subassembly::schur_stencil;

    fn th(a: f64, b: f64) -> Frequency {
        Frequency::new(a, b).unwrap()
    }

    fn spec(i: u8, j: u8, m: Multiplicative) -> PreconditionerSpec {
        PreconditionerSpec::new(i, j, m).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(PreconditionerSpec::new(3, 0, Multiplicative::None).is_err());
        assert!(PreconditionerSpec::new(1, 3, Multiplicative::None).is_err());
        assert!(PreconditionerSpec::new(1, 0, Multiplicative::Coarse { omega: 1.0 }).is_err());
        assert!(PreconditionerSpec::new(1, 0, Multiplicative::Fine { omega: -1.0 }).is_err());
        assert!(PreconditionerSpec::new(2, 1, Multiplicative::SymCoarse { omega1: 1.0, omega2: 1.0 }).is_ok());
    }

    #[test]
    fn two_level_spectrum_bounded_below_by_one() {
        for p in [2, 3, 4] {
            for i in [1, 2] {
                let g = two_level_symbol(&Stencil9::q1(), p, th(0.7, -1.3), &spec(i, 0, Multiplicative::None)).unwrap();
                let sp = eig(&g.g).unwrap();
                let top = sp.max_modulus();
                assert!(sp.max_abs_imag() <= 1e-8 * top);
                assert!(sp.values.iter().all(|z| z.re >= 1.0 - 1e-8), "p={p} i={i}");
            }
        }
    }

    #[test]
    fn fast_path_matches_explicit_symbol() {
        let cases = [
            (2, spec(1, 0, Multiplicative::None)),
            (3, spec(2, 0, Multiplicative::None)),
            (4, spec(1, 0, Multiplicative::Fine { omega: 1.4 })),
            (3, spec(2, 0, Multiplicative::Fine { omega: 2.9 })),
            (2, spec(1, 1, Multiplicative::None)),
            (2, spec(2, 2, Multiplicative::Fine { omega: 1.1 })),
            (3, spec(1, 2, Multiplicative::Coarse { omega: 1.3 })),
            (2, spec(2, 1, Multiplicative::SymCoarse { omega1: 0.9, omega2: 1.7 })),
            (2, spec(1, 1, Multiplicative::FineCoarse { omega1: 4.0, omega2: 1.7 })),
        ];
        for (p, sp) in cases {
            let ctx = SymbolContext::new(&Stencil9::q1(), p, &sp).unwrap();
            for t in [th(0.3, 2.2), th(-3.0, -0.1)] {
                let explicit = eig(&ctx.symbol(t).unwrap().g).unwrap();
                let fast = ctx.spectrum(t).unwrap();
                let scale = explicit.max_modulus();
                let dist = explicit.matching_distance(&fast);
                assert!(dist <= 1e-9 * scale, "p={p} {} dist {dist:e}", sp.label());
            }
        }
    }

    #[test]
    fn three_level_exact_coarse_is_harmonic_union() {
        for p in [2, 3] {
            for fine in [FineVariant::Lumped, FineVariant::Dirichlet] {
                let ctx = SymbolContext::three_level_exact(&Stencil9::q1(), p, fine).unwrap();
                let two = SymbolContext::new(&Stencil9::q1(), p, &spec(fine.index(), 0, Multiplicative::None)).unwrap();
                let t = th(0.45, -1.2);
                let big = eig(&ctx.symbol(t).unwrap().g).unwrap();
                let mut union = Vec::new();
                for m in HarmonicGrid::new(t, p).unwrap().members {
                    let f = Frequency::wrapped(m[0], m[1]);
                    union.extend(two.spectrum(f).unwrap().values);
                }
                let d = big.matching_distance(&Spectrum::new(union));
                assert!(d < 1e-8, "p={p} {fine:?}: {d:e}");
            }
        }
    }

    #[test]
    fn zero_weights_reduce_to_base() {
        let ctx = SymbolContext::new(&Stencil9::q1(), 2, &spec(1, 1, Multiplicative::None)).unwrap();
        let t = th(1.0, 0.5);
        let g = ctx.symbol(t).unwrap().g;
        let a = fine_symbol(&Stencil9::q1(), 4, t).unwrap();
        assert!(max_abs_diff(&multiplicative_fine(&g, &a, 8.0 / 3.0, 0.0), &g) < 1e-15);
        let gc = ctx.symbol_with(t, &Multiplicative::Coarse { omega: 0.0 }).unwrap().g;
        assert!(max_abs_diff(&gc, &g) < 1e-12);
    }

    #[test]
    fn coarse_wrap_identities() {
        let sc = schur_stencil(&Stencil9::q1(), 3).unwrap();
        let t = th(-0.6, 2.0);
        let q = coarse_preconditioner_symbol(&sc, 3, t, 1).unwrap();
        let sp = eig(&q).unwrap();
        assert!(sp.values.iter().all(|z| z.re >= 1.0 - 1e-8 && z.im.abs() < 1e-8));
        let s = fine_symbol(&sc.stencil, 3, t).unwrap();
        let plain = multiplicative_coarse(&q, &s, sc.center, CoarseWrap::Plain { omega: 0.0 });
        assert!(max_abs_diff(&plain, &q) < 1e-12);
        assert!(max_abs_diff(&coarse_preconditioner_symbol(&sc, 3, t, 0).unwrap(), &identity(9)) == 0.0);
    }

    #[test]
    fn primal_block_matches_coarse_wraps() {
        // Y S must equal the wrapped coarse operator
        let ctx = SymbolContext::new(&Stencil9::q1(), 3, &spec(1, 2, Multiplicative::None)).unwrap();
        let t = th(0.8, -2.5);
        let bs = ctx.fine.at(t).unwrap();
        let s = bs.schur();
        let minv = ctx.coarse_inverse(t).unwrap().unwrap();
        let q = &minv * &s;
        let ds = ctx.d_s();
        let cases = [
            (Multiplicative::Coarse { omega: 1.3 }, CoarseWrap::Plain { omega: 1.3 }),
            (
                Multiplicative::SymCoarse { omega1: 0.7, omega2: 1.9 },
                CoarseWrap::Symmetric { omega1: 0.7, omega2: 1.9 },
            ),
        ];
        for (m, w) in cases {
            let y = ctx.primal_block(&s, Some(&minv), &m).unwrap();
            let want = multiplicative_coarse(&q, &s, ds, w);
            assert!(max_abs_diff(&(&y * &s), &want) < 1e-10);
        }
        // the coarse block of the three-level layout is the coarse two-level symbol
        let sc = ctx.schur().clone();
        let want = coarse_preconditioner_symbol(&sc, 3, t, 2).unwrap();
        assert!(max_abs_diff(&want, &q) < 1e-10);
    }
}
