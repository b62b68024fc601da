//! Frequency sampling, spectral aggregation, condition numbers, histograms
//! and constant fits.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LfaError, Result};
use crate::linalg::{c64, Spectrum};
use crate::preconditioners::{Multiplicative, PreconditionerSpec, SymbolContext};
use crate::stencil::{Frequency, Stencil9};

/// `2n` nodes per axis at `θ = -π + (k + ½)π/n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SamplingPlan {
    pub n: usize,
}

impl SamplingPlan {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(LfaError::InvalidParameter("sampling resolution n must be at least 1".into()));
        }
        Ok(Self { n })
    }

    pub fn nodes_per_axis(&self) -> usize {
        2 * self.n
    }

    pub fn node(&self, k: usize) -> f64 {
        -PI + (k as f64 + 0.5) * PI / self.n as f64
    }

    pub fn len(&self) -> usize {
        4 * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Frequency with index `k2 * 2n + k1`.
    pub fn frequency(&self, idx: usize) -> Frequency {
        let m = self.nodes_per_axis();
        Frequency { t1: self.node(idx % m), t2: self.node(idx / m) }
    }

    pub fn frequencies(&self) -> Vec<Frequency> {
        (0..self.len()).map(|i| self.frequency(i)).collect()
    }
}

/// A set of sample indices related by symmetries of the stencil. Spectra
/// at members equal the spectrum at `rep`, conjugated where flagged.
#[derive(Debug, Clone)]
pub struct Orbit {
    pub rep: usize,
    pub members: Vec<(usize, bool)>,
}

/// Partitions the sample grid into orbits.
///
/// `θ → -θ` conjugates the spectrum of any real operator; axis reflections
/// and the diagonal swap leave it unchanged when the stencil has the
/// matching symmetry.
pub fn frequency_orbits(plan: &SamplingPlan, stencil: &Stencil9) -> Vec<Orbit> {
    let m = plan.nodes_per_axis();
    let mut gens: Vec<Box<dyn Fn(usize, usize) -> (usize, usize)>> = Vec::new();
    let mut conj = Vec::new();
    gens.push(Box::new(move |a, b| (m - 1 - a, m - 1 - b)));
    conj.push(true);
    if stencil.has_axis_reflection() {
        gens.push(Box::new(move |a, b| (m - 1 - a, b)));
        conj.push(false);
    }
    if stencil.has_square_symmetry() {
        gens.push(Box::new(|a, b| (b, a)));
        conj.push(false);
    }
    let mut seen = vec![false; m * m];
    let mut orbits = Vec::new();
    for start in 0..m * m {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut members = vec![(start, false)];
        let mut k = 0;
        while k < members.len() {
            let (idx, flag) = members[k];
            for (g, c) in gens.iter().zip(&conj) {
                let (a, b) = g(idx % m, idx / m);
                let j = b * m + a;
                if !seen[j] {
                    seen[j] = true;
                    members.push((j, flag ^ c));
                }
            }
            k += 1;
        }
        orbits.push(Orbit { rep: start, members });
    }
    orbits
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpectrumMode {
    /// `κ = λ_max / λ_min`.
    Real,
    /// `max|λ| / min|λ|`.
    Complex,
}

impl SpectrumMode {
    pub fn for_mult(m: &Multiplicative) -> Self {
        if m.real_spectrum() { Self::Real } else { Self::Complex }
    }
}

/// Order-insensitive summary of a multiset of eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extremes {
    pub count: usize,
    pub re_min: f64,
    pub re_max: f64,
    pub abs_min: f64,
    pub abs_max: f64,
    pub max_imag: f64,
}

impl Default for Extremes {
    fn default() -> Self {
        Self {
            count: 0,
            re_min: f64::INFINITY,
            re_max: f64::NEG_INFINITY,
            abs_min: f64::INFINITY,
            abs_max: 0.0,
            max_imag: 0.0,
        }
    }
}

impl Extremes {
    pub fn of(values: &[c64]) -> Self {
        let mut e = Self::default();
        for z in values {
            e.count += 1;
            e.re_min = e.re_min.min(z.re);
            e.re_max = e.re_max.max(z.re);
            let a = z.norm();
            e.abs_min = e.abs_min.min(a);
            e.abs_max = e.abs_max.max(a);
            e.max_imag = e.max_imag.max(z.im.abs());
        }
        e
    }

    pub fn merge(&self, o: &Self) -> Self {
        Self {
            count: self.count + o.count,
            re_min: self.re_min.min(o.re_min),
            re_max: self.re_max.max(o.re_max),
            abs_min: self.abs_min.min(o.abs_min),
            abs_max: self.abs_max.max(o.abs_max),
            max_imag: self.max_imag.max(o.max_imag),
        }
    }

    fn repeated(&self, times: usize) -> Self {
        Self { count: self.count * times, ..*self }
    }
}

/// Eigenvalues at one sampled frequency.
#[derive(Debug, Clone, Serialize)]
pub struct FrequencySpectrum {
    pub theta: [f64; 2],
    pub values: Vec<[f64; 2]>,
}

/// Reality tolerance relative to the largest eigenvalue modulus.
pub const REALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub spec: PreconditionerSpec,
    pub p: usize,
    pub n: usize,
    pub mode: SpectrumMode,
    pub extremes: Extremes,
    /// `λ_max/λ_min` (real mode) or `max|λ|/min|λ|` (complex mode);
    /// infinite if the smallest real part is not positive.
    pub kappa: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectra: Option<Vec<FrequencySpectrum>>,
}

impl SpectrumReport {
    fn from_extremes(
        spec: PreconditionerSpec,
        p: usize,
        n: usize,
        ex: Extremes,
        spectra: Option<Vec<FrequencySpectrum>>,
    ) -> Result<Self> {
        let mode = SpectrumMode::for_mult(&spec.mult);
        let kappa = match mode {
            SpectrumMode::Real => {
                let tol = REALITY_TOL * ex.abs_max;
                if ex.max_imag > tol {
                    return Err(LfaError::NonRealSpectrum { max_imag: ex.max_imag, tol });
                }
                if ex.re_min > 0.0 { ex.re_max / ex.re_min } else { f64::INFINITY }
            }
            SpectrumMode::Complex => {
                if ex.abs_min > 0.0 { ex.abs_max / ex.abs_min } else { f64::INFINITY }
            }
        };
        Ok(Self { spec, p, n, mode, extremes: ex, kappa, spectra })
    }

    pub fn count(&self) -> usize {
        self.extremes.count
    }

    pub fn lambda_min(&self) -> f64 {
        self.extremes.re_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.extremes.re_max
    }

    /// All eigenvalues, when the report kept them.
    pub fn eigenvalues(&self) -> Option<Vec<c64>> {
        self.spectra.as_ref().map(|s| {
            s.iter().flat_map(|f| f.values.iter().map(|v| c64::new(v[0], v[1]))).collect()
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    /// Keep every eigenvalue in the report.
    pub keep_spectra: bool,
    /// Evaluate one frequency per symmetry orbit.
    pub use_symmetry: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { keep_spectra: false, use_symmetry: true }
    }
}

/// Sweep for one preconditioner over the sampling plan.
pub fn sweep(spec: &PreconditionerSpec, s: &Stencil9, p: usize, plan: &SamplingPlan) -> Result<SpectrumReport> {
    let ctx = SymbolContext::new(s, p, spec)?;
    sweep_context(&ctx, plan, SweepOptions::default())
}

pub fn sweep_context(ctx: &SymbolContext, plan: &SamplingPlan, opts: SweepOptions) -> Result<SpectrumReport> {
    Ok(sweep_weights(ctx, plan, &[ctx.spec().mult], opts)?.remove(0))
}

/// Sweeps several wraps of the same `(i, j)` at once.
pub fn sweep_weights(
    ctx: &SymbolContext,
    plan: &SamplingPlan,
    mults: &[Multiplicative],
    opts: SweepOptions,
) -> Result<Vec<SpectrumReport>> {
    sweep_weights_each(ctx, plan, mults, opts)?.into_iter().collect()
}

/// As [`sweep_weights`], but a failed reduction for one weight (e.g. a
/// non-real spectrum) does not discard the others.
pub fn sweep_weights_each(
    ctx: &SymbolContext,
    plan: &SamplingPlan,
    mults: &[Multiplicative],
    opts: SweepOptions,
) -> Result<Vec<Result<SpectrumReport>>> {
    let specs = mults.iter().map(|m| ctx.spec().with_mult(*m)).collect::<Result<Vec<_>>>()?;
    let orbits = if opts.use_symmetry {
        frequency_orbits(plan, ctx.stencil())
    } else {
        (0..plan.len()).map(|i| Orbit { rep: i, members: vec![(i, false)] }).collect()
    };
    let per_orbit: Vec<Result<(Vec<Extremes>, Option<Vec<Spectrum>>)>> = orbits
        .par_iter()
        .map(|o| {
            let th = plan.frequency(o.rep);
            let sp = ctx.spectra(th, mults).map_err(|e| LfaError::AtFrequency {
                t1: th.t1,
                t2: th.t2,
                source: Box::new(e),
            })?;
            let ex = sp.iter().map(|s| Extremes::of(&s.values).repeated(o.members.len())).collect();
            Ok((ex, opts.keep_spectra.then_some(sp)))
        })
        .collect();
    let mut results = Vec::with_capacity(orbits.len());
    for r in per_orbit {
        results.push(r?);
    }
    let mut reports = Vec::with_capacity(mults.len());
    for (w, spec) in specs.into_iter().enumerate() {
        let ex = results.iter().fold(Extremes::default(), |acc, (e, _)| acc.merge(&e[w]));
        let spectra = if opts.keep_spectra {
            let mut all: Vec<Option<FrequencySpectrum>> = vec![None; plan.len()];
            for (o, (_, sp)) in orbits.iter().zip(&results) {
                let sp = &sp.as_ref().expect("kept")[w];
                for &(idx, conj) in &o.members {
                    let th = plan.frequency(idx);
                    let values =
                        sp.values.iter().map(|z| if conj { [z.re, -z.im] } else { [z.re, z.im] }).collect();
                    all[idx] = Some(FrequencySpectrum { theta: [th.t1, th.t2], values });
                }
            }
            Some(all.into_iter().map(|x| x.expect("every sample covered")).collect())
        } else {
            None
        };
        reports.push(SpectrumReport::from_extremes(spec, ctx.p(), plan.n, ex, spectra));
    }
    Ok(reports)
}

/// Binned eigenvalue densities.
#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub start: f64,
    pub width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `count / width` per bin.
    pub fn densities(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.width).collect()
    }

    pub fn bin_edges(&self, k: usize) -> (f64, f64) {
        let a = self.start + k as f64 * self.width;
        (a, a + self.width)
    }
}

/// Bins of the given width, aligned to multiples of the width and covering
/// `[max(0, λ_min), λ_max]`. Values within rounding of a bin edge are put
/// in the upper bin.
pub fn histogram_values(values: &[f64], width: f64) -> Result<Histogram> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(LfaError::InvalidParameter("bin width must be positive".into()));
    }
    if values.is_empty() {
        return Err(LfaError::InvalidParameter("empty spectrum".into()));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(lo);
    let edge_tol = 1e-9;
    let start = (lo / width + edge_tol).floor() * width;
    let nb = (((hi - start) / width + edge_tol).floor() as usize) + 1;
    let mut counts = vec![0usize; nb];
    for &v in values {
        let k = (((v.max(0.0) - start) / width + edge_tol).floor().max(0.0) as usize).min(nb - 1);
        counts[k] += 1;
    }
    Ok(Histogram { start, width, counts })
}

pub fn histogram(report: &SpectrumReport, width: f64) -> Result<Histogram> {
    if report.mode != SpectrumMode::Real {
        return Err(LfaError::InvalidParameter("histograms need a real-spectrum report".into()));
    }
    let vals = report
        .eigenvalues()
        .ok_or_else(|| LfaError::InvalidParameter("report does not hold eigenvalues".into()))?;
    histogram_values(&vals.iter().map(|z| z.re).collect::<Vec<_>>(), width)
}

/// Condition-number bounds in terms of `H/h = p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    /// `p (1 + ln p)`.
    Upsilon1,
    /// `(1 + ln p)²`.
    Upsilon2,
    /// `Υ_i Υ_j`, with `Υ_0 = 1`.
    Product(u8, u8),
}

impl Bound {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "upsilon1" => Ok(Self::Upsilon1),
            "upsilon2" => Ok(Self::Upsilon2),
            _ => {
                let bad = || LfaError::InvalidParameter(format!("unknown bound '{name}'"));
                let rest = name.strip_prefix("product:").ok_or_else(bad)?;
                let (a, b) = rest.split_once(',').ok_or_else(bad)?;
                let a: u8 = a.trim().parse().map_err(|_| bad())?;
                let b: u8 = b.trim().parse().map_err(|_| bad())?;
                if a > 2 || b > 2 {
                    return Err(bad());
                }
                Ok(Self::Product(a, b))
            }
        }
    }

    pub fn value(&self, p: usize) -> f64 {
        let p = p as f64;
        let y = |i: u8| match i {
            0 => 1.0,
            1 => p * (1.0 + p.ln()),
            _ => (1.0 + p.ln()).powi(2),
        };
        match *self {
            Self::Upsilon1 => y(1),
            Self::Upsilon2 => y(2),
            Self::Product(a, b) => y(a) * y(b),
        }
    }
}

/// `κ / bound(p)`.
pub fn fit_constant(kappa: f64, p: usize, bound: Bound) -> f64 {
    kappa / bound.value(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_nodes_avoid_zero() {
        let plan = SamplingPlan::new(3).unwrap();
        assert_eq!(plan.len(), 36);
        for th in plan.frequencies() {
            assert!(!th.is_zero());
            assert!(Frequency::new(th.t1, th.t2).is_ok());
        }
        assert!((plan.node(0) + PI - PI / 6.0).abs() < 1e-15);
        assert!(SamplingPlan::new(0).is_err());
    }

    #[test]
    fn orbits_partition_grid() {
        for n in [1, 2, 5] {
            let plan = SamplingPlan::new(n).unwrap();
            let orbits = frequency_orbits(&plan, &Stencil9::q1());
            let mut hit = vec![0; plan.len()];
            for o in &orbits {
                for &(i, _) in &o.members {
                    hit[i] += 1;
                }
            }
            assert!(hit.iter().all(|&h| h == 1));
            let m = 2 * n;
            let diag = 2 * m;
            assert_eq!(orbits.len(), (m * m - diag) / 8 + diag / 4);
        }
    }

    #[test]
    fn orbit_members_share_spectra() {
        let s = Stencil9::q1();
        let plan = SamplingPlan::new(2).unwrap();
        let cases = [
            (1, 0, Multiplicative::None),
            (2, 0, Multiplicative::Fine { omega: 1.3 }),
            (1, 1, Multiplicative::Coarse { omega: 1.2 }),
            (2, 1, Multiplicative::FineCoarse { omega1: 4.0, omega2: 1.1 }),
        ];
        for (i, j, mult) in cases {
            let spec = PreconditionerSpec::new(i, j, mult).unwrap();
            let ctx = SymbolContext::new(&s, 2, &spec).unwrap();
            for o in frequency_orbits(&plan, &s) {
                let base = ctx.spectrum(plan.frequency(o.rep)).unwrap();
                let scale = base.max_modulus();
                for &(idx, conj) in &o.members[1..] {
                    let sp = ctx.spectrum(plan.frequency(idx)).unwrap();
                    let expect = if conj { base.conj() } else { base.clone() };
                    assert!(sp.matching_distance(&expect) < 1e-9 * scale, "{i}{j} {mult:?} {idx}");
                }
            }
        }
    }

    #[test]
    fn symmetric_sweep_equals_full_sweep() {
        let s = Stencil9::q1();
        let plan = SamplingPlan::new(2).unwrap();
        let spec = PreconditionerSpec::new(2, 0, Multiplicative::Fine { omega: 1.5 }).unwrap();
        let ctx = SymbolContext::new(&s, 3, &spec).unwrap();
        let a = sweep_context(&ctx, &plan, SweepOptions { keep_spectra: true, use_symmetry: true }).unwrap();
        let b = sweep_context(&ctx, &plan, SweepOptions { keep_spectra: true, use_symmetry: false }).unwrap();
        assert_eq!(a.count(), b.count());
        assert!((a.kappa - b.kappa).abs() < 1e-9 * b.kappa);
        let (ea, eb) = (a.spectra.unwrap(), b.spectra.unwrap());
        for (x, y) in ea.iter().zip(&eb) {
            assert_eq!(x.theta, y.theta);
            let sx = Spectrum::new(x.values.iter().map(|v| c64::new(v[0], v[1])).collect());
            let sy = Spectrum::new(y.values.iter().map(|v| c64::new(v[0], v[1])).collect());
            assert!(sx.matching_distance(&sy) < 1e-9);
        }
    }

    #[test]
    fn extremes_merge_is_order_free() {
        let a = [c64::new(1.0, 0.0), c64::new(3.0, 0.1)];
        let b = [c64::new(0.5, -0.2)];
        let x = Extremes::of(&a).merge(&Extremes::of(&b));
        let y = Extremes::of(&b).merge(&Extremes::of(&a));
        assert_eq!(x, y);
        assert_eq!(x.count, 3);
    }

    #[test]
    fn histogram_of_constant_spectrum() {
        let h = histogram_values(&[1.0; 10], 0.1).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.total(), 10);
        let (a, _) = h.bin_edges(h.counts.iter().position(|&c| c > 0).unwrap());
        assert!((a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fits() {
        assert!((fit_constant(4.44, 4, Bound::Upsilon1) - 0.47).abs() < 0.005);
        assert!((fit_constant(2.35, 4, Bound::Upsilon2) - 0.41).abs() < 0.005);
        assert_eq!(fit_constant(Bound::Upsilon2.value(7), 7, Bound::Upsilon2), 1.0);
        assert!(Bound::parse("upsilon3").is_err());
        assert_eq!(Bound::parse("product:1,2").unwrap(), Bound::Product(1, 2));
    }
}
