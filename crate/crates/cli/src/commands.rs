//! The four subcommands.

use std::collections::BTreeMap;
use std::time::Instant;

use anyhow::anyhow;
use bddc_lfa::oracle::{self, FiniteOperator, RitzOptions};
use bddc_lfa::spectrum::{self, SweepOptions};
use bddc_lfa::{
    fit_constant, optimize_1d, optimize_2d, LfaError, MultKind, Multiplicative, OptimizationResult,
    PreconditionerSpec, SamplingPlan, SpectrumReport, SweepGrid, SymbolContext,
};
use serde_json::{json, Value};

use crate::config::{Format, RunConfig};
use crate::output::{f6, sibling, write_json, Table};

/// Failure classes with distinct exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Numerical(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(e) => write!(f, "configuration error: {e:#}"),
            Self::Numerical(e) => write!(f, "numerical failure: {e:#}"),
        }
    }
}

impl From<LfaError> for Failure {
    fn from(e: LfaError) -> Self {
        match e {
            LfaError::InvalidParameter(_) => Self::Config(e.into()),
            other => Self::Numerical(other.into()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Config(e.into())
    }
}

fn io(e: anyhow::Error) -> Failure {
    Failure::Config(e)
}

type Outcome = std::result::Result<(), Failure>;

fn weights(mult: &Multiplicative) -> (String, String) {
    match *mult {
        Multiplicative::None => (String::new(), String::new()),
        Multiplicative::Fine { omega } | Multiplicative::Coarse { omega } => (f6(omega), String::new()),
        Multiplicative::SymCoarse { omega1, omega2 } | Multiplicative::FineCoarse { omega1, omega2 } => {
            (f6(omega1), f6(omega2))
        }
    }
}

fn spec_cols(spec: &PreconditionerSpec) -> Vec<String> {
    let (w1, w2) = weights(&spec.mult);
    vec![spec.i().to_string(), spec.j().to_string(), spec.mult.kind().to_string(), w1, w2]
}

fn with_weights(spec: &PreconditionerSpec, w: &[f64]) -> Vec<String> {
    // a one-axis sc search reports only the swept second weight
    let full;
    let w = match spec.mult {
        Multiplicative::SymCoarse { omega1, .. } if w.len() == 1 => {
            full = [omega1, w[0]];
            &full[..]
        }
        _ => w,
    };
    let mut v = vec![spec.i().to_string(), spec.j().to_string(), spec.mult.kind().to_string()];
    v.push(w.first().map(|x| f6(*x)).unwrap_or_default());
    v.push(w.get(1).map(|x| f6(*x)).unwrap_or_default());
    v
}

fn mode_name(r: &SpectrumReport) -> &'static str {
    match r.mode {
        bddc_lfa::SpectrumMode::Real => "real",
        bddc_lfa::SpectrumMode::Complex => "complex",
    }
}

/// Groups spec indices by `(i, j)` so that one symbol context serves
/// several wraps.
fn groups(specs: &[PreconditionerSpec]) -> BTreeMap<(u8, u8), Vec<usize>> {
    let mut g: BTreeMap<(u8, u8), Vec<usize>> = BTreeMap::new();
    for (k, s) in specs.iter().enumerate() {
        g.entry((s.i(), s.j())).or_default().push(k);
    }
    g
}

fn sweep_all(cfg: &RunConfig, keep: bool) -> Result<Vec<(usize, usize, usize, SpectrumReport)>, Failure> {
    let mut out = Vec::new();
    for &p in &cfg.p {
        for idx in groups(&cfg.specs).values() {
            let ctx = SymbolContext::new(&cfg.stencil, p, &cfg.specs[idx[0]])?;
            let mults: Vec<Multiplicative> = idx.iter().map(|&k| cfg.specs[k].mult).collect();
            for &n in &cfg.n {
                let t = Instant::now();
                let plan = SamplingPlan::new(n)?;
                let opts = SweepOptions { keep_spectra: keep, use_symmetry: true };
                let reports = spectrum::sweep_weights(&ctx, &plan, &mults, opts)
                    .map_err(|e| Failure::Numerical(anyhow!("p = {p}, n = {n}, weights {mults:?}: {e}")))?;
                eprintln!(
                    "p = {p}, n = {n}, {}: {:.2?}",
                    cfg.specs[idx[0]].label(),
                    t.elapsed()
                );
                for (&k, r) in idx.iter().zip(reports) {
                    out.push((p, k, n, r));
                }
            }
        }
    }
    out.sort_by_key(|(p, k, n, _)| (*p, *k, *n));
    Ok(out)
}

fn spectra_json(r: &SpectrumReport) -> Value {
    let mut map = serde_json::Map::new();
    if let Some(s) = &r.spectra {
        for f in s {
            let key = format!("{:.9},{:.9}", f.theta[0], f.theta[1]);
            map.insert(key, json!(f.values));
        }
    }
    Value::Object(map)
}

pub fn sweep(cfg: &RunConfig) -> Outcome {
    let keep = cfg.keep_spectra && cfg.format == Format::Json;
    let results = sweep_all(cfg, keep)?;
    match cfg.format {
        Format::Csv => {
            let mut t = Table::new(vec![
                "p", "n", "i", "j", "mult", "omega1", "omega2", "mode", "kappa", "lambda_min", "lambda_max", "abs_min",
                "abs_max", "max_imag", "count", "fit",
            ]);
            for (p, _, n, r) in &results {
                let e = &r.extremes;
                let fit = cfg.bound.map(|b| f6(fit_constant(r.kappa, *p, b))).unwrap_or_default();
                let mut row = vec![p.to_string(), n.to_string()];
                row.extend(spec_cols(&r.spec));
                row.extend([
                    mode_name(r).to_string(),
                    f6(r.kappa),
                    f6(e.re_min),
                    f6(e.re_max),
                    f6(e.abs_min),
                    f6(e.abs_max),
                    f6(e.max_imag),
                    e.count.to_string(),
                    fit,
                ]);
                t.push(row);
            }
            t.write(cfg.out.as_deref()).map_err(io)
        }
        Format::Json => {
            let items: Vec<Value> = results
                .iter()
                .map(|(p, _, n, r)| {
                    let mut v = json!({
                        "p": p, "n": n, "spec": r.spec, "label": r.spec.label(), "mode": mode_name(r),
                        "kappa": r.kappa, "extremes": r.extremes,
                    });
                    if let Some(b) = cfg.bound {
                        v["fit"] = json!(fit_constant(r.kappa, *p, b));
                    }
                    if keep {
                        v["spectra"] = spectra_json(r);
                    }
                    v
                })
                .collect();
            write_json(cfg.out.as_deref(), Value::Array(items)).map_err(io)
        }
    }
}

fn optimize_one(cfg: &RunConfig, spec: &PreconditionerSpec, p: usize, plan: &SamplingPlan) -> Result<OptimizationResult, Failure> {
    let kind = spec.mult.kind();
    let r = match kind {
        MultKind::None => return Err(Failure::Config(anyhow!("optimize needs a weighted wrap (f, c, sc or fc)"))),
        MultKind::F | MultKind::C => optimize_1d(spec, &cfg.grid, &cfg.stencil, p, plan),
        MultKind::SC if cfg.grid_outer.is_none() => optimize_1d(spec, &cfg.grid, &cfg.stencil, p, plan),
        MultKind::SC | MultKind::FC => {
            let outer = match cfg.grid_outer {
                Some(g) => g,
                None => SweepGrid::fixed(spec.mult.weights()[0])?,
            };
            optimize_2d(spec, &outer, &cfg.grid, &cfg.stencil, p, plan)
        }
    };
    r.map_err(|e| Failure::Numerical(anyhow!("p = {p}, n = {}, {}: {e}", plan.n, spec.label())))
}

pub fn optimize(cfg: &RunConfig) -> Outcome {
    let mut runs = Vec::new();
    for &p in &cfg.p {
        for spec in &cfg.specs {
            for &n in &cfg.n {
                let t = Instant::now();
                let r = optimize_one(cfg, spec, p, &SamplingPlan::new(n)?)?;
                eprintln!("p = {p}, n = {n}, {}: best {:?} -> {} ({:.2?})", spec.label(), r.best_weights, f6(r.best_objective), t.elapsed());
                runs.push((p, n, *spec, r));
            }
        }
    }
    match cfg.format {
        Format::Csv => {
            let mut curve = Table::new(vec!["p", "n", "i", "j", "mult", "omega1", "omega2", "objective", "max_imag", "error"]);
            let mut best = Table::new(vec!["p", "n", "i", "j", "mult", "omega1", "omega2", "objective"]);
            for (p, n, spec, r) in &runs {
                for s in &r.samples {
                    let mut row = vec![p.to_string(), n.to_string()];
                    row.extend(with_weights(spec, &s.weights));
                    row.push(s.objective.map(f6).unwrap_or_default());
                    row.push(s.max_imag.map(f6).unwrap_or_default());
                    row.push(s.error.clone().unwrap_or_default());
                    curve.push(row);
                }
                let mut row = vec![p.to_string(), n.to_string()];
                row.extend(with_weights(spec, &r.best_weights));
                row.push(f6(r.best_objective));
                best.push(row);
            }
            match &cfg.out {
                Some(path) => {
                    curve.write(Some(path)).map_err(io)?;
                    best.write(Some(&sibling(path, "best"))).map_err(io)
                }
                None => best.write(None).map_err(io),
            }
        }
        Format::Json => {
            let items: Vec<Value> = runs
                .iter()
                .map(|(p, n, spec, r)| json!({ "p": p, "n": n, "spec": spec, "label": spec.label(), "result": r }))
                .collect();
            write_json(cfg.out.as_deref(), Value::Array(items)).map_err(io)
        }
    }
}

pub fn histogram(cfg: &RunConfig) -> Outcome {
    if let Some(s) = cfg.specs.iter().find(|s| !s.mult.real_spectrum()) {
        return Err(Failure::Config(anyhow!("histograms need a real spectrum; {} is complex", s.label())));
    }
    let results = sweep_all(cfg, true)?;
    let mut t = Table::new(vec!["p", "n", "i", "j", "mult", "omega1", "omega2", "bin_start", "bin_end", "count", "density"]);
    let mut items = Vec::new();
    for (p, _, n, r) in &results {
        let h = spectrum::histogram(r, cfg.bin_width)?;
        eprintln!("p = {p}, n = {n}, {}: {} eigenvalues", r.spec.label(), h.total());
        for (k, (&c, d)) in h.counts.iter().zip(h.densities()).enumerate() {
            let (a, b) = h.bin_edges(k);
            let mut row = vec![p.to_string(), n.to_string()];
            row.extend(spec_cols(&r.spec));
            row.extend([f6(a), f6(b), c.to_string(), f6(d)]);
            t.push(row);
        }
        items.push(json!({ "p": p, "n": n, "spec": r.spec, "total": h.total(), "histogram": h }));
    }
    match cfg.format {
        Format::Csv => t.write(cfg.out.as_deref()).map_err(io),
        Format::Json => write_json(cfg.out.as_deref(), Value::Array(items)).map_err(io),
    }
}

fn ratio(values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

fn abs_ratio(values: &[bddc_lfa::c64]) -> f64 {
    let lo = values.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let hi = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    hi / lo
}

pub fn validate(cfg: &RunConfig) -> Outcome {
    let m = cfg.m.ok_or_else(|| Failure::Config(anyhow!("field 'm' is required")))?;
    let mut t = Table::new(vec![
        "p", "m", "i", "j", "mult", "omega1", "omega2", "count", "max_deviation", "kappa_finite", "kappa_lfa", "ritz_ratio",
    ]);
    let mut curve = Table::new(vec!["p", "m", "i", "omega", "kappa_finite", "ritz_ratio", "n", "kappa_lfa"]);
    let mut worst: Option<String> = None;
    let mut items = Vec::new();
    let ritz = RitzOptions { seed: cfg.seed, ..Default::default() };
    for &p in &cfg.p {
        let sys = oracle::assemble_with(&cfg.stencil.element_matrix()?, p, m)?;
        for spec in &cfg.specs {
            if spec.mult.kind() == MultKind::F && cfg.grid_given {
                let fine = spec.fine;
                let omegas = cfg.grid.points();
                let dense = oracle::fine_wrap_spectra(&sys, fine, &omegas)?;
                let lfa: Option<(usize, Vec<SpectrumReport>)> = match cfg.n.first() {
                    Some(&n) => {
                        let ctx = SymbolContext::new(&cfg.stencil, p, spec)?;
                        let mults: Vec<Multiplicative> = omegas.iter().map(|&w| Multiplicative::Fine { omega: w }).collect();
                        Some((n, spectrum::sweep_weights(&ctx, &SamplingPlan::new(n)?, &mults, SweepOptions::default())?))
                    }
                    None => None,
                };
                for (k, (&w, vals)) in omegas.iter().zip(&dense).enumerate() {
                    let s = spec.with_mult(Multiplicative::Fine { omega: w })?;
                    let op = FiniteOperator::new(&sys, &s)?;
                    let est = oracle::ritz_estimate(|x| op.apply(x), op.dim(), &ritz)?;
                    let (n_col, lfa_col) = match &lfa {
                        Some((n, reps)) => (n.to_string(), f6(reps[k].kappa)),
                        None => (String::new(), String::new()),
                    };
                    curve.push(vec![
                        p.to_string(),
                        m.to_string(),
                        spec.i().to_string(),
                        f6(w),
                        f6(ratio(vals)),
                        f6(est.ratio),
                        n_col,
                        lfa_col,
                    ]);
                    items.push(json!({ "p": p, "m": m, "i": spec.i(), "omega": w, "kappa_finite": ratio(vals), "ritz_ratio": est.ratio }));
                }
                continue;
            }
            let cmp = oracle::spectra_match(&sys, spec)?;
            let op = FiniteOperator::new(&sys, spec)?;
            let est = oracle::ritz_estimate(|x| op.apply(x), op.dim(), &ritz)?;
            let (kf, kl) = if spec.mult.real_spectrum() {
                let re = |s: &bddc_lfa::Spectrum| s.values.iter().map(|z| z.re).collect::<Vec<_>>();
                (ratio(&re(&cmp.finite)), ratio(&re(&cmp.lfa)))
            } else {
                (abs_ratio(&cmp.finite.values), abs_ratio(&cmp.lfa.values))
            };
            let tol = cfg.tol.unwrap_or(if spec.j() == 0 { 1e-8 } else { 1e-6 });
            let dev = cmp.relative_deviation();
            eprintln!("p = {p}, m = {m}, {}: deviation {dev:.3e}", spec.label());
            if !(dev <= tol) {
                worst = Some(format!("p = {p}, m = {m}, {}: deviation {dev:.3e} exceeds {tol:.1e}", spec.label()));
            }
            let mut row = vec![p.to_string(), m.to_string()];
            row.extend(spec_cols(spec));
            row.extend([cmp.finite.len().to_string(), f6(dev), f6(kf), f6(kl), f6(est.ratio)]);
            t.push(row);
            items.push(json!({
                "p": p, "m": m, "spec": spec, "count": cmp.finite.len(), "max_deviation": dev,
                "kappa_finite": kf, "kappa_lfa": kl, "ritz_ratio": est.ratio,
            }));
        }
    }
    match cfg.format {
        Format::Csv => {
            if !t.rows.is_empty() {
                t.write(cfg.out.as_deref()).map_err(io)?;
            }
            if !curve.rows.is_empty() {
                let path = match (&cfg.out, t.rows.is_empty()) {
                    (Some(o), true) => Some(o.clone()),
                    (Some(o), false) => Some(sibling(o, "curve")),
                    (None, _) => None,
                };
                curve.write(path.as_deref()).map_err(io)?;
            }
        }
        Format::Json => write_json(cfg.out.as_deref(), Value::Array(items)).map_err(io)?,
    }
    match worst {
        Some(msg) => Err(Failure::Numerical(anyhow!(msg))),
        None => Ok(()),
    }
}
