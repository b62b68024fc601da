//! Grid search over relaxation weights.

use serde::Serialize;

use crate::error::{LfaError, Result};
use crate::preconditioners::{MultKind, Multiplicative, PreconditionerSpec, SymbolContext};
use crate::spectrum::{sweep_weights_each, SamplingPlan, SweepOptions};
use crate::stencil::Stencil9;

/// Inclusive, evenly spaced weight axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self { min: 0.1, max: 3.0, step: 0.1 }
    }
}

impl SweepGrid {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && step.is_finite()) {
            return Err(LfaError::InvalidParameter("grid bounds must be finite".into()));
        }
        if min <= 0.0 {
            return Err(LfaError::InvalidParameter(format!("grid minimum {min} must be positive")));
        }
        if step <= 0.0 {
            return Err(LfaError::InvalidParameter(format!("grid step {step} must be positive")));
        }
        if max < min {
            return Err(LfaError::InvalidParameter(format!("grid maximum {max} is below minimum {min}")));
        }
        Ok(Self { min, max, step })
    }

    pub fn fixed(value: f64) -> Result<Self> {
        Self::new(value, value, 1.0)
    }

    /// Default range for the coarse weight of the fine-and-coarse wrap.
    pub fn default_outer() -> Self {
        Self { min: 0.5, max: 5.0, step: 0.1 }
    }

    /// Parses `min:max` or `min:max:step`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || LfaError::InvalidParameter(format!("grid '{text}' is not min:max[:step]"));
        let parts: Vec<f64> =
            text.split(':').map(|t| t.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?;
        match parts[..] {
            [a, b] => Self::new(a, b, 0.1),
            [a, b, c] => Self::new(a, b, c),
            _ => Err(bad()),
        }
    }

    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid values, rounded to 12 decimals so that `0.1 + 13·0.1` prints as
    /// `1.4`.
    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|k| round12(self.min + k as f64 * self.step)).collect()
    }
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub weights: Vec<f64>,
    /// `κ` or `max|λ|/min|λ|`; `None` if the evaluation failed.
    pub objective: Option<f64>,
    pub max_imag: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub best_weights: Vec<f64>,
    pub best_objective: f64,
    /// Every grid sample, in grid order (first axis outermost).
    pub samples: Vec<Sample>,
}

/// Selects the smallest objective; ties go to the earliest sample, i.e.
/// the smallest weights in grid order.
pub fn select_best(samples: Vec<Sample>) -> Result<OptimizationResult> {
    let mut best: Option<(usize, f64)> = None;
    for (k, s) in samples.iter().enumerate() {
        if let Some(v) = s.objective {
            if v.is_finite() && best.is_none_or(|(_, b)| v < b) {
                best = Some((k, v));
            }
        }
    }
    match best {
        Some((k, v)) => Ok(OptimizationResult { best_weights: samples[k].weights.clone(), best_objective: v, samples }),
        None => {
            let msgs: Vec<String> = samples
                .iter()
                .map(|s| format!("{:?}: {}", s.weights, s.error.as_deref().unwrap_or("non-finite objective")))
                .collect();
            Err(LfaError::Evaluation(format!("all grid evaluations failed: {}", msgs.join("; "))))
        }
    }
}

/// Minimizes an arbitrary objective over one axis.
pub fn minimize_1d<F: Fn(f64) -> Result<f64>>(grid: &SweepGrid, f: F) -> Result<OptimizationResult> {
    let samples = grid.points().into_iter().map(|w| sample(vec![w], f(w))).collect();
    select_best(samples)
}

/// Minimizes an arbitrary objective over two axes.
pub fn minimize_2d<F: Fn(f64, f64) -> Result<f64>>(
    g1: &SweepGrid,
    g2: &SweepGrid,
    f: F,
) -> Result<OptimizationResult> {
    let mut samples = Vec::with_capacity(g1.len() * g2.len());
    for a in g1.points() {
        for b in g2.points() {
            samples.push(sample(vec![a, b], f(a, b)));
        }
    }
    select_best(samples)
}

fn sample(weights: Vec<f64>, r: Result<f64>) -> Sample {
    match r {
        Ok(v) => Sample { weights, objective: Some(v), max_imag: None, error: None },
        Err(e) => Sample { weights, objective: None, max_imag: None, error: Some(e.to_string()) },
    }
}

/// Optimizes the single weight of an `f`, `c` or `sc` template. For `sc`
/// the first weight is taken from the template and the second is swept.
pub fn optimize_1d(
    template: &PreconditionerSpec,
    grid: &SweepGrid,
    stencil: &Stencil9,
    p: usize,
    plan: &SamplingPlan,
) -> Result<OptimizationResult> {
    let kind = template.mult.kind();
    let fixed = match template.mult {
        Multiplicative::SymCoarse { omega1, .. } => omega1,
        _ => 0.0,
    };
    let mults: Vec<Multiplicative> = match kind {
        MultKind::F | MultKind::C => grid.points().iter().map(|&w| Multiplicative::with_weights(kind, w, w)).collect(),
        MultKind::SC => grid.points().iter().map(|&w| Multiplicative::with_weights(kind, fixed, w)).collect(),
        _ => {
            return Err(LfaError::InvalidParameter(format!(
                "one-dimensional search needs an f, c or sc wrap, got '{kind}'"
            )))
        }
    };
    let weights: Vec<Vec<f64>> = grid.points().into_iter().map(|w| vec![w]).collect();
    evaluate(template, stencil, p, plan, &mults, weights)
}

/// Optimizes `(ω₁, ω₂)` of an `fc` or `sc` template over the product grid.
pub fn optimize_2d(
    template: &PreconditionerSpec,
    g1: &SweepGrid,
    g2: &SweepGrid,
    stencil: &Stencil9,
    p: usize,
    plan: &SamplingPlan,
) -> Result<OptimizationResult> {
    let kind = template.mult.kind();
    if !matches!(kind, MultKind::FC | MultKind::SC) {
        return Err(LfaError::InvalidParameter(format!(
            "two-dimensional search needs an fc or sc wrap, got '{kind}'"
        )));
    }
    let mut mults = Vec::new();
    let mut weights = Vec::new();
    for a in g1.points() {
        for b in g2.points() {
            mults.push(Multiplicative::with_weights(kind, a, b));
            weights.push(vec![a, b]);
        }
    }
    evaluate(template, stencil, p, plan, &mults, weights)
}

fn evaluate(
    template: &PreconditionerSpec,
    stencil: &Stencil9,
    p: usize,
    plan: &SamplingPlan,
    mults: &[Multiplicative],
    weights: Vec<Vec<f64>>,
) -> Result<OptimizationResult> {
    let ctx = SymbolContext::new(stencil, p, template)?;
    let reports = sweep_weights_each(&ctx, plan, mults, SweepOptions::default())?;
    let samples = weights
        .into_iter()
        .zip(reports)
        .map(|(w, r)| match r {
            Ok(rep) => Sample {
                weights: w,
                objective: Some(rep.kappa),
                max_imag: Some(rep.extremes.max_imag),
                error: None,
            },
            Err(e) => Sample { weights: w, objective: None, max_imag: None, error: Some(e.to_string()) },
        })
        .collect();
    select_best(samples)
}
