//! Run configuration: a TOML file merged with command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bddc_lfa::{MultKind, Multiplicative, PreconditionerSpec, SamplingPlan, Stencil9, SweepGrid};
use clap::ValueEnum;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Sweep,
    Optimize,
    Histogram,
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            Self::One(x) => vec![x],
            Self::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StencilSpec {
    Named(String),
    Coefficients(Vec<f64>),
}

/// File schema. Every list-valued field may also be given as a scalar; the
/// run covers the Cartesian product of `p`, `n`, `i`, `j` and `mult`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<Command>,
    pub stencil: Option<StencilSpec>,
    pub p: Option<OneOrMany<usize>>,
    pub n: Option<OneOrMany<usize>>,
    pub i: Option<OneOrMany<u8>>,
    pub j: Option<OneOrMany<u8>>,
    pub mult: Option<OneOrMany<String>>,
    pub omega: Option<f64>,
    pub omega1: Option<f64>,
    pub omega2: Option<f64>,
    pub grid: Option<String>,
    pub grid_outer: Option<String>,
    pub bin_width: Option<f64>,
    pub bound: Option<String>,
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub threads: Option<usize>,
    pub keep_spectra: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("in {}", path.display()))
    }
}

/// Flag values, each overriding the file when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub stencil: Option<String>,
    pub p: Vec<usize>,
    pub n: Vec<usize>,
    pub i: Vec<u8>,
    pub j: Vec<u8>,
    pub mult: Vec<String>,
    pub omega: Option<f64>,
    pub omega1: Option<f64>,
    pub omega2: Option<f64>,
    pub grid: Option<String>,
    pub grid_outer: Option<String>,
    pub bin_width: Option<f64>,
    pub bound: Option<String>,
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub threads: Option<usize>,
    pub keep_spectra: bool,
}

/// A fully validated run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub stencil: Stencil9,
    pub p: Vec<usize>,
    pub n: Vec<usize>,
    pub specs: Vec<PreconditionerSpec>,
    pub grid: SweepGrid,
    /// Whether `grid` was set explicitly rather than defaulted.
    pub grid_given: bool,
    pub grid_outer: Option<SweepGrid>,
    pub bin_width: f64,
    pub bound: Option<bddc_lfa::Bound>,
    pub m: Option<usize>,
    pub seed: u64,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub threads: Option<usize>,
    pub keep_spectra: bool,
}

fn pick<T>(flag: Vec<T>, file: Option<OneOrMany<T>>) -> Option<Vec<T>>
where
    T: Clone,
{
    if !flag.is_empty() {
        Some(flag)
    } else {
        file.map(OneOrMany::into_vec)
    }
}

fn parse_stencil(s: &StencilSpec) -> Result<Stencil9> {
    match s {
        StencilSpec::Named(name) if name == "q1" => Ok(Stencil9::q1()),
        StencilSpec::Named(text) => {
            let vals: Vec<f64> = text
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .with_context(|| format!("stencil '{text}' is neither 'q1' nor 9 comma-separated numbers"))?;
            parse_stencil(&StencilSpec::Coefficients(vals))
        }
        StencilSpec::Coefficients(v) => {
            if v.len() != 9 {
                bail!("stencil needs 9 coefficients, got {}", v.len());
            }
            Ok(Stencil9::from_slice(v)?)
        }
    }
}

impl RunConfig {
    pub fn resolve(command: Option<Command>, file: FileConfig, flags: Overrides) -> Result<Self> {
        let command = command.or(file.command).context("no command given")?;
        let stencil = match (flags.stencil, file.stencil) {
            (Some(s), _) => parse_stencil(&StencilSpec::Named(s))?,
            (None, Some(s)) => parse_stencil(&s)?,
            (None, None) => Stencil9::q1(),
        };
        let p = pick(flags.p, file.p).context("field 'p' is required")?;
        let n = pick(flags.n, file.n).unwrap_or_default();
        let is = pick(flags.i, file.i).unwrap_or_else(|| vec![1]);
        let js = pick(flags.j, file.j).unwrap_or_else(|| vec![0]);
        let mults = pick(flags.mult, file.mult).unwrap_or_else(|| vec!["none".into()]);
        let omega = flags.omega.or(file.omega);
        let omega1 = flags.omega1.or(file.omega1);
        let omega2 = flags.omega2.or(file.omega2);

        for &pv in &p {
            if pv < 2 {
                bail!("field 'p': subdomain size {pv} must be at least 2");
            }
        }
        for &nv in &n {
            SamplingPlan::new(nv).context("field 'n'")?;
        }
        let needs_n = matches!(command, Command::Sweep | Command::Optimize | Command::Histogram);
        if needs_n && n.is_empty() {
            bail!("field 'n' is required for this command");
        }

        let mut specs = Vec::new();
        for kind_name in &mults {
            let kind: MultKind = kind_name.parse().with_context(|| format!("field 'mult': '{kind_name}'"))?;
            let (w1, w2) = match kind {
                MultKind::None => (0.0, 0.0),
                MultKind::F | MultKind::C => {
                    let w = omega.unwrap_or(1.0);
                    (w, w)
                }
                MultKind::SC | MultKind::FC => (omega1.unwrap_or(4.0), omega2.or(omega).unwrap_or(1.0)),
            };
            let mult = Multiplicative::with_weights(kind, w1, w2);
            for &i in &is {
                for &j in &js {
                    specs.push(
                        PreconditionerSpec::new(i, j, mult)
                            .with_context(|| format!("spec i = {i}, j = {j}, mult = {kind_name}"))?,
                    );
                }
            }
        }

        let grid_text = flags.grid.or(file.grid);
        let grid_given = grid_text.is_some();
        let grid = match grid_text {
            Some(g) => SweepGrid::parse(&g).context("field 'grid'")?,
            None => SweepGrid::default(),
        };
        let grid_outer = match flags.grid_outer.or(file.grid_outer) {
            Some(g) => Some(SweepGrid::parse(&g).context("field 'grid_outer'")?),
            None => None,
        };
        let bin_width = flags.bin_width.or(file.bin_width).unwrap_or(0.1);
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            bail!("field 'bin_width' must be positive");
        }
        let bound = match flags.bound.or(file.bound) {
            Some(b) => Some(bddc_lfa::Bound::parse(&b).context("field 'bound'")?),
            None => None,
        };
        let m = flags.m.or(file.m);
        if command == Command::Validate {
            let mv = m.context("field 'm' is required for validate")?;
            for &pv in &p {
                bddc_lfa::oracle::PeriodicMesh::new(pv, mv).context("fields 'p' and 'm'")?;
                if specs.iter().any(|s| s.j() > 0) && mv % pv != 0 {
                    bail!("three-level validation needs m = {mv} to be a multiple of p = {pv}");
                }
            }
        }
        let tol = flags.tol.or(file.tol);
        let threads = flags.threads.or(file.threads);
        if threads == Some(0) {
            bail!("field 'threads' must be at least 1");
        }
        Ok(Self {
            command,
            stencil,
            p,
            n,
            specs,
            grid,
            grid_given,
            grid_outer,
            bin_width,
            bound,
            m,
            seed: flags.seed.or(file.seed).unwrap_or(0),
            tol,
            out: flags.out.or(file.out),
            format: flags.format.or(file.format).unwrap_or_default(),
            threads,
            keep_spectra: flags.keep_spectra || file.keep_spectra.unwrap_or(false),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(text: &str) -> Result<FileConfig> {
        Ok(toml::from_str(text)?)
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(file("command = \"sweep\"\np = 4\nbogus = 1\n").is_err());
    }

    #[test]
    fn scalars_and_lists() {
        let f = file("command = \"sweep\"\np = [4, 8]\nn = 2\ni = [1, 2]\n").unwrap();
        let c = RunConfig::resolve(None, f, Overrides::default()).unwrap();
        assert_eq!(c.p, vec![4, 8]);
        assert_eq!(c.n, vec![2]);
        assert_eq!(c.specs.len(), 2);
    }

    #[test]
    fn flags_override_file() {
        let f = file("command = \"sweep\"\np = 4\nn = 2\n").unwrap();
        let o = Overrides { n: vec![8], ..Default::default() };
        let c = RunConfig::resolve(None, f, o).unwrap();
        assert_eq!(c.n, vec![8]);
    }

    #[test]
    fn zero_resolution_is_invalid() {
        let f = file("command = \"sweep\"\np = 4\nn = 0\n").unwrap();
        assert!(RunConfig::resolve(None, f, Overrides::default()).is_err());
    }

    #[test]
    fn coarse_wrap_needs_three_levels() {
        let f = file("command = \"sweep\"\np = 4\nn = 2\nmult = \"c\"\n").unwrap();
        assert!(RunConfig::resolve(None, f, Overrides::default()).is_err());
    }

    #[test]
    fn custom_stencil() {
        let f = file("command = \"sweep\"\np = 4\nn = 2\nstencil = [0,-1,0,-1,4,-1,0,-1,0]\n").unwrap();
        let c = RunConfig::resolve(None, f, Overrides::default()).unwrap();
        assert_eq!(c.stencil.center(), 4.0);
        let bad = file("command = \"sweep\"\np = 4\nn = 2\nstencil = [1, 2]\n").unwrap();
        assert!(RunConfig::resolve(None, bad, Overrides::default()).is_err());
    }
}
