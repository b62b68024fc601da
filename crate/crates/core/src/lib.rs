pub mod error;
pub mod linalg;
pub mod stencil;
pub mod subassembly;
pub mod preconditioners;
pub mod spectrum;
pub mod optimizer;
pub mod oracle;

pub use error::{LfaError, Result};
pub use linalg::{c64, ComplexMatrix, Spectrum};
pub use stencil::{classical_symbol, fine_symbol, Frequency, HarmonicGrid, Stencil9};
pub use preconditioners::{FineVariant, MultKind, Multiplicative, PreconditionerSpec, SymbolContext};
pub use spectrum::{fit_constant, histogram, sweep, Bound, Histogram, SamplingPlan, SpectrumMode, SpectrumReport, SweepOptions};
pub use optimizer::{optimize_1d, optimize_2d, OptimizationResult, SweepGrid};
