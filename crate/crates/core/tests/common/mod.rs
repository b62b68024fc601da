//! Invariant checks shared by the property tests and the acceptance run.

#![allow(dead_code)]

use bddc_lfa::linalg::{adjoint, dft_matrix, identity, max_abs, max_abs_diff, zeros};
use bddc_lfa::subassembly::{broken_blocks, factor_symbols, schur_stencil};
use bddc_lfa::{Frequency, Multiplicative, PreconditionerSpec, Stencil9, SymbolContext};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, TestRunner};

/// One randomized case.
#[derive(Debug, Clone, Copy)]
pub struct Case {
    pub theta: Frequency,
    pub p: usize,
    pub i: u8,
    pub j: u8,
    pub omega: f64,
}

fn angle() -> impl Strategy<Value = f64> {
    // stays away from the zero frequency, where the symbols are singular
    prop_oneof![-3.14f64..-0.05, 0.05f64..3.14]
}

/// Two-level cases use `p ∈ 2..=8`; three-level cases are capped at
/// `p = 4` to keep the macro-cell symbols small.
pub fn cases() -> impl Strategy<Value = Case> {
    (angle(), angle(), 2usize..=8, 1u8..=2, 0u8..=2, 0.1f64..3.0).prop_map(|(t1, t2, p, i, j, omega)| {
        let p = if j > 0 { 2 + p % 3 } else { p };
        Case { theta: Frequency::new(t1, t2).unwrap(), p, i, j, omega }
    })
}

pub fn check_case(c: &Case) -> Result<(), String> {
    let q1 = Stencil9::q1();

    let spec = PreconditionerSpec::new(c.i, c.j, Multiplicative::None).map_err(|e| e.to_string())?;
    let ctx = SymbolContext::new(&q1, c.p, &spec).map_err(|e| e.to_string())?;
    let sp = ctx.spectrum(c.theta).map_err(|e| e.to_string())?;
    let scale = sp.max_modulus().max(1.0);
    if sp.max_abs_imag() > 1e-8 * scale {
        return Err(format!("{c:?}: imaginary part {:.3e}", sp.max_abs_imag()));
    }
    let lo = sp.real_parts().into_iter().fold(f64::INFINITY, f64::min);
    if lo < 1.0 - 1e-8 {
        return Err(format!("{c:?}: eigenvalue {lo} below one"));
    }

    let fspec = spec.with_mult(Multiplicative::Fine { omega: c.omega }).map_err(|e| e.to_string())?;
    let fctx = SymbolContext::new(&q1, c.p, &fspec).map_err(|e| e.to_string())?;
    let fs = fctx.spectrum(c.theta).map_err(|e| e.to_string())?;
    if fs.max_abs_imag() > 1e-8 * fs.max_modulus().max(1.0) {
        return Err(format!("{c:?}: fine wrap imaginary part {:.3e}", fs.max_abs_imag()));
    }

    let t = dft_matrix(c.p).map_err(|e| e.to_string())?;
    let mut p2 = identity(c.p * c.p);
    p2 *= faer::Scale(bddc_lfa::c64::new((c.p * c.p) as f64, 0.0));
    let tt = &t * adjoint(&t);
    if max_abs_diff(&tt, &p2) > 1e-9 * (c.p * c.p) as f64 {
        return Err(format!("p = {}: T T^H differs from p^2 I", c.p));
    }

    let ss = schur_stencil(&q1, c.p).map_err(|e| e.to_string())?;
    if ss.stencil.row_sum().abs() > 1e-10 * ss.center.abs() {
        return Err(format!("p = {}: coarse stencil row sum {}", c.p, ss.stencil.row_sum()));
    }

    let b = broken_blocks(&q1, c.p, c.theta).map_err(|e| e.to_string())?;
    let (ld, u) = factor_symbols(&b).map_err(|e| e.to_string())?;
    let (nr, np) = (b.a_rr.nrows(), b.a_pi_pi.nrows());
    let mut a = zeros(nr + np, nr + np);
    a.as_mut().submatrix_mut(0, 0, nr, nr).copy_from(&b.a_rr);
    a.as_mut().submatrix_mut(0, nr, nr, np).copy_from(b.a_pi_r.adjoint());
    a.as_mut().submatrix_mut(nr, 0, np, nr).copy_from(&b.a_pi_r);
    a.as_mut().submatrix_mut(nr, nr, np, np).copy_from(&b.a_pi_pi);
    if max_abs_diff(&(&ld * &u), &a) > 1e-10 * max_abs(&a) {
        return Err(format!("{c:?}: K_LD K_U differs from the broken operator"));
    }
    Ok(())
}

/// Runs `cases` random cases from a fixed seed; returns the number checked.
pub fn run_invariants(cases_n: u32) -> Result<u32, String> {
    let config = Config { cases: cases_n, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, proptest::test_runner::TestRng::deterministic_rng(
        proptest::test_runner::RngAlgorithm::ChaCha,
    ));
    let strategy = cases();
    for _ in 0..cases_n {
        let case = strategy.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
        check_case(&case)?;
    }
    Ok(cases_n)
}
