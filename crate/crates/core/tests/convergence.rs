use bddc_lfa::{sweep, Multiplicative, PreconditionerSpec, SamplingPlan, Stencil9};

#[test]
fn finer_sampling_changes_little_at_p4() {
    for i in [1u8, 2] {
        let spec = PreconditionerSpec::new(i, 0, Multiplicative::None).unwrap();
        let k = |n| sweep(&spec, &Stencil9::q1(), 4, &SamplingPlan::new(n).unwrap()).unwrap().kappa;
        let (k32, k64) = (k(32), k(64));
        assert!((k64 - k32).abs() <= 0.01, "i = {i}: {k32} vs {k64}");
    }
}
