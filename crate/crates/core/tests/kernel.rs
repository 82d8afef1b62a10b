use coag_core::kernel::{KernelError, KernelSpec, Side};
use proptest::prelude::*;

#[test]
fn constant_kernel_is_one() {
    assert_eq!(KernelSpec::constant().eval(3.0, 5.0).unwrap(), 1.0);
    assert_eq!(KernelSpec::constant().shape_value(0.3).unwrap(), 1.0);
}

#[test]
fn canonical_values_by_hand() {
    let k = KernelSpec::canonical(-1.5, 1.5).unwrap();
    assert_eq!(k.eval(1.0, 1.0).unwrap(), 2.0);
    let k12 = 2f64.powf(-1.5) + 1.0;
    assert!((k.eval(1.0, 2.0).unwrap() - k12).abs() < 1e-15);
    assert!((k.eval(2.0, 4.0).unwrap() - 2f64.powf(-1.5) * k12).abs() < 1e-15);
    assert!((k.eval(2.0, 4.0).unwrap() - 0.478553).abs() < 1e-6);
}

#[test]
fn canonical_shape_symmetry_and_limit() {
    let k = KernelSpec::canonical(-1.5, 1.5).unwrap();
    let (a, b) = (k.shape_value(0.3).unwrap(), k.shape_value(0.7).unwrap());
    assert!((a - b).abs() <= 1e-12 * a);
    for s in [1e-4f64, 1e-6] {
        let v = s.powf(1.5) * k.shape_value(s).unwrap();
        assert!((v - 1.0).abs() < 1e-4, "s = {s}: {v}");
    }
    let kmr = KernelSpec::kmr(0.7).unwrap();
    let s: f64 = 1e-6;
    assert!((s.powf(0.7) * kmr.shape_value(s).unwrap() - 1.0).abs() < 1e-4);
}

#[test]
fn shape_domain() {
    let k = KernelSpec::constant();
    for s in [0.0, 1.0, -0.1, f64::NAN] {
        assert!(matches!(k.shape_value(s), Err(KernelError::ShapeDomain(_))));
    }
}

#[test]
fn validation_rules() {
    assert!(matches!(
        KernelSpec::canonical(0.5, 0.6),
        Err(KernelError::SumTooLarge(_))
    ));
    assert!(matches!(
        KernelSpec::canonical(0.5, -0.3),
        Err(KernelError::NegativeTailExponent(_))
    ));
    assert!(matches!(
        KernelSpec::canonical(1.0, -0.2),
        Err(KernelError::GammaTooLarge(_))
    ));
    let f = KernelSpec::canonical(-1.5, 1.5).unwrap().flags();
    assert_eq!(f.gamma_vs_minus_one, Side::Below);
    assert_eq!(f.sum_sign, Side::Equal);
    assert_eq!(f.tail_vs_one, Side::Above);
    assert!(matches!(
        KernelSpec::kmr(0.5).unwrap().with_prefactor(0.0),
        Err(KernelError::BadPrefactor(_))
    ));
}

#[test]
fn boundary_flags_use_tolerance() {
    let k = KernelSpec::canonical(-1.5, 1.25 + 1e-13).unwrap();
    assert_eq!(k.flags().tail_vs_one, Side::Equal);
    let k = KernelSpec::canonical(-1.5, 1.25 + 1e-9).unwrap();
    assert_eq!(k.flags().tail_vs_one, Side::Above);
}

#[test]
fn custom_shape_is_symmetrized() {
    let k = KernelSpec::custom(-0.5, 0.8, |s| s.powf(-0.8) * (1.0 + s)).unwrap();
    let a = k.shape_value(0.2).unwrap();
    let b = k.shape_value(0.8).unwrap();
    assert!((a - b).abs() <= 1e-12 * a);
    assert_eq!(k.rate(2.0, 7.0), k.rate(7.0, 2.0));
}

#[test]
fn extreme_sizes() {
    let k = KernelSpec::canonical(-2.0, 1.5).unwrap();
    let v = k.eval(1e-300, 1e300).unwrap();
    assert!((v / 1e300 - 1.0).abs() < 1e-12, "{v}");
    let k = KernelSpec::canonical(-2.0, 1.8).unwrap();
    assert!(matches!(k.eval(1e-300, 1e300), Err(KernelError::Overflow { .. })));
    assert!(matches!(k.eval(0.0, 1.0), Err(KernelError::Domain { .. })));
}

fn accepted() -> impl Strategy<Value = (f64, f64)> {
    (-3.0f64..0.99, 0.0f64..3.0)
        .prop_filter("valid", |(g, l)| g + l < 0.99 && g + 2.0 * l >= 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn homogeneity((g, l) in accepted(), x in 1e-3f64..1e4, y in 1e-3f64..1e4, a in 1e-2f64..1e2) {
        let k = KernelSpec::canonical(g, l).unwrap();
        let lhs = k.rate(a * x, a * y);
        let rhs = a.powf(g) * k.rate(x, y);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs, "{lhs} vs {rhs}");
    }

    #[test]
    fn symmetric_to_the_bit((g, l) in accepted(), x in 1e-3f64..1e6, y in 1e-3f64..1e6) {
        let k = KernelSpec::canonical(g, l).unwrap();
        prop_assert_eq!(k.rate(x, y).to_bits(), k.rate(y, x).to_bits());
    }

    #[test]
    fn shape_reflection((g, l) in accepted(), s in 1e-6f64..0.999999) {
        let k = KernelSpec::canonical(g, l).unwrap();
        let a = k.shape_value(s).unwrap();
        let b = k.shape_value(1.0 - s).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn shape_matches_kernel_on_unit_sum((g, l) in accepted(), s in 1e-3f64..0.999) {
        let k = KernelSpec::canonical(g, l).unwrap();
        let f = k.shape_value(s).unwrap();
        let r = k.rate(s, 1.0 - s);
        prop_assert!((f - r).abs() <= 1e-12 * f);
    }
}
