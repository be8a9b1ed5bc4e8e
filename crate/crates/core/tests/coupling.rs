use mkdv_core::coupling::{
    build_universal, mnls_symmetric_value, null_space_dimension, universal_tensors,
    verify_consistency, CouplingSet, SymmetricPair, Weights,
};
use proptest::prelude::*;

/// Weights in `[-3, 3]` kept away from zero, and `s2` kept away from `1/sum(w)`.
fn admissible() -> impl Strategy<Value = (Vec<f64>, f64, f64)> {
    let weight = prop_oneof![-3.0..-0.1f64, 0.1..3.0f64];
    (
        prop::collection::vec(weight, 1..=6),
        -2.0..2.0f64,
        -2.0..2.0f64,
    )
        .prop_filter("s2 too close to 1/sum(w)", |(w, _, s2)| {
            (1.0 - s2 * w.iter().sum::<f64>()).abs() > 0.25
        })
}

fn scaled(c: &CouplingSet, factor: f64) -> CouplingSet {
    CouplingSet {
        l_matrix: &c.l_matrix * factor,
        r_tensor: c.r_tensor.scaled(factor),
        ..c.clone()
    }
}

#[test]
fn mnls_value_is_always_admissible() {
    for w in [vec![1.0, 1.0], vec![1.0, 2.0], vec![0.5, 3.0, 7.0]] {
        let w = Weights::new(w).unwrap();
        let s = mnls_symmetric_value(&w).unwrap();
        let c = build_universal(&w, SymmetricPair::equal(s)).unwrap();
        assert!(verify_consistency(&c).passes(1e-12));
    }
}

proptest! {
    #[test]
    fn universal_form_satisfies_both_relations((w, s1, s2) in admissible()) {
        let c = build_universal(&Weights::new(w).unwrap(), SymmetricPair::new(s1, s2)).unwrap();
        let report = verify_consistency(&c);
        prop_assert!(report.l_inverse_relation.unwrap() < 1e-12, "{report:?}");
        prop_assert!(report.linear_relation < 1e-12, "{report:?}");
        prop_assert!(report.symmetry < 1e-12, "{report:?}");
    }

    #[test]
    fn column_sums_reproduce_weights((w, s1, s2) in admissible()) {
        let c = build_universal(&Weights::new(w.clone()).unwrap(), SymmetricPair::new(s1, s2)).unwrap();
        for (j, wj) in w.iter().enumerate() {
            prop_assert!((c.l_matrix.column(j).sum() - wj).abs() <= 1e-14 * wj.abs().max(1.0) * w.len() as f64);
        }
    }

    #[test]
    fn common_rescaling_keeps_inverse_relation((w, s1, s2) in admissible(), factor in prop_oneof![-5.0..-0.2f64, 0.2..5.0f64]) {
        let c = build_universal(&Weights::new(w).unwrap(), SymmetricPair::new(s1, s2)).unwrap();
        let before = verify_consistency(&c).l_inverse_relation.unwrap();
        let after = verify_consistency(&scaled(&c, factor)).l_inverse_relation.unwrap();
        prop_assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_span_the_null_space(
        (w, s1, s2) in admissible(),
        mask in prop::collection::vec(any::<bool>(), 6),
    ) {
        let masked: Vec<f64> = w.iter().zip(&mask).map(|(v, zero)| if *zero { 0.0 } else { *v }).collect();
        let zeros = masked.iter().filter(|v| **v == 0.0).count();
        let sum: f64 = masked.iter().sum();
        prop_assume!((1.0 - s2 * sum).abs() > 0.25);
        let c = universal_tensors(Weights::new_unchecked(masked), SymmetricPair::new(s1, s2));
        prop_assert_eq!(null_space_dimension(&c.l_matrix), zeros);
    }
}
