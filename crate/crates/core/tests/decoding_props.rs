use hag::decoding::{
    apply_repetition_penalty, apply_temperature, apply_top_k, apply_top_p, transform_pipeline, LogitVector, ProbVector,
};
use hag::HyperparamConfig;
use proptest::prelude::*;

fn plain_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

fn normalise(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

/// Minimal prefix by exhaustive search over prefix lengths of the sorted order.
fn brute_force_nucleus(probs: &[f64], p: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap().then(a.cmp(&b)));
    for m in 1..=order.len() {
        let mass: f64 = order[..m].iter().map(|&i| probs[i]).sum();
        if mass >= p - 1e-12 {
            let mut kept = order[..m].to_vec();
            kept.sort_unstable();
            return kept;
        }
    }
    let mut all = order;
    all.sort_unstable();
    all
}

fn logits_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-8.0f64..8.0, 1..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn entropy_non_decreasing_in_temperature(logits in logits_strategy(), t1 in 0.1f64..2.0, t2 in 0.1f64..2.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let v = LogitVector::new(logits).unwrap();
        let h_lo = apply_temperature(&v, lo).unwrap().softmax().entropy();
        let h_hi = apply_temperature(&v, hi).unwrap().softmax().entropy();
        prop_assert!(h_lo <= h_hi + 1e-12, "H({lo})={h_lo} > H({hi})={h_hi}");
    }

    #[test]
    fn identity_settings_match_plain_softmax(logits in prop::collection::vec(-20.0f64..20.0, 1..100)) {
        let v = LogitVector::new(logits.clone()).unwrap();
        let identity = HyperparamConfig::new(1.0, 1.0, 100, 1.0).unwrap();
        let context: Vec<usize> = (0..logits.len()).step_by(3).collect();
        let got = transform_pipeline(&v, &context, &identity).unwrap();
        for (a, b) in got.probs().iter().zip(plain_softmax(&logits)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn top_k_support_size(logits in logits_strategy(), k in 1usize..80) {
        let v = LogitVector::new(logits.clone()).unwrap();
        let kept = apply_top_k(&v, k);
        let support = (0..logits.len()).filter(|&i| !kept.is_masked(i)).count();
        prop_assert_eq!(support, k.min(logits.len()));
        // every kept logit is >= every masked one
        let min_kept = (0..logits.len()).filter(|&i| !kept.is_masked(i)).map(|i| logits[i]).fold(f64::INFINITY, f64::min);
        prop_assert!((0..logits.len()).filter(|&i| kept.is_masked(i)).all(|i| logits[i] <= min_kept));
    }

    #[test]
    fn repetition_penalty_touches_only_seen_tokens(
        logits in logits_strategy(),
        context in prop::collection::vec(0usize..60, 0..20),
        penalty in 1.0f64..1.5,
    ) {
        let v = LogitVector::new(logits.clone()).unwrap();
        let out = apply_repetition_penalty(&v, &context, penalty).unwrap();
        for (i, (&before, &after)) in logits.iter().zip(out.scores()).enumerate() {
            if context.contains(&i) {
                prop_assert!(after <= before);
                prop_assert_eq!(after.signum(), before.signum());
            } else {
                prop_assert_eq!(after.to_bits(), before.to_bits());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn nucleus_is_the_minimal_prefix(
        weights in prop::collection::vec(0.0f64..1.0, 1..40),
        p in 0.01f64..1.0,
    ) {
        prop_assume!(weights.iter().any(|w| *w > 1e-6));
        let probs = normalise(&weights);
        let filtered = apply_top_p(&ProbVector::new(probs.clone()).unwrap(), p).unwrap();
        prop_assert_eq!(filtered.support(), brute_force_nucleus(&probs, p));
        let total: f64 = filtered.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn repetition_penalty_formula() {
    let v = LogitVector::new(vec![2.0, -1.0, 0.5]).unwrap();
    let out = apply_repetition_penalty(&v, &[0, 1], 1.25).unwrap();
    assert_eq!(out.scores()[0], 1.6);
    assert_eq!(out.scores()[1], -1.25);
    assert_eq!(out.scores()[2].to_bits(), 0.5f64.to_bits());
}
