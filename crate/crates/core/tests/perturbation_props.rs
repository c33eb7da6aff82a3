#[path = "support/invariants.rs"]
mod invariants;

use cars_core::concept::{AnnotatedRecord, ConceptVector, ConceptVocabulary};
use cars_core::perturb::{generate_perturbation_set, PerturbationPlan, PerturbationType};
use proptest::prelude::*;

fn valid_vector() -> impl Strategy<Value = ConceptVector> {
    let vocab = ConceptVocabulary::bundled();
    let n = vocab.len();
    prop::collection::vec(any::<bool>(), n).prop_map(move |mut bits| {
        let u = vocab.unremarkable_index();
        bits[u] = false;
        let mut v = ConceptVector::from_bits(bits);
        vocab.normalize(&mut v);
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn perturbation_sets_satisfy_invariants(v in valid_vector(), seed in any::<u64>()) {
        let vocab = ConceptVocabulary::bundled();
        let rec = AnnotatedRecord::new("rec", "", v, &vocab).unwrap();
        let set = generate_perturbation_set(&rec, &PerturbationPlan::all(seed), &vocab);
        let bad = invariants::violations(&rec, &set, &vocab);
        prop_assert!(bad.is_empty(), "{bad:?}");
    }

    #[test]
    fn generation_is_deterministic(v in valid_vector(), seed in any::<u64>()) {
        let vocab = ConceptVocabulary::bundled();
        let rec = AnnotatedRecord::new("rec", "", v, &vocab).unwrap();
        let plan = PerturbationPlan::all(seed);
        prop_assert_eq!(
            generate_perturbation_set(&rec, &plan, &vocab),
            generate_perturbation_set(&rec, &plan, &vocab)
        );
    }

    #[test]
    fn type_filter_is_respected(v in valid_vector(), seed in any::<u64>()) {
        let vocab = ConceptVocabulary::bundled();
        let rec = AnnotatedRecord::new("rec", "", v, &vocab).unwrap();
        let plan = PerturbationPlan::new([PerturbationType::Deletion], 2, seed).unwrap();
        let set = generate_perturbation_set(&rec, &plan, &vocab);
        prop_assert!(set.results.iter().all(|r| r.ptype == PerturbationType::Deletion));
    }
}
