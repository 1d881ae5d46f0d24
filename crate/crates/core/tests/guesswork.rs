mod common;

use famphrase_core::guesswork::{marginal_guesswork_many, GuessworkDistribution};
use proptest::prelude::*;

use common::criteria::{alpha_one_bits, guesswork_small_models, guesswork_uniform};
use common::corpora_root;

#[test]
fn uniform_closed_form() {
    guesswork_uniform().unwrap();
}

#[test]
fn curves_match_cumulative_scan() {
    guesswork_small_models().unwrap();
}

#[test]
fn bundled_texts_near_published_values() {
    for (id, published) in [("alice", 14.7), ("sherlock", 16.5), ("pride", 16.8)] {
        if !corpora_root().join(id).join("text.txt").exists() {
            eprintln!("skipping {id}: text not present");
            continue;
        }
        let bits = alpha_one_bits(id).unwrap();
        assert!((bits - published).abs() <= 1.0, "{id}: {bits}");
    }
}

proptest! {
    #[test]
    fn guesswork_is_monotone_in_alpha(counts in prop::collection::vec(1u64..50, 1..200)) {
        let dist = GuessworkDistribution::from_counts(counts.clone()).unwrap();
        let grid: Vec<f64> = (1..=40).map(|k| k as f64 / 40.0).collect();
        let w = marginal_guesswork_many(&dist, &grid).unwrap();
        prop_assert!(w.windows(2).all(|p| p[0] <= p[1]));
        prop_assert_eq!(*w.last().unwrap(), counts.len());
        prop_assert!(w[0] >= 1);
    }
}
