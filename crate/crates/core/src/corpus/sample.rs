use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::AnnotatedPair;

/// Draws up to `per_section` pairs from each IPC section (of patent `a`'s first code).
///
/// Selection within a section is a seeded shuffle; the output keeps input order.
pub fn stratified_sample(pairs: &[AnnotatedPair], per_section: usize, seed: u64) -> Vec<AnnotatedPair> {
    let mut by_section: BTreeMap<char, Vec<usize>> = BTreeMap::new();
    for (idx, pair) in pairs.iter().enumerate() {
        by_section.entry(pair.section()).or_default().push(idx);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = Vec::new();
    for indices in by_section.values_mut() {
        indices.shuffle(&mut rng);
        chosen.extend(indices.iter().take(per_section));
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| pairs[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::testing::pair;

    fn dataset(sections: &[&str]) -> Vec<AnnotatedPair> {
        sections
            .iter()
            .enumerate()
            .map(|(i, code)| AnnotatedPair::from_gold(pair(&format!("p{i}"), code), 0.5).unwrap())
            .collect()
    }

    #[test]
    fn zero_per_section_is_empty() {
        assert!(stratified_sample(&dataset(&["G06F", "A01B"]), 0, 1).is_empty());
    }

    #[test]
    fn caps_each_section() {
        let data = dataset(&["G06F", "G06K", "G01N", "G06T"]);
        assert_eq!(stratified_sample(&data, 2, 7).len(), 2);
        let mixed = dataset(&["G06F", "A01B", "G06K", "A61K", "H04L"]);
        let out = stratified_sample(&mixed, 1, 7);
        let mut sections: Vec<char> = out.iter().map(|p| p.section()).collect();
        sections.sort();
        assert_eq!(sections, vec!['A', 'G', 'H']);
    }

    #[test]
    fn deterministic_per_seed() {
        let data = dataset(&["G06F"; 30]);
        let ids = |seed| {
            stratified_sample(&data, 5, seed)
                .iter()
                .map(|p| p.pair_id().to_string())
                .collect::<Vec<_>>()
        };
        assert_eq!(ids(42), ids(42));
        assert_ne!(ids(42), ids(43));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn output_is_sub_multiset(secs in prop::collection::vec(0usize..8, 0..40), k in 0usize..6, seed: u64) {
                let codes = ["A01B", "B65D", "C22B", "D01F", "E04B", "F16D", "G06F", "H04L"];
                let data = dataset(&secs.iter().map(|&i| codes[i]).collect::<Vec<_>>());
                let out = stratified_sample(&data, k, seed);
                let ids: Vec<&str> = data.iter().map(|p| p.pair_id()).collect();
                let mut last = None;
                for p in &out {
                    let pos = ids.iter().position(|id| *id == p.pair_id()).unwrap();
                    prop_assert!(last.is_none_or(|l| pos > l));
                    last = Some(pos);
                }
                for code in codes {
                    let n = out.iter().filter(|p| p.section() == code.chars().next().unwrap()).count();
                    prop_assert!(n <= k);
                }
                prop_assert_eq!(out, stratified_sample(&data, k, seed));
            }
        }
    }
}
