mod common;

use std::collections::BTreeSet;

use common::{names, oracle_aggregate, oracle_document_subgraph, random_graph, random_seeds};
use kgda_core::kgraph::{aggregate_subgraph, document_subgraph, vicinity, SeedSet};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn subgraph_ops_match_bfs_oracle_on_200_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for case in 0..200 {
        let g = random_graph(&mut rng);
        let seeds = random_seeds(&mut rng);
        let set = SeedSet::new(seeds.iter().cloned());
        assert_eq!(
            names(&aggregate_subgraph(&g, &set)),
            oracle_aggregate(&g, &seeds),
            "aggregate_subgraph, case {case}"
        );
        assert_eq!(
            names(&document_subgraph(&g, &set)),
            oracle_document_subgraph(&g, &seeds),
            "document_subgraph, case {case}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn document_subgraph_stays_within_one_hop(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng);
        let set = SeedSet::new(random_seeds(&mut rng));
        let near: BTreeSet<String> = vicinity(&g, &set).into_iter().map(|n| g.node_name(n).to_string()).collect();
        let sub = document_subgraph(&g, &set);
        for (h, _, t) in sub.named_triplets() {
            prop_assert!(near.contains(h) && near.contains(t));
        }
        prop_assert!(names(&sub).is_subset(&names(&g)));
        let agg = aggregate_subgraph(&g, &set);
        prop_assert!(names(&document_subgraph(&agg, &set)).is_subset(&names(&sub)));
    }

    #[test]
    fn aggregate_is_monotone_in_seeds(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng);
        let small = random_seeds(&mut rng);
        let mut big = small.clone();
        big.extend(random_seeds(&mut rng));
        let a = names(&aggregate_subgraph(&g, &SeedSet::new(small.iter().cloned())));
        let b = names(&aggregate_subgraph(&g, &SeedSet::new(big.iter().cloned())));
        prop_assert!(a.is_subset(&b));
    }
}
