//! A standalone ego-tree: skewed accesses pull hot keys to the top and the
//! amortized cost tracks the access entropy.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use renet::ego_tree::{EgoTree, RouteDown};
use renet::entropy::{entropy, FreqDist};
use renet::trace::NodeId;

fn main() {
    let keys = 16u64;
    let mut tree = EgoTree::new(NodeId(0), 2);
    for k in 1..=keys {
        tree.insert(NodeId(k), NodeId(k)).unwrap();
    }
    println!("after inserts: {}", tree.dump());

    let weights: Vec<f64> = (1..=keys).map(|r| 1.0 / (r * r) as f64).collect();
    let dist = WeightedIndex::new(&weights).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts = BTreeMap::new();
    let (mut hops, mut changes) = (0, 0);
    let m = 20_000;
    for _ in 0..m {
        let k = NodeId(rng.sample(&dist) as u64 + 1);
        *counts.entry(k).or_insert(0u64) += 1;
        if let RouteDown::Hit { hops: h, .. } = tree.route_down(k) {
            hops += h;
        }
        changes += tree.adjust(k).unwrap().link_changes;
    }
    println!("after accesses: {}", tree.dump());
    println!("virtual roots: {:?}", tree.virtual_roots().collect::<Vec<_>>());
    for k in [1, 2, 8, 16] {
        println!("depth of {k}: {}", tree.depth(NodeId(k)).unwrap());
    }
    let h = entropy(&FreqDist::from_counts(counts).unwrap(), 2.0).unwrap();
    println!(
        "per access: {:.3} hops, {:.3} link changes; access entropy {h:.3} bits",
        hops as f64 / m as f64,
        changes as f64 / m as f64
    );
}
