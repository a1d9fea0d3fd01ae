//! Replays a hub-heavy workload through the self-adjusting network and
//! prints what the coordinator did.

use renet::metrics::{average_cost, window_report, CostLedger};
use renet::renet::{NetParams, Network, SizeClass};
use renet::trace::{generate, WorkloadSpec};

fn main() {
    let trace = generate(&WorkloadSpec::StarZipf { n: 128, m: 20_000, alpha: 1.0 }, 5).unwrap();
    let params = NetParams::new(128, 1.0).unwrap();
    println!(
        "theta {} delta {} reset threshold {} helper cap {}",
        params.theta, params.delta_cap, params.reset_threshold, params.helper_cap
    );
    let mut net = Network::new(params.clone()).unwrap();
    let mut ledger = CostLedger::new();
    for (i, r) in trace.requests().iter().enumerate() {
        let o = net.serve_request(r).unwrap();
        if i < 5 {
            println!("{r:?}: path {:?} hops {} adjust {} coord {}", o.path, o.hops, o.adjust_cost, o.coord_cost);
        }
        ledger.record(&o);
    }
    let large: Vec<_> =
        net.nodes().iter().filter(|&&x| net.node(x).unwrap().class() == SizeClass::Large).collect();
    println!("large nodes: {large:?}");
    let hub = net.tree(*large[0]).unwrap();
    println!("hub tree: {} entries, {} virtual roots, root {:?}", hub.len(), hub.virtual_roots().count(), hub.root());
    println!(
        "max degree {} of {}, {} links, {} resets",
        net.max_degree(),
        params.delta_cap,
        net.edge_count(),
        net.reset_count()
    );
    println!(
        "average cost {:.3}, with coordinator {:.3}",
        average_cost(&ledger, false).unwrap(),
        average_cost(&ledger, true).unwrap()
    );
    for w in window_report(&ledger, &trace, params.delta_cap as f64).unwrap() {
        println!("window {} from {}: {} requests, avg {:.3}, h_con {:.3}", w.index, w.start, w.length, w.avg_cost, w.h_con);
    }
    assert!(net.validate_invariants().is_empty());
}
