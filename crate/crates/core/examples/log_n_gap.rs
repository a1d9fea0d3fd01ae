//! Phased torus traffic: the online network pays per-phase entropy while
//! a demand-oblivious constant-degree network pays its diameter.

use renet::baselines::{oblivious_cost, ObliviousNet};
use renet::experiment::replay;
use renet::metrics::average_cost;
use renet::renet::NetParams;
use renet::trace::{generate, WorkloadSpec};

fn main() {
    println!("{:>6} {:>10} {:>10} {:>8}", "n", "online", "oblivious", "ratio");
    for n in [64, 256, 1024, 4096] {
        let trace = generate(&WorkloadSpec::RoundRobinGrids { n, k: 8, m_each: 32 * n }, 1).unwrap();
        let r = replay(&trace, NetParams::new(n, 4.0).unwrap(), false).unwrap();
        let online = average_cost(&r.ledger, false).unwrap();
        let obl = oblivious_cost(&ObliviousNet::new(trace.nodes()).unwrap(), &trace).unwrap();
        println!("{n:>6} {online:>10.3} {obl:>10.3} {:>8.3}", obl / online);
    }
}
