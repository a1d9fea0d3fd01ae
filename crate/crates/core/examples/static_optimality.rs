//! Ratio of the online network's cost to a fixed network built with full
//! knowledge of the trace, as the trace grows.

use renet::baselines::{build_static_dan, stat_cost};
use renet::experiment::replay;
use renet::metrics::{average_cost, rho_estimate};
use renet::renet::NetParams;
use renet::trace::{generate, WorkloadSpec};

fn main() {
    for m in [50_000, 100_000, 200_000] {
        for spec in [WorkloadSpec::Torus { n: 256, m }, WorkloadSpec::StarZipf { n: 256, m, alpha: 1.0 }] {
            let trace = generate(&spec, 1).unwrap();
            let params = NetParams::new(256, 4.0).unwrap();
            let online = average_cost(&replay(&trace, params.clone(), false).unwrap().ledger, true).unwrap();
            let stat = stat_cost(&build_static_dan(&trace, &params).unwrap(), &trace).unwrap();
            println!(
                "{:<10} m={m:<7} online {online:.3} static {stat:.3} rho {:.3}",
                spec.name(),
                rho_estimate(online, stat).unwrap()
            );
        }
    }
}
