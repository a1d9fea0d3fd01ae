//! Generates each workload family, certifies sparsity and summarizes the
//! demand graph.

use renet::trace::{build_demand_graph, generate, sparsity_check, SparsityParams, Weights, WorkloadSpec};

fn main() {
    let n = 256;
    let specs = [
        WorkloadSpec::Torus { n, m: 20_000 },
        WorkloadSpec::StarZipf { n, m: 20_000, alpha: 1.0 },
        WorkloadSpec::RoundRobinGrids { n, k: 4, m_each: 5_000 },
        WorkloadSpec::ProductDist { n, m: 20_000, px: Weights::Zipf { alpha: 1.0 }, py: Weights::Uniform },
        WorkloadSpec::UniformPairs { n, m: 20_000 },
    ];
    println!("{:<20} {:>8} {:>10} {:>12} {:>12}", "workload", "pairs", "max out", "sparse(4,m)", "sparse(4,5k)");
    for spec in &specs {
        let trace = generate(spec, 7).unwrap();
        let g = build_demand_graph(&trace, 0..trace.len()).unwrap();
        let max_out = g.nodes.iter().map(|&u| g.out_neighbors(u).count()).max().unwrap_or(0);
        let whole = sparsity_check(&trace, SparsityParams::new(4.0, trace.len()).unwrap());
        let short = sparsity_check(&trace, SparsityParams::new(4.0, 5_000).unwrap());
        println!(
            "{:<20} {:>8} {:>10} {:>12} {:>12}",
            spec.name(),
            g.edges.len(),
            max_out,
            whole.ok,
            short.ok
        );
    }
}
