//! Node identifiers need not be `0..n`: here they are IPv4 addresses.

use std::net::Ipv4Addr;

use renet::renet::{NetParams, Network};
use renet::trace::{NodeId, Request, Trace};

fn addr(s: &str) -> NodeId {
    NodeId(u32::from(s.parse::<Ipv4Addr>().unwrap()) as u64)
}

fn main() {
    let hosts = ["10.0.0.1", "10.0.0.7", "10.0.3.2", "192.168.1.10", "192.168.1.11", "172.16.0.5"];
    let ids: Vec<NodeId> = hosts.iter().map(|h| addr(h)).collect();
    let requests: Vec<Request> = [(0, 3), (3, 0), (1, 2), (0, 4), (0, 5), (0, 1), (0, 2), (4, 5), (0, 3)]
        .iter()
        .map(|&(a, b)| Request::new(ids[a], ids[b]).unwrap())
        .collect();
    let trace = Trace::new(ids.clone(), requests).unwrap();
    let mut net = Network::with_nodes(NetParams::new(ids.len(), 0.5).unwrap(), trace.nodes()).unwrap();
    for r in trace.requests() {
        let o = net.serve_request(r).unwrap();
        let path: Vec<String> = o.path.iter().map(|x| Ipv4Addr::from(x.0 as u32).to_string()).collect();
        println!("{} hops: {}", o.hops, path.join(" -> "));
    }
    assert!(net.validate_invariants().is_empty());
    println!("{}", serde_json::to_string_pretty(&net.snapshot().size_classes).unwrap());
}
