//! The two-network scenario end to end, with the trace written next to the binary's cwd.

use iin_core::harness::{bundled, parse_scenario, run_scenario};

fn main() {
    let config = parse_scenario(bundled("two-network").unwrap()).unwrap();
    let (report, world) = run_scenario(&config, None, None).unwrap();
    print!("{}", report.summary());
    for (net, n) in &world.sim.networks {
        for r in n.ledger.records_for(if net == "STL" { "SWT" } else { "STL" }) {
            println!("{net} holds {}/{} {:?} digest {}", r.network_id, r.org_id, r.status, r.bundle_digest);
        }
    }
    let path = std::env::temp_dir().join("two-network.jsonl");
    world.trace.write(&path).unwrap();
    println!("trace: {} ({} events)", path.display(), world.trace.len());
}
