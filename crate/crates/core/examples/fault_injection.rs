//! Bus faults during a sync: a dropped countersign request times out and the
//! initiator retries; a tampered envelope is rejected by the receiver.

use iin_core::harness::{bundled, parse_scenario, Check, Runner, Step, World};
use iin_core::transport::FaultAction;

fn main() {
    let mut config = parse_scenario(bundled("two-network").unwrap()).unwrap();
    config.steps.truncate(1);
    for (label, action) in [("drop", FaultAction::Drop), ("tamper", FaultAction::Tamper), ("duplicate", FaultAction::Duplicate)] {
        let mut runner = Runner::new(World::build(&config, 3).unwrap());
        runner.run_steps(&config.steps);
        runner.run_steps(&[
            Step::Fault {
                from: Some("agent:Buyer".into()),
                to: Some("agent:Seller".into()),
                kind: Some("countersign_request".into()),
                occurrence: Some(1),
                fault: action,
            },
            Step::Sync { network: "SWT".into(), foreign: "STL".into(), initiators: vec!["Buyer".into()], concurrent: false },
            Step::Assert(Check::RecordsMatchSource { network: "SWT".into() }),
            Step::Assert(Check::TraceValid),
        ]);
        let (report, world) = runner.finish(3);
        let buyer = world.sim.agent("Buyer").unwrap();
        let attempts = buyer.syncs.values().map(|s| s.attempt).max().unwrap_or(0);
        println!(
            "{label:>9}: passed={} max attempt={attempts} retries={} ticks={}",
            report.passed(),
            world.trace.of_kind("agent.retry").count(),
            report.ticks
        );
    }
}
