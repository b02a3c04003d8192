use iin_core::harness::{bundled, parse_scenario, run_scenario, BUNDLED};

fn run(name: &str) -> iin_core::harness::RunReport {
    let config = parse_scenario(bundled(name).unwrap()).unwrap();
    let (report, _) = run_scenario(&config, None, None).unwrap();
    print!("{}", report.summary());
    report
}

#[test]
fn bundled_scenarios_parse() {
    for (name, text) in BUNDLED {
        let c = parse_scenario(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(&c.name, name);
    }
}

#[test]
fn two_network() {
    assert!(run("two-network").passed());
}

#[test]
fn revoke_carrier() {
    assert!(run("revoke-carrier").passed());
}

#[test]
fn cert_rotation() {
    assert!(run("cert-rotation").passed());
}

#[test]
fn retry_divergence() {
    assert!(run("retry-divergence").passed());
}

#[test]
fn concurrent_commit() {
    assert!(run("concurrent-commit").passed());
}

#[test]
fn retries_stop_at_the_limit() {
    use iin_core::agent::Phase;
    use iin_core::harness::{Check, Runner, Step, World};
    use iin_core::transport::FaultAction;

    let mut config = parse_scenario(bundled("two-network").unwrap()).unwrap();
    config.steps.truncate(1);
    let mut runner = Runner::new(World::build(&config, 4).unwrap());
    runner.run_steps(&config.steps);
    runner.run_steps(&[
        Step::Fault {
            from: None,
            to: Some("agent:Seller".into()),
            kind: Some("countersign_request".into()),
            occurrence: None,
            fault: FaultAction::Drop,
        },
        Step::Sync { network: "SWT".into(), foreign: "STL".into(), initiators: vec!["Buyer".into()], concurrent: false },
        Step::Assert(Check::RecordStatus {
            network: "SWT".into(),
            foreign: "STL".into(),
            org: "Carrier".into(),
            status: "ABSENT".into(),
        }),
        Step::Assert(Check::MaxAttempts { org: "Buyer".into(), at_most: 3 }),
        Step::Assert(Check::TraceValid),
    ]);
    let (report, world) = runner.finish(4);
    print!("{}", report.summary());
    assert!(report.passed());
    let buyer = world.sim.agent("Buyer").unwrap();
    assert!(!buyer.syncs.is_empty());
    for s in buyer.syncs.values() {
        assert_eq!(s.phase, Phase::Failed);
        assert_eq!(s.attempt, 3);
    }
}

#[test]
fn idle_step_sends_nothing() {
    let text = bundled("two-network").unwrap().to_string()
        + "\n[[step]]\naction = \"advance\"\nticks = 10\n\n[[step]]\naction = \"assert\"\ncheck = \"no_traffic\"\nstep = 13\n";
    let config = parse_scenario(&text).unwrap();
    let (report, _) = run_scenario(&config, None, None).unwrap();
    assert!(report.passed(), "{}", report.summary());
}
