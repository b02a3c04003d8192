//! Scenario files: TOML, validated as a whole so every problem is reported at once.

use crate::registry::{NodeFault, Role};
use crate::transport::FaultAction;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

pub const DEFAULT_TICK_CEILING: u64 = 100_000;
pub const DEFAULT_MSP_VALIDITY: (u64, u64) = (0, 1_000_000);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ceiling")]
    pub tick_ceiling: u64,
    #[serde(default)]
    pub bus: BusSection,
    #[serde(default, rename = "iin")]
    pub iins: Vec<IinSpec>,
    #[serde(default, rename = "anchor")]
    pub anchors: Vec<AnchorSpec>,
    #[serde(default, rename = "network")]
    pub networks: Vec<NetworkSpec>,
    #[serde(default, rename = "org")]
    pub orgs: Vec<OrgSpec>,
    #[serde(default, rename = "step")]
    pub steps: Vec<Step>,
}

fn default_ceiling() -> u64 {
    DEFAULT_TICK_CEILING
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusSection {
    #[serde(default = "default_latency")]
    pub latency: (u64, u64),
    #[serde(default)]
    pub drop_rate: f64,
}

fn default_latency() -> (u64, u64) {
    (1, 3)
}

impl Default for BusSection {
    fn default() -> Self {
        BusSection { latency: default_latency(), drop_rate: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IinSpec {
    pub id: String,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_threshold")]
    pub verinym_threshold: u32,
}

fn default_nodes() -> usize {
    4
}

fn default_threshold() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSpec {
    pub name: String,
    pub iin: String,
    pub roles: Vec<Role>,
    /// Network -> organizations the anchor admits as members.
    #[serde(default)]
    pub roster: BTreeMap<String, Vec<String>>,
    /// Organizations whose real-world identity the anchor has vetted.
    #[serde(default)]
    pub whitelist: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustSpec {
    pub network: String,
    pub anchor: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeatSpec {
    pub name: String,
    #[serde(default = "default_peers")]
    pub peers: usize,
    /// Overrides the network's MSP validity window for this org.
    #[serde(default)]
    pub validity: Option<(u64, u64)>,
}

fn default_peers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub id: String,
    #[serde(default = "default_validity")]
    pub msp_validity: (u64, u64),
    #[serde(default)]
    pub interop: Vec<String>,
    #[serde(default)]
    pub trust: Vec<TrustSpec>,
    #[serde(default)]
    pub orgs: Vec<SeatSpec>,
}

fn default_validity() -> (u64, u64) {
    DEFAULT_MSP_VALIDITY
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrgSpec {
    pub name: String,
    pub iin: String,
    pub oiv: String,
    /// Home network -> anchor issuing its membership credential.
    pub pmv: BTreeMap<String, String>,
    #[serde(default = "default_retry")]
    pub retry_limit: u32,
    #[serde(default = "default_timeout")]
    pub request_timeout: u64,
    #[serde(default)]
    pub resync_interval: Option<u64>,
    #[serde(default)]
    pub key_label: Option<String>,
}

fn default_retry() -> u32 {
    crate::agent::DEFAULT_RETRY_LIMIT
}

fn default_timeout() -> u64 {
    crate::agent::DEFAULT_REQUEST_TIMEOUT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Step {
    /// Verinym and membership credentials; empty `orgs` means every org.
    ConfigureIdentity {
        #[serde(default)]
        orgs: Vec<String>,
    },
    /// Sync `foreign` into `network`'s ledger.
    Sync {
        network: String,
        foreign: String,
        initiators: Vec<String>,
        #[serde(default)]
        concurrent: bool,
    },
    Revoke { anchor: String, org: String, network: String },
    RotateCert { network: String, org: String, validity: (u64, u64) },
    DataProof {
        source: String,
        destination: String,
        data: String,
        /// Required orgs; empty means every org seated in `source`.
        #[serde(default)]
        policy: Vec<String>,
        /// "ok" or an error name such as "NoIdentityRecord".
        #[serde(default)]
        expect: Option<String>,
        /// Org whose agent receives the proof-failure trigger.
        #[serde(default)]
        resync_on_failure: Option<String>,
    },
    /// Periodic-style resync for one org, now.
    Resync { org: String },
    Fault {
        #[serde(default)]
        from: Option<String>,
        #[serde(default)]
        to: Option<String>,
        #[serde(default)]
        kind: Option<String>,
        #[serde(default)]
        occurrence: Option<u32>,
        fault: FaultAction,
    },
    ClearFaults,
    IinFault { iin: String, node: usize, fault: NodeFault },
    Advance { ticks: u64 },
    Assert(Check),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum Check {
    /// `status` is ACTIVE, REVOKED or ABSENT.
    RecordStatus { network: String, foreign: String, org: String, status: String },
    /// Every org of every interoperating network has an ACTIVE record equal to its source bundle.
    RecordsMatchSource { network: String },
    /// 0 expects a valid presentation, otherwise the failing check index.
    MembershipVp { verifier: String, holder: String, network: String, expect_check: u8 },
    DigestMismatches { org: String, equals: u32 },
    MaxAttempts { org: String, at_most: u32 },
    /// Every sync session of `org` ended DONE.
    SessionsDone { org: String },
    ConfigureStatus { org: String, expect: String },
    UnilateralWrite { network: String },
    /// Events (with matching detail) appear in this order.
    TraceSequence { sequence: Vec<BTreeMap<String, String>> },
    /// `holder`'s presentation for `network` contains none of `forbidden`.
    Privacy { holder: String, network: String, forbidden: Vec<String> },
    ReplicasConverged { iin: String },
    TrustGating,
    TraceValid,
    /// Step `step` (1-based) put nothing on the bus.
    NoTraffic { step: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unresolved reference: {0}")]
    UnresolvedReference(String),
    #[error("step {index}: {reason}")]
    InvalidStep { index: usize, reason: String },
    #[error("invalid: {0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigErrors> {
    let config: ScenarioConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        ConfigErrors(vec![ConfigError::Parse { line, column, message: e.message().to_string() }])
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigErrors(vec![ConfigError::Io(format!("{}: {e}", path.display()))]))?;
    parse_scenario(&text)
}

impl ScenarioConfig {
    pub fn anchor(&self, name: &str) -> Option<&AnchorSpec> {
        self.anchors.iter().find(|a| a.name == name)
    }

    pub fn network(&self, id: &str) -> Option<&NetworkSpec> {
        self.networks.iter().find(|n| n.id == id)
    }

    pub fn org(&self, name: &str) -> Option<&OrgSpec> {
        self.orgs.iter().find(|o| o.name == name)
    }

    fn seated(&self, network: &str, org: &str) -> bool {
        self.network(network).is_some_and(|n| n.orgs.iter().any(|s| s.name == org))
    }

    /// Collects every problem rather than stopping at the first.
    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut errs = Vec::new();
        let unresolved = |errs: &mut Vec<ConfigError>, what: String| errs.push(ConfigError::UnresolvedReference(what));

        let dup = |kind: &str, names: Vec<&str>, errs: &mut Vec<ConfigError>| {
            let mut seen = BTreeSet::new();
            for n in names {
                if !seen.insert(n) {
                    errs.push(ConfigError::Invalid(format!("duplicate {kind} {n:?}")));
                }
            }
        };
        dup("iin", self.iins.iter().map(|i| i.id.as_str()).collect(), &mut errs);
        dup("anchor", self.anchors.iter().map(|a| a.name.as_str()).collect(), &mut errs);
        dup("network", self.networks.iter().map(|n| n.id.as_str()).collect(), &mut errs);
        dup("org", self.orgs.iter().map(|o| o.name.as_str()).collect(), &mut errs);

        if self.bus.latency.0 > self.bus.latency.1 {
            errs.push(ConfigError::Invalid("bus latency min exceeds max".into()));
        }
        if !(0.0..=1.0).contains(&self.bus.drop_rate) {
            errs.push(ConfigError::Invalid("bus drop_rate outside [0, 1]".into()));
        }
        for iin in &self.iins {
            if iin.nodes == 0 || (iin.nodes - 1) % 3 != 0 {
                errs.push(ConfigError::Invalid(format!("iin {}: node count must be 3f+1", iin.id)));
            }
            if iin.verinym_threshold == 0 {
                errs.push(ConfigError::Invalid(format!("iin {}: verinym_threshold must be at least 1", iin.id)));
            }
        }
        let has_iin = |id: &str| self.iins.iter().any(|i| i.id == id);
        for a in &self.anchors {
            if !has_iin(&a.iin) {
                unresolved(&mut errs, format!("anchor {} iin {:?}", a.name, a.iin));
            }
            for (net, members) in &a.roster {
                if self.network(net).is_none() {
                    unresolved(&mut errs, format!("anchor {} roster network {net:?}", a.name));
                }
                for m in members {
                    if !self.seated(net, m) && self.network(net).is_some() {
                        unresolved(&mut errs, format!("anchor {} roster org {m:?} is not in {net}", a.name));
                    }
                }
            }
            if !a.roster.is_empty() && !a.roles.contains(&Role::Pmv) {
                errs.push(ConfigError::Invalid(format!("anchor {} has a roster but no PMV role", a.name)));
            }
        }
        for n in &self.networks {
            if n.msp_validity.0 >= n.msp_validity.1 {
                errs.push(ConfigError::Invalid(format!("network {}: empty msp_validity", n.id)));
            }
            for f in &n.interop {
                if self.network(f).is_none() {
                    unresolved(&mut errs, format!("network {} interop {f:?}", n.id));
                }
            }
            for t in &n.trust {
                if self.network(&t.network).is_none() {
                    unresolved(&mut errs, format!("network {} trust network {:?}", n.id, t.network));
                }
                match self.anchor(&t.anchor) {
                    None => unresolved(&mut errs, format!("network {} trust anchor {:?}", n.id, t.anchor)),
                    Some(a) if !a.roster.contains_key(&t.network) => errs.push(ConfigError::Invalid(format!(
                        "network {}: anchor {} does not represent {}",
                        n.id, t.anchor, t.network
                    ))),
                    Some(_) => {}
                }
            }
            for s in &n.orgs {
                if self.org(&s.name).is_none() {
                    unresolved(&mut errs, format!("network {} org {:?} has no [[org]] entry", n.id, s.name));
                }
                if s.peers == 0 {
                    errs.push(ConfigError::Invalid(format!("network {} org {}: needs a peer", n.id, s.name)));
                }
            }
        }
        for o in &self.orgs {
            if !has_iin(&o.iin) {
                unresolved(&mut errs, format!("org {} iin {:?}", o.name, o.iin));
            }
            if self.anchor(&o.oiv).is_none() {
                unresolved(&mut errs, format!("org {} oiv {:?}", o.name, o.oiv));
            }
            if o.retry_limit == 0 {
                errs.push(ConfigError::Invalid(format!("org {}: retry_limit must be at least 1", o.name)));
            }
            for (net, anchor) in &o.pmv {
                if self.network(net).is_none() {
                    unresolved(&mut errs, format!("org {} network {net:?}", o.name));
                } else if !self.seated(net, &o.name) {
                    errs.push(ConfigError::Invalid(format!("org {} is not seated in {net}", o.name)));
                }
                if self.anchor(anchor).is_none() {
                    unresolved(&mut errs, format!("org {} pmv {anchor:?}", o.name));
                }
            }
        }
        for (i, step) in self.steps.iter().enumerate() {
            self.validate_step(i + 1, step, &mut errs);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errs))
        }
    }

    fn validate_step(&self, index: usize, step: &Step, errs: &mut Vec<ConfigError>) {
        let bad = |errs: &mut Vec<ConfigError>, reason: String| errs.push(ConfigError::InvalidStep { index, reason });
        let org = |errs: &mut Vec<ConfigError>, name: &str| {
            if self.org(name).is_none() {
                errs.push(ConfigError::InvalidStep { index, reason: format!("unknown org {name:?}") });
            }
        };
        let net = |errs: &mut Vec<ConfigError>, id: &str| {
            if self.network(id).is_none() {
                errs.push(ConfigError::InvalidStep { index, reason: format!("unknown network {id:?}") });
            }
        };
        match step {
            Step::ConfigureIdentity { orgs } => orgs.iter().for_each(|o| org(errs, o)),
            Step::Sync { network, foreign, initiators, .. } => {
                net(errs, network);
                net(errs, foreign);
                if initiators.is_empty() {
                    bad(errs, "sync needs at least one initiator".into());
                }
                for i in initiators {
                    org(errs, i);
                    if self.org(i).is_some() && !self.seated(network, i) {
                        bad(errs, format!("initiator {i} is not in {network}"));
                    }
                }
            }
            Step::Revoke { anchor, org: o, network } => {
                if self.anchor(anchor).is_none() {
                    bad(errs, format!("unknown anchor {anchor:?}"));
                }
                org(errs, o);
                net(errs, network);
            }
            Step::RotateCert { network, org: o, validity } => {
                net(errs, network);
                if !self.seated(network, o) {
                    bad(errs, format!("{o} is not in {network}"));
                }
                if validity.0 >= validity.1 {
                    bad(errs, "empty rotation validity".into());
                }
            }
            Step::DataProof { source, destination, policy, resync_on_failure, .. } => {
                net(errs, source);
                net(errs, destination);
                if let Some(o) = resync_on_failure {
                    org(errs, o);
                }
                let _ = policy;
            }
            Step::Resync { org: o } => org(errs, o),
            Step::Fault { .. } | Step::ClearFaults | Step::Advance { .. } => {}
            Step::IinFault { iin, node, .. } => match self.iins.iter().find(|i| &i.id == iin) {
                None => bad(errs, format!("unknown iin {iin:?}")),
                Some(i) if *node >= i.nodes => bad(errs, format!("iin {iin} has no node {node}")),
                Some(_) => {}
            },
            Step::Assert(check) => match check {
                Check::RecordStatus { network, foreign, org: o, status } => {
                    net(errs, network);
                    net(errs, foreign);
                    let _ = o;
                    if !["ACTIVE", "REVOKED", "ABSENT"].contains(&status.as_str()) {
                        bad(errs, format!("unknown status {status:?}"));
                    }
                }
                Check::RecordsMatchSource { network } => net(errs, network),
                Check::MembershipVp { verifier, holder, network, expect_check } => {
                    net(errs, verifier);
                    net(errs, network);
                    org(errs, holder);
                    if *expect_check > 7 {
                        bad(errs, "expect_check must be 0..=7".into());
                    }
                }
                Check::DigestMismatches { org: o, .. }
                | Check::MaxAttempts { org: o, .. }
                | Check::SessionsDone { org: o }
                | Check::ConfigureStatus { org: o, .. } => org(errs, o),
                Check::UnilateralWrite { network } => net(errs, network),
                Check::TraceSequence { sequence } => {
                    if sequence.iter().any(|m| !m.contains_key("kind")) {
                        bad(errs, "every trace_sequence entry needs a kind".into());
                    }
                }
                Check::Privacy { holder, network, .. } => {
                    org(errs, holder);
                    net(errs, network);
                }
                Check::ReplicasConverged { iin } => {
                    if !self.iins.iter().any(|i| &i.id == iin) {
                        bad(errs, format!("unknown iin {iin:?}"));
                    }
                }
                Check::NoTraffic { step } => {
                    if *step == 0 || *step >= index {
                        bad(errs, format!("no_traffic must name an earlier step, got {step}"));
                    }
                }
                Check::TrustGating | Check::TraceValid => {}
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "m"
[[iin]]
id = "iin1"
[[anchor]]
name = "A"
iin = "iin1"
roles = ["OIV", "PMV"]
roster = { N = ["O"] }
whitelist = ["O"]
[[network]]
id = "N"
orgs = [{ name = "O" }]
[[org]]
name = "O"
iin = "iin1"
oiv = "A"
pmv = { N = "A" }
[[step]]
action = "configure_identity"
[[step]]
action = "assert"
check = "configure_status"
org = "O"
expect = "done"
"#;

    #[test]
    fn minimal_parses() {
        let c = parse_scenario(MINIMAL).unwrap();
        assert_eq!(c.iins[0].nodes, 4);
        assert_eq!(c.bus.latency, (1, 3));
        assert_eq!(c.steps.len(), 2);
        assert!(matches!(&c.steps[1], Step::Assert(Check::ConfigureStatus { org, .. }) if org == "O"));
    }

    #[test]
    fn empty_file_is_parse_error() {
        let e = parse_scenario("").unwrap_err();
        assert!(matches!(e.0[0], ConfigError::Parse { .. }));
    }

    #[test]
    fn parse_error_has_location() {
        let e = parse_scenario("name = \"x\"\n[[iin]]\nid = 3\n").unwrap_err();
        match &e.0[0] {
            ConfigError::Parse { line, .. } => assert_eq!(*line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_errors_are_reported() {
        let text = MINIMAL
            .replace("oiv = \"A\"", "oiv = \"Nope\"")
            .replace("id = \"N\"\n", "id = \"N\"\ntrust = [{ network = \"N\", anchor = \"Ghost\" }]\n")
            .replace("org = \"O\"\nexpect", "org = \"Z\"\nexpect");
        let e = parse_scenario(&text).unwrap_err();
        assert_eq!(e.0.len(), 3, "{e}");
        assert!(e.0.iter().any(|x| matches!(x, ConfigError::UnresolvedReference(s) if s.contains("Ghost"))));
        assert!(e.0.iter().any(|x| matches!(x, ConfigError::UnresolvedReference(s) if s.contains("Nope"))));
        assert!(e.0.iter().any(|x| matches!(x, ConfigError::InvalidStep { index: 2, .. })));
    }
}
