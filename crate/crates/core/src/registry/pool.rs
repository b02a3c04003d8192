//! Replicated IIN pool: `N = 3f + 1` message-driven nodes behind a fixed
//! sequencer.
//!
//! Writes: the sequencer (node 0) orders a transaction, every reachable node
//! acknowledges `(sequence, Digest(tx))` with its node key, and once `2f + 1`
//! acknowledgements are collected the commit certificate is broadcast and each
//! node applies the transaction to its replica. The sequencer is assumed
//! honest; equivocation is not modelled.
//!
//! Reads: nodes are queried in order until `f + 1` byte-identical replies are
//! seen.
//!
//! All traffic between the pool front-end and its nodes is canonical
//! [`RegistryWire`] records routed through a link that applies the per-node
//! [`NodeFault`].

use super::{Did, DidDocument, Genesis, RegistryState, RegistryTransaction, TxKind, TxOutcome};
use crate::codec::{self, tags};
use crate::credentials::{CredentialDefinition, CredentialSchema};
use crate::crypto::{verify_record, Digest, KeyPair, RevocationRegistryState, Signature};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("quorum unavailable: {acks} acknowledgements, {needed} needed")]
    QuorumUnavailable { acks: usize, needed: usize },
    #[error("transaction signature does not verify")]
    InvalidSignature,
    #[error("not found")]
    NotFound,
    #[error("fewer than f+1 matching replies")]
    InconsistentReplicas,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NodeFault {
    #[default]
    None,
    /// All messages to and from the node are dropped.
    Unreachable,
    /// The node answers queries with corrupted bytes.
    CorruptReplies,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub node_id: u32,
    pub signature: Signature,
}

#[derive(Serialize)]
struct AckBody<'a> {
    iin_id: &'a str,
    sequence: u64,
    tx_digest: &'a Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitReceipt {
    pub sequence: u64,
    pub tx_digest: Digest,
    pub kind: TxKind,
    pub outcome: TxOutcome,
    pub acks: Vec<Ack>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommittedEntry {
    pub sequence: u64,
    pub tx: RegistryTransaction,
    pub outcome: TxOutcome,
}

/// One commit, as reported to the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitEvent {
    pub iin_id: String,
    pub sequence: u64,
    pub kind: TxKind,
    pub submitter: Did,
    pub outcome: TxOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedDid {
    pub document: DidDocument,
    pub verinym: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Query {
    Did(Did),
    Schema(String),
    CredDef(String),
    Revocation(Did),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Artifact {
    Did(ResolvedDid),
    Schema(CredentialSchema),
    CredDef(CredentialDefinition),
    Revocation(RevocationRegistryState),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegistryWire {
    Order { sequence: u64, tx: RegistryTransaction },
    Ack { sequence: u64, ack: Ack },
    Commit { sequence: u64, tx: RegistryTransaction, acks: Vec<Ack> },
    Applied { sequence: u64 },
    Query(Query),
    Reply(Option<Artifact>),
}

/// Read side of the registry, used by anchors, agents and verifiers.
pub trait RegistryReader {
    fn resolve_did(&self, did: &Did) -> Result<ResolvedDid, RegistryError>;
    fn read_schema(&self, schema_id: &str) -> Result<CredentialSchema, RegistryError>;
    fn read_cred_def(&self, cred_def_id: &str) -> Result<CredentialDefinition, RegistryError>;
    fn read_revocation(&self, issuer: &Did) -> Result<RevocationRegistryState, RegistryError>;
}

#[derive(Debug, Clone)]
pub struct IinNode {
    pub node_id: u32,
    keypair: KeyPair,
    genesis: Genesis,
    replica: RegistryState,
    log: Vec<CommittedEntry>,
}

impl IinNode {
    pub fn new(node_id: u32, keypair: KeyPair, genesis: Genesis) -> Self {
        let replica = RegistryState::from_genesis(&genesis);
        IinNode {
            node_id,
            keypair,
            genesis,
            replica,
            log: Vec::new(),
        }
    }

    pub fn replica(&self) -> &RegistryState {
        &self.replica
    }

    pub fn log(&self) -> &[CommittedEntry] {
        &self.log
    }

    pub fn state_hash(&self) -> Digest {
        self.replica.state_hash()
    }

    fn quorum(&self) -> usize {
        let f = (self.genesis.node_keys.len().saturating_sub(1)) / 3;
        2 * f + 1
    }

    fn ack_valid(&self, sequence: u64, tx_digest: &Digest, ack: &Ack) -> bool {
        let Some(key) = self.genesis.node_keys.get(ack.node_id as usize) else {
            return false;
        };
        let body = AckBody {
            iin_id: &self.genesis.iin_id,
            sequence,
            tx_digest,
        };
        verify_record(key, tags::REGISTRY_ACK, &body, &ack.signature)
    }

    fn append(&mut self, sequence: u64, tx: RegistryTransaction) {
        let outcome = self.replica.apply(&tx);
        self.log.push(CommittedEntry {
            sequence,
            tx,
            outcome,
        });
    }

    fn answer(&self, query: &Query) -> Option<Artifact> {
        let state = &self.replica;
        match query {
            Query::Did(did) => state.docs.get(did).map(|doc| {
                Artifact::Did(ResolvedDid {
                    document: doc.clone(),
                    verinym: state.is_verinym(doc),
                })
            }),
            Query::Schema(id) => state.schemas.get(id).cloned().map(Artifact::Schema),
            Query::CredDef(id) => state.cred_defs.get(id).cloned().map(Artifact::CredDef),
            Query::Revocation(did) => state.revocation.get(did).cloned().map(Artifact::Revocation),
        }
    }

    /// Processes one inbound message; at most one reply.
    pub fn handle(&mut self, message: RegistryWire) -> Option<RegistryWire> {
        match message {
            RegistryWire::Order { sequence, tx } => {
                if sequence != self.log.len() as u64 {
                    return None;
                }
                let body = AckBody {
                    iin_id: &self.genesis.iin_id,
                    sequence,
                    tx_digest: &tx.digest(),
                };
                let signature = self.keypair.sign_record(tags::REGISTRY_ACK, &body);
                Some(RegistryWire::Ack {
                    sequence,
                    ack: Ack {
                        node_id: self.node_id,
                        signature,
                    },
                })
            }
            RegistryWire::Commit { sequence, tx, acks } => {
                if sequence != self.log.len() as u64 {
                    return None;
                }
                let digest = tx.digest();
                let mut signers: Vec<u32> = acks
                    .iter()
                    .filter(|a| self.ack_valid(sequence, &digest, a))
                    .map(|a| a.node_id)
                    .collect();
                signers.sort_unstable();
                signers.dedup();
                if signers.len() < self.quorum() {
                    return None;
                }
                self.append(sequence, tx);
                Some(RegistryWire::Applied { sequence })
            }
            RegistryWire::Query(q) => Some(RegistryWire::Reply(self.answer(&q))),
            RegistryWire::Ack { .. } | RegistryWire::Applied { .. } | RegistryWire::Reply(_) => {
                None
            }
        }
    }

    /// Rebuilds a replica by folding a dumped log over the genesis state.
    pub fn replay(genesis: &Genesis, log: &[CommittedEntry]) -> RegistryState {
        let mut state = RegistryState::from_genesis(genesis);
        for entry in log {
            state.apply(&entry.tx);
        }
        state
    }
}

#[derive(Debug, Clone)]
pub struct IinPool {
    iin_id: String,
    genesis: Genesis,
    nodes: Vec<IinNode>,
    faults: Vec<NodeFault>,
    events: Vec<CommitEvent>,
}

impl IinPool {
    /// Builds a pool of `node_keys.len()` nodes; needs at least 4 (f >= 1).
    pub fn new(genesis: Genesis, node_keys: Vec<KeyPair>) -> Self {
        assert!(node_keys.len() >= 4, "an IIN pool needs N = 3f+1 >= 4 nodes");
        let mut genesis = genesis;
        genesis.node_keys = node_keys.iter().map(|k| k.public_key).collect();
        let nodes: Vec<IinNode> = node_keys
            .into_iter()
            .enumerate()
            .map(|(i, k)| IinNode::new(i as u32, k, genesis.clone()))
            .collect();
        IinPool {
            iin_id: genesis.iin_id.clone(),
            faults: vec![NodeFault::None; nodes.len()],
            genesis,
            nodes,
            events: Vec::new(),
        }
    }

    pub fn iin_id(&self) -> &str {
        &self.iin_id
    }

    pub fn genesis(&self) -> &Genesis {
        &self.genesis
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn f(&self) -> usize {
        (self.nodes.len() - 1) / 3
    }

    pub fn nodes(&self) -> &[IinNode] {
        &self.nodes
    }

    pub fn fault(&self, node: usize) -> NodeFault {
        self.faults[node]
    }

    /// Changes a node's fault mode. A node leaving `Unreachable` catches up
    /// on the entries it missed from the sequencer.
    pub fn set_fault(&mut self, node: usize, fault: NodeFault) {
        self.faults[node] = fault;
        if fault != NodeFault::Unreachable && node != 0 {
            let missing: Vec<CommittedEntry> =
                self.nodes[0].log[self.nodes[node].log.len()..].to_vec();
            for entry in missing {
                self.nodes[node].append(entry.sequence, entry.tx);
            }
        }
    }

    /// Takes the commit events recorded since the last call.
    pub fn drain_events(&mut self) -> Vec<CommitEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn state_hashes(&self) -> Vec<Digest> {
        self.nodes.iter().map(IinNode::state_hash).collect()
    }

    /// Replica state of the sequencer, for inspection.
    pub fn sequencer_state(&self) -> &RegistryState {
        self.nodes[0].replica()
    }

    fn link(&mut self, node: usize, message: &RegistryWire) -> Option<RegistryWire> {
        if self.faults[node] == NodeFault::Unreachable {
            return None;
        }
        let inbound = codec::encode_tagged(tags::REGISTRY_WIRE, message);
        let decoded: RegistryWire = codec::decode_tagged(tags::REGISTRY_WIRE, &inbound).ok()?;
        let reply = self.nodes[node].handle(decoded)?;
        let mut outbound = codec::encode_tagged(tags::REGISTRY_WIRE, &reply);
        if self.faults[node] == NodeFault::CorruptReplies && matches!(reply, RegistryWire::Reply(_))
        {
            let last = outbound.len() - 1;
            outbound[last] ^= node as u8 + 1;
        }
        codec::decode_tagged(tags::REGISTRY_WIRE, &outbound).ok()
    }

    /// Orders, certifies and commits `tx`. Transactions that fail validation
    /// are still committed, as explicit rejections.
    pub fn submit(&mut self, tx: RegistryTransaction) -> Result<CommitReceipt, RegistryError> {
        let key = self
            .sequencer_state()
            .key_of(&tx.submitter_did)
            .copied()
            .ok_or(RegistryError::InvalidSignature)?;
        if !tx.signature_valid(&key) {
            return Err(RegistryError::InvalidSignature);
        }
        let needed = 2 * self.f() + 1;
        if self.faults[0] == NodeFault::Unreachable {
            return Err(RegistryError::QuorumUnavailable { acks: 0, needed });
        }
        let sequence = self.nodes[0].log.len() as u64;
        let digest = tx.digest();
        let order = RegistryWire::Order {
            sequence,
            tx: tx.clone(),
        };
        let mut acks = Vec::new();
        for node in 0..self.nodes.len() {
            if let Some(RegistryWire::Ack { sequence: s, ack }) = self.link(node, &order) {
                if s == sequence && self.nodes[0].ack_valid(sequence, &digest, &ack) {
                    acks.push(ack);
                }
            }
        }
        if acks.len() < needed {
            return Err(RegistryError::QuorumUnavailable {
                acks: acks.len(),
                needed,
            });
        }
        let commit = RegistryWire::Commit {
            sequence,
            tx: tx.clone(),
            acks: acks.clone(),
        };
        for node in 0..self.nodes.len() {
            self.link(node, &commit);
        }
        let outcome = self.nodes[0]
            .log
            .last()
            .filter(|e| e.sequence == sequence)
            .map(|e| e.outcome.clone())
            .expect("sequencer applies every certified commit");
        self.events.push(CommitEvent {
            iin_id: self.iin_id.clone(),
            sequence,
            kind: tx.kind(),
            submitter: tx.submitter_did.clone(),
            outcome: outcome.clone(),
        });
        Ok(CommitReceipt {
            sequence,
            tx_digest: digest,
            kind: tx.kind(),
            outcome,
            acks,
        })
    }

    /// Queries nodes in order until `f + 1` byte-identical replies agree.
    pub fn query(&self, query: &Query) -> Result<Artifact, RegistryError> {
        let need = self.f() + 1;
        let request = codec::encode_tagged(tags::REGISTRY_WIRE, &RegistryWire::Query(query.clone()));
        let mut tally: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
        for node in 0..self.nodes.len() {
            if self.faults[node] == NodeFault::Unreachable {
                continue;
            }
            let Ok(RegistryWire::Query(q)) = codec::decode_tagged(tags::REGISTRY_WIRE, &request)
            else {
                return Err(RegistryError::InconsistentReplicas);
            };
            let answer = RegistryWire::Reply(self.nodes[node].answer(&q));
            let mut reply = codec::encode_tagged(tags::REGISTRY_WIRE, &answer);
            if self.faults[node] == NodeFault::CorruptReplies {
                let last = reply.len() - 1;
                reply[last] ^= node as u8 + 1;
            }
            let count = tally.entry(reply.clone()).or_insert(0);
            *count += 1;
            if *count >= need {
                return match codec::decode_tagged(tags::REGISTRY_WIRE, &reply) {
                    Ok(RegistryWire::Reply(Some(artifact))) => Ok(artifact),
                    Ok(RegistryWire::Reply(None)) => Err(RegistryError::NotFound),
                    _ => Err(RegistryError::InconsistentReplicas),
                };
            }
        }
        Err(RegistryError::InconsistentReplicas)
    }

    /// Generic read by artifact kind.
    pub fn read_artifact(&self, query: &Query) -> Result<Artifact, RegistryError> {
        self.query(query)
    }
}

impl RegistryReader for IinPool {
    fn resolve_did(&self, did: &Did) -> Result<ResolvedDid, RegistryError> {
        match self.query(&Query::Did(did.clone()))? {
            Artifact::Did(r) => Ok(r),
            _ => Err(RegistryError::InconsistentReplicas),
        }
    }

    fn read_schema(&self, schema_id: &str) -> Result<CredentialSchema, RegistryError> {
        match self.query(&Query::Schema(schema_id.to_string()))? {
            Artifact::Schema(s) => Ok(s),
            _ => Err(RegistryError::InconsistentReplicas),
        }
    }

    fn read_cred_def(&self, cred_def_id: &str) -> Result<CredentialDefinition, RegistryError> {
        match self.query(&Query::CredDef(cred_def_id.to_string()))? {
            Artifact::CredDef(d) => Ok(d),
            _ => Err(RegistryError::InconsistentReplicas),
        }
    }

    fn read_revocation(&self, issuer: &Did) -> Result<RevocationRegistryState, RegistryError> {
        match self.query(&Query::Revocation(issuer.clone()))? {
            Artifact::Revocation(r) => Ok(r),
            _ => Err(RegistryError::InconsistentReplicas),
        }
    }
}

/// Direct reads against one replica, without quorum. Handy in unit tests.
impl RegistryReader for RegistryState {
    fn resolve_did(&self, did: &Did) -> Result<ResolvedDid, RegistryError> {
        self.docs
            .get(did)
            .map(|doc| ResolvedDid {
                document: doc.clone(),
                verinym: self.is_verinym(doc),
            })
            .ok_or(RegistryError::NotFound)
    }

    fn read_schema(&self, schema_id: &str) -> Result<CredentialSchema, RegistryError> {
        self.schemas.get(schema_id).cloned().ok_or(RegistryError::NotFound)
    }

    fn read_cred_def(&self, cred_def_id: &str) -> Result<CredentialDefinition, RegistryError> {
        self.cred_defs.get(cred_def_id).cloned().ok_or(RegistryError::NotFound)
    }

    fn read_revocation(&self, issuer: &Did) -> Result<RevocationRegistryState, RegistryError> {
        self.revocation.get(issuer).cloned().ok_or(RegistryError::NotFound)
    }
}

/// Reads across several IINs. DIDs route to the IIN named in them; schema and
/// credential definition ids carry no IIN, so each pool is tried in order.
#[derive(Clone, Copy)]
pub struct IinSet<'a>(pub &'a BTreeMap<String, IinPool>);

impl IinSet<'_> {
    fn first<T>(&self, read: impl Fn(&IinPool) -> Result<T, RegistryError>) -> Result<T, RegistryError> {
        let mut last = RegistryError::NotFound;
        for pool in self.0.values() {
            match read(pool) {
                Ok(v) => return Ok(v),
                Err(e) => last = e,
            }
        }
        Err(last)
    }

    fn pool_for(&self, did: &Did) -> Result<&IinPool, RegistryError> {
        self.0.get(did.iin_id()).ok_or(RegistryError::NotFound)
    }
}

impl RegistryReader for IinSet<'_> {
    fn resolve_did(&self, did: &Did) -> Result<ResolvedDid, RegistryError> {
        self.pool_for(did)?.resolve_did(did)
    }

    fn read_schema(&self, schema_id: &str) -> Result<CredentialSchema, RegistryError> {
        self.first(|p| p.read_schema(schema_id))
    }

    fn read_cred_def(&self, cred_def_id: &str) -> Result<CredentialDefinition, RegistryError> {
        self.first(|p| p.read_cred_def(cred_def_id))
    }

    fn read_revocation(&self, issuer: &Did) -> Result<RevocationRegistryState, RegistryError> {
        self.pool_for(issuer)?.read_revocation(issuer)
    }
}
