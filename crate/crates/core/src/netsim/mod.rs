//! Deterministic discrete-event simulator of a content-addressed network.
//!
//! Clients ask for blocks by digest. A request travels hop by hop along the
//! shortest path toward the block's origin; the first router holding the
//! block answers, and the answer is cached by every router it passes on the
//! way back. Because a request names content rather than a location, a
//! router that already has an identical request in flight parks the new one
//! and answers it when the data comes back.
//!
//! [`compare_location_addressed`] runs the same engine with caching and
//! request coalescing switched off, so every request is served end to end by
//! the origin.

mod engine;
mod scenario;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::castore::BlockId;

pub use engine::{compare_location_addressed, run, run_with, Addressing};
pub use scenario::{ContentDecl, KillDecl, LinkDecl, NodeDecl, RequestDecl, Scenario};

pub type Tick = u64;
pub type NodeIx = usize;

/// Size of each synthetic block held by an origin.
pub const BLOCK_BYTES: usize = 256;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid network: {0}")]
    Spec(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Origin,
    Router,
    Client,
}

#[derive(Clone, Debug)]
pub struct SimNode {
    pub id: String,
    pub role: Role,
    /// Routers only; `None` is unbounded.
    pub cache_capacity: Option<usize>,
    pub links: Vec<(NodeIx, Tick)>,
    /// First tick at which the node is down.
    pub down_from: Option<Tick>,
}

impl SimNode {
    pub fn alive_at(&self, t: Tick) -> bool {
        self.down_from.is_none_or(|k| t < k)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FileInfo {
    pub origin: NodeIx,
    pub blocks: Vec<BlockId>,
}

/// A built network: nodes, links and the content each origin serves.
#[derive(Clone, Debug)]
pub struct SimNetwork {
    nodes: Vec<SimNode>,
    index: HashMap<String, NodeIx>,
    files: BTreeMap<String, FileInfo>,
    /// Block -> (bytes, origins holding it).
    content: HashMap<BlockId, (Arc<[u8]>, Vec<NodeIx>)>,
}

/// One block request.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Request {
    pub client: NodeIx,
    pub block: BlockId,
    pub issue_tick: Tick,
}

/// Deterministic content of block `index` of `file`.
pub fn synthetic_block(file: &str, index: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(BLOCK_BYTES);
    let mut round = 0u32;
    while out.len() < BLOCK_BYTES {
        let mut seed = Vec::new();
        seed.extend_from_slice(file.as_bytes());
        seed.push(0);
        seed.extend_from_slice(&(index as u64).to_be_bytes());
        seed.extend_from_slice(&round.to_be_bytes());
        out.extend_from_slice(BlockId::of(&seed).digest());
        round += 1;
    }
    out.truncate(BLOCK_BYTES);
    out
}

/// Validates a scenario's topology and content and builds the network.
/// Requests and kills are not applied; see [`SimNetwork::from_scenario`].
pub fn build_network(spec: &Scenario) -> Result<SimNetwork, SimError> {
    let mut nodes = Vec::with_capacity(spec.nodes.len());
    let mut index = HashMap::with_capacity(spec.nodes.len());
    for n in &spec.nodes {
        if index.insert(n.id.clone(), nodes.len()).is_some() {
            return Err(SimError::Spec(format!("duplicate node {:?}", n.id)));
        }
        nodes.push(SimNode {
            id: n.id.clone(),
            role: n.role,
            cache_capacity: if n.role == Role::Router { n.cache } else { Some(0) },
            links: Vec::new(),
            down_from: None,
        });
    }
    let lookup = |id: &str, what: &str| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| SimError::Spec(format!("{what} references undeclared node {id:?}")))
    };
    for l in &spec.links {
        let (a, b) = (lookup(&l.a, "link")?, lookup(&l.b, "link")?);
        if a == b {
            return Err(SimError::Spec(format!("self link on {:?}", l.a)));
        }
        if l.latency == 0 {
            return Err(SimError::Spec(format!("link {}-{} has zero latency", l.a, l.b)));
        }
        if nodes[a].links.iter().any(|(n, _)| *n == b) {
            return Err(SimError::Spec(format!("duplicate link {}-{}", l.a, l.b)));
        }
        nodes[a].links.push((b, l.latency));
        nodes[b].links.push((a, l.latency));
    }
    let mut files = BTreeMap::new();
    let mut content: HashMap<BlockId, (Arc<[u8]>, Vec<NodeIx>)> = HashMap::new();
    for c in &spec.contents {
        let origin = lookup(&c.origin, "content")?;
        if nodes[origin].role != Role::Origin {
            return Err(SimError::Spec(format!("content on non-origin {:?}", c.origin)));
        }
        if files.contains_key(&c.file) {
            return Err(SimError::Spec(format!("file {:?} declared twice", c.file)));
        }
        let mut blocks = Vec::with_capacity(c.blocks);
        for i in 0..c.blocks {
            let bytes = synthetic_block(&c.file, i);
            let id = BlockId::of(&bytes);
            let slot = content.entry(id).or_insert_with(|| (bytes.into(), Vec::new()));
            if !slot.1.contains(&origin) {
                slot.1.push(origin);
            }
            blocks.push(id);
        }
        files.insert(c.file.clone(), FileInfo { origin, blocks });
    }
    Ok(SimNetwork {
        nodes,
        index,
        files,
        content,
    })
}

impl SimNetwork {
    /// Builds the network, applies kills and expands file requests into
    /// one block request per block, in file order.
    pub fn from_scenario(spec: &Scenario) -> Result<(Self, Vec<Request>), SimError> {
        let mut net = build_network(spec)?;
        for k in &spec.kills {
            let ix = net
                .node_ix(&k.node)
                .ok_or_else(|| SimError::Spec(format!("kill of undeclared node {:?}", k.node)))?;
            net.kill(ix, k.tick);
        }
        let mut requests = Vec::new();
        for r in &spec.requests {
            let client = net
                .node_ix(&r.client)
                .ok_or_else(|| SimError::Spec(format!("request from undeclared node {:?}", r.client)))?;
            if net.nodes[client].role != Role::Client {
                return Err(SimError::Spec(format!("request from non-client {:?}", r.client)));
            }
            let file = net
                .files
                .get(&r.file)
                .ok_or_else(|| SimError::Spec(format!("request for unknown file {:?}", r.file)))?;
            requests.extend(file.blocks.iter().map(|b| Request {
                client,
                block: *b,
                issue_tick: r.tick,
            }));
        }
        Ok((net, requests))
    }

    pub fn nodes(&self) -> &[SimNode] {
        &self.nodes
    }

    pub fn node_ix(&self, id: &str) -> Option<NodeIx> {
        self.index.get(id).copied()
    }

    pub fn node(&self, ix: NodeIx) -> &SimNode {
        &self.nodes[ix]
    }

    pub fn file(&self, name: &str) -> Option<&FileInfo> {
        self.files.get(name)
    }

    pub fn link_count(&self) -> usize {
        self.nodes.iter().map(|n| n.links.len()).sum::<usize>() / 2
    }

    /// Takes a node down from `tick` on.
    pub fn kill(&mut self, node: NodeIx, tick: Tick) {
        let n = &mut self.nodes[node];
        n.down_from = Some(n.down_from.map_or(tick, |k| k.min(tick)));
    }

    pub fn set_cache_capacity(&mut self, node: NodeIx, capacity: Option<usize>) {
        if self.nodes[node].role == Role::Router {
            self.nodes[node].cache_capacity = capacity;
        }
    }

    /// Requests for every block of `file` from `client` at `tick`.
    pub fn file_requests(&self, client: NodeIx, file: &str, tick: Tick) -> Vec<Request> {
        self.files
            .get(file)
            .map(|f| {
                f.blocks
                    .iter()
                    .map(|b| Request {
                        client,
                        block: *b,
                        issue_tick: tick,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    fn block(&self, id: &BlockId) -> Option<&(Arc<[u8]>, Vec<NodeIx>)> {
        self.content.get(id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FailReason {
    /// No origin holds the block.
    UnknownBlock,
    /// No path from the client to any origin holding the block.
    Unreachable,
    /// A node on the path, or the origin itself, was down.
    NodeDown,
}

impl FailReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FailReason::UnknownBlock => "unknown-block",
            FailReason::Unreachable => "unreachable",
            FailReason::NodeDown => "node-down",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RequestRecord {
    pub id: usize,
    pub client: NodeIx,
    pub block: BlockId,
    pub issue: Tick,
    pub complete: Option<Tick>,
    /// Links traversed by the request and its response.
    pub hops: u64,
    /// Node that supplied the data.
    pub source: Option<NodeIx>,
    pub failure: Option<(FailReason, NodeIx)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Metrics {
    pub node_ids: Vec<String>,
    pub origin_transmissions: Vec<u64>,
    pub cache_hits: Vec<u64>,
    /// Blocks carried over each link, keyed by (lower, higher) node index.
    pub link_transmissions: BTreeMap<(NodeIx, NodeIx), u64>,
    pub total_hops: u64,
    pub completed: u64,
    pub failed: u64,
    /// Cache-served blocks whose bytes did not hash to the requested id.
    pub cache_verify_failures: u64,
    pub records: Vec<RequestRecord>,
    pub seed: u64,
}

impl Metrics {
    pub fn requests(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn total_origin_transmissions(&self) -> u64 {
        self.origin_transmissions.iter().sum()
    }

    pub fn total_cache_hits(&self) -> u64 {
        self.cache_hits.iter().sum()
    }

    pub fn latencies(&self) -> Vec<Tick> {
        self.records.iter().filter_map(|r| r.complete.map(|c| c - r.issue)).collect()
    }

    pub fn link(&self, a: NodeIx, b: NodeIx) -> u64 {
        self.link_transmissions.get(&(a.min(b), a.max(b))).copied().unwrap_or(0)
    }

    /// Flat `key=value` report with a fixed key order.
    pub fn report(&self) -> String {
        let lat = self.latencies();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k}={v}").unwrap();
        kv("seed", self.seed.to_string());
        kv("requests", self.requests().to_string());
        kv("completed", self.completed.to_string());
        kv("failed", self.failed.to_string());
        kv("origin_transmissions", self.total_origin_transmissions().to_string());
        kv("cache_hits", self.total_cache_hits().to_string());
        kv("total_hops", self.total_hops.to_string());
        kv("cache_verify_failures", self.cache_verify_failures.to_string());
        kv("latency_max", lat.iter().max().copied().unwrap_or(0).to_string());
        kv("latency_sum", lat.iter().sum::<u64>().to_string());
        let mut reasons: BTreeMap<&str, u64> = BTreeMap::new();
        for r in &self.records {
            if let Some((why, _)) = r.failure {
                *reasons.entry(why.as_str()).or_default() += 1;
            }
        }
        for (why, n) in reasons {
            kv(&format!("failed.{why}"), n.to_string());
        }
        for (i, id) in self.node_ids.iter().enumerate() {
            if self.origin_transmissions[i] > 0 {
                kv(&format!("origin_transmissions.{id}"), self.origin_transmissions[i].to_string());
            }
        }
        for (i, id) in self.node_ids.iter().enumerate() {
            if self.cache_hits[i] > 0 {
                kv(&format!("cache_hits.{id}"), self.cache_hits[i].to_string());
            }
        }
        for ((a, b), n) in &self.link_transmissions {
            kv(&format!("link.{}-{}", self.node_ids[*a], self.node_ids[*b]), n.to_string());
        }
        out
    }

    /// `request_id,issue,complete,hops,source` rows; failed requests have
    /// an empty `complete` and `failed:<reason>` as source.
    pub fn csv(&self) -> String {
        let mut out = String::from("request_id,issue,complete,hops,source\n");
        for r in &self.records {
            let complete = r.complete.map(|c| c.to_string()).unwrap_or_default();
            let source = match (r.source, r.failure) {
                (Some(s), _) => self.node_ids[s].clone(),
                (None, Some((why, _))) => format!("failed:{}", why.as_str()),
                (None, None) => String::new(),
            };
            writeln!(out, "{},{},{},{},{}", r.id, r.issue, complete, r.hops, source).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests;
