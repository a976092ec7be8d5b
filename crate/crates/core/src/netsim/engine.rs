use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{FailReason, Metrics, NodeIx, Request, RequestRecord, Role, SimNetwork, Tick};
use crate::castore::BlockId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Addressing {
    /// Routers cache and coalesce by block id.
    Content,
    /// No caching, no coalescing: every request goes to the origin.
    Location,
}

pub fn run(net: &SimNetwork, requests: &[Request], seed: u64) -> Metrics {
    run_with(net, requests, seed, Addressing::Content)
}

pub fn compare_location_addressed(net: &SimNetwork, requests: &[Request], seed: u64) -> Metrics {
    run_with(net, requests, seed, Addressing::Location)
}

/// Next hop toward each origin, per node. `usize::MAX` marks "no route".
struct Routes {
    dist: Vec<Vec<u64>>,
    next: Vec<Vec<NodeIx>>,
    origins: Vec<NodeIx>,
}

const NONE: usize = usize::MAX;

impl Routes {
    fn build(net: &SimNetwork, seed: u64) -> Self {
        let n = net.nodes.len();
        let origins: Vec<NodeIx> = (0..n).filter(|i| net.nodes[*i].role == Role::Origin).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut dist = Vec::with_capacity(origins.len());
        let mut next = Vec::with_capacity(origins.len());
        for &o in &origins {
            let d = dijkstra(net, o);
            let mut hop = vec![NONE; n];
            for v in 0..n {
                if v == o || d[v] == u64::MAX {
                    continue;
                }
                let mut best: Vec<NodeIx> = net.nodes[v]
                    .links
                    .iter()
                    .filter(|(u, lat)| d[*u] != u64::MAX && d[*u] + lat == d[v])
                    .map(|(u, _)| *u)
                    .collect();
                best.sort_unstable();
                hop[v] = *best.choose(&mut rng).expect("reachable node has a predecessor");
            }
            dist.push(d);
            next.push(hop);
        }
        Routes { dist, next, origins }
    }

    fn slot(&self, origin: NodeIx) -> usize {
        self.origins.binary_search(&origin).expect("origin index")
    }
}

fn dijkstra(net: &SimNetwork, src: NodeIx) -> Vec<u64> {
    let mut dist = vec![u64::MAX; net.nodes.len()];
    let mut heap = BinaryHeap::new();
    dist[src] = 0;
    heap.push(Reverse((0u64, src)));
    while let Some(Reverse((d, v))) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(u, lat) in &net.nodes[v].links {
            let nd = d + lat;
            if nd < dist[u] {
                dist[u] = nd;
                heap.push(Reverse((nd, u)));
            }
        }
    }
    dist
}

struct Lru {
    cap: Option<usize>,
    map: HashMap<BlockId, (Arc<[u8]>, u64)>,
    order: BTreeMap<u64, BlockId>,
    clock: u64,
}

impl Lru {
    fn new(cap: Option<usize>) -> Self {
        Lru {
            cap,
            map: HashMap::new(),
            order: BTreeMap::new(),
            clock: 0,
        }
    }

    fn get(&mut self, id: &BlockId) -> Option<Arc<[u8]>> {
        let (bytes, stamp) = self.map.get_mut(id)?;
        self.order.remove(stamp);
        self.clock += 1;
        *stamp = self.clock;
        self.order.insert(self.clock, *id);
        Some(bytes.clone())
    }

    fn put(&mut self, id: BlockId, bytes: Arc<[u8]>) {
        if self.cap == Some(0) {
            return;
        }
        self.clock += 1;
        if let Some((_, old)) = self.map.insert(id, (bytes, self.clock)) {
            self.order.remove(&old);
        }
        self.order.insert(self.clock, id);
        if let Some(cap) = self.cap {
            while self.map.len() > cap {
                let (_, victim) = self.order.pop_first().expect("non-empty");
                self.map.remove(&victim);
            }
        }
    }

    #[cfg(test)]
    fn len(&self) -> usize {
        self.map.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    /// Request packet reaches a node on its way up.
    Up,
    /// Data reaches a node on its way back down.
    Down,
}

/// (tick, node, request, insertion seq, kind): the ordering is the schedule.
type Event = (Tick, NodeIx, usize, u64, Kind);

struct Flight {
    origin: Option<NodeIx>,
    /// Nodes visited on the way up, client first.
    path: Vec<NodeIx>,
    /// Up-links plus down-links traversed so far.
    hops: u64,
    source: Option<NodeIx>,
    bytes: Option<Arc<[u8]>>,
}

struct Sim<'n> {
    net: &'n SimNetwork,
    mode: Addressing,
    routes: Routes,
    caches: Vec<Lru>,
    /// Router -> block -> (forwarding request, requests waiting on its data).
    pending: Vec<HashMap<BlockId, (usize, Vec<usize>)>>,
    flights: Vec<Flight>,
    heap: BinaryHeap<Reverse<Event>>,
    seq: u64,
    m: Metrics,
}

impl<'n> Sim<'n> {
    fn push(&mut self, t: Tick, node: NodeIx, req: usize, kind: Kind) {
        self.seq += 1;
        self.heap.push(Reverse((t, node, req, self.seq, kind)));
    }

    fn latency(&self, a: NodeIx, b: NodeIx) -> Tick {
        self.net.nodes[a].links.iter().find(|(n, _)| *n == b).expect("linked").1
    }

    fn fail(&mut self, req: usize, why: FailReason, at: NodeIx) {
        let r = &mut self.m.records[req];
        if r.complete.is_some() || r.failure.is_some() {
            return;
        }
        r.failure = Some((why, at));
        self.m.failed += 1;
        // Requests parked behind this one will never see data either.
        let block = r.block;
        let path = std::mem::take(&mut self.flights[req].path);
        for node in path {
            let owned = matches!(self.pending[node].get(&block), Some((owner, _)) if *owner == req);
            if owned {
                let (_, waiters) = self.pending[node].remove(&block).expect("checked");
                for w in waiters {
                    self.fail(w, why, at);
                }
            }
        }
    }

    fn carry(&mut self, a: NodeIx, b: NodeIx) {
        *self.m.link_transmissions.entry((a.min(b), a.max(b))).or_default() += 1;
    }

    /// Starts `req` down from `node` (which holds `bytes`).
    fn respond(&mut self, t: Tick, req: usize, node: NodeIx, bytes: Arc<[u8]>) {
        let f = &mut self.flights[req];
        f.bytes = Some(bytes);
        f.source.get_or_insert(node);
        self.down(t, req, node);
    }

    /// Sends data for `req` from `node` one hop toward its client.
    fn down(&mut self, t: Tick, req: usize, node: NodeIx) {
        let f = &mut self.flights[req];
        let here = f.path.pop();
        debug_assert_eq!(here, Some(node));
        match f.path.last().copied() {
            None => {
                let r = &mut self.m.records[req];
                r.complete = Some(t);
                r.hops = f.hops;
                r.source = f.source;
                self.m.total_hops += f.hops;
                self.m.completed += 1;
            }
            Some(prev) => {
                f.hops += 1;
                let lat = self.latency(node, prev);
                self.carry(node, prev);
                self.push(t + lat, prev, req, Kind::Down);
            }
        }
    }

    fn on_up(&mut self, t: Tick, req: usize, node: NodeIx) {
        if !self.net.nodes[node].alive_at(t) {
            return self.fail(req, FailReason::NodeDown, node);
        }
        let block = self.m.records[req].block;
        let origin = self.flights[req].origin.expect("routed");
        if node == origin {
            let bytes = self.net.block(&block).expect("origin content").0.clone();
            self.m.origin_transmissions[node] += 1;
            return self.respond(t, req, node, bytes);
        }
        if self.net.nodes[node].role == Role::Router && self.mode == Addressing::Content {
            if let Some(bytes) = self.caches[node].get(&block) {
                if BlockId::of(&bytes) == block {
                    self.m.cache_hits[node] += 1;
                    return self.respond(t, req, node, bytes);
                }
                self.m.cache_verify_failures += 1;
            }
            if let Some((_, waiters)) = self.pending[node].get_mut(&block) {
                waiters.push(req);
                return;
            }
            self.pending[node].insert(block, (req, Vec::new()));
        }
        let slot = self.routes.slot(origin);
        let hop = self.routes.next[slot][node];
        let lat = self.latency(node, hop);
        let f = &mut self.flights[req];
        f.hops += 1;
        f.path.push(hop);
        self.push(t + lat, hop, req, Kind::Up);
    }

    fn on_down(&mut self, t: Tick, req: usize, node: NodeIx) {
        let block = self.m.records[req].block;
        let waiters = if self.net.nodes[node].role == Role::Router && self.mode == Addressing::Content {
            self.pending[node].remove(&block).map(|(_, w)| w).unwrap_or_default()
        } else {
            Vec::new()
        };
        if !self.net.nodes[node].alive_at(t) {
            self.flights[req].path.clear();
            self.fail(req, FailReason::NodeDown, node);
            for w in waiters {
                self.fail(w, FailReason::NodeDown, node);
            }
            return;
        }
        let bytes = self.flights[req].bytes.clone().expect("data in flight");
        if self.net.nodes[node].role == Role::Router && self.mode == Addressing::Content {
            self.caches[node].put(block, bytes.clone());
        }
        for w in waiters {
            self.m.cache_hits[node] += 1;
            self.flights[w].source = Some(node);
            self.respond(t, w, node, bytes.clone());
        }
        self.down(t, req, node);
    }
}

pub fn run_with(net: &SimNetwork, requests: &[Request], seed: u64, mode: Addressing) -> Metrics {
    let n = net.nodes.len();
    let routes = Routes::build(net, seed);
    let m = Metrics {
        node_ids: net.nodes.iter().map(|x| x.id.clone()).collect(),
        origin_transmissions: vec![0; n],
        cache_hits: vec![0; n],
        link_transmissions: BTreeMap::new(),
        total_hops: 0,
        completed: 0,
        failed: 0,
        cache_verify_failures: 0,
        records: Vec::with_capacity(requests.len()),
        seed,
    };
    let mut sim = Sim {
        net,
        mode,
        caches: net.nodes.iter().map(|x| Lru::new(x.cache_capacity)).collect(),
        pending: vec![HashMap::new(); n],
        flights: Vec::with_capacity(requests.len()),
        heap: BinaryHeap::new(),
        seq: 0,
        routes,
        m,
    };

    for (id, r) in requests.iter().enumerate() {
        sim.m.records.push(RequestRecord {
            id,
            client: r.client,
            block: r.block,
            issue: r.issue_tick,
            complete: None,
            hops: 0,
            source: None,
            failure: None,
        });
        // Nearest reachable origin holding the block, lowest index on ties.
        let origin = net.block(&r.block).and_then(|(_, holders)| {
            holders
                .iter()
                .map(|o| (sim.routes.dist[sim.routes.slot(*o)][r.client], *o))
                .filter(|(d, _)| *d != u64::MAX)
                .min()
                .map(|(_, o)| o)
        });
        sim.flights.push(Flight {
            origin,
            path: vec![r.client],
            hops: 0,
            source: None,
            bytes: None,
        });
        match (net.block(&r.block), origin) {
            (None, _) => sim.fail(id, FailReason::UnknownBlock, r.client),
            (Some(_), None) => sim.fail(id, FailReason::Unreachable, r.client),
            _ => sim.push(r.issue_tick, r.client, id, Kind::Up),
        }
    }

    while let Some(Reverse((t, node, req, _, kind))) = sim.heap.pop() {
        match kind {
            Kind::Up => sim.on_up(t, req, node),
            Kind::Down => sim.on_down(t, req, node),
        }
    }
    debug_assert_eq!(sim.m.completed + sim.m.failed, requests.len() as u64);
    sim.m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(i: u8) -> BlockId {
        BlockId::of(&[i])
    }

    #[test]
    fn lru_evicts_least_recent() {
        let mut c = Lru::new(Some(2));
        let b: Arc<[u8]> = Arc::from(&b"x"[..]);
        c.put(id(1), b.clone());
        c.put(id(2), b.clone());
        assert!(c.get(&id(1)).is_some());
        c.put(id(3), b.clone());
        assert!(c.get(&id(2)).is_none());
        assert!(c.get(&id(1)).is_some());
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn zero_capacity_holds_nothing() {
        let mut c = Lru::new(Some(0));
        c.put(id(1), Arc::from(&b"x"[..]));
        assert_eq!(c.len(), 0);
    }
}
