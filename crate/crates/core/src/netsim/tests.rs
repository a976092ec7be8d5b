use std::collections::{HashSet, VecDeque};

use proptest::prelude::*;

use super::*;

fn flash(clients: usize, blocks: usize) -> (SimNetwork, Vec<Request>) {
    SimNetwork::from_scenario(&Scenario::flash_crowd(clients, blocks)).unwrap()
}

#[test]
fn star_has_expected_links() {
    let net = build_network(&Scenario::star(100, 1, None)).unwrap();
    assert_eq!(net.nodes().len(), 102);
    assert_eq!(net.link_count(), 101);
}

#[test]
fn dangling_link_is_rejected() {
    let s = Scenario::parse("node a origin\nlink a ghost 1\n").unwrap();
    assert!(matches!(build_network(&s), Err(SimError::Spec(_))));
}

#[test]
fn other_spec_errors() {
    for text in [
        "node a origin\nnode a router\n",
        "node a origin\nlink a a 1\n",
        "node a origin\nnode b router\nlink a b 0\n",
        "node a origin\nnode b router\nlink a b 1\nlink b a 1\n",
        "node a router\ncontent a f 1\n",
        "node a origin\ncontent a f 1\ncontent a f 2\n",
    ] {
        let s = Scenario::parse(text).unwrap();
        assert!(build_network(&s).is_err(), "{text}");
    }
    let s = Scenario::parse("node a origin\nnode c client\nlink a c 1\nrequest c nope 0\n").unwrap();
    assert!(SimNetwork::from_scenario(&s).is_err());
}

#[test]
fn tree_matches_independent_count() {
    let s = Scenario::tree(3, 4);
    let net = build_network(&s).unwrap();
    // Oracle: a complete tree of depth d and fanout f has sum f^i nodes and one
    // fewer edges; every non-root node has exactly one neighbour one level up.
    let expect: usize = (0..3).map(|i| 4usize.pow(i)).sum();
    assert_eq!(net.nodes().len(), expect);
    assert_eq!(net.link_count(), expect - 1);
    let root = net.node_ix("n0").unwrap();
    let mut depth = vec![usize::MAX; net.nodes().len()];
    depth[root] = 0;
    let mut q = VecDeque::from([root]);
    while let Some(v) = q.pop_front() {
        for (u, _) in &net.node(v).links {
            if depth[*u] == usize::MAX {
                depth[*u] = depth[v] + 1;
                q.push_back(*u);
            }
        }
    }
    for (i, n) in net.nodes().iter().enumerate() {
        let level: usize = n.id[1..].split('_').next().unwrap().parse().unwrap();
        assert_eq!(depth[i], level, "{}", n.id);
        let parents = n.links.iter().filter(|(u, _)| depth[*u] + 1 == depth[i]).count();
        assert_eq!(parents, usize::from(i != root));
    }
    assert_eq!(net.nodes().iter().filter(|n| n.role == Role::Client).count(), 16);
}

#[test]
fn flash_crowd_sends_each_block_once() {
    let (net, reqs) = flash(1000, 100);
    assert_eq!(reqs.len(), 100_000);
    let m = run(&net, &reqs, 7);
    assert_eq!(m.total_origin_transmissions(), 100);
    assert_eq!(m.total_cache_hits(), 99_900);
    assert_eq!(m.completed, 100_000);
    assert_eq!(m.failed, 0);
    let router = net.node_ix("router").unwrap();
    assert_eq!(m.cache_hits[router], 99_900);
    assert_eq!(m.link(net.node_ix("origin").unwrap(), router), 100);

    let base = compare_location_addressed(&net, &reqs, 7);
    assert_eq!(base.total_origin_transmissions(), 100_000);
    assert_eq!(base.total_cache_hits(), 0);
    assert_eq!(base.completed, 100_000);
    assert_eq!(base.total_origin_transmissions(), 1000 * m.total_origin_transmissions());
}

#[test]
fn cold_single_request() {
    let mut s = Scenario::star(3, 5, None);
    s.requests.push(RequestDecl {
        client: Scenario::client_name(0),
        file: "release.iso".into(),
        tick: 0,
    });
    let (net, reqs) = SimNetwork::from_scenario(&s).unwrap();
    let m = run(&net, &reqs, 1);
    assert_eq!(m.total_cache_hits(), 0);
    assert_eq!(m.total_origin_transmissions(), 5);
    assert!(m.records.iter().all(|r| r.hops == 4 && r.complete == Some(4)));
    let mut base = compare_location_addressed(&net, &reqs, 1);
    assert_eq!(base, m);
    base.seed = 2;
    assert_ne!(base, m);
}

#[test]
fn warm_router_survives_origin_outage() {
    let s = Scenario::origin_outage(501, 10, 500, 1000);
    let (net, reqs) = SimNetwork::from_scenario(&s).unwrap();
    let m = run(&net, &reqs, 3);
    assert_eq!(m.failed, 0);
    assert_eq!(m.completed, 501 * 10);
    assert_eq!(m.total_origin_transmissions(), 10);
    let late: Vec<_> = m.records.iter().filter(|r| r.issue > 1000).collect();
    assert_eq!(late.len(), 5000);
    assert!(late.iter().all(|r| r.source == net.node_ix("router")));

    let base = compare_location_addressed(&net, &reqs, 3);
    assert_eq!(base.completed, 10);
    assert_eq!(base.failed, 5000);
    assert!(base
        .records
        .iter()
        .filter(|r| r.issue > 1000)
        .all(|r| r.failure == Some((FailReason::NodeDown, net.node_ix("origin").unwrap()))));
}

#[test]
fn coalesced_requests_fail_with_their_leader() {
    // Origin dies while the first copy is in flight; everyone parked behind
    // it at the router must fail too, not hang.
    let mut s = Scenario::flash_crowd(4, 2);
    s.links[0].latency = 10;
    s.kills.push(KillDecl {
        node: "origin".into(),
        tick: 5,
    });
    let (net, reqs) = SimNetwork::from_scenario(&s).unwrap();
    let m = run(&net, &reqs, 0);
    assert_eq!(m.completed, 0);
    assert_eq!(m.failed, 8);
}

#[test]
fn unreachable_and_unknown_content() {
    let s = Scenario::parse("node o origin\nnode o2 origin\nnode c client\nnode r router\nlink r c 1\ncontent o f 2\n").unwrap();
    let (net, mut reqs) = build_network(&s).map(|n| (n, Vec::new())).unwrap();
    let c = net.node_ix("c").unwrap();
    reqs.extend(net.file_requests(c, "f", 0));
    reqs.push(Request {
        client: c,
        block: BlockId::of(b"nowhere"),
        issue_tick: 0,
    });
    let m = run(&net, &reqs, 0);
    assert_eq!(m.failed, 3);
    assert_eq!(m.records[0].failure.unwrap().0, FailReason::Unreachable);
    assert_eq!(m.records[2].failure.unwrap().0, FailReason::UnknownBlock);
    assert!(m.report().contains("failed.unreachable=2\n"));
    assert!(m.csv().lines().nth(3).unwrap().ends_with("failed:unknown-block"));
}

#[test]
fn edge_caches_keep_backbone_at_unique_blocks() {
    // origin - core - edge - K clients; only the edge router caches.
    let k = 50;
    let blocks = 8;
    let mut text = String::from("node origin origin\nnode core router cache=0\nnode edge router\n");
    text += "link origin core 3\nlink core edge 2\n";
    for i in 0..k {
        text += &format!("node c{i} client\nlink edge c{i} 1\nrequest c{i} big.bin {}\n", i * 3);
    }
    text += &format!("content origin big.bin {blocks}\n");
    let (net, reqs) = SimNetwork::from_scenario(&Scenario::parse(&text).unwrap()).unwrap();
    let (o, core, edge) = (
        net.node_ix("origin").unwrap(),
        net.node_ix("core").unwrap(),
        net.node_ix("edge").unwrap(),
    );
    let m = run(&net, &reqs, 11);
    assert_eq!(m.completed, (k * blocks) as u64);
    assert_eq!(m.link(o, core), blocks as u64);
    assert_eq!(m.link(core, edge), blocks as u64);
    let base = compare_location_addressed(&net, &reqs, 11);
    assert_eq!(base.link(core, edge), (k * blocks) as u64);
}

#[test]
fn bounded_cache_still_answers_correctly() {
    let mut s = Scenario::star(20, 30, Some(4));
    for i in 0..20 {
        s.requests.push(RequestDecl {
            client: Scenario::client_name(i),
            file: "release.iso".into(),
            tick: i as u64 * 50,
        });
    }
    let (net, reqs) = SimNetwork::from_scenario(&s).unwrap();
    let m = run(&net, &reqs, 5);
    assert_eq!(m.completed, 600);
    assert_eq!(m.cache_verify_failures, 0);
    // Each later scan finds only the previous scan's last 4 blocks.
    assert_eq!(m.total_origin_transmissions(), 30 + 19 * 26);
    assert_eq!(m.total_cache_hits(), 19 * 4);
}

#[test]
fn equal_cost_ties_depend_on_seed_only() {
    // Diamond: two equal routes from the client to the origin.
    let text = "node o origin\nnode a router\nnode b router\nnode c client\n\
                link o a 1\nlink o b 1\nlink a c 1\nlink b c 1\ncontent o f 40\nrequest c f 0\n";
    let (net, reqs) = SimNetwork::from_scenario(&Scenario::parse(text).unwrap()).unwrap();
    let seen: HashSet<_> = (0..32)
        .map(|seed| {
            let m = run(&net, &reqs, seed);
            assert_eq!(m, run(&net, &reqs, seed));
            m.link(net.node_ix("a").unwrap(), net.node_ix("c").unwrap())
        })
        .collect();
    assert_eq!(seen, HashSet::from([0, 40]));
}

#[test]
fn report_has_stable_keys() {
    let (net, reqs) = flash(3, 2);
    let m = run(&net, &reqs, 9);
    let r = m.report();
    assert!(r.starts_with("seed=9\nrequests=6\ncompleted=6\nfailed=0\norigin_transmissions=2\ncache_hits=4\n"));
    assert!(r.contains("link.origin-router=2\n"));
    assert_eq!(m.csv().lines().count(), 7);
    assert_eq!(m.latencies().len(), 6);
}

fn random_scenario() -> impl Strategy<Value = (Scenario, u64)> {
    (
        2usize..6,
        1usize..5,
        1usize..4,
        prop::collection::vec((0usize..64, 0u64..20), 1..25),
        any::<u64>(),
        prop::option::of(0usize..4),
    )
        .prop_map(|(routers, clients_per, blocks, reqs, seed, cap)| {
            let mut text = String::from("node o origin\n");
            for r in 0..routers {
                text += &format!("node r{r} router{}\n", cap.map(|c| format!(" cache={c}")).unwrap_or_default());
                let up = if r == 0 { "o".to_string() } else { format!("r{}", (r - 1) / 2) };
                text += &format!("link {up} r{r} {}\n", 1 + r % 3);
                for c in 0..clients_per {
                    text += &format!("node c{r}_{c} client\nlink r{r} c{r}_{c} 1\n");
                }
            }
            // A shortcut so some routers have two routes.
            if routers > 2 {
                text += &format!("link o r{} 2\n", routers - 1);
            }
            text += &format!("content o f {blocks}\n");
            for (who, tick) in reqs {
                let r = who % routers;
                let c = (who / routers) % clients_per;
                text += &format!("request c{r}_{c} f {tick}\n");
            }
            (Scenario::parse(&text).unwrap(), seed)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn runs_are_deterministic_and_sound((s, seed) in random_scenario()) {
        let (net, reqs) = SimNetwork::from_scenario(&s).unwrap();
        let a = run(&net, &reqs, seed);
        let b = run(&net, &reqs, seed);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.report(), b.report());
        prop_assert_eq!(a.csv(), b.csv());
        prop_assert_eq!(a.completed + a.failed, reqs.len() as u64);
        prop_assert_eq!(a.failed, 0);
        prop_assert_eq!(a.cache_verify_failures, 0);
        let base = compare_location_addressed(&net, &reqs, seed);
        prop_assert_eq!(base.total_origin_transmissions(), reqs.len() as u64);
        prop_assert!(a.total_origin_transmissions() <= base.total_origin_transmissions());
        prop_assert_eq!(a.total_origin_transmissions() + a.total_cache_hits(), reqs.len() as u64);
        // A cache never makes a request slower than the baseline.
        for (x, y) in a.records.iter().zip(&base.records) {
            prop_assert!(x.complete.unwrap() <= y.complete.unwrap());
        }
    }
}
