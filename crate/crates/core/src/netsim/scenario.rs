//! Line-oriented scenario files.
//!
//! ```text
//! node <id> <role> [cache=<blocks>|cache=inf]
//! link <a> <b> <latency>
//! content <origin-id> <file-name> <n-blocks>
//! request <client> <file-name> <tick>
//! kill <node> <tick>
//! ```
//!
//! Blank lines and `#` comments are ignored.

use std::fmt::Write as _;

use super::{Role, SimError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeDecl {
    pub id: String,
    pub role: Role,
    /// Cache capacity in blocks; `None` is unbounded.
    pub cache: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkDecl {
    pub a: String,
    pub b: String,
    pub latency: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContentDecl {
    pub origin: String,
    pub file: String,
    pub blocks: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RequestDecl {
    pub client: String,
    pub file: String,
    pub tick: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KillDecl {
    pub node: String,
    pub tick: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Scenario {
    pub nodes: Vec<NodeDecl>,
    pub links: Vec<LinkDecl>,
    pub contents: Vec<ContentDecl>,
    pub requests: Vec<RequestDecl>,
    pub kills: Vec<KillDecl>,
}

fn parse_num<T: std::str::FromStr>(line: usize, what: &str, v: &str) -> Result<T, SimError> {
    v.parse().map_err(|_| SimError::Parse {
        line,
        msg: format!("bad {what} {v:?}"),
    })
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut s = Scenario::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let f: Vec<&str> = body.split_whitespace().collect();
            let arity = |n: std::ops::RangeInclusive<usize>| {
                if n.contains(&f.len()) {
                    Ok(())
                } else {
                    Err(SimError::Parse {
                        line,
                        msg: format!("wrong number of fields for {:?}", f[0]),
                    })
                }
            };
            match f[0] {
                "node" => {
                    arity(3..=4)?;
                    let role = match f[2] {
                        "origin" => Role::Origin,
                        "router" => Role::Router,
                        "client" => Role::Client,
                        other => {
                            return Err(SimError::Parse {
                                line,
                                msg: format!("unknown role {other:?}"),
                            })
                        }
                    };
                    let cache = match f.get(3) {
                        None => None,
                        Some(opt) => {
                            let v = opt.strip_prefix("cache=").ok_or_else(|| SimError::Parse {
                                line,
                                msg: format!("unknown option {opt:?}"),
                            })?;
                            if role != Role::Router {
                                return Err(SimError::Parse {
                                    line,
                                    msg: "only routers have caches".into(),
                                });
                            }
                            match v {
                                "inf" => None,
                                n => Some(parse_num(line, "cache size", n)?),
                            }
                        }
                    };
                    s.nodes.push(NodeDecl {
                        id: f[1].to_string(),
                        role,
                        cache,
                    });
                }
                "link" => {
                    arity(4..=4)?;
                    s.links.push(LinkDecl {
                        a: f[1].to_string(),
                        b: f[2].to_string(),
                        latency: parse_num(line, "latency", f[3])?,
                    });
                }
                "content" => {
                    arity(4..=4)?;
                    s.contents.push(ContentDecl {
                        origin: f[1].to_string(),
                        file: f[2].to_string(),
                        blocks: parse_num(line, "block count", f[3])?,
                    });
                }
                "request" => {
                    arity(4..=4)?;
                    s.requests.push(RequestDecl {
                        client: f[1].to_string(),
                        file: f[2].to_string(),
                        tick: parse_num(line, "tick", f[3])?,
                    });
                }
                "kill" => {
                    arity(3..=3)?;
                    s.kills.push(KillDecl {
                        node: f[1].to_string(),
                        tick: parse_num(line, "tick", f[2])?,
                    });
                }
                other => {
                    return Err(SimError::Parse {
                        line,
                        msg: format!("unknown directive {other:?}"),
                    })
                }
            }
        }
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let role = match n.role {
                Role::Origin => "origin",
                Role::Router => "router",
                Role::Client => "client",
            };
            match (n.role, n.cache) {
                (Role::Router, Some(c)) => writeln!(out, "node {} {role} cache={c}", n.id),
                _ => writeln!(out, "node {} {role}", n.id),
            }
            .unwrap();
        }
        for l in &self.links {
            writeln!(out, "link {} {} {}", l.a, l.b, l.latency).unwrap();
        }
        for c in &self.contents {
            writeln!(out, "content {} {} {}", c.origin, c.file, c.blocks).unwrap();
        }
        for r in &self.requests {
            writeln!(out, "request {} {} {}", r.client, r.file, r.tick).unwrap();
        }
        for k in &self.kills {
            writeln!(out, "kill {} {}", k.node, k.tick).unwrap();
        }
        out
    }

    fn node(&mut self, id: impl Into<String>, role: Role, cache: Option<usize>) {
        self.nodes.push(NodeDecl {
            id: id.into(),
            role,
            cache,
        });
    }

    fn link(&mut self, a: &str, b: &str, latency: u64) {
        self.links.push(LinkDecl {
            a: a.to_string(),
            b: b.to_string(),
            latency,
        });
    }

    pub fn client_name(i: usize) -> String {
        format!("c{i:04}")
    }

    /// One origin behind one router with `clients` leaves; no requests.
    pub fn star(clients: usize, file_blocks: usize, router_cache: Option<usize>) -> Self {
        let mut s = Scenario::default();
        s.node("origin", Role::Origin, None);
        s.node("router", Role::Router, router_cache);
        s.link("origin", "router", 1);
        for i in 0..clients {
            let c = Self::client_name(i);
            s.node(c.clone(), Role::Client, None);
            s.link("router", &c, 1);
        }
        s.contents.push(ContentDecl {
            origin: "origin".into(),
            file: "release.iso".into(),
            blocks: file_blocks,
        });
        s
    }

    /// Every client of [`Scenario::star`] requests the file at tick 0.
    pub fn flash_crowd(clients: usize, file_blocks: usize) -> Self {
        let mut s = Self::star(clients, file_blocks, None);
        for i in 0..clients {
            s.requests.push(RequestDecl {
                client: Self::client_name(i),
                file: "release.iso".into(),
                tick: 0,
            });
        }
        s
    }

    /// One client warms the router, the origin dies at `kill_tick`, then
    /// `late_clients` other clients request the file at `kill_tick + 100`.
    pub fn origin_outage(clients: usize, file_blocks: usize, late_clients: usize, kill_tick: u64) -> Self {
        assert!(late_clients < clients);
        let mut s = Self::star(clients, file_blocks, None);
        s.requests.push(RequestDecl {
            client: Self::client_name(0),
            file: "release.iso".into(),
            tick: 0,
        });
        s.kills.push(KillDecl {
            node: "origin".into(),
            tick: kill_tick,
        });
        for i in 1..=late_clients {
            s.requests.push(RequestDecl {
                client: Self::client_name(i),
                file: "release.iso".into(),
                tick: kill_tick + 100,
            });
        }
        s
    }

    /// Complete tree: an origin at the root, routers in between, clients at
    /// the leaves. `levels` counts the root.
    pub fn tree(levels: usize, fanout: usize) -> Self {
        let mut s = Scenario::default();
        let mut prev = vec!["n0".to_string()];
        s.node("n0", Role::Origin, None);
        for level in 1..levels {
            let mut cur = Vec::new();
            for (pi, parent) in prev.iter().enumerate() {
                for k in 0..fanout {
                    let id = format!("n{level}_{}", pi * fanout + k);
                    let role = if level + 1 == levels { Role::Client } else { Role::Router };
                    s.node(id.clone(), role, None);
                    s.link(parent, &id, 1);
                    cur.push(id);
                }
            }
            prev = cur;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_directive() {
        let text = "\
# tiny
node o origin
node r router cache=8
node r2 router cache=inf
node c client   # trailing comment
link o r 2
link r c 1
link r r2 1
content o f.bin 3
request c f.bin 10
kill o 50
";
        let s = Scenario::parse(text).unwrap();
        assert_eq!(s.nodes.len(), 4);
        assert_eq!(s.nodes[1].cache, Some(8));
        assert_eq!(s.nodes[2].cache, None);
        assert_eq!(s.links[0].latency, 2);
        assert_eq!(s.contents[0].blocks, 3);
        assert_eq!(s.requests[0].tick, 10);
        assert_eq!(s.kills[0].tick, 50);
        assert_eq!(Scenario::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn reports_bad_lines() {
        for (text, line) in [
            ("node a planet", 1),
            ("node a client\nlink a", 2),
            ("node a client cache=3", 1),
            ("bogus", 1),
            ("node a router\nrequest a f soon", 2),
        ] {
            match Scenario::parse(text) {
                Err(SimError::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn generated_shapes() {
        let star = Scenario::star(100, 10, None);
        assert_eq!(star.nodes.len(), 102);
        assert_eq!(star.links.len(), 101);
        let tree = Scenario::tree(3, 4);
        assert_eq!(tree.nodes.len(), 21);
        assert_eq!(tree.links.len(), 20);
    }
}
