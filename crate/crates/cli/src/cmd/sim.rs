use std::path::PathBuf;

use anyhow::{Context, Result};
use cane_core::netsim::{compare_location_addressed, run as simulate, Scenario, SimNetwork};
use clap::Subcommand;

use crate::Out;

#[derive(Subcommand, Debug)]
pub enum SimCmd {
    /// Simulate a scenario file and print its metrics.
    Run {
        scenario: PathBuf,
        /// Location-addressed baseline: no caching, no coalescing.
        #[arg(long)]
        baseline: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write per-request rows to FILE.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print a generated scenario.
    #[command(subcommand)]
    Gen(GenCmd),
}

#[derive(Subcommand, Debug)]
pub enum GenCmd {
    /// Every client requests one file at once.
    FlashCrowd {
        #[arg(long, default_value_t = 1000)]
        clients: usize,
        #[arg(long, default_value_t = 100)]
        blocks: usize,
    },
    /// One client warms the router, then the origin dies and others ask.
    Outage {
        #[arg(long, default_value_t = 501)]
        clients: usize,
        #[arg(long, default_value_t = 10)]
        blocks: usize,
        #[arg(long, default_value_t = 500)]
        late: usize,
        #[arg(long, default_value_t = 1000)]
        kill_tick: u64,
    },
    /// Origin, one router, leaf clients; no requests.
    Star {
        #[arg(long, default_value_t = 10)]
        clients: usize,
        #[arg(long, default_value_t = 10)]
        blocks: usize,
        /// Router cache size in blocks; unbounded if absent.
        #[arg(long)]
        cache: Option<usize>,
    },
    Tree {
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, default_value_t = 4)]
        fanout: usize,
    },
}

pub fn run(cmd: SimCmd, out: &mut Out) -> Result<()> {
    match cmd {
        SimCmd::Run {
            scenario,
            baseline,
            seed,
            csv,
        } => {
            let text = std::fs::read_to_string(&scenario).with_context(|| format!("reading {}", scenario.display()))?;
            let spec = Scenario::parse(&text)?;
            let (net, requests) = SimNetwork::from_scenario(&spec)?;
            let m = if baseline {
                compare_location_addressed(&net, &requests, seed)
            } else {
                simulate(&net, &requests, seed)
            };
            if let Some(path) = csv {
                std::fs::write(&path, m.csv()).with_context(|| format!("writing {}", path.display()))?;
            }
            out.raw(m.report().as_bytes());
        }
        SimCmd::Gen(g) => {
            let s = match g {
                GenCmd::FlashCrowd { clients, blocks } => Scenario::flash_crowd(clients, blocks),
                GenCmd::Outage {
                    clients,
                    blocks,
                    late,
                    kill_tick,
                } => {
                    if late >= clients {
                        return Err(crate::exit::Usage(format!("--late {late} must be below --clients {clients}")).into());
                    }
                    Scenario::origin_outage(clients, blocks, late, kill_tick)
                }
                GenCmd::Star { clients, blocks, cache } => Scenario::star(clients, blocks, cache),
                GenCmd::Tree { levels, fanout } => Scenario::tree(levels, fanout),
            };
            out.raw(s.to_text().as_bytes());
        }
    }
    Ok(())
}
