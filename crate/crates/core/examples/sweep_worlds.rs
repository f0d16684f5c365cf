//! Exhaustively sweeps the three worlds and prints per-strategy results.
//!
//!     cargo run --release --example sweep_worlds [a|b|c ...]

use std::time::Instant;

use hetcrash::cases::CaseTag;
use hetcrash::explorer::{sweep, ExploreConfig, SweepOptions, World};

fn main() {
    let worlds: Vec<World> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("world is a, b or c"))
        .collect();
    let worlds = if worlds.is_empty() { World::ALL.to_vec() } else { worlds };
    for world in worlds {
        let cfg = ExploreConfig::world(world);
        let t = Instant::now();
        let report = sweep(&cfg, SweepOptions::default()).expect("valid config");
        println!(
            "world {world}: {} schedules ({} with a crash), max_events={} page_size={} in {:.1?}",
            report.schedules,
            report.crash_schedules,
            cfg.max_events,
            cfg.geometry.page_size(),
            t.elapsed()
        );
        for tally in &report.tallies {
            let expect = if world.expects_pass(tally.strategy) { "pass" } else { "fail" };
            print!(
                "  {:<15} violations={:<8} expected={expect}",
                tally.strategy.name(),
                tally.failures()
            );
            match &tally.first {
                Some((id, c)) => println!("  first={id} [{}]", c.schedule.compact()),
                None => println!(),
            }
        }
        let cases: Vec<String> = CaseTag::ALL
            .iter()
            .filter(|c| report.case_count(**c) > 0)
            .map(|c| format!("{}:{}", c.name(), report.case_count(*c)))
            .collect();
        println!("  cases {}", cases.join(" "));
    }
}
