//! Finds the first schedule on which each strategy fails in a small world,
//! then shrinks it to a trace a person can read.

use hetcrash::explorer::{shrink, sweep, ExploreConfig, SweepOptions, World};
use hetcrash::trace::format_trace;

fn main() {
    let cfg = ExploreConfig { max_events: 5, ..ExploreConfig::world(World::C) };
    let report = sweep(&cfg, SweepOptions::default()).unwrap();
    for tally in &report.tallies {
        let Some((id, c)) = &tally.first else {
            println!("{}: no violation in {} schedules\n", tally.strategy, report.schedules);
            continue;
        };
        let small = shrink(c);
        assert!(small.replays());
        println!("{}: first failure {id}, {} -> {} ops", tally.strategy, c.schedule.op_count(), small.schedule.op_count());
        print!("{}", format_trace(&small.schedule));
        println!("# {}\n", small.verdict.witness().unwrap().describe(&small.schedule));
    }
}
