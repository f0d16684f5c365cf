//! Sync writes that arrive while a write-back is in flight. Marking the log
//! at the start or the end of the write-back each loses data on some
//! interleaving; version ids on the marker do not.
//!
//!     cargo run --example writeback_window

use hetcrash::corpus;
use hetcrash::devices::run_to_crash;
use hetcrash::model::PageId;
use hetcrash::recovery::versioned_walk;
use hetcrash::trace::Trace;
use hetcrash::{run_one, Strategy};

fn main() {
    let p = PageId(0);
    for name in ["fig3_t5", "fig3_t10"] {
        let s = corpus::find(name).unwrap().schedule();
        print!("{name}:\n{}", Trace(&s));
        for strategy in [Strategy::WbMarkAtStart, Strategy::WbMarkAtEnd, Strategy::VersionedMark] {
            let image = run_to_crash(&s, strategy.hooks()).unwrap();
            let got = strategy.recover(&image.nvm, &image.disk, p).unwrap();
            let verdict = run_one(&s, strategy).unwrap();
            println!("  {:<15} {got}  {}", strategy.name(), verdict.label());
            if strategy == Strategy::VersionedMark {
                let walk = versioned_walk(&image.nvm, p);
                println!("    cutoffs {:?}, {} records replayed", walk.cutoffs, walk.survivors.len());
            }
        }
        println!();
    }
}
