//! A sync of a page the cache already wrote back logs nothing, yet it still
//! promises durability for everything written before it. Crashing at three
//! points shows which strategies keep that promise.
//!
//!     cargo run --example clean_page_sync

use hetcrash::corpus;
use hetcrash::devices::run_to_crash;
use hetcrash::model::PageId;
use hetcrash::{run_one, Strategy};

fn main() {
    for name in ["fig1_t5", "fig1_t8", "fig1_t10"] {
        let s = corpus::find(name).unwrap().schedule();
        println!("{name}: {}", s.compact());
        for strategy in Strategy::ALL {
            let image = run_to_crash(&s, strategy.hooks()).unwrap();
            let page = strategy.recover(&image.nvm, &image.disk, PageId(0)).unwrap();
            let verdict = run_one(&s, strategy).unwrap();
            println!("  {:<15} {page}  {}", strategy.name(), verdict.label());
        }
    }
}
