//! Sub-page sync writes land in the NVM log while plain writes reach the
//! disk only through write-back. Neither device alone holds the answer.

use hetcrash::corpus;
use hetcrash::devices::run_to_crash;
use hetcrash::model::PageId;
use hetcrash::{run_one, Strategy};

fn main() {
    let p = PageId(0);
    for name in ["fig2_t4", "fig2_t8", "fig2_t10"] {
        let s = corpus::find(name).unwrap().schedule();
        // The disk only changes at write-back delivery, whatever the strategy.
        let image = run_to_crash(&s, Strategy::NaiveDisk.hooks()).unwrap();
        println!("{name}: disk {}", image.disk.page(p));
        for strategy in [Strategy::NaiveDisk, Strategy::NaiveNvm, Strategy::LatestDev, Strategy::WbMarkAtEnd] {
            let image = run_to_crash(&s, strategy.hooks()).unwrap();
            let got = strategy.recover(&image.nvm, &image.disk, p).unwrap();
            match run_one(&s, strategy).unwrap().witness() {
                None => println!("  {:<15} {got}  ok", strategy.name()),
                Some(w) => println!("  {:<15} {got}  {}", strategy.name(), w.describe(&s)),
            }
        }
    }
}
