//! Watches the acceptable byte sets of a page evolve as events arrive. A
//! sync raises the floor; writes after it widen the set again.

use hetcrash::corpus;
use hetcrash::model::PageId;
use hetcrash::oracle::{acceptable_page, History};

fn main() {
    let s = corpus::find("fig2_t10").unwrap().schedule();
    let g = s.geometry();
    let mut h = History::new();
    for (i, e) in s.pre_crash().iter().enumerate() {
        h.push(e.clone());
        let sets: Vec<String> = acceptable_page(&h, g, PageId(0))
            .iter()
            .map(|set| set.iter().map(char::from).collect())
            .collect();
        println!("{:<22} {:<6} [{}]", e.to_string(), s.label(i).unwrap_or(""), sets.join("|"));
    }
}
