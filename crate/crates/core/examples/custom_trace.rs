//! Checks a trace of your own against every strategy. Pass a file path, or
//! run without arguments to use the built-in example below.
//!
//!     cargo run --example custom_trace -- my.trace

use hetcrash::{parse_trace, run_one, Strategy};

const EXAMPLE: &str = r#"
page_size 4
page_count 2
init 0 "...."
write 0 0 "ab"        # W1
write 1 2 "cd"        # W2
sync                  # S1
wb 1
syncw 0 1 "xy"        # W3
crash
read 0
read 1
"#;

fn main() {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}")),
        None => EXAMPLE.to_string(),
    };
    let s = match parse_trace(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    println!("{}", s.compact());
    for strategy in Strategy::ALL {
        match run_one(&s, strategy) {
            Ok(v) => match v.witness() {
                None => println!("{:<15} PASS", strategy.name()),
                Some(w) => println!("{:<15} FAIL {}", strategy.name(), w.describe(&s)),
            },
            Err(e) => println!("{:<15} ERROR {e}", strategy.name()),
        }
    }
}
