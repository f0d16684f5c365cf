mod common;

use hetcrash::corpus::CORPUS;
use hetcrash::model::{Event, PageId};
use hetcrash::{format_trace, parse_trace, Schedule};
use proptest::prelude::{any, prop, prop_assert_eq, proptest, ProptestConfig};
use proptest::strategy::Strategy as _;

fn labeled() -> impl proptest::strategy::Strategy<Value = Schedule> {
    (any::<u64>(), prop::collection::vec(prop::option::of("[A-Za-z0-9]{1,6}"), 64)).prop_map(
        |(seed, labels)| {
            let s = common::random_schedule(&mut common::rng(seed));
            let labels = labels.into_iter().cycle().take(s.len()).collect();
            Schedule::with_labels(s.geometry(), s.events().to_vec(), labels)
        },
    )
}

fn line() -> impl proptest::strategy::Strategy<Value = String> {
    let word = prop::sample::select(vec![
        "page_size", "page_count", "init", "write", "syncw", "sync", "wb", "wb_start",
        "wb_deliver", "wb_end", "crash", "read", "0", "1", "7", "-1", "\"ab\"", "\"--\"", "\"",
        "#", "# O1", "x",
    ]);
    prop::collection::vec(word, 0..5).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn arbitrary_text_never_panics(text in ".{0,200}") {
        let _ = parse_trace(&text);
    }

    #[test]
    fn directive_soup_never_panics(lines in prop::collection::vec(line(), 0..12)) {
        let _ = parse_trace(&lines.join("\n"));
    }

    #[test]
    fn format_then_parse_round_trips(s in labeled()) {
        let back = parse_trace(&format_trace(&s)).unwrap();
        prop_assert_eq!(back, s);
    }
}

#[test]
fn fig1_t10_parses_to_events() {
    let s = parse_trace(hetcrash::corpus::find("fig1_t10").unwrap().text).unwrap();
    let p = PageId(0);
    let w = |off, data: &str| Event::Write { page: p, off, data: data.as_bytes().to_vec() };
    let wb = [Event::WbStart { page: p }, Event::WbDeliver { page: p }, Event::WbEnd { page: p }];
    let mut expected = vec![Event::Init { page: p, data: b"111111".to_vec() }];
    expected.extend([w(0, "222222"), Event::Sync, Event::Read { page: p }, w(0, "333333")]);
    expected.extend(wb);
    expected.extend([Event::Read { page: p }, Event::Sync, Event::Crash, Event::Read { page: p }]);
    assert_eq!(s.events(), expected.as_slice());
}

#[test]
fn corpus_round_trips() {
    for t in &CORPUS {
        let s = t.schedule();
        assert_eq!(parse_trace(&format_trace(&s)).unwrap(), s, "{}", t.name);
    }
}
