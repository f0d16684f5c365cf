#![allow(dead_code)]

use std::collections::HashSet;

use hetcrash::explorer::{sample, ExploreConfig, SymbolMode, World};
use hetcrash::model::{validate_schedule, Event, Geometry, PageId, Schedule};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

/// Brute force: every sequence of candidate steps (all symbols everywhere),
/// filtered by `validate_schedule` and by the config's world rules, then
/// filtered again to the symbol assignments the config asks for.
pub fn reference_schedules(cfg: &ExploreConfig) -> HashSet<Vec<Event>> {
    let g = cfg.geometry;
    let mut steps: Vec<Vec<Event>> = Vec::new();
    for p in 0..g.page_count() {
        let page = PageId(p as u32);
        for off in 0..g.page_size() {
            for end in off + 1..=g.page_size() {
                for &sym in &cfg.alphabet {
                    let data = vec![sym; end - off];
                    steps.push(vec![Event::Write { page, off, data: data.clone() }]);
                    steps.push(vec![Event::SyncWrite { page, off, data }]);
                }
            }
        }
        if cfg.allow_wb_duration {
            steps.push(vec![Event::WbStart { page }]);
            steps.push(vec![Event::WbDeliver { page }]);
            steps.push(vec![Event::WbEnd { page }]);
        } else {
            steps.push(vec![
                Event::WbStart { page },
                Event::WbDeliver { page },
                Event::WbEnd { page },
            ]);
        }
    }
    steps.push(vec![Event::Sync]);

    let mut out = HashSet::new();
    let mut prefix = Vec::new();
    extend(cfg, &steps, &mut prefix, 0, &mut out);
    out
}

fn extend(
    cfg: &ExploreConfig,
    steps: &[Vec<Event>],
    prefix: &mut Vec<Event>,
    used: usize,
    out: &mut HashSet<Vec<Event>>,
) {
    if accepted(cfg, prefix) {
        out.insert(prefix.clone());
        let mut crashed = prefix.clone();
        crashed.push(Event::Crash);
        out.insert(crashed);
    }
    if used == cfg.max_events {
        return;
    }
    for step in steps {
        let n = prefix.len();
        prefix.extend(step.iter().cloned());
        // Prune prefixes that can never become valid again.
        if validate_schedule(&Schedule::new(cfg.geometry, prefix.clone())).is_ok() {
            extend(cfg, steps, prefix, used + 1, out);
        }
        prefix.truncate(n);
    }
}

fn accepted(cfg: &ExploreConfig, events: &[Event]) -> bool {
    if validate_schedule(&Schedule::new(cfg.geometry, events.to_vec())).is_err() {
        return false;
    }
    let mut plain_pending = false;
    let mut symbols: Vec<u8> = Vec::new();
    for e in events {
        match e {
            Event::Write { .. } => plain_pending = true,
            Event::Sync => plain_pending = false,
            Event::SyncWrite { .. }
                if !cfg.allow_partial_sync_writes || (cfg.strict_sync_runs && plain_pending) =>
            {
                return false;
            }
            _ => {}
        }
        if let Event::Write { data, .. } | Event::SyncWrite { data, .. } = e {
            symbols.push(data[0]);
        }
    }
    let index = |s: u8| cfg.alphabet.iter().position(|&a| a == s).unwrap();
    match cfg.symbols {
        SymbolMode::Distinct => symbols
            .iter()
            .enumerate()
            .all(|(k, &s)| index(s) == k % cfg.alphabet.len()),
        SymbolMode::Canonical => {
            let mut seen = 0;
            symbols.iter().all(|&s| {
                let i = index(s);
                let ok = i <= seen;
                seen = seen.max(i + 1);
                ok
            })
        }
    }
}

/// A random valid schedule: a sampled mutation sequence on up to three
/// pages, with random initial contents, reads sprinkled in and reads after
/// the crash.
pub fn random_schedule(rng: &mut StdRng) -> Schedule {
    let world = World::ALL[rng.random_range(0..3)];
    let g = Geometry::new(rng.random_range(1..=5), rng.random_range(1..=3)).unwrap();
    let cfg = ExploreConfig {
        max_events: rng.random_range(0..=12),
        geometry: g,
        symbols: if rng.random_bool(0.5) {
            SymbolMode::Canonical
        } else {
            SymbolMode::Distinct
        },
        strict_sync_runs: rng.random_bool(0.7),
        ..ExploreConfig::world(world)
    };
    let core = sample(&cfg, 1, rng.random_range(0..u64::MAX)).pop().unwrap();
    let mut events = Vec::new();
    for page in g.pages() {
        if rng.random_bool(0.5) {
            let data = (0..g.page_size())
                .map(|_| b"-0123456789"[rng.random_range(0..11)])
                .collect();
            events.push(Event::Init { page, data });
        }
    }
    let read = |rng: &mut StdRng| Event::Read {
        page: PageId(rng.random_range(0..g.page_count() as u32)),
    };
    for e in core.events() {
        if rng.random_bool(0.15) {
            events.push(read(rng));
        }
        events.push(e.clone());
    }
    if core.crash_pos().is_some() {
        for _ in 0..rng.random_range(0..3) {
            events.push(read(rng));
        }
    }
    let s = Schedule::new(g, events);
    assert!(validate_schedule(&s).is_ok(), "{}", s.compact());
    s
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Gives the k-th data-carrying event the k-th alphabet symbol.
pub fn with_distinct_symbols(s: &Schedule, alphabet: &[u8]) -> Schedule {
    let mut k = 0;
    let events = s
        .events()
        .iter()
        .map(|e| match e {
            Event::Write { page, off, data } => {
                k += 1;
                Event::Write { page: *page, off: *off, data: vec![alphabet[k - 1]; data.len()] }
            }
            Event::SyncWrite { page, off, data } => {
                k += 1;
                Event::SyncWrite { page: *page, off: *off, data: vec![alphabet[k - 1]; data.len()] }
            }
            other => other.clone(),
        })
        .collect();
    Schedule::new(s.geometry(), events)
}

/// Applies a byte permutation to every written byte (init included).
pub fn rename(s: &Schedule, map: &[u8; 256]) -> Schedule {
    let m = |d: &[u8]| d.iter().map(|&b| map[b as usize]).collect::<Vec<u8>>();
    let events = s
        .events()
        .iter()
        .map(|e| match e {
            Event::Init { page, data } => Event::Init { page: *page, data: m(data) },
            Event::Write { page, off, data } => Event::Write { page: *page, off: *off, data: m(data) },
            Event::SyncWrite { page, off, data } => {
                Event::SyncWrite { page: *page, off: *off, data: m(data) }
            }
            other => other.clone(),
        })
        .collect();
    Schedule::with_labels(s.geometry(), events, s.labels().to_vec())
}
