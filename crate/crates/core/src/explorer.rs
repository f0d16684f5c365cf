//! Bounded exhaustive exploration.
//!
//! Every valid sequence of mutations up to a bound is generated depth first,
//! once without a crash and once with a crash appended, and each crash
//! schedule is judged for every strategy. Device states are carried down the
//! search tree so each node costs one step per strategy rather than a replay
//! of its whole prefix.
//!
//! Written data is a run of one symbol per write. The strategies and the
//! oracle move bytes by position and never branch on their values, so the
//! content of a write only matters through which earlier writes it can be
//! told apart from. Giving every write its own symbol ([`SymbolMode::Distinct`])
//! makes every write distinguishable; [`SymbolMode::Canonical`] instead walks
//! all symbol assignments up to renaming.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use rayon::prelude::*;
use thiserror::Error;

use crate::cases::{self, CaseTag};
use crate::devices::{run_to_crash, StepError, SystemState};
use crate::model::{
    validate_schedule, Event, Geometry, GeometryError, PageId, Schedule, Violation, WbPhase, BLANK,
};
use crate::oracle::{acceptable_page, check, check_against, ByteSet, History, Stamp, Verdict, Witness};
use crate::recovery::{RecoveryError, Strategy};

/// How data symbols are assigned to generated writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SymbolMode {
    /// The k-th write uses `alphabet[k]` (cycling when the alphabet runs out).
    #[default]
    Distinct,
    /// Each write reuses any symbol already seen or takes the next unused
    /// one, which enumerates every assignment once up to renaming.
    Canonical,
}

/// The three escalating models of the storage stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum World {
    /// Whole-page syncs, atomic write-back.
    A,
    /// Sync writes of any length, atomic write-back.
    B,
    /// Sync writes of any length, write-back split into start, deliver, end.
    C,
}

impl World {
    pub const ALL: [World; 3] = [World::A, World::B, World::C];

    pub fn name(self) -> &'static str {
        match self {
            World::A => "a",
            World::B => "b",
            World::C => "c",
        }
    }

    /// Whether `strategy` is expected to survive every schedule of this world.
    pub fn expects_pass(self, strategy: Strategy) -> bool {
        match (self, strategy) {
            (_, Strategy::NaiveDisk | Strategy::NaiveNvm) => false,
            (_, Strategy::VersionedMark) => true,
            (World::A, _) => true,
            (World::B, Strategy::LatestDev) => false,
            (World::B, _) => true,
            (World::C, _) => false,
        }
    }
}

impl fmt::Display for World {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown world {0:?} (expected a, b or c)")]
pub struct UnknownWorld(pub String);

impl FromStr for World {
    type Err = UnknownWorld;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(World::A),
            "b" => Ok(World::B),
            "c" => Ok(World::C),
            _ => Err(UnknownWorld(s.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("alphabet is empty")]
    EmptyAlphabet,
    #[error("alphabet contains the unwritten symbol '-'")]
    BlankInAlphabet,
    #[error("no strategies selected")]
    NoStrategies,
}

/// Bounds and switches for one exploration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExploreConfig {
    /// Mutations per schedule. An atomic write-back counts once; in split
    /// mode each of its three events counts.
    pub max_events: usize,
    pub geometry: Geometry,
    pub alphabet: Vec<u8>,
    pub symbols: SymbolMode,
    pub allow_partial_sync_writes: bool,
    pub allow_wb_duration: bool,
    /// Only allow a sync write when no plain write happened since the last
    /// whole-page sync, so every run of sync writes starts from a synced page.
    pub strict_sync_runs: bool,
    pub strategies: Vec<Strategy>,
}

impl ExploreConfig {
    /// Default bounds for a world: 5 events on one 4-byte page for A, 6 for
    /// B, and 7 on a 2-byte page for C.
    pub fn world(world: World) -> Self {
        let (max_events, page_size, partial, split) = match world {
            World::A => (5, 4, false, false),
            World::B => (6, 4, true, false),
            World::C => (7, 3, true, true),
        };
        Self {
            max_events,
            geometry: Geometry::new(page_size, 1).expect("default geometry"),
            alphabet: b"abcdefghijklmnopqrstuvwxyz".to_vec(),
            symbols: SymbolMode::Distinct,
            allow_partial_sync_writes: partial,
            allow_wb_duration: split,
            strict_sync_runs: true,
            strategies: Strategy::ALL.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.alphabet.is_empty() {
            return Err(ConfigError::EmptyAlphabet);
        }
        if self.alphabet.contains(&BLANK) {
            return Err(ConfigError::BlankInAlphabet);
        }
        if self.strategies.is_empty() {
            return Err(ConfigError::NoStrategies);
        }
        Ok(())
    }
}

/// One generator step. An atomic write-back expands to three events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Write { page: PageId, off: usize, len: usize, sym: u8 },
    Sync,
    SyncWrite { page: PageId, off: usize, len: usize, sym: u8 },
    Wb(PageId),
    WbStart(PageId),
    WbDeliver(PageId),
    WbEnd(PageId),
}

impl Move {
    fn push_events(self, out: &mut Vec<Event>) {
        match self {
            Move::Write { page, off, len, sym } => out.push(Event::Write {
                page,
                off,
                data: vec![sym; len],
            }),
            Move::Sync => out.push(Event::Sync),
            Move::SyncWrite { page, off, len, sym } => out.push(Event::SyncWrite {
                page,
                off,
                data: vec![sym; len],
            }),
            Move::Wb(page) => out.extend([
                Event::WbStart { page },
                Event::WbDeliver { page },
                Event::WbEnd { page },
            ]),
            Move::WbStart(page) => out.push(Event::WbStart { page }),
            Move::WbDeliver(page) => out.push(Event::WbDeliver { page }),
            Move::WbEnd(page) => out.push(Event::WbEnd { page }),
        }
    }

    fn events(self) -> Vec<Event> {
        let mut out = Vec::with_capacity(3);
        self.push_events(&mut out);
        out
    }
}

/// What the generator needs to know about the prefix to pick legal steps.
#[derive(Debug, Clone, PartialEq, Eq)]
struct GenState {
    ops: usize,
    dirty: Vec<bool>,
    phase: Vec<WbPhase>,
    plain_since_sync: bool,
    writes: usize,
    symbols_used: usize,
}

impl GenState {
    fn new(g: Geometry) -> Self {
        Self {
            ops: 0,
            dirty: vec![false; g.page_count()],
            phase: vec![WbPhase::Idle; g.page_count()],
            plain_since_sync: false,
            writes: 0,
            symbols_used: 0,
        }
    }

    fn symbols(&self, cfg: &ExploreConfig) -> Vec<u8> {
        match cfg.symbols {
            SymbolMode::Distinct => vec![cfg.alphabet[self.writes % cfg.alphabet.len()]],
            SymbolMode::Canonical => {
                let n = (self.symbols_used + 1).min(cfg.alphabet.len());
                cfg.alphabet[..n].to_vec()
            }
        }
    }

    /// Legal next steps, in the order that defines schedule ids.
    fn moves(&self, cfg: &ExploreConfig) -> Vec<Move> {
        if self.ops >= cfg.max_events {
            return Vec::new();
        }
        let g = cfg.geometry;
        let ps = g.page_size();
        let syms = self.symbols(cfg);
        let ranges = || {
            g.pages().flat_map(move |page| {
                (0..ps).flat_map(move |off| (1..=ps - off).map(move |len| (page, off, len)))
            })
        };
        let mut out = Vec::new();
        for (page, off, len) in ranges() {
            out.extend(syms.iter().map(|&sym| Move::Write { page, off, len, sym }));
        }
        out.push(Move::Sync);
        if cfg.allow_partial_sync_writes && !(cfg.strict_sync_runs && self.plain_since_sync) {
            for (page, off, len) in ranges() {
                out.extend(syms.iter().map(|&sym| Move::SyncWrite { page, off, len, sym }));
            }
        }
        for page in g.pages() {
            let p = page.index();
            if cfg.allow_wb_duration {
                match self.phase[p] {
                    WbPhase::Idle if self.dirty[p] => out.push(Move::WbStart(page)),
                    WbPhase::Idle => {}
                    WbPhase::Queued => out.push(Move::WbDeliver(page)),
                    WbPhase::Delivered => out.push(Move::WbEnd(page)),
                }
            } else if self.dirty[p] {
                out.push(Move::Wb(page));
            }
        }
        out
    }

    fn apply(&self, m: Move, cfg: &ExploreConfig) -> GenState {
        let mut next = self.clone();
        next.ops += 1;
        let wrote = |page: PageId, sym: u8, next: &mut GenState| {
            next.dirty[page.index()] = true;
            next.writes += 1;
            if let Some(i) = cfg.alphabet.iter().position(|&a| a == sym) {
                next.symbols_used = next.symbols_used.max(i + 1);
            }
        };
        match m {
            Move::Write { page, sym, .. } => {
                wrote(page, sym, &mut next);
                next.plain_since_sync = true;
            }
            Move::Sync => next.plain_since_sync = false,
            Move::SyncWrite { page, sym, .. } => wrote(page, sym, &mut next),
            Move::Wb(page) => next.dirty[page.index()] = false,
            Move::WbStart(page) => {
                next.dirty[page.index()] = false;
                next.phase[page.index()] = WbPhase::Queued;
            }
            Move::WbDeliver(page) => next.phase[page.index()] = WbPhase::Delivered,
            Move::WbEnd(page) => next.phase[page.index()] = WbPhase::Idle,
        }
        next
    }
}

fn schedule_id(path: &[u32], crash: bool) -> String {
    let mut id = String::from("r");
    for i in path {
        id.push('.');
        id.push_str(&i.to_string());
    }
    if crash {
        id.push('!');
    }
    id
}

/// Lazy depth-first enumeration. Yields each prefix without a crash, then
/// the same prefix with a crash, before descending into its extensions.
pub struct Enumeration {
    cfg: ExploreConfig,
    frames: Vec<Frame>,
    events: Vec<Event>,
    path: Vec<u32>,
    pending: Option<(String, Schedule)>,
    started: bool,
}

struct Frame {
    gen: GenState,
    moves: Vec<Move>,
    next: usize,
    events_len: usize,
}

impl Enumeration {
    /// Pairs every schedule with its id, a path of child indices from the root.
    pub fn with_ids(self) -> EnumerationWithIds {
        EnumerationWithIds(self)
    }

    fn emit(&mut self) -> (String, Schedule) {
        let g = self.cfg.geometry;
        let mut crashed = self.events.clone();
        crashed.push(Event::Crash);
        self.pending = Some((schedule_id(&self.path, true), Schedule::new(g, crashed)));
        (
            schedule_id(&self.path, false),
            Schedule::new(g, self.events.clone()),
        )
    }

    fn advance(&mut self) -> Option<(String, Schedule)> {
        if let Some(p) = self.pending.take() {
            return Some(p);
        }
        if !self.started {
            self.started = true;
            let gen = GenState::new(self.cfg.geometry);
            let moves = gen.moves(&self.cfg);
            self.frames.push(Frame {
                gen,
                moves,
                next: 0,
                events_len: 0,
            });
            return Some(self.emit());
        }
        loop {
            let top = self.frames.last_mut()?;
            if top.next < top.moves.len() {
                let i = top.next;
                top.next += 1;
                let m = top.moves[i];
                let gen = top.gen.apply(m, &self.cfg);
                let events_len = self.events.len();
                m.push_events(&mut self.events);
                self.path.push(i as u32);
                let moves = gen.moves(&self.cfg);
                self.frames.push(Frame {
                    gen,
                    moves,
                    next: 0,
                    events_len,
                });
                return Some(self.emit());
            }
            let done = self.frames.pop().expect("non-empty");
            self.events.truncate(done.events_len);
            self.path.pop();
        }
    }
}

impl Iterator for Enumeration {
    type Item = Schedule;

    fn next(&mut self) -> Option<Schedule> {
        self.advance().map(|(_, s)| s)
    }
}

pub struct EnumerationWithIds(Enumeration);

impl Iterator for EnumerationWithIds {
    type Item = (String, Schedule);

    fn next(&mut self) -> Option<(String, Schedule)> {
        self.0.advance()
    }
}

/// Every schedule within the bounds, each crash-free and with a trailing crash.
pub fn enumerate(cfg: &ExploreConfig) -> Enumeration {
    Enumeration {
        cfg: cfg.clone(),
        frames: Vec::new(),
        events: Vec::new(),
        path: Vec::new(),
        pending: None,
        started: false,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RunError {
    #[error("invalid trace: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("recovery failed: {0}")]
    Recovery(#[from] RecoveryError),
}

/// Runs the schedule up to its crash, recovers every page and judges it.
/// Crash-free schedules pass by construction.
pub fn run_one(s: &Schedule, strategy: Strategy) -> Result<Verdict, RunError> {
    validate_schedule(s).map_err(RunError::Invalid)?;
    let image = run_to_crash(s, strategy.hooks())?;
    if s.crash_pos().is_none() {
        return Ok(Verdict::Pass);
    }
    for page in s.geometry().pages() {
        let recovered = strategy.recover(&image.nvm, &image.disk, page)?;
        let verdict = check(&image.history, &recovered, page);
        if !verdict.is_pass() {
            return Ok(verdict);
        }
    }
    Ok(Verdict::Pass)
}

/// A schedule on which a strategy breaks sync semantics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub schedule: Schedule,
    pub strategy: Strategy,
    pub verdict: Verdict,
    pub minimized: bool,
}

impl Counterexample {
    /// Whether running the schedule again gives the recorded verdict.
    pub fn replays(&self) -> bool {
        run_one(&self.schedule, self.strategy).as_ref() == Ok(&self.verdict)
    }
}

/// Per-strategy outcome of a sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategyTally {
    pub strategy: Strategy,
    pub passed: u64,
    pub violations: u64,
    /// Recoveries that could not produce a page at all.
    pub errors: u64,
    /// Id and counterexample of the first failing schedule in enumeration order.
    pub first: Option<(String, Counterexample)>,
}

impl StrategyTally {
    fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            passed: 0,
            violations: 0,
            errors: 0,
            first: None,
        }
    }

    pub fn failures(&self) -> u64 {
        self.violations + self.errors
    }
}

/// One judged schedule, as emitted in machine-readable reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub id: String,
    pub strategy: Strategy,
    pub outcome: Result<Verdict, RecoveryError>,
}

/// Compact witness rendering for single-line reports.
pub fn witness_field(w: &Witness) -> String {
    let write = match w.write {
        Stamp::Init => "init".to_string(),
        Stamp::At(i) => format!("#{i}"),
    };
    let sync = w.sync.map_or_else(|| "none".to_string(), |s| format!("#{s}"));
    format!(
        "page{}/byte{}/got:{}/write:{}/sync:{}",
        w.page.0,
        w.offset,
        char::from(w.actual).escape_default(),
        write,
        sync
    )
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (verdict, witness) = match &self.outcome {
            Ok(Verdict::Pass) => ("PASS", "-".to_string()),
            Ok(Verdict::Violation(w)) => ("VIOLATION", witness_field(w)),
            Err(e) => ("ERROR", e.to_string().replace(' ', "_")),
        };
        write!(
            f,
            "schedule={} strategy={} verdict={} witness={}",
            self.id, self.strategy, verdict, witness
        )
    }
}

/// Everything a sweep found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepReport {
    pub schedules: u64,
    pub crash_schedules: u64,
    pub tallies: Vec<StrategyTally>,
    /// Crash schedules matching each proof-case shape.
    pub cases: BTreeMap<CaseTag, u64>,
    /// Per-schedule records, when requested, in enumeration order.
    pub records: Vec<Record>,
    /// Seed used when the sweep sampled instead of enumerating.
    pub seed: Option<u64>,
}

impl SweepReport {
    pub fn tally(&self, strategy: Strategy) -> Option<&StrategyTally> {
        self.tallies.iter().find(|t| t.strategy == strategy)
    }

    pub fn case_count(&self, case: CaseTag) -> u64 {
        self.cases.get(&case).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    pub workers: usize,
    pub records: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            records: false,
        }
    }
}

/// Sort key placing a schedule in depth-first order: the prefix first, then
/// its crash variant, then its extensions.
#[derive(Debug, Clone, PartialEq, Eq)]
struct PathKey {
    path: Vec<u32>,
    crash: bool,
}

impl Ord for PathKey {
    fn cmp(&self, other: &Self) -> Ordering {
        let common = self.path.len().min(other.path.len());
        match self.path[..common].cmp(&other.path[..common]) {
            Ordering::Equal => {}
            o => return o,
        }
        match (self.path.len().cmp(&other.path.len()), self.crash, other.crash) {
            (Ordering::Equal, a, b) => a.cmp(&b),
            (Ordering::Less, _, _) => Ordering::Less,
            (Ordering::Greater, _, _) => Ordering::Greater,
        }
    }
}

impl PartialOrd for PathKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Partial sweep result for one subtree.
struct Partial {
    schedules: u64,
    crash_schedules: u64,
    tallies: Vec<StrategyTally>,
    first_keys: Vec<Option<PathKey>>,
    cases: BTreeMap<CaseTag, u64>,
    records: Vec<(PathKey, usize, Record)>,
}

impl Partial {
    fn new(strategies: &[Strategy]) -> Self {
        Self {
            schedules: 0,
            crash_schedules: 0,
            tallies: strategies.iter().map(|&s| StrategyTally::new(s)).collect(),
            first_keys: vec![None; strategies.len()],
            cases: BTreeMap::new(),
            records: Vec::new(),
        }
    }

    fn merge(&mut self, other: Partial) {
        self.schedules += other.schedules;
        self.crash_schedules += other.crash_schedules;
        for (i, t) in other.tallies.into_iter().enumerate() {
            let mine = &mut self.tallies[i];
            mine.passed += t.passed;
            mine.violations += t.violations;
            mine.errors += t.errors;
            let take = match (&self.first_keys[i], &other.first_keys[i]) {
                (_, None) => false,
                (None, Some(_)) => true,
                (Some(a), Some(b)) => b < a,
            };
            if take {
                mine.first = t.first;
                self.first_keys[i] = other.first_keys[i].clone();
            }
        }
        for (c, n) in other.cases {
            *self.cases.entry(c).or_default() += n;
        }
        self.records.extend(other.records);
    }
}

/// A subtree root handed to a worker.
struct Task {
    path: Vec<u32>,
    gen: GenState,
    states: Vec<SystemState>,
    history: History,
    tokens: String,
}

struct Walker<'a> {
    cfg: &'a ExploreConfig,
    records: bool,
    /// `states[d][i]`: strategy `i`'s devices after the first `d` steps of the
    /// current path (relative to the walker's root).
    states: Vec<Vec<SystemState>>,
    history: History,
    tokens: String,
    path: Vec<u32>,
    out: Partial,
    /// Subtree roots collected instead of visited, when splitting.
    split_at: Option<usize>,
    tasks: Vec<Task>,
}

impl<'a> Walker<'a> {
    fn new(cfg: &'a ExploreConfig, records: bool, root: Task, split_at: Option<usize>) -> Self {
        let levels = cfg.max_events.saturating_sub(root.gen.ops) + 1;
        let mut states = vec![root.states.clone(); levels];
        states[0] = root.states;
        Self {
            cfg,
            records,
            states,
            history: root.history,
            tokens: root.tokens,
            path: root.path,
            out: Partial::new(&cfg.strategies),
            split_at,
            tasks: Vec::new(),
        }
    }

    fn judge_crash(&mut self, depth: usize) {
        let g = self.cfg.geometry;
        let acceptable: Vec<Vec<ByteSet>> = g
            .pages()
            .map(|p| acceptable_page(&self.history, g, p))
            .collect();
        self.tokens.push('!');
        for case in cases::tag_tokens(&self.tokens) {
            *self.out.cases.entry(case).or_default() += 1;
        }
        self.tokens.pop();
        self.out.crash_schedules += 1;
        let key = PathKey {
            path: self.path.clone(),
            crash: true,
        };
        for (i, &strategy) in self.cfg.strategies.iter().enumerate() {
            // Recovery reads only persistent state, so the pre-crash devices
            // can be recovered from directly.
            let state = &self.states[depth][i];
            let mut outcome = Ok(Verdict::Pass);
            for page in g.pages() {
                match strategy.recover(state.nvm(), state.disk(), page) {
                    Ok(bytes) => {
                        let v = check_against(
                            &self.history,
                            &acceptable[page.index()],
                            &bytes,
                            page,
                        );
                        if !v.is_pass() {
                            outcome = Ok(v);
                            break;
                        }
                    }
                    Err(e) => {
                        outcome = Err(e);
                        break;
                    }
                }
            }
            let tally = &mut self.out.tallies[i];
            match &outcome {
                Ok(Verdict::Pass) => tally.passed += 1,
                Ok(Verdict::Violation(_)) => tally.violations += 1,
                Err(_) => tally.errors += 1,
            }
            if self.out.first_keys[i].is_none() {
                if let Ok(v @ Verdict::Violation(_)) = &outcome {
                    let mut events = self.history.events().to_vec();
                    events.push(Event::Crash);
                    tally.first = Some((
                        schedule_id(&self.path, true),
                        Counterexample {
                            schedule: Schedule::new(g, events),
                            strategy,
                            verdict: v.clone(),
                            minimized: false,
                        },
                    ));
                    self.out.first_keys[i] = Some(key.clone());
                }
            }
            if self.records {
                self.out.records.push((
                    key.clone(),
                    i,
                    Record {
                        id: schedule_id(&self.path, true),
                        strategy,
                        outcome,
                    },
                ));
            }
        }
    }

    fn visit(&mut self, depth: usize, gen: &GenState) {
        self.out.schedules += 2;
        for t in &mut self.out.tallies {
            t.passed += 1;
        }
        if self.records {
            let key = PathKey {
                path: self.path.clone(),
                crash: false,
            };
            for (i, &strategy) in self.cfg.strategies.iter().enumerate() {
                self.out.records.push((
                    key.clone(),
                    i,
                    Record {
                        id: schedule_id(&self.path, false),
                        strategy,
                        outcome: Ok(Verdict::Pass),
                    },
                ));
            }
        }
        self.judge_crash(depth);

        for (idx, m) in gen.moves(self.cfg).into_iter().enumerate() {
            let child = gen.apply(m, self.cfg);
            let events = m.events();
            let (lower, upper) = self.states.split_at_mut(depth + 1);
            for (i, &strategy) in self.cfg.strategies.iter().enumerate() {
                let next = &mut upper[0][i];
                next.clone_from(&lower[depth][i]);
                for e in &events {
                    next.step(e, strategy.hooks())
                        .expect("generated schedules are valid for every strategy");
                }
            }
            let hist_len = self.history.events().len();
            for e in &events {
                self.history.push(e.clone());
                self.tokens.extend(cases::token(e));
            }
            self.path.push(idx as u32);
            if self.split_at == Some(child.ops) {
                self.tasks.push(Task {
                    path: self.path.clone(),
                    gen: child,
                    states: self.states[depth + 1].clone(),
                    history: self.history.clone(),
                    tokens: self.tokens.clone(),
                });
            } else {
                self.visit(depth + 1, &child);
            }
            self.path.pop();
            self.history.truncate(hist_len);
            self.tokens.truncate(self.tokens.len() - events.len());
        }
    }
}

/// Judges every schedule of [`enumerate`] under every configured strategy.
pub fn sweep(cfg: &ExploreConfig, opts: SweepOptions) -> Result<SweepReport, ConfigError> {
    cfg.validate()?;
    let root = Task {
        path: Vec::new(),
        gen: GenState::new(cfg.geometry),
        states: vec![SystemState::initialized(cfg.geometry); cfg.strategies.len()],
        history: History::new(),
        tokens: String::new(),
    };
    let split_at = (cfg.max_events >= 3).then_some(2);
    let mut top = Walker::new(cfg, opts.records, root, split_at);
    top.visit(0, &GenState::new(cfg.geometry));
    let tasks = std::mem::take(&mut top.tasks);
    let mut total = top.out;

    let run = |task: Task| {
        let gen = task.gen.clone();
        let mut w = Walker::new(cfg, opts.records, task, None);
        w.visit(0, &gen);
        w.out
    };
    let parts: Vec<Partial> = if opts.workers <= 1 {
        tasks.into_iter().map(run).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .expect("thread pool")
            .install(|| tasks.into_par_iter().map(run).collect())
    };
    for p in parts {
        total.merge(p);
    }
    Ok(finish(total, None))
}

fn finish(mut total: Partial, seed: Option<u64>) -> SweepReport {
    total
        .records
        .sort_by(|(ka, ia, _), (kb, ib, _)| ka.cmp(kb).then(ia.cmp(ib)));
    let mut cases = total.cases;
    for c in CaseTag::ALL {
        cases.entry(c).or_default();
    }
    SweepReport {
        schedules: total.schedules,
        crash_schedules: total.crash_schedules,
        tallies: total.tallies,
        cases,
        records: total.records.into_iter().map(|(_, _, r)| r).collect(),
        seed,
    }
}

/// `n` random schedules within the bounds, each ending in a crash with
/// probability one half. The same seed always gives the same schedules.
pub fn sample(cfg: &ExploreConfig, n: usize, seed: u64) -> Vec<Schedule> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let target = rng.random_range(0..=cfg.max_events);
            let mut gen = GenState::new(cfg.geometry);
            let mut events = Vec::new();
            while gen.ops < target {
                let moves = gen.moves(cfg);
                let m = moves[rng.random_range(0..moves.len())];
                m.push_events(&mut events);
                gen = gen.apply(m, cfg);
            }
            if rng.random_bool(0.5) {
                events.push(Event::Crash);
            }
            Schedule::new(cfg.geometry, events)
        })
        .collect()
}

/// Judges `n` sampled schedules instead of the full enumeration.
pub fn sweep_sampled(
    cfg: &ExploreConfig,
    n: usize,
    seed: u64,
    opts: SweepOptions,
) -> Result<SweepReport, ConfigError> {
    cfg.validate()?;
    let schedules = sample(cfg, n, seed);
    let judge = |(k, s): (usize, &Schedule)| {
        let mut part = Partial::new(&cfg.strategies);
        let key = PathKey {
            path: vec![k as u32],
            crash: false,
        };
        let id = format!("s{k}{}", if s.crash_pos().is_some() { "!" } else { "" });
        part.schedules += 1;
        if s.crash_pos().is_some() {
            part.crash_schedules += 1;
            for c in cases::tag(s) {
                *part.cases.entry(c).or_default() += 1;
            }
        }
        for (i, &strategy) in cfg.strategies.iter().enumerate() {
            let outcome = match run_one(s, strategy) {
                Ok(v) => Ok(v),
                Err(RunError::Recovery(e)) => Err(e),
                Err(e) => panic!("sampled schedule {id} is invalid: {e}"),
            };
            let tally = &mut part.tallies[i];
            match &outcome {
                Ok(Verdict::Pass) => tally.passed += 1,
                Ok(Verdict::Violation(v)) => {
                    tally.violations += 1;
                    tally.first = Some((
                        id.clone(),
                        Counterexample {
                            schedule: s.clone(),
                            strategy,
                            verdict: Verdict::Violation(v.clone()),
                            minimized: false,
                        },
                    ));
                    part.first_keys[i] = Some(key.clone());
                }
                Err(_) => tally.errors += 1,
            }
            if opts.records {
                part.records.push((
                    key.clone(),
                    i,
                    Record {
                        id: id.clone(),
                        strategy,
                        outcome,
                    },
                ));
            }
        }
        part
    };
    let parts: Vec<Partial> = if opts.workers <= 1 {
        schedules.iter().enumerate().map(judge).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .expect("thread pool")
            .install(|| schedules.par_iter().enumerate().map(judge).collect())
    };
    let mut total = Partial::new(&cfg.strategies);
    for p in parts {
        total.merge(p);
    }
    Ok(finish(total, Some(seed)))
}

/// Groups of positions the shrinker tries to delete together. A write-back
/// goes as a unit, or from its deliver (or end) onward.
fn removal_units(s: &Schedule) -> Vec<Vec<usize>> {
    let ev = s.events();
    let crash = s.crash_pos();
    let mut units = Vec::new();
    for (i, e) in ev.iter().enumerate() {
        if Some(i) == crash {
            continue;
        }
        match e {
            Event::WbStart { page } => {
                let mut unit = vec![i];
                let tail = ev[i + 1..]
                    .iter()
                    .position(|x| matches!(x, Event::WbStart { page: p } if p == page))
                    .map_or(ev.len(), |d| i + 1 + d);
                for (j, x) in ev.iter().enumerate().take(tail).skip(i + 1) {
                    if matches!(x, Event::WbDeliver { page: p } | Event::WbEnd { page: p } if p == page)
                    {
                        unit.push(j);
                    }
                }
                for k in 1..unit.len() {
                    units.push(unit[k..].to_vec());
                }
                units.push(unit);
            }
            Event::WbDeliver { .. } | Event::WbEnd { .. } => {}
            _ => units.push(vec![i]),
        }
    }
    units.sort_by_key(|u| std::cmp::Reverse(u.len()));
    units
}

/// Shorter variants of the data-carrying event at `pos`.
fn shortenings(e: &Event) -> Vec<Event> {
    match e {
        Event::Write { page, off, data } | Event::SyncWrite { page, off, data } if data.len() > 1 => {
            let rebuild = |off: usize, data: Vec<u8>| match e {
                Event::Write { .. } => Event::Write { page: *page, off, data },
                _ => Event::SyncWrite { page: *page, off, data },
            };
            vec![
                rebuild(*off, data[..data.len() - 1].to_vec()),
                rebuild(off + 1, data[1..].to_vec()),
            ]
        }
        _ => Vec::new(),
    }
}

fn still_fails(s: &Schedule, strategy: Strategy) -> Option<Verdict> {
    if validate_schedule(s).is_err() {
        return None;
    }
    match run_one(s, strategy) {
        Ok(v @ Verdict::Violation(_)) => Some(v),
        _ => None,
    }
}

/// Greedily deletes events and trims written data while the strategy still
/// fails, until no single deletion or trim keeps the failure.
pub fn shrink(c: &Counterexample) -> Counterexample {
    let mut best = c.clone();
    'outer: loop {
        for unit in removal_units(&best.schedule) {
            let candidate = best.schedule.without(&unit);
            if let Some(v) = still_fails(&candidate, best.strategy) {
                best.schedule = candidate;
                best.verdict = v;
                continue 'outer;
            }
        }
        for pos in 0..best.schedule.len() {
            for e in shortenings(&best.schedule.events()[pos]) {
                let candidate = best.schedule.with_event(pos, e);
                if let Some(v) = still_fails(&candidate, best.strategy) {
                    best.schedule = candidate;
                    best.verdict = v;
                    continue 'outer;
                }
            }
        }
        break;
    }
    best.minimized = true;
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(max_events: usize) -> ExploreConfig {
        ExploreConfig {
            max_events,
            geometry: Geometry::new(2, 1).unwrap(),
            alphabet: b"x".to_vec(),
            ..ExploreConfig::world(World::A)
        }
    }

    #[test]
    fn zero_bound_gives_empty_and_crash() {
        let all: Vec<Schedule> = enumerate(&tiny(0)).collect();
        assert_eq!(all.len(), 2);
        assert!(all[0].is_empty());
        assert_eq!(all[1].events(), &[Event::Crash]);
    }

    #[test]
    fn one_event_world_a_by_hand() {
        // Prefixes: empty, a write at (0,1) (0,2) or (1,1), or a sync. A
        // write-back needs a dirty page. Each with and without a crash.
        let all: Vec<Schedule> = enumerate(&tiny(1)).collect();
        assert_eq!(all.len(), 10);
    }

    #[test]
    fn ids_are_paths() {
        let ids: Vec<String> = enumerate(&tiny(1)).with_ids().map(|(id, _)| id).collect();
        assert_eq!(&ids[..4], ["r", "r!", "r.0", "r.0!"]);
    }

    #[test]
    fn strict_runs_block_sync_write_after_plain_write() {
        let cfg = ExploreConfig {
            max_events: 2,
            ..ExploreConfig::world(World::B)
        };
        for s in enumerate(&cfg) {
            let t = cases::tokens(&s);
            assert!(!t.contains("wa"), "{t}");
        }
    }

    #[test]
    fn path_key_is_preorder() {
        let k = |p: &[u32], c| PathKey {
            path: p.to_vec(),
            crash: c,
        };
        let mut keys = vec![k(&[1], false), k(&[0, 3], true), k(&[], true), k(&[0], false), k(&[], false)];
        keys.sort();
        assert_eq!(
            keys,
            vec![k(&[], false), k(&[], true), k(&[0], false), k(&[0, 3], true), k(&[1], false)]
        );
    }

    #[test]
    fn sweep_agrees_with_run_one() {
        let cfg = ExploreConfig {
            max_events: 3,
            ..ExploreConfig::world(World::C)
        };
        let report = sweep(
            &cfg,
            SweepOptions {
                workers: 1,
                records: true,
            },
        )
        .unwrap();
        let ids: BTreeMap<String, Schedule> = enumerate(&cfg).with_ids().collect();
        for r in &report.records {
            let s = &ids[&r.id];
            assert_eq!(run_one(s, r.strategy).map_err(|_| ()), r.outcome.clone().map_err(|_| ()), "{}", r.id);
        }
        assert_eq!(report.records.len() as u64, report.schedules * 6);
    }

    #[test]
    fn shrink_removes_padding() {
        let g = Geometry::new(4, 1).unwrap();
        let p = PageId(0);
        let s = Schedule::new(
            g,
            vec![
                Event::Read { page: p },
                Event::Write { page: p, off: 0, data: b"ab".to_vec() },
                Event::Read { page: p },
                Event::Sync,
                Event::Read { page: p },
                Event::Crash,
            ],
        );
        let verdict = run_one(&s, Strategy::NaiveDisk).unwrap();
        let c = Counterexample {
            schedule: s,
            strategy: Strategy::NaiveDisk,
            verdict,
            minimized: false,
        };
        let small = shrink(&c);
        assert!(small.minimized);
        assert!(small.replays());
        assert_eq!(small.schedule.compact(), "write 0 0 \"a\"; sync; crash");
        assert_eq!(shrink(&small).schedule, small.schedule);
    }
}
