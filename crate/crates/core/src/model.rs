//! Events, pages, NVM records and the byte-overlay arithmetic shared by the
//! simulator, the recovery procedures and the oracle.

use std::fmt;

use thiserror::Error;

/// The byte used for never-written page content.
pub const BLANK: u8 = b'-';

/// Index of a page within the single simulated file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PageId(pub u32);

impl PageId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for PageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("page size {0} outside 1..={max}", max = Geometry::MAX_PAGE_SIZE)]
    PageSize(usize),
    #[error("page count must be at least 1")]
    PageCount,
}

/// Shape of the simulated file: how many pages and how large each one is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Geometry {
    page_size: usize,
    page_count: usize,
}

impl Geometry {
    pub const MAX_PAGE_SIZE: usize = 4096;

    pub fn new(page_size: usize, page_count: usize) -> Result<Self, GeometryError> {
        if page_size == 0 || page_size > Self::MAX_PAGE_SIZE {
            return Err(GeometryError::PageSize(page_size));
        }
        if page_count == 0 {
            return Err(GeometryError::PageCount);
        }
        Ok(Self {
            page_size,
            page_count,
        })
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    pub fn page_count(&self) -> usize {
        self.page_count
    }

    pub fn pages(&self) -> impl Iterator<Item = PageId> + Clone {
        (0..self.page_count as u32).map(PageId)
    }

    pub fn contains(&self, page: PageId) -> bool {
        page.index() < self.page_count
    }

    pub fn blank_page(&self) -> PageBytes {
        PageBytes::blank(self.page_size)
    }
}

impl Default for Geometry {
    /// Six-byte pages, one page: the shape of the hand-drawn timelines.
    fn default() -> Self {
        Self {
            page_size: 6,
            page_count: 1,
        }
    }
}

/// Full contents of one page.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PageBytes(Vec<u8>);

impl PageBytes {
    pub fn blank(page_size: usize) -> Self {
        Self(vec![BLANK; page_size])
    }

    pub fn from_vec(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn bytes_mut(&mut self) -> &mut [u8] {
        &mut self.0
    }

    /// Replaces `[off, off + data.len())` in place.
    pub fn overlay_in_place(&mut self, data: &[u8], off: usize) -> Result<(), BoundsError> {
        check_bounds(off, data.len(), self.0.len())?;
        self.0[off..off + data.len()].copy_from_slice(data);
        Ok(())
    }
}

impl From<&[u8]> for PageBytes {
    fn from(bytes: &[u8]) -> Self {
        Self(bytes.to_vec())
    }
}

impl From<&str> for PageBytes {
    fn from(s: &str) -> Self {
        Self(s.as_bytes().to_vec())
    }
}

impl fmt::Debug for PageBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", String::from_utf8_lossy(&self.0))
    }
}

impl fmt::Display for PageBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&String::from_utf8_lossy(&self.0))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{len} bytes at offset {off} do not fit in a {page_size}-byte page")]
pub struct BoundsError {
    pub off: usize,
    pub len: usize,
    pub page_size: usize,
}

fn check_bounds(off: usize, len: usize, page_size: usize) -> Result<(), BoundsError> {
    match off.checked_add(len) {
        Some(end) if end <= page_size => Ok(()),
        _ => Err(BoundsError { off, len, page_size }),
    }
}

/// Returns `base` with bytes `[off, off + data.len())` replaced by `data`.
///
/// Later overlays win byte-for-byte; `base` itself is left untouched.
pub fn overlay(base: &PageBytes, data: &[u8], off: usize) -> Result<PageBytes, BoundsError> {
    let mut out = base.clone();
    out.overlay_in_place(data, off)?;
    Ok(out)
}

/// Discriminant of [`Event`], used for reporting and pattern matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Init,
    Write,
    Sync,
    SyncWrite,
    WbStart,
    WbDeliver,
    WbEnd,
    Crash,
    Read,
}

/// One step of a file-system timeline.
///
/// `SyncWrite` is a write immediately followed by its own sync (an `O_SYNC`
/// write). The three `Wb*` events split one write-back into its queueing
/// instant, the instant the disk really stores the page, and the completion
/// callback.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Event {
    Init { page: PageId, data: Vec<u8> },
    Write { page: PageId, off: usize, data: Vec<u8> },
    Sync,
    SyncWrite { page: PageId, off: usize, data: Vec<u8> },
    WbStart { page: PageId },
    WbDeliver { page: PageId },
    WbEnd { page: PageId },
    Crash,
    Read { page: PageId },
}

impl Event {
    pub fn kind(&self) -> EventKind {
        match self {
            Event::Init { .. } => EventKind::Init,
            Event::Write { .. } => EventKind::Write,
            Event::Sync => EventKind::Sync,
            Event::SyncWrite { .. } => EventKind::SyncWrite,
            Event::WbStart { .. } => EventKind::WbStart,
            Event::WbDeliver { .. } => EventKind::WbDeliver,
            Event::WbEnd { .. } => EventKind::WbEnd,
            Event::Crash => EventKind::Crash,
            Event::Read { .. } => EventKind::Read,
        }
    }

    pub fn page(&self) -> Option<PageId> {
        match self {
            Event::Init { page, .. }
            | Event::Write { page, .. }
            | Event::SyncWrite { page, .. }
            | Event::WbStart { page }
            | Event::WbDeliver { page }
            | Event::WbEnd { page }
            | Event::Read { page } => Some(*page),
            Event::Sync | Event::Crash => None,
        }
    }

    /// The bytes this event puts into a page, if any.
    pub fn written(&self) -> Option<(PageId, usize, &[u8])> {
        match self {
            Event::Init { page, data } => Some((*page, 0, data)),
            Event::Write { page, off, data } | Event::SyncWrite { page, off, data } => {
                Some((*page, *off, data))
            }
            _ => None,
        }
    }

    /// Directive name in the trace grammar.
    pub fn name(&self) -> &'static str {
        match self {
            Event::Init { .. } => "init",
            Event::Write { .. } => "write",
            Event::Sync => "sync",
            Event::SyncWrite { .. } => "syncw",
            Event::WbStart { .. } => "wb_start",
            Event::WbDeliver { .. } => "wb_deliver",
            Event::WbEnd { .. } => "wb_end",
            Event::Crash => "crash",
            Event::Read { .. } => "read",
        }
    }

    /// Events that change simulated state before a crash. Reads and the crash
    /// itself are not mutations; neither is `Init`, which only seeds.
    pub fn is_mutation(&self) -> bool {
        matches!(
            self,
            Event::Write { .. }
                | Event::Sync
                | Event::SyncWrite { .. }
                | Event::WbStart { .. }
                | Event::WbDeliver { .. }
                | Event::WbEnd { .. }
        )
    }

    /// Events after which every earlier write to the file must survive a crash.
    pub fn is_sync_point(&self) -> bool {
        matches!(self, Event::Sync | Event::SyncWrite { .. })
    }
}

fn quoted(f: &mut fmt::Formatter<'_>, data: &[u8]) -> fmt::Result {
    write!(f, "\"{}\"", String::from_utf8_lossy(data))
}

impl fmt::Display for Event {
    /// Renders the event as a single trace directive.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Init { page, data } => {
                write!(f, "init {page} ")?;
                quoted(f, data)
            }
            Event::Write { page, off, data } => {
                write!(f, "write {page} {off} ")?;
                quoted(f, data)
            }
            Event::Sync => f.write_str("sync"),
            Event::SyncWrite { page, off, data } => {
                write!(f, "syncw {page} {off} ")?;
                quoted(f, data)
            }
            Event::WbStart { page } => write!(f, "wb_start {page}"),
            Event::WbDeliver { page } => write!(f, "wb_deliver {page}"),
            Event::WbEnd { page } => write!(f, "wb_end {page}"),
            Event::Crash => f.write_str("crash"),
            Event::Read { page } => write!(f, "read {page}"),
        }
    }
}

/// Which NVM device currently holds the newest version of a page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Device {
    Disk,
    Nvm,
}

/// One persistent NVM log entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NvmRecord {
    /// Bytes absorbed by a sync. Whole-page syncs store the full page at offset 0.
    Write {
        page: PageId,
        off: usize,
        data: Vec<u8>,
        vid: u64,
    },
    /// Marks that the disk holds a full copy of the page; everything with a
    /// version id below `exp_vid` is covered by that copy.
    Writeback { page: PageId, exp_vid: u64, vid: u64 },
}

impl NvmRecord {
    pub fn page(&self) -> PageId {
        match self {
            NvmRecord::Write { page, .. } | NvmRecord::Writeback { page, .. } => *page,
        }
    }

    pub fn vid(&self) -> u64 {
        match self {
            NvmRecord::Write { vid, .. } | NvmRecord::Writeback { vid, .. } => *vid,
        }
    }

    pub fn is_whole_page(&self, page_size: usize) -> bool {
        matches!(self, NvmRecord::Write { off: 0, data, .. } if data.len() == page_size)
    }
}

/// Progress of a page through the write-back lifecycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum WbPhase {
    #[default]
    Idle,
    Queued,
    Delivered,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum FlagError {
    #[error("write-back started on a clean page")]
    Clean,
    #[error("write-back started while another is in flight")]
    Nested,
    #[error("write-back ended with none in flight")]
    NotInFlight,
}

/// DIRTY / WRITEBACK bits of a cached page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PageFlags {
    pub dirty: bool,
    pub writeback: bool,
}

impl PageFlags {
    pub fn mark_dirty(&mut self) {
        self.dirty = true;
    }

    /// DIRTY true→false and WRITEBACK false→true as one transition.
    pub fn start_writeback(&mut self) -> Result<(), FlagError> {
        if self.writeback {
            return Err(FlagError::Nested);
        }
        if !self.dirty {
            return Err(FlagError::Clean);
        }
        self.dirty = false;
        self.writeback = true;
        Ok(())
    }

    pub fn end_writeback(&mut self) -> Result<(), FlagError> {
        if !self.writeback {
            return Err(FlagError::NotInFlight);
        }
        self.writeback = false;
        Ok(())
    }

    /// Pages a sync must persist: anything not yet safely on disk.
    pub fn needs_sync(&self) -> bool {
        self.dirty || self.writeback
    }
}

/// A finite timeline with at most one crash. Events after the crash may only
/// be reads, which observe the recovered state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Schedule {
    geometry: Geometry,
    events: Vec<Event>,
    labels: Vec<Option<String>>,
}

impl Schedule {
    pub fn new(geometry: Geometry, events: Vec<Event>) -> Self {
        let labels = vec![None; events.len()];
        Self {
            geometry,
            events,
            labels,
        }
    }

    /// `labels[i]` names `events[i]` in reports (e.g. the timeline's "O3").
    pub fn with_labels(geometry: Geometry, events: Vec<Event>, labels: Vec<Option<String>>) -> Self {
        assert_eq!(events.len(), labels.len(), "one label slot per event");
        Self {
            geometry,
            events,
            labels,
        }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn label(&self, pos: usize) -> Option<&str> {
        self.labels.get(pos).and_then(|l| l.as_deref())
    }

    pub fn labels(&self) -> &[Option<String>] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn crash_pos(&self) -> Option<usize> {
        self.events.iter().position(|e| *e == Event::Crash)
    }

    /// Events executed before the crash (all of them for crash-free runs).
    pub fn pre_crash(&self) -> &[Event] {
        &self.events[..self.crash_pos().unwrap_or(self.events.len())]
    }

    /// Number of state-changing operations, counting a back-to-back
    /// `wb_start`/`wb_deliver`/`wb_end` on one page as a single write-back.
    pub fn op_count(&self) -> usize {
        let ev = &self.events;
        let mut i = 0;
        let mut n = 0;
        while i < ev.len() {
            if let Event::WbStart { page } = ev[i] {
                if ev.get(i + 1) == Some(&Event::WbDeliver { page })
                    && ev.get(i + 2) == Some(&Event::WbEnd { page })
                {
                    n += 1;
                    i += 3;
                    continue;
                }
            }
            if ev[i].is_mutation() {
                n += 1;
            }
            i += 1;
        }
        n
    }

    /// Removes the events at `positions` (sorted or not), keeping labels aligned.
    pub fn without(&self, positions: &[usize]) -> Schedule {
        let (events, labels) = self
            .events
            .iter()
            .zip(&self.labels)
            .enumerate()
            .filter(|(i, _)| !positions.contains(i))
            .map(|(_, (e, l))| (e.clone(), l.clone()))
            .unzip();
        Schedule {
            geometry: self.geometry,
            events,
            labels,
        }
    }

    pub fn with_event(&self, pos: usize, event: Event) -> Schedule {
        let mut out = self.clone();
        out.events[pos] = event;
        out
    }

    /// One-line rendering used as a report field.
    pub fn compact(&self) -> String {
        self.events
            .iter()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Invariant a schedule can break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    PageOutOfRange,
    OutOfBounds,
    EmptyWrite,
    InitSize,
    LateInit,
    DuplicateInit,
    MultipleCrash,
    MutationAfterCrash,
    UnmatchedWbDeliver,
    UnmatchedWbEnd,
    NestedWriteback,
    WbEndBeforeDeliver,
    WritebackOfCleanPage,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::PageOutOfRange => "page out of range",
            Rule::OutOfBounds => "write out of bounds",
            Rule::EmptyWrite => "empty write",
            Rule::InitSize => "init size",
            Rule::LateInit => "late init",
            Rule::DuplicateInit => "duplicate init",
            Rule::MultipleCrash => "multiple crash",
            Rule::MutationAfterCrash => "mutation after crash",
            Rule::UnmatchedWbDeliver => "unmatched wb_deliver",
            Rule::UnmatchedWbEnd => "unmatched wb_end",
            Rule::NestedWriteback => "nested writeback",
            Rule::WbEndBeforeDeliver => "wb_end before deliver",
            Rule::WritebackOfCleanPage => "writeback of clean page",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Violation {
    pub pos: usize,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "event {}: {}", self.pos, self.rule)
    }
}

/// Checks every event and ordering invariant, returning all violations found.
pub fn validate_schedule(s: &Schedule) -> Result<(), Vec<Violation>> {
    let g = s.geometry();
    let mut out = Vec::new();
    let mut flags = vec![PageFlags::default(); g.page_count()];
    let mut phase = vec![WbPhase::Idle; g.page_count()];
    let mut inited = vec![false; g.page_count()];
    let mut crashed = false;
    let mut seen_non_init = false;

    for (pos, e) in s.events().iter().enumerate() {
        let mut bad = |rule| out.push(Violation { pos, rule });

        if let Some(page) = e.page() {
            if !g.contains(page) {
                bad(Rule::PageOutOfRange);
                continue;
            }
        }
        if crashed && !matches!(e, Event::Read { .. }) {
            bad(if *e == Event::Crash {
                Rule::MultipleCrash
            } else {
                Rule::MutationAfterCrash
            });
            continue;
        }

        match e {
            Event::Init { page, data } => {
                if data.len() != g.page_size() {
                    bad(Rule::InitSize);
                }
                if seen_non_init {
                    bad(Rule::LateInit);
                }
                if std::mem::replace(&mut inited[page.index()], true) {
                    bad(Rule::DuplicateInit);
                }
            }
            Event::Write { page, off, data } | Event::SyncWrite { page, off, data } => {
                if data.is_empty() {
                    bad(Rule::EmptyWrite);
                }
                if check_bounds(*off, data.len(), g.page_size()).is_err() {
                    bad(Rule::OutOfBounds);
                }
                flags[page.index()].mark_dirty();
            }
            Event::WbStart { page } => {
                let p = page.index();
                if phase[p] != WbPhase::Idle {
                    bad(Rule::NestedWriteback);
                }
                if !flags[p].dirty {
                    bad(Rule::WritebackOfCleanPage);
                }
                flags[p].dirty = false;
                flags[p].writeback = true;
                phase[p] = WbPhase::Queued;
            }
            Event::WbDeliver { page } => {
                let p = page.index();
                if phase[p] != WbPhase::Queued {
                    bad(Rule::UnmatchedWbDeliver);
                } else {
                    phase[p] = WbPhase::Delivered;
                }
            }
            Event::WbEnd { page } => {
                let p = page.index();
                match phase[p] {
                    WbPhase::Idle => bad(Rule::UnmatchedWbEnd),
                    WbPhase::Queued => bad(Rule::WbEndBeforeDeliver),
                    WbPhase::Delivered => {}
                }
                phase[p] = WbPhase::Idle;
                flags[p].writeback = false;
            }
            Event::Crash => crashed = true,
            Event::Sync | Event::Read { .. } => {}
        }
        if !matches!(e, Event::Init { .. }) {
            seen_non_init = true;
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
