//! DRAM page cache, NVM log and disk, stepped one event at a time.
//!
//! The simulator owns the cache, the disk and the write-back lifecycle. What
//! gets written to the NVM log is decided by the recovery strategy through
//! [`StrategyHooks`], which only ever see the [`NvmLog`].

use thiserror::Error;

use crate::model::{
    BoundsError, Device, Event, FlagError, Geometry, NvmRecord, PageBytes, PageFlags, PageId,
    Schedule, WbPhase,
};
use crate::oracle::History;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogError {
    #[error("record for page {page} has vid {vid}, not above the previous {prev}")]
    VidOrder { page: PageId, vid: u64, prev: u64 },
    #[error("writeback record for page {page} expires {exp_vid} past its own vid {vid}")]
    ExpiryAhead { page: PageId, exp_vid: u64, vid: u64 },
    #[error("record for page {0} outside the file")]
    Page(PageId),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepError {
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error("strategy bookkeeping: {0}")]
    Log(#[from] LogError),
}

impl StepError {
    fn invalid(event: &Event, why: impl std::fmt::Display) -> Self {
        StepError::InvalidTrace(format!("{event}: {why}"))
    }
}

/// Volatile page cache. A crash empties it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DramCache {
    pages: Vec<PageBytes>,
    flags: Vec<PageFlags>,
}

impl DramCache {
    fn new(g: Geometry) -> Self {
        Self {
            pages: vec![g.blank_page(); g.page_count()],
            flags: vec![PageFlags::default(); g.page_count()],
        }
    }

    pub fn page(&self, page: PageId) -> Option<&PageBytes> {
        self.pages.get(page.index())
    }

    pub fn flags(&self, page: PageId) -> Option<PageFlags> {
        self.flags.get(page.index()).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    fn clear(&mut self) {
        self.pages.clear();
        self.flags.clear();
    }
}

/// Append-only NVM log plus the per-page bookkeeping the strategies keep.
///
/// `records` and `latest_dev` are persistent. `page_ver_id` and `prep_rec`
/// live in DRAM and are lost on a crash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NvmLog {
    page_size: usize,
    records: Vec<NvmRecord>,
    latest_dev: Vec<Device>,
    page_ver_id: Vec<u64>,
    prep_rec: Vec<Option<NvmRecord>>,
}

impl NvmLog {
    pub fn new(g: Geometry) -> Self {
        Self {
            page_size: g.page_size(),
            records: Vec::new(),
            latest_dev: vec![Device::Disk; g.page_count()],
            page_ver_id: vec![0; g.page_count()],
            prep_rec: vec![None; g.page_count()],
        }
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    pub fn records(&self) -> &[NvmRecord] {
        &self.records
    }

    pub fn records_for(&self, page: PageId) -> impl DoubleEndedIterator<Item = &NvmRecord> {
        self.records.iter().filter(move |r| r.page() == page)
    }

    pub fn latest_dev(&self, page: PageId) -> Device {
        self.latest_dev[page.index()]
    }

    pub fn set_latest_dev(&mut self, page: PageId, dev: Device) {
        self.latest_dev[page.index()] = dev;
    }

    /// Current value of the page's version counter, without advancing it.
    pub fn page_ver_id(&self, page: PageId) -> u64 {
        self.page_ver_id[page.index()]
    }

    /// Hands out the current version id and advances the counter.
    pub fn take_vid(&mut self, page: PageId) -> u64 {
        let v = &mut self.page_ver_id[page.index()];
        let out = *v;
        *v += 1;
        out
    }

    pub fn prep_rec(&self, page: PageId) -> Option<&NvmRecord> {
        self.prep_rec[page.index()].as_ref()
    }

    pub fn set_prep_rec(&mut self, page: PageId, rec: Option<NvmRecord>) {
        self.prep_rec[page.index()] = rec;
    }

    /// Appends one record atomically, enforcing the log's ordering invariants.
    pub fn append(&mut self, rec: NvmRecord) -> Result<(), LogError> {
        let page = rec.page();
        if page.index() >= self.latest_dev.len() {
            return Err(LogError::Page(page));
        }
        if let NvmRecord::Write { off, data, .. } = &rec {
            if off + data.len() > self.page_size {
                return Err(BoundsError {
                    off: *off,
                    len: data.len(),
                    page_size: self.page_size,
                }
                .into());
            }
        }
        if let NvmRecord::Writeback { exp_vid, vid, .. } = rec {
            if exp_vid > vid {
                return Err(LogError::ExpiryAhead { page, exp_vid, vid });
            }
        }
        if let Some(prev) = self.records_for(page).next_back().map(NvmRecord::vid) {
            if rec.vid() <= prev {
                return Err(LogError::VidOrder {
                    page,
                    vid: rec.vid(),
                    prev,
                });
            }
        }
        self.records.push(rec);
        Ok(())
    }

    /// Appends a sync record stamped with the next version id.
    pub fn append_write(&mut self, page: PageId, off: usize, data: &[u8]) -> Result<(), LogError> {
        let vid = self.take_vid(page);
        self.append(NvmRecord::Write {
            page,
            off,
            data: data.to_vec(),
            vid,
        })
    }

    fn seed(&mut self, page: PageId, bytes: &PageBytes) -> Result<(), LogError> {
        self.append_write(page, 0, bytes.as_bytes())?;
        self.set_latest_dev(page, Device::Nvm);
        Ok(())
    }

    /// Drops the volatile fields. The version counter restarts just above
    /// the highest id already in the log.
    fn crash(&mut self) {
        for p in 0..self.page_ver_id.len() {
            let page = PageId(p as u32);
            self.page_ver_id[p] = self.records_for(page).map(|r| r.vid() + 1).max().unwrap_or(0);
            self.prep_rec[p] = None;
        }
    }
}

/// Persistent disk image plus the volatile I/O queue state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiskState {
    pages: Vec<PageBytes>,
    inflight: Vec<WbPhase>,
}

impl DiskState {
    pub fn new(g: Geometry) -> Self {
        Self {
            pages: vec![g.blank_page(); g.page_count()],
            inflight: vec![WbPhase::Idle; g.page_count()],
        }
    }

    pub fn page(&self, page: PageId) -> &PageBytes {
        &self.pages[page.index()]
    }

    pub fn inflight(&self, page: PageId) -> WbPhase {
        self.inflight[page.index()]
    }

    fn crash(&mut self) {
        self.inflight.iter_mut().for_each(|i| *i = WbPhase::Idle);
    }
}

/// The instant within a write-back at which a strategy acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WbInstant {
    Start,
    Deliver,
    End,
}

/// Callbacks through which a recovery strategy persists its bookkeeping.
///
/// Hooks get the NVM log and nothing else, so they cannot touch the disk.
pub trait StrategyHooks: Send + Sync {
    /// Whole-page sync of a page that is DIRTY or under WRITEBACK.
    fn on_sync(&self, nvm: &mut NvmLog, page: PageId, bytes: &PageBytes) -> Result<(), LogError>;

    fn on_sync_write(
        &self,
        nvm: &mut NvmLog,
        page: PageId,
        off: usize,
        data: &[u8],
    ) -> Result<(), LogError>;

    fn on_writeback(&self, _nvm: &mut NvmLog, _page: PageId, _at: WbInstant) -> Result<(), LogError> {
        Ok(())
    }
}

/// Hooks that only absorb syncs and keep no write-back bookkeeping.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogOnlyHooks;

impl StrategyHooks for LogOnlyHooks {
    fn on_sync(&self, nvm: &mut NvmLog, page: PageId, bytes: &PageBytes) -> Result<(), LogError> {
        nvm.append_write(page, 0, bytes.as_bytes())
    }

    fn on_sync_write(
        &self,
        nvm: &mut NvmLog,
        page: PageId,
        off: usize,
        data: &[u8],
    ) -> Result<(), LogError> {
        nvm.append_write(page, off, data)
    }
}

/// Cache, NVM and disk together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemState {
    geometry: Geometry,
    cache: DramCache,
    nvm: NvmLog,
    disk: DiskState,
    crashed: bool,
}

impl SystemState {
    /// Blank pages on cache and disk and an empty log. Pages are expected to
    /// be seeded with an `Init` event (or [`SystemState::initialized`]).
    pub fn new(geometry: Geometry) -> Self {
        Self {
            geometry,
            cache: DramCache::new(geometry),
            nvm: NvmLog::new(geometry),
            disk: DiskState::new(geometry),
            crashed: false,
        }
    }

    /// Every page seeded with blank content on all three layers.
    pub fn initialized(geometry: Geometry) -> Self {
        let mut s = Self::new(geometry);
        for page in geometry.pages() {
            s.init_page(page, geometry.blank_page())
                .expect("blank seed fits");
        }
        s
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn cache(&self) -> &DramCache {
        &self.cache
    }

    pub fn nvm(&self) -> &NvmLog {
        &self.nvm
    }

    pub fn disk(&self) -> &DiskState {
        &self.disk
    }

    pub fn crashed(&self) -> bool {
        self.crashed
    }

    pub fn into_parts(self) -> (NvmLog, DiskState) {
        (self.nvm, self.disk)
    }

    /// Scrambles every volatile field. Used to show recovery never reads them.
    pub fn perturb_volatile(&mut self, seed: u64) {
        let mut x = seed | 1;
        let mut next = || {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            x
        };
        for p in 0..self.geometry.page_count() {
            let page = PageId(p as u32);
            self.nvm.page_ver_id[p] = next() % 1000;
            self.nvm.prep_rec[p] = Some(NvmRecord::Writeback {
                page,
                exp_vid: next() % 7,
                vid: next() % 7 + 7,
            });
            self.disk.inflight[p] = [WbPhase::Idle, WbPhase::Queued, WbPhase::Delivered]
                [(next() % 3) as usize];
            if let Some(bytes) = self.cache.pages.get_mut(p) {
                for b in bytes.bytes_mut() {
                    *b = (next() % 256) as u8;
                }
            }
        }
    }

    fn init_page(&mut self, page: PageId, bytes: PageBytes) -> Result<(), StepError> {
        self.cache.pages[page.index()] = bytes.clone();
        self.cache.flags[page.index()] = PageFlags::default();
        self.disk.pages[page.index()] = bytes.clone();
        self.nvm.seed(page, &bytes)?;
        Ok(())
    }

    fn check_page(&self, event: &Event, page: PageId) -> Result<usize, StepError> {
        if self.geometry.contains(page) {
            Ok(page.index())
        } else {
            Err(StepError::invalid(event, "page out of range"))
        }
    }

    /// Applies one event.
    pub fn step(&mut self, event: &Event, hooks: &dyn StrategyHooks) -> Result<(), StepError> {
        if self.crashed && !matches!(event, Event::Read { .. }) {
            return Err(StepError::invalid(event, "after crash"));
        }
        match event {
            Event::Init { page, data } => {
                self.check_page(event, *page)?;
                if data.len() != self.geometry.page_size() {
                    return Err(StepError::invalid(event, "init must cover the whole page"));
                }
                self.init_page(*page, PageBytes::from_vec(data.clone()))?;
            }
            Event::Write { page, off, data } => {
                let p = self.check_page(event, *page)?;
                self.cache.pages[p].overlay_in_place(data, *off)?;
                self.cache.flags[p].mark_dirty();
            }
            Event::Sync => {
                for page in self.geometry.pages() {
                    let p = page.index();
                    if self.cache.flags[p].needs_sync() {
                        hooks.on_sync(&mut self.nvm, page, &self.cache.pages[p])?;
                    }
                }
            }
            Event::SyncWrite { page, off, data } => {
                let p = self.check_page(event, *page)?;
                self.cache.pages[p].overlay_in_place(data, *off)?;
                self.cache.flags[p].mark_dirty();
                hooks.on_sync_write(&mut self.nvm, *page, *off, data)?;
            }
            Event::WbStart { page } => {
                let p = self.check_page(event, *page)?;
                self.cache.flags[p]
                    .start_writeback()
                    .map_err(|e: FlagError| StepError::invalid(event, e))?;
                self.disk.inflight[p] = WbPhase::Queued;
                hooks.on_writeback(&mut self.nvm, *page, WbInstant::Start)?;
            }
            Event::WbDeliver { page } => {
                let p = self.check_page(event, *page)?;
                if self.disk.inflight[p] != WbPhase::Queued {
                    return Err(StepError::invalid(event, "no queued write-back"));
                }
                // The disk stores whatever the cache holds at this instant.
                self.disk.pages[p] = self.cache.pages[p].clone();
                self.disk.inflight[p] = WbPhase::Delivered;
                hooks.on_writeback(&mut self.nvm, *page, WbInstant::Deliver)?;
            }
            Event::WbEnd { page } => {
                let p = self.check_page(event, *page)?;
                if self.disk.inflight[p] != WbPhase::Delivered {
                    return Err(StepError::invalid(event, "write-back not delivered"));
                }
                self.cache.flags[p]
                    .end_writeback()
                    .map_err(|e| StepError::invalid(event, e))?;
                self.disk.inflight[p] = WbPhase::Idle;
                hooks.on_writeback(&mut self.nvm, *page, WbInstant::End)?;
            }
            Event::Crash => {
                self.cache.clear();
                self.nvm.crash();
                self.disk.crash();
                self.crashed = true;
            }
            Event::Read { page } => {
                self.check_page(event, *page)?;
            }
        }
        Ok(())
    }

    /// Runs a whole schedule. Pages the schedule never `init`s are seeded
    /// blank first; those seeds are not part of the returned history.
    pub fn run(s: &Schedule, hooks: &dyn StrategyHooks) -> Result<(SystemState, History), StepError> {
        let g = s.geometry();
        let mut state = SystemState::new(g);
        let explicit: Vec<PageId> = s
            .events()
            .iter()
            .filter_map(|e| match e {
                Event::Init { page, .. } => Some(*page),
                _ => None,
            })
            .collect();
        for page in g.pages().filter(|p| !explicit.contains(p)) {
            state.init_page(page, g.blank_page())?;
        }
        let mut history = History::new();
        for e in s.events() {
            if state.crashed {
                // Post-crash reads observe recovery output, not the devices.
                state.step(e, hooks)?;
                continue;
            }
            state.step(e, hooks)?;
            history.push(e.clone());
        }
        Ok((state, history))
    }
}

/// Persistent state left after a crash, plus what ran before it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrashImage {
    pub nvm: NvmLog,
    pub disk: DiskState,
    pub history: History,
}

/// Folds [`SystemState::step`] over the schedule up to and including its crash.
pub fn run_to_crash(s: &Schedule, hooks: &dyn StrategyHooks) -> Result<CrashImage, StepError> {
    let pre = Schedule::with_labels(
        s.geometry(),
        s.events()[..s.crash_pos().map_or(s.len(), |c| c + 1)].to_vec(),
        s.labels()[..s.crash_pos().map_or(s.len(), |c| c + 1)].to_vec(),
    );
    let (state, history) = SystemState::run(&pre, hooks)?;
    let (nvm, disk) = state.into_parts();
    Ok(CrashImage { nvm, disk, history })
}
