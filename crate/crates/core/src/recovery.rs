//! Crash recovery procedures and the hooks that feed them.
//!
//! Three of the six strategies are the real designs: a persistent
//! latest-device marker per page, write-back marks in the NVM log, and
//! versioned write-back marks that only expire data at write-back completion.
//! The other three are the obvious shortcuts, kept so their failures can be
//! reproduced.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::devices::{DiskState, LogError, LogOnlyHooks, NvmLog, StrategyHooks, WbInstant};
use crate::model::{Device, NvmRecord, PageBytes, PageId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecoveryError {
    #[error("page {page}: {reason}")]
    CorruptState { page: PageId, reason: &'static str },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown strategy {0:?} (expected one of: {list})", list = Strategy::ALL.map(|s| s.name()).join(", "))]
pub struct UnknownStrategy(pub String);

/// A recovery design: hooks that run before the crash plus the procedure
/// that rebuilds pages after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Always trust the disk.
    NaiveDisk,
    /// Always rebuild from the NVM log.
    NaiveNvm,
    /// Persistent per-page marker naming the device with the newest data.
    LatestDev,
    /// Write-back mark appended when the write-back is queued.
    WbMarkAtStart,
    /// Write-back mark appended when the write-back completes.
    WbMarkAtEnd,
    /// Write-back mark stamped at queueing time, persisted at completion.
    VersionedMark,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::NaiveDisk,
        Strategy::NaiveNvm,
        Strategy::LatestDev,
        Strategy::WbMarkAtStart,
        Strategy::WbMarkAtEnd,
        Strategy::VersionedMark,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::NaiveDisk => "naive-disk",
            Strategy::NaiveNvm => "naive-nvm",
            Strategy::LatestDev => "latest-dev",
            Strategy::WbMarkAtStart => "wb-mark-start",
            Strategy::WbMarkAtEnd => "wb-mark-end",
            Strategy::VersionedMark => "versioned-mark",
        }
    }

    pub fn hooks(self) -> &'static dyn StrategyHooks {
        static LOG_ONLY: LogOnlyHooks = LogOnlyHooks;
        static LATEST: LatestDevHooks = LatestDevHooks {
            mark: WbInstant::Deliver,
        };
        static MARK_START: WbMarkHooks = WbMarkHooks {
            at: WbInstant::Start,
        };
        static MARK_END: WbMarkHooks = WbMarkHooks { at: WbInstant::End };
        static VERSIONED: VersionedHooks = VersionedHooks;
        match self {
            Strategy::NaiveDisk | Strategy::NaiveNvm => &LOG_ONLY,
            Strategy::LatestDev => &LATEST,
            Strategy::WbMarkAtStart => &MARK_START,
            Strategy::WbMarkAtEnd => &MARK_END,
            Strategy::VersionedMark => &VERSIONED,
        }
    }

    /// Rebuilds one page from persistent state only.
    pub fn recover(
        self,
        nvm: &NvmLog,
        disk: &DiskState,
        page: PageId,
    ) -> Result<PageBytes, RecoveryError> {
        match self {
            Strategy::NaiveDisk => Ok(disk.page(page).clone()),
            Strategy::NaiveNvm => Ok(recover_nvm_only(nvm, page)),
            Strategy::LatestDev => recover_latest_dev(nvm, disk, page),
            Strategy::WbMarkAtStart | Strategy::WbMarkAtEnd => Ok(recover_wb_mark(nvm, disk, page)),
            Strategy::VersionedMark => Ok(recover_versioned(nvm, disk, page)),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == norm)
            .ok_or_else(|| UnknownStrategy(s.to_string()))
    }
}

/// `latest_dev` flips to NVM on every absorbed sync and back to DISK at the
/// chosen write-back instant.
#[derive(Debug, Clone, Copy)]
pub struct LatestDevHooks {
    pub mark: WbInstant,
}

impl StrategyHooks for LatestDevHooks {
    fn on_sync(&self, nvm: &mut NvmLog, page: PageId, bytes: &PageBytes) -> Result<(), LogError> {
        nvm.append_write(page, 0, bytes.as_bytes())?;
        nvm.set_latest_dev(page, Device::Nvm);
        Ok(())
    }

    fn on_sync_write(
        &self,
        nvm: &mut NvmLog,
        page: PageId,
        off: usize,
        data: &[u8],
    ) -> Result<(), LogError> {
        nvm.append_write(page, off, data)?;
        nvm.set_latest_dev(page, Device::Nvm);
        Ok(())
    }

    fn on_writeback(&self, nvm: &mut NvmLog, page: PageId, at: WbInstant) -> Result<(), LogError> {
        if at == self.mark {
            nvm.set_latest_dev(page, Device::Disk);
        }
        Ok(())
    }
}

/// Appends a WRITEBACK record at one fixed write-back instant.
#[derive(Debug, Clone, Copy)]
pub struct WbMarkHooks {
    pub at: WbInstant,
}

impl StrategyHooks for WbMarkHooks {
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

    fn on_writeback(&self, nvm: &mut NvmLog, page: PageId, at: WbInstant) -> Result<(), LogError> {
        if at != self.at {
            return Ok(());
        }
        let vid = nvm.take_vid(page);
        nvm.append(NvmRecord::Writeback {
            page,
            exp_vid: vid,
            vid,
        })
    }
}

/// Prepares the WRITEBACK record at queueing time with the current version
/// id as its expiry, and persists it only when the write-back completes.
#[derive(Debug, Clone, Copy, Default)]
pub struct VersionedHooks;

impl StrategyHooks for VersionedHooks {
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

    fn on_writeback(&self, nvm: &mut NvmLog, page: PageId, at: WbInstant) -> Result<(), LogError> {
        match at {
            WbInstant::Start => {
                let exp_vid = nvm.page_ver_id(page);
                nvm.set_prep_rec(
                    page,
                    Some(NvmRecord::Writeback {
                        page,
                        exp_vid,
                        vid: exp_vid,
                    }),
                );
                Ok(())
            }
            WbInstant::Deliver => Ok(()),
            WbInstant::End => {
                let Some(NvmRecord::Writeback { exp_vid, .. }) = nvm.prep_rec(page).cloned() else {
                    // Unreachable for validated schedules: every end has a start.
                    return Ok(());
                };
                let vid = nvm.take_vid(page);
                nvm.set_prep_rec(page, None);
                nvm.append(NvmRecord::Writeback { page, exp_vid, vid })
            }
        }
    }
}

fn apply(base: &mut PageBytes, rec: &NvmRecord) {
    if let NvmRecord::Write { off, data, .. } = rec {
        base.overlay_in_place(data, *off)
            .expect("log append keeps records inside the page");
    }
}

/// Newest whole-page record with every later sync record applied on top.
/// `None` when the log holds no whole-page record for the page.
fn rebuild_from_nvm(nvm: &NvmLog, page: PageId) -> Option<PageBytes> {
    let records: Vec<&NvmRecord> = nvm.records_for(page).collect();
    let anchor = records
        .iter()
        .rposition(|r| r.is_whole_page(nvm.page_size()))?;
    let NvmRecord::Write { data, .. } = records[anchor] else {
        unreachable!("whole-page records are writes");
    };
    let mut page_bytes = PageBytes::from_vec(data.clone());
    for r in &records[anchor + 1..] {
        apply(&mut page_bytes, r);
    }
    Some(page_bytes)
}

/// Disk copy when `latest_dev` says DISK, NVM reconstruction otherwise.
pub fn recover_latest_dev(
    nvm: &NvmLog,
    disk: &DiskState,
    page: PageId,
) -> Result<PageBytes, RecoveryError> {
    match nvm.latest_dev(page) {
        Device::Disk => Ok(disk.page(page).clone()),
        Device::Nvm => rebuild_from_nvm(nvm, page).ok_or(RecoveryError::CorruptState {
            page,
            reason: "latest_dev is NVM but the log has no whole-page record",
        }),
    }
}

/// Replays the sync records logged after the newest WRITEBACK record over
/// the disk copy.
pub fn recover_wb_mark(nvm: &NvmLog, disk: &DiskState, page: PageId) -> PageBytes {
    let mut useful: Vec<&NvmRecord> = nvm
        .records_for(page)
        .rev()
        .take_while(|r| !matches!(r, NvmRecord::Writeback { .. }))
        .collect();
    useful.reverse();
    let mut out = disk.page(page).clone();
    for r in useful {
        apply(&mut out, r);
    }
    out
}

/// Result of the backward walk over a page's versioned records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionedWalk<'a> {
    /// Sync records to replay, oldest first.
    pub survivors: Vec<&'a NvmRecord>,
    /// Expiry ids taken from WRITEBACK records, in the order encountered.
    pub cutoffs: Vec<u64>,
}

/// Walks the log backwards while `vid >= cutoff`, where each WRITEBACK record
/// met on the way sets the cutoff to its `exp_vid`.
pub fn versioned_walk(nvm: &NvmLog, page: PageId) -> VersionedWalk<'_> {
    let mut cutoff = 0;
    let mut survivors = Vec::new();
    let mut cutoffs = Vec::new();
    for r in nvm.records_for(page).rev() {
        if r.vid() < cutoff {
            break;
        }
        match r {
            NvmRecord::Writeback { exp_vid, .. } => {
                cutoff = *exp_vid;
                cutoffs.push(cutoff);
            }
            NvmRecord::Write { .. } => survivors.push(r),
        }
    }
    survivors.reverse();
    VersionedWalk { survivors, cutoffs }
}

/// Replays every record that survives [`versioned_walk`] over the disk copy.
pub fn recover_versioned(nvm: &NvmLog, disk: &DiskState, page: PageId) -> PageBytes {
    let mut out = disk.page(page).clone();
    for r in versioned_walk(nvm, page).survivors {
        apply(&mut out, r);
    }
    out
}

/// NVM reconstruction that ignores the disk and any WRITEBACK records.
pub fn recover_nvm_only(nvm: &NvmLog, page: PageId) -> PageBytes {
    rebuild_from_nvm(nvm, page).unwrap_or_else(|| {
        let mut out = PageBytes::blank(nvm.page_size());
        for r in nvm.records_for(page) {
            apply(&mut out, r);
        }
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::{run_to_crash, SystemState};
    use crate::model::{Event, Geometry, Schedule};

    const P: PageId = PageId(0);

    fn g6() -> Geometry {
        Geometry::default()
    }

    fn init(s: &str) -> Event {
        Event::Init {
            page: P,
            data: s.as_bytes().to_vec(),
        }
    }

    fn w(off: usize, s: &str) -> Event {
        Event::Write {
            page: P,
            off,
            data: s.as_bytes().to_vec(),
        }
    }

    fn sw(off: usize, s: &str) -> Event {
        Event::SyncWrite {
            page: P,
            off,
            data: s.as_bytes().to_vec(),
        }
    }

    fn wb() -> [Event; 3] {
        [
            Event::WbStart { page: P },
            Event::WbDeliver { page: P },
            Event::WbEnd { page: P },
        ]
    }

    fn image(strategy: Strategy, events: Vec<Event>) -> (NvmLog, DiskState) {
        let img = run_to_crash(&Schedule::new(g6(), events), strategy.hooks()).unwrap();
        (img.nvm, img.disk)
    }

    fn recovered(strategy: Strategy, events: Vec<Event>) -> PageBytes {
        let (nvm, disk) = image(strategy, events);
        strategy.recover(&nvm, &disk, P).unwrap()
    }

    fn fig1_t5() -> Vec<Event> {
        vec![init("111111"), w(0, "222222"), Event::Sync, Event::Crash]
    }

    fn fig1_t10() -> Vec<Event> {
        let mut v = vec![init("111111"), w(0, "222222"), Event::Sync, w(0, "333333")];
        v.extend(wb());
        v.extend([Event::Sync, Event::Crash]);
        v
    }

    fn fig2_t10() -> Vec<Event> {
        let mut v = vec![init("------"), sw(0, "abc"), w(1, "317")];
        v.extend(wb());
        v.extend([Event::Sync, sw(3, "xyz"), Event::Crash]);
        v
    }

    #[test]
    fn latest_dev_follows_the_sync() {
        assert_eq!(recovered(Strategy::LatestDev, fig1_t5()), PageBytes::from("222222"));
    }

    #[test]
    fn latest_dev_follows_the_writeback() {
        let (nvm, disk) = image(Strategy::LatestDev, fig1_t10());
        assert_eq!(nvm.latest_dev(P), Device::Disk);
        assert_eq!(disk.page(P), &PageBytes::from("333333"));
        assert_eq!(
            recover_latest_dev(&nvm, &disk, P).unwrap(),
            PageBytes::from("333333")
        );
    }

    #[test]
    fn latest_dev_after_bare_init() {
        let p = recovered(Strategy::LatestDev, vec![init("111111"), Event::Crash]);
        assert_eq!(p, PageBytes::from("111111"));
    }

    #[test]
    fn latest_dev_without_anchor_is_corrupt() {
        let mut nvm = NvmLog::new(g6());
        nvm.append_write(P, 1, b"x").unwrap();
        nvm.set_latest_dev(P, Device::Nvm);
        let disk = DiskState::new(g6());
        assert!(matches!(
            recover_latest_dev(&nvm, &disk, P),
            Err(RecoveryError::CorruptState { .. })
        ));
    }

    #[test]
    fn wb_mark_keeps_bytes_covered_by_the_disk() {
        assert_eq!(
            recovered(Strategy::WbMarkAtEnd, fig2_t10()),
            PageBytes::from("a31xyz")
        );
        // Same log with the marker ignored: the NVM alone loses "317".
        assert_eq!(
            recovered(Strategy::LatestDev, fig2_t10()),
            PageBytes::from("abcxyz")
        );
    }

    #[test]
    fn wb_mark_with_only_init_record() {
        let p = recovered(Strategy::WbMarkAtEnd, vec![init("a-b-c-"), Event::Crash]);
        assert_eq!(p, PageBytes::from("a-b-c-"));
    }

    fn fig3(crash_after: usize) -> Vec<Event> {
        let full = [
            init("------"),
            sw(4, "ab"),
            Event::WbStart { page: P },
            sw(1, "rst"),
            Event::WbDeliver { page: P },
            sw(0, "uv"),
            Event::WbEnd { page: P },
        ];
        let mut v = full[..crash_after].to_vec();
        v.push(Event::Crash);
        v
    }

    #[test]
    fn versioned_replays_post_start_records_after_the_end() {
        let (nvm, disk) = image(Strategy::VersionedMark, fig3(7));
        assert_eq!(disk.page(P), &PageBytes::from("-rstab"));
        let walk = versioned_walk(&nvm, P);
        assert_eq!(walk.cutoffs, vec![2]);
        assert_eq!(walk.survivors.len(), 2);
        assert_eq!(
            recover_versioned(&nvm, &disk, P),
            PageBytes::from("uvstab")
        );
    }

    #[test]
    fn versioned_before_delivery_replays_from_the_start() {
        let (nvm, disk) = image(Strategy::VersionedMark, fig3(3));
        assert!(nvm
            .records()
            .iter()
            .all(|r| matches!(r, NvmRecord::Write { .. })));
        assert_eq!(
            recover_versioned(&nvm, &disk, P),
            PageBytes::from("----ab")
        );
    }

    #[test]
    fn versioned_with_nothing_above_cutoff_returns_disk() {
        let mut v = vec![init("------"), w(0, "q")];
        v.extend(wb());
        v.push(Event::Crash);
        let (nvm, disk) = image(Strategy::VersionedMark, v);
        assert!(versioned_walk(&nvm, P).survivors.is_empty());
        assert_eq!(recover_versioned(&nvm, &disk, P), PageBytes::from("q-----"));
    }

    #[test]
    fn mark_placement_failures() {
        // Marked at queueing, crashed before delivery: O1 is dropped.
        assert_eq!(
            recovered(Strategy::WbMarkAtStart, fig3(4)),
            PageBytes::from("-rst--")
        );
        // Marked at completion: O3, written after delivery, is dropped.
        assert_eq!(
            recovered(Strategy::WbMarkAtEnd, fig3(7)),
            PageBytes::from("-rstab")
        );
    }

    #[test]
    fn naive_strategies() {
        assert_eq!(recovered(Strategy::NaiveNvm, fig1_t10()), PageBytes::from("222222"));
        assert_eq!(recovered(Strategy::NaiveDisk, fig1_t5()), PageBytes::from("111111"));
        assert_eq!(recovered(Strategy::NaiveNvm, fig2_t10()), PageBytes::from("abcxyz"));
    }

    #[test]
    fn nvm_only_without_anchor_starts_blank() {
        let mut nvm = NvmLog::new(g6());
        nvm.append_write(P, 2, b"zz").unwrap();
        assert_eq!(recover_nvm_only(&nvm, P), PageBytes::from("--zz--"));
    }

    #[test]
    fn recovery_ignores_volatile_state() {
        let events = fig3(7);
        let crash = events.len() - 1;
        let s = Schedule::new(g6(), events[..crash].to_vec());
        for strategy in Strategy::ALL {
            let (mut clean, _) = SystemState::run(&s, strategy.hooks()).unwrap();
            let mut noisy = clean.clone();
            noisy.perturb_volatile(0x9e37_79b9);
            clean.step(&Event::Crash, strategy.hooks()).unwrap();
            noisy.step(&Event::Crash, strategy.hooks()).unwrap();
            let a = strategy.recover(clean.nvm(), clean.disk(), P).unwrap();
            let b = strategy.recover(noisy.nvm(), noisy.disk(), P).unwrap();
            assert_eq!(a, b, "{strategy}");
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("WB_MARK_END".parse::<Strategy>().unwrap(), Strategy::WbMarkAtEnd);
        assert!("latest".parse::<Strategy>().is_err());
    }
}
