//! Ground truth for sync semantics.
//!
//! The oracle looks only at the sequence of events that executed before a
//! crash and at the bytes a recovery procedure produced. It never inspects
//! NVM or disk state, so it can judge any strategy, including broken ones.
//!
//! A byte passes when its value was written by the last write that some sync
//! made durable (the *floor*) or by any write issued after it. Unsynced later
//! writes may survive a crash but are never required to.

use std::fmt;

use crate::model::{Event, Geometry, PageBytes, PageId, Schedule, BLANK};

/// Events executed before the crash, in order. Positions double as version
/// stamps; they line up with positions in the originating [`Schedule`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct History {
    events: Vec<Event>,
    crashed: bool,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_schedule(s: &Schedule) -> Self {
        Self {
            events: s.pre_crash().to_vec(),
            crashed: s.crash_pos().is_some(),
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn crashed(&self) -> bool {
        self.crashed
    }

    pub fn push(&mut self, e: Event) {
        debug_assert!(!self.crashed, "history is closed by the crash");
        if e == Event::Crash {
            self.crashed = true;
        } else {
            self.events.push(e);
        }
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.events.pop()
    }

    pub fn truncate(&mut self, len: usize) {
        self.events.truncate(len);
    }

    /// Byte value the page held before any write in the history.
    pub fn init_byte(&self, page: PageId, b: usize) -> u8 {
        self.events
            .iter()
            .find_map(|e| match e {
                Event::Init { page: p, data } if *p == page => data.get(b).copied(),
                _ => None,
            })
            .unwrap_or(BLANK)
    }

    /// Every write applied in order over the initial content.
    pub fn replay(&self, geometry: Geometry, page: PageId) -> PageBytes {
        let mut bytes: Vec<u8> = (0..geometry.page_size())
            .map(|b| self.init_byte(page, b))
            .collect();
        for e in &self.events {
            if let Some((p, off, data)) = writes_bytes(e) {
                if p == page && off + data.len() <= bytes.len() {
                    bytes[off..off + data.len()].copy_from_slice(data);
                }
            }
        }
        PageBytes::from_vec(bytes)
    }

    fn last_sync_point(&self) -> Option<usize> {
        self.events.iter().rposition(Event::is_sync_point)
    }
}

/// Writes that produce new versions. `Init` is the base, not a version.
fn writes_bytes(e: &Event) -> Option<(PageId, usize, &[u8])> {
    match e {
        Event::Write { .. } | Event::SyncWrite { .. } => e.written(),
        _ => None,
    }
}

fn touches(e: &Event, page: PageId, b: usize) -> Option<u8> {
    let (p, off, data) = writes_bytes(e)?;
    (p == page && b >= off && b < off + data.len()).then(|| data[b - off])
}

/// A version stamp: the initial content or the history position of a write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stamp {
    Init,
    At(usize),
}

impl fmt::Display for Stamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stamp::Init => f.write_str("init"),
            Stamp::At(i) => write!(f, "#{i}"),
        }
    }
}

/// The newest write to `(page, b)` that a sync made durable before the crash.
///
/// A sync (explicit, or the one built into a sync write) covers every write to
/// the file issued before it.
pub fn synced_floor(h: &History, page: PageId, b: usize) -> Stamp {
    let Some(sync) = h.last_sync_point() else {
        return Stamp::Init;
    };
    h.events[..=sync]
        .iter()
        .rposition(|e| touches(e, page, b).is_some())
        .map_or(Stamp::Init, Stamp::At)
}

/// Set of byte values, one bit per value.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ByteSet([u64; 4]);

impl ByteSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, v: u8) {
        self.0[(v >> 6) as usize] |= 1 << (v & 63);
    }

    pub fn contains(&self, v: u8) -> bool {
        self.0[(v >> 6) as usize] & (1 << (v & 63)) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|w| *w == 0)
    }

    pub fn len(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_subset(&self, other: &ByteSet) -> bool {
        self.0.iter().zip(other.0.iter()).all(|(a, b)| a & !b == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        (0..=255u8).filter(|v| self.contains(*v))
    }
}

impl FromIterator<u8> for ByteSet {
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        let mut s = ByteSet::new();
        for v in iter {
            s.insert(v);
        }
        s
    }
}

impl fmt::Debug for ByteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{:?}", v as char)?;
        }
        write!(f, "}}")
    }
}

/// Values the recovered page may legally hold at `(page, b)`: the floor's
/// value plus the value of every later write to that byte. Never empty.
pub fn acceptable_bytes(h: &History, page: PageId, b: usize) -> ByteSet {
    let floor = synced_floor(h, page, b);
    let mut set = ByteSet::new();
    let from = match floor {
        Stamp::Init => {
            set.insert(h.init_byte(page, b));
            0
        }
        Stamp::At(i) => i,
    };
    for e in &h.events[from..] {
        if let Some(v) = touches(e, page, b) {
            set.insert(v);
        }
    }
    set
}

/// [`acceptable_bytes`] for every byte of a page.
pub fn acceptable_page(h: &History, geometry: Geometry, page: PageId) -> Vec<ByteSet> {
    (0..geometry.page_size())
        .map(|b| acceptable_bytes(h, page, b))
        .collect()
}

/// Evidence that a crash broke sync semantics: the `(write, sync, crash,
/// read)` quadruple and the byte where the recovered page disagrees.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Witness {
    pub page: PageId,
    pub offset: usize,
    pub actual: u8,
    pub expected: ByteSet,
    /// The durable write whose data was lost.
    pub write: Stamp,
    /// The first sync after that write, which promised its durability.
    pub sync: Option<usize>,
}

impl Witness {
    /// Renders the quadruple using the schedule's event labels where present.
    pub fn describe(&self, s: &Schedule) -> String {
        let name = |pos: usize| match s.label(pos) {
            Some(l) => format!("#{pos} {l}"),
            None => format!("#{pos} {}", s.events()[pos].name()),
        };
        let write = match self.write {
            Stamp::Init => "init".to_string(),
            Stamp::At(i) => name(i),
        };
        let sync = self.sync.map_or_else(|| "none".to_string(), name);
        format!(
            "page {} byte {}: got {:?}, expected one of {:?}; quadruple (write {}, sync {}, crash, read)",
            self.page, self.offset, self.actual as char, self.expected, write, sync
        )
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "page {} byte {}: got {:?}, expected one of {:?}; write {} sync {}",
            self.page,
            self.offset,
            self.actual as char,
            self.expected,
            self.write,
            self.sync.map_or_else(|| "none".to_string(), |s| format!("#{s}"))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Verdict {
    Pass,
    Violation(Witness),
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            Verdict::Pass => None,
            Verdict::Violation(w) => Some(w),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Violation(_) => "VIOLATION",
        }
    }
}

/// Judges one recovered page against the history.
pub fn check(h: &History, recovered: &PageBytes, page: PageId) -> Verdict {
    for (b, &actual) in recovered.as_bytes().iter().enumerate() {
        let expected = acceptable_bytes(h, page, b);
        if !expected.contains(actual) {
            return Verdict::Violation(witness(h, page, b, actual, expected));
        }
    }
    Verdict::Pass
}

/// Same as [`check`] with the acceptable sets computed up front, for callers
/// that judge many recoveries of the same history.
pub fn check_against(
    h: &History,
    acceptable: &[ByteSet],
    recovered: &PageBytes,
    page: PageId,
) -> Verdict {
    for (b, (&actual, expected)) in recovered.as_bytes().iter().zip(acceptable).enumerate() {
        if !expected.contains(actual) {
            return Verdict::Violation(witness(h, page, b, actual, *expected));
        }
    }
    Verdict::Pass
}

fn witness(h: &History, page: PageId, b: usize, actual: u8, expected: ByteSet) -> Witness {
    let write = synced_floor(h, page, b);
    let sync = match write {
        Stamp::Init => None,
        Stamp::At(i) => h.events[i..]
            .iter()
            .position(Event::is_sync_point)
            .map(|d| i + d),
    };
    Witness {
        page,
        offset: b,
        actual,
        expected,
        write,
        sync,
    }
}

/// Point-in-time variant: the page must equal its exact content at some
/// moment between the last sync and the crash. Stricter than [`check`];
/// reported separately and never used for pass/fail decisions.
pub fn check_strict(h: &History, geometry: Geometry, recovered: &PageBytes, page: PageId) -> bool {
    // Without a sync the seeded contents are the oldest allowed image.
    let seeded = h.events.iter().take_while(|e| matches!(e, Event::Init { .. })).count();
    let start = h.last_sync_point().unwrap_or(seeded);
    let mut prefix = History {
        events: h.events[..start].to_vec(),
        crashed: false,
    };
    if h.last_sync_point().is_none() && prefix.replay(geometry, page) == *recovered {
        return true;
    }
    for e in &h.events[start..] {
        prefix.events.push(e.clone());
        if prefix.replay(geometry, page) == *recovered {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: PageId = PageId(0);

    fn w(off: usize, data: &str) -> Event {
        Event::Write {
            page: P,
            off,
            data: data.as_bytes().to_vec(),
        }
    }

    fn sw(off: usize, data: &str) -> Event {
        Event::SyncWrite {
            page: P,
            off,
            data: data.as_bytes().to_vec(),
        }
    }

    fn hist(events: Vec<Event>) -> History {
        let mut h = History::new();
        for e in events {
            h.push(e);
        }
        h
    }

    fn set(s: &str) -> ByteSet {
        s.bytes().collect()
    }

    #[test]
    fn floor_of_canonical_quadruple() {
        let h = hist(vec![
            Event::Init {
                page: P,
                data: b"------".to_vec(),
            },
            w(0, "b"),
            Event::Sync,
            Event::Crash,
        ]);
        assert_eq!(synced_floor(&h, P, 0), Stamp::At(1));
        assert_eq!(synced_floor(&h, P, 1), Stamp::Init);
    }

    #[test]
    fn unsynced_write_is_not_a_floor() {
        // Fig. 1 up to t8: O1 synced by O2, O4 written and written back, no sync.
        let h = hist(vec![
            Event::Init {
                page: P,
                data: b"111111".to_vec(),
            },
            w(0, "222222"),
            Event::Sync,
            Event::Read { page: P },
            w(0, "333333"),
            Event::WbStart { page: P },
            Event::WbDeliver { page: P },
            Event::WbEnd { page: P },
            Event::Crash,
        ]);
        for b in 0..6 {
            assert_eq!(synced_floor(&h, P, b), Stamp::At(1));
            assert_eq!(acceptable_bytes(&h, P, b), set("23"));
        }
    }

    fn fig2_t10() -> History {
        hist(vec![
            Event::Init {
                page: P,
                data: b"------".to_vec(),
            },
            sw(0, "abc"),
            Event::Read { page: P },
            w(1, "317"),
            Event::WbStart { page: P },
            Event::WbDeliver { page: P },
            Event::WbEnd { page: P },
            Event::Sync,
            Event::Read { page: P },
            sw(3, "xyz"),
            Event::Crash,
        ])
    }

    #[test]
    fn partial_overwrite_keeps_older_synced_bytes() {
        let h = fig2_t10();
        assert_eq!(synced_floor(&h, P, 1), Stamp::At(3));
        assert_eq!(synced_floor(&h, P, 2), Stamp::At(3));
        assert_eq!(synced_floor(&h, P, 3), Stamp::At(9));
        assert_eq!(acceptable_bytes(&h, P, 1), set("3"));
        assert_eq!(acceptable_bytes(&h, P, 0), set("a"));
        assert_eq!(acceptable_bytes(&h, P, 5), set("z"));
        assert!(check(&h, &PageBytes::from("a31xyz"), P).is_pass());

        let Verdict::Violation(wit) = check(&h, &PageBytes::from("abcxyz"), P) else {
            panic!("expected violation");
        };
        assert_eq!(wit.offset, 1);
        assert_eq!(wit.actual, b'b');
        assert_eq!(wit.write, Stamp::At(3));
        assert_eq!(wit.sync, Some(7));
    }

    #[test]
    fn untouched_byte_accepts_only_init() {
        let h = hist(vec![w(0, "x"), Event::Sync, Event::Crash]);
        assert_eq!(acceptable_bytes(&h, P, 2), set("-"));
    }

    #[test]
    fn unsynced_rewrite_is_optional() {
        let h = hist(vec![w(2, "x"), Event::Sync, w(2, "y"), Event::Crash]);
        assert_eq!(acceptable_bytes(&h, P, 2), set("xy"));
    }

    #[test]
    fn sync_write_covers_earlier_plain_writes() {
        let h = hist(vec![w(0, "x"), sw(3, "y"), Event::Crash]);
        assert_eq!(synced_floor(&h, P, 0), Stamp::At(0));
        assert_eq!(acceptable_bytes(&h, P, 0), set("x"));
    }

    #[test]
    fn fully_synced_cache_image_passes() {
        let g = Geometry::new(4, 1).unwrap();
        let h = hist(vec![w(0, "ab"), w(1, "cd"), Event::Sync, Event::Crash]);
        let image = h.replay(g, P);
        assert_eq!(image, PageBytes::from("acd-"));
        assert!(check(&h, &image, P).is_pass());
        assert!(check_strict(&h, g, &image, P));
    }

    #[test]
    fn strict_mode_rejects_mixed_versions() {
        let g = Geometry::new(2, 1).unwrap();
        let h = hist(vec![w(0, "aa"), Event::Sync, w(0, "bb"), Event::Crash]);
        let mixed = PageBytes::from("ab");
        assert!(check(&h, &mixed, P).is_pass());
        assert!(!check_strict(&h, g, &mixed, P));
        assert!(check_strict(&h, g, &PageBytes::from("bb"), P));
        assert!(!check_strict(&h, g, &PageBytes::from("--"), P));
    }

    #[test]
    fn byteset_basics() {
        let mut s = ByteSet::new();
        assert!(s.is_empty());
        s.insert(0);
        s.insert(255);
        s.insert(b'a');
        assert_eq!(s.len(), 3);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, b'a', 255]);
        assert!(set("a").is_subset(&s));
        assert!(!set("ab").is_subset(&s));
    }
}
