//! Recognizes the event shapes each correctness argument is built from, so a
//! sweep can show that every one of them was actually exercised.
//!
//! A schedule is reduced to one token per pre-crash mutation (`w` write,
//! `s` sync, `a` sync write, `(` `|` `)` write-back start / deliver / end)
//! followed by `!` for the crash. Each case is a suffix pattern over that
//! string; a pattern like "w, wb, sync, crash" allows nothing else in between.

use std::fmt;
use std::sync::OnceLock;

use regex::RegexSet;

use crate::model::{Event, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CaseTag {
    /// `[w, wb, sync, crash, r]`
    Case1_1,
    /// `[w, sync, wb, crash, r]`
    Case1_2,
    /// `[w, sync, crash, r]`
    Case1_3,
    /// `[w0, sync_N, [w1, sync_A]^n, crash, r]`
    Case2_1,
    /// `[w0, wb, sync_N, [w1, sync_A]^n, crash, r]`
    Case2_2,
    /// `[w0, sync_N, wb, [w1, sync_A]^n, crash, r]`
    Case2_3,
    /// `[w0, sync_A, wb, [w1, sync_A]^n, crash, r]`
    Case2_4,
    /// Synced writes, crash before any write-back starts.
    Case3_1,
    /// Crash after `wb^s`, before `wb^r`.
    Case3_2,
    /// Crash after `wb^r`, before `wb^e`.
    Case3_3,
    /// Crash after `wb^e`, with synced writes in every write-back interval.
    Case3_4,
    /// `[wb^s, w, wb^e, sync, crash, r]`: a write re-dirties the page mid write-back.
    Case3_5,
}

impl CaseTag {
    pub const ALL: [CaseTag; 12] = [
        CaseTag::Case1_1,
        CaseTag::Case1_2,
        CaseTag::Case1_3,
        CaseTag::Case2_1,
        CaseTag::Case2_2,
        CaseTag::Case2_3,
        CaseTag::Case2_4,
        CaseTag::Case3_1,
        CaseTag::Case3_2,
        CaseTag::Case3_3,
        CaseTag::Case3_4,
        CaseTag::Case3_5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CaseTag::Case1_1 => "1.1",
            CaseTag::Case1_2 => "1.2",
            CaseTag::Case1_3 => "1.3",
            CaseTag::Case2_1 => "2.1",
            CaseTag::Case2_2 => "2.2",
            CaseTag::Case2_3 => "2.3",
            CaseTag::Case2_4 => "2.4",
            CaseTag::Case3_1 => "3.1",
            CaseTag::Case3_2 => "3.2",
            CaseTag::Case3_3 => "3.3",
            CaseTag::Case3_4 => "3.4",
            CaseTag::Case3_5 => "3.5",
        }
    }

    fn pattern(self) -> &'static str {
        match self {
            CaseTag::Case1_1 => r"w\(\|\)s!$",
            CaseTag::Case1_2 => r"ws\(\|\)!$",
            CaseTag::Case1_3 => r"ws!$",
            CaseTag::Case2_1 => r"wsa+!$",
            CaseTag::Case2_2 => r"w\(\|\)sa+!$",
            CaseTag::Case2_3 => r"ws\(\|\)a+!$",
            CaseTag::Case2_4 => r"a\(\|\)a+!$",
            CaseTag::Case3_1 => r"^[^(]*a[^(]*!$",
            CaseTag::Case3_2 => r"a\(a?!$",
            CaseTag::Case3_3 => r"a\(a\|a?!$",
            CaseTag::Case3_4 => r"a\(a\|a\)a?!$",
            CaseTag::Case3_5 => r"\((w\||\|w)\)s!$",
        }
    }

    /// Cases argued within one family (1.x, 2.x or 3.x).
    pub fn family(family: u8) -> Vec<CaseTag> {
        CaseTag::ALL
            .into_iter()
            .filter(|c| c.name().as_bytes()[0] == b'0' + family)
            .collect()
    }
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "case {}", self.name())
    }
}

fn patterns() -> &'static RegexSet {
    static SET: OnceLock<RegexSet> = OnceLock::new();
    SET.get_or_init(|| {
        RegexSet::new(CaseTag::ALL.map(CaseTag::pattern)).expect("case patterns compile")
    })
}

/// Token for one event, `None` for events that do not shape a case.
pub fn token(e: &Event) -> Option<char> {
    Some(match e {
        Event::Write { .. } => 'w',
        Event::Sync => 's',
        Event::SyncWrite { .. } => 'a',
        Event::WbStart { .. } => '(',
        Event::WbDeliver { .. } => '|',
        Event::WbEnd { .. } => ')',
        Event::Crash => '!',
        Event::Init { .. } | Event::Read { .. } => return None,
    })
}

/// Token string for the schedule up to and including its crash.
pub fn tokens(s: &Schedule) -> String {
    let end = s.crash_pos().map_or(s.len(), |c| c + 1);
    s.events()[..end].iter().filter_map(token).collect()
}

/// Cases whose pattern the token string matches. Empty unless it ends in a crash.
pub fn tag_tokens(tokens: &str) -> Vec<CaseTag> {
    patterns()
        .matches(tokens)
        .into_iter()
        .map(|i| CaseTag::ALL[i])
        .collect()
}

pub fn tag(s: &Schedule) -> Vec<CaseTag> {
    tag_tokens(&tokens(s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_world_shapes() {
        assert_eq!(tag_tokens("w(|)s!"), vec![CaseTag::Case1_1]);
        assert_eq!(tag_tokens("sws(|)!"), vec![CaseTag::Case1_2]);
        assert_eq!(tag_tokens("ws!"), vec![CaseTag::Case1_3]);
        assert_eq!(tag_tokens("ws"), vec![]);
        assert_eq!(tag_tokens("w(|)saa!"), vec![CaseTag::Case2_2]);
        assert_eq!(tag_tokens("ws(|)a!"), vec![CaseTag::Case2_3]);
        assert_eq!(tag_tokens("a(|)a!"), vec![CaseTag::Case2_4]);
    }

    #[test]
    fn sync_write_run_also_counts_as_crash_before_writeback() {
        let mut t = tag_tokens("wsa!");
        t.sort();
        assert_eq!(t, vec![CaseTag::Case2_1, CaseTag::Case3_1]);
    }

    #[test]
    fn writeback_duration_shapes() {
        assert_eq!(tag_tokens("a(!"), vec![CaseTag::Case3_2]);
        assert_eq!(tag_tokens("a(a!"), vec![CaseTag::Case3_2]);
        assert_eq!(tag_tokens("a(a|!"), vec![CaseTag::Case3_3]);
        assert_eq!(tag_tokens("a(a|a)a!"), vec![CaseTag::Case3_4]);
        assert_eq!(tag_tokens("w(w|)s!"), vec![CaseTag::Case3_5]);
        assert_eq!(tag_tokens("w(|w)s!"), vec![CaseTag::Case3_5]);
        assert_eq!(tag_tokens("a(|)!"), vec![]);
    }

    #[test]
    fn families() {
        assert_eq!(CaseTag::family(1).len(), 3);
        assert_eq!(CaseTag::family(2).len(), 4);
        assert_eq!(CaseTag::family(3).len(), 5);
    }
}
