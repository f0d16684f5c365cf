//! Line-oriented trace files.
//!
//! ```text
//! page_size 6            # header lines come first
//! init 0 "111111"
//! write 0 0 "222222"     # O1
//! sync                   # O2
//! wb 0                   # start, deliver and end in one go
//! crash
//! read 0                 # O7
//! ```
//!
//! A comment after a directive becomes that event's label in reports.

use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::model::{validate_schedule, Event, Geometry, PageId, Schedule};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    #[error("unknown directive {0:?}")]
    UnknownDirective(String),
    #[error("{directive} expects {expected}")]
    Arity {
        directive: &'static str,
        expected: &'static str,
    },
    #[error("bad number {0:?}")]
    BadNumber(String),
    #[error("expected a quoted byte string")]
    ExpectedBytes,
    #[error("unterminated byte string")]
    Unterminated,
    #[error("header line after the first directive")]
    LateHeader,
    #[error("duplicate header {0}")]
    DuplicateHeader(&'static str),
    #[error("{0}")]
    Geometry(String),
    #[error("{0}")]
    Invalid(&'static str),
}

fn err(line: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { line, kind }
}

/// Splits a line into its code and its trailing comment, ignoring `#`
/// inside quotes.
fn split_comment(line: &str) -> (&str, Option<&str>) {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return (&line[..i], Some(line[i + 1..].trim())),
            _ => {}
        }
    }
    (line, None)
}

/// Whitespace-separated words, where a double-quoted string is one word
/// (kept with its quotes).
fn words(code: &str, line: usize) -> Result<Vec<&str>, ParseError> {
    let mut out = Vec::new();
    let mut rest = code.trim_start();
    while !rest.is_empty() {
        let end = if let Some(body) = rest.strip_prefix('"') {
            let close = body
                .find('"')
                .ok_or_else(|| err(line, ParseErrorKind::Unterminated))?;
            close + 2
        } else {
            rest.find(char::is_whitespace).unwrap_or(rest.len())
        };
        out.push(&rest[..end]);
        rest = rest[end..].trim_start();
    }
    Ok(out)
}

fn number(w: &str, line: usize) -> Result<usize, ParseError> {
    w.parse()
        .map_err(|_| err(line, ParseErrorKind::BadNumber(w.to_string())))
}

fn page(w: &str, line: usize) -> Result<PageId, ParseError> {
    let n = number(w, line)?;
    u32::try_from(n)
        .map(PageId)
        .map_err(|_| err(line, ParseErrorKind::BadNumber(w.to_string())))
}

fn bytes(w: &str, line: usize) -> Result<Vec<u8>, ParseError> {
    w.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .map(|s| s.as_bytes().to_vec())
        .ok_or_else(|| err(line, ParseErrorKind::ExpectedBytes))
}

/// Parses a trace into a validated schedule.
pub fn parse_trace(text: &str) -> Result<Schedule, ParseError> {
    let mut page_size = None;
    let mut page_count = None;
    let mut events = Vec::new();
    let mut labels = Vec::new();
    let mut lines = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let (code, comment) = split_comment(raw);
        let w = words(code, line)?;
        let Some((&head, args)) = w.split_first() else {
            continue;
        };
        let label = comment.filter(|c| !c.is_empty()).map(str::to_string);
        let arity = |n: usize, directive: &'static str, expected: &'static str| {
            if args.len() == n {
                Ok(())
            } else {
                Err(err(line, ParseErrorKind::Arity { directive, expected }))
            }
        };

        if head == "page_size" || head == "page_count" {
            let (slot, name) = if head == "page_size" {
                (&mut page_size, "page_size")
            } else {
                (&mut page_count, "page_count")
            };
            if !events.is_empty() {
                return Err(err(line, ParseErrorKind::LateHeader));
            }
            if args.len() != 1 {
                return Err(err(
                    line,
                    ParseErrorKind::Arity {
                        directive: name,
                        expected: "one number",
                    },
                ));
            }
            if slot.replace(number(args[0], line)?).is_some() {
                return Err(err(line, ParseErrorKind::DuplicateHeader(name)));
            }
            continue;
        }

        let mut push = |e: Event, label: Option<String>| {
            events.push(e);
            labels.push(label);
            lines.push(line);
        };
        match head {
            "init" => {
                arity(2, "init", "a page and bytes")?;
                push(
                    Event::Init {
                        page: page(args[0], line)?,
                        data: bytes(args[1], line)?,
                    },
                    label,
                );
            }
            "write" | "syncw" => {
                let name = if head == "write" { "write" } else { "syncw" };
                arity(3, name, "a page, an offset and bytes")?;
                let (page, off, data) =
                    (page(args[0], line)?, number(args[1], line)?, bytes(args[2], line)?);
                let e = if head == "write" {
                    Event::Write { page, off, data }
                } else {
                    Event::SyncWrite { page, off, data }
                };
                push(e, label);
            }
            "sync" | "crash" => {
                let name = if head == "sync" { "sync" } else { "crash" };
                arity(0, name, "no arguments")?;
                push(if head == "sync" { Event::Sync } else { Event::Crash }, label);
            }
            "wb" => {
                arity(1, "wb", "a page")?;
                let page = page(args[0], line)?;
                push(Event::WbStart { page }, label);
                push(Event::WbDeliver { page }, None);
                push(Event::WbEnd { page }, None);
            }
            "wb_start" | "wb_deliver" | "wb_end" | "read" => {
                let (name, make): (&'static str, fn(PageId) -> Event) = match head {
                    "wb_start" => ("wb_start", |page| Event::WbStart { page }),
                    "wb_deliver" => ("wb_deliver", |page| Event::WbDeliver { page }),
                    "wb_end" => ("wb_end", |page| Event::WbEnd { page }),
                    _ => ("read", |page| Event::Read { page }),
                };
                arity(1, name, "a page")?;
                push(make(page(args[0], line)?), label);
            }
            other => return Err(err(line, ParseErrorKind::UnknownDirective(other.to_string()))),
        }
    }

    let defaults = Geometry::default();
    let geometry = Geometry::new(
        page_size.unwrap_or(defaults.page_size()),
        page_count.unwrap_or(defaults.page_count()),
    )
    .map_err(|e| err(1, ParseErrorKind::Geometry(e.to_string())))?;
    let schedule = Schedule::with_labels(geometry, events, labels);
    if let Err(violations) = validate_schedule(&schedule) {
        let v = violations[0];
        return Err(err(lines[v.pos], ParseErrorKind::Invalid(v.rule.name())));
    }
    Ok(schedule)
}

/// Renders a schedule as a trace that parses back to the same schedule.
/// Back-to-back unlabeled write-back triples are folded into `wb P`.
pub fn format_trace(s: &Schedule) -> String {
    let g = s.geometry();
    let mut out = format!("page_size {}\npage_count {}\n", g.page_size(), g.page_count());
    let ev = s.events();
    let mut i = 0;
    while i < ev.len() {
        let mut width = 1;
        let mut text = ev[i].to_string();
        if let Event::WbStart { page } = ev[i] {
            if ev.get(i + 1) == Some(&Event::WbDeliver { page })
                && ev.get(i + 2) == Some(&Event::WbEnd { page })
                && s.label(i + 1).is_none()
                && s.label(i + 2).is_none()
            {
                width = 3;
                text = format!("wb {page}");
            }
        }
        out.push_str(&text);
        if let Some(l) = s.label(i) {
            let _ = write!(out, " # {l}");
        }
        out.push('\n');
        i += width;
    }
    out
}

/// A schedule paired with its trace rendering, for `{}` formatting.
pub struct Trace<'a>(pub &'a Schedule);

impl fmt::Display for Trace<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_trace(self.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_is_empty() {
        let s = parse_trace("page_size 4\npage_count 2\n").unwrap();
        assert!(s.is_empty());
        assert_eq!(s.geometry(), Geometry::new(4, 2).unwrap());
        assert_eq!(parse_trace("").unwrap().geometry(), Geometry::default());
    }

    #[test]
    fn labels_and_expansion() {
        let s = parse_trace("init 0 \"------\"\nwrite 0 1 \"3#7\" # O3\nwb 0 # flush\ncrash\n").unwrap();
        assert_eq!(s.len(), 6);
        assert_eq!(
            s.events()[1],
            Event::Write {
                page: PageId(0),
                off: 1,
                data: b"3#7".to_vec()
            }
        );
        assert_eq!(s.label(1), Some("O3"));
        assert_eq!(s.label(2), Some("flush"));
        assert_eq!(s.label(3), None);
    }

    #[test]
    fn errors_carry_lines() {
        let e = |t: &str| parse_trace(t).unwrap_err();
        assert_eq!(e("sync\nfrob 1\n").line, 2);
        assert_eq!(
            e("sync\nfrob 1\n").kind,
            ParseErrorKind::UnknownDirective("frob".into())
        );
        assert_eq!(e("write 0 x \"a\"").kind, ParseErrorKind::BadNumber("x".into()));
        assert_eq!(e("write 0 5 \"ab\"").kind, ParseErrorKind::Invalid("write out of bounds"));
        assert_eq!(e("sync\npage_size 4").kind, ParseErrorKind::LateHeader);
        assert_eq!(e("write 0 0 \"ab").kind, ParseErrorKind::Unterminated);
        let late = e("crash\ninit 0 \"------\"\n");
        assert_eq!((late.line, late.kind), (2, ParseErrorKind::Invalid("mutation after crash")));
        assert_eq!(e("\n\nwb_end 0").line, 3);
        assert_eq!(e("page_size 0").kind, ParseErrorKind::Geometry("page size 0 outside 1..=4096".into()));
    }

    #[test]
    fn format_folds_only_unlabeled_triples() {
        let text = "page_size 2\npage_count 1\nwrite 0 0 \"a\"\nwb 0\nwrite 0 1 \"b\"\nwb_start 0\nwb_deliver 0 # r\nwb_end 0\ncrash\n";
        let s = parse_trace(text).unwrap();
        assert_eq!(format_trace(&s), text);
    }
}
