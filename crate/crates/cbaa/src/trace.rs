//! Trace ingestion and emission.
//!
//! Two formats, never autodetected:
//!
//! * text — one record per line, `A.B.C.D E.F.G.H [unix_ts]`, `#` starts a
//!   comment, blank lines ignored;
//! * binary — fixed 8-byte records (inner then outer address, each
//!   big-endian), or 16-byte records with a trailing little-endian u64
//!   timestamp.

use crate::update::IpPair;
use std::collections::BTreeMap;
use std::io::{self, BufRead, Read, Write};
use std::net::Ipv4Addr;
use std::str::FromStr;
use thiserror::Error;

/// One trace record: a normalized (inner, outer) pair with an optional
/// timestamp in seconds since the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub iip: u32,
    pub oip: u32,
    pub ts: Option<u64>,
}

impl TraceRecord {
    pub fn pair(&self) -> IpPair {
        IpPair {
            iip: self.iip,
            oip: self.oip,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Text,
    /// 8-byte records, no timestamps.
    Binary,
    /// 16-byte records with timestamps.
    BinaryTimed,
}

impl FromStr for TraceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(TraceFormat::Text),
            "binary" => Ok(TraceFormat::Binary),
            "binary-ts" => Ok(TraceFormat::BinaryTimed),
            other => Err(format!(
                "unknown format `{other}` (expected text, binary, or binary-ts)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("record {index} truncated: got {got} of {expected} bytes")]
    TruncatedRecord {
        index: u64,
        got: usize,
        expected: usize,
    },
    #[error("windowing requires timestamps, but record {index} has none")]
    MissingTimestamp { index: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Streaming text-format reader.
pub struct TextReader<R> {
    input: R,
    line: usize,
    buf: String,
}

impl<R: BufRead> TextReader<R> {
    pub fn new(input: R) -> Self {
        TextReader {
            input,
            line: 0,
            buf: String::new(),
        }
    }

    fn parse_line(&self, content: &str) -> Result<Option<TraceRecord>, TraceError> {
        // Strip comments, then whitespace.
        let content = match content.find('#') {
            Some(pos) => &content[..pos],
            None => content,
        };
        let mut fields = content.split_whitespace();
        let Some(first) = fields.next() else {
            return Ok(None); // blank or comment-only line
        };
        let malformed = |reason: String| TraceError::Malformed {
            line: self.line,
            reason,
        };
        let iip = Ipv4Addr::from_str(first)
            .map_err(|_| malformed(format!("bad inner address `{first}`")))?;
        let second = fields
            .next()
            .ok_or_else(|| malformed("missing outer address".into()))?;
        let oip = Ipv4Addr::from_str(second)
            .map_err(|_| malformed(format!("bad outer address `{second}`")))?;
        let ts = match fields.next() {
            Some(t) => Some(
                t.parse::<u64>()
                    .map_err(|_| malformed(format!("bad timestamp `{t}`")))?,
            ),
            None => None,
        };
        if let Some(extra) = fields.next() {
            return Err(malformed(format!("unexpected trailing field `{extra}`")));
        }
        Ok(Some(TraceRecord {
            iip: u32::from(iip),
            oip: u32::from(oip),
            ts,
        }))
    }
}

impl<R: BufRead> Iterator for TextReader<R> {
    type Item = Result<TraceRecord, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            self.line += 1;
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            match self.parse_line(&self.buf) {
                Ok(None) => continue,
                Ok(Some(record)) => return Some(Ok(record)),
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

/// Streaming binary-format reader (8- or 16-byte records).
pub struct BinaryReader<R> {
    input: R,
    timed: bool,
    index: u64,
}

impl<R: Read> BinaryReader<R> {
    pub fn new(input: R, timed: bool) -> Self {
        BinaryReader {
            input,
            timed,
            index: 0,
        }
    }
}

impl<R: Read> Iterator for BinaryReader<R> {
    type Item = Result<TraceRecord, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        let expected = if self.timed { 16 } else { 8 };
        let mut buf = [0u8; 16];
        let mut got = 0;
        while got < expected {
            match self.input.read(&mut buf[got..expected]) {
                Ok(0) => break,
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Some(Err(e.into())),
            }
        }
        if got == 0 {
            return None;
        }
        if got < expected {
            return Some(Err(TraceError::TruncatedRecord {
                index: self.index,
                got,
                expected,
            }));
        }
        self.index += 1;
        let iip = u32::from_be_bytes(buf[0..4].try_into().unwrap());
        let oip = u32::from_be_bytes(buf[4..8].try_into().unwrap());
        let ts = self
            .timed
            .then(|| u64::from_le_bytes(buf[8..16].try_into().unwrap()));
        Some(Ok(TraceRecord { iip, oip, ts }))
    }
}

/// Reads a whole trace into memory, stopping at the first malformed record.
pub fn read_trace<R: BufRead>(
    input: R,
    format: TraceFormat,
) -> Result<Vec<TraceRecord>, TraceError> {
    match format {
        TraceFormat::Text => TextReader::new(input).collect(),
        TraceFormat::Binary => BinaryReader::new(input, false).collect(),
        TraceFormat::BinaryTimed => BinaryReader::new(input, true).collect(),
    }
}

/// Writes records in text format. Timestamps are emitted when present.
pub fn write_text<'a, W: Write>(
    records: impl IntoIterator<Item = &'a TraceRecord>,
    mut out: W,
) -> io::Result<()> {
    for record in records {
        let iip = Ipv4Addr::from(record.iip);
        let oip = Ipv4Addr::from(record.oip);
        match record.ts {
            Some(ts) => writeln!(out, "{iip} {oip} {ts}")?,
            None => writeln!(out, "{iip} {oip}")?,
        }
    }
    Ok(())
}

/// Writes records in binary format. In the timed layout a missing timestamp
/// is written as 0.
pub fn write_binary<'a, W: Write>(
    records: impl IntoIterator<Item = &'a TraceRecord>,
    mut out: W,
    timed: bool,
) -> io::Result<()> {
    for record in records {
        out.write_all(&record.iip.to_be_bytes())?;
        out.write_all(&record.oip.to_be_bytes())?;
        if timed {
            out.write_all(&record.ts.unwrap_or(0).to_le_bytes())?;
        }
    }
    Ok(())
}

/// An IPv4 prefix, for classifying which side of a raw pair is the monitored
/// network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CidrPrefix {
    addr: u32,
    len: u8,
}

impl CidrPrefix {
    pub fn matches(&self, ip: u32) -> bool {
        self.len == 0 || (ip ^ self.addr) >> (32 - self.len as u32) == 0
    }
}

impl FromStr for CidrPrefix {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("bad CIDR prefix `{s}` (expected A.B.C.D/len)");
        let (addr, len) = s.split_once('/').ok_or_else(bad)?;
        let addr = Ipv4Addr::from_str(addr).map_err(|_| bad())?;
        let len: u8 = len.parse().map_err(|_| bad())?;
        if len > 32 {
            return Err(bad());
        }
        Ok(CidrPrefix {
            addr: u32::from(addr),
            len,
        })
    }
}

/// Normalizes raw, unordered address pairs: the side matching any of the
/// prefixes is the inner host. A record with zero or two inner matches is
/// dropped; the count of dropped records is returned alongside.
pub fn normalize_records(
    records: impl IntoIterator<Item = TraceRecord>,
    inner: &[CidrPrefix],
) -> (Vec<TraceRecord>, u64) {
    let is_inner = |ip: u32| inner.iter().any(|p| p.matches(ip));
    let mut kept = Vec::new();
    let mut skipped = 0u64;
    for record in records {
        match (is_inner(record.iip), is_inner(record.oip)) {
            (true, false) => kept.push(record),
            (false, true) => kept.push(TraceRecord {
                iip: record.oip,
                oip: record.iip,
                ts: record.ts,
            }),
            _ => skipped += 1,
        }
    }
    (kept, skipped)
}

/// Buckets records into time windows of `window_seconds`, keyed by
/// `floor(ts / window_seconds)`; a timestamp exactly on a boundary belongs to
/// the later window. Windows come out in time order; empty windows are not
/// emitted. Fails if any record lacks a timestamp.
pub fn split_windows(
    records: &[TraceRecord],
    window_seconds: u64,
) -> Result<Vec<Vec<TraceRecord>>, TraceError> {
    assert!(window_seconds > 0, "window length must be positive");
    let mut buckets: BTreeMap<u64, Vec<TraceRecord>> = BTreeMap::new();
    for (index, record) in records.iter().enumerate() {
        let ts = record.ts.ok_or(TraceError::MissingTimestamp { index })?;
        buckets
            .entry(ts / window_seconds)
            .or_default()
            .push(*record);
    }
    Ok(buckets.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn text(input: &str) -> Result<Vec<TraceRecord>, TraceError> {
        read_trace(Cursor::new(input), TraceFormat::Text)
    }

    #[test]
    fn parses_dotted_quads() {
        let records = text("192.168.1.1 8.8.8.8\n").unwrap();
        assert_eq!(
            records,
            vec![TraceRecord {
                iip: 0xC0A8_0101,
                oip: 0x0808_0808,
                ts: None,
            }]
        );
    }

    #[test]
    fn parses_timestamps_comments_and_blanks() {
        let input = "# a trace\n\n10.0.0.1 1.2.3.4 300\n10.0.0.2 1.2.3.5 # trailing comment\n";
        let records = text(input).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].ts, Some(300));
        assert_eq!(records[1].ts, None);
    }

    #[test]
    fn empty_input_is_an_empty_trace() {
        assert_eq!(text("").unwrap(), vec![]);
        let binary = read_trace(Cursor::new(&[][..]), TraceFormat::Binary).unwrap();
        assert_eq!(binary, vec![]);
    }

    #[test]
    fn malformed_lines_cite_the_line_number() {
        let input = "10.0.0.1 1.2.3.4\n10.0.0.999 1.2.3.4\n";
        match text(input) {
            Err(TraceError::Malformed { line, reason }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("10.0.0.999"));
            }
            other => panic!("expected Malformed, got {other:?}"),
        }
        assert!(matches!(
            text("10.0.0.1\n"),
            Err(TraceError::Malformed { line: 1, .. })
        ));
        assert!(matches!(
            text("10.0.0.1 1.2.3.4 5 6\n"),
            Err(TraceError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn binary_length_must_be_whole_records() {
        let mut bytes = Vec::new();
        write_binary(
            &[TraceRecord {
                iip: 1,
                oip: 2,
                ts: None,
            }],
            &mut bytes,
            false,
        )
        .unwrap();
        bytes.extend_from_slice(&[0xAA, 0xBB, 0xCC]);
        match read_trace(Cursor::new(&bytes), TraceFormat::Binary) {
            Err(TraceError::TruncatedRecord {
                index,
                got,
                expected,
            }) => {
                assert_eq!(index, 1);
                assert_eq!(got, 3);
                assert_eq!(expected, 8);
            }
            other => panic!("expected TruncatedRecord, got {other:?}"),
        }
    }

    #[test]
    fn binary_records_are_big_endian_addresses() {
        let record = TraceRecord {
            iip: 0xC0A8_0101,
            oip: 0x0808_0404,
            ts: None,
        };
        let mut bytes = Vec::new();
        write_binary(&[record], &mut bytes, false).unwrap();
        assert_eq!(bytes, [0xC0, 0xA8, 0x01, 0x01, 0x08, 0x08, 0x04, 0x04]);
    }

    #[test]
    fn windows_bucket_by_floor() {
        let rec = |ts| TraceRecord {
            iip: 1,
            oip: 2,
            ts: Some(ts),
        };
        let records = vec![rec(0), rec(299), rec(300), rec(301), rec(900)];
        let windows = split_windows(&records, 300).unwrap();
        assert_eq!(windows.len(), 3);
        assert_eq!(windows[0].len(), 2);
        // A boundary timestamp belongs to the later window.
        assert_eq!(windows[1].len(), 2);
        assert_eq!(windows[2].len(), 1);

        let single = split_windows(&records, 10_000).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].len(), 5);
    }

    #[test]
    fn an_hour_of_traffic_makes_twelve_five_minute_windows() {
        let records: Vec<TraceRecord> = (0..3600)
            .map(|ts| TraceRecord {
                iip: ts,
                oip: 1,
                ts: Some(ts as u64),
            })
            .collect();
        let windows = split_windows(&records, 300).unwrap();
        assert_eq!(windows.len(), 12);
        assert!(windows.iter().all(|w| w.len() == 300));
    }

    #[test]
    fn cidr_prefixes_classify_and_normalize() {
        let inner: CidrPrefix = "10.0.0.0/8".parse().unwrap();
        assert!(inner.matches(0x0A01_0203));
        assert!(!inner.matches(0x0B01_0203));
        let host: CidrPrefix = "192.168.1.7/32".parse().unwrap();
        assert!(host.matches(0xC0A8_0107));
        assert!(!host.matches(0xC0A8_0106));
        let all: CidrPrefix = "0.0.0.0/0".parse().unwrap();
        assert!(all.matches(u32::MAX));
        assert!("10.0.0.0/33".parse::<CidrPrefix>().is_err());
        assert!("10.0.0.0".parse::<CidrPrefix>().is_err());

        let prefixes = vec![inner];
        let rec = |iip, oip| TraceRecord { iip, oip, ts: None };
        let raw = vec![
            rec(0x0A00_0001, 0x0808_0808), // already normalized
            rec(0x0808_0404, 0x0A00_0002), // swapped sides
            rec(0x0A00_0003, 0x0A00_0004), // both inner: dropped
            rec(0x0101_0101, 0x0202_0202), // neither inner: dropped
        ];
        let (kept, skipped) = normalize_records(raw, &prefixes);
        assert_eq!(skipped, 2);
        assert_eq!(
            kept,
            vec![rec(0x0A00_0001, 0x0808_0808), rec(0x0A00_0002, 0x0808_0404)]
        );
    }

    #[test]
    fn windowing_untimestamped_records_fails() {
        let records = vec![TraceRecord {
            iip: 1,
            oip: 2,
            ts: None,
        }];
        assert!(matches!(
            split_windows(&records, 300),
            Err(TraceError::MissingTimestamp { index: 0 })
        ));
    }

    fn record_strategy() -> impl Strategy<Value = TraceRecord> {
        (any::<u32>(), any::<u32>(), proptest::option::of(any::<u64>())).prop_map(
            |(iip, oip, ts)| TraceRecord { iip, oip, ts },
        )
    }

    proptest! {
        #[test]
        fn text_round_trip(records in proptest::collection::vec(record_strategy(), 0..50)) {
            let mut bytes = Vec::new();
            write_text(&records, &mut bytes).unwrap();
            let parsed = read_trace(Cursor::new(&bytes), TraceFormat::Text).unwrap();
            prop_assert_eq!(parsed, records);
        }

        #[test]
        fn binary_round_trip(records in proptest::collection::vec(record_strategy(), 0..50)) {
            // Untimed layout drops timestamps; timed layout keeps them
            // (absent ones become 0).
            let mut bytes = Vec::new();
            write_binary(&records, &mut bytes, false).unwrap();
            prop_assert_eq!(bytes.len(), records.len() * 8);
            let parsed = read_trace(Cursor::new(&bytes), TraceFormat::Binary).unwrap();
            for (a, b) in parsed.iter().zip(&records) {
                prop_assert_eq!((a.iip, a.oip, a.ts), (b.iip, b.oip, None));
            }

            let mut bytes = Vec::new();
            write_binary(&records, &mut bytes, true).unwrap();
            let parsed = read_trace(Cursor::new(&bytes), TraceFormat::BinaryTimed).unwrap();
            for (a, b) in parsed.iter().zip(&records) {
                prop_assert_eq!((a.iip, a.oip, a.ts), (b.iip, b.oip, Some(b.ts.unwrap_or(0))));
            }
        }
    }
}
