//! ASCII memory trace format.
//!
//! One record per line: `<t_ns> <CPU|ACC> <R|W> <0xADDR> <size>`. Timestamps
//! are decimal nanoseconds with at most three fractional digits and must be
//! non-decreasing. Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::memmodel::MemOp;
use crate::simkernel::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceSource {
    Cpu,
    Acc,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub source: TraceSource,
    pub op: MemOp,
    pub address: u64,
    pub size: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MemEventSeq {
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn parse_ns(field: &str) -> Option<SimTime> {
    let (int, frac) = field.split_once('.').unwrap_or((field, ""));
    if int.is_empty() || frac.len() > 3 || !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let whole: u64 = int.parse().ok()?;
    let mut ps_frac = 0u64;
    for (i, b) in frac.bytes().enumerate() {
        ps_frac += u64::from(b - b'0') * 10u64.pow(2 - i as u32);
    }
    whole.checked_mul(1_000)?.checked_add(ps_frac).map(SimTime)
}

fn format_ns(t: SimTime) -> String {
    let (whole, frac) = (t.ps() / 1_000, t.ps() % 1_000);
    if frac == 0 {
        whole.to_string()
    } else {
        let f = format!("{frac:03}");
        format!("{whole}.{}", f.trim_end_matches('0'))
    }
}

fn parse_line(text: &str) -> Result<TraceRecord, String> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    let [t, src, op, addr, size] = fields[..] else {
        return Err(format!("expected 5 fields, found {}", fields.len()));
    };
    let time = parse_ns(t).ok_or_else(|| format!("bad timestamp `{t}`"))?;
    let source = match src {
        "CPU" => TraceSource::Cpu,
        "ACC" => TraceSource::Acc,
        _ => return Err(format!("bad source `{src}`, expected CPU or ACC")),
    };
    let op = match op {
        "R" => MemOp::Read,
        "W" => MemOp::Write,
        _ => return Err(format!("bad op `{op}`, expected R or W")),
    };
    let hex = addr.strip_prefix("0x").or_else(|| addr.strip_prefix("0X")).ok_or_else(|| format!("address `{addr}` lacks 0x prefix"))?;
    let address = u64::from_str_radix(hex, 16).map_err(|e| format!("bad address `{addr}`: {e}"))?;
    let size: u32 = size.parse().map_err(|e| format!("bad size `{size}`: {e}"))?;
    if size == 0 {
        return Err("size must be at least 1".into());
    }
    Ok(TraceRecord { time, source, op, address, size })
}

pub fn parse_trace_str(text: &str) -> Result<MemEventSeq, TraceError> {
    let mut seq = MemEventSeq::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rec = parse_line(line).map_err(|reason| TraceError::Parse { line: i + 1, reason })?;
        if let Some(prev) = seq.records.last() {
            if rec.time < prev.time {
                return Err(TraceError::Parse {
                    line: i + 1,
                    reason: format!("timestamp {} ns precedes previous {} ns; records must be non-decreasing", format_ns(rec.time), format_ns(prev.time)),
                });
            }
        }
        seq.records.push(rec);
    }
    Ok(seq)
}

pub fn parse_trace(path: &Path) -> Result<MemEventSeq, TraceError> {
    let text = std::fs::read_to_string(path).map_err(|source| TraceError::Io { path: path.display().to_string(), source })?;
    parse_trace_str(&text)
}

pub fn format_trace(seq: &MemEventSeq) -> String {
    let mut out = String::new();
    for r in &seq.records {
        let src = match r.source {
            TraceSource::Cpu => "CPU",
            TraceSource::Acc => "ACC",
        };
        let op = match r.op {
            MemOp::Read => "R",
            MemOp::Write => "W",
        };
        writeln!(out, "{} {src} {op} {:#x} {}", format_ns(r.time), r.address, r.size).unwrap();
    }
    out
}

pub fn write_trace(seq: &MemEventSeq, path: &Path) -> Result<(), TraceError> {
    std::fs::write(path, format_trace(seq)).map_err(|source| TraceError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_reference_line() {
        let seq = parse_trace_str("120 ACC R 0x1000 128\n").unwrap();
        assert_eq!(
            seq.records,
            vec![TraceRecord { time: SimTime::from_ns(120), source: TraceSource::Acc, op: MemOp::Read, address: 0x1000, size: 128 }]
        );
    }

    #[test]
    fn empty_file_gives_empty_sequence() {
        assert!(parse_trace_str("").unwrap().records.is_empty());
    }

    #[test]
    fn rejects_out_of_order() {
        let err = parse_trace_str("10 CPU W 0x0 32\n# comment\n5 CPU W 0x20 32\n").unwrap_err();
        match err {
            TraceError::Parse { line, reason } => {
                assert_eq!(line, 3);
                assert!(reason.contains("non-decreasing"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_lines_cite_line_numbers() {
        for (text, line) in [("1 ACC X 0x0 8", 1), ("\n1 GPU R 0x0 8", 2), ("1 ACC R 1000 8", 1), ("1 ACC R 0x0", 1), ("1.2345 ACC R 0x0 8", 1)] {
            match parse_trace_str(text) {
                Err(TraceError::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn fractional_nanoseconds_round_trip() {
        let text = "0.25 ACC R 0x80 16\n88.2 ACC R 0x100 32\n1000 CPU W 0xdeadbeef 32\n";
        let seq = parse_trace_str(text).unwrap();
        assert_eq!(seq.records[0].time, SimTime(250));
        assert_eq!(seq.records[1].time, SimTime(88_200));
        assert_eq!(format_trace(&seq), text);
    }
}
