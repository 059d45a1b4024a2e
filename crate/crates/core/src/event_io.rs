//! Pixel-hit data model, the PHX1 binary and CSV hit formats, and time chunking.
//!
//! PHX1 layout: the 8-byte magic `PHXHITS1` followed by 16-byte little-endian
//! records `u16 x, u16 y, u64 toa_ticks, u16 tot, u16 reserved`. `reserved`
//! must be zero. The CSV mirror has the header `x,y,toa_ticks,tot` and one
//! decimal record per line; lines starting with `#` are comments.

use std::collections::VecDeque;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;

/// Duration of one ToA tick in nanoseconds.
pub const TICK_NS: f64 = 1.5625;
/// Pixels per sensor side.
pub const GRID_SIZE: u16 = 256;
/// ToA counters are 48 bits wide.
pub const MAX_TOA_TICKS: u64 = (1 << 48) - 1;

pub const PHX1_MAGIC: &[u8; 8] = b"PHXHITS1";
pub const PHX1_RECORD_LEN: usize = 16;
pub const CSV_HEADER: &str = "x,y,toa_ticks,tot";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelHit {
    pub x: u16,
    pub y: u16,
    pub toa_ticks: u64,
    pub tot: u16,
}

impl PixelHit {
    pub fn new(x: u16, y: u16, toa_ticks: u64, tot: u16) -> Self {
        Self {
            x,
            y,
            toa_ticks,
            tot,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.x >= GRID_SIZE || self.y >= GRID_SIZE {
            return Err(format!(
                "pixel ({}, {}) outside the {GRID_SIZE}x{GRID_SIZE} grid",
                self.x, self.y
            ));
        }
        if self.toa_ticks > MAX_TOA_TICKS {
            return Err(format!("toa_ticks {} exceeds 48 bits", self.toa_ticks));
        }
        Ok(())
    }

    pub fn toa_ns(&self) -> f64 {
        self.toa_ticks as f64 * TICK_NS
    }

    /// Sort key used by [`sort_hits`].
    #[inline]
    pub fn order_key(&self) -> (u64, u16, u16) {
        (self.toa_ticks, self.y, self.x)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HitFormat {
    #[default]
    Phx1,
    Csv,
}

impl HitFormat {
    pub fn extension(self) -> &'static str {
        match self {
            HitFormat::Phx1 => "phx1",
            HitFormat::Csv => "csv",
        }
    }
}

impl FromStr for HitFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "phx1" | "binary" => Ok(HitFormat::Phx1),
            "csv" => Ok(HitFormat::Csv),
            other => Err(Error::Config(format!(
                "unknown hit format '{other}' (expected phx1 or csv)"
            ))),
        }
    }
}

impl fmt::Display for HitFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

/// Decodes one PHX1 record. Does not range-check the coordinates.
pub fn decode_record(bytes: &[u8; PHX1_RECORD_LEN]) -> (PixelHit, u16) {
    let x = u16::from_le_bytes([bytes[0], bytes[1]]);
    let y = u16::from_le_bytes([bytes[2], bytes[3]]);
    let mut toa = [0u8; 8];
    toa.copy_from_slice(&bytes[4..12]);
    let tot = u16::from_le_bytes([bytes[12], bytes[13]]);
    let reserved = u16::from_le_bytes([bytes[14], bytes[15]]);
    (PixelHit::new(x, y, u64::from_le_bytes(toa), tot), reserved)
}

pub fn encode_record(hit: &PixelHit) -> [u8; PHX1_RECORD_LEN] {
    let mut out = [0u8; PHX1_RECORD_LEN];
    out[0..2].copy_from_slice(&hit.x.to_le_bytes());
    out[2..4].copy_from_slice(&hit.y.to_le_bytes());
    out[4..12].copy_from_slice(&hit.toa_ticks.to_le_bytes());
    out[12..14].copy_from_slice(&hit.tot.to_le_bytes());
    out
}

/// Parses one CSV record such as `10,20,640,37`.
pub fn parse_csv_record(line: &str) -> std::result::Result<PixelHit, String> {
    let mut fields = line.split(',').map(str::trim);
    let mut next = |name: &str| -> std::result::Result<&str, String> {
        fields
            .next()
            .ok_or_else(|| format!("missing field '{name}'"))
    };
    let x = next("x")?;
    let y = next("y")?;
    let toa = next("toa_ticks")?;
    let tot = next("tot")?;
    if fields.next().is_some() {
        return Err("too many fields".into());
    }
    let parse_u = |s: &str, name: &str| -> std::result::Result<u64, String> {
        s.parse::<u64>()
            .map_err(|e| format!("field '{name}' = '{s}': {e}"))
    };
    let narrow = |v: u64, name: &str| -> std::result::Result<u16, String> {
        u16::try_from(v).map_err(|_| format!("field '{name}' = {v} does not fit 16 bits"))
    };
    Ok(PixelHit::new(
        narrow(parse_u(x, "x")?, "x")?,
        narrow(parse_u(y, "y")?, "y")?,
        parse_u(toa, "toa_ticks")?,
        narrow(parse_u(tot, "tot")?, "tot")?,
    ))
}

enum ReaderState {
    Start,
    Records,
    Done,
}

/// Streaming hit reader. Yields hits in file order and stops after the first
/// error.
pub struct HitReader<R> {
    inner: R,
    format: HitFormat,
    state: ReaderState,
    /// Byte offset (binary) or line number (CSV) of the next record.
    position: u64,
    line: String,
}

/// Opens a lazy hit stream over `source`.
pub fn read_hits<R: BufRead>(source: R, format: HitFormat) -> HitReader<R> {
    HitReader {
        inner: source,
        format,
        state: ReaderState::Start,
        position: 0,
        line: String::new(),
    }
}

/// Reads until `buf` is full or EOF; returns the number of bytes read.
fn read_full<R: io::Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

impl<R: BufRead> HitReader<R> {
    fn next_binary(&mut self) -> Option<Result<PixelHit>> {
        if let ReaderState::Start = self.state {
            let mut magic = [0u8; 8];
            match read_full(&mut self.inner, &mut magic) {
                Ok(0) => {
                    self.state = ReaderState::Done;
                    return None;
                }
                Ok(8) if &magic == PHX1_MAGIC => {
                    self.position = 8;
                    self.state = ReaderState::Records;
                }
                Ok(_) => {
                    self.state = ReaderState::Done;
                    return Some(Err(Error::parse_bytes(0, "missing PHXHITS1 magic")));
                }
                Err(e) => {
                    self.state = ReaderState::Done;
                    return Some(Err(e.into()));
                }
            }
        }
        let mut record = [0u8; PHX1_RECORD_LEN];
        let offset = self.position;
        match read_full(&mut self.inner, &mut record) {
            Ok(0) => {
                self.state = ReaderState::Done;
                None
            }
            Ok(n) if n < PHX1_RECORD_LEN => {
                self.state = ReaderState::Done;
                Some(Err(Error::parse_bytes(
                    offset,
                    format!("truncated record ({n} of {PHX1_RECORD_LEN} bytes)"),
                )))
            }
            Ok(_) => {
                self.position += PHX1_RECORD_LEN as u64;
                let (hit, reserved) = decode_record(&record);
                if reserved != 0 {
                    self.state = ReaderState::Done;
                    return Some(Err(Error::parse_bytes(
                        offset,
                        format!("reserved field is {reserved}, expected 0"),
                    )));
                }
                if let Err(msg) = hit.validate() {
                    self.state = ReaderState::Done;
                    return Some(Err(Error::Validation(format!("byte {offset}: {msg}"))));
                }
                Some(Ok(hit))
            }
            Err(e) => {
                self.state = ReaderState::Done;
                Some(Err(e.into()))
            }
        }
    }

    /// Next non-comment, non-blank line, or `None` at EOF.
    fn next_line(&mut self) -> Option<Result<()>> {
        loop {
            self.line.clear();
            match self.inner.read_line(&mut self.line) {
                Ok(0) => return None,
                Ok(_) => {
                    self.position += 1;
                    let trimmed = self.line.trim();
                    if trimmed.is_empty() || trimmed.starts_with('#') {
                        continue;
                    }
                    return Some(Ok(()));
                }
                Err(e) => return Some(Err(e.into())),
            }
        }
    }

    fn next_csv(&mut self) -> Option<Result<PixelHit>> {
        if let ReaderState::Start = self.state {
            match self.next_line() {
                None => {
                    self.state = ReaderState::Done;
                    return None;
                }
                Some(Err(e)) => {
                    self.state = ReaderState::Done;
                    return Some(Err(e));
                }
                Some(Ok(())) => {
                    if self.line.trim() != CSV_HEADER {
                        self.state = ReaderState::Done;
                        return Some(Err(Error::parse_line(
                            self.position,
                            format!("expected header '{CSV_HEADER}'"),
                        )));
                    }
                    self.state = ReaderState::Records;
                }
            }
        }
        match self.next_line()? {
            Err(e) => {
                self.state = ReaderState::Done;
                Some(Err(e))
            }
            Ok(()) => {
                let line_no = self.position;
                let parsed =
                    parse_csv_record(self.line.trim()).map_err(|m| Error::parse_line(line_no, m));
                let checked = parsed.and_then(|hit| {
                    hit.validate()
                        .map(|_| hit)
                        .map_err(|m| Error::Validation(format!("line {line_no}: {m}")))
                });
                if checked.is_err() {
                    self.state = ReaderState::Done;
                }
                Some(checked)
            }
        }
    }
}

impl<R: BufRead> Iterator for HitReader<R> {
    type Item = Result<PixelHit>;

    fn next(&mut self) -> Option<Self::Item> {
        if let ReaderState::Done = self.state {
            return None;
        }
        match self.format {
            HitFormat::Phx1 => self.next_binary(),
            HitFormat::Csv => self.next_csv(),
        }
    }
}

/// Incremental hit writer; call [`HitWriter::finish`] to flush.
pub struct HitWriter<W: Write> {
    inner: W,
    format: HitFormat,
    started: bool,
}

impl<W: Write> HitWriter<W> {
    pub fn new(inner: W, format: HitFormat) -> Self {
        Self {
            inner,
            format,
            started: false,
        }
    }

    fn start(&mut self) -> io::Result<()> {
        if !self.started {
            match self.format {
                HitFormat::Phx1 => self.inner.write_all(PHX1_MAGIC)?,
                HitFormat::Csv => writeln!(self.inner, "{CSV_HEADER}")?,
            }
            self.started = true;
        }
        Ok(())
    }

    pub fn write_hit(&mut self, hit: &PixelHit) -> Result<()> {
        hit.validate().map_err(Error::Validation)?;
        self.start()?;
        match self.format {
            HitFormat::Phx1 => self.inner.write_all(&encode_record(hit))?,
            HitFormat::Csv => writeln!(
                self.inner,
                "{},{},{},{}",
                hit.x, hit.y, hit.toa_ticks, hit.tot
            )?,
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.start()?;
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn write_hits<'a, W: Write>(
    sink: W,
    format: HitFormat,
    hits: impl IntoIterator<Item = &'a PixelHit>,
) -> Result<W> {
    let mut writer = HitWriter::new(sink, format);
    for hit in hits {
        writer.write_hit(hit)?;
    }
    writer.finish()
}

/// Stable sort by `(toa_ticks, y, x)`.
pub fn sort_hits(mut hits: Vec<PixelHit>, exec: Exec) -> Vec<PixelHit> {
    exec.sort_by(&mut hits, |a, b| a.order_key().cmp(&b.order_key()));
    hits
}

/// A contiguous, time-sorted slice of the hit stream covering
/// `[t_start_ticks, t_end_ticks)`.
///
/// Consecutive chunks overlap by `overlap_ticks`; the chunk "owns" the hits in
/// `[t_start_ticks, owned_end_ticks)` and shares the rest with its successor.
#[derive(Clone, Debug, PartialEq)]
pub struct HitChunk {
    pub index: u64,
    pub t_start_ticks: u64,
    pub t_end_ticks: u64,
    pub owned_end_ticks: u64,
    pub overlap_ticks: u64,
    /// Position of `hits[0]` in the full input stream.
    pub first_seq: u64,
    pub hits: Vec<PixelHit>,
}

impl HitChunk {
    /// Wraps an already-sorted hit list as a single chunk spanning all of it.
    pub fn whole(hits: Vec<PixelHit>) -> Self {
        let t_end = hits.last().map_or(0, |h| h.toa_ticks + 1);
        Self {
            index: 0,
            t_start_ticks: 0,
            t_end_ticks: t_end,
            owned_end_ticks: t_end,
            overlap_ticks: u64::MAX,
            first_seq: 0,
            hits,
        }
    }

    /// Hits not shared with the next chunk.
    pub fn owned_hits(&self) -> &[PixelHit] {
        let n = self
            .hits
            .partition_point(|h| h.toa_ticks < self.owned_end_ticks);
        &self.hits[..n]
    }
}

/// Lazily groups a time-sorted hit stream into overlapping chunks.
///
/// Chunk `k` covers `[k·(span−overlap), k·(span−overlap) + span)`. Intervals
/// are half-open, so a hit on a boundary belongs to the later chunk. Chunks
/// that would hold no hits are not emitted.
pub struct TimeChunker<I> {
    input: I,
    span: u64,
    overlap: u64,
    stride: u64,
    next_index: Option<u64>,
    buf: VecDeque<PixelHit>,
    buf_first_seq: u64,
    lookahead: Option<PixelHit>,
    last_toa: Option<u64>,
    input_done: bool,
    failed: bool,
}

pub fn chunk_by_time<I>(
    input: I,
    span_ticks: u64,
    overlap_ticks: u64,
) -> Result<TimeChunker<I::IntoIter>>
where
    I: IntoIterator<Item = Result<PixelHit>>,
{
    if span_ticks == 0 {
        return Err(Error::Config("chunk span must be positive".into()));
    }
    if overlap_ticks.saturating_mul(2) > span_ticks {
        return Err(Error::Config(format!(
            "chunk overlap {overlap_ticks} must be at most half the span {span_ticks}"
        )));
    }
    Ok(TimeChunker {
        input: input.into_iter(),
        span: span_ticks,
        overlap: overlap_ticks,
        stride: span_ticks - overlap_ticks,
        next_index: None,
        buf: VecDeque::new(),
        buf_first_seq: 0,
        lookahead: None,
        last_toa: None,
        input_done: false,
        failed: false,
    })
}

impl<I> TimeChunker<I>
where
    I: Iterator<Item = Result<PixelHit>>,
{
    /// Smallest chunk index whose interval contains `t`.
    fn first_chunk_containing(&self, t: u64) -> u64 {
        if t < self.span {
            0
        } else {
            (t - self.span) / self.stride + 1
        }
    }

    fn pull(&mut self) -> Option<Result<PixelHit>> {
        if let Some(hit) = self.lookahead.take() {
            return Some(Ok(hit));
        }
        if self.input_done {
            return None;
        }
        match self.input.next() {
            None => {
                self.input_done = true;
                None
            }
            Some(Ok(hit)) => {
                if let Some(prev) = self.last_toa {
                    if hit.toa_ticks < prev {
                        return Some(Err(Error::Ordering {
                            previous: prev,
                            current: hit.toa_ticks,
                        }));
                    }
                }
                self.last_toa = Some(hit.toa_ticks);
                Some(Ok(hit))
            }
            Some(Err(e)) => Some(Err(e)),
        }
    }

    fn drop_before(&mut self, start: u64) {
        while let Some(front) = self.buf.front() {
            if front.toa_ticks >= start {
                break;
            }
            self.buf.pop_front();
            self.buf_first_seq += 1;
        }
    }
}

impl<I> Iterator for TimeChunker<I>
where
    I: Iterator<Item = Result<PixelHit>>,
{
    type Item = Result<HitChunk>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let mut index = self.next_index.unwrap_or_default();
        self.drop_before(index * self.stride);
        if self.buf.is_empty() {
            // Skip ahead to the first chunk that holds the next hit.
            match self.pull() {
                None => return None,
                Some(Err(e)) => {
                    self.failed = true;
                    return Some(Err(e));
                }
                Some(Ok(hit)) => {
                    index = index.max(self.first_chunk_containing(hit.toa_ticks));
                    self.buf.push_back(hit);
                }
            }
        }
        let start = index * self.stride;
        let end = start + self.span;
        loop {
            match self.pull() {
                None => break,
                Some(Err(e)) => {
                    self.failed = true;
                    return Some(Err(e));
                }
                Some(Ok(hit)) => {
                    if hit.toa_ticks >= end {
                        self.lookahead = Some(hit);
                        break;
                    }
                    self.buf.push_back(hit);
                }
            }
        }
        self.next_index = Some(index + 1);
        Some(Ok(HitChunk {
            index,
            t_start_ticks: start,
            t_end_ticks: end,
            owned_end_ticks: start + self.stride,
            overlap_ticks: self.overlap,
            first_seq: self.buf_first_seq,
            hits: self.buf.iter().copied().collect(),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn ok_hits(ts: &[u64]) -> Vec<Result<PixelHit>> {
        ts.iter().map(|&t| Ok(PixelHit::new(1, 1, t, 1))).collect()
    }

    #[test]
    fn csv_line_maps_fields() {
        assert_eq!(
            parse_csv_record("10,20,640,37").unwrap(),
            PixelHit::new(10, 20, 640, 37)
        );
    }

    #[test]
    fn empty_sources_give_empty_streams() {
        for format in [HitFormat::Phx1, HitFormat::Csv] {
            let hits: Vec<_> = read_hits(Cursor::new(Vec::new()), format).collect();
            assert!(hits.is_empty());
        }
    }

    #[test]
    fn binary_records_match_hand_decode() {
        let mut bytes = PHX1_MAGIC.to_vec();
        // x=1, y=2, toa=0x0102030405, tot=7
        bytes.extend_from_slice(&[1, 0, 2, 0, 5, 4, 3, 2, 1, 0, 0, 0, 7, 0, 0, 0]);
        // x=255, y=0, toa=640, tot=300 (0x012C)
        bytes.extend_from_slice(&[255, 0, 0, 0, 0x80, 0x02, 0, 0, 0, 0, 0, 0, 0x2C, 0x01, 0, 0]);
        // x=0x00AB, y=0x0010, toa=2^47, tot=0xFFFF
        bytes.extend_from_slice(&[
            0xAB, 0, 0x10, 0, 0, 0, 0, 0, 0, 0x80, 0, 0, 0xFF, 0xFF, 0, 0,
        ]);
        let hits: Vec<PixelHit> = read_hits(Cursor::new(bytes), HitFormat::Phx1)
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(
            hits,
            vec![
                PixelHit::new(1, 2, 0x01_0203_0405, 7),
                PixelHit::new(255, 0, 640, 300),
                PixelHit::new(0xAB, 0x10, 1 << 47, 0xFFFF),
            ]
        );
    }

    #[test]
    fn truncated_record_reports_offset() {
        let mut bytes = PHX1_MAGIC.to_vec();
        bytes.extend_from_slice(&encode_record(&PixelHit::new(1, 1, 1, 1)));
        bytes.extend_from_slice(&[0, 0, 0]);
        let out: Vec<_> = read_hits(Cursor::new(bytes), HitFormat::Phx1).collect();
        assert_eq!(out.len(), 2);
        match &out[1] {
            Err(Error::Parse { unit, offset, .. }) => {
                assert_eq!(*unit, "byte");
                assert_eq!(*offset, 24);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_reserved_are_rejected() {
        let out: Vec<_> = read_hits(Cursor::new(b"NOTMAGIC".to_vec()), HitFormat::Phx1).collect();
        assert!(matches!(out[0], Err(Error::Parse { offset: 0, .. })));

        let mut bytes = PHX1_MAGIC.to_vec();
        let mut rec = encode_record(&PixelHit::new(1, 1, 1, 1));
        rec[14] = 1;
        bytes.extend_from_slice(&rec);
        let out: Vec<_> = read_hits(Cursor::new(bytes), HitFormat::Phx1).collect();
        assert!(matches!(out[0], Err(Error::Parse { offset: 8, .. })));
    }

    #[test]
    fn out_of_range_coordinates_fail_validation() {
        let text = "x,y,toa_ticks,tot\n1,2,3,4\n256,0,5,5\n";
        let out: Vec<_> = read_hits(Cursor::new(text), HitFormat::Csv).collect();
        assert_eq!(out.len(), 2);
        assert!(out[0].is_ok());
        assert!(matches!(&out[1], Err(Error::Validation(m)) if m.contains("line 3")));

        let mut bytes = PHX1_MAGIC.to_vec();
        bytes.extend_from_slice(&encode_record(&PixelHit::new(300, 0, 0, 0)));
        let out: Vec<_> = read_hits(Cursor::new(bytes), HitFormat::Phx1).collect();
        assert!(matches!(out[0], Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_csv_reports_line() {
        let text = "# comment\nx,y,toa_ticks,tot\n1,2,3\n";
        let out: Vec<_> = read_hits(Cursor::new(text), HitFormat::Csv).collect();
        assert!(matches!(
            out[0],
            Err(Error::Parse {
                unit: "line",
                offset: 3,
                ..
            })
        ));

        let out: Vec<_> = read_hits(Cursor::new("a,b\n"), HitFormat::Csv).collect();
        assert!(matches!(out[0], Err(Error::Parse { offset: 1, .. })));
    }

    #[test]
    fn writer_rejects_invalid_hits() {
        let err = write_hits(Vec::new(), HitFormat::Phx1, &[PixelHit::new(0, 999, 0, 0)]);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn sort_orders_by_time_then_row_then_column() {
        let hits = vec![
            PixelHit::new(0, 0, 5, 0),
            PixelHit::new(0, 0, 1, 0),
            PixelHit::new(3, 1, 1, 0),
            PixelHit::new(2, 1, 1, 0),
        ];
        let sorted = sort_hits(hits, Exec::Sequential);
        let keys: Vec<_> = sorted.iter().map(|h| (h.toa_ticks, h.y, h.x)).collect();
        assert_eq!(keys, vec![(1, 0, 0), (1, 1, 2), (1, 1, 3), (5, 0, 0)]);
        assert_eq!(sort_hits(sorted.clone(), Exec::Parallel), sorted);
    }

    #[test]
    fn chunk_boundaries_follow_stride() {
        let chunks: Vec<HitChunk> = chunk_by_time(ok_hits(&[0, 10, 1000]), 500, 50)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        // [0,500) holds {0,10}; [450,950) is empty and skipped; [900,1400) holds {1000}.
        assert_eq!(chunks.len(), 2);
        assert_eq!((chunks[0].t_start_ticks, chunks[0].t_end_ticks), (0, 500));
        assert_eq!(chunks[0].hits.len(), 2);
        assert_eq!(
            (chunks[1].t_start_ticks, chunks[1].t_end_ticks),
            (900, 1400)
        );
        assert_eq!(chunks[1].hits[0].toa_ticks, 1000);
        assert_eq!(chunks[1].first_seq, 2);
    }

    #[test]
    fn single_hit_single_chunk() {
        let chunks: Vec<HitChunk> = chunk_by_time(ok_hits(&[123_456]), 7, 0)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].hits.len(), 1);
    }

    #[test]
    fn boundary_hit_goes_to_later_chunk() {
        let chunks: Vec<HitChunk> = chunk_by_time(ok_hits(&[99, 100]), 100, 0)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].hits[0].toa_ticks, 99);
        assert_eq!(chunks[1].t_start_ticks, 100);
        assert_eq!(chunks[1].hits[0].toa_ticks, 100);
    }

    #[test]
    fn hits_in_overlap_appear_twice() {
        let chunks: Vec<HitChunk> = chunk_by_time(ok_hits(&[460]), 500, 50)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].owned_hits().len(), 0);
        assert_eq!(chunks[1].owned_hits().len(), 1);
    }

    #[test]
    fn unsorted_input_is_an_ordering_error() {
        let out: Vec<_> = chunk_by_time(ok_hits(&[10, 5]), 100, 10).unwrap().collect();
        assert!(out.iter().any(|c| matches!(
            c,
            Err(Error::Ordering {
                previous: 10,
                current: 5
            })
        )));
    }

    #[test]
    fn bad_chunk_config_rejected() {
        assert!(chunk_by_time(ok_hits(&[]), 0, 0).is_err());
        assert!(chunk_by_time(ok_hits(&[]), 100, 51).is_err());
    }
}
