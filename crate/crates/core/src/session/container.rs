//! The `PRXS` chunked container shared by sessions and episodes.
//!
//! All integers are little-endian.
//!
//! ```text
//! file    = header chunk* footer trailer
//! header  = "PRXS" version:u16 reserved:u16 json_len:u32 json crc32:u32
//!           (crc over every preceding header byte; json is the Header
//!           struct as UTF-8)
//! chunk   = tag[4] payload_len:u32 record_count:u32 crc32:u32 payload
//!           (tag "CHNK" in sessions, "EPIS" in episodes; crc over payload)
//! record  = stream:u8 timestamp_ns:u64 len:u32 bytes[len]
//! footer  = "INDX" entries:u64 (stream:u8 timestamp_ns:u64 offset:u64)*
//!           drop_streams:u8 (stream:u8 dropped:u64)* crc32:u32
//!           (offset = absolute file offset of the record; crc over the
//!           footer from "INDX" up to the crc)
//! trailer = footer_offset:u64 "PRXE"
//! ```
//!
//! A chunk is flushed once adding the next record would take its payload
//! past 64 KiB; records are never split, so a single large record gets a
//! chunk of its own. Index entries are in file order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncoderSpec, Sample, SessionError, StreamId};

pub const MAGIC: [u8; 4] = *b"PRXS";
pub const VERSION: u16 = 1;
pub const CHUNK_TARGET: usize = 64 * 1024;
pub const SESSION_TAG: [u8; 4] = *b"CHNK";
pub const EPISODE_TAG: [u8; 4] = *b"EPIS";
const INDEX_TAG: [u8; 4] = *b"INDX";
const END_TAG: [u8; 4] = *b"PRXE";
const PREFIX_LEN: u64 = 12;
const CHUNK_HEADER_LEN: usize = 16;
const RECORD_HEADER_LEN: usize = 13;
const TRAILER_LEN: u64 = 12;
const ENTRY_LEN: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    Session,
    Episode,
}

impl FileKind {
    pub fn tag(self) -> [u8; 4] {
        match self {
            FileKind::Session => SESSION_TAG,
            FileKind::Episode => EPISODE_TAG,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamInfo {
    pub id: u8,
    pub name: String,
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointChannel {
    pub name: String,
    pub zero_offset: u16,
    pub sign: i8,
}

impl JointChannel {
    pub fn spec(&self) -> EncoderSpec {
        EncoderSpec {
            zero_offset: self.zero_offset,
            sign: self.sign,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: FileKind,
    pub variant: String,
    pub rate_hz: f64,
    pub streams: Vec<StreamInfo>,
    /// Encoder calibration per joint id.
    pub joints: Vec<JointChannel>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Header {
    /// Session header declaring the five recorded streams.
    pub fn session(variant: &str, rate_hz: f64, joints: Vec<JointChannel>) -> Self {
        Self {
            kind: FileKind::Session,
            variant: variant.to_owned(),
            rate_hz,
            streams: StreamId::SESSION.iter().map(|s| s.info()).collect(),
            joints,
            meta: BTreeMap::new(),
        }
    }

    pub fn declares(&self, stream: StreamId) -> bool {
        self.streams.iter().any(|s| s.id == stream as u8)
    }

    fn encode(&self) -> Vec<u8> {
        let json = serde_json::to_vec(self).expect("header serializes");
        let mut out = Vec::with_capacity(json.len() + 16);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexEntry {
    pub stream: StreamId,
    pub timestamp_ns: u64,
    pub offset: u64,
}

pub struct SessionWriter<W: Write> {
    out: W,
    header: Header,
    pos: u64,
    chunk: Vec<u8>,
    chunk_records: u32,
    index: Vec<IndexEntry>,
    last_ts: BTreeMap<StreamId, u64>,
}

impl SessionWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, header: Header) -> Result<Self, SessionError> {
        Self::new(BufWriter::new(File::create(path)?), header)
    }
}

impl<W: Write> SessionWriter<W> {
    pub fn new(mut out: W, header: Header) -> Result<Self, SessionError> {
        let bytes = header.encode();
        out.write_all(&bytes)?;
        Ok(Self {
            out,
            header,
            pos: bytes.len() as u64,
            chunk: Vec::with_capacity(CHUNK_TARGET),
            chunk_records: 0,
            index: Vec::new(),
            last_ts: BTreeMap::new(),
        })
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn samples_written(&self) -> usize {
        self.index.len()
    }

    pub fn write(&mut self, s: &Sample) -> Result<(), SessionError> {
        if !self.header.declares(s.stream) {
            return Err(SessionError::UndeclaredStream(s.stream));
        }
        if let Some(&last) = self.last_ts.get(&s.stream) {
            if s.timestamp_ns < last {
                return Err(SessionError::OutOfOrder {
                    stream: s.stream,
                    ts: s.timestamp_ns,
                    last,
                });
            }
        }
        let len = u32::try_from(s.payload.len()).map_err(|_| SessionError::Invalid("payload larger than 4 GiB".into()))?;
        if !self.chunk.is_empty() && self.chunk.len() + RECORD_HEADER_LEN + s.payload.len() > CHUNK_TARGET {
            self.flush_chunk()?;
        }
        self.index.push(IndexEntry {
            stream: s.stream,
            timestamp_ns: s.timestamp_ns,
            offset: self.pos + (CHUNK_HEADER_LEN + self.chunk.len()) as u64,
        });
        self.chunk.push(s.stream as u8);
        self.chunk.extend_from_slice(&s.timestamp_ns.to_le_bytes());
        self.chunk.extend_from_slice(&len.to_le_bytes());
        self.chunk.extend_from_slice(&s.payload);
        self.chunk_records += 1;
        self.last_ts.insert(s.stream, s.timestamp_ns);
        Ok(())
    }

    fn flush_chunk(&mut self) -> Result<(), SessionError> {
        if self.chunk.is_empty() {
            return Ok(());
        }
        let mut head = [0u8; CHUNK_HEADER_LEN];
        head[..4].copy_from_slice(&self.header.kind.tag());
        head[4..8].copy_from_slice(&(self.chunk.len() as u32).to_le_bytes());
        head[8..12].copy_from_slice(&self.chunk_records.to_le_bytes());
        head[12..].copy_from_slice(&crc32fast::hash(&self.chunk).to_le_bytes());
        self.out.write_all(&head)?;
        self.out.write_all(&self.chunk)?;
        self.pos += (CHUNK_HEADER_LEN + self.chunk.len()) as u64;
        self.chunk.clear();
        self.chunk_records = 0;
        Ok(())
    }

    /// Flushes the open chunk and writes the index footer. `drops` lists
    /// samples lost before they reached the writer.
    pub fn finish(mut self, drops: &BTreeMap<StreamId, u64>) -> Result<W, SessionError> {
        self.flush_chunk()?;
        let mut footer = Vec::with_capacity(16 + self.index.len() * ENTRY_LEN);
        footer.extend_from_slice(&INDEX_TAG);
        footer.extend_from_slice(&(self.index.len() as u64).to_le_bytes());
        for e in &self.index {
            footer.push(e.stream as u8);
            footer.extend_from_slice(&e.timestamp_ns.to_le_bytes());
            footer.extend_from_slice(&e.offset.to_le_bytes());
        }
        footer.push(drops.len() as u8);
        for (s, n) in drops {
            footer.push(*s as u8);
            footer.extend_from_slice(&n.to_le_bytes());
        }
        let crc = crc32fast::hash(&footer);
        footer.extend_from_slice(&crc.to_le_bytes());
        self.out.write_all(&footer)?;
        self.out.write_all(&self.pos.to_le_bytes())?;
        self.out.write_all(&END_TAG)?;
        self.out.flush()?;
        Ok(self.out)
    }
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], err: impl FnOnce() -> SessionError) -> Result<(), SessionError> {
    r.read_exact(buf).map_err(|e| if e.kind() == io::ErrorKind::UnexpectedEof { err() } else { e.into() })
}

fn read_header<R: Read>(r: &mut R) -> Result<(Header, u64), SessionError> {
    let mut prefix = [0u8; PREFIX_LEN as usize];
    read_exact_or(r, &mut prefix, || SessionError::BadMagic)?;
    if prefix[..4] != MAGIC {
        return Err(SessionError::BadMagic);
    }
    let version = u16::from_le_bytes([prefix[4], prefix[5]]);
    if version != VERSION {
        return Err(SessionError::VersionUnsupported(version));
    }
    let len = u32::from_le_bytes(prefix[8..12].try_into().unwrap()) as usize;
    let mut json = vec![0u8; len];
    read_exact_or(r, &mut json, || SessionError::CorruptHeader("truncated".into()))?;
    let mut crc = [0u8; 4];
    read_exact_or(r, &mut crc, || SessionError::CorruptHeader("truncated".into()))?;
    let mut h = crc32fast::Hasher::new();
    h.update(&prefix);
    h.update(&json);
    if h.finalize() != u32::from_le_bytes(crc) {
        return Err(SessionError::CorruptHeader("checksum mismatch".into()));
    }
    let header = serde_json::from_slice(&json).map_err(|e| SessionError::CorruptHeader(e.to_string()))?;
    Ok((header, PREFIX_LEN + len as u64 + 4))
}

struct Footer {
    index: Vec<IndexEntry>,
    drops: BTreeMap<StreamId, u64>,
}

fn parse_footer(bytes: &[u8]) -> Result<Footer, SessionError> {
    let bad = |m: &str| SessionError::CorruptIndex(m.to_owned());
    if bytes.len() < 4 + 8 + 1 + 4 || bytes[..4] != INDEX_TAG {
        return Err(bad("footer tag missing"));
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
        return Err(bad("footer checksum mismatch"));
    }
    let n = u64::from_le_bytes(body[4..12].try_into().unwrap()) as usize;
    let entries_end = n.checked_mul(ENTRY_LEN).and_then(|x| x.checked_add(12)).filter(|&e| e < body.len()).ok_or_else(|| bad("entry count exceeds footer"))?;
    let mut index = Vec::with_capacity(n);
    for e in body[12..entries_end].chunks_exact(ENTRY_LEN) {
        index.push(IndexEntry {
            stream: StreamId::from_u8(e[0]).map_err(|_| bad("unknown stream in index"))?,
            timestamp_ns: u64::from_le_bytes(e[1..9].try_into().unwrap()),
            offset: u64::from_le_bytes(e[9..17].try_into().unwrap()),
        });
    }
    let nd = body[entries_end] as usize;
    let rest = &body[entries_end + 1..];
    if rest.len() != nd * 9 {
        return Err(bad("drop table length"));
    }
    let mut drops = BTreeMap::new();
    for d in rest.chunks_exact(9) {
        drops.insert(
            StreamId::from_u8(d[0]).map_err(|_| bad("unknown stream in drop table"))?,
            u64::from_le_bytes(d[1..9].try_into().unwrap()),
        );
    }
    Ok(Footer { index, drops })
}

pub struct SessionReader<R: Read + Seek> {
    src: R,
    header: Header,
    data_start: u64,
    footer_offset: u64,
    index: Vec<IndexEntry>,
    drops: BTreeMap<StreamId, u64>,
}

impl SessionReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, SessionError> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read + Seek> SessionReader<R> {
    pub fn new(mut src: R) -> Result<Self, SessionError> {
        let (header, data_start) = read_header(&mut src)?;
        let end = src.seek(SeekFrom::End(0))?;
        if end < data_start + TRAILER_LEN {
            return Err(SessionError::CorruptIndex("no trailer; file truncated or not finalized".into()));
        }
        src.seek(SeekFrom::Start(end - TRAILER_LEN))?;
        let mut trailer = [0u8; TRAILER_LEN as usize];
        src.read_exact(&mut trailer)?;
        if trailer[8..] != END_TAG {
            return Err(SessionError::CorruptIndex("no trailer; file truncated or not finalized".into()));
        }
        let footer_offset = u64::from_le_bytes(trailer[..8].try_into().unwrap());
        if footer_offset < data_start || footer_offset > end - TRAILER_LEN {
            return Err(SessionError::CorruptIndex(format!("footer offset {footer_offset} out of range")));
        }
        src.seek(SeekFrom::Start(footer_offset))?;
        let mut footer = vec![0u8; (end - TRAILER_LEN - footer_offset) as usize];
        src.read_exact(&mut footer)?;
        let Footer { index, drops } = parse_footer(&footer)?;
        if let Some(e) = index.iter().find(|e| e.offset < data_start || e.offset + RECORD_HEADER_LEN as u64 > footer_offset) {
            return Err(SessionError::CorruptIndex(format!("entry offset {} outside the data region", e.offset)));
        }
        Ok(Self {
            src,
            header,
            data_start,
            footer_offset,
            index,
            drops,
        })
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn index(&self) -> &[IndexEntry] {
        &self.index
    }

    pub fn drops(&self) -> &BTreeMap<StreamId, u64> {
        &self.drops
    }

    /// Random access through the index. Chunk checksums are not verified.
    pub fn read_entry(&mut self, e: &IndexEntry) -> Result<Sample, SessionError> {
        self.src.seek(SeekFrom::Start(e.offset))?;
        let mut head = [0u8; RECORD_HEADER_LEN];
        self.src.read_exact(&mut head)?;
        let stream = StreamId::from_u8(head[0])?;
        let ts = u64::from_le_bytes(head[1..9].try_into().unwrap());
        if stream != e.stream || ts != e.timestamp_ns {
            return Err(SessionError::CorruptIndex(format!("entry at {} does not match its record", e.offset)));
        }
        let len = u32::from_le_bytes(head[9..13].try_into().unwrap()) as u64;
        if e.offset + RECORD_HEADER_LEN as u64 + len > self.footer_offset {
            return Err(SessionError::CorruptIndex(format!("record at {} overruns the data region", e.offset)));
        }
        let mut payload = vec![0u8; len as usize];
        self.src.read_exact(&mut payload)?;
        Ok(Sample {
            stream,
            timestamp_ns: ts,
            payload,
        })
    }

    /// Reads every sample in file order, verifying chunk checksums and
    /// cross-checking the index.
    pub fn samples(&mut self) -> Result<Vec<Sample>, SessionError> {
        self.src.seek(SeekFrom::Start(self.data_start))?;
        let tag = self.header.kind.tag();
        let mut pos = self.data_start;
        let mut out = Vec::with_capacity(self.index.len());
        while pos < self.footer_offset {
            let (chunk, records) = read_chunk(&mut self.src, pos, tag, self.footer_offset)?;
            let start = out.len();
            decode_records(&chunk, pos + CHUNK_HEADER_LEN as u64, &mut out).map_err(|reason| SessionError::CorruptChunk { offset: pos, reason })?;
            if out.len() - start != records as usize {
                return Err(SessionError::CorruptChunk {
                    offset: pos,
                    reason: format!("declares {records} records, holds {}", out.len() - start),
                });
            }
            pos += (CHUNK_HEADER_LEN + chunk.len()) as u64;
        }
        if out.len() != self.index.len() {
            return Err(SessionError::CorruptIndex(format!("index lists {} samples, chunks hold {}", self.index.len(), out.len())));
        }
        Ok(out.into_iter().map(|(_, s)| s).collect())
    }

    /// Samples of one stream in timestamp order.
    pub fn stream(&mut self, stream: StreamId) -> Result<Vec<Sample>, SessionError> {
        let mut all = self.samples()?;
        all.retain(|s| s.stream == stream);
        Ok(all)
    }
}

fn read_chunk<R: Read>(r: &mut R, pos: u64, tag: [u8; 4], limit: u64) -> Result<(Vec<u8>, u32), SessionError> {
    let corrupt = |reason: String| SessionError::CorruptChunk { offset: pos, reason };
    let mut head = [0u8; CHUNK_HEADER_LEN];
    read_exact_or(r, &mut head, || corrupt("truncated chunk header".into()))?;
    if head[..4] != tag {
        return Err(corrupt(format!("bad tag {:?}", String::from_utf8_lossy(&head[..4]))));
    }
    let len = u32::from_le_bytes(head[4..8].try_into().unwrap()) as u64;
    if pos + CHUNK_HEADER_LEN as u64 + len > limit {
        return Err(corrupt(format!("payload of {len} bytes runs past the data region")));
    }
    let mut payload = vec![0u8; len as usize];
    read_exact_or(r, &mut payload, || corrupt("truncated payload".into()))?;
    let crc = u32::from_le_bytes(head[12..].try_into().unwrap());
    if crc32fast::hash(&payload) != crc {
        return Err(corrupt("CRC-32 mismatch".into()));
    }
    Ok((payload, u32::from_le_bytes(head[8..12].try_into().unwrap())))
}

fn decode_records(chunk: &[u8], base: u64, out: &mut Vec<(u64, Sample)>) -> Result<(), String> {
    let mut i = 0;
    while i < chunk.len() {
        if chunk.len() - i < RECORD_HEADER_LEN {
            return Err("truncated record header".into());
        }
        let stream = StreamId::from_u8(chunk[i]).map_err(|e| e.to_string())?;
        let ts = u64::from_le_bytes(chunk[i + 1..i + 9].try_into().unwrap());
        let len = u32::from_le_bytes(chunk[i + 9..i + 13].try_into().unwrap()) as usize;
        let start = i + RECORD_HEADER_LEN;
        if chunk.len() - start < len {
            return Err("record overruns chunk".into());
        }
        out.push((
            base + i as u64,
            Sample {
                stream,
                timestamp_ns: ts,
                payload: chunk[start..start + len].to_vec(),
            },
        ));
        i = start + len;
    }
    Ok(())
}

/// Result of a full structural check.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub chunks: usize,
    pub records: usize,
    pub problems: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Walks the file chunk by chunk without trusting the trailer, so that
/// truncated or unfinished files are diagnosed rather than rejected
/// outright.
pub fn validate(path: impl AsRef<Path>) -> Result<ValidationReport, SessionError> {
    let bytes = std::fs::read(path)?;
    validate_bytes(&bytes)
}

pub fn validate_bytes(bytes: &[u8]) -> Result<ValidationReport, SessionError> {
    let mut cur = io::Cursor::new(bytes);
    let (header, data_start) = read_header(&mut cur)?;
    let tag = header.kind.tag();
    let mut report = ValidationReport::default();
    let mut pos = data_start;
    let mut seen = Vec::new();
    let total = bytes.len() as u64;
    let footer_at = loop {
        if pos == total {
            report.problems.push(format!("offset {pos}: file ends without an index footer (truncated)"));
            break None;
        }
        if bytes[pos as usize..].starts_with(&INDEX_TAG) {
            break Some(pos);
        }
        match read_chunk(&mut cur, pos, tag, total) {
            Ok((chunk, records)) => {
                let before = seen.len();
                if let Err(reason) = decode_records(&chunk, pos + CHUNK_HEADER_LEN as u64, &mut seen) {
                    report.problems.push(format!("chunk {} at offset {pos}: {reason}", report.chunks));
                    break None;
                }
                if seen.len() - before != records as usize {
                    report.problems.push(format!("chunk {} at offset {pos}: record count mismatch", report.chunks));
                }
                report.chunks += 1;
                pos += (CHUNK_HEADER_LEN + chunk.len()) as u64;
            }
            Err(e) => {
                report.problems.push(format!("chunk {} at offset {pos}: {}", report.chunks, chunk_reason(&e)));
                break None;
            }
        }
    };
    report.records = seen.len();
    let Some(footer_at) = footer_at else {
        return Ok(report);
    };
    if total < footer_at + TRAILER_LEN || bytes[bytes.len() - 4..] != END_TAG {
        report.problems.push("index footer: trailer missing (truncated)".into());
        return Ok(report);
    }
    let stated = u64::from_le_bytes(bytes[bytes.len() - 12..bytes.len() - 4].try_into().unwrap());
    if stated != footer_at {
        report.problems.push(format!("trailer points at {stated}, footer found at {footer_at}"));
    }
    match parse_footer(&bytes[footer_at as usize..bytes.len() - TRAILER_LEN as usize]) {
        Ok(f) => {
            let scanned: Vec<_> = seen.iter().map(|(o, s)| (s.stream, s.timestamp_ns, *o)).collect();
            let indexed: Vec<_> = f.index.iter().map(|e| (e.stream, e.timestamp_ns, e.offset)).collect();
            if scanned != indexed {
                report.problems.push(format!("index footer: {} entries do not match {} scanned records", indexed.len(), scanned.len()));
            }
        }
        Err(e) => report.problems.push(format!("index footer: {e}")),
    }
    Ok(report)
}

fn chunk_reason(e: &SessionError) -> String {
    match e {
        SessionError::CorruptChunk { reason, .. } => reason.clone(),
        other => other.to_string(),
    }
}
