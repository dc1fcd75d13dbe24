//! Concurrent capture into a session file.
//!
//! Each source runs on its own thread and hands samples to a bounded
//! queue. A single sequencer merges the queues by timestamp and is the only
//! writer. A stream is declared stalled when its queue stays empty for the
//! stall timeout of wall time, or when it has ended while another stream
//! has moved more than the timeout past its last sample. Either way the
//! file is finalized before the error is returned.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, TrySendError};
use std::sync::Arc;
use std::time::Duration;

use super::{Header, Sample, SessionError, SessionReader, SessionWriter, StreamId};

/// Producer of one stream. `next_sample` may block; `None` ends the stream.
pub trait Source: Send {
    fn stream(&self) -> StreamId;
    fn next_sample(&mut self) -> Option<(u64, Vec<u8>)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Overflow {
    /// Producers wait for queue space; nothing is lost.
    #[default]
    Block,
    /// Producers drop the sample and count it.
    Drop,
}

#[derive(Debug, Clone)]
pub struct RecordOptions {
    pub stall_timeout: Duration,
    pub queue_depth: usize,
    pub overflow: Overflow,
    /// Samples at or after `first timestamp + duration` are not recorded.
    pub duration_ns: Option<u64>,
    /// Set from another thread to end the recording early.
    pub stop: Arc<AtomicBool>,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self {
            stall_timeout: Duration::from_millis(500),
            queue_depth: 64,
            overflow: Overflow::Block,
            duration_ns: None,
            stop: Arc::new(AtomicBool::new(false)),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamStats {
    pub written: u64,
    pub dropped: u64,
    pub first_ts: Option<u64>,
    pub last_ts: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordSummary {
    pub streams: BTreeMap<StreamId, StreamStats>,
}

impl RecordSummary {
    pub fn total_written(&self) -> u64 {
        self.streams.values().map(|s| s.written).sum()
    }
}

/// A failed recording together with what was written before the failure.
#[derive(Debug)]
pub struct RecordFailure {
    pub error: SessionError,
    pub summary: RecordSummary,
}

impl RecordFailure {
    fn new(error: SessionError, summary: RecordSummary) -> Self {
        Self { error, summary }
    }
}

impl std::fmt::Display for RecordFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({} samples written)", self.error, self.summary.total_written())
    }
}

impl std::error::Error for RecordFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

struct Lane {
    stream: StreamId,
    rx: Option<Receiver<Sample>>,
    head: Option<Sample>,
    ended: bool,
    done: bool,
    drops: Arc<AtomicU64>,
}

/// Records `sources` into `out` until every source ends, the duration
/// elapses or `opts.stop` is set. On `StreamStalled` the file has still
/// been finalized.
pub fn record<W: Write>(sources: Vec<Box<dyn Source>>, header: Header, out: W, opts: &RecordOptions) -> Result<(RecordSummary, W), RecordFailure> {
    let mut summary = RecordSummary::default();
    let mut seen = Vec::new();
    for s in &sources {
        let id = s.stream();
        if seen.contains(&id) {
            return Err(RecordFailure::new(SessionError::Invalid(format!("two sources for stream {id}")), summary));
        }
        if !header.declares(id) {
            return Err(RecordFailure::new(SessionError::UndeclaredStream(id), summary));
        }
        seen.push(id);
    }
    if let Some(missing) = header.streams.iter().filter_map(|s| StreamId::from_u8(s.id).ok()).find(|id| !seen.contains(id)) {
        return Err(RecordFailure::new(SessionError::MissingStream(missing), summary));
    }
    let mut writer = SessionWriter::new(out, header).map_err(|e| RecordFailure::new(e, RecordSummary::default()))?;
    let stop = opts.stop.clone();

    let outcome = std::thread::scope(|scope| {
        let mut lanes = Vec::with_capacity(sources.len());
        let mut producers = Vec::with_capacity(sources.len());
        for mut src in sources {
            let (tx, rx) = mpsc::sync_channel::<Sample>(opts.queue_depth.max(1));
            let drops = Arc::new(AtomicU64::new(0));
            let stream = src.stream();
            lanes.push(Lane {
                stream,
                rx: Some(rx),
                head: None,
                ended: false,
                done: false,
                drops: drops.clone(),
            });
            let stop = stop.clone();
            let overflow = opts.overflow;
            producers.push((stream, scope.spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    let Some((ts, payload)) = src.next_sample() else { break };
                    let s = Sample {
                        stream,
                        timestamp_ns: ts,
                        payload,
                    };
                    match overflow {
                        Overflow::Block => {
                            if tx.send(s).is_err() {
                                break;
                            }
                        }
                        Overflow::Drop => match tx.try_send(s) {
                            Ok(()) => {}
                            Err(TrySendError::Full(_)) => {
                                drops.fetch_add(1, Ordering::Relaxed);
                            }
                            Err(TrySendError::Disconnected(_)) => break,
                        },
                    }
                }
            })));
        }
        lanes.sort_by_key(|l| l.stream);
        let mut res = sequence(&mut lanes, &mut writer, &mut summary, opts);
        stop.store(true, Ordering::Relaxed);
        // Dropping the receivers unblocks producers waiting on a full queue.
        for lane in &mut lanes {
            lane.rx = None;
        }
        for lane in &lanes {
            summary.streams.entry(lane.stream).or_default().dropped = lane.drops.load(Ordering::Relaxed);
        }
        for (stream, handle) in producers {
            if handle.join().is_err() && res.is_ok() {
                res = Err(SessionError::Invalid(format!("source for {stream} panicked")));
            }
        }
        res
    });

    let drops: BTreeMap<_, _> = summary.streams.iter().filter(|(_, s)| s.dropped > 0).map(|(k, s)| (*k, s.dropped)).collect();
    let finished = writer.finish(&drops);
    match (outcome, finished) {
        (Ok(()), Ok(w)) => Ok((summary, w)),
        (Err(e), _) | (Ok(()), Err(e)) => Err(RecordFailure::new(e, summary)),
    }
}

fn sequence<W: Write>(lanes: &mut [Lane], writer: &mut SessionWriter<W>, summary: &mut RecordSummary, opts: &RecordOptions) -> Result<(), SessionError> {
    let timeout_ns = opts.stall_timeout.as_nanos() as u64;
    let mut t0 = None;
    for lane in lanes.iter() {
        summary.streams.insert(lane.stream, StreamStats::default());
    }
    loop {
        if opts.stop.load(Ordering::Relaxed) {
            return Ok(());
        }
        for lane in lanes.iter_mut() {
            if lane.head.is_some() || lane.ended || lane.done {
                continue;
            }
            let rx = lane.rx.as_ref().expect("live lane has a receiver");
            match rx.recv_timeout(opts.stall_timeout) {
                Ok(s) => lane.head = Some(s),
                Err(RecvTimeoutError::Disconnected) => lane.ended = true,
                Err(RecvTimeoutError::Timeout) => {
                    if opts.stop.load(Ordering::Relaxed) {
                        return Ok(());
                    }
                    return Err(SessionError::StreamStalled {
                        stream: lane.stream,
                        last_ts: summary.streams[&lane.stream].last_ts.unwrap_or(0),
                        timeout_ms: opts.stall_timeout.as_millis() as u64,
                    });
                }
            }
        }
        let Some(i) = lanes
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.head.as_ref().map(|h| (h.timestamp_ns, i)))
            .min()
            .map(|(_, i)| i)
        else {
            return Ok(());
        };
        let ts = lanes[i].head.as_ref().unwrap().timestamp_ns;
        let t0 = *t0.get_or_insert(ts);
        for lane in lanes.iter() {
            if lane.ended && !lane.done {
                let last = summary.streams[&lane.stream].last_ts.unwrap_or(t0);
                if ts > last + timeout_ns {
                    return Err(SessionError::StreamStalled {
                        stream: lane.stream,
                        last_ts: last,
                        timeout_ms: opts.stall_timeout.as_millis() as u64,
                    });
                }
            }
        }
        let lane = &mut lanes[i];
        if opts.duration_ns.is_some_and(|d| ts >= t0 + d) {
            // Past the end for this stream; stop pulling from it.
            lane.head = None;
            lane.done = true;
            lane.rx = None;
            continue;
        }
        let sample = lane.head.take().unwrap();
        writer.write(&sample)?;
        let st = summary.streams.get_mut(&lane.stream).unwrap();
        st.written += 1;
        st.first_ts.get_or_insert(ts);
        st.last_ts = Some(ts);
    }
}

/// [`record`] into a file. The partial file is readable even when a
/// stream stalls.
pub fn record_to_path(sources: Vec<Box<dyn Source>>, header: Header, path: impl AsRef<Path>, opts: &RecordOptions) -> Result<RecordSummary, RecordFailure> {
    let file = File::create(path).map_err(|e| RecordFailure::new(e.into(), RecordSummary::default()))?;
    record(sources, header, BufWriter::new(file), opts).map(|(s, _)| s)
}

/// Replays one stream of an existing file as a source.
pub struct FileSource {
    stream: StreamId,
    samples: std::vec::IntoIter<Sample>,
}

impl FileSource {
    pub fn new(stream: StreamId, samples: Vec<Sample>) -> Self {
        Self {
            stream,
            samples: samples.into_iter(),
        }
    }

    /// One source per stream declared in the file.
    pub fn open_all(path: impl AsRef<Path>) -> Result<(Header, Vec<Box<dyn Source>>), SessionError> {
        let mut r = SessionReader::open(path)?;
        let header = r.header().clone();
        let all = r.samples()?;
        let mut out: Vec<Box<dyn Source>> = Vec::new();
        for info in &header.streams {
            let id = StreamId::from_u8(info.id)?;
            let samples = all.iter().filter(|s| s.stream == id).cloned().collect();
            out.push(Box::new(FileSource::new(id, samples)));
        }
        Ok((header, out))
    }
}

impl Source for FileSource {
    fn stream(&self) -> StreamId {
        self.stream
    }

    fn next_sample(&mut self) -> Option<(u64, Vec<u8>)> {
        self.samples.next().map(|s| (s.timestamp_ns, s.payload))
    }
}
