//! Encoder bus framing.
//!
//! Every frame is six bytes:
//!
//! ```text
//! byte 0  0xAA sync
//! byte 1  joint id
//! byte 2  count bits 0-7
//! byte 3  count bits 8-11 in the low nibble, high nibble zero
//! byte 4  rolling sequence number
//! byte 5  CRC-8 (poly 0x07, init 0x00, no reflection, no final xor)
//!         over bytes 0-4
//! ```
//!
//! The scanner looks for the sync byte, accepts a candidate only when the
//! CRC matches and the count fits 12 bits, and otherwise advances one byte.

use super::SessionError;

pub const SYNC: u8 = 0xAA;
pub const FRAME_LEN: usize = 6;

const CRC8_TABLE: [u8; 256] = {
    let mut table = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u8;
        let mut b = 0;
        while b < 8 {
            c = if c & 0x80 != 0 { (c << 1) ^ 0x07 } else { c << 1 };
            b += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
};

pub fn crc8(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0, |crc, &b| CRC8_TABLE[(crc ^ b) as usize])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EncoderFrame {
    pub joint: u8,
    pub count: u16,
    pub seq: u8,
    pub crc: u8,
}

impl EncoderFrame {
    pub fn new(joint: u8, count: u16, seq: u8) -> Result<Self, SessionError> {
        if count >= 4096 {
            return Err(SessionError::CountOutOfRange(count));
        }
        let [lo, hi] = count.to_le_bytes();
        Ok(Self {
            joint,
            count,
            seq,
            crc: crc8(&[SYNC, joint, lo, hi, seq]),
        })
    }

    pub fn to_bytes(&self) -> [u8; FRAME_LEN] {
        let [lo, hi] = self.count.to_le_bytes();
        [SYNC, self.joint, lo, hi, self.seq, self.crc]
    }

    /// Checks one candidate. `Err(true)` is a CRC failure, `Err(false)` a
    /// frame with a valid CRC but an out-of-range count.
    fn check(b: &[u8]) -> Result<Self, bool> {
        if crc8(&b[..5]) != b[5] {
            return Err(true);
        }
        if b[3] & 0xF0 != 0 {
            return Err(false);
        }
        Ok(Self {
            joint: b[1],
            count: u16::from_le_bytes([b[2], b[3]]),
            seq: b[4],
            crc: b[5],
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseDiagnostics {
    /// Runs of discarded bytes between accepted frames.
    pub resyncs: u64,
    pub crc_failures: u64,
    /// Frames with a valid CRC but a count of 4096 or more.
    pub bad_counts: u64,
    pub discarded_bytes: u64,
}

/// Incremental scanner. Feed arbitrary slices with [`push`](Self::push);
/// the result does not depend on how the input is split.
#[derive(Debug, Default)]
pub struct WireParser {
    pending: Vec<u8>,
    discarding: bool,
    diag: ParseDiagnostics,
}

impl WireParser {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn diagnostics(&self) -> ParseDiagnostics {
        self.diag
    }

    /// Bytes held back because they may start a frame.
    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    fn discard(&mut self) {
        if !self.discarding {
            self.discarding = true;
            self.diag.resyncs += 1;
        }
        self.diag.discarded_bytes += 1;
    }

    pub fn push(&mut self, bytes: &[u8], out: &mut Vec<EncoderFrame>) {
        self.pending.extend_from_slice(bytes);
        let buf = std::mem::take(&mut self.pending);
        let mut i = 0;
        while i < buf.len() {
            if buf[i] != SYNC {
                // Jump straight to the next sync byte.
                let skip = buf[i..].iter().position(|&b| b == SYNC).unwrap_or(buf.len() - i);
                for _ in 0..skip {
                    self.discard();
                }
                i += skip;
                continue;
            }
            if buf.len() - i < FRAME_LEN {
                break;
            }
            match EncoderFrame::check(&buf[i..i + FRAME_LEN]) {
                Ok(frame) => {
                    out.push(frame);
                    self.discarding = false;
                    i += FRAME_LEN;
                }
                Err(crc) => {
                    if crc {
                        self.diag.crc_failures += 1;
                    } else {
                        self.diag.bad_counts += 1;
                    }
                    self.discard();
                    i += 1;
                }
            }
        }
        self.pending = buf[i..].to_vec();
    }
}

/// One-shot scan of a complete buffer. A trailing partial frame is ignored.
pub fn parse_encoder_frames(bytes: &[u8]) -> (Vec<EncoderFrame>, ParseDiagnostics) {
    let mut p = WireParser::new();
    let mut frames = Vec::with_capacity(bytes.len() / FRAME_LEN);
    p.push(bytes, &mut frames);
    (frames, p.diagnostics())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc8_check_value() {
        assert_eq!(crc8(b"123456789"), 0xF4);
    }

    fn three() -> Vec<u8> {
        [(1, 100, 7), (2, 4095, 8), (3, 0, 9)]
            .iter()
            .flat_map(|&(j, c, s)| EncoderFrame::new(j, c, s).unwrap().to_bytes())
            .collect()
    }

    #[test]
    fn clean_buffer() {
        let (frames, d) = parse_encoder_frames(&three());
        assert_eq!(frames.len(), 3);
        assert_eq!(frames[1].count, 4095);
        assert_eq!(d, ParseDiagnostics::default());
    }

    #[test]
    fn flipped_payload_bit() {
        let mut buf = three();
        buf[FRAME_LEN + 2] ^= 0x10;
        let (frames, d) = parse_encoder_frames(&buf);
        assert_eq!(frames.len(), 2);
        assert_eq!(d.crc_failures, 1);
        assert_eq!(d.resyncs, 1);
    }

    #[test]
    fn split_input_matches_one_shot() {
        let mut buf = vec![0x13, SYNC, 0x00];
        buf.extend(three());
        buf.push(SYNC);
        let (whole, dw) = parse_encoder_frames(&buf);
        for split in 0..buf.len() {
            let mut p = WireParser::new();
            let mut out = Vec::new();
            p.push(&buf[..split], &mut out);
            p.push(&buf[split..], &mut out);
            assert_eq!(out, whole);
            assert_eq!(p.diagnostics(), dw);
        }
    }

    #[test]
    fn rejects_wide_count() {
        assert!(matches!(EncoderFrame::new(0, 4096, 0), Err(SessionError::CountOutOfRange(4096))));
        let mut b = [SYNC, 0, 0, 0x10, 0, 0];
        b[5] = crc8(&b[..5]);
        let (frames, d) = parse_encoder_frames(&b);
        assert!(frames.is_empty());
        assert_eq!(d.bad_counts, 1);
    }
}
