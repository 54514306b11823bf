//! Wire encodings for quantized vectors and channel accounting.
//!
//! Unary layout, per coordinate, most significant bit first:
//!
//! ```text
//! 0 s 0 1 1 ... 1
//!   |   `-- |q| ones
//!   `------ sign: 1 for q >= 0, 0 for q < 0
//! ```
//!
//! so `-3` is `000111` and `5` is `01011111`. The fixed layout writes every
//! coordinate as a sign-magnitude field of `1 + ⌈log₂(l/2 + 1)⌉` bits with
//! sign `1` meaning negative.

use std::fmt::Write as _;

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CodecError;
use crate::quant::QuantizedVector;

pub type Bits = BitVec<u8, Msb0>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Uplink,
    Downlink,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Uplink => "uplink",
            Direction::Downlink => "downlink",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Unary,
    Fixed,
    /// Single-bit continue/terminate signal.
    Control,
}

impl Encoding {
    pub fn as_str(&self) -> &'static str {
        match self {
            Encoding::Unary => "unary",
            Encoding::Fixed => "fixed",
            Encoding::Control => "control",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMessage {
    pub bits: Bits,
    pub direction: Direction,
    pub epoch: u32,
    pub encoding: Encoding,
}

impl BitMessage {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// One-bit control message: `1` terminates, `0` continues.
    pub fn control(terminate: bool, epoch: u32) -> Self {
        let mut bits = Bits::with_capacity(1);
        bits.push(terminate);
        Self { bits, direction: Direction::Downlink, epoch, encoding: Encoding::Control }
    }

    pub fn bit_string(&self) -> String {
        self.bits.iter().map(|b| if *b { '1' } else { '0' }).collect()
    }

    /// Header-annotated hex dump. The payload is packed most significant bit
    /// first and zero padded to a whole byte.
    pub fn hex_dump(&self) -> String {
        let mut out = format!(
            "{} epoch={} encoding={} bits={}\n",
            self.direction.as_str(),
            self.epoch,
            self.encoding.as_str(),
            self.len()
        );
        let bytes = self.bits.as_raw_slice();
        for (row, chunk) in bytes.chunks(16).enumerate() {
            let _ = write!(out, "{:04x}:", row * 16);
            for b in chunk {
                let _ = write!(out, " {b:02x}");
            }
            out.push('\n');
        }
        if self.encoding == Encoding::Unary {
            out.push_str("fields:");
            for field in unary_fields(&self.bits) {
                out.push(' ');
                out.push_str(&field);
            }
            out.push('\n');
        }
        out
    }
}

/// Splits a unary stream into `hdr|body` strings for annotation; anything
/// unparseable is emitted as a trailing raw field.
fn unary_fields(bits: &BitSlice<u8, Msb0>) -> Vec<String> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while pos + 3 <= bits.len() && !bits[pos] && !bits[pos + 2] {
        let mut field = String::new();
        for b in &bits[pos..pos + 3] {
            field.push(if *b { '1' } else { '0' });
        }
        field.push('|');
        pos += 3;
        while pos < bits.len() && bits[pos] {
            field.push('1');
            pos += 1;
        }
        fields.push(field);
    }
    if pos < bits.len() {
        fields.push(bits[pos..].iter().map(|b| if *b { '1' } else { '0' }).collect());
    }
    fields
}

/// Unary length of an index vector: `3p + Σ|q_i|`.
pub fn unary_len(indices: &[i64]) -> usize {
    3 * indices.len() + indices.iter().map(|q| q.unsigned_abs() as usize).sum::<usize>()
}

/// Worst-case unary length for a `p`-vector of norm at most `radius`
/// quantized at per-coordinate resolution `eps`: `p(3 + 2(r/ε + 1))`.
pub fn unary_len_bound(p: usize, radius: f64, eps: f64) -> f64 {
    p as f64 * (3.0 + 2.0 * (radius / eps + 1.0))
}

pub fn encode_unary(q: &QuantizedVector, direction: Direction, epoch: u32) -> BitMessage {
    let mut bits = Bits::with_capacity(unary_len(q.indices()));
    for &v in q.indices() {
        bits.push(false);
        bits.push(v >= 0);
        bits.push(false);
        for _ in 0..v.unsigned_abs() {
            bits.push(true);
        }
    }
    BitMessage { bits, direction, epoch, encoding: Encoding::Unary }
}

pub fn decode_unary(msg: &BitMessage, p: usize) -> Result<Vec<i64>, CodecError> {
    if msg.encoding != Encoding::Unary {
        return Err(CodecError::WrongEncoding { expected: "unary", found: msg.encoding.as_str() });
    }
    let bits = &msg.bits;
    let mut out = Vec::with_capacity(p);
    let mut pos = 0;
    for coordinate in 0..p {
        if pos + 3 > bits.len() {
            return Err(CodecError::Truncated { coordinate });
        }
        if bits[pos] {
            return Err(CodecError::MalformedHeader { coordinate, offset: pos });
        }
        if bits[pos + 2] {
            return Err(CodecError::MalformedHeader { coordinate, offset: pos + 2 });
        }
        let positive = bits[pos + 1];
        pos += 3;
        let mut magnitude: i64 = 0;
        while pos < bits.len() && bits[pos] {
            magnitude += 1;
            pos += 1;
        }
        out.push(if positive { magnitude } else { -magnitude });
    }
    if pos != bits.len() {
        return Err(CodecError::TrailingBits(bits.len() - pos));
    }
    Ok(out)
}

/// Field width of the fixed encoding for a grid with `half_levels = l/2`.
pub fn fixed_width(half_levels: i64) -> usize {
    let h = half_levels.max(1) as u64;
    1 + (64 - h.leading_zeros()) as usize
}

pub fn encode_fixed(q: &QuantizedVector, direction: Direction, epoch: u32) -> BitMessage {
    let width = fixed_width(q.grid().half_levels());
    let mag_bits = width - 1;
    let mut bits = Bits::with_capacity(width * q.dim());
    for &v in q.indices() {
        bits.push(v < 0);
        let m = v.unsigned_abs();
        for shift in (0..mag_bits).rev() {
            bits.push((m >> shift) & 1 == 1);
        }
    }
    BitMessage { bits, direction, epoch, encoding: Encoding::Fixed }
}

pub fn decode_fixed(msg: &BitMessage, p: usize, half_levels: i64) -> Result<Vec<i64>, CodecError> {
    if msg.encoding != Encoding::Fixed {
        return Err(CodecError::WrongEncoding { expected: "fixed", found: msg.encoding.as_str() });
    }
    let width = fixed_width(half_levels);
    let limit = half_levels.max(1) as u64;
    let bits = &msg.bits;
    let mut out = Vec::with_capacity(p);
    for coordinate in 0..p {
        let start = coordinate * width;
        if start + width > bits.len() {
            return Err(CodecError::Truncated { coordinate });
        }
        let field = &bits[start..start + width];
        let negative = field[0];
        let magnitude = field[1..].iter().fold(0u64, |acc, b| (acc << 1) | *b as u64);
        if magnitude > limit {
            return Err(CodecError::MagnitudeOverflow { coordinate, magnitude, limit });
        }
        if negative && magnitude == 0 {
            return Err(CodecError::NegativeZero { coordinate });
        }
        let m = magnitude as i64;
        out.push(if negative { -m } else { m });
    }
    if p * width != bits.len() {
        return Err(CodecError::TrailingBits(bits.len().saturating_sub(p * width)));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub epoch: u32,
    pub direction: Direction,
    pub bits: u64,
    pub uses: u64,
}

/// Per-direction bit and channel-use counters.
///
/// Capacity is pure accounting: a message of `n` bits costs `⌈n/R⌉` channel
/// uses and is never altered or delayed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelLedger {
    capacity: u64,
    pub uplink_bits: u64,
    pub downlink_bits: u64,
    pub uplink_uses: u64,
    pub downlink_uses: u64,
    log: Vec<LedgerEntry>,
}

impl ChannelLedger {
    /// # Panics
    /// If `capacity` is zero.
    pub fn new(capacity: u64) -> Self {
        assert!(capacity >= 1, "channel capacity must be at least one bit per use");
        Self { capacity, uplink_bits: 0, downlink_bits: 0, uplink_uses: 0, downlink_uses: 0, log: Vec::new() }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn log(&self) -> &[LedgerEntry] {
        &self.log
    }

    pub fn transmit(&mut self, msg: &BitMessage) {
        self.record(msg.direction, msg.epoch, msg.len() as u64);
    }

    pub fn record(&mut self, direction: Direction, epoch: u32, bits: u64) {
        let uses = bits.div_ceil(self.capacity);
        match direction {
            Direction::Uplink => {
                self.uplink_bits += bits;
                self.uplink_uses += uses;
            }
            Direction::Downlink => {
                self.downlink_bits += bits;
                self.downlink_uses += uses;
            }
        }
        self.log.push(LedgerEntry { epoch, direction, bits, uses });
    }

    /// Rebuilds counters from a log.
    pub fn replay(capacity: u64, log: &[LedgerEntry]) -> Self {
        let mut ledger = Self::new(capacity);
        for e in log {
            ledger.record(e.direction, e.epoch, e.bits);
        }
        ledger
    }
}
