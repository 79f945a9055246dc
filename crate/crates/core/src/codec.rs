//! Bit-exact RM cell wire format.
//!
//! Rates travel as a 16-bit float (`nz`, 5-bit exponent, 9-bit mantissa, one reserved bit):
//!
//! ```text
//!  15  14      10 9            1  0
//! +--+----------+---------------+--+
//! |nz| exponent |   mantissa    |r |     value = nz * 2^e * (1 + m/512)
//! +--+----------+---------------+--+
//! ```
//!
//! The 48-byte payload of a 53-byte cell is protected by CRC-10
//! (x^10 + x^9 + x^5 + x^4 + x + 1, initial remainder 0, no final XOR) in the low ten bits of
//! payload bytes 46-47.

use std::fmt;

use thiserror::Error;

use crate::model::{Direction, RMCellFields, SourceId, VcId};

pub const CELL_LEN: usize = 53;
pub const HEADER_LEN: usize = 5;
pub const PAYLOAD_LEN: usize = 48;
pub const PROTOCOL_ID: u8 = 1;
/// Length of one binary trace record: timestamp, link id, cell.
pub const TRACE_RECORD_LEN: usize = 8 + 4 + CELL_LEN;

const CRC10_POLY: u16 = 0x633;

/// Largest representable rate, 2^31 * (1 + 511/512) cells/s.
pub const RATE_MAX: f64 = 2147483648.0 * (1.0 + 511.0 / 512.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RateField16(pub u16);

impl RateField16 {
    pub const ZERO: RateField16 = RateField16(0);

    pub fn nz(self) -> bool {
        self.0 & 0x8000 != 0
    }

    pub fn exponent(self) -> u8 {
        ((self.0 >> 10) & 0x1f) as u8
    }

    pub fn mantissa(self) -> u16 {
        (self.0 >> 1) & 0x1ff
    }

    pub fn from_parts(exponent: u8, mantissa: u16) -> Self {
        debug_assert!(exponent < 32 && mantissa < 512);
        RateField16(0x8000 | (u16::from(exponent) << 10) | (mantissa << 1))
    }
}

impl fmt::Display for RateField16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:04X}", self.0)
    }
}

/// Encodes a rate, rounding down to the nearest representable value.
///
/// Returns the field and whether the input had to be clamped (above [`RATE_MAX`], negative or
/// NaN).
pub fn encode_rate(rate: f64) -> (RateField16, bool) {
    if rate.is_nan() || rate < 0.0 {
        return (RateField16::ZERO, true);
    }
    if rate > RATE_MAX {
        return (RateField16::from_parts(31, 511), true);
    }
    if rate < 1.0 {
        return (RateField16::ZERO, false);
    }
    // floor(log2(rate)) read from the IEEE exponent; exact for normal doubles.
    let exponent = ((rate.to_bits() >> 52) & 0x7ff) as i32 - 1023;
    let scaled = rate / f64::powi(2.0, exponent);
    let mantissa = ((scaled - 1.0) * 512.0).floor() as u16;
    (RateField16::from_parts(exponent as u8, mantissa.min(511)), false)
}

pub fn decode_rate(field: RateField16) -> f64 {
    if !field.nz() {
        return 0.0;
    }
    f64::powi(2.0, i32::from(field.exponent())) * (1.0 + f64::from(field.mantissa()) / 512.0)
}

/// Round-down quantization through the 16-bit format.
pub fn quantize_rate(rate: f64) -> f64 {
    decode_rate(encode_rate(rate).0)
}

const fn crc10_table() -> [u16; 1024] {
    // TABLE[r] = (r * x^8) mod G for every 10-bit remainder r.
    let mut table = [0u16; 1024];
    let mut r = 0;
    while r < 1024 {
        let mut v = r as u16;
        let mut i = 0;
        while i < 8 {
            v <<= 1;
            if v & 0x400 != 0 {
                v ^= CRC10_POLY;
            }
            i += 1;
        }
        table[r] = v & 0x3ff;
        r += 1;
    }
    table
}

static CRC10_TABLE: [u16; 1024] = crc10_table();

/// Remainder of the byte sequence, read MSB first as a polynomial, modulo the CRC-10
/// generator. Zero for a payload carrying its own correct CRC.
pub fn crc10(bytes: &[u8]) -> u16 {
    bytes
        .iter()
        .fold(0u16, |r, &b| CRC10_TABLE[r as usize] ^ u16::from(b))
}

/// The 5 opaque header bytes (VPI/VCI/PTI/CLP/HEC) carried from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CellHeader(pub [u8; HEADER_LEN]);

impl CellHeader {
    /// Header for VPI 0 and the given VCI, with the RM-cell PTI (110).
    pub fn for_vci(vci: u16) -> Self {
        let pti = 0b110u8;
        CellHeader([
            0,
            (vci >> 12) as u8 & 0x0f,
            (vci >> 4) as u8,
            ((vci & 0x0f) as u8) << 4 | pti << 1,
            0,
        ])
    }
}

/// RM-cell fields representable on the wire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireFields {
    pub dir: Direction,
    pub bn: bool,
    pub ci: bool,
    pub ni: bool,
    pub ra: bool,
    pub er: f64,
    pub ccr: f64,
    pub mcr: f64,
    pub queue_len: u32,
    pub seq: u32,
}

impl WireFields {
    pub fn from_fields(f: &RMCellFields) -> Self {
        WireFields {
            dir: f.dir,
            bn: f.bn,
            ci: f.ci,
            ni: f.ni,
            ra: false,
            er: f.er,
            ccr: f.ccr,
            mcr: f.mcr,
            queue_len: 0,
            seq: f.seq,
        }
    }

    /// Attaches the simulation-only identity the wire format does not carry.
    pub fn into_fields(self, vc: VcId, origin: SourceId) -> RMCellFields {
        RMCellFields {
            dir: self.dir,
            bn: self.bn,
            ci: self.ci,
            ni: self.ni,
            er: self.er,
            ccr: self.ccr,
            mcr: self.mcr,
            vc,
            origin,
            seq: self.seq,
        }
    }

    /// Same fields with every rate replaced by its round-down quantization.
    pub fn quantized(mut self) -> Self {
        self.er = quantize_rate(self.er);
        self.ccr = quantize_rate(self.ccr);
        self.mcr = quantize_rate(self.mcr);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("short buffer: {0} bytes, expected {CELL_LEN}")]
    ShortBuffer(usize),
    #[error("bad protocol id {0}, expected {PROTOCOL_ID}")]
    BadProtocol(u8),
    #[error("CRC-10 mismatch: cell carries 0x{found:03X}, expected 0x{expected:03X}")]
    CrcMismatch { expected: u16, found: u16 },
    #[error("bad hex: {0}")]
    Hex(String),
}

pub fn encode_cell(fields: &WireFields, header: CellHeader) -> [u8; CELL_LEN] {
    let mut cell = [0u8; CELL_LEN];
    cell[..HEADER_LEN].copy_from_slice(&header.0);
    let p = &mut cell[HEADER_LEN..];
    p[0] = PROTOCOL_ID;
    p[1] = u8::from(fields.dir == Direction::Backward) << 7
        | u8::from(fields.bn) << 6
        | u8::from(fields.ci) << 5
        | u8::from(fields.ni) << 4
        | u8::from(fields.ra) << 3;
    p[2..4].copy_from_slice(&encode_rate(fields.er).0 .0.to_be_bytes());
    p[4..6].copy_from_slice(&encode_rate(fields.ccr).0 .0.to_be_bytes());
    p[6..8].copy_from_slice(&encode_rate(fields.mcr).0 .0.to_be_bytes());
    p[8..12].copy_from_slice(&fields.queue_len.to_be_bytes());
    p[12..16].copy_from_slice(&fields.seq.to_be_bytes());
    let crc = crc10(p);
    p[46] |= (crc >> 8) as u8 & 0x03;
    p[47] = crc as u8;
    cell
}

pub fn decode_cell(bytes: &[u8]) -> Result<(CellHeader, WireFields), CodecError> {
    if bytes.len() < CELL_LEN {
        return Err(CodecError::ShortBuffer(bytes.len()));
    }
    let mut header = [0u8; HEADER_LEN];
    header.copy_from_slice(&bytes[..HEADER_LEN]);
    let p = &bytes[HEADER_LEN..CELL_LEN];
    if p[0] != PROTOCOL_ID {
        return Err(CodecError::BadProtocol(p[0]));
    }
    if crc10(p) != 0 {
        let mut zeroed = [0u8; PAYLOAD_LEN];
        zeroed.copy_from_slice(p);
        zeroed[46] &= 0xfc;
        zeroed[47] = 0;
        return Err(CodecError::CrcMismatch {
            expected: crc10(&zeroed),
            found: u16::from(p[46] & 0x03) << 8 | u16::from(p[47]),
        });
    }
    let be16 = |i: usize| RateField16(u16::from_be_bytes([p[i], p[i + 1]]));
    let be32 = |i: usize| u32::from_be_bytes([p[i], p[i + 1], p[i + 2], p[i + 3]]);
    let fields = WireFields {
        dir: if p[1] & 0x80 != 0 {
            Direction::Backward
        } else {
            Direction::Forward
        },
        bn: p[1] & 0x40 != 0,
        ci: p[1] & 0x20 != 0,
        ni: p[1] & 0x10 != 0,
        ra: p[1] & 0x08 != 0,
        er: decode_rate(be16(2)),
        ccr: decode_rate(be16(4)),
        mcr: decode_rate(be16(6)),
        queue_len: be32(8),
        seq: be32(12),
    };
    Ok((CellHeader(header), fields))
}

/// `key: value` dump of a decoded cell; rates show the decoded value and the raw field.
pub fn dump_cell(header: &CellHeader, f: &WireFields) -> String {
    let rate = |r: f64| format!("{r:?} ({})", encode_rate(r).0);
    let dir = match f.dir {
        Direction::Forward => "forward",
        Direction::Backward => "backward",
    };
    format!(
        "header: {}\ndir: {dir}\nbn: {}\nci: {}\nni: {}\nra: {}\ner: {}\nccr: {}\nmcr: {}\nqueue_len: {}\nseq: {}\n",
        hex::encode(header.0),
        u8::from(f.bn),
        u8::from(f.ci),
        u8::from(f.ni),
        u8::from(f.ra),
        rate(f.er),
        rate(f.ccr),
        rate(f.mcr),
        f.queue_len,
        f.seq
    )
}

pub fn cell_to_hex(cell: &[u8]) -> String {
    hex::encode(cell)
}

pub fn cell_from_hex(text: &str) -> Result<Vec<u8>, CodecError> {
    let cleaned: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    hex::decode(cleaned).map_err(|e| CodecError::Hex(e.to_string()))
}

/// One binary trace record: little-endian nanosecond timestamp, little-endian link id, cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time_ns: u64,
    pub link: u32,
    pub cell: [u8; CELL_LEN],
}

impl TraceRecord {
    pub fn to_bytes(&self) -> [u8; TRACE_RECORD_LEN] {
        let mut out = [0u8; TRACE_RECORD_LEN];
        out[..8].copy_from_slice(&self.time_ns.to_le_bytes());
        out[8..12].copy_from_slice(&self.link.to_le_bytes());
        out[12..].copy_from_slice(&self.cell);
        out
    }

    /// Splits a trace file into records; a trailing partial record is an error.
    pub fn parse_all(bytes: &[u8]) -> Result<Vec<TraceRecord>, CodecError> {
        if bytes.len() % TRACE_RECORD_LEN != 0 {
            return Err(CodecError::ShortBuffer(bytes.len() % TRACE_RECORD_LEN));
        }
        Ok(bytes
            .chunks_exact(TRACE_RECORD_LEN)
            .map(|c| {
                let mut cell = [0u8; CELL_LEN];
                cell.copy_from_slice(&c[12..]);
                TraceRecord {
                    time_ns: u64::from_le_bytes(c[..8].try_into().unwrap()),
                    link: u32::from_le_bytes(c[8..12].try_into().unwrap()),
                    cell,
                }
            })
            .collect())
    }
}
