//! Binary RM-cell trace and its digest.

use sha2::{Digest, Sha256};

use crate::codec::{encode_cell, CellHeader, TraceRecord, WireFields};
use crate::model::{LinkId, RMCellFields};

/// Hashes every record; keeps the bytes only when asked to.
#[derive(Debug, Clone, Default)]
pub struct TraceSink {
    hasher: Sha256,
    bytes: Option<Vec<u8>>,
    pub records: u64,
}

impl TraceSink {
    pub fn new(keep_bytes: bool) -> Self {
        TraceSink {
            hasher: Sha256::new(),
            bytes: keep_bytes.then(Vec::new),
            records: 0,
        }
    }

    pub fn record(&mut self, time: f64, link: LinkId, rm: &RMCellFields, header: CellHeader) {
        let rec = TraceRecord {
            time_ns: (time * 1e9).round() as u64,
            link: link.0,
            cell: encode_cell(&WireFields::from_fields(rm), header),
        };
        let b = rec.to_bytes();
        self.hasher.update(b);
        if let Some(v) = &mut self.bytes {
            v.extend_from_slice(&b);
        }
        self.records += 1;
    }

    /// Hex SHA-256 of all records so far, and the raw bytes if kept.
    pub fn finish(self) -> (String, Option<Vec<u8>>) {
        (hex::encode(self.hasher.finalize()), self.bytes)
    }
}
