//! Binary spike rasters: a bit-packed `rows x steps` matrix of spike events
//! with the step duration and a tag saying what the rows mean.
//!
//! On disk a raster is a small JSON header followed by the raw little-endian
//! row words; a CSV debug export (one 0/1 row per line) is also provided.

use serde::{Deserialize, Serialize};
use std::io::{self, Read, Write};
use thiserror::Error;

const MAGIC: &[u8] = b"SPKR1\n";

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("rows have unequal lengths: row {row} has {len}, expected {expected}")]
    RaggedRows {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("entry at ({row}, {step}) is {value}, expected 0 or 1")]
    NonBinary { row: usize, step: usize, value: u8 },
    #[error("bad raster file: {0}")]
    BadFormat(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// What one raster row represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowMeaning {
    EncoderChannel,
    ReservoirNeuron,
}

/// Bit-packed binary spike matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeRaster {
    rows: usize,
    steps: usize,
    dt: f64,
    row_meaning: RowMeaning,
    /// Row-major words; each row occupies `words_per_row` u64s, LSB first.
    words: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dt: f64,
    rows: usize,
    steps: usize,
    row_meaning: RowMeaning,
}

impl SpikeRaster {
    pub fn zeros(rows: usize, steps: usize, dt: f64, row_meaning: RowMeaning) -> Self {
        let wpr = steps.div_ceil(64);
        Self {
            rows,
            steps,
            dt,
            row_meaning,
            words: vec![0; rows * wpr],
        }
    }

    /// Packs unpacked 0/1 rows. All rows must have equal length.
    pub fn from_rows(
        rows: &[Vec<u8>],
        dt: f64,
        row_meaning: RowMeaning,
    ) -> Result<Self, RasterError> {
        let steps = rows.first().map_or(0, Vec::len);
        let mut raster = Self::zeros(rows.len(), steps, dt, row_meaning);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != steps {
                return Err(RasterError::RaggedRows {
                    row: r,
                    len: row.len(),
                    expected: steps,
                });
            }
            for (t, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => raster.set(r, t, true),
                    _ => {
                        return Err(RasterError::NonBinary {
                            row: r,
                            step: t,
                            value: v,
                        })
                    }
                }
            }
        }
        Ok(raster)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn row_meaning(&self) -> RowMeaning {
        self.row_meaning
    }

    fn words_per_row(&self) -> usize {
        self.steps.div_ceil(64)
    }

    #[inline]
    pub fn get(&self, row: usize, step: usize) -> bool {
        let w = self.words[row * self.words_per_row() + step / 64];
        (w >> (step % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, step: usize, value: bool) {
        let wpr = self.words_per_row();
        let word = &mut self.words[row * wpr + step / 64];
        let bit = 1u64 << (step % 64);
        if value {
            *word |= bit;
        } else {
            *word &= !bit;
        }
    }

    /// Spike count of one row.
    pub fn row_count(&self, row: usize) -> u64 {
        let wpr = self.words_per_row();
        self.words[row * wpr..(row + 1) * wpr]
            .iter()
            .map(|w| w.count_ones() as u64)
            .sum()
    }

    /// Spike count of one row over the half-open step range `[start, end)`.
    pub fn count_range(&self, row: usize, start: usize, end: usize) -> u64 {
        debug_assert!(start <= end && end <= self.steps);
        let wpr = self.words_per_row();
        let base = row * wpr;
        let mut total = 0u64;
        let mut pos = start;
        while pos < end {
            let word_idx = pos / 64;
            let lo = pos % 64;
            let hi = ((word_idx + 1) * 64).min(end) - word_idx * 64;
            let mut mask = u64::MAX << lo;
            if hi < 64 {
                mask &= (1u64 << hi) - 1;
            }
            total += (self.words[base + word_idx] & mask).count_ones() as u64;
            pos = (word_idx + 1) * 64;
        }
        total
    }

    /// Total spike count.
    pub fn total_count(&self) -> u64 {
        (0..self.rows).map(|r| self.row_count(r)).sum()
    }

    /// One row unpacked to 0/1 bytes.
    pub fn row_bits(&self, row: usize) -> Vec<u8> {
        (0..self.steps)
            .map(|t| u8::from(self.get(row, t)))
            .collect()
    }

    /// Halves the time resolution by OR-merging adjacent step pairs
    /// (a spike in either step survives); `dt` doubles. Used to drive a
    /// neuron clock that is slower than the raster clock.
    pub fn downsample_pairs(&self) -> SpikeRaster {
        let new_steps = self.steps / 2;
        let mut out = SpikeRaster::zeros(self.rows, new_steps, self.dt * 2.0, self.row_meaning);
        for r in 0..self.rows {
            for t in 0..new_steps {
                if self.get(r, 2 * t) || self.get(r, 2 * t + 1) {
                    out.set(r, t, true);
                }
            }
        }
        out
    }

    // -- serialization -------------------------------------------------------

    /// Writes the compact binary form: magic, JSON header line, packed words.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), RasterError> {
        w.write_all(MAGIC)?;
        let header = Header {
            dt: self.dt,
            rows: self.rows,
            steps: self.steps,
            row_meaning: self.row_meaning,
        };
        let json = serde_json::to_string(&header).expect("header serializes");
        w.write_all(json.as_bytes())?;
        w.write_all(b"\n")?;
        for word in &self.words {
            w.write_all(&word.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, RasterError> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(RasterError::BadFormat("missing magic".into()));
        }
        let mut header_bytes = Vec::new();
        loop {
            let mut byte = [0u8; 1];
            r.read_exact(&mut byte)?;
            if byte[0] == b'\n' {
                break;
            }
            header_bytes.push(byte[0]);
            if header_bytes.len() > 4096 {
                return Err(RasterError::BadFormat("unterminated header".into()));
            }
        }
        let header: Header = serde_json::from_slice(&header_bytes)
            .map_err(|e| RasterError::BadFormat(format!("bad header: {e}")))?;
        let wpr = header.steps.div_ceil(64);
        let mut words = vec![0u64; header.rows * wpr];
        let mut buf = [0u8; 8];
        for word in &mut words {
            r.read_exact(&mut buf)?;
            *word = u64::from_le_bytes(buf);
        }
        Ok(Self {
            rows: header.rows,
            steps: header.steps,
            dt: header.dt,
            row_meaning: header.row_meaning,
            words,
        })
    }

    /// CSV debug export: one row per line, comma-separated 0/1 values.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), RasterError> {
        for r in 0..self.rows {
            let line: Vec<&str> = (0..self.steps)
                .map(|t| if self.get(r, t) { "1" } else { "0" })
                .collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}
