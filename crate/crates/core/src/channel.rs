//! SIMO uplink synthesis: Y = h s^T + j w^T + N.
//!
//! Draws Rayleigh channels, QPSK pilot/data symbols, one of four jammer
//! waveforms, and noise. The receive jammer-to-signal ratio rho and the
//! per-antenna SNR are calibrated exactly per block: w is rescaled so the
//! realized ||j w^T||_F^2 / ||h s^T||_F^2 hits the target, and N0 is set
//! from the realized ||h||^2 so SNR = ||h||^2 / (B N0) holds by
//! construction.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::linalg::{norm_sqr, C64, CMat};
use crate::prng::Xorshift64;
use crate::{Error, Result};

/// System dimensions. `B` antennas, `K` channel uses per coherence block,
/// `T` pilots; the data length is `K - T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDims {
    pub antennas: usize,
    pub block_len: usize,
    pub pilots: usize,
}

impl Default for SystemDims {
    fn default() -> Self {
        Self { antennas: 8, block_len: 32, pilots: 4 }
    }
}

impl SystemDims {
    pub fn data_len(&self) -> usize {
        self.block_len - self.pilots
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 || self.block_len == 0 || self.pilots == 0 {
            return Err(Error::InvalidConfig("dimensions must be nonzero".into()));
        }
        if self.pilots >= self.block_len {
            return Err(Error::InvalidConfig(format!(
                "pilots ({}) must leave room for data in the block ({})",
                self.pilots, self.block_len
            )));
        }
        Ok(())
    }
}

/// Jammer activity pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JammerKind {
    /// Interferes over the whole block.
    Barrage,
    /// Transmits only during the data phase.
    SmartData,
    /// Transmits only during the pilot phase.
    SmartPilot,
    /// Transmits on a few uniformly chosen symbol slots.
    Sparse,
}

impl JammerKind {
    pub const ALL: [JammerKind; 4] =
        [JammerKind::Barrage, JammerKind::SmartData, JammerKind::SmartPilot, JammerKind::Sparse];

    pub fn name(&self) -> &'static str {
        match self {
            JammerKind::Barrage => "barrage",
            JammerKind::SmartData => "smart_data",
            JammerKind::SmartPilot => "smart_pilot",
            JammerKind::Sparse => "sparse",
        }
    }
}

fn default_sparse_count() -> usize {
    4
}

/// Jammer type plus target receive jammer-to-signal ratio in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JammerSpec {
    pub kind: JammerKind,
    pub rho_db: f64,
    #[serde(default = "default_sparse_count")]
    pub sparse_count: usize,
}

impl JammerSpec {
    pub fn new(kind: JammerKind, rho_db: f64) -> Self {
        Self { kind, rho_db, sparse_count: default_sparse_count() }
    }

    pub fn validate(&self, dims: &SystemDims) -> Result<()> {
        if self.rho_db.is_nan() || self.rho_db == f64::INFINITY {
            return Err(Error::InvalidConfig("rho_db must be finite or -inf".into()));
        }
        if self.sparse_count == 0 || self.sparse_count > dims.block_len {
            return Err(Error::InvalidConfig(format!(
                "sparse_count {} outside 1..={}",
                self.sparse_count, dims.block_len
            )));
        }
        Ok(())
    }
}

/// Transmit vector: pilot prefix followed by QPSK data symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolVector {
    pub entries: Vec<C64>,
    pub pilot_len: usize,
}

impl SymbolVector {
    pub fn pilots(&self) -> &[C64] {
        &self.entries[..self.pilot_len]
    }

    pub fn data(&self) -> &[C64] {
        &self.entries[self.pilot_len..]
    }
}

/// Ground truth behind one synthesized block.
#[derive(Debug, Clone)]
pub struct BlockTruth {
    pub h: Vec<C64>,
    pub j: Vec<C64>,
    pub s: SymbolVector,
    pub w: Vec<C64>,
    pub n0: f64,
}

/// One received coherence block plus its ground truth.
#[derive(Debug, Clone)]
pub struct ReceiveBlock {
    pub y: CMat,
    pub truth: BlockTruth,
}

/// The fixed deterministic pilot sequence: every pilot is (1 + 1i)/sqrt(2).
pub fn pilot_sequence(dims: &SystemDims) -> Vec<C64> {
    vec![C64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2); dims.pilots]
}

/// `n` i.i.d. CN(0, 1) entries (unit variance per complex entry).
pub fn draw_rayleigh(rng: &mut Xorshift64, n: usize) -> Vec<C64> {
    (0..n).map(|_| rng.next_cn01()).collect()
}

/// Pilot prefix plus uniformly drawn QPSK data symbols, all unit modulus.
/// Consumes one PRNG step per data symbol.
pub fn draw_symbols(rng: &mut Xorshift64, dims: &SystemDims) -> SymbolVector {
    let mut entries = pilot_sequence(dims);
    entries.reserve(dims.data_len());
    for _ in 0..dims.data_len() {
        let w = rng.next_u64();
        let re = if w & 1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
        let im = if w & 2 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
        entries.push(C64::new(re, im));
    }
    SymbolVector { entries, pilot_len: dims.pilots }
}

/// Unscaled jammer transmit signal with the kind's activity pattern.
pub fn draw_jammer_signal(rng: &mut Xorshift64, spec: &JammerSpec, dims: &SystemDims) -> Vec<C64> {
    let k = dims.block_len;
    let t = dims.pilots;
    let mut w = vec![C64::new(0.0, 0.0); k];
    match spec.kind {
        JammerKind::Barrage => {
            for x in w.iter_mut() {
                *x = rng.next_cn01();
            }
        }
        JammerKind::SmartData => {
            for x in w.iter_mut().skip(t) {
                *x = rng.next_cn01();
            }
        }
        JammerKind::SmartPilot => {
            for x in w.iter_mut().take(t) {
                *x = rng.next_cn01();
            }
        }
        JammerKind::Sparse => {
            // Partial Fisher-Yates over slot indices.
            let mut slots: Vec<usize> = (0..k).collect();
            for i in 0..spec.sparse_count {
                let pick = i + (rng.next_u64() % (k - i) as u64) as usize;
                slots.swap(i, pick);
            }
            for &slot in &slots[..spec.sparse_count] {
                w[slot] = rng.next_cn01();
            }
        }
    }
    w
}

/// Synthesize one block with exact per-block rho and SNR calibration.
///
/// `rho_db = -inf` disables the jammer (w = 0); `snr_db = +inf` disables
/// noise (N0 = 0).
pub fn synthesize_block(
    rng: &mut Xorshift64,
    dims: &SystemDims,
    jammer: &JammerSpec,
    snr_db: f64,
) -> ReceiveBlock {
    let b = dims.antennas;
    let k = dims.block_len;

    let h = draw_rayleigh(rng, b);
    let j = draw_rayleigh(rng, b);
    let s = draw_symbols(rng, dims);

    let mut w = draw_jammer_signal(rng, jammer, dims);
    // A zero draw has probability zero but would break the calibration.
    while norm_sqr(&w) == 0.0 && jammer.rho_db > f64::NEG_INFINITY {
        w = draw_jammer_signal(rng, jammer, dims);
    }

    // ||h s^T||_F^2 = ||h||^2 ||s||^2 for the rank-one product.
    let signal_power = norm_sqr(&h) * norm_sqr(&s.entries);
    if jammer.rho_db == f64::NEG_INFINITY {
        w.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
    } else {
        let rho = 10f64.powf(jammer.rho_db / 10.0);
        let scale = (rho * signal_power / (norm_sqr(&j) * norm_sqr(&w))).sqrt();
        w.iter_mut().for_each(|x| *x *= scale);
    }

    let n0 = if snr_db == f64::INFINITY {
        0.0
    } else {
        norm_sqr(&h) / (b as f64 * 10f64.powf(snr_db / 10.0))
    };
    let noise_amp = n0.sqrt();

    let mut y = CMat::zeros(b, k);
    for r in 0..b {
        for c in 0..k {
            let noise = if n0 > 0.0 {
                rng.next_cn01() * noise_amp
            } else {
                C64::new(0.0, 0.0)
            };
            y.set(r, c, h[r] * s.entries[c] + j[r] * w[c] + noise);
        }
    }

    ReceiveBlock { y, truth: BlockTruth { h, j, s, w, n0 } }
}
