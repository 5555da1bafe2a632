//! Cycle-accurate emulator of the 32-PE array (4 slices of 8 PEs).
//!
//! The array executes the rearranged fixed-point iteration through
//! Cannon's algorithm: for a forward matrix-vector product the operand
//! entries rotate around each slice's ring while partial products
//! accumulate in place; the Hermitian variant rotates the accumulators
//! instead, reading each stored row in the same order and avoiding a
//! transposed copy. Row ownership is static — the jth PE of the ith slice
//! holds the jth row of the ith 8x8 tile for the whole detection — and
//! every access is checked against it. Rotation closure (every register
//! back at its owner after 8 rounds) is asserted each pass.
//!
//! The per-iteration phase timeline is data, not code: a JSON table lists
//! the phases in order with their cycle budgets, and the engine checks
//! each budget against the phase's intrinsic micro-schedule. Arithmetic
//! goes through the same quantization joints as [`crate::maed_fx`], so a
//! full run is bit-identical to `run_maed_fx` state for state.

use serde::{Deserialize, Serialize};

use crate::linalg::C64;
use crate::maed_fx::{
    compute_alpha, compute_z, prox_entry, pseudonormalize, quantize_block, recip_j_norm,
    recip_s_norm, seed_vector_fx, FxEngine, FxMat, FxProfile, FxState, ProxConstants, SignalFormat,
};
use crate::maed_ref::{slice_qpsk, StepSchedule};
use crate::numerics::{FixedComplex, FixedScalar, WideComplexAcc};
use crate::prng::Xorshift64;
use crate::{Error, Result};

pub const SLICES: usize = 4;
pub const PES_PER_SLICE: usize = 8;
pub const ANTENNAS: usize = PES_PER_SLICE;
pub const BLOCK_LEN: usize = SLICES * PES_PER_SLICE;

/// Load/readout overhead per block, calibrated so a 10-iteration block at
/// 1.492 GHz sustains 100 Mb/s (10 * 83 + 5 = 835 cycles for 56 bits).
pub const DEFAULT_OVERHEAD_CYCLES: u64 = 5;

/// Sustained bits per second for QPSK (2 bits per data symbol).
pub fn throughput_bps(
    f_clk_hz: f64,
    iteration_cycles: u32,
    t_max: usize,
    data_symbols: usize,
    overhead_cycles: u64,
) -> f64 {
    let cycles_per_block = t_max as f64 * iteration_cycles as f64 + overhead_cycles as f64;
    f_clk_hz * (2.0 * data_symbols as f64) / cycles_per_block
}

/// One phase of the iteration timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    NormSTree,
    LutRecipS,
    MvYS,
    ScaleX,
    RowScale,
    PrngDraw,
    HmvEU,
    MvEV,
    Pseudonorm,
    InnerJj,
    RecipJ,
    ShiftX,
    InnerJx,
    AlphaZTau,
    HmvETauz,
    GradProx,
}

impl PhaseKind {
    const ALL: [PhaseKind; 16] = [
        PhaseKind::NormSTree,
        PhaseKind::LutRecipS,
        PhaseKind::MvYS,
        PhaseKind::ScaleX,
        PhaseKind::RowScale,
        PhaseKind::PrngDraw,
        PhaseKind::HmvEU,
        PhaseKind::MvEV,
        PhaseKind::Pseudonorm,
        PhaseKind::InnerJj,
        PhaseKind::RecipJ,
        PhaseKind::ShiftX,
        PhaseKind::InnerJx,
        PhaseKind::AlphaZTau,
        PhaseKind::HmvETauz,
        PhaseKind::GradProx,
    ];

    /// Intrinsic cycle cost of the phase's micro-schedule.
    pub fn intrinsic_cycles(self) -> u32 {
        match self {
            // 1 multiply + 5 pipelined adder-tree stages over 32 PEs.
            PhaseKind::NormSTree => 6,
            // 1 operand load + 8 rotation rounds + 2 cross-slice
            // reduction steps + 2 drain.
            PhaseKind::MvYS | PhaseKind::MvEV => 13,
            // 1 load + 8 rounds + 1 writeback; outputs stay in-slice.
            PhaseKind::HmvEU | PhaseKind::HmvETauz => 10,
            // 2 load (x from the FF array, s segment) + 8 rounds + 2 drain.
            PhaseKind::RowScale => 12,
            // 1 multiply + 3 tree stages + 1 writeback on one slice.
            PhaseKind::InnerJj | PhaseKind::InnerJx => 5,
            PhaseKind::AlphaZTau => 2,
            PhaseKind::LutRecipS
            | PhaseKind::ScaleX
            | PhaseKind::PrngDraw
            | PhaseKind::Pseudonorm
            | PhaseKind::RecipJ
            | PhaseKind::ShiftX
            | PhaseKind::GradProx => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub name: String,
    pub kind: PhaseKind,
    pub cycles: u32,
}

/// The iteration timeline, loaded from a JSON asset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleTable {
    #[serde(default)]
    pub comment: String,
    pub phases: Vec<PhaseSpec>,
}

impl ScheduleTable {
    /// The shipped timeline (83 cycles per iteration).
    pub fn bundled() -> Self {
        let table: ScheduleTable = serde_json::from_str(include_str!("../assets/pe_schedule.json"))
            .expect("bundled schedule asset parses");
        table.validate().expect("bundled schedule asset is valid");
        table
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: ScheduleTable = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("schedule table: {e}")))?;
        table.validate()?;
        Ok(table)
    }

    /// Each phase must appear exactly once with its intrinsic cycle cost;
    /// anything else cannot fit the array.
    pub fn validate(&self) -> Result<()> {
        for kind in PhaseKind::ALL {
            let found: Vec<&PhaseSpec> = self.phases.iter().filter(|p| p.kind == kind).collect();
            if found.len() != 1 {
                return Err(Error::InvalidConfig(format!(
                    "schedule table must contain {kind:?} exactly once, found {}",
                    found.len()
                )));
            }
            if found[0].cycles != kind.intrinsic_cycles() {
                return Err(Error::InvalidConfig(format!(
                    "schedule overrun: {kind:?} budgeted {} cycles but needs {}",
                    found[0].cycles,
                    kind.intrinsic_cycles()
                )));
            }
        }
        Ok(())
    }

    pub fn iteration_cycles(&self) -> u32 {
        self.phases.iter().map(|p| p.cycles).sum()
    }

    pub fn cycles_of(&self, kind: PhaseKind) -> u32 {
        self.phases.iter().find(|p| p.kind == kind).map(|p| p.cycles).unwrap_or(0)
    }
}

/// Per-phase and per-iteration clock-cycle tally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleReport {
    pub mv_8x32: u32,
    pub hermitian_mv: u32,
    pub row_scale: u32,
    pub inner8: u32,
    pub iteration_total: u32,
    pub block_total: u64,
}

/// Which stored tile set a forward pass reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TileSel {
    Y,
    E,
}

/// Row storage with static ownership: entry (slice, pe) may only be
/// touched by PE (slice, pe).
#[derive(Debug, Clone)]
struct RowStore {
    rows: [[[FixedComplex; PES_PER_SLICE]; PES_PER_SLICE]; SLICES],
}

impl RowStore {
    fn filled(v: FixedComplex) -> Self {
        Self { rows: [[[v; PES_PER_SLICE]; PES_PER_SLICE]; SLICES] }
    }

    fn read(&self, slice: usize, pe: usize, col: usize, reader: (usize, usize)) -> FixedComplex {
        assert_eq!((slice, pe), reader, "PE {reader:?} read a row it does not own");
        self.rows[slice][pe][col]
    }

    fn write(
        &mut self,
        slice: usize,
        pe: usize,
        col: usize,
        v: FixedComplex,
        writer: (usize, usize),
    ) {
        assert_eq!((slice, pe), writer, "PE {writer:?} wrote a row it does not own");
        self.rows[slice][pe][col] = v;
    }
}

/// An exchange register traveling the ring, tagged with its home index.
#[derive(Debug, Clone, Copy)]
struct TaggedValue {
    tag: usize,
    value: FixedComplex,
}

struct TaggedAcc {
    tag: usize,
    acc: WideComplexAcc,
}

/// Per-iteration pipeline registers between phases.
#[derive(Default)]
struct IterRegs {
    ns: Option<FixedScalar>,
    r_s: Option<FixedScalar>,
    mv_out: Option<Vec<FixedComplex>>,
    x: Option<Vec<FixedComplex>>,
    u: Option<Vec<FixedComplex>>,
    v: Option<Vec<FixedComplex>>,
    j_raw: Option<Vec<FixedComplex>>,
    j_scaled: Option<Vec<FixedComplex>>,
    j_shift: Option<i32>,
    degenerate: bool,
    nj: Option<FixedScalar>,
    recip_j: Option<(FixedScalar, i32)>,
    x_shifted: Option<Vec<FixedComplex>>,
    jx: Option<FixedComplex>,
    alpha: Option<FixedComplex>,
    z: Option<Vec<FixedComplex>>,
    z_tau: Option<Vec<FixedComplex>>,
    update: Option<Vec<FixedComplex>>,
}

fn missing(what: &'static str) -> Error {
    Error::InvalidConfig(format!("schedule ordering leaves {what} unavailable"))
}

/// The emulated array: static row tiles, the shared x and s~ flip-flop
/// arrays, the free-running PRNG, and the cycle counter.
pub struct PeArray {
    profile: FxProfile,
    engine: FxEngine,
    table: ScheduleTable,
    prox_k: ProxConstants,
    pilot_len: usize,
    tiles_y: RowStore,
    tiles_e: RowStore,
    x_ff: [FixedComplex; ANTENNAS],
    s_ff: [FixedComplex; BLOCK_LEN],
    prng: Xorshift64,
    cycle_counter: u64,
    overhead_cycles: u64,
}

impl PeArray {
    /// Load a quantized 8x32 block into the tiles. Ownership is fixed from
    /// here on: PE j of slice i holds row j of columns 8i..8i+8.
    pub fn load(
        y_q: &FxMat,
        pilots: &[C64],
        profile: FxProfile,
        table: ScheduleTable,
        prng: Xorshift64,
        overhead_cycles: u64,
    ) -> Result<Self> {
        if y_q.rows() != ANTENNAS || y_q.cols() != BLOCK_LEN {
            return Err(Error::InvalidConfig(format!(
                "the array is fixed at {ANTENNAS}x{BLOCK_LEN}, got {}x{}",
                y_q.rows(),
                y_q.cols()
            )));
        }
        table.validate()?;
        let mut tiles_y = RowStore::filled(FixedComplex::zero(profile.y.fmt));
        for slice in 0..SLICES {
            for pe in 0..PES_PER_SLICE {
                for col in 0..PES_PER_SLICE {
                    tiles_y.rows[slice][pe][col] = y_q.get(pe, slice * PES_PER_SLICE + col);
                }
            }
        }
        let prox_k = ProxConstants::new(pilots, profile.s_tilde);
        let mut s_ff = [FixedComplex::zero(profile.s_tilde.fmt); BLOCK_LEN];
        for (ff, p) in s_ff.iter_mut().zip(&prox_k.pilots) {
            *ff = *p;
        }
        let x_ff = [FixedComplex::zero(profile.x.fmt); ANTENNAS];
        let tiles_e = RowStore::filled(FixedComplex::zero(profile.e.fmt));
        let engine = FxEngine::new(profile.clone());
        Ok(Self {
            profile,
            engine,
            table,
            prox_k,
            pilot_len: pilots.len(),
            tiles_y,
            tiles_e,
            x_ff,
            s_ff,
            prng,
            cycle_counter: 0,
            overhead_cycles,
        })
    }

    pub fn cycle_counter(&self) -> u64 {
        self.cycle_counter
    }

    /// Forward Cannon pass: sum over slices of Tile_i * operand_i, with
    /// the operand conjugated when `conj_operand` is set. Each slice's
    /// operand entries rotate once per round; the four slice accumulators
    /// reduce pairwise at the end. Returns the 8-vector (resident in the
    /// first slice) quantized into `out`, plus the pass's cycle cost.
    pub fn cannon_mv(
        &mut self,
        tiles: TileSel,
        operand: &[FixedComplex],
        conj_operand: bool,
        out: SignalFormat,
    ) -> (Vec<FixedComplex>, u32) {
        assert_eq!(operand.len(), BLOCK_LEN);
        let store = match tiles {
            TileSel::Y => &self.tiles_y,
            TileSel::E => &self.tiles_e,
        };
        let row_fmt = store.rows[0][0][0].fmt();
        let frac = row_fmt.fraction_bits + operand[0].fmt().fraction_bits;

        let mut slice_accs: Vec<Vec<WideComplexAcc>> = (0..SLICES)
            .map(|_| (0..PES_PER_SLICE).map(|_| WideComplexAcc::new(frac)).collect())
            .collect();
        for (slice, accs) in slice_accs.iter_mut().enumerate() {
            let mut regs: Vec<TaggedValue> = (0..PES_PER_SLICE)
                .map(|pe| TaggedValue { tag: pe, value: operand[slice * PES_PER_SLICE + pe] })
                .collect();
            for round in 0..PES_PER_SLICE {
                for (pe, acc) in accs.iter_mut().enumerate() {
                    assert_eq!(
                        regs[pe].tag,
                        (pe + round) % PES_PER_SLICE,
                        "operand ring out of step"
                    );
                    let col = regs[pe].tag;
                    let a = store.read(slice, pe, col, (slice, pe));
                    if conj_operand {
                        // a * conj(op), accumulated as conj(op) * a
                        acc.mac_conj(regs[pe].value, a);
                    } else {
                        acc.mac(a, regs[pe].value);
                    }
                }
                regs.rotate_left(1);
            }
            for (pe, reg) in regs.iter().enumerate() {
                assert_eq!(reg.tag, pe, "operand did not return to its owner");
            }
        }
        // Cross-slice reduction: two exchange steps, then the first slice
        // holds the full sums.
        for pe in 0..PES_PER_SLICE {
            let acc2 = slice_accs[2][pe];
            slice_accs[0][pe].merge(&acc2);
            let acc3 = slice_accs[3][pe];
            slice_accs[1][pe].merge(&acc3);
            let acc1 = slice_accs[1][pe];
            slice_accs[0][pe].merge(&acc1);
        }
        let result = slice_accs[0].iter().map(|acc| acc.quantize(out.fmt, out.rounding)).collect();
        (result, PhaseKind::MvYS.intrinsic_cycles())
    }

    /// Hermitian Cannon pass: E^H z for all 32 outputs without moving the
    /// stored rows. The z entries stay pinned at their PEs while the
    /// accumulators rotate; rows are read in the same order as the forward
    /// pass. Outputs stay in-slice (no cross-slice reduction).
    pub fn cannon_mv_hermitian(
        &mut self,
        z: &[FixedComplex],
        out: SignalFormat,
    ) -> (Vec<FixedComplex>, u32) {
        assert_eq!(z.len(), ANTENNAS);
        let frac = self.profile.e.fmt.fraction_bits + z[0].fmt().fraction_bits;
        let mut result = vec![FixedComplex::zero(out.fmt); BLOCK_LEN];
        for slice in 0..SLICES {
            let mut accs: Vec<TaggedAcc> = (0..PES_PER_SLICE)
                .map(|pe| TaggedAcc { tag: pe, acc: WideComplexAcc::new(frac) })
                .collect();
            for round in 0..PES_PER_SLICE {
                for (pe, reg) in accs.iter_mut().enumerate() {
                    assert_eq!(
                        reg.tag,
                        (pe + round) % PES_PER_SLICE,
                        "accumulator ring out of step"
                    );
                    let col = reg.tag;
                    let e = self.tiles_e.read(slice, pe, col, (slice, pe));
                    reg.acc.mac_conj(e, z[pe]);
                }
                accs.rotate_left(1);
            }
            for (pe, reg) in accs.iter().enumerate() {
                assert_eq!(reg.tag, pe, "accumulator did not return to its owner");
                result[slice * PES_PER_SLICE + pe] = reg.acc.quantize(out.fmt, out.rounding);
            }
        }
        (result, PhaseKind::HmvEU.intrinsic_cycles())
    }

    /// Line-4b update: each PE refreshes its row of E from its row of Y,
    /// its resident x entry, and the rotating s~ segment.
    pub fn row_scale_update(&mut self, s: &[FixedComplex]) -> u32 {
        assert_eq!(s.len(), BLOCK_LEN);
        let row_frac = self
            .profile
            .y
            .fmt
            .fraction_bits
            .max(self.profile.x.fmt.fraction_bits + self.profile.s_tilde.fmt.fraction_bits);
        for slice in 0..SLICES {
            let mut regs: Vec<TaggedValue> = (0..PES_PER_SLICE)
                .map(|pe| TaggedValue { tag: pe, value: s[slice * PES_PER_SLICE + pe] })
                .collect();
            for round in 0..PES_PER_SLICE {
                for pe in 0..PES_PER_SLICE {
                    assert_eq!(regs[pe].tag, (pe + round) % PES_PER_SLICE);
                    let col = regs[pe].tag;
                    let y = self.tiles_y.read(slice, pe, col, (slice, pe));
                    let mut acc = WideComplexAcc::from_value(y, row_frac);
                    acc.mac_sub(self.x_ff[pe], regs[pe].value);
                    let e = acc.quantize(self.profile.e.fmt, self.profile.e.rounding);
                    self.tiles_e.write(slice, pe, col, e, (slice, pe));
                }
                regs.rotate_left(1);
            }
            for (pe, reg) in regs.iter().enumerate() {
                assert_eq!(reg.tag, pe, "s~ segment did not return to its owner");
            }
        }
        PhaseKind::RowScale.intrinsic_cycles()
    }

    /// a^H b on one PE slice, adders reconfigured as a 3-stage tree.
    pub fn inner_product_8(
        &mut self,
        a: &[FixedComplex],
        b: &[FixedComplex],
        out: SignalFormat,
    ) -> (FixedComplex, u32) {
        assert_eq!(a.len(), PES_PER_SLICE);
        assert_eq!(b.len(), PES_PER_SLICE);
        let frac = a[0].fmt().fraction_bits + b[0].fmt().fraction_bits;
        let mut stage: Vec<WideComplexAcc> = a
            .iter()
            .zip(b)
            .map(|(av, bv)| {
                let mut acc = WideComplexAcc::new(frac);
                acc.mac_conj(*av, *bv);
                acc
            })
            .collect();
        while stage.len() > 1 {
            stage = stage
                .chunks(2)
                .map(|pair| {
                    let mut acc = pair[0];
                    acc.merge(&pair[1]);
                    acc
                })
                .collect();
        }
        (stage[0].quantize(out.fmt, out.rounding), PhaseKind::InnerJj.intrinsic_cycles())
    }

    /// ||s~||^2: 32 parallel squared magnitudes into the 5-stage tree.
    fn norm_tree_32(&self, s: &[FixedComplex], out: SignalFormat) -> FixedScalar {
        let frac = 2 * s[0].fmt().fraction_bits;
        let mut stage: Vec<WideComplexAcc> = s
            .iter()
            .map(|v| {
                let mut acc = WideComplexAcc::new(frac);
                acc.mac_norm(*v);
                acc
            })
            .collect();
        while stage.len() > 1 {
            stage = stage
                .chunks(2)
                .map(|pair| {
                    let mut acc = pair[0];
                    acc.merge(&pair[1]);
                    acc
                })
                .collect();
        }
        stage[0].quantize_real(out.fmt, out.rounding)
    }

    fn run_phase(&mut self, kind: PhaseKind, regs: &mut IterRegs, tau_exp: i32) -> Result<()> {
        let profile = self.profile.clone();
        let acc_fmt = profile.accumulator;
        match kind {
            PhaseKind::NormSTree => {
                regs.ns = Some(self.norm_tree_32(&self.s_ff.to_vec(), acc_fmt));
            }
            PhaseKind::LutRecipS => {
                let ns = regs.ns.ok_or_else(|| missing("||s~||^2"))?;
                regs.r_s = Some(recip_s_norm(ns, self.engine.lut_s())?);
            }
            PhaseKind::MvYS => {
                let s = self.s_ff.to_vec();
                let (g, _) = self.cannon_mv(TileSel::Y, &s, true, acc_fmt);
                regs.mv_out = Some(g);
            }
            PhaseKind::ScaleX => {
                let g = regs.mv_out.take().ok_or_else(|| missing("Y s~*"))?;
                let r_s = regs.r_s.ok_or_else(|| missing("1/||s~||^2"))?;
                let x: Vec<FixedComplex> = g
                    .iter()
                    .map(|v| FixedComplex::scale_real(*v, r_s, profile.x.fmt, profile.x.rounding))
                    .collect();
                for (ff, v) in self.x_ff.iter_mut().zip(&x) {
                    *ff = *v;
                }
                regs.x = Some(x);
            }
            PhaseKind::RowScale => {
                if regs.x.is_none() {
                    return Err(missing("x"));
                }
                let s = self.s_ff.to_vec();
                self.row_scale_update(&s);
            }
            PhaseKind::PrngDraw => {
                let u = self.prng.draw_seed_vector(ANTENNAS);
                regs.u = Some(seed_vector_fx(&u, profile.s_tilde.fmt));
            }
            PhaseKind::HmvEU => {
                let u = regs.u.clone().ok_or_else(|| missing("u"))?;
                let (v, _) = self.cannon_mv_hermitian(&u, acc_fmt);
                regs.v = Some(v);
            }
            PhaseKind::MvEV => {
                let v = regs.v.clone().ok_or_else(|| missing("v"))?;
                let (j, _) = self.cannon_mv(TileSel::E, &v, false, acc_fmt);
                regs.j_raw = Some(j);
            }
            PhaseKind::Pseudonorm => {
                let j_raw = regs.j_raw.clone().ok_or_else(|| missing("raw j~"))?;
                match pseudonormalize(&j_raw, profile.j_tilde) {
                    None => {
                        regs.degenerate = true;
                        regs.j_scaled =
                            Some(vec![FixedComplex::zero(profile.j_tilde.fmt); ANTENNAS]);
                        regs.j_shift = Some(0);
                    }
                    Some(p) => {
                        regs.j_scaled = Some(p.j_scaled);
                        regs.j_shift = Some(p.shift_applied);
                    }
                }
            }
            PhaseKind::InnerJj => {
                let j = regs.j_scaled.clone().ok_or_else(|| missing("pseudonormalized j~"))?;
                let (njc, _) = self.inner_product_8(&j, &j, acc_fmt);
                regs.nj = Some(njc.re);
            }
            PhaseKind::RecipJ => {
                let nj = regs.nj.ok_or_else(|| missing("||j~||^2"))?;
                if !regs.degenerate {
                    regs.recip_j = recip_j_norm(nj, self.engine.lut_j());
                    if regs.recip_j.is_none() {
                        regs.degenerate = true;
                    }
                }
            }
            PhaseKind::ShiftX => {
                let x = regs.x.clone().ok_or_else(|| missing("x"))?;
                let e_j = regs.recip_j.map(|(_, e)| e).unwrap_or(0);
                regs.x_shifted =
                    Some(x.iter().map(|v| v.shift(-e_j, profile.x.rounding)).collect());
            }
            PhaseKind::InnerJx => {
                let j = regs.j_scaled.clone().ok_or_else(|| missing("pseudonormalized j~"))?;
                let xs = regs.x_shifted.clone().ok_or_else(|| missing("shifted x"))?;
                let (jx, _) = self.inner_product_8(&j, &xs, acc_fmt);
                regs.jx = Some(jx);
            }
            PhaseKind::AlphaZTau => {
                let x = regs.x.clone().ok_or_else(|| missing("x"))?;
                let j = regs.j_scaled.clone().ok_or_else(|| missing("pseudonormalized j~"))?;
                let alpha = match (regs.degenerate, regs.recip_j, regs.jx) {
                    (false, Some((r_j, _)), Some(jx)) => compute_alpha(jx, r_j, &profile),
                    _ => FixedComplex::zero(profile.x.fmt),
                };
                let z: Vec<FixedComplex> =
                    x.iter().zip(&j).map(|(xv, jv)| compute_z(*xv, *jv, alpha, &profile)).collect();
                regs.z_tau = Some(z.iter().map(|v| v.shift(tau_exp, profile.z.rounding)).collect());
                regs.alpha = Some(alpha);
                regs.z = Some(z);
            }
            PhaseKind::HmvETauz => {
                let zt = regs.z_tau.clone().ok_or_else(|| missing("tau z"))?;
                let (upd, _) = self.cannon_mv_hermitian(&zt, profile.update);
                regs.update = Some(upd);
            }
            PhaseKind::GradProx => {
                let update = regs.update.clone().ok_or_else(|| missing("update"))?;
                for c in 0..BLOCK_LEN {
                    self.s_ff[c] = if c < self.pilot_len {
                        self.prox_k.pilots[c]
                    } else {
                        prox_entry(self.s_ff[c], update[c], &self.prox_k)
                    };
                }
            }
        }
        Ok(())
    }

    /// One full iteration per the schedule table. Returns the cycle tally
    /// and the post-iteration state snapshot.
    pub fn run_iteration(
        &mut self,
        tau_exp: i32,
        iteration: usize,
    ) -> Result<(CycleReport, FxState)> {
        let mut regs = IterRegs::default();
        let table = self.table.clone();
        for phase in &table.phases {
            self.run_phase(phase.kind, &mut regs, tau_exp)?;
            self.cycle_counter += phase.cycles as u64;
        }
        let report = CycleReport {
            mv_8x32: table.cycles_of(PhaseKind::MvYS),
            hermitian_mv: table.cycles_of(PhaseKind::HmvEU),
            row_scale: table.cycles_of(PhaseKind::RowScale),
            inner8: table.cycles_of(PhaseKind::InnerJj),
            iteration_total: table.iteration_cycles(),
            block_total: self.cycle_counter,
        };
        let state = FxState {
            s_tilde: self.s_ff.to_vec(),
            x: regs.x.ok_or_else(|| missing("x"))?,
            e: self.tiles_to_mat(),
            j_scaled: regs.j_scaled.ok_or_else(|| missing("pseudonormalized j~"))?,
            j_shift: regs.j_shift.ok_or_else(|| missing("j~ shift"))?,
            z: regs.z.ok_or_else(|| missing("z"))?,
            iteration,
        };
        Ok((report, state))
    }

    /// Full detection: `t_max` iterations plus the block load/readout
    /// overhead. Returns decisions, per-iteration states, and the tally.
    pub fn run_block(
        &mut self,
        schedule: &StepSchedule,
    ) -> Result<(Vec<C64>, Vec<FxState>, CycleReport)> {
        self.cycle_counter += self.overhead_cycles;
        let mut states = Vec::with_capacity(schedule.t_max());
        let mut last_report = None;
        for t in 0..schedule.t_max() {
            let (report, state) = self.run_iteration(schedule.tau_exponents[t], t + 1)?;
            states.push(state);
            last_report = Some(report);
        }
        let report = last_report.ok_or_else(|| missing("at least one iteration"))?;
        let s_hat =
            self.s_ff[self.pilot_len..].iter().map(|v| slice_qpsk(v.to_c64())).collect();
        Ok((s_hat, states, report))
    }

    fn tiles_to_mat(&self) -> FxMat {
        let mut m = FxMat::filled(ANTENNAS, BLOCK_LEN, FixedComplex::zero(self.profile.e.fmt));
        for slice in 0..SLICES {
            for pe in 0..PES_PER_SLICE {
                for col in 0..PES_PER_SLICE {
                    m.set(pe, slice * PES_PER_SLICE + col, self.tiles_e.rows[slice][pe][col]);
                }
            }
        }
        m
    }
}

/// Convenience: quantize a float block and run it through the emulator
/// with the bundled schedule.
pub fn emulate_block(
    y: &crate::linalg::CMat,
    pilots: &[C64],
    schedule: &StepSchedule,
    profile: &FxProfile,
    prng: Xorshift64,
    overhead_cycles: u64,
) -> Result<(Vec<C64>, Vec<FxState>, CycleReport)> {
    let y_q = quantize_block(y, profile);
    let mut pe = PeArray::load(
        &y_q,
        pilots,
        profile.clone(),
        ScheduleTable::bundled(),
        prng,
        overhead_cycles,
    )?;
    pe.run_block(schedule)
}
