//! Bit-accurate fixed-point MAED pipeline.
//!
//! Mirrors the ASIC datapath: every register has a configurable Q-format,
//! reciprocals come from lookup tables over a normalized mantissa, the
//! jammer estimate is pseudonormalized by a power of two before its inner
//! products, and step sizes are applied by arithmetic shift. Complex MAC
//! trees accumulate exactly and quantize once per output.
//!
//! The scalar joints here (`prox_entry`, `compute_alpha`, `compute_z`) are
//! shared with the PE-array emulator, so any state divergence between the
//! two is attributable to the array dataflow itself.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::linalg::{C64, CMat};
use crate::maed_ref::{slice_qpsk, StepSchedule};
use crate::numerics::{
    lod, mac_headroom_ok, FixedComplex, FixedScalar, QFormat, Rounding, WideComplexAcc,
};
use crate::prng::Xorshift64;
use crate::{Error, Result};

/// One named datapath register: format plus the rounding used when
/// quantizing into it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalFormat {
    #[serde(flatten)]
    pub fmt: QFormat,
    #[serde(default)]
    pub rounding: Rounding,
}

impl SignalFormat {
    pub const fn trunc(integer_bits: u32, fraction_bits: u32) -> Self {
        Self { fmt: QFormat::new(integer_bits, fraction_bits), rounding: Rounding::Truncate }
    }
}

/// Reciprocal-LUT geometry: mantissa address bits and value bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LutSpec {
    pub addr_bits: u32,
    pub value_bits: u32,
}

/// Q-format profile for every named signal of the datapath.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FxProfile {
    pub y: SignalFormat,
    pub s_tilde: SignalFormat,
    pub x: SignalFormat,
    pub e: SignalFormat,
    /// Format of the pseudonormalized jammer-direction register
    /// (components end up in (-2, 2)).
    pub j_tilde: SignalFormat,
    pub z: SignalFormat,
    pub update: SignalFormat,
    /// Staging format for MAC-tree outputs (also holds the power-iteration
    /// intermediate and the raw jammer estimate before pseudonormalization).
    pub accumulator: SignalFormat,
    pub lut_s: LutSpec,
    pub lut_j: LutSpec,
}

impl Default for FxProfile {
    /// Default widths tuned so the fixed-point BER tracks the float
    /// reference across the operating sweep: 11 fraction bits on the
    /// datapath signals, 14 on the iterate, wide accumulators.
    fn default() -> Self {
        Self {
            y: SignalFormat::trunc(11, 11),
            s_tilde: SignalFormat::trunc(1, 14),
            x: SignalFormat::trunc(13, 11),
            e: SignalFormat::trunc(12, 11),
            j_tilde: SignalFormat::trunc(2, 14),
            z: SignalFormat::trunc(14, 11),
            update: SignalFormat::trunc(2, 12),
            accumulator: SignalFormat::trunc(34, 16),
            lut_s: LutSpec { addr_bits: 12, value_bits: 12 },
            lut_j: LutSpec { addr_bits: 8, value_bits: 12 },
        }
    }
}

impl FxProfile {
    pub fn validate(&self) -> Result<()> {
        for (name, sf) in [
            ("y", &self.y),
            ("s_tilde", &self.s_tilde),
            ("x", &self.x),
            ("e", &self.e),
            ("j_tilde", &self.j_tilde),
            ("z", &self.z),
            ("update", &self.update),
            ("accumulator", &self.accumulator),
        ] {
            sf.fmt.validate().map_err(|e| Error::InvalidConfig(format!("{name}: {e}")))?;
        }
        if self.s_tilde.fmt.integer_bits < 1 {
            return Err(Error::InvalidConfig(
                "s_tilde needs an integer bit to hold the +-1 seed signs".into(),
            ));
        }
        if self.j_tilde.fmt.integer_bits < 1 {
            return Err(Error::InvalidConfig(
                "j_tilde needs an integer bit for the pseudonormalized range [1, 2)".into(),
            ));
        }
        for (name, lut) in [("lut_s", &self.lut_s), ("lut_j", &self.lut_j)] {
            if lut.value_bits < 8 || lut.value_bits > 30 {
                return Err(Error::InvalidConfig(format!("{name}: value_bits outside 8..=30")));
            }
            if lut.addr_bits < 1 || lut.addr_bits > 22 {
                return Err(Error::InvalidConfig(format!("{name}: addr_bits outside 1..=22")));
            }
        }
        // Every MAC tree in the pipeline must fit the 128-bit accumulator.
        let acc = self.accumulator.fmt;
        let pairs = [
            ("y*s_tilde", self.y.fmt, self.s_tilde.fmt),
            ("s_tilde^2", self.s_tilde.fmt, self.s_tilde.fmt),
            ("x*s_tilde", self.x.fmt, self.s_tilde.fmt),
            ("e*u", self.e.fmt, self.s_tilde.fmt),
            ("e*v", self.e.fmt, acc),
            ("j*j", self.j_tilde.fmt, self.j_tilde.fmt),
            ("j*x", self.j_tilde.fmt, self.x.fmt),
            ("e*z", self.e.fmt, self.z.fmt),
        ];
        for (name, a, b) in pairs {
            if !mac_headroom_ok(a, b, 32) {
                return Err(Error::InvalidConfig(format!(
                    "{name} products overflow the wide accumulator"
                )));
            }
        }
        Ok(())
    }
}

/// Matrix of fixed-point complex samples, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FxMat {
    data: Vec<FixedComplex>,
    rows: usize,
    cols: usize,
}

impl FxMat {
    pub fn filled(rows: usize, cols: usize, v: FixedComplex) -> Self {
        Self { data: vec![v; rows * cols], rows, cols }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> FixedComplex {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: FixedComplex) {
        self.data[r * self.cols + c] = v;
    }

    pub fn to_cmat(&self) -> CMat {
        let mut out = CMat::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(r, c, self.get(r, c).to_c64());
            }
        }
        out
    }
}

/// Quantize a float receive block into the profile's input format.
pub fn quantize_block(y: &CMat, profile: &FxProfile) -> FxMat {
    let mut out = FxMat::filled(y.rows(), y.cols(), FixedComplex::zero(profile.y.fmt));
    for r in 0..y.rows() {
        for c in 0..y.cols() {
            let v = y.get(r, c);
            out.set(r, c, FixedComplex::from_f64(v.re, v.im, profile.y.fmt, profile.y.rounding));
        }
    }
    out
}

/// Reciprocal lookup table over the normalized mantissa [1, 2).
///
/// Entries are anchored at the bucket's left edge so exact powers of two
/// invert exactly: `entries[a]` holds `1 / (1 + a 2^-addr_bits)` rounded
/// to nearest in Q1.`value_bits`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecipLut {
    spec: LutSpec,
    entries: Vec<i64>,
}

impl RecipLut {
    pub fn build(spec: &LutSpec) -> Self {
        let n = 1u64 << spec.addr_bits;
        let mut entries = Vec::with_capacity(n as usize);
        for a in 0..n {
            // round-to-nearest of 2^(addr+value) / (2^addr + a), ties to even
            let num = 1u128 << (spec.addr_bits + spec.value_bits);
            let den = (1u128 << spec.addr_bits) + a as u128;
            let q = num / den;
            let rem = num % den;
            let up = match (2 * rem).cmp(&den) {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Equal => q & 1,
                std::cmp::Ordering::Less => 0,
            };
            entries.push((q + up) as i64);
        }
        Self { spec: *spec, entries }
    }

    pub fn spec(&self) -> &LutSpec {
        &self.spec
    }

    /// Value format: Q1.value_bits (1.0 is representable).
    pub fn value_fmt(&self) -> QFormat {
        QFormat { integer_bits: 1, fraction_bits: self.spec.value_bits }
    }

    pub fn entry(&self, addr: usize) -> FixedScalar {
        FixedScalar::from_raw(self.entries[addr], self.value_fmt())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Hex text dump, one entry per line.
    pub fn dump_hex(&self) -> String {
        let width = ((self.spec.value_bits + 1).div_ceil(4)) as usize;
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("{e:0width$x}\n"));
        }
        out
    }

    /// Split a positive value into `(mantissa reciprocal, exponent)` with
    /// `1/value = recip * 2^-exponent`: the leading-one detector gives
    /// `e = floor(log2 value)`, the bits below the leading one address the
    /// table.
    fn lookup_normalized(&self, v: FixedScalar) -> (FixedScalar, i32) {
        debug_assert!(v.raw() > 0);
        let raw = v.raw() as u64;
        let p = lod(raw).unwrap();
        let exponent = p as i32 - v.fmt().fraction_bits as i32;
        let below = raw - (1u64 << p);
        let addr = if p >= self.spec.addr_bits {
            below >> (p - self.spec.addr_bits)
        } else {
            below << (self.spec.addr_bits - p)
        };
        (self.entry(addr as usize), exponent)
    }
}

/// Reciprocal of ||s~||^2 through the LUT. The analytic range is [4, 32]
/// (pilot energy bounds it below, the convex hull above); one octave of
/// slack below 4 absorbs pilot quantization, anything else is a usage
/// error.
pub fn recip_s_norm(ns: FixedScalar, lut: &RecipLut) -> Result<FixedScalar> {
    let fmt = ns.fmt();
    let lo = 2i64 << fmt.fraction_bits;
    let hi = 32i64 << fmt.fraction_bits;
    if ns.raw() < lo || ns.raw() > hi {
        return Err(Error::RecipOutOfRange { value: ns.to_f64(), lo: 2.0, hi: 32.0 });
    }
    let (mantissa, e) = lut.lookup_normalized(ns);
    debug_assert!((1..=5).contains(&e));
    // Fold the 2^-e into the value: Q1.(value_bits + 5) holds it exactly.
    let out_fmt = QFormat { integer_bits: 1, fraction_bits: lut.spec.value_bits + 5 };
    Ok(FixedScalar::from_raw(mantissa.raw() << (5 - e), out_fmt))
}

/// Reciprocal of ||j~||^2: returns `(mantissa_recip, shift)` so that
/// `1/nj = mantissa_recip * 2^-shift`, with the mantissa reciprocal in
/// (0.5, 1]. The caller applies the `2^-shift` to x upstream instead of
/// widening the multiplier. `None` signals a degenerate (nonpositive)
/// jammer estimate.
pub fn recip_j_norm(nj: FixedScalar, lut: &RecipLut) -> Option<(FixedScalar, i32)> {
    if nj.raw() <= 0 {
        return None;
    }
    Some(lut.lookup_normalized(nj))
}

/// Pseudonormalization output: the rescaled vector and the applied
/// power-of-two exponent (`j_scaled = j * 2^-shift_applied`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudonormResult {
    pub j_scaled: Vec<FixedComplex>,
    pub shift_applied: i32,
}

/// Rescale j~ so its largest real/imaginary part lies in [1, 2).
///
/// Leading-one detectors locate the largest-magnitude part; every
/// component is then shifted by `-floor(log2 j_max)` and quantized into
/// `out`. The shift truncates toward zero so the scaled maximum stays
/// strictly below 2. Returns `None` for an all-zero input (no jammer
/// direction this iteration).
pub fn pseudonormalize(j: &[FixedComplex], out: SignalFormat) -> Option<PseudonormResult> {
    let in_frac = j.first()?.fmt().fraction_bits;
    let max_abs = j
        .iter()
        .flat_map(|c| [c.re.raw().unsigned_abs(), c.im.raw().unsigned_abs()])
        .max()?;
    if max_abs == 0 {
        return None;
    }
    let shift_applied = lod(max_abs).unwrap() as i32 - in_frac as i32;
    let j_scaled = j
        .iter()
        .map(|c| {
            let re = scale_pow2_toward_zero(c.re, -shift_applied, out.fmt);
            let im = scale_pow2_toward_zero(c.im, -shift_applied, out.fmt);
            FixedComplex::new(re, im)
        })
        .collect();
    Some(PseudonormResult { j_scaled, shift_applied })
}

/// `v * 2^k` requantized into `to`, truncating toward zero.
fn scale_pow2_toward_zero(v: FixedScalar, k: i32, to: QFormat) -> FixedScalar {
    let net = v.fmt().fraction_bits as i32 - to.fraction_bits as i32 - k;
    let wide = if net > 0 {
        let mag = (v.raw() as i128).unsigned_abs() >> net.min(126) as u32;
        if v.raw() < 0 {
            -(mag as i128)
        } else {
            mag as i128
        }
    } else {
        (v.raw() as i128) << ((-net) as u32).min(126)
    };
    FixedScalar::from_raw(wide.clamp(to.min_raw() as i128, to.max_raw() as i128) as i64, to)
}

/// Fixed-point algorithm state after one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct FxState {
    pub s_tilde: Vec<FixedComplex>,
    pub x: Vec<FixedComplex>,
    pub e: FxMat,
    /// Pseudonormalized jammer direction; multiply by `2^j_shift` to
    /// recover the raw power-iteration output's scale.
    pub j_scaled: Vec<FixedComplex>,
    pub j_shift: i32,
    pub z: Vec<FixedComplex>,
    pub iteration: usize,
}

/// Quantized pilot constants and the clip bound, precomputed once.
///
/// The clip bound and pilot amplitudes quantize toward zero so the hull
/// invariant |component| <= 1/sqrt(2) survives quantization (otherwise
/// ||s~||^2 could leave the LUT's input range).
#[derive(Debug, Clone)]
pub struct ProxConstants {
    pub pilots: Vec<FixedComplex>,
    pub bound_raw: i64,
    pub fmt: SignalFormat,
}

impl ProxConstants {
    pub fn new(pilots: &[C64], fmt: SignalFormat) -> Self {
        let q = |v: f64| {
            let mag = FixedScalar::from_f64(v.abs(), fmt.fmt, Rounding::Truncate);
            FixedScalar::from_raw(if v < 0.0 { -mag.raw() } else { mag.raw() }, fmt.fmt)
        };
        let pilots_fx = pilots.iter().map(|p| FixedComplex::new(q(p.re), q(p.im))).collect();
        let bound = FixedScalar::from_f64(FRAC_1_SQRT_2, fmt.fmt, Rounding::Truncate);
        Self { pilots: pilots_fx, bound_raw: bound.raw(), fmt }
    }
}

/// One entry of the gradient step + prox: `s + conj(d)` accumulated
/// exactly, quantized once into the iterate format, then clamped to the
/// QPSK hull. Pilot entries are overwritten by the caller.
pub fn prox_entry(s: FixedComplex, d: FixedComplex, k: &ProxConstants) -> FixedComplex {
    let frac = s.fmt().fraction_bits.max(d.fmt().fraction_bits);
    let mut acc = WideComplexAcc::from_value(s, frac);
    acc.add_value(d.conj());
    let q = acc.quantize(k.fmt.fmt, k.fmt.rounding);
    let clamp =
        |v: FixedScalar| FixedScalar::from_raw(v.raw().clamp(-k.bound_raw, k.bound_raw), k.fmt.fmt);
    FixedComplex::new(clamp(q.re), clamp(q.im))
}

/// `alpha = (scaled j~^H x) * mantissa_recip`, quantized into the x format.
pub fn compute_alpha(jx: FixedComplex, recip: FixedScalar, profile: &FxProfile) -> FixedComplex {
    FixedComplex::scale_real(jx, recip, profile.x.fmt, profile.x.rounding)
}

/// `z_b = x_b - j_b alpha`, quantized once into the z format.
pub fn compute_z(
    x: FixedComplex,
    j: FixedComplex,
    alpha: FixedComplex,
    profile: &FxProfile,
) -> FixedComplex {
    let frac = x.fmt().fraction_bits.max(j.fmt().fraction_bits + alpha.fmt().fraction_bits);
    let mut acc = WideComplexAcc::from_value(x, frac);
    acc.mac_sub(j, alpha);
    acc.quantize(profile.z.fmt, profile.z.rounding)
}

/// Convert a seed-sign vector to fixed point (entries are +-1 exactly).
pub fn seed_vector_fx(u: &[C64], fmt: QFormat) -> Vec<FixedComplex> {
    u.iter().map(|c| FixedComplex::from_f64(c.re, c.im, fmt, Rounding::Truncate)).collect()
}

/// Prebuilt fixed-point pipeline: profile plus its reciprocal tables.
/// Reuse one engine across Monte Carlo trials to avoid rebuilding LUTs.
#[derive(Debug, Clone)]
pub struct FxEngine {
    pub profile: FxProfile,
    lut_s: RecipLut,
    lut_j: RecipLut,
}

impl FxEngine {
    pub fn new(profile: FxProfile) -> Self {
        let lut_s = RecipLut::build(&profile.lut_s);
        let lut_j = RecipLut::build(&profile.lut_j);
        Self { profile, lut_s, lut_j }
    }

    pub fn lut_s(&self) -> &RecipLut {
        &self.lut_s
    }

    pub fn lut_j(&self) -> &RecipLut {
        &self.lut_j
    }

    pub fn run(
        &self,
        y_q: &FxMat,
        pilots: &[C64],
        schedule: &StepSchedule,
        rng: &mut Xorshift64,
    ) -> Result<(Vec<C64>, Vec<FxState>)> {
        run_with_luts(y_q, pilots, schedule, &self.profile, &self.lut_s, &self.lut_j, rng)
    }
}

/// Run the full fixed-point descent on a quantized block. Deterministic
/// given `(inputs, profile, rng state)`; returns hard QPSK decisions for
/// the data entries and the per-iteration trace (t_max + 1 states).
pub fn run_maed_fx(
    y_q: &FxMat,
    pilots: &[C64],
    schedule: &StepSchedule,
    profile: &FxProfile,
    rng: &mut Xorshift64,
) -> Result<(Vec<C64>, Vec<FxState>)> {
    FxEngine::new(profile.clone()).run(y_q, pilots, schedule, rng)
}

fn run_with_luts(
    y_q: &FxMat,
    pilots: &[C64],
    schedule: &StepSchedule,
    profile: &FxProfile,
    lut_s: &RecipLut,
    lut_j: &RecipLut,
    rng: &mut Xorshift64,
) -> Result<(Vec<C64>, Vec<FxState>)> {
    let b = y_q.rows();
    let k = y_q.cols();
    let t_len = pilots.len();
    let prox_k = ProxConstants::new(pilots, profile.s_tilde);

    let mut s_tilde: Vec<FixedComplex> = prox_k.pilots.clone();
    s_tilde.resize(k, FixedComplex::zero(profile.s_tilde.fmt));

    let mut trace = Vec::with_capacity(schedule.t_max() + 1);
    trace.push(FxState {
        s_tilde: s_tilde.clone(),
        x: vec![FixedComplex::zero(profile.x.fmt); b],
        e: FxMat::filled(b, k, FixedComplex::zero(profile.e.fmt)),
        j_scaled: vec![FixedComplex::zero(profile.j_tilde.fmt); b],
        j_shift: 0,
        z: vec![FixedComplex::zero(profile.z.fmt); b],
        iteration: 0,
    });

    let acc_fmt = profile.accumulator;
    for t in 0..schedule.t_max() {
        // ||s~||^2 via the 32-wide tree, then its LUT reciprocal.
        let mut ns_acc = WideComplexAcc::new(2 * profile.s_tilde.fmt.fraction_bits);
        for s in &s_tilde {
            ns_acc.mac_norm(*s);
        }
        let ns = ns_acc.quantize_real(acc_fmt.fmt, acc_fmt.rounding);
        let r_s = recip_s_norm(ns, lut_s)?;

        // Line 4a: Y s~* (per-row 32-term tree), then scale by 1/||s~||^2.
        let mv_frac = profile.y.fmt.fraction_bits + profile.s_tilde.fmt.fraction_bits;
        let mut x = Vec::with_capacity(b);
        for r in 0..b {
            let mut acc = WideComplexAcc::new(mv_frac);
            for c in 0..k {
                acc.mac_conj(s_tilde[c], y_q.get(r, c));
            }
            let g = acc.quantize(acc_fmt.fmt, acc_fmt.rounding);
            x.push(FixedComplex::scale_real(g, r_s, profile.x.fmt, profile.x.rounding));
        }

        // Line 4b: E = Y - x s~^T, one quantization per entry.
        let row_frac = profile
            .y
            .fmt
            .fraction_bits
            .max(profile.x.fmt.fraction_bits + profile.s_tilde.fmt.fraction_bits);
        let mut e = FxMat::filled(b, k, FixedComplex::zero(profile.e.fmt));
        for r in 0..b {
            for c in 0..k {
                let mut acc = WideComplexAcc::from_value(y_q.get(r, c), row_frac);
                acc.mac_sub(x[r], s_tilde[c]);
                e.set(r, c, acc.quantize(profile.e.fmt, profile.e.rounding));
            }
        }

        // Line 5: the PRNG seed vector, +-1 per axis.
        let u = seed_vector_fx(&rng.draw_seed_vector(b), profile.s_tilde.fmt);

        // Line 6a: v = E^H u.
        let eu_frac = profile.e.fmt.fraction_bits + profile.s_tilde.fmt.fraction_bits;
        let mut v = Vec::with_capacity(k);
        for c in 0..k {
            let mut acc = WideComplexAcc::new(eu_frac);
            for r in 0..b {
                acc.mac_conj(e.get(r, c), u[r]);
            }
            v.push(acc.quantize(acc_fmt.fmt, acc_fmt.rounding));
        }

        // Line 6b: raw j~ = E v.
        let ev_frac = profile.e.fmt.fraction_bits + acc_fmt.fmt.fraction_bits;
        let mut j_raw = Vec::with_capacity(b);
        for r in 0..b {
            let mut acc = WideComplexAcc::new(ev_frac);
            for c in 0..k {
                acc.mac(e.get(r, c), v[c]);
            }
            j_raw.push(acc.quantize(acc_fmt.fmt, acc_fmt.rounding));
        }

        // Pseudonormalize, then the two 8-wide inner products and the
        // compensated reciprocal of ||j~||^2 (the 2^-shift lands on x).
        let (j_scaled, j_shift, alpha) = match pseudonormalize(&j_raw, profile.j_tilde) {
            None => (
                vec![FixedComplex::zero(profile.j_tilde.fmt); b],
                0,
                FixedComplex::zero(profile.x.fmt),
            ),
            Some(p) => {
                let mut nj_acc = WideComplexAcc::new(2 * profile.j_tilde.fmt.fraction_bits);
                for j in &p.j_scaled {
                    nj_acc.mac_norm(*j);
                }
                let nj = nj_acc.quantize_real(acc_fmt.fmt, acc_fmt.rounding);
                match recip_j_norm(nj, lut_j) {
                    None => (p.j_scaled, p.shift_applied, FixedComplex::zero(profile.x.fmt)),
                    Some((r_j, e_j)) => {
                        let jx_frac =
                            profile.j_tilde.fmt.fraction_bits + profile.x.fmt.fraction_bits;
                        let mut jx_acc = WideComplexAcc::new(jx_frac);
                        for (j, xv) in p.j_scaled.iter().zip(&x) {
                            let xs = xv.shift(-e_j, profile.x.rounding);
                            jx_acc.mac_conj(*j, xs);
                        }
                        let jx = jx_acc.quantize(acc_fmt.fmt, acc_fmt.rounding);
                        (p.j_scaled, p.shift_applied, compute_alpha(jx, r_j, profile))
                    }
                }
            }
        };

        // Line 7a: z = x - j~ alpha, then the step size by arithmetic shift.
        let z: Vec<FixedComplex> =
            x.iter().zip(&j_scaled).map(|(xv, jv)| compute_z(*xv, *jv, alpha, profile)).collect();
        let tau_exp = schedule.tau_exponents[t];
        let zt: Vec<FixedComplex> =
            z.iter().map(|v| v.shift(tau_exp, profile.z.rounding)).collect();

        // Line 8a: update = E^H (tau z), quantized straight into the
        // iterate-update format (prox clipping makes its saturation benign).
        let ez_frac = profile.e.fmt.fraction_bits + profile.z.fmt.fraction_bits;
        let mut update = Vec::with_capacity(k);
        for c in 0..k {
            let mut acc = WideComplexAcc::new(ez_frac);
            for r in 0..b {
                acc.mac_conj(e.get(r, c), zt[r]);
            }
            update.push(acc.quantize(profile.update.fmt, profile.update.rounding));
        }

        // Line 9: gradient step and prox in each PE.
        for c in 0..k {
            s_tilde[c] = if c < t_len {
                prox_k.pilots[c]
            } else {
                prox_entry(s_tilde[c], update[c], &prox_k)
            };
        }

        trace.push(FxState {
            s_tilde: s_tilde.clone(),
            x: x.clone(),
            e,
            j_scaled,
            j_shift,
            z,
            iteration: t + 1,
        });
    }

    let s_hat = s_tilde[t_len..].iter().map(|v| slice_qpsk(v.to_c64())).collect();
    Ok((s_hat, trace))
}
