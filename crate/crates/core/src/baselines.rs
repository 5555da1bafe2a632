//! Non-mitigating reference receiver: least-squares channel estimation
//! from pilots plus LMMSE (regularized matched-filter) data detection.

use crate::linalg::{norm_sqr, C64, CMat};
use crate::maed_ref::slice_qpsk;

/// Pilot-based channel estimate.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    pub h_hat: Vec<C64>,
}

/// LS solution of the rank-one pilot model: h_hat = Y_T s_T* / ||s_T||^2.
pub fn ls_channel_estimate(y_pilot: &CMat, pilots: &[C64]) -> ChannelEstimate {
    assert!(!pilots.is_empty());
    let n = norm_sqr(pilots);
    assert!(n > 0.0, "pilot sequence must be nonzero");
    let mut h_hat = y_pilot.mat_vec_conj(pilots);
    h_hat.iter_mut().for_each(|v| *v /= n);
    ChannelEstimate { h_hat }
}

/// Detector output; `degenerate` flags an all-zero channel estimate whose
/// decisions carry no information.
#[derive(Debug, Clone)]
pub struct LmmseOutput {
    pub symbols: Vec<C64>,
    pub degenerate: bool,
}

/// Per data slot, slice(h_hat^H y_k / (||h_hat||^2 + N0)). The scalar
/// regularization never changes sign decisions, so the detector's headline
/// behavior is scale invariant.
pub fn lmmse_detect(y_data: &CMat, est: &ChannelEstimate, n0: f64) -> LmmseOutput {
    let gain = norm_sqr(&est.h_hat) + n0;
    let degenerate = norm_sqr(&est.h_hat) == 0.0;
    // herm_vec gives Y^H h; the matched filter h^H y_k is its conjugate.
    let filtered = y_data.herm_vec(&est.h_hat);
    let symbols = filtered.iter().map(|v| slice_qpsk(v.conj() / gain)).collect();
    LmmseOutput { symbols, degenerate }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{self, JammerKind, JammerSpec, SystemDims};
    use crate::maed_ref::qpsk_bit_errors;
    use crate::prng::Xorshift64;

    fn rng(seed: u64) -> Xorshift64 {
        Xorshift64::new(seed).unwrap()
    }

    fn q_func(x: f64) -> f64 {
        // Q(x) = erfc(x / sqrt(2)) / 2 via Abramowitz-Stegun 7.1.26; the
        // 1e-7 absolute accuracy is far below the Monte Carlo noise here.
        let t = 1.0 / (1.0 + 0.3275911 * (x / std::f64::consts::SQRT_2));
        let poly = t
            * (0.254829592
                + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
        let erfc = poly * (-(x / std::f64::consts::SQRT_2).powi(2)).exp();
        erfc / 2.0
    }

    #[test]
    fn ls_exact_without_noise() {
        let dims = SystemDims::default();
        let mut g = rng(21);
        let spec = JammerSpec::new(JammerKind::Barrage, f64::NEG_INFINITY);
        let blk = channel::synthesize_block(&mut g, &dims, &spec, f64::INFINITY);
        let est = ls_channel_estimate(&blk.y.col_slice(0, dims.pilots), blk.truth.s.pilots());
        for (got, want) in est.h_hat.iter().zip(&blk.truth.h) {
            assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn ls_error_variance_is_n0_over_t() {
        let dims = SystemDims::default();
        let spec = JammerSpec::new(JammerKind::Barrage, f64::NEG_INFINITY);
        let mut g = rng(22);
        let trials = 10_000;
        let mut err_norm = 0.0;
        let mut expect = 0.0;
        for _ in 0..trials {
            let blk = channel::synthesize_block(&mut g, &dims, &spec, 3.0);
            let est = ls_channel_estimate(&blk.y.col_slice(0, dims.pilots), blk.truth.s.pilots());
            err_norm += est
                .h_hat
                .iter()
                .zip(&blk.truth.h)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                / dims.antennas as f64;
            expect += blk.truth.n0 / dims.pilots as f64;
        }
        let ratio = err_norm / expect;
        assert!((ratio - 1.0).abs() < 0.05, "LS error variance ratio {ratio}");
    }

    #[test]
    fn pilot_jammer_wrecks_ls() {
        let dims = SystemDims::default();
        let spec = JammerSpec::new(JammerKind::SmartPilot, 30.0);
        let mut g = rng(23);
        let mut wrecked = 0;
        let trials = 200;
        for _ in 0..trials {
            let blk = channel::synthesize_block(&mut g, &dims, &spec, 10.0);
            let est = ls_channel_estimate(&blk.y.col_slice(0, dims.pilots), blk.truth.s.pilots());
            let err: f64 = est
                .h_hat
                .iter()
                .zip(&blk.truth.h)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum();
            if err > crate::linalg::norm_sqr(&blk.truth.h) {
                wrecked += 1;
            }
        }
        assert!(wrecked as f64 > 0.95 * trials as f64, "only {wrecked}/{trials} wrecked");
    }

    #[test]
    fn perfect_csi_noiseless_is_exact() {
        let dims = SystemDims::default();
        let mut g = rng(24);
        let spec = JammerSpec::new(JammerKind::Barrage, f64::NEG_INFINITY);
        let blk = channel::synthesize_block(&mut g, &dims, &spec, f64::INFINITY);
        let est = ChannelEstimate { h_hat: blk.truth.h.clone() };
        let out = lmmse_detect(&blk.y.col_slice(dims.pilots, dims.block_len), &est, 0.0);
        assert!(!out.degenerate);
        assert_eq!(qpsk_bit_errors(&out.symbols, blk.truth.s.data()), 0);
    }

    #[test]
    fn decisions_scale_invariant() {
        let dims = SystemDims::default();
        let mut g = rng(25);
        let spec = JammerSpec::new(JammerKind::Barrage, 10.0);
        let blk = channel::synthesize_block(&mut g, &dims, &spec, 5.0);
        let y_data = blk.y.col_slice(dims.pilots, dims.block_len);
        let est = ls_channel_estimate(&blk.y.col_slice(0, dims.pilots), blk.truth.s.pilots());
        let scaled = ChannelEstimate { h_hat: est.h_hat.iter().map(|v| 3.5 * v).collect() };
        let a = lmmse_detect(&y_data, &est, blk.truth.n0);
        let b = lmmse_detect(&y_data, &scaled, blk.truth.n0);
        assert_eq!(a.symbols, b.symbols);
    }

    #[test]
    fn degenerate_estimate_is_flagged() {
        let dims = SystemDims::default();
        let mut g = rng(26);
        let spec = JammerSpec::new(JammerKind::Barrage, 10.0);
        let blk = channel::synthesize_block(&mut g, &dims, &spec, 5.0);
        let est = ChannelEstimate { h_hat: vec![C64::new(0.0, 0.0); dims.antennas] };
        let out = lmmse_detect(&blk.y.col_slice(dims.pilots, dims.block_len), &est, blk.truth.n0);
        assert!(out.degenerate);
    }

    /// Jammer-free perfect-CSI BER across an SNR sweep matches the
    /// closed-form matched-filter curve. With the per-block exact
    /// calibration SNR = ||h||^2/(B N0), the conditional bit error rate is
    /// Q(sqrt(B * snr_lin)) for every block, so no fading average is
    /// needed.
    #[test]
    fn perfect_csi_ber_matches_closed_form() {
        let dims = SystemDims::default();
        let spec = JammerSpec::new(JammerKind::Barrage, f64::NEG_INFINITY);
        let mut g = rng(27);
        for snr_db in [-6.0, -3.0, 0.0] {
            let trials = 2_000;
            let mut errors = 0u64;
            let mut bits = 0u64;
            for _ in 0..trials {
                let blk = channel::synthesize_block(&mut g, &dims, &spec, snr_db);
                let est = ChannelEstimate { h_hat: blk.truth.h.clone() };
                let out =
                    lmmse_detect(&blk.y.col_slice(dims.pilots, dims.block_len), &est, blk.truth.n0);
                errors += qpsk_bit_errors(&out.symbols, blk.truth.s.data());
                bits += 2 * dims.data_len() as u64;
            }
            let ber = errors as f64 / bits as f64;
            let theory = q_func((dims.antennas as f64 * 10f64.powf(snr_db / 10.0)).sqrt());
            let sigma = (theory * (1.0 - theory) / bits as f64).sqrt();
            assert!(
                (ber - theory).abs() < 4.0 * sigma + 2e-4,
                "snr {snr_db}: ber {ber} vs theory {theory}"
            );
        }
    }
}
