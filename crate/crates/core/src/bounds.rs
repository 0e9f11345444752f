//! Modified Cramér-Rao bounds for the channel coefficients and delays.
//!
//! Times are measured in chip intervals `T_c`, so the sample interval is
//! `T_s = 1/Q`, Gabor bandwidths are in `1/T_c` and delay bounds in `T_c²`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sysmodel::{check_signatures, ChipShape, DelayIndex, SignatureSet, SystemConfig};

/// Delay variance bound. Rectangular chips have unbounded Gabor bandwidth,
/// which sends the continuous-time bound to zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum DelayBound {
    Finite(f64),
    ZeroLimit,
}

impl DelayBound {
    pub fn value(self) -> f64 {
        match self {
            DelayBound::Finite(v) => v,
            DelayBound::ZeroLimit => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McrbReport {
    /// `E|â_k − a_k|²` bound, per user.
    pub var_a_bound: Vec<f64>,
    /// Delay bound in `T_c²`, per user.
    pub var_tau_bound: Vec<DelayBound>,
    /// Delay bound in `T_c²` from the sampled waveform's finite bandwidth.
    pub var_tau_grid_proxy: Vec<f64>,
    /// Gabor bandwidth of the sampled waveform, `1/T_c`.
    pub gabor_bandwidth: Vec<f64>,
    /// Fisher information diagonal: `2K` coefficient entries then `K` delay entries.
    pub fisher_diag: Vec<f64>,
}

const PAD: usize = 4;

/// Root second spectral moment of a sampled waveform.
pub fn gabor_bandwidth(waveform: &[C64], sample_interval: f64) -> Result<f64> {
    if !(sample_interval > 0.0) {
        return Err(invalid("sample interval must be positive"));
    }
    if waveform.iter().all(|x| x.norm_sqr() == 0.0) {
        return Err(invalid("Gabor bandwidth of an all-zero waveform"));
    }
    // Zero padding keeps the support finite instead of periodic.
    let n = PAD * waveform.len();
    let mut spec = waveform.to_vec();
    spec.resize(n, C64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut spec);
    let df = 1.0 / (n as f64 * sample_interval);
    let (mut num, mut den) = (0.0, 0.0);
    for (k, x) in spec.iter().enumerate() {
        let f = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 } * df;
        num += f * f * x.norm_sqr();
        den += x.norm_sqr();
    }
    Ok((num / den).sqrt())
}

/// `Σ_n |s'(n T_s)|²` with central differences inside the support and
/// one-sided differences at its edges.
fn derivative_energy(waveform: &[C64], sample_interval: f64) -> f64 {
    let n = waveform.len();
    if n < 2 {
        return 0.0;
    }
    (0..n)
        .map(|i| {
            let d = if i == 0 {
                (waveform[1] - waveform[0]) / sample_interval
            } else if i == n - 1 {
                (waveform[n - 1] - waveform[n - 2]) / sample_interval
            } else {
                (waveform[i + 1] - waveform[i - 1]) / (2.0 * sample_interval)
            };
            d.norm_sqr()
        })
        .sum()
}

pub fn mcrb_channel(n0: f64, symbols: usize) -> Result<f64> {
    if symbols == 0 || !(n0 > 0.0) {
        return Err(invalid("channel bound needs L >= 1 and N0 > 0"));
    }
    Ok(n0 / symbols as f64)
}

/// `1 / (8π²·L·γ̄·B²)`; an infinite bandwidth gives [`DelayBound::ZeroLimit`].
pub fn mcrb_delay(avg_snr: f64, symbols: usize, bandwidth: f64) -> Result<DelayBound> {
    if !(avg_snr > 0.0) || symbols == 0 {
        return Err(invalid("delay bound needs a positive SNR and L >= 1"));
    }
    if bandwidth == f64::INFINITY {
        return Ok(DelayBound::ZeroLimit);
    }
    if !(bandwidth > 0.0) {
        return Err(invalid(format!("Gabor bandwidth must be positive, got {bandwidth}")));
    }
    Ok(DelayBound::Finite(1.0 / (8.0 * PI * PI * symbols as f64 * avg_snr * bandwidth * bandwidth)))
}

/// Diagonal of the modified Fisher information.
pub fn fisher_diagonal(cfg: &SystemConfig, sig: &SignatureSet, delays: &[DelayIndex]) -> Result<Vec<f64>> {
    check_signatures(cfg, sig)?;
    if delays.len() != cfg.users {
        return Err(invalid("need one delay per user"));
    }
    if let Some(t) = delays.iter().find(|t| t.get() >= cfg.delay_grid_len()) {
        return Err(invalid(format!("delay index {} outside grid", t.get())));
    }
    let k = cfg.users;
    let l = cfg.symbols as f64;
    let ts = 1.0 / cfg.samples_per_chip as f64;
    let mut out = vec![2.0 / cfg.n0 * l; 2 * k];
    // A grid delay only shifts the waveform, so the derivative energy does not depend on it.
    out.extend(
        (0..k).map(|u| 2.0 / cfg.n0 * cfg.sigma2[u] * l * derivative_energy(sig.waveform(u), ts)),
    );
    Ok(out)
}

pub fn mcrb_report(cfg: &SystemConfig, sig: &SignatureSet, delays: &[DelayIndex]) -> Result<McrbReport> {
    cfg.validate()?;
    let fisher_diag = fisher_diagonal(cfg, sig, delays)?;
    let ts = 1.0 / cfg.samples_per_chip as f64;
    let mut gabor = Vec::with_capacity(cfg.users);
    let mut bound = Vec::with_capacity(cfg.users);
    let mut proxy = Vec::with_capacity(cfg.users);
    for k in 0..cfg.users {
        let b = gabor_bandwidth(sig.waveform(k), ts)?;
        let snr = cfg.avg_snr(k);
        proxy.push(mcrb_delay(snr, cfg.symbols, b)?.value());
        bound.push(match sig.shape() {
            ChipShape::Rectangular => DelayBound::ZeroLimit,
            ChipShape::Custom => mcrb_delay(snr, cfg.symbols, b)?,
        });
        gabor.push(b);
    }
    Ok(McrbReport {
        var_a_bound: vec![mcrb_channel(cfg.n0, cfg.symbols)?; cfg.users],
        var_tau_bound: bound,
        var_tau_grid_proxy: proxy,
        gabor_bandwidth: gabor,
        fisher_diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::generate_signatures;

    fn gaussian_pulse(n: usize, ts: f64, width: f64) -> Vec<C64> {
        let t0 = (n as f64 - 1.0) * ts / 2.0;
        let raw: Vec<f64> = (0..n).map(|i| (-(i as f64 * ts - t0).powi(2) / (2.0 * width * width)).exp()).collect();
        let e = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        raw.iter().map(|x| C64::new(x / e, 0.0)).collect()
    }

    #[test]
    fn spectral_line() {
        let n = 64;
        let ts = 0.25;
        let bin = 5;
        let f0 = bin as f64 / (n as f64 * ts);
        let w: Vec<C64> = (0..n)
            .map(|i| C64::from_polar(1.0, 2.0 * PI * f0 * i as f64 * ts))
            .collect();
        let resolution = 1.0 / (n as f64 * ts);
        assert!((gabor_bandwidth(&w, ts).unwrap() - f0).abs() < resolution);
    }

    #[test]
    fn matches_direct_dft_moment() {
        let ts = 1.0 / 12.0;
        let mut w = gaussian_pulse(48, ts, 0.4);
        w.resize(48 * PAD, C64::new(0.0, 0.0));
        let n = w.len();
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..n {
            let x: C64 = (0..n)
                .map(|i| w[i] * C64::from_polar(1.0, -2.0 * PI * (k * i) as f64 / n as f64))
                .sum();
            let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            let f = kk / (n as f64 * ts);
            num += f * f * x.norm_sqr();
            den += x.norm_sqr();
        }
        let pulse = &w[..48];
        assert!((gabor_bandwidth(pulse, ts).unwrap() - (num / den).sqrt()).abs() < 1e-9);
        // Continuous-time value for a Gaussian pulse.
        let analytic = 1.0 / (2.0 * PI * 0.4 * 2f64.sqrt());
        assert!((gabor_bandwidth(pulse, ts).unwrap() / analytic - 1.0).abs() < 1e-3);
    }

    #[test]
    fn constant_chips_have_finite_bandwidth() {
        let w = vec![C64::new(0.25, 0.0); 16];
        let b = gabor_bandwidth(&w, 0.5).unwrap();
        assert!(b > 0.0 && b.is_finite());
    }

    #[test]
    fn zero_waveform_rejected() {
        assert!(gabor_bandwidth(&[C64::new(0.0, 0.0); 8], 0.1).is_err());
        assert!(mcrb_delay(1.0, 80, 0.0).is_err());
        assert_eq!(mcrb_delay(1.0, 80, f64::INFINITY).unwrap(), DelayBound::ZeroLimit);
    }

    #[test]
    fn delay_bound_examples() {
        let v = mcrb_delay(1.0, 80, 1.0).unwrap().value();
        assert!((v - 1.0 / (640.0 * PI * PI)).abs() < 1e-18);
        assert!((v - 1.583e-4).abs() < 1e-7);
        let quarter = mcrb_delay(1.0, 80, 2.0).unwrap().value();
        assert!((quarter * 4.0 - v).abs() < 1e-18);
    }

    #[test]
    fn channel_bound_examples() {
        assert_eq!(mcrb_channel(1.0, 80).unwrap(), 0.0125);
        assert_eq!(mcrb_channel(0.5, 80).unwrap(), 0.00625);
        assert_eq!(mcrb_channel(1.0, 160).unwrap() * 2.0, mcrb_channel(1.0, 80).unwrap());
        assert!(mcrb_channel(1.0, 0).is_err());
    }

    #[test]
    fn rectangular_bandwidth_grows_with_oversampling() {
        let mut cfg = SystemConfig::paper_scenario();
        cfg.samples_per_chip = 4;
        let coarse = generate_signatures(&cfg, 3);
        cfg.samples_per_chip = 12;
        let fine = generate_signatures(&cfg, 3);
        let b4 = gabor_bandwidth(coarse.waveform(0), 0.25).unwrap();
        let b12 = gabor_bandwidth(fine.waveform(0), 1.0 / 12.0).unwrap();
        assert!(b12 > b4);
    }

    #[test]
    fn fisher_inversion_matches_closed_form_for_smooth_pulse() {
        let mut cfg = SystemConfig::paper_scenario();
        cfg.users = 1;
        cfg.sigma2 = vec![2.0];
        let ts = 1.0 / 12.0;
        let sig = SignatureSet::from_waveforms(vec![gaussian_pulse(cfg.symbol_len(), ts, 0.8)]).unwrap();
        let tau = [DelayIndex::new(3, &cfg).unwrap()];
        let fisher = fisher_diagonal(&cfg, &sig, &tau).unwrap();
        assert_eq!(fisher[0], 160.0);
        assert_eq!(fisher[1], 160.0);
        let b = gabor_bandwidth(sig.waveform(0), ts).unwrap();
        let closed = mcrb_delay(cfg.avg_snr(0), cfg.symbols, b).unwrap().value();
        assert!(((1.0 / fisher[2]) / closed - 1.0).abs() < 0.05);

        let report = mcrb_report(&cfg, &sig, &tau).unwrap();
        assert!(matches!(report.var_tau_bound[0], DelayBound::Finite(_)));
        cfg.n0 = 2.0;
        let halved = fisher_diagonal(&cfg, &sig, &tau).unwrap();
        for (a, b) in fisher.iter().zip(&halved) {
            assert!((a / 2.0 - b).abs() < 1e-9 * a);
        }
    }

    #[test]
    fn rectangular_report_flags_zero_limit() {
        let cfg = SystemConfig::paper_scenario();
        let sig = generate_signatures(&cfg, 1);
        let tau = vec![DelayIndex::new(0, &cfg).unwrap(); cfg.users];
        let report = mcrb_report(&cfg, &sig, &tau).unwrap();
        assert!(report.var_tau_bound.iter().all(|b| *b == DelayBound::ZeroLimit));
        assert!(report.var_tau_grid_proxy.iter().all(|&v| v > 0.0 && v.is_finite()));
        assert!(report.var_a_bound.iter().all(|&v| v == 0.0125));
        assert_eq!(report.fisher_diag.len(), 15);
    }
}
