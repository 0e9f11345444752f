//! Discrete-time asynchronous DS-CDMA observation model.
//!
//! The received frame is `r = Σ_k Σ_ℓ S_k(τ_k, ℓ) a_k d_k(ℓ) + w`, where
//! `S_k(τ_k, ℓ)` is user `k`'s unit-energy oversampled signature placed at
//! sample `Q·Nc·ℓ + δ_k` of an otherwise all-zero vector of length
//! `M = Q·Nc·(L+1) − 1`, `a_k` is a flat-fading coefficient and `w` is
//! circular white Gaussian noise with per-sample variance `N0`.
//!
//! Delays live on the sample grid `δ_k ∈ {0, …, ⌈Q·Nc/2⌉ − 1}`, i.e.
//! `τ_k = δ_k·T_s < T_b/2` with `T_s = T_c/Q`.
//!
//! Symbols are stored flat with index `q = k·L + ℓ`.

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::seed::rng_from;

fn default_burn_in() -> usize {
    10
}

fn default_sage_iters() -> usize {
    25
}

/// Scenario constants shared by the simulator and the receiver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Number of users `K`.
    pub users: usize,
    /// Chips per symbol `Nc`.
    pub chips: usize,
    /// Samples per chip `Q`.
    pub samples_per_chip: usize,
    /// Symbols per frame `L`.
    pub symbols: usize,
    /// Pilot symbols at the head of each user's frame `Lp`.
    pub pilots: usize,
    /// Noise level (linear), per complex sample.
    pub n0: f64,
    /// Per-user channel variances (linear).
    pub sigma2: Vec<f64>,
    /// Retained Gibbs sweeps per E-step `Nt`.
    pub gibbs_samples: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Total SAGE parameter updates (one user per update).
    #[serde(default = "default_sage_iters")]
    pub sage_iters: usize,
    pub seed: u64,
}

impl SystemConfig {
    /// The five-user near-far scenario: `Nc = 8`, `Q = 12`, `L = 80`, `Lp = 4`,
    /// powers −4, −2, 0, +2, +4 dB, 50 retained Gibbs sweeps, `N0 = 1`.
    pub fn paper_scenario() -> Self {
        Self {
            users: 5,
            chips: 8,
            samples_per_chip: 12,
            symbols: 80,
            pilots: 4,
            n0: 1.0,
            sigma2: [-4.0, -2.0, 0.0, 2.0, 4.0].iter().map(|&db| db_to_linear(db)).collect(),
            gibbs_samples: 50,
            burn_in: default_burn_in(),
            sage_iters: default_sage_iters(),
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.chips == 0 || self.samples_per_chip == 0 || self.symbols == 0 {
            return Err(invalid("users, chips, samples_per_chip and symbols must all be >= 1"));
        }
        if self.pilots >= self.symbols {
            return Err(invalid(format!(
                "pilots ({}) must be smaller than symbols ({})",
                self.pilots, self.symbols
            )));
        }
        if !(self.n0.is_finite() && self.n0 > 0.0) {
            return Err(invalid(format!("n0 must be finite and > 0, got {}", self.n0)));
        }
        if self.sigma2.len() != self.users {
            return Err(invalid(format!(
                "sigma2 has {} entries, expected one per user ({})",
                self.sigma2.len(),
                self.users
            )));
        }
        if let Some(s) = self.sigma2.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(invalid(format!("sigma2 entries must be finite and > 0, got {s}")));
        }
        if self.gibbs_samples == 0 {
            return Err(invalid("gibbs_samples must be >= 1"));
        }
        if self.sage_iters == 0 {
            return Err(invalid("sage_iters must be >= 1"));
        }
        Ok(())
    }

    /// Samples per symbol, `Q·Nc`.
    pub fn symbol_len(&self) -> usize {
        self.samples_per_chip * self.chips
    }

    /// Received-vector length `M = Q·Nc·(L+1) − 1`.
    pub fn sample_len(&self) -> usize {
        self.symbol_len() * (self.symbols + 1) - 1
    }

    /// Number of delay hypotheses `δ` with `δ·T_s < T_b/2`.
    pub fn delay_grid_len(&self) -> usize {
        self.symbol_len().div_ceil(2)
    }

    /// Payload symbols per user per frame.
    pub fn payload_len(&self) -> usize {
        self.symbols - self.pilots
    }

    /// Flat symbol count `K·L`.
    pub fn n_symbols(&self) -> usize {
        self.users * self.symbols
    }

    /// Average SNR `σ_k²/N0` (linear).
    pub fn avg_snr(&self, k: usize) -> f64 {
        self.sigma2[k] / self.n0
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Chip pulse used to build the oversampled waveforms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChipShape {
    Rectangular,
    /// Arbitrary user-supplied sampled waveform.
    Custom,
}

/// Per-user spreading codes and their oversampled unit-energy waveforms.
#[derive(Clone, Debug, PartialEq)]
pub struct SignatureSet {
    chips: Vec<Vec<i8>>,
    waveforms: Vec<Vec<C64>>,
    shape: ChipShape,
}

impl SignatureSet {
    /// Wraps arbitrary sampled waveforms, rescaling each to unit energy.
    ///
    /// All waveforms must have the same nonzero length (one symbol, `Q·Nc`).
    pub fn from_waveforms(waveforms: Vec<Vec<C64>>) -> Result<Self> {
        let len = waveforms.first().map(Vec::len).unwrap_or(0);
        if len == 0 || waveforms.iter().any(|w| w.len() != len) {
            return Err(invalid("waveforms must be nonempty and of equal length"));
        }
        let waveforms = waveforms
            .into_iter()
            .map(|w| {
                let energy: f64 = w.iter().map(|x| x.norm_sqr()).sum();
                if energy <= 0.0 || !energy.is_finite() {
                    return Err(invalid("waveform energy must be finite and nonzero"));
                }
                let scale = energy.sqrt().recip();
                Ok(w.into_iter().map(|x| x * scale).collect())
            })
            .collect::<Result<Vec<Vec<C64>>>>()?;
        Ok(Self {
            chips: Vec::new(),
            waveforms,
            shape: ChipShape::Custom,
        })
    }

    pub fn users(&self) -> usize {
        self.waveforms.len()
    }

    /// Antipodal chip signs (empty for custom waveforms).
    pub fn chips(&self, k: usize) -> &[i8] {
        self.chips.get(k).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn waveform(&self, k: usize) -> &[C64] {
        &self.waveforms[k]
    }

    pub fn waveforms(&self) -> &[Vec<C64>] {
        &self.waveforms
    }

    pub fn shape(&self) -> ChipShape {
        self.shape
    }

    pub fn symbol_len(&self) -> usize {
        self.waveforms.first().map(Vec::len).unwrap_or(0)
    }
}

/// Draws `K` random antipodal codes and builds rectangular-chip waveforms.
///
/// Each chip sign is repeated `Q` times and the waveform is scaled by
/// `1/sqrt(Q·Nc)`, so every waveform has unit energy.
pub fn generate_signatures(cfg: &SystemConfig, seed: u64) -> SignatureSet {
    let mut rng = rng_from(seed);
    let len = cfg.symbol_len();
    let amp = (len as f64).sqrt().recip();
    let chips: Vec<Vec<i8>> = (0..cfg.users)
        .map(|_| {
            (0..cfg.chips)
                .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                .collect()
        })
        .collect();
    let waveforms = chips
        .iter()
        .map(|code| {
            code.iter()
                .flat_map(|&c| std::iter::repeat_n(C64::new(amp * f64::from(c), 0.0), cfg.samples_per_chip))
                .collect()
        })
        .collect();
    SignatureSet {
        chips,
        waveforms,
        shape: ChipShape::Rectangular,
    }
}

/// Sub-symbol sample offset `δ`, with `τ = δ·T_s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DelayIndex(usize);

impl DelayIndex {
    pub fn new(delta: usize, cfg: &SystemConfig) -> Result<Self> {
        if delta >= cfg.delay_grid_len() {
            return Err(invalid(format!(
                "delay index {delta} outside grid [0, {})",
                cfg.delay_grid_len()
            )));
        }
        Ok(Self(delta))
    }

    pub(crate) fn new_unchecked(delta: usize) -> Self {
        Self(delta)
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Delay as a fraction of the symbol duration, `τ/T_b`.
    pub fn symbol_fraction(self, cfg: &SystemConfig) -> f64 {
        self.0 as f64 / cfg.symbol_len() as f64
    }
}

/// `K×L` symbol matrix over `{−1, +1}`, stored user-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolFrame {
    users: usize,
    symbols: usize,
    data: Vec<i8>,
}

impl SymbolFrame {
    pub fn new(users: usize, symbols: usize, data: Vec<i8>) -> Result<Self> {
        if data.len() != users * symbols {
            return Err(invalid(format!(
                "symbol frame needs {} entries, got {}",
                users * symbols,
                data.len()
            )));
        }
        if data.iter().any(|&d| d != 1 && d != -1) {
            return Err(invalid("symbols must be +1 or -1"));
        }
        Ok(Self { users, symbols, data })
    }

    pub fn filled(users: usize, symbols: usize, value: i8) -> Self {
        Self {
            users,
            symbols,
            data: vec![value; users * symbols],
        }
    }

    pub fn get(&self, k: usize, ell: usize) -> i8 {
        self.data[k * self.symbols + ell]
    }

    pub fn set(&mut self, k: usize, ell: usize, v: i8) {
        self.data[k * self.symbols + ell] = v;
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.data
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }
}

/// Known symbols: the first `Lp` slots of every user, all `+1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pilots {
    users: usize,
    symbols: usize,
    count: usize,
}

impl Pilots {
    pub const VALUE: i8 = 1;

    pub fn head(users: usize, symbols: usize, count: usize) -> Self {
        Self { users, symbols, count: count.min(symbols) }
    }

    pub fn for_config(cfg: &SystemConfig) -> Self {
        Self::head(cfg.users, cfg.symbols, cfg.pilots)
    }

    /// No known symbols.
    pub fn none(users: usize, symbols: usize) -> Self {
        Self::head(users, symbols, 0)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_pilot(&self, q: usize) -> bool {
        q % self.symbols < self.count
    }

    /// Pilot value at flat index `q`, if `q` is a pilot slot.
    pub fn value(&self, q: usize) -> Option<i8> {
        self.is_pilot(q).then_some(Self::VALUE)
    }

    /// Boolean `K×L` mask, user-major.
    pub fn mask(&self) -> Vec<bool> {
        (0..self.users * self.symbols).map(|q| self.is_pilot(q)).collect()
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.users * self.symbols).filter(|&q| !self.is_pilot(q)).collect()
    }

    /// Overwrites pilot slots of `frame` with their known values.
    pub fn apply(&self, frame: &mut [i8]) {
        for (q, d) in frame.iter_mut().enumerate() {
            if let Some(v) = self.value(q) {
                *d = v;
            }
        }
    }
}

/// How `a_k` is drawn for a scenario.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelModel {
    /// `a_k ~ CN(0, σ_k²)`.
    #[default]
    Rayleigh,
    /// `|a_k| = σ_k` with a uniform random phase.
    Awgn,
}

/// Ground truth for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioTruth {
    pub a: Vec<C64>,
    pub tau: Vec<DelayIndex>,
    pub d: SymbolFrame,
    pub pilots: Pilots,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReceivedVector(Vec<C64>);

impl ReceivedVector {
    pub fn new(r: Vec<C64>) -> Self {
        Self(r)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// First sample of `S_k(τ, ℓ)`.
pub fn placement(cfg: &SystemConfig, delta: DelayIndex, ell: usize) -> usize {
    cfg.symbol_len() * ell + delta.get()
}

/// The zero-padded column `S_k(τ_k, ℓ)` of length `M`.
pub fn spreading_vector(
    cfg: &SystemConfig,
    sig: &SignatureSet,
    k: usize,
    delta: DelayIndex,
    ell: usize,
) -> Result<Vec<C64>> {
    check_signatures(cfg, sig)?;
    if k >= cfg.users {
        return Err(invalid(format!("user {k} out of range")));
    }
    if ell >= cfg.symbols {
        return Err(invalid(format!("symbol index {ell} out of range [0, {})", cfg.symbols)));
    }
    if delta.get() >= cfg.delay_grid_len() {
        return Err(invalid(format!("delay index {} outside grid", delta.get())));
    }
    let mut out = vec![C64::new(0.0, 0.0); cfg.sample_len()];
    let start = placement(cfg, delta, ell);
    out[start..start + cfg.symbol_len()].copy_from_slice(sig.waveform(k));
    Ok(out)
}

pub(crate) fn check_signatures(cfg: &SystemConfig, sig: &SignatureSet) -> Result<()> {
    if sig.users() != cfg.users || sig.symbol_len() != cfg.symbol_len() {
        return Err(invalid(format!(
            "signature set is {}x{}, config expects {}x{}",
            sig.users(),
            sig.symbol_len(),
            cfg.users,
            cfg.symbol_len()
        )));
    }
    Ok(())
}

fn check_truth(cfg: &SystemConfig, truth: &ScenarioTruth) -> Result<()> {
    if truth.a.len() != cfg.users
        || truth.tau.len() != cfg.users
        || truth.d.users() != cfg.users
        || truth.d.symbols() != cfg.symbols
    {
        return Err(invalid("scenario dimensions do not match the config"));
    }
    if let Some(t) = truth.tau.iter().find(|t| t.get() >= cfg.delay_grid_len()) {
        return Err(invalid(format!("delay index {} outside grid", t.get())));
    }
    Ok(())
}

/// Noise-free part `Σ_k Σ_ℓ S_k(τ_k, ℓ) a_k d_k(ℓ)`.
pub fn noiseless_signal(cfg: &SystemConfig, sig: &SignatureSet, truth: &ScenarioTruth) -> Result<Vec<C64>> {
    check_signatures(cfg, sig)?;
    check_truth(cfg, truth)?;
    let n = cfg.symbol_len();
    let mut r = vec![C64::new(0.0, 0.0); cfg.sample_len()];
    for k in 0..cfg.users {
        let w = sig.waveform(k);
        for ell in 0..cfg.symbols {
            let g = truth.a[k] * f64::from(truth.d.get(k, ell));
            let start = placement(cfg, truth.tau[k], ell);
            for (x, s) in r[start..start + n].iter_mut().zip(w) {
                *x += g * s;
            }
        }
    }
    Ok(r)
}

/// `M` i.i.d. `CN(0, N0)` samples.
pub fn draw_noise(cfg: &SystemConfig, seed: u64) -> Vec<C64> {
    let mut rng = rng_from(seed);
    let sd = (cfg.n0 / 2.0).sqrt();
    (0..cfg.sample_len())
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(sd * re, sd * im)
        })
        .collect()
}

/// Simulates `r = S(τ)·A·d + w` with `w = draw_noise(cfg, seed)`.
pub fn simulate_received(
    cfg: &SystemConfig,
    sig: &SignatureSet,
    truth: &ScenarioTruth,
    seed: u64,
) -> Result<ReceivedVector> {
    let mut r = noiseless_signal(cfg, sig, truth)?;
    for (x, w) in r.iter_mut().zip(draw_noise(cfg, seed)) {
        *x += w;
    }
    Ok(ReceivedVector(r))
}

/// Rayleigh-faded scenario with delays uniform on the grid covering
/// `[0, tau_max_fraction·T_b)`.
pub fn draw_scenario(cfg: &SystemConfig, seed: u64, tau_max_fraction: f64) -> Result<ScenarioTruth> {
    draw_scenario_with(cfg, seed, tau_max_fraction, ChannelModel::Rayleigh)
}

pub fn draw_scenario_with(
    cfg: &SystemConfig,
    seed: u64,
    tau_max_fraction: f64,
    channel: ChannelModel,
) -> Result<ScenarioTruth> {
    cfg.validate()?;
    let delay_count = delay_support(cfg, tau_max_fraction)?;
    let mut rng = rng_from(seed);
    let a = cfg
        .sigma2
        .iter()
        .map(|&s2| match channel {
            ChannelModel::Rayleigh => {
                let sd = (s2 / 2.0).sqrt();
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                C64::new(sd * re, sd * im)
            }
            ChannelModel::Awgn => {
                let phase = rng.random::<f64>() * std::f64::consts::TAU;
                C64::from_polar(s2.sqrt(), phase)
            }
        })
        .collect();
    let tau = (0..cfg.users)
        .map(|_| DelayIndex(rng.random_range(0..delay_count)))
        .collect();
    let pilots = Pilots::for_config(cfg);
    let mut data: Vec<i8> = (0..cfg.n_symbols())
        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
        .collect();
    pilots.apply(&mut data);
    Ok(ScenarioTruth {
        a,
        tau,
        d: SymbolFrame::new(cfg.users, cfg.symbols, data)?,
        pilots,
    })
}

/// Number of grid delays `δ` with `δ·T_s < fraction·T_b`.
pub fn delay_support(cfg: &SystemConfig, tau_max_fraction: f64) -> Result<usize> {
    if !(tau_max_fraction > 0.0 && tau_max_fraction <= 0.5) {
        return Err(invalid(format!(
            "tau_max_fraction must lie in (0, 0.5], got {tau_max_fraction}"
        )));
    }
    let limit = tau_max_fraction * cfg.symbol_len() as f64;
    Ok((limit.ceil() as usize).clamp(1, cfg.delay_grid_len()))
}
