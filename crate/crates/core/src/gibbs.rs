//! Gibbs sampling of the transmitted symbols and Rao-Blackwellized soft statistics.
//!
//! Given the current parameters the frame is the linear Gaussian model
//! `r = G d + w` with `G = S(τ)·A`, whose `q`-th column is `g_q = a_k S_k(τ_k, ℓ)`
//! (`q = k·L + ℓ`). The sampler scans the non-pilot symbols in user-major order
//! and draws each one from its full conditional
//!
//! ```text
//! P(d_q = m | rest) = 1 / (1 + exp(−m·λ)),   λ = (4/N0)·Re{ g_q†(r − G_q̄ d_q̄) }.
//! ```
//!
//! The soft symbol `E[d_q]` and the pairwise products `E[d_q d_p]` needed by the
//! E-step are estimated by averaging exact conditional probabilities over the
//! retained samples instead of counting indicator hits.
//!
//! A residual `e = r − G d` is kept up to date so that each conditional costs one
//! inner product over the column support (`Q·Nc` samples).

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::seed::rng_from;
use crate::sysmodel::{check_signatures, DelayIndex, Pilots, ReceivedVector, SignatureSet, SystemConfig};

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln cosh(x)` without overflow.
pub(crate) fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// The linear model `r = G d + w` at fixed channel coefficients and delays.
#[derive(Clone, Debug)]
pub struct EffectiveModel<'a> {
    r: &'a [C64],
    n0: f64,
    users: usize,
    symbols: usize,
    symbol_len: usize,
    delays: Vec<usize>,
    coeffs: Vec<C64>,
    energy: Vec<f64>,
    waveforms: &'a [Vec<C64>],
}

impl<'a> EffectiveModel<'a> {
    pub fn new(
        cfg: &SystemConfig,
        sig: &'a SignatureSet,
        r: &'a ReceivedVector,
        a: &[C64],
        tau: &[DelayIndex],
    ) -> Result<Self> {
        check_signatures(cfg, sig)?;
        if r.len() != cfg.sample_len() {
            return Err(invalid(format!(
                "received vector has {} samples, expected {}",
                r.len(),
                cfg.sample_len()
            )));
        }
        if a.len() != cfg.users || tau.len() != cfg.users {
            return Err(invalid("need one coefficient and one delay per user"));
        }
        if let Some(t) = tau.iter().find(|t| t.get() >= cfg.delay_grid_len()) {
            return Err(invalid(format!("delay index {} outside grid", t.get())));
        }
        let energy = a
            .iter()
            .zip(sig.waveforms())
            .map(|(ak, w)| ak.norm_sqr() * w.iter().map(|x| x.norm_sqr()).sum::<f64>())
            .collect();
        Ok(Self {
            r: r.as_slice(),
            n0: cfg.n0,
            users: cfg.users,
            symbols: cfg.symbols,
            symbol_len: cfg.symbol_len(),
            delays: tau.iter().map(|t| t.get()).collect(),
            coeffs: a.to_vec(),
            energy,
            waveforms: sig.waveforms(),
        })
    }

    pub fn r(&self) -> &[C64] {
        self.r
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    /// Number of columns `K·L`.
    pub fn n_cols(&self) -> usize {
        self.users * self.symbols
    }

    fn user_of(&self, q: usize) -> usize {
        q / self.symbols
    }

    pub fn col_start(&self, q: usize) -> usize {
        let k = self.user_of(q);
        self.symbol_len * (q % self.symbols) + self.delays[k]
    }

    pub fn col_coeff(&self, q: usize) -> C64 {
        self.coeffs[self.user_of(q)]
    }

    /// `‖g_q‖²`.
    pub fn col_energy(&self, q: usize) -> f64 {
        self.energy[self.user_of(q)]
    }

    /// `g_q† v`.
    pub fn col_dot(&self, q: usize, v: &[C64]) -> C64 {
        let k = self.user_of(q);
        let start = self.col_start(q);
        let acc: C64 = self.waveforms[k]
            .iter()
            .zip(&v[start..start + self.symbol_len])
            .map(|(s, x)| s.conj() * x)
            .sum();
        self.coeffs[k].conj() * acc
    }

    /// `v += scale·g_q`.
    pub fn col_axpy(&self, q: usize, scale: f64, v: &mut [C64]) {
        let k = self.user_of(q);
        let start = self.col_start(q);
        let g = self.coeffs[k] * scale;
        for (x, s) in v[start..start + self.symbol_len].iter_mut().zip(&self.waveforms[k]) {
            *x += g * s;
        }
    }

    /// `g_p† g_q`, computed over the overlap of the two supports.
    pub fn gram(&self, p: usize, q: usize) -> C64 {
        let (sp, sq) = (self.col_start(p), self.col_start(q));
        let lo = sp.max(sq);
        let hi = (sp + self.symbol_len).min(sq + self.symbol_len);
        if lo >= hi {
            return C64::new(0.0, 0.0);
        }
        let wp = &self.waveforms[self.user_of(p)];
        let wq = &self.waveforms[self.user_of(q)];
        let acc: C64 = (lo..hi).map(|n| wp[n - sp].conj() * wq[n - sq]).sum();
        self.col_coeff(p).conj() * self.col_coeff(q) * acc
    }

    /// Dense column `g_q` of length `M`.
    pub fn column(&self, q: usize) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); self.r.len()];
        self.col_axpy(q, 1.0, &mut v);
        v
    }

    /// `G d`.
    pub fn mean(&self, d: &[i8]) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); self.r.len()];
        for (q, &dq) in d.iter().enumerate() {
            self.col_axpy(q, f64::from(dq), &mut v);
        }
        v
    }

    /// `r − G d`.
    pub fn residual(&self, d: &[i8]) -> Vec<C64> {
        let mut e = self.r.to_vec();
        for (q, &dq) in d.iter().enumerate() {
            self.col_axpy(q, -f64::from(dq), &mut e);
        }
        e
    }

    fn check_frame(&self, d: &[i8]) -> Result<()> {
        if d.len() != self.n_cols() {
            return Err(invalid(format!("symbol vector has {} entries, expected {}", d.len(), self.n_cols())));
        }
        if d.iter().any(|&x| x != 1 && x != -1) {
            return Err(invalid("symbols must be +1 or -1"));
        }
        Ok(())
    }

    fn check_index(&self, q: usize) -> Result<()> {
        if q >= self.n_cols() {
            return Err(invalid(format!("symbol index {q} out of range [0, {})", self.n_cols())));
        }
        Ok(())
    }
}

/// Conditional log-likelihood ratio of symbol `q` given every other symbol.
///
/// `d` is a full frame; its entry at `q` is ignored.
pub fn llr_single(model: &EffectiveModel, q: usize, d: &[i8]) -> Result<f64> {
    model.check_frame(d)?;
    model.check_index(q)?;
    let mut e = model.residual(d);
    model.col_axpy(q, f64::from(d[q]), &mut e);
    Ok(4.0 / model.n0() * model.col_dot(q, &e).re)
}

/// Sufficient statistics of a symbol pair `(q, p)` with both symbols removed
/// from the residual: `α = Re{g_q† e₀}`, `β = Re{g_p† e₀}`, `γ = Re{g_p† g_q}`.
#[derive(Clone, Copy, Debug)]
struct PairStats {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl PairStats {
    /// `P(d_q = m, d_p = n | rest)`, indexed `[m > 0][n > 0]`.
    ///
    /// Factored as `P(d_p = n | d_q = m, rest) · P(d_q = m | rest)`. The first
    /// factor is the sigmoid of `ζ = (4/N0)·(n β − m n γ)`; the second uses the
    /// log-odds of `d_q` with `d_p` summed out, which reduces to
    /// `(4/N0)·α` when the two columns are orthogonal.
    fn joint(&self, n0: f64) -> [[f64; 2]; 2] {
        let c = 2.0 / n0;
        let lam_marginal = 2.0 * c * self.alpha + ln_cosh(c * (self.beta - self.gamma))
            - ln_cosh(c * (self.beta + self.gamma));
        let mut out = [[0.0; 2]; 2];
        for (mi, m) in [(0usize, -1.0f64), (1, 1.0)] {
            let pm = sigmoid(m * lam_marginal);
            for (ni, n) in [(0usize, -1.0f64), (1, 1.0)] {
                let zeta = 2.0 * c * (n * self.beta - m * n * self.gamma);
                out[mi][ni] = sigmoid(zeta) * pm;
            }
        }
        out
    }

    /// `E[d_q d_p | rest]`, honouring pilot clamps.
    fn product_mean(&self, n0: f64, pilot_q: Option<i8>, pilot_p: Option<i8>) -> f64 {
        let c = 2.0 / n0;
        match (pilot_q, pilot_p) {
            (Some(m), Some(n)) => f64::from(m * n),
            (Some(m), None) => {
                let m = f64::from(m);
                m * (c * (self.beta - m * self.gamma)).tanh()
            }
            (None, Some(n)) => {
                let n = f64::from(n);
                n * (c * (self.alpha - n * self.gamma)).tanh()
            }
            (None, None) => {
                let j = self.joint(n0);
                j[1][1] + j[0][0] - j[1][0] - j[0][1]
            }
        }
    }
}

/// Joint conditional probability `P(d_q = m, d_p = n | r, d_{p̄,q̄}, θ)`.
///
/// `d` is a full frame; its entries at `p` and `q` are ignored.
pub fn pairwise_joint_prob(model: &EffectiveModel, p: usize, q: usize, m: i8, n: i8, d: &[i8]) -> Result<f64> {
    model.check_frame(d)?;
    model.check_index(p)?;
    model.check_index(q)?;
    if p == q {
        return Err(invalid("pairwise probability needs two distinct symbols"));
    }
    if !matches!(m, 1 | -1) || !matches!(n, 1 | -1) {
        return Err(invalid("symbol values must be +1 or -1"));
    }
    let mut e0 = model.residual(d);
    model.col_axpy(p, f64::from(d[p]), &mut e0);
    model.col_axpy(q, f64::from(d[q]), &mut e0);
    let stats = PairStats {
        alpha: model.col_dot(q, &e0).re,
        beta: model.col_dot(p, &e0).re,
        gamma: model.gram(p, q).re,
    };
    Ok(stats.joint(model.n0())[usize::from(m > 0)][usize::from(n > 0)])
}

/// Markov chain state: current symbols, sweep counter and random stream.
#[derive(Clone, Debug)]
pub struct ChainState {
    d: Vec<i8>,
    sweeps: u64,
    rng: ChaCha8Rng,
}

impl ChainState {
    /// Starts from `d`, with pilot slots forced to their known values.
    pub fn new(mut d: Vec<i8>, pilots: &Pilots, seed: u64) -> Self {
        pilots.apply(&mut d);
        Self {
            d,
            sweeps: 0,
            rng: rng_from(seed),
        }
    }

    /// Uniformly random non-pilot symbols.
    pub fn random(n: usize, pilots: &Pilots, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let mut d: Vec<i8> = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        pilots.apply(&mut d);
        Self { d, sweeps: 0, rng }
    }

    pub fn symbols(&self) -> &[i8] {
        &self.d
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    /// Negates the non-pilot symbols in `range`.
    pub(crate) fn flip_free(&mut self, range: std::ops::Range<usize>, pilots: &Pilots) {
        for q in range.filter(|&q| !pilots.is_pilot(q)) {
            self.d[q] = -self.d[q];
        }
    }
}

/// Chain plus its residual `r − G d`.
struct Sampler<'m, 'a> {
    model: &'m EffectiveModel<'a>,
    pilots: &'m Pilots,
    residual: Vec<C64>,
}

impl<'m, 'a> Sampler<'m, 'a> {
    fn new(model: &'m EffectiveModel<'a>, pilots: &'m Pilots, state: &ChainState) -> Self {
        Self {
            model,
            pilots,
            residual: model.residual(&state.d),
        }
    }

    fn sweep(&mut self, state: &mut ChainState) {
        let scale = 4.0 / self.model.n0();
        for q in 0..self.model.n_cols() {
            if self.pilots.is_pilot(q) {
                continue;
            }
            let old = state.d[q];
            let u = self.model.col_dot(q, &self.residual).re;
            let lambda = scale * (u + self.model.col_energy(q) * f64::from(old));
            let new = if state.rng.random::<f64>() < sigmoid(lambda) { 1 } else { -1 };
            if new != old {
                self.model.col_axpy(q, -f64::from(new - old), &mut self.residual);
                state.d[q] = new;
            }
        }
        state.sweeps += 1;
    }
}

/// One Gibbs scan over every non-pilot symbol (user-major, then symbol index).
pub fn gibbs_sweep(model: &EffectiveModel, mut state: ChainState, pilots: &Pilots) -> ChainState {
    let mut sampler = Sampler::new(model, pilots, &state);
    sampler.sweep(&mut state);
    state
}

const LAGS: usize = 3;

/// Soft symbols `E[d_k(ℓ)]` and cross-user products `E[d_k(ℓ) d_k'(ℓ')]` for
/// `k' ≠ k`, `ℓ' ∈ {ℓ−1, ℓ, ℓ+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftStatistics {
    users: usize,
    symbols: usize,
    d_tilde: Vec<f64>,
    corr: Vec<f64>,
}

impl SoftStatistics {
    fn slot(users: usize, q: usize, k2: usize, lag: usize) -> usize {
        (q * users + k2) * LAGS + lag
    }

    pub(crate) fn from_parts(users: usize, symbols: usize, d_tilde: Vec<f64>, corr: Vec<f64>) -> Self {
        debug_assert_eq!(d_tilde.len(), users * symbols);
        debug_assert_eq!(corr.len(), users * symbols * users * LAGS);
        Self { users, symbols, d_tilde, corr }
    }

    /// Statistics of a known frame: `d̃ = d` and products `d·d'`.
    pub fn from_known_symbols(users: usize, symbols: usize, d: &[i8]) -> Self {
        let d_tilde: Vec<f64> = d.iter().map(|&x| f64::from(x)).collect();
        let mut corr = vec![0.0; users * symbols * users * LAGS];
        for_each_pair(users, symbols, |q, p, slot_qp, slot_pq| {
            let v = d_tilde[q] * d_tilde[p];
            corr[slot_qp] = v;
            corr[slot_pq] = v;
        });
        Self::from_parts(users, symbols, d_tilde, corr)
    }

    /// Plain sample averages of `d` and of the cross-user products (no
    /// Rao-Blackwellization).
    pub fn from_samples(users: usize, symbols: usize, samples: &[Vec<i8>]) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("need at least one sample"));
        }
        let n = users * symbols;
        let mut d_tilde = vec![0.0; n];
        let mut corr = vec![0.0; n * users * LAGS];
        for d in samples {
            if d.len() != n {
                return Err(invalid("sample length does not match the frame"));
            }
            for (acc, &x) in d_tilde.iter_mut().zip(d) {
                *acc += f64::from(x);
            }
            for_each_pair(users, symbols, |q, p, slot_qp, slot_pq| {
                let v = f64::from(d[q] * d[p]);
                corr[slot_qp] += v;
                corr[slot_pq] += v;
            });
        }
        let inv = 1.0 / samples.len() as f64;
        d_tilde.iter_mut().chain(corr.iter_mut()).for_each(|x| *x *= inv);
        Ok(Self::from_parts(users, symbols, d_tilde, corr))
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn d_tilde(&self, k: usize, ell: usize) -> f64 {
        self.d_tilde[k * self.symbols + ell]
    }

    pub fn d_tilde_all(&self) -> &[f64] {
        &self.d_tilde
    }

    /// `E[d_k(ℓ) d_k2(ℓ2)]`.
    pub fn corr(&self, k: usize, ell: usize, k2: usize, ell2: usize) -> Result<f64> {
        if k == k2 {
            return Err(invalid("soft correlation is only defined across distinct users"));
        }
        if k >= self.users || k2 >= self.users || ell >= self.symbols || ell2 >= self.symbols {
            return Err(invalid("soft correlation index out of range"));
        }
        if ell.abs_diff(ell2) > 1 {
            return Err(invalid("soft correlation lag must be -1, 0 or +1"));
        }
        let lag = ell2 + 1 - ell;
        Ok(self.corr[Self::slot(self.users, k * self.symbols + ell, k2, lag)])
    }

    /// Sign of the soft symbols, ties broken to `+1`.
    pub fn hard_decisions(&self) -> Vec<i8> {
        self.d_tilde.iter().map(|&x| if x < 0.0 { -1 } else { 1 }).collect()
    }
}

/// Calls `f(q, p, slot_qp, slot_pq)` once for every unordered cross-user pair
/// within one symbol lag.
pub(crate) fn for_each_pair(users: usize, symbols: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
    for k in 0..users {
        for k2 in k + 1..users {
            for ell in 0..symbols {
                for ell2 in ell.saturating_sub(1)..(ell + 2).min(symbols) {
                    let q = k * symbols + ell;
                    let p = k2 * symbols + ell2;
                    let slot_qp = SoftStatistics::slot(users, q, k2, ell2 + 1 - ell);
                    let slot_pq = SoftStatistics::slot(users, p, k, ell + 1 - ell2);
                    f(q, p, slot_qp, slot_pq);
                }
            }
        }
    }
}

struct Pair {
    q: usize,
    p: usize,
    gamma: f64,
    slot_qp: usize,
    slot_pq: usize,
}

/// Running Rao-Blackwell sums over retained samples.
struct SoftAccumulator {
    pairs: Vec<Pair>,
    p_plus: Vec<f64>,
    corr: Vec<f64>,
    u: Vec<f64>,
    count: usize,
}

impl SoftAccumulator {
    fn new(model: &EffectiveModel) -> Self {
        let (users, symbols) = (model.users(), model.symbols());
        let mut pairs = Vec::new();
        for_each_pair(users, symbols, |q, p, slot_qp, slot_pq| {
            pairs.push(Pair {
                q,
                p,
                gamma: model.gram(p, q).re,
                slot_qp,
                slot_pq,
            })
        });
        Self {
            pairs,
            p_plus: vec![0.0; users * symbols],
            corr: vec![0.0; users * symbols * users * LAGS],
            u: vec![0.0; users * symbols],
            count: 0,
        }
    }

    /// Adds the conditionals of one complete sample `d` with residual `r − G d`.
    fn add(&mut self, model: &EffectiveModel, pilots: &Pilots, d: &[i8], residual: &[C64]) {
        let n0 = model.n0();
        let scale = 4.0 / n0;
        for q in 0..model.n_cols() {
            self.u[q] = model.col_dot(q, residual).re;
        }
        for q in 0..model.n_cols() {
            if !pilots.is_pilot(q) {
                let lambda = scale * (self.u[q] + model.col_energy(q) * f64::from(d[q]));
                self.p_plus[q] += sigmoid(lambda);
            }
        }
        for pair in &self.pairs {
            let (dq, dp) = (f64::from(d[pair.q]), f64::from(d[pair.p]));
            let stats = PairStats {
                alpha: self.u[pair.q] + model.col_energy(pair.q) * dq + pair.gamma * dp,
                beta: self.u[pair.p] + model.col_energy(pair.p) * dp + pair.gamma * dq,
                gamma: pair.gamma,
            };
            let v = stats.product_mean(n0, pilots.value(pair.q), pilots.value(pair.p));
            self.corr[pair.slot_qp] += v;
            self.corr[pair.slot_pq] += v;
        }
        self.count += 1;
    }

    fn finish(self, model: &EffectiveModel, pilots: &Pilots) -> SoftStatistics {
        let inv = 1.0 / self.count as f64;
        let d_tilde = self
            .p_plus
            .iter()
            .enumerate()
            .map(|(q, &s)| match pilots.value(q) {
                Some(v) => f64::from(v),
                None => (2.0 * s * inv - 1.0).clamp(-1.0, 1.0),
            })
            .collect();
        let corr = self.corr.iter().map(|&s| (s * inv).clamp(-1.0, 1.0)).collect();
        SoftStatistics::from_parts(model.users(), model.symbols(), d_tilde, corr)
    }
}

/// Runs `burn_in` discarded and `nt` retained sweeps from `state`, returning the
/// Rao-Blackwellized soft statistics. `state` is left at the final sample so
/// the next E-step can warm-start from it.
pub fn run_estep(
    model: &EffectiveModel,
    pilots: &Pilots,
    state: &mut ChainState,
    nt: usize,
    burn_in: usize,
) -> Result<SoftStatistics> {
    model.check_frame(&state.d)?;
    if nt == 0 {
        return Err(invalid("need at least one retained sample"));
    }
    let mut sampler = Sampler::new(model, pilots, state);
    for _ in 0..burn_in {
        sampler.sweep(state);
    }
    let mut acc = SoftAccumulator::new(model);
    for _ in 0..nt {
        sampler.sweep(state);
        acc.add(model, pilots, &state.d, &sampler.residual);
    }
    Ok(acc.finish(model, pilots))
}

/// Soft symbols from a fresh random chain, plus the retained samples.
pub fn estimate_soft_symbols(
    model: &EffectiveModel,
    pilots: &Pilots,
    nt: usize,
    burn_in: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<Vec<i8>>)> {
    if nt == 0 {
        return Err(invalid("need at least one retained sample"));
    }
    let mut state = ChainState::random(model.n_cols(), pilots, seed);
    let mut sampler = Sampler::new(model, pilots, &state);
    for _ in 0..burn_in {
        sampler.sweep(&mut state);
    }
    let scale = 4.0 / model.n0();
    let mut p_plus = vec![0.0; model.n_cols()];
    let mut samples = Vec::with_capacity(nt);
    for _ in 0..nt {
        sampler.sweep(&mut state);
        for (q, acc) in p_plus.iter_mut().enumerate() {
            if !pilots.is_pilot(q) {
                let u = model.col_dot(q, &sampler.residual).re;
                *acc += sigmoid(scale * (u + model.col_energy(q) * f64::from(state.d[q])));
            }
        }
        samples.push(state.d.clone());
    }
    let d_tilde = p_plus
        .iter()
        .enumerate()
        .map(|(q, &s)| match pilots.value(q) {
            Some(v) => f64::from(v),
            None => (2.0 * s / nt as f64 - 1.0).clamp(-1.0, 1.0),
        })
        .collect();
    Ok((d_tilde, samples))
}

/// Soft statistics (symbols and cross-user products) from stored samples.
pub fn estimate_soft_correlations(
    model: &EffectiveModel,
    pilots: &Pilots,
    samples: &[Vec<i8>],
) -> Result<SoftStatistics> {
    if samples.is_empty() {
        return Err(invalid("need at least one sample"));
    }
    let mut acc = SoftAccumulator::new(model);
    for d in samples {
        model.check_frame(d)?;
        let e = model.residual(d);
        acc.add(model, pilots, d, &e);
    }
    Ok(acc.finish(model, pilots))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::{generate_signatures, SystemConfig};

    fn cfg(k: usize, l: usize) -> SystemConfig {
        SystemConfig {
            users: k,
            chips: 4,
            samples_per_chip: 2,
            symbols: l,
            pilots: 0,
            n0: 1.0,
            sigma2: vec![1.0; k],
            gibbs_samples: 10,
            burn_in: 0,
            sage_iters: 1,
            seed: 0,
        }
    }

    #[test]
    fn llr_of_clean_unit_column_is_four() {
        let mut c = cfg(1, 1);
        c.chips = 1;
        c.samples_per_chip = 1;
        let sig = generate_signatures(&c, 0);
        let tau = [DelayIndex::new(0, &c).unwrap()];
        let a = [C64::new(1.0, 0.0)];
        let r = ReceivedVector::new(sig.waveform(0).to_vec());
        let m = EffectiveModel::new(&c, &sig, &r, &a, &tau).unwrap();
        assert!((llr_single(&m, 0, &[1]).unwrap() - 4.0).abs() < 1e-12);
        assert!((llr_single(&m, 0, &[-1]).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn llr_is_zero_for_orthogonal_observation() {
        let c = cfg(1, 1);
        let sig = SignatureSet::from_waveforms(vec![vec![
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
        ]])
        .unwrap();
        let mut r = vec![C64::new(0.0, 0.0); c.sample_len()];
        r[0] = C64::new(1.0, 0.0);
        r[1] = C64::new(-1.0, 0.0);
        let r = ReceivedVector::new(r);
        let m = EffectiveModel::new(&c, &sig, &r, &[C64::new(0.3, 0.2)], &[DelayIndex::new(0, &c).unwrap()]).unwrap();
        assert_eq!(llr_single(&m, 0, &[1]).unwrap(), 0.0);
        let (dt, _) = estimate_soft_symbols(&m, &Pilots::none(1, 1), 20, 0, 1).unwrap();
        assert_eq!(dt[0], 0.0);
    }

    #[test]
    fn pairwise_rejects_same_index() {
        let c = cfg(2, 2);
        let sig = generate_signatures(&c, 0);
        let r = ReceivedVector::new(vec![C64::new(0.0, 0.0); c.sample_len()]);
        let tau = [DelayIndex::new(0, &c).unwrap(), DelayIndex::new(1, &c).unwrap()];
        let m = EffectiveModel::new(&c, &sig, &r, &[C64::new(1.0, 0.0); 2], &tau).unwrap();
        assert!(pairwise_joint_prob(&m, 1, 1, 1, 1, &[1, 1, 1, 1]).is_err());
        assert!(pairwise_joint_prob(&m, 0, 2, 1, 0, &[1, 1, 1, 1]).is_err());
    }

    #[test]
    fn pairwise_is_uniform_when_uninformative() {
        // Two non-overlapping columns and an all-zero observation.
        let c = cfg(2, 1);
        let sig = generate_signatures(&c, 5);
        let r = ReceivedVector::new(vec![C64::new(0.0, 0.0); c.sample_len()]);
        let tau = [DelayIndex::new(0, &c).unwrap(), DelayIndex::new(0, &c).unwrap()];
        let m = EffectiveModel::new(&c, &sig, &r, &[C64::new(0.0, 0.0); 2], &tau).unwrap();
        for mm in [-1, 1] {
            for nn in [-1, 1] {
                let p = pairwise_joint_prob(&m, 1, 0, mm, nn, &[1, -1]).unwrap();
                assert!((p - 0.25).abs() < 1e-15);
            }
        }
        let stats = estimate_soft_correlations(&m, &Pilots::none(2, 1), &[vec![1, 1], vec![-1, 1]]).unwrap();
        assert_eq!(stats.corr(0, 0, 1, 0).unwrap(), 0.0);
    }

    #[test]
    fn pilot_pair_correlation_is_product() {
        let mut c = cfg(2, 3);
        c.pilots = 1;
        let sig = generate_signatures(&c, 5);
        let truth = crate::sysmodel::draw_scenario(&c, 3, 0.5).unwrap();
        let r = crate::sysmodel::simulate_received(&c, &sig, &truth, 4).unwrap();
        let m = EffectiveModel::new(&c, &sig, &r, &truth.a, &truth.tau).unwrap();
        let pilots = Pilots::for_config(&c);
        let (_, samples) = estimate_soft_symbols(&m, &pilots, 30, 5, 9).unwrap();
        let stats = estimate_soft_correlations(&m, &pilots, &samples).unwrap();
        assert_eq!(stats.corr(0, 0, 1, 0).unwrap(), 1.0);
        assert_eq!(stats.d_tilde(1, 0), 1.0);
        assert!(stats.corr(0, 1, 0, 1).is_err());
        assert!(stats.corr(0, 0, 1, 2).is_err());
    }

    #[test]
    fn pilots_never_move() {
        let mut c = cfg(2, 4);
        c.pilots = 2;
        c.n0 = 5.0;
        let sig = generate_signatures(&c, 1);
        let truth = crate::sysmodel::draw_scenario(&c, 1, 0.5).unwrap();
        let r = crate::sysmodel::simulate_received(&c, &sig, &truth, 2).unwrap();
        let m = EffectiveModel::new(&c, &sig, &r, &truth.a, &truth.tau).unwrap();
        let pilots = Pilots::for_config(&c);
        let mut state = ChainState::random(8, &pilots, 3);
        for _ in 0..200 {
            state = gibbs_sweep(&m, state, &pilots);
            for q in [0, 1, 4, 5] {
                assert_eq!(state.symbols()[q], 1);
            }
        }
        assert_eq!(state.sweeps(), 200);
    }

    #[test]
    fn ln_cosh_is_stable() {
        assert!((ln_cosh(0.3) - 0.3f64.cosh().ln()).abs() < 1e-15);
        assert!((ln_cosh(800.0) - (800.0 - std::f64::consts::LN_2)).abs() < 1e-9);
        assert!(ln_cosh(-800.0).is_finite());
    }
}
