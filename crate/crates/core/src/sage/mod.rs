//! The Monte-Carlo SAGE receiver.
//!
//! Each iteration picks one user `k`, computes soft statistics of the symbols
//! at the current parameters (Gibbs sampling by default), and maximizes the
//! per-user surrogate
//!
//! ```text
//! Q_k(a, τ) = (2/N0)·Re{ a* Σ_ℓ Ψ(ℓ, τ) } − (L/N0)·|a|² − |a|²/σ_k²
//! Ψ(ℓ, τ)   = S_k(ℓ, τ)† ( d̃_k(ℓ)·r − I_k(ℓ) )
//! ```
//!
//! over the delay grid and then in closed form over `a`.

mod exact;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gibbs::{run_estep, ChainState, EffectiveModel, SoftStatistics};
use crate::sysmodel::{check_signatures, spreading_vector, DelayIndex, Pilots, ReceivedVector, SignatureSet, SystemConfig};

pub use exact::{exact_posterior, ExactPosterior, MAX_EXACT_FREE_SYMBOLS};

/// Current estimates `θ = (a, τ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    pub a_hat: Vec<C64>,
    pub tau_hat: Vec<DelayIndex>,
    /// Number of SAGE updates applied so far.
    pub iteration: usize,
}

impl ParameterState {
    pub fn new(a_hat: Vec<C64>, tau_hat: Vec<DelayIndex>) -> Self {
        Self { a_hat, tau_hat, iteration: 0 }
    }

    fn check(&self, cfg: &SystemConfig) -> Result<()> {
        if self.a_hat.len() != cfg.users || self.tau_hat.len() != cfg.users {
            return Err(invalid("parameter state must hold one entry per user"));
        }
        if let Some(t) = self.tau_hat.iter().find(|t| t.get() >= cfg.delay_grid_len()) {
            return Err(invalid(format!("delay index {} outside grid", t.get())));
        }
        if self.a_hat.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(invalid("channel estimates must be finite"));
        }
        Ok(())
    }
}

/// `Ψ(ℓ, δ)` for one user over every symbol and grid delay.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiTable {
    symbols: usize,
    grid: usize,
    values: Vec<C64>,
}

impl PsiTable {
    pub fn from_values(symbols: usize, grid: usize, values: Vec<C64>) -> Result<Self> {
        if values.len() != symbols * grid || grid == 0 {
            return Err(invalid("psi table dimensions do not match"));
        }
        Ok(Self { symbols, grid, values })
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn grid_len(&self) -> usize {
        self.grid
    }

    pub fn get(&self, ell: usize, delta: usize) -> C64 {
        self.values[ell * self.grid + delta]
    }

    /// `Ψ(·, δ)` as a length-`L` vector.
    pub fn column(&self, delta: usize) -> Vec<C64> {
        (0..self.symbols).map(|ell| self.get(ell, delta)).collect()
    }

    fn negate_rows(&mut self, rows: impl Fn(usize) -> bool) {
        for ell in (0..self.symbols).filter(|&ell| rows(ell)) {
            for v in &mut self.values[ell * self.grid..(ell + 1) * self.grid] {
                *v = -*v;
            }
        }
    }

    /// `Σ_ℓ Ψ(ℓ, δ)`.
    pub fn sum(&self, delta: usize) -> C64 {
        (0..self.symbols).map(|ell| self.get(ell, delta)).sum()
    }
}

/// Soft statistics and the branch table of the user being updated.
#[derive(Clone, Debug)]
pub struct EStepCache {
    pub soft: SoftStatistics,
    pub psi_table: PsiTable,
}

fn check_soft(cfg: &SystemConfig, soft: &SoftStatistics) -> Result<()> {
    if soft.users() != cfg.users || soft.symbols() != cfg.symbols {
        return Err(invalid("soft statistics do not match the config"));
    }
    Ok(())
}

/// `Ψ(ℓ, δ)` for user `k`, evaluated with full-length vectors.
#[allow(clippy::too_many_arguments)]
pub fn branch_psi(
    cfg: &SystemConfig,
    sig: &SignatureSet,
    r: &ReceivedVector,
    state: &ParameterState,
    soft: &SoftStatistics,
    k: usize,
    ell: usize,
    delta: DelayIndex,
) -> Result<C64> {
    state.check(cfg)?;
    check_soft(cfg, soft)?;
    if r.len() != cfg.sample_len() {
        return Err(invalid("received vector length does not match the config"));
    }
    let s = spreading_vector(cfg, sig, k, delta, ell)?;
    let mut target: Vec<C64> = r.as_slice().iter().map(|x| x * soft.d_tilde(k, ell)).collect();
    for k2 in (0..cfg.users).filter(|&k2| k2 != k) {
        for ell2 in ell.saturating_sub(1)..(ell + 2).min(cfg.symbols) {
            let c = state.a_hat[k2] * soft.corr(k, ell, k2, ell2)?;
            let s2 = spreading_vector(cfg, sig, k2, state.tau_hat[k2], ell2)?;
            for (t, x) in target.iter_mut().zip(&s2) {
                *t -= c * x;
            }
        }
    }
    Ok(s.iter().zip(&target).map(|(a, b)| a.conj() * b).sum())
}

/// Builds `Ψ(ℓ, δ)` for user `k` over all symbols and grid delays.
pub fn psi_table(
    cfg: &SystemConfig,
    sig: &SignatureSet,
    r: &ReceivedVector,
    state: &ParameterState,
    soft: &SoftStatistics,
    k: usize,
) -> Result<PsiTable> {
    check_signatures(cfg, sig)?;
    state.check(cfg)?;
    check_soft(cfg, soft)?;
    if k >= cfg.users {
        return Err(invalid(format!("user {k} out of range")));
    }
    if r.len() != cfg.sample_len() {
        return Err(invalid("received vector length does not match the config"));
    }
    let n = cfg.symbol_len();
    let grid = cfg.delay_grid_len();
    let r = r.as_slice();
    let own = sig.waveform(k);
    let mut values = Vec::with_capacity(cfg.symbols * grid);
    let mut target = vec![C64::new(0.0, 0.0); n + grid - 1];
    for ell in 0..cfg.symbols {
        let base = n * ell;
        let width = (n + grid - 1).min(r.len() - base);
        let dt = soft.d_tilde(k, ell);
        for (t, x) in target[..width].iter_mut().zip(&r[base..base + width]) {
            *t = x * dt;
        }
        for k2 in (0..cfg.users).filter(|&k2| k2 != k) {
            let w2 = sig.waveform(k2);
            for ell2 in ell.saturating_sub(1)..(ell + 2).min(cfg.symbols) {
                let c = state.a_hat[k2] * soft.corr(k, ell, k2, ell2)?;
                if c == C64::new(0.0, 0.0) {
                    continue;
                }
                let start = n * ell2 + state.tau_hat[k2].get();
                let lo = start.max(base);
                let hi = (start + n).min(base + width);
                for pos in lo..hi {
                    target[pos - base] -= c * w2[pos - start];
                }
            }
        }
        for delta in 0..grid {
            let psi: C64 = own
                .iter()
                .zip(&target[delta..delta + n])
                .map(|(s, t)| s.conj() * t)
                .sum();
            values.push(psi);
        }
    }
    PsiTable::from_values(cfg.symbols, grid, values)
}

/// Delay maximizing `|Σ_ℓ Ψ(ℓ, δ)|`, ties resolved to the smallest index.
pub fn m_step_tau(table: &PsiTable) -> DelayIndex {
    m_step_tau_within(table, table.grid_len())
}

/// [`m_step_tau`] restricted to delays `0..support`.
pub fn m_step_tau_within(table: &PsiTable, support: usize) -> DelayIndex {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for delta in 0..support.clamp(1, table.grid_len()) {
        let v = table.sum(delta).norm();
        if v > best_val {
            best = delta;
            best_val = v;
        }
    }
    DelayIndex::new_unchecked(best)
}

/// Closed-form coefficient update `Σ_ℓ Ψ(ℓ) / (L + N0/σ²)`.
pub fn m_step_a(psi: &[C64], n0: f64, sigma2: f64) -> C64 {
    psi.iter().sum::<C64>() / (psi.len() as f64 + n0 / sigma2)
}

/// Per-user surrogate `Q_k` given `Σ_ℓ Ψ(ℓ, τ)` at the delay of interest.
pub fn surrogate_q(psi_sum: C64, a: C64, n0: f64, sigma2: f64, symbols: usize) -> f64 {
    2.0 / n0 * (a.conj() * psi_sum).re - symbols as f64 / n0 * a.norm_sqr() - a.norm_sqr() / sigma2
}

/// `Re{r†Gd} − ½‖Gd‖²`.
pub fn complete_loglik(model: &EffectiveModel, d: &[i8]) -> Result<f64> {
    if d.len() != model.n_cols() {
        return Err(invalid("symbol vector length does not match the model"));
    }
    let mu = model.mean(d);
    let cross: f64 = model.r().iter().zip(&mu).map(|(r, m)| (r.conj() * m).re).sum();
    let energy: f64 = mu.iter().map(|m| m.norm_sqr()).sum();
    Ok(cross - 0.5 * energy)
}

/// `Σ_k ln p(a_k)` with `a_k ~ CN(0, σ_k²)`.
pub fn log_prior(a: &[C64], sigma2: &[f64]) -> f64 {
    a.iter()
        .zip(sigma2)
        .map(|(a, s2)| -a.norm_sqr() / s2 - (std::f64::consts::PI * s2).ln())
        .sum()
}

/// How the E-step expectations are formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EStepMode {
    /// Gibbs sampling with Rao-Blackwellized averages.
    #[default]
    Gibbs,
    /// Exhaustive enumeration over the non-pilot symbols (small frames only).
    Exact,
}

/// Whether the delay M-step runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayMode {
    #[default]
    Estimate,
    /// Delays stay at their initial values.
    Known,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReceiverOptions {
    pub estep: EStepMode,
    pub delay: DelayMode,
    /// Stop once every user's relative coefficient change and delay change
    /// over a full round fall below this value.
    pub early_stop: Option<f64>,
    /// Number of grid delays `0..n` the delay prior allows; the full grid when absent.
    pub delay_support: Option<usize>,
    /// Starting symbols for the chain; uniformly random when absent.
    pub init_symbols: Option<Vec<i8>>,
    /// Let the pilots pick between the two sign-mirrored modes
    /// `(a_k, d_k) ↔ (−a_k, −d_k)` at each Gibbs-mode update.
    pub resolve_sign: bool,
    /// Sampler seed.
    pub seed: u64,
}

impl Default for ReceiverOptions {
    fn default() -> Self {
        Self {
            estep: EStepMode::default(),
            delay: DelayMode::default(),
            early_stop: None,
            delay_support: None,
            init_symbols: None,
            resolve_sign: true,
            seed: 0,
        }
    }
}

/// Splits `Σ_ℓ Ψ(ℓ, δ)` into pilot and payload parts and returns the delay
/// and orientation maximizing `|P ± D|`. `true` means the mirrored mode.
fn m_step_tau_signed(table: &PsiTable, support: usize, is_pilot: impl Fn(usize) -> bool, fixed: Option<usize>) -> (usize, bool) {
    let mut best = (0, false);
    let mut best_val = f64::NEG_INFINITY;
    let deltas = match fixed {
        Some(d) => d..d + 1,
        None => 0..support.clamp(1, table.grid_len()),
    };
    for delta in deltas {
        let (mut p, mut d) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        for ell in 0..table.symbols() {
            if is_pilot(ell) {
                p += table.get(ell, delta);
            } else {
                d += table.get(ell, delta);
            }
        }
        for (flip, v) in [(false, (p + d).norm()), (true, (p - d).norm())] {
            if v > best_val {
                best = (delta, flip);
                best_val = v;
            }
        }
    }
    best
}

/// One SAGE update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub user: usize,
    pub tau: DelayIndex,
    pub a: C64,
    /// `Q_k` at the parameters before the update.
    pub q_before: f64,
    /// `Q_k` at the updated parameters.
    pub q_after: f64,
    /// `ln p(r | θ) + ln p(a)` before the update; exact E-step only.
    pub log_posterior: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ReceiverOutput {
    pub state: ParameterState,
    /// Soft statistics at the final parameters.
    pub soft: SoftStatistics,
    /// Hard symbol decisions, pilots passed through.
    pub decisions: Vec<i8>,
    pub trace: Vec<IterationRecord>,
    /// `ln p(r | θ) + ln p(a)` at the final parameters; exact E-step only.
    pub final_log_posterior: Option<f64>,
}

struct EStep<'c> {
    cfg: &'c SystemConfig,
    sig: &'c SignatureSet,
    r: &'c ReceivedVector,
    pilots: &'c Pilots,
    mode: EStepMode,
    chain: ChainState,
}

impl EStep<'_> {
    fn run(&mut self, state: &ParameterState) -> Result<(SoftStatistics, Option<f64>)> {
        let model = EffectiveModel::new(self.cfg, self.sig, self.r, &state.a_hat, &state.tau_hat)?;
        match self.mode {
            EStepMode::Gibbs => {
                let soft = run_estep(&model, self.pilots, &mut self.chain, self.cfg.gibbs_samples, self.cfg.burn_in)?;
                Ok((soft, None))
            }
            EStepMode::Exact => {
                let post = exact_posterior(&model, self.pilots)?;
                Ok((post.soft, Some(post.log_evidence + log_prior(&state.a_hat, &self.cfg.sigma2))))
            }
        }
    }
}

/// Runs `cfg.sage_iters` SAGE updates from `init`, updating user
/// `i mod K` at iteration `i` (0-based).
pub fn run_receiver(
    cfg: &SystemConfig,
    sig: &SignatureSet,
    r: &ReceivedVector,
    init: ParameterState,
    pilots: &Pilots,
    opts: &ReceiverOptions,
) -> Result<ReceiverOutput> {
    cfg.validate()?;
    check_signatures(cfg, sig)?;
    init.check(cfg)?;
    if r.len() != cfg.sample_len() {
        return Err(invalid("received vector length does not match the config"));
    }
    let n = cfg.n_symbols();
    let support = opts.delay_support.unwrap_or(cfg.delay_grid_len());
    if support == 0 || support > cfg.delay_grid_len() {
        return Err(invalid(format!("delay support must lie in 1..={}", cfg.delay_grid_len())));
    }
    let chain = match &opts.init_symbols {
        Some(d) if d.len() != n => return Err(invalid("initial symbols do not match the frame")),
        Some(d) => ChainState::new(d.clone(), pilots, opts.seed),
        None => ChainState::random(n, pilots, opts.seed),
    };
    let mut estep = EStep {
        cfg,
        sig,
        r,
        pilots,
        mode: opts.estep,
        chain,
    };

    let mut state = init;
    let mut trace = Vec::with_capacity(cfg.sage_iters);
    let mut quiet_run = 0;
    for i in 0..cfg.sage_iters {
        let k = i % cfg.users;
        let (soft, log_posterior) = estep.run(&state)?;
        let mut table = psi_table(cfg, sig, r, &state, &soft, k)?;
        let (a_old, tau_old) = (state.a_hat[k], state.tau_hat[k]);
        let q_before = surrogate_q(table.sum(tau_old.get()), a_old, cfg.n0, cfg.sigma2[k], cfg.symbols);
        let fixed = match opts.delay {
            DelayMode::Estimate => None,
            DelayMode::Known => Some(tau_old.get()),
        };
        let tau_new = if opts.resolve_sign && opts.estep == EStepMode::Gibbs {
            let base = k * cfg.symbols;
            let (delta, flip) = m_step_tau_signed(&table, support, |ell| pilots.is_pilot(base + ell), fixed);
            if flip {
                table.negate_rows(|ell| !pilots.is_pilot(base + ell));
                estep.chain.flip_free(base..base + cfg.symbols, pilots);
            }
            DelayIndex::new_unchecked(delta)
        } else {
            match fixed {
                None => m_step_tau_within(&table, support),
                Some(_) => tau_old,
            }
        };
        let a_new = m_step_a(&table.column(tau_new.get()), cfg.n0, cfg.sigma2[k]);
        let q_after = surrogate_q(table.sum(tau_new.get()), a_new, cfg.n0, cfg.sigma2[k], cfg.symbols);
        state.a_hat[k] = a_new;
        state.tau_hat[k] = tau_new;
        state.iteration += 1;
        trace.push(IterationRecord {
            iteration: i,
            user: k,
            tau: tau_new,
            a: a_new,
            q_before,
            q_after,
            log_posterior,
        });

        if let Some(tol) = opts.early_stop {
            let rel = (a_new - a_old).norm() / a_old.norm().max(f64::MIN_POSITIVE);
            if rel < tol && tau_new == tau_old {
                quiet_run += 1;
            } else {
                quiet_run = 0;
            }
            if quiet_run >= cfg.users {
                break;
            }
        }
    }

    let (soft, final_log_posterior) = estep.run(&state)?;
    let mut decisions = soft.hard_decisions();
    pilots.apply(&mut decisions);
    Ok(ReceiverOutput {
        state,
        soft,
        decisions,
        trace,
        final_log_posterior,
    })
}
