//! Initialization and reference receivers: pilot-based separate estimation
//! (MMSE-SE), SAGE with known delays, and the single-user known-channel bound.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::gibbs::{ln_cosh, EffectiveModel};
use crate::sage::{log_prior, run_receiver, DelayMode, ParameterState, ReceiverOptions, ReceiverOutput};
use crate::seed::{derive_seed, rng_from};
use crate::sysmodel::{
    check_signatures, placement, DelayIndex, Pilots, ReceivedVector, SignatureSet, SymbolFrame, SystemConfig,
};

#[derive(Clone, Debug, PartialEq)]
pub struct InitEstimate {
    pub a0: Vec<C64>,
    pub tau0: Vec<DelayIndex>,
    pub d0: SymbolFrame,
}

impl InitEstimate {
    pub fn parameters(&self) -> ParameterState {
        ParameterState::new(self.a0.clone(), self.tau0.clone())
    }
}

fn check_inputs(cfg: &SystemConfig, sig: &SignatureSet, r: &ReceivedVector, pilots: &Pilots) -> Result<()> {
    cfg.validate()?;
    check_signatures(cfg, sig)?;
    if r.len() != cfg.sample_len() {
        return Err(invalid("received vector length does not match the config"));
    }
    if pilots.count() == 0 {
        return Err(Error::Unsupported(
            "pilot-based initialization needs at least one pilot symbol".into(),
        ));
    }
    Ok(())
}

/// Samples before the earliest possible payload symbol, `Q·Nc·Lp`.
pub fn pilot_window(cfg: &SystemConfig, pilots: &Pilots) -> usize {
    cfg.symbol_len() * pilots.count()
}

/// `Σ_{ℓ<Lp} v·S_k(δ, ℓ)` restricted to the first `window` samples.
fn pilot_column(cfg: &SystemConfig, sig: &SignatureSet, pilots: &Pilots, k: usize, delta: DelayIndex, window: usize) -> DVector<C64> {
    let mut col = DVector::zeros(window);
    for ell in 0..pilots.count() {
        let start = placement(cfg, delta, ell);
        for (j, s) in sig.waveform(k).iter().enumerate() {
            if start + j < window {
                col[start + j] += s * f64::from(Pilots::VALUE);
            }
        }
    }
    col
}

/// `(P†P + N0·Σ⁻¹)⁻¹ P† r` with prior variances `prior[j]` on the columns of `P`.
fn ridge_solve(p: &DMatrix<C64>, r: &DVector<C64>, n0: f64, prior: &[f64]) -> Result<DVector<C64>> {
    let mut gram = p.ad_mul(p);
    for (j, v) in prior.iter().enumerate() {
        gram[(j, j)] += C64::new(n0 / v, 0.0);
    }
    let rhs = p.ad_mul(r);
    let chol = Cholesky::new(gram).ok_or_else(|| invalid("pilot normal equations are not positive definite"))?;
    Ok(chol.solve(&rhs))
}

/// Coefficient MMSE over the pilot window at fixed delays, all users jointly.
fn pilot_coefficients(cfg: &SystemConfig, sig: &SignatureSet, r: &[C64], pilots: &Pilots, tau: &[DelayIndex]) -> Result<Vec<C64>> {
    let window = pilot_window(cfg, pilots);
    let cols: Vec<_> = (0..cfg.users)
        .map(|k| pilot_column(cfg, sig, pilots, k, tau[k], window))
        .collect();
    let p = DMatrix::from_columns(&cols);
    let rw = DVector::from_column_slice(&r[..window]);
    Ok(ridge_solve(&p, &rw, cfg.n0, &cfg.sigma2)?.iter().copied().collect())
}

/// Linear MMSE symbol estimate given the pilots, `sign(Re{·})` per symbol.
fn hard_symbols(cfg: &SystemConfig, sig: &SignatureSet, r: &ReceivedVector, pilots: &Pilots, a: &[C64], tau: &[DelayIndex]) -> Result<SymbolFrame> {
    let model = EffectiveModel::new(cfg, sig, r, a, tau)?;
    let free = pilots.free_indices();
    let n = free.len();
    let mut known = vec![0i8; cfg.n_symbols()];
    pilots.apply(&mut known);
    // Residual after removing the pilot contribution.
    let e = model.residual(&known);
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for (i, &p) in free.iter().enumerate() {
        for (j, &q) in free.iter().enumerate().skip(i) {
            let v = model.gram(p, q).re;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
        gram[(i, i)] += cfg.n0 / 2.0;
    }
    let rhs = DVector::from_iterator(n, free.iter().map(|&q| model.col_dot(q, &e).re));
    let soft = Cholesky::new(gram)
        .ok_or_else(|| invalid("symbol normal equations are not positive definite"))?
        .solve(&rhs);
    let mut d = known;
    for (i, &q) in free.iter().enumerate() {
        d[q] = if soft[i] < 0.0 { -1 } else { 1 };
    }
    SymbolFrame::new(cfg.users, cfg.symbols, d)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Acquisition {
    /// One joint MMSE over every user's delay taps.
    JointTaps,
    /// Per-user matched filter, strongest user first, subtracting each
    /// acquired pilot block before the next user.
    #[default]
    Successive,
}

fn strongest(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn acquire_joint(cfg: &SystemConfig, sig: &SignatureSet, r: &[C64], pilots: &Pilots, support: usize) -> Result<Vec<DelayIndex>> {
    let window = pilot_window(cfg, pilots);
    let mut cols = Vec::with_capacity(cfg.users * support);
    let mut prior = Vec::with_capacity(cfg.users * support);
    for k in 0..cfg.users {
        for delta in 0..support {
            cols.push(pilot_column(cfg, sig, pilots, k, DelayIndex::new_unchecked(delta), window));
            prior.push(cfg.sigma2[k]);
        }
    }
    let taps = ridge_solve(&DMatrix::from_columns(&cols), &DVector::from_column_slice(&r[..window]), cfg.n0, &prior)?;
    Ok((0..cfg.users)
        .map(|k| DelayIndex::new_unchecked(strongest((0..support).map(|d| taps[k * support + d].norm()))))
        .collect())
}

fn acquire_successive(cfg: &SystemConfig, sig: &SignatureSet, r: &[C64], pilots: &Pilots, support: usize) -> Vec<DelayIndex> {
    let window = pilot_window(cfg, pilots);
    let lp = pilots.count() as f64;
    let mut residual = DVector::from_column_slice(&r[..window]);
    let mut order: Vec<usize> = (0..cfg.users).collect();
    order.sort_by(|&a, &b| cfg.sigma2[b].total_cmp(&cfg.sigma2[a]).then(a.cmp(&b)));
    let mut tau = vec![DelayIndex::new_unchecked(0); cfg.users];
    for k in order {
        let cols: Vec<_> = (0..support)
            .map(|d| pilot_column(cfg, sig, pilots, k, DelayIndex::new_unchecked(d), window))
            .collect();
        let est: Vec<C64> = cols
            .iter()
            .map(|c| c.dotc(&residual) / (lp + cfg.n0 / cfg.sigma2[k]))
            .collect();
        let best = strongest(est.iter().map(|a| a.norm()));
        residual -= &cols[best] * est[best];
        tau[k] = DelayIndex::new_unchecked(best);
    }
    tau
}

/// Separate estimation from the pilot window over the full delay grid.
pub fn mmse_se_init(cfg: &SystemConfig, sig: &SignatureSet, r: &ReceivedVector, pilots: &Pilots) -> Result<InitEstimate> {
    mmse_se_init_within(cfg, sig, r, pilots, cfg.delay_grid_len(), Acquisition::default())
}

/// Separate estimation from the [`pilot_window`], searching delays
/// `0..support`.
///
/// Delays are acquired from the pilots; the coefficients are then estimated
/// jointly by MMSE at those delays, and the symbols come from a linear MMSE
/// detector given `a0`, `τ0` and the pilots.
pub fn mmse_se_init_within(
    cfg: &SystemConfig,
    sig: &SignatureSet,
    r: &ReceivedVector,
    pilots: &Pilots,
    support: usize,
    acquisition: Acquisition,
) -> Result<InitEstimate> {
    check_inputs(cfg, sig, r, pilots)?;
    check_support(cfg, support)?;
    let full = r.as_slice();
    let tau0 = match acquisition {
        Acquisition::JointTaps => acquire_joint(cfg, sig, full, pilots, support)?,
        Acquisition::Successive => acquire_successive(cfg, sig, full, pilots, support),
    };
    let a0 = pilot_coefficients(cfg, sig, full, pilots, &tau0)?;
    let d0 = hard_symbols(cfg, sig, r, pilots, &a0, &tau0)?;
    Ok(InitEstimate { a0, tau0, d0 })
}

/// [`mmse_se_init`] with the delays supplied instead of searched.
pub fn mmse_se_init_with_delays(
    cfg: &SystemConfig,
    sig: &SignatureSet,
    r: &ReceivedVector,
    pilots: &Pilots,
    tau: &[DelayIndex],
) -> Result<InitEstimate> {
    check_inputs(cfg, sig, r, pilots)?;
    if tau.len() != cfg.users || tau.iter().any(|t| t.get() >= cfg.delay_grid_len()) {
        return Err(invalid("need one on-grid delay per user"));
    }
    let a0 = pilot_coefficients(cfg, sig, r.as_slice(), pilots, tau)?;
    let d0 = hard_symbols(cfg, sig, r, pilots, &a0, tau)?;
    Ok(InitEstimate { a0, tau0: tau.to_vec(), d0 })
}

/// Single-user fit on matched-filter outputs `y_ℓ ≈ a·d_ℓ + noise`: maximizes
/// the symbol-marginal log-likelihood plus the coefficient prior over `a` by
/// EM from a pilot start and a blind (squared-symbol) start.
fn single_user_fit(y: &[C64], is_pilot: &dyn Fn(usize) -> bool, n0: f64, sigma2: f64) -> (C64, f64) {
    let c = 2.0 / n0;
    let shrink = y.len() as f64 + n0 / sigma2;
    let objective = |a: C64| -> f64 {
        let fit: f64 = y
            .iter()
            .enumerate()
            .map(|(ell, y)| {
                let u = c * (a.conj() * y).re;
                if is_pilot(ell) { u } else { ln_cosh(u) }
            })
            .sum();
        fit - a.norm_sqr() * (y.len() as f64 / n0 + 1.0 / sigma2)
    };
    let pilot_sum: C64 = y.iter().enumerate().filter(|(l, _)| is_pilot(*l)).map(|(_, y)| y).sum();
    let payload = y.iter().enumerate().filter(|(l, _)| !is_pilot(*l)).count().max(1) as f64;
    let mut blind = (y.iter().enumerate().filter(|(l, _)| !is_pilot(*l)).map(|(_, y)| y * y).sum::<C64>() / payload).sqrt();
    if (blind.conj() * pilot_sum).re < 0.0 {
        blind = -blind;
    }
    let mut best = (C64::new(0.0, 0.0), f64::NEG_INFINITY);
    for start in [pilot_sum / shrink, blind] {
        let mut a = start;
        for _ in 0..SU_FIT_ITERS {
            let num: C64 = y
                .iter()
                .enumerate()
                .map(|(ell, y)| if is_pilot(ell) { *y } else { y * (c * (a.conj() * y).re).tanh() })
                .sum();
            a = num / shrink;
        }
        let v = objective(a);
        if v > best.1 {
            best = (a, v);
        }
    }
    best
}

const SU_FIT_ITERS: usize = 15;
const REFINE_PASSES: usize = 2;

/// Best delay for user `k` on the residual `e` (user `k` not cancelled):
/// `(δ, â, fit value, matched-filter outputs)`.
fn scan_user(
    cfg: &SystemConfig,
    sig: &SignatureSet,
    e: &[C64],
    pilots: &Pilots,
    k: usize,
    support: usize,
) -> (usize, C64, f64, Vec<C64>) {
    let n = cfg.symbol_len();
    let w = sig.waveform(k);
    let is_pilot = |ell: usize| pilots.is_pilot(k * cfg.symbols + ell);
    let mut best = (0, C64::new(0.0, 0.0), f64::NEG_INFINITY, Vec::new());
    for delta in 0..support {
        let y: Vec<C64> = (0..cfg.symbols)
            .map(|ell| {
                let start = n * ell + delta;
                w.iter().zip(&e[start..start + n]).map(|(s, x)| s.conj() * x).sum()
            })
            .collect();
        let (a, v) = single_user_fit(&y, &is_pilot, cfg.n0, cfg.sigma2[k]);
        if v > best.2 {
            best = (delta, a, v, y);
        }
    }
    best
}

/// Writes user `k`'s scan result into `est`, symbols by hard decision.
fn accept_scan(cfg: &SystemConfig, pilots: &Pilots, est: &mut InitEstimate, k: usize, scan: (usize, C64, f64, Vec<C64>)) {
    let (delta, a, _, y) = scan;
    est.tau0[k] = DelayIndex::new_unchecked(delta);
    est.a0[k] = a;
    for (ell, y) in y.iter().enumerate() {
        let d = match pilots.value(k * cfg.symbols + ell) {
            Some(v) => v,
            None if (a.conj() * y).re < 0.0 => -1,
            None => 1,
        };
        est.d0.set(k, ell, d);
    }
}

/// Adds `sign·a_k·S_k(τ_k)d_k` to `e`.
fn add_user(cfg: &SystemConfig, sig: &SignatureSet, e: &mut [C64], est: &InitEstimate, k: usize, sign: f64) {
    let n = cfg.symbol_len();
    let w = sig.waveform(k);
    for ell in 0..cfg.symbols {
        let start = placement(cfg, est.tau0[k], ell);
        let amp = est.a0[k] * f64::from(est.d0.get(k, ell)) * sign;
        for (x, s) in e[start..start + n].iter_mut().zip(w) {
            *x += amp * s;
        }
    }
}

fn check_support(cfg: &SystemConfig, support: usize) -> Result<()> {
    if support == 0 || support > cfg.delay_grid_len() {
        return Err(invalid(format!("delay support must lie in 1..={}", cfg.delay_grid_len())));
    }
    Ok(())
}

/// Semi-blind acquisition over the whole frame.
///
/// Greedy over users: every user not yet acquired scans `0..support` on the
/// current residual, the best-scoring (user, delay) pair is kept and
/// cancelled at hard decisions, and the rest scan again.
pub fn semiblind_acquire(
    cfg: &SystemConfig,
    sig: &SignatureSet,
    r: &ReceivedVector,
    pilots: &Pilots,
    support: usize,
) -> Result<InitEstimate> {
    check_inputs(cfg, sig, r, pilots)?;
    check_support(cfg, support)?;
    let mut d0 = SymbolFrame::filled(cfg.users, cfg.symbols, 1);
    let mut frame = d0.as_slice().to_vec();
    pilots.apply(&mut frame);
    d0 = SymbolFrame::new(cfg.users, cfg.symbols, frame)?;
    let mut est = InitEstimate {
        a0: vec![C64::new(0.0, 0.0); cfg.users],
        tau0: vec![DelayIndex::new_unchecked(0); cfg.users],
        d0,
    };
    let mut e = r.as_slice().to_vec();
    let mut left: Vec<usize> = (0..cfg.users).collect();
    while !left.is_empty() {
        let (i, scan) = left
            .iter()
            .enumerate()
            .map(|(i, &k)| (i, scan_user(cfg, sig, &e, pilots, k, support)))
            .fold(None, |best: Option<(usize, (usize, C64, f64, Vec<C64>))>, cand| match best {
                Some(b) if b.1 .2 >= cand.1 .2 => Some(b),
                _ => Some(cand),
            })
            .expect("at least one user left");
        let k = left.remove(i);
        accept_scan(cfg, pilots, &mut est, k, scan);
        add_user(cfg, sig, &mut e, &est, k, -1.0);
    }
    Ok(est)
}

/// Semi-blind refinement of an initial estimate.
///
/// Users are revisited in decreasing order of `|a0_k|` with the others
/// cancelled at their current estimates. Each delay in `0..support` is scored
/// by the single-user symbol-marginal likelihood over the whole frame, so
/// payload symbols contribute to acquisition and not just the pilots.
pub fn semiblind_refine(
    cfg: &SystemConfig,
    sig: &SignatureSet,
    r: &ReceivedVector,
    pilots: &Pilots,
    support: usize,
    init: &InitEstimate,
) -> Result<InitEstimate> {
    check_inputs(cfg, sig, r, pilots)?;
    check_support(cfg, support)?;
    let mut est = init.clone();
    let mut e = r.as_slice().to_vec();
    for k in 0..cfg.users {
        add_user(cfg, sig, &mut e, &est, k, -1.0);
    }
    let mut order: Vec<usize> = (0..cfg.users).collect();
    order.sort_by(|&a, &b| est.a0[b].norm().total_cmp(&est.a0[a].norm()).then(a.cmp(&b)));
    for _ in 0..REFINE_PASSES {
        for &k in &order {
            add_user(cfg, sig, &mut e, &est, k, 1.0);
            let scan = scan_user(cfg, sig, &e, pilots, k, support);
            accept_scan(cfg, pilots, &mut est, k, scan);
            add_user(cfg, sig, &mut e, &est, k, -1.0);
        }
    }
    Ok(est)
}

/// `−‖r − Σ_k a_k S_k(τ_k) d_k‖²/N0` plus the coefficient prior, at hard symbols.
pub fn hard_log_posterior(cfg: &SystemConfig, sig: &SignatureSet, r: &ReceivedVector, est: &InitEstimate) -> Result<f64> {
    let model = EffectiveModel::new(cfg, sig, r, &est.a0, &est.tau0)?;
    let e = model.residual(est.d0.as_slice());
    Ok(-e.iter().map(|x| x.norm_sqr()).sum::<f64>() / cfg.n0 + log_prior(&est.a0, &cfg.sigma2))
}

/// Greedy search over sign mirrors `(a_k, d_k) → (−a_k, −d_k)` of single
/// users and pairs, payload symbols only. Returns the improved estimate, or
/// `None` when no mirror raises [`hard_log_posterior`].
pub fn resolve_mirrors(
    cfg: &SystemConfig,
    sig: &SignatureSet,
    r: &ReceivedVector,
    pilots: &Pilots,
    est: &InitEstimate,
) -> Result<Option<InitEstimate>> {
    let mirror = |est: &mut InitEstimate, k: usize| {
        est.a0[k] = -est.a0[k];
        for ell in 0..cfg.symbols {
            if !pilots.is_pilot(k * cfg.symbols + ell) {
                let v = est.d0.get(k, ell);
                est.d0.set(k, ell, -v);
            }
        }
    };
    let mut moves: Vec<Vec<usize>> = (0..cfg.users).map(|k| vec![k]).collect();
    for i in 0..cfg.users {
        for j in i + 1..cfg.users {
            moves.push(vec![i, j]);
        }
    }
    let mut cur = est.clone();
    let mut score = hard_log_posterior(cfg, sig, r, &cur)?;
    let mut changed = false;
    // Each accepted move strictly raises the score; the cap only guards float ties.
    for _ in 0..cfg.users {
        let mut best: Option<(f64, InitEstimate)> = None;
        for m in &moves {
            let mut cand = cur.clone();
            for &k in m {
                mirror(&mut cand, k);
            }
            let v = hard_log_posterior(cfg, sig, r, &cand)?;
            if v > best.as_ref().map_or(score, |b| b.0) {
                best = Some((v, cand));
            }
        }
        match best {
            Some((v, cand)) => {
                score = v;
                cur = cand;
                changed = true;
            }
            None => break,
        }
    }
    Ok(changed.then_some(cur))
}

/// The complete receiver. Two starts, [`semiblind_acquire`] and MMSE-SE, are
/// each passed through [`semiblind_refine`]; SAGE runs from the one with the
/// larger [`hard_log_posterior`], delays limited to `0..support`. If
/// [`resolve_mirrors`] then finds a better sign configuration, SAGE is rerun
/// from it. Returns the chosen start as well.
pub fn mcmc_sage(
    cfg: &SystemConfig,
    sig: &SignatureSet,
    r: &ReceivedVector,
    pilots: &Pilots,
    support: usize,
    seed: u64,
) -> Result<(InitEstimate, ReceiverOutput)> {
    let greedy = semiblind_refine(cfg, sig, r, pilots, support, &semiblind_acquire(cfg, sig, r, pilots, support)?)?;
    let linear = mmse_se_init_within(cfg, sig, r, pilots, support, Acquisition::default())?;
    let linear = semiblind_refine(cfg, sig, r, pilots, support, &linear)?;
    let start = if hard_log_posterior(cfg, sig, r, &linear)? > hard_log_posterior(cfg, sig, r, &greedy)? {
        linear
    } else {
        greedy
    };
    let opts = ReceiverOptions {
        init_symbols: Some(start.d0.as_slice().to_vec()),
        delay_support: Some(support),
        seed,
        ..ReceiverOptions::default()
    };
    let out = run_receiver(cfg, sig, r, start.parameters(), pilots, &opts)?;
    let fin = InitEstimate {
        a0: out.state.a_hat.clone(),
        tau0: out.state.tau_hat.clone(),
        d0: SymbolFrame::new(cfg.users, cfg.symbols, out.decisions.clone())?,
    };
    match resolve_mirrors(cfg, sig, r, pilots, &fin)? {
        Some(fixed) => {
            let opts = ReceiverOptions {
                init_symbols: Some(fixed.d0.as_slice().to_vec()),
                ..opts
            };
            Ok((start, run_receiver(cfg, sig, r, fixed.parameters(), pilots, &opts)?))
        }
        None => Ok((start, out)),
    }
}

/// The SAGE receiver with delays pinned to `tau`.
#[allow(clippy::too_many_arguments)]
pub fn sage_known_tau(
    cfg: &SystemConfig,
    sig: &SignatureSet,
    r: &ReceivedVector,
    tau: &[DelayIndex],
    init_a: &[C64],
    pilots: &Pilots,
    opts: &ReceiverOptions,
) -> Result<ReceiverOutput> {
    let opts = ReceiverOptions {
        delay: DelayMode::Known,
        ..opts.clone()
    };
    run_receiver(cfg, sig, r, ParameterState::new(init_a.to_vec(), tau.to_vec()), pilots, &opts)
}

/// `½(1 − sqrt(γ/(1+γ)))`: coherent BPSK over Rayleigh fading at average SNR `γ` (linear).
pub fn rayleigh_bpsk_ber(snr: f64) -> f64 {
    0.5 * (1.0 - (snr / (1.0 + snr)).sqrt())
}

/// Inverse of [`rayleigh_bpsk_ber`]: the average SNR (linear) giving `ber`.
pub fn rayleigh_equivalent_snr(ber: f64) -> f64 {
    let mu = 1.0 - 2.0 * ber.clamp(0.0, 0.5);
    mu * mu / (1.0 - mu * mu)
}

/// Monte-Carlo BER of one user with perfect channel knowledge and no
/// interference, one Rayleigh draw `a ~ CN(0, 1)` per frame of `L − Lp`
/// payload symbols. `snr_db` is the average SNR in dB.
pub fn single_user_bound(cfg: &SystemConfig, snr_db: &[f64], trials: usize, seed: u64) -> Result<Vec<f64>> {
    if trials == 0 {
        return Err(invalid("need at least one trial"));
    }
    let payload = cfg.symbols.saturating_sub(cfg.pilots);
    if payload == 0 {
        return Err(invalid("frame has no payload symbols"));
    }
    let out = snr_db
        .iter()
        .enumerate()
        .map(|(i, &db)| {
            let n0 = 10f64.powf(-db / 10.0);
            let sd = (n0 / 2.0).sqrt();
            let mut errors = 0u64;
            for t in 0..trials {
                let mut rng = rng_from(derive_seed(seed, &[i as u64, t as u64]));
                let a = C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
                    * std::f64::consts::FRAC_1_SQRT_2;
                for _ in 0..payload {
                    let d = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    let w = C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * sd;
                    let y = a * d + w;
                    let z = (a.conj() * y).re;
                    let dhat = if z < 0.0 { -1.0 } else { 1.0 };
                    errors += u64::from(dhat != d);
                }
            }
            errors as f64 / (trials * payload) as f64
        })
        .collect();
    Ok(out)
}
