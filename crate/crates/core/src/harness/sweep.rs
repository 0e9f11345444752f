use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentSpec, ReceiverKind, SweepAxis};
use crate::baselines::{mcmc_sage, mmse_se_init_with_delays, mmse_se_init_within, sage_known_tau, Acquisition};
use crate::bounds::{mcrb_channel, mcrb_report};
use crate::error::{Error, Result};
use crate::sage::ReceiverOptions;
use crate::seed::{derive_seed, stream};
use crate::sysmodel::{
    delay_support, draw_noise, draw_scenario_with, generate_signatures, noiseless_signal, placement, ReceivedVector, ScenarioTruth,
    SignatureSet, SystemConfig,
};

/// One CSV row. `user` is 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub receiver: String,
    pub axis: f64,
    pub user: usize,
    pub metric: String,
    pub value: f64,
    pub bound: Option<f64>,
    pub trials: usize,
    pub seed: u64,
}

/// Coefficient estimates of one MCMC-SAGE run after each of a user's updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub axis_index: usize,
    pub trial: usize,
    /// `rounds[k][j]`: user `k`'s estimate after its `(j+1)`-th update.
    pub rounds: Vec<Vec<C64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<ResultRow>,
    #[serde(skip)]
    pub convergence: Vec<ConvergenceRecord>,
}

impl SweepResult {
    /// Looks up a row's value.
    pub fn value(&self, receiver: ReceiverKind, axis: f64, user: usize, metric: &str) -> Option<f64> {
        self.find(receiver, axis, user, metric).map(|r| r.value)
    }

    pub fn find(&self, receiver: ReceiverKind, axis: f64, user: usize, metric: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.receiver == receiver.name() && r.axis == axis && r.user == user && r.metric == metric)
    }

    /// Share of recorded runs in which every user's relative coefficient
    /// change between updates `from` and `to` (1-based) is below `tol`.
    pub fn convergence_fraction(&self, from: usize, to: usize, tol: f64) -> Option<f64> {
        if self.convergence.is_empty() || from == 0 || to == 0 {
            return None;
        }
        let ok = self
            .convergence
            .iter()
            .filter(|rec| {
                rec.rounds.iter().all(|r| match (r.get(from - 1), r.get(to - 1)) {
                    (Some(a), Some(b)) => (b - a).norm() < tol * a.norm(),
                    _ => false,
                })
            })
            .count();
        Some(ok as f64 / self.convergence.len() as f64)
    }
}

struct Trial {
    sig: SignatureSet,
    truth: ScenarioTruth,
    noise: Vec<C64>,
    r: ReceivedVector,
    sampler_seed: u64,
}

fn draw_trial(cfg: &SystemConfig, spec: &ExperimentSpec, axis_index: usize, trial: usize, tau_frac: f64) -> Result<Trial> {
    let seed = |s: u64| derive_seed(cfg.seed, &[axis_index as u64, trial as u64, s]);
    let sig = generate_signatures(cfg, seed(stream::SIGNATURES));
    let truth = draw_scenario_with(cfg, seed(stream::SCENARIO), tau_frac, spec.channel)?;
    let noise = draw_noise(cfg, seed(stream::NOISE));
    let mut r = noiseless_signal(cfg, &sig, &truth)?;
    for (x, w) in r.iter_mut().zip(&noise) {
        *x += w;
    }
    Ok(Trial {
        sig,
        truth,
        noise,
        r: ReceivedVector::new(r),
        sampler_seed: seed(stream::SAMPLER),
    })
}

/// Per-receiver estimates for one trial.
struct Estimates {
    a: Vec<C64>,
    delta: Vec<usize>,
    decisions: Vec<i8>,
}

fn run_receivers(
    cfg: &SystemConfig,
    receivers: &[ReceiverKind],
    trial: &Trial,
    support: usize,
) -> Result<(Vec<Estimates>, Option<Vec<Vec<C64>>>)> {
    let pilots = &trial.truth.pilots;
    let mut out = Vec::with_capacity(receivers.len());
    let mut rounds = None;
    for &kind in receivers {
        let est = match kind {
            ReceiverKind::McmcSage => {
                let (_, res) = mcmc_sage(cfg, &trial.sig, &trial.r, pilots, support, trial.sampler_seed)?;
                let mut per_user = vec![Vec::new(); cfg.users];
                for rec in &res.trace {
                    per_user[rec.user].push(rec.a);
                }
                rounds = Some(per_user);
                Estimates {
                    a: res.state.a_hat,
                    delta: res.state.tau_hat.iter().map(|t| t.get()).collect(),
                    decisions: res.decisions,
                }
            }
            ReceiverKind::SageKnownTau => {
                let known = mmse_se_init_with_delays(cfg, &trial.sig, &trial.r, pilots, &trial.truth.tau)?;
                let opts = ReceiverOptions {
                    init_symbols: Some(known.d0.as_slice().to_vec()),
                    seed: trial.sampler_seed,
                    ..ReceiverOptions::default()
                };
                let res = sage_known_tau(cfg, &trial.sig, &trial.r, &trial.truth.tau, &known.a0, pilots, &opts)?;
                Estimates {
                    a: res.state.a_hat,
                    delta: res.state.tau_hat.iter().map(|t| t.get()).collect(),
                    decisions: res.decisions,
                }
            }
            ReceiverKind::MmseSe => {
                let init = mmse_se_init_within(cfg, &trial.sig, &trial.r, pilots, support, Acquisition::default())?;
                Estimates {
                    a: init.a0,
                    delta: init.tau0.iter().map(|t| t.get()).collect(),
                    decisions: init.d0.as_slice().to_vec(),
                }
            }
            ReceiverKind::SingleUser => single_user_estimates(cfg, trial),
        };
        out.push(est);
    }
    Ok((out, rounds))
}

/// Known-channel matched filter on `y_k(ℓ) = a_k d_k(ℓ) + S_k(τ_k, ℓ)† w`,
/// i.e. the same frame with the other users removed.
fn single_user_estimates(cfg: &SystemConfig, trial: &Trial) -> Estimates {
    let truth = &trial.truth;
    let mut decisions = Vec::with_capacity(cfg.n_symbols());
    for k in 0..cfg.users {
        let w = trial.sig.waveform(k);
        for ell in 0..cfg.symbols {
            let start = placement(cfg, truth.tau[k], ell);
            let proj: C64 = w.iter().zip(&trial.noise[start..]).map(|(s, n)| s.conj() * n).sum();
            let y = truth.a[k] * f64::from(truth.d.get(k, ell)) + proj;
            decisions.push(if (truth.a[k].conj() * y).re < 0.0 { -1 } else { 1 });
        }
    }
    truth.pilots.apply(&mut decisions);
    Estimates {
        a: truth.a.clone(),
        delta: truth.tau.iter().map(|t| t.get()).collect(),
        decisions,
    }
}

fn check_axis(spec: &ExperimentSpec, want: SweepAxis) -> Result<()> {
    spec.validate()?;
    if spec.axis != want {
        return Err(Error::InvalidInput(format!(
            "sweep expects axis {want:?}, spec has {:?}",
            spec.axis
        )));
    }
    Ok(())
}

/// Coefficient and delay MSE per user against the tau-max axis.
///
/// `var_tau` is in `(τ/T_b)²`; its bound column is the delay bound of the
/// sampled waveforms averaged over the trials' signature draws.
pub fn run_mse_sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    check_axis(spec, SweepAxis::TauMaxFraction)?;
    if spec.receivers.contains(&ReceiverKind::SingleUser) {
        return Err(Error::InvalidInput("single_user has no parameter estimates for an MSE sweep".into()));
    }
    let cfg = &spec.system;
    let k_users = cfg.users;
    let n_rx = spec.receivers.len();
    let symbol_len = cfg.symbol_len() as f64;
    let nc2 = (cfg.chips * cfg.chips) as f64;
    let var_a_bound = mcrb_channel(cfg.n0, cfg.symbols)?;

    let mut result = SweepResult::default();
    // sums[axis][rx][user] = (Σ|Δa|², Σ(Δτ)²)
    let mut sums = vec![vec![vec![(0.0, 0.0); k_users]; n_rx]; spec.axis_values.len()];
    let mut tau_bounds = vec![vec![0.0; k_users]; spec.axis_values.len()];
    for (ai, &frac) in spec.axis_values.iter().enumerate() {
        let per_trial: Vec<_> = (0..spec.trials)
            .into_par_iter()
            .map(|t| -> Result<_> {
                let trial = draw_trial(cfg, spec, ai, t, frac)?;
                let (est, rounds) = run_receivers(cfg, &spec.receivers, &trial, delay_support(cfg, frac)?)?;
                let bound = mcrb_report(cfg, &trial.sig, &trial.truth.tau)?.var_tau_grid_proxy;
                Ok((trial.truth, est, rounds, bound))
            })
            .collect::<Result<_>>()?;
        for (t, (truth, est, rounds, bound)) in per_trial.into_iter().enumerate() {
            for (rx, e) in est.iter().enumerate() {
                for k in 0..k_users {
                    let da = (e.a[k] - truth.a[k]).norm_sqr();
                    let dt = (e.delta[k] as f64 - truth.tau[k].get() as f64) / symbol_len;
                    sums[ai][rx][k].0 += da;
                    sums[ai][rx][k].1 += dt * dt;
                }
            }
            for k in 0..k_users {
                tau_bounds[ai][k] += bound[k] / nc2;
            }
            if let Some(rounds) = rounds {
                result.convergence.push(ConvergenceRecord { axis_index: ai, trial: t, rounds });
            }
        }
    }

    let n = spec.trials as f64;
    for (rx, kind) in spec.receivers.iter().enumerate() {
        for (ai, &axis) in spec.axis_values.iter().enumerate() {
            for k in 0..k_users {
                let (sa, st) = sums[ai][rx][k];
                for (metric, value, bound) in [
                    ("var_a", sa / n, var_a_bound),
                    ("var_tau", st / n, tau_bounds[ai][k] / n),
                ] {
                    result.rows.push(ResultRow {
                        receiver: kind.name().into(),
                        axis,
                        user: k + 1,
                        metric: metric.into(),
                        value,
                        bound: Some(bound),
                        trials: spec.trials,
                        seed: cfg.seed,
                    });
                }
            }
        }
    }
    Ok(result)
}

/// Noise level that puts the nominal user at `effective_snr_db`.
pub fn n0_for_effective_snr(cfg: &SystemConfig, nominal: usize, effective_snr_db: f64) -> f64 {
    let discount = cfg.payload_len() as f64 / cfg.symbols as f64;
    cfg.sigma2[nominal] * discount / 10f64.powf(effective_snr_db / 10.0)
}

/// Payload BER per user against the effective-SNR axis, delays uniform on
/// `[0, T_b/2)`.
pub fn run_ber_sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    check_axis(spec, SweepAxis::EffectiveSnr)?;
    let nominal = spec.nominal_index();
    let k_users = spec.system.users;
    let n_rx = spec.receivers.len();
    let payload = spec.system.payload_len();
    let lp = spec.system.pilots;
    let l = spec.system.symbols;

    let mut result = SweepResult::default();
    let mut errors = vec![vec![vec![0u64; k_users]; n_rx]; spec.axis_values.len()];
    for (ai, &snr) in spec.axis_values.iter().enumerate() {
        let mut cfg = spec.system.clone();
        cfg.n0 = n0_for_effective_snr(&spec.system, nominal, snr);
        let per_trial: Vec<_> = (0..spec.trials)
            .into_par_iter()
            .map(|t| -> Result<_> {
                let trial = draw_trial(&cfg, spec, ai, t, 0.5)?;
                let (est, _) = run_receivers(&cfg, &spec.receivers, &trial, cfg.delay_grid_len())?;
                let counts: Vec<Vec<u64>> = est
                    .iter()
                    .map(|e| {
                        (0..k_users)
                            .map(|k| {
                                (lp..l)
                                    .filter(|&ell| e.decisions[k * l + ell] != trial.truth.d.get(k, ell))
                                    .count() as u64
                            })
                            .collect()
                    })
                    .collect();
                Ok(counts)
            })
            .collect::<Result<_>>()?;
        for counts in per_trial {
            for (rx, c) in counts.iter().enumerate() {
                for k in 0..k_users {
                    errors[ai][rx][k] += c[k];
                }
            }
        }
    }

    let denom = (spec.trials * payload) as f64;
    for (rx, kind) in spec.receivers.iter().enumerate() {
        for (ai, &axis) in spec.axis_values.iter().enumerate() {
            for k in 0..k_users {
                result.rows.push(ResultRow {
                    receiver: kind.name().into(),
                    axis,
                    user: k + 1,
                    metric: "ber".into(),
                    value: errors[ai][rx][k] as f64 / denom,
                    bound: None,
                    trials: spec.trials,
                    seed: spec.system.seed,
                });
            }
        }
    }
    Ok(result)
}

/// Dispatches on the spec's axis.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    match spec.axis {
        SweepAxis::TauMaxFraction => run_mse_sweep(spec),
        SweepAxis::EffectiveSnr => run_ber_sweep(spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::ChannelModel;

    fn tiny(axis: SweepAxis, values: Vec<f64>, receivers: Vec<ReceiverKind>) -> ExperimentSpec {
        ExperimentSpec {
            axis,
            axis_values: values,
            trials: 3,
            receivers,
            output: None,
            channel: ChannelModel::Rayleigh,
            nominal_user: None,
            system: SystemConfig {
                users: 2,
                chips: 4,
                samples_per_chip: 2,
                symbols: 8,
                pilots: 2,
                n0: 0.5,
                sigma2: vec![1.0, 2.0],
                gibbs_samples: 4,
                burn_in: 1,
                sage_iters: 4,
                seed: 3,
            },
        }
    }

    #[test]
    fn mse_row_count_and_bound() {
        let spec = tiny(
            SweepAxis::TauMaxFraction,
            vec![0.2, 0.5],
            vec![ReceiverKind::McmcSage, ReceiverKind::MmseSe],
        );
        let res = run_mse_sweep(&spec).unwrap();
        assert_eq!(res.rows.len(), 2 * 2 * 2 * 2);
        for row in res.rows.iter().filter(|r| r.metric == "var_a") {
            assert_eq!(row.bound, Some(0.5 / 8.0));
        }
        assert_eq!(res.convergence.len(), 6);
        assert!(res.convergence.iter().all(|c| c.rounds.iter().all(|r| r.len() == 2)));
    }

    #[test]
    fn ber_counts_payload_only() {
        let spec = tiny(
            SweepAxis::EffectiveSnr,
            vec![0.0, 30.0],
            vec![ReceiverKind::SingleUser, ReceiverKind::MmseSe],
        );
        let res = run_ber_sweep(&spec).unwrap();
        assert_eq!(res.rows.len(), 2 * 2 * 2);
        for row in &res.rows {
            // Multiples of 1 / (trials·(L − Lp)).
            let scaled = row.value * 18.0;
            assert!((scaled - scaled.round()).abs() < 1e-9);
            assert!(row.bound.is_none());
        }
    }

    #[test]
    fn wrong_axis_is_rejected() {
        let spec = tiny(SweepAxis::EffectiveSnr, vec![1.0], vec![ReceiverKind::MmseSe]);
        assert!(run_mse_sweep(&spec).is_err());
        let spec = tiny(SweepAxis::TauMaxFraction, vec![0.5], vec![ReceiverKind::SingleUser]);
        assert!(run_mse_sweep(&spec).is_err());
    }

    #[test]
    fn effective_snr_scaling() {
        let spec = tiny(SweepAxis::EffectiveSnr, vec![1.0], vec![ReceiverKind::MmseSe]);
        let n0 = n0_for_effective_snr(&spec.system, 1, 10.0);
        let eff = spec.system.sigma2[1] / n0 * 6.0 / 8.0;
        assert!((eff - 10.0).abs() < 1e-12);
    }
}
