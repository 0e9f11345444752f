#![allow(dead_code)]

use mcsage::sysmodel::{draw_scenario, generate_signatures, simulate_received};
use mcsage::{EffectiveModel, Pilots, ReceivedVector, ScenarioTruth, SignatureSet, SystemConfig};

pub struct Instance {
    pub cfg: SystemConfig,
    pub sig: SignatureSet,
    pub truth: ScenarioTruth,
    pub r: ReceivedVector,
}

impl Instance {
    pub fn model(&self) -> EffectiveModel<'_> {
        EffectiveModel::new(&self.cfg, &self.sig, &self.r, &self.truth.a, &self.truth.tau).unwrap()
    }
}

pub fn small_config(users: usize, symbols: usize, pilots: usize, n0: f64) -> SystemConfig {
    SystemConfig {
        users,
        chips: 4,
        samples_per_chip: 2,
        symbols,
        pilots,
        n0,
        sigma2: vec![1.0; users],
        gibbs_samples: 20,
        burn_in: 5,
        sage_iters: 4 * users,
        seed: 0,
    }
}

pub fn instance(cfg: &SystemConfig, seed: u64) -> Instance {
    let sig = generate_signatures(cfg, 1000 + seed);
    let truth = draw_scenario(cfg, 2000 + seed, 0.5).unwrap();
    let r = simulate_received(cfg, &sig, &truth, 3000 + seed).unwrap();
    Instance { cfg: cfg.clone(), sig, truth, r }
}

/// `−‖r − G d‖² / N0`.
pub fn log_likelihood(model: &EffectiveModel, d: &[i8]) -> f64 {
    model.residual(d).iter().map(|x| x.norm_sqr()).sum::<f64>() / -model.n0()
}

/// Symbol index `q` → bit `j` of the enumeration counter over the free slots.
pub fn configurations(n: usize, pilots: &Pilots) -> Vec<Vec<i8>> {
    let free = pilots.free_indices();
    (0u64..1 << free.len())
        .map(|mask| {
            let mut d = vec![1i8; n];
            for (j, &q) in free.iter().enumerate() {
                d[q] = if mask >> j & 1 == 1 { -1 } else { 1 };
            }
            pilots.apply(&mut d);
            d
        })
        .collect()
}

/// Exact posterior over all symbol frames consistent with the pilots.
pub fn enumerate_posterior(model: &EffectiveModel, pilots: &Pilots) -> Vec<(Vec<i8>, f64)> {
    let configs = configurations(model.n_cols(), pilots);
    let logs: Vec<f64> = configs.iter().map(|d| log_likelihood(model, d)).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    configs.into_iter().zip(logs).map(|(d, l)| (d, (l - max).exp() / z)).collect()
}

pub fn posterior_means(post: &[(Vec<i8>, f64)]) -> Vec<f64> {
    let n = post[0].0.len();
    (0..n).map(|q| post.iter().map(|(d, p)| p * f64::from(d[q])).sum()).collect()
}
