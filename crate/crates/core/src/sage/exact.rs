//! Exact E-step by enumeration over the non-pilot symbols.
//!
//! With `b_q = Re{g_q† r}` and `R = Re{G†G}` the symbol posterior is
//! proportional to `exp(f(d)/N0)` where `f(d) = 2 bᵀd − dᵀRd`. The free symbols
//! are visited in Gray-code order so that each step flips one symbol and
//! updates `f` and `Rd` in `O(K·L)`.

use crate::error::{invalid, Result};
use crate::gibbs::{for_each_pair, EffectiveModel, SoftStatistics};
use crate::sysmodel::Pilots;

/// Enumeration is refused above this many free symbols.
pub const MAX_EXACT_FREE_SYMBOLS: usize = 20;

#[derive(Clone, Debug)]
pub struct ExactPosterior {
    /// Exact posterior means of symbols and cross-user products.
    pub soft: SoftStatistics,
    /// `ln p(r | a, τ)` with the data summed out.
    pub log_evidence: f64,
}

pub fn exact_posterior(model: &EffectiveModel, pilots: &Pilots) -> Result<ExactPosterior> {
    let n = model.n_cols();
    let free: Vec<usize> = (0..n).filter(|&q| !pilots.is_pilot(q)).collect();
    if free.len() > MAX_EXACT_FREE_SYMBOLS {
        return Err(invalid(format!(
            "exact E-step supports at most {MAX_EXACT_FREE_SYMBOLS} free symbols, got {}",
            free.len()
        )));
    }
    let n0 = model.n0();
    let r = model.r();
    let b: Vec<f64> = (0..n).map(|q| model.col_dot(q, r).re).collect();
    let mut gram = vec![0.0; n * n];
    for p in 0..n {
        for q in p..n {
            let v = model.gram(p, q).re;
            gram[p * n + q] = v;
            gram[q * n + p] = v;
        }
    }
    let mut pairs = Vec::new();
    for_each_pair(model.users(), model.symbols(), |q, p, slot_qp, slot_pq| pairs.push((q, p, slot_qp, slot_pq)));

    let mut d: Vec<i8> = vec![-1; n];
    pilots.apply(&mut d);
    let mut rd: Vec<f64> = (0..n)
        .map(|p| (0..n).map(|q| gram[p * n + q] * f64::from(d[q])).sum())
        .collect();
    let mut f: f64 = (0..n).map(|q| f64::from(d[q]) * (2.0 * b[q] - rd[q])).sum();

    let mut f_max = f;
    let mut z = 0.0;
    let mut s1 = vec![0.0; n];
    let mut s2 = vec![0.0; pairs.len()];
    let total: u64 = 1 << free.len();
    for step in 0..total {
        if step > 0 {
            let q = free[step.trailing_zeros() as usize];
            let delta = -2.0 * f64::from(d[q]);
            f += 2.0 * b[q] * delta - 2.0 * delta * rd[q] - gram[q * n + q] * delta * delta;
            d[q] = -d[q];
            for (p, x) in rd.iter_mut().enumerate() {
                *x += delta * gram[p * n + q];
            }
        }
        if f > f_max {
            let scale = ((f_max - f) / n0).exp();
            z *= scale;
            s1.iter_mut().chain(s2.iter_mut()).for_each(|x| *x *= scale);
            f_max = f;
        }
        let w = ((f - f_max) / n0).exp();
        z += w;
        for (acc, &x) in s1.iter_mut().zip(&d) {
            *acc += w * f64::from(x);
        }
        for (acc, &(q, p, _, _)) in s2.iter_mut().zip(&pairs) {
            *acc += w * f64::from(d[q] * d[p]);
        }
    }

    let d_tilde = s1
        .iter()
        .enumerate()
        .map(|(q, &s)| match pilots.value(q) {
            Some(v) => f64::from(v),
            None => (s / z).clamp(-1.0, 1.0),
        })
        .collect();
    let mut corr = vec![0.0; n * model.users() * 3];
    for (&s, &(_, _, slot_qp, slot_pq)) in s2.iter().zip(&pairs) {
        let v = (s / z).clamp(-1.0, 1.0);
        corr[slot_qp] = v;
        corr[slot_pq] = v;
    }
    let r_energy: f64 = r.iter().map(|x| x.norm_sqr()).sum();
    let log_evidence = -r_energy / n0 + f_max / n0 + z.ln()
        - free.len() as f64 * std::f64::consts::LN_2
        - r.len() as f64 * (std::f64::consts::PI * n0).ln();
    Ok(ExactPosterior {
        soft: SoftStatistics::from_parts(model.users(), model.symbols(), d_tilde, corr),
        log_evidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::{draw_scenario, generate_signatures, simulate_received, SystemConfig};
    use num_complex::Complex64 as C64;

    fn cfg() -> SystemConfig {
        SystemConfig {
            users: 2,
            chips: 4,
            samples_per_chip: 2,
            symbols: 3,
            pilots: 1,
            n0: 0.8,
            sigma2: vec![1.0, 2.0],
            gibbs_samples: 1,
            burn_in: 0,
            sage_iters: 1,
            seed: 0,
        }
    }

    /// Brute-force posterior by direct evaluation of `‖r − Gd‖²`.
    #[test]
    fn matches_brute_force() {
        let c = cfg();
        let sig = generate_signatures(&c, 4);
        let truth = draw_scenario(&c, 7, 0.5).unwrap();
        let r = simulate_received(&c, &sig, &truth, 8).unwrap();
        let model = EffectiveModel::new(&c, &sig, &r, &truth.a, &truth.tau).unwrap();
        let post = exact_posterior(&model, &truth.pilots).unwrap();

        let free = truth.pilots.free_indices();
        let mut weights = Vec::new();
        let mut frames = Vec::new();
        for mask in 0..(1u32 << free.len()) {
            let mut d = vec![1i8; 6];
            for (j, &q) in free.iter().enumerate() {
                d[q] = if mask >> j & 1 == 1 { 1 } else { -1 };
            }
            let e: f64 = model.residual(&d).iter().map(|x| x.norm_sqr()).sum();
            weights.push((-e / c.n0).exp() / (std::f64::consts::PI * c.n0).powi(r.len() as i32) / 16.0);
            frames.push(d);
        }
        let z: f64 = weights.iter().sum();
        assert!((post.log_evidence - z.ln()).abs() < 1e-9);
        for q in 0..6 {
            let m: f64 = weights.iter().zip(&frames).map(|(w, d)| w * f64::from(d[q])).sum::<f64>() / z;
            assert!((post.soft.d_tilde(q / 3, q % 3) - m).abs() < 1e-12);
        }
        let m: f64 = weights
            .iter()
            .zip(&frames)
            .map(|(w, d)| w * f64::from(d[1] * d[5]))
            .sum::<f64>()
            / z;
        assert!((post.soft.corr(0, 1, 1, 2).unwrap() - m).abs() < 1e-12);
    }

    #[test]
    fn refuses_large_frames() {
        let mut c = cfg();
        c.symbols = 12;
        c.pilots = 0;
        let sig = generate_signatures(&c, 4);
        let r = crate::sysmodel::ReceivedVector::new(vec![C64::new(0.0, 0.0); c.sample_len()]);
        let tau = vec![crate::sysmodel::DelayIndex::new(0, &c).unwrap(); 2];
        let model = EffectiveModel::new(&c, &sig, &r, &[C64::new(1.0, 0.0); 2], &tau).unwrap();
        assert!(exact_posterior(&model, &crate::sysmodel::Pilots::none(2, 12)).is_err());
    }
}
