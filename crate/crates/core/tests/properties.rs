mod common;

use common::{instance, small_config};
use mcsage::bounds::{mcrb_channel, mcrb_delay, DelayBound};
use mcsage::gibbs::{estimate_soft_correlations, estimate_soft_symbols, llr_single, pairwise_joint_prob};
use mcsage::harness::{read_csv, to_csv, ResultRow};
use mcsage::sage::{m_step_a, surrogate_q};
use mcsage::seed::derive_seed;
use mcsage::sysmodel::{delay_support, draw_scenario, generate_signatures, noiseless_signal, simulate_received};
use mcsage::{DelayIndex, Pilots, ScenarioTruth, SweepResult, SymbolFrame, C64};
use proptest::prelude::*;

fn frame(bits: u8, n: usize) -> Vec<i8> {
    (0..n).map(|q| if bits >> q & 1 == 1 { -1 } else { 1 }).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pairwise_probabilities_form_a_distribution(seed in 0u64..10_000, bits in 0u8..16, n0 in 0.05f64..5.0) {
        let cfg = small_config(2, 2, 0, n0);
        let inst = instance(&cfg, seed);
        let model = inst.model();
        let d = frame(bits, 4);
        for (p, q) in [(0, 1), (0, 2), (2, 1), (3, 0)] {
            let probs: Vec<f64> = [(1, 1), (1, -1), (-1, 1), (-1, -1)]
                .iter()
                .map(|&(m, n)| pairwise_joint_prob(&model, p, q, m, n, &d).unwrap())
                .collect();
            prop_assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            // With d_p fixed, the conditional of d_q is the single-symbol sigmoid.
            let n = d[p];
            let cond = pairwise_joint_prob(&model, p, q, 1, n, &d).unwrap()
                / (pairwise_joint_prob(&model, p, q, 1, n, &d).unwrap() + pairwise_joint_prob(&model, p, q, -1, n, &d).unwrap());
            let llr = llr_single(&model, q, &d).unwrap();
            prop_assert!((cond - 1.0 / (1.0 + (-llr).exp())).abs() < 1e-9);
        }
    }

    #[test]
    fn soft_outputs_stay_in_range(seed in 0u64..10_000, n0 in 0.01f64..4.0, pilots in 0usize..3) {
        let cfg = small_config(2, 3, pilots, n0);
        let inst = instance(&cfg, seed);
        let model = inst.model();
        let mask = Pilots::for_config(&cfg);
        let (d_tilde, samples) = estimate_soft_symbols(&model, &mask, 8, 2, seed).unwrap();
        prop_assert!(d_tilde.iter().all(|x| (-1.0..=1.0).contains(x)));
        let soft = estimate_soft_correlations(&model, &mask, &samples).unwrap();
        for ell in 0usize..3 {
            for ell2 in ell.saturating_sub(1)..(ell + 2).min(3) {
                let c = soft.corr(0, ell, 1, ell2).unwrap();
                prop_assert!((-1.0..=1.0).contains(&c));
                prop_assert_eq!(c, soft.corr(1, ell2, 0, ell).unwrap());
            }
            if ell < pilots {
                prop_assert_eq!(soft.d_tilde(0, ell), 1.0);
                prop_assert!(samples.iter().all(|s| s[ell] == 1 && s[3 + ell] == 1));
            }
        }
    }

    #[test]
    fn delays_stay_on_grid(seed in 0u64..10_000, chips in 1usize..9, q in 1usize..6, frac in 0.01f64..=0.5) {
        let mut cfg = small_config(3, 4, 1, 1.0);
        cfg.chips = chips;
        cfg.samples_per_chip = q;
        let grid = cfg.delay_grid_len();
        prop_assert_eq!(grid, (chips * q).div_ceil(2));
        prop_assert!(DelayIndex::new(grid - 1, &cfg).is_ok());
        prop_assert!(DelayIndex::new(grid, &cfg).is_err());
        let support = delay_support(&cfg, frac).unwrap();
        prop_assert!((1..=grid).contains(&support));
        let truth = draw_scenario(&cfg, seed, frac).unwrap();
        prop_assert!(truth.tau.iter().all(|t| t.get() < support));
    }

    #[test]
    fn bound_identities(snr in 1e-3f64..1e3, l in 1usize..500, b in 1e-3f64..1e3, n0 in 1e-4f64..10.0) {
        let v = mcrb_delay(snr, l, b).unwrap().value();
        let identity = v * 8.0 * std::f64::consts::PI.powi(2) * l as f64 * snr * b * b;
        prop_assert!((identity - 1.0).abs() < 1e-12);
        prop_assert_eq!(mcrb_delay(snr, l, f64::INFINITY).unwrap(), DelayBound::ZeroLimit);
        prop_assert!(mcrb_delay(snr, l, 0.0).is_err());
        prop_assert_eq!(mcrb_channel(n0, l).unwrap(), n0 / l as f64);
    }

    #[test]
    fn coefficient_step_is_linear_and_optimal(re in prop::collection::vec(-3.0f64..3.0, 1..40), scale in -4.0f64..4.0, n0 in 0.01f64..5.0, s2 in 0.1f64..5.0) {
        let psi: Vec<C64> = re.iter().enumerate().map(|(i, x)| C64::new(*x, (i as f64 * 0.37).sin())).collect();
        let a = m_step_a(&psi, n0, s2);
        let scaled: Vec<C64> = psi.iter().map(|p| p * scale).collect();
        prop_assert!((m_step_a(&scaled, n0, s2) - a * scale).norm() < 1e-9 * (1.0 + a.norm()));
        let sum: C64 = psi.iter().sum();
        let best = surrogate_q(sum, a, n0, s2, psi.len());
        for da in [C64::new(1e-3, 0.0), C64::new(0.0, -1e-3), C64::new(0.2, 0.1)] {
            prop_assert!(surrogate_q(sum, a + da, n0, s2, psi.len()) < best);
        }
    }

    #[test]
    fn simulation_is_seeded_and_linear(seed in 0u64..10_000) {
        let cfg = small_config(2, 4, 1, 1e-9);
        let sig = generate_signatures(&cfg, seed);
        prop_assert_eq!(sig.clone(), generate_signatures(&cfg, seed));
        let truth = draw_scenario(&cfg, seed, 0.5).unwrap();
        prop_assert_eq!(simulate_received(&cfg, &sig, &truth, 9).unwrap(), simulate_received(&cfg, &sig, &truth, 9).unwrap());
        let both = noiseless_signal(&cfg, &sig, &truth).unwrap();
        let only = |k: usize| {
            let mut t: ScenarioTruth = truth.clone();
            t.a[1 - k] = C64::new(0.0, 0.0);
            noiseless_signal(&cfg, &sig, &t).unwrap()
        };
        let (u0, u1) = (only(0), only(1));
        for i in 0..both.len() {
            prop_assert_eq!(both[i], u0[i] + u1[i]);
        }
        prop_assert_eq!(derive_seed(seed, &[1, 2, 3]), derive_seed(seed, &[1, 2, 3]));
        prop_assert_ne!(derive_seed(seed, &[1, 2, 3]), derive_seed(seed, &[1, 3, 2]));
    }

    #[test]
    fn csv_round_trips(values in prop::collection::vec((-1e6f64..1e6, prop::option::of(0.0f64..1.0)), 0..20)) {
        let rows: Vec<ResultRow> = values
            .iter()
            .enumerate()
            .map(|(i, (v, b))| ResultRow {
                receiver: "mcmc_sage".into(),
                axis: i as f64 * 0.05,
                user: i % 5 + 1,
                metric: if i % 2 == 0 { "var_a".into() } else { "ber".into() },
                value: *v,
                bound: *b,
                trials: 10,
                seed: 1,
            })
            .collect();
        let result = SweepResult { rows, ..SweepResult::default() };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        std::fs::write(&path, to_csv(&result).unwrap()).unwrap();
        prop_assert_eq!(read_csv(&path).unwrap(), result.rows);
    }
}

#[test]
fn pilot_mask_is_the_frame_head() {
    let p = Pilots::head(3, 10, 4);
    for k in 0..3 {
        for ell in 0..10 {
            assert_eq!(p.is_pilot(k * 10 + ell), ell < 4);
        }
    }
    let mut f = SymbolFrame::filled(3, 10, -1).as_slice().to_vec();
    p.apply(&mut f);
    assert_eq!(f.iter().filter(|&&x| x == 1).count(), 12);
}
