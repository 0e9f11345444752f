//! Shared fixtures for the benchmarks.

use mcsage::sysmodel::{delay_support, draw_scenario, generate_signatures, simulate_received};
use mcsage::{ReceivedVector, ScenarioTruth, SignatureSet, SystemConfig};

/// One received frame of the five-user scenario.
pub struct Frame {
    pub cfg: SystemConfig,
    pub sig: SignatureSet,
    pub truth: ScenarioTruth,
    pub r: ReceivedVector,
    pub support: usize,
}

impl Frame {
    pub fn paper(seed: u64) -> Self {
        let cfg = SystemConfig::paper_scenario();
        let sig = generate_signatures(&cfg, seed);
        let truth = draw_scenario(&cfg, seed + 1, 0.5).expect("valid scenario");
        let r = simulate_received(&cfg, &sig, &truth, seed + 2).expect("valid frame");
        let support = delay_support(&cfg, 0.5).expect("valid support");
        Self { cfg, sig, truth, r, support }
    }
}
