use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sim::PlatformModel;

/// Tight-loop benchmark: each iteration should take `iteration_cycles`; one
/// taking more than `threshold_cycles` is a detour. The loop stops after
/// `detours` detours or `max_cycles` elapsed cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetourConfig {
    pub iteration_cycles: u64,
    pub threshold_cycles: u64,
    pub detours: usize,
    pub max_cycles: u64,
    /// Mean length of one suspension of the host.
    pub mean_suspension_cycles: u64,
}

impl Default for DetourConfig {
    fn default() -> DetourConfig {
        DetourConfig {
            iteration_cycles: 100,
            threshold_cycles: 1_000,
            detours: 5_000,
            max_cycles: 1 << 40,
            mean_suspension_cycles: 50_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetourEstimate {
    /// Estimated suspension share: detour excess over elapsed cycles.
    pub share: f64,
    pub detours: usize,
    pub elapsed_cycles: u64,
}

/// Runs the selfish-detour loop inside a simulated sandbox that is suspended
/// for a share `S_M` of the time: running spans are exponential, suspensions
/// uniform on `[mean/2, 3 mean/2]`.
pub fn selfish_detour(config: &DetourConfig, model: &PlatformModel, seed: u64) -> DetourEstimate {
    let share = model.suspension_share();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean_susp = config.mean_suspension_cycles as f64;
    let mean_run = if share > 0.0 { mean_susp * (1.0 - share) / share } else { f64::INFINITY };
    let mut elapsed = 0u64;
    let mut excess = 0u64;
    let mut detours = 0;
    while detours < config.detours && elapsed < config.max_cycles {
        let run = if mean_run.is_finite() {
            let u: f64 = rng.random::<f64>();
            (-(1.0 - u).ln() * mean_run) as u64
        } else {
            config.max_cycles - elapsed
        };
        elapsed = elapsed.saturating_add(run).min(config.max_cycles);
        if elapsed >= config.max_cycles {
            break;
        }
        let suspension = rng.random_range(config.mean_suspension_cycles / 2..=config.mean_suspension_cycles * 3 / 2);
        // The interrupted iteration takes its own cycles plus the suspension.
        if config.iteration_cycles + suspension > config.threshold_cycles {
            excess += suspension;
            detours += 1;
        }
        elapsed += suspension;
    }
    let share = if elapsed == 0 { 0.0 } else { excess as f64 / elapsed as f64 };
    DetourEstimate { share, detours, elapsed_cycles: elapsed }
}
