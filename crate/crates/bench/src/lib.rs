//! Fixtures shared by the benches.

use histrel_core::synth::{synthetic_dump, SynthConfig};
use histrel_core::{DecisionLog, Engine, RunConfig};

pub const SIZES: [usize; 3] = [24, 60, 120];

pub fn config(historians: usize) -> SynthConfig {
    SynthConfig {
        historians,
        topics: (historians / 3).max(4),
        institutions: (historians / 5).max(3),
        ..SynthConfig::default()
    }
}

pub fn engine(historians: usize) -> Engine {
    Engine::from_dump(synthetic_dump(&config(historians)), DecisionLog::in_memory(), RunConfig::default())
        .expect("synthetic dump is consistent")
}
