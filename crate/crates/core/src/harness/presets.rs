//! Built-in experiment configurations.

use crate::agents::{AgentConfig, AgentKind};
use crate::error::Result;
use crate::mdp::{LinearMdp, MixtureSpec};
use crate::simplex::ParamVector;

use super::config::{EnvironmentSource, ExperimentConfig};

pub const PRESETS: &[&str] = &["small", "medium", "large", "closed_loop"];

/// Seed of the generated environments used by the presets.
pub const PRESET_ENV_SEED: u64 = 2024;

fn uclk(radius: f64) -> AgentConfig {
    let mut c = AgentConfig::new(AgentKind::Uclk).with_label(format!("uclk_r{radius}"));
    c.uclk_radius = radius;
    c
}

fn generated(num_states: usize, num_actions: usize) -> EnvironmentSource {
    EnvironmentSource::Generate(MixtureSpec::new(num_states, num_actions, 4, PRESET_ENV_SEED))
}

pub fn experiment(name: &str) -> Option<ExperimentConfig> {
    let exact = AgentConfig::new(AgentKind::VbmleExact);
    let config = match name {
        "small" => ExperimentConfig::new(generated(3, 2), vec![exact, uclk(0.1), uclk(1.0)]),
        "medium" => ExperimentConfig::new(generated(5, 4), vec![exact, uclk(0.1), uclk(1.0)]),
        "large" => ExperimentConfig::new(
            generated(15, 4),
            vec![exact, AgentConfig::new(AgentKind::VbmleApprox)],
        ),
        "closed_loop" => {
            let mut c = ExperimentConfig::new(
                EnvironmentSource::Preset("closed_loop".into()),
                vec![
                    AgentConfig::new(AgentKind::CeMle),
                    AgentConfig {
                        vbmle_extra_starts: 2,
                        ..exact
                    },
                ],
            );
            c.horizon = 300;
            c.trials = 10;
            c.checkpoints = vec![50, 100, 200, 300];
            c
        }
        _ => return None,
    };
    Some(config)
}

/// Built-in environments addressable from a config's `environment.preset`.
pub fn environment(name: &str) -> Option<Result<LinearMdp>> {
    match name {
        "closed_loop" => Some(closed_loop()),
        _ => None,
    }
}

/// Two states, two kernels. In state 0, action 0 earns 0.45 and moves the same way under
/// both kernels; action 1 earns nothing and reaches the rewarding state 1 with probability
/// 0.95 under kernel 0 but only 0.05 under kernel 1. State 1 pays 1 and is uninformative.
/// Under `theta* = (0.8, 0.2)` action 1 is optimal, under the uniform estimate action 0 is,
/// and playing action 0 never reveals otherwise.
pub fn closed_loop() -> Result<LinearMdp> {
    let (ns, na, d) = (2, 2, 2);
    let mut features = vec![0.0; ns * na * ns * d];
    let mut set = |s: usize, a: usize, rows: [[f64; 2]; 2]| {
        for (k, row) in rows.iter().enumerate() {
            for (sn, p) in row.iter().enumerate() {
                features[((s * na + a) * ns + sn) * d + k] = *p;
            }
        }
    };
    set(0, 0, [[0.9, 0.1], [0.9, 0.1]]);
    set(0, 1, [[0.05, 0.95], [0.95, 0.05]]);
    set(1, 0, [[0.5, 0.5], [0.5, 0.5]]);
    set(1, 1, [[0.5, 0.5], [0.5, 0.5]]);
    LinearMdp::new(
        ns,
        na,
        d,
        features,
        ParamVector::new(vec![0.8, 0.2])?,
        vec![0.45, 0.0, 1.0, 1.0],
        0.9,
        vec![0.5, 0.5],
    )
}
