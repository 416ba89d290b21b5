//! Runs the UCLK baseline for a few steps and shows its per-step work and optimistic values.

use vbmle::agents::{uclk_step, AgentConfig, AgentKind, UclkState};
use vbmle::rng::TrialRng;

fn main() -> vbmle::Result<()> {
    let mdp = vbmle::generate_mixture_mdp(3, 2, 4, 2, 0.05)?;
    let mut rng = TrialRng::new(4);
    for radius in [0.1, 1.0] {
        let config = AgentConfig {
            uclk_radius: radius,
            ..AgentConfig::new(AgentKind::Uclk)
        };
        let mut state = UclkState::new(mdp.dim(), mdp.num_states(), config.lambda)?;
        let mut s = 0;
        println!("radius {radius}");
        for t in 1..=200 {
            let step = uclk_step(&mdp, s, &config, &mut state)?;
            let next = mdp.sample_transition(mdp.theta_star().as_slice(), s, step.action, &mut rng);
            state.observe(next);
            if t % 50 == 0 {
                println!(
                    "  t={t:3} bonus evaluations {} estimate {:.3?} max optimistic value {:.3}",
                    step.counts.bonus_evaluations,
                    step.estimate,
                    step.values.iter().cloned().fold(f64::MIN, f64::max)
                );
            }
            s = next;
        }
    }
    Ok(())
}
