//! One value-biased step next to the plain MLE on the same history.
//!
//! The bias pulls the estimate toward models under which the current state is worth more.

use vbmle::agents::{alpha_schedule, vbmle_step_approx, vbmle_step_exact, AgentConfig, AgentKind};
use vbmle::likelihood::{LikelihoodTerms, TransitionHistory};
use vbmle::planning::solve_optimal;
use vbmle::rng::TrialRng;
use vbmle::ParamVector;

fn main() -> vbmle::Result<()> {
    let mdp = vbmle::generate_mixture_mdp(3, 2, 4, 9, 0.05)?;
    let mut rng = TrialRng::new(1);
    let mut history = TransitionHistory::new(mdp.dim());
    let mut s = 0;
    for _ in 0..40 {
        let a = rng.index(mdp.num_actions());
        let next = mdp.sample_transition(mdp.theta_star().as_slice(), s, a, &mut rng);
        history.push(&mdp, s, a, next);
        s = next;
    }
    let t = history.len() + 1;
    let alpha = alpha_schedule(t, 0.5);
    let terms = LikelihoodTerms::from_history(&history);
    let config = AgentConfig::new(AgentKind::VbmleExact);
    let uniform = ParamVector::uniform(mdp.dim());

    let exact = vbmle_step_exact(&mdp, &terms, s, alpha, &config, &uniform, &uniform, &mut rng)?;
    println!("t={t} state={s} alpha={alpha:.3}");
    println!("MLE          : {:.4?}", exact.mle.theta.as_slice());
    println!("VBMLE (exact): {:.4?} action {}", exact.theta.as_slice(), exact.action);
    println!("  objective by start: {:.4?}", exact.start_objectives);

    let prev = solve_optimal(&mdp, exact.mle.theta.as_slice())?;
    let approx = vbmle_step_approx(&mdp, &terms, s, alpha, &config, &prev.value.values, &exact.mle.theta)?;
    println!("VBMLE (approx): {:.4?} action {} anchor {}", approx.theta.as_slice(), approx.action, approx.anchor_action);

    let v = |theta: &ParamVector| solve_optimal(&mdp, theta.as_slice()).map(|o| o.value.values[s]);
    println!("V*(s) under MLE {:.4}, under VBMLE {:.4}", v(&exact.mle.theta)?, v(&exact.theta)?);
    Ok(())
}
