//! Checks the deterministic bounds and the confidence ellipsoid on one simulated history.

use vbmle::diagnostics::{elliptical_potential_check, ftl_delta_reports, mle_ellipsoid_report, supermartingale_trace, BoundParams};
use vbmle::likelihood::{MleOptions, MleTrace, Regularizer, TransitionHistory};
use vbmle::rng::TrialRng;
use vbmle::ParamVector;

fn main() -> vbmle::Result<()> {
    let mdp = vbmle::generate_mixture_mdp(3, 2, 4, 8, 0.05)?;
    let mut rng = TrialRng::new(2);
    let mut history = TransitionHistory::new(mdp.dim());
    let mut s = 0;
    for _ in 0..200 {
        let a = rng.index(mdp.num_actions());
        let next = mdp.sample_transition(mdp.theta_star().as_slice(), s, a, &mut rng);
        history.push(&mdp, s, a, next);
        s = next;
    }
    let reg = Regularizer::new(1.0);
    let trace = MleTrace::compute(&history, reg, &ParamVector::uniform(mdp.dim()), MleOptions::default())?;
    let params = BoundParams {
        dim: mdp.dim(),
        lambda: 1.0,
        feature_norm: mdp.feature_norm_bound(),
        p_min: mdp.assess_feasibility(vbmle::mdp::DEFAULT_ZERO_THRESHOLD).p_min,
        delta: 0.1,
    };
    let checkpoints = [25, 50, 100, 200];

    let mut reports = vec![elliptical_potential_check(&history, 1.0, params.feature_norm, params.dim)?];
    reports.extend(ftl_delta_reports(&history, &trace, reg, &params, &checkpoints)?);
    reports.extend(mle_ellipsoid_report(mdp.theta_star(), &history, &trace, &params, &checkpoints)?);
    for r in &reports {
        println!(
            "{:<20} t={:3} realized {:>12.4} bound {:>12.4} {}",
            r.kind.name(),
            r.t,
            r.realized,
            r.bound,
            if r.satisfied { "ok" } else { "VIOLATED" }
        );
    }

    let mart = supermartingale_trace(&history, &trace, mdp.theta_star(), reg)?;
    for p in mart.iter().filter(|p| p.t % 50 == 0) {
        println!("X_{} = {:.4}  M_{} = {:.4}", p.t, p.x, p.t, p.m);
    }
    Ok(())
}
