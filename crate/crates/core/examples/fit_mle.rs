//! Fits the mixture weights from uniformly exploratory data and watches the estimate converge.

use vbmle::likelihood::{solve_mle, MleOptions, Regularizer, TransitionHistory};
use vbmle::rng::TrialRng;
use vbmle::ParamVector;

fn main() -> vbmle::Result<()> {
    let mdp = vbmle::generate_mixture_mdp(5, 2, 2, 3, 0.05)?;
    let mut rng = TrialRng::new(17);
    let mut history = TransitionHistory::new(mdp.dim());
    let mut theta = ParamVector::uniform(mdp.dim());
    let mut s = mdp.sample_initial_state(&mut rng);
    println!("theta* = {:.4?}", mdp.theta_star().as_slice());
    for t in 1..=2000 {
        let a = rng.index(mdp.num_actions());
        let next = mdp.sample_transition(mdp.theta_star().as_slice(), s, a, &mut rng);
        history.push(&mdp, s, a, next);
        s = next;
        if t % 250 == 0 {
            theta = solve_mle(&history, Regularizer::none(), &theta, MleOptions::default())?.theta;
            let err = theta.sq_distance(mdp.theta_star()).sqrt();
            println!("t={t:5}  theta_hat={:.4?}  error={err:.4}", theta.as_slice());
        }
    }
    Ok(())
}
