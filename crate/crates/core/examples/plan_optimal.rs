//! Plans on a known model: value iteration, greedy policy, exact policy evaluation
//! and the gradient of the value with respect to the mixture weights.

use vbmle::planning::{policy_evaluation, solve_optimal, value_gradient, value_iteration, greedy_policy, Stopping};

fn main() -> vbmle::Result<()> {
    let mdp = vbmle::generate_mixture_mdp(4, 3, 3, 5, 0.05)?;
    let theta = mdp.theta_star().as_slice();

    let vi = value_iteration(&mdp, theta, Stopping::default())?;
    let policy = greedy_policy(&vi.q);
    let exact = policy_evaluation(&mdp, theta, &policy)?;
    let opt = solve_optimal(&mdp, theta)?;
    println!("value iteration: {} sweeps", vi.sweeps);
    println!("greedy policy  : {:?}", policy.actions);
    println!("V (VI)         : {:.6?}", vi.value.values);
    println!("V (linear solve): {:.6?}", exact.values);
    assert_eq!(policy, opt.policy);

    for s in 0..mdp.num_states() {
        let g = value_gradient(&mdp, theta, &opt.policy, s)?;
        println!("dV({s})/dtheta = {g:.4?}");
    }
    Ok(())
}
