//! Generates a random mixture environment and prints its structure.
//!
//! cargo run --example generate_environment -- 5 4 4 11

use vbmle::{LinearMdp, MixtureSpec};

fn main() -> vbmle::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (ns, na, d) = (*args.first().unwrap_or(&3), *args.get(1).unwrap_or(&2), *args.get(2).unwrap_or(&4));
    let seed = *args.get(3).unwrap_or(&0) as u64;
    let mdp = MixtureSpec::new(ns, na, d, seed).generate()?;

    println!("|S|={ns} |A|={na} d={d} gamma={}", mdp.gamma());
    println!("theta* = {:?}", mdp.theta_star().as_slice());
    let report = mdp.assess_feasibility(vbmle::mdp::DEFAULT_ZERO_THRESHOLD);
    println!("p_min = {:.4}, feature norm bound L = {:.4}", report.p_min, mdp.feature_norm_bound());
    for s in 0..ns {
        for a in 0..na {
            let p = mdp.transition_distribution(mdp.theta_star().as_slice(), s, a);
            println!("  P(.|{s},{a}) = {p:.3?}  r = {:.3}", mdp.reward(s, a));
        }
    }

    // The JSON document round-trips exactly.
    let json = mdp.to_json()?;
    assert_eq!(LinearMdp::from_json(&json)?, mdp);
    println!("{} bytes of JSON", json.len());
    Ok(())
}
