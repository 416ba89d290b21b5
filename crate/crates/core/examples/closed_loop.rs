//! Certainty equivalence can lock onto a suboptimal action because it only learns the
//! transitions its own policy produces. The value bias keeps trying the optimistic action.

use vbmle::agents::AgentKind;
use vbmle::harness::{execute, presets};

fn main() -> vbmle::Result<()> {
    let config = presets::experiment("closed_loop").expect("built-in preset");
    let mdp = config.load_environment()?;
    println!("theta* = {:?}", mdp.theta_star().as_slice());
    let report = execute(&config, None)?;
    for s in &report.summaries {
        println!("{:<12} final regret {:.3} ± {:.3}", s.label, s.final_regret().mean, s.final_regret().std);
    }
    let stuck = |kind: AgentKind| {
        report
            .result
            .agents
            .iter()
            .filter(|a| a.config.kind == kind)
            .flat_map(|a| a.successes())
            .filter(|r| r.steps.iter().rev().take(50).all(|s| s.regret_increment > 1e-9))
            .count()
    };
    println!(
        "trials still paying regret over the last 50 steps: ce_mle {}, vbmle {}",
        stuck(AgentKind::CeMle),
        stuck(AgentKind::VbmleExact)
    );
    Ok(())
}
