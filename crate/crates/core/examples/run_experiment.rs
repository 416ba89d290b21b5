//! Runs a small multi-trial comparison and writes the result files.
//!
//! cargo run --release --example run_experiment -- out_dir

use vbmle::agents::{AgentConfig, AgentKind};
use vbmle::harness::{execute, EnvironmentSource, ExperimentConfig};
use vbmle::MixtureSpec;

fn main() -> vbmle::Result<()> {
    let out = std::env::args().nth(1);
    let mut config = ExperimentConfig::new(
        EnvironmentSource::Generate(MixtureSpec::new(3, 2, 4, 1)),
        vec![
            AgentConfig::new(AgentKind::VbmleExact),
            AgentConfig::new(AgentKind::VbmleApprox),
            AgentConfig::new(AgentKind::CeMle),
            AgentConfig::new(AgentKind::Uclk),
            AgentConfig::new(AgentKind::UniformRandom),
        ],
    );
    config.horizon = 300;
    config.trials = 8;
    config.checkpoints = vec![50, 100, 200];

    let report = execute(&config, out.as_deref().map(std::path::Path::new))?;
    for s in &report.summaries {
        let cps: Vec<String> = s.regret.iter().map(|c| format!("R({})={:.2}±{:.2}", c.t, c.mean, c.std)).collect();
        println!("{:<15} {}", s.label, cps.join("  "));
    }
    println!("config hash {}", report.config_hash);
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
