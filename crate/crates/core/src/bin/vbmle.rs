use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use vbmle::agents::{AgentConfig, AgentKind};
use vbmle::harness::{self, presets, AgentSummary, ExperimentConfig, RecordedRun, OUT_DIR_ENV};
use vbmle::{Error, MixtureSpec};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (config format vbmle-config/1, environment format vbmle-env/1)");

#[derive(Parser)]
#[command(name = "vbmle", version = VERSION, about = "Value-biased MLE experiments on linear mixture MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random mixture environment as JSON.
    Generate {
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        #[arg(long, default_value_t = 4)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = vbmle::mdp::DEFAULT_P_FLOOR)]
        p_floor: f64,
        #[arg(long, default_value_t = vbmle::mdp::DEFAULT_GAMMA)]
        gamma: f64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment and write its result files.
    Run {
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// One of small, medium, large, closed_loop.
        #[arg(long)]
        preset: Option<String>,
        /// Output directory; defaults to $VBMLE_OUT_DIR, then the config's output_dir, then ./vbmle-out.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        /// Comma-separated agent labels to keep, or agent kinds to add with default settings.
        #[arg(long, value_delimiter = ',')]
        agents: Option<Vec<String>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        checkpoints: Option<Vec<usize>>,
        #[arg(long, value_enum)]
        diagnostics: Option<Switch>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Re-check the deterministic bounds of a recorded run.
    Check {
        #[arg(long)]
        run: PathBuf,
    },
    /// Aggregate the records of a recorded run.
    Summarize {
        #[arg(long)]
        run: PathBuf,
    },
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::Json(_) => Failure::Config(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    ExitCode::from(exit_code(Cli::parse().command))
}

fn exit_code(command: Command) -> u8 {
    match dispatch(command) {
        Ok(code) => code,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            2
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Generate {
            states,
            actions,
            dim,
            seed,
            p_floor,
            gamma,
            out,
        } => {
            let spec = MixtureSpec {
                p_floor,
                gamma,
                ..MixtureSpec::new(states, actions, dim, seed)
            };
            let json = spec.generate().map_err(|e| Failure::Config(e.to_string()))?.to_json()?;
            match out {
                Some(path) => std::fs::write(&path, json).map_err(|e| Error::io(path, e))?,
                None => println!("{json}"),
            }
            Ok(0)
        }
        Command::Run {
            config,
            preset,
            out,
            trials,
            horizon,
            agents,
            seed,
            checkpoints,
            diagnostics,
            threads,
        } => {
            let mut cfg = match (config, preset) {
                (Some(path), _) => ExperimentConfig::from_path(&path).map_err(|e| match e {
                    Error::Io { .. } => Failure::Config(e.to_string()),
                    other => other.into(),
                })?,
                (None, Some(name)) => presets::experiment(&name)
                    .ok_or_else(|| Failure::Config(format!("unknown preset {name:?}; known: {}", presets::PRESETS.join(", "))))?,
                (None, None) => return Err(Failure::Config("one of --config or --preset is required".into())),
            };
            if let Some(n) = trials {
                cfg.trials = n;
            }
            if let Some(t) = horizon {
                cfg.horizon = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(c) = checkpoints {
                cfg.checkpoints = c;
            }
            if let Some(d) = diagnostics {
                cfg.diagnostics = matches!(d, Switch::On);
            }
            if threads.is_some() {
                cfg.threads = threads;
            }
            if let Some(names) = agents {
                cfg.agents = select_agents(&cfg.agents, &names)?;
            }
            cfg.validate()?;
            let dir = out
                .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("vbmle-out"));
            let report = harness::execute(&cfg, Some(&dir))?;
            print_summaries(&report.summaries);
            println!("config_hash {}", report.config_hash);
            println!("wrote {} files to {}", report.files.len(), dir.display());
            let failed = report.result.failed_trials();
            if failed > 0 {
                eprintln!("{failed} trial(s) failed; see {}", dir.join(harness::output::FAILURES).display());
                return Ok(1);
            }
            Ok(0)
        }
        Command::Check { run } => {
            let recorded = load(&run)?;
            let reports = recorded.check()?;
            let violations: Vec<_> = reports.iter().filter(|(_, _, r)| !r.satisfied).collect();
            for (agent, trial, r) in &violations {
                println!(
                    "VIOLATED {agent} trial {trial} {} t={} realized={} bound={}",
                    r.kind.name(),
                    r.t,
                    r.realized,
                    r.bound
                );
            }
            println!("{} deterministic bound checks, {} violated", reports.len(), violations.len());
            Ok(if violations.is_empty() { 0 } else { 1 })
        }
        Command::Summarize { run } => {
            let recorded = load(&run)?;
            print_summaries(&recorded.summarize()?);
            Ok(0)
        }
    }
}

fn load(dir: &Path) -> Result<RecordedRun, Failure> {
    RecordedRun::load(dir).map_err(|e| Failure::Run(e.to_string()))
}

fn select_agents(available: &[AgentConfig], names: &[String]) -> Result<Vec<AgentConfig>, Failure> {
    names
        .iter()
        .map(|name| {
            if let Some(a) = available.iter().find(|a| a.label() == *name) {
                return Ok(a.clone());
            }
            let kind: AgentKind = serde_json::from_value(serde_json::Value::String(name.clone()))
                .map_err(|_| Failure::Config(format!("--agents: {name:?} is neither a configured label nor an agent kind")))?;
            Ok(AgentConfig::new(kind))
        })
        .collect()
}

fn print_summaries(summaries: &[AgentSummary]) {
    println!(
        "{:<16} {:>7} {:>12} {:>10} {:>12} {:>12} {:>10}",
        "agent", "trials", "regret(T)", "std", "opt/step", "ms/step", "violations"
    );
    for s in summaries {
        let f = s.final_regret();
        println!(
            "{:<16} {:>7} {:>12.3} {:>10.3} {:>12.1} {:>12.3} {:>10}",
            s.label,
            s.completed_trials,
            f.mean,
            f.std,
            s.mean_optimization_calls_per_step,
            s.mean_step_seconds * 1e3,
            s.deterministic_violations
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use vbmle::harness::{output, ARTIFACT_VERSION, CONFIG_FORMAT_VERSION};
    use vbmle::mdp::ENV_FORMAT_VERSION;
    use vbmle::LinearMdp;

    fn run(args: &[&str]) -> u8 {
        let cli = Cli::try_parse_from(std::iter::once("vbmle").chain(args.iter().copied())).unwrap();
        exit_code(cli.command)
    }

    fn small_config(dir: &Path) -> String {
        let path = dir.join("config.json");
        std::fs::write(
            &path,
            r#"{
                "environment": {"generate": {"num_states": 3, "num_actions": 2, "dim": 3, "seed": 4}},
                "agents": [{"kind": "vbmle_exact"}, {"kind": "uclk", "label": "uclk_small", "uclk_radius": 0.1}],
                "horizon": 40, "trials": 2, "checkpoints": [10, 20]
            }"#,
        )
        .unwrap();
        path.to_str().unwrap().to_string()
    }

    #[test]
    fn version_names_both_formats() {
        let text = Cli::command().render_version();
        assert!(text.contains(ARTIFACT_VERSION), "{text}");
        assert!(text.contains(CONFIG_FORMAT_VERSION), "{text}");
        assert!(text.contains(ENV_FORMAT_VERSION), "{text}");
    }

    #[test]
    fn generate_writes_a_loadable_environment() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("env.json");
        let code = run(&["generate", "--states", "4", "--actions", "3", "--dim", "2", "--seed", "9", "--out", file.to_str().unwrap()]);
        assert_eq!(code, 0);
        let mdp = LinearMdp::from_json(&std::fs::read_to_string(file).unwrap()).unwrap();
        assert_eq!((mdp.num_states(), mdp.num_actions(), mdp.dim()), (4, 3, 2));
        assert_eq!(mdp, MixtureSpec::new(4, 3, 2, 9).generate().unwrap());
    }

    #[test]
    fn config_errors_exit_with_2() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let out = out.to_str().unwrap();
        let missing = dir.path().join("nope.json");
        assert_eq!(run(&["run", "--config", missing.to_str().unwrap(), "--out", out]), 2);
        assert_eq!(run(&["run", "--preset", "nope", "--out", out]), 2);

        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, r#"{"environment": {"preset": "closed_loop"}, "agents": [{"kind": "uclk", "uclk_sweeps": 0}]}"#).unwrap();
        assert_eq!(run(&["run", "--config", bad.to_str().unwrap(), "--out", out]), 2);

        let config = small_config(dir.path());
        assert_eq!(run(&["run", "--config", &config, "--agents", "not_an_agent", "--out", out]), 2);
        assert_eq!(run(&["run", "--config", &config, "--threads", "0", "--out", out]), 2);
        assert!(!Path::new(out).exists());
    }

    #[test]
    fn run_check_summarize_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(dir.path());
        let out = dir.path().join("out");
        assert_eq!(run(&["run", "--config", &config, "--out", out.to_str().unwrap(), "--threads", "2"]), 0);
        let hash = output::read_config_hash(&out.join(output::REGRET_CURVES)).unwrap();
        assert_eq!(output::read_config_hash(&out.join(output::SUMMARY)).unwrap(), hash);
        assert_eq!(run(&["check", "--run", out.to_str().unwrap()]), 0);
        assert_eq!(run(&["summarize", "--run", out.to_str().unwrap()]), 0);
    }

    #[test]
    fn overrides_and_output_env_var() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(dir.path());
        let env_dir = dir.path().join("from_env");
        std::env::set_var(OUT_DIR_ENV, &env_dir);
        let code = run(&["run", "--config", &config, "--agents", "uclk_small,ce_mle", "--trials", "1", "--horizon", "5"]);
        std::env::remove_var(OUT_DIR_ENV);
        assert_eq!(code, 0);
        let written: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(env_dir.join(output::CONFIG)).unwrap()).unwrap();
        assert_eq!(written["horizon"], 5);
        assert_eq!(written["trials"], 1);
        let kinds: Vec<&str> = written["agents"].as_array().unwrap().iter().map(|a| a["kind"].as_str().unwrap()).collect();
        assert_eq!(kinds, ["uclk", "ce_mle"]);
    }

    #[test]
    fn check_of_a_missing_run_fails() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(run(&["check", "--run", dir.path().to_str().unwrap()]), 1);
    }
}
