use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clam_core::{relabel, train_lam, write_decoder_fit_csv, write_metrics_csv, LamModel};
use clam_datastore::generate_dataset;
use clam_harness::{
    output_root, run_ablation, run_experiment, write_loss_csv, ExperimentConfig, HarnessError, Method, Runner, Study,
};
use clam_policies::{
    evaluate, train_latent_policy, write_eval_csv, BcPolicy, ClamAgent, Controller, EvalRow, LatentPolicy,
};
use clam_worldsim::{BehaviorKind, EnvKind, EnvSpec};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "clam", version, about = "Latent action model experiments on synthetic control tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out a behaviour policy and write a CLAMDATA file.
    GenData {
        #[arg(long)]
        env: EnvKind,
        /// expert | random | noisy-expert:<sigma> | play:<k>
        #[arg(long)]
        policy: BehaviorKind,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a latent action model.
    PretrainLam {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        unlabeled: PathBuf,
        #[arg(long)]
        labeled: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relabel expert data with a trained model and fit a latent policy.
    TrainPolicy {
        #[arg(long)]
        lam: PathBuf,
        #[arg(long)]
        expert: PathBuf,
        /// Experiment config whose `policy` section and seed are used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll out a trained policy. With `--lam` the policy is a latent
    /// policy decoded through that model, otherwise a direct action policy.
    Evaluate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        lam: Option<PathBuf>,
        #[arg(long)]
        env: EnvKind,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-episode CSV (method, episode, success, steps).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one factor over its levels and seeds.
    Ablate {
        #[arg(long, value_parser = parse_study)]
        study: Study,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
        seeds: u64,
        /// Base experiment; the default experiment when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one experiment end to end.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every method on the same data and evaluation seeds.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_study(s: &str) -> Result<Study, String> {
    s.parse().map_err(|e: HarnessError| e.to_string())
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, HarnessError> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn print_rows(rows: &[EvalRow]) {
    println!("{:<8} {:>6} {:>9} {:>13} {:>11}", "method", "seed", "episodes", "success_rate", "mean_steps");
    for r in rows {
        println!(
            "{:<8} {:>6} {:>9} {:>13.3} {:>11.1}",
            r.method, r.seed, r.episodes, r.success_rate, r.mean_steps
        );
    }
}

fn run(cli: Cli) -> CliResult {
    let root = output_root();
    match cli.command {
        Command::GenData {
            env,
            policy,
            n,
            seed,
            out,
        } => {
            let out = out.unwrap_or_else(|| root.join("data").join(format!("{env}-{policy}-{n}-{seed}.clamdata")));
            let ds = generate_dataset(&EnvSpec::new(env), policy, n as usize, seed)?;
            if let Some(dir) = out.parent() {
                std::fs::create_dir_all(dir)?;
            }
            clam_datastore::save(&ds, &out)?;
            println!("wrote {} trajectories to {}", ds.len(), out.display());
        }
        Command::PretrainLam {
            config,
            unlabeled,
            labeled,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let needs = (cfg.lam.joint_training && cfg.lam.beta > 0.0)
                || (!cfg.lam.joint_training && cfg.lam.decoder_fit_steps > 0);
            if needs && labeled.is_none() {
                return Err("--labeled is required: the config trains the action decoder (joint training with beta > 0, or decoder fitting)".into());
            }
            let unlabeled = clam_datastore::load(&unlabeled)?;
            let labeled = labeled.map(clam_datastore::load).transpose()?;
            let out = out.unwrap_or_else(|| root.join(format!("lam-{}", cfg.hash())));
            std::fs::create_dir_all(&out)?;
            let (model, report) = train_lam(&cfg.lam, &unlabeled, labeled.as_ref(), cfg.seed)?;
            model.save(&out.join("lam.ckpt"))?;
            write_metrics_csv(&out.join("lam_metrics.csv"), &report.metrics)?;
            if !report.decoder_fit.is_empty() {
                write_decoder_fit_csv(&out.join("decoder_fit.csv"), &report.decoder_fit)?;
            }
            if let Some(last) = report.metrics.last() {
                println!("final l_recon {:.6} l_total {:.6}", last.losses.l_recon, last.losses.l_total);
            }
            println!("wrote {}", out.display());
        }
        Command::TrainPolicy {
            lam,
            expert,
            config,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let lam = LamModel::load(&lam)?;
            let expert = clam_datastore::load(&expert)?;
            let relabeled = relabel(&lam, &expert)?;
            let (policy, losses) = train_latent_policy(&lam, &relabeled, &cfg.policy, cfg.seed)?;
            let out = out.unwrap_or_else(|| root.join("policy"));
            std::fs::create_dir_all(&out)?;
            clam_datastore::save(&relabeled, out.join("relabeled.clamdata"))?;
            policy.save(&out.join("policy.ckpt"))?;
            write_loss_csv(&out.join("policy_metrics.csv"), &losses)?;
            println!("final policy loss {:.6}", losses.last().copied().unwrap_or(f32::NAN));
            println!("wrote {}", out.display());
        }
        Command::Evaluate {
            policy,
            lam,
            env,
            episodes,
            seed,
            out,
        } => {
            let spec = EnvSpec::new(env);
            let (method, mut controller): (&str, Box<dyn Controller>) = match lam {
                Some(lam) => {
                    let agent = ClamAgent::new(LamModel::load(&lam)?, LatentPolicy::load(&policy)?)?;
                    if agent.lam.env_hash() != spec.spec_hash() {
                        return Err(format!("latent action model was trained on a different environment than {env}").into());
                    }
                    ("clam", Box::new(agent))
                }
                None => ("bc", Box::new(BcPolicy::load(&policy)?)),
            };
            let report = evaluate(controller.as_mut(), &spec, episodes as usize, seed)?;
            let row = EvalRow::new(method, seed, &report);
            print_rows(std::slice::from_ref(&row));
            if let Some(out) = out {
                let mut w = csv::Writer::from_path(&out)?;
                w.write_record(clam_harness::EPISODES_HEADER)?;
                for (i, s) in report.steps_to_success.iter().enumerate() {
                    let steps = s.map(|s| s.to_string()).unwrap_or_default();
                    w.write_record([method, &i.to_string(), &s.is_some().to_string(), &steps])?;
                }
                w.flush()?;
                let summary = out.with_extension("summary.csv");
                write_eval_csv(&summary, &[row])?;
            }
        }
        Command::Ablate {
            study,
            seeds,
            config,
            out,
        } => {
            let base = load_config(config.as_deref())?;
            let out = out.unwrap_or_else(|| root.join("ablations"));
            let mut runner = Runner::new(out);
            let res = run_ablation(&mut runner, study, &base, seeds)?;
            println!("{:<20} {:<8} {:>3} {:>7} {:>7}", "level", "method", "n", "mean", "sd");
            for s in &res.summary {
                println!("{:<20} {:<8} {:>3} {:>7.3} {:>7.3}", s.level, s.method, s.n, s.mean, s.sd);
            }
            println!("wrote {} and {}", res.results_csv.display(), res.summary_csv.display());
        }
        Command::Run { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let out = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| root.join(format!("run-{}", cfg.hash())));
            let report = run_experiment(&cfg, &out)?;
            print_rows(&report.eval);
            println!("config {} in {:.1}s, wrote {}", report.config_hash, report.wall_clock_secs, out.display());
        }
        Command::Compare { config, out } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.methods = Method::ALL.to_vec();
            let out = out.unwrap_or_else(|| root.join(format!("compare-{}", cfg.hash())));
            let report = run_experiment(&cfg, &out)?;
            print_rows(&report.eval);
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors before we get here
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
