use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use robust_mdp::bellman::{extract_policy, value_iteration, Mode, ValueFunction};
use robust_mdp::certify::{certify, theorem_bound};
use robust_mdp::error::Error;
use robust_mdp::experiment::{emit_csv, format_significant, run_cointoss_experiment_states};
use robust_mdp::io::load_problem;
use robust_mdp::qlearn::{greedy_value, robust_q_learning, LearningConfig, RNG_ALGORITHM};

/// Solve and certify distributionally robust Markov decision problems
/// with Wasserstein ambiguity sets.
#[derive(Parser)]
#[command(name = "robust-mdp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMode {
    Nominal,
    Robust,
    Qlearn,
}

#[derive(Subcommand)]
enum Command {
    /// Run the built-in coin-toss experiment over a radius grid and emit
    /// one CSV row per (epsilon, initial state).
    Cointoss {
        #[arg(long, default_value_t = 0.45)]
        alpha: f64,
        /// Comma-separated ball radii.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0,0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5"
        )]
        epsilons: Vec<f64>,
        /// Wasserstein order of the ambiguity ball.
        #[arg(long, default_value_t = 1)]
        q: u32,
        /// Fixed-point error allowance for both value functions.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Report all initial states instead of the symmetric half 0..=5.
        #[arg(long)]
        all_states: bool,
        /// Output CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a problem file and print per-state values and greedy actions.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, value_enum, default_value_t = SolveMode::Robust)]
        mode: SolveMode,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
        /// Random seed for the qlearn mode.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate constants, check assumptions, and print the certificate
    /// as JSON.
    Certify {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with code 4 when any assumption check fails.
        #[arg(long)]
        strict: bool,
    },
    /// Evaluate the value-gap bound for explicit constants.
    Bound {
        /// Reward Lipschitz constant.
        #[arg(long)]
        lr: f64,
        /// Kernel Lipschitz constant.
        #[arg(long)]
        lp: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        epsilon: f64,
        /// Use the halved bound for a ball centered at the true kernel.
        #[arg(long)]
        centered: bool,
    },
}

fn write_output(out: Option<&PathBuf>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        }),
        None => {
            print!("{text}");
            std::io::stdout().flush().ok();
            Ok(())
        }
    }
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::NonConvergence { .. } => 3,
        Error::Io { .. } => 1,
        // everything else is a parse or validation failure
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Cointoss {
            alpha,
            epsilons,
            q,
            tol,
            all_states,
            out,
        } => {
            let rows = run_cointoss_experiment_states(alpha, &epsilons, q, tol, all_states)?;
            match out {
                Some(path) => emit_csv(&rows, &path)?,
                None => {
                    let mut buffer = Vec::new();
                    robust_mdp::experiment::write_csv(&rows, &mut buffer).map_err(|source| {
                        Error::Io {
                            path: PathBuf::from("<stdout>"),
                            source,
                        }
                    })?;
                    print!("{}", String::from_utf8_lossy(&buffer));
                }
            }
            Ok(0)
        }
        Command::Solve {
            problem,
            mode,
            tol,
            max_iter,
            seed,
            out,
        } => {
            let spec = load_problem(&problem)?;
            let n = spec.n_states();
            let mut text = String::new();
            let (value, policy_mode) = match mode {
                SolveMode::Nominal | SolveMode::Robust => {
                    let vi_mode = match mode {
                        SolveMode::Nominal => Mode::Nominal,
                        _ => Mode::Robust,
                    };
                    let report =
                        value_iteration(&spec, vi_mode, ValueFunction::zeros(n), tol, max_iter)?;
                    if !report.converged {
                        return Err(Error::NonConvergence {
                            max_iter,
                            residual: report.residual,
                        });
                    }
                    text.push_str(&format!(
                        "# iterations={} residual={}\n",
                        report.iterations,
                        format_significant(report.residual, 12)
                    ));
                    (report.value, vi_mode)
                }
                SolveMode::Qlearn => {
                    let config = LearningConfig {
                        seed,
                        ..LearningConfig::default()
                    };
                    let q = robust_q_learning(&spec, &config)?;
                    text.push_str(&format!(
                        "# rng={RNG_ALGORITHM} seed={} episodes={} steps_per_episode={} exploration={}\n",
                        config.seed,
                        config.episodes,
                        config.steps_per_episode,
                        config.exploration_rate
                    ));
                    (greedy_value(&q), Mode::Robust)
                }
            };
            let policy = extract_policy(&spec, policy_mode, &value)?;
            text.push_str("state,value,action\n");
            for x in 0..n {
                text.push_str(&format!(
                    "{},{},{}\n",
                    x,
                    format_significant(value.get(x), 12),
                    policy.actions[x]
                ));
            }
            write_output(out.as_ref(), &text)?;
            Ok(0)
        }
        Command::Certify {
            problem,
            out,
            strict,
        } => {
            let spec = load_problem(&problem)?;
            let report = certify(&spec);
            let mut text = serde_json::to_string_pretty(&report).expect("certificate serializes");
            text.push('\n');
            write_output(out.as_ref(), &text)?;
            let all_ok = report.alpha_ok && report.contraction_ok && report.membership_ok;
            if strict && !all_ok {
                Ok(4)
            } else {
                Ok(0)
            }
        }
        Command::Bound {
            lr,
            lp,
            alpha,
            epsilon,
            centered,
        } => {
            let bound = theorem_bound(lr, lp, alpha, epsilon, centered)?;
            println!("{}", format_significant(bound, 12));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code_for(&error))
        }
    }
}
