use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use cellfree::aterms::{run_oracle, TinyInstance, TERM_NAMES};
use cellfree::detection::backhaul_rate;
use cellfree::quantizer::design_table;
use cellfree::simulator::run_experiment;
use cellfree::DetectorKind;
use cellfree_cli::{load_config, parse_alpha_list, table1_csv, write_outputs};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cellfree", version, about = "Cell-free massive MIMO uplink with quantized backhaul")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the optimal quantizer designs as CSV.
    Table1 {
        /// Bit widths: `1..9`, `4` or `1,3,5`.
        #[arg(long, default_value = "1..9")]
        alpha: String,
    },
    /// Run a full experiment and write table1.csv, rates.csv, cdf.csv and
    /// summary.json.
    Run {
        /// TOML or JSON config; defaults to $CELLFREE_CONFIG, then built-ins.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one key, e.g. `--set n_drops=10 --set alphas=[4,8]`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Use the full drop count.
        #[arg(long)]
        full_scale: bool,
    },
    /// Brute-force check of the closed-form SINR terms on a fixed two-AP,
    /// two-user network.
    SinrOracle {
        #[arg(long, default_value_t = 3)]
        alpha: u32,
        #[arg(long, default_value_t = 100_000)]
        realizations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Exit nonzero if any correlation exceeds 4/sqrt(n) or any term
        /// misses its closed form by more than 3 standard errors.
        #[arg(long)]
        strict: bool,
    },
    /// Per-AP backhaul rate in bit/s.
    Backhaul {
        #[arg(long)]
        alpha: u32,
        #[arg(long = "N")]
        antennas: usize,
        #[arg(long = "K")]
        users: usize,
        #[arg(long = "tau-f")]
        tau_f: usize,
        #[arg(long = "Tc-ms")]
        tc_ms: f64,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Table1 { alpha } => {
            let designs = design_table(parse_alpha_list(&alpha)?)?;
            print!("{}", table1_csv(&designs));
        }
        Command::Run {
            config,
            overrides,
            out,
            full_scale,
        } => {
            let mut cfg = load_config(config.as_deref(), &overrides)?;
            if full_scale {
                cfg = cfg.full_scale();
            }
            let reports = run_experiment(&cfg)?;
            for p in write_outputs(&out, &cfg, &reports)? {
                println!("{}", p.display());
            }
        }
        Command::SinrOracle {
            alpha,
            realizations,
            seed,
            strict,
        } => return sinr_oracle(alpha, realizations, seed, strict),
        Command::Backhaul {
            alpha,
            antennas,
            users,
            tau_f,
            tc_ms,
        } => println!("{}", backhaul_rate(alpha, antennas, users, tau_f, tc_ms * 1e-3)?),
    }
    Ok(true)
}

fn sinr_oracle(alpha: u32, n: usize, seed: u64, strict: bool) -> Result<bool> {
    let inst = TinyInstance::standard()?;
    let mut ok = true;
    for user in 0..inst.beta.ncols() {
        let setup = inst.setup(alpha, user)?;
        let r = run_oracle(&setup, &DetectorKind::ALL, n, seed).with_context(|| format!("user {user}"))?;
        let thr = r.correlation_threshold;
        println!("user {user}: n = {n}, correlation threshold {thr:.4}");
        println!("  bussgang input/error correlation {:.4}", r.bussgang_input_error);
        println!("  max output/error correlation     {:.4}", r.max_output_error);
        ok &= r.bussgang_input_error < thr && r.max_output_error < thr;
        for d in &r.detectors {
            let (i, j, c) = d.max_correlation();
            println!(
                "  {}: largest correlation {}-{} {c:.4}; SINR monte carlo {:.4e}, closed form {:.4e}",
                d.detector, TERM_NAMES[i], TERM_NAMES[j], d.sinr_monte_carlo, d.sinr_closed_form
            );
            ok &= c < thr;
            for t in &d.terms {
                println!(
                    "    {}: monte carlo {:.6e}, closed form {:.6e}, z {:+.2}",
                    t.name,
                    t.monte_carlo,
                    t.closed_form,
                    t.z_score()
                );
                ok &= t.within(3.0);
            }
        }
    }
    println!("{}", if ok { "all checks passed" } else { "some checks failed" });
    Ok(ok || !strict)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let causes: Vec<String> = e.chain().skip(1).map(ToString::to_string).collect();
            let report = serde_json::json!({
                "status": "error",
                "message": e.to_string(),
                "causes": causes,
            });
            eprintln!("{report}");
            ExitCode::from(1)
        }
    }
}
