use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use school_choice::game::strategy_payoff;
use school_choice::identical::{solve_identical_dp_with_stats, solve_identical_mc_with_outcomes};
use school_choice::io::{
    game_to_json, read_game, read_strategy, read_types, write_csv, write_json, write_strategy,
    write_types, Provenance,
};
use school_choice::sampling::{aligned_outcome_probabilities, example_game, fig4_payoff};
use school_choice::strong_alpha::solve_strong_alpha_with_stats;
use school_choice::{
    analytic_strategy, check_interim_epsilon, sample_types, AnalyticExample, DenominatorMode,
    Error, Oracle, Result,
};

#[derive(Parser)]
#[command(
    name = "school-choice",
    version,
    about = "Equilibria of capped-list school choice games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    StrongAlpha,
    IdenticalDp,
    IdenticalMc,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Paper,
    FocalCorrected,
}

impl From<Mode> for DenominatorMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Paper => DenominatorMode::Paper,
            Mode::FocalCorrected => DenominatorMode::FocalCorrected,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    Exact,
    Mc,
}

#[derive(Clone, Copy, ValueEnum)]
enum FigureName {
    Fig4Payoffs,
    Fig9Rankdist,
    Fig10Regions,
    Fig11Outcomes,
}

#[derive(Subcommand)]
enum Command {
    /// Write the game spec of a worked example (fig2..fig9).
    Example {
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 0.0)]
        r: f64,
        #[arg(long)]
        l: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a finite type set from the game's distribution.
    Sample {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute a pure symmetric equilibrium on a type set.
    Solve {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        types: PathBuf,
        #[arg(long, value_enum)]
        algo: Algo,
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
        #[arg(long, value_enum, default_value = "focal-corrected")]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Materialize a closed-form equilibrium (fig4-eq1, fig4-eq2,
    /// fig2-family:R, fig3-family:R).
    Analytic {
        #[arg(long)]
        example: String,
        #[arg(long)]
        types: PathBuf,
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check that a strategy is an interim epsilon-equilibrium.
    Verify {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        types: PathBuf,
        #[arg(long)]
        strategy: PathBuf,
        #[arg(long, value_enum, default_value = "mc")]
        oracle: OracleKind,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0.02)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Budget of the exact oracle, in opponent scenarios per type.
        #[arg(long, default_value_t = 1e7)]
        budget: f64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Emit the data behind a figure as CSV.
    Figure {
        #[arg(long, value_enum)]
        name: FigureName,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        r: f64,
        #[arg(long)]
        l: Option<usize>,
        /// Grid step in t for fig9-rankdist.
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1_000)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Example { name, r, l, out } => {
            let game = example_game(&name, r, l)?;
            let mut w = create(&out)?;
            writeln!(w, "{}", game_to_json(&game))?;
            w.flush()?;
        }
        Command::Sample { game, k, seed, out } => {
            let game = read_game(&game)?;
            let types = sample_types(&game.types, k, seed, &game)?;
            let mut w = create(&out)?;
            write_types(&mut w, &types, &Provenance::new(command_line(), Some(seed)))?;
            w.flush()?;
        }
        Command::Solve {
            game,
            types,
            algo,
            runs,
            mode,
            seed,
            out,
        } => {
            let game = read_game(&game)?;
            let types = read_types(&types, &game)?;
            let start = Instant::now();
            let (strategy, stats) = match algo {
                Algo::StrongAlpha => {
                    let (s, st) = solve_strong_alpha_with_stats(&game, &types)?;
                    (
                        s,
                        format!("sweeps: {}\nempty_actions: {}", st.sweeps, st.empty),
                    )
                }
                Algo::IdenticalDp => {
                    let (s, st) = solve_identical_dp_with_stats::<f64>(&game, &types, mode.into())?;
                    (s, format!("max_support: {}", st.max_support))
                }
                Algo::IdenticalMc => {
                    let sol = solve_identical_mc_with_outcomes(&game, &types, runs, seed)?;
                    (sol.strategy, format!("runs: {}", sol.runs))
                }
            };
            let elapsed = start.elapsed().as_secs_f64();
            let mut w = create(&out)?;
            write_strategy(
                &mut w,
                &strategy,
                &types,
                &Provenance::new(command_line(), Some(seed)),
            )?;
            w.flush()?;
            println!("types: {}\n{stats}\nwall_seconds: {elapsed:.3}", types.k());
        }
        Command::Analytic {
            example,
            types,
            game,
            out,
        } => {
            let game = read_game(&game)?;
            let types = read_types(&types, &game)?;
            let example: AnalyticExample = example.parse()?;
            let strategy = analytic_strategy(example, &types)?;
            let mut w = create(&out)?;
            write_strategy(
                &mut w,
                &strategy,
                &types,
                &Provenance::new(command_line(), None),
            )?;
            w.flush()?;
        }
        Command::Verify {
            game,
            types,
            strategy,
            oracle,
            samples,
            epsilon,
            seed,
            budget,
            report,
        } => {
            let game = read_game(&game)?;
            let types = read_types(&types, &game)?;
            let strategy = read_strategy(&strategy, &types)?;
            let oracle = match oracle {
                OracleKind::Exact => Oracle::Exact { budget },
                OracleKind::Mc => Oracle::MonteCarlo { samples, seed },
            };
            let result = check_interim_epsilon(&game, &types, &strategy, epsilon, oracle)?;
            if let Some(path) = report {
                let mut w = create(&path)?;
                write_json(
                    &mut w,
                    &result,
                    &Provenance::new(command_line(), Some(seed)),
                )?;
                w.flush()?;
            }
            println!(
                "{}: eps_hat = {:.6e} (stderr {:.3e}, threshold {:.6e}, worst type {})",
                if result.pass { "PASS" } else { "FAIL" },
                result.eps_hat,
                result.pooled_stderr,
                result.threshold(),
                result.worst_type
            );
            if !result.pass {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Figure {
            name,
            k,
            n,
            r,
            l,
            step,
            samples,
            runs,
            seed,
            out,
        } => {
            let prov = Provenance::new(command_line(), Some(seed));
            let mut w = create(&out)?;
            figure(&mut w, &prov, name, k, n, r, l, step, samples, runs, seed)?;
            w.flush()?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn columns(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

#[allow(clippy::too_many_arguments)]
fn figure<W: Write>(
    w: &mut W,
    prov: &Provenance,
    name: FigureName,
    k: Option<usize>,
    n: usize,
    r: f64,
    l: Option<usize>,
    step: f64,
    samples: usize,
    runs: usize,
    seed: u64,
) -> Result<()> {
    match name {
        FigureName::Fig4Payoffs => {
            let game = example_game("fig4", 0.0, None)?;
            let types = sample_types(&game.types, k.unwrap_or(200), seed, &game)?;
            let mut rows = Vec::new();
            for (eq, example) in [
                (1u8, AnalyticExample::Fig4Eq1),
                (2, AnalyticExample::Fig4Eq2),
            ] {
                let strategy = analytic_strategy(example, &types)?;
                for i in 0..types.k() {
                    let t = types.point(i).coords()[0];
                    let oracle = Oracle::MonteCarlo { samples, seed };
                    let p = strategy_payoff(&game, &types, &strategy, i, oracle)?;
                    rows.push(vec![
                        eq.to_string(),
                        fmt(t),
                        fmt(p.mean),
                        fmt(p.stderr),
                        fmt(fig4_payoff(eq, t)?),
                    ]);
                }
            }
            write_csv(
                w,
                prov,
                &columns(&["equilibrium", "t", "payoff", "stderr", "analytic"]),
                rows,
            )
        }
        FigureName::Fig9Rankdist => {
            if !(step > 0.0 && step <= 1.0) {
                return Err(Error::Validation("step must lie in (0, 1]".into()));
            }
            let caps = example_game("fig9", 0.0, None)?.capacities();
            let points = (1.0 / step).round() as usize;
            let mut rows = Vec::new();
            for g in 0..=points {
                let t = (g as f64 * step).min(1.0);
                for (j, p) in aligned_outcome_probabilities(n, &caps, t)?
                    .into_iter()
                    .enumerate()
                {
                    rows.push(vec![fmt(t), j.to_string(), fmt(p)]);
                }
            }
            write_csv(
                w,
                prov,
                &columns(&["t", "school_outcome", "probability"]),
                rows,
            )
        }
        FigureName::Fig10Regions => {
            let game = example_game("fig5", r, None)?;
            let types = sample_types(&game.types, k.unwrap_or(100), seed, &game)?;
            let (strategy, _) = solve_identical_dp_with_stats::<f64>(
                &game,
                &types,
                DenominatorMode::FocalCorrected,
            )?;
            let rows = (0..types.k()).map(|i| {
                let c = types.point(i).coords();
                let school = strategy
                    .pure_action(i)
                    .and_then(|a| a.schools().first().copied())
                    .unwrap_or(0);
                vec![fmt(c[0]), fmt(c[1]), school.to_string()]
            });
            write_csv(w, prov, &columns(&["x", "y", "school"]), rows)
        }
        FigureName::Fig11Outcomes => {
            let game = example_game("fig9", 0.0, l)?;
            let types = sample_types(&game.types, k.unwrap_or(49 * 100), seed, &game)?;
            let sol = solve_identical_mc_with_outcomes(&game, &types, runs, seed)?;
            let mut rows = Vec::new();
            for i in 0..types.k() {
                let action = sol
                    .strategy
                    .pure_action(i)
                    .map(|a| a.to_string())
                    .unwrap_or_default();
                for (j, p) in sol.outcomes[i].iter().enumerate() {
                    rows.push(vec![
                        i.to_string(),
                        fmt(types.point(i).coords()[0]),
                        action.clone(),
                        j.to_string(),
                        fmt(*p),
                    ]);
                }
            }
            write_csv(
                w,
                prov,
                &columns(&["type_index", "t", "action", "school_outcome", "probability"]),
                rows,
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
