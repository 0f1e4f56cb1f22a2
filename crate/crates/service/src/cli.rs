//! Command-line front end: `serve`, `plan`, `bench` and `scenario`.

use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use zeittafel_core::bench::{run_experiment, BlockScope, ExperimentConfig, WindowModel};
use zeittafel_core::composer::{compose, MockInvoker};
use zeittafel_core::planner::{
    NegotiationDecision, NegotiationPrompt, PlanError, PlanOutcome, PlanReport, PlanRequest,
    PlanRun, SearchMode, TieBreak,
};
use zeittafel_core::Scenario;

use crate::api::{router, AppState};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NO_PLAN: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "zeittafel",
    version,
    about = "Deadline-aware service composition planner"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the HTTP API for a scenario.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
    },
    /// Plan once and print the selected itinerary.
    Plan(PlanArgs),
    /// Run the randomized backtracking experiment and emit CSV.
    Bench(BenchArgs),
    /// Print the built-in example scenario as JSON.
    Scenario,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Deadline in minutes; defaults to the scenario's.
    #[arg(long)]
    pub deadline: Option<f64>,
    #[arg(long, value_enum, default_value_t = ModeArg::Permutations)]
    pub mode: ModeArg,
    /// Decline every negotiation and break ties deterministically.
    #[arg(long)]
    pub non_interactive: bool,
    /// Re-run the request and decisions recorded in a plan report.
    #[arg(long, conflicts_with_all = ["deadline", "non_interactive"])]
    pub replay: Option<PathBuf>,
    /// Write the plan report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Book the selected plan against the mock invoker.
    #[arg(long)]
    pub compose: bool,
    /// With --compose: services whose mock booking fails.
    #[arg(long, value_delimiter = ',', requires = "compose")]
    pub fail_service: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    None,
    Rotations,
    Permutations,
}

impl From<ModeArg> for SearchMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::None => SearchMode::NoBacktracking,
            ModeArg::Rotations => SearchMode::RotationsOnly,
            ModeArg::Permutations => SearchMode::AllPermutations,
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scenario file; the built-in example when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub deadline: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.2)]
    pub block_prob: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "none,rotations,permutations"
    )]
    pub modes: Vec<ModeArg>,
    /// Half-width in minutes of each blocked window.
    #[arg(long, default_value_t = 60.0)]
    pub half_width: f64,
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Block every category's whole horizon instead of a centered window.
    #[arg(long)]
    pub full_horizon: bool,
    /// Let fixed categories be blocked too.
    #[arg(long)]
    pub block_fixed: bool,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write wall_us as 0 so the CSV depends on the seed alone.
    #[arg(long)]
    pub omit_timing: bool,
}

pub fn main_with(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::Serve { scenario, listen } => serve(&scenario, &listen),
        Command::Plan(args) => plan_cmd(args),
        Command::Bench(args) => bench_cmd(args),
        Command::Scenario => {
            emit(&(Scenario::web_safari().to_json_pretty() + "\n"));
            Ok(EXIT_OK)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

fn load_scenario(path: &Path) -> anyhow::Result<Scenario> {
    Scenario::load(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn serve(path: &Path, listen: &str) -> anyhow::Result<u8> {
    let scenario = load_scenario(path)?;
    let state = AppState::new(scenario)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(listen)
            .await
            .with_context(|| format!("binding {listen}"))?;
        eprintln!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(state)).await?;
        anyhow::Ok(())
    })?;
    Ok(EXIT_OK)
}

fn plan_cmd(args: PlanArgs) -> anyhow::Result<u8> {
    let scenario = load_scenario(&args.scenario)?;
    let matrix = scenario.matrix()?;

    let run = if let Some(path) = &args.replay {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let recorded: PlanReport =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        PlanRun::replay(recorded.request, matrix, &recorded.transcript)
    } else {
        let mut request = PlanRequest::from_scenario(&scenario, args.deadline)?;
        request.search_mode = args.mode.into();
        request.tie_break = if args.non_interactive {
            TieBreak::Deterministic
        } else {
            TieBreak::External
        };
        PlanRun::start(request, matrix).and_then(|run| drive(run, args.non_interactive))
    };
    let run = match run {
        Ok(run) => run,
        Err(e @ (PlanError::Validation(_) | PlanError::Registry(_) | PlanError::Pert(_))) => {
            eprintln!("error: {e}");
            return Ok(EXIT_VALIDATION);
        }
        Err(e) => return Err(e.into()),
    };

    let mut report = run.report();
    let mut code = match &report.outcome {
        PlanOutcome::Selected { .. } => EXIT_OK,
        _ => EXIT_NO_PLAN,
    };
    if args.compose {
        if let Some(plan) = report.outcome.selected() {
            let mut invoker = MockInvoker::failing(args.fail_service.iter().cloned());
            match compose(plan, &mut invoker) {
                Ok(itinerary) => report.itinerary = Some(itinerary),
                Err(e) => {
                    eprintln!("composition failed: {e}");
                    code = EXIT_NO_PLAN;
                }
            }
        }
    }
    print_summary(&report);
    if let Some(path) = &args.report {
        std::fs::write(path, report.to_json())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(code)
}

/// Answers prompts until the run settles: declines in non-interactive mode,
/// otherwise asks on stdin.
fn drive(mut run: PlanRun, non_interactive: bool) -> Result<PlanRun, PlanError> {
    let stdin = io::stdin();
    loop {
        match run.outcome().clone() {
            PlanOutcome::NegotiationNeeded { prompt } => {
                let decision = if non_interactive {
                    NegotiationDecision::refuse()
                } else {
                    ask_withdrawal(&prompt, &stdin)
                };
                match run.negotiate(decision) {
                    Ok(_) => {}
                    Err(PlanError::InvalidDecision(msg)) if !non_interactive => eprintln!("{msg}"),
                    Err(e) => return Err(e),
                }
            }
            PlanOutcome::Tie { candidates } => {
                eprintln!(
                    "{} plans tie on probability and duration:",
                    candidates.len()
                );
                for (i, c) in candidates.iter().enumerate() {
                    eprintln!("  [{i}] {}", c.combination.service_tuple().join(" -> "));
                }
                let index = prompt_line(&stdin, "choose a plan index [0]: ")
                    .trim()
                    .parse()
                    .unwrap_or(0);
                if let Err(e) = run.choose(index) {
                    eprintln!("{e}");
                }
            }
            PlanOutcome::Selected { .. } | PlanOutcome::Failure { .. } => return Ok(run),
        }
    }
}

fn ask_withdrawal(prompt: &NegotiationPrompt, stdin: &io::Stdin) -> NegotiationDecision {
    eprintln!("no plan meets the deadline (round {}):", prompt.round);
    for d in &prompt.diagnostics {
        eprintln!("  {}: {}", d.category_id, d.reason);
    }
    if let Some(best) = prompt.shortest_duration {
        eprintln!("  shortest rejected duration: {best} min");
    }
    let line = prompt_line(
        stdin,
        &format!(
            "withdraw which categories? {} (comma separated, empty to stop): ",
            prompt.withdrawable.join(",")
        ),
    );
    let withdraw: Vec<String> = line
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    let needs_approval = withdraw.iter().any(|c| {
        prompt
            .diagnostics
            .iter()
            .any(|d| &d.category_id == c && d.kind == zeittafel_core::registry::CategoryKind::Fixed)
    });
    let approve_fixed =
        needs_approval && prompt_line(stdin, "withdraw fixed categories? [y/N]: ").trim() == "y";
    NegotiationDecision {
        withdraw,
        approve_fixed,
    }
}

fn prompt_line(stdin: &io::Stdin, text: &str) -> String {
    eprint!("{text}");
    io::stderr().flush().ok();
    let mut line = String::new();
    stdin.lock().read_line(&mut line).ok();
    line
}

fn print_summary(report: &PlanReport) {
    use std::fmt::Write as _;
    let mut out = String::new();
    match &report.outcome {
        PlanOutcome::Selected { plan } => {
            let _ = writeln!(out, "selected plan: duration {} min", plan.duration());
            if let Some(c) = &plan.completion {
                let _ = writeln!(out, "{c}");
            }
            let _ = writeln!(
                out,
                "critical path: {}",
                plan.analysis.critical_path.join(" -> ")
            );
            for slot in plan.slots_in_time_order() {
                let _ = writeln!(
                    out,
                    "  {:>8.2} - {:>8.2}  {:<6} {}",
                    slot.start, slot.end, slot.category_id, slot.service_id
                );
            }
            if !report.withdrawn.is_empty() {
                let _ = writeln!(out, "withdrawn: {}", report.withdrawn.join(", "));
            }
            if let Some(it) = &report.itinerary {
                for r in &it.records {
                    let _ = writeln!(
                        out,
                        "  booked {} {:?} {}",
                        r.service_id,
                        r.status,
                        r.confirmation.as_deref().unwrap_or("-")
                    );
                }
            }
        }
        PlanOutcome::Failure { report: f } => {
            let _ = writeln!(out, "no plan: {}", f.reason);
            for d in &f.categories {
                let _ = writeln!(out, "  {}: {}", d.category_id, d.reason);
            }
            let _ = writeln!(out, "orders tried: {}", f.orders_tried.len());
        }
        PlanOutcome::NegotiationNeeded { .. } => {
            let _ = writeln!(out, "no plan: negotiation pending");
        }
        PlanOutcome::Tie { candidates } => {
            let _ = writeln!(
                out,
                "no plan: {} tied candidates pending a choice",
                candidates.len()
            );
        }
    }
    emit(&out);
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = io::stdout().lock().write_all(text.as_bytes());
}

fn bench_cmd(args: BenchArgs) -> anyhow::Result<u8> {
    let scenario = match &args.scenario {
        Some(p) => load_scenario(p)?,
        None => Scenario::web_safari(),
    };
    let mut config = ExperimentConfig::new(scenario, args.trials, args.block_prob, args.seed);
    config.deadline = args.deadline;
    config.modes = args.modes.iter().map(|&m| m.into()).collect();
    config.scope = if args.block_fixed {
        BlockScope::All
    } else {
        BlockScope::NonFixed
    };
    config.window_model = if args.full_horizon {
        WindowModel::FullHorizon
    } else {
        WindowModel::Centered {
            half_width: args.half_width,
            jitter: args.jitter,
        }
    };
    let result = match run_experiment(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_VALIDATION);
        }
    };
    let csv = result.to_csv(!args.omit_timing);
    match &args.out {
        Some(path) => {
            std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
            emit(&result.summary_text());
        }
        None => {
            emit(&csv);
            eprint!("{}", result.summary_text());
        }
    }
    Ok(EXIT_OK)
}
