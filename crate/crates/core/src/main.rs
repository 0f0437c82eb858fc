use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use carbon_control::output::{read_csv, summarize};
use carbon_control::pipeline::{design, run_scenario, write_artifacts, PipelineError};
use carbon_control::scenario::{ConfigError, Scenario};

#[derive(Parser)]
#[command(version, about = "Carbon-capture LQR design and closed-loop simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design the controller and print K, P, G and the structural checks.
    Design(ScenarioArgs),
    /// Design, simulate and write trajectory.csv plus report.{txt,json}.
    Simulate {
        #[command(flatten)]
        args: ScenarioArgs,
        /// Run every bundled scenario in parallel, each in <out>/<name>.
        #[arg(long, conflicts_with = "scenario")]
        all: bool,
    },
    /// Re-summarize an existing trajectory CSV.
    Report {
        csv: PathBuf,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Integration step in days.
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon in days.
    #[arg(long)]
    horizon: Option<f64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario, ConfigError> {
        let name = self
            .scenario
            .as_deref()
            .ok_or_else(|| ConfigError::Invalid("--scenario is required".into()))?;
        let path = Path::new(name);
        let mut scenario = if path.exists() {
            Scenario::load(path)?
        } else {
            Scenario::bundled(name)?
        };
        self.apply(&mut scenario)?;
        Ok(scenario)
    }

    fn apply(&self, scenario: &mut Scenario) -> Result<(), ConfigError> {
        if let Some(dt) = self.dt {
            scenario.dt = dt;
        }
        if let Some(h) = self.horizon {
            scenario.horizon = h;
        }
        scenario.validate()
    }
}

fn fail(err: &PipelineError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn run_design(args: &ScenarioArgs) -> ExitCode {
    let outcome = args.load().map_err(PipelineError::from).and_then(|s| design(&s));
    let d = match outcome {
        Ok(d) => d,
        Err(e) => return fail(&e),
    };
    let c = &d.controller;
    println!("A");
    for row in d.model.a().to_rows() {
        println!("  {row:?}");
    }
    println!("theta1 {}  theta2 {}", d.model.theta1(), d.model.theta2());
    println!("x_e {:?}  v_e {}", d.setpoint.x_e, d.setpoint.v_e);
    println!("open-loop eigenvalues {:?}", d.open_loop.eigenvalues);
    println!("pair (A, B) stabilizable: yes");
    println!("K {:?}", c.k);
    println!("P");
    for row in &c.p {
        println!("  {row:?}");
    }
    if let Some(g) = &c.g {
        println!("G {g:?}");
        println!("stationarity {:e} after {} iterations", c.stationarity, c.iterations);
    }
    println!("Riccati residual {:e} (tolerance {:e})", c.are_residual, c.residual_tolerance);
    println!("closed-loop eigenvalues {:?}", c.closed_loop_spectrum.eigenvalues);
    if let Some(dir) = &args.out {
        let path = dir.join("design.json");
        let written = std::fs::create_dir_all(dir)
            .and_then(|_| std::fs::write(&path, serde_json::to_string_pretty(c).expect("design serializes")));
        if let Err(e) = written {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(3);
        }
    }
    ExitCode::SUCCESS
}

/// Runs one scenario and writes its artifacts. Returns the exit code.
fn simulate_one(scenario: &Scenario, dir: &Path) -> Result<bool, PipelineError> {
    let outcome = run_scenario(scenario)?;
    write_artifacts(&outcome, dir)?;
    Ok(outcome.report.passed())
}

fn report_simulation(name: &str, dir: &Path, result: &Result<bool, PipelineError>) -> u8 {
    match result {
        Ok(true) => {
            println!("{name}: ok -> {}", dir.display());
            0
        }
        Ok(false) => {
            eprintln!("{name}: nonnegativity check failed, see {}", dir.join("report.txt").display());
            3
        }
        Err(e) => {
            eprintln!("{name}: error: {e}");
            e.exit_code() as u8
        }
    }
}

fn run_simulate(args: &ScenarioArgs, all: bool) -> ExitCode {
    if all {
        let base = args.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        let mut scenarios = Scenario::all_bundled();
        for s in &mut scenarios {
            if let Err(e) = args.apply(s) {
                return fail(&e.into());
            }
        }
        let codes: Vec<u8> = std::thread::scope(|scope| {
            let handles: Vec<_> = scenarios
                .iter()
                .map(|s| {
                    let dir = base.join(&s.name);
                    scope.spawn(move || {
                        let result = simulate_one(s, &dir);
                        (s.name.clone(), dir, result)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    let (name, dir, result) = h.join().expect("simulation thread panicked");
                    report_simulation(&name, &dir, &result)
                })
                .collect()
        });
        return ExitCode::from(codes.into_iter().max().unwrap_or(0));
    }
    let scenario = match args.load() {
        Ok(s) => s,
        Err(e) => return fail(&e.into()),
    };
    let dir = args.out.clone().unwrap_or_else(|| scenario.output_dir());
    let result = simulate_one(&scenario, &dir);
    if result.is_ok() {
        if let Ok(text) = std::fs::read_to_string(dir.join("report.txt")) {
            print!("{text}");
        }
    }
    ExitCode::from(report_simulation(&scenario.name, &dir, &result))
}

fn run_report(csv: &Path, json: bool) -> ExitCode {
    let parsed = std::fs::File::open(csv)
        .map_err(|e| e.to_string())
        .and_then(|f| read_csv(f).map_err(|e| e.to_string()));
    match parsed {
        Ok((traj, keys)) => {
            let summary = summarize(&traj, &keys);
            if json {
                println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            } else {
                print!("{summary}");
            }
            ExitCode::from(if summary.first_negative.is_some() { 3 } else { 0 })
        }
        Err(e) => {
            eprintln!("error: {}: {e}", csv.display());
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Design(args) => run_design(args),
        Command::Simulate { args, all } => run_simulate(args, *all),
        Command::Report { csv, json } => run_report(csv, *json),
    }
}
