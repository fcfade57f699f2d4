use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args as ClapArgs, Parser, ValueEnum};
use serde_json::{json, Value};

use ucp_core::characteristics::{build_map, transform_system};
use ucp_core::pipeline::{run, Scenario, ScenarioReport, Task};
use ucp_core::reduction::reduce;
use ucp_core::riemann::solve_riemann;
use ucp_core::scenario_file::load_scenario;
use ucp_core::Error;

#[derive(ClapArgs)]
struct Common {
    /// Scenario file or directory of scenario files; may be repeated.
    #[arg(long, required = true)]
    scenario: Vec<PathBuf>,
    /// Output directory; the report goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Seed of the null-space start block.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(Parser)]
#[command(name = "ucp", about = "Unique-continuation verification for 2D anisotropic elasticity")]
struct Args {
    #[arg(value_enum)]
    command: Sub,
    #[command(flatten)]
    common: Common,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq, Debug)]
enum Sub {
    Check,
    Run,
    Nullspace,
    Riemann,
    Dump,
}

/// Failure that maps to exit code 2; the message names the scenario and key or stage.
struct InputFailure(String);

fn scenario_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, InputFailure> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| InputFailure(format!("{}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(InputFailure("no scenario files found".into()));
    }
    Ok(out)
}

fn restrict(sc: &mut Scenario, sub: Sub) {
    let keep = |sc: &Scenario, allowed: &[Task]| -> Vec<Task> {
        let t: Vec<Task> = sc.tasks.iter().copied().filter(|t| allowed.contains(t)).collect();
        if t.is_empty() {
            allowed.to_vec()
        } else {
            t
        }
    };
    sc.tasks = match sub {
        Sub::Run => return,
        Sub::Check | Sub::Dump => keep(sc, &[Task::Conditions, Task::Reduce]),
        Sub::Nullspace => vec![Task::Reduce, Task::Nullspace],
        Sub::Riemann => vec![Task::Characteristics, Task::Riemann],
    };
}

fn grid_csv(nodes: &[(f64, f64)], values: &[f64]) -> String {
    let mut s = String::from("x,y,value\n");
    for ((x, y), v) in nodes.iter().zip(values) {
        s.push_str(&format!("{x:.16e},{y:.16e},{v:.16e}\n"));
    }
    s
}

fn field_grids(sc: &Scenario) -> Result<Vec<(String, String)>, Error> {
    let nodes = sc.omega.nodes(sc.n);
    let c = &sc.coefficients;
    let values = nodes
        .iter()
        .map(|&(x, y)| c.values_at(x, y))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::new();
    let cols: [(&str, fn(&ucp_core::tensor::TensorValues) -> f64); 9] = [
        ("a1111", |v| v.a1111),
        ("a1112", |v| v.a1112),
        ("a1122", |v| v.a1122),
        ("a1212", |v| v.a1212),
        ("a1222", |v| v.a1222),
        ("a2222", |v| v.a2222),
        ("delta", |v| v.delta()),
        ("ellipticity", |v| v.ellipticity_at()),
        ("convexity", |v| v.voigt_min_eig()),
    ];
    for (name, f) in cols {
        let vals: Vec<f64> = values.iter().map(f).collect();
        out.push((name.to_string(), grid_csv(&nodes, &vals)));
    }
    Ok(out)
}

fn riemann_grid(sc: &Scenario) -> Result<String, Error> {
    let sys = reduce(&sc.coefficients);
    let map = build_map(&sys, &sc.omega, sc.point.0, sc.point.1)?;
    let tsys = transform_system(&sys, &map)?;
    Ok(solve_riemann(&tsys, (0.0, 0.0), sc.riemann_n, sc.tolerances.picard)?.to_csv())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scenario".into())
}

fn execute(args: &Args) -> Result<bool, InputFailure> {
    let c = &args.common;
    if let Some(j) = c.jobs {
        if j == 0 {
            return Err(InputFailure("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| InputFailure(format!("--jobs: {e}")))?;
    }
    if args.command == Sub::Dump && c.out.is_none() {
        return Err(InputFailure("dump requires --out".into()));
    }
    if let Some(dir) = &c.out {
        fs::create_dir_all(dir).map_err(|e| InputFailure(format!("{}: {e}", dir.display())))?;
    }
    let mut reports: Vec<ScenarioReport> = Vec::new();
    let mut grids: Vec<(String, String)> = Vec::new();
    for path in scenario_paths(&c.scenario)? {
        let fail = |e: Error| InputFailure(format!("{}: {e}", path.display()));
        let text = fs::read_to_string(&path).map_err(|e| InputFailure(format!("{}: {e}", path.display())))?;
        let mut sc = load_scenario(&text).map_err(fail)?;
        if let Some(seed) = c.seed {
            sc.seed = seed;
        }
        restrict(&mut sc, args.command);
        let report = run(&sc).map_err(fail)?;
        let name = stem(&path);
        if c.format == Format::Csv || args.command == Sub::Dump {
            match args.command {
                Sub::Riemann => grids.push((format!("{name}_riemann"), riemann_grid(&sc).map_err(fail)?)),
                Sub::Dump => {
                    for (field, csv) in field_grids(&sc).map_err(fail)? {
                        grids.push((format!("{name}_{field}"), csv));
                    }
                }
                _ => {}
            }
        }
        reports.push(report);
    }
    let passed = reports.iter().all(|r| r.passed());
    let doc: Value = if reports.len() == 1 {
        serde_json::to_value(&reports[0]).expect("report serialises")
    } else {
        json!({
            "reports": reports,
            "verdict": if passed { "pass" } else { "fail" },
        })
    };
    let text = serde_json::to_string_pretty(&doc).expect("report serialises") + "\n";
    match &c.out {
        Some(dir) => {
            let write = |name: &str, body: &str| {
                fs::write(dir.join(name), body).map_err(|e| InputFailure(format!("{name}: {e}")))
            };
            write("report.json", &text)?;
            for (name, csv) in &grids {
                write(&format!("{name}.csv"), csv)?;
            }
        }
        None => print!("{text}"),
    }
    Ok(passed)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("expectation mismatch");
            ExitCode::from(1)
        }
        Err(InputFailure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
