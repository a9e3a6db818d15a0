//! Runs scenario files: `verify`, `degree`, `simulate`, `funnel`, `scan` and `list`.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input error, 3 inconclusive numerics.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use nalgebra::DVector;

use cdegree::degree::{self, DegreeOptions, SweepRow};
use cdegree::harness::{self, Scenario};
use cdegree::integrator;
use cdegree::scenario::{self, ScenarioSpec};
use cdegree::{Error, SelectionRule};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Verify,
    Degree,
    Simulate,
    Funnel,
    Scan,
    List,
}

#[derive(Clone, Debug, Parser)]
#[command(name = "cdegree", version, about = "Constrained degree and Poincaré index checks")]
pub struct RunConfig {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long, value_enum, default_value = "verify")]
    pub command: Command,
    /// Output directory for reports and CSV files.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Replaces the scenario seeds with `N, N + 1` and seeds the degree selection.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dotted-path override, e.g. `--set sweeps.h=[0.1,0.03,0.01]`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

struct Artifacts {
    files: Vec<(PathBuf, String)>,
}

impl Artifacts {
    fn add(&mut self, dir: &Path, name: &str, body: String) {
        self.files.push((dir.join(name), body));
    }
}

enum Failure {
    Input(String),
    Numeric(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Numeric(e)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::InvalidInput(_)
        | Error::DimensionMismatch { .. }
        | Error::Domain(_)
        | Error::EmptySet
        | Error::Precondition(_)
        | Error::TangencyViolation { .. }
        | Error::Config(_) => EXIT_INPUT,
        Error::Singular { .. } | Error::QpNonConvergence { .. } | Error::Inconclusive { .. } => EXIT_INCONCLUSIVE,
        _ => EXIT_FAILED,
    }
}

pub fn list_scenarios() -> Vec<&'static str> {
    scenario::list_scenarios()
}

fn load(cfg: &RunConfig) -> Result<ScenarioSpec, Failure> {
    let source = cfg
        .scenario
        .as_deref()
        .ok_or_else(|| Failure::Input("--scenario is required for this command".into()))?;
    let path = Path::new(source);
    let text = if path.exists() {
        fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {source}: {e}")))?
    } else if let Some(text) = scenario::bundled_source(source) {
        text.to_string()
    } else {
        return Err(Failure::Input(format!("{source}: no such file or bundled scenario")));
    };
    let mut spec = ScenarioSpec::from_json_with_overrides(&text, &cfg.overrides)
        .map_err(|e| Failure::Input(format!("{source}: {e}")))?;
    if let Some(seed) = cfg.seed {
        spec.seeds = vec![seed, seed.wrapping_add(1)];
    }
    Ok(spec)
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("alpha,h,value,residual,error\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.alpha,
            r.h,
            r.value.map_or(String::new(), |v| v.to_string()),
            r.residual.map_or(String::new(), |v| format!("{v:e}")),
            r.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
        )
        .unwrap();
    }
    out
}

fn degree_options(cfg: &RunConfig) -> DegreeOptions {
    DegreeOptions {
        rule: cfg.seed.map_or(SelectionRule::Barycenter, SelectionRule::Seeded),
        ..DegreeOptions::default()
    }
}

fn expected_mismatch(s: &Scenario, value: i64) -> Option<String> {
    s.expected_degree
        .as_ref()
        .filter(|e| e.value != value)
        .map(|e| format!("expected degree {} ({}), computed {value}", e.value, e.note))
}

fn verify(cfg: &RunConfig, s: &Scenario, art: &mut Artifacts) -> Result<i32, Failure> {
    let report = harness::verify(s)?;
    art.add(&cfg.out, &format!("{}_report.json", s.name), report.to_json() + "\n");
    art.add(&cfg.out, &format!("{}_index.csv", s.name), report.to_csv());
    println!(
        "{}: degree {} ({}), t_star {}, pass {}",
        s.name,
        report.rhs_certificate.value,
        report.rhs_certificate.domain,
        report.t_star.map_or("none".to_string(), |t| t.to_string()),
        report.pass
    );
    for row in &report.index_table {
        let index = row.index.map_or("-".to_string(), |v| v.to_string());
        let note = row.error.as_deref().unwrap_or("");
        println!("  t = {:<6} index {index:>3} {note}", row.t);
    }
    if let Some(msg) = expected_mismatch(s, report.rhs_certificate.value) {
        eprintln!("{}: {msg}", s.name);
        return Ok(EXIT_FAILED);
    }
    Ok(if report.pass { EXIT_OK } else { EXIT_FAILED })
}

fn degree_cmd(cfg: &RunConfig, s: &Scenario, art: &mut Artifacts) -> Result<i32, Failure> {
    let region = s.region()?;
    let cert = degree::degree_rhs(&s.op, &s.map, region, &s.sweeps.pairs(), &degree_options(cfg))?;
    art.add(&cfg.out, &format!("{}_degree.json", s.name), cert.to_json() + "\n");
    art.add(&cfg.out, &format!("{}_sweep.csv", s.name), sweep_csv(&cert.sweep));
    println!("{}: degree {} ({})", s.name, cert.value, cert.domain);
    if let Some(msg) = expected_mismatch(s, cert.value) {
        eprintln!("{}: {msg}", s.name);
        return Ok(EXIT_FAILED);
    }
    Ok(EXIT_OK)
}

fn simulate(cfg: &RunConfig, spec: &ScenarioSpec, s: &Scenario, art: &mut Artifacts) -> Result<i32, Failure> {
    let sim = spec
        .simulate
        .as_ref()
        .ok_or_else(|| Failure::Input(format!("scenario {} has no simulate section", s.name)))?;
    let f = s.selection(SelectionRule::Barycenter)?;
    let x0 = DVector::from_column_slice(&sim.x0);
    let name = format!("{}_trajectory.csv", s.name);
    match integrator::solve(&s.op, &s.set, &f, &x0, sim.t_end, sim.h, s.scheme) {
        Ok(traj) => {
            println!(
                "{}: {} steps, final state {:?}, max d(u;K) {:e}",
                s.name,
                traj.len() - 1,
                traj.last().as_slice(),
                traj.max_distance()
            );
            art.add(&cfg.out, &name, traj.to_csv());
            Ok(EXIT_OK)
        }
        Err(Error::Aborted { source, partial }) => {
            eprintln!("{}: aborted after {} states: {source}", s.name, partial.len());
            art.add(&cfg.out, &name, partial.to_csv());
            Ok(exit_code(&source))
        }
        Err(e) => Err(e.into()),
    }
}

fn funnel(cfg: &RunConfig, spec: &ScenarioSpec, s: &Scenario, art: &mut Artifacts) -> Result<i32, Failure> {
    let sim = spec
        .simulate
        .as_ref()
        .ok_or_else(|| Failure::Input(format!("scenario {} has no simulate section", s.name)))?;
    let x0 = DVector::from_column_slice(&sim.x0);
    let strategies = s.strategies();
    let runs = integrator::funnel(&s.op, &s.set, &s.map, &x0, sim.t_end, sim.h, &strategies, s.scheme);
    let mut out = String::from("strategy,t");
    for i in 0..x0.len() {
        write!(out, ",u{i}").unwrap();
    }
    out.push('\n');
    let mut code = EXIT_OK;
    for (strategy, run) in strategies.iter().zip(runs) {
        match run {
            Ok(traj) => {
                println!("{strategy:?}: endpoint {:?}", traj.last().as_slice());
                for (t, u) in traj.times.iter().zip(&traj.states) {
                    write!(out, "{strategy:?},{t}").unwrap();
                    for v in u.iter() {
                        write!(out, ",{v}").unwrap();
                    }
                    out.push('\n');
                }
            }
            Err(e) => {
                eprintln!("{strategy:?}: {e}");
                code = code.max(exit_code(&e));
            }
        }
    }
    art.add(&cfg.out, &format!("{}_funnel.csv", s.name), out);
    Ok(code)
}

fn scan(cfg: &RunConfig, s: &Scenario, art: &mut Artifacts) -> Result<i32, Failure> {
    let mut ts = s.sweeps.t.clone();
    ts.reverse();
    let z = [0.0, 0.25, 0.5, 0.75, 1.0];
    let report = harness::boundary_exclusion_scan(s, None, &z, &ts, 1e-6)?;
    art.add(&cfg.out, &format!("{}_scan.csv", s.name), report.to_csv());
    art.add(
        &cfg.out,
        &format!("{}_scan.json", s.name),
        serde_json::to_string_pretty(&report).expect("scan report serializes") + "\n",
    );
    println!(
        "{}: minimum boundary return distance {:e}, t_star {}",
        s.name,
        report.global_min,
        report.t_star.map_or("none".to_string(), |t| t.to_string())
    );
    Ok(EXIT_OK)
}

fn execute(cfg: &RunConfig, art: &mut Artifacts) -> Result<i32, Failure> {
    if cfg.command == Command::List {
        for name in list_scenarios() {
            println!("{name}");
        }
        return Ok(EXIT_OK);
    }
    let spec = load(cfg)?;
    let s = spec.build().map_err(|e| Failure::Input(e.to_string()))?;
    match cfg.command {
        Command::Verify => verify(cfg, &s, art),
        Command::Degree => degree_cmd(cfg, &s, art),
        Command::Simulate => simulate(cfg, &spec, &s, art),
        Command::Funnel => funnel(cfg, &spec, &s, art),
        Command::Scan => scan(cfg, &s, art),
        Command::List => unreachable!(),
    }
}

fn report_inconclusive(cfg: &RunConfig, e: &Error, art: &mut Artifacts) {
    if let Error::Inconclusive { sweep, .. } = e.root() {
        if !sweep.is_empty() {
            let table = sweep_csv(sweep);
            eprint!("{table}");
            let stem = cfg.scenario.as_deref().map_or("scenario".into(), |p| {
                Path::new(p).file_stem().map_or(p.to_string(), |s| s.to_string_lossy().into_owned())
            });
            art.add(&cfg.out, &format!("{stem}_sweep.csv"), table);
        }
    }
}

/// Runs one command and writes its artifacts. Returns the process exit code.
pub fn run(cfg: &RunConfig) -> i32 {
    let mut art = Artifacts { files: Vec::new() };
    let code = match execute(cfg, &mut art) {
        Ok(code) => code,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INPUT
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("error: {e}");
            report_inconclusive(cfg, &e, &mut art);
            exit_code(&e)
        }
    };
    if art.files.is_empty() {
        return code;
    }
    if let Err(e) = fs::create_dir_all(&cfg.out) {
        eprintln!("error: cannot create {}: {e}", cfg.out.display());
        return EXIT_INPUT;
    }
    for (path, body) in &art.files {
        if let Err(e) = fs::write(path, body) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return EXIT_INPUT;
        }
    }
    code
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_kind() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_INPUT);
        let unstable = Error::Inconclusive {
            reason: "x".into(),
            sweep: Vec::new(),
        };
        assert_eq!(exit_code(&unstable), EXIT_INCONCLUSIVE);
        assert_eq!(
            exit_code(&Error::BoundaryResidual {
                point: vec![1.0],
                residual: 0.0
            }),
            EXIT_FAILED
        );
        assert_eq!(exit_code(&Error::Singular { condition: 1e20 }), EXIT_INCONCLUSIVE);
    }

    #[test]
    fn sweep_csv_escapes_messages() {
        let rows = [SweepRow {
            alpha: 0.1,
            h: 0.01,
            value: None,
            residual: None,
            error: Some("a, b\nc".into()),
        }];
        assert_eq!(sweep_csv(&rows), "alpha,h,value,residual,error\n0.1,0.01,,,a; b;c\n");
    }
}
