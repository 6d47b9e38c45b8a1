//! `selfsim`: solve for the self-similar profile, verify stored iterates,
//! and export constants, asymptotics and figure data.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use selfsim::grid::{GridFunction, Mesh};
use selfsim::maps::{apply_r, residual, MapBundle};
use selfsim::profiles::{
    asymptotics_on, check_profiles, identity_check_bc, plot_data, recover, renormalize,
};
use selfsim::solver::{initial_function, solve_from, weighted_residual, InitialFunction, SolveError};
use selfsim::specfun::{constants, format_sci};
use selfsim::transform::KernelOperator;
use selfsim::verify::{check_membership, run_oracles};

use config::{parse_enforcement, parse_format, parse_initial, ConfigError, Format, RunConfig};

const OUT_DIR_ENV: &str = "SELFSIM_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "selfsim", version, about = "Self-similar profile solver")]
struct Cli {
    /// Worker threads for the kernel and the maps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat `key = value` file; explicit flags win over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $SELFSIM_OUT_DIR, else the current one).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Mesh nodes per decade.
    #[arg(long, global = true)]
    per_decade: Option<usize>,
    /// Truncation radius of the mesh.
    #[arg(long, global = true)]
    x_max: Option<f64>,
    /// Format of the report on stdout: csv or json.
    #[arg(long, global = true)]
    format: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Iterate f <- R(f) to a fixed point and write profiles.
    Solve(SolveArgs),
    /// Check membership, closed-form oracles and the residual of a stored iterate.
    Verify(InputArgs),
    /// Print the universal constants.
    Constants,
    /// Fit the far-field constants of a stored fixed point.
    Asymptotics(AsymptoticsArgs),
    /// Write the figure tables of a stored fixed point.
    ExportPlots(InputArgs),
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// rational-one, m0, m1 or file
    #[arg(long)]
    initial: Option<String>,
    /// Initial iterate when --initial file.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    damping: Option<f64>,
    /// log-only, enforce or after-entry
    #[arg(long)]
    enforcement: Option<String>,
    #[arg(long)]
    membership_tol: Option<f64>,
    /// Write every iterate and its image under bundles/.
    #[arg(long)]
    dump_bundles: bool,
}

#[derive(Args, Debug)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    /// Residual tolerance for `verify`.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct AsymptoticsArgs {
    #[arg(long)]
    input: PathBuf,
    /// Window start as a fraction of the truncation radius.
    #[arg(long)]
    fit_lo: Option<f64>,
    #[arg(long)]
    fit_hi: Option<f64>,
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

fn numerical(e: impl std::fmt::Display) -> Failure {
    Failure::Numerical(e.to_string())
}

fn io(path: &Path, e: std::io::Error) -> Failure {
    Failure::Numerical(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    if let Some(d) = std::env::var_os(OUT_DIR_ENV) {
        cfg.out_dir = PathBuf::from(d);
    }
    if let Some(p) = &cli.config {
        cfg.apply_file(p)?;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(n) = cli.per_decade {
        cfg.solve.mesh.per_decade = n;
    }
    if let Some(x) = cli.x_max {
        cfg.solve.mesh.x_max = x;
    }
    if let Some(f) = &cli.format {
        cfg.format = parse_format(f)?;
    }
    match &cli.command {
        Command::Solve(a) => {
            if let Some(s) = &a.initial {
                cfg.solve.initial = match s.as_str() {
                    "file" => {
                        let p = a.input.clone().ok_or_else(|| Failure::Usage("--initial file needs --input".into()))?;
                        InitialFunction::File(p)
                    }
                    other => parse_initial(other)?,
                };
            } else if let Some(p) = &a.input {
                cfg.solve.initial = InitialFunction::File(p.clone());
            }
            if let Some(t) = a.tol {
                cfg.solve.tol_residual = t;
            }
            if let Some(n) = a.max_iters {
                cfg.solve.max_iters = n;
            }
            if let Some(w) = a.damping {
                cfg.solve.damping = w;
            }
            if let Some(e) = &a.enforcement {
                cfg.solve.enforcement = parse_enforcement(e)?;
            }
            if let Some(t) = a.membership_tol {
                cfg.solve.membership_tol = t;
            }
            cfg.dump_bundles |= a.dump_bundles;
        }
        Command::Verify(a) | Command::ExportPlots(a) => {
            if let Some(t) = a.tol {
                cfg.solve.tol_residual = t;
            }
        }
        Command::Asymptotics(a) => {
            if let Some(v) = a.fit_lo {
                cfg.fit_lo = v;
            }
            if let Some(v) = a.fit_hi {
                cfg.fit_hi = v;
            }
        }
        Command::Constants => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let cfg = build_config(&cli)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(numerical)?;
    }
    match &cli.command {
        Command::Solve(_) => cmd_solve(&cfg),
        Command::Verify(a) => cmd_verify(&cfg, &a.input),
        Command::Constants => cmd_constants(&cfg),
        Command::Asymptotics(a) => cmd_asymptotics(&cfg, &a.input),
        Command::ExportPlots(a) => cmd_export_plots(&cfg, &a.input),
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let p = dir.join(name);
    fs::write(&p, contents).map_err(|e| io(&p, e))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Flatten a JSON object into `key,value` lines.
fn csv_of(v: &Value) -> String {
    fn walk(prefix: &str, v: &Value, out: &mut String) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, x, out);
                }
            }
            Value::Array(a) => {
                for (i, x) in a.iter().enumerate() {
                    walk(&format!("{prefix}.{i}"), x, out);
                }
            }
            Value::Number(n) => match n.as_f64() {
                Some(x) if !n.is_i64() && !n.is_u64() => out.push_str(&format!("{prefix},{}\n", format_sci(x))),
                _ => out.push_str(&format!("{prefix},{n}\n")),
            },
            Value::String(s) => out.push_str(&format!("{prefix},{s}\n")),
            Value::Bool(b) => out.push_str(&format!("{prefix},{b}\n")),
            Value::Null => out.push_str(&format!("{prefix},\n")),
        }
    }
    let mut out = String::from("key,value\n");
    walk("", v, &mut out);
    out
}

fn emit(cfg: &RunConfig, v: &Value) {
    match cfg.format {
        Format::Json => print!("{}", pretty(v)),
        Format::Csv => print!("{}", csv_of(v)),
    }
}

fn to_value<T: serde::Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("serializable")
}

fn load(path: &Path) -> Result<GridFunction, Failure> {
    let s = fs::read_to_string(path).map_err(|e| io(path, e))?;
    GridFunction::from_json(&s).map_err(|e| Failure::Numerical(format!("{}: {e}", path.display())))
}

fn bundle_of(f: &GridFunction) -> Result<(KernelOperator, MapBundle), Failure> {
    let op = KernelOperator::new(f.mesh.clone());
    let b = apply_r(&op, f).map_err(numerical)?;
    Ok((op, b))
}

fn bundle_json(b: &MapBundle) -> Value {
    json!({
        "f": b.f.values,
        "tf": b.tf.values,
        "g": b.g.values,
        "psi": b.psi.values,
        "m": b.m.values,
        "r": b.r.values,
    })
}

fn cmd_solve(cfg: &RunConfig) -> Result<bool, Failure> {
    let sc = &cfg.solve;
    let mesh = Mesh::shared(sc.mesh).map_err(|e| Failure::Usage(e.to_string()))?;
    let op = KernelOperator::new(mesh.clone());
    let f0 = initial_function(&sc.initial, &mesh).map_err(numerical)?;
    let dir = &cfg.out_dir;
    let bundles = dir.join("bundles");
    let mut dump_err = None;
    if cfg.dump_bundles {
        write(&bundles, "mesh.json", &pretty(&json!({ "mesh": to_value(&sc.mesh), "x": mesh.x })))?;
    }
    let every = cfg.progress_every;
    let out = solve_from(&op, sc, f0, |rec, b| {
        if rec.iteration % every == 0 || rec.residual <= sc.tol_residual {
            eprintln!(
                "iter {:>5}  residual {:.3e}  weighted {:.3e}  b {:.10}  c {:.10}  d {:.8}{}",
                rec.iteration,
                rec.residual,
                rec.weighted_residual,
                rec.b,
                rec.c,
                rec.d,
                if rec.member { String::new() } else { format!("  outside: {}", rec.failed_clauses.join(",")) }
            );
        }
        if cfg.dump_bundles && dump_err.is_none() {
            let mut v = bundle_json(b);
            v["record"] = to_value(rec);
            let name = format!("iter_{:05}.json", rec.iteration);
            let s = serde_json::to_string(&v).expect("serializable");
            if let Err(e) = write(&bundles, &name, &s) {
                dump_err = Some(e);
            }
        }
    });
    if let Some(e) = dump_err {
        return Err(e);
    }
    let sol = match out {
        Ok(s) => s,
        Err(SolveError::NotConverged(report)) => {
            write(dir, "solve_report.json", &pretty(&to_value(&*report)))?;
            return Err(Failure::Numerical(format!(
                "no convergence after {} iterations; report in {}",
                report.iterations,
                dir.join("solve_report.json").display()
            )));
        }
        Err(SolveError::InvariantViolation { iteration, clauses, report }) => {
            write(dir, "solve_report.json", &pretty(&to_value(&*report)))?;
            return Err(Failure::Numerical(format!(
                "R(f) left the admissible set at iteration {iteration}: {}",
                clauses.join(", ")
            )));
        }
        Err(SolveError::Config(m)) => return Err(Failure::Usage(m)),
        Err(e) => return Err(numerical(e)),
    };

    let b = &sol.bundle;
    write(dir, "fixedpoint.json", &sol.f.to_json().map_err(numerical)?)?;
    write(dir, "fixedpoint.csv", &sol.f.to_csv())?;
    write(dir, "solve_report.json", &pretty(&to_value(&sol.report)))?;

    let raw = recover(b, sc.tol_residual).map_err(numerical)?;
    let ps = renormalize(&raw).map_err(numerical)?;
    write(dir, "profiles.csv", &ps.to_csv())?;
    write(dir, "profiles_unnormalized.csv", &raw.to_csv())?;

    let xm = sol.f.mesh.x_max();
    let asym = asymptotics_on(b, cfg.fit_lo * xm, cfg.fit_hi * xm);
    let summary = json!({
        "mesh": to_value(&sc.mesh),
        "nodes": sol.f.mesh.len(),
        "initial": to_value(&sc.initial),
        "iterations": sol.report.iterations,
        "converged": sol.report.converged,
        "residual": residual(&sol.f, &b.r),
        "weighted_residual": weighted_residual(&sol.f, &b.r),
        "functionals": to_value(&b.fx),
        "delta_d": b.fx.delta_d(),
        "profiles": to_value(&ps.summary()),
        "profiles_unnormalized": to_value(&raw.summary()),
        "profile_checks": to_value(&check_profiles(&ps)),
        "identity": identity_check_bc(b).map(|r| to_value(&r)).unwrap_or(Value::Null),
        "asymptotics": asym.as_ref().map(to_value).unwrap_or_else(|e| json!({ "error": e.to_string() })),
        "membership": to_value(&check_membership(&sol.f, sc.membership_tol)),
    });
    write(dir, "summary.json", &pretty(&summary))?;
    emit(cfg, &summary);
    Ok(true)
}

fn cmd_verify(cfg: &RunConfig, input: &Path) -> Result<bool, Failure> {
    let f = load(input)?;
    let mem = check_membership(&f, cfg.solve.membership_tol);
    let (op, b) = bundle_of(&f)?;
    let oracles = run_oracles(&op);
    let res = residual(&f, &b.r);
    let wres = weighted_residual(&f, &b.r);
    let tol = cfg.solve.tol_residual;
    let fixed = res <= tol && wres <= tol;
    let pass = mem.member && oracles.all_pass && fixed;
    eprint!("{}", mem.table());
    eprint!("{}", oracles.table());
    eprintln!("fixed-point residual {res:.3e} weighted {wres:.3e} (tol {tol:.0e})");
    eprintln!("verdict: {}", if pass { "PASS" } else { "FAIL" });
    emit(
        cfg,
        &json!({
            "input": input.display().to_string(),
            "membership": to_value(&mem),
            "oracles": to_value(&oracles),
            "residual": res,
            "weighted_residual": wres,
            "residual_tol": tol,
            "fixed_point": fixed,
            "pass": pass,
        }),
    );
    Ok(pass)
}

fn cmd_constants(cfg: &RunConfig) -> Result<bool, Failure> {
    emit(cfg, &to_value(&constants().to_decimal_map()));
    Ok(true)
}

fn cmd_asymptotics(cfg: &RunConfig, input: &Path) -> Result<bool, Failure> {
    let f = load(input)?;
    let (_, b) = bundle_of(&f)?;
    let xm = f.mesh.x_max();
    let rep = asymptotics_on(&b, cfg.fit_lo * xm, cfg.fit_hi * xm).map_err(numerical)?;
    emit(cfg, &to_value(&rep));
    Ok(true)
}

fn cmd_export_plots(cfg: &RunConfig, input: &Path) -> Result<bool, Failure> {
    let f = load(input)?;
    let (_, b) = bundle_of(&f)?;
    for (name, body) in plot_data(&b) {
        write(&cfg.out_dir, name, &body)?;
        eprintln!("wrote {}", cfg.out_dir.join(name).display());
    }
    Ok(true)
}
