use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use blockopt_core::admm::{run_admm, AdmmTrace};
use blockopt_core::bcd::{run_bcd, subgradient_bound_constant, BcdTrace, StopReason};
use blockopt_core::problems::{Algorithm, Builtin, DEFAULT_SEED};
use blockopt_core::smooth::{LeastSquares, SmoothFn};
use blockopt_core::Rng;
use clap::{Args, Parser, Subcommand};

use crate::certify::{certify_admm, certify_bcd, parse_checks, Check, KlConstant, KlOptions};
use crate::error::{CliError, CliResult, Status};
use crate::oracle::{atom_from_args, coupling_parts, grad_compare, prox_compare, subdiff_compare};
use crate::report::Report;
use crate::spec::{algorithm_name, resolve_seed, Loaded, LoadedAdmm, LoadedBcd, Overrides, ProblemSpec};
use crate::trace_io;

#[derive(Debug, Parser)]
#[command(name = "blockopt", version, about = "Two-block PALM and ADMM solvers with convergence certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run block coordinate descent and write the trace.
    RunBcd(RunArgs),
    /// Run two-block ADMM and write the trace.
    RunAdmm(RunArgs),
    /// Re-run certificates on a stored trace.
    Verify(VerifyArgs),
    /// Compare analytic operators with brute-force oracles.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// List the built-in problems.
    ListProblems,
}

#[derive(Debug, Args, Clone, Default)]
pub struct SourceArgs {
    /// Problem file (JSON); repeat for several independent jobs.
    #[arg(long = "problem", value_name = "FILE")]
    pub problems: Vec<PathBuf>,
    /// Built-in problem name; repeatable.
    #[arg(long = "builtin", value_name = "NAME")]
    pub builtins: Vec<String>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct OverrideArgs {
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Seed; overrides BLOCKOPT_SEED and the problem file.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl OverrideArgs {
    fn to_overrides(&self) -> Overrides {
        Overrides {
            gamma: self.gamma,
            rho: self.rho,
            tau: self.tau,
            max_iters: self.max_iters,
            tol: self.tol,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args, Clone)]
pub struct KlArgs {
    /// KL exponent; the fitted value when omitted.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Desingularizer constant, or `auto`.
    #[arg(long, default_value = "auto")]
    pub c: String,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Fraction of resolvable trace points checked, latest first.
    #[arg(long, default_value_t = 0.5)]
    pub kl_tail: f64,
}

impl KlArgs {
    fn options(&self) -> CliResult<KlOptions> {
        let c: KlConstant = self.c.parse().map_err(|e| CliError::input("--c", e))?;
        if let Some(t) = self.theta {
            if !(0.0..1.0).contains(&t) {
                return Err(CliError::input("--theta", format!("must lie in [0, 1), got {t}")));
            }
        }
        Ok(KlOptions {
            theta: self.theta,
            c,
            eta: self.eta,
            tail: self.kl_tail,
            ..KlOptions::default()
        })
    }
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub overrides: OverrideArgs,
    /// Trace CSV path (single job only).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Report JSON path (single job only).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Directory for default output names `<problem>.trace.csv` / `.report.json`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Run the certificate suite and write the report.
    #[arg(long)]
    pub certify: bool,
    /// Comma list of checks; defaults to the algorithm's suite.
    #[arg(long)]
    pub checks: Option<String>,
    /// Also write every iterate to `<trace>.full.csv`.
    #[arg(long)]
    pub full_dump: bool,
    /// Independent jobs run concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub kl: KlArgs,
}

#[derive(Debug, Args, Clone)]
pub struct VerifyArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub overrides: OverrideArgs,
    #[arg(long)]
    pub checks: Option<String>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub kl: KlArgs,
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Scalar prox: closed form against a grid scan.
    Prox {
        #[arg(long)]
        atom: String,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        lo: Option<f64>,
        #[arg(long)]
        hi: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
    },
    /// Gradients of a problem's smooth parts against central differences.
    Grad {
        #[command(flatten)]
        source: SourceArgs,
        /// First-block point, comma separated; random when omitted.
        #[arg(long, allow_hyphen_values = true)]
        x: Option<String>,
        /// Second-block point (BCD problems).
        #[arg(long, allow_hyphen_values = true)]
        y: Option<String>,
        #[arg(long, default_value_t = 1e-4)]
        h: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// dist(u, ∂a(x)) against one-sided difference quotients.
    SubdiffDist {
        #[arg(long)]
        atom: String,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        lo: Option<f64>,
        #[arg(long)]
        hi: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long, allow_hyphen_values = true)]
        u: String,
        #[arg(long, default_value_t = 1e-7)]
        h: f64,
    },
}

/// Parses arguments, runs, prints, and maps the outcome to a status.
pub fn main_with<I, T>(args: I) -> Status
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Status::InputError } else { Status::Pass };
        }
    };
    match execute(cli.command) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            e.status()
        }
    }
}

pub fn execute(cmd: Command) -> CliResult<Status> {
    match cmd {
        Command::RunBcd(a) => run_command(Algorithm::Bcd, &a),
        Command::RunAdmm(a) => run_command(Algorithm::Admm, &a),
        Command::Verify(a) => verify_command(&a),
        Command::Oracle(o) => oracle_command(o),
        Command::ListProblems => {
            for b in Builtin::ALL {
                println!("{:<16} {:<5} {}", b.name(), algorithm_name(b.algorithm()), b.description());
            }
            Ok(Status::Pass)
        }
    }
}

/// A problem source with its output stem and path base.
struct Input {
    spec: ProblemSpec,
    base: PathBuf,
    stem: String,
}

fn collect_inputs(src: &SourceArgs) -> CliResult<Vec<Input>> {
    let mut out = Vec::new();
    for path in &src.problems {
        let spec = ProblemSpec::read(path)?;
        let stem = path.file_stem().map_or("problem".into(), |s| s.to_string_lossy().into_owned());
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        out.push(Input { spec, base, stem });
    }
    for name in &src.builtins {
        let b: Builtin = name.parse().map_err(|e| CliError::core("--builtin", e))?;
        out.push(Input {
            spec: ProblemSpec::builtin(b),
            base: PathBuf::new(),
            stem: b.name().to_string(),
        });
    }
    if out.is_empty() {
        return Err(CliError::input("--problem", "give a problem file or --builtin"));
    }
    Ok(out)
}

fn load(input: &Input, ov: &Overrides, expect: Algorithm) -> CliResult<Loaded> {
    let loaded = input.spec.load(&input.base, ov, &input.stem)?;
    if loaded.algorithm() != expect {
        return Err(CliError::input(
            "algorithm",
            format!(
                "{} is a {} problem; use {}",
                loaded.name(),
                algorithm_name(loaded.algorithm()),
                match loaded.algorithm() {
                    Algorithm::Bcd => "run-bcd",
                    Algorithm::Admm => "run-admm",
                }
            ),
        ));
    }
    Ok(loaded)
}

fn checks_for(alg: Algorithm, list: Option<&str>) -> CliResult<Vec<Check>> {
    match list {
        Some(l) => parse_checks(l),
        None => Ok(match alg {
            Algorithm::Bcd => Check::BCD_DEFAULT.to_vec(),
            Algorithm::Admm => Check::ADMM_DEFAULT.to_vec(),
        }),
    }
}

pub fn bcd_parameters(p: &LoadedBcd, trace: &BcdTrace) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    m.insert("gamma".into(), trace.gamma);
    m.insert("lipschitz".into(), trace.lipschitz);
    m.insert("max_iters".into(), p.config.max_iters() as f64);
    m.insert("seed".into(), p.config.seed() as f64);
    if let Some(t) = p.config.stop_tol() {
        m.insert("stop_tol".into(), t);
    }
    m
}

pub fn admm_parameters(p: &LoadedAdmm, trace: &AdmmTrace) -> BTreeMap<String, f64> {
    let c = &p.config;
    BTreeMap::from([
        ("rho".into(), trace.rho),
        ("tau".into(), trace.tau),
        ("max_iters".into(), c.max_iters() as f64),
        ("primal_tol".into(), c.primal_tol()),
        ("dual_tol".into(), c.dual_tol()),
        ("inner_tol".into(), c.inner_tol()),
        ("references".into(), p.references.len() as f64),
    ])
}

struct JobOutput {
    status: Status,
    text: String,
    error: Option<String>,
}

fn run_command(alg: Algorithm, args: &RunArgs) -> CliResult<Status> {
    let inputs = collect_inputs(&args.source)?;
    if inputs.len() > 1 && (args.trace.is_some() || args.report.is_some()) {
        return Err(CliError::input("--trace", "explicit output paths need a single problem; use --out-dir"));
    }
    if args.jobs == 0 {
        return Err(CliError::input("--jobs", "must be at least 1"));
    }
    let kl = args.kl.options()?;
    let checks = checks_for(alg, args.checks.as_deref())?;
    let ov = args.overrides.to_overrides();
    let job = |input: &Input| -> JobOutput {
        match run_one(alg, input, args, &ov, &checks, &kl) {
            Ok(o) => o,
            Err(e) => JobOutput {
                status: e.status(),
                text: String::new(),
                error: Some(format!("error: {e}")),
            },
        }
    };
    let outputs = run_jobs(&inputs, args.jobs, job);
    let mut status = Status::Pass;
    for o in outputs {
        print!("{}", o.text);
        if let Some(e) = o.error {
            eprintln!("{e}");
        }
        status = status.worst(o.status);
    }
    Ok(status)
}

/// Runs `job` over `inputs` on up to `jobs` threads; results keep input order.
fn run_jobs<F>(inputs: &[Input], jobs: usize, job: F) -> Vec<JobOutput>
where
    F: Fn(&Input) -> JobOutput + Sync,
{
    if jobs <= 1 || inputs.len() <= 1 {
        return inputs.iter().map(&job).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<JobOutput>>> = inputs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..jobs.min(inputs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= inputs.len() {
                    break;
                }
                let out = job(&inputs[i]);
                *slots[i].lock().expect("slot lock") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every job ran"))
        .collect()
}

fn run_one(
    alg: Algorithm,
    input: &Input,
    args: &RunArgs,
    ov: &Overrides,
    checks: &[Check],
    kl: &KlOptions,
) -> CliResult<JobOutput> {
    let loaded = load(input, ov, alg)?;
    let name = loaded.name().to_string();
    let trace_path = args.trace.clone().unwrap_or_else(|| args.out_dir.join(format!("{name}.trace.csv")));
    let report_path = args.report.clone().unwrap_or_else(|| args.out_dir.join(format!("{name}.report.json")));
    let mut text = String::new();
    let report = match &loaded {
        Loaded::Bcd(p) => {
            let trace = run_bcd(&p.problem, &p.config).map_err(|e| CliError::core(&name, e))?;
            let full = args.full_dump.then(|| trace_io::bcd_full_dump(&trace));
            trace_io::write_trace(&trace_path, &trace_io::bcd_csv(&trace), full.as_deref())?;
            text.push_str(&format!(
                "{name}: bcd {} iterations ({:?}), psi = {:.16e}, trace {}\n",
                trace.iterations(),
                trace.stop,
                trace.last().psi,
                trace_path.display()
            ));
            if args.certify {
                let reports = certify_bcd(p, &trace, checks, kl)?;
                Some(Report::new("bcd", &name, bcd_parameters(p, &trace), trace.iterations(), trace.stop, reports))
            } else {
                None
            }
        }
        Loaded::Admm(p) => {
            let trace = run_admm(&p.problem, &p.config).map_err(|e| CliError::core(&name, e))?;
            let full = args.full_dump.then(|| trace_io::admm_full_dump(&trace));
            trace_io::write_trace(&trace_path, &trace_io::admm_csv(&trace), full.as_deref())?;
            let last = trace.last();
            text.push_str(&format!(
                "{name}: admm {} iterations ({:?}), primal residual = {:.3e}, trace {}\n",
                trace.len() - 1,
                trace.stop,
                last.primal_residual,
                trace_path.display()
            ));
            if args.certify {
                let reports = certify_admm(p, &trace, checks)?;
                Some(Report::new("admm", &name, admm_parameters(p, &trace), trace.len() - 1, trace.stop, reports))
            } else {
                None
            }
        }
    };
    let status = match report {
        Some(r) => {
            r.write(&report_path)?;
            text.push_str(&r.render());
            text.push_str(&format!("report {}\n", report_path.display()));
            r.status()
        }
        None => Status::Pass,
    };
    Ok(JobOutput { status, text, error: None })
}

/// Stop reason implied by the last record and the configured tolerances.
fn bcd_stop(p: &LoadedBcd, trace: &BcdTrace) -> StopReason {
    let m = subgradient_bound_constant(trace.gamma, trace.lipschitz);
    match p.config.stop_tol() {
        Some(t) if trace.len() > 1 && m * trace.last().step <= t => StopReason::Tolerance,
        _ => StopReason::MaxIters,
    }
}

fn admm_stop(p: &LoadedAdmm, trace: &AdmmTrace) -> StopReason {
    let last = trace.last();
    let c = &p.config;
    if trace.len() - 1 < c.max_iters() || (last.primal_residual <= c.primal_tol() && trace.rho * last.dual_step <= c.dual_tol()) {
        StopReason::Tolerance
    } else {
        StopReason::MaxIters
    }
}

fn verify_command(args: &VerifyArgs) -> CliResult<Status> {
    let mut inputs = collect_inputs(&args.source)?;
    if inputs.len() != 1 {
        return Err(CliError::input("--problem", "verify takes exactly one problem"));
    }
    let input = inputs.pop().expect("one input");
    let ov = args.overrides.to_overrides();
    let loaded = input.spec.load(&input.base, &ov, &input.stem)?;
    let checks = checks_for(loaded.algorithm(), args.checks.as_deref())?;
    let kl = args.kl.options()?;
    let report = match &loaded {
        Loaded::Bcd(p) => {
            let (n, m) = p.problem.dims();
            let points = trace_io::read_bcd_points(&args.trace, n, m)?;
            let mut trace = BcdTrace::from_points(&p.problem, p.config.gamma(), StopReason::MaxIters, points)
                .map_err(|e| CliError::core("trace", e))?;
            trace.stop = bcd_stop(p, &trace);
            let reports = certify_bcd(p, &trace, &checks, &kl)?;
            Report::new("bcd", &p.name, bcd_parameters(p, &trace), trace.iterations(), trace.stop, reports)
        }
        Loaded::Admm(p) => {
            let points = trace_io::read_admm_points(&args.trace, p.problem.dims())?;
            let mut trace = AdmmTrace::from_points(
                &p.problem,
                p.config.rho(),
                p.config.tau(),
                StopReason::MaxIters,
                points,
            )
            .map_err(|e| CliError::core("trace", e))?;
            trace.stop = admm_stop(p, &trace);
            let reports = certify_admm(p, &trace, &checks)?;
            Report::new("admm", &p.name, admm_parameters(p, &trace), trace.len() - 1, trace.stop, reports)
        }
    };
    print!("{}", report.render());
    if let Some(path) = &args.report {
        report.write(path)?;
    }
    Ok(report.status())
}

fn parse_list(s: &str, field: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::input(field, format!("not a number: '{t}'")))
        })
        .collect()
}

fn oracle_command(cmd: OracleCommand) -> CliResult<Status> {
    match cmd {
        OracleCommand::Prox { atom, lambda, lo, hi, t, x, step } => {
            let a = atom_from_args(&atom, lambda, lo, hi, 1)?;
            let half = 10.0 * (1.0 + x.abs());
            let c = prox_compare(&a, t, x, step, half)?;
            print!("{}", c.render("grid"));
            Ok(Status::Pass)
        }
        OracleCommand::SubdiffDist { atom, lambda, lo, hi, x, u, h } => {
            let x = parse_list(&x, "--x")?;
            let u = parse_list(&u, "--u")?;
            let a = atom_from_args(&atom, lambda, lo, hi, x.len())?;
            let c = subdiff_compare(&a, &x, &u, h)?;
            print!("{}", c.render("quotients"));
            Ok(Status::Pass)
        }
        OracleCommand::Grad { source, x, y, h, seed } => {
            let mut inputs = collect_inputs(&source)?;
            if inputs.len() != 1 {
                return Err(CliError::input("--problem", "oracle grad takes exactly one problem"));
            }
            let input = inputs.pop().expect("one input");
            let seed = resolve_seed(seed, input.spec.seed.or(Some(DEFAULT_SEED)))?;
            let ov = Overrides {
                seed: Some(seed),
                ..Overrides::default()
            };
            let loaded = input.spec.load(&input.base, &ov, &input.stem)?;
            let mut rng = Rng::new(seed);
            let mut point = |s: Option<&String>, dim: usize, field: &str| -> CliResult<Vec<f64>> {
                match s {
                    Some(s) => {
                        let v = parse_list(s, field)?;
                        if v.len() != dim {
                            return Err(CliError::input(field, format!("expected dimension {dim}, found {}", v.len())));
                        }
                        Ok(v)
                    }
                    None => Ok(rng.vector_uniform(dim, -1.0, 1.0).into_vec()),
                }
            };
            let (parts, points) = match &loaded {
                Loaded::Bcd(p) => {
                    let (n, m) = p.problem.dims();
                    let xv = point(x.as_ref(), n, "--x")?;
                    let yv = point(y.as_ref(), m, "--y")?;
                    (coupling_parts(p.problem.coupling(), &xv, &yv), vec![xv, yv])
                }
                Loaded::Admm(p) => {
                    let mut parts: Vec<std::sync::Arc<dyn SmoothFn>> = Vec::new();
                    let mut pts = Vec::new();
                    let (n, m, _) = p.problem.dims();
                    for (i, (dim, s, field)) in [(n, x.as_ref(), "--x"), (m, y.as_ref(), "--y")].into_iter().enumerate() {
                        if let Some(ls) = &p.problem.block(i).smooth {
                            parts.push(std::sync::Arc::new(LeastSquares::clone(ls)));
                            pts.push(point(s, dim, field)?);
                        }
                    }
                    if parts.is_empty() {
                        return Err(CliError::input("--problem", format!("{} has no smooth part", p.name)));
                    }
                    (parts, pts)
                }
            };
            let err = grad_compare(&parts, &points, h)?;
            println!("{}: fd-vs-analytic relative error {err:.3e} (h = {h:e})", loaded.name());
            Ok(Status::Pass)
        }
    }
}
