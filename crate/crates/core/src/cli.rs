//! Command-line front end: workflows, report files and exit codes.
//!
//! Every workflow writes `<stem>.json` (deterministic for a given config and
//! seed), `<stem>.timing.json` (wall-clock data) and, where a point cloud is
//! produced, `<stem>.csv` into the output directory.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::appendix::{
    check_t1, check_t2, henkin_closure, identity_random_check, AppendixRule, BidiscField,
};
use crate::error::{Error, Result};
use crate::field::{compare_fields, PolarGrid, SolutionField, Targets};
use crate::forms::{bidisc_family, builtin_form, monomial11, resolve_potential_1d};
use crate::geometry::{make_domain, DomainDescriptor, PlanarDomain, PolarRule};
use crate::greens::{fit_green_bounds, GreenBound, GreenEvaluator};
use crate::kernels::{fit_kernel_decay, stability_probe, KernelBound, KernelSet};
use crate::oracle::{least_norm_solve, nested_targets, nested_targets_on, DiscreteDbarSystem};
use crate::product::{
    audit_ee_bound, canonicity_defect_nd, expand_e_derivative, solve_smooth, solve_smooth_at,
    solve_tilde, solve_tilde_at, stencil_dbar_residual, uniform_bound_probe, ProbeResolution,
    ProductDomain,
};
use crate::report::{EstimateReport, InequalityId};
use crate::sampling::{PairSampler, DEFAULT_SEED};
use crate::solve1d::{
    canonicity_defect, dbar_residual_1d, norm_bound_probe, projection_bound_probe, solve_t,
};

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "DBAR_OUT_DIR";

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_INVARIANT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dbar", version, about = "Canonical solutions of the dbar-equation on planar domains and products")]
pub struct Cli {
    /// Directory receiving CSV and JSON artifacts.
    #[arg(long, env = OUT_DIR_ENV, default_value = "dbar-out", global = true)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED, global = true)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Kernel table on sampled pairs, with the S-first fit.
    Kernels(KernelsArgs),
    /// Empirical constant of one inequality.
    Estimate(EstimateArgs),
    /// Canonical solution on a planar domain.
    Solve1d(Solve1dArgs),
    /// Canonical solution on a product domain.
    Solve(SolveArgs),
    /// Continuous solver against the discrete least-norm oracle.
    OracleCompare(OracleArgs),
    /// Kernel stability along the exhaustion.
    Stability(StabilityArgs),
    /// Bidisc representation checks.
    AppendixCheck(AppendixArgs),
    /// Index of the JSON reports in the output directory.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelCheck {
    /// Closed-form disc kernels, cross-checked against Nyström.
    ClosedForm,
    /// Nyström kernels on any domain.
    Nystrom,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KernelsArgs {
    /// Builtin domain name or TOML descriptor path.
    #[arg(long, default_value = "disc")]
    pub domain: String,
    #[arg(long, value_enum, default_value_t = KernelCheck::ClosedForm)]
    pub check: KernelCheck,
    #[arg(long, default_value_t = 200)]
    pub pairs: usize,
    #[arg(long)]
    pub boundary_nodes: Option<usize>,
    /// Largest relative closed-form / Nyström deviation of S.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[arg(long, default_value = "disc")]
    pub domain: String,
    /// Inequality id, e.g. G-bound, S-first, ee-bound, pq-bound, t2-ratio.
    #[arg(long)]
    pub inequality: String,
    #[arg(long, default_value_t = 200)]
    pub pairs: usize,
    #[arg(long)]
    pub boundary_nodes: Option<usize>,
    /// Number of factors for the product inequalities.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Factor carrying the kernel in the ee expansion (default: last).
    #[arg(long)]
    pub k: Option<usize>,
    /// Factors differentiated in the ee expansion, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub derivatives: Vec<usize>,
    /// Exponent gain for the ee bound (default: half the admissible limit).
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 1.5)]
    pub p: f64,
    #[arg(long, default_value_t = 2.0)]
    pub q: f64,
    /// Target grid size per direction for the grid-based probes.
    #[arg(long, default_value_t = 8)]
    pub grid: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Solve1dArgs {
    #[arg(long, default_value = "disc")]
    pub domain: String,
    /// Builtin datum (one, conj, z, zero, mixed) or a potential such as `zbar^2*z`.
    #[arg(long)]
    pub data: String,
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
    #[arg(long)]
    pub boundary_nodes: Option<usize>,
    #[arg(long, default_value_t = 6)]
    pub degree: usize,
    /// Bound on the residual and on every canonicity defect.
    #[arg(long, default_value_t = 1e-2)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    Smooth,
    Tilde,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QuadratureArgs {
    #[arg(long, default_value_t = 12)]
    pub angular: usize,
    #[arg(long, default_value_t = 3)]
    pub gauss: usize,
    #[arg(long, default_value_t = 6)]
    pub levels: usize,
}

impl QuadratureArgs {
    fn rule(&self) -> PolarRule {
        PolarRule { angular: self.angular, gauss: self.gauss, levels: self.levels }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    /// Comma-separated factor domains.
    #[arg(long, value_delimiter = ',', required = true)]
    pub domains: Vec<String>,
    #[arg(long)]
    pub form: String,
    #[arg(long, value_enum, default_value_t = SolveMode::Tilde)]
    pub mode: SolveMode,
    /// Rings and angles of the polar target grid per factor.
    #[arg(long, default_value_t = 6)]
    pub grid: usize,
    #[arg(long)]
    pub boundary_nodes: Option<usize>,
    #[command(flatten)]
    pub quadrature: QuadratureArgs,
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    #[arg(long, default_value_t = 5e-2)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OracleArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub domains: Vec<String>,
    /// Bidisc form name, or planar datum for a single domain.
    #[arg(long)]
    pub form: String,
    /// Rings and angles of the oracle grid per factor.
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
    /// Target spacing in oracle nodes.
    #[arg(long, default_value_t = 8)]
    pub stride: usize,
    #[arg(long)]
    pub boundary_nodes: Option<usize>,
    #[command(flatten)]
    pub quadrature: QuadratureArgs,
    /// Bound on the relative L² gap.
    #[arg(long, default_value_t = 5e-2)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StabilityArgs {
    #[arg(long, default_value = "disc")]
    pub domain: String,
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
    pub levels: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    #[arg(long)]
    pub boundary_nodes: Option<usize>,
    /// Bound on the deviation at the finest level.
    #[arg(long, default_value_t = 1e-2)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AppendixTest {
    T1,
    T2,
    Identity,
    Bm,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AppendixArgs {
    #[arg(long, value_enum)]
    pub test: AppendixTest,
    /// Random point pairs for the identity check.
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    /// Targets per direction on each factor.
    #[arg(long, default_value_t = 3)]
    pub grid: usize,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// Directory to index (default: the output directory).
    #[arg(long)]
    #[serde(skip)]
    pub input: Option<PathBuf>,
}

/// Outcome of one workflow before it is written to disk.
struct Outcome {
    stem: String,
    passed: bool,
    quadrature: BTreeMap<String, Value>,
    result: Value,
    csv: Option<String>,
}

impl Outcome {
    fn new(stem: &str, passed: bool, result: Value) -> Self {
        Self { stem: stem.into(), passed, quadrature: BTreeMap::new(), result, csv: None }
    }

    fn quad(mut self, key: &str, v: impl Serialize) -> Self {
        self.quadrature.insert(key.into(), json!(v));
        self
    }

    fn rule(self, r: &PolarRule) -> Self {
        self.quad("angular", r.angular).quad("gauss", r.gauss).quad("levels", r.levels)
    }

    fn csv(mut self, text: String) -> Self {
        self.csv = Some(text);
        self
    }
}

/// Parses the arguments, runs the workflow and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_SUCCESS };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(true) => EXIT_SUCCESS,
        Ok(false) => EXIT_INVARIANT,
        Err(e) => {
            eprintln!("dbar: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parameter(_) | Error::Descriptor(_) | Error::Io(_) => EXIT_USAGE,
        _ => EXIT_PRECONDITION,
    }
}

/// Canonical JSON of the computation-relevant configuration.
pub fn config_value(cli: &Cli) -> Value {
    json!({ "seed": cli.seed, "command": cli.command })
}

pub fn config_hash(config: &Value) -> String {
    let digest = Sha256::digest(config.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs a parsed command; `Ok(false)` marks a failed invariant.
pub fn run(cli: &Cli) -> Result<bool> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let seed = cli.seed;
    let outcome = match &cli.command {
        Command::Kernels(a) => kernels(a, seed)?,
        Command::Estimate(a) => estimate(a, seed)?,
        Command::Solve1d(a) => solve1d(a)?,
        Command::Solve(a) => solve(a, seed)?,
        Command::OracleCompare(a) => oracle_compare(a)?,
        Command::Stability(a) => stability(a)?,
        Command::AppendixCheck(a) => appendix_check(a, seed)?,
        Command::Report(a) => index(a.input.as_deref().unwrap_or(&cli.out))?,
    };
    let config = config_value(cli);
    let doc = json!({
        "subcommand": outcome.stem,
        "status": if outcome.passed { "pass" } else { "fail" },
        "seed": seed,
        "config_hash": config_hash(&config),
        "config": config,
        "quadrature": outcome.quadrature,
        "result": outcome.result,
    });
    std::fs::create_dir_all(&cli.out)?;
    let json_path = cli.out.join(format!("{}.json", outcome.stem));
    std::fs::write(&json_path, serde_json::to_string_pretty(&doc).expect("report serializes") + "\n")?;
    if let Some(csv) = &outcome.csv {
        std::fs::write(cli.out.join(format!("{}.csv", outcome.stem)), csv)?;
    }
    let timing = json!({
        "started_unix_seconds": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
    });
    std::fs::write(
        cli.out.join(format!("{}.timing.json", outcome.stem)),
        serde_json::to_string_pretty(&timing).expect("timing serializes") + "\n",
    )?;
    println!(
        "{}: {} ({})",
        outcome.stem,
        if outcome.passed { "pass" } else { "fail" },
        json_path.display()
    );
    Ok(outcome.passed)
}

fn load_domain(name: &str) -> Result<(DomainDescriptor, PlanarDomain)> {
    let desc = DomainDescriptor::resolve(name)?;
    let dom = make_domain(&desc)?;
    Ok((desc, dom))
}

fn load_product(names: &[String], nodes: Option<usize>) -> Result<(ProductDomain, usize)> {
    if names.is_empty() {
        return Err(Error::Parameter("no domains given".into()));
    }
    let mut factors = Vec::with_capacity(names.len());
    let mut n = 0;
    for name in names {
        let (desc, dom) = load_domain(name)?;
        n = n.max(nodes.unwrap_or(desc.quadrature.boundary_nodes));
        factors.push(dom);
    }
    Ok((ProductDomain::new(&factors, n)?, n))
}

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("value serializes")
}

fn finite(r: &EstimateReport) -> bool {
    r.supremum.is_finite() && r.supremum >= 0.0
}

fn kernels(a: &KernelsArgs, seed: u64) -> Result<Outcome> {
    let (desc, dom) = load_domain(&a.domain)?;
    let nodes = a.boundary_nodes.unwrap_or(desc.quadrature.boundary_nodes);
    let d = dom.diameter();
    let sampler = PairSampler::new(a.pairs, seed).with_min_depth(0.05 * d);
    let ks = match a.check {
        KernelCheck::ClosedForm => {
            if dom.as_disc().is_none() {
                return Err(Error::Unsupported(format!("closed-form kernels need a disc, not {}", dom.label())));
            }
            KernelSet::closed_form(&dom)?
        }
        KernelCheck::Nystrom => KernelSet::nystrom(&dom, nodes)?,
    };
    let reference = match a.check {
        KernelCheck::ClosedForm => Some(KernelSet::nystrom(&dom, nodes)?),
        KernelCheck::Nystrom => None,
    };
    let mut csv = String::from("w_re,w_im,z_re,z_im,ReS,ImS,ReK,ImK,bound_ratio\n");
    let (mut dev, mut scale) = (0.0f64, 0.0f64);
    for (w, z) in sampler.pairs(&dom) {
        let field = ks.l_field(w)?;
        let s = field.s(z);
        let k = field.k(z);
        let r = (z - w).norm();
        let ratio = KernelBound::SFirst.normalized(s.norm(), r, d, dom.distance_to_boundary(z)?);
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            w.re, w.im, z.re, z.im, s.re, s.im, k.re, k.im, ratio
        ));
        if let Some(ny) = &reference {
            dev = dev.max((ny.s(w, z)? - s).norm());
            scale = scale.max(s.norm());
        }
    }
    let mut report = fit_kernel_decay(&ks, &sampler, KernelBound::SFirst)?;
    let mut passed = finite(&report);
    if reference.is_some() {
        let rel = if scale > 0.0 { dev / scale } else { dev };
        report.extra.insert("nystrom_deviation".into(), rel);
        passed &= rel <= a.tol;
    }
    Ok(Outcome::new("kernels", passed, to_value(&report))
        .quad("boundary_nodes", nodes)
        .quad("pairs", a.pairs)
        .csv(csv))
}

fn estimate(a: &EstimateArgs, seed: u64) -> Result<Outcome> {
    let id = InequalityId::parse(&a.inequality).ok_or_else(|| {
        let ids: Vec<_> = InequalityId::ALL.iter().map(|i| i.as_str()).collect();
        Error::Parameter(format!("unknown inequality {}; expected one of {ids:?}", a.inequality))
    })?;
    let (desc, dom) = load_domain(&a.domain)?;
    let nodes = a.boundary_nodes.unwrap_or(desc.quadrature.boundary_nodes);
    let rule = desc.quadrature.polar_rule();
    let sampler = PairSampler::new(a.pairs, seed);
    let product = || ProductDomain::new(&vec![dom.clone(); a.dim], nodes);
    let mut out_rule = None;
    let report = if let Some(which) = GreenBound::parse(id.as_str()) {
        fit_green_bounds(&GreenEvaluator::new(&dom, nodes)?, &sampler, which)?
    } else if let Some(which) = KernelBound::parse(id.as_str()) {
        fit_kernel_decay(&KernelSet::new(&dom, nodes)?, &sampler, which)?
    } else {
        match id {
            InequalityId::EeBound => {
                let pd = product()?;
                let active: Vec<usize> = (0..a.dim).collect();
                let k = a.k.unwrap_or(a.dim.saturating_sub(1));
                let exp = expand_e_derivative(&active, k, &a.derivatives)?;
                let limit = 1.0 / (2.0 * (a.dim as f64 - 1.0));
                audit_ee_bound(&pd, &exp, a.pairs, seed, a.sigma.unwrap_or(limit / 2.0))?
            }
            InequalityId::PqBound => {
                let ks = KernelSet::new(&dom, nodes)?;
                let family: Vec<_> = ["one", "conj", "z", "mixed"]
                    .iter()
                    .map(|n| resolve_potential_1d(n).map(|p| p.scalar_data()))
                    .collect::<Result<_>>()?;
                out_rule = Some(rule);
                norm_bound_probe(&ks, &family, a.p, a.q, a.grid, &rule)?
            }
            InequalityId::ProjectionBound => {
                let ks = KernelSet::new(&dom, nodes)?;
                let family: Vec<_> = ["one", "conj", "z", "mixed"]
                    .iter()
                    .map(|n| resolve_potential_1d(n).map(|p| p.diff_data()))
                    .collect::<Result<_>>()?;
                let targets = Targets::grid(PolarGrid::square(&dom, a.grid)?);
                out_rule = Some(rule);
                projection_bound_probe(&ks, &family, &targets, &rule)?
            }
            InequalityId::UniformBound => {
                if a.dim != 2 {
                    return Err(Error::Unsupported("the uniform-bound family lives on bidiscs".into()));
                }
                let pd = product()?;
                let family: Vec<_> = bidisc_family().iter().map(|p| p.form()).collect();
                let coarse = ProbeResolution { nr: 2, nt: 4, rule: PolarRule { angular: 12, gauss: 3, levels: 5 } };
                uniform_bound_probe(&pd, &family, &[coarse.clone(), coarse.refined()])?
            }
            InequalityId::T2Ratio => {
                let appendix = AppendixRule::default();
                let f = monomial11().form();
                let pd = ProductDomain::unit_polydisc(2)?;
                let targets = pd.polar_targets(a.grid.min(4), a.grid.min(4))?;
                check_t2(henkin_closure(&f, &appendix), &f, &targets, &appendix, 1e-3)?
            }
            _ => unreachable!("planar ids are dispatched above"),
        }
    };
    let passed = finite(&report);
    let mut out = Outcome::new("estimate", passed, to_value(&report))
        .quad("boundary_nodes", nodes)
        .quad("pairs", a.pairs);
    if let Some(r) = out_rule {
        out = out.rule(&r).quad("grid", a.grid);
    }
    Ok(out)
}

fn solve1d(a: &Solve1dArgs) -> Result<Outcome> {
    let (desc, dom) = load_domain(&a.domain)?;
    let nodes = a.boundary_nodes.unwrap_or(desc.quadrature.boundary_nodes);
    let potential = resolve_potential_1d(&a.data)?;
    let data = potential.scalar_data();
    let ks = KernelSet::new(&dom, nodes)?;
    let rule = desc.quadrature.polar_rule();
    let targets = Targets::grid(PolarGrid::square(&dom, a.grid)?);
    let u = solve_t(&ks, &data, &targets, &rule)?;
    let residual = dbar_residual_1d(&u, &dom, &data)?;
    let defects = canonicity_defect(&ks, &u, a.degree)?;
    let exact_gap = match potential.canonical_on_discs(std::slice::from_ref(&dom)) {
        Ok(exact) => {
            let e = SolutionField::from_fn(&targets, |p| exact.eval(p))?;
            Some(compare_fields(&u, &e)?)
        }
        Err(_) => None,
    };
    let passed = residual <= a.tol && (defects.best_effort || defects.max() <= a.tol);
    let result = json!({
        "domain": dom.label(),
        "data": data.name,
        "sup_norm": u.sup_norm,
        "l2_norm": u.l2_norm,
        "dbar_residual": residual,
        "canonicity_defects": defects.defects,
        "canonicity_best_effort": defects.best_effort,
        "exact_comparison": exact_gap,
    });
    Ok(Outcome::new("solve1d", passed, result)
        .rule(&rule)
        .quad("boundary_nodes", nodes)
        .quad("grid", a.grid)
        .csv(u.to_csv()))
}

fn solve(a: &SolveArgs, seed: u64) -> Result<Outcome> {
    let (pd, nodes) = load_product(&a.domains, a.boundary_nodes)?;
    let f = builtin_form(&a.form, pd.dim())?;
    let rule = a.quadrature.rule();
    let targets = pd.polar_targets(a.grid, a.grid)?;
    let clock = Instant::now();
    let u = match a.mode {
        SolveMode::Smooth => solve_smooth(&pd, &f, &targets, &rule)?,
        SolveMode::Tilde => solve_tilde(&pd, &f, &targets, &rule)?,
    };
    let solve_seconds = clock.elapsed().as_secs_f64();
    let probes = pd.sample_compact(4, 0.2, seed);
    let point = |p: &[Complex64]| -> Result<Complex64> {
        match a.mode {
            SolveMode::Smooth => solve_smooth_at(&pd, &f, p, &rule),
            SolveMode::Tilde => Ok(solve_tilde_at(&pd, std::slice::from_ref(&f), p, &rule)?[0]),
        }
    };
    let residual = stencil_dbar_residual(&pd, point, &f, &probes, 1e-3)?;
    let defects = canonicity_defect_nd(&pd, &u, a.degree)?;
    let passed = residual <= a.tol && (defects.best_effort || defects.max() <= a.tol);
    let entries: Vec<Value> = defects
        .entries
        .iter()
        .map(|(deg, v)| json!({ "degrees": deg, "defect": v }))
        .collect();
    eprintln!("solve: {} targets in {solve_seconds:.2} s", u.len());
    let result = json!({
        "domain": pd.label(),
        "form": f.name,
        "mode": a.mode,
        "sup_norm": u.sup_norm,
        "l2_norm": u.l2_norm,
        "dbar_residual": residual,
        "canonicity_defects": entries,
        "canonicity_max": defects.max(),
        "canonicity_best_effort": defects.best_effort,
    });
    Ok(Outcome::new("solve", passed, result)
        .rule(&rule)
        .quad("boundary_nodes", nodes)
        .quad("grid", a.grid)
        .csv(u.to_csv()))
}

fn oracle_compare(a: &OracleArgs) -> Result<Outcome> {
    let rule = a.quadrature.rule();
    let (label, nodes, sys, continuous) = if a.domains.len() == 1 {
        let (desc, dom) = load_domain(&a.domains[0])?;
        let nodes = a.boundary_nodes.unwrap_or(desc.quadrature.boundary_nodes);
        let targets = nested_targets_on(std::slice::from_ref(&dom), a.grid, a.grid, a.stride, 0.9)?;
        let data = resolve_potential_1d(&a.form)?.scalar_data();
        let g = data.clone();
        let sys = DiscreteDbarSystem::planar(&dom, Arc::new(move |z| g.eval(z)), a.grid, a.grid)?;
        let u = solve_t(&KernelSet::new(&dom, nodes)?, &data, &targets, &rule)?;
        (dom.label(), nodes, sys, u)
    } else {
        let (pd, nodes) = load_product(&a.domains, a.boundary_nodes)?;
        let targets = nested_targets(&pd, a.grid, a.grid, a.stride, 0.9)?;
        let f = builtin_form(&a.form, pd.dim())?;
        let sys = DiscreteDbarSystem::product(&pd, &f, a.grid, a.grid)?;
        (pd.label(), nodes, sys, solve_tilde(&pd, &f, &targets, &rule)?)
    };
    let oracle = least_norm_solve(&sys)?;
    let discrete = oracle.restrict(&continuous.targets())?;
    let cmp = compare_fields(&continuous, &discrete)?;
    let passed = cmp.l2_relative <= a.tol;
    let result = json!({
        "domain": label,
        "form": a.form,
        "oracle": oracle.summary(),
        "comparison": cmp,
    });
    Ok(Outcome::new("oracle-compare", passed, result)
        .rule(&rule)
        .quad("boundary_nodes", nodes)
        .quad("grid", a.grid)
        .quad("stride", a.stride))
}

fn stability(a: &StabilityArgs) -> Result<Outcome> {
    let (desc, dom) = load_domain(&a.domain)?;
    let nodes = a.boundary_nodes.unwrap_or(desc.quadrature.boundary_nodes);
    let levels = stability_probe(&dom, &a.levels, a.kappa, nodes)?;
    let devs: Vec<f64> = levels.iter().map(|l| l.s_deviation.max(l.grad_deviation)).collect();
    let decreasing = devs.windows(2).all(|p| p[1] < p[0]);
    let last = *devs.last().expect("levels are non-empty");
    let passed = decreasing && last <= a.tol;
    let result = json!({
        "domain": dom.label(),
        "levels": levels,
        "strictly_decreasing": decreasing,
        "finest_deviation": last,
    });
    Ok(Outcome::new("stability", passed, result).quad("boundary_nodes", nodes))
}

fn appendix_check(a: &AppendixArgs, seed: u64) -> Result<Outcome> {
    let rule = AppendixRule::default();
    let pd = ProductDomain::unit_polydisc(2)?;
    let n = a.grid.max(1);
    let targets = pd.polar_targets(n, n)?;
    let field = BidiscField::from_potential(&monomial11())?;
    let (passed, result) = match a.test {
        AppendixTest::Identity => {
            let tol = a.tol.unwrap_or(1e-12);
            let gap = identity_random_check(a.count, seed)?;
            (gap <= tol, json!({ "test": "identity", "pairs": a.count, "max_relative_gap": gap, "tol": tol }))
        }
        AppendixTest::T1 => {
            let tol = a.tol.unwrap_or(1e-3);
            let r = check_t1(&field, &targets, &rule)?;
            (r.sup <= tol, json!({ "test": "t1", "report": r, "tol": tol }))
        }
        AppendixTest::Bm => {
            let tol = a.tol.unwrap_or(1e-3);
            let (points, _) = targets.expand();
            let mut sup = 0.0f64;
            let mut residuals = Vec::with_capacity(points.len());
            for p in &points {
                let r = (crate::appendix::bm_reconstruct(&field, p, &rule)? - field.eval(p)).norm();
                sup = sup.max(r);
                residuals.push(r);
            }
            (sup <= tol, json!({ "test": "bm", "field": field.name, "residuals": residuals, "sup": sup, "tol": tol }))
        }
        AppendixTest::T2 => {
            let f = monomial11().form();
            let report = check_t2(henkin_closure(&f, &rule), &f, &targets, &rule, a.tol.unwrap_or(1e-3))?;
            (finite(&report), json!({ "test": "t2", "report": report }))
        }
    };
    Ok(Outcome::new("appendix-check", passed, result)
        .quad("polar", rule.polar)
        .quad("volume", rule.volume)
        .quad("boundary", rule.boundary)
        .quad("edge", rule.edge)
        .quad("projection", rule.projection))
}

fn index(dir: &Path) -> Result<Outcome> {
    let mut entries = Vec::new();
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".json") && !name.ends_with(".timing.json") && name != "report.json"
        })
        .collect();
    names.sort();
    let mut passed = true;
    for path in names {
        let text = std::fs::read_to_string(&path)?;
        let doc: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{} is not a report: {e}", path.display())))?;
        let status = doc.get("status").and_then(Value::as_str).unwrap_or("unknown").to_string();
        passed &= status == "pass";
        entries.push(json!({
            "file": path.file_name().and_then(|n| n.to_str()),
            "subcommand": doc.get("subcommand"),
            "status": status,
            "config_hash": doc.get("config_hash"),
        }));
    }
    Ok(Outcome::new("report", passed, json!({ "reports": entries })))
}
