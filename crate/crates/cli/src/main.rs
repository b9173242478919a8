//! `conelrt`: Monte Carlo runs of likelihood ratio tests in singular Gaussian
//! models, written as CSV and JSON artifacts.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use conelrt::cones::{dist2_cone, ConeDescriptor, PlaneCurve};
use conelrt::feedback::{Beta, FeedbackParams};
use conelrt::harness::{
    estimate_critical, fig3_truth, fig4_truth, run_experiment, table1_config, with_threads, write_artifacts,
    write_levels_csv, ExperimentConfig, FactorTest, LevelCell, ModelSpec, FIG3_PATTERNS, FIG4_RHOS, TABLE1_MS,
    TABLE1_NS, TABLE1_RHOS,
};
use conelrt::laws::{sample_many, LimitLaw};
use conelrt::factor::FactorParams;
use serde_json::{json, Value};

const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;
const EXIT_INTERNAL: u8 = 70;
const EXIT_CANT_CREATE: u8 = 73;

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Output(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
            Failure::Output(_) => EXIT_CANT_CREATE,
            Failure::Internal(_) => EXIT_INTERNAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(s) | Failure::Data(s) | Failure::Output(s) | Failure::Internal(s) => s,
        }
    }
}

impl From<conelrt::Error> for Failure {
    fn from(e: conelrt::Error) -> Self {
        use conelrt::Error::*;
        match e {
            Io(_) => Failure::Output(e.to_string()),
            TooManyFailures { .. } | NoConvergence { .. } => Failure::Internal(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

type Res<T> = std::result::Result<T, Failure>;

#[derive(Parser, Debug)]
#[command(name = "conelrt", version, about = "Likelihood ratio tests at singular points of Gaussian models")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "LRT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a likelihood ratio statistic and its p-values.
    Simulate(SimulateArgs),
    /// Sample a limit law.
    Limit(LimitArgs),
    /// Squared distances from vech vectors (CSV rows) to a cone.
    Project(ProjectArgs),
    /// Levels of the conservative submodel test over the (m, n, ρ) grid.
    Table1(GridArgs),
    /// p-values of the one-factor test at four loading patterns.
    Fig3(FigArgs),
    /// p-values of the one-factor test at equicorrelation truths.
    Fig4(FigArgs),
    /// Monte Carlo quantile of a limit law.
    Quantile(QuantileArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// JSON config; a previous summary.json is accepted too. Flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// factor, feedback or curve.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    /// Loadings, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    gamma: Option<Vec<f64>>,
    /// Uniquenesses, comma separated; a single value is repeated.
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    /// saturated or submodel.
    #[arg(long)]
    test: Option<String>,
    /// Submodel index for --test submodel.
    #[arg(long)]
    k: Option<usize>,
    /// Feedback coefficients b21,b24,b31,b32,b43.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta: Option<Vec<f64>>,
    /// Feedback error variances; defaults to ones.
    #[arg(long, value_delimiter = ',')]
    omega: Option<Vec<f64>>,
    /// nodal or cuspidal.
    #[arg(long)]
    curve: Option<String>,
    /// True mean on the curve.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    mu0: Option<Vec<f64>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Reference law, e.g. chisq:2 or maxeig:4.
    #[arg(long = "ref")]
    reference: Option<String>,
    #[arg(long)]
    reference_reps: Option<usize>,
    #[arg(long)]
    bartlett: bool,
    #[arg(long)]
    critical: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct LimitArgs {
    #[arg(long)]
    law: String,
    #[arg(long)]
    reps: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    /// Cone as JSON, or a path to a JSON file.
    #[arg(long)]
    cone: String,
    /// CSV with one vector per row (a non-numeric header row is skipped).
    #[arg(long)]
    input: PathBuf,
    /// Output directory; prints to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long, default_value_t = 20_000)]
    reps: usize,
    #[arg(long)]
    seed: u64,
    /// Draws used for each critical value.
    #[arg(long, default_value_t = 200_000)]
    critical_reps: usize,
    #[arg(long, value_delimiter = ',')]
    ms: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    rhos: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FigArgs {
    #[arg(long, default_value_t = 20_000)]
    reps: usize,
    /// Sample size (defaults: 1000 for fig3, 50 for fig4).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: u64,
    /// Skip the Bartlett correction.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct QuantileArgs {
    #[arg(long)]
    law: String,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 200_000)]
    reps: usize,
    #[arg(long)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("conelrt: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Res<()> {
    if cli.threads == Some(0) {
        return Err(Failure::Usage("--threads must be >= 1".into()));
    }
    let threads = cli.threads;
    match cli.command {
        Command::Simulate(a) => simulate(a, threads),
        Command::Limit(a) => with_threads(threads, || limit(a))?,
        Command::Project(a) => project(a),
        Command::Table1(a) => table1(a, threads),
        Command::Fig3(a) => fig3(a, threads),
        Command::Fig4(a) => fig4(a, threads),
        Command::Quantile(a) => with_threads(threads, || quantile(a))?,
    }
}

fn parse_law(s: &str) -> Res<LimitLaw> {
    s.parse().map_err(|e: conelrt::Error| Failure::Usage(format!("--law/--ref: {e}")))
}

fn create_dir(dir: &Path) -> Res<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::Output(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, text: &str) -> Res<()> {
    fs::write(path, text).map_err(|e| Failure::Output(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, v: &Value) -> Res<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Failure::Internal(e.to_string()))?;
    write_file(path, &(text + "\n"))
}

fn create_file(path: &Path) -> Res<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| Failure::Output(format!("{}: {e}", path.display())))
}

/// Config file contents, unwrapping a previous run's `summary.json`.
fn load_config_value(path: &Path) -> Res<Value> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    match v {
        Value::Object(mut o) if o.contains_key("summary") && o.contains_key("config") => Ok(o.remove("config").unwrap()),
        Value::Object(_) => Ok(v),
        _ => Err(Failure::Data(format!("{}: config must be a JSON object", path.display()))),
    }
}

fn model_from_flags(a: &SimulateArgs) -> Res<Option<ModelSpec>> {
    let Some(kind) = a.model.as_deref() else {
        let any = a.gamma.is_some() || a.beta.is_some() || a.curve.is_some() || a.test.is_some();
        return if any { Err(Failure::Usage("model flags need --model".into())) } else { Ok(None) };
    };
    let model = match kind {
        "factor" => {
            let gamma = a.gamma.clone().ok_or_else(|| Failure::Usage("--model factor needs --gamma".into()))?;
            let m = gamma.len();
            if a.m.is_some_and(|mm| mm != m) {
                return Err(Failure::Usage(format!("--m {} disagrees with {m} loadings", a.m.unwrap())));
            }
            let delta = match a.delta.as_deref() {
                None => return Err(Failure::Usage("--model factor needs --delta".into())),
                Some([d]) => vec![*d; m],
                Some(d) => d.to_vec(),
            };
            let test = match (a.test.as_deref().unwrap_or("saturated"), a.k) {
                ("saturated", None) => FactorTest::Saturated,
                ("submodel", Some(k)) => FactorTest::Submodel { k },
                ("submodel", None) => return Err(Failure::Usage("--test submodel needs --k".into())),
                ("saturated", Some(_)) => return Err(Failure::Usage("--k only applies to --test submodel".into())),
                (t, _) => return Err(Failure::Usage(format!("unknown test {t:?}"))),
            };
            ModelSpec::Factor { params: FactorParams::new(delta, gamma)?, test }
        }
        "feedback" => {
            let b = a.beta.as_deref().ok_or_else(|| Failure::Usage("--model feedback needs --beta".into()))?;
            let [b21, b24, b31, b32, b43] = b else {
                return Err(Failure::Usage("--beta takes b21,b24,b31,b32,b43".into()));
            };
            let omega: [f64; 4] = match a.omega.as_deref() {
                None => [1.0; 4],
                Some(w) => w.try_into().map_err(|_| Failure::Usage("--omega takes four values".into()))?,
            };
            let beta = Beta { b21: *b21, b24: *b24, b31: *b31, b32: *b32, b43: *b43 };
            ModelSpec::Feedback { truth: FeedbackParams::new(beta, omega)? }
        }
        "curve" => {
            let curve = match a.curve.as_deref() {
                Some("nodal") => PlaneCurve::Nodal,
                Some("cuspidal") => PlaneCurve::Cuspidal,
                other => return Err(Failure::Usage(format!("--curve must be nodal or cuspidal, got {other:?}"))),
            };
            let mu0: [f64; 2] = match a.mu0.as_deref() {
                None => [0.0, 0.0],
                Some(v) => v.try_into().map_err(|_| Failure::Usage("--mu0 takes two values".into()))?,
            };
            ModelSpec::Curve { curve, mu0 }
        }
        other => return Err(Failure::Usage(format!("unknown model {other:?}"))),
    };
    Ok(Some(model))
}

fn build_config(a: &SimulateArgs, threads: Option<usize>) -> Res<ExperimentConfig> {
    let mut v = match &a.config {
        Some(p) => load_config_value(p)?,
        None => json!({}),
    };
    let o = v.as_object_mut().expect("object");
    let mut set = |k: &str, x: Value| {
        o.insert(k.to_string(), x);
    };
    if let Some(model) = model_from_flags(a)? {
        set("model", serde_json::to_value(model).expect("serializable"));
    }
    if let Some(n) = a.n {
        set("n", json!(n));
    }
    if let Some(r) = a.reps {
        set("reps", json!(r));
    }
    if let Some(s) = a.seed {
        set("seed", json!(s));
    }
    if let Some(r) = &a.reference {
        set("reference", serde_json::to_value(parse_law(r)?).expect("serializable"));
    }
    if let Some(r) = a.reference_reps {
        set("reference_reps", json!(r));
    }
    if a.bartlett {
        set("bartlett", json!(true));
    }
    if let Some(c) = a.critical {
        set("critical", json!(c));
    }
    if let Some(t) = threads {
        set("threads", json!(t));
    }
    for key in ["model", "n", "reps", "seed", "reference"] {
        if !o.contains_key(key) {
            let flag = if key == "reference" { "ref" } else { key };
            return Err(Failure::Usage(format!("missing --{flag} (or \"{key}\" in --config)")));
        }
    }
    let cfg: ExperimentConfig = serde_json::from_value(v).map_err(|e| Failure::Data(format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(a: SimulateArgs, threads: Option<usize>) -> Res<()> {
    let cfg = build_config(&a, threads)?;
    let result = run_experiment(&cfg)?;
    create_dir(&a.out)?;
    write_artifacts(&result, &a.out)?;
    let s = &result.summary;
    println!(
        "reps {} failures {} mean {:.4} ks {:.4} pvalue mean {:.4} ± {:.4}",
        s.reps, s.failures, s.mean, s.ks_reference, s.pvalue_mean, s.pvalue_mean_stderr
    );
    Ok(())
}

fn limit(a: LimitArgs) -> Res<()> {
    let law = parse_law(&a.law)?;
    if a.reps == 0 {
        return Err(Failure::Usage("--reps must be >= 1".into()));
    }
    // Draws are produced in replicate order, then sorted by EmpiricalDist;
    // write them in replicate order.
    let draws: Vec<f64> = (0..a.reps as u64)
        .map(|r| {
            let mut rng = conelrt::rng::substream(a.seed, conelrt::rng::domain::LAW, r);
            conelrt::laws::sample_law(&law, &mut rng)
        })
        .collect::<conelrt::Result<_>>()?;
    let dist = sample_many(&law, a.reps, a.seed)?;
    create_dir(&a.out)?;
    let mut w = create_file(&a.out.join("limit.csv"))?;
    let io = |e: io::Error| Failure::Output(e.to_string());
    writeln!(w, "replicate,value").map_err(io)?;
    for (r, x) in draws.iter().enumerate() {
        writeln!(w, "{r},{x:.16e}").map_err(io)?;
    }
    w.flush().map_err(io)?;
    let summary = json!({
        "law": law.to_string(),
        "reps": a.reps,
        "seed": a.seed,
        "mean": dist.mean(),
        "mean_stderr": dist.mean_stderr(),
        "q50": dist.quantile(0.5)?,
        "q95": dist.quantile(0.95)?,
        "q99": dist.quantile(0.99)?,
    });
    write_json(&a.out.join("summary.json"), &summary)
}

fn project(a: ProjectArgs) -> Res<()> {
    let text = if Path::new(&a.cone).is_file() {
        fs::read_to_string(&a.cone).map_err(|e| Failure::Data(format!("{}: {e}", a.cone)))?
    } else {
        a.cone.clone()
    };
    let cone: ConeDescriptor = serde_json::from_str(&text).map_err(|e| Failure::Data(format!("--cone: {e}")))?;
    cone.validate()?;
    let input = fs::read_to_string(&a.input).map_err(|e| Failure::Data(format!("{}: {e}", a.input.display())))?;
    let mut rows = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if lineno == 0 => continue,
            Err(e) => return Err(Failure::Data(format!("{} line {}: {e}", a.input.display(), lineno + 1))),
        }
    }
    let mut out = String::from("row,dist2\n");
    for (r, z) in rows.iter().enumerate() {
        let p = dist2_cone(z, &cone)?;
        out.push_str(&format!("{r},{:.16e}\n", p.dist2));
    }
    match a.out {
        Some(dir) => {
            create_dir(&dir)?;
            write_file(&dir.join("projection.csv"), &out)
        }
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn table1(a: GridArgs, threads: Option<usize>) -> Res<()> {
    let ms = a.ms.clone().unwrap_or(TABLE1_MS.to_vec());
    let ns = a.ns.clone().unwrap_or(TABLE1_NS.to_vec());
    let rhos = a.rhos.clone().unwrap_or(TABLE1_RHOS.to_vec());
    create_dir(&a.out)?;
    let mut cells = Vec::new();
    let mut criticals = Vec::new();
    for (mi, &m) in ms.iter().enumerate() {
        let law = LimitLaw::MaxEig { m };
        let crit = with_threads(threads, || estimate_critical(&law, 0.95, a.critical_reps, a.seed ^ (mi as u64 + 1)))??;
        criticals.push(json!({ "m": m, "critical": crit }));
        for &n in &ns {
            for &rho in &rhos {
                let mut cfg = table1_config(m, n, rho, a.reps, a.seed, crit.value)?;
                cfg.threads = threads;
                let r = run_experiment(&cfg)?;
                let level = r.summary.level.expect("critical set");
                eprintln!("m {m} n {n} rho {rho}: level {:.3} ± {:.3}", level.rate, level.stderr);
                cells.push(LevelCell { m, n, rho, level, failures: r.summary.failures });
            }
        }
    }
    write_levels_csv(&cells, create_file(&a.out.join("levels.csv"))?)?;
    write_json(
        &a.out.join("summary.json"),
        &json!({ "reps": a.reps, "seed": a.seed, "critical_reps": a.critical_reps, "criticals": criticals, "cells": cells }),
    )?;
    for c in &cells {
        println!("{},{},{},{:.3}", c.m, c.n, c.rho, c.level.rate);
    }
    Ok(())
}

fn run_panels(a: &FigArgs, threads: Option<usize>, panels: Vec<(String, FactorParams)>, n: usize) -> Res<()> {
    create_dir(&a.out)?;
    let mut index = Vec::new();
    for (name, params) in panels {
        let model = ModelSpec::Factor { params, test: FactorTest::Saturated };
        let mut cfg = ExperimentConfig::new(model, n, a.reps, a.seed, LimitLaw::ChiSq { df: 2 });
        cfg.bartlett = !a.raw;
        cfg.threads = threads;
        cfg.label = Some(name.clone());
        let r = run_experiment(&cfg)?;
        let dir = a.out.join(&name);
        write_artifacts(&r, &dir)?;
        let s = &r.summary;
        println!("{name}: pvalue mean {:.4} ± {:.4}, ks uniform {:.4}", s.pvalue_mean, s.pvalue_mean_stderr, s.ks_uniform);
        index.push(json!({ "panel": name, "dir": name, "summary": r.summary }));
    }
    write_json(&a.out.join("summary.json"), &Value::Array(index))
}

fn fig3(a: FigArgs, threads: Option<usize>) -> Res<()> {
    let panels = FIG3_PATTERNS
        .iter()
        .map(|p| {
            let name = format!("gamma_{}", p.iter().map(|g| format!("{g}")).collect::<String>());
            Ok((name, fig3_truth(p)?))
        })
        .collect::<Res<Vec<_>>>()?;
    run_panels(&a, threads, panels, a.n.unwrap_or(1000))
}

fn fig4(a: FigArgs, threads: Option<usize>) -> Res<()> {
    let panels = FIG4_RHOS.iter().map(|&r| Ok((format!("rho_{r}"), fig4_truth(4, r)?))).collect::<Res<Vec<_>>>()?;
    run_panels(&a, threads, panels, a.n.unwrap_or(50))
}

fn quantile(a: QuantileArgs) -> Res<()> {
    let law = parse_law(&a.law)?;
    let c = estimate_critical(&law, a.p, a.reps, a.seed)?;
    println!("{:.16e} {:.16e}", c.value, c.stderr);
    Ok(())
}
