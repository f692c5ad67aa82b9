//! Command-line surface. Each command is a thin shell over the core crate.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hybridtail_core::baselines::{
    default_candidate_orders, default_k, fit_top_k, select_threshold, TailFit, TailMethod,
};
use hybridtail_core::calibrator::{fit, FitConfig, FitResult};
use hybridtail_core::ecdf::{BandwidthRule, EmpiricalCdf};
use hybridtail_core::ggpd::{fixed_point_trace, ggpd_derive, GgpdConfig};
use hybridtail_core::mixture::mixture_weights_at;
use hybridtail_core::montecarlo::{McConfig, McReport};
use hybridtail_core::{model, ModelParams};

use crate::io::{load_series, to_json, write_csv, write_values, Column, LoadedSeries, Series, Tail};
use crate::manifest::RunManifest;
use crate::report::{cdf_rows, mc_table, tail_rows};
use crate::runner::{default_threads, run_mc};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "hybridtail",
    version,
    about = "Self-calibrating Gaussian-exponential-GPD tail fitting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate the hybrid model to a series.
    Fit(FitArgs),
    /// Draw a sample from a hybrid (or two-component) law.
    Simulate(SimulateArgs),
    /// Monte-Carlo validation of the calibration on simulated data.
    Mc(McArgs),
    /// Classical peaks-over-threshold estimators.
    Baselines(BaselinesArgs),
    /// Fixed-point traces of the two-component junction recurrence.
    ConvergeLab(ConvergeArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// CSV file, or `-` for stdin.
    pub input: String,
    /// Column name or zero-based index.
    #[arg(long, default_value = "0")]
    pub column: Column,
    #[arg(long, value_enum, default_value_t = Tail::Right)]
    pub tail: Tail,
    /// Split point for `--tail both`.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub split: f64,
    /// Split `--tail both` at the sample mode instead.
    #[arg(long)]
    pub split_at_mode: bool,
}

#[derive(Debug, Args)]
pub struct FitOpts {
    #[arg(long, default_value_t = 0.9)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.8)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub eps: f64,
    #[arg(long, default_value_t = 1000)]
    pub kmax: usize,
    /// Synthetic grid size, default max(n, 10000).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ModeRule::FreedmanDiaconis)]
    pub mode_rule: ModeRule,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeRule {
    FreedmanDiaconis,
    Scott,
    Sturges,
}

impl From<ModeRule> for BandwidthRule {
    fn from(r: ModeRule) -> Self {
        match r {
            ModeRule::FreedmanDiaconis => BandwidthRule::FreedmanDiaconis,
            ModeRule::Scott => BandwidthRule::Scott,
            ModeRule::Sturges => BandwidthRule::Sturges,
        }
    }
}

impl FitOpts {
    pub fn config(&self) -> FitConfig {
        FitConfig {
            epsilon: self.eps,
            alpha: self.alpha,
            rho: self.rho,
            k_max: self.kmax,
            m: self.m,
            mode_rule: self.mode_rule.into(),
            seed: self.seed,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Structured result file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for plot-data CSVs.
    #[arg(long)]
    pub plot_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub fit: FitOpts,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Keep the per-iteration trace in the result.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Hybrid parameters mu,sigma,u2,xi.
    #[arg(long, value_parser = parse_list::<4>, allow_hyphen_values = true, conflicts_with = "ggpd")]
    pub theta: Option<[f64; 4]>,
    /// Two-component parameters mu,sigma,u.
    #[arg(long, value_parser = parse_list::<3>, allow_hyphen_values = true)]
    pub ggpd: Option<[f64; 3]>,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long, value_parser = parse_list::<4>, allow_hyphen_values = true)]
    pub theta: [f64; 4],
    /// Training size.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Test size, default n.
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    /// 100 replicates of 10^5 observations unless given explicitly.
    #[arg(long)]
    pub full_scale: bool,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Also fit ML and PWM at each self-calibrated threshold.
    #[arg(long)]
    pub baselines: bool,
    /// Worker threads, default the number of cores.
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub fit: FitOpts,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Text table of the report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Mep,
    Hill,
    Qq,
    Ml,
    All,
}

#[derive(Debug, Args)]
pub struct BaselinesArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::All)]
    pub method: MethodArg,
    /// Order statistics for Hill and QQ, default floor(sqrt(n)).
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    /// CSV file, or `-` for stdin.
    pub input: String,
    #[arg(long, default_value = "0")]
    pub column: Column,
    /// Explicit starting junctions; overrides the quantile spread.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub u0: Vec<f64>,
    /// Number of starts spread evenly over the quantile orders [lo, hi].
    #[arg(long, default_value_t = 6)]
    pub inits: usize,
    #[arg(long, default_value_t = 0.35)]
    pub lo: f64,
    #[arg(long, default_value_t = 0.475)]
    pub hi: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    #[arg(long, default_value_t = 1000)]
    pub kmax: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trace CSV: one row per iteration, one column per start.
    #[arg(long)]
    pub traces: Option<PathBuf>,
}

fn parse_list<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated numbers"));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| format!("not a number: {p:?}"))?;
    }
    Ok(out)
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| io_err(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(e.to_string())),
    }
}

fn plot_file(dir: &Path, name: &str, manifest: &mut RunManifest) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    manifest.outputs.push(name.to_string());
    Ok(dir.join(name))
}

fn load(input: &InputArgs, rule: BandwidthRule) -> Result<LoadedSeries, CliError> {
    let split = (!input.split_at_mode).then_some(input.split);
    load_series(&input.input, &input.column, input.tail, split, rule)
}

#[derive(Serialize)]
struct InputConfig<'a, C: Serialize> {
    column: String,
    tail: Tail,
    split: Option<f64>,
    split_at_mode: bool,
    #[serde(flatten)]
    settings: &'a C,
}

fn input_config<'a, C: Serialize>(input: &InputArgs, settings: &'a C) -> InputConfig<'a, C> {
    InputConfig {
        column: match &input.column {
            Column::Index(i) => i.to_string(),
            Column::Name(n) => n.clone(),
        },
        tail: input.tail,
        split: (!input.split_at_mode).then_some(input.split),
        split_at_mode: input.split_at_mode,
        settings,
    }
}

#[derive(Serialize)]
struct SideFit {
    n: usize,
    #[serde(flatten)]
    result: FitResult,
}

#[derive(Serialize)]
struct MixtureOut {
    junction: f64,
    alpha1: f64,
    alpha2: f64,
}

#[derive(Serialize)]
struct FitOutput {
    manifest: RunManifest,
    skipped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<SideFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    left: Option<SideFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    right: Option<SideFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mixture: Option<MixtureOut>,
}

fn fit_side(
    data: &[f64],
    cfg: &FitConfig,
    keep_trace: bool,
    plots: Option<(&Path, &str)>,
    manifest: &mut RunManifest,
) -> Result<SideFit, CliError> {
    let mut result = fit(data, cfg)?;
    if let Some((dir, suffix)) = plots {
        let path = plot_file(dir, &format!("cdf{suffix}.csv"), manifest)?;
        let rows = cdf_rows(data, &result.theta, cfg.grid_size(data.len()))?;
        write_csv(&path, &["x", "empirical", "model"], rows)?;
        let path = plot_file(dir, &format!("tail{suffix}.csv"), manifest)?;
        let rows = tail_rows(data, result.theta.u2, result.theta.xi, result.derived.beta);
        write_csv(&path, &["x", "empirical", "model"], rows)?;
    }
    if !keep_trace {
        result.trace.clear();
    }
    Ok(SideFit { n: data.len(), result })
}

pub fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    let cfg = args.fit.config();
    cfg.validate()?;
    let loaded = load(&args.input, cfg.mode_rule)?;
    let mut manifest = RunManifest::new("fit", Some(&args.input.input), &input_config(&args.input, &cfg));
    let dir = args.output.plot_dir.as_deref();
    let (mut single, mut left, mut right, mut mixture) = (None, None, None, None);
    match &loaded.series {
        Series::One(data) => {
            single = Some(fit_side(data, &cfg, args.trace, dir.map(|d| (d, "")), &mut manifest)?);
        }
        Series::Both {
            left: lo,
            right: hi,
            split,
        } => {
            let l = fit_side(lo, &cfg, args.trace, dir.map(|d| (d, "_left")), &mut manifest)?;
            let r = fit_side(hi, &cfg, args.trace, dir.map(|d| (d, "_right")), &mut manifest)?;
            let (alpha1, alpha2) = mixture_weights_at(&l.result.theta, &r.result.theta, *split)?;
            mixture = Some(MixtureOut {
                junction: *split,
                alpha1,
                alpha2,
            });
            left = Some(l);
            right = Some(r);
        }
    }
    let out = FitOutput {
        manifest,
        skipped: loaded.skipped,
        fit: single,
        left,
        right,
        mixture,
    };
    emit(args.output.out.as_deref(), &to_json(&out))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let values = match (args.theta, args.ggpd) {
        (Some(t), None) => model::sample(args.n, &ModelParams::from_array(t)?, args.seed)?,
        (None, Some([mu, sigma, u])) => ggpd_derive(mu, sigma, u)?.sample(args.n, args.seed)?,
        _ => return Err(CliError::Usage("give exactly one of --theta or --ggpd".into())),
    };
    match &args.out {
        Some(p) => {
            let file = fs::File::create(p).map_err(|e| io_err(p, e))?;
            write_values(std::io::BufWriter::new(file), &values).map_err(|e| io_err(p, e))
        }
        None => write_values(std::io::stdout().lock(), &values).map_err(|e| CliError::Io(e.to_string())),
    }
}

#[derive(Serialize)]
struct McOutput<'a> {
    manifest: RunManifest,
    report: &'a McReport,
}

pub fn cmd_mc(args: &McArgs) -> Result<(), CliError> {
    let theta = ModelParams::from_array(args.theta)?;
    let (mut n, mut replicates) = (args.n, args.replicates);
    if args.full_scale {
        n = 100_000;
        replicates = 100;
    }
    let mut cfg = McConfig::new(theta, n, replicates, args.fit.seed);
    cfg.l = args.l.unwrap_or(n);
    cfg.delta = args.delta;
    cfg.baselines = args.baselines;
    cfg.fit = args.fit.config();
    cfg.validate()?;
    let report = run_mc(&cfg, args.threads.unwrap_or_else(default_threads))?;
    if let Some(p) = &args.report {
        fs::write(p, mc_table(&report)).map_err(|e| io_err(p, e))?;
    }
    let mut manifest = RunManifest::new("mc", None, &cfg);
    if let Some(p) = &args.report {
        manifest.outputs.push(p.display().to_string());
    }
    emit(
        args.out.as_deref(),
        &to_json(&McOutput {
            manifest,
            report: &report,
        }),
    )
}

#[derive(Serialize)]
struct BaselineSettings {
    method: &'static str,
    k: usize,
    candidate_orders: Vec<f64>,
}

#[derive(Serialize)]
struct MethodOutcome {
    method: TailMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<TailFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct BaselinesOutput {
    manifest: RunManifest,
    n: usize,
    skipped: usize,
    results: Vec<MethodOutcome>,
}

fn method_name(m: TailMethod) -> &'static str {
    match m {
        TailMethod::MepPwm => "mep",
        TailMethod::Hill => "hill",
        TailMethod::Qq => "qq",
        TailMethod::Ml => "ml",
    }
}

pub fn cmd_baselines(args: &BaselinesArgs) -> Result<(), CliError> {
    let loaded = load(&args.input, BandwidthRule::default())?;
    let data = match &loaded.series {
        Series::One(d) => d,
        Series::Both { .. } => return Err(CliError::Usage("baselines takes --tail right or left".into())),
    };
    let k = args.k.unwrap_or_else(|| default_k(data.len()));
    let methods: Vec<TailMethod> = match args.method {
        MethodArg::Mep => vec![TailMethod::MepPwm],
        MethodArg::Hill => vec![TailMethod::Hill],
        MethodArg::Qq => vec![TailMethod::Qq],
        MethodArg::Ml => vec![TailMethod::Ml],
        MethodArg::All => vec![TailMethod::MepPwm, TailMethod::Hill, TailMethod::Qq, TailMethod::Ml],
    };
    let orders = default_candidate_orders();
    let settings = BaselineSettings {
        method: match args.method {
            MethodArg::All => "all",
            _ => method_name(methods[0]),
        },
        k,
        candidate_orders: orders.clone(),
    };
    let mut manifest = RunManifest::new(
        "baselines",
        Some(&args.input.input),
        &input_config(&args.input, &settings),
    );
    let mut results = Vec::new();
    for &method in &methods {
        // Hill and QQ use the k largest observations, the GPD fits scan thresholds
        let outcome = match method {
            TailMethod::Hill | TailMethod::Qq => fit_top_k(data, method, k),
            _ => select_threshold(data, method, &orders),
        };
        match outcome {
            Ok(f) => {
                if let Some(dir) = args.output.plot_dir.as_deref() {
                    let path = plot_file(dir, &format!("tail_{}.csv", method_name(method)), &mut manifest)?;
                    write_csv(
                        &path,
                        &["x", "empirical", "model"],
                        tail_rows(data, f.threshold, f.xi, f.beta),
                    )?;
                }
                results.push(MethodOutcome {
                    method,
                    fit: Some(f),
                    error: None,
                });
            }
            // a single method is a hard error, a comparison reports the failure
            Err(e) if methods.len() == 1 => return Err(e.into()),
            Err(e) => results.push(MethodOutcome {
                method,
                fit: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let out = BaselinesOutput {
        manifest,
        n: data.len(),
        skipped: loaded.skipped,
        results,
    };
    emit(args.output.out.as_deref(), &to_json(&out))
}

#[derive(Serialize)]
struct ConvergeSettings {
    column: String,
    u0: Vec<f64>,
    epsilon: f64,
    k_max: usize,
}

#[derive(Serialize)]
struct TraceSummary {
    u0: f64,
    limit: f64,
    iterations: usize,
    monotone: bool,
}

#[derive(Serialize)]
struct ConvergeOutput {
    manifest: RunManifest,
    n: usize,
    range: f64,
    spread: f64,
    traces: Vec<TraceSummary>,
}

/// True when the sequence never moves against its overall direction by more than `slack`.
pub fn is_monotone(trace: &[f64], slack: f64) -> bool {
    let up = trace[trace.len() - 1] >= trace[0];
    trace
        .windows(2)
        .all(|w| if up { w[1] >= w[0] - slack } else { w[1] <= w[0] + slack })
}

pub fn cmd_converge_lab(args: &ConvergeArgs) -> Result<(), CliError> {
    let raw = load_series(
        &args.input,
        &args.column,
        Tail::Right,
        Some(0.0),
        BandwidthRule::default(),
    )?;
    let Series::One(data) = raw.series else {
        unreachable!("right tail is a single series")
    };
    let ecdf = EmpiricalCdf::new(&data)?;
    let u0: Vec<f64> = if args.u0.is_empty() {
        if args.inits == 0 || !(0.0 < args.lo && args.lo <= args.hi && args.hi < 1.0) {
            return Err(CliError::Usage("need inits >= 1 and 0 < lo <= hi < 1".into()));
        }
        let step = if args.inits > 1 {
            (args.hi - args.lo) / (args.inits - 1) as f64
        } else {
            0.0
        };
        (0..args.inits)
            .map(|i| ecdf.quantile(args.lo + step * i as f64))
            .collect::<Result<_, _>>()?
    } else {
        args.u0.clone()
    };
    let cfg = GgpdConfig {
        epsilon: args.eps,
        k_max: args.kmax,
        ..GgpdConfig::default()
    };
    let traces = fixed_point_trace(&data, &u0, &cfg)?;
    let range = ecdf.max() - ecdf.min();
    let settings = ConvergeSettings {
        column: format!("{:?}", args.column),
        u0: u0.clone(),
        epsilon: cfg.epsilon,
        k_max: cfg.k_max,
    };
    let mut manifest = RunManifest::new("converge-lab", Some(&args.input), &settings);
    if let Some(p) = &args.traces {
        let len = traces.iter().map(Vec::len).max().unwrap_or(0);
        let mut header = vec!["iteration".to_string()];
        header.extend((0..traces.len()).map(|j| format!("start_{j}")));
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        // finished traces are held at their last value
        let rows = (0..len).map(|i| {
            let mut row = vec![i as f64];
            row.extend(traces.iter().map(|t| t[i.min(t.len() - 1)]));
            row
        });
        write_csv(p, &header_refs, rows)?;
        manifest.outputs.push(p.display().to_string());
    }
    let limits: Vec<f64> = traces.iter().map(|t| t[t.len() - 1]).collect();
    let spread =
        limits.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - limits.iter().cloned().fold(f64::INFINITY, f64::min);
    let out = ConvergeOutput {
        manifest,
        n: data.len(),
        range,
        spread,
        traces: traces
            .iter()
            .zip(&u0)
            .map(|(t, &u)| TraceSummary {
                u0: u,
                limit: t[t.len() - 1],
                iterations: t.len() - 1,
                monotone: is_monotone(t, 1e-9 * range),
            })
            .collect(),
    };
    emit(args.out.as_deref(), &to_json(&out))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Mc(a) => cmd_mc(a),
        Command::Baselines(a) => cmd_baselines(a),
        Command::ConvergeLab(a) => cmd_converge_lab(a),
    }
}
