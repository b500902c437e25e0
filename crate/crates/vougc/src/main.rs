//! Command-line interface: closed-form causality rates for linear SDE models
//! and causality/stability maps for nonlinear Langevin systems.
//!
//! Conventions: indices on the command line are 1-based (y1..yn), internal
//! indices are 0-based; stdout carries data only, diagnostics and run
//! manifests go to stderr; CSV numbers use 17 significant digits so
//! downstream plotting needs no re-computation. Map sweeps parallelize over
//! points; set RAYON_NUM_THREADS to bound the worker count.

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use std::path::{Path, PathBuf};
use std::time::Instant;
use vougc::formats::{dump_vou_model, parse_vou_model, RunManifest};
use vougc::gc::{
    conditional_rate, finite_horizon_gc, pairwise_graph, unconditional_graph, GcGraph,
    GraphEntry, Partition,
};
use vougc::langevin::{builtin_lorenz, parse_system, LangevinSystem};
use vougc::map::{
    gc_map, global_rate, integrate_ode, integrate_sde, stability_map, GlobalValues,
    MapAnalysis, SampleValues, Trajectory, RNG_ALGORITHM, SUBSTEPS,
};
use vougc::oracle::rate_via_subsampling;
use vougc::{Error, Result};

#[derive(Parser)]
#[command(
    name = "vougc",
    version,
    about = "Granger-causality rates for linear SDEs and causality maps for Langevin systems"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Conditional causality rate from source to target for a VOU model file.
    Rate {
        /// Model document with [model], [A], [Sigma] sections.
        model: PathBuf,
        /// Target coordinates, 1-based comma-separated list (e.g. "1").
        #[arg(long)]
        target: String,
        /// Conditioning coordinates; defaults to all remaining coordinates.
        #[arg(long)]
        cond: Option<String>,
        /// Source coordinates, 1-based comma-separated list.
        #[arg(long)]
        source: String,
        /// Also run the subsampling oracle at this interval and print the gap.
        #[arg(long, value_name = "DT")]
        check_oracle: Option<f64>,
        /// Also print the finite-horizon rate F(h)/h.
        #[arg(long, value_name = "H")]
        horizon: Option<f64>,
        /// Multiply Sigma by this factor before computing (rates are invariant).
        #[arg(long, value_name = "NU")]
        scale: Option<f64>,
        /// Write the model (post --scale) back out; re-parses bitwise.
        #[arg(long, value_name = "FILE")]
        dump_model: Option<PathBuf>,
        /// Also write the run manifest to this file.
        #[arg(long, value_name = "FILE")]
        manifest: Option<PathBuf>,
    },
    /// Pairwise-conditional (or unconditional) causal graph of a VOU model.
    Graph {
        model: PathBuf,
        /// Unconditional rates instead of pairwise-conditional ones.
        #[arg(long)]
        unconditional: bool,
        /// CSV output instead of an aligned table.
        #[arg(long)]
        csv: bool,
        #[arg(long, value_name = "FILE")]
        manifest: Option<PathBuf>,
    },
    /// Causality/stability map along a simulated trajectory (CSV stream).
    Map(MapArgs),
    /// Stability map only: shorthand for `map --analysis stability`.
    Stability(MapArgs),
    /// Convergence table of the subsampling oracle against the analytic rate.
    OracleCheck {
        model: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long)]
        cond: Option<String>,
        #[arg(long)]
        source: String,
        /// Comma-separated subsampling intervals.
        #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-3,1e-4")]
        dt_list: Vec<f64>,
        #[arg(long, value_name = "FILE")]
        manifest: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct MapArgs {
    /// System-definition document; omit when using --builtin.
    system: Option<PathBuf>,
    /// Built-in analytic system.
    #[arg(long, value_enum)]
    builtin: Option<Builtin>,
    /// Lorenz parameters, used with --builtin lorenz.
    #[arg(long, default_value_t = 10.0)]
    sigma: f64,
    #[arg(long, default_value_t = 28.0)]
    rho: f64,
    #[arg(long, default_value_t = 8.0 / 3.0)]
    beta: f64,
    /// Isotropic diffusion level nu for --builtin lorenz.
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    /// Total simulated time, including the transient.
    #[arg(long)]
    duration: f64,
    /// Sampling interval.
    #[arg(long)]
    dt: f64,
    /// Initial time span discarded before sampling.
    #[arg(long, default_value_t = 0.0)]
    transient: f64,
    /// Initial state, comma-separated (defaults to all ones).
    #[arg(long)]
    y0: Option<String>,
    /// Integrate the SDE (Euler-Maruyama) instead of the noiseless ODE.
    #[arg(long)]
    sde: bool,
    /// RNG seed for --sde.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Which rates to compute at each sample.
    #[arg(long, value_enum, default_value_t = AnalysisKind::Graph)]
    analysis: AnalysisKind,
    /// Partition flags for --analysis rate.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    cond: Option<String>,
    #[arg(long)]
    source: Option<String>,
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    Lorenz,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum AnalysisKind {
    Graph,
    Rate,
    Stability,
}

fn main() {
    let cli = Cli::parse();
    let started = Instant::now();
    let command_line: Vec<String> = std::env::args().collect();
    let mut manifest = RunManifest::new(command_line.join(" "));
    let result = match cli.cmd {
        Cmd::Rate {
            model,
            target,
            cond,
            source,
            check_oracle,
            horizon,
            scale,
            dump_model,
            manifest: mpath,
        } => cmd_rate(
            &model,
            &target,
            cond.as_deref(),
            &source,
            check_oracle,
            horizon,
            scale,
            dump_model.as_deref(),
            mpath.as_deref(),
            &mut manifest,
        ),
        Cmd::Graph {
            model,
            unconditional,
            csv,
            manifest: mpath,
        } => cmd_graph(&model, unconditional, csv, mpath.as_deref(), &mut manifest),
        Cmd::Map(args) => cmd_map(&args, None, &mut manifest),
        Cmd::Stability(args) => cmd_map(&args, Some(AnalysisKind::Stability), &mut manifest),
        Cmd::OracleCheck {
            model,
            target,
            cond,
            source,
            dt_list,
            manifest: mpath,
        } => cmd_oracle_check(
            &model,
            &target,
            cond.as_deref(),
            &source,
            &dt_list,
            mpath.as_deref(),
            &mut manifest,
        ),
    };
    manifest.elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    eprint!("{}", manifest.render());
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

/// Full-precision decimal: 17 significant digits round-trip any f64.
fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parse a 1-based comma-separated index list into sorted 0-based indices.
fn parse_indices(s: &str, what: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for tok in s.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        let k: usize = tok.parse().map_err(|_| {
            Error::Validation(format!("invalid {what} index `{tok}` (1-based integer)"))
        })?;
        if k == 0 {
            return Err(Error::Validation(format!(
                "{what} index 0 is invalid; indices are 1-based"
            )));
        }
        out.push(k - 1);
    }
    out.sort_unstable();
    Ok(out)
}

fn build_partition(
    n: usize,
    target: &str,
    cond: Option<&str>,
    source: &str,
) -> Result<Partition> {
    let target = parse_indices(target, "target")?;
    let source = parse_indices(source, "source")?;
    let cond = match cond {
        Some(c) => parse_indices(c, "cond")?,
        None => (0..n)
            .filter(|i| !target.contains(i) && !source.contains(i))
            .collect(),
    };
    Partition::new(n, target, cond, source)
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(Error::Io)
}

fn matrix_lines(name: &str, m: &nalgebra::DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt17(m[(i, j)])).collect();
        out.push_str(&format!("{name}[{}] = {}\n", i + 1, row.join(" ")));
    }
    out
}

fn write_manifest(path: Option<&Path>, manifest: &RunManifest) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, manifest.render())?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_rate(
    model_path: &Path,
    target: &str,
    cond: Option<&str>,
    source: &str,
    check_oracle: Option<f64>,
    horizon: Option<f64>,
    scale: Option<f64>,
    dump_model: Option<&Path>,
    manifest_path: Option<&Path>,
    manifest: &mut RunManifest,
) -> Result<()> {
    let text = read_to_string(model_path)?;
    manifest.record_input("model", text.as_bytes());
    let mut model = parse_vou_model(&text)?;
    if let Some(nu) = scale {
        model = model.scaled_sigma(nu)?;
    }
    let part = build_partition(model.dim(), target, cond, source)?;
    let r = conditional_rate(&model, &part)?;

    println!("rate = {:.6}", r.rate);
    println!("te_rate = {:.6}", r.te_rate);
    println!("rate_full = {}", fmt17(r.rate));
    println!("te_rate_full = {}", fmt17(r.te_rate));
    println!("closed_loop_max_re = {}", fmt17(r.closed_loop_max_re));
    println!("riccati_residual = {}", fmt17(r.residual));
    println!("detectable = {}", r.flags.detectable);
    println!("source_decoupled = {}", r.flags.source_decoupled);
    println!("marginal = {}", r.flags.marginal);
    print!("{}", matrix_lines("P33", &r.p33));
    print!("{}", matrix_lines("K", &r.kalman_gain));

    if let Some(h) = horizon {
        let f = finite_horizon_gc(&model, &part, h)?;
        println!("finite_horizon_rate = {}", fmt17(f / h));
    }
    if let Some(dt) = check_oracle {
        let est = rate_via_subsampling(&model, &part, dt)?;
        let gap = (est - r.rate).abs() / r.rate.abs().max(f64::MIN_POSITIVE);
        println!("oracle_rate = {}", fmt17(est));
        println!("oracle_rel_gap = {}", fmt17(gap));
    }
    if let Some(path) = dump_model {
        std::fs::write(path, dump_vou_model(&model))?;
    }
    write_manifest(manifest_path, manifest)
}

fn graph_cell(g: &GcGraph, i: usize, j: usize, csv: bool) -> String {
    match g.entry(i, j) {
        GraphEntry::Diagonal => "—".to_string(),
        GraphEntry::Rate(r) => {
            if csv {
                fmt17(*r)
            } else {
                format!("{r:.6}")
            }
        }
        GraphEntry::Failed(_) => "NA".to_string(),
    }
}

fn cmd_graph(
    model_path: &Path,
    unconditional: bool,
    csv: bool,
    manifest_path: Option<&Path>,
    manifest: &mut RunManifest,
) -> Result<()> {
    let text = read_to_string(model_path)?;
    manifest.record_input("model", text.as_bytes());
    let model = parse_vou_model(&text)?;
    let g = if unconditional {
        unconditional_graph(&model)?
    } else {
        pairwise_graph(&model)?
    };
    let n = g.dim();
    if csv {
        let header: Vec<String> = (1..=n).map(|j| format!("from_y{j}")).collect();
        println!("to,{}", header.join(","));
        for i in 0..n {
            let cells: Vec<String> = (0..n).map(|j| graph_cell(&g, i, j, true)).collect();
            println!("y{},{}", i + 1, cells.join(","));
        }
    } else {
        let width = 12;
        let header: Vec<String> = (1..=n).map(|j| format!("{:>width$}", format!("y{j}"))).collect();
        println!("{:>6} {}", "to\\fr", header.join(" "));
        for i in 0..n {
            let cells: Vec<String> = (0..n)
                .map(|j| format!("{:>width$}", graph_cell(&g, i, j, false)))
                .collect();
            println!("{:>6} {}", format!("y{}", i + 1), cells.join(" "));
        }
    }
    for i in 0..n {
        for j in 0..n {
            if let GraphEntry::Failed(msg) = g.entry(i, j) {
                eprintln!("warning: entry ({}, {}) failed: {msg}", i + 1, j + 1);
            }
        }
    }
    write_manifest(manifest_path, manifest)
}

fn load_map_system(args: &MapArgs, manifest: &mut RunManifest) -> Result<LangevinSystem> {
    match (&args.builtin, &args.system) {
        (Some(Builtin::Lorenz), None) => builtin_lorenz(args.sigma, args.rho, args.beta, args.nu),
        (None, Some(path)) => {
            let text = read_to_string(path)?;
            manifest.record_input("system", text.as_bytes());
            parse_system(&text)
        }
        (Some(_), Some(_)) => Err(Error::Validation(
            "give either a system file or --builtin, not both".into(),
        )),
        (None, None) => Err(Error::Validation(
            "a system file or --builtin is required".into(),
        )),
    }
}

fn parse_y0(spec: Option<&str>, n: usize) -> Result<Vec<f64>> {
    match spec {
        None => Ok(vec![1.0; n]),
        Some(s) => {
            let mut out = Vec::new();
            for tok in s.split(',') {
                let v: f64 = tok.trim().parse().map_err(|_| {
                    Error::Validation(format!("invalid y0 component `{}`", tok.trim()))
                })?;
                out.push(v);
            }
            if out.len() != n {
                return Err(Error::Validation(format!(
                    "y0 has {} components for dimension {n}",
                    out.len()
                )));
            }
            Ok(out)
        }
    }
}

fn cmd_map(
    args: &MapArgs,
    force_kind: Option<AnalysisKind>,
    manifest: &mut RunManifest,
) -> Result<()> {
    let kind = force_kind.unwrap_or(args.analysis);
    let system = load_map_system(args, manifest)?;
    let n = system.dim();
    let y0 = parse_y0(args.y0.as_deref(), n)?;

    manifest.integrator = Some(if args.sde {
        format!("euler-maruyama substeps={SUBSTEPS}")
    } else {
        format!("rk4 substeps={SUBSTEPS}")
    });
    if args.sde {
        manifest.seed = Some(args.seed);
        manifest.rng = Some(RNG_ALGORITHM.to_string());
    }

    let traj: Trajectory = if args.sde {
        integrate_sde(&system, &y0, args.duration, args.dt, args.transient, args.seed)?
    } else {
        integrate_ode(&system, &y0, args.duration, args.dt, args.transient)?
    };

    let ycols: Vec<String> = (1..=n).map(|k| format!("y{k}")).collect();
    let base_header = format!("t,{},lambda,detJ,singular", ycols.join(","));

    if kind == AnalysisKind::Stability {
        println!("{base_header}");
        let rows = stability_map(&system, &traj.states)?;
        for (t, (p, lambda, det, singular)) in traj.times.iter().zip(&rows) {
            println!("{}", stability_row(*t, p, *lambda, *det, *singular));
        }
        return write_manifest(args.manifest.as_deref(), manifest);
    }

    let analysis = match kind {
        AnalysisKind::Graph => MapAnalysis::Graph,
        AnalysisKind::Rate => {
            let target = args.target.as_deref().ok_or_else(|| {
                Error::Validation("--analysis rate requires --target and --source".into())
            })?;
            let source = args.source.as_deref().ok_or_else(|| {
                Error::Validation("--analysis rate requires --target and --source".into())
            })?;
            MapAnalysis::Partition(build_partition(n, target, args.cond.as_deref(), source)?)
        }
        AnalysisKind::Stability => unreachable!(),
    };

    let value_cols: Vec<String> = match &analysis {
        MapAnalysis::Graph => {
            let mut cols = Vec::new();
            for i in 1..=n {
                for j in 1..=n {
                    if i != j {
                        cols.push(format!("G_{i}_{j}"));
                    }
                }
            }
            cols
        }
        MapAnalysis::Partition(_) => vec!["rate".to_string()],
    };
    println!("{base_header},{}", value_cols.join(","));

    let samples = gc_map(&system, &traj.states, &analysis);
    for (t, s) in traj.times.iter().zip(&samples) {
        let mut row = stability_row(*t, &s.point, s.lambda, s.det_j, s.singular);
        match &s.values {
            Ok(SampleValues::Graph(g)) => {
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            row.push(',');
                            row.push_str(&match g.rate(i, j) {
                                Some(r) => fmt17(r),
                                None => "NA".to_string(),
                            });
                        }
                    }
                }
            }
            Ok(SampleValues::Rate(r)) => {
                row.push(',');
                row.push_str(&fmt17(*r));
            }
            Err(_) => {
                for _ in &value_cols {
                    row.push_str(",NA");
                }
            }
        }
        println!("{row}");
    }
    for s in &samples {
        if let Err(msg) = &s.values {
            eprintln!("warning: point {:?} failed: {msg}", s.point.as_slice());
        }
    }

    let global = global_rate(&samples, &analysis)?;
    match &global.values {
        GlobalValues::Graph(means) => {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        println!(
                            "# global G_{}_{} = {}",
                            i + 1,
                            j + 1,
                            fmt17(means[(i, j)])
                        );
                    }
                }
            }
        }
        GlobalValues::Rate(r) => println!("# global rate = {}", fmt17(*r)),
    }
    println!("# excluded_fraction = {}", fmt17(global.excluded_fraction));
    write_manifest(args.manifest.as_deref(), manifest)
}

fn stability_row(t: f64, p: &DVector<f64>, lambda: f64, det: f64, singular: bool) -> String {
    let coords: Vec<String> = p.iter().map(|v| fmt17(*v)).collect();
    format!(
        "{},{},{},{},{}",
        fmt17(t),
        coords.join(","),
        fmt17(lambda),
        fmt17(det),
        u8::from(singular)
    )
}

fn cmd_oracle_check(
    model_path: &Path,
    target: &str,
    cond: Option<&str>,
    source: &str,
    dt_list: &[f64],
    manifest_path: Option<&Path>,
    manifest: &mut RunManifest,
) -> Result<()> {
    let text = read_to_string(model_path)?;
    manifest.record_input("model", text.as_bytes());
    let model = parse_vou_model(&text)?;
    let part = build_partition(model.dim(), target, cond, source)?;
    let analytic = conditional_rate(&model, &part)?.rate;

    println!("dt,estimate,analytic,rel_error");
    let mut log_pts = Vec::new();
    for &dt in dt_list {
        let est = rate_via_subsampling(&model, &part, dt)?;
        let err = (est - analytic).abs() / analytic.abs().max(f64::MIN_POSITIVE);
        println!(
            "{},{},{},{}",
            fmt17(dt),
            fmt17(est),
            fmt17(analytic),
            fmt17(err)
        );
        if err > 0.0 && analytic != 0.0 {
            log_pts.push((dt.ln(), err.ln()));
        }
    }
    match fit_slope(&log_pts) {
        Some(slope) => println!("# slope = {}", fmt17(slope)),
        None => println!("# slope = NA"),
    }
    write_manifest(manifest_path, manifest)
}

/// Least-squares slope of y against x; None with fewer than two points.
fn fit_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = pts.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}
