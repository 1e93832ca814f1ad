use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use cyclic_momentum::bench::{
    self, heatmap, heatmap_defaults, parse_config, read_vector_csv, write_heatmap_csv, BenchError, BenchResult,
};
use cyclic_momentum::{
    check_equioscillation, check_strong_optimality, gap_params, rate_report, solve_sigma_lp,
    two_interval_fit, tune_general, tune_k2, tune_phb, CycleParams, SpectrumSet,
};

#[derive(Parser)]
#[command(name = "cyclic-momentum", version, about = "Cyclical heavy ball: rates, tuning and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal cycle for a spectrum; prints params JSON.
    Tune(TuneArgs),
    /// Worst-case rate of given parameters on a spectrum.
    Rate(RateArgs),
    /// Minimax link polynomials with optimality certificates.
    Sigma(SigmaArgs),
    /// Heatmap of two-step rates over (h0, h1).
    Sweep(SweepArgs),
    /// Full experiment from a JSON config.
    Bench(BenchArgs),
    /// Fit a two-interval support to an eigenvalue CSV.
    Spectrum(SpectrumArgs),
}

#[derive(Args)]
struct TuneArgs {
    /// Intervals as "a,b;c,d" or JSON "[[a,b],[c,d]]".
    #[arg(long)]
    spectrum: String,
    /// Cycle length; 2 uses the closed form when the intervals have equal length.
    #[arg(long, short = 'k', default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 2000)]
    lp_points: usize,
}

#[derive(Args)]
struct RateArgs {
    #[arg(long)]
    spectrum: String,
    /// Comma-separated step-sizes.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    h: Vec<f64>,
    #[arg(long)]
    m: f64,
}

#[derive(Args)]
struct SigmaArgs {
    #[arg(long)]
    spectrum: String,
    /// Cycle lengths to scan, e.g. "3" or "1..4".
    #[arg(long, short = 'k', default_value = "1..4")]
    k: String,
    #[arg(long, default_value_t = 2000)]
    lp_points: usize,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    spectrum: String,
    #[arg(long, default_value_t = 200)]
    grid: usize,
    /// Momentum; defaults to the optimal two-step momentum.
    #[arg(long)]
    m: Option<f64>,
    /// Largest step on each axis; defaults to 2(1+m)/L1.
    #[arg(long)]
    h_max: Option<f64>,
    #[arg(long, default_value = "heatmap.csv")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    lp_points: Option<usize>,
}

#[derive(Args)]
struct SpectrumArgs {
    /// One-column eigenvalue CSV.
    #[arg(long)]
    eigs: PathBuf,
}

fn parse_spectrum(s: &str) -> BenchResult<SpectrumSet> {
    let t = s.trim();
    let intervals: Vec<(f64, f64)> = if t.starts_with('[') {
        serde_json::from_str(t).map_err(|e| BenchError::Validation(format!("spectrum: {e}")))?
    } else {
        t.split(';')
            .map(|part| {
                let v: Vec<f64> = part
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| BenchError::Validation(format!("spectrum: bad interval {part:?}")))?;
                match v[..] {
                    [a, b] => Ok((a, b)),
                    _ => Err(BenchError::Validation(format!("spectrum: bad interval {part:?}"))),
                }
            })
            .collect::<BenchResult<_>>()?
    };
    Ok(SpectrumSet::new(intervals)?)
}

fn parse_k_range(s: &str) -> BenchResult<Vec<usize>> {
    let bad = || BenchError::Validation(format!("bad K range {s:?}"));
    let ks: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<BenchResult<_>>()?
    };
    if ks.is_empty() || ks.contains(&0) {
        return Err(bad());
    }
    Ok(ks)
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn tune(a: TuneArgs) -> BenchResult<()> {
    let spec = parse_spectrum(&a.spectrum)?;
    let (params, rate) = if a.k == 2 && gap_params(&spec).is_ok() && spec.len() == 2 {
        let p = tune_k2(&spec)?;
        let r = rate_report(&p, &spec)?.rate_factor;
        (p, r)
    } else if a.k == 1 {
        let p = tune_phb(spec.mu(), spec.l())?;
        let r = rate_report(&p, &spec)?.rate_factor;
        (p, r)
    } else {
        let g = tune_general(&spec, a.k, a.lp_points)?;
        (g.params, g.report.rate_factor)
    };
    print_json(&json!({"K": params.k(), "m": params.m, "h": params.h, "rate": rate}));
    Ok(())
}

fn rate(a: RateArgs) -> BenchResult<()> {
    let spec = parse_spectrum(&a.spectrum)?;
    let p = CycleParams::new(a.h, a.m)?;
    print_json(&rate_report(&p, &spec)?);
    Ok(())
}

fn sigma(a: SigmaArgs) -> BenchResult<()> {
    let spec = parse_spectrum(&a.spectrum)?;
    let mut rows = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for k in parse_k_range(&a.k)? {
        let p = solve_sigma_lp(&spec, k, a.lp_points)?;
        let s0 = p.eval(0.0);
        let rate = (s0 - (s0 * s0 - 1.0).max(0.0).sqrt()).powf(1.0 / k as f64);
        let eq = check_equioscillation(&p, &spec, a.tol);
        let strong = check_strong_optimality(&p, &spec, a.tol);
        // smallest K among the minimizers
        if best.is_none_or(|(_, r)| rate < r * (1.0 - 1e-9)) {
            best = Some((k, rate));
        }
        rows.push(json!({
            "K": k,
            "coefficients": p.coeffs(),
            "sigma_at_zero": s0,
            "rate": rate,
            "equioscillation": eq.ok,
            "alternation_points": eq.points.len(),
            "strong_optimality": strong,
        }));
    }
    print_json(&json!({"polynomials": rows, "best_K": best.map(|b| b.0)}));
    Ok(())
}

fn sweep(a: SweepArgs) -> BenchResult<()> {
    let spec = parse_spectrum(&a.spectrum)?;
    if a.grid < 2 || a.jobs == 0 {
        return Err(BenchError::Validation("grid must be at least 2 and jobs positive".into()));
    }
    let (m0, hmax0) = heatmap_defaults(&spec)?;
    let m = a.m.unwrap_or(m0);
    let h_max = a.h_max.unwrap_or(hmax0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| BenchError::Io(e.to_string()))?;
    let cells = pool.install(|| heatmap(&spec, m, h_max, a.grid))?;
    write_heatmap_csv(&a.out, &cells)?;
    let best = cells.iter().min_by(|x, y| x.rate.total_cmp(&y.rate)).expect("non-empty grid");
    print_json(&json!({"m": m, "h_max": h_max, "best": best, "output": a.out}));
    Ok(())
}

fn override_field<T: PartialEq + std::fmt::Debug + Copy>(name: &str, flag: Option<T>, cfg: T) {
    if let Some(f) = flag {
        if f != cfg {
            log::warn!("--{name}={f:?} ignored: config sets {cfg:?}");
        }
    }
}

fn run_bench(a: BenchArgs) -> BenchResult<()> {
    let cfg = parse_config(&a.config)?;
    // the config file wins on conflicts
    let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&a.config)?)
        .map_err(|e| BenchError::Io(e.to_string()))?;
    let has = |k: &str| raw.get(k).is_some();
    let mut cfg = cfg;
    macro_rules! merge {
        ($flag:expr, $key:literal, $field:expr) => {
            if has($key) {
                override_field($key, $flag, $field);
            } else if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    merge!(a.t, "T", cfg.t);
    merge!(a.burn_in, "burn_in", cfg.burn_in);
    merge!(a.jobs, "jobs", cfg.jobs);
    merge!(a.lp_points, "lp_points", cfg.lp_points);
    if let Some(dir) = a.output_dir {
        if has("output_dir") {
            if dir != cfg.output_dir {
                log::warn!("--output-dir ignored: config sets {}", cfg.output_dir.display());
            }
        } else {
            cfg.output_dir = dir;
        }
    }
    cfg.validate()?;
    let outcome = bench::run_experiment(&cfg)?;
    for f in &outcome.files {
        println!("{}", f.display());
    }
    for fail in &outcome.failures {
        eprintln!("warning: {}: {}", fail.method, fail.error);
    }
    Ok(())
}

fn spectrum(a: SpectrumArgs) -> BenchResult<()> {
    let eigs = read_vector_csv(&a.eigs)?;
    let spec = two_interval_fit(&eigs)?;
    print_json(&json!({"spectrum": spec, "gap": gap_params(&spec).ok(), "count": eigs.len()}));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let r = match cli.command {
        Command::Tune(a) => tune(a),
        Command::Rate(a) => rate(a),
        Command::Sigma(a) => sigma(a),
        Command::Sweep(a) => sweep(a),
        Command::Bench(a) => run_bench(a),
        Command::Spectrum(a) => spectrum(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
