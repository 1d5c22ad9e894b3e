use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use wavegrad::field::{load_field_csv, load_image_pgm};
use wavegrad::harness::{
    self, alpha_sweep, binned_oracle, compare_estimators, complexity_bench, decay_check, halving,
    n_rate_1d, spa_agreement, tau_sweep, BenchConfig, CompareConfig, ErrorMask, SweepReport,
    COMPARISON_EXTENT,
};
use wavegrad::hog::{auto_tau, finite_difference_bound, image_gradient_density, orientation_histogram};
use wavegrad::wavefn::{
    check_nyquist, choose_tau, nyquist_range, power_spectrum_density_with, SpectrumOptions, DEFAULT_MARGIN,
};
use wavegrad::{catalog, sample_field, BallRegion, BinGrid, GradientDensity, GridSpec, ScalarField, Tau, TestFunction};

#[derive(Parser, Debug)]
#[command(name = "wavegrad", version, about = "Gradient densities from scalar fields via the power spectrum of exp(iS/tau)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Power-spectrum density of a catalog function, field file, or image.
    Estimate(EstimateArgs),
    /// Bin-averaged analytic density of a catalog function.
    Oracle(OracleArgs),
    /// All estimators side by side, with pairwise L1 distances.
    Compare(CompareArgs),
    /// Convergence sweeps over tau, alpha, or N.
    Sweep(SweepArgs),
    /// Timing of the FFT estimator against direct characteristic-function summation.
    Bench(BenchArgs),
    /// Gradient density and orientation histogram of a PGM image.
    Hog(HogArgs),
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct Source {
    /// Catalog function name.
    #[arg(long = "fn", value_name = "NAME")]
    function: Option<String>,
    /// Field CSV file.
    #[arg(long)]
    field: Option<PathBuf>,
    /// PGM image.
    #[arg(long)]
    image: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug)]
enum TauArg {
    Auto,
    Value(f64),
}

fn parse_tau(s: &str) -> std::result::Result<TauArg, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(TauArg::Auto);
    }
    s.parse::<f64>()
        .map(TauArg::Value)
        .map_err(|_| format!("expected a number or `auto`, got `{s}`"))
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    source: Source,
    /// Samples per axis for catalog functions.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value = "auto", value_parser = parse_tau)]
    tau: TauArg,
    /// Rebin onto this many bins per axis over +/- 1.3 x the gradient bound.
    #[arg(long)]
    bins: Option<usize>,
    /// Raised-cosine taper on the outer 5% of each axis.
    #[arg(long)]
    taper: bool,
    /// Intensity scale for images.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long = "fn", value_name = "NAME")]
    function: String,
    #[arg(long, default_value_t = harness::COMPARISON_BINS)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = harness::COMPARISON_BINS)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo draws.
    #[arg(long, default_value_t = 10_000_000)]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SweepKindArg {
    Tau,
    Alpha,
    N,
    Decay,
    Spa,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum)]
    kind: SweepKindArg,
    #[arg(long = "fn", value_name = "NAME")]
    function: String,
    /// Samples per axis (ignored by `--kind n`).
    #[arg(long)]
    n: Option<usize>,
    /// Starting tau for halving sweeps, or the fixed tau of an alpha sweep.
    #[arg(long, value_parser = parse_tau)]
    tau: Option<TauArg>,
    /// Number of tau halvings.
    #[arg(long, default_value_t = 8)]
    steps: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    u0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// `tau = c_tau / N` for `--kind n`; defaults to the smallest Nyquist-safe value.
    #[arg(long)]
    c_tau: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value_t = harness::BENCH_REPEATS)]
    repeats: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct HogArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value = "auto", value_parser = parse_tau)]
    tau: TauArg,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Orientation sectors for the polar rebin.
    #[arg(long)]
    orient_bins: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    taper: bool,
    #[arg(long)]
    out: PathBuf,
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot write into {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.persist(&path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

fn write_density(dir: &Path, name: &str, density: &GradientDensity) -> Result<PathBuf> {
    let mut buf = Vec::new();
    density.write_csv(&mut buf)?;
    write_atomic(dir, name, &buf)
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

#[derive(Serialize)]
struct Verdict<'a> {
    command: &'a str,
    gates: BTreeMap<String, bool>,
    pass: bool,
}

/// Writes `verdict.json` and maps the outcome to an exit code.
fn finish(dir: &Path, command: &str, gates: BTreeMap<String, bool>) -> Result<ExitCode> {
    let pass = gates.values().all(|g| *g);
    write_json(dir, "verdict.json", &Verdict { command, gates, pass })?;
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn default_n(d: usize) -> usize {
    match d {
        1 => 4096,
        2 => 256,
        _ => 32,
    }
}

struct Loaded {
    label: String,
    field: ScalarField,
    function: Option<TestFunction>,
    grad_bound: f64,
}

fn load_source(source: &Source, n: Option<usize>, scale: f64) -> Result<Loaded> {
    if let Some(name) = &source.function {
        let f = catalog(name)?;
        let grid = GridSpec::uniform(f.dim(), n.unwrap_or_else(|| default_n(f.dim())))?;
        let field = sample_field(&f, f.domain(), &grid)?;
        return Ok(Loaded {
            label: name.clone(),
            field,
            grad_bound: f.grad_bound(),
            function: Some(f),
        });
    }
    let (label, field) = if let Some(path) = &source.field {
        (path.display().to_string(), load_field_csv(path)?)
    } else if let Some(path) = &source.image {
        (path.display().to_string(), load_image_pgm(path, scale)?)
    } else {
        bail!("one of --fn, --field, --image is required");
    };
    let grad_bound = finite_difference_bound(&field)?;
    Ok(Loaded {
        label,
        field,
        function: None,
        grad_bound,
    })
}

fn resolve_tau(tau: TauArg, loaded: &Loaded) -> Result<Tau> {
    Ok(match tau {
        TauArg::Value(t) => Tau::new(t)?,
        TauArg::Auto if loaded.function.is_some() => choose_tau(&loaded.field, loaded.grad_bound, DEFAULT_MARGIN)?,
        TauArg::Auto => auto_tau(&loaded.field, 1.0)?,
    })
}

fn cube_grid(d: usize, bound: f64, bins: usize) -> Result<BinGrid> {
    let r = COMPARISON_EXTENT * if bound > 0.0 { bound } else { 1.0 };
    Ok(BinGrid::cube(d, -r, r, bins)?)
}

fn cmd_estimate(args: &EstimateArgs) -> Result<ExitCode> {
    let loaded = load_source(&args.source, args.n, args.scale)?;
    let field = &loaded.field;
    let tau = resolve_tau(args.tau, &loaded)?;
    check_nyquist(field.domain(), field.grid(), tau, loaded.grad_bound).with_context(|| {
        format!(
            "tau = {} cannot represent gradients up to {}; increase tau or the sample count",
            tau.value(),
            loaded.grad_bound
        )
    })?;
    let options = SpectrumOptions { taper: args.taper };
    let mut density = power_spectrum_density_with(field, tau, &options)?;
    let pre = density.diagnostics.pre_norm_mass.unwrap_or(1.0);
    if let Some(bins) = args.bins {
        density = density.rebin(&cube_grid(field.dim(), loaded.grad_bound, bins)?)?;
    }
    prepare_out(&args.out)?;
    write_density(&args.out, "density.csv", &density)?;
    write_json(
        &args.out,
        "metadata.json",
        &json!({
            "source": loaded.label,
            "dim": field.dim(),
            "n": field.grid().n(),
            "tau": tau.value(),
            "grad_bound": loaded.grad_bound,
            "nyquist_range": nyquist_range(field.domain(), field.grid(), tau),
            "pre_norm_mass": pre,
            "pre_norm_deviation": (pre - 1.0).abs(),
            "taper": args.taper,
        }),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(args: &OracleArgs) -> Result<ExitCode> {
    let f = catalog(&args.function)?;
    let grid = cube_grid(f.dim(), f.grad_bound(), args.bins)?;
    let oracle = binned_oracle(&f, f.domain(), &grid)?;
    let mask = ErrorMask::of(&oracle);
    prepare_out(&args.out)?;
    write_density(&args.out, "oracle.csv", &oracle)?;
    write_json(
        &args.out,
        "metadata.json",
        &json!({
            "source": args.function,
            "bins": args.bins,
            "masked_fraction": mask.masked_fraction(),
            "masked_bins": mask.flags().iter().enumerate().filter(|(_, m)| **m).map(|(k, _)| grid.center(k)).collect::<Vec<_>>(),
        }),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(args: &CompareArgs) -> Result<ExitCode> {
    if args.source.image.is_some() {
        bail!("compare needs a catalog function; for images use the `hog` subcommand");
    }
    let Some(name) = &args.source.function else {
        bail!("compare needs a catalog function (--fn) because the oracles use analytic gradients");
    };
    let f = catalog(name)?;
    let mut cfg = CompareConfig::for_dim(f.dim());
    if let Some(n) = args.n {
        cfg.n = n;
    }
    cfg.bins = args.bins;
    cfg.seed = args.seed;
    cfg.monte_carlo_samples = args.samples;
    let cmp = compare_estimators(&f, f.domain(), &cfg)?;
    prepare_out(&args.out)?;
    write_json(&args.out, "comparison.json", &cmp)?;
    let mut gates = BTreeMap::new();
    gates.insert("pairwise_l1".to_string(), cmp.pass);
    gates.insert("masked_fraction".to_string(), cmp.masked_fraction <= 0.05);
    finish(&args.out, "compare", gates)
}

fn sweep_report(args: &SweepArgs) -> Result<SweepReport> {
    let f = catalog(&args.function)?;
    let d = f.dim();
    let domain = f.domain();
    let bound = f.grad_bound();
    let u0 = |default: f64| -> Result<Vec<f64>> {
        let u = args.u0.clone().unwrap_or_else(|| vec![default * bound; d]);
        if u.len() != d {
            bail!("--u0 needs {d} components for {}", args.function);
        }
        Ok(u)
    };
    let n = args.n.unwrap_or(match d {
        1 => 1 << 16,
        2 => 512,
        _ => 64,
    });
    let grid = GridSpec::uniform(d, n)?;
    let tau0 = |field: &ScalarField| -> Result<f64> {
        Ok(match args.tau {
            Some(TauArg::Value(t)) => t,
            Some(TauArg::Auto) => choose_tau(field, bound, DEFAULT_MARGIN)?.value(),
            None => 0.01,
        })
    };
    let taus = |field: &ScalarField| -> Result<Vec<f64>> { Ok(halving(tau0(field)?, args.steps)) };
    Ok(match args.kind {
        SweepKindArg::Tau => {
            let field = sample_field(&f, domain, &grid)?;
            let region = BallRegion::new(u0(0.3)?, args.alpha)?;
            tau_sweep(&f, domain, &grid, &taus(&field)?, &region)?
        }
        SweepKindArg::Alpha => {
            let field = sample_field(&f, domain, &grid)?;
            let tau = match args.tau {
                Some(TauArg::Value(t)) => Tau::new(t)?,
                _ => choose_tau(&field, bound, DEFAULT_MARGIN)?,
            };
            let alphas: Vec<f64> = [8.0, 4.0, 2.0, 1.0].iter().map(|k| k * args.alpha).collect();
            alpha_sweep(&f, domain, &grid, tau, &u0(0.0)?, &alphas)?
        }
        SweepKindArg::N => {
            let ns: Vec<usize> = (10..=16).map(|k| 1usize << k).collect();
            let width = domain.max_width();
            let c_tau = args
                .c_tau
                .unwrap_or(DEFAULT_MARGIN * bound * width / std::f64::consts::PI);
            n_rate_1d(&f, domain, &ns, c_tau)?
        }
        SweepKindArg::Decay => {
            let field = sample_field(&f, domain, &grid)?;
            decay_check(&f, domain, &grid, &u0(1.5)?, &taus(&field)?)?
        }
        SweepKindArg::Spa => {
            let field = sample_field(&f, domain, &grid)?;
            spa_agreement(&f, domain, &grid, &u0(0.3)?, &taus(&field)?)?
        }
    })
}

fn cmd_sweep(args: &SweepArgs) -> Result<ExitCode> {
    let report = sweep_report(args)?;
    prepare_out(&args.out)?;
    write_json(&args.out, "report.json", &report)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write_atomic(&args.out, "report.csv", &csv)?;
    let mut gates = BTreeMap::new();
    if let Some(pass) = report.pass {
        gates.insert(report.kind.as_str().to_string(), pass);
    }
    finish(&args.out, "sweep", gates)
}

fn cmd_bench(args: &BenchArgs) -> Result<ExitCode> {
    let cfg = BenchConfig {
        repeats: args.repeats,
        ..BenchConfig::default()
    };
    let summary = complexity_bench(&cfg)?;
    prepare_out(&args.out)?;
    write_json(&args.out, "bench.json", &summary)?;
    for (name, report) in [("wavefn.csv", &summary.wavefn), ("charfn.csv", &summary.charfn)] {
        let mut csv = Vec::new();
        report.write_csv(&mut csv)?;
        write_atomic(&args.out, name, &csv)?;
    }
    let mut gates = BTreeMap::new();
    gates.insert("wavefn_exponent".to_string(), summary.wavefn.pass == Some(true));
    gates.insert("charfn_linear_in_m".to_string(), summary.charfn.pass == Some(true));
    gates.insert(
        "charfn_slower_head_to_head".to_string(),
        summary.charfn_head_to_head_seconds > summary.wavefn_largest_seconds,
    );
    finish(&args.out, "bench", gates)
}

fn cmd_hog(args: &HogArgs) -> Result<ExitCode> {
    let is_pgm = args
        .image
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if !is_pgm {
        bail!("hog expects a .pgm image, got {}", args.image.display());
    }
    let field = load_image_pgm(&args.image, args.scale)?;
    let bound = finite_difference_bound(&field)?;
    let tau = match args.tau {
        TauArg::Value(t) => Tau::new(t)?,
        TauArg::Auto => auto_tau(&field, args.scale)?,
    };
    let options = SpectrumOptions { taper: args.taper };
    let mut density = image_gradient_density(&field, tau, &options)?;
    if let Some(bins) = args.bins {
        density = density.rebin(&cube_grid(2, bound, bins)?)?;
    }
    prepare_out(&args.out)?;
    write_density(&args.out, "hog_density.csv", &density)?;
    let orientation = args
        .orient_bins
        .map(|b| orientation_histogram(&density, b))
        .transpose()?;
    if let Some(h) = &orientation {
        write_json(&args.out, "orientation.json", h)?;
    }
    write_json(
        &args.out,
        "metadata.json",
        &json!({
            "source": args.image.display().to_string(),
            "tau": tau.value(),
            "finite_difference_bound": bound,
            "nyquist_range": nyquist_range(field.domain(), field.grid(), tau),
            "pre_norm_mass": density.diagnostics.pre_norm_mass,
            "argmax": density.argmax(),
            "orientation_peak": orientation.as_ref().map(|h| h.peak()),
        }),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Hog(a) => cmd_hog(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
