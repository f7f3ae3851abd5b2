//! Command-line front end: simulation runs, analyses and plot-data emission.
//!
//! Exit codes: 0 success, 1 runtime/analysis failure, 2 usage/config error.
//! All randomness flows from a single --seed flag; when absent, an entropy
//! seed is drawn and echoed in the JSON summary so every run can be
//! reproduced exactly.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pairsim::bell::{self, ChshBasis, CoincidenceTable};
use pairsim::cascade::{self, CascadeStreams, FilterConfig, StreamMode};
use pairsim::corr;
use pairsim::fit;
use pairsim::franson::{self, FransonConfig};
use pairsim::mcwf;
use pairsim::physpar::{self, SystemParams};
use pairsim::ttag::{self, ClickStream, DetectorConfig};
use serde_json::json;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pairsim",
    about = "Cavity-enhanced entangled photon pair simulator and analysis toolkit",
    version
)]
struct Cli {
    /// JSON parameter file (keys g_mhz, kappa_mhz, gamma_mhz, delta_a_mhz,
    /// delta_c_mhz, omega_mhz, eta_total, eta_fiber, delta_ac_mhz).
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    /// Seed for all randomness; drawn from entropy and echoed when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for data files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the closed-form rate budget for the parameter set.
    Rates(RatesArgs),
    /// Generate time-tag streams with the trajectory or cascade engine.
    Simulate(SimulateArgs),
    /// Coincidence histogram and g² of one or two time-tag files.
    G2(G2Args),
    /// Interference curve of the interferometer pair and its visibility fit.
    Franson(FransonArgs),
    /// CHSH parameter from a coincidence table or a simulated run.
    Chsh(ChshArgs),
    /// Cavity-detuning sweep: wavepacket decay times, pair rates and the
    /// detection-efficiency fit.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RatesArgs {
    /// Comma-separated cavity detunings (MHz) for a sweep table.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    delta_c_list: Vec<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation engine.
    #[arg(long, value_parser = ["mcwf", "cascade"])]
    engine: String,
    /// Cascade engine: simulated duration in milliseconds.
    #[arg(long, default_value_t = 100.0)]
    duration_ms: f64,
    /// Cascade engine: emit separate early/late sideband streams.
    #[arg(long)]
    split_sidebands: bool,
    /// Detector efficiency applied to cascade streams.
    #[arg(long, default_value_t = 1.0)]
    efficiency: f64,
    /// Detector timing jitter sigma (ps).
    #[arg(long, default_value_t = 0.0)]
    jitter_ps: f64,
    /// Detector dark count rate (Hz).
    #[arg(long, default_value_t = 0.0)]
    dark_rate_hz: f64,
    /// Detector dead time (ps).
    #[arg(long, default_value_t = 0)]
    dead_time_ps: u64,
    /// Trajectory engine: number of trajectories.
    #[arg(long, default_value_t = 32)]
    n_traj: u64,
    /// Trajectory engine: duration per trajectory (ns).
    #[arg(long, default_value_t = 100_000)]
    traj_ns: u64,
    /// Trajectory engine: cavity Fock truncation.
    #[arg(long, default_value_t = 2)]
    n_max: usize,
}

#[derive(Args)]
struct G2Args {
    /// Time-tag file (TTAG binary). Autocorrelation unless --input-b is
    /// given.
    #[arg(long)]
    input: PathBuf,
    /// Second time-tag file for a cross-correlation (start = input,
    /// stop = input-b).
    #[arg(long)]
    input_b: Option<PathBuf>,
    /// Histogram bin width (ps).
    #[arg(long, default_value_t = 1000)]
    bin_width_ps: i64,
    /// Histogram half range (ps); bins are centered on zero delay.
    #[arg(long, default_value_t = 50_000)]
    tau_max_ps: i64,
}

#[derive(Args)]
struct FransonArgs {
    /// Number of pairs sent through the interferometers per phase point.
    #[arg(long, default_value_t = 200_000)]
    pairs: usize,
    /// Intrinsic interference visibility.
    #[arg(long, default_value_t = 0.926)]
    visibility: f64,
    /// Long-short arm delay (ps).
    #[arg(long, default_value_t = 47_000)]
    delta_t_ps: u64,
    /// Detection-time jitter sigma (ps).
    #[arg(long, default_value_t = 0.0)]
    jitter_ps: f64,
    /// Number of phase points over one 2π period.
    #[arg(long, default_value_t = 13)]
    phi_points: usize,
    /// Also write the raw outcome records of the Φ = 0 point.
    #[arg(long)]
    outcomes: bool,
}

#[derive(Args)]
struct ChshArgs {
    /// Coincidence-table CSV (phi_a_rad,phi_b_rad,counts). When absent, the
    /// table is generated from a simulated interferometer run.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Simulated run: pairs per basis setting.
    #[arg(long, default_value_t = 12_500)]
    pairs_per_setting: usize,
    /// Simulated run: intrinsic visibility.
    #[arg(long, default_value_t = 0.926)]
    visibility: f64,
    /// Simulated run: long-short arm delay (ps).
    #[arg(long, default_value_t = 47_000)]
    delta_t_ps: u64,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated cavity detunings (MHz).
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    delta_c: Vec<f64>,
    /// Pairs sampled per detuning point for the wavepacket fit.
    #[arg(long, default_value_t = 50_000)]
    pairs_per_point: usize,
    /// Relative Gaussian noise applied to the synthetic detected rates.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = cli.seed.unwrap_or_else(rand::random);
    let params = match load_params(cli.params.as_deref()) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let ctx = RunContext { params, seed, seed_given: cli.seed.is_some(), out: cli.out };
    let result = match &cli.command {
        Command::Rates(args) => cmd_rates(&ctx, args),
        Command::Simulate(args) => cmd_simulate(&ctx, args),
        Command::G2(args) => cmd_g2(&ctx, args),
        Command::Franson(args) => cmd_franson(&ctx, args),
        Command::Chsh(args) => cmd_chsh(&ctx, args),
        Command::Sweep(args) => cmd_sweep(&ctx, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

struct RunContext {
    params: SystemParams,
    seed: u64,
    seed_given: bool,
    out: Option<PathBuf>,
}

impl RunContext {
    /// Resolved configuration echoed into every JSON summary.
    fn config_json(&self, command: &str) -> serde_json::Value {
        json!({
            "command": command,
            "params": self.params.to_json_value(),
            "seed": self.seed,
            "seed_from_entropy": !self.seed_given,
        })
    }

    fn out_dir(&self) -> Result<&Path> {
        let dir = self
            .out
            .as_deref()
            .ok_or_else(|| anyhow!("this command writes files; pass --out <dir>"))?;
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(dir)
    }

    fn write_json(&self, name: &str, value: &serde_json::Value) -> Result<()> {
        if let Some(dir) = self.out.as_deref() {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(name);
            std::fs::write(&path, serde_json::to_string_pretty(value)?)
                .with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

fn load_params(path: Option<&Path>) -> Result<SystemParams> {
    match path {
        None => Ok(SystemParams::reference()),
        Some(p) => SystemParams::from_json_file(p)
            .with_context(|| format!("loading parameter file {}", p.display())),
    }
}

fn print_summary(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_stream(path: &Path, stream: &ClickStream) -> Result<()> {
    let mut sink = BufWriter::new(File::create(path)?);
    ttag::write_binary(stream, &mut sink)?;
    Ok(())
}

fn read_stream(path: &Path) -> Result<ClickStream> {
    let mut source = BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    );
    Ok(ttag::read_binary(&mut source)?)
}

fn cmd_rates(ctx: &RunContext, args: &RatesArgs) -> Result<()> {
    let rates = physpar::derived_rates(&ctx.params)?;
    let fiber = physpar::fiber_pair_rate(&ctx.params)?;
    let mut summary = json!({
        "config": ctx.config_json("rates"),
        "purcell_regime": ctx.params.is_purcell_regime(),
        "saturation": rates.saturation,
        "cooperativity": rates.cooperativity,
        "complex_cooperativity": { "re": rates.complex_cooperativity.re,
                                   "im": rates.complex_cooperativity.im },
        "gamma_purcell_mhz": rates.gamma_purcell,
        "omega_prime_mhz": rates.omega_prime,
        "inelastic_fraction": rates.inelastic_fraction,
        "collection_rate_hz": rates.r_c,
        "inelastic_photon_rate_hz": rates.saturation * rates.r_c,
        "pair_rate_hz": rates.pair_rate,
        "fiber_pair_rate_hz": fiber,
        "detected_pair_rate_hz": rates.r_det2,
        "free_space_lifetime_ns": physpar::free_space_lifetime_ns(ctx.params.gamma),
        "purcell_lifetime_ns": physpar::free_space_lifetime_ns(ctx.params.gamma)
            / (rates.gamma_purcell / (2.0 * ctx.params.gamma)),
    });
    if !ctx.params.is_purcell_regime() {
        eprintln!(
            "warning: parameters are outside the Purcell regime (kappa > g^2/kappa > gamma)"
        );
    }
    if !args.delta_c_list.is_empty() {
        let sweep = physpar::sweep_detuning(&ctx.params, &args.delta_c_list)?;
        summary["sweep"] = serde_json::to_value(&sweep)?;
        if let Some(dir) = ctx.out.as_deref() {
            std::fs::create_dir_all(dir)?;
            let mut csv = String::from("delta_c_mhz,r_c_hz,r_det2_hz,gamma_eff_mhz\n");
            for point in &sweep {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    point.delta_c, point.r_c, point.r_det2, point.gamma_eff
                ));
            }
            std::fs::write(dir.join("rates_sweep.csv"), csv)?;
        }
    }
    ctx.write_json("rates.json", &summary)?;
    print_summary(&summary)
}

fn cmd_simulate(ctx: &RunContext, args: &SimulateArgs) -> Result<()> {
    let dir = ctx.out_dir()?.to_path_buf();
    let detector = DetectorConfig {
        efficiency: args.efficiency,
        dark_rate_hz: args.dark_rate_hz,
        jitter_sigma_ps: args.jitter_ps,
        dead_time_ps: args.dead_time_ps,
    };
    let summary = match args.engine.as_str() {
        "cascade" => {
            if args.duration_ms.is_nan() || args.duration_ms <= 0.0 {
                bail!("--duration-ms must be positive");
            }
            let model = cascade::pair_model_from_params(&ctx.params, &FilterConfig::default())?;
            let duration_s = args.duration_ms * 1e-3;
            let duration_ps = (duration_s * 1e12) as u64;
            let pairs = cascade::sample_pairs(&model, duration_s, ctx.seed)?;
            let mode = if args.split_sidebands { StreamMode::Split } else { StreamMode::Merged };
            let streams = cascade::to_click_streams(
                &pairs,
                &model,
                &detector,
                mode,
                duration_ps,
                pairsim::rng::derive_seed(ctx.seed, 1),
            )?;
            let mut files = Vec::new();
            let mut realized = json!({});
            match &streams {
                CascadeStreams::Split { early, late } => {
                    write_stream(&dir.join("early.ttag"), early)?;
                    write_stream(&dir.join("late.ttag"), late)?;
                    files.push("early.ttag");
                    files.push("late.ttag");
                    realized["early_rate_hz"] = json!(early.rate_hz());
                    realized["late_rate_hz"] = json!(late.rate_hz());
                }
                CascadeStreams::Merged(stream) => {
                    write_stream(&dir.join("merged.ttag"), stream)?;
                    files.push("merged.ttag");
                    realized["merged_rate_hz"] = json!(stream.rate_hz());
                }
            }
            json!({
                "config": ctx.config_json("simulate"),
                "engine": "cascade",
                "duration_ms": args.duration_ms,
                "model": serde_json::to_value(model)?,
                "n_pairs": pairs.len(),
                "realized_pair_rate_hz": pairs.len() as f64 / duration_s,
                "realized": realized,
                "files": files,
            })
        }
        "mcwf" => {
            let model = mcwf::build_model(&ctx.params, args.n_max)?;
            let ensemble = mcwf::run_ensemble(&model, args.n_traj, args.traj_ns, ctx.seed)?;
            write_stream(&dir.join("cavity.ttag"), &ensemble.cavity_stream)?;
            write_stream(&dir.join("free_space.ttag"), &ensemble.free_space_stream)?;
            json!({
                "config": ctx.config_json("simulate"),
                "engine": "mcwf",
                "summary": serde_json::to_value(&ensemble.summary)?,
                "files": ["cavity.ttag", "free_space.ttag"],
            })
        }
        other => bail!("unknown engine {other}"),
    };
    ctx.write_json("simulate.json", &summary)?;
    print_summary(&summary)
}

fn cmd_g2(ctx: &RunContext, args: &G2Args) -> Result<()> {
    if args.bin_width_ps <= 0 {
        bail!("--bin-width-ps must be positive");
    }
    // Bins centered on zero delay: range offset by half a bin.
    let half_bin = args.bin_width_ps / 2;
    let n_half = (args.tau_max_ps + half_bin) / args.bin_width_ps;
    let lo = -half_bin - (n_half - 1) * args.bin_width_ps;
    let hi = lo + (2 * n_half) * args.bin_width_ps;

    let start = read_stream(&args.input)?;
    let histogram = match &args.input_b {
        Some(path_b) => {
            let stop = read_stream(path_b)?;
            corr::cross_histogram(&start, &stop, lo, hi, args.bin_width_ps)?
        }
        None => corr::auto_histogram(&start, lo, hi, args.bin_width_ps)?,
    };
    let normalized = corr::g2_normalize(&histogram)?;
    let dir = ctx.out_dir()?;
    let csv_path = dir.join("g2.csv");
    let mut sink = BufWriter::new(File::create(&csv_path)?);
    corr::write_csv(&normalized, &mut sink)?;
    sink.flush()?;

    let summary = json!({
        "config": ctx.config_json("g2"),
        "input": args.input.display().to_string(),
        "input_b": args.input_b.as_ref().map(|p| p.display().to_string()),
        "n_start": normalized.n_start,
        "n_stop": normalized.n_stop,
        "bin_width_ps": args.bin_width_ps,
        "g2_zero": normalized.g2_at(0),
        "file": csv_path.display().to_string(),
    });
    ctx.write_json("g2.json", &summary)?;
    print_summary(&summary)
}

fn cmd_franson(ctx: &RunContext, args: &FransonArgs) -> Result<()> {
    if args.phi_points < 5 {
        bail!("--phi-points must be at least 5");
    }
    let dir = ctx.out_dir()?.to_path_buf();
    let model = cascade::pair_model_from_params(&ctx.params, &FilterConfig::default())?;
    let config = FransonConfig {
        delta_t_ps: args.delta_t_ps,
        visibility: args.visibility,
        jitter_sigma_ps: args.jitter_ps,
        ..FransonConfig::default()
    };
    config.validate()?;
    if !config.delay_is_adequate(model.gamma_decay) {
        eprintln!(
            "warning: arm delay {} ps is not large against the pair correlation time {:.1} ps",
            config.delta_t_ps,
            1e12 / model.gamma_decay
        );
    }
    let duration_s = (args.pairs as f64 * 1.1 / model.pair_rate).max(1e-6) + 1e-4;
    let mut pairs = cascade::sample_pairs(&model, duration_s, ctx.seed)?;
    if pairs.len() < args.pairs {
        bail!("sampled only {} of {} requested pairs", pairs.len(), args.pairs);
    }
    pairs.truncate(args.pairs);

    let phases: Vec<f64> = (0..args.phi_points)
        .map(|i| 2.0 * std::f64::consts::PI * i as f64 / (args.phi_points - 1) as f64)
        .collect();
    let curve = franson::interference_curve(
        &pairs,
        &config,
        &phases,
        pairsim::rng::derive_seed(ctx.seed, 2),
    )?;

    let mut csv = String::from("phi_rad,central_area\n");
    for &(phi, area) in &curve {
        csv.push_str(&format!("{phi},{area}\n"));
    }
    std::fs::write(dir.join("interference.csv"), csv)?;

    let phis: Vec<f64> = curve.iter().map(|&(p, _)| p).collect();
    let areas: Vec<f64> = curve.iter().map(|&(_, a)| a as f64).collect();
    let fitted = fit::fit_sinusoid(&phis, &areas)?;

    if args.outcomes {
        let result = franson::transform_pairs(
            &pairs,
            &FransonConfig { phi_a: 0.0, phi_b: 0.0, ..config },
            pairsim::rng::derive_seed(ctx.seed, 3),
        )?;
        let mut sink = BufWriter::new(File::create(dir.join("outcomes.csv"))?);
        franson::write_outcomes_csv(&result.outcomes, &mut sink)?;
    }

    let summary = json!({
        "config": ctx.config_json("franson"),
        "pairs": args.pairs,
        "configured_visibility": args.visibility,
        "delta_t_ps": args.delta_t_ps,
        "fit": serde_json::to_value(&fitted)?,
        "fitted_visibility": fitted.params.get("visibility"),
        "files": if args.outcomes { vec!["interference.csv", "outcomes.csv"] }
                 else { vec!["interference.csv"] },
    });
    ctx.write_json("visibility.json", &summary)?;
    print_summary(&summary)
}

fn cmd_chsh(ctx: &RunContext, args: &ChshArgs) -> Result<()> {
    let basis = ChshBasis::reference();
    let (table, origin) = match &args.table {
        Some(path) => {
            let mut source = BufReader::new(
                File::open(path).with_context(|| format!("opening {}", path.display()))?,
            );
            (CoincidenceTable::read_csv(&mut source)?, json!(path.display().to_string()))
        }
        None => {
            let model = cascade::pair_model_from_params(&ctx.params, &FilterConfig::default())?;
            let config = FransonConfig {
                delta_t_ps: args.delta_t_ps,
                visibility: args.visibility,
                ..FransonConfig::default()
            };
            let needed = 16 * args.pairs_per_setting;
            let duration_s = needed as f64 * 1.1 / model.pair_rate + 1e-4;
            let pairs = cascade::sample_pairs(&model, duration_s, ctx.seed)?;
            let table = bell::table_from_franson(
                &pairs,
                &config,
                &basis,
                args.pairs_per_setting,
                pairsim::rng::derive_seed(ctx.seed, 4),
            )?;
            (
                table,
                json!({ "simulated": { "pairs_per_setting": args.pairs_per_setting,
                                       "visibility": args.visibility } }),
            )
        }
    };
    let result = bell::chsh(&table, &basis)?;
    let summary = json!({
        "config": ctx.config_json("chsh"),
        "table_origin": origin,
        "result": serde_json::to_value(&result)?,
        "violation_sigmas": (result.s_value - 2.0) / result.s_sigma,
    });
    ctx.write_json("chsh.json", &summary)?;
    print_summary(&summary)
}

fn cmd_sweep(ctx: &RunContext, args: &SweepArgs) -> Result<()> {
    if args.delta_c.is_empty() {
        bail!("--delta-c list must be non-empty");
    }
    let dir = ctx.out_dir()?.to_path_buf();
    let mut rows = Vec::new();
    let mut noisy_rates = Vec::new();
    let mut rng = pairsim::rng::rng_from_seed(pairsim::rng::derive_seed(ctx.seed, 10));
    use rand_distr::{Distribution, StandardNormal};

    for (i, &dc) in args.delta_c.iter().enumerate() {
        let point_params = ctx.params.with_delta_c(dc);
        let model = cascade::pair_model_from_params(&point_params, &FilterConfig::default())?;
        let duration_s = args.pairs_per_point as f64 / model.pair_rate.max(1.0) + 1e-4;
        let pairs = cascade::sample_pairs(
            &model,
            duration_s,
            pairsim::rng::derive_seed(ctx.seed, i as u64),
        )?;
        let streams = cascade::to_click_streams(
            &pairs,
            &model,
            &DetectorConfig::default(),
            StreamMode::Split,
            (duration_s * 1e12) as u64,
            pairsim::rng::derive_seed(ctx.seed, 100 + i as u64),
        )?;
        let CascadeStreams::Split { early, late } = streams else { unreachable!() };
        let hist = corr::cross_histogram(&early, &late, 0, 60_000, 250)?;
        let xs: Vec<f64> =
            (0..hist.counts.len()).map(|k| hist.bin_center_ps(k) * 1e-3).collect();
        let ys: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
        let weights = fit::poisson_weights(&ys);
        let decay_fit = fit::fit_exponential(&xs, &ys, Some(&weights))?;
        let decay_time_ns = 1.0 / decay_fit.param("rate");

        let model_rate = physpar::detected_pair_rate(&point_params)?;
        let noise: f64 = StandardNormal.sample(&mut rng);
        let measured = (model_rate * (1.0 + args.noise * noise)).max(0.0);
        noisy_rates.push(measured);
        rows.push((dc, decay_time_ns, model.pair_rate, measured, model.lifetime_ns()));
    }

    let fitted = fit::fit_rate_vs_detuning(&args.delta_c, &noisy_rates, &ctx.params)?;

    let mut csv = String::from(
        "delta_c_mhz,decay_time_ns,pair_rate_hz,detected_rate_hz,model_lifetime_ns\n",
    );
    for (dc, decay, pair_rate, measured, lifetime) in &rows {
        csv.push_str(&format!("{dc},{decay},{pair_rate},{measured},{lifetime}\n"));
    }
    std::fs::write(dir.join("sweep.csv"), csv)?;

    let summary = json!({
        "config": ctx.config_json("sweep"),
        "noise": args.noise,
        "pairs_per_point": args.pairs_per_point,
        "eta_fit": serde_json::to_value(&fitted)?,
        "eta_injected": ctx.params.eta_total,
        "points": rows.iter().map(|(dc, decay, pr, meas, life)| json!({
            "delta_c_mhz": dc,
            "decay_time_ns": decay,
            "pair_rate_hz": pr,
            "detected_rate_hz": meas,
            "model_lifetime_ns": life,
        })).collect::<Vec<_>>(),
        "file": "sweep.csv",
    });
    ctx.write_json("eta_fit.json", &summary)?;
    print_summary(&summary)
}
