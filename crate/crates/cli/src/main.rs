//! `metraptor` command-line front end.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use metraptor::channel::{
    bit_level_capacity, component_densities, modulation_capacity, ChannelSpec,
};
use metraptor::de::{
    fmt12, max_realized_rate, met_de_run, stability_check_on, DeConfig, RateSearch,
};
use metraptor::ensemble::{MetRaptorEnsemble, PrecodeProfile};
use metraptor::io::{write_components, EnsembleSource};
use metraptor::llr::LlrGrid;
use metraptor::optimizer::{optimize, OptimizerConfig};
use metraptor::simulator::{
    estimate_overhead, outputs_for_rate, sample_code, simulate_code, SimConfig, SimReport,
};

use manifest::{emit, Recorder};

#[derive(Parser)]
#[command(
    name = "metraptor",
    version,
    about = "Design and analysis of Raptor codes for Gray-labelled 16-QAM",
    after_help = "Exit codes: 0 success or converged, 1 analytic non-convergence, 2 input error, \
                  3 infeasible configuration.\nThread count: RAYON_NUM_THREADS."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Capacity per SNR: total and per bit level.
    Capacity(CapacityArgs),
    /// Density evolution of an ensemble at one SNR.
    Evaluate(EvaluateArgs),
    /// Stability condition of an ensemble at one SNR.
    Stability(StabilityArgs),
    /// Optimize LT output-degree distributions at one SNR.
    Design(DesignArgs),
    /// Rate efficiency of ensembles over an SNR range.
    Sweep(SweepArgs),
    /// Monte-Carlo simulation of a sampled code.
    Simulate(SimulateArgs),
    /// Export quantized channel LLR densities.
    Density(DensityArgs),
}

#[derive(Args, Clone)]
struct DeArgs {
    /// LLR grid step.
    #[arg(long, default_value_t = 0.0625)]
    grid_step: f64,
    /// LLR grid half-range.
    #[arg(long, default_value_t = 30.0)]
    grid_range: f64,
    /// Density-evolution iteration cap.
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
    /// Target maximum bit error rate.
    #[arg(long, default_value_t = 1e-6)]
    target_ber: f64,
}

impl DeArgs {
    fn config(&self) -> Result<DeConfig> {
        Ok(DeConfig {
            grid: LlrGrid::new(self.grid_range, self.grid_step)?,
            max_iterations: self.max_iters,
            target_ber: self.target_ber,
            ..DeConfig::default()
        })
    }

    fn json(&self) -> Value {
        json!({
            "grid_step": self.grid_step,
            "grid_range": self.grid_range,
            "max_iters": self.max_iters,
            "target_ber": self.target_ber,
        })
    }
}

#[derive(Args)]
struct SnrRange {
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    snr_start: f64,
    #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
    snr_stop: f64,
    #[arg(long, default_value_t = 1.0)]
    snr_step: f64,
}

impl SnrRange {
    fn points(&self) -> Result<Vec<f64>> {
        if !(self.snr_step > 0.0) {
            bail!(metraptor::Error::Config(
                "--snr-step must be positive".into()
            ));
        }
        let mut v = Vec::new();
        let mut i = 0;
        loop {
            let s = self.snr_start + i as f64 * self.snr_step;
            if s > self.snr_stop + 1e-9 {
                break;
            }
            v.push(s);
            i += 1;
        }
        Ok(v)
    }

    fn json(&self) -> Value {
        json!({"snr_start": self.snr_start, "snr_stop": self.snr_stop, "snr_step": self.snr_step})
    }
}

#[derive(Args)]
struct CapacityArgs {
    #[arg(long, default_value = "qam16")]
    modulation: String,
    #[command(flatten)]
    range: SnrRange,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    ensemble: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    snr: f64,
    /// LT rate override for component files.
    #[arg(long)]
    r_lt: Option<f64>,
    #[command(flatten)]
    de: DeArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StabilityArgs {
    #[arg(long)]
    ensemble: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    snr: f64,
    #[arg(long)]
    r_lt: Option<f64>,
    #[arg(long, default_value_t = 0.0625)]
    grid_step: f64,
    #[arg(long, default_value_t = 30.0)]
    grid_range: f64,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long, allow_hyphen_values = true)]
    snr: f64,
    /// Optimizer settings as TOML; unspecified keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    dv: u32,
    #[arg(long, default_value_t = 60)]
    dc: u32,
    /// Overrides the seed in the optimizer settings.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    de: DeArgs,
    /// Component file to write; the audit trace goes to `<out>.audit.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, required = true, num_args = 1..)]
    ensemble: Vec<PathBuf>,
    #[command(flatten)]
    range: SnrRange,
    /// Bisection tolerance on r_lt.
    #[arg(long, default_value_t = 1e-3)]
    rate_tolerance: f64,
    #[command(flatten)]
    de: DeArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    ensemble: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    snr: f64,
    /// Input bits per frame.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Output bits per frame; defaults to n / r_lt rounded to even.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    r_lt: Option<f64>,
    #[arg(long, default_value_t = 100)]
    frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Decoder iteration cap.
    #[arg(long, default_value_t = 300)]
    max_iters: usize,
    /// Rateless mode: add this many outputs per attempt and report the mean
    /// number needed.
    #[arg(long)]
    overhead_step: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DensityArgs {
    #[arg(long, default_value = "qam16")]
    modulation: String,
    #[arg(long, allow_hyphen_values = true)]
    snr: f64,
    #[arg(long, default_value_t = 0.0625)]
    grid_step: f64,
    #[arg(long, default_value_t = 30.0)]
    grid_range: f64,
    /// csv or json.
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Status {
    Ok,
    NotConverged,
}

fn load_ensemble(
    rec: &mut Recorder,
    path: &Path,
    r_lt: Option<f64>,
) -> Result<(EnsembleSource, MetRaptorEnsemble)> {
    let text = rec.read_input(path)?;
    let src = EnsembleSource::parse(&text).with_context(|| format!("in {}", path.display()))?;
    let e = src
        .ensemble(r_lt)
        .with_context(|| format!("in {}", path.display()))?;
    Ok((src, e))
}

fn spec_for(e: &MetRaptorEnsemble, snr: f64) -> Result<ChannelSpec> {
    Ok(ChannelSpec::new(e.modulation_order(), snr)?)
}

fn capacity(a: CapacityArgs) -> Result<Status> {
    let probe = ChannelSpec::from_name(&a.modulation, 0.0)?;
    let q = probe.bits_per_symbol();
    let rec = Recorder::new(
        "capacity",
        json!({"modulation": probe.name(), "range": a.range.json()}),
        None,
    );
    let mut csv = String::from("snr_db,capacity");
    for l in 1..=q {
        csv.push_str(&format!(",capacity_level{l}"));
    }
    csv.push('\n');
    for snr in a.range.points()? {
        let spec = probe.with_snr(snr)?;
        csv.push_str(&format!(
            "{},{}",
            fmt12(snr),
            fmt12(modulation_capacity(&spec))
        ));
        for l in 1..=q {
            csv.push_str(&format!(",{}", fmt12(bit_level_capacity(&spec, l)?)));
        }
        csv.push('\n');
    }
    emit(a.out.as_deref(), &csv, rec.finish(Value::Null))?;
    Ok(Status::Ok)
}

fn evaluate(a: EvaluateArgs) -> Result<Status> {
    let cfg = a.de.config()?;
    let mut rec = Recorder::new(
        "evaluate",
        json!({"snr": a.snr, "r_lt": a.r_lt, "de": a.de.json()}),
        None,
    );
    let (_, e) = load_ensemble(&mut rec, &a.ensemble, a.r_lt)?;
    let spec = spec_for(&e, a.snr)?;
    let res = met_de_run(&e, &spec, &cfg)?;
    let summary = json!({
        "converged": res.converged,
        "stop_reason": format!("{:?}", res.stop_reason),
        "iterations": res.iterations_used,
        "final_ber": res.final_ber(),
        "r_lt": e.r_lt(),
        "rate_efficiency": e.rate_efficiency(&spec)?,
    });
    emit(a.out.as_deref(), &res.to_csv(), rec.finish(summary))?;
    eprintln!(
        "{} after {} iterations, max BER {}",
        if res.converged {
            "converged"
        } else {
            "not converged"
        },
        res.iterations_used,
        fmt12(res.final_ber())
    );
    Ok(if res.converged {
        Status::Ok
    } else {
        Status::NotConverged
    })
}

fn stability(a: StabilityArgs) -> Result<Status> {
    let grid = LlrGrid::new(a.grid_range, a.grid_step)?;
    let mut rec = Recorder::new("stability", json!({"snr": a.snr}), None);
    let (_, e) = load_ensemble(&mut rec, &a.ensemble, a.r_lt)?;
    let st = stability_check_on(&e, &spec_for(&e, a.snr)?, grid)?;
    println!("lhs {}", fmt12(st.lhs));
    println!("y2 {}", fmt12(st.y2));
    println!("rho_prime {}", fmt12(st.rho_prime));
    println!("{}", if st.satisfied { "stable" } else { "unstable" });
    Ok(if st.satisfied {
        Status::Ok
    } else {
        Status::NotConverged
    })
}

fn design(a: DesignArgs) -> Result<Status> {
    let mut rec = Recorder::new("design", Value::Null, None);
    let mut cfg = match &a.config {
        Some(p) => OptimizerConfig::from_toml(&rec.read_input(p)?)?,
        None => OptimizerConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    rec.set_config(
        json!({
            "snr": a.snr,
            "dv": a.dv,
            "dc": a.dc,
            "optimizer": serde_json::to_value(&cfg)?,
            "de": a.de.json(),
        }),
        Some(cfg.seed),
    );
    let precode = PrecodeProfile::new(a.dv, a.dc)?;
    let spec = ChannelSpec::qam16(a.snr)?;
    let res = optimize(&spec, precode, &cfg, &a.de.config()?)?;
    let audit = audit_path(&a.out);
    std::fs::write(&audit, res.audit_csv())
        .with_context(|| format!("writing {}", audit.display()))?;
    let summary = json!({
        "r_lt": res.r_lt,
        "realized_rate": res.realized_rate,
        "rate_efficiency": res.rate_efficiency,
        "candidates_evaluated": res.candidates_evaluated,
        "audit": audit.display().to_string(),
    });
    eprintln!(
        "rate efficiency {} at r_lt {}",
        fmt12(res.rate_efficiency),
        fmt12(res.r_lt)
    );
    emit(
        Some(&a.out),
        &write_components(&res.components),
        rec.finish(summary),
    )?;
    Ok(Status::Ok)
}

fn audit_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".audit.csv");
    PathBuf::from(s)
}

fn sweep(a: SweepArgs) -> Result<Status> {
    let cfg = a.de.config()?;
    let mut rec = Recorder::new(
        "sweep",
        json!({"range": a.range.json(), "rate_tolerance": a.rate_tolerance, "de": a.de.json()}),
        None,
    );
    let search = RateSearch {
        tolerance: a.rate_tolerance,
        ..RateSearch::default()
    };
    let points = a.range.points()?;
    let mut csv = String::from("ensemble,snr_db,r_lt,realized_rate,rate_efficiency\n");
    let mut peaks = Vec::new();
    for path in &a.ensemble {
        let text = rec.read_input(path)?;
        let src = EnsembleSource::parse(&text).with_context(|| format!("in {}", path.display()))?;
        let (om1, om2, precode, order) = match &src {
            EnsembleSource::Components(c) => (
                c.omega1.clone(),
                c.omega2.clone(),
                c.precode,
                c.modulation_order,
            ),
            EnsembleSource::Full(e) => {
                let (o1, o2) = e.lt_distributions();
                (o1, o2, e.precode(), e.modulation_order())
            }
        };
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        for &snr in &points {
            let spec = ChannelSpec::new(order, snr)?;
            let r = max_realized_rate(&om1, &om2, precode, &spec, &cfg, &search)?;
            let eta = r.realized_rate * spec.bits_per_symbol() as f64 / modulation_capacity(&spec);
            if eta > best.0 {
                best = (eta, snr);
            }
            csv.push_str(&format!(
                "{name},{},{},{},{}\n",
                fmt12(snr),
                fmt12(r.r_lt),
                fmt12(r.realized_rate),
                fmt12(eta)
            ));
        }
        peaks.push(json!({"ensemble": name, "peak_efficiency": best.0, "peak_snr_db": best.1}));
    }
    emit(a.out.as_deref(), &csv, rec.finish(Value::Array(peaks)))?;
    Ok(Status::Ok)
}

fn simulate(a: SimulateArgs) -> Result<Status> {
    let mut rec = Recorder::new(
        "simulate",
        json!({
            "snr": a.snr, "n": a.n, "m": a.m, "r_lt": a.r_lt, "frames": a.frames,
            "max_iters": a.max_iters, "overhead_step": a.overhead_step,
        }),
        Some(a.seed),
    );
    let (_, e) = load_ensemble(&mut rec, &a.ensemble, a.r_lt)?;
    let spec = spec_for(&e, a.snr)?;
    let m = a.m.unwrap_or_else(|| outputs_for_rate(a.n, e.r_lt()));
    let code = sample_code(&e, a.n, m, a.seed)?;
    let cfg = SimConfig {
        frames: a.frames,
        max_iterations: a.max_iters,
        seed: a.seed,
        ..SimConfig::default()
    };
    let (csv, summary) = match a.overhead_step {
        Some(step) => {
            let r = estimate_overhead(&code, &spec, step, &cfg)?;
            let csv = format!(
                "snr_db,n,frames,failures,mean_outputs,realized_lt_rate\n{},{},{},{},{},{}\n",
                fmt12(r.snr_db),
                r.n,
                r.frames,
                r.failures,
                fmt12(r.mean_outputs),
                fmt12(r.realized_lt_rate)
            );
            (csv, serde_json::to_value(&r)?)
        }
        None => {
            let r = simulate_code(&code, &spec, &cfg)?;
            (
                SimReport::to_csv(std::slice::from_ref(&r)),
                serde_json::to_value(&r)?,
            )
        }
    };
    emit(a.out.as_deref(), &csv, rec.finish(summary))?;
    Ok(Status::Ok)
}

fn density(a: DensityArgs) -> Result<Status> {
    let spec = ChannelSpec::from_name(&a.modulation, a.snr)?;
    let grid = LlrGrid::new(a.grid_range, a.grid_step)?;
    let rec = Recorder::new(
        "density",
        json!({"modulation": spec.name(), "snr": a.snr, "grid_step": a.grid_step, "grid_range": a.grid_range, "format": a.format}),
        None,
    );
    let dens = component_densities(&spec, grid)?;
    let text = match a.format.as_str() {
        "csv" => {
            let mut s = String::from("llr");
            for l in 1..=dens.len() {
                s.push_str(&format!(",level{l}"));
            }
            s.push('\n');
            for k in 0..grid.len() {
                s.push_str(&fmt12(grid.value(k)));
                for d in &dens {
                    s.push_str(&format!(",{}", fmt12(d.masses()[k])));
                }
                s.push('\n');
            }
            s
        }
        "json" => {
            let recs: Vec<_> = dens.iter().map(|d| d.to_record()).collect();
            serde_json::to_string(&recs)? + "\n"
        }
        other => bail!(metraptor::Error::Config(format!(
            "unknown format '{other}'"
        ))),
    };
    emit(a.out.as_deref(), &text, rec.finish(Value::Null))?;
    Ok(Status::Ok)
}

fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Capacity(a) => capacity(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Stability(a) => stability(a),
        Command::Design(a) => design(a),
        Command::Sweep(a) => sweep(a),
        Command::Simulate(a) => simulate(a),
        Command::Density(a) => density(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            let infeasible = err.chain().any(|c| {
                matches!(
                    c.downcast_ref::<metraptor::Error>(),
                    Some(metraptor::Error::Infeasible(_))
                )
            });
            ExitCode::from(if infeasible { 3 } else { 2 })
        }
    }
}
