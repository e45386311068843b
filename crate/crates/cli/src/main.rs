//! `resoloss`: fit resonator traces, analyze power sweeps, extract Kerr and
//! two-photon rates, and synthesize test campaigns.
//!
//! Exit codes: 0 success, 2 input or config error, 3 analysis failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use resonator_loss::io::config::load_config;
use resonator_loss::io::csv::{parse_csv_trace, write_csv_trace};
use resonator_loss::io::manifest::{load_manifest, load_traces, write_manifest, ManifestTrace, SweepManifest};
use resonator_loss::io::plot::{write_plot_table, PlotTable, QiPoint};
use resonator_loss::io::report::{num, write_report, FitKind, InputDigest, Report, ReportEntry};
use resonator_loss::io::touchstone::{is_touchstone_path, parse_touchstone};
use resonator_loss::io::write_atomic;
use resonator_loss::linear_fit::{fit_linear, window_around_dip};
use resonator_loss::pipeline::{analyze_kerr, analyze_sweep, KerrOptions, LossModel, SweepOptions};
use resonator_loss::synth::synthesize_power_sweep;
use resonator_loss::{BranchPolicy, Error, FrequencyTrace, TraceMeta};

#[derive(Parser, Debug)]
#[command(
    name = "resoloss",
    version,
    about = "Loss characterization of superconducting resonators"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Output directory for reports, tables and simulated traces.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for `simulate`; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Branch in the bistable region: low, high, sweep-up, sweep-down.
    #[arg(long, global = true)]
    policy: Option<BranchPolicy>,
    /// Per-power details on standard error.
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the linear line shape to one trace (CSV or Touchstone).
    FitLinear {
        /// Trace file: `.csv`, or Touchstone `.sNp` (S21 is read)
        trace: PathBuf,
        /// Half-width of the fit window around the dip, in linewidths; 0 fits
        /// the whole trace.
        #[arg(long, default_value_t = 10.0)]
        window: f64,
    },
    /// Linear fit per power, photon-number calibration and TLS loss fit.
    FitSweep {
        /// Sweep manifest (TOML) listing one trace per power
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelArg::Tls)]
        model: ModelArg,
        /// Drop powers flagged nonlinear (ellipticity or |xi| threshold).
        #[arg(long)]
        exclude_nonlinear: bool,
    },
    /// Nonlinear fit per power and Kerr / two-photon slope extraction.
    ExtractKerr {
        /// Sweep manifest (TOML) listing one trace per power
        manifest: PathBuf,
    },
    /// Write synthetic traces and a manifest from a config file.
    Simulate {
        /// Simulation config (TOML)
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Tls,
    #[value(name = "tls+2photon", alias = "tls-two-photon")]
    TlsTwoPhoton,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let g = &cli.global;
    match &cli.command {
        Command::FitLinear { trace, window } => cmd_fit_linear(g, trace, *window),
        Command::FitSweep {
            manifest,
            model,
            exclude_nonlinear,
        } => cmd_fit_sweep(g, manifest, *model, *exclude_nonlinear),
        Command::ExtractKerr { manifest } => cmd_extract_kerr(g, manifest),
        Command::Simulate { config } => cmd_simulate(g, config),
    }
}

fn create_out(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn read_trace(path: &Path) -> Result<FrequencyTrace, Error> {
    if is_touchstone_path(path) {
        parse_touchstone(path, (2, 1), TraceMeta::default())
    } else {
        parse_csv_trace(path)
    }
}

/// Attaches the manifest file to per-power errors raised on in-memory traces.
fn with_manifest_path(e: Error, manifest: &SweepManifest) -> Error {
    match e {
        Error::AtPower {
            power_dbm,
            path: None,
            source,
        } => Error::AtPower {
            power_dbm,
            path: manifest
                .traces
                .iter()
                .find(|t| t.power_dbm == power_dbm)
                .map(|t| t.path.clone()),
            source,
        },
        other => other,
    }
}

fn digests(manifest_path: &Path, manifest: &SweepManifest) -> Result<Vec<InputDigest>, Error> {
    std::iter::once(manifest_path)
        .chain(manifest.traces.iter().map(|t| t.path.as_path()))
        .map(InputDigest::of_file)
        .collect()
}

fn cmd_fit_linear(g: &Global, path: &Path, window: f64) -> Result<(), Error> {
    let trace = read_trace(path)?;
    let fitted = if window > 0.0 {
        window_around_dip(&trace, window)?
    } else {
        trace
    };
    let fit = fit_linear(&fitted, None)?;
    if !fit.converged {
        return Err(Error::NonConvergence {
            iterations: fit.iterations,
        });
    }

    let mut report = Report::new("fit-linear");
    report.settings.insert("window_linewidths".into(), window.to_string());
    report.inputs.push(InputDigest::of_file(path)?);
    let label = if fitted.meta.label.is_empty() {
        path.display().to_string()
    } else {
        fitted.meta.label.clone()
    };
    report
        .fits
        .push(ReportEntry::from_fit(label, FitKind::Linear, &fit).at_power(fitted.meta.instrument_power_dbm));

    create_out(&g.out)?;
    write_plot_table(&PlotTable::IqTrace(&fitted), &g.out.join("iq_trace.csv"))?;
    write_report(&report, &g.out.join("report.json"))?;
    let p = &fit.params;
    println!(
        "f_r = {:.9e} Hz  Q_i = {:.4e}  Q_c = {:.4e}  residual_rms = {:.3e}",
        p.resonant_freq,
        p.q_internal(),
        p.q_coupling(),
        fit.residual_rms
    );
    Ok(())
}

fn cmd_fit_sweep(g: &Global, manifest_path: &Path, model: ModelArg, exclude: bool) -> Result<(), Error> {
    let manifest = load_manifest(manifest_path)?;
    let traces = load_traces(&manifest)?;
    let opts = SweepOptions {
        model: match model {
            ModelArg::Tls => LossModel::Tls,
            ModelArg::TlsTwoPhoton => LossModel::TlsTwoPhoton,
        },
        exclude_nonlinear: exclude,
        policy: g.policy.unwrap_or_default(),
        ..SweepOptions::default()
    };
    let analysis = analyze_sweep(&traces, &opts).map_err(|e| with_manifest_path(e, &manifest))?;

    let mut report = Report::new("fit-sweep");
    let s = &mut report.settings;
    s.insert("model".into(), format!("{:?}", opts.model));
    s.insert("exclude_nonlinear".into(), exclude.to_string());
    s.insert("policy".into(), opts.policy.to_string());
    s.insert(
        "ellipticity_factor".into(),
        analysis.thresholds.ellipticity_factor.to_string(),
    );
    s.insert("max_xi".into(), analysis.thresholds.max_xi.to_string());
    report.inputs = digests(manifest_path, &manifest)?;
    for p in &analysis.powers {
        let label = format!("{} @ {} dBm", manifest.label, p.instrument_power_dbm);
        match &p.linear {
            Some(fit) => {
                let mut e = ReportEntry::from_fit(label, FitKind::Linear, fit).at_power(p.instrument_power_dbm);
                e.extras.insert("input_power_w".into(), num(p.input_power));
                e.extras.insert("photon_number".into(), num(p.photon_number));
                if let Some(v) = p.ellipticity {
                    e.extras.insert("ellipticity".into(), num(v));
                }
                if let Some(v) = p.xi {
                    e.extras.insert("xi".into(), num(v));
                }
                e.diagnostics.bifurcated |= p.bifurcated;
                e.diagnostics.nonlinear_suspected |= p.nonlinear;
                e.excluded = p.excluded;
                e.note = p.note.clone();
                report.fits.push(e);
            }
            None => report.notes.push(format!(
                "{} dBm: {}",
                p.instrument_power_dbm,
                p.note.as_deref().unwrap_or("no linear fit")
            )),
        }
        if g.verbose {
            eprintln!(
                "{:>9.3} dBm  n = {:.4e}  Q_i = {:.4e}{}",
                p.instrument_power_dbm,
                p.photon_number,
                p.linear.as_ref().map_or(f64::NAN, |f| f.params.q_internal()),
                p.note.as_deref().map(|n| format!("  [{n}]")).unwrap_or_default()
            );
        }
    }
    let tls = &analysis.tls;
    report.fits.push(ReportEntry::from_fit(
        format!("{} TLS", manifest.label),
        FitKind::Tls,
        tls,
    ));
    let t = &tls.params;
    let sum = &mut report.summary;
    sum.insert("q_tls".into(), num(t.tls.q_tls));
    sum.insert("inverse_q_tls".into(), num(t.tls.inverse_q_tls()));
    sum.insert("n_c".into(), num(t.tls.n_c));
    sum.insert("alpha_tls".into(), num(t.tls.alpha_tls));
    sum.insert("delta_0".into(), num(t.tls.delta_0));
    sum.insert("two_photon_hz".into(), num(t.two_photon));
    for name in ["inverse_q_tls", "n_c", "alpha_tls", "delta_0", "two_photon"] {
        sum.insert(format!("{name}_err"), tls.std_error(name).and_then(num));
    }
    sum.insert(
        "ellipticity_baseline".into(),
        analysis.ellipticity_baseline.and_then(num),
    );
    sum.insert(
        "powers_used".into(),
        Some(analysis.powers.iter().filter(|p| !p.excluded).count() as f64),
    );

    let rows: Vec<QiPoint> = analysis.powers.iter().map(QiPoint::from_sweep).collect();
    create_out(&g.out)?;
    write_plot_table(&PlotTable::QiVsN(&rows), &g.out.join("qi_vs_n.csv"))?;
    write_report(&report, &g.out.join("report.json"))?;
    println!(
        "Q_TLS = {:.4e}  n_c = {:.4e}  alpha_tls = {:.4}  delta_0 = {:.4e}  ({} of {} powers used)",
        t.tls.q_tls,
        t.tls.n_c,
        t.tls.alpha_tls,
        t.tls.delta_0,
        analysis.loss_points().len(),
        analysis.powers.len()
    );
    Ok(())
}

fn cmd_extract_kerr(g: &Global, manifest_path: &Path) -> Result<(), Error> {
    let manifest = load_manifest(manifest_path)?;
    let traces = load_traces(&manifest)?;
    let opts = KerrOptions {
        policy: g.policy.unwrap_or_default(),
        ..KerrOptions::default()
    };
    let analysis = analyze_kerr(&traces, &opts).map_err(|e| with_manifest_path(e, &manifest))?;

    let mut report = Report::new("extract-kerr");
    report.settings.insert("policy".into(), opts.policy.to_string());
    report.settings.insert(
        "photon_number".into(),
        "per-trace maximum of the selected branch".into(),
    );
    report.inputs = digests(manifest_path, &manifest)?;
    report.fits.push(
        ReportEntry::from_fit(format!("{} seed", manifest.label), FitKind::Linear, &analysis.seed)
            .at_power(analysis.powers[0].instrument_power_dbm),
    );
    for p in &analysis.powers {
        let mut e = ReportEntry::from_fit(
            format!("{} @ {} dBm", manifest.label, p.instrument_power_dbm),
            FitKind::Nonlinear,
            &p.fit,
        )
        .at_power(p.instrument_power_dbm);
        e.extras.insert("input_power_w".into(), num(p.input_power));
        e.excluded = !p.used;
        if !p.used {
            e.note = Some("nonlinear parameters unresolved".into());
        }
        report.fits.push(e);
        if g.verbose {
            eprintln!(
                "{:>9.3} dBm  n_max = {:.4e}  K = {:.4e} Hz  gamma = {:.4e} Hz{}",
                p.instrument_power_dbm,
                p.photon_number,
                p.fit.params.kerr,
                p.fit.params.two_photon,
                if p.used { "" } else { "  [dropped]" }
            );
        }
    }
    let x = &analysis.extraction;
    let sum = &mut report.summary;
    sum.insert("kerr_hz".into(), num(x.kerr));
    sum.insert("kerr_err_hz".into(), num(x.kerr_std));
    sum.insert("two_photon_hz".into(), num(x.two_photon));
    sum.insert("two_photon_err_hz".into(), num(x.two_photon_std));
    sum.insert("r2_kerr".into(), num(x.r2_kerr));
    sum.insert("r2_two_photon".into(), num(x.r2_two_photon));
    sum.insert("powers_used".into(), Some(x.points.len() as f64));

    create_out(&g.out)?;
    write_plot_table(&PlotTable::KerrSlope(&x.points), &g.out.join("kerr_slope.csv"))?;
    write_report(&report, &g.out.join("report.json"))?;
    println!(
        "K = {:.4e} ± {:.2e} Hz  gamma = {:.4e} ± {:.2e} Hz  R2 = {:.5} / {:.5}",
        x.kerr, x.kerr_std, x.two_photon, x.two_photon_std, x.r2_kerr, x.r2_two_photon
    );
    Ok(())
}

fn cmd_simulate(g: &Global, config_path: &Path) -> Result<(), Error> {
    let mut config = load_config(config_path)?;
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(policy) = g.policy {
        config.policy = policy;
    }
    let spec = config.to_spec()?;
    let sweep = synthesize_power_sweep(&spec)?;

    create_out(&g.out)?;
    let mut manifest = SweepManifest {
        label: config.label.clone(),
        attenuation_db: spec.attenuation_db,
        temperature_k: spec.tls.temperature,
        traces: Vec::with_capacity(sweep.traces.len()),
    };
    for (k, trace) in sweep.traces.iter().enumerate() {
        let name = format!("trace_{k:02}.csv");
        write_csv_trace(trace, &g.out.join(&name))?;
        manifest.traces.push(ManifestTrace {
            path: name.into(),
            power_dbm: trace.meta.instrument_power_dbm,
        });
        if g.verbose {
            let t = &sweep.truth[k];
            eprintln!(
                "{:>9.3} dBm  n = {:.4e}  Q_i = {:.4e}",
                t.instrument_power_dbm,
                t.photon_number,
                1.0 / t.internal_loss
            );
        }
    }
    let truth = serde_json::to_string_pretty(&sweep.truth).expect("truth serializes") + "\n";
    write_atomic(&g.out.join("truth.json"), truth.as_bytes())?;
    write_atomic(&g.out.join("config.toml"), config.to_toml().as_bytes())?;
    write_manifest(&manifest, &g.out.join("manifest.toml"))?;
    println!(
        "wrote {} traces and manifest.toml to {}",
        sweep.traces.len(),
        g.out.display()
    );
    Ok(())
}
