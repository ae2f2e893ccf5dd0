//! Command-line driver for the blow-up analysis library.
//!
//! Five verbs: `classify` one affine initial datum, `trace` one
//! characteristic as CSV, `axisym` one radial orbit as a JSON report,
//! `sweep` a config-driven grid to CSV/JSON, and `plot` the two standard
//! phase portraits as SVG.
//!
//! Exit codes: 0 success, 2 bad usage or config, 3 runtime failure
//! (integration errors, unwritable outputs, or sweep rows with errors).

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use plasma2d::affine::{classify_affine, frequencies, GridPoint};
use plasma2d::axisym::{
    cond_blowup_check, deta_envelopes, integrate_axisym, lemma1_bounds, monodromy_floquet,
    measure_period, period_bracket, radius_interval, theorem3_bound, AxisymState,
};
use plasma2d::characteristics::{
    detect_blowup, integrate_characteristic, integrate_linearized, trace_csv, CharState,
    IntegratorSettings,
};
use plasma2d::fields::{AffineField, FieldSpec, ProfileKind, RadialProfile};
use plasma2d::smallmat::Mat2;
use plasma2d::svg::{emit_phase_svg, moment_portrait, uv_portrait};
use plasma2d::sweep::{atomic_write, csv_bytes, load_config, run_sweep, write_outputs};

#[derive(Parser)]
#[command(
    name = "plasma2d",
    version,
    about = "Smoothness and blow-up analysis for 2D cold-plasma flows in a constant magnetic field"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classify one affine-field initial datum by the spectral criteria.
    Classify(ClassifyArgs),
    /// Integrate one characteristic and its derivative matrix, emit CSV.
    Trace(TraceArgs),
    /// Analyze one axisymmetric orbit: bounds, envelopes, moments, Floquet.
    Axisym(AxisymArgs),
    /// Run a config-driven grid sweep in parallel.
    Sweep(SweepArgs),
    /// Draw a phase portrait as a standalone SVG.
    Plot(PlotArgs),
}

/// Symmetric affine field entries; s21 is implied.
#[derive(Args)]
struct FieldArgs {
    #[arg(long, allow_negative_numbers = true)]
    s11: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    s12: f64,
    #[arg(long, allow_negative_numbers = true)]
    s22: f64,
    /// Magnetic field strength.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    b0: f64,
}

/// Initial velocity-derivative matrix, row-major (dV_i/dx_j).
#[derive(Args)]
struct DerivArgs {
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    v11: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    v12: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    v21: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    v22: f64,
}

impl DerivArgs {
    fn mat(&self) -> Mat2 {
        Mat2::new(self.v11, self.v12, self.v21, self.v22)
    }
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    field: FieldArgs,
    #[command(flatten)]
    deriv: DerivArgs,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    x01: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    x02: f64,
    /// Integration horizon for the non-oscillatory fallback.
    #[arg(long)]
    horizon: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    field: FieldArgs,
    #[command(flatten)]
    deriv: DerivArgs,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    x01: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    x02: f64,
    /// Initial velocity components.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    vel1: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    vel2: f64,
    #[arg(long, default_value_t = 10.0)]
    horizon: f64,
    /// Sample rows in the CSV.
    #[arg(long, default_value_t = 400)]
    samples: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Radial profile S(r), optionally wrapped as offset + scale * base.
#[derive(Args)]
struct ProfileArgs {
    /// Profile kind: constant, sine, cosine, rational-decay.
    #[arg(long, default_value = "sine")]
    profile: String,
    /// Constant value (constant profiles only).
    #[arg(long, allow_negative_numbers = true)]
    value: Option<f64>,
    /// Decay power 1..=4 (rational-decay profiles only).
    #[arg(long)]
    power: Option<u8>,
    /// Shift: S(r) = offset + scale * base(r).
    #[arg(long, allow_negative_numbers = true)]
    offset: Option<f64>,
    /// Scale factor for the shifted profile.
    #[arg(long, allow_negative_numbers = true)]
    scale: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    r_min: f64,
    #[arg(long, default_value_t = 50.0)]
    r_max: f64,
}

impl ProfileArgs {
    fn build(&self) -> Result<RadialProfile> {
        let base = match self.profile.as_str() {
            "constant" => ProfileKind::Constant(
                self.value
                    .context("constant profile needs --value")?,
            ),
            "sine" => ProfileKind::Sine,
            "cosine" => ProfileKind::Cosine,
            "rational-decay" => ProfileKind::RationalDecay(
                self.power
                    .context("rational-decay profile needs --power")?,
            ),
            other => anyhow::bail!(
                "unknown profile {other:?}; expected constant, sine, cosine or rational-decay"
            ),
        };
        let kind = if self.offset.is_some() || self.scale.is_some() {
            ProfileKind::Shifted {
                base: Box::new(base),
                offset: self.offset.unwrap_or(0.0),
                scale: self.scale.unwrap_or(1.0),
            }
        } else {
            base
        };
        Ok(RadialProfile::new(kind, self.r_min, self.r_max)?)
    }
}

#[derive(Args)]
struct AxisymArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    b0: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    u: f64,
    #[arg(long, default_value_t = 1.5, allow_negative_numbers = true)]
    v: f64,
    #[arg(long, default_value_t = 2.0)]
    r: f64,
    /// Initial divergence moment.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    d: f64,
    /// Initial eta = xi - B0 moment.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    eta: f64,
    #[arg(long)]
    horizon: Option<f64>,
    /// Compute Floquet multipliers of the moment system over one period.
    #[arg(long)]
    floquet: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep configuration.
    #[arg(long)]
    config: PathBuf,
    /// Downgrade unknown config keys from errors to warnings.
    #[arg(long)]
    lenient: bool,
    /// Override the configured worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Override the configured horizon.
    #[arg(long)]
    horizon: Option<f64>,
    /// Override the configured CSV output path.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Override the configured JSON output path.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Figure {
    /// Orbit with its two trapping circles in the (U, V) plane.
    Uv,
    /// Moment envelope level sets in the (eta, D) plane.
    Moments,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long, value_enum)]
    figure: Figure,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    profile: ProfileArgs,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    b0: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    u: f64,
    #[arg(long, default_value_t = 1.5, allow_negative_numbers = true)]
    v: f64,
    #[arg(long, default_value_t = 2.0)]
    r: f64,
    /// Orbit time span for the uv figure.
    #[arg(long, default_value_t = 12.0)]
    horizon: f64,
    /// Box bounds for the moments figure.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    u_plus: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    v_minus: f64,
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    v_plus: f64,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    lambda_minus: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    lambda_plus: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    d0: f64,
    #[arg(long, default_value_t = 50.0)]
    eta0: f64,
    #[arg(long)]
    eta_max: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_class(&e))
        }
    }
}

/// Config-shaped failures exit 2, runtime failures 3.
fn exit_class(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<plasma2d::Error>() {
        Some(plasma2d::Error::Config(_)) | Some(plasma2d::Error::InvalidParameter(_)) => 2,
        Some(_) => 3,
        // Bare anyhow context (flag validation, file loading) is config-shaped.
        None if e.downcast_ref::<std::io::Error>().is_none() => 2,
        None => 3,
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Classify(a) => cmd_classify(a),
        Cmd::Trace(a) => cmd_trace(a),
        Cmd::Axisym(a) => cmd_axisym(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Plot(a) => cmd_plot(a),
    }
}

fn emit_json(value: &serde_json::Value, path: Option<&PathBuf>) -> Result<()> {
    let text = format!("{}\n", serde_json::to_string_pretty(value)?);
    match path {
        Some(p) => atomic_write(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_classify(a: ClassifyArgs) -> Result<ExitCode> {
    let field = AffineField::new(a.field.s11, a.field.s12, a.field.s22);
    let mut settings = IntegratorSettings::default();
    if let Some(h) = a.horizon {
        settings.horizon = h;
    }
    let point = GridPoint {
        x0: [a.x01, a.x02],
        v0: a.deriv.mat(),
    };
    let fd = frequencies(&field, a.field.b0)?;
    let verdict = classify_affine(&field, a.field.b0, &[point], &settings)?
        .pop()
        .expect("one verdict per point");
    let report = serde_json::json!({
        "b0": a.field.b0,
        "field": { "s11": a.field.s11, "s12": a.field.s12, "s22": a.field.s22 },
        "x0": point.x0,
        "lambda": fd.lambda,
        "k": fd.k_det,
        "omega_plus": fd.omega_valid.then_some(fd.omega_plus),
        "omega_minus": fd.omega_valid.then_some(fd.omega_minus),
        "verdict": verdict,
    });
    emit_json(&report, a.json.as_ref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_trace(a: TraceArgs) -> Result<ExitCode> {
    let field = FieldSpec::Affine(AffineField::new(a.field.s11, a.field.s12, a.field.s22));
    let settings = IntegratorSettings {
        horizon: a.horizon,
        ..IntegratorSettings::default()
    };
    let init = CharState {
        v: [a.vel1, a.vel2],
        x: [a.x01, a.x02],
        t: 0.0,
    };
    let traj = integrate_characteristic(&field, &init, a.field.b0, &settings)?;
    let lin = integrate_linearized(&field, &traj, &a.deriv.mat(), a.field.b0, &settings)?;
    let res = detect_blowup(&lin);
    match a.out {
        Some(p) => {
            let mut buf = Vec::new();
            trace_csv(&mut buf, &traj, &lin, a.samples)?;
            atomic_write(&p, &buf)?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            trace_csv(&mut w, &traj, &lin, a.samples)?;
            w.flush()?;
        }
    }
    if let Some(t) = res.t_star {
        eprintln!("det Q first vanishes at t = {t:.9}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_axisym(a: AxisymArgs) -> Result<ExitCode> {
    let p = a.profile.build()?;
    let bounds = p.bounds();
    let mut settings = IntegratorSettings::default();
    settings.horizon = match a.horizon {
        Some(h) => h,
        None => 5.0 * theorem3_bound(bounds.s_plus, a.b0)?,
    };
    let init = AxisymState {
        u: a.u,
        v: a.v,
        r: a.r,
        d: a.d,
        eta: a.eta,
    };
    let lem = lemma1_bounds(bounds.s_minus, bounds.s_plus, a.b0, a.u, a.v)?;
    let c2 = init.c2(a.b0);
    let cond = cond_blowup_check(
        lem.u_plus,
        lem.v_minus,
        lem.v_plus,
        a.b0,
        bounds.lambda_minus,
        bounds.lambda_plus,
        a.d,
        a.eta,
    );
    let envelopes = (a.eta > 0.0)
        .then(|| {
            deta_envelopes(
                lem.u_plus,
                lem.v_minus,
                lem.v_plus,
                a.b0,
                bounds.lambda_minus,
                bounds.lambda_plus,
                a.d,
                a.eta,
            )
        })
        .transpose()?;
    let traj = integrate_axisym(&p, a.b0, &init, &settings)?;
    let floquet = a
        .floquet
        .then(|| monodromy_floquet(&p, a.b0, a.u, a.v, a.r, &settings))
        .transpose()?
        .map(|f| {
            serde_json::json!({
                "period": f.period,
                "multipliers": f.multipliers,
                "unit_circle_defect": f.unit_circle_defect,
            })
        });
    let report = serde_json::json!({
        "b0": a.b0,
        "init": init,
        "c2": c2,
        "field_bounds": bounds,
        "orbit_bounds": lem,
        "radius_interval": radius_interval(&lem, a.b0, c2).ok(),
        "time_scale": theorem3_bound(bounds.s_plus, a.b0)?,
        "period_bracket": period_bracket(bounds.s_minus, bounds.s_plus, a.b0)?,
        "period": measure_period(&p, a.b0, a.u, a.v, a.r, &settings).ok(),
        "cond_blowup": cond,
        "envelopes": envelopes,
        "status": if traj.truncation.is_some() { "moment_blowup" } else { "bounded" },
        "existence_time": traj.t_end(),
        "t_star": traj.truncation,
        "floquet": floquet,
    });
    emit_json(&report, a.json.as_ref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(a: SweepArgs) -> Result<ExitCode> {
    let (mut cfg, warnings) = load_config(&a.config, !a.lenient)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if a.workers.is_some() {
        cfg.workers = a.workers;
    }
    if a.horizon.is_some() {
        cfg.horizon = a.horizon;
    }
    if a.csv.is_some() {
        cfg.outputs.csv = a.csv;
    }
    if a.json.is_some() {
        cfg.outputs.json = a.json;
    }
    cfg.validate()?;
    let out = run_sweep(&cfg)?;
    write_outputs(&out, &cfg.outputs)?;
    println!(
        "mode={} points={} horizon={:.6}",
        serde_json::to_value(out.meta.mode)?.as_str().unwrap_or("?"),
        out.meta.total,
        out.meta.horizon
    );
    for (status, n) in &out.summary.counts {
        println!("  {status}: {n}");
    }
    if let Some(d) = out.summary.min_detq {
        println!("min det Q = {d:.6e}");
    }
    if let Some(t) = out.summary.earliest_t_star {
        println!("earliest t* = {t:.9}");
    }
    if let Some(p) = &cfg.outputs.csv {
        println!("csv: {} ({} bytes)", p.display(), csv_bytes(&out).len());
    }
    if let Some(p) = &cfg.outputs.json {
        println!("json: {}", p.display());
    }
    if out.summary.rows_with_errors > 0 {
        eprintln!(
            "{} of {} rows failed; see their note fields",
            out.summary.rows_with_errors, out.meta.total
        );
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_plot(a: PlotArgs) -> Result<ExitCode> {
    let (series, style) = match a.figure {
        Figure::Uv => {
            let p = a.profile.build()?;
            uv_portrait(
                &p,
                a.b0,
                a.u,
                a.v,
                a.r,
                a.horizon,
                &IntegratorSettings::default(),
            )?
        }
        Figure::Moments => {
            let env = deta_envelopes(
                a.u_plus,
                a.v_minus,
                a.v_plus,
                a.b0,
                a.lambda_minus,
                a.lambda_plus,
                a.d0,
                a.eta0,
            )?;
            moment_portrait(&env, a.d0, a.eta0, a.eta_max.unwrap_or(1.2 * a.eta0))?
        }
    };
    emit_phase_svg(&series, &style, &a.out)?;
    println!("svg: {}", a.out.display());
    Ok(ExitCode::SUCCESS)
}
