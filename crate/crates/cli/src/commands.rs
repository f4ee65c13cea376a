use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};
use solscope_core::bench::{
    default_t_grid, verify_high_energy, verify_near_threshold, verify_projection_weight_bound,
    verify_time_smoothing, verify_weight_absorption, BenchSettings, EstimateReport, ProbeContext, SmoothingVariant,
};
use solscope_core::dilation::{LogGrid, ProjectionParams};
use solscope_core::nls::{shoot_ground_state, EvolutionConfig};
use solscope_core::observables::{observable_series, rpres_check, ObservableSpec, RpresReport};
use solscope_core::radial::{build_grid, Grid, RadialField};
use solscope_core::scattering::{
    compute_psi_loc, default_delta, default_s_grid, extract_free_phase_space, extract_free_pplus, phase_space_limits,
    interaction_decay, mass_budget, History, PsiLocRecord, Route, ScatteringResult,
};

use crate::config::{BenchItem, InitialKind, RouteChoice, RunConfig};
use crate::io::{self, encode_complex, fmt_f64, Csv, GridHeader};

pub const MANIFEST_SCHEMA: &str = "solscope.manifest/1";
pub const SCATTERING_SCHEMA: &str = "solscope.scattering_report/1";
pub const PSI_LOC_SCHEMA: &str = "solscope.psi_loc/1";
pub const ESTIMATE_SCHEMA: &str = "solscope.estimate_report/1";
pub const ESTIMATE_FITS_SCHEMA: &str = "solscope.estimate_fits/1";
pub const OBSERVABLES_SCHEMA: &str = "solscope.observables/1";
pub const OBSERVABLES_REPORT_SCHEMA: &str = "solscope.observables_report/1";
pub const GROUND_STATE_SCHEMA: &str = "solscope.ground_state/1";

/// Most `ψ_loc` records written by `decompose`.
const MAX_PSI_LOC_RECORDS: usize = 41;
/// Fifth point of the default s-grid.
const MIN_S_SPAN: f64 = 5.0625;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Evolve the configured initial data and store the trajectory.
    Simulate,
    /// Shoot the ground state Q for the configured (ω, λ, p).
    GroundState,
    /// Extract ψ_free and the ψ_loc series from a stored trajectory.
    Decompose,
    /// Probe the decay estimates and fit their rates.
    VerifyEstimates,
    /// Propagation observables and the relative propagation check.
    Observables,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema: &'static str,
    command: Command,
    config_sha256: String,
    seed: u64,
    versions: Versions,
    threads: usize,
    wall_time_seconds: f64,
    outputs: &'a [String],
    failed: Option<&'a str>,
}

/// A failure raised after the command has written its outputs.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct ItemFailed {
    pub code: u8,
    pub message: String,
}

#[derive(Serialize)]
struct Versions {
    solscope: &'static str,
    solscope_core: &'static str,
}

/// Runs `command` and writes `manifest.json` next to its outputs.
pub fn run(command: Command, config_text: &str, cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let start = Instant::now();
    io::create_dir(out)?;
    let (outputs, failed) = match command {
        Command::Simulate => (simulate(cfg, out)?, None),
        Command::GroundState => (ground_state(cfg, out)?, None),
        Command::Decompose => (decompose(cfg, out)?, None),
        Command::VerifyEstimates => verify_estimates(cfg, out)?,
        Command::Observables => (observables(cfg, out)?, None),
    };
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        command,
        config_sha256: format!("{:x}", Sha256::digest(config_text.as_bytes())),
        seed: cfg.seed,
        versions: Versions {
            solscope: env!("CARGO_PKG_VERSION"),
            solscope_core: solscope_core::VERSION,
        },
        threads: rayon::current_num_threads(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        outputs: &outputs,
        failed: failed.as_ref().map(|f| f.message.as_str()),
    };
    io::write_json(&out.join("manifest.json"), &manifest)?;
    match failed {
        Some(f) => Err(f.into()),
        None => Ok(outputs),
    }
}

fn grid_of(cfg: &RunConfig) -> Result<Arc<Grid>> {
    Ok(build_grid(cfg.grid.n, cfg.grid.r_max, cfg.grid.num_points)?)
}

fn projection_params(cfg: &RunConfig, grid: &Grid, weight_power: f64) -> Result<ProjectionParams> {
    let mut p = ProjectionParams::default_for(grid, weight_power);
    p.m = cfg.projection.m;
    if let Some(r) = cfg.projection.r {
        p.r = r;
    }
    if let Some(k) = cfg.projection.log_points {
        p.log_grid = LogGrid {
            num_points: k,
            ..p.log_grid
        };
    }
    p.validate()?;
    Ok(p)
}

pub fn initial_data(cfg: &RunConfig, grid: &Arc<Grid>) -> Result<RadialField> {
    let i = &cfg.initial;
    Ok(match i.kind {
        InitialKind::Gaussian => RadialField::from_fn(grid, |r| {
            let env = i.amplitude * (-(r - i.center).powi(2) / (2.0 * i.width * i.width)).exp();
            Complex64::from_polar(env, i.momentum * r)
        }),
        InitialKind::GroundState => {
            let gs = &cfg.ground_state;
            shoot_ground_state(grid, gs.omega, gs.lambda, gs.p)?.scale(Complex64::new(i.amplitude, 0.0))
        }
    })
}

fn evolution_config(cfg: &RunConfig, grid: &Arc<Grid>) -> Result<EvolutionConfig> {
    let ev = &cfg.evolution;
    let mut ec = EvolutionConfig::new(initial_data(cfg, grid)?, cfg.nonlinearity_spec(), ev.t_end);
    if let Some(dt) = ev.dt {
        ec = ec.with_dt(dt);
    }
    if let Some(s) = ev.snapshot_stride {
        ec.snapshot_stride = s;
    }
    ec.absorbing_mask = ev.absorbing_mask;
    ec.mask_strength = ev.mask_strength;
    ec.h1_ceiling_factor = ev.h1_ceiling_factor;
    ec.cook_radius = ev.cook_radius;
    Ok(ec)
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let grid = grid_of(cfg)?;
    let ec = evolution_config(cfg, &grid)?;
    let history = History::run(&ec, cfg.evolution.t_back)?;
    io::write_history(&out.join("trajectory"), &history)?;
    io::monitors_csv(&history.forward().monitors).write(&out.join("monitors.csv"))?;
    log::info!(
        "simulated {} forward snapshots to t = {}",
        history.forward().times.len(),
        history.span().1
    );
    Ok(vec!["trajectory".into(), "monitors.csv".into()])
}

#[derive(Serialize)]
struct GroundStateReport {
    schema: &'static str,
    omega: f64,
    lambda: f64,
    p: f64,
    mass: f64,
    q0: f64,
    grid: GridHeader,
}

fn ground_state(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let grid = grid_of(cfg)?;
    let gs = &cfg.ground_state;
    let q = shoot_ground_state(&grid, gs.omega, gs.lambda, gs.p)?;
    let mut csv = Csv::new(GROUND_STATE_SCHEMA, &["r", "q"]);
    for (r, v) in grid.nodes().iter().zip(q.values()) {
        csv.row(&[fmt_f64(*r), fmt_f64(v.re)]);
    }
    csv.write(&out.join("ground_state.csv"))?;
    io::write_snapshot(&out.join("ground_state_snapshot.json"), 0.0, &q)?;
    io::write_json(
        &out.join("ground_state.json"),
        &GroundStateReport {
            schema: GROUND_STATE_SCHEMA,
            omega: gs.omega,
            lambda: gs.lambda,
            p: gs.p,
            mass: q.norm_sqr(),
            q0: q.values()[0].re,
            grid: GridHeader::of(&grid),
        },
    )?;
    Ok(vec![
        "ground_state.csv".into(),
        "ground_state_snapshot.json".into(),
        "ground_state.json".into(),
    ])
}

fn trajectory_dir(input: &Option<PathBuf>, out: &Path) -> PathBuf {
    input.clone().unwrap_or_else(|| out.join("trajectory"))
}

fn load_history(input: &Option<PathBuf>, out: &Path) -> Result<History> {
    let dir = trajectory_dir(input, out);
    io::read_history(&dir).with_context(|| format!("loading trajectory from {}", dir.display()))
}

#[derive(Serialize)]
struct RouteSummary {
    route: Route,
    extraction_time: f64,
    cauchy_history: Vec<(f64, f64)>,
    incoming_reach: Option<f64>,
    accepted: bool,
    psi_free_norm: f64,
    mass_budget: f64,
}

impl RouteSummary {
    fn of(history: &History, res: &ScatteringResult) -> Result<Self> {
        Ok(RouteSummary {
            route: res.route,
            extraction_time: res.extraction_time,
            cauchy_history: res.cauchy_history.clone(),
            incoming_reach: res.incoming_reach,
            accepted: res.cauchy_accepted(history.initial().norm()),
            psi_free_norm: res.psi_free.norm(),
            mass_budget: mass_budget(history, res)?,
        })
    }
}

#[derive(Serialize)]
struct ScatteringReport {
    schema: &'static str,
    grid: GridHeader,
    initial_norm: f64,
    delta: f64,
    primary: RouteSummary,
    secondary: Option<RouteSummary>,
    /// `‖ψ_free(primary) - ψ_free(secondary)‖`.
    route_distance: Option<f64>,
    /// Largest `‖ψ(t) - e^{-itH₀}ψ_free‖` over the records.
    max_psi_loc_l2: f64,
    /// Operator-form residual at the last record, when Cook integrals exist.
    final_residual: Option<f64>,
    psi_free_encoding: &'static str,
    psi_free: String,
}

fn decompose(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let sc = &cfg.scattering;
    let history = load_history(&sc.input, out)?;
    let grid = history.grid().clone();
    let params = projection_params(cfg, &grid, 0.0)?;
    let delta = match sc.delta {
        Some(d) => d,
        None => default_delta(interaction_decay(&cfg.nonlinearity_spec(), grid.dimension()))?,
    };
    let end = history.span().1;
    // default leaves room for five s-grid points, the fewest the Cauchy test accepts
    // and for snapping to the nearest snapshot
    let spacing = history.forward().times.get(1).copied().unwrap_or(0.0);
    let t = sc.t.unwrap_or_else(|| f64::min(0.6 * end, end - MIN_S_SPAN - spacing).max(0.0));
    let s_grid = default_s_grid(sc.s_max.unwrap_or(end - t));
    let k = sc.t_grid_points;
    let t_grid: Vec<f64> = (0..k).map(|j| 0.5 * end * (1.0 + j as f64 / (k - 1) as f64)).collect();

    let pplus = || extract_free_pplus(&history, t, &params, &s_grid, delta);
    let phase = || extract_free_phase_space(&history, sc.alpha, &t_grid, delta);
    let (mut primary, secondary) = match sc.route {
        RouteChoice::Pplus => (pplus()?, None),
        RouteChoice::PhaseSpace => (phase()?, None),
        // the comparison route is reported with its acceptance flag instead of aborting
        RouteChoice::Both => (pplus()?, Some(phase_space_limits(&history, sc.alpha, &t_grid, delta)?)),
    };

    let times = &history.forward().times;
    let stride = times.len().div_ceil(MAX_PSI_LOC_RECORDS).max(1);
    let mut picks: Vec<f64> = times.iter().step_by(stride).copied().collect();
    if picks.last() != times.last() {
        picks.push(*times.last().unwrap());
    }
    for &tk in &picks {
        compute_psi_loc(&history, &mut primary, tk, &params)?;
    }
    let mut csv = Csv::new(PSI_LOC_SCHEMA, &["t", "l2", "wdelta", "a1", "a2", "residual"]);
    for r in &primary.psi_loc_series {
        let PsiLocRecord { t, l2, wdelta, a1, a2, residual } = *r;
        csv.row(&[fmt_f64(t), fmt_f64(l2), fmt_f64(wdelta), fmt_f64(a1), fmt_f64(a2), residual.map(fmt_f64).unwrap_or_default()]);
    }
    csv.write(&out.join("psi_loc.csv"))?;

    let route_distance = match &secondary {
        Some(s) => Some(primary.psi_free.sub(&s.psi_free)?.norm()),
        None => None,
    };
    let report = ScatteringReport {
        schema: SCATTERING_SCHEMA,
        grid: GridHeader::of(&grid),
        initial_norm: history.initial().norm(),
        delta,
        primary: RouteSummary::of(&history, &primary)?,
        secondary: secondary.as_ref().map(|s| RouteSummary::of(&history, s)).transpose()?,
        route_distance,
        max_psi_loc_l2: primary.psi_loc_series.iter().map(|r| r.l2).fold(0.0, f64::max),
        final_residual: primary.psi_loc_series.last().and_then(|r| r.residual),
        psi_free_encoding: "base64:f64le:re,im",
        psi_free: encode_complex(primary.psi_free.values()),
    };
    io::write_json(&out.join("scattering_report.json"), &report)?;
    Ok(vec!["psi_loc.csv".into(), "scattering_report.json".into()])
}

#[derive(Serialize)]
struct EstimateFits<'a> {
    schema: &'static str,
    seed: u64,
    reports: Vec<FitEntry<'a>>,
}

#[derive(Serialize)]
struct FitEntry<'a> {
    item: &'a str,
    params: &'a str,
    fit: Option<solscope_core::bench::DecayFit>,
    predicted_slope: Option<f64>,
    slope_bound: Option<f64>,
    integral: Option<f64>,
    last_decade_fraction: Option<f64>,
    verdict: String,
    note: String,
}

/// One bench item: its label and either the report or the error that stopped it.
pub struct BenchOutcome {
    pub item: BenchItem,
    pub params: String,
    pub result: solscope_core::Result<EstimateReport>,
}

/// Runs every configured item; an item that fails does not stop the rest.
pub fn run_bench(cfg: &RunConfig) -> Result<Vec<BenchOutcome>> {
    let b = &cfg.bench;
    let grid = grid_of(cfg)?;
    let settings = |weight_power: f64| -> Result<BenchSettings> {
        let mut ctx = ProbeContext::new(grid.clone(), projection_params(cfg, &grid, weight_power)?, cfg.seed);
        ctx.band_ceiling = b.band_ceiling;
        let mut s = BenchSettings::new(ctx);
        s.num_probes = b.num_probes;
        s.power_iters = b.power_iters;
        Ok(s)
    };
    let t_grid = b.t_grid.clone().unwrap_or_else(default_t_grid);
    let mut out = Vec::new();
    for &item in &b.items {
        match item {
            BenchItem::HighEnergy => {
                let (sigma, c) = (b.high_energy_sigma, b.high_energy_c);
                out.push(BenchOutcome {
                    item,
                    params: format!("sigma={sigma} l=0 c={c}"),
                    result: verify_high_energy(sigma, 0.0, c, &t_grid, &settings(0.0)?),
                });
            }
            BenchItem::NearThreshold => {
                let (sigma, eps) = (b.near_threshold_sigma, b.near_threshold_eps);
                out.push(BenchOutcome {
                    item,
                    params: format!("sigma={sigma} l=0 eps={eps}"),
                    result: verify_near_threshold(sigma, 0.0, eps, &t_grid, &settings(0.0)?),
                });
            }
            BenchItem::WeightAbsorption => {
                let sigma = b.weight_sigma;
                let s = settings(0.0)?;
                let result =
                    default_delta(sigma).and_then(|delta| verify_weight_absorption(sigma, delta, b.weight_t_max, None, &s));
                out.push(BenchOutcome {
                    item,
                    params: format!("sigma={sigma}"),
                    result,
                });
            }
            BenchItem::TimeSmoothing => {
                let (sigma, l) = (b.smoothing_sigma, b.smoothing_l);
                out.push(BenchOutcome {
                    item,
                    params: format!("sigma={sigma} l={l} variant=Fractional"),
                    result: verify_time_smoothing(sigma, l, SmoothingVariant::Fractional, b.smoothing_t_max, &settings(0.0)?),
                });
            }
            BenchItem::ProjectionWeight => {
                for &n in &b.projection_powers {
                    let mut s = settings(n)?;
                    // R = 1.5·2N/π unless set explicitly
                    if cfg.projection.r.is_none() && n > 0.0 {
                        s.ctx.params.r = 1.5 * 2.0 * n / std::f64::consts::PI;
                    }
                    out.push(BenchOutcome {
                        item,
                        params: format!("N={n} R={}", s.ctx.params.r),
                        result: verify_projection_weight_bound(n, &s),
                    });
                }
            }
        }
    }
    Ok(out)
}

fn verify_estimates(cfg: &RunConfig, out: &Path) -> Result<(Vec<String>, Option<ItemFailed>)> {
    let outcomes = run_bench(cfg)?;
    let mut csv = Csv::new(ESTIMATE_SCHEMA, &["lemma_item", "params", "t", "norm", "stderr"]);
    let mut entries = Vec::new();
    let mut first_error = None;
    for o in &outcomes {
        match &o.result {
            Ok(rep) => {
                for row in &rep.rows {
                    csv.row(&[rep.item.clone(), rep.params.clone(), fmt_f64(row.t), fmt_f64(row.norm), fmt_f64(row.stderr)]);
                }
                log::info!("{} [{}]: {}", rep.item, rep.params, rep.verdict);
                entries.push(FitEntry {
                    item: &rep.item,
                    params: &rep.params,
                    fit: rep.fit,
                    predicted_slope: rep.predicted_slope,
                    slope_bound: rep.slope_bound,
                    integral: rep.integral,
                    last_decade_fraction: rep.last_decade_fraction,
                    verdict: rep.verdict.to_string(),
                    note: rep.note.clone(),
                });
            }
            Err(e) => {
                log::error!("{} [{}]: {e}", o.item, o.params);
                entries.push(FitEntry {
                    item: item_name(o.item),
                    params: &o.params,
                    fit: None,
                    predicted_slope: None,
                    slope_bound: None,
                    integral: None,
                    last_decade_fraction: None,
                    verdict: "ERROR".into(),
                    note: e.to_string(),
                });
                if first_error.is_none() {
                    first_error = Some(ItemFailed {
                        code: core_exit_code(e),
                        message: format!("bench item {}: {e}", o.item),
                    });
                }
            }
        }
    }
    csv.write(&out.join("estimate_report.csv"))?;
    io::write_json(
        &out.join("estimate_fits.json"),
        &EstimateFits {
            schema: ESTIMATE_FITS_SCHEMA,
            seed: cfg.seed,
            reports: entries,
        },
    )?;
    Ok((vec!["estimate_report.csv".into(), "estimate_fits.json".into()], first_error))
}

fn item_name(item: BenchItem) -> &'static str {
    match item {
        BenchItem::HighEnergy => "high_energy",
        BenchItem::NearThreshold => "near_threshold",
        BenchItem::WeightAbsorption => "weight_absorption",
        BenchItem::TimeSmoothing => "time_smoothing",
        BenchItem::ProjectionWeight => "projection_weight",
    }
}

#[derive(Serialize)]
struct ObservableEntry {
    name: String,
    alpha: f64,
    rpres: RpresReport,
}

#[derive(Serialize)]
struct ObservablesReport {
    schema: &'static str,
    mass: f64,
    g_budget: f64,
    observables: Vec<ObservableEntry>,
}

fn observables(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let ob = &cfg.observables;
    let history = load_history(&ob.input, out)?;
    let traj = history.forward();
    let mass = traj.initial().norm_sqr();
    let g_budget = ob.g_budget.unwrap_or(1e-2 * mass);
    let mut csv = Csv::new(OBSERVABLES_SCHEMA, &["t", "name", "value"]);
    let mut entries = Vec::new();
    for &alpha in &ob.alpha {
        let spec = ObservableSpec::phase_space(alpha, traj.grid().dimension())?;
        let name = spec.name();
        let series = observable_series(traj, &spec)?;
        for (t, v) in &series {
            csv.row(&[fmt_f64(*t), name.clone(), fmt_f64(*v)]);
        }
        let rpres = rpres_check(&series, g_budget)?;
        log::info!("{name}: rpres {}", if rpres.pass { "PASS" } else { "FAIL" });
        entries.push(ObservableEntry { name, alpha, rpres });
    }
    csv.write(&out.join("observables.csv"))?;
    io::write_json(
        &out.join("observables_report.json"),
        &ObservablesReport {
            schema: OBSERVABLES_REPORT_SCHEMA,
            mass,
            g_budget,
            observables: entries,
        },
    )?;
    Ok(vec!["observables.csv".into(), "observables_report.json".into()])
}

fn core_exit_code(e: &solscope_core::Error) -> u8 {
    use solscope_core::Error as E;
    match e {
        E::InvalidParameter(_)
        | E::InvalidAlpha { .. }
        | E::InadmissiblePair { .. }
        | E::CoverageGap { .. }
        | E::WindowMismatch(_)
        | E::DegenerateInput(_) => 2,
        E::NanDetected { .. } | E::H1CeilingExceeded { .. } => 3,
        E::NotConverged(_) | E::NonConvergentIteration(_) | E::NoSignChange(_) | E::NotDecayed { .. } => 4,
        E::GridMismatch | E::Format(_) | E::Io(_) => 5,
    }
}

/// Maps a failure to the documented exit status.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<ItemFailed>() {
            return f.code;
        }
        if cause.downcast_ref::<crate::config::ConfigError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<io::IoError>() {
            if !matches!(e, io::IoError::Core(_)) {
                return 5;
            }
        }
        if let Some(e) = cause.downcast_ref::<solscope_core::Error>() {
            return core_exit_code(e);
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 5;
        }
    }
    1
}
