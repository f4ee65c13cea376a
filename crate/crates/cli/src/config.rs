//! Flat `section.key = value` run configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use solscope_core::dilation::Sign;
use solscope_core::nls::{NonlinearitySpec, PotentialProfile, Temporal, Term};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error:\n{}", list(.0))]
    Parse(Vec<Violation>),
    #[error("config validation error:\n{}", list(.0))]
    Invalid(Vec<Violation>),
}

impl ConfigError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ConfigError::Parse(v) | ConfigError::Invalid(v) => v,
        }
    }
}

fn list(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  - {x}")).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    /// `a·e^{-(r-c)²/(2w²)}·e^{ikr}`
    Gaussian,
    GroundState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlinearityKind {
    Free,
    Monomial,
    Saturated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    None,
    Gaussian,
    Bracket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemporalKind {
    Constant,
    Sin,
    Cos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteChoice {
    Pplus,
    PhaseSpace,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BenchItem {
    HighEnergy,
    NearThreshold,
    WeightAbsorption,
    TimeSmoothing,
    ProjectionWeight,
}

impl BenchItem {
    pub const ALL: [BenchItem; 5] = [
        BenchItem::HighEnergy,
        BenchItem::NearThreshold,
        BenchItem::WeightAbsorption,
        BenchItem::TimeSmoothing,
        BenchItem::ProjectionWeight,
    ];
}

macro_rules! keyword_enum {
    ($t:ty { $($name:literal => $v:expr),+ $(,)? }) => {
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($v),)+
                    _ => Err(format!("expected one of {}", [$($name),+].join(", "))),
                }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $v { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

keyword_enum!(InitialKind { "gaussian" => InitialKind::Gaussian, "ground_state" => InitialKind::GroundState });
keyword_enum!(NonlinearityKind {
    "free" => NonlinearityKind::Free,
    "monomial" => NonlinearityKind::Monomial,
    "saturated" => NonlinearityKind::Saturated,
});
keyword_enum!(PotentialKind {
    "none" => PotentialKind::None,
    "gaussian" => PotentialKind::Gaussian,
    "bracket" => PotentialKind::Bracket,
});
keyword_enum!(TemporalKind { "constant" => TemporalKind::Constant, "sin" => TemporalKind::Sin, "cos" => TemporalKind::Cos });
keyword_enum!(RouteChoice { "pplus" => RouteChoice::Pplus, "phase_space" => RouteChoice::PhaseSpace, "both" => RouteChoice::Both });
keyword_enum!(BenchItem {
    "high_energy" => BenchItem::HighEnergy,
    "near_threshold" => BenchItem::NearThreshold,
    "weight_absorption" => BenchItem::WeightAbsorption,
    "time_smoothing" => BenchItem::TimeSmoothing,
    "projection_weight" => BenchItem::ProjectionWeight,
});

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Focusing(pub Sign);

impl FromStr for Focusing {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "focusing" => Ok(Focusing(Sign::Minus)),
            "defocusing" => Ok(Focusing(Sign::Plus)),
            _ => Err("expected focusing or defocusing".into()),
        }
    }
}

impl fmt::Display for Focusing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0 == Sign::Minus { "focusing" } else { "defocusing" })
    }
}

/// Values rendered back to text; `{}` on `f64` is the shortest round-trip form.
trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! display_value {
    ($($t:ty),+) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                s.parse::<$t>().map_err(|e| e.to_string())
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )+};
}

display_value!(f64, usize, u64, bool, InitialKind, NonlinearityKind, PotentialKind, TemporalKind, RouteChoice, BenchItem, Focusing);

impl ConfigValue for PathBuf {
    fn parse_value(s: &str) -> Result<Self, String> {
        Ok(PathBuf::from(s))
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

impl<T: ConfigValue> ConfigValue for Option<T> {
    fn parse_value(s: &str) -> Result<Self, String> {
        if s == "auto" {
            Ok(None)
        } else {
            T::parse_value(s).map(Some)
        }
    }
    fn render(&self) -> String {
        self.as_ref().map_or_else(|| "auto".into(), T::render)
    }
}

impl<T: ConfigValue> ConfigValue for Vec<T> {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.split(',').map(|x| T::parse_value(x.trim())).collect()
    }
    fn render(&self) -> String {
        self.iter().map(T::render).collect::<Vec<_>>().join(", ")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub n: usize,
    pub r_max: f64,
    pub num_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialConfig {
    pub kind: InitialKind,
    pub amplitude: f64,
    pub width: f64,
    pub center: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearityConfig {
    pub kind: NonlinearityKind,
    pub sign: Focusing,
    pub lambda: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialConfig {
    pub kind: PotentialKind,
    pub amplitude: f64,
    pub width: f64,
    pub power: f64,
    pub temporal: TemporalKind,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionBlock {
    pub t_end: f64,
    pub dt: Option<f64>,
    pub snapshot_stride: Option<usize>,
    pub t_back: f64,
    pub absorbing_mask: bool,
    pub mask_strength: f64,
    pub h1_ceiling_factor: f64,
    pub cook_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundStateConfig {
    pub omega: f64,
    pub lambda: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionConfig {
    pub m: f64,
    pub r: Option<f64>,
    pub log_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringConfig {
    pub input: Option<PathBuf>,
    pub route: RouteChoice,
    pub t: Option<f64>,
    pub alpha: f64,
    pub delta: Option<f64>,
    pub s_max: Option<f64>,
    pub t_grid_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub items: Vec<BenchItem>,
    pub num_probes: usize,
    pub power_iters: usize,
    pub band_ceiling: Option<f64>,
    pub t_grid: Option<Vec<f64>>,
    pub high_energy_sigma: f64,
    pub high_energy_c: f64,
    pub near_threshold_sigma: f64,
    pub near_threshold_eps: f64,
    pub weight_sigma: f64,
    pub weight_t_max: f64,
    pub smoothing_sigma: f64,
    pub smoothing_l: f64,
    pub smoothing_t_max: f64,
    pub projection_powers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservablesConfig {
    pub input: Option<PathBuf>,
    pub alpha: Vec<f64>,
    pub g_budget: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub initial: InitialConfig,
    pub nonlinearity: NonlinearityConfig,
    pub potential: PotentialConfig,
    pub evolution: EvolutionBlock,
    pub ground_state: GroundStateConfig,
    pub projection: ProjectionConfig,
    pub scattering: ScatteringConfig,
    pub bench: BenchConfig,
    pub observables: ObservablesConfig,
    /// Keys set explicitly in the source document.
    pub explicit: BTreeSet<String>,
}

struct Entry {
    value: String,
    line: usize,
    column: usize,
}

struct Reader {
    entries: BTreeMap<String, Entry>,
    used: BTreeSet<String>,
    errors: Vec<Violation>,
}

impl Reader {
    fn get<T: ConfigValue>(&mut self, key: &str, default: T) -> T {
        self.used.insert(key.to_string());
        let Some(e) = self.entries.get(key) else { return default };
        match T::parse_value(&e.value) {
            Ok(v) => v,
            Err(msg) => {
                self.errors.push(Violation {
                    line: Some(e.line),
                    column: Some(e.column),
                    message: format!("{key}: cannot parse {:?}: {msg}", e.value),
                });
                default
            }
        }
    }
}

fn tokenize(text: &str) -> Result<BTreeMap<String, Entry>, Vec<Violation>> {
    let mut entries = BTreeMap::new();
    let mut errors = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        let Some(eq) = body.find('=') else {
            let column = body.len() - body.trim_start().len() + 1;
            errors.push(Violation {
                line: Some(line),
                column: Some(column),
                message: "expected `section.key = value`".into(),
            });
            continue;
        };
        let key = body[..eq].trim();
        let value = body[eq + 1..].trim();
        let key_col = body.len() - body.trim_start().len() + 1;
        let value_col = eq + 2 + (body[eq + 1..].len() - body[eq + 1..].trim_start().len());
        let well_formed = key.split('.').count() == 2
            && key.split('.').all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'));
        if !well_formed {
            errors.push(Violation {
                line: Some(line),
                column: Some(key_col),
                message: format!("key {key:?} is not of the form section.key"),
            });
            continue;
        }
        if value.is_empty() {
            errors.push(Violation {
                line: Some(line),
                column: Some(value_col),
                message: format!("{key}: missing value"),
            });
            continue;
        }
        if let Some(prev) = entries.get(key) {
            let prev: &Entry = prev;
            errors.push(Violation {
                line: Some(line),
                column: Some(key_col),
                message: format!("{key} already set on line {}", prev.line),
            });
            continue;
        }
        entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line,
                column: value_col,
            },
        );
    }
    if errors.is_empty() {
        Ok(entries)
    } else {
        Err(errors)
    }
}

/// Parses and validates a document, reporting every problem found.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let entries = tokenize(text).map_err(ConfigError::Parse)?;
    let explicit: BTreeSet<String> = entries.keys().cloned().collect();
    let mut rd = Reader {
        entries,
        used: BTreeSet::new(),
        errors: Vec::new(),
    };
    let cfg = RunConfig {
        seed: rd.get("run.seed", 0u64),
        grid: GridConfig {
            n: rd.get("grid.n", 5usize),
            r_max: rd.get("grid.r_max", 60.0),
            num_points: rd.get("grid.num_points", 256usize),
        },
        initial: InitialConfig {
            kind: rd.get("initial.kind", InitialKind::Gaussian),
            amplitude: rd.get("initial.amplitude", 1.0),
            width: rd.get("initial.width", 1.0),
            center: rd.get("initial.center", 0.0),
            momentum: rd.get("initial.momentum", 0.0),
        },
        nonlinearity: NonlinearityConfig {
            kind: rd.get("nonlinearity.kind", NonlinearityKind::Free),
            sign: rd.get("nonlinearity.sign", Focusing(Sign::Plus)),
            lambda: rd.get("nonlinearity.lambda", 1.0),
            p: rd.get("nonlinearity.p", 1.2),
        },
        potential: PotentialConfig {
            kind: rd.get("potential.kind", PotentialKind::None),
            amplitude: rd.get("potential.amplitude", 0.0),
            width: rd.get("potential.width", 1.0),
            power: rd.get("potential.power", 3.0),
            temporal: rd.get("potential.temporal", TemporalKind::Constant),
            frequency: rd.get("potential.frequency", 1.0),
        },
        evolution: EvolutionBlock {
            t_end: rd.get("evolution.t_end", 10.0),
            dt: rd.get("evolution.dt", None),
            snapshot_stride: rd.get("evolution.snapshot_stride", None),
            t_back: rd.get("evolution.t_back", 0.0),
            absorbing_mask: rd.get("evolution.absorbing_mask", false),
            mask_strength: rd.get("evolution.mask_strength", 2.0),
            h1_ceiling_factor: rd.get("evolution.h1_ceiling_factor", 10.0),
            cook_radius: rd.get("evolution.cook_radius", None),
        },
        ground_state: GroundStateConfig {
            omega: rd.get("ground_state.omega", 0.005),
            lambda: rd.get("ground_state.lambda", 1.0),
            p: rd.get("ground_state.p", 1.2),
        },
        projection: ProjectionConfig {
            m: rd.get("projection.m", 10.0),
            r: rd.get("projection.r", None),
            log_points: rd.get("projection.log_points", None),
        },
        scattering: ScatteringConfig {
            input: rd.get("scattering.input", None),
            route: rd.get("scattering.route", RouteChoice::Both),
            t: rd.get("scattering.t", None),
            alpha: rd.get("scattering.alpha", 0.55),
            delta: rd.get("scattering.delta", None),
            s_max: rd.get("scattering.s_max", None),
            t_grid_points: rd.get("scattering.t_grid_points", 11usize),
        },
        bench: BenchConfig {
            items: rd.get("bench.items", BenchItem::ALL.to_vec()),
            num_probes: rd.get("bench.num_probes", 8usize),
            power_iters: rd.get("bench.power_iters", 20usize),
            band_ceiling: rd.get("bench.band_ceiling", None),
            t_grid: rd.get("bench.t_grid", None),
            high_energy_sigma: rd.get("bench.high_energy_sigma", 3.0),
            high_energy_c: rd.get("bench.high_energy_c", 1.0),
            near_threshold_sigma: rd.get("bench.near_threshold_sigma", 2.5),
            near_threshold_eps: rd.get("bench.near_threshold_eps", 0.1),
            weight_sigma: rd.get("bench.weight_sigma", 2.5),
            weight_t_max: rd.get("bench.weight_t_max", 100.0),
            smoothing_sigma: rd.get("bench.smoothing_sigma", 2.5),
            smoothing_l: rd.get("bench.smoothing_l", 0.5),
            smoothing_t_max: rd.get("bench.smoothing_t_max", 50.0),
            projection_powers: rd.get("bench.projection_powers", vec![1.0, 2.0]),
        },
        observables: ObservablesConfig {
            input: rd.get("observables.input", None),
            alpha: rd.get("observables.alpha", vec![0.3]),
            g_budget: rd.get("observables.g_budget", None),
        },
        explicit,
    };
    let mut errors = std::mem::take(&mut rd.errors);
    for (key, e) in &rd.entries {
        if !rd.used.contains(key) {
            errors.push(Violation {
                line: Some(e.line),
                column: Some(1),
                message: format!("unknown key {key}"),
            });
        }
    }
    if !errors.is_empty() {
        errors.sort_by_key(|v| v.line);
        return Err(ConfigError::Parse(errors));
    }
    let invalid = cfg.violations();
    if invalid.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(invalid))
    }
}

fn positive(errs: &mut Vec<String>, key: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errs.push(format!("{key} = {v} must be positive and finite"));
    }
}

impl RunConfig {
    pub fn default_config() -> RunConfig {
        parse_config("").expect("defaults are valid")
    }

    /// Every failed invariant, independent of which command will run.
    pub fn violations(&self) -> Vec<Violation> {
        let mut e = Vec::new();
        let g = &self.grid;
        if g.n < 3 {
            e.push(format!("grid.n = {} violates n >= 3", g.n));
        }
        positive(&mut e, "grid.r_max", g.r_max);
        if g.num_points < 8 {
            e.push(format!("grid.num_points = {} must be at least 8", g.num_points));
        }
        let i = &self.initial;
        positive(&mut e, "initial.width", i.width);
        if !i.amplitude.is_finite() || !i.center.is_finite() || !i.momentum.is_finite() {
            e.push("initial amplitude, center and momentum must be finite".into());
        }
        let nl = &self.nonlinearity;
        if nl.kind != NonlinearityKind::Free {
            positive(&mut e, "nonlinearity.lambda", nl.lambda);
            positive(&mut e, "nonlinearity.p", nl.p);
        }
        let p = &self.potential;
        if p.kind != PotentialKind::None {
            positive(&mut e, "potential.width", p.width);
            positive(&mut e, "potential.power", p.power);
            if !p.amplitude.is_finite() || !p.frequency.is_finite() {
                e.push("potential amplitude and frequency must be finite".into());
            }
        }
        let ev = &self.evolution;
        positive(&mut e, "evolution.t_end", ev.t_end);
        if let Some(dt) = ev.dt {
            positive(&mut e, "evolution.dt", dt);
        }
        if ev.snapshot_stride == Some(0) {
            e.push("evolution.snapshot_stride must be at least 1".into());
        }
        if !(ev.t_back >= 0.0 && ev.t_back.is_finite()) {
            e.push(format!("evolution.t_back = {} must be non-negative", ev.t_back));
        }
        if !(ev.h1_ceiling_factor > 1.0) {
            e.push(format!("evolution.h1_ceiling_factor = {} must exceed 1", ev.h1_ceiling_factor));
        }
        if ev.absorbing_mask {
            positive(&mut e, "evolution.mask_strength", ev.mask_strength);
        }
        if let Some(r) = ev.cook_radius {
            if !(r > 0.0 && r < g.r_max) {
                e.push(format!("evolution.cook_radius = {r} must lie in (0, grid.r_max)"));
            }
        }
        let gs = &self.ground_state;
        positive(&mut e, "ground_state.omega", gs.omega);
        positive(&mut e, "ground_state.lambda", gs.lambda);
        positive(&mut e, "ground_state.p", gs.p);
        let pr = &self.projection;
        if !pr.m.is_finite() {
            e.push("projection.m must be finite".into());
        }
        if let Some(r) = pr.r {
            if !(r > 2.0 / std::f64::consts::PI) {
                e.push(format!("projection.r = {r} must exceed 2/π"));
            }
        }
        if let Some(k) = pr.log_points {
            if k < 256 || !k.is_power_of_two() {
                e.push(format!("projection.log_points = {k} must be a power of two >= 256"));
            }
        }
        let upper = 1.0 - 2.0 / g.n as f64;
        let alpha_rule = |key: &str, a: f64| {
            (!(a > 0.0 && a < upper)).then(|| {
                format!("{key} = {a} outside (0, 1 - 2/n) = (0, {}) for n = {}", fraction(g.n - 2, g.n), g.n)
            })
        };
        let sc = &self.scattering;
        if g.n >= 3 {
            e.extend(alpha_rule("scattering.alpha", sc.alpha));
            for &a in &self.observables.alpha {
                e.extend(alpha_rule("observables.alpha", a));
            }
        }
        if let Some(t) = sc.t {
            positive(&mut e, "scattering.t", t);
        }
        if let Some(d) = sc.delta {
            if !(d > 0.0 && d <= 1.0 / 80.0) {
                e.push(format!("scattering.delta = {d} must lie in (0, 1/80]"));
            }
        }
        if let Some(s) = sc.s_max {
            positive(&mut e, "scattering.s_max", s);
        }
        if sc.t_grid_points < 2 {
            e.push("scattering.t_grid_points must be at least 2".into());
        }
        let b = &self.bench;
        if b.items.is_empty() {
            e.push("bench.items must name at least one item".into());
        }
        if b.num_probes < 8 {
            e.push(format!("bench.num_probes = {} must be at least 8", b.num_probes));
        }
        if b.power_iters < 20 {
            e.push(format!("bench.power_iters = {} must be at least 20", b.power_iters));
        }
        if let Some(k) = b.band_ceiling {
            positive(&mut e, "bench.band_ceiling", k);
        }
        if let Some(ts) = &b.t_grid {
            if ts.len() < 5 || ts.iter().any(|t| !(*t >= 1.0 && *t <= 100.0)) {
                e.push("bench.t_grid needs at least 5 times in [1, 100]".into());
            }
        }
        if !(b.near_threshold_eps > 0.0 && b.near_threshold_eps <= 0.5) {
            e.push(format!("bench.near_threshold_eps = {} must lie in (0, 1/2]", b.near_threshold_eps));
        }
        if !(b.smoothing_l >= 0.0 && b.smoothing_l < 1.0) {
            e.push(format!("bench.smoothing_l = {} must lie in [0, 1)", b.smoothing_l));
        }
        for (key, v) in [
            ("bench.high_energy_sigma", b.high_energy_sigma),
            ("bench.high_energy_c", b.high_energy_c),
            ("bench.near_threshold_sigma", b.near_threshold_sigma),
            ("bench.weight_sigma", b.weight_sigma),
            ("bench.weight_t_max", b.weight_t_max),
            ("bench.smoothing_sigma", b.smoothing_sigma),
            ("bench.smoothing_t_max", b.smoothing_t_max),
        ] {
            positive(&mut e, key, v);
        }
        if b.projection_powers.iter().any(|n| !(*n >= 0.0 && n.is_finite())) {
            e.push("bench.projection_powers must be non-negative".into());
        }
        if self.observables.alpha.is_empty() {
            e.push("observables.alpha must list at least one value".into());
        }
        if let Some(gb) = self.observables.g_budget {
            if !(gb >= 0.0 && gb.is_finite()) {
                e.push(format!("observables.g_budget = {gb} must be non-negative"));
            }
        }
        e.into_iter()
            .map(|message| Violation {
                line: None,
                column: None,
                message,
            })
            .collect()
    }

    pub fn nonlinearity_spec(&self) -> NonlinearitySpec {
        let nl = &self.nonlinearity;
        let mut spec = match nl.kind {
            NonlinearityKind::Free => NonlinearitySpec::free(),
            NonlinearityKind::Monomial => NonlinearitySpec::monomial(nl.sign.0, nl.lambda, nl.p),
            NonlinearityKind::Saturated => NonlinearitySpec::saturated(nl.lambda, nl.p),
        };
        let p = &self.potential;
        let profile = match p.kind {
            PotentialKind::None => None,
            PotentialKind::Gaussian => Some(PotentialProfile::Gaussian {
                amplitude: p.amplitude,
                width: p.width,
            }),
            PotentialKind::Bracket => Some(PotentialProfile::Bracket {
                amplitude: p.amplitude,
                power: p.power,
            }),
        };
        if let Some(profile) = profile {
            let temporal = match p.temporal {
                TemporalKind::Constant => Temporal::Constant,
                TemporalKind::Sin => Temporal::Sin(p.frequency),
                TemporalKind::Cos => Temporal::Cos(p.frequency),
            };
            spec = spec.with(Term::Potential { profile, temporal });
        }
        spec
    }

    /// Canonical text: explicit keys first, then a `# defaults` section.
    pub fn to_text(&self) -> String {
        let pairs = self.pairs();
        let mut out = String::new();
        for (k, v) in pairs.iter().filter(|(k, _)| self.explicit.contains(*k)) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out.push_str("# defaults\n");
        for (k, v) in pairs.iter().filter(|(k, _)| !self.explicit.contains(*k)) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    fn pairs(&self) -> Vec<(&'static str, String)> {
        let (g, i, nl, p, ev) = (&self.grid, &self.initial, &self.nonlinearity, &self.potential, &self.evolution);
        let (gs, pr, sc, b, ob) = (&self.ground_state, &self.projection, &self.scattering, &self.bench, &self.observables);
        vec![
            ("run.seed", self.seed.render()),
            ("grid.n", g.n.render()),
            ("grid.r_max", g.r_max.render()),
            ("grid.num_points", g.num_points.render()),
            ("initial.kind", i.kind.render()),
            ("initial.amplitude", i.amplitude.render()),
            ("initial.width", i.width.render()),
            ("initial.center", i.center.render()),
            ("initial.momentum", i.momentum.render()),
            ("nonlinearity.kind", nl.kind.render()),
            ("nonlinearity.sign", nl.sign.render()),
            ("nonlinearity.lambda", nl.lambda.render()),
            ("nonlinearity.p", nl.p.render()),
            ("potential.kind", p.kind.render()),
            ("potential.amplitude", p.amplitude.render()),
            ("potential.width", p.width.render()),
            ("potential.power", p.power.render()),
            ("potential.temporal", p.temporal.render()),
            ("potential.frequency", p.frequency.render()),
            ("evolution.t_end", ev.t_end.render()),
            ("evolution.dt", ev.dt.render()),
            ("evolution.snapshot_stride", ev.snapshot_stride.render()),
            ("evolution.t_back", ev.t_back.render()),
            ("evolution.absorbing_mask", ev.absorbing_mask.render()),
            ("evolution.mask_strength", ev.mask_strength.render()),
            ("evolution.h1_ceiling_factor", ev.h1_ceiling_factor.render()),
            ("evolution.cook_radius", ev.cook_radius.render()),
            ("ground_state.omega", gs.omega.render()),
            ("ground_state.lambda", gs.lambda.render()),
            ("ground_state.p", gs.p.render()),
            ("projection.m", pr.m.render()),
            ("projection.r", pr.r.render()),
            ("projection.log_points", pr.log_points.render()),
            ("scattering.input", sc.input.render()),
            ("scattering.route", sc.route.render()),
            ("scattering.t", sc.t.render()),
            ("scattering.alpha", sc.alpha.render()),
            ("scattering.delta", sc.delta.render()),
            ("scattering.s_max", sc.s_max.render()),
            ("scattering.t_grid_points", sc.t_grid_points.render()),
            ("bench.items", b.items.render()),
            ("bench.num_probes", b.num_probes.render()),
            ("bench.power_iters", b.power_iters.render()),
            ("bench.band_ceiling", b.band_ceiling.render()),
            ("bench.t_grid", b.t_grid.render()),
            ("bench.high_energy_sigma", b.high_energy_sigma.render()),
            ("bench.high_energy_c", b.high_energy_c.render()),
            ("bench.near_threshold_sigma", b.near_threshold_sigma.render()),
            ("bench.near_threshold_eps", b.near_threshold_eps.render()),
            ("bench.weight_sigma", b.weight_sigma.render()),
            ("bench.weight_t_max", b.weight_t_max.render()),
            ("bench.smoothing_sigma", b.smoothing_sigma.render()),
            ("bench.smoothing_l", b.smoothing_l.render()),
            ("bench.smoothing_t_max", b.smoothing_t_max.render()),
            ("bench.projection_powers", b.projection_powers.render()),
            ("observables.input", ob.input.render()),
            ("observables.alpha", ob.alpha.render()),
            ("observables.g_budget", ob.g_budget.render()),
        ]
    }
}

fn fraction(num: usize, den: usize) -> String {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let d = gcd(num, den).max(1);
    format!("{}/{}", num / d, den / d)
}
