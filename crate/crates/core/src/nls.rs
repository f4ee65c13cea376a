//! Split-step evolution of `i∂_t ψ = (H₀ + 𝒩(|ψ|, |x|, t)) ψ`, ground states
//! and interaction diagnostics.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::dilation::Sign;
use crate::error::{Error, Result};
use crate::radial::{radial_derivative, weighted_norm, Grid, RadialField};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Temporal {
    Constant,
    Sin(f64),
    Cos(f64),
}

impl Temporal {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Temporal::Constant => 1.0,
            Temporal::Sin(w) => (w * t).sin(),
            Temporal::Cos(w) => (w * t).cos(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialProfile {
    /// Values at the grid nodes.
    Sampled(Vec<f64>),
    /// `a·e^{-r²/w²}`
    Gaussian { amplitude: f64, width: f64 },
    /// `a·⟨r⟩^{-s}`
    Bracket { amplitude: f64, power: f64 },
}

impl PotentialProfile {
    fn sample(&self, grid: &Grid) -> Vec<f64> {
        match self {
            PotentialProfile::Sampled(v) => v.clone(),
            PotentialProfile::Gaussian { amplitude, width } => grid
                .nodes()
                .iter()
                .map(|r| amplitude * (-(r * r) / (width * width)).exp())
                .collect(),
            PotentialProfile::Bracket { amplitude, power } => grid
                .nodes()
                .iter()
                .map(|r| amplitude * (1.0 + r * r).powf(-0.5 * power))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    /// `±λ|ψ|^p`; `Sign::Minus` is focusing.
    Monomial { sign: Sign, lambda: f64, p: f64 },
    /// `-λ|ψ|^p/(1+|ψ|^p)`
    Saturated { lambda: f64, p: f64 },
    Potential {
        profile: PotentialProfile,
        temporal: Temporal,
    },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NonlinearitySpec {
    pub terms: Vec<Term>,
}

fn pow0(a: f64, p: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a.powf(p)
    }
}

impl NonlinearitySpec {
    pub fn free() -> Self {
        NonlinearitySpec::default()
    }

    pub fn monomial(sign: Sign, lambda: f64, p: f64) -> Self {
        NonlinearitySpec {
            terms: vec![Term::Monomial { sign, lambda, p }],
        }
    }

    pub fn saturated(lambda: f64, p: f64) -> Self {
        NonlinearitySpec {
            terms: vec![Term::Saturated { lambda, p }],
        }
    }

    pub fn with(mut self, term: Term) -> Self {
        self.terms.push(term);
        self
    }

    pub fn is_free(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_time_independent(&self) -> bool {
        self.terms.iter().all(|t| {
            !matches!(
                t,
                Term::Potential {
                    temporal: Temporal::Sin(_) | Temporal::Cos(_),
                    ..
                }
            )
        })
    }

    /// The interaction seen by `conj ψ(-t)`: odd temporal factors change sign.
    pub fn time_reversed(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| match t {
                Term::Potential {
                    profile,
                    temporal: Temporal::Sin(w),
                } => Term::Potential {
                    profile: profile.clone(),
                    temporal: Temporal::Sin(-w),
                },
                other => other.clone(),
            })
            .collect();
        NonlinearitySpec { terms }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        for t in &self.terms {
            match t {
                Term::Monomial { lambda, p, .. } | Term::Saturated { lambda, p } => {
                    if !(*lambda > 0.0 && lambda.is_finite()) {
                        return Err(Error::InvalidParameter(format!("λ = {lambda} must be positive")));
                    }
                    if !(*p > 0.0 && p.is_finite()) {
                        return Err(Error::InvalidParameter(format!("p = {p} must be positive")));
                    }
                }
                Term::Potential { profile, temporal } => {
                    if let PotentialProfile::Sampled(v) = profile {
                        if v.len() != grid.num_points() {
                            return Err(Error::GridMismatch);
                        }
                        if v.iter().any(|x| !x.is_finite()) {
                            return Err(Error::InvalidParameter("potential has non-finite samples".into()));
                        }
                    }
                    if let Temporal::Sin(w) | Temporal::Cos(w) = temporal {
                        if !w.is_finite() {
                            return Err(Error::InvalidParameter("frequency must be finite".into()));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Largest monomial or saturated power, used by default weight choices.
    pub fn max_power(&self) -> Option<f64> {
        self.terms
            .iter()
            .filter_map(|t| match t {
                Term::Monomial { p, .. } | Term::Saturated { p, .. } => Some(*p),
                _ => None,
            })
            .reduce(f64::max)
    }
}

/// Per-grid cache of the sampled potentials.
struct Sampled {
    spec: NonlinearitySpec,
    potentials: Vec<(Vec<f64>, Temporal)>,
}

impl Sampled {
    fn new(spec: &NonlinearitySpec, grid: &Grid) -> Self {
        let potentials = spec
            .terms
            .iter()
            .filter_map(|t| match t {
                Term::Potential { profile, temporal } => Some((profile.sample(grid), *temporal)),
                _ => None,
            })
            .collect();
        Sampled {
            spec: spec.clone(),
            potentials,
        }
    }

    fn multiplier(&self, values: &[Complex64], t: f64, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(values) {
            let a = v.norm();
            let mut m = 0.0;
            for term in &self.spec.terms {
                match *term {
                    Term::Monomial { sign, lambda, p } => m += sign.as_f64() * lambda * pow0(a, p),
                    Term::Saturated { lambda, p } => {
                        let ap = pow0(a, p);
                        m -= if ap.is_infinite() { lambda } else { lambda * ap / (1.0 + ap) };
                    }
                    Term::Potential { .. } => {}
                }
            }
            *o = m;
        }
        for (v, temporal) in &self.potentials {
            let c = temporal.eval(t);
            for (o, w) in out.iter_mut().zip(v) {
                *o += c * w;
            }
        }
    }

    /// `Σ_i μ_i G(|ψ_i|²)` with `G' = 𝒩`, or `None` when 𝒩 depends on time.
    fn potential_energy(&self, values: &[Complex64], measure: &[f64]) -> Option<f64> {
        if !self.spec.is_time_independent() {
            return None;
        }
        let mut e = 0.0;
        for (i, (v, m)) in values.iter().zip(measure).enumerate() {
            let a = v.norm();
            let mut g = 0.0;
            for term in &self.spec.terms {
                match *term {
                    Term::Monomial { sign, lambda, p } => {
                        g += sign.as_f64() * 2.0 * lambda / (p + 2.0) * pow0(a, p + 2.0)
                    }
                    Term::Saturated { lambda, p } => g -= lambda * saturated_primitive(a, p),
                    Term::Potential { .. } => {}
                }
            }
            for (w, _) in &self.potentials {
                g += w[i] * a * a;
            }
            e += g * m;
        }
        Some(e)
    }
}

/// `∫_0^{a²} u^{p/2}/(1+u^{p/2}) du`, composite Simpson in `√u`.
fn saturated_primitive(a: f64, p: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let f = |s: f64| 2.0 * s * pow0(s, p) / (1.0 + pow0(s, p));
    let m = 64;
    let h = a / m as f64;
    let mut sum = f(0.0) + f(a);
    for j in 1..m {
        sum += f(j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

/// The real multiplier `𝒩(|ψ|, |x|, t)` at the nodes.
pub fn evaluate_nonlinearity(spec: &NonlinearitySpec, psi: &RadialField, t: f64) -> RadialField {
    let s = Sampled::new(spec, psi.grid());
    let mut m = vec![0.0; psi.values().len()];
    s.multiplier(psi.values(), t, &mut m);
    psi.with_values(m.into_iter().map(|x| Complex64::new(x, 0.0)).collect())
}

/// Reusable split-step state for one grid, interaction and step size.
struct Stepper {
    grid: Arc<Grid>,
    sampled: Sampled,
    dt: f64,
    phases: Vec<Complex64>,
    coeffs: Vec<Complex64>,
    mult: Vec<f64>,
    mask: Option<Vec<f64>>,
}

impl Stepper {
    fn new(grid: &Arc<Grid>, spec: &NonlinearitySpec, dt: f64, mask: Option<Vec<f64>>) -> Self {
        Stepper {
            grid: grid.clone(),
            sampled: Sampled::new(spec, grid),
            dt,
            phases: grid
                .eigenvalues()
                .iter()
                .map(|&l| Complex64::from_polar(1.0, -dt * l))
                .collect(),
            coeffs: vec![Complex64::new(0.0, 0.0); grid.num_points()],
            mult: vec![0.0; grid.num_points()],
            mask,
        }
    }

    fn kick(&mut self, values: &mut [Complex64], t: f64) {
        if self.sampled.spec.is_free() {
            return;
        }
        self.sampled.multiplier(values, t, &mut self.mult);
        let h = 0.5 * self.dt;
        for (v, m) in values.iter_mut().zip(&self.mult) {
            *v *= Complex64::from_polar(1.0, -h * m);
        }
    }

    fn step(&mut self, values: &mut [Complex64], t: f64) -> Result<()> {
        self.kick(values, t);
        self.grid.analyze(values, &mut self.coeffs);
        for (c, ph) in self.coeffs.iter_mut().zip(&self.phases) {
            *c *= ph;
        }
        self.grid.synthesize(&self.coeffs, values);
        self.kick(values, t + self.dt);
        if let Some(mask) = &self.mask {
            for (v, m) in values.iter_mut().zip(mask) {
                *v *= m;
            }
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NanDetected { time: t + self.dt });
        }
        Ok(())
    }

    fn monitor(&mut self, values: &[Complex64], t: f64) -> Monitor {
        self.grid.analyze(values, &mut self.coeffs);
        let mut mass = 0.0;
        let mut grad = 0.0;
        for (c, l) in self.coeffs.iter().zip(self.grid.eigenvalues()) {
            let e = c.norm_sqr();
            mass += e;
            grad += l * e;
        }
        let energy = self
            .sampled
            .potential_energy(values, self.grid.measure())
            .map(|pe| grad + pe);
        Monitor {
            t,
            mass,
            h1: (mass + grad).sqrt(),
            energy,
        }
    }
}

/// Trapezoid accumulation of the interaction-picture integrals
/// `∫_0^t e^{isH₀}X(s) ds` for `X = F V ψ - [H₀, F] ψ`, `V_D ψ_D` and `V ψ`,
/// kept as spectral coefficients, `F = F(|x| ≥ radius)`.
struct Accumulator {
    grid: Arc<Grid>,
    cut: Vec<f64>,
    initial: Vec<Complex64>,
    dt: f64,
    started: bool,
    sum: [Vec<Complex64>; 3],
    prev: [Vec<Complex64>; 3],
    cur: [Vec<Complex64>; 3],
    nodal: Vec<Complex64>,
    spec_buf: Vec<Complex64>,
    mult: Vec<f64>,
}

impl Accumulator {
    fn new(grid: &Arc<Grid>, radius: f64, initial: &[Complex64], dt: f64) -> Self {
        let n = grid.num_points();
        let zero = vec![Complex64::new(0.0, 0.0); n];
        let cut_fn = crate::radial::Cutoff::Above(radius);
        let mut c0 = zero.clone();
        grid.analyze(initial, &mut c0);
        Accumulator {
            grid: grid.clone(),
            cut: grid.nodes().iter().map(|&r| cut_fn.eval(r)).collect(),
            initial: c0,
            dt,
            started: false,
            sum: [zero.clone(), zero.clone(), zero.clone()],
            prev: [zero.clone(), zero.clone(), zero.clone()],
            cur: [zero.clone(), zero.clone(), zero.clone()],
            nodal: zero.clone(),
            spec_buf: zero,
            mult: vec![0.0; n],
        }
    }

    /// `coeffs` are the spectral coefficients of `values`.
    fn push(&mut self, values: &[Complex64], coeffs: &[Complex64], t: f64, sampled: &Sampled) {
        let g = &self.grid;
        let lam = g.eigenvalues();

        // F(V + H₀)ψ - H₀ F ψ
        for ((b, c), l) in self.spec_buf.iter_mut().zip(coeffs).zip(lam) {
            *b = c * l;
        }
        g.synthesize(&self.spec_buf, &mut self.nodal);
        sampled.multiplier(values, t, &mut self.mult);
        for i in 0..values.len() {
            self.nodal[i] = self.cut[i] * (self.nodal[i] + self.mult[i] * values[i]);
        }
        g.analyze(&self.nodal, &mut self.cur[0]);
        for ((o, v), m) in self.nodal.iter_mut().zip(values).zip(&self.mult) {
            *o = v * m;
        }
        g.analyze(&self.nodal, &mut self.cur[2]);
        for ((o, v), f) in self.nodal.iter_mut().zip(values).zip(&self.cut) {
            *o = v * f;
        }
        g.analyze(&self.nodal, &mut self.spec_buf);
        for ((o, b), l) in self.cur[0].iter_mut().zip(&self.spec_buf).zip(lam) {
            *o -= b * l;
        }

        // V_D ψ_D with ψ_D = ψ - e^{-itH₀}ψ₀
        for (((b, c), c0), l) in self.spec_buf.iter_mut().zip(coeffs).zip(&self.initial).zip(lam) {
            *b = c - c0 * Complex64::from_polar(1.0, -t * l);
        }
        g.synthesize(&self.spec_buf, &mut self.nodal);
        sampled.multiplier(&self.nodal, t, &mut self.mult);
        for (v, m) in self.nodal.iter_mut().zip(&self.mult) {
            *v *= m;
        }
        g.analyze(&self.nodal, &mut self.cur[1]);

        for k in 0..3 {
            for (c, l) in self.cur[k].iter_mut().zip(lam) {
                *c *= Complex64::from_polar(1.0, t * l);
            }
            if self.started {
                let h = 0.5 * self.dt;
                for ((s, a), b) in self.sum[k].iter_mut().zip(&self.prev[k]).zip(&self.cur[k]) {
                    *s += (a + b) * h;
                }
            }
            std::mem::swap(&mut self.prev[k], &mut self.cur[k]);
        }
        self.started = true;
    }
}

/// Running interaction-picture integrals recorded alongside the snapshots.
///
/// `interaction[k]` holds `∫_0^{t_k} e^{isH₀}(F V ψ - [H₀, F]ψ)(s) ds`,
/// `smooth[k]` holds `∫_0^{t_k} e^{isH₀} V_D ψ_D(s) ds` and `plain[k]` holds
/// `∫_0^{t_k} e^{isH₀} V ψ(s) ds`, all as spectral coefficients, with
/// `F = F(|x| ≥ radius)`.
#[derive(Clone, Debug)]
pub struct CookIntegrals {
    pub radius: f64,
    pub interaction: Vec<Vec<Complex64>>,
    pub smooth: Vec<Vec<Complex64>>,
    pub plain: Vec<Vec<Complex64>>,
}

/// One Strang step `e^{-i(dt/2)𝒩} e^{-i dt H₀} e^{-i(dt/2)𝒩}` from time `t`.
pub fn strang_step(psi: &RadialField, t: f64, dt: f64, spec: &NonlinearitySpec) -> Result<RadialField> {
    spec.validate(psi.grid())?;
    let mut st = Stepper::new(psi.grid(), spec, dt, None);
    let mut v = psi.values().to_vec();
    st.step(&mut v, t)?;
    Ok(psi.with_values(v))
}

/// `0.5·π/k_max²` with `k_max` the band limit of the grid.
pub fn default_dt(grid: &Grid) -> f64 {
    0.5 * PI / grid.band_limit().powi(2)
}

/// Damping factor per step on `r > 0.9 r_max`: `exp(-dt·κ·s²)`, `s` the
/// depth into the layer in units of its width.
pub fn absorbing_mask(grid: &Grid, dt: f64, strength: f64) -> Vec<f64> {
    let r0 = 0.9 * grid.r_max();
    let w = 0.1 * grid.r_max();
    grid.nodes()
        .iter()
        .map(|&r| {
            let s = ((r - r0) / w).max(0.0);
            (-dt * strength * s * s).exp()
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_stride: usize,
    pub absorbing_mask: bool,
    pub mask_strength: f64,
    /// Abort when the H¹ norm exceeds this multiple of its initial value.
    pub h1_ceiling_factor: f64,
    pub nonlinearity: NonlinearitySpec,
    pub initial: RadialField,
    /// Record [`CookIntegrals`] with this cutoff radius.
    pub cook_radius: Option<f64>,
}

impl EvolutionConfig {
    /// Default step, at least 200 snapshots, no mask, ceiling 10× initial H¹.
    pub fn new(initial: RadialField, nonlinearity: NonlinearitySpec, t_end: f64) -> Self {
        let dt = default_dt(initial.grid());
        let steps = (t_end / dt).ceil().max(1.0) as usize;
        EvolutionConfig {
            dt,
            t_end,
            snapshot_stride: (steps / 200).max(1),
            absorbing_mask: false,
            mask_strength: 2.0,
            h1_ceiling_factor: 10.0,
            nonlinearity,
            initial,
            cook_radius: None,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        let steps = (self.t_end / dt).ceil().max(1.0) as usize;
        self.dt = dt;
        self.snapshot_stride = (steps / 200).max(1);
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.initial.grid()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_end >= self.dt) {
            return Err(Error::InvalidParameter(format!(
                "t_end = {} must be at least dt = {}",
                self.t_end, self.dt
            )));
        }
        let phase = self.dt * self.grid().band_limit().powi(2);
        if phase >= PI {
            return Err(Error::InvalidParameter(format!(
                "dt·k_max² = {phase:.3} must stay below π"
            )));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidParameter("snapshot stride must be at least 1".into()));
        }
        if !(self.h1_ceiling_factor > 1.0) {
            return Err(Error::InvalidParameter("H1 ceiling factor must exceed 1".into()));
        }
        if self.absorbing_mask && !(self.mask_strength > 0.0) {
            return Err(Error::InvalidParameter("mask strength must be positive".into()));
        }
        if !self.initial.is_finite() {
            return Err(Error::InvalidParameter("initial data is not finite".into()));
        }
        if let Some(r) = self.cook_radius {
            if !(r > 0.0 && r < self.grid().r_max()) {
                return Err(Error::InvalidParameter(format!("cook radius {r} outside (0, r_max)")));
            }
        }
        self.nonlinearity.validate(self.grid())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monitor {
    pub t: f64,
    /// `‖ψ‖²_{L²}`
    pub mass: f64,
    pub h1: f64,
    pub energy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<RadialField>,
    pub monitors: Vec<Monitor>,
    pub integrals: Option<CookIntegrals>,
}

impl Trajectory {
    pub fn grid(&self) -> &Arc<Grid> {
        self.states[0].grid()
    }

    pub fn initial(&self) -> &RadialField {
        &self.states[0]
    }

    pub fn final_state(&self) -> &RadialField {
        &self.states[self.states.len() - 1]
    }

    /// Snapshot index at `t`, if `t` is a recorded time up to `1e-9` relative.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }
}

/// Runs the configured evolution, recording monitors every step.
pub fn evolve(config: &EvolutionConfig) -> Result<Trajectory> {
    config.validate()?;
    let grid = config.grid().clone();
    let steps = (config.t_end / config.dt).round().max(1.0) as usize;
    let dt = config.t_end / steps as f64;
    let mask = config
        .absorbing_mask
        .then(|| absorbing_mask(&grid, dt, config.mask_strength));
    let mut st = Stepper::new(&grid, &config.nonlinearity, dt, mask);
    let mut values = config.initial.values().to_vec();

    let first = st.monitor(&values, 0.0);
    let ceiling = config.h1_ceiling_factor * first.h1;
    let mut acc = config
        .cook_radius
        .map(|r| Accumulator::new(&grid, r, &values, dt));
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![config.initial.clone()],
        monitors: Vec::with_capacity(steps + 1),
        integrals: config.cook_radius.map(|radius| CookIntegrals {
            radius,
            interaction: Vec::new(),
            smooth: Vec::new(),
            plain: Vec::new(),
        }),
    };
    traj.monitors.push(first);
    if let (Some(a), Some(ci)) = (acc.as_mut(), traj.integrals.as_mut()) {
        a.push(&values, &st.coeffs, 0.0, &st.sampled);
        ci.interaction.push(a.sum[0].clone());
        ci.smooth.push(a.sum[1].clone());
        ci.plain.push(a.sum[2].clone());
    }
    let mut last_safe = 0.0;
    for k in 0..steps {
        let t = k as f64 * dt;
        let t1 = (k + 1) as f64 * dt;
        st.step(&mut values, t)?;
        let m = st.monitor(&values, t1);
        if !m.h1.is_finite() {
            return Err(Error::NanDetected { time: t1 });
        }
        if m.h1 > ceiling {
            return Err(Error::H1CeilingExceeded {
                time: t1,
                last_safe,
                h1: m.h1,
                ceiling,
            });
        }
        last_safe = t1;
        traj.monitors.push(m);
        if let Some(a) = acc.as_mut() {
            a.push(&values, &st.coeffs, t1, &st.sampled);
        }
        if (k + 1) % config.snapshot_stride == 0 || k + 1 == steps {
            traj.times.push(t1);
            traj.states.push(RadialField::new(grid.clone(), values.clone())?);
            if let (Some(a), Some(ci)) = (acc.as_ref(), traj.integrals.as_mut()) {
                ci.interaction.push(a.sum[0].clone());
                ci.smooth.push(a.sum[1].clone());
                ci.plain.push(a.sum[2].clone());
            }
        }
    }
    log::debug!("evolved {steps} steps of dt = {dt:.3e}");
    Ok(traj)
}

/// Ground state of `ΔQ - ωQ + λQ^{p+1} = 0` on the grid.
///
/// Bisection shooting on `q(0)` for the normalized profile gives the start;
/// a Petviashvili iteration then makes it an exact discrete solution.
pub fn shoot_ground_state(grid: &Arc<Grid>, omega: f64, lambda: f64, p: f64) -> Result<RadialField> {
    let n = grid.dimension() as f64;
    if !(omega > 0.0 && lambda > 0.0 && p > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ω = {omega}, λ = {lambda}, p = {p} must be positive"
        )));
    }
    if n > 2.0 && p >= 4.0 / (n - 2.0) {
        return Err(Error::InvalidParameter(format!(
            "p = {p} is not energy-subcritical (< {}) in dimension {n}",
            4.0 / (n - 2.0)
        )));
    }
    let (rs, qs) = shoot_profile(n, p)?;
    let amp = (omega / lambda).powf(1.0 / p);
    let k = omega.sqrt();
    let guess: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&r| amp * interp(&rs, &qs, k * r, n))
        .collect();
    let q = petviashvili(grid, guess, omega, lambda, p)?;
    let ratio = q[q.len() - 1].abs() / q[0];
    if ratio > 1e-8 {
        return Err(Error::NotDecayed { ratio });
    }
    Ok(RadialField::from_fn(grid, {
        let mut it = q.into_iter();
        move |_| Complex64::new(it.next().unwrap_or(0.0), 0.0)
    }))
}

#[derive(PartialEq)]
enum Shot {
    Over,
    Under,
}

const SHOOT_H: f64 = 2e-3;
const SHOOT_R: f64 = 40.0;

/// RK4 for `q'' = -(n-1)/r q' + q - |q|^p q` from the series start at `r = h`.
/// Stops at the first zero crossing or upturn.
fn shoot(a: f64, n: f64, p: f64, keep: bool) -> (Shot, Vec<f64>, Vec<f64>) {
    let rhs = |r: f64, q: f64, dq: f64| -(n - 1.0) / r * dq + q - q.abs().powf(p) * q;
    let b = (a - a.powf(p + 1.0)) / (2.0 * n);
    let mut r = SHOOT_H;
    let mut q = a + b * r * r;
    let mut dq = 2.0 * b * r;
    let (mut rs, mut qs) = (Vec::new(), Vec::new());
    if keep {
        rs.extend([0.0, r]);
        qs.extend([a, q]);
    }
    let h = SHOOT_H;
    while r < SHOOT_R {
        let k1 = (dq, rhs(r, q, dq));
        let k2 = (dq + 0.5 * h * k1.1, rhs(r + 0.5 * h, q + 0.5 * h * k1.0, dq + 0.5 * h * k1.1));
        let k3 = (dq + 0.5 * h * k2.1, rhs(r + 0.5 * h, q + 0.5 * h * k2.0, dq + 0.5 * h * k2.1));
        let k4 = (dq + h * k3.1, rhs(r + h, q + h * k3.0, dq + h * k3.1));
        q += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        dq += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        r += h;
        if q < 0.0 {
            return (Shot::Over, rs, qs);
        }
        if dq > 0.0 {
            return (Shot::Under, rs, qs);
        }
        if keep {
            rs.push(r);
            qs.push(q);
        }
    }
    (Shot::Under, rs, qs)
}

/// Normalized ground state (`ω = λ = 1`) on `[0, r_c]`, where `r_c` is where
/// the bracketing shots separate.
fn shoot_profile(n: f64, p: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lo = 1.0;
    let mut hi = 2.0;
    while shoot(hi, n, p, false).0 == Shot::Under {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NoSignChange(format!("no overshooting q(0) below 1e12 for n = {n}, p = {p}")));
        }
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        match shoot(mid, n, p, false).0 {
            Shot::Over => hi = mid,
            Shot::Under => lo = mid,
        }
    }
    let (_, rs, qs) = shoot(lo, n, p, true);
    let (_, _, qh) = shoot(hi, n, p, true);
    let keep = qs
        .iter()
        .zip(&qh)
        .position(|(a, b)| (a - b).abs() > 1e-6 * a.abs())
        .unwrap_or(qs.len().min(qh.len()));
    Ok((rs[..keep].to_vec(), qs[..keep].to_vec()))
}

/// Linear interpolation inside the shot, `r^{-(n-1)/2} e^{-r}` tail beyond it.
fn interp(rs: &[f64], qs: &[f64], r: f64, n: f64) -> f64 {
    let last = rs.len() - 1;
    if r >= rs[last] {
        let rc = rs[last];
        return qs[last] * (rc / r).powf(0.5 * (n - 1.0)) * (rc - r).exp();
    }
    let j = (r / SHOOT_H).floor() as usize;
    let j = j.min(last - 1);
    let s = (r - rs[j]) / (rs[j + 1] - rs[j]);
    qs[j] * (1.0 - s) + qs[j + 1] * s
}

/// Fixed point of `Q ← M^γ (H₀+ω)^{-1}(λQ^{p+1})`, `M` the stabilizing factor.
fn petviashvili(grid: &Arc<Grid>, guess: Vec<f64>, omega: f64, lambda: f64, p: f64) -> Result<Vec<f64>> {
    let num = grid.num_points();
    let gamma = (p + 1.0) / p;
    let to_c = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
    let mut q = to_c(&guess);
    let mut cq = vec![Complex64::new(0.0, 0.0); num];
    let mut cn = vec![Complex64::new(0.0, 0.0); num];
    let lam = grid.eigenvalues();
    for _ in 0..5000 {
        let nl: Vec<Complex64> = q
            .iter()
            .map(|v| Complex64::new(lambda * v.re.abs().powf(p) * v.re, 0.0))
            .collect();
        grid.analyze(&q, &mut cq);
        grid.analyze(&nl, &mut cn);
        let mut top = 0.0;
        let mut bot = 0.0;
        for m in 0..num {
            top += (lam[m] + omega) * cq[m].norm_sqr();
            bot += (cq[m].conj() * cn[m]).re;
        }
        if !(bot > 0.0) {
            return Err(Error::NotConverged("ground-state iteration collapsed to zero".into()));
        }
        let factor = (top / bot).powf(gamma);
        let mut diff = 0.0;
        let mut size = 0.0;
        for m in 0..num {
            let next = cn[m] * (factor / (lam[m] + omega));
            diff += (next - cq[m]).norm_sqr();
            size += next.norm_sqr();
            cq[m] = next;
        }
        grid.synthesize(&cq, &mut q);
        for v in q.iter_mut() {
            v.im = 0.0;
        }
        if diff <= 1e-28 * size {
            return Ok(q.iter().map(|v| v.re).collect());
        }
    }
    Err(Error::NotConverged("ground-state iteration did not reach 1e-14".into()))
}

#[derive(Clone, Debug)]
pub struct InteractionRow {
    pub t: f64,
    /// `‖𝒩ψ‖_{L^q}`
    pub lq: f64,
    /// `‖⟨x⟩^σ χ(|x|>1) 𝒩ψ‖_{L²}`
    pub outside_weighted_l2: f64,
    /// `sup |𝒩|·⟨x⟩^σ`
    pub envelope: f64,
    /// `‖⟨x⟩² ∂_r(𝒩ψ)‖_{L²}`
    pub gradient_weighted: f64,
}

#[derive(Clone, Debug)]
pub struct InteractionReport {
    pub sigma: f64,
    pub q: f64,
    pub rows: Vec<InteractionRow>,
    /// `(t, quantity)` where a monitored norm exceeds 10× the median of its earlier values.
    pub warnings: Vec<(f64, &'static str)>,
}

/// Monitors the decay hypotheses on the interaction along a trajectory.
pub fn check_interaction_assumptions(
    traj: &Trajectory,
    spec: &NonlinearitySpec,
    sigma: f64,
    q: f64,
) -> Result<InteractionReport> {
    if !(q >= 1.0) {
        return Err(Error::InvalidParameter(format!("q = {q} must be at least 1")));
    }
    let grid = traj.grid();
    let sampled = Sampled::new(spec, grid);
    let mut rows = Vec::with_capacity(traj.states.len());
    let mut mult = vec![0.0; grid.num_points()];
    for (&t, psi) in traj.times.iter().zip(&traj.states) {
        sampled.multiplier(psi.values(), t, &mut mult);
        let npsi = psi.with_values(psi.values().iter().zip(&mult).map(|(v, m)| v * m).collect());
        let outside = npsi.mul_real(|r| if r > 1.0 { 1.0 } else { 0.0 });
        let envelope = mult
            .iter()
            .zip(grid.nodes())
            .map(|(m, r)| m.abs() * (1.0 + r * r).powf(0.5 * sigma))
            .fold(0.0, f64::max);
        rows.push(InteractionRow {
            t,
            lq: weighted_norm(&npsi, 0.0, q),
            outside_weighted_l2: weighted_norm(&outside, sigma, 2.0),
            envelope,
            gradient_weighted: weighted_norm(&radial_derivative(&npsi), 2.0, 2.0),
        });
    }
    let mut warnings = Vec::new();
    let columns: [(&'static str, fn(&InteractionRow) -> f64); 4] = [
        ("lq", |r| r.lq),
        ("outside_weighted_l2", |r| r.outside_weighted_l2),
        ("envelope", |r| r.envelope),
        ("gradient_weighted", |r| r.gradient_weighted),
    ];
    // growth check against the running median of the earlier rows
    for (name, get) in columns {
        let mut seen: Vec<f64> = Vec::with_capacity(rows.len());
        for row in &rows {
            let v = get(row);
            if !seen.is_empty() {
                let median = seen[seen.len() / 2];
                if v > 10.0 * median && v > 0.0 {
                    warnings.push((row.t, name));
                }
            }
            let at = seen.partition_point(|&x| x < v);
            seen.insert(at, v);
        }
    }
    for (t, name) in &warnings {
        log::warn!("interaction norm {name} at t = {t} exceeds 10x its median");
    }
    Ok(InteractionReport {
        sigma,
        q,
        rows,
        warnings,
    })
}
