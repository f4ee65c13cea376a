//! Channel decomposition `ψ(t) = e^{-itH₀}ψ_free + ψ_loc(t) + o(1)`.
//!
//! Cook integrals are read off the running interaction-picture integrals
//! recorded by [`evolve`] (see [`CookIntegrals`]): with
//! `I(σ) = ∫_0^σ e^{iuH₀}(F V ψ - [H₀, F]ψ)(u) du`,
//!
//! ```text
//! C₊(t,T)ψ(t) =  i P⁺ e^{-itH₀} (I(t+T) - I(t))
//! C₋(t,T)ψ(t) = -i P⁻ e^{-itH₀} (I(t) - I(t-T))
//! ```
//!
//! Negative times come from the time-reversed run: if `ψ̃(τ) = conj ψ(-τ)`
//! then `I(-τ) = -conj Ĩ(τ)`, and the same holds for the `ψ_D` integral.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::dilation::{Dilation, ProjectionParams, Sign};
use crate::error::{Error, Result};
use crate::nls::{evolve, EvolutionConfig, NonlinearitySpec, PotentialProfile, Term, Trajectory};
use crate::radial::{band_limited, free_propagate, spatial_cutoff_apply, weighted_norm, Cutoff, Grid, RadialField};

/// Radius of the channel cutoff `F(|x| ≥ 10)`.
pub const CHANNEL_RADIUS: f64 = 10.0;

/// Forward trajectory plus, optionally, the time-reversed run supplying `t < 0`.
#[derive(Clone, Debug)]
pub struct History {
    forward: Trajectory,
    backward: Option<Trajectory>,
}

impl History {
    pub fn new(forward: Trajectory) -> Self {
        History {
            forward,
            backward: None,
        }
    }

    /// `backward` must be the run from `conj ψ₀` under the time-reversed interaction.
    pub fn with_backward(forward: Trajectory, backward: Trajectory) -> Result<Self> {
        if !forward.grid().same_as(backward.grid()) {
            return Err(Error::GridMismatch);
        }
        let d = forward.initial().sub(&backward.initial().conj())?.norm();
        if d > 1e-12 * forward.initial().norm().max(1e-300) {
            return Err(Error::InvalidParameter(
                "backward run does not start from the conjugate initial data".into(),
            ));
        }
        if forward.integrals.is_some() != backward.integrals.is_some() {
            return Err(Error::InvalidParameter(
                "only one of the runs recorded Cook integrals".into(),
            ));
        }
        Ok(History {
            forward,
            backward: Some(backward),
        })
    }

    /// Evolves `config` forward and, if `t_back > 0`, the reversed system over `[0, t_back]`.
    pub fn run(config: &EvolutionConfig, t_back: f64) -> Result<Self> {
        let forward = evolve(config)?;
        if t_back <= 0.0 {
            return Ok(History::new(forward));
        }
        let mut rev = config.clone();
        rev.initial = config.initial.conj();
        rev.nonlinearity = config.nonlinearity.time_reversed();
        rev.t_end = t_back;
        let steps = (t_back / config.dt).ceil().max(1.0) as usize;
        rev.snapshot_stride = config.snapshot_stride.min(steps);
        let backward = evolve(&rev)?;
        History::with_backward(forward, backward)
    }

    pub fn forward(&self) -> &Trajectory {
        &self.forward
    }

    pub fn backward(&self) -> Option<&Trajectory> {
        self.backward.as_ref()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.forward.grid()
    }

    pub fn initial(&self) -> &RadialField {
        self.forward.initial()
    }

    pub fn span(&self) -> (f64, f64) {
        let end = *self.forward.times.last().unwrap();
        let start = self.backward.as_ref().map_or(0.0, |b| -*b.times.last().unwrap());
        (start, end)
    }

    /// All snapshot times, ascending.
    pub fn times(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self
            .backward
            .iter()
            .flat_map(|b| b.times.iter().skip(1).rev().map(|t| -t))
            .collect();
        ts.extend_from_slice(&self.forward.times);
        ts
    }

    fn locate(&self, t: f64) -> Result<(bool, usize, f64)> {
        let (start, end) = self.span();
        let tol = 1e-9 * t.abs().max(1.0);
        if t < start - tol || t > end + tol {
            return Err(Error::CoverageGap { time: t, start, end });
        }
        let (back, traj, tau) = match &self.backward {
            Some(b) if t < 0.0 => (true, b, -t),
            _ => (false, &self.forward, t.max(0.0)),
        };
        let k = nearest(&traj.times, tau);
        let actual = if back { -traj.times[k] } else { traj.times[k] };
        Ok((back, k, actual))
    }

    /// Snapshot nearest to `t`, with its actual time.
    pub fn snapshot(&self, t: f64) -> Result<(f64, RadialField)> {
        let (back, k, actual) = self.locate(t)?;
        let psi = if back {
            self.backward.as_ref().unwrap().states[k].conj()
        } else {
            self.forward.states[k].clone()
        };
        Ok((actual, psi))
    }

    fn integral(&self, t: f64, which: Integral) -> Result<(f64, Vec<Complex64>)> {
        let missing = || Error::InvalidParameter("trajectory was evolved without Cook integrals".into());
        let (back, k, actual) = self.locate(t)?;
        let traj = if back { self.backward.as_ref().unwrap() } else { &self.forward };
        let ci = traj.integrals.as_ref().ok_or_else(missing)?;
        let v = match which {
            Integral::Cook => &ci.interaction[k],
            Integral::Smooth => &ci.smooth[k],
            Integral::Plain => &ci.plain[k],
        };
        let v = if back { v.iter().map(|c| -c.conj()).collect() } else { v.clone() };
        Ok((actual, v))
    }

    fn cook_radius(&self) -> Option<f64> {
        self.forward.integrals.as_ref().map(|c| c.radius)
    }
}

#[derive(Clone, Copy)]
enum Integral {
    Cook,
    Smooth,
    Plain,
}

fn nearest(times: &[f64], t: f64) -> usize {
    let k = times.partition_point(|&s| s < t);
    if k == 0 {
        0
    } else if k == times.len() || t - times[k - 1] <= times[k] - t {
        k - 1
    } else {
        k
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    PplusFiltered,
    PhaseSpaceCutoff,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PsiLocRecord {
    pub t: f64,
    pub l2: f64,
    pub wdelta: f64,
    pub a1: f64,
    pub a2: f64,
    /// `‖ψ(t) - e^{-itH₀}ψ_free - (C(t)ψ(t) + F(|x|<10)ψ(t))‖`, when Cook integrals exist.
    pub residual: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ScatteringResult {
    pub psi_free: RadialField,
    pub route: Route,
    /// Time `t` at which the defining limit was taken.
    pub extraction_time: f64,
    /// `(s, ‖v(s_{k+1}) - v(s_k)‖)`.
    pub cauchy_history: Vec<(f64, f64)>,
    pub delta: f64,
    pub psi_loc_series: Vec<PsiLocRecord>,
    /// Largest `s` of the incoming (`P⁻`) limit, `None` when it was left out.
    pub incoming_reach: Option<f64>,
    /// Increments of `v₋(s)`, kept even when the incoming limit was left out.
    pub incoming_history: Vec<(f64, f64)>,
}

impl ScatteringResult {
    pub fn residual_series(&self) -> Vec<(f64, f64)> {
        self.psi_loc_series
            .iter()
            .filter_map(|r| r.residual.map(|v| (r.t, v)))
            .collect()
    }

    /// Cauchy acceptance relative to `scale` (normally `‖ψ₀‖`).
    pub fn cauchy_accepted(&self, scale: f64) -> bool {
        cauchy_accepted(&self.cauchy_history, scale)
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Increments below this fraction of the scale count as converged whatever their trend.
pub const CAUCHY_FLOOR: f64 = 1e-4;

/// Last-quarter increments are at most `1e-3·scale`, and their median is
/// below the first-quarter median or under [`CAUCHY_FLOOR`].
pub fn cauchy_accepted(history: &[(f64, f64)], scale: f64) -> bool {
    if history.len() < 4 {
        return false;
    }
    let q = history.len().div_ceil(4);
    let mut first: Vec<f64> = history[..q].iter().map(|h| h.1).collect();
    let mut last: Vec<f64> = history[history.len() - q..].iter().map(|h| h.1).collect();
    if last.iter().any(|&d| !(d <= 1e-3 * scale)) {
        return false;
    }
    let (mf, ml) = (median(&mut first), median(&mut last));
    ml < mf || ml <= CAUCHY_FLOOR * scale
}

/// `s_k = 1.5^k`, `k ≥ 0`, up to `s_max`.
pub fn default_s_grid(s_max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut s = 1.0;
    while s <= s_max * (1.0 + 1e-12) {
        out.push(s);
        s *= 1.5;
    }
    out
}

/// Decay exponent `σ` with `|𝒩| ≲ ⟨x⟩^{-σ}` on bounded-`H¹` radial states.
///
/// Power terms use the radial bound `|ψ(r)| ≲ r^{-(n-1)/2}‖ψ‖_{H¹}`, so
/// `|ψ|^p` decays like `r^{-(n-1)p/2}`.
pub fn interaction_decay(spec: &NonlinearitySpec, n: usize) -> f64 {
    let radial = 0.5 * (n as f64 - 1.0);
    spec.terms
        .iter()
        .map(|t| match t {
            Term::Monomial { p, .. } | Term::Saturated { p, .. } => radial * p,
            Term::Potential { profile, .. } => match profile {
                PotentialProfile::Bracket { power, .. } => *power,
                PotentialProfile::Gaussian { .. } | PotentialProfile::Sampled(_) => f64::INFINITY,
            },
        })
        .fold(f64::INFINITY, f64::min)
}

/// `δ = ½·min{σ/20 - 1/10, 1/40}`.
pub fn default_delta(sigma: f64) -> Result<f64> {
    if !(sigma > 2.0) {
        return Err(Error::InvalidParameter(format!(
            "decay exponent σ = {sigma} must exceed 2"
        )));
    }
    Ok(0.5 * f64::min(sigma / 20.0 - 0.1, 1.0 / 40.0))
}

/// `ψ(t) - e^{-itH₀}ψ(0)` at the snapshot nearest `t`.
pub fn compute_psi_d(history: &History, t: f64) -> Result<RadialField> {
    let (ts, psi) = history.snapshot(t)?;
    psi.sub(&free_propagate(history.initial(), ts))
}

fn push_increment(hist: &mut Vec<(f64, f64)>, s: f64, prev: &Option<RadialField>, cur: &RadialField) -> Result<()> {
    if let Some(p) = prev {
        hist.push((s, cur.sub(p)?.norm()));
    }
    Ok(())
}

/// `P⁺`-filtered limits at time `t`, without the acceptance check.
///
/// `v₊(s) = P⁺e^{isH₀}ψ(t+s)` over `s_grid`; the incoming part
/// `v₋(s) = P⁻e^{-isH₀}ψ(t-s)` uses every grid point covered by earlier data
/// and enters `ψ_free = e^{itH₀}(v₊(s_last) + v₋(s_last))` only if its own
/// Cauchy history is accepted. Outgoing-only is the large-`t` limit anyway,
/// since `P⁻e^{-itH₀}φ → 0`.
pub fn pplus_limits(
    history: &History,
    t: f64,
    params: &ProjectionParams,
    s_grid: &[f64],
    delta: f64,
) -> Result<ScatteringResult> {
    if s_grid.is_empty() || s_grid.windows(2).any(|w| !(w[1] > w[0])) || s_grid[0] < 0.0 {
        return Err(Error::InvalidParameter("s_grid must be non-empty, non-negative and increasing".into()));
    }
    let (start, end) = history.span();
    let s_last = *s_grid.last().unwrap();
    if t + s_last > end + 1e-9 * end.abs().max(1.0) {
        return Err(Error::CoverageGap {
            time: t + s_last,
            start,
            end,
        });
    }
    let (t0, _) = history.snapshot(t)?;
    let dil = Dilation::shared(history.grid(), params)?;

    let mut plus_hist = Vec::new();
    let mut prev: Option<RadialField> = None;
    for &s in s_grid {
        let (ts, psi) = history.snapshot(t0 + s)?;
        let v = dil.project(&free_propagate(&psi, t0 - ts), Sign::Plus)?;
        push_increment(&mut plus_hist, s, &prev, &v)?;
        prev = Some(v);
    }
    let u_plus = prev.unwrap();

    let mut minus_hist = Vec::new();
    let mut prev: Option<RadialField> = None;
    let mut reach = None;
    for &s in s_grid.iter().filter(|&&s| t0 - s >= start - 1e-9) {
        let (ts, psi) = history.snapshot(t0 - s)?;
        let v = dil.project(&free_propagate(&psi, t0 - ts), Sign::Minus)?;
        push_increment(&mut minus_hist, s, &prev, &v)?;
        prev = Some(v);
        reach = Some(s);
    }
    let scale = history.initial().norm();
    let incoming = prev.filter(|_| cauchy_accepted(&minus_hist, scale));

    let (sum, cauchy_history, reach) = match incoming {
        Some(u_minus) => {
            let hist = plus_hist
                .iter()
                .map(|&(s, d)| {
                    let dm = minus_hist.iter().find(|h| h.0 == s).map_or(0.0, |h| h.1);
                    (s, d.hypot(dm))
                })
                .collect();
            (u_plus.add(&u_minus)?, hist, reach)
        }
        None => (u_plus, plus_hist, None),
    };
    Ok(ScatteringResult {
        psi_free: free_propagate(&sum, -t0),
        route: Route::PplusFiltered,
        extraction_time: t0,
        cauchy_history,
        delta,
        psi_loc_series: Vec::new(),
        incoming_reach: reach,
        incoming_history: minus_hist,
    })
}

/// [`pplus_limits`] followed by the Cauchy acceptance test.
pub fn extract_free_pplus(
    history: &History,
    t: f64,
    params: &ProjectionParams,
    s_grid: &[f64],
    delta: f64,
) -> Result<ScatteringResult> {
    let res = pplus_limits(history, t, params, s_grid, delta)?;
    check_cauchy(res, history.initial().norm())
}

fn check_cauchy(res: ScatteringResult, scale: f64) -> Result<ScatteringResult> {
    if res.cauchy_accepted(scale) {
        Ok(res)
    } else {
        let last = res.cauchy_history.last().map_or(f64::NAN, |h| h.1);
        Err(Error::NotConverged(format!(
            "{:?} limit: last increment {last:.3e} against ‖ψ₀‖ = {scale:.3e}",
            res.route
        )))
    }
}

/// `w(t) = F_c(|x|/t^α ≤ 1) e^{itH₀}ψ(t)` over `t_grid`, without the acceptance check.
pub fn phase_space_limits(history: &History, alpha: f64, t_grid: &[f64], delta: f64) -> Result<ScatteringResult> {
    let n = history.grid().dimension() as f64;
    let upper = 1.0 - 2.0 / n;
    if !(alpha > 0.0 && alpha < upper) {
        return Err(Error::InvalidAlpha { alpha, upper });
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) || !(t_grid[0] > 0.0) {
        return Err(Error::InvalidParameter("t_grid must be non-empty, positive and increasing".into()));
    }
    let mut hist = Vec::new();
    let mut prev: Option<RadialField> = None;
    let mut last_t = 0.0;
    for &t in t_grid {
        let (ts, psi) = history.snapshot(t)?;
        let cut = Cutoff::AtMost(ts.powf(alpha));
        let w = spatial_cutoff_apply(&free_propagate(&psi, -ts), &cut);
        push_increment(&mut hist, ts, &prev, &w)?;
        prev = Some(w);
        last_t = ts;
    }
    Ok(ScatteringResult {
        psi_free: prev.unwrap(),
        route: Route::PhaseSpaceCutoff,
        extraction_time: last_t,
        cauchy_history: hist,
        delta,
        psi_loc_series: Vec::new(),
        incoming_reach: None,
        incoming_history: Vec::new(),
    })
}

/// [`phase_space_limits`] followed by the Cauchy acceptance test.
pub fn extract_free_phase_space(history: &History, alpha: f64, t_grid: &[f64], delta: f64) -> Result<ScatteringResult> {
    let res = phase_space_limits(history, alpha, t_grid, delta)?;
    check_cauchy(res, history.initial().norm())
}

fn cook_from(
    history: &History,
    t: f64,
    big_t: f64,
    params: &ProjectionParams,
    sign: Sign,
    which: Integral,
) -> Result<RadialField> {
    if !(big_t >= 0.0) {
        return Err(Error::InvalidParameter(format!("T = {big_t} must be non-negative")));
    }
    let (t0, i0) = history.integral(t, which)?;
    let (_, i1) = history.integral(t0 + sign.as_f64() * big_t, which)?;
    let g = history.grid();
    // ±i (I(t±T) - I(t)) in either orientation
    let phase = Complex64::new(0.0, 1.0);
    let coeffs: Vec<Complex64> = i1
        .iter()
        .zip(&i0)
        .zip(g.eigenvalues())
        .map(|((a, b), l)| (a - b) * phase * Complex64::from_polar(1.0, -t0 * l))
        .collect();
    let mut values = vec![Complex64::new(0.0, 0.0); coeffs.len()];
    g.synthesize(&coeffs, &mut values);
    let f = RadialField::new(g.clone(), values)?;
    Dilation::shared(g, params)?.project(&f, sign)
}

/// `C_±(t,T)ψ(t)`; the trajectory must carry Cook integrals.
pub fn cook_correction(
    history: &History,
    t: f64,
    big_t: f64,
    params: &ProjectionParams,
    sign: Sign,
) -> Result<RadialField> {
    cook_from(history, t, big_t, params, sign, Integral::Cook)
}

/// `C̃_±(t,T)ψ(0) = ±i∫_0^T P^± e^{±isH₀} V_D ψ_D(t±s) ds`.
pub fn smooth_correction(
    history: &History,
    t: f64,
    big_t: f64,
    params: &ProjectionParams,
    sign: Sign,
) -> Result<RadialField> {
    cook_from(history, t, big_t, params, sign, Integral::Smooth)
}

/// `C_{±,1}(t,T)ψ(t) = ±i∫_0^T P^± e^{±isH₀} V ψ(t±s) ds`, the Cook integral
/// without the channel cutoff.
pub fn plain_correction(
    history: &History,
    t: f64,
    big_t: f64,
    params: &ProjectionParams,
    sign: Sign,
) -> Result<RadialField> {
    cook_from(history, t, big_t, params, sign, Integral::Plain)
}

/// `‖A² f‖` on the band-limited part of `f`.
pub fn smoothness_norm(f: &RadialField, params: &ProjectionParams) -> Result<f64> {
    let dil = Dilation::shared(f.grid(), params)?;
    Ok(dil.dilation_power(&dil.dilation_power(&band_limited(f), 1)?, 1)?.norm())
}

/// Operator form `C₊(t,T₊)ψ(t) + C₋(t,T₋)ψ(t) + F(|x|<10)ψ(t)` with both
/// tails running to the ends of the history.
pub fn psi_loc_operator(history: &History, t: f64, params: &ProjectionParams) -> Result<RadialField> {
    let radius = history
        .cook_radius()
        .ok_or_else(|| Error::InvalidParameter("trajectory was evolved without Cook integrals".into()))?;
    let (start, end) = history.span();
    let (t0, psi) = history.snapshot(t)?;
    let plus = cook_correction(history, t0, end - t0, params, Sign::Plus)?;
    let minus = cook_correction(history, t0, t0 - start, params, Sign::Minus)?;
    let inner = spatial_cutoff_apply(&psi, &Cutoff::AtMost(radius));
    plus.add(&minus)?.add(&inner)
}

/// `ψ_loc(t) = ψ(t) - e^{-itH₀}ψ_free`, appending its record to the result.
///
/// `A` and `A²` norms are taken on the band-limited part, since the
/// lumped-mass mode at the innermost node is a grid artifact that `A²`
/// amplifies by orders of magnitude.
pub fn compute_psi_loc(
    history: &History,
    result: &mut ScatteringResult,
    t: f64,
    params: &ProjectionParams,
) -> Result<RadialField> {
    let (t0, psi) = history.snapshot(t)?;
    let loc = psi.sub(&free_propagate(&result.psi_free, t0))?;
    let dil = Dilation::shared(history.grid(), params)?;
    let a1f = dil.dilation_power(&band_limited(&loc), 1)?;
    let a2 = dil.dilation_power(&a1f, 1)?.norm();
    let residual = match history.cook_radius() {
        Some(_) => Some(loc.sub(&psi_loc_operator(history, t0, params)?)?.norm()),
        None => None,
    };
    result.psi_loc_series.push(PsiLocRecord {
        t: t0,
        l2: loc.norm(),
        wdelta: weighted_norm(&loc, result.delta, 2.0),
        a1: a1f.norm(),
        a2,
        residual,
    });
    Ok(loc)
}

/// `‖ψ_free‖² + ‖ψ_loc(t_last)‖²` over `‖ψ₀‖²`.
pub fn mass_budget(history: &History, result: &ScatteringResult) -> Result<f64> {
    let (t, psi) = history.snapshot(history.span().1)?;
    let loc = psi.sub(&free_propagate(&result.psi_free, t))?;
    Ok((result.psi_free.norm_sqr() + loc.norm_sqr()) / history.initial().norm_sqr())
}

/// `(∫ ‖ψ(t)‖_{L^r}^q dt)^{1/q}` by the trapezoid rule over the forward snapshots.
pub fn strichartz_norm(traj: &Trajectory, q: f64, r: f64) -> Result<f64> {
    let n = traj.grid().dimension() as f64;
    if !(q >= 2.0 && r >= 2.0) || (2.0 / q + n / r - 0.5 * n).abs() > 1e-9 {
        return Err(Error::InadmissiblePair { q, r, n: n as usize });
    }
    let vals: Vec<f64> = traj
        .states
        .iter()
        .map(|s| weighted_norm(s, 0.0, r).powf(q))
        .collect();
    let integral: f64 = traj
        .times
        .windows(2)
        .zip(vals.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum();
    Ok(integral.powf(1.0 / q))
}
