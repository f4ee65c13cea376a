//! Propagation observables `⟨B⟩_t = (ψ(t), B(t)ψ(t))` for multiplication-type
//! `B` with range `[0, 1]`, and the relative propagation check on their series.

use serde::Serialize;

use crate::nls::Trajectory;
use crate::radial::{free_propagate, Cutoff, RadialField};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum ObservableKind {
    /// `F_c(|x|/t^α ≤ 1)`.
    PhaseSpaceCutoff { alpha: f64 },
    /// A fixed spatial cutoff.
    SpatialCutoff(Cutoff),
    /// Node values of a multiplier in `[0, 1]`.
    Custom(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// `B(t)` is conjugated by the free flow: the multiplier acts on `e^{itH₀}ψ(t)`.
    HeisenbergFree,
    Lab,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSpec {
    pub kind: ObservableKind,
    pub frame: Frame,
}

impl ObservableSpec {
    /// Phase-space cutoff in the free Heisenberg frame; `α ∈ (0, 1 - 2/n)`.
    pub fn phase_space(alpha: f64, n: usize) -> Result<Self> {
        let spec = ObservableSpec {
            kind: ObservableKind::PhaseSpaceCutoff { alpha },
            frame: Frame::HeisenbergFree,
        };
        spec.validate(n)?;
        Ok(spec)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match &self.kind {
            ObservableKind::PhaseSpaceCutoff { alpha } => {
                let upper = 1.0 - 2.0 / n as f64;
                if !(*alpha > 0.0 && *alpha < upper) {
                    return Err(Error::InvalidAlpha { alpha: *alpha, upper });
                }
            }
            ObservableKind::SpatialCutoff(_) => {}
            ObservableKind::Custom(m) => {
                if m.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::InvalidParameter("custom multiplier must take values in [0, 1]".into()));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        let kind = match &self.kind {
            ObservableKind::PhaseSpaceCutoff { alpha } => format!("phase_space_cutoff(alpha={alpha})"),
            ObservableKind::SpatialCutoff(c) => format!("spatial_cutoff({c:?})"),
            ObservableKind::Custom(_) => "custom".into(),
        };
        match self.frame {
            Frame::HeisenbergFree => kind,
            Frame::Lab => format!("{kind}@lab"),
        }
    }

    fn multiplier(&self, t: f64, r: f64, i: usize) -> f64 {
        match &self.kind {
            ObservableKind::PhaseSpaceCutoff { alpha } => Cutoff::AtMost(t.max(0.0).powf(*alpha)).eval(r),
            ObservableKind::SpatialCutoff(c) => c.eval(r),
            ObservableKind::Custom(m) => m[i],
        }
    }

    /// `⟨B⟩_t` for the state `psi` at time `t`.
    pub fn expectation(&self, psi: &RadialField, t: f64) -> Result<f64> {
        let g = psi.grid();
        if let ObservableKind::Custom(m) = &self.kind {
            if m.len() != g.num_points() {
                return Err(Error::GridMismatch);
            }
        }
        let phi = match self.frame {
            Frame::HeisenbergFree => free_propagate(psi, -t),
            Frame::Lab => psi.clone(),
        };
        Ok(phi
            .values()
            .iter()
            .zip(g.nodes())
            .zip(g.measure())
            .enumerate()
            .map(|(i, ((v, &r), m))| self.multiplier(t, r, i) * v.norm_sqr() * m)
            .sum())
    }
}

/// `(t, ⟨B⟩_t)` over the snapshots.
pub fn observable_series(traj: &Trajectory, spec: &ObservableSpec) -> Result<Vec<(f64, f64)>> {
    spec.validate(traj.grid().dimension())?;
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, psi)| Ok((t, spec.expectation(psi, t)?)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RpresReport {
    pub points: usize,
    /// Sum of the positive forward differences.
    pub nonnegative_sum: f64,
    /// Sum of the magnitudes of the negative forward differences.
    pub remainder_sum: f64,
    pub sup: f64,
    pub g_budget: f64,
    pub pass: bool,
}

/// Splits the forward differences of `⟨B⟩` into their positive part and the
/// remainder; passes when the remainder fits in `g_budget` and the positive
/// part stays below `sup⟨B⟩ + g_budget`.
pub fn rpres_check(series: &[(f64, f64)], g_budget: f64) -> Result<RpresReport> {
    if series.len() < 10 {
        return Err(Error::DegenerateInput(format!("{} points, need at least 10", series.len())));
    }
    if !(g_budget >= 0.0) {
        return Err(Error::InvalidParameter(format!("g_budget = {g_budget} must be non-negative")));
    }
    if series.windows(2).any(|w| !(w[1].0 > w[0].0)) || series.iter().any(|p| !p.1.is_finite()) {
        return Err(Error::DegenerateInput("series must be finite with increasing times".into()));
    }
    let mut pos = 0.0;
    let mut rem = 0.0;
    for w in series.windows(2) {
        let d = w[1].1 - w[0].1;
        if d >= 0.0 {
            pos += d;
        } else {
            rem -= d;
        }
    }
    let sup = series.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(RpresReport {
        points: series.len(),
        nonnegative_sum: pos,
        remainder_sum: rem,
        sup,
        g_budget,
        pass: rem <= g_budget && pos <= sup + g_budget,
    })
}
