mod common;

use std::sync::OnceLock;

use common::*;
use num_complex::Complex64;
use solscope_core::dilation::*;
use solscope_core::nls::*;
use solscope_core::radial::*;
use solscope_core::scattering::*;
use solscope_core::Error;

fn run(psi0: RadialField, spec: NonlinearitySpec, t_end: f64, t_back: f64, stride: Option<usize>) -> History {
    let mut cfg = EvolutionConfig::new(psi0, spec, t_end);
    cfg.cook_radius = Some(CHANNEL_RADIUS);
    if let Some(s) = stride {
        cfg.snapshot_stride = s;
    }
    History::run(&cfg, t_back).unwrap()
}

fn params(h: &History) -> ProjectionParams {
    ProjectionParams::default_for(h.grid(), 0.0)
}

fn free_run() -> &'static History {
    static H: OnceLock<History> = OnceLock::new();
    H.get_or_init(|| {
        let g = build_grid(5, 60.0, 256).unwrap();
        let psi0 = RadialField::from_real(&g, |r| (-r * r / 2.0).exp());
        run(psi0, NonlinearitySpec::free(), 12.0, 12.0, None)
    })
}

/// Defocusing packet launched outward through the channel annulus.
fn crossing_run() -> &'static History {
    static H: OnceLock<History> = OnceLock::new();
    H.get_or_init(|| {
        let g = build_grid(5, 40.0, 256).unwrap();
        let psi0 = RadialField::from_fn(&g, |r| Complex64::from_polar((-(r - 8.0f64).powi(2) / 4.0).exp(), 0.5 * r));
        run(psi0, NonlinearitySpec::monomial(Sign::Plus, 1.0, 1.2), 6.0, 4.0, Some(1))
    })
}

fn soliton_run() -> &'static (History, RadialField) {
    static H: OnceLock<(History, RadialField)> = OnceLock::new();
    H.get_or_init(|| {
        let g = build_grid(5, 300.0, 512).unwrap();
        let q = shoot_ground_state(&g, 0.005, 1.0, 1.2).unwrap();
        (run(q.clone(), NonlinearitySpec::monomial(Sign::Minus, 1.0, 1.2), 30.0, 20.0, None), q)
    })
}

fn radiation_run() -> &'static History {
    static H: OnceLock<History> = OnceLock::new();
    H.get_or_init(|| {
        let g = build_grid(5, 240.0, 512).unwrap();
        let psi0 = RadialField::from_real(&g, |r| (-r * r / 2.0).exp());
        run(psi0, NonlinearitySpec::monomial(Sign::Plus, 1.0, 1.2), 30.0, 30.0, None)
    })
}

fn saturated_run() -> &'static History {
    static H: OnceLock<History> = OnceLock::new();
    H.get_or_init(|| {
        let g = build_grid(5, 400.0, 1024).unwrap();
        let psi0 = RadialField::from_real(&g, |r| 2.0 * (-r * r / 18.0).exp());
        run(psi0, NonlinearitySpec::saturated(2.0, 2.0), 24.0, 24.0, None)
    })
}

#[test]
fn delta_and_decay_defaults() {
    let spec = NonlinearitySpec::monomial(Sign::Minus, 1.0, 1.2);
    let sigma = interaction_decay(&spec, 5);
    assert!((sigma - 2.4).abs() < 1e-12);
    assert!((default_delta(sigma).unwrap() - 0.01).abs() < 1e-12);
    assert!((default_delta(2.5).unwrap() - 0.0125).abs() < 1e-12);
    assert!((default_delta(10.0).unwrap() - 0.0125).abs() < 1e-12);
    assert!(default_delta(2.0).is_err());
    let s = default_s_grid(10.0);
    assert_eq!(s, vec![1.0, 1.5, 2.25, 3.375, 5.0625, 7.59375]);
}

#[test]
fn cauchy_acceptance_rule() {
    let falling: Vec<(f64, f64)> = (0..8).map(|k| (k as f64, 1e-2 * 0.3f64.powi(k))).collect();
    assert!(cauchy_accepted(&falling, 1.0));
    let rising: Vec<(f64, f64)> = (0..8).map(|k| (k as f64, 1e-3 * k as f64)).collect();
    assert!(!cauchy_accepted(&rising, 1.0));
    let flat_large: Vec<(f64, f64)> = (0..8).map(|k| (k as f64, 5e-3)).collect();
    assert!(!cauchy_accepted(&flat_large, 1.0));
    let flat_tiny: Vec<(f64, f64)> = (0..8).map(|k| (k as f64, 1e-9)).collect();
    assert!(cauchy_accepted(&flat_tiny, 1.0));
}

#[test]
fn psi_d_vanishes_at_zero_and_for_free_runs() {
    let h = free_run();
    assert!(compute_psi_d(h, 0.0).unwrap().norm() <= 1e-14);
    for t in [-7.0, 1.0, 5.0, 12.0] {
        assert!(compute_psi_d(h, t).unwrap().norm() <= 1e-9 * h.initial().norm(), "t = {t}");
    }
    assert!(matches!(compute_psi_d(h, 13.0), Err(Error::CoverageGap { .. })));
}

#[test]
fn psi_d_is_the_direct_difference() {
    let h = crossing_run();
    let mut last = 0.0;
    for t in [0.5, 1.5, 3.0] {
        let (ts, psi) = h.snapshot(t).unwrap();
        let direct = psi.sub(&free_propagate(h.initial(), ts)).unwrap();
        let d = compute_psi_d(h, t).unwrap();
        assert!(dist(&d, &direct) <= 1e-14 * direct.norm());
        assert!(d.norm() > last);
        last = d.norm();
    }
}

#[test]
fn cook_integrals_match_the_telescoped_identity() {
    // C₊(t,T)ψ(t) = P⁺Fψ(t) - P⁺e^{iTH₀}Fψ(t+T), and the mirror image for C₋
    let h = crossing_run();
    let p = params(h);
    let f = Cutoff::Above(CHANNEL_RADIUS);
    for (t, big_t) in [(1.0, 3.0), (2.0, 3.9)] {
        let (t0, psi) = h.snapshot(t).unwrap();
        let fpsi = spatial_cutoff_apply(&psi, &f);
        for sign in [Sign::Plus, Sign::Minus] {
            let (t1, psi1) = h.snapshot(t0 + sign.as_f64() * big_t).unwrap();
            let far = free_propagate(&spatial_cutoff_apply(&psi1, &f), t0 - t1);
            let exact = apply_halfspace_projection(&fpsi.sub(&far).unwrap(), &p, sign).unwrap();
            let cook = cook_correction(h, t0, big_t, &p, sign).unwrap();
            let e = dist(&cook, &exact) / exact.norm();
            assert!(e <= 1e-4, "t = {t0}, T = {big_t}, {sign:?}: {e:e}");
        }
    }
}

#[test]
fn free_flow_cook_term_needs_the_annulus() {
    let g = build_grid(5, 80.0, 256).unwrap();
    let spec = NonlinearitySpec::free();
    // outgoing packet starting at r = 25 never touches r ∈ [5, 10]
    let far = RadialField::from_fn(&g, |r| Complex64::from_polar((-(r - 25.0f64).powi(2) / 2.0).exp(), 2.0 * r));
    let h = run(far.clone(), spec.clone(), 4.0, 0.0, None);
    let p = params(&h);
    let c = cook_correction(&h, 0.0, 4.0, &p, Sign::Plus).unwrap();
    assert!(c.norm() <= 1e-6 * far.norm(), "{:e}", c.norm() / far.norm());
    // the same packet launched from r = 3 crosses it
    let near = RadialField::from_fn(&g, |r| Complex64::from_polar((-(r - 3.0f64).powi(2) / 2.0).exp(), 2.0 * r));
    let h = run(near.clone(), spec, 4.0, 0.0, None);
    let c = cook_correction(&h, 0.0, 4.0, &p, Sign::Plus).unwrap();
    assert!(c.norm() >= 1e-2 * near.norm());
    // without V the interaction-free integral vanishes identically
    assert_eq!(plain_correction(&h, 0.0, 4.0, &p, Sign::Plus).unwrap().norm(), 0.0);
}

#[test]
fn cook_correction_reports_coverage_gaps() {
    let h = free_run();
    let p = params(h);
    assert!(matches!(
        cook_correction(h, 5.0, 10.0, &p, Sign::Plus),
        Err(Error::CoverageGap { .. })
    ));
    assert!(matches!(
        cook_correction(h, 5.0, 20.0, &p, Sign::Minus),
        Err(Error::CoverageGap { .. })
    ));
    let plain = History::new(evolve(&EvolutionConfig::new(h.initial().clone(), NonlinearitySpec::free(), 1.0)).unwrap());
    assert!(cook_correction(&plain, 0.0, 0.5, &p, Sign::Plus).is_err());
}

#[test]
fn free_run_pplus_limit_is_the_initial_state() {
    let h = free_run();
    let p = params(h);
    let t = 4.0;
    let res = extract_free_pplus(h, t, &p, &default_s_grid(8.0), 0.01).unwrap();
    assert!(res.cauchy_history.iter().all(|c| c.1 <= 1e-8 * h.initial().norm()));
    assert!(res.incoming_reach.is_some());
    assert!(dist(&res.psi_free, h.initial()) <= 1e-8 * h.initial().norm());
    assert_eq!(res.route, Route::PplusFiltered);
}

#[test]
fn free_run_phase_space_limit_approaches_the_initial_state() {
    let h = free_run();
    let ts: Vec<f64> = (0..8).map(|k| 2.0 + 1.4 * k as f64).collect();
    let res = phase_space_limits(h, 0.55, &ts, 0.01).unwrap();
    let incs: Vec<f64> = res.cauchy_history.iter().map(|c| c.1).collect();
    assert!(incs.windows(2).all(|w| w[1] <= w[0]), "{incs:?}");
    // the cut acts on the fixed profile ψ₀, so the gap is its outer tail
    let t_last = res.extraction_time;
    let tail = spatial_cutoff_apply(h.initial(), &Cutoff::AtMost(t_last.powf(0.55))).sub(h.initial()).unwrap();
    let e = dist(&res.psi_free, h.initial());
    assert!((e - tail.norm()).abs() <= 1e-10 * h.initial().norm(), "{e:e} {incs:?}");
    assert!(e <= 0.1 * h.initial().norm());
    for alpha in [0.0, 0.6, 0.8, -0.1] {
        assert!(matches!(
            phase_space_limits(h, alpha, &ts, 0.01),
            Err(Error::InvalidAlpha { .. })
        ));
    }
}

#[test]
fn free_run_leaves_nothing_localized() {
    let h = free_run();
    let p = params(h);
    let mut res = extract_free_pplus(h, 4.0, &p, &default_s_grid(8.0), 0.01).unwrap();
    for t in [0.0, 3.0, 9.0] {
        let loc = compute_psi_loc(h, &mut res, t, &p).unwrap();
        assert!(loc.norm() <= 1e-6 * h.initial().norm());
    }
    assert_eq!(res.psi_loc_series.len(), 3);
    for t in [1.0, 6.0] {
        for sign in [Sign::Plus, Sign::Minus] {
            assert_eq!(smooth_correction(h, t, 4.0, &p, sign).unwrap().norm(), 0.0);
        }
    }
}

#[test]
fn soliton_lies_in_the_localized_channel() {
    let (h, q) = soliton_run();
    let p = params(h);
    let spec = NonlinearitySpec::monomial(Sign::Minus, 1.0, 1.2);
    let delta = default_delta(interaction_decay(&spec, 5)).unwrap();
    let mut res = pplus_limits(h, 15.0, &p, &default_s_grid(15.0), delta).unwrap();
    assert!(res.psi_free.norm() <= 0.05 * q.norm(), "{}", res.psi_free.norm() / q.norm());
    let ts: Vec<f64> = (0..=6).map(|k| 5.0 * k as f64).collect();
    for &t in &ts {
        compute_psi_loc(h, &mut res, t, &p).unwrap();
    }
    let w: Vec<f64> = res.psi_loc_series.iter().map(|r| r.wdelta).collect();
    let (lo, hi) = w.iter().fold((f64::MAX, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(hi / lo <= 1.2, "{w:?}");
    for r in &res.psi_loc_series {
        assert!((r.l2 / q.norm() - 1.0).abs() < 0.05);
    }
}

#[test]
fn soliton_cook_corrections_stay_bounded_in_t() {
    let (h, q) = soliton_run();
    let p = params(h);
    let t = 10.0;
    for sign in [Sign::Plus, Sign::Minus] {
        let vals: Vec<f64> = [1.0, 2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|&big_t| weighted_norm(&cook_correction(h, t, big_t, &p, sign).unwrap(), 0.01, 2.0))
            .collect();
        let hi = vals.iter().cloned().fold(0.0, f64::max);
        assert!(hi <= 2.0 * q.norm(), "{sign:?}: {vals:?}");
        assert!(vals.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn radiation_scatters_and_both_routes_agree() {
    let h = radiation_run();
    let p = params(h);
    let norm0 = h.initial().norm();
    let mut res = extract_free_pplus(h, 18.0, &p, &default_s_grid(12.0), 0.01).unwrap();
    assert!(res.psi_free.norm() >= 0.9 * norm0);
    let ts: Vec<f64> = (0..=10).map(|k| 15.0 + 1.5 * k as f64).collect();
    let ps = extract_free_phase_space(h, 0.55, &ts, 0.01).unwrap();
    assert!(dist(&ps.psi_free, &res.psi_free) <= 5e-2 * norm0);

    for k in 0..=12 {
        compute_psi_loc(h, &mut res, 2.5 * k as f64, &p).unwrap();
    }
    let resid = res.residual_series();
    let half = &resid[resid.len() / 2..];
    assert!(ls_slope(half) <= 0.0, "{resid:?}");
    assert!(resid.last().unwrap().1 <= 0.1 * norm0);
    let budget = mass_budget(h, &res).unwrap();
    assert!((budget - 1.0).abs() <= 0.1, "{budget}");
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn saturated_smooth_correction_is_bounded_in_t() {
    let h = saturated_run();
    let p = params(h);
    let a2: Vec<f64> = [1.0, 2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|&big_t| smoothness_norm(&smooth_correction(h, 5.0, big_t, &p, Sign::Plus).unwrap(), &p).unwrap())
        .collect();
    let mut sorted = a2.clone();
    sorted.sort_by(f64::total_cmp);
    assert!(sorted[4] / sorted[2] <= 2.0, "{a2:?}");
}

#[test]
fn uncut_and_smooth_corrections_merge_at_late_times() {
    let h = radiation_run();
    let p = params(h);
    let (start, end) = h.span();
    let gap = |t: f64| {
        let t = h.snapshot(t).unwrap().0;
        let both = |f: &dyn Fn(Sign, f64) -> RadialField| f(Sign::Plus, end - t).add(&f(Sign::Minus, t - start)).unwrap();
        let uncut = both(&|s, big_t| plain_correction(h, t, big_t, &p, s).unwrap());
        let smooth = both(&|s, big_t| smooth_correction(h, t, big_t, &p, s).unwrap());
        dist(&uncut, &smooth) / h.initial().norm()
    };
    let gaps: Vec<f64> = [1.0, 3.0, 6.0, 12.0, 20.0].iter().map(|&t| gap(t)).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[4] <= 0.1 * gaps[0], "{gaps:?}");
}

#[test]
fn strichartz_norm_basics() {
    let g = build_grid(5, 60.0, 256).unwrap();
    let zero = evolve(&EvolutionConfig::new(RadialField::zeros(&g), NonlinearitySpec::free(), 1.0));
    // a zero initial state has no H¹ scale for the ceiling, but the free run is still valid
    if let Ok(tr) = zero {
        assert_eq!(strichartz_norm(&tr, 2.0, 10.0 / 3.0).unwrap(), 0.0);
    }
    let h = free_run();
    assert!(matches!(
        strichartz_norm(h.forward(), 2.0, 3.0),
        Err(Error::InadmissiblePair { .. })
    ));
    assert!(strichartz_norm(h.forward(), 4.0, 2.5).is_ok());
}

#[test]
fn strichartz_norm_is_stable_under_refinement() {
    let value = |r_max: f64, num: usize, dt_scale: f64| {
        let g = build_grid(5, r_max, num).unwrap();
        let psi0 = RadialField::from_real(&g, |r| (-r * r / 2.0).exp());
        let cfg = EvolutionConfig::new(psi0, NonlinearitySpec::free(), 10.0);
        let cfg = cfg.clone().with_dt(cfg.dt * dt_scale);
        strichartz_norm(&evolve(&cfg).unwrap(), 2.0, 10.0 / 3.0).unwrap()
    };
    let base = value(60.0, 256, 1.0);
    assert!(base.is_finite() && base > 0.0);
    for v in [value(120.0, 512, 1.0), value(60.0, 512, 0.5)] {
        assert!((v / base - 1.0).abs() <= 0.02, "{base} vs {v}");
    }
}
