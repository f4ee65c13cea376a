use num_complex::Complex64;
use proptest::prelude::*;
use solscope_cli::io::*;
use solscope_core::dilation::Sign;
use solscope_core::nls::{EvolutionConfig, NonlinearitySpec};
use solscope_core::radial::{build_grid, RadialField};
use solscope_core::scattering::History;

fn bits(v: &[Complex64]) -> Vec<(u64, u64)> {
    v.iter().map(|c| (c.re.to_bits(), c.im.to_bits())).collect()
}

#[test]
fn snapshot_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let g = build_grid(5, 30.0, 64).unwrap();
    let psi = RadialField::from_fn(&g, |r| Complex64::from_polar((-r * r / 3.0).exp(), 0.7 * r) * (1.0 / 3.0));
    let path = dir.path().join("s.json");
    write_snapshot(&path, 1.0 / 7.0, &psi).unwrap();
    let (t, back) = read_snapshot(&path, None).unwrap();
    assert_eq!(t.to_bits(), (1.0f64 / 7.0).to_bits());
    assert_eq!(bits(back.values()), bits(psi.values()));
    assert!(back.grid().same_as(psi.grid()));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("\"schema\": \"solscope.snapshot/1\""));
}

#[test]
fn snapshot_on_another_grid_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let g = build_grid(5, 30.0, 64).unwrap();
    let path = dir.path().join("s.json");
    write_snapshot(&path, 0.0, &RadialField::from_real(&g, |_| 1.0)).unwrap();
    let other = build_grid(5, 30.0, 128).unwrap();
    assert!(matches!(read_snapshot(&path, Some(&other)), Err(IoError::Format { .. })));
    std::fs::write(&path, "{ not json").unwrap();
    assert!(matches!(read_snapshot(&path, None), Err(IoError::Format { .. })));
    assert!(matches!(read_snapshot(&dir.path().join("missing.json"), None), Err(IoError::Fs { .. })));
}

#[test]
fn history_round_trips_with_cook_integrals() {
    let dir = tempfile::tempdir().unwrap();
    let g = build_grid(5, 30.0, 64).unwrap();
    let psi0 = RadialField::from_real(&g, |r| (-r * r / 2.0).exp());
    let mut cfg = EvolutionConfig::new(psi0, NonlinearitySpec::monomial(Sign::Plus, 1.0, 1.2), 1.0);
    cfg.cook_radius = Some(5.0);
    let h = History::run(&cfg, 0.5).unwrap();
    write_history(dir.path(), &h).unwrap();
    let back = read_history(dir.path()).unwrap();
    for (a, b) in [(h.forward(), back.forward()), (h.backward().unwrap(), back.backward().unwrap())] {
        assert_eq!(a.times.iter().map(|t| t.to_bits()).collect::<Vec<_>>(), b.times.iter().map(|t| t.to_bits()).collect::<Vec<_>>());
        for (x, y) in a.states.iter().zip(&b.states) {
            assert_eq!(bits(x.values()), bits(y.values()));
        }
        assert_eq!(a.monitors, b.monitors);
        let (ci, cj) = (a.integrals.as_ref().unwrap(), b.integrals.as_ref().unwrap());
        assert_eq!(ci.radius, cj.radius);
        for (u, v) in ci.interaction.iter().chain(&ci.smooth).chain(&ci.plain).zip(cj.interaction.iter().chain(&cj.smooth).chain(&cj.plain)) {
            assert_eq!(bits(u), bits(v));
        }
    }
    assert_eq!(back.span(), h.span());
}

#[test]
fn csv_names_its_schema_first() {
    let mut csv = Csv::new("demo/1", &["a", "b"]);
    csv.row(&[fmt_f64(0.1), "x, y".into()]);
    assert_eq!(csv.as_str(), "# schema: demo/1\na,b\n1.0000000000000001e-1,\"x, y\"\n");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    Csv::new("demo/1", &["a"]).write(&path).unwrap();
    assert!(read_csv(&path, "demo/1").is_ok());
    assert!(matches!(read_csv(&path, "demo/2"), Err(IoError::Format { .. })));
}

proptest! {
    #[test]
    fn printed_floats_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn complex_encoding_round_trips(v in prop::collection::vec((any::<f64>(), any::<f64>()), 0..40)) {
        let vals: Vec<Complex64> = v.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
        let back = decode_complex(&encode_complex(&vals)).unwrap();
        prop_assert_eq!(bits(&back), bits(&vals));
    }
}
