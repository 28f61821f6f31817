use bendaid::session::{
    export_csv, import_csv, reference_contour, score, ContourSource, PitchContour, ReferenceVibrato,
};
use proptest::prelude::*;

fn flat(value: f64, end_ms: u64) -> PitchContour<f64> {
    PitchContour::from_samples(ContourSource::Recorded, (0..=end_ms).map(|t| (t, value)).collect()).unwrap()
}

#[test]
fn flat_line_against_reference() {
    let r = reference_contour(50.0f64, 5.0).unwrap();
    let s = score(&flat(0.0, 9000), &r).unwrap();
    assert_eq!(s.grid_points, 901);

    // Brute force over the grid, straight from the stimulus definition.
    let cents = |t: u64| {
        let local = if t == 9000 { 3000 } else { t % 3000 };
        if local < 500 {
            0.0
        } else {
            let x = (local - 500) as f64 / 1000.0;
            25.0 * (1.0 - (2.0 * std::f64::consts::PI * 5.0 * x).cos())
        }
    };
    let mse: f64 = (0..=900).map(|i| cents(i * 10).powi(2)).sum::<f64>() / 901.0;
    assert!((s.rmse_cents - mse.sqrt()).abs() < 1e-9);
    // Continuous limit: 5/6 of the time at mean square 3/8·depth².
    assert!((s.rmse_cents - 50.0 * (5.0f64 / 16.0).sqrt()).abs() < 0.1);
    assert_eq!(s.correlation, 0.0);
    // 13 crests per note at t = 0.1, 0.3, ... 2.5 s after onset; the last note's final
    // crest is the contour's end point and has no descent after it.
    assert_eq!(s.peak_count_delta, -(13 + 13 + 12));
}

#[test]
fn perfect_mimicry() {
    let r = reference_contour(50.0f64, 5.0).unwrap();
    let mut p = r.clone();
    p = PitchContour::from_samples(ContourSource::Recorded, p.samples().to_vec()).unwrap();
    let s = score(&p, &r).unwrap();
    assert!(s.rmse_cents < 1e-12);
    assert!((s.correlation - 1.0).abs() < 1e-12);
    assert_eq!(s.peak_count_delta, 0);
}

fn vibrato(depth: f64, rate: f64) -> PitchContour<f64> {
    ReferenceVibrato { depth_cents: depth, rate_hz: rate, ..Default::default() }.contour().unwrap()
}

proptest! {
    #[test]
    fn rmse_is_symmetric_and_scales(d1 in 5.0..200.0f64, d2 in 5.0..200.0f64, r1 in 1.0..10.0f64, r2 in 1.0..10.0f64, k in 0.1..10.0f64) {
        let (a, b) = (vibrato(d1, r1), vibrato(d2, r2));
        let ab = score(&a, &b).unwrap();
        let ba = score(&b, &a).unwrap();
        prop_assert!((ab.rmse_cents - ba.rmse_cents).abs() < 1e-9 * (1.0 + ab.rmse_cents));
        prop_assert!((ab.correlation - ba.correlation).abs() < 1e-12);

        let scaled = score(&vibrato(d1 * k, r1), &vibrato(d2 * k, r2)).unwrap();
        prop_assert!((scaled.rmse_cents - k * ab.rmse_cents).abs() < 1e-9 * (1.0 + scaled.rmse_cents));
        prop_assert!((scaled.correlation - ab.correlation).abs() < 1e-9);
    }

    #[test]
    fn csv_roundtrip_is_exact_after_quantizing(values in prop::collection::vec(-5000.0..5000.0f64, 1..200), gaps in prop::collection::vec(1u64..50, 200)) {
        let mut t = 0;
        let samples: Vec<(u64, f64)> = values.iter().zip(&gaps).map(|(&v, &g)| { t += g; (t, v) }).collect();
        let c = PitchContour::from_samples(ContourSource::Recorded, samples).unwrap();
        let bytes = export_csv(&c);
        let back = import_csv::<f64>(&bytes, ContourSource::Recorded).unwrap();
        let q = c.quantized();
        prop_assert_eq!(back.samples(), q.samples());
        prop_assert_eq!(export_csv(&back), bytes);
    }
}
