//! Golden test of the curve dump format: the serialization is part of the
//! external interface and must stay byte-stable.

use sinai::curves::StableCurve;

#[test]
fn curve_dump_is_byte_stable() {
    let samples = vec![
        (0.25, 0.1),
        (0.2500125, 0.099833),
        (0.250025, 0.0996661),
    ];
    let w = StableCurve::from_samples(1, samples, 60).unwrap();
    let text = w.dump();
    let golden = "stable-curve v1\n\
                  scatterer 1\n\
                  homogeneity bulk\n\
                  samples 3\n\
                  2.50000000000000000e-1 1.00000000000000006e-1\n\
                  2.50012500000000026e-1 9.98330000000000051e-2\n\
                  2.50024999999999997e-1 9.96660999999999936e-2\n";
    assert_eq!(text, golden);
    let parsed = StableCurve::parse(&text, 60).unwrap();
    assert_eq!(parsed.samples(), w.samples());
}

#[test]
fn strip_curve_dump_labels_strip() {
    let phi0 = std::f64::consts::FRAC_PI_2 - 1.0 / (70.0f64 * 70.0);
    let samples = vec![(0.1, phi0), (0.100001, phi0 - 1e-8)];
    let w = StableCurve::from_samples(0, samples, 60).unwrap();
    let text = w.dump();
    assert!(text.contains("homogeneity strip 70"));
}
