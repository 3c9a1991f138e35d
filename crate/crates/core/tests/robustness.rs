use hamspec::eigen::SolveOptions;
use hamspec::fem::PotentialField;
use hamspec::mesh::shapes;
use hamspec::spectral::robustness::*;

fn ramp(mesh: &hamspec::TriMesh, scale: f64) -> PotentialField {
    PotentialField::new(mesh.vertices().iter().map(|p| scale * p[1]).collect()).unwrap()
}

#[test]
fn correlation_is_sign_and_affine_invariant() {
    let a: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
    let b: Vec<f64> = a.iter().map(|x| -3.0 * x + 7.0).collect();
    assert!((aligned_correlation(&a, &b) - 1.0).abs() < 1e-12);
    let c: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    assert!(aligned_correlation(&a, &c) < 0.3);
    assert_eq!(aligned_correlation(&[1.0; 4], &[2.0; 4]), 1.0);
}

#[test]
fn potential_noise_has_requested_variance() {
    let n = 20_000;
    let v = PotentialField::new((0..n).map(|i| (i % 100) as f64).collect()).unwrap();
    let var = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|y| (y - m).powi(2)).sum::<f64>() / x.len() as f64
    };
    let noisy = add_potential_noise(&v, 0.2, 5).unwrap();
    let diff: Vec<f64> = noisy.values.iter().zip(&v.values).map(|(a, b)| a - b).collect();
    let ratio = var(&diff) / var(&v.values);
    assert!((ratio - 0.2).abs() < 0.01, "{ratio}");
    assert_eq!(add_potential_noise(&v, 0.2, 5).unwrap().values, noisy.values);
    assert!(add_potential_noise(&v, -1.0, 5).is_err());
}

#[test]
fn zero_noise_gives_identical_spectra() {
    let m = shapes::finger_plate(10, 8).unwrap();
    let r = noise_robustness(&m, &ramp(&m, 30.0), 5, 0.0, 0.0, 1, &SolveOptions::dense()).unwrap();
    assert_eq!(r.clean_values, r.noisy_values);
    assert!(r.correlations.iter().all(|&c| (c - 1.0).abs() < 1e-12));
}

#[test]
fn low_modes_survive_noise() {
    let m = shapes::finger_plate(24, 20).unwrap();
    for seed in 0..2 {
        let r = noise_robustness(&m, &ramp(&m, 30.0), 5, 0.2, 0.2, seed, &SolveOptions::default()).unwrap();
        assert!(r.correlations.iter().all(|&c| c > 0.9), "seed {seed}: {:?}", r.correlations);
    }
}

#[test]
fn predictor_error_is_second_order() {
    let m = shapes::finger_plate(10, 8).unwrap();
    let s = predictor_sweep(&m, &ramp(&m, 30.0), &[1, 2, 3, 4], &[1e-1, 1e-2, 1e-3, 1e-4], 7).unwrap();
    assert!((1.8..=2.2).contains(&s.slope), "{s:?}");
    // The prediction beats the unperturbed vectors at every ε.
    assert!(s.errors.iter().zip(&s.baseline).all(|(e, b)| e < b));
    assert!((loglog_slope(&[1.0, 10.0, 100.0], &[2.0, 200.0, 20000.0]) - 2.0).abs() < 1e-12);
}
