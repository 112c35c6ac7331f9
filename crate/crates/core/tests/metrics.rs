mod common;

use artextend_core::{evaluate_fid, make_training_pair, FidStats, ImageTensor, PixelProjection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixtures(n: usize) -> Vec<artextend_core::ExamplePair> {
    (0..n).map(|k| make_training_pair(&common::painting(64, k), format!("f{k}")).unwrap()).collect()
}

#[test]
fn covariance_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (n, d) = (50, 7);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
    let s = FidStats::from_features(&x).unwrap();
    for i in 0..d {
        let mi: f64 = x.iter().map(|r| r[i]).sum::<f64>() / n as f64;
        assert!((s.mu[i] - mi).abs() < 1e-12);
        for j in 0..d {
            let mj: f64 = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            let mut c = 0.0;
            for r in &x {
                c += (r[i] - mi) * (r[j] - mj);
            }
            c /= (n - 1) as f64;
            assert!((s.sigma[i * d + j] - c).abs() < 1e-9);
        }
    }
}

#[test]
fn identity_on_target_scores_zero() {
    let pairs = fixtures(10);
    let fid = evaluate_fid(&pairs, |p| Ok(p.target.clone()), &PixelProjection::new(), 10, 0).unwrap();
    assert!(fid.abs() < 1e-6, "{fid}");
}

#[test]
fn constant_grey_scores_above_one() {
    let pairs = fixtures(10);
    let grey = ImageTensor::filled(64, 64, [0.0; 3]).unwrap();
    let fid = evaluate_fid(&pairs, |_| Ok(grey.clone()), &PixelProjection::new(), 10, 0).unwrap();
    assert!(fid > 1.0, "{fid}");
}

#[test]
fn evaluation_is_repeatable() {
    let pairs = fixtures(12);
    let blur = |p: &artextend_core::ExamplePair| Ok(p.target.resize_bilinear(16, 16).resize_bilinear(64, 64));
    let a = evaluate_fid(&pairs, blur, &PixelProjection::new(), 6, 3).unwrap();
    let b = evaluate_fid(&pairs, blur, &PixelProjection::new(), 6, 3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sample_size_below_two_is_rejected() {
    let pairs = fixtures(3);
    assert!(evaluate_fid(&pairs, |p| Ok(p.target.clone()), &PixelProjection::new(), 1, 0).is_err());
}
