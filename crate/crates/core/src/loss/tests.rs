use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::verify::fd::{relative_error, FD_STEP};
use crate::verify::oracles::naive_ssim;

fn random_image(rng: &mut impl Rng, w: usize, h: usize, c: usize) -> Image {
    Image::from_fn(w, h, c, |_, _, _| rng.random_range(0.0..1.0))
}

fn pair(seed: u64) -> (Image, Image) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (random_image(&mut rng, 16, 16, 3), random_image(&mut rng, 16, 16, 3))
}

/// Every coordinate of `f`'s gradient against central differences.
fn fd_sweep(pred: &Image, f: impl Fn(&Image) -> Graded) -> f64 {
    let analytic = f(pred).grad;
    let mut worst: f64 = 0.0;
    for i in 0..pred.len() {
        let mut p = pred.clone();
        p.data[i] += FD_STEP;
        let mut m = pred.clone();
        m.data[i] -= FD_STEP;
        let fd = (f(&p).value - f(&m).value) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic[i], fd));
    }
    worst
}

#[test]
fn l1_examples() {
    let (a, b) = pair(1);
    assert_eq!(l1_loss(&a, &a).unwrap().value, 0.0);
    let mut shifted = a.clone();
    shifted.data.iter_mut().for_each(|v| *v += 0.1);
    assert!((l1_loss(&shifted, &a).unwrap().value - 0.1).abs() < 1e-12);
    let mut naive = 0.0;
    for i in 0..a.len() {
        naive += (a.data[i] - b.data[i]).abs();
    }
    assert!((l1_loss(&a, &b).unwrap().value - naive / a.len() as f64).abs() <= 1e-12);
    assert!(fd_sweep(&a, |p| l1_loss(p, &b).unwrap()) <= 1e-4);
}

#[test]
fn ssim_matches_windowed_oracle() {
    for seed in 0..3 {
        let (a, b) = pair(seed);
        let fast = ssim(&a, &b).unwrap().value;
        assert!((fast - naive_ssim(&a, &b)).abs() < 1e-12);
    }
}

#[test]
fn dssim_examples() {
    let (a, b) = pair(2);
    assert!(dssim_loss(&a, &a).unwrap().value.abs() < 1e-12);
    let zero = Image::filled(16, 16, 3, 0.0);
    let one = Image::filled(16, 16, 3, 1.0);
    let closed = (1.0 - SSIM_C1 / (1.0 + SSIM_C1)) / 2.0;
    let v = dssim_loss(&one, &zero).unwrap().value;
    assert!((v - closed).abs() < 1e-12);
    assert!((v - 0.5).abs() < 1e-4);
    let ab = dssim_loss(&a, &b).unwrap().value;
    let ba = dssim_loss(&b, &a).unwrap().value;
    assert!((ab - ba).abs() <= 1e-12);
    assert!(fd_sweep(&a, |p| dssim_loss(p, &b).unwrap()) <= 1e-4);
}

#[test]
fn ssim_rejects_small_images() {
    let small = Image::filled(10, 16, 3, 0.5);
    assert_eq!(ssim(&small, &small).unwrap_err().code(), "invalid-argument");
}

#[test]
fn color_loss_weighting() {
    let cfg = LossConfig::default();
    assert_eq!(cfg.lambda_ssim, 0.4);
    assert!((cfg.color(0.1, 0.5) - 0.26).abs() < 1e-15);
    let (a, b) = pair(3);
    assert_eq!(color_loss(&a, &a, 0.4).unwrap().0.value, 0.0);
    let (g, l1, ds) = color_loss(&a, &b, 0.4).unwrap();
    assert!((g.value - cfg.color(l1, ds)).abs() < 1e-15);
    assert!(fd_sweep(&a, |p| color_loss(p, &b, 0.4).unwrap().0) <= 1e-4);
}

#[test]
fn structure_loss_examples() {
    let (a, b) = pair(4);
    assert_eq!(structure_loss(&a, &a, 0.3, false).unwrap().value, 0.0);
    let mut offset = a.clone();
    offset.data.iter_mut().for_each(|v| *v += 0.25);
    assert!(structure_loss(&offset, &a, 0.3, false).unwrap().value < 1e-25);
    let mut b_off = b.clone();
    b_off.data.iter_mut().for_each(|v| *v += 0.25);
    let base = structure_loss(&a, &b, 0.3, false).unwrap().value;
    assert!((structure_loss(&offset, &b_off, 0.3, false).unwrap().value - base).abs() < 1e-12);
    // A ramp added to one image only changes the horizontal differences.
    let mut ramp = a.clone();
    for y in 0..16 {
        for x in 0..16 {
            for c in 0..3 {
                let i = ramp.index(x, y, c);
                ramp.data[i] += 0.01 * x as f64;
            }
        }
    }
    assert!(structure_loss(&ramp, &a, 0.3, false).unwrap().value > 1e-6);
    assert!(fd_sweep(&a, |p| structure_loss(p, &b, 0.3, false).unwrap()) <= 1e-4);
    assert!(fd_sweep(&a, |p| structure_loss(p, &b, 0.3, true).unwrap()) <= 1e-4);
    assert_eq!(structure_loss(&a, &Image::filled(8, 8, 3, 0.0), 0.3, false).unwrap_err().code(), "invalid-argument");
}

#[test]
fn alpha_loss_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random_image(&mut rng, 16, 16, 1);
    let b = random_image(&mut rng, 16, 16, 1);
    let cfg = LossConfig::default();
    assert_eq!(cfg.lambda_alpha, 0.5);
    assert_eq!(weighted_mse(&a, &a, 0.5).unwrap().value, 0.0);
    let ones = Image::filled(16, 16, 1, 1.0);
    let zeros = Image::filled(16, 16, 1, 0.0);
    assert_eq!(weighted_mse(&ones, &zeros, cfg.lambda_alpha).unwrap().value, cfg.lambda_alpha);
    let mut naive = 0.0;
    for i in 0..a.len() {
        naive += (a.data[i] - b.data[i]).powi(2);
    }
    assert!((weighted_mse(&a, &b, 0.5).unwrap().value - 0.5 * naive / a.len() as f64).abs() <= 1e-12);
    assert!(fd_sweep(&a, |p| weighted_mse(p, &b, 0.5).unwrap()) <= 1e-4);
}

#[test]
fn invisible_scale_examples() {
    let scales = vec![[0.2; 3], [0.5, 0.1, 0.3], [0.7; 3]];
    let (v, g) = invisible_scale_reg(&scales, &[false; 3], Reduction::Mean).unwrap();
    assert_eq!(v, 0.0);
    assert!(g.iter().flatten().all(|x| *x == 0.0));
    let (v, g) = invisible_scale_reg(&scales, &[true, false, false], Reduction::Mean).unwrap();
    assert!((v - 0.2).abs() < 1e-15);
    assert!(g[0].iter().all(|x| (*x - 1.0 / 3.0).abs() < 1e-15));
    assert!(g[1..].iter().flatten().all(|x| *x == 0.0));
}

#[test]
fn scale_threshold_examples() {
    let xi = LossConfig::default().xi;
    assert_eq!(xi, 0.15);
    let low = vec![[0.1; 3], [0.05, 0.15, 0.12]];
    let (v, g) = scale_threshold_reg(&low, &[false; 2], xi, Reduction::Mean).unwrap();
    assert_eq!(v, 0.15);
    assert!(g.iter().flatten().all(|x| *x == 0.0));
    let one_high = vec![[0.3, 0.1, 0.1], [0.1; 3]];
    let (v, g) = scale_threshold_reg(&one_high, &[false; 2], xi, Reduction::Mean).unwrap();
    assert!((v - (0.3 + 5.0 * 0.15) / 6.0).abs() < 1e-15);
    assert!((g[0][0] - 1.0 / 6.0).abs() < 1e-15);
    assert_eq!(g.iter().flatten().filter(|x| **x != 0.0).count(), 1);
    let (v, g) = scale_threshold_reg(&[[0.9; 3]], &[true], xi, Reduction::Mean).unwrap();
    assert_eq!(v, 0.15);
    assert_eq!(g[0], [0.0; 3]);
}

#[test]
fn regularizer_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for reduction in [Reduction::Mean, Reduction::Norm] {
        let scales: Vec<[f64; 3]> = (0..8).map(|_| std::array::from_fn(|_| rng.random_range(0.01..0.5))).collect();
        let mask: Vec<bool> = (0..8).map(|i| i % 3 == 0).collect();
        let mask_ref = mask.as_slice();
        type Reg<'a> = dyn Fn(&[[f64; 3]]) -> (f64, Vec<[f64; 3]>) + 'a;
        let regs: [Box<Reg<'_>>; 2] = [
            Box::new(move |s| invisible_scale_reg(s, mask_ref, reduction).unwrap()),
            Box::new(move |s| scale_threshold_reg(s, mask_ref, 0.15, reduction).unwrap()),
        ];
        for f in &regs {
            let (_, g) = f(&scales);
            for i in 0..8 {
                for a in 0..3 {
                    let mut p = scales.clone();
                    p[i][a] += FD_STEP;
                    let mut m = scales.clone();
                    m[i][a] -= FD_STEP;
                    let fd = (f(&p).0 - f(&m).0) / (2.0 * FD_STEP);
                    assert!(relative_error(g[i][a], fd) <= 1e-4);
                }
            }
        }
    }
}

#[test]
fn total_weights_and_report_invariant() {
    let cfg = LossConfig::default();
    assert_eq!(
        (cfg.lambda_ssim, cfg.lambda_alpha, cfg.lambda_st, cfg.lambda_invis, cfg.lambda_scale),
        (0.4, 0.5, 0.3, 0.3, 0.15)
    );
    assert_eq!(cfg.total(0.0, 0.0, 0.0, 0.0, 0.0), 0.0);
    assert!((cfg.total(1.0, 0.0, 0.0, 1.0, 0.0) - 1.3).abs() < 1e-15);

    let (a, b) = pair(7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let aa = random_image(&mut rng, 16, 16, 1);
    let ab = random_image(&mut rng, 16, 16, 1);
    let scales = vec![[0.3, 0.1, 0.2], [0.4; 3]];
    let (r, g) = total_loss(&cfg, &a, &b, &aa, &ab, &scales, &[false, true]).unwrap();
    let sum = r.color + r.alpha + r.st + 0.3 * r.invis + 0.15 * r.scale;
    assert!((r.total - sum).abs() <= 1e-9);
    assert!([r.color, r.alpha, r.st, r.invis, r.scale].iter().all(|v| *v >= 0.0));
    assert_eq!(g.color.len(), a.len());
    assert_eq!(g.alpha.len(), aa.len());

    // Full-objective gradient with respect to the color image.
    let f = |p: &Image| {
        let (r, g) = total_loss(&cfg, p, &b, &aa, &ab, &scales, &[false, true]).unwrap();
        Graded {
            value: r.total,
            grad: g.color,
        }
    };
    assert!(fd_sweep(&a, f) <= 1e-4);
}

#[test]
fn mismatched_shapes_are_rejected() {
    let (a, _) = pair(8);
    let other = Image::filled(16, 16, 1, 0.0);
    assert!(l1_loss(&a, &other).is_err());
    assert!(weighted_mse(&a, &other, 0.5).is_err());
    assert!(invisible_scale_reg(&[[0.1; 3]], &[], Reduction::Mean).is_err());
}
