use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::math::sh::SH_C0;
use crate::math::{eigenvalues_2x2, inverse_sigmoid};
use crate::verify::fd::check_render_gradients;
use crate::verify::naive::naive_composite;
use crate::verify::scenes::{micro_camera, random_cloud};

/// Screen splat with an isotropic footprint of `sigma` px.
fn screen_splat(x: f64, y: f64, sigma: f64, depth: f64, color: [f64; 3], opacity: f64) -> ProjectedSplat {
    let v = sigma * sigma;
    ProjectedSplat {
        mean: [x, y],
        cov: [v, 0.0, v],
        conic: [1.0 / v, 0.0, 1.0 / v],
        depth,
        radius: (3.0 * sigma).ceil() as u32,
        color,
        opacity,
    }
}

fn gray_dc(value: f64) -> [f64; 3] {
    let c = (value - 0.5) / SH_C0;
    [c, c, c]
}

#[test]
fn single_splat_at_pixel_center() {
    let cam = micro_camera(16);
    let s = screen_splat(5.5, 7.5, 2.0, 1.0, [0.2, 0.4, 0.8], 0.7);
    let out = rasterize_forward(&[s], &cam, &RasterConfig::default());
    let p = 7 * 16 + 5;
    for ch in 0..3 {
        assert!((out.color[3 * p + ch] - s.color[ch] * 0.7).abs() < 1e-15);
    }
    assert!((out.alpha[p] - 0.7).abs() < 1e-15);
}

#[test]
fn two_splats_composite_front_to_back() {
    let cam = micro_camera(16);
    let front = screen_splat(8.5, 8.5, 2.0, 1.0, [1.0, 0.0, 0.0], 0.6);
    let back = screen_splat(8.5, 8.5, 2.0, 2.0, [0.0, 1.0, 0.0], 0.5);
    // Storage order must not matter.
    for splats in [[front, back], [back, front]] {
        let out = rasterize_forward(&splats, &cam, &RasterConfig::default());
        let p = 8 * 16 + 8;
        assert!((out.color[3 * p] - 0.6).abs() < 1e-15);
        assert!((out.color[3 * p + 1] - 0.5 * 0.4).abs() < 1e-15);
        assert!((out.alpha[p] - (1.0 - 0.4 * 0.5)).abs() < 1e-15);
    }
}

#[test]
fn empty_cloud_renders_black() {
    let cam = micro_camera(32);
    let out = render(&GaussianCloud::new(0), &cam, &RasterConfig::default());
    assert!(out.color.iter().all(|v| *v == 0.0));
    assert!(out.alpha.iter().all(|v| *v == 0.0));
}

#[test]
fn gaussian_behind_camera_is_culled() {
    let cam = micro_camera(16);
    let mut cloud = GaussianCloud::new(0);
    cloud.push([0.0, 0.0, -6.0], [1.0, 0.0, 0.0, 0.0], [0.0; 3], 2.0, &[[0.0; 3]]);
    cloud.push([0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [-2.0; 3], 2.0, &[[0.0; 3]]);
    let splats = project_all(&cloud, &cam);
    assert_eq!(splats[0].radius, 0);
    assert!(splats[1].radius > 0);
}

#[test]
fn off_screen_gaussian_is_culled() {
    let cam = micro_camera(16);
    let mut cloud = GaussianCloud::new(0);
    cloud.push([30.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [-3.0; 3], 2.0, &[[0.0; 3]]);
    assert_eq!(project_all(&cloud, &cam)[0].radius, 0);
}

#[test]
fn isotropic_on_axis_footprint_is_circular() {
    let cam = micro_camera(32);
    let mut cloud = GaussianCloud::new(0);
    cloud.push([0.0, 0.0, 0.0], [0.3, 0.1, -0.5, 0.2], [0.2f64.ln(); 3], 0.0, &[[0.0; 3]]);
    let s = project_all(&cloud, &cam)[0];
    let (hi, lo) = eigenvalues_2x2(&Matrix2::new(s.cov[0], s.cov[1], s.cov[1], s.cov[2]));
    assert!((hi - lo).abs() < 1e-6);
}

#[test]
fn radii_match_independent_eigen_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cam = micro_camera(32);
    for _ in 0..20 {
        let cloud = random_cloud(&mut rng, 32, 1, 1.5);
        for s in project_all(&cloud, &cam) {
            if s.radius == 0 {
                continue;
            }
            let m = Matrix2::new(s.cov[0], s.cov[1], s.cov[1], s.cov[2]);
            let eig = m.symmetric_eigen();
            let lmax = eig.eigenvalues.max();
            assert_eq!(s.radius, (3.0 * lmax.sqrt()).ceil() as u32);
            let inv = m.try_inverse().unwrap();
            assert!((inv * m - Matrix2::identity()).abs().max() < 1e-6);
            assert!((inv[(0, 0)] - s.conic[0]).abs() < 1e-9 * inv[(0, 0)].abs().max(1.0));
        }
    }
}

#[test]
fn doubling_resolution_scales_radii_with_focal_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cam = micro_camera(32);
    let cam2 = cam.with_resolution(64, 64);
    let cloud = random_cloud(&mut rng, 16, 0, 0.5);
    let a = project_all(&cloud, &cam);
    let b = project_all(&cloud, &cam2);
    for (s1, s2) in a.iter().zip(&b) {
        if s1.radius == 0 {
            continue;
        }
        // Σ' = J Σ Jᵀ + floor, J ∝ focal: the unfloored part scales by 4.
        let raw = Matrix2::new(s1.cov[0], s1.cov[1], s1.cov[1], s1.cov[2]) - Matrix2::identity() * LOW_PASS_FLOOR;
        let expected_cov = raw * 4.0 + Matrix2::identity() * LOW_PASS_FLOOR;
        let (lmax, _) = eigenvalues_2x2(&expected_cov);
        let expected = (3.0 * lmax.sqrt()).ceil() as i64;
        assert!((s2.radius as i64 - expected).abs() <= 1, "{} vs {expected}", s2.radius);
        assert!((s2.mean[0] - 2.0 * s1.mean[0]).abs() < 1e-9);
    }
}

use crate::math::LOW_PASS_FLOOR;

#[test]
fn tiled_forward_matches_naive_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cam = micro_camera(32);
    let cfg = RasterConfig::default();
    for _ in 0..20 {
        let n = rng.random_range(1..=64);
        let cloud = random_cloud(&mut rng, n, 2, 1.2);
        let splats = project_all(&cloud, &cam);
        let tiled = rasterize_forward(&splats, &cam, &cfg);
        let naive = naive_composite(&splats, &cam, &cfg);
        for (a, b) in tiled.color.iter().zip(&naive.color) {
            assert!((a - b).abs() <= 1e-6);
        }
        for (a, b) in tiled.alpha.iter().zip(&naive.alpha) {
            assert!((a - b).abs() <= 1e-6);
        }
    }
}

#[test]
fn storage_permutation_leaves_image_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cam = micro_camera(32);
    let cloud = random_cloud(&mut rng, 24, 1, 1.0);
    let mut perm: Vec<usize> = (0..cloud.len()).collect();
    perm.reverse();
    perm.swap(3, 11);
    let mut shuffled = GaussianCloud::new(cloud.sh_degree);
    for &i in &perm {
        shuffled.push(
            cloud.means[i],
            cloud.rotations[i],
            cloud.log_scales[i],
            cloud.opacity_logits[i],
            cloud.sh_of(i),
        );
    }
    let a = render(&cloud, &cam, &RasterConfig::default());
    let b = render(&shuffled, &cam, &RasterConfig::default());
    assert_eq!(a.color, b.color);
    assert_eq!(a.alpha, b.alpha);
}

#[test]
fn alpha_equals_one_minus_transmittance_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cam = micro_camera(16);
    let cloud = random_cloud(&mut rng, 8, 0, 0.8);
    let out = render(&cloud, &cam, &RasterConfig::default());
    for y in 0..16 {
        for x in 0..16 {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut t = 1.0;
            for id in out.pixel_contributors(x, y) {
                t *= 1.0 - splat_alpha(&out.splats[id as usize], px, py, &out.config).unwrap();
            }
            let a = out.alpha[(y * 16 + x) as usize];
            assert_eq!(a, 1.0 - t);
            assert!((0.0..=1.0).contains(&a));
        }
    }
    let white = out.composite_over([1.0; 3]);
    for p in 0..256 {
        assert!((white[3 * p] - (out.color[3 * p] + 1.0 - out.alpha[p])).abs() < 1e-15);
    }
}

#[test]
fn huge_opaque_splat_covers_frame() {
    let cam = micro_camera(32);
    let mut cloud = GaussianCloud::new(0);
    // σ ≈ 20 world units at depth 4: the whole frame sits well inside 0.1σ.
    cloud.push([0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [20.0f64.ln(); 3], inverse_sigmoid(0.999), &[gray_dc(0.5)]);
    let out = render(&cloud, &cam, &RasterConfig::default());
    let s = out.splats[0];
    for y in 0..32u32 {
        for x in 0..32u32 {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let maha = s.mahalanobis_sq(px, py);
            assert!(maha <= 1.0);
            let expected = (0.999 * (-0.5 * maha).exp()).min(0.99);
            let a = out.alpha[(y * 32 + x) as usize];
            assert!((a - expected).abs() < 1e-12);
            assert!(a >= 0.98);
        }
    }
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cam = micro_camera(16);
    let cloud = random_cloud(&mut rng, 6, 2, 0.6);
    let out = render(&cloud, &cam, &RasterConfig::default());
    let g = rasterize_backward(&out, &vec![0.0; 16 * 16 * 3], &vec![0.0; 16 * 16]).unwrap();
    assert_eq!(g, {
        let mut z = GradientBuffer::zeros(cloud.len(), cloud.coeffs_per_gaussian());
        z.visible = g.visible.clone();
        z
    });
}

#[test]
fn backward_rejects_mismatched_state() {
    let cam = micro_camera(16);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cloud = random_cloud(&mut rng, 3, 0, 0.5);
    let out = render(&cloud, &cam, &RasterConfig::default());
    let err = rasterize_backward(&out, &[0.0; 3], &[0.0; 1]).unwrap_err();
    assert_eq!(err.code(), "invalid-state");
    let splats = project_all(&cloud, &cam);
    let bare = rasterize_forward(&splats, &cam, &RasterConfig::default());
    let err = rasterize_backward(&bare, &vec![0.0; 768], &vec![0.0; 256]).unwrap_err();
    assert_eq!(err.code(), "invalid-state");
}

#[test]
fn single_splat_opacity_gradient_matches_finite_difference() {
    let cam = micro_camera(16);
    let mut cloud = GaussianCloud::new(0);
    cloud.push([0.05, -0.1, 0.0], [1.0, 0.0, 0.0, 0.0], [0.3f64.ln(); 3], 0.4, &[gray_dc(0.7)]);
    let p = (8 * 16 + 8) as usize;
    let mut gc = vec![0.0; 16 * 16 * 3];
    gc[3 * p] = 1.0;
    let ga = vec![0.0; 256];
    let out = render(&cloud, &cam, &RasterConfig::default());
    let g = rasterize_backward(&out, &gc, &ga).unwrap();
    let h = 1e-5;
    let pixel = |logit: f64| {
        let mut c = cloud.clone();
        c.opacity_logits[0] = logit;
        render(&c, &cam, &RasterConfig::default()).color[3 * p]
    };
    let fd = (pixel(0.4 + h) - pixel(0.4 - h)) / (2.0 * h);
    assert!((fd - g.opacity_logits[0]).abs() / fd.abs() < 1e-4);
}

#[test]
fn random_scene_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let cam = micro_camera(16);
    let cfg = RasterConfig::default();
    for _ in 0..4 {
        let n = rng.random_range(1..=8);
        let degree = rng.random_range(0..=3);
        let cloud = random_cloud(&mut rng, n, degree, 0.7);
        let report = check_render_gradients(&cloud, &cam, &cfg, &mut rng);
        assert!(report.max_rel <= 1e-3, "{report}");
        assert!(report.skipped * 10 <= report.checked + report.skipped, "{report}");
    }
}

#[test]
fn deterministic_across_thread_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let cam = micro_camera(48);
    let cloud = random_cloud(&mut rng, 40, 1, 1.5);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let out = render(&cloud, &cam, &RasterConfig::default());
            let gc: Vec<f64> = (0..out.color.len()).map(|i| ((i * 37 % 17) as f64 - 8.0) / 8.0).collect();
            let ga: Vec<f64> = (0..out.alpha.len()).map(|i| ((i * 13 % 7) as f64 - 3.0) / 3.0).collect();
            let g = rasterize_backward(&out, &gc, &ga).unwrap();
            (out.color, g)
        })
    };
    let (c1, g1) = run(1);
    let (c4, g4) = run(4);
    assert_eq!(c1, c4);
    assert_eq!(g1, g4);
}
