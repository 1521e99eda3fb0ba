use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::math::{inverse_sigmoid, sigmoid};
use crate::raster::{GradientBuffer, RasterConfig};
use crate::verify::fd::check_bound_gradients;
use crate::verify::scenes::{micro_camera, random_bound_scene};

fn two_faces() -> TriangleMesh {
    TriangleMesh::new(
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .unwrap()
}

fn init(mesh: &TriangleMesh) -> BoundCloud {
    init_plrf(mesh, &PlrfInit::default()).unwrap()
}

fn posed(mesh: &TriangleMesh) -> PosedFaces {
    PosedFaces::new(mesh, &mesh.vertices).unwrap()
}

#[test]
fn init_places_four_gaussians_per_face() {
    let mesh = two_faces();
    let cloud = init(&mesh);
    assert_eq!(cloud.len(), 8);
    assert_eq!(cloud.slots.iter().filter(|s| **s == Slot::Centroid).count(), 2);
    assert!((0..8).all(|i| cloud.n(i) == 0.5));
    assert!(cloud.attrs.means.iter().all(|m| *m == [0.0; 3]));
    assert!(cloud.attrs.opacity_logits.iter().all(|o| (sigmoid(*o) - 0.1).abs() < 1e-12));
    assert!(cloud.attrs.sh.iter().all(|c| *c == [0.0; 3]));
    assert!(cloud.densified.iter().all(|d| !d));
}

#[test]
fn zero_local_offsets_land_on_anchors_exactly() {
    let mesh = two_faces();
    let cloud = init(&mesh);
    let global = local_to_global(&cloud, &posed(&mesh)).unwrap();
    for f in 0..2 {
        let [a, b, c] = mesh.corners(f);
        let anchors = sample_anchor(&a, &b, &c, 0.5);
        for s in 0..4 {
            let m = global.means[4 * f + s];
            assert_eq!(Vector3::from(m), anchors[s]);
            assert_eq!(cloud.canonical[4 * f + s], m);
        }
    }
}

#[test]
fn initial_scale_is_isotropic_fraction_of_mean_edge() {
    let mesh = two_faces();
    let cloud = init(&mesh);
    let global = local_to_global(&cloud, &posed(&mesh)).unwrap();
    let target = 0.25 * mesh.mean_edge_length();
    for s in &global.log_scales {
        for v in s {
            assert!((v.exp() - target).abs() < 1e-12);
        }
    }
}

#[test]
fn rigid_motion_carries_gaussians_along() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mesh, cloud) = random_bound_scene(&mut rng, 2, 0);
    let before = local_to_global(&cloud, &posed(&mesh)).unwrap();
    for _ in 0..50 {
        let q = Rotation3::new(Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0))).into_inner();
        let t = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let moved: Vec<[f64; 3]> = mesh.vertices.iter().map(|v| (q * Vector3::from(*v) + t).into()).collect();
        let after = local_to_global(&cloud, &PosedFaces::new(&mesh, &moved).unwrap()).unwrap();
        for i in 0..cloud.len() {
            let expected = q * Vector3::from(before.means[i]) + t;
            assert!((Vector3::from(after.means[i]) - expected).norm() < 1e-9);
            for a in 0..3 {
                assert!((after.log_scales[i][a] - before.log_scales[i][a]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn scaling_the_mesh_scales_offsets_and_sizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mesh, cloud) = random_bound_scene(&mut rng, 2, 0);
    let p1 = posed(&mesh);
    let doubled: Vec<[f64; 3]> = mesh.vertices.iter().map(|v| v.map(|c| 2.0 * c)).collect();
    let p2 = PosedFaces::new(&mesh, &doubled).unwrap();
    let (g1, g2) = (local_to_global(&cloud, &p1).unwrap(), local_to_global(&cloud, &p2).unwrap());
    for f in 0..2 {
        assert!((p2.frames[f].scale - 2.0 * p1.frames[f].scale).abs() < 1e-12);
    }
    for i in 0..cloud.len() {
        for a in 0..3 {
            assert!((g2.log_scales[i][a] - g1.log_scales[i][a] - 2f64.ln()).abs() < 1e-12);
            assert!((g2.means[i][a] - 2.0 * g1.means[i][a]).abs() < 1e-12);
        }
    }
}

#[test]
fn anchors_stay_in_face_plane_under_deformation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let (mesh, mut cloud) = random_bound_scene(&mut rng, 2, 0);
        cloud.attrs.means.iter_mut().for_each(|m| *m = [0.0; 3]);
        let bent: Vec<[f64; 3]> = mesh
            .vertices
            .iter()
            .map(|v| v.map(|c| c + rng.random_range(-0.2..0.2)))
            .collect();
        let Ok(p) = PosedFaces::new(&mesh, &bent) else { continue };
        let global = local_to_global(&cloud, &p).unwrap();
        for i in 0..cloud.len() {
            let f = cloud.faces[i] as usize;
            let normal = p.frames[f].rotation.column(2).into_owned();
            let d = (Vector3::from(global.means[i]) - p.centroids[f]).dot(&normal);
            assert!(d.abs() < 1e-9 * p.frames[f].scale);
        }
    }
}

#[test]
fn topology_mismatch_is_rejected() {
    let mesh = two_faces();
    let err = PosedFaces::new(&mesh, &mesh.vertices[..3]).unwrap_err();
    assert_eq!(err.code(), "invalid-argument");
    let mut cloud = init(&mesh);
    cloud.faces[0] = 7;
    assert!(local_to_global(&cloud, &posed(&mesh)).is_err());
}

#[test]
fn degenerate_mesh_is_rejected() {
    let err = TriangleMesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], vec![[0, 1, 2]]).unwrap_err();
    assert_eq!(err.code(), "degenerate-face");
    let err = TriangleMesh::new(vec![[0.0; 3]], vec![[0, 0, 4]]).unwrap_err();
    assert_eq!(err.code(), "invalid-argument");
}

#[test]
fn bound_chain_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cam = micro_camera(16);
    for _ in 0..4 {
        let faces = rng.random_range(1..=2);
        let (mesh, cloud) = random_bound_scene(&mut rng, faces, 1);
        let report = check_bound_gradients(&cloud, &posed(&mesh), &cam, &RasterConfig::default(), &mut rng);
        assert!(report.max_rel <= 1e-3, "{report}");
        assert!(report.checked > report.skipped, "{report}");
    }
}

#[test]
fn densified_gaussians_do_not_train_n() {
    let mesh = two_faces();
    let mut cloud = init(&mesh);
    cloud.densified[0] = true;
    let mut g = GradientBuffer::zeros(8, 16);
    g.means.iter_mut().for_each(|m| *m = [1.0, 2.0, 3.0]);
    g.log_scales.iter_mut().for_each(|s| *s = [1.0; 3]);
    let out = local_to_global_backward(&cloud, &posed(&mesh), &g).unwrap();
    assert_eq!(out.n_raw[0], 0.0);
    assert_ne!(out.n_raw[1], 0.0);
    assert_eq!(out.n_raw[3], 0.0);
}

fn stats_with(n: usize, hot: &[usize]) -> DensifyStats {
    let mut s = DensifyStats::new(n);
    for &i in hot {
        s.grad_sum[i] = 1e-2;
        s.visible_count[i] = 2;
    }
    s
}

fn opaque(mesh: &TriangleMesh) -> BoundCloud {
    let mut cloud = init(mesh);
    cloud.attrs.opacity_logits.iter_mut().for_each(|o| *o = inverse_sigmoid(0.9));
    cloud
}

#[test]
fn quiet_densification_changes_nothing() {
    let mesh = two_faces();
    let cloud = opaque(&mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (next, outcome) =
        densify_and_prune(&cloud, &DensifyStats::new(8), &DensifyConfig::default(), 1.0, &posed(&mesh), &mut rng)
            .unwrap();
    assert_eq!(next, cloud);
    assert_eq!(outcome.source, (0..8).map(Some).collect::<Vec<_>>());
}

#[test]
fn large_hot_gaussian_splits_into_two_smaller() {
    let mesh = two_faces();
    let cloud = opaque(&mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // Global σ ≈ 0.28 is above 1% of an extent of 1.
    let (next, outcome) =
        densify_and_prune(&cloud, &stats_with(8, &[5]), &DensifyConfig::default(), 1.0, &posed(&mesh), &mut rng)
            .unwrap();
    assert_eq!(next.len(), 9);
    assert_eq!(outcome.split, 1);
    assert_eq!(&outcome.source[7..], &[None, None]);
    for j in 7..9 {
        assert_eq!(next.faces[j], cloud.faces[5]);
        assert_eq!(next.slots[j], cloud.slots[5]);
        assert_eq!(next.n_raw[j], cloud.n_raw[5]);
        assert!(next.densified[j]);
        for a in 0..3 {
            let ratio = (next.attrs.log_scales[j][a] - cloud.attrs.log_scales[5][a]).exp();
            assert!((ratio - 1.0 / 1.6).abs() < 1e-12);
        }
    }
    assert_ne!(next.attrs.means[7], next.attrs.means[8]);
    let p = posed(&mesh);
    let global = local_to_global(&next, &p).unwrap();
    assert_eq!(next.canonical[7], global.means[7]);
}

#[test]
fn small_hot_gaussian_is_cloned() {
    let mesh = two_faces();
    let cloud = opaque(&mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (next, outcome) =
        densify_and_prune(&cloud, &stats_with(8, &[2]), &DensifyConfig::default(), 100.0, &posed(&mesh), &mut rng)
            .unwrap();
    assert_eq!(next.len(), 9);
    assert_eq!(outcome.cloned, 1);
    assert_eq!(next.attrs.means[8], cloud.attrs.means[2]);
    assert_eq!(next.canonical[8], cloud.canonical[2]);
    assert!(next.densified[8] && !next.densified[2]);
    assert_eq!(outcome.source[8], None);
}

#[test]
fn transparent_gaussian_is_pruned() {
    let mesh = two_faces();
    let mut cloud = opaque(&mesh);
    cloud.attrs.opacity_logits[4] = inverse_sigmoid(0.001);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (next, outcome) =
        densify_and_prune(&cloud, &DensifyStats::new(8), &DensifyConfig::default(), 1.0, &posed(&mesh), &mut rng)
            .unwrap();
    assert_eq!(next.len(), 7);
    assert_eq!(outcome.pruned, 1);
    assert!(!outcome.source.contains(&Some(4)));
    assert!(next.faces.iter().all(|&f| f < 2));
}

#[test]
fn opacity_reset_caps_and_is_idempotent() {
    let mesh = two_faces();
    let mut cloud = init(&mesh);
    cloud.attrs.opacity_logits[0] = inverse_sigmoid(0.9);
    cloud.attrs.opacity_logits[1] = inverse_sigmoid(0.005);
    let changed = reset_opacity(&mut cloud);
    assert!(changed.contains(&0) && !changed.contains(&1));
    assert!((sigmoid(cloud.attrs.opacity_logits[0]) - 0.01).abs() < 1e-15);
    assert!((sigmoid(cloud.attrs.opacity_logits[1]) - 0.005).abs() < 1e-15);
    let once = cloud.clone();
    assert!(reset_opacity(&mut cloud).is_empty());
    assert_eq!(cloud, once);
}
