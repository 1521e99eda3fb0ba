use nalgebra::Vector3;

use super::*;
use crate::binding::PosedFaces;

#[test]
fn desk_proxy_has_fifty_faces() {
    let p = make_proxy_sequence(1, DESK_FRAMES, DESK_VERTICES).unwrap();
    let mesh = &p.sequence.topology;
    assert_eq!(mesh.vertices.len(), 27);
    assert_eq!(mesh.face_count(), 50);
    assert_eq!(p.sequence.len(), 60);
    assert!(p.conditions.iter().all(|c| c.len() == BLENDSHAPES + 3));
    // Closed and outward: each face normal points away from the center.
    for f in 0..mesh.face_count() {
        let [a, b, c] = mesh.corners(f);
        let n = (b - a).cross(&(c - a));
        assert!(n.dot(&((a + b + c) / 3.0)) > 0.0);
    }
}

#[test]
fn first_frame_is_the_base_mesh() {
    let p = make_proxy_sequence(2, 10, 20).unwrap();
    assert!(p.conditions[0].iter().all(|c| *c == 0.0));
    assert_eq!(p.sequence.frames[0], p.sequence.topology.vertices);
}

#[test]
fn opposite_weights_mirror_the_offsets() {
    let p = make_proxy_sequence(3, 10, DESK_VERTICES).unwrap();
    let mut c: Vec<f64> = (0..BLENDSHAPES).map(|k| 0.3 * k as f64 - 1.0).collect();
    c.extend([0.0; 3]);
    let neg: Vec<f64> = c.iter().map(|v| -v).collect();
    let plus = p.rig.pose(&c).unwrap();
    let minus = p.rig.pose(&neg).unwrap();
    for v in 0..plus.len() {
        let base = Vector3::from(p.rig.base[v]);
        let d1 = Vector3::from(plus[v]) - base;
        let d2 = Vector3::from(minus[v]) - base;
        assert!((d1 + d2).norm() < 1e-12);
    }
}

#[test]
fn every_frame_stays_valid_across_seeds() {
    for seed in 0..20 {
        // MeshSequence::new validates every frame.
        make_proxy_sequence(seed, DESK_FRAMES, DESK_VERTICES).unwrap();
    }
    assert!(make_proxy_sequence(0, 1, 27).is_err());
    assert!(make_proxy_sequence(0, 5, 11).is_err());
}

#[test]
fn teacher_dataset_is_valid_and_reproducible() {
    let p = make_proxy_sequence(4, 8, DESK_VERTICES).unwrap();
    let cam = desk_camera(DESK_RESOLUTION);
    let (d1, t1) = make_teacher_dataset(&p, &cam, 9).unwrap();
    let (d2, _) = make_teacher_dataset(&p, &cam, 9).unwrap();
    assert_eq!(d1, d2);
    assert_eq!(t1.cloud.len(), 4 * 50);
    d1.validate().unwrap();
    for (img, alpha) in d1.images.iter().zip(&d1.alphas) {
        assert!(alpha.data.iter().all(|a| (0.0..=1.0).contains(a)));
        assert!(img.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn teacher_silhouette_is_opaque_inside() {
    let p = make_proxy_sequence(5, 4, DESK_VERTICES).unwrap();
    let cam = desk_camera(DESK_RESOLUTION);
    let (d, _) = make_teacher_dataset(&p, &cam, 1).unwrap();
    let alpha = &d.alphas[0];
    // Pixels whose ray passes well inside the proxy's silhouette.
    let mut interior = 0;
    for y in 0..64 {
        for x in 0..64 {
            let (u, v) = ((x as f64 + 0.5 - 32.0) / 32.0, (y as f64 + 0.5 - 32.0) / 32.0);
            if u * u + v * v < 0.3 {
                interior += 1;
                assert!(alpha.at(x, y, 0) > 0.9, "alpha {} at ({x}, {y})", alpha.at(x, y, 0));
            }
        }
    }
    assert!(interior > 100);
}

#[test]
fn hidden_offsets_vanish_at_rest_and_move_with_condition() {
    let p = make_proxy_sequence(6, 12, DESK_VERTICES).unwrap();
    let (_, teacher) = make_teacher_dataset(&p, &desk_camera(32), 2).unwrap();
    assert!(teacher.residuals(&p.conditions[0]).iter().all(|v| *v == 0.0));
    let r = teacher.residuals(&p.conditions[5]);
    let rms = (r.iter().map(|v| v * v).sum::<f64>() / (r.nrows() * 3) as f64).sqrt();
    assert!(rms > 0.01 && rms < 0.2, "rms offset {rms}");
    let posed = PosedFaces::new(&p.sequence.topology, &p.sequence.frames[5]).unwrap();
    assert!(teacher.render_frame(&posed, &p.conditions[5], &desk_camera(32)).is_ok());
}
