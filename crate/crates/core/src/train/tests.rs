use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::deform::DeformerConfig;
use crate::pixels::Image;
use crate::synth::{desk_camera, make_proxy_sequence, make_teacher_dataset};
use crate::verify::oracles::scalar_adam;

fn tiny_dataset() -> Dataset {
    let proxy = make_proxy_sequence(3, 8, 12).unwrap();
    make_teacher_dataset(&proxy, &desk_camera(16), 5).unwrap().0
}

fn tiny_config(iterations: u64) -> TrainConfig {
    TrainConfig {
        iterations,
        densify_period: 20,
        densify_until: iterations.min(40),
        opacity_reset_period: 30,
        max_gaussians: Some(160),
        sh_degree: 1,
        deformer: DeformerConfig {
            hidden_layers: 2,
            hidden_width: 16,
            frequencies: 4,
        },
        ..TrainConfig::default()
    }
}

#[test]
fn adam_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grads: Vec<f64> = (0..100).map(|_| rng.random_range(-2.0..2.0)).collect();
    let expected = scalar_adam(0.7, &grads, 1e-2, BETA1, BETA2, EPSILON);
    let mut group = AdamGroup::new(1, 1);
    let mut p = [0.7];
    for (g, want) in grads.iter().zip(&expected) {
        group.update(&mut p, &[*g], 1e-2).unwrap();
        assert!((p[0] - want).abs() <= 1e-12, "{} vs {want}", p[0]);
    }
}

#[test]
fn adam_first_step_and_fixed_point() {
    let mut group = AdamGroup::new(2, 2);
    let mut p = [1.0, -2.0, 0.5, 3.0];
    group.update(&mut p, &[0.3, -4.0, 0.0, 1e-3], 0.01).unwrap();
    assert!((p[0] - 0.99).abs() < 1e-9);
    assert!((p[1] + 1.99).abs() < 1e-9);
    assert_eq!(p[2], 0.5);
    assert!((p[3] - 2.99).abs() < 1e-7);

    let mut still = AdamGroup::new(1, 3);
    let mut q = [0.1, 0.2, 0.3];
    for _ in 0..50 {
        still.update(&mut q, &[0.0; 3], 0.1).unwrap();
    }
    assert_eq!(q, [0.1, 0.2, 0.3]);
    assert_eq!(still.update(&mut q, &[0.0; 2], 0.1).unwrap_err().code(), "invalid-state");
}

#[test]
fn adam_remap_zeroes_newborns() {
    let mut group = AdamGroup::new(3, 2);
    let mut p = [0.0; 6];
    group.update(&mut p, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 0.1).unwrap();
    let before = group.clone();
    group.remap(&[Some(2), Some(0), None]);
    assert_eq!(group.rows(), 3);
    assert_eq!(&group.m[0..2], &before.m[4..6]);
    assert_eq!(&group.v[2..4], &before.v[0..2]);
    assert_eq!(&group.m[4..6], &[0.0, 0.0]);
    assert_eq!(group.step, before.step);
}

#[test]
fn config_defaults_and_validation() {
    let cfg = TrainConfig::default();
    assert_eq!((cfg.iterations, cfg.opacity_reset_period, cfg.densify_period, cfg.densify_until), (120_000, 3000, 400, 60_000));
    assert_eq!(cfg.lr.network, 1e-4);
    assert_eq!((cfg.lr.position, cfg.lr.sh, cfg.lr.opacity, cfg.lr.scale, cfg.lr.rotation), (1.6e-4, 2.5e-3, 5e-2, 5e-3, 1e-3));
    assert!((cfg.lr.position_at(120_000, 120_000) - 1.6e-6).abs() < 1e-18);
    assert!((cfg.lr.position_at(60_000, 120_000) - 1.6e-5).abs() < 1e-17);
    let desk = TrainConfig::desk();
    assert_eq!((desk.iterations, desk.densify_period, desk.densify_until, desk.opacity_reset_period), (3000, 100, 1500, 500));
    desk.validate().unwrap();

    let bad = [
        TrainConfig { densify_until: 130_000, ..TrainConfig::default() },
        TrainConfig { densify_period: 0, ..TrainConfig::default() },
        TrainConfig { lr: LearningRates { sh: 0.0, ..LearningRates::default() }, ..TrainConfig::default() },
    ];
    for cfg in bad {
        assert_eq!(cfg.validate().unwrap_err().code(), "invalid-argument");
    }
    let text = desk.to_toml().unwrap();
    assert_eq!(TrainConfig::from_toml(&text).unwrap(), desk);
}

#[test]
fn schedule_arithmetic() {
    let cfg = TrainConfig {
        iterations: 2000,
        densify_period: 400,
        densify_until: 1200,
        opacity_reset_period: 500,
        ..TrainConfig::default()
    };
    let densify: Vec<u64> = (0..=2000).filter(|t| cfg.densify_due(*t)).collect();
    let resets: Vec<u64> = (0..=2000).filter(|t| cfg.reset_due(*t)).collect();
    assert_eq!(densify, [400, 800, 1200]);
    assert_eq!(resets, [500, 1000, 1500, 2000]);
    let capped = TrainConfig {
        opacity_reset_until: Some(1000),
        ..cfg
    };
    assert_eq!((0..=2000).filter(|t| capped.reset_due(*t)).collect::<Vec<_>>(), [500, 1000]);
}

#[test]
fn zero_iterations_leave_the_initialization() {
    let data = tiny_dataset();
    let fresh = TrainState::new(tiny_config(0), &data).unwrap();
    let (trained, log) = train(tiny_config(0), &data).unwrap();
    assert!(log.rows.is_empty());
    assert_eq!(trained, fresh);
    assert_eq!(fresh.model.cloud.len(), 4 * data.sequence.topology.face_count());
}

#[test]
fn training_is_deterministic_and_audited() {
    let data = tiny_dataset();
    let (a, log_a) = train(tiny_config(60), &data).unwrap();
    let (b, log_b) = train(tiny_config(60), &data).unwrap();
    assert_eq!(a, b);
    assert_eq!(log_a, log_b);
    a.audit().unwrap();
    assert_eq!(log_a.densify_iterations(), [20, 40]);
    assert_eq!(log_a.reset_iterations(), [30, 60]);
    assert!(log_a.rows.iter().all(|r| r.loss.is_finite()));
    let other = train(TrainConfig { seed: 1, ..tiny_config(60) }, &data).unwrap().0;
    assert_ne!(a.model, other.model);
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let data = tiny_dataset();
    let (full, _) = train(tiny_config(50), &data).unwrap();
    let mut half = TrainState::new(tiny_config(50), &data).unwrap();
    half.run_until(&data, 25, |_| {}).unwrap();
    assert_eq!(half.iteration, 25);
    half.run(&data, |_| {}).unwrap();
    assert_eq!(half, full);
}

#[test]
fn densify_keeps_optimizer_rows_in_step() {
    let data = tiny_dataset();
    let mut state = TrainState::new(tiny_config(40), &data).unwrap();
    let mut counts = Vec::new();
    state
        .run(&data, |row| {
            if !row.events.is_empty() {
                counts.push(row.count);
            }
        })
        .unwrap();
    state.audit().unwrap();
    assert_eq!(state.optimizer.rows(), [state.model.cloud.len(); 6]);
    assert!(counts.iter().any(|c| *c != 4 * data.sequence.topology.face_count()));
}

#[test]
fn ablation_components_shape_the_model() {
    let data = tiny_dataset();
    let cfg = TrainConfig {
        components: Components {
            binding: false,
            deformer: false,
        },
        ..tiny_config(10)
    };
    let (state, _) = train(cfg, &data).unwrap();
    assert!(state.model.cloud.free);
    assert!(state.model.deformer.is_none());
    assert!(state.optimizer.network.is_none());
}

#[test]
fn psnr_examples() {
    let a = Image::filled(16, 16, 3, 0.5);
    let b = Image::filled(16, 16, 3, 0.6);
    assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
    assert!(psnr(&a, &Image::filled(8, 8, 3, 0.5)).is_err());
}

#[test]
fn self_evaluation_is_perfect() {
    let data = tiny_dataset();
    let state = TrainState::new(tiny_config(0), &data).unwrap();
    let mut own = data.clone();
    for i in 0..own.len() {
        let posed = PosedFaces::new(&own.sequence.topology, &own.sequence.frames[i]).unwrap();
        own.images[i] = state.model.forward(posed, &own.conditions[i], &own.camera).unwrap().image();
    }
    let ev = evaluate(&state.model, &own, &[0, 3, 7]).unwrap();
    assert_eq!(ev.mean_psnr, PSNR_CAP);
    assert!((ev.mean_ssim - 1.0).abs() < 1e-12);
    assert_eq!(evaluate(&state.model, &own, &[8]).unwrap_err().code(), "invalid-argument");
}

#[test]
fn full_objective_gradient_matches_finite_differences() {
    let data = tiny_dataset();
    let cfg = tiny_config(0);
    let mut state = TrainState::new(cfg.clone(), &data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    // Move off the symmetric initialization so every path carries gradient.
    let model = &mut state.model;
    for v in model.cloud.attrs.means.as_flattened_mut() {
        *v = rng.random_range(-0.3..0.3);
    }
    for v in model.cloud.attrs.sh.as_flattened_mut() {
        *v = rng.random_range(-0.5..0.5);
    }
    for v in &mut model.cloud.n_raw {
        *v = rng.random_range(-1.0..1.0);
    }
    for v in model.cloud.attrs.opacity_logits.iter_mut() {
        *v = rng.random_range(-1.0..2.0);
    }
    let net = model.deformer.as_mut().unwrap();
    for v in net.mlp.params_mut() {
        *v = rng.random_range(-0.05..0.05);
    }
    let frame = 2;
    let posed = || PosedFaces::new(&data.sequence.topology, &data.sequence.frames[frame]).unwrap();
    let loss_of = |m: &Model| {
        let fwd = m.forward(posed(), &data.conditions[frame], &data.camera).unwrap();
        let (r, _) = m.loss_and_gradients(&fwd, &data.images[frame], &data.alphas[frame], &cfg.loss).unwrap();
        (r.total, crate::verify::fd::render_signature(&fwd.output))
    };
    let base = state.model.clone();
    let fwd = base.forward(posed(), &data.conditions[frame], &data.camera).unwrap();
    let (_, grads) = base.loss_and_gradients(&fwd, &data.images[frame], &data.alphas[frame], &cfg.loss).unwrap();
    let (_, sig) = loss_of(&base);
    let h = crate::verify::fd::FD_STEP;
    let mut checked = 0;
    let mut check = |analytic: f64, set: &dyn Fn(&mut Model, f64)| {
        let mut p = base.clone();
        set(&mut p, h);
        let mut m = base.clone();
        set(&mut m, -h);
        let (lp, sp) = loss_of(&p);
        let (lm, sm) = loss_of(&m);
        if sp != sig || sm != sig {
            return;
        }
        let fd = (lp - lm) / (2.0 * h);
        let rel = crate::verify::fd::relative_error(analytic, fd);
        assert!(rel <= 1e-3, "analytic {analytic} vs fd {fd}");
        checked += 1;
    };
    for i in (0..base.cloud.len()).step_by(7) {
        for a in 0..3 {
            check(grads.attrs.means[i][a], &|m, d| m.cloud.attrs.means[i][a] += d);
            check(grads.attrs.log_scales[i][a], &|m, d| m.cloud.attrs.log_scales[i][a] += d);
        }
        check(grads.attrs.opacity_logits[i], &|m, d| m.cloud.attrs.opacity_logits[i] += d);
        check(grads.attrs.rotations[i][1], &|m, d| m.cloud.attrs.rotations[i][1] += d);
        check(grads.n_raw[i], &|m, d| m.cloud.n_raw[i] += d);
    }
    let gnet = grads.network.as_ref().unwrap();
    let gvals: Vec<f64> = gnet.params().copied().collect();
    for k in (0..gvals.len()).step_by(37) {
        check(gvals[k], &|m, d| *m.deformer.as_mut().unwrap().mlp.params_mut().nth(k).unwrap() += d);
    }
    assert!(checked > 50, "only {checked} coordinates checked");
}
