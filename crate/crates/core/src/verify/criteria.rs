//! Measurement runners for the acceptance suite. Each returns raw numbers;
//! thresholds live with the callers.

use std::time::Instant;

use nalgebra::Vector3;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fd::{check_bound_gradients, check_render_gradients, FdReport, FD_STEP};
use super::naive::naive_composite;
use super::oracles::monte_carlo_screen_covariance;
use super::scenes::{micro_camera, random_bound_scene, random_cloud};
use crate::binding::{init_plrf, PlrfInit, PosedFaces, Slot};
use crate::dataset::Dataset;
use crate::deform::{apply_residuals, apply_residuals_backward, DeformerConfig, Mlp, RESIDUAL_WIDTH};
use crate::error::Result;
use crate::io::encode_checkpoint;
use crate::loss::{
    color_loss, dssim_loss, invisible_scale_reg, l1_loss, scale_threshold_reg, structure_loss, total_loss, weighted_mse,
    Graded, LossConfig, Reduction,
};
use crate::math::{build_covariance, perspective_jacobian, project_with_jacobian};
use crate::pixels::Image;
use crate::raster::{project_all, rasterize_forward, GradientBuffer, RasterConfig};
use crate::synth::{desk_camera, make_proxy_sequence, make_teacher_dataset};
use crate::train::{evaluate, render_frame, render_novel_view, TrainConfig, TrainLog, TrainState};

#[derive(Clone, Debug)]
pub struct GradientSuite {
    pub scenes: usize,
    pub report: FdReport,
    pub seconds: f64,
}

fn random_image(rng: &mut impl Rng, w: usize, h: usize, c: usize) -> Image {
    Image::from_fn(w, h, c, |_, _, _| rng.random_range(0.0..1.0))
}

/// `kink`: target of an absolute-difference term; coordinates whose ±h
/// probe straddles `pred = target` have no derivative and are skipped.
fn image_fd(report: &mut FdReport, name: &str, pred: &Image, kink: Option<&Image>, f: impl Fn(&Image) -> Graded) {
    let analytic = f(pred).grad;
    for i in 0..pred.len() {
        if kink.is_some_and(|t| (pred.data[i] - t.data[i]).abs() <= FD_STEP) {
            report.skipped += 1;
            continue;
        }
        let mut p = pred.clone();
        p.data[i] += FD_STEP;
        let mut m = pred.clone();
        m.data[i] -= FD_STEP;
        let numeric = (f(&p).value - f(&m).value) / (2.0 * FD_STEP);
        report.record(|| format!("{name}[{i}]"), analytic[i], numeric);
    }
}

fn loss_fd(rng: &mut impl Rng, size: usize) -> FdReport {
    let mut r = FdReport::default();
    let pred = random_image(rng, size, size, 3);
    let target = random_image(rng, size, size, 3);
    let pa = random_image(rng, size, size, 1);
    let ta = random_image(rng, size, size, 1);
    let cfg = LossConfig::default();
    image_fd(&mut r, "l1", &pred, Some(&target), |p| l1_loss(p, &target).expect("shape"));
    image_fd(&mut r, "dssim", &pred, None, |p| dssim_loss(p, &target).expect("shape"));
    image_fd(&mut r, "color", &pred, Some(&target), |p| color_loss(p, &target, cfg.lambda_ssim).expect("shape").0);
    image_fd(&mut r, "structure", &pred, None, |p| structure_loss(p, &target, cfg.lambda_st, true).expect("shape"));
    image_fd(&mut r, "alpha", &pa, None, |p| weighted_mse(p, &ta, cfg.lambda_alpha).expect("shape"));

    let n = 8;
    let scales: Vec<[f64; 3]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(0.01..0.5))).collect();
    let mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
    for reduction in [Reduction::Mean, Reduction::Norm] {
        let regs: [(&str, Box<dyn Fn(&[[f64; 3]]) -> (f64, Vec<[f64; 3]>)>); 2] = [
            ("invisible", Box::new(|s| invisible_scale_reg(s, &mask, reduction).expect("shape"))),
            ("scale", Box::new(|s| scale_threshold_reg(s, &mask, cfg.xi, reduction).expect("shape"))),
        ];
        for (name, f) in &regs {
            let (_, g) = f(&scales);
            for i in 0..n {
                for a in 0..3 {
                    let mut p = scales.clone();
                    p[i][a] += FD_STEP;
                    let mut m = scales.clone();
                    m[i][a] -= FD_STEP;
                    let numeric = (f(&p).0 - f(&m).0) / (2.0 * FD_STEP);
                    r.record(|| format!("{name}[{i}][{a}]"), g[i][a], numeric);
                }
            }
        }
    }

    // Whole objective with respect to the rendered image.
    let f = |p: &Image| {
        let (rep, g) = total_loss(&cfg, p, &target, &pa, &ta, &scales, &mask).expect("shape");
        Graded {
            value: rep.total,
            grad: g.color,
        }
    };
    image_fd(&mut r, "total", &pred, Some(&target), f);
    r
}

fn mlp_fd(rng: &mut impl Rng) -> FdReport {
    let mut r = FdReport::default();
    let mut mlp = Mlp::new(6, 8, 2, RESIDUAL_WIDTH, rng);
    for p in mlp.params_mut() {
        *p = rng.random_range(-0.6..0.6);
    }
    let x = Array2::from_shape_fn((3, 6), |_| rng.random_range(-1.0..1.0));
    let w = Array2::from_shape_fn((3, RESIDUAL_WIDTH), |_| rng.random_range(-1.0..1.0));
    let value = |m: &Mlp, x: Array2<f64>| (m.forward(x).expect("shape").0 * &w).sum();
    let (_, trace) = mlp.forward(x.clone()).expect("shape");
    let (grad, grad_x) = mlp.backward(&trace, &w).expect("shape");
    for (k, analytic) in grad.params().enumerate() {
        let nudge = |d: f64| {
            let mut m = mlp.clone();
            *m.params_mut().nth(k).expect("index") += d;
            value(&m, x.clone())
        };
        r.record(|| format!("mlp weight {k}"), *analytic, (nudge(FD_STEP) - nudge(-FD_STEP)) / (2.0 * FD_STEP));
    }
    for ((row, col), analytic) in grad_x.indexed_iter() {
        let nudge = |d: f64| {
            let mut xi = x.clone();
            xi[(row, col)] += d;
            value(&mlp, xi)
        };
        r.record(|| format!("mlp input ({row},{col})"), *analytic, (nudge(FD_STEP) - nudge(-FD_STEP)) / (2.0 * FD_STEP));
    }
    r
}

fn residual_fd(rng: &mut impl Rng) -> FdReport {
    let mut r = FdReport::default();
    let n = 4;
    let base = random_cloud(rng, n, 0, 1.0);
    let res = Array2::from_shape_fn((n, RESIDUAL_WIDTH), |_| rng.random_range(-0.3..0.3));
    let mut up = GradientBuffer::zeros(n, 1);
    for i in 0..n {
        up.means[i] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        up.log_scales[i] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        up.rotations[i] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    }
    let value = |b: &crate::raster::GaussianCloud, res: &Array2<f64>| {
        let (out, _) = apply_residuals(b, res).expect("shape");
        let mut v = 0.0;
        for i in 0..n {
            for a in 0..3 {
                v += up.means[i][a] * out.means[i][a] + up.log_scales[i][a] * out.log_scales[i][a];
            }
            for c in 0..4 {
                v += up.rotations[i][c] * out.rotations[i][c];
            }
        }
        v
    };
    let (g_base, g_res) = apply_residuals_backward(&base, &res, &up).expect("shape");
    for i in 0..n {
        for c in 0..RESIDUAL_WIDTH {
            let mut p = res.clone();
            p[(i, c)] += FD_STEP;
            let mut m = res.clone();
            m[(i, c)] -= FD_STEP;
            let numeric = (value(&base, &p) - value(&base, &m)) / (2.0 * FD_STEP);
            r.record(|| format!("residual ({i},{c})"), g_res[(i, c)], numeric);
        }
        for c in 0..4 {
            let mut p = base.clone();
            p.rotations[i][c] += FD_STEP;
            let mut m = base.clone();
            m.rotations[i][c] -= FD_STEP;
            let numeric = (value(&p, &res) - value(&m, &res)) / (2.0 * FD_STEP);
            r.record(|| format!("residual base rotation ({i},{c})"), g_base.rotations[i][c], numeric);
        }
        for a in 0..3 {
            let mut p = base.clone();
            p.means[i][a] += FD_STEP;
            let mut m = base.clone();
            m.means[i][a] -= FD_STEP;
            let numeric = (value(&p, &res) - value(&m, &res)) / (2.0 * FD_STEP);
            r.record(|| format!("residual base mean ({i},{a})"), g_base.means[i][a], numeric);
        }
    }
    r
}

/// Finite-difference sweep over every differentiable path on `scenes`
/// random micro-scenes (at most 8 Gaussians, 16×16 pixels).
pub fn gradient_suite(scenes: usize, seed: u64) -> GradientSuite {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cam = micro_camera(16);
    let cfg = RasterConfig::default();
    let mut report = FdReport::default();
    for s in 0..scenes {
        let count = rng.random_range(1..=8);
        let cloud = random_cloud(&mut rng, count, s % 4, 1.0);
        report.merge(check_render_gradients(&cloud, &cam, &cfg, &mut rng));

        let (mesh, bound) = random_bound_scene(&mut rng, 2, s % 2);
        let posed = PosedFaces::new(&mesh, &mesh.vertices).expect("valid mesh");
        report.merge(check_bound_gradients(&bound, &posed, &cam, &cfg, &mut rng));

        report.merge(mlp_fd(&mut rng));
        report.merge(residual_fd(&mut rng));
        report.merge(loss_fd(&mut rng, 16));
    }
    GradientSuite {
        scenes,
        report,
        seconds: start.elapsed().as_secs_f64(),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RasterAgreement {
    pub scenes: usize,
    pub max_color_diff: f64,
    pub max_alpha_diff: f64,
}

/// Tiled compositor against the per-pixel reference on random scenes of up
/// to 64 splats at 32×32.
pub fn raster_agreement(scenes: usize, seed: u64) -> RasterAgreement {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cam = micro_camera(32);
    let cfg = RasterConfig::default();
    let mut out = RasterAgreement {
        scenes,
        max_color_diff: 0.0,
        max_alpha_diff: 0.0,
    };
    for s in 0..scenes {
        let n = rng.random_range(1..=64);
        let cloud = random_cloud(&mut rng, n, s % 4, 1.2);
        let splats = project_all(&cloud, &cam);
        let tiled = rasterize_forward(&splats, &cam, &cfg);
        let naive = naive_composite(&splats, &cam, &cfg);
        for (a, b) in tiled.color.iter().zip(&naive.color) {
            out.max_color_diff = out.max_color_diff.max((a - b).abs());
        }
        for (a, b) in tiled.alpha.iter().zip(&naive.alpha) {
            out.max_alpha_diff = out.max_alpha_diff.max((a - b).abs());
        }
    }
    out
}

/// Model variants compared in the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Full,
    NoStructure,
    NoAlpha,
    NoDeformer,
    NoBinding,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoStructure,
        Variant::NoAlpha,
        Variant::NoDeformer,
        Variant::NoBinding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoStructure => "no-structure-loss",
            Variant::NoAlpha => "no-alpha-loss",
            Variant::NoDeformer => "no-deformer",
            Variant::NoBinding => "no-binding",
        }
    }

    pub fn apply(self, cfg: &mut TrainConfig) {
        match self {
            Variant::Full => {}
            Variant::NoStructure => cfg.loss.lambda_st = 0.0,
            Variant::NoAlpha => cfg.loss.lambda_alpha = 0.0,
            Variant::NoDeformer => cfg.components.deformer = false,
            Variant::NoBinding => cfg.components.binding = false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub variant: Variant,
    pub held_out_psnr: f64,
    pub held_out_ssim: f64,
    pub train_psnr: f64,
    pub gaussians: usize,
    pub seconds: f64,
}

/// Trains one variant on `dataset` and scores it on the held-out frames.
pub fn fit_variant(dataset: &Dataset, base: &TrainConfig, variant: Variant) -> Result<FitOutcome> {
    let mut cfg = base.clone();
    variant.apply(&mut cfg);
    let start = Instant::now();
    let mut state = TrainState::new(cfg, dataset)?;
    state.run(dataset, |_| {})?;
    let seconds = start.elapsed().as_secs_f64();
    let (train, held_out) = dataset.split(state.config.holdout_every);
    let test = evaluate(&state.model, dataset, &held_out)?;
    let fit = evaluate(&state.model, dataset, &train)?;
    Ok(FitOutcome {
        variant,
        held_out_psnr: test.mean_psnr,
        held_out_ssim: test.mean_ssim,
        train_psnr: fit.mean_psnr,
        gaussians: state.model.cloud.len(),
        seconds,
    })
}

/// PSNR gaps `(label, better − worse)` the ablation ordering requires to be
/// positive. Missing variants are skipped.
pub fn ablation_gaps(outcomes: &[FitOutcome]) -> Vec<(String, f64)> {
    let psnr = |v: Variant| outcomes.iter().find(|o| o.variant == v).map(|o| o.held_out_psnr);
    let pairs = [
        (Variant::Full, Variant::NoStructure),
        (Variant::NoStructure, Variant::NoAlpha),
        (Variant::Full, Variant::NoDeformer),
        (Variant::Full, Variant::NoBinding),
    ];
    pairs
        .iter()
        .filter_map(|&(a, b)| Some((format!("{} - {}", a.name(), b.name()), psnr(a)? - psnr(b)?)))
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct PlrfInvariants {
    pub faces: usize,
    pub gaussians: usize,
    /// Largest |n − 0.5| right after initialization.
    pub max_initial_n_dev: f64,
    /// Largest violation of `x'ᵢ − x̄ = n(xᵢ − x̄)` over all frames.
    pub max_anchor_err: f64,
    /// Largest distance of an anchor from its face plane over all frames.
    pub max_plane_dist: f64,
    pub frames: usize,
}

/// Initializes on frame 0, randomizes the line parameters, then checks the
/// anchors of every Gaussian in every frame.
pub fn plrf_invariants(dataset: &Dataset, seed: u64) -> Result<PlrfInvariants> {
    let mesh = dataset.sequence.frame(0)?;
    let mut cloud = init_plrf(&mesh, &PlrfInit::default())?;
    let max_initial_n_dev = (0..cloud.len()).map(|i| (cloud.n(i) - 0.5).abs()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in &mut cloud.n_raw {
        *v = rng.random_range(-3.0..3.0);
    }
    let mut anchor_err: f64 = 0.0;
    let mut plane: f64 = 0.0;
    for vertices in &dataset.sequence.frames {
        let posed = PosedFaces::new(&dataset.sequence.topology, vertices)?;
        for i in 0..cloud.len() {
            let f = cloud.faces[i] as usize;
            let corners = dataset.sequence.topology.faces[f].map(|v| Vector3::from(vertices[v as usize]));
            let centroid = (corners[0] + corners[1] + corners[2]) / 3.0;
            let slot = cloud.slots[i];
            let n = cloud.n(i);
            let anchor = posed.anchor(f, slot, n);
            let expected = match slot {
                Slot::Corner(c) => n * (corners[c as usize] - centroid),
                Slot::Centroid => Vector3::zeros(),
            };
            anchor_err = anchor_err.max(((anchor - centroid) - expected).amax());
            let normal = (corners[1] - corners[0]).cross(&(corners[2] - corners[0])).normalize();
            plane = plane.max((anchor - corners[0]).dot(&normal).abs());
        }
    }
    Ok(PlrfInvariants {
        faces: mesh.face_count(),
        gaussians: cloud.len(),
        max_initial_n_dev,
        max_anchor_err: anchor_err,
        max_plane_dist: plane,
        frames: dataset.len(),
    })
}

/// Small dataset (8 frames, 16×16) for runs that only exercise mechanics.
pub fn small_dataset(seed: u64) -> Result<Dataset> {
    let proxy = make_proxy_sequence(seed, 8, 12)?;
    Ok(make_teacher_dataset(&proxy, &desk_camera(16), seed + 1)?.0)
}

/// Reduced network and cap for [`small_dataset`].
pub fn small_config(iterations: u64) -> TrainConfig {
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

#[derive(Clone, Debug)]
pub struct ScheduleTrace {
    pub iterations: usize,
    pub densify: Vec<u64>,
    pub resets: Vec<u64>,
}

/// Runs a real training loop under the given schedule and reads the event
/// iterations back from its log.
pub fn schedule_trace(total: u64, densify_period: u64, densify_until: u64, reset_period: u64) -> Result<ScheduleTrace> {
    let data = small_dataset(3)?;
    let cfg = TrainConfig {
        densify_period,
        densify_until,
        opacity_reset_period: reset_period,
        opacity_reset_until: None,
        ..small_config(total)
    };
    let mut state = TrainState::new(cfg, &data)?;
    let log: TrainLog = state.run(&data, |_| {})?;
    Ok(ScheduleTrace {
        iterations: log.rows.len(),
        densify: log.densify_iterations(),
        resets: log.reset_iterations(),
    })
}

/// One worked loss example: the computed value and the value it must take.
#[derive(Clone, Debug)]
pub struct LossCase {
    pub name: &'static str,
    pub value: f64,
    pub expected: f64,
}

pub fn loss_cases() -> Result<Vec<LossCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let a = random_image(&mut rng, 16, 16, 3);
    let b = random_image(&mut rng, 16, 16, 3);
    let cfg = LossConfig::default();
    let mut cases = Vec::new();
    let mut case = |name, value, expected| cases.push(LossCase { name, value, expected });

    case("default lambda_ssim", cfg.lambda_ssim, 0.4);
    case("default lambda_alpha", cfg.lambda_alpha, 0.5);
    case("default lambda_st", cfg.lambda_st, 0.3);
    case("default lambda_invis", cfg.lambda_invis, 0.3);
    case("default lambda_scale", cfg.lambda_scale, 0.15);
    case("default xi", cfg.xi, 0.15);
    let loaded = TrainConfig::from_toml(&TrainConfig::default().to_toml()?)?.loss;
    case("loaded weights sum", loaded.lambda_ssim + loaded.lambda_alpha + loaded.lambda_st + loaded.lambda_invis + loaded.lambda_scale, 1.65);

    case("l1 self", l1_loss(&a, &a)?.value, 0.0);
    case("l1 black vs white", l1_loss(&Image::filled(16, 16, 3, 0.0), &Image::filled(16, 16, 3, 1.0))?.value, 1.0);
    case("ssim self", crate::loss::ssim(&a, &a)?.value, 1.0);
    case("dssim self", dssim_loss(&a, &a)?.value, 0.0);
    let (color, l1, ds) = color_loss(&a, &b, cfg.lambda_ssim)?;
    case("color mix", color.value, 0.6 * l1 + 0.4 * ds);
    case("color components (0.1, 0.5)", cfg.color(0.1, 0.5), 0.26);
    case("dssim symmetry", dssim_loss(&a, &b)?.value, dssim_loss(&b, &a)?.value);

    case("structure self", structure_loss(&a, &a, cfg.lambda_st, false)?.value, 0.0);
    let mut shifted = a.clone();
    shifted.data.iter_mut().for_each(|v| *v += 0.25);
    case("structure offset invariance", structure_loss(&shifted, &a, cfg.lambda_st, false)?.value, 0.0);
    let mut b_shifted = b.clone();
    b_shifted.data.iter_mut().for_each(|v| *v += 0.25);
    case(
        "structure shared offset",
        structure_loss(&shifted, &b_shifted, cfg.lambda_st, false)?.value,
        structure_loss(&a, &b, cfg.lambda_st, false)?.value,
    );

    let ones = Image::filled(16, 16, 1, 1.0);
    let zeros = Image::filled(16, 16, 1, 0.0);
    case("alpha self", weighted_mse(&ones, &ones, cfg.lambda_alpha)?.value, 0.0);
    case("alpha extreme 1 vs 0", weighted_mse(&ones, &zeros, cfg.lambda_alpha)?.value, cfg.lambda_alpha);
    case("alpha extreme 0 vs 1", weighted_mse(&zeros, &ones, cfg.lambda_alpha)?.value, cfg.lambda_alpha);
    let pa = random_image(&mut rng, 16, 16, 1);
    let ta = random_image(&mut rng, 16, 16, 1);
    let mut sq = 0.0;
    for i in 0..pa.len() {
        sq += (pa.data[i] - ta.data[i]).powi(2);
    }
    case("alpha loop oracle", weighted_mse(&pa, &ta, cfg.lambda_alpha)?.value, cfg.lambda_alpha * sq / pa.len() as f64);

    let scales = vec![[0.2; 3], [0.5, 0.1, 0.3], [0.7; 3]];
    case("invisible none", invisible_scale_reg(&scales, &[false; 3], Reduction::Mean)?.0, 0.0);
    case("invisible first", invisible_scale_reg(&scales, &[true, false, false], Reduction::Mean)?.0, 0.2);
    let small = vec![[0.1; 3], [0.05, 0.15, 0.12]];
    case("scale floor below xi", scale_threshold_reg(&small, &[false; 2], cfg.xi, Reduction::Mean)?.0, cfg.xi);
    let one_high = vec![[0.3, 0.1, 0.1], [0.1; 3]];
    case(
        "scale one above xi",
        scale_threshold_reg(&one_high, &[false; 2], cfg.xi, Reduction::Mean)?.0,
        (0.3 + 5.0 * cfg.xi) / 6.0,
    );
    case("scale invisible large", scale_threshold_reg(&[[0.9; 3]], &[true], cfg.xi, Reduction::Mean)?.0, cfg.xi);

    let aa = random_image(&mut rng, 16, 16, 1);
    let ab = random_image(&mut rng, 16, 16, 1);
    let (r, _) = total_loss(&cfg, &a, &b, &aa, &ab, &one_high, &[false, true])?;
    case("total composition", r.total, r.color + r.alpha + r.st + 0.3 * r.invis + 0.15 * r.scale);
    Ok(cases)
}

#[derive(Clone, Debug)]
pub struct Determinism {
    pub checkpoint_bytes: usize,
    pub repeat_identical: bool,
    pub thread_counts: Vec<usize>,
    pub threads_identical: bool,
    pub novel_view_identical: bool,
}

fn trained_bytes(data: &Dataset, cfg: &TrainConfig) -> Result<(Vec<u8>, TrainState)> {
    let mut state = TrainState::new(cfg.clone(), data)?;
    state.run(data, |_| {})?;
    Ok((encode_checkpoint(&state)?, state))
}

/// Trains the small configuration repeatedly and under different worker
/// counts, comparing serialized checkpoints, then compares a zero-offset
/// orbit view against the plain render.
pub fn determinism(iterations: u64, thread_counts: &[usize]) -> Result<Determinism> {
    let data = small_dataset(5)?;
    let cfg = small_config(iterations);
    let (first, state) = trained_bytes(&data, &cfg)?;
    let (second, _) = trained_bytes(&data, &cfg)?;
    let mut threads_identical = true;
    for &t in thread_counts {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| crate::Error::InvalidState(format!("thread pool: {e}")))?;
        let (bytes, _) = pool.install(|| trained_bytes(&data, &cfg))?;
        threads_identical &= bytes == first;
    }
    let mut novel_view_identical = true;
    for frame in 0..data.len() {
        let plain = render_frame(&state.model, &data, frame)?.output;
        let orbit = render_novel_view(&state.model, &data, frame, 0.0, 0.0)?.output;
        let same = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        novel_view_identical &= same(&plain.color, &orbit.color) && same(&plain.alpha, &orbit.alpha);
    }
    Ok(Determinism {
        checkpoint_bytes: first.len(),
        repeat_identical: first == second,
        thread_counts: thread_counts.to_vec(),
        threads_identical,
        novel_view_identical,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct CovarianceOracle {
    pub gaussians: usize,
    pub samples: usize,
    pub max_rel_frobenius: f64,
}

/// Analytic screen covariance against sampled projections of random
/// Gaussians in front of the micro camera.
pub fn covariance_oracle(gaussians: usize, samples: usize, seed: u64) -> Result<CovarianceOracle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cam = micro_camera(64);
    let mut worst: f64 = 0.0;
    for _ in 0..gaussians {
        let mean = Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5));
        let scale = Vector3::from_fn(|_, _| rng.random_range(0.01..0.05));
        let q = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let sigma = build_covariance(&scale, q)?;
        let mean_cam = cam.world_to_camera(&mean);
        let sigma_cam = cam.rotation * sigma * cam.rotation.transpose();
        let analytic = project_with_jacobian(&sigma_cam, &perspective_jacobian(&mean_cam, &cam));
        let sampled = monte_carlo_screen_covariance(&mean, &sigma, &cam, samples, &mut rng);
        worst = worst.max((analytic - sampled).norm() / sampled.norm());
    }
    Ok(CovarianceOracle {
        gaussians,
        samples,
        max_rel_frobenius: worst,
    })
}
