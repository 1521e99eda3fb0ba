use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use headsplat::dataset::Dataset;
use headsplat::io::{
    load_checkpoint, load_dataset, read_text, save_checkpoint, save_dataset, write_alpha_map, write_png, BitDepth,
    LogWriter,
};
use headsplat::synth::{desk_camera, make_proxy_sequence, make_teacher_dataset, DESK_FRAMES, DESK_RESOLUTION, DESK_VERTICES};
use headsplat::train::{
    evaluate, render_condition, render_frame, render_novel_view, Forward, TrainConfig, TrainState,
};
use headsplat::verify::criteria;
use headsplat::{Error, Result};

#[derive(Parser)]
#[command(name = "headsplat", version, about = "Mesh-bound Gaussian head avatars")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (animated proxy mesh plus teacher renders).
    Synth(SynthArgs),
    /// Build the initial field from a dataset and write a checkpoint.
    Init(InitArgs),
    /// Train from scratch or resume from a checkpoint.
    Train(TrainArgs),
    /// Render a recorded frame or an arbitrary condition vector.
    Render(RenderArgs),
    /// Render a recorded frame from an orbited camera.
    NovelView(NovelViewArgs),
    /// Drive the avatar with a sequence of condition vectors.
    Reenact(ReenactArgs),
    /// PSNR/SSIM table over dataset frames.
    Eval(EvalArgs),
    /// Run the oracle suites.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 11)]
    teacher_seed: u64,
    #[arg(long, default_value_t = DESK_FRAMES)]
    frames: usize,
    #[arg(long, default_value_t = DESK_VERTICES)]
    vertices: usize,
    #[arg(long, default_value_t = DESK_RESOLUTION)]
    resolution: u32,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// Full-length schedule.
    Long,
    /// Shortened schedule for 64×64 synthetic data.
    Desk,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML training configuration; overrides --profile.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::from_toml(&read_text(p)?)?,
            None => match self.profile {
                Profile::Long => TrainConfig::default(),
                Profile::Desk => TrainConfig::desk(),
            },
        };
        if let Some(n) = self.iterations {
            cfg.iterations = n;
            cfg.densify_until = cfg.densify_until.min(n);
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct InitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Checkpoint written at the end (and periodically).
    #[arg(long)]
    out: PathBuf,
    /// Continue from this checkpoint; its stored configuration is used.
    #[arg(long, conflicts_with_all = ["config", "iterations", "seed"])]
    resume: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    /// CSV training log, appended to if it exists.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Write the checkpoint every N iterations.
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Depth {
    #[value(name = "8")]
    Eight,
    #[value(name = "16")]
    Sixteen,
}

impl From<Depth> for BitDepth {
    fn from(d: Depth) -> Self {
        match d {
            Depth::Eight => BitDepth::Eight,
            Depth::Sixteen => BitDepth::Sixteen,
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Color image over white.
    #[arg(long)]
    out: PathBuf,
    /// Alpha map (16-bit, single channel).
    #[arg(long)]
    alpha: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Depth::Sixteen)]
    depth: Depth,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, required_unless_present = "condition", conflicts_with = "condition")]
    frame: Option<usize>,
    /// File holding one condition vector (numbers separated by spaces or commas).
    #[arg(long)]
    condition: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct NovelViewArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    frame: usize,
    /// Degrees about the camera's vertical axis.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    azimuth: f64,
    /// Degrees about the camera's horizontal axis.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    elevation: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ReenactArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// One condition vector per line.
    #[arg(long)]
    conditions: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Depth::Eight)]
    depth: Depth,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    HeldOut,
    Train,
    All,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value_t = Split::HeldOut)]
    split: Split,
}

#[derive(Args)]
struct SelftestArgs {
    /// Also run the training-quality checks (tens of minutes).
    #[arg(long)]
    full: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Init(a) => init(a),
        Command::Train(a) => train(a),
        Command::Render(a) => render(a),
        Command::NovelView(a) => novel_view(a),
        Command::Reenact(a) => reenact(a),
        Command::Eval(a) => eval(a),
        Command::Selftest(a) => selftest(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn synth(a: SynthArgs) -> Result<u8> {
    let proxy = make_proxy_sequence(a.seed, a.frames, a.vertices)?;
    let (data, _) = make_teacher_dataset(&proxy, &desk_camera(a.resolution), a.teacher_seed)?;
    let path = save_dataset(&a.out, &data)?;
    println!("{}", path.display());
    Ok(0)
}

fn init(a: InitArgs) -> Result<u8> {
    let data = load_dataset(&a.manifest)?;
    let state = TrainState::new(a.config.resolve()?, &data)?;
    save_checkpoint(&a.out, &state)?;
    println!("{} Gaussians on {} faces", state.model.cloud.len(), data.sequence.topology.face_count());
    Ok(0)
}

fn train(a: TrainArgs) -> Result<u8> {
    let data = load_dataset(&a.manifest)?;
    let mut state = match &a.resume {
        Some(p) => load_checkpoint(p)?,
        None => TrainState::new(a.config.resolve()?, &data)?,
    };
    let mut log = a.log.as_deref().map(LogWriter::open).transpose()?;
    let every = a.checkpoint_every.filter(|n| *n > 0).unwrap_or(u64::MAX);
    let total = state.config.iterations;
    let start = Instant::now();
    let mut write_err = None;
    let mut saved = false;
    while state.iteration < total {
        let stop = state.iteration.saturating_add(every).min(total);
        state.run_until(&data, stop, |row| {
            if let Some(w) = log.as_mut() {
                if let Err(e) = w.write(row) {
                    write_err.get_or_insert(e);
                }
            }
            if !a.quiet && (row.iteration % 100 == 0 || !row.events.is_empty()) {
                let events: Vec<String> = row.events.iter().map(ToString::to_string).collect();
                eprintln!(
                    "[{:>6}/{total}] loss {:.5} gaussians {} {:.0}s {}",
                    row.iteration,
                    row.loss.total,
                    row.count,
                    start.elapsed().as_secs_f64(),
                    events.join(" ")
                );
            }
        })?;
        if let Some(e) = write_err.take() {
            return Err(e);
        }
        if let Some(w) = log.as_mut() {
            w.flush()?;
        }
        save_checkpoint(&a.out, &state)?;
        saved = true;
    }
    if !saved {
        save_checkpoint(&a.out, &state)?;
    }
    println!("trained to iteration {} with {} Gaussians", state.iteration, state.model.cloud.len());
    Ok(0)
}

fn load_model(m: &ModelArgs) -> Result<(TrainState, Dataset)> {
    let state = load_checkpoint(&m.checkpoint)?;
    let data = load_dataset(&m.manifest)?;
    Ok((state, data))
}

fn write_output(fwd: &Forward, o: &OutputArgs) -> Result<()> {
    write_png(&o.out, &fwd.image(), o.depth.into())?;
    if let Some(p) = &o.alpha {
        write_alpha_map(p, &fwd.alpha())?;
    }
    Ok(())
}

fn parse_numbers(line: &str, path: &Path, number: usize) -> Result<Vec<f64>> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: number,
                message: format!("`{t}` is not a finite number"),
            })
        })
        .collect()
}

fn read_conditions(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if !line.is_empty() {
            out.push(parse_numbers(line, path, i + 1)?);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!("{}: no condition vectors", path.display())));
    }
    Ok(out)
}

fn render(a: RenderArgs) -> Result<u8> {
    let (state, data) = load_model(&a.model)?;
    let fwd = match (a.frame, &a.condition) {
        (Some(f), _) => render_frame(&state.model, &data, f)?,
        (None, Some(p)) => {
            let conds = read_conditions(p)?;
            if conds.len() != 1 {
                return Err(Error::InvalidArgument(format!("{}: expected one condition vector, found {}", p.display(), conds.len())));
            }
            render_condition(&state.model, &data, &conds[0])?
        }
        (None, None) => unreachable!("clap requires --frame or --condition"),
    };
    write_output(&fwd, &a.output)?;
    Ok(0)
}

fn novel_view(a: NovelViewArgs) -> Result<u8> {
    let (state, data) = load_model(&a.model)?;
    let fwd = render_novel_view(&state.model, &data, a.frame, a.azimuth.to_radians(), a.elevation.to_radians())?;
    write_output(&fwd, &a.output)?;
    Ok(0)
}

fn reenact(a: ReenactArgs) -> Result<u8> {
    let (state, data) = load_model(&a.model)?;
    let conds = read_conditions(&a.conditions)?;
    let frames = conds
        .iter()
        .map(|c| render_condition(&state.model, &data, c).map(|f| f.image()))
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(&a.out_dir).map_err(|source| Error::Unwritable {
        path: a.out_dir.clone(),
        source,
    })?;
    for (i, img) in frames.iter().enumerate() {
        write_png(&a.out_dir.join(format!("{i:04}.png")), img, a.depth.into())?;
    }
    println!("{} frames written to {}", frames.len(), a.out_dir.display());
    Ok(0)
}

fn eval(a: EvalArgs) -> Result<u8> {
    let (state, data) = load_model(&a.model)?;
    let (train, held_out) = data.split(state.config.holdout_every);
    let frames = match a.split {
        Split::HeldOut => held_out,
        Split::Train => train,
        Split::All => (0..data.len()).collect(),
    };
    let ev = evaluate(&state.model, &data, &frames)?;
    println!("{:>6} {:>8} {:>7}", "frame", "psnr", "ssim");
    for m in &ev.frames {
        println!("{:>6} {:>8.3} {:>7.4}", m.frame, m.psnr, m.ssim);
    }
    println!("{:>6} {:>8.3} {:>7.4}", "mean", ev.mean_psnr, ev.mean_ssim);
    Ok(0)
}

fn verdict(ok: bool, name: &str, detail: String) -> bool {
    println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn selftest(a: SelftestArgs) -> Result<u8> {
    let mut ok = true;
    let g = criteria::gradient_suite(100, 1);
    ok &= verdict(
        g.report.max_rel <= 1e-3 && g.seconds <= 120.0,
        "gradients",
        format!("{} scenes, {}, {:.1}s", g.scenes, g.report, g.seconds),
    );
    let r = criteria::raster_agreement(200, 2);
    ok &= verdict(
        r.max_color_diff <= 1e-6 && r.max_alpha_diff <= 1e-6,
        "tiled vs reference compositor",
        format!("max color diff {:.2e}, max alpha diff {:.2e}", r.max_color_diff, r.max_alpha_diff),
    );
    let desk = headsplat::synth::make_desk_dataset(7, 11)?;
    let p = criteria::plrf_invariants(&desk, 4)?;
    ok &= verdict(
        p.gaussians == 4 * p.faces && p.max_initial_n_dev == 0.0 && p.max_anchor_err <= 1e-9 && p.max_plane_dist <= 1e-9,
        "binding invariants",
        format!(
            "{} Gaussians / {} faces, anchor err {:.1e}, plane dist {:.1e} over {} frames",
            p.gaussians, p.faces, p.max_anchor_err, p.max_plane_dist, p.frames
        ),
    );
    let s = criteria::schedule_trace(2000, 400, 1200, 500)?;
    ok &= verdict(
        s.densify == [400, 800, 1200] && s.resets == [500, 1000, 1500, 2000],
        "schedule",
        format!("densify at {:?}, resets at {:?}", s.densify, s.resets),
    );
    let cases = criteria::loss_cases()?;
    let bad: Vec<_> = cases.iter().filter(|c| (c.value - c.expected).abs() > 1e-12).map(|c| c.name).collect();
    ok &= verdict(bad.is_empty(), "loss examples", format!("{} cases, failing: {bad:?}", cases.len()));
    let d = criteria::determinism(60, &[1, 2, 4])?;
    ok &= verdict(
        d.repeat_identical && d.threads_identical && d.novel_view_identical,
        "determinism",
        format!("{d:?}"),
    );
    let c = criteria::covariance_oracle(50, 1_000_000, 3)?;
    ok &= verdict(c.max_rel_frobenius <= 0.03, "covariance projection", format!("max rel {:.4}", c.max_rel_frobenius));
    if a.full {
        let mut outcomes = Vec::new();
        for v in criteria::Variant::ALL {
            let o = criteria::fit_variant(&desk, &TrainConfig::desk(), v)?;
            println!(
                "       {}: held-out PSNR {:.3} SSIM {:.4}, {} Gaussians, {:.0}s",
                v.name(),
                o.held_out_psnr,
                o.held_out_ssim,
                o.gaussians,
                o.seconds
            );
            outcomes.push(o);
        }
        let full = &outcomes[0];
        ok &= verdict(
            full.held_out_psnr >= 30.0 && full.held_out_ssim >= 0.92 && full.seconds <= 900.0,
            "round-trip fit",
            format!("PSNR {:.3}, SSIM {:.4}, {:.0}s", full.held_out_psnr, full.held_out_ssim, full.seconds),
        );
        let gaps = criteria::ablation_gaps(&outcomes);
        ok &= verdict(gaps.iter().all(|(_, g)| *g >= 0.3), "ablation ordering", format!("{gaps:?}"));
    }
    Ok(if ok { 0 } else { 3 })
}
