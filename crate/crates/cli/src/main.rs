//! `udup` command-line driver.

mod kv;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use udup_core::corpus::{self, build_corpus, Corpus, CorpusConfig, Split, TextSample};
use udup_core::detector::{register_external, Detector, ExternalSpec, OutputFormat, Surrogate, SurrogateConfig};
use udup_core::eval::{
    ablate, ablation_csv, patch_at_mui, ratio_report, reports_csv, save_overlay, sweep, AblationGrid, Color,
    CropSize, CropSpec, EvalOptions, EvalReport, PostProcess, SweepAxis, Transform, MUI_TOLERANCE, TEXT_COLORS,
};
use udup_core::imageops::{fuse, Patch};
use udup_core::udup::{lambda_for_side, train, Checkpoint, Persist, TrainConfig};

use kv::ConfigError;
use manifest::RunManifest;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] udup_core::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

type CliResult<T> = Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Parser, Debug)]
#[command(name = "udup", version, about = "Universal defensive underpainting patches")]
struct Cli {
    /// Log progress to stderr (-vv for per-iteration detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Flat `key = value` config file for this command.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory; receives every output and the run manifest.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic corpus of text pages with masks and word boxes.
    RenderCorpus {
        #[command(flatten)]
        common: Common,
        /// Corpus directory (also the run directory unless --out-dir is set).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the white-box surrogate detector.
    TrainDetector {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        /// Checkpoint path (default: <run dir>/surrogate.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimize a patch against a white-box detector.
    TrainPatch {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        detector: String,
        /// Patch file (default: <run dir>/patch.udup).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write a patch checkpoint every this many iterations.
        #[arg(long, default_value_t = 1)]
        checkpoint_every: usize,
    },
    /// Tile a patch under the background of one image.
    Apply {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        patch: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Mask PNG, 255 on background pixels.
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Rescale the text image before fusion.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Clean vs defended recall and precision on one split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        target: EvalTarget,
        #[arg(long)]
        patch: PathBuf,
        #[arg(long, conflicts_with_all = ["jpeg", "crop"])]
        scale: Option<f64>,
        #[arg(long, conflicts_with = "crop")]
        jpeg: Option<u8>,
        /// Crop windows of WxH pixels at random positions.
        #[arg(long)]
        crop: Option<String>,
        #[arg(long, default_value_t = 20)]
        windows: usize,
        /// Draw detected boxes over the first N defended images.
        #[arg(long, default_value_t = 0)]
        overlays: usize,
    },
    /// One report per level along an axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        target: EvalTarget,
        /// scale, jpeg, color or mui.
        #[arg(long)]
        axis: String,
        /// Comma-separated levels; `none` disables JPEG.
        #[arg(long)]
        levels: Option<String>,
        /// Patch for the scale, jpeg and color axes.
        #[arg(long)]
        patch: Option<PathBuf>,
        /// Training run directory holding patch checkpoints (mui axis).
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Retrain under a configuration grid and compare.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        target: EvalTarget,
        /// `components` or `lambda:<v>,<v>,...`.
        #[arg(long)]
        grid: String,
        /// Evaluate each cell at this MUI level.
        #[arg(long)]
        mui: Option<f64>,
        /// Patch training config for every cell.
        #[arg(long)]
        train_config: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone)]
struct EvalTarget {
    #[arg(long)]
    corpus: PathBuf,
    /// Surrogate checkpoint, or `adapter:<command ...>`.
    #[arg(long)]
    detector: String,
    #[arg(long, default_value = "test")]
    split: String,
}

/// Evaluation settings read from `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct EvalConfig {
    threshold: f32,
    min_area: usize,
    iou_threshold: f64,
    seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let o = EvalOptions::default();
        Self {
            threshold: o.post.threshold,
            min_area: o.post.min_area,
            iou_threshold: o.iou_threshold,
            seed: 0,
        }
    }
}

impl EvalConfig {
    fn options(&self) -> EvalOptions {
        EvalOptions {
            post: PostProcess {
                threshold: self.threshold,
                min_area: self.min_area,
            },
            iou_threshold: self.iou_threshold,
        }
    }
}

/// Loads a config, applies `--seed`, and returns it with its text form.
fn load_config<T>(common: &Common) -> CliResult<(T, String)>
where
    T: Serialize + serde::de::DeserializeOwned + Default,
{
    let mut config: T = kv::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        config = kv::with_override(&config, "seed", &seed.to_string())?;
    }
    let text = kv::serialize(&config);
    Ok((config, text))
}

/// A patch side set without `lambda` takes that side's tabulated weight.
fn side_lambda(config: &mut TrainConfig, path: Option<&Path>) -> CliResult<()> {
    if !kv::keys_in(path)?.contains("lambda") {
        config.lambda = lambda_for_side(config.side);
    }
    Ok(())
}

struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn start(command: &str, dir: PathBuf) -> CliResult<Self> {
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self {
            dir,
            manifest: RunManifest::new(command, std::env::args().collect()),
        })
    }

    fn input(&mut self, path: &Path) -> CliResult<()> {
        self.manifest.add_input(path).map_err(io_err(path))
    }

    fn output(&mut self, path: PathBuf) {
        self.manifest.outputs.push(path);
    }

    fn write_text(&mut self, name: &str, text: &str) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(io_err(&path))?;
        self.output(path.clone());
        Ok(path)
    }

    fn finish(self) -> CliResult<()> {
        let dir = self.dir;
        self.manifest.write(&dir).map_err(io_err(&dir))?;
        Ok(())
    }
}

/// Run directory: `--out-dir`, else the directory holding `out`, else a
/// per-command default.
fn run_dir(common: &Common, out: Option<&Path>, out_is_dir: bool, command: &str) -> PathBuf {
    if let Some(d) = &common.out_dir {
        return d.clone();
    }
    match out {
        Some(p) if out_is_dir => p.to_path_buf(),
        Some(p) => match p.parent() {
            Some(parent) if !parent.as_os_str().is_empty() => parent.to_path_buf(),
            _ => PathBuf::from("."),
        },
        None => Path::new("runs").join(command),
    }
}

/// Output file path: explicit `out` (relative paths resolve under an explicit
/// `--out-dir`), else `default` inside the run directory.
fn output_path(common: &Common, dir: &Path, out: Option<&Path>, default: &str) -> PathBuf {
    match out {
        Some(p) if p.is_relative() && common.out_dir.is_some() => dir.join(p),
        Some(p) => p.to_path_buf(),
        None => dir.join(default),
    }
}

fn open_detector(spec: &str, run: &mut Run) -> CliResult<Detector> {
    if let Some(cmd) = spec.strip_prefix("adapter:") {
        let command: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
        if command.is_empty() {
            return Err(CliError::Usage("adapter: needs a command".into()));
        }
        run.manifest.config.insert("detector".into(), spec.to_string());
        return Ok(register_external(ExternalSpec {
            command,
            output: OutputFormat::Auto,
        })?);
    }
    let path = Path::new(spec);
    run.input(path)?;
    Ok(Detector::Surrogate(Surrogate::load(path)?))
}

fn load_corpus(dir: &Path, run: &mut Run) -> CliResult<Corpus> {
    run.input(dir)?;
    Ok(Corpus::load(dir)?)
}

fn split_of(name: &str) -> CliResult<Split> {
    match name {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        other => Err(CliError::Usage(format!("unknown split `{other}` (train or test)"))),
    }
}

fn load_patch(path: &Path, run: &mut Run) -> CliResult<Patch> {
    run.input(path)?;
    Ok(Patch::load(path)?)
}

fn parse_crop(text: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::Usage(format!("--crop expects WxH, got `{text}`"));
    let (w, h) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad {what} level `{}`", v.trim())))
        })
        .collect()
}

/// Patch checkpoints of a training run directory, in iteration order.
fn load_checkpoints(dir: &Path, run: &mut Run) -> CliResult<Vec<Checkpoint>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let t = name
            .strip_prefix("patch-")
            .and_then(|r| r.strip_suffix(".udup"))
            .and_then(|t| t.parse::<usize>().ok());
        if let Some(t) = t {
            found.push((t, path));
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(CliError::Usage(format!("no patch-NNNN.udup checkpoints in {}", dir.display())));
    }
    found
        .into_iter()
        .map(|(t, path)| {
            run.input(&path)?;
            Ok(Checkpoint {
                t,
                patch: Patch::load(&path)?,
            })
        })
        .collect()
}

fn emit_reports(run: &mut Run, reports: &[EvalReport]) -> CliResult<()> {
    run.write_text("report.csv", &reports_csv(reports))?;
    let summary: String = reports.iter().map(|r| r.summary() + "\n").collect();
    run.write_text("summary.txt", &summary)?;
    let json = serde_json::to_string_pretty(reports).map_err(|e| CliError::Core(e.into()))?;
    run.write_text("report.json", &json)?;
    print!("{summary}");
    Ok(())
}

fn save_overlays(
    run: &mut Run,
    detector: &Detector,
    samples: &[TextSample],
    patch: &Patch,
    options: &EvalOptions,
    count: usize,
) -> CliResult<()> {
    if count == 0 {
        return Ok(());
    }
    let dir = run.dir.join("overlays");
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for sample in samples.iter().take(count) {
        let defended = fuse(sample, patch, 1.0)?;
        let boxes = detector.detect(&defended, &options.post)?;
        let path = dir.join(format!("{}.png", sample.id));
        save_overlay(&defended, &boxes, &path)?;
        run.output(path);
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::RenderCorpus { common, out } => {
            let dir = run_dir(&common, out.as_deref(), true, "render-corpus");
            let corpus_dir = match (&common.out_dir, out) {
                (Some(_), Some(o)) => output_path(&common, &dir, Some(&o), ""),
                _ => dir.clone(),
            };
            let mut run = Run::start("render-corpus", dir)?;
            let (config, text): (CorpusConfig, _) = load_config(&common)?;
            run.manifest.set_config(&text);
            run.manifest.seed = Some(config.seed);
            let corpus = build_corpus(&config)?;
            corpus.save(&corpus_dir)?;
            run.write_text("corpus.conf", &text)?;
            run.output(corpus_dir.clone());
            println!(
                "rendered {} train / {} test pages into {}",
                corpus.train.len(),
                corpus.test.len(),
                corpus_dir.display()
            );
            run.finish()
        }
        Command::TrainDetector { common, corpus, out } => {
            let dir = run_dir(&common, out.as_deref(), false, "train-detector");
            let ckpt = output_path(&common, &dir, out.as_deref(), "surrogate.json");
            let mut run = Run::start("train-detector", dir)?;
            let (config, text): (SurrogateConfig, _) = load_config(&common)?;
            run.manifest.set_config(&text);
            run.manifest.seed = Some(config.seed);
            let corpus = load_corpus(&corpus, &mut run)?;
            let result = udup_core::detector::train_surrogate(&corpus, &config, Some(&ckpt));
            run.output(ckpt.clone());
            run.write_text("detector.conf", &text)?;
            match result {
                Ok(s) => {
                    println!(
                        "surrogate saved to {} (clean recall {})",
                        ckpt.display(),
                        s.clean_recall.map_or("n/a".into(), |r| format!("{r:.4}"))
                    );
                    run.finish()
                }
                Err(e) => {
                    run.finish()?;
                    Err(e.into())
                }
            }
        }
        Command::TrainPatch {
            common,
            corpus,
            detector,
            out,
            checkpoint_every,
        } => {
            let dir = run_dir(&common, out.as_deref(), false, "train-patch");
            let patch_path = output_path(&common, &dir, out.as_deref(), "patch.udup");
            let mut run = Run::start("train-patch", dir.clone())?;
            let (mut config, _): (TrainConfig, _) = load_config(&common)?;
            side_lambda(&mut config, common.config.as_deref())?;
            let text = kv::serialize(&config);
            run.manifest.set_config(&text);
            run.manifest.seed = Some(config.seed);
            let corpus = load_corpus(&corpus, &mut run)?;
            let detector = open_detector(&detector, &mut run)?;
            let net = detector.whitebox()?;
            let outcome = train(
                corpus.split(Split::Train),
                net,
                &config,
                Some(Persist {
                    dir: &dir,
                    every: checkpoint_every,
                }),
            )?;
            let preview = outcome.patch.save(&patch_path)?;
            run.output(patch_path.clone());
            run.output(preview);
            run.output(dir.join("loss.csv"));
            run.write_text("train.conf", &text)?;
            println!(
                "patch saved to {} (mui {:.4} after {} iterations)",
                patch_path.display(),
                outcome.patch.mui(),
                outcome.history.len()
            );
            run.finish()
        }
        Command::Apply {
            common,
            patch,
            image,
            mask,
            out,
            scale,
        } => {
            let dir = run_dir(&common, Some(&out), false, "apply");
            let out = output_path(&common, &dir, Some(&out), "");
            let mut run = Run::start("apply", dir)?;
            run.manifest.config.insert("scale".into(), scale.to_string());
            let patch = load_patch(&patch, &mut run)?;
            run.input(&image)?;
            run.input(&mask)?;
            let id = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let sample = corpus::load_sample(&image, &mask, id, Vec::new())?;
            let defended = fuse(&sample, &patch, scale)?;
            corpus::save_gray(&defended, &out)?;
            run.output(out.clone());
            println!("defended image written to {}", out.display());
            run.finish()
        }
        Command::Evaluate {
            common,
            target,
            patch,
            scale,
            jpeg,
            crop,
            windows,
            overlays,
        } => {
            let dir = run_dir(&common, None, false, "evaluate");
            let mut run = Run::start("evaluate", dir)?;
            let (config, text): (EvalConfig, _) = load_config(&common)?;
            run.manifest.set_config(&text);
            run.manifest.seed = Some(config.seed);
            let corpus = load_corpus(&target.corpus, &mut run)?;
            let samples = corpus.split(split_of(&target.split)?);
            let detector = open_detector(&target.detector, &mut run)?;
            let patch = load_patch(&patch, &mut run)?;
            let transform = match (scale, jpeg, crop) {
                (Some(r), _, _) => Transform::Scale(r),
                (_, Some(q), _) => Transform::Jpeg(q),
                (_, _, Some(c)) => {
                    let (width, height) = parse_crop(&c)?;
                    Transform::Crop(CropSpec {
                        size: CropSize::Fixed { height, width },
                        windows_per_sample: windows,
                        seed: config.seed,
                    })
                }
                _ => Transform::None,
            };
            let options = config.options();
            let report = ratio_report(&detector, samples, &patch, &transform, &options)?;
            emit_reports(&mut run, std::slice::from_ref(&report))?;
            save_overlays(&mut run, &detector, samples, &patch, &options, overlays)?;
            run.finish()
        }
        Command::Sweep {
            common,
            target,
            axis,
            levels,
            patch,
            checkpoints,
        } => {
            let dir = run_dir(&common, None, false, "sweep");
            let mut run = Run::start("sweep", dir)?;
            let (config, text): (EvalConfig, _) = load_config(&common)?;
            run.manifest.set_config(&text);
            run.manifest.seed = Some(config.seed);
            let corpus = load_corpus(&target.corpus, &mut run)?;
            let samples = corpus.split(split_of(&target.split)?);
            let detector = open_detector(&target.detector, &mut run)?;
            let need_patch = |run: &mut Run| -> CliResult<Patch> {
                let p = patch
                    .as_deref()
                    .ok_or_else(|| CliError::Usage(format!("--axis {axis} needs --patch")))?;
                load_patch(p, run)
            };
            let (sweep_axis, p) = match axis.as_str() {
                "scale" => {
                    let lv = levels.as_deref().unwrap_or("0.6,0.8,1.0,1.5,2.0");
                    (SweepAxis::Scale(parse_list(lv, "scale")?), need_patch(&mut run)?)
                }
                "jpeg" => {
                    let lv = levels.as_deref().unwrap_or("none,100,90,80,70,60,50");
                    let qs = lv
                        .split(',')
                        .map(|v| match v.trim() {
                            "none" => Ok(None),
                            q => q
                                .parse::<u8>()
                                .map(Some)
                                .map_err(|_| CliError::Usage(format!("bad jpeg level `{q}`"))),
                        })
                        .collect::<CliResult<Vec<_>>>()?;
                    (SweepAxis::Jpeg(qs), need_patch(&mut run)?)
                }
                "color" => {
                    let colors = match levels.as_deref() {
                        None => TEXT_COLORS.to_vec(),
                        Some(lv) => lv.split(',').map(|c| Color::parse(c.trim())).collect::<Result<_, _>>()?,
                    };
                    (SweepAxis::Color(colors), need_patch(&mut run)?)
                }
                "mui" => {
                    let ck_dir = checkpoints
                        .as_deref()
                        .ok_or_else(|| CliError::Usage("--axis mui needs --checkpoints <run dir>".into()))?;
                    let cks = load_checkpoints(ck_dir, &mut run)?;
                    let targets: Vec<f64> = parse_list(levels.as_deref().unwrap_or("0.06,0.09,0.12"), "mui")?;
                    let mut picked = Vec::new();
                    for m in targets {
                        let sel = patch_at_mui(&cks, m, MUI_TOLERANCE, true)?;
                        log::info!("mui {m}: {:?}", sel.source);
                        picked.push((m.to_string(), sel.patch));
                    }
                    let first = picked[0].1.clone();
                    (
                        SweepAxis::Patches {
                            axis: "mui".into(),
                            levels: picked,
                        },
                        first,
                    )
                }
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown axis `{other}` (scale, jpeg, color or mui)"
                    )))
                }
            };
            run.manifest.config.insert("axis".into(), axis.clone());
            let reports = sweep(&detector, samples, &p, &sweep_axis, &config.options())?;
            emit_reports(&mut run, &reports)
                .and_then(|_| run.finish())
        }
        Command::Ablate {
            common,
            target,
            grid,
            mui,
            train_config,
        } => {
            let dir = run_dir(&common, None, false, "ablate");
            let mut run = Run::start("ablate", dir)?;
            let (config, text): (EvalConfig, _) = load_config(&common)?;
            let mut base: TrainConfig = kv::load(train_config.as_deref())?;
            side_lambda(&mut base, train_config.as_deref())?;
            if let Some(seed) = common.seed {
                base.seed = seed;
            }
            run.manifest.set_config(&text);
            run.manifest.set_config(&kv::serialize(&base));
            run.manifest.seed = Some(base.seed);
            run.manifest.config.insert("grid".into(), grid.clone());
            let grid = match grid.as_str() {
                "components" => AblationGrid::Components,
                g => match g.strip_prefix("lambda:") {
                    Some(v) => AblationGrid::Lambda(parse_list(v, "lambda")?),
                    None => {
                        return Err(CliError::Usage(format!(
                            "unknown grid `{g}` (components or lambda:<v>,...)"
                        )))
                    }
                },
            };
            let corpus = load_corpus(&target.corpus, &mut run)?;
            let samples = corpus.split(split_of(&target.split)?);
            let detector = open_detector(&target.detector, &mut run)?;
            let cells = ablate(
                corpus.split(Split::Train),
                samples,
                &detector,
                &base,
                &grid,
                mui,
                &config.options(),
            )?;
            run.write_text("ablation.csv", &ablation_csv(&cells))?;
            let summary: String = cells
                .iter()
                .map(|c| format!("{} (mui {:.4}): {}\n", c.label, c.mui, c.report.summary()))
                .collect();
            run.write_text("summary.txt", &summary)?;
            print!("{summary}");
            run.finish()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
