//! Configuration, on-disk layout and the commands behind the `sabm` binary.
//!
//! Every command is a pure function of its input files and configuration;
//! floating-point output uses fixed precision so reruns are byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::blockmatch::{coarse_to_fine, BorderPolicy, Criterion, MatchOptions, DEFAULT_P_LARGE, DEFAULT_P_SMALL};
use crate::depthmap::{train, write_dmap, write_visualization, ConsolidatedDepthMap, TrainingParams, DEFAULT_TRAINING_FRAMES};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::frame::{read_frames, write_frames, Frame};
use crate::geometry::{CameraIntrinsics, DEFAULT_MIN_DISPLACEMENT_PX};
use crate::metrics::{complexity_report, format_db, motion_compensate, psnr, psnr_csv, ComplexityReport};
use crate::predictor::{predict_step, PredictionParams, PredictionState};
use crate::sensor::SensorTrace;
use crate::simulator::{make_sequence, SceneSpec, TrajectorySpec, DEFAULT_FRAME_RATE, DEFAULT_SENSOR_RATE};

pub const DEFAULT_FOCAL_LENGTH_PX: f64 = 1000.0;

/// Names of the files a simulation writes under its output directory.
pub mod layout {
    pub const FRAMES_DIR: &str = "frames";
    pub const TRACE_FILE: &str = "trace.csv";
    pub const TRUTH_DIR: &str = "truth";
    pub const DISPLACEMENT_FILE: &str = "displacement.csv";
    pub const DEPTH_FILE: &str = "depth.dmap";
    pub const DEPTH_IMAGE: &str = "depth.pgm";
    pub const TRAIN_FIELDS_DIR: &str = "train_fields";
    pub const TRAIN_STATS_FILE: &str = "train_stats.csv";
    pub const PREDICT_FIELDS_DIR: &str = "predict_fields";
    pub const PREDICT_STATS_FILE: &str = "predict_stats.csv";
    pub const PREDICT_PSNR_FILE: &str = "predict_psnr.csv";
    pub const BENCH_FILE: &str = "bench.csv";
    pub const BENCH_SUMMARY_FILE: &str = "bench_summary.txt";

    pub fn truth_depth_name(index: usize) -> String {
        format!("depth_{index:04}.dmap")
    }

    pub fn field_name(frame: usize) -> String {
        format!("mv_{frame:04}.csv")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub focal_length: f64,
    pub p_large: u32,
    pub p_small: u32,
    pub criterion: Criterion,
    pub border: BorderPolicy,
    pub early_exit: bool,
    pub training_frames: usize,
    pub fps: f64,
    pub sensor_rate: f64,
    pub min_displacement: f64,
    pub parallel: bool,
    pub frames: PathBuf,
    pub trace: PathBuf,
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            focal_length: DEFAULT_FOCAL_LENGTH_PX,
            p_large: DEFAULT_P_LARGE,
            p_small: DEFAULT_P_SMALL,
            criterion: Criterion::Mse,
            border: BorderPolicy::Skip,
            early_exit: false,
            training_frames: DEFAULT_TRAINING_FRAMES,
            fps: DEFAULT_FRAME_RATE,
            sensor_rate: DEFAULT_SENSOR_RATE,
            min_displacement: DEFAULT_MIN_DISPLACEMENT_PX,
            parallel: true,
            frames: PathBuf::from("sim").join(layout::FRAMES_DIR),
            trace: PathBuf::from("sim").join(layout::TRACE_FILE),
            out: PathBuf::from("out"),
        }
    }
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("expected a boolean, got {value:?}")),
    }
}

fn parse_num<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("{value:?}: {e}"))
}

pub fn parse_criterion(value: &str) -> std::result::Result<Criterion, String> {
    match value.to_ascii_lowercase().as_str() {
        "mse" => Ok(Criterion::Mse),
        "mad" => Ok(Criterion::Mad),
        _ => Err(format!("unknown criterion {value:?} (mse or mad)")),
    }
}

pub fn parse_border(value: &str) -> std::result::Result<BorderPolicy, String> {
    match value.to_ascii_lowercase().as_str() {
        "skip" => Ok(BorderPolicy::Skip),
        "replicate" => Ok(BorderPolicy::Replicate),
        _ => Err(format!("unknown border policy {value:?} (skip or replicate)")),
    }
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "focal_length",
        "p_large",
        "p_small",
        "criterion",
        "border",
        "early_exit",
        "training_frames",
        "fps",
        "sensor_rate",
        "min_displacement",
        "parallel",
        "frames",
        "trace",
        "out",
    ];

    /// Sets one key; relative paths are taken as given.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "focal_length" => self.focal_length = parse_num(value)?,
            "p_large" => self.p_large = parse_num(value)?,
            "p_small" => self.p_small = parse_num(value)?,
            "criterion" => self.criterion = parse_criterion(value)?,
            "border" => self.border = parse_border(value)?,
            "early_exit" => self.early_exit = parse_bool(value)?,
            "training_frames" => self.training_frames = parse_num(value)?,
            "fps" => self.fps = parse_num(value)?,
            "sensor_rate" => self.sensor_rate = parse_num(value)?,
            "min_displacement" => self.min_displacement = parse_num(value)?,
            "parallel" => self.parallel = parse_bool(value)?,
            "frames" => self.frames = PathBuf::from(value),
            "trace" => self.trace = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment. Path values are
    /// resolved against `path`'s directory.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new(""));
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::parse(path, i + 1, format!("expected key = value, got {line:?}")));
            };
            let (key, value) = (key.trim(), value.trim());
            let value = if matches!(key, "frames" | "trace" | "out") {
                base.join(value).to_string_lossy().into_owned()
            } else {
                value.to_string()
            };
            self.set(key, &value).map_err(|msg| Error::parse(path, i + 1, msg))?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    /// Canonical `key = value` form, one line per key.
    pub fn to_text(&self) -> String {
        let criterion = match self.criterion {
            Criterion::Mse => "mse",
            Criterion::Mad => "mad",
        };
        let border = match self.border {
            BorderPolicy::Skip => "skip",
            BorderPolicy::Replicate => "replicate",
        };
        let mut out = String::new();
        let _ = writeln!(out, "focal_length = {}", self.focal_length);
        let _ = writeln!(out, "p_large = {}", self.p_large);
        let _ = writeln!(out, "p_small = {}", self.p_small);
        let _ = writeln!(out, "criterion = {criterion}");
        let _ = writeln!(out, "border = {border}");
        let _ = writeln!(out, "early_exit = {}", self.early_exit);
        let _ = writeln!(out, "training_frames = {}", self.training_frames);
        let _ = writeln!(out, "fps = {}", self.fps);
        let _ = writeln!(out, "sensor_rate = {}", self.sensor_rate);
        let _ = writeln!(out, "min_displacement = {}", self.min_displacement);
        let _ = writeln!(out, "parallel = {}", self.parallel);
        let _ = writeln!(out, "frames = {}", self.frames.display());
        let _ = writeln!(out, "trace = {}", self.trace.display());
        let _ = writeln!(out, "out = {}", self.out.display());
        out
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(self.focal_length)
    }

    pub fn execution(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn match_options(&self) -> MatchOptions {
        MatchOptions {
            criterion: self.criterion,
            border: self.border,
            early_exit: self.early_exit,
            execution: self.execution(),
        }
    }

    pub fn training_params(&self) -> TrainingParams {
        TrainingParams {
            p_large: self.p_large,
            p_small: self.p_small,
            min_displacement: self.min_displacement,
            options: self.match_options(),
        }
    }

    pub fn prediction_params(&self) -> PredictionParams {
        PredictionParams {
            p_small: self.p_small,
            min_displacement: self.min_displacement,
            options: self.match_options(),
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulateSummary {
    pub frames: usize,
    pub planes: Vec<f64>,
}

/// Renders a scene along a trajectory into `out_dir`: frames, sensor trace
/// and per-frame block depth plus per-interval parallax ground truth.
pub fn cmd_simulate(scene_path: &Path, trajectory_path: &Path, out_dir: &Path, config: &PipelineConfig) -> Result<SimulateSummary> {
    let scene = SceneSpec::read(scene_path)?.build()?;
    let text = std::fs::read_to_string(trajectory_path).map_err(|e| Error::io(trajectory_path, e))?;
    let spec = TrajectorySpec::parse_with_defaults(&text, trajectory_path, config.fps, config.sensor_rate)?;
    let seq = make_sequence(&scene, &spec, config.intrinsics()?, config.execution())?;

    write_frames(&out_dir.join(layout::FRAMES_DIR), &seq.frames)?;
    seq.trace.write(&out_dir.join(layout::TRACE_FILE))?;
    let truth_dir = out_dir.join(layout::TRUTH_DIR);
    create_dir(&truth_dir)?;
    for (k, map) in seq.truth.depth.iter().enumerate() {
        write_dmap(&truth_dir.join(layout::truth_depth_name(k)), map)?;
    }
    let cols = seq.truth.depth[0].cols();
    let mut csv = String::from("interval,row,col,dph,dpv\n");
    for (k, field) in seq.truth.displacement.iter().enumerate() {
        for (i, d) in field.iter().enumerate() {
            let _ = writeln!(csv, "{k},{},{},{:.9},{:.9}", i / cols, i % cols, d.dp_h, d.dp_v);
        }
    }
    write_text(&truth_dir.join(layout::DISPLACEMENT_FILE), &csv)?;
    Ok(SimulateSummary {
        frames: seq.frames.len(),
        planes: scene.planes(),
    })
}

fn load_inputs(config: &PipelineConfig) -> Result<(Vec<Frame>, SensorTrace)> {
    let frames = read_frames(&config.frames)?;
    let trace = SensorTrace::read(&config.trace)?;
    Ok((frames, trace))
}

fn training_slice<'a>(frames: &'a [Frame], config: &PipelineConfig) -> Result<&'a [Frame]> {
    let needed = config.training_frames.max(2);
    if frames.len() < needed {
        return Err(Error::TooFewFrames {
            needed,
            got: frames.len(),
        });
    }
    Ok(&frames[..needed])
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub pairs: usize,
    pub valid_blocks: usize,
    pub blocks: usize,
    /// Multiplications per frame pair, in order.
    pub multiplications: Vec<u64>,
}

/// Runs the training phase on the first `training_frames` frames and writes
/// the depth map, its rendering, the vector fields and per-pair statistics.
pub fn cmd_train(config: &PipelineConfig) -> Result<TrainSummary> {
    let (frames, trace) = load_inputs(config)?;
    let frames = training_slice(&frames, config)?;
    let out = train(frames, &trace, config.intrinsics()?, config.fps, &config.training_params())?;

    create_dir(&config.out)?;
    out.consolidated.write(&config.out.join(layout::DEPTH_FILE))?;
    write_visualization(&config.out.join(layout::DEPTH_IMAGE), &out.consolidated.to_depth_map())?;
    let fields_dir = config.out.join(layout::TRAIN_FIELDS_DIR);
    create_dir(&fields_dir)?;
    for (k, field) in out.fields.iter().enumerate() {
        field.write_csv(&fields_dir.join(layout::field_name(k + 1)))?;
    }
    let mut csv =
        String::from("frame,large_search_points,small_search_points,search_multiplications,depth_multiplications,total_multiplications\n");
    for s in &out.stats {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            s.frame,
            s.search.large.search_points,
            s.search.small.search_points,
            s.search.multiplications(),
            s.depth_multiplications,
            s.total_multiplications()
        );
    }
    write_text(&config.out.join(layout::TRAIN_STATS_FILE), &csv)?;
    Ok(TrainSummary {
        pairs: out.stats.len(),
        valid_blocks: out.consolidated.valid_blocks(),
        blocks: out.consolidated.len(),
        multiplications: out.stats.iter().map(|s| s.total_multiplications()).collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictSummary {
    /// `(frame, psnr)` for each predicted frame.
    pub psnr: Vec<(usize, f64)>,
    pub multiplications: Vec<u64>,
}

impl PredictSummary {
    pub fn mean_psnr(&self) -> f64 {
        mean(self.psnr.iter().map(|p| p.1))
    }
}

/// Predicts the vectors of every frame after the training frames, starting
/// from a stored depth map.
pub fn cmd_predict(config: &PipelineConfig, depth_file: &Path) -> Result<PredictSummary> {
    let (frames, trace) = load_inputs(config)?;
    training_slice(&frames, config)?;
    let start = config.training_frames.max(2) - 1;
    let consolidated = ConsolidatedDepthMap::read(depth_file)?;
    let state = PredictionState {
        consolidated,
        velocity_carry: trace.velocity_at_frame(start, config.fps)?,
        frame_index: start,
    };

    let fields_dir = config.out.join(layout::PREDICT_FIELDS_DIR);
    create_dir(&fields_dir)?;
    let mut summary = PredictSummary {
        psnr: Vec::new(),
        multiplications: Vec::new(),
    };
    let mut stats_csv = String::from(
        "frame,prediction_multiplications,smoothing_search_points,smoothing_multiplications,total_multiplications,depth_upkeep_multiplications\n",
    );
    run_prediction(&frames, &trace, state, config, |frame, field, stats, db| {
        field.write_csv(&fields_dir.join(layout::field_name(frame)))?;
        let _ = writeln!(
            stats_csv,
            "{frame},{},{},{},{},{}",
            stats.prediction_multiplications,
            stats.smoothing.search_points,
            stats.smoothing.multiplications,
            stats.total_multiplications(),
            stats.depth_upkeep_multiplications
        );
        summary.psnr.push((frame, db));
        summary.multiplications.push(stats.total_multiplications());
        Ok(())
    })?;
    write_text(&config.out.join(layout::PREDICT_STATS_FILE), &stats_csv)?;
    write_text(&config.out.join(layout::PREDICT_PSNR_FILE), &psnr_csv(&summary.psnr))?;
    Ok(summary)
}

/// Steps the prediction phase through the remaining frames, reporting each
/// frame's field, statistics and compensated PSNR.
fn run_prediction(
    frames: &[Frame],
    trace: &SensorTrace,
    mut state: PredictionState,
    config: &PipelineConfig,
    mut sink: impl FnMut(usize, &crate::blockmatch::MotionField, &crate::predictor::PredictionStepStats, f64) -> Result<()>,
) -> Result<PredictionState> {
    let intrinsics = config.intrinsics()?;
    let params = config.prediction_params();
    while state.frame_index + 1 < frames.len() {
        let (reference, current) = (&frames[state.frame_index], &frames[state.frame_index + 1]);
        let (field, next, stats) = predict_step(&state, reference, current, trace, intrinsics, config.fps, &params)?;
        let db = psnr(&motion_compensate(reference, &field)?, current)?;
        sink(stats.frame, &field, &stats, db)?;
        state = next;
    }
    Ok(state)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchFrame {
    pub frame: usize,
    pub train_psnr: f64,
    pub predict_psnr: f64,
    pub train_multiplications: u64,
    pub predict_multiplications: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchSummary {
    pub frames: Vec<BenchFrame>,
    pub valid_depth_blocks: usize,
}

impl BenchSummary {
    pub fn mean_train_psnr(&self) -> f64 {
        mean(self.frames.iter().map(|f| f.train_psnr))
    }

    pub fn mean_predict_psnr(&self) -> f64 {
        mean(self.frames.iter().map(|f| f.predict_psnr))
    }

    pub fn mean_train_multiplications(&self) -> f64 {
        mean(self.frames.iter().map(|f| f.train_multiplications as f64))
    }

    pub fn mean_predict_multiplications(&self) -> f64 {
        mean(self.frames.iter().map(|f| f.predict_multiplications as f64))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,train_psnr_db,predict_psnr_db,train_multiplications,predict_multiplications\n");
        for f in &self.frames {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                f.frame,
                format_db(f.train_psnr),
                format_db(f.predict_psnr),
                f.train_multiplications,
                f.predict_multiplications
            );
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let (t, p) = (self.mean_train_psnr(), self.mean_predict_psnr());
        let (tm, pm) = (self.mean_train_multiplications(), self.mean_predict_multiplications());
        let mut out = String::new();
        let _ = writeln!(out, "predicted_frames = {}", self.frames.len());
        let _ = writeln!(out, "valid_depth_blocks = {}", self.valid_depth_blocks);
        let _ = writeln!(out, "mean_train_psnr_db = {}", format_db(t));
        let _ = writeln!(out, "mean_predict_psnr_db = {}", format_db(p));
        let _ = writeln!(out, "psnr_difference_db = {}", format_db(p - t));
        let _ = writeln!(out, "mean_train_multiplications = {tm:.1}");
        let _ = writeln!(out, "mean_predict_multiplications = {pm:.1}");
        let _ = writeln!(out, "reduction_factor = {:.6}", tm / pm);
        out
    }
}

/// Trains on the first frames, predicts the rest, and runs the training-phase
/// search on the predicted frames as the quality and cost reference.
pub fn cmd_bench(config: &PipelineConfig) -> Result<BenchSummary> {
    let (frames, trace) = load_inputs(config)?;
    let training = training_slice(&frames, config)?;
    let intrinsics = config.intrinsics()?;
    let trained = train(training, &trace, intrinsics, config.fps, &config.training_params())?;
    let depth_per_pair = trained.stats.first().map_or(0, |s| s.depth_multiplications);

    let state = PredictionState {
        consolidated: trained.consolidated.clone(),
        velocity_carry: trained.exit_velocity,
        frame_index: training.len() - 1,
    };
    let options = config.match_options();
    let mut rows = Vec::new();
    run_prediction(&frames, &trace, state, config, |frame, _, stats, predict_psnr| {
        let (reference, current) = (&frames[frame - 1], &frames[frame]);
        let (field, search) = coarse_to_fine(reference, current, config.p_large, config.p_small, options)?;
        rows.push(BenchFrame {
            frame,
            train_psnr: psnr(&motion_compensate(reference, &field)?, current)?,
            predict_psnr,
            train_multiplications: search.multiplications() + depth_per_pair,
            predict_multiplications: stats.total_multiplications(),
        });
        Ok(())
    })?;

    let summary = BenchSummary {
        frames: rows,
        valid_depth_blocks: trained.consolidated.valid_blocks(),
    };
    create_dir(&config.out)?;
    trained.consolidated.write(&config.out.join(layout::DEPTH_FILE))?;
    write_text(&config.out.join(layout::BENCH_FILE), &summary.to_csv())?;
    write_text(&config.out.join(layout::BENCH_SUMMARY_FILE), &summary.summary_text())?;
    Ok(summary)
}

pub fn cmd_complexity(width: usize, height: usize, p_large: u32, p_small: u32, criterion: Criterion) -> Result<ComplexityReport> {
    complexity_report(width, height, p_large, p_small, criterion)
}

/// PSNR between same-index frames of two directories, as `frame,psnr_db`.
pub fn cmd_eval(reference_dir: &Path, test_dir: &Path) -> Result<Vec<(usize, f64)>> {
    let reference = read_frames(reference_dir)?;
    let test = read_frames(test_dir)?;
    if reference.len() != test.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} reference frames, {} test frames",
            reference.len(),
            test.len()
        )));
    }
    reference
        .iter()
        .zip(&test)
        .enumerate()
        .map(|(i, (a, b))| Ok((i, psnr(a, b)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setup() {
        let cfg = PipelineConfig::default();
        assert_eq!((cfg.p_large, cfg.p_small), (63, 15));
        assert_eq!(cfg.criterion, Criterion::Mse);
        assert_eq!(cfg.training_frames, 30);
        assert_eq!(cfg.min_displacement, 1.0);
        assert_eq!(cfg.fps, 60.0);
        assert_eq!(cfg.sensor_rate, 1000.0);
    }

    #[test]
    fn config_file_and_overrides() {
        let path = Path::new("/data/run/pipeline.conf");
        let mut cfg = PipelineConfig::default();
        cfg.apply_text("# comment\np_small = 7\nborder = replicate\nframes = sim/frames\nparallel = no\n", path)
            .unwrap();
        assert_eq!(cfg.p_small, 7);
        assert_eq!(cfg.border, BorderPolicy::Replicate);
        assert_eq!(cfg.frames, PathBuf::from("/data/run/sim/frames"));
        assert!(!cfg.parallel);
        cfg.set("p_small", "3").unwrap();
        assert_eq!(cfg.p_small, 3);

        let err = PipelineConfig::default().apply_text("p_large = 63\nwidth = 4\n", path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = PipelineConfig::default().apply_text("p_large 63\n", path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(PipelineConfig::default().set("criterion", "sad").is_err());
    }

    #[test]
    fn canonical_text_roundtrips() {
        let mut cfg = PipelineConfig::default();
        cfg.set("criterion", "mad").unwrap();
        cfg.set("focal_length", "812.5").unwrap();
        cfg.set("early_exit", "true").unwrap();
        let mut back = PipelineConfig::default();
        back.apply_text(&cfg.to_text(), Path::new("x.conf")).unwrap();
        assert_eq!(back, cfg);
        for key in PipelineConfig::KEYS {
            assert!(cfg.to_text().contains(&format!("{key} = ")));
        }
    }
}
