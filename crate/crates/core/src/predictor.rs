//! Prediction phase: vectors predicted from the consolidated depth map and
//! sensor translation, refined by a small-window search, with the depth map
//! kept registered and updated along the way.

use crate::blockmatch::{three_step_search, Algorithm, MatchOptions, MotionField, MotionVector, SearchConfig, SearchStats, SMALL_BLOCK};
use crate::depthmap::{instantaneous_depth, merge_depth, shift_depth, ConsolidatedDepthMap};
use crate::error::Result;
use crate::frame::Frame;
use crate::geometry::{CameraIntrinsics, DEFAULT_MIN_DISPLACEMENT_PX};
use crate::sensor::{CameraMotion, SensorTrace, Velocity};

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionState {
    pub consolidated: ConsolidatedDepthMap,
    pub velocity_carry: Velocity,
    /// Index of the frame the next step predicts from.
    pub frame_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionParams {
    pub p_small: u32,
    pub min_displacement: f64,
    pub options: MatchOptions,
}

impl Default for PredictionParams {
    fn default() -> Self {
        Self {
            p_small: crate::blockmatch::DEFAULT_P_SMALL,
            min_displacement: DEFAULT_MIN_DISPLACEMENT_PX,
            options: MatchOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionStepStats {
    /// Index of the current (later) frame of the pair.
    pub frame: usize,
    /// One parallax evaluation per 4×4 block.
    pub prediction_multiplications: u64,
    pub smoothing: SearchStats,
    /// Depth evaluations spent keeping the map up to date; not part of the
    /// per-frame prediction cost.
    pub depth_upkeep_multiplications: u64,
    pub motion: CameraMotion,
    pub predicted: MotionField,
}

impl PredictionStepStats {
    pub fn total_multiplications(&self) -> u64 {
        self.prediction_multiplications + self.smoothing.multiplications
    }
}

#[inline]
fn round_parallax(f: f64, d: f64, z: f64) -> i32 {
    (f * d / z).round() as i32
}

/// Parallax of every block with known depth; blocks without depth predict zero.
pub fn predict_mvs(consolidated: &ConsolidatedDepthMap, motion: &CameraMotion, intrinsics: CameraIntrinsics) -> MotionField {
    let f = intrinsics.focal_length_px();
    let vectors = consolidated
        .iter()
        .map(|z| match z {
            Some(z) => MotionVector::new(round_parallax(f, motion.d_h, z), round_parallax(f, motion.d_v, z)),
            None => MotionVector::ZERO,
        })
        .collect();
    MotionField::from_vectors(consolidated.block_size(), consolidated.cols(), consolidated.rows(), vectors)
        .expect("grid taken from the depth map")
}

/// Three-step search on 4×4 blocks centred on the predicted vectors.
pub fn smooth_mvs(
    predicted: &MotionField,
    reference: &Frame,
    current: &Frame,
    p_small: u32,
    options: MatchOptions,
) -> Result<(MotionField, SearchStats)> {
    let cfg = SearchConfig::new(Algorithm::ThreeStepSearch, SMALL_BLOCK, p_small)
        .with_options(options)
        .with_anchor(predicted.clone());
    three_step_search(reference, current, &cfg)
}

/// Predicts the vectors from `reference` (frame `state.frame_index`) to
/// `current`, then advances the state by one frame.
pub fn predict_step(
    state: &PredictionState,
    reference: &Frame,
    current: &Frame,
    trace: &SensorTrace,
    intrinsics: CameraIntrinsics,
    fps: f64,
    params: &PredictionParams,
) -> Result<(MotionField, PredictionState, PredictionStepStats)> {
    let (cols, rows) = (current.width() / SMALL_BLOCK, current.height() / SMALL_BLOCK);
    state.consolidated.check_grid(SMALL_BLOCK, cols, rows)?;

    let mut carry = state.velocity_carry;
    let motion = trace.motion_for_frame(state.frame_index, fps, &mut carry)?;
    let predicted = predict_mvs(&state.consolidated, &motion, intrinsics);
    let (smoothed, smoothing) = smooth_mvs(&predicted, reference, current, params.p_small, params.options)?;
    let inst = instantaneous_depth(&smoothed, &motion, intrinsics, params.min_displacement);
    let consolidated = merge_depth(&shift_depth(&state.consolidated, &smoothed)?, &inst)?;

    let stats = PredictionStepStats {
        frame: state.frame_index + 1,
        prediction_multiplications: predicted.vectors().len() as u64,
        smoothing,
        depth_upkeep_multiplications: inst.len() as u64,
        motion,
        predicted,
    };
    let next = PredictionState {
        consolidated,
        velocity_carry: carry,
        frame_index: state.frame_index + 1,
    };
    Ok((smoothed, next, stats))
}
