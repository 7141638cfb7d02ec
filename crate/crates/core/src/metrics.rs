//! Motion-compensated prediction quality and multiplication accounting.

use std::fmt::Write as _;

use crate::blockmatch::{tss_search_points, Criterion, MotionField, LARGE_BLOCK, SMALL_BLOCK};
use crate::depthmap::DepthMap;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::PixelDisplacement;

/// Builds the prediction of the current frame from `reference`: each block
/// copies the reference content its vector points back to, with reads
/// clamped at the frame border.
pub fn motion_compensate(reference: &Frame, mvs: &MotionField) -> Result<Frame> {
    let bs = mvs.block_size();
    if bs == 0 || mvs.cols() * bs != reference.width() || mvs.rows() * bs != reference.height() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{}@{} field for a {}x{} frame",
            mvs.cols(),
            mvs.rows(),
            bs,
            reference.width(),
            reference.height()
        )));
    }
    Frame::from_fn(reference.width(), reference.height(), |x, y| {
        let v = mvs.get(x / bs, y / bs);
        reference.get_clamped(x as isize - v.dp_h as isize, y as isize - v.dp_v as isize)
    })
}

pub fn mse(a: &Frame, b: &Frame) -> Result<f64> {
    a.same_shape(b)?;
    let sum: u64 = a
        .luma()
        .iter()
        .zip(b.luma())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / a.luma().len() as f64)
}

/// Peak signal-to-noise ratio in dB for 8-bit samples; `f64::INFINITY` for
/// identical frames.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    let mse = mse(a, b)?;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    })
}

pub fn format_db(db: f64) -> String {
    if db.is_infinite() {
        "inf".to_string()
    } else {
        format!("{db:.6}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Training,
    Prediction,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Training => "training",
            Phase::Prediction => "prediction",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageCost {
    pub phase: Phase,
    pub stage: &'static str,
    pub multiplications: u64,
}

pub const STAGE_LARGE_SEARCH: &str = "large_blocks_64x64";
pub const STAGE_SMALL_SEARCH: &str = "small_blocks_4x4";
pub const STAGE_DEPTH_MAP: &str = "depth_map_generation";
pub const STAGE_PREDICTION: &str = "motion_vector_prediction";

/// Multiplications needed per frame by each pipeline stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComplexityReport {
    pub width: usize,
    pub height: usize,
    pub p_large: u32,
    pub p_small: u32,
    pub stages: Vec<StageCost>,
}

impl ComplexityReport {
    pub fn total(&self, phase: Phase) -> u64 {
        self.stages.iter().filter(|s| s.phase == phase).map(|s| s.multiplications).sum()
    }

    pub fn stage(&self, phase: Phase, stage: &str) -> Option<u64> {
        self.stages
            .iter()
            .find(|s| s.phase == phase && s.stage == stage)
            .map(|s| s.multiplications)
    }

    pub fn reduction_factor(&self) -> f64 {
        self.total(Phase::Training) as f64 / self.total(Phase::Prediction) as f64
    }

    /// `phase,stage,multiplications` rows, then one `total` row per phase.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("phase,stage,multiplications\n");
        for s in &self.stages {
            let _ = writeln!(out, "{},{},{}", s.phase.name(), s.stage, s.multiplications);
        }
        for phase in [Phase::Training, Phase::Prediction] {
            let _ = writeln!(out, "{},total,{}", phase.name(), self.total(phase));
        }
        out
    }
}

/// Analytic per-frame multiplication counts for the 64×64 + 4×4 pipeline.
///
/// A search stage costs search points per block × pixels per block × blocks;
/// depth generation and vector prediction cost one multiplication per 4×4
/// block. Only the MSE criterion multiplies.
pub fn complexity_report(width: usize, height: usize, p_large: u32, p_small: u32, criterion: Criterion) -> Result<ComplexityReport> {
    if criterion != Criterion::Mse {
        return Err(Error::UnsupportedCriterion);
    }
    let pixels = (width * height) as u64;
    let large_area = (LARGE_BLOCK * LARGE_BLOCK) as u64;
    let small_area = (SMALL_BLOCK * SMALL_BLOCK) as u64;
    if pixels == 0 || !pixels.is_multiple_of(large_area) || !pixels.is_multiple_of(small_area) {
        return Err(Error::InvalidDimensions {
            width,
            height,
            reason: "pixel count must be a positive multiple of 64x64",
        });
    }
    let sp_large = tss_search_points(p_large)? as u64;
    let sp_small = tss_search_points(p_small)? as u64;
    let large_blocks = pixels / large_area;
    let small_blocks = pixels / small_area;
    let large = sp_large * large_area * large_blocks;
    let small = sp_small * small_area * small_blocks;
    let stages = vec![
        StageCost {
            phase: Phase::Training,
            stage: STAGE_LARGE_SEARCH,
            multiplications: large,
        },
        StageCost {
            phase: Phase::Training,
            stage: STAGE_SMALL_SEARCH,
            multiplications: small,
        },
        StageCost {
            phase: Phase::Training,
            stage: STAGE_DEPTH_MAP,
            multiplications: small_blocks,
        },
        StageCost {
            phase: Phase::Prediction,
            stage: STAGE_PREDICTION,
            multiplications: small_blocks,
        },
        StageCost {
            phase: Phase::Prediction,
            stage: STAGE_SMALL_SEARCH,
            multiplications: small,
        },
    ];
    Ok(ComplexityReport {
        width,
        height,
        p_large,
        p_small,
        stages,
    })
}

/// Share of blocks whose estimated depth is within a relative tolerance of
/// the truth, among blocks that move at least one pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthAccuracy {
    pub eligible: usize,
    pub within: usize,
}

impl DepthAccuracy {
    pub fn fraction(&self) -> f64 {
        if self.eligible == 0 {
            0.0
        } else {
            self.within as f64 / self.eligible as f64
        }
    }
}

/// `parallax` is the true per-block displacement that made each block
/// eligible; invalid estimates count as misses.
pub fn depth_accuracy(estimate: &DepthMap, truth: &DepthMap, parallax: &[PixelDisplacement], tolerance: f64) -> Result<DepthAccuracy> {
    if (estimate.block_size(), estimate.cols(), estimate.rows()) != (truth.block_size(), truth.cols(), truth.rows())
        || parallax.len() != truth.len()
    {
        return Err(Error::ShapeMismatch(format!(
            "estimate {}x{}, truth {}x{}, {} displacements",
            estimate.cols(),
            estimate.rows(),
            truth.cols(),
            truth.rows(),
            parallax.len()
        )));
    }
    let mut acc = DepthAccuracy { eligible: 0, within: 0 };
    for ((est, gt), dp) in estimate.iter().zip(truth.iter()).zip(parallax) {
        let Some(gt) = gt else { continue };
        if dp.magnitude() < 1.0 {
            continue;
        }
        acc.eligible += 1;
        if est.is_some_and(|z| ((z - gt) / gt).abs() <= tolerance) {
            acc.within += 1;
        }
    }
    Ok(acc)
}

/// `frame,psnr_db` series.
pub fn psnr_csv(series: &[(usize, f64)]) -> String {
    let mut out = String::from("frame,psnr_db\n");
    for (frame, db) in series {
        let _ = writeln!(out, "{frame},{}", format_db(*db));
    }
    out
}
