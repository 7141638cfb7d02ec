//! Training phase: per-block depth from block-matching vectors and sensor
//! translation, registered and averaged across frames.

use std::path::Path;

use crate::blockmatch::{coarse_to_fine, CoarseToFineStats, MatchOptions, MotionField, SMALL_BLOCK};
use crate::error::{Error, Result};
use crate::frame::{write_pgm, Frame};
use crate::geometry::{depth_from_mv, CameraIntrinsics, DEFAULT_MIN_DISPLACEMENT_PX};
use crate::sensor::{CameraMotion, SensorTrace, Velocity};

pub const DEFAULT_TRAINING_FRAMES: usize = 30;

/// Depth from a single frame pair.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    block_size: usize,
    cols: usize,
    rows: usize,
    depth: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    pub fn invalid(block_size: usize, cols: usize, rows: usize) -> Self {
        Self {
            block_size,
            cols,
            rows,
            depth: vec![0.0; cols * rows],
            valid: vec![false; cols * rows],
        }
    }

    /// Builds a map from raw depths; non-positive or non-finite entries are invalid.
    pub fn from_depths(block_size: usize, cols: usize, rows: usize, depths: Vec<f64>) -> Result<Self> {
        if depths.len() != cols * rows {
            return Err(Error::ShapeMismatch(format!("{} depths for a {cols}x{rows} grid", depths.len())));
        }
        let valid: Vec<bool> = depths.iter().map(|z| z.is_finite() && *z > 0.0).collect();
        let depth = depths.iter().zip(&valid).map(|(z, ok)| if *ok { *z } else { 0.0 }).collect();
        Ok(Self {
            block_size,
            cols,
            rows,
            depth,
            valid,
        })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn len(&self) -> usize {
        self.depth.len()
    }
    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        let i = row * self.cols + col;
        self.valid[i].then_some(self.depth[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.depth.iter().zip(&self.valid).map(|(z, ok)| ok.then_some(*z))
    }
}

/// Running per-block average of registered instantaneous depth maps.
///
/// A block with `sample_count == 0` is invalid.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsolidatedDepthMap {
    block_size: usize,
    cols: usize,
    rows: usize,
    depth: Vec<f64>,
    count: Vec<u32>,
}

impl ConsolidatedDepthMap {
    pub fn invalid(block_size: usize, cols: usize, rows: usize) -> Self {
        Self {
            block_size,
            cols,
            rows,
            depth: vec![0.0; cols * rows],
            count: vec![0; cols * rows],
        }
    }

    /// First-frame seeding: the instantaneous map with one sample per valid block.
    pub fn from_instantaneous(inst: &DepthMap) -> Self {
        Self {
            block_size: inst.block_size,
            cols: inst.cols,
            rows: inst.rows,
            depth: inst.depth.clone(),
            count: inst.valid.iter().map(|&v| v as u32).collect(),
        }
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn len(&self) -> usize {
        self.depth.len()
    }
    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        let i = row * self.cols + col;
        (self.count[i] > 0).then_some(self.depth[i])
    }

    pub fn sample_count(&self, col: usize, row: usize) -> u32 {
        self.count[row * self.cols + col]
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.depth.iter().zip(&self.count).map(|(z, &n)| (n > 0).then_some(*z))
    }

    pub fn counts(&self) -> &[u32] {
        &self.count
    }

    pub fn valid_blocks(&self) -> usize {
        self.count.iter().filter(|&&n| n > 0).count()
    }

    pub fn to_depth_map(&self) -> DepthMap {
        DepthMap {
            block_size: self.block_size,
            cols: self.cols,
            rows: self.rows,
            depth: self.depth.clone(),
            valid: self.count.iter().map(|&n| n > 0).collect(),
        }
    }

    fn grid_label(&self) -> String {
        format!("{}x{}@{}", self.cols, self.rows, self.block_size)
    }

    pub fn check_grid(&self, block_size: usize, cols: usize, rows: usize) -> Result<()> {
        if self.block_size == block_size && self.cols == cols && self.rows == rows {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected: format!("{cols}x{rows}@{block_size}"),
                got: self.grid_label(),
            })
        }
    }
}

/// Depth of every block from its vector and the camera translation.
///
/// The axis with the larger translation is inverted (horizontal on ties).
/// Blocks whose displacement is too small or points against the translation
/// are left invalid.
pub fn instantaneous_depth(
    mvs: &MotionField,
    motion: &CameraMotion,
    intrinsics: CameraIntrinsics,
    min_displacement: f64,
) -> DepthMap {
    let use_h = motion.d_h.abs() >= motion.d_v.abs();
    let d = if use_h { motion.d_h } else { motion.d_v };
    let mut map = DepthMap::invalid(mvs.block_size(), mvs.cols(), mvs.rows());
    for (i, v) in mvs.vectors().iter().enumerate() {
        let dp = if use_h { v.dp_h } else { v.dp_v } as f64;
        if let Ok(z) = depth_from_mv(intrinsics, d, dp, min_displacement) {
            map.depth[i] = z;
            map.valid[i] = true;
        }
    }
    map
}

#[inline]
fn blocks_moved(dp: i32, block_size: usize) -> i64 {
    // f64::round rounds half away from zero
    (dp as f64 / block_size as f64).round() as i64
}

/// Moves each block's entry by its vector, rounded to whole blocks.
///
/// When several entries land on one block the nearer surface (smaller depth)
/// is kept; blocks nothing lands on become invalid.
pub fn shift_depth(prev: &ConsolidatedDepthMap, mvs: &MotionField) -> Result<ConsolidatedDepthMap> {
    if !mvs.same_grid(prev.block_size, prev.cols, prev.rows) {
        return Err(Error::GridMismatch {
            expected: prev.grid_label(),
            got: format!("{}x{}@{}", mvs.cols(), mvs.rows(), mvs.block_size()),
        });
    }
    let mut out = ConsolidatedDepthMap::invalid(prev.block_size, prev.cols, prev.rows);
    for r in 0..prev.rows {
        for c in 0..prev.cols {
            let i = r * prev.cols + c;
            if prev.count[i] == 0 {
                continue;
            }
            let v = mvs.get(c, r);
            let dc = c as i64 + blocks_moved(v.dp_h, prev.block_size);
            let dr = r as i64 + blocks_moved(v.dp_v, prev.block_size);
            if dc < 0 || dr < 0 || dc >= prev.cols as i64 || dr >= prev.rows as i64 {
                continue;
            }
            let j = dr as usize * prev.cols + dc as usize;
            if out.count[j] == 0 || prev.depth[i] < out.depth[j] {
                out.depth[j] = prev.depth[i];
                out.count[j] = prev.count[i];
            }
        }
    }
    Ok(out)
}

/// Folds an instantaneous map into a registered consolidated map.
pub fn merge_depth(shifted: &ConsolidatedDepthMap, inst: &DepthMap) -> Result<ConsolidatedDepthMap> {
    if shifted.block_size != inst.block_size || shifted.cols != inst.cols || shifted.rows != inst.rows {
        return Err(Error::GridMismatch {
            expected: shifted.grid_label(),
            got: format!("{}x{}@{}", inst.cols, inst.rows, inst.block_size),
        });
    }
    let mut out = shifted.clone();
    for i in 0..out.depth.len() {
        if !inst.valid[i] {
            continue;
        }
        let n = out.count[i];
        if n == 0 {
            out.depth[i] = inst.depth[i];
            out.count[i] = 1;
        } else {
            out.depth[i] = (n as f64 * out.depth[i] + inst.depth[i]) / (n as f64 + 1.0);
            out.count[i] = n.saturating_add(1);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingParams {
    pub p_large: u32,
    pub p_small: u32,
    pub min_displacement: f64,
    pub options: MatchOptions,
}

impl Default for TrainingParams {
    fn default() -> Self {
        Self {
            p_large: crate::blockmatch::DEFAULT_P_LARGE,
            p_small: crate::blockmatch::DEFAULT_P_SMALL,
            min_displacement: DEFAULT_MIN_DISPLACEMENT_PX,
            options: MatchOptions::default(),
        }
    }
}

/// Instrumentation for one training frame pair.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingStepStats {
    /// Index of the current (later) frame of the pair.
    pub frame: usize,
    pub search: CoarseToFineStats,
    /// One depth evaluation per 4×4 block.
    pub depth_multiplications: u64,
    pub motion: CameraMotion,
}

impl TrainingStepStats {
    pub fn total_multiplications(&self) -> u64 {
        self.search.multiplications() + self.depth_multiplications
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingOutput {
    pub consolidated: ConsolidatedDepthMap,
    /// Vectors from frame `k` to `k + 1`, on the grid of frame `k + 1`.
    pub fields: Vec<MotionField>,
    pub stats: Vec<TrainingStepStats>,
    /// Velocity at the last training frame, for the prediction phase.
    pub exit_velocity: Velocity,
}

/// Runs the training phase over `frames`, whose first frame starts at t=0 of
/// `trace`.
pub fn train(
    frames: &[Frame],
    trace: &SensorTrace,
    intrinsics: CameraIntrinsics,
    fps: f64,
    params: &TrainingParams,
) -> Result<TrainingOutput> {
    if frames.len() < 2 {
        return Err(Error::TooFewFrames {
            needed: 2,
            got: frames.len(),
        });
    }
    let mut carry = Velocity::default();
    let mut consolidated: Option<ConsolidatedDepthMap> = None;
    let mut fields = Vec::with_capacity(frames.len() - 1);
    let mut stats = Vec::with_capacity(frames.len() - 1);
    for (k, pair) in frames.windows(2).enumerate() {
        let (mvs, search) = coarse_to_fine(&pair[0], &pair[1], params.p_large, params.p_small, params.options)?;
        let motion = trace.motion_for_frame(k, fps, &mut carry)?;
        let inst = instantaneous_depth(&mvs, &motion, intrinsics, params.min_displacement);
        consolidated = Some(match consolidated {
            None => ConsolidatedDepthMap::from_instantaneous(&inst),
            Some(prev) => merge_depth(&shift_depth(&prev, &mvs)?, &inst)?,
        });
        stats.push(TrainingStepStats {
            frame: k + 1,
            search,
            depth_multiplications: inst.len() as u64,
            motion,
        });
        fields.push(mvs);
    }
    Ok(TrainingOutput {
        consolidated: consolidated.expect("at least one frame pair"),
        fields,
        stats,
        exit_velocity: carry,
    })
}

const DMAP_MAGIC: &str = "DMAP";

/// `DMAP <cols> <rows> <block_size>\n` followed by row-major little-endian
/// f32 depths; non-positive values mark invalid blocks.
pub fn encode_dmap(block_size: usize, cols: usize, rows: usize, depths: impl Iterator<Item = Option<f64>>) -> Vec<u8> {
    let mut out = format!("{DMAP_MAGIC} {cols} {rows} {block_size}\n").into_bytes();
    for z in depths {
        out.extend_from_slice(&(z.unwrap_or(0.0) as f32).to_le_bytes());
    }
    out
}

pub fn decode_dmap(bytes: &[u8], path: &Path) -> Result<DepthMap> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(path, "missing DMAP header"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::format(path, "non-text header"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != DMAP_MAGIC {
        return Err(Error::parse(path, 1, "expected `DMAP <cols> <rows> <block_size>`"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|e| Error::parse(path, 1, e.to_string()));
    let (cols, rows, block_size) = (num(parts[1])?, num(parts[2])?, num(parts[3])?);
    let body = &bytes[nl + 1..];
    if body.len() != cols * rows * 4 {
        return Err(Error::format(
            path,
            format!("expected {} bytes of depth data, found {}", cols * rows * 4, body.len()),
        ));
    }
    let depths = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    DepthMap::from_depths(block_size, cols, rows, depths)
}

pub fn write_dmap(path: &Path, map: &DepthMap) -> Result<()> {
    let bytes = encode_dmap(map.block_size, map.cols, map.rows, map.iter());
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_dmap(path: &Path) -> Result<DepthMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dmap(&bytes, path)
}

impl ConsolidatedDepthMap {
    pub fn write(&self, path: &Path) -> Result<()> {
        write_dmap(path, &self.to_depth_map())
    }

    /// Loads a depth file; each valid block carries one sample.
    pub fn read(path: &Path) -> Result<Self> {
        Ok(Self::from_instantaneous(&read_dmap(path)?))
    }
}

/// Gray rendering at block resolution scaled up to pixels: nearest valid
/// depth is 255, farthest 0, invalid 0.
pub fn visualize(map: &DepthMap) -> (usize, usize, Vec<u8>) {
    let valid: Vec<f64> = map.iter().flatten().collect();
    let near = valid.iter().copied().fold(f64::INFINITY, f64::min);
    let far = valid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bs = map.block_size.max(1);
    let (w, h) = (map.cols * bs, map.rows * bs);
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            if let Some(z) = map.get(x / bs, y / bs) {
                let t = if far > near { (far - z) / (far - near) } else { 1.0 };
                out[y * w + x] = (255.0 * t).round() as u8;
            }
        }
    }
    (w, h, out)
}

pub fn write_visualization(path: &Path, map: &DepthMap) -> Result<()> {
    let (w, h, data) = visualize(map);
    write_pgm(path, w, h, &data)
}

/// Grid of 4×4 blocks covering `frame`.
pub fn depth_grid(frame: &Frame) -> (usize, usize) {
    (frame.width() / SMALL_BLOCK, frame.height() / SMALL_BLOCK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockmatch::MotionVector;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(1000.0).unwrap()
    }

    fn motion(d_h: f64, d_v: f64) -> CameraMotion {
        CameraMotion {
            d_h,
            d_v,
            ..Default::default()
        }
    }

    fn consolidated(cols: usize, rows: usize, entries: &[(usize, usize, f64, u32)]) -> ConsolidatedDepthMap {
        let mut m = ConsolidatedDepthMap::invalid(4, cols, rows);
        for &(c, r, z, n) in entries {
            m.depth[r * cols + c] = z;
            m.count[r * cols + c] = n;
        }
        m
    }

    #[test]
    fn instantaneous_depth_inverts_parallax() {
        let field = MotionField::uniform(4, 2, 1, MotionVector::new(10, 0));
        let map = instantaneous_depth(&field, &motion(0.1, 0.0), cam(), 1.0);
        assert_eq!(map.get(0, 0), Some(10.0));
        assert_eq!(map.get(1, 0), Some(10.0));
    }

    #[test]
    fn instantaneous_depth_picks_larger_baseline() {
        let field = MotionField::uniform(4, 1, 1, MotionVector::new(1, 8));
        let map = instantaneous_depth(&field, &motion(0.01, 0.04), cam(), 1.0);
        assert_eq!(map.get(0, 0), Some(5.0));
    }

    #[test]
    fn no_translation_means_no_depth() {
        let field = MotionField::uniform(4, 3, 2, MotionVector::new(3, 1));
        let map = instantaneous_depth(&field, &motion(0.0, 0.0), cam(), 1.0);
        assert!(map.iter().all(|z| z.is_none()));
    }

    #[test]
    fn degenerate_and_opposing_vectors_are_invalid() {
        let field = MotionField::from_vectors(
            4,
            3,
            1,
            vec![MotionVector::new(0, 0), MotionVector::new(-4, 0), MotionVector::new(4, 0)],
        )
        .unwrap();
        let map = instantaneous_depth(&field, &motion(0.02, 0.0), cam(), 1.0);
        assert_eq!(map.iter().collect::<Vec<_>>(), vec![None, None, Some(5.0)]);
    }

    #[test]
    fn zero_shift_is_identity() {
        let m = consolidated(3, 2, &[(0, 0, 4.0, 2), (2, 1, 9.5, 1)]);
        let out = shift_depth(&m, &MotionField::zeros(4, 3, 2)).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn one_block_translation() {
        let m = consolidated(3, 1, &[(0, 0, 4.0, 2), (1, 0, 5.0, 1), (2, 0, 6.0, 3)]);
        let out = shift_depth(&m, &MotionField::uniform(4, 3, 1, MotionVector::new(4, 0))).unwrap();
        assert_eq!(out.iter().collect::<Vec<_>>(), vec![None, Some(4.0), Some(5.0)]);
        assert_eq!(out.counts(), &[0, 2, 1]);
    }

    #[test]
    fn collision_keeps_nearer_surface() {
        // block 0 moves one block right onto block 1, which stays put
        let m = consolidated(3, 1, &[(0, 0, 3.0, 1), (1, 0, 8.0, 5)]);
        let field = MotionField::from_vectors(4, 3, 1, vec![MotionVector::new(4, 0), MotionVector::ZERO, MotionVector::ZERO]).unwrap();
        let out = shift_depth(&m, &field).unwrap();
        assert_eq!(out.get(1, 0), Some(3.0));
        assert_eq!(out.sample_count(1, 0), 1);
        assert_eq!(out.get(0, 0), None);

        // and the same with the far block arriving second in raster order
        let m = consolidated(3, 1, &[(1, 0, 3.0, 1), (2, 0, 8.0, 5)]);
        let field = MotionField::from_vectors(4, 3, 1, vec![MotionVector::ZERO, MotionVector::ZERO, MotionVector::new(-4, 0)]).unwrap();
        assert_eq!(shift_depth(&m, &field).unwrap().get(1, 0), Some(3.0));
    }

    #[test]
    fn sub_block_vectors_round_half_away() {
        let m = consolidated(4, 1, &[(1, 0, 2.0, 1)]);
        let right = shift_depth(&m, &MotionField::uniform(4, 4, 1, MotionVector::new(2, 0))).unwrap();
        assert_eq!(right.get(2, 0), Some(2.0));
        let left = shift_depth(&m, &MotionField::uniform(4, 4, 1, MotionVector::new(-2, 0))).unwrap();
        assert_eq!(left.get(0, 0), Some(2.0));
        let stay = shift_depth(&m, &MotionField::uniform(4, 4, 1, MotionVector::new(1, 1))).unwrap();
        assert_eq!(stay.get(1, 0), Some(2.0));
    }

    #[test]
    fn merge_rules() {
        let inst = DepthMap::from_depths(4, 2, 1, vec![7.0, 0.0]).unwrap();
        let out = merge_depth(&ConsolidatedDepthMap::invalid(4, 2, 1), &inst).unwrap();
        assert_eq!(out, ConsolidatedDepthMap::from_instantaneous(&inst));
        assert_eq!(out.counts(), &[1, 0]);

        let shifted = consolidated(2, 1, &[(0, 0, 10.0, 3), (1, 0, 6.0, 2)]);
        let inst = DepthMap::from_depths(4, 2, 1, vec![14.0, -1.0]).unwrap();
        let out = merge_depth(&shifted, &inst).unwrap();
        assert_eq!(out.get(0, 0), Some(11.0));
        assert_eq!(out.sample_count(0, 0), 4);
        assert_eq!(out.get(1, 0), Some(6.0));
        assert_eq!(out.sample_count(1, 0), 2);
    }

    #[test]
    fn merging_identical_maps_keeps_depth() {
        let inst = DepthMap::from_depths(4, 3, 1, vec![2.5, 0.0, 40.0]).unwrap();
        let mut acc = ConsolidatedDepthMap::invalid(4, 3, 1);
        for _ in 0..5 {
            acc = merge_depth(&acc, &inst).unwrap();
        }
        assert_eq!(acc.get(0, 0), Some(2.5));
        assert_eq!(acc.get(2, 0), Some(40.0));
        assert_eq!(acc.counts(), &[5, 0, 5]);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let m = ConsolidatedDepthMap::invalid(4, 3, 2);
        assert!(matches!(shift_depth(&m, &MotionField::zeros(4, 2, 2)), Err(Error::GridMismatch { .. })));
        let inst = DepthMap::invalid(4, 3, 3);
        assert!(matches!(merge_depth(&m, &inst), Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn train_needs_two_frames() {
        let f = Frame::filled(64, 64, 0).unwrap();
        let trace = SensorTrace::default();
        let err = train(&[f], &trace, cam(), 60.0, &TrainingParams::default()).unwrap_err();
        assert!(matches!(err, Error::TooFewFrames { got: 1, .. }));
    }

    #[test]
    fn dmap_roundtrip_and_errors() {
        let map = DepthMap::from_depths(4, 3, 2, vec![1.5, 0.0, 20.0, 5.0, -3.0, 8.25]).unwrap();
        let p = Path::new("d.dmap");
        let bytes = encode_dmap(4, 3, 2, map.iter());
        assert!(bytes.starts_with(b"DMAP 3 2 4\n"));
        assert_eq!(decode_dmap(&bytes, p).unwrap(), map);
        assert!(decode_dmap(b"DMAP 3 2 4\n\0\0", p).is_err());
        assert!(matches!(decode_dmap(b"DEPTH 1 1 4\n\0\0\0\0", p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn visualization_maps_near_to_bright() {
        let map = DepthMap::from_depths(1, 3, 1, vec![2.0, 0.0, 10.0]).unwrap();
        assert_eq!(visualize(&map), (3, 1, vec![255, 0, 0]));
        let flat = DepthMap::from_depths(2, 1, 1, vec![3.0]).unwrap();
        assert_eq!(visualize(&flat).2, vec![255; 4]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn cmap() -> impl Strategy<Value = ConsolidatedDepthMap> {
            proptest::collection::vec((0.5..50.0f64, 0u32..5), 12).prop_map(|cells| {
                let mut m = ConsolidatedDepthMap::invalid(4, 4, 3);
                for (i, (z, n)) in cells.into_iter().enumerate() {
                    m.depth[i] = if n > 0 { z } else { 0.0 };
                    m.count[i] = n;
                }
                m
            })
        }

        fn field() -> impl Strategy<Value = MotionField> {
            proptest::collection::vec((-9i32..=9, -9i32..=9), 12).prop_map(|v| {
                MotionField::from_vectors(4, 4, 3, v.into_iter().map(|(h, v)| MotionVector::new(h, v)).collect()).unwrap()
            })
        }

        fn inst() -> impl Strategy<Value = DepthMap> {
            proptest::collection::vec(prop_oneof![Just(0.0), 0.5..50.0f64], 12)
                .prop_map(|d| DepthMap::from_depths(4, 4, 3, d).unwrap())
        }

        proptest! {
            #[test]
            fn merge_never_loses_samples(m in cmap(), i in inst()) {
                let out = merge_depth(&m, &i).unwrap();
                for (a, b) in m.counts().iter().zip(out.counts()) {
                    prop_assert!(b >= a);
                }
            }

            #[test]
            fn depths_stay_positive(m in cmap(), steps in proptest::collection::vec((field(), inst()), 1..6)) {
                let mut acc = m;
                for (f, i) in steps {
                    acc = merge_depth(&shift_depth(&acc, &f).unwrap(), &i).unwrap();
                    for (z, &n) in acc.depth.iter().zip(acc.counts()) {
                        prop_assert!(n == 0 || *z > 0.0);
                    }
                }
            }
        }
    }
}
