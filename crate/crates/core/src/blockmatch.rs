//! Block-matching motion estimation.
//!
//! A motion vector `v` attached to the block at `b` of the current frame says
//! the block's content came from `b - v` in the reference frame, i.e. `v` is
//! the displacement of the content between the two frames.
//!
//! Two searches are provided: the exhaustive full search, used as an
//! optimality oracle, and the three-step search used by the pipeline. Both
//! count evaluated search points and the multiplications spent on the cost
//! criterion so that complexity figures can be checked against a real run.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::frame::Frame;

pub const LARGE_BLOCK: usize = 64;
pub const SMALL_BLOCK: usize = 4;
pub const DEFAULT_P_LARGE: u32 = 63;
pub const DEFAULT_P_SMALL: u32 = 15;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Algorithm {
    FullSearch,
    #[default]
    ThreeStepSearch,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Criterion {
    /// Mean squared error; one multiplication per pixel.
    #[default]
    Mse,
    /// Mean absolute difference; no multiplications.
    Mad,
}

/// What happens to candidates whose reference block leaves the frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BorderPolicy {
    /// Candidate is not evaluated and not counted.
    #[default]
    Skip,
    /// Candidate is evaluated on edge-replicated samples, so every block
    /// evaluates the full search pattern.
    Replicate,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct MotionVector {
    pub dp_h: i32,
    pub dp_v: i32,
}

impl MotionVector {
    pub const ZERO: MotionVector = MotionVector { dp_h: 0, dp_v: 0 };

    pub const fn new(dp_h: i32, dp_v: i32) -> Self {
        Self { dp_h, dp_v }
    }

    #[inline]
    pub fn l1(self) -> u32 {
        self.dp_h.unsigned_abs() + self.dp_v.unsigned_abs()
    }
}

impl std::ops::Add for MotionVector {
    type Output = MotionVector;
    fn add(self, rhs: MotionVector) -> MotionVector {
        MotionVector::new(self.dp_h + rhs.dp_h, self.dp_v + rhs.dp_v)
    }
}

impl std::ops::Sub for MotionVector {
    type Output = MotionVector;
    fn sub(self, rhs: MotionVector) -> MotionVector {
        MotionVector::new(self.dp_h - rhs.dp_h, self.dp_v - rhs.dp_v)
    }
}

/// One integer vector per block, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MotionField {
    block_size: usize,
    cols: usize,
    rows: usize,
    vectors: Vec<MotionVector>,
}

impl MotionField {
    pub fn zeros(block_size: usize, cols: usize, rows: usize) -> Self {
        Self {
            block_size,
            cols,
            rows,
            vectors: vec![MotionVector::ZERO; cols * rows],
        }
    }

    pub fn for_frame(frame: &Frame, block_size: usize) -> Result<Self> {
        check_tiling(frame, block_size)?;
        Ok(Self::zeros(block_size, frame.width() / block_size, frame.height() / block_size))
    }

    pub fn from_vectors(block_size: usize, cols: usize, rows: usize, vectors: Vec<MotionVector>) -> Result<Self> {
        if vectors.len() != cols * rows || block_size == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} vectors for a {cols}x{rows} grid",
                vectors.len()
            )));
        }
        Ok(Self {
            block_size,
            cols,
            rows,
            vectors,
        })
    }

    pub fn uniform(block_size: usize, cols: usize, rows: usize, v: MotionVector) -> Self {
        Self {
            block_size,
            cols,
            rows,
            vectors: vec![v; cols * rows],
        }
    }

    #[inline]
    pub fn block_size(&self) -> usize {
        self.block_size
    }
    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }
    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }
    #[inline]
    pub fn vectors(&self) -> &[MotionVector] {
        &self.vectors
    }
    #[inline]
    pub fn get(&self, col: usize, row: usize) -> MotionVector {
        self.vectors[row * self.cols + col]
    }
    #[inline]
    pub fn set(&mut self, col: usize, row: usize, v: MotionVector) {
        self.vectors[row * self.cols + col] = v;
    }

    pub fn same_grid(&self, block_size: usize, cols: usize, rows: usize) -> bool {
        self.block_size == block_size && self.cols == cols && self.rows == rows
    }

    /// Copies each block's vector onto the finer `block_size` grid covering it.
    pub fn upsample(&self, block_size: usize) -> Result<Self> {
        if block_size == 0 || !self.block_size.is_multiple_of(block_size) {
            return Err(Error::ShapeMismatch(format!(
                "cannot refine {}px blocks into {block_size}px blocks",
                self.block_size
            )));
        }
        let k = self.block_size / block_size;
        let (cols, rows) = (self.cols * k, self.rows * k);
        let vectors = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (c, r)))
            .map(|(c, r)| self.get(c / k, r / k))
            .collect();
        Ok(Self {
            block_size,
            cols,
            rows,
            vectors,
        })
    }

    /// `row,col,dph,dpv` CSV dump.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,dph,dpv\n");
        for r in 0..self.rows {
            for c in 0..self.cols {
                let v = self.get(c, r);
                let _ = writeln!(out, "{r},{c},{},{}", v.dp_h, v.dp_v);
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn parse_csv(text: &str, block_size: usize, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "row,col,dph,dpv" => {}
            _ => return Err(Error::parse(path, 1, "expected header `row,col,dph,dpv`")),
        }
        let mut entries = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<i64> = line
                .split(',')
                .map(|s| s.trim().parse::<i64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            if f.len() != 4 || f[0] < 0 || f[1] < 0 {
                return Err(Error::parse(path, i + 1, "expected row,col,dph,dpv"));
            }
            entries.push((f[0] as usize, f[1] as usize, MotionVector::new(f[2] as i32, f[3] as i32)));
        }
        let rows = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
        let cols = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
        if entries.len() != rows * cols {
            return Err(Error::format(path, "motion field is not a complete grid"));
        }
        let mut field = Self::zeros(block_size, cols, rows);
        for (r, c, v) in entries {
            field.set(c, r, v);
        }
        Ok(field)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MatchOptions {
    pub criterion: Criterion,
    pub border: BorderPolicy,
    /// Stop a block's search at the first zero-cost candidate. Breaks the
    /// exact search-point accounting, so it is off by default.
    pub early_exit: bool,
    pub execution: Execution,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub algorithm: Algorithm,
    pub block_size: usize,
    pub search_param: u32,
    /// Per-block search centers; vectors are reported including the anchor.
    pub anchor: Option<MotionField>,
    pub options: MatchOptions,
}

impl SearchConfig {
    pub fn new(algorithm: Algorithm, block_size: usize, search_param: u32) -> Self {
        Self {
            algorithm,
            block_size,
            search_param,
            anchor: None,
            options: MatchOptions::default(),
        }
    }

    pub fn with_anchor(mut self, anchor: MotionField) -> Self {
        self.anchor = Some(anchor);
        self
    }

    pub fn with_options(mut self, options: MatchOptions) -> Self {
        self.options = options;
        self
    }
}

/// Per-search instrumentation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchStats {
    pub block_size: usize,
    /// Candidates evaluated, per block.
    pub points_per_block: Vec<u32>,
    /// Criterion value of the chosen vector, per block.
    pub block_cost: Vec<f64>,
    pub search_points: u64,
    pub multiplications: u64,
}

impl SearchStats {
    pub fn blocks(&self) -> usize {
        self.points_per_block.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockCost {
    pub cost: f64,
    pub multiplications: u64,
}

/// Criterion value between two equally sized blocks.
pub fn block_cost(criterion: Criterion, ref_block: &[u8], cur_block: &[u8]) -> Result<BlockCost> {
    if ref_block.len() != cur_block.len() || ref_block.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "blocks of {} and {} samples",
            ref_block.len(),
            cur_block.len()
        )));
    }
    let n = ref_block.len() as u64;
    let raw = raw_cost(criterion, ref_block.iter().copied().zip(cur_block.iter().copied()));
    Ok(BlockCost {
        cost: raw as f64 / n as f64,
        multiplications: multiplications_per_point(criterion, ref_block.len()),
    })
}

#[inline]
fn multiplications_per_point(criterion: Criterion, pixels: usize) -> u64 {
    match criterion {
        Criterion::Mse => pixels as u64,
        Criterion::Mad => 0,
    }
}

#[inline]
fn raw_cost(criterion: Criterion, pairs: impl Iterator<Item = (u8, u8)>) -> u64 {
    match criterion {
        Criterion::Mse => pairs
            .map(|(a, b)| {
                let d = a as i32 - b as i32;
                (d * d) as u64
            })
            .sum(),
        Criterion::Mad => pairs.map(|(a, b)| (a as i32 - b as i32).unsigned_abs() as u64).sum(),
    }
}

/// Search points the three-step search evaluates for an unclipped block.
pub fn tss_search_points(p: u32) -> Result<u32> {
    Ok(8 * tss_rounds(p)? + 1)
}

fn tss_rounds(p: u32) -> Result<u32> {
    if p == 0 || p == u32::MAX || !(p + 1).is_power_of_two() {
        return Err(Error::InvalidSearchParam(p));
    }
    Ok((p + 1).trailing_zeros())
}

fn check_tiling(frame: &Frame, block_size: usize) -> Result<()> {
    if block_size == 0 || !frame.width().is_multiple_of(block_size) || !frame.height().is_multiple_of(block_size) {
        return Err(Error::ShapeMismatch(format!(
            "{block_size}px blocks do not tile a {}x{} frame",
            frame.width(),
            frame.height()
        )));
    }
    Ok(())
}

// Raster order of the eight neighbours visited in each refinement round.
const NEIGHBOURS: [(i32, i32); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

struct BlockSearch<'a> {
    reference: &'a Frame,
    current: &'a Frame,
    x0: usize,
    y0: usize,
    size: usize,
    options: MatchOptions,
    center: MotionVector,
    best: Option<(u64, u32, MotionVector)>,
    points: u32,
}

impl<'a> BlockSearch<'a> {
    fn in_frame(&self, v: MotionVector) -> bool {
        let rx = self.x0 as i64 - v.dp_h as i64;
        let ry = self.y0 as i64 - v.dp_v as i64;
        rx >= 0
            && ry >= 0
            && rx + self.size as i64 <= self.reference.width() as i64
            && ry + self.size as i64 <= self.reference.height() as i64
    }

    fn cost(&self, v: MotionVector) -> u64 {
        let size = self.size;
        let rx = self.x0 as isize - v.dp_h as isize;
        let ry = self.y0 as isize - v.dp_v as isize;
        let crit = self.options.criterion;
        let mut total = 0;
        if self.in_frame(v) {
            let (rx, ry) = (rx as usize, ry as usize);
            for y in 0..size {
                let r = &self.reference.row(ry + y)[rx..rx + size];
                let c = &self.current.row(self.y0 + y)[self.x0..self.x0 + size];
                total += raw_cost(crit, r.iter().copied().zip(c.iter().copied()));
            }
        } else {
            for y in 0..size {
                let c = &self.current.row(self.y0 + y)[self.x0..self.x0 + size];
                let r = (0..size).map(|x| self.reference.get_clamped(rx + x as isize, ry + y as isize));
                total += raw_cost(crit, r.zip(c.iter().copied()));
            }
        }
        total
    }

    /// Evaluates `v` if admissible; returns true once the search may stop early.
    fn visit(&mut self, v: MotionVector) -> bool {
        if self.options.border == BorderPolicy::Skip && !self.in_frame(v) {
            return false;
        }
        let raw = self.cost(v);
        self.points += 1;
        let l1 = (v - self.center).l1();
        let better = match self.best {
            None => true,
            Some((c, d, _)) => raw < c || (raw == c && l1 < d),
        };
        if better {
            self.best = Some((raw, l1, v));
        }
        self.options.early_exit && raw == 0
    }
}

/// Moves an anchor so the anchored reference block lies inside the frame.
fn clamp_anchor(anchor: MotionVector, x0: usize, y0: usize, size: usize, frame: &Frame) -> MotionVector {
    let min_h = x0 as i64 + size as i64 - frame.width() as i64;
    let min_v = y0 as i64 + size as i64 - frame.height() as i64;
    MotionVector::new(
        (anchor.dp_h as i64).clamp(min_h, x0 as i64) as i32,
        (anchor.dp_v as i64).clamp(min_v, y0 as i64) as i32,
    )
}

fn search(reference: &Frame, current: &Frame, cfg: &SearchConfig) -> Result<(MotionField, SearchStats)> {
    reference.same_shape(current)?;
    check_tiling(current, cfg.block_size)?;
    let bs = cfg.block_size;
    let cols = current.width() / bs;
    let rows = current.height() / bs;
    if let Some(anchor) = &cfg.anchor {
        if !anchor.same_grid(bs, cols, rows) {
            return Err(Error::ShapeMismatch(format!(
                "anchor grid {}x{}@{} vs search grid {cols}x{rows}@{bs}",
                anchor.cols(),
                anchor.rows(),
                anchor.block_size()
            )));
        }
    }
    let p = cfg.search_param;
    let rounds = match cfg.algorithm {
        Algorithm::ThreeStepSearch => tss_rounds(p)?,
        Algorithm::FullSearch if p == 0 => return Err(Error::InvalidSearchParam(p)),
        Algorithm::FullSearch => 0,
    };
    let p = p as i32;
    let per_point = multiplications_per_point(cfg.options.criterion, bs * bs);

    let results = map_indexed(cols * rows, cfg.options.execution, |i| {
        let (c, r) = (i % cols, i / cols);
        let (x0, y0) = (c * bs, r * bs);
        let mut anchor = cfg.anchor.as_ref().map_or(MotionVector::ZERO, |a| a.get(c, r));
        if cfg.options.border == BorderPolicy::Skip {
            anchor = clamp_anchor(anchor, x0, y0, bs, reference);
        }
        let mut s = BlockSearch {
            reference,
            current,
            x0,
            y0,
            size: bs,
            options: cfg.options,
            center: anchor,
            best: None,
            points: 0,
        };
        match cfg.algorithm {
            Algorithm::FullSearch => {
                'outer: for dv in -p..=p {
                    for dh in -p..=p {
                        if s.visit(anchor + MotionVector::new(dh, dv)) {
                            break 'outer;
                        }
                    }
                }
            }
            Algorithm::ThreeStepSearch => {
                let mut stop = s.visit(anchor);
                let mut step = (p + 1) / 2;
                for _ in 0..rounds {
                    if stop {
                        break;
                    }
                    let origin = s.best.map_or(anchor, |b| b.2);
                    for (ox, oy) in NEIGHBOURS {
                        if s.visit(origin + MotionVector::new(ox * step, oy * step)) {
                            stop = true;
                            break;
                        }
                    }
                    step /= 2;
                }
            }
        }
        // the clamped anchor is always admissible, so `best` is set
        let (raw, _, v) = s.best.expect("search center is always evaluated");
        (v, s.points, raw as f64 / (bs * bs) as f64)
    });

    let mut field = MotionField::zeros(bs, cols, rows);
    let mut stats = SearchStats {
        block_size: bs,
        points_per_block: Vec::with_capacity(results.len()),
        block_cost: Vec::with_capacity(results.len()),
        search_points: 0,
        multiplications: 0,
    };
    for (i, (v, points, cost)) in results.into_iter().enumerate() {
        field.vectors[i] = v;
        stats.points_per_block.push(points);
        stats.block_cost.push(cost);
        stats.search_points += points as u64;
    }
    stats.multiplications = stats.search_points * per_point;
    Ok((field, stats))
}

/// Exhaustive search over `[-p, p]²` around each block's anchor.
///
/// Among equal-cost candidates the one closest (L1) to the anchor wins, then
/// the first in raster order.
pub fn full_search(reference: &Frame, current: &Frame, cfg: &SearchConfig) -> Result<(MotionField, SearchStats)> {
    let cfg = SearchConfig {
        algorithm: Algorithm::FullSearch,
        ..cfg.clone()
    };
    search(reference, current, &cfg)
}

/// Logarithmic search: the anchor, then `log2(p + 1)` rounds of eight
/// neighbours around the running best at step sizes `(p + 1) / 2, ..., 1`.
pub fn three_step_search(reference: &Frame, current: &Frame, cfg: &SearchConfig) -> Result<(MotionField, SearchStats)> {
    let cfg = SearchConfig {
        algorithm: Algorithm::ThreeStepSearch,
        ..cfg.clone()
    };
    search(reference, current, &cfg)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoarseToFineStats {
    pub large: SearchStats,
    pub small: SearchStats,
}

impl CoarseToFineStats {
    pub fn multiplications(&self) -> u64 {
        self.large.multiplications + self.small.multiplications
    }
}

/// Three-step search on 64×64 blocks, then on 4×4 blocks anchored at their
/// parent's vector. Returns the 4×4 field.
pub fn coarse_to_fine(
    reference: &Frame,
    current: &Frame,
    p_large: u32,
    p_small: u32,
    options: MatchOptions,
) -> Result<(MotionField, CoarseToFineStats)> {
    let coarse = SearchConfig::new(Algorithm::ThreeStepSearch, LARGE_BLOCK, p_large).with_options(options);
    let (large_field, large) = search(reference, current, &coarse)?;
    let fine = SearchConfig::new(Algorithm::ThreeStepSearch, SMALL_BLOCK, p_small)
        .with_options(options)
        .with_anchor(large_field.upsample(SMALL_BLOCK)?);
    let (field, small) = search(reference, current, &fine)?;
    Ok((field, CoarseToFineStats { large, small }))
}

/// Criterion value of each block of `current` under the given vectors.
pub fn field_costs(reference: &Frame, current: &Frame, field: &MotionField, options: MatchOptions) -> Result<Vec<f64>> {
    reference.same_shape(current)?;
    check_tiling(current, field.block_size())?;
    let bs = field.block_size();
    if field.cols() != current.width() / bs || field.rows() != current.height() / bs {
        return Err(Error::ShapeMismatch("field does not cover the frame".into()));
    }
    Ok(map_indexed(field.vectors().len(), options.execution, |i| {
        let (c, r) = (i % field.cols(), i / field.cols());
        let s = BlockSearch {
            reference,
            current,
            x0: c * bs,
            y0: r * bs,
            size: bs,
            options,
            center: MotionVector::ZERO,
            best: None,
            points: 0,
        };
        s.cost(field.get(c, r)) as f64 / (bs * bs) as f64
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn smooth_texture(w: usize, h: usize, seed: u64) -> Frame {
        Frame::new(w, h, crate::simulator::procedural_texture(w, h, seed)).unwrap()
    }

    // cur(x) = ref(x - shift) with replicated borders
    pub(crate) fn shifted(reference: &Frame, sh: i32, sv: i32) -> Frame {
        Frame::from_fn(reference.width(), reference.height(), |x, y| {
            reference.get_clamped(x as isize - sh as isize, y as isize - sv as isize)
        })
        .unwrap()
    }

    fn is_interior(c: usize, r: usize, bs: usize, p: u32, frame: &Frame) -> bool {
        let p = p as usize;
        let (x0, y0) = (c * bs, r * bs);
        x0 >= p && y0 >= p && x0 + bs + p <= frame.width() && y0 + bs + p <= frame.height()
    }

    #[test]
    fn block_cost_examples() {
        let a = [7u8; 16];
        let c = block_cost(Criterion::Mse, &a, &a).unwrap();
        assert_eq!((c.cost, c.multiplications), (0.0, 16));

        let b = [9u8; 16];
        assert_eq!(block_cost(Criterion::Mse, &a, &b).unwrap().cost, 4.0);
        let mad = block_cost(Criterion::Mad, &a, &b).unwrap();
        assert_eq!((mad.cost, mad.multiplications), (2.0, 0));

        assert!(matches!(block_cost(Criterion::Mse, &a, &b[..8]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn block_cost_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<u8> = (0..64).map(|_| rng.random()).collect();
        let b: Vec<u8> = (0..64).map(|_| rng.random()).collect();
        let mut sq = 0.0;
        let mut ab = 0.0;
        for y in 0..8 {
            for x in 0..8 {
                let d = a[y * 8 + x] as f64 - b[y * 8 + x] as f64;
                sq += d * d;
                ab += d.abs();
            }
        }
        assert_eq!(block_cost(Criterion::Mse, &a, &b).unwrap().cost, sq / 64.0);
        assert_eq!(block_cost(Criterion::Mad, &a, &b).unwrap().cost, ab / 64.0);
    }

    #[test]
    fn search_point_formula() {
        assert_eq!(tss_search_points(1).unwrap(), 9);
        assert_eq!(tss_search_points(7).unwrap(), 25);
        assert_eq!(tss_search_points(15).unwrap(), 33);
        assert_eq!(tss_search_points(63).unwrap(), 49);
        for bad in [0, 2, 6, 14, 62] {
            assert!(matches!(tss_search_points(bad), Err(Error::InvalidSearchParam(_))));
        }
    }

    #[test]
    fn identical_frames_give_zero_field() {
        let f = smooth_texture(128, 128, 1);
        for alg in [Algorithm::FullSearch, Algorithm::ThreeStepSearch] {
            let cfg = SearchConfig::new(alg, 16, 7);
            let (field, stats) = search(&f, &f, &cfg).unwrap();
            assert!(field.vectors().iter().all(|v| *v == MotionVector::ZERO));
            assert!(stats.block_cost.iter().all(|c| *c == 0.0));
        }
    }

    #[test]
    fn tss_counts_on_identical_frames() {
        let f = smooth_texture(128, 128, 2);
        let cfg = SearchConfig::new(Algorithm::ThreeStepSearch, 16, 7);
        let (_, stats) = three_step_search(&f, &f, &cfg).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                let pts = stats.points_per_block[r * 8 + c];
                if is_interior(c, r, 16, 7, &f) {
                    assert_eq!(pts, 25);
                } else {
                    assert!(pts <= 25);
                }
            }
        }
        assert_eq!(stats.multiplications, stats.search_points * 256);
    }

    #[test]
    fn replicate_border_evaluates_every_point() {
        let f = smooth_texture(128, 64, 3);
        let g = shifted(&f, 2, -1);
        let opts = MatchOptions {
            border: BorderPolicy::Replicate,
            ..Default::default()
        };
        let cfg = SearchConfig::new(Algorithm::ThreeStepSearch, 4, 15).with_options(opts);
        let (_, stats) = three_step_search(&f, &g, &cfg).unwrap();
        assert!(stats.points_per_block.iter().all(|&p| p == 33));
        assert_eq!(stats.multiplications, 33 * 16 * (128 * 64 / 16));
    }

    #[test]
    fn full_search_recovers_global_shift() {
        let f = smooth_texture(128, 128, 4);
        let g = shifted(&f, 5, 3);
        let cfg = SearchConfig::new(Algorithm::FullSearch, 16, 15);
        let (field, _) = full_search(&f, &g, &cfg).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                if c >= 1 && r >= 1 {
                    assert_eq!(field.get(c, r), MotionVector::new(5, 3), "block {c},{r}");
                }
            }
        }
    }

    #[test]
    fn tss_recovers_reachable_shift() {
        let f = smooth_texture(128, 128, 5);
        let g = shifted(&f, 4, 4);
        let cfg = SearchConfig::new(Algorithm::ThreeStepSearch, 16, 7);
        let (tss, _) = three_step_search(&f, &g, &cfg).unwrap();
        let (fs, _) = full_search(&f, &g, &cfg).unwrap();
        for r in 1..7 {
            for c in 1..7 {
                assert_eq!(tss.get(c, r), MotionVector::new(4, 4));
                assert_eq!(fs.get(c, r), MotionVector::new(4, 4));
            }
        }
    }

    #[test]
    fn full_search_dominates_tss() {
        for seed in 0..4 {
            let f = smooth_texture(128, 64, 100 + seed);
            let g = shifted(&f, (seed as i32) * 3 - 4, 2);
            let cfg = SearchConfig::new(Algorithm::ThreeStepSearch, 8, 7);
            let (_, fs) = full_search(&f, &g, &cfg).unwrap();
            let (_, tss) = three_step_search(&f, &g, &cfg).unwrap();
            for (a, b) in fs.block_cost.iter().zip(&tss.block_cost) {
                assert!(a <= b);
            }
        }
    }

    #[test]
    fn anchored_search_reports_absolute_vectors_within_bounds() {
        let f = smooth_texture(128, 128, 6);
        let g = shifted(&f, 20, 0);
        let anchor = MotionField::uniform(16, 8, 8, MotionVector::new(16, 0));
        let cfg = SearchConfig::new(Algorithm::ThreeStepSearch, 16, 7).with_anchor(anchor.clone());
        let (field, _) = three_step_search(&f, &g, &cfg).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                let v = field.get(c, r);
                let a = clamp_anchor(anchor.get(c, r), c * 16, r * 16, 16, &f);
                assert!((v.dp_h - a.dp_h).abs() <= 7 && (v.dp_v - a.dp_v).abs() <= 7);
                if c >= 2 && (1..7).contains(&r) {
                    assert_eq!(v, MotionVector::new(20, 0));
                }
            }
        }
    }

    #[test]
    fn anchor_grid_must_match() {
        let f = smooth_texture(128, 128, 7);
        let cfg = SearchConfig::new(Algorithm::ThreeStepSearch, 16, 7).with_anchor(MotionField::zeros(16, 4, 4));
        assert!(matches!(three_step_search(&f, &f, &cfg), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = smooth_texture(128, 128, 8);
        let g = smooth_texture(128, 64, 8);
        let cfg = SearchConfig::new(Algorithm::ThreeStepSearch, 16, 7);
        assert!(matches!(three_step_search(&f, &g, &cfg), Err(Error::ShapeMismatch(_))));
        let cfg = SearchConfig::new(Algorithm::ThreeStepSearch, 16, 6);
        assert!(matches!(three_step_search(&f, &f, &cfg), Err(Error::InvalidSearchParam(6))));
        let cfg = SearchConfig::new(Algorithm::FullSearch, 48, 6);
        assert!(matches!(full_search(&f, &f, &cfg), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn early_exit_stops_on_zero_cost() {
        let f = smooth_texture(128, 128, 9);
        let opts = MatchOptions {
            early_exit: true,
            ..Default::default()
        };
        let cfg = SearchConfig::new(Algorithm::ThreeStepSearch, 16, 7).with_options(opts);
        let (_, stats) = three_step_search(&f, &f, &cfg).unwrap();
        assert!(stats.points_per_block.iter().all(|&p| p == 1));
    }

    #[test]
    fn coarse_to_fine_follows_anchor_beyond_small_window() {
        let f = smooth_texture(256, 128, 10);
        let g = shifted(&f, 20, 0);
        let (field, stats) = coarse_to_fine(&f, &g, 63, 15, MatchOptions::default()).unwrap();
        assert_eq!(field.block_size(), 4);
        assert_eq!((field.cols(), field.rows()), (64, 32));
        // blocks whose 64×64 parent can reach the shift inside the frame
        for r in 0..32 {
            for c in 16..64 {
                assert_eq!(field.get(c, r), MotionVector::new(20, 0), "block {c},{r}");
            }
        }
        assert_eq!(stats.small.points_per_block.len(), 64 * 32);
        let (zero, _) = coarse_to_fine(&f, &f, 63, 15, MatchOptions::default()).unwrap();
        assert!(zero.vectors().iter().all(|v| *v == MotionVector::ZERO));
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let f = smooth_texture(256, 128, 12);
        let g = shifted(&f, -7, 9);
        let seq = MatchOptions {
            execution: Execution::Sequential,
            ..Default::default()
        };
        let par = MatchOptions {
            execution: Execution::Parallel,
            ..Default::default()
        };
        assert_eq!(
            coarse_to_fine(&f, &g, 63, 15, seq).unwrap(),
            coarse_to_fine(&f, &g, 63, 15, par).unwrap()
        );
    }

    #[test]
    fn upsample_and_csv() {
        let mut coarse = MotionField::zeros(64, 2, 1);
        coarse.set(1, 0, MotionVector::new(3, -2));
        let fine = coarse.upsample(4).unwrap();
        assert_eq!((fine.cols(), fine.rows()), (32, 16));
        assert_eq!(fine.get(15, 15), MotionVector::ZERO);
        assert_eq!(fine.get(16, 0), MotionVector::new(3, -2));
        let back = MotionField::parse_csv(&fine.to_csv(), 4, Path::new("f.csv")).unwrap();
        assert_eq!(back, fine);
        assert!(coarse.upsample(5).is_err());
    }
}
