//! Synchronized motion-sensor traces and the integrators that turn them into
//! per-frame camera motion.
//!
//! Every channel is treated as the piecewise-linear interpolant of its
//! samples. Angular velocity and acceleration are integrated with the
//! trapezoidal rule, which is exact for that interpolant; the second stage
//! (velocity to position) integrates the resulting piecewise-quadratic
//! velocity exactly, so splitting an interval at any instant gives the same
//! result as integrating the whole interval.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "t,ax,ay,gx,gy";

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SensorSample {
    /// Seconds.
    pub timestamp: f64,
    /// m/s².
    pub accel_h: f64,
    pub accel_v: f64,
    /// rad/s.
    pub gyro_h: f64,
    pub gyro_v: f64,
}

/// Time-ordered samples with strictly increasing timestamps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SensorTrace {
    samples: Vec<SensorSample>,
}

/// Camera motion over one frame interval.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CameraMotion {
    pub d_h: f64,
    pub d_v: f64,
    pub theta_h: f64,
    pub theta_v: f64,
}

/// Velocity carried from one frame interval into the next.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Velocity {
    pub h: f64,
    pub v: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccelIntegral {
    pub d_h: f64,
    pub d_v: f64,
    pub exit_velocity: Velocity,
}

#[inline]
pub fn frame_time(frame_index: usize, frame_rate: f64) -> f64 {
    frame_index as f64 / frame_rate
}

impl SensorTrace {
    pub fn new(samples: Vec<SensorSample>) -> Result<Self> {
        for (index, pair) in samples.windows(2).enumerate() {
            if !(pair[1].timestamp > pair[0].timestamp) {
                return Err(Error::UnorderedSamples { index: index + 1 });
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[SensorSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn check_coverage(&self, t0: f64, t1: f64) -> Result<()> {
        let covered = t0 < t1
            && self.samples.len() >= 2
            && self.samples[0].timestamp <= t0
            && self.samples[self.samples.len() - 1].timestamp >= t1;
        if covered {
            Ok(())
        } else {
            Err(Error::InsufficientSamples { t0, t1 })
        }
    }

    /// Integration nodes on `[t0, t1]`: the interval ends plus every sample
    /// strictly inside, with channel values linearly interpolated at the ends.
    fn nodes<F>(&self, t0: f64, t1: f64, channel: F) -> Vec<(f64, f64)>
    where
        F: Fn(&SensorSample) -> f64,
    {
        let s = &self.samples;
        let first_after = s.partition_point(|x| x.timestamp <= t0);
        let last_before = s.partition_point(|x| x.timestamp < t1);
        let mut nodes = Vec::with_capacity(last_before.saturating_sub(first_after) + 2);
        nodes.push((t0, self.value_at(t0, &channel)));
        nodes.extend(s[first_after..last_before].iter().map(|x| (x.timestamp, channel(x))));
        nodes.push((t1, self.value_at(t1, &channel)));
        nodes
    }

    fn value_at<F>(&self, t: f64, channel: &F) -> f64
    where
        F: Fn(&SensorSample) -> f64,
    {
        let s = &self.samples;
        let idx = s.partition_point(|x| x.timestamp <= t);
        // coverage guarantees 1 <= idx
        let lo = &s[idx - 1];
        if lo.timestamp == t || idx == s.len() {
            return channel(lo);
        }
        let hi = &s[idx];
        let w = (t - lo.timestamp) / (hi.timestamp - lo.timestamp);
        channel(lo) + (channel(hi) - channel(lo)) * w
    }

    fn trapezoid<F>(&self, t0: f64, t1: f64, channel: F) -> f64
    where
        F: Fn(&SensorSample) -> f64,
    {
        self.nodes(t0, t1, channel)
            .windows(2)
            .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
            .sum()
    }

    /// Returns (displacement, exit velocity) for one channel.
    pub(crate) fn double_integral<F>(&self, t0: f64, t1: f64, v0: f64, channel: F) -> (f64, f64)
    where
        F: Fn(&SensorSample) -> f64,
    {
        let mut x = 0.0;
        let mut v = v0;
        for w in self.nodes(t0, t1, channel).windows(2) {
            let (ta, a0) = w[0];
            let (tb, a1) = w[1];
            let h = tb - ta;
            x += v * h + h * h * (2.0 * a0 + a1) / 6.0;
            v += 0.5 * h * (a0 + a1);
        }
        (x, v)
    }

    /// Rotation angles accumulated over `[t0, t1]`.
    pub fn integrate_gyro(&self, t0: f64, t1: f64) -> Result<(f64, f64)> {
        self.check_coverage(t0, t1)?;
        Ok((
            self.trapezoid(t0, t1, |s| s.gyro_h),
            self.trapezoid(t0, t1, |s| s.gyro_v),
        ))
    }

    /// Displacement over `[t0, t1]` starting from velocity `v0`, plus the
    /// velocity at `t1` for chaining into the next interval.
    pub fn integrate_accel(&self, t0: f64, t1: f64, v0: Velocity) -> Result<AccelIntegral> {
        self.check_coverage(t0, t1)?;
        let (d_h, v_h) = self.double_integral(t0, t1, v0.h, |s| s.accel_h);
        let (d_v, v_v) = self.double_integral(t0, t1, v0.v, |s| s.accel_v);
        Ok(AccelIntegral {
            d_h,
            d_v,
            exit_velocity: Velocity { h: v_h, v: v_v },
        })
    }

    /// Camera motion between frame `frame_index` and the next one. `carry`
    /// holds the velocity at the start of the interval and is advanced to
    /// its end.
    pub fn motion_for_frame(&self, frame_index: usize, frame_rate: f64, carry: &mut Velocity) -> Result<CameraMotion> {
        let t0 = frame_time(frame_index, frame_rate);
        let t1 = frame_time(frame_index + 1, frame_rate);
        let (theta_h, theta_v) = self.integrate_gyro(t0, t1)?;
        let accel = self.integrate_accel(t0, t1, *carry)?;
        *carry = accel.exit_velocity;
        Ok(CameraMotion {
            d_h: accel.d_h,
            d_v: accel.d_v,
            theta_h,
            theta_v,
        })
    }

    /// Velocity at the start of frame interval `frame_index`, from rest at t=0.
    pub fn velocity_at_frame(&self, frame_index: usize, frame_rate: f64) -> Result<Velocity> {
        let mut carry = Velocity::default();
        for k in 0..frame_index {
            let t0 = frame_time(k, frame_rate);
            let t1 = frame_time(k + 1, frame_rate);
            carry = self.integrate_accel(t0, t1, carry)?.exit_velocity;
        }
        Ok(carry)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.samples.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{},{},{}", s.timestamp, s.accel_h, s.accel_v, s.gyro_h, s.gyro_v);
        }
        out
    }

    pub fn parse_csv(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == TRACE_HEADER => {}
            _ => return Err(Error::parse(path, 1, format!("expected header `{TRACE_HEADER}`"))),
        }
        let mut samples = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            if fields.len() != 5 {
                return Err(Error::parse(path, i + 1, format!("expected 5 fields, got {}", fields.len())));
            }
            samples.push(SensorSample {
                timestamp: fields[0],
                accel_h: fields[1],
                accel_v: fields[2],
                gyro_h: fields[3],
                gyro_v: fields[4],
            });
        }
        SensorTrace::new(samples).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
