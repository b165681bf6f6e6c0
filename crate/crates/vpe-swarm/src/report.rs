//! Run reports: per-iteration error traces, convergence iteration and final
//! localization error statistics, with CSV and summary writers.

use crate::error::Result;
use crate::vec2::{centroid, Vec2};
use std::time::Duration;

/// Localization estimates with per-robot errors at one recorded iteration.
#[derive(Debug, Clone)]
pub struct ChiSnapshot {
    pub iteration: u64,
    pub chi: Vec<Vec2>,
    pub error: Vec<f64>,
}

/// Outcome of a localization run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub robots: usize,
    /// First iteration at which every axis met its stopping criterion.
    pub converged_at: u64,
    pub iterations_run: u64,
    /// Mean/max of per-robot error after centroid alignment, at the final state.
    pub mean_error: f64,
    pub max_error: f64,
    pub wall_time: Duration,
    /// (iteration, mean aligned error), strictly increasing iterations.
    pub error_trace: Vec<(u64, f64)>,
    /// Sparse full-state snapshots for plotting.
    pub chi_trace: Vec<ChiSnapshot>,
    pub final_chi: Vec<Vec2>,
    pub per_robot_error: Vec<f64>,
}

impl RunReport {
    /// CSV of the recorded snapshots: iteration,robot_id,chi_x,chi_y,error.
    pub fn write_trace_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "iteration,robot_id,chi_x,chi_y,error")?;
        for snap in &self.chi_trace {
            for (id, (chi, err)) in snap.chi.iter().zip(&snap.error).enumerate() {
                writeln!(w, "{},{},{},{},{}", snap.iteration, id, chi.x, chi.y, err)?;
            }
        }
        Ok(())
    }

    /// Key-value summary block.
    pub fn write_summary(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "robots {}", self.robots)?;
        writeln!(w, "converged_at {}", self.converged_at)?;
        writeln!(w, "iterations_run {}", self.iterations_run)?;
        writeln!(w, "mean_error {}", self.mean_error)?;
        writeln!(w, "max_error {}", self.max_error)?;
        writeln!(w, "wall_time_s {}", self.wall_time.as_secs_f64())?;
        Ok(())
    }
}

/// Per-robot localization errors after shifting both point sets so their
/// centroids coincide, plus mean and max.
pub fn aligned_errors(chi: &[Vec2], truth: &[Vec2]) -> (Vec<f64>, f64, f64) {
    assert_eq!(chi.len(), truth.len());
    let c_est = centroid(chi);
    let c_true = centroid(truth);
    let mut errors = Vec::with_capacity(chi.len());
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for (e, t) in chi.iter().zip(truth) {
        let err = ((*e - c_est) - (*t - c_true)).norm();
        sum += err;
        max = max.max(err);
        errors.push(err);
    }
    let mean = if errors.is_empty() {
        0.0
    } else {
        sum / errors.len() as f64
    };
    (errors, mean, max)
}

/// Bounded-memory trace recorder. Records every `stride` iterations and
/// re-decimates (doubling the stride) when the buffers fill, so traces stay
/// small for arbitrarily long runs while keeping early iterations.
#[derive(Debug)]
pub struct TraceRecorder {
    error_stride: u64,
    chi_stride: u64,
    max_error_points: usize,
    max_chi_snapshots: usize,
    error_trace: Vec<(u64, f64)>,
    chi_trace: Vec<ChiSnapshot>,
}

impl Default for TraceRecorder {
    fn default() -> Self {
        TraceRecorder::new(2048, 12)
    }
}

impl TraceRecorder {
    pub fn new(max_error_points: usize, max_chi_snapshots: usize) -> Self {
        TraceRecorder {
            error_stride: 1,
            chi_stride: 1,
            max_error_points: max_error_points.max(4),
            max_chi_snapshots: max_chi_snapshots.max(2),
            error_trace: Vec::new(),
            chi_trace: Vec::new(),
        }
    }

    pub fn record(&mut self, iteration: u64, chi: &[Vec2], truth: &[Vec2]) {
        let due_error = iteration % self.error_stride == 0;
        let due_chi = iteration % self.chi_stride == 0;
        if !due_error && !due_chi {
            return;
        }
        let (errors, mean, _max) = aligned_errors(chi, truth);
        if due_error {
            self.error_trace.push((iteration, mean));
            if self.error_trace.len() > self.max_error_points {
                self.error_stride *= 2;
                let stride = self.error_stride;
                self.error_trace.retain(|(it, _)| it % stride == 0);
            }
        }
        if due_chi {
            self.chi_trace.push(ChiSnapshot {
                iteration,
                chi: chi.to_vec(),
                error: errors,
            });
            if self.chi_trace.len() > self.max_chi_snapshots {
                self.chi_stride *= 2;
                let stride = self.chi_stride;
                self.chi_trace.retain(|s| s.iteration % stride == 0);
            }
        }
    }

    /// Assembles the report from the final state.
    pub fn finish(
        mut self,
        converged_at: u64,
        iterations_run: u64,
        chi: Vec<Vec2>,
        truth: &[Vec2],
        wall_time: Duration,
    ) -> RunReport {
        let (errors, mean, max) = aligned_errors(&chi, truth);
        // Make sure the final state is present in both traces.
        if self.error_trace.last().map(|(it, _)| *it) != Some(iterations_run) {
            self.error_trace.push((iterations_run, mean));
        }
        if self.chi_trace.last().map(|s| s.iteration) != Some(iterations_run) {
            self.chi_trace.push(ChiSnapshot {
                iteration: iterations_run,
                chi: chi.clone(),
                error: errors.clone(),
            });
        }
        RunReport {
            robots: chi.len(),
            converged_at,
            iterations_run,
            mean_error: mean,
            max_error: max,
            wall_time,
            error_trace: self.error_trace,
            chi_trace: self.chi_trace,
            final_chi: chi,
            per_robot_error: errors,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alignment_removes_uniform_shift() {
        let truth = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0)];
        let chi: Vec<Vec2> = truth.iter().map(|p| *p + Vec2::new(5.0, -3.0)).collect();
        let (_, mean, max) = aligned_errors(&chi, &truth);
        assert!(mean < 1e-12);
        assert!(max < 1e-12);
    }

    #[test]
    fn recorder_keeps_traces_bounded_and_increasing() {
        let truth = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)];
        let mut rec = TraceRecorder::new(16, 4);
        for it in 0..10_000u64 {
            rec.record(it, &truth, &truth);
        }
        let report = rec.finish(9_999, 9_999, truth.clone(), &truth, Duration::ZERO);
        assert!(report.error_trace.len() <= 18);
        assert!(report
            .error_trace
            .windows(2)
            .all(|w| w[0].0 < w[1].0));
        assert!(report.mean_error <= report.max_error + 1e-15);
    }
}
