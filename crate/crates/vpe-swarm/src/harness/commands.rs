//! The experiment commands behind the CLI verbs: single localization runs,
//! error and complexity sweeps, the calibration-drift comparison, shape
//! formation, and the oracle consistency check. Every command writes CSV
//! (with the config hash embedded) and static SVG plots into the output
//! directory and prints a short summary.

use super::config::{LoadedConfig, StopKind, SweepR0Rule, VariantChoice};
use crate::error::{Error, Result};
use crate::formation::{run_formation, FormationOutcome, LocalizerKind};
use crate::optical::OpticalSession;
use crate::plot::{save_snapshot, LineChart, Series};
use crate::report::RunReport;
use crate::spectral::{
    boltzmann_warm_start, build_transition_matrix, dual_equilibrium_chi, perron_vector_from,
    spectral_gap,
};
use crate::swarm::{ScenarioKind, SwarmScenario};
use crate::vec2::{centroid, Vec2};
use crate::vpe::{LocalizationSession, TransferProbabilities};
use rayon::prelude::*;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

/// Planar scenarios above this size factor (and lines above the matching
/// robot count) only run when --long is passed.
const LONG_RUN_SIZE_FACTOR: f64 = 30.0;

pub struct CommandContext {
    pub loaded: LoadedConfig,
    pub out_dir: PathBuf,
    pub long: bool,
}

impl CommandContext {
    fn hash(&self) -> &str {
        &self.loaded.hash
    }

    fn gate_size(&self, size_factor: f64, kind: ScenarioKind) -> Result<()> {
        let effective = match kind {
            ScenarioKind::Line => size_factor / 10.0, // lines are cheap
            _ => size_factor,
        };
        if effective > LONG_RUN_SIZE_FACTOR && !self.long {
            return Err(Error::InvalidParameter(format!(
                "size factor {size_factor} needs --long"
            )));
        }
        Ok(())
    }

    fn csv(&self, name: &str, header: &str) -> Result<CsvWriter> {
        std::fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "# config_hash={}", self.hash())?;
        writeln!(w, "{header}")?;
        Ok(CsvWriter { w, path })
    }

    fn save_chart(&self, name: &str, chart: &LineChart) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(name);
        let svg = chart
            .render()
            .replace("<svg ", &format!("<!-- config_hash={} --><svg ", self.hash()));
        std::fs::write(&path, svg)?;
        Ok(path)
    }

    fn write_summary(&self, lines: &[String]) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join("summary.txt");
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "config_hash {}", self.hash())?;
        for line in lines {
            writeln!(w, "{line}")?;
            println!("{line}");
        }
        Ok(())
    }
}

pub struct CsvWriter {
    w: BufWriter<File>,
    pub path: PathBuf,
}

impl CsvWriter {
    fn row(&mut self, line: &str) -> Result<()> {
        writeln!(self.w, "{line}")?;
        Ok(())
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.w.flush()?;
        Ok(self.path)
    }
}

fn run_variant(
    ctx: &CommandContext,
    scenario: &SwarmScenario,
) -> Result<RunReport> {
    let cfg = &ctx.loaded.config;
    let stop = cfg.stop.criterion(scenario.r0);
    match cfg.variant {
        VariantChoice::Matrix => crate::vpe::run_localization(
            scenario,
            &cfg.vpe.params(),
            &stop,
            cfg.vpe.budget(),
        ),
        VariantChoice::Optical => crate::optical::run_optical_localization(
            scenario,
            &cfg.optical.params(),
            cfg.noise.sensor_model(),
            &stop,
            cfg.vpe.budget(),
        ),
    }
}

/// `localize`: one full run (or an error sweep when [sweep] is configured),
/// with trace CSV, summary, a snapshot and the error curve.
pub fn cmd_localize(ctx: &CommandContext) -> Result<()> {
    if ctx.loaded.config.sweep.is_some() {
        return error_sweep(ctx);
    }
    let cfg = &ctx.loaded.config;
    let spec = cfg.scenario.to_spec()?;
    ctx.gate_size(spec.size_factor, spec.kind)?;
    let scenario = spec.build()?;
    save_scenario_artifact(ctx, &scenario)?;
    let report = run_variant(ctx, &scenario)?;

    let mut csv = ctx.csv("trace.csv", "iteration,robot_id,chi_x,chi_y,error")?;
    for snap in &report.chi_trace {
        for (id, (chi, err)) in snap.chi.iter().zip(&snap.error).enumerate() {
            csv.row(&format!(
                "{},{},{},{},{}",
                snap.iteration, id, chi.x, chi.y, err
            ))?;
        }
    }
    csv.finish()?;

    let truth = scenario.positions();
    let shift = centroid(&truth) - centroid(&report.final_chi);
    let aligned: Vec<Vec2> = report.final_chi.iter().map(|c| *c + shift).collect();
    save_snapshot(
        &ctx.out_dir.join("snapshot.svg"),
        &format!(
            "{} robots, converged at {}",
            report.robots, report.converged_at
        ),
        &truth,
        Some(&aligned),
        None,
    )?;
    let chart = LineChart::new("Localization error", "iteration", "mean error").with_series(
        Series::new(
            "mean error",
            report
                .error_trace
                .iter()
                .map(|(it, e)| (*it as f64, *e))
                .collect(),
        ),
    );
    ctx.save_chart("error_curve.svg", &chart)?;
    ctx.write_summary(&[
        format!("robots {}", report.robots),
        format!("converged_at {}", report.converged_at),
        format!("mean_error {}", report.mean_error),
        format!("max_error {}", report.max_error),
        format!("wall_time_s {}", report.wall_time.as_secs_f64()),
    ])?;
    Ok(())
}

/// Equilibrium localization error across size factors and seeds, with r0
/// either optimized per point or taken from the config.
fn error_sweep(ctx: &CommandContext) -> Result<()> {
    let cfg = &ctx.loaded.config;
    let sweep = cfg.sweep.as_ref().unwrap();
    for &sf in &sweep.size_factors {
        ctx.gate_size(sf, cfg.scenario.kind)?;
    }
    let params = cfg.vpe.params();
    let points: Vec<(f64, u64)> = sweep
        .size_factors
        .iter()
        .flat_map(|&sf| (0..sweep.seeds_per_point).map(move |s| (sf, s)))
        .collect();
    let rows: Vec<Result<(f64, u64, usize, f64, f64, f64)>> = points
        .par_iter()
        .map(|&(size_factor, seed)| {
            let spec = cfg
                .scenario
                .spec_with(size_factor, cfg.scenario.max_range, seed)?;
            let scenario = spec.build()?;
            let p_plus = TransferProbabilities::build(&scenario, &params, scenario.x_axis)?;
            let p_minus =
                TransferProbabilities::build(&scenario, &params, -scenario.x_axis)?;
            let scale = params.extraction_scale(scenario.r0);
            let warm = boltzmann_warm_start(&scenario, scenario.x_axis, params.k, scale);
            // Unitless profile: chi = r0 * g for the unit-direction variant.
            let g = dual_equilibrium_chi(&p_plus, &p_minus, 1.0, params.k, Some(warm))?;
            let truth: Vec<f64> = scenario.poses.iter().map(|p| p.position.x).collect();
            let (r0, mean, max) = if sweep.optimize_r0 {
                optimized_r0_error(&g, &truth, cfg.scenario.spacing)
            } else {
                let (mean, max) = scaled_error(&g, &truth, scenario.r0);
                (scenario.r0, mean, max)
            };
            Ok((size_factor, seed, scenario.len(), r0, mean, max))
        })
        .collect();

    let mut csv = ctx.csv(
        "error_sweep.csv",
        "size_factor,seed,robots,r0,mean_error,max_error",
    )?;
    let mut by_size: Vec<(f64, Vec<f64>)> = Vec::new();
    for row in rows {
        let (sf, seed, robots, r0, mean, max) = row?;
        csv.row(&format!("{sf},{seed},{robots},{r0},{mean},{max}"))?;
        match by_size.iter_mut().find(|(s, _)| *s == sf) {
            Some((_, v)) => v.push(mean),
            None => by_size.push((sf, vec![mean])),
        }
    }
    csv.finish()?;

    let mut summary = Vec::new();
    let mut curve = Vec::new();
    for (sf, means) in &by_size {
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        curve.push((*sf, mean));
        summary.push(format!("size_factor {sf}: mean_error {mean:.4}"));
    }
    let chart = LineChart::new(
        "Equilibrium localization error",
        "size factor",
        "mean error",
    )
    .with_series(Series::new("mean over seeds", curve));
    ctx.save_chart("errors_vs_size.svg", &chart)?;
    ctx.write_summary(&summary)?;
    Ok(())
}

/// `sweep`: iterations to converge across size factors (and ranges), with a
/// least-squares linearity fit per range.
pub fn cmd_sweep_complexity(ctx: &CommandContext) -> Result<()> {
    let cfg = &ctx.loaded.config;
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("sweep needs a [sweep] section".into()))?;
    for &sf in &sweep.size_factors {
        ctx.gate_size(sf, cfg.scenario.kind)?;
    }
    let ranges = if sweep.max_ranges.is_empty() {
        vec![cfg.scenario.max_range]
    } else {
        sweep.max_ranges.clone()
    };
    let points: Vec<(f64, f64)> = ranges
        .iter()
        .flat_map(|&r| sweep.size_factors.iter().map(move |&sf| (r, sf)))
        .collect();
    let rows: Vec<Result<(f64, f64, usize, u64, f64)>> = points
        .par_iter()
        .map(|&(range, size_factor)| {
            let mut spec = cfg.scenario.spec_with(size_factor, range, cfg.scenario.seed)?;
            if sweep.r0_rule == SweepR0Rule::PaperLine {
                spec.r0_override = Some((range.floor() + 1.0) / 2.0);
            }
            let scenario = spec.build()?;
            let report = run_variant(ctx, &scenario)?;
            Ok((
                range,
                size_factor,
                scenario.len(),
                report.converged_at,
                report.mean_error,
            ))
        })
        .collect();

    let mut csv = ctx.csv(
        "complexity.csv",
        "max_range,size_factor,robots,converged_at,mean_error",
    )?;
    let mut by_range: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
    for row in rows {
        let (range, sf, robots, converged, mean) = row?;
        csv.row(&format!("{range},{sf},{robots},{converged},{mean}"))?;
        let entry = (sf, converged as f64);
        match by_range.iter_mut().find(|(r, _)| *r == range) {
            Some((_, v)) => v.push(entry),
            None => by_range.push((range, vec![entry])),
        }
    }
    csv.finish()?;

    let mut summary = Vec::new();
    let mut chart = LineChart::new(
        "Iterations to converge",
        "size factor",
        "iterations",
    );
    for (range, points) in &by_range {
        let (slope, intercept, r2) = linear_fit(points);
        summary.push(format!(
            "range {range}: slope {slope:.2}, intercept {intercept:.1}, r2 {r2:.5}"
        ));
        chart = chart.with_series(Series::new(format!("range {range}"), points.clone()));
    }
    ctx.save_chart("iterations_vs_size.svg", &chart)?;
    ctx.write_summary(&summary)?;
    Ok(())
}

/// `calibrate-study`: twin sensed runs with calibration on and off,
/// tracking the drift of the result centroid after a warmup.
pub fn cmd_calibration_study(ctx: &CommandContext) -> Result<()> {
    let cfg = &ctx.loaded.config;
    let study = cfg.calibration_study.clone().unwrap_or_default();
    let spec = cfg.scenario.to_spec()?;
    ctx.gate_size(spec.size_factor, spec.kind)?;
    let scenario = spec.build()?;
    let sensor_model = cfg.noise.sensor_model();

    let drift_trace = |calibrate: bool| -> Result<Vec<f64>> {
        let mut params = cfg.optical.params();
        if !calibrate {
            params.calibrate_every = 0;
        }
        let mut session = OpticalSession::new(&scenario, params, sensor_model)?;
        session.run_iters(&scenario, study.warmup)?;
        let reference = centroid(&session.chi());
        let mut drifts = Vec::with_capacity(study.iterations as usize);
        for _ in 0..study.iterations {
            session.step(&scenario)?;
            drifts.push((centroid(&session.chi()) - reference).norm());
        }
        Ok(drifts)
    };
    let with_calibration = drift_trace(true)?;
    let without_calibration = drift_trace(false)?;

    let mut csv = ctx.csv("drift.csv", "iteration,drift_calibrated,drift_uncalibrated")?;
    for (i, (on, off)) in with_calibration
        .iter()
        .zip(&without_calibration)
        .enumerate()
    {
        csv.row(&format!("{},{on},{off}", i + 1))?;
    }
    csv.finish()?;

    let sup_on = with_calibration.iter().copied().fold(0.0, f64::max);
    let sup_off = without_calibration.iter().copied().fold(0.0, f64::max);
    let chart = LineChart::new("Centroid drift", "iteration", "drift")
        .with_series(Series::new(
            "calibrated",
            with_calibration
                .iter()
                .enumerate()
                .map(|(i, d)| ((i + 1) as f64, *d))
                .collect(),
        ))
        .with_series(Series::new(
            "uncalibrated",
            without_calibration
                .iter()
                .enumerate()
                .map(|(i, d)| ((i + 1) as f64, *d))
                .collect(),
        ));
    ctx.save_chart("drift.svg", &chart)?;
    let threshold = study.drift_threshold_r0 * scenario.r0;
    ctx.write_summary(&[
        format!("r0 {}", scenario.r0),
        format!("sup_drift_calibrated {sup_on}"),
        format!("sup_drift_uncalibrated {sup_off}"),
        format!("threshold {threshold}"),
        format!(
            "calibrated_within_threshold {}",
            sup_on <= threshold
        ),
    ])?;
    Ok(())
}

/// `formation`: the full shape-formation loop with trajectory CSV,
/// snapshots and the similarity curve. Fragmentation still writes the
/// last-good snapshot before surfacing the failure.
pub fn cmd_formation(ctx: &CommandContext) -> Result<()> {
    let cfg = &ctx.loaded.config;
    let formation = cfg.formation.clone().unwrap_or_default();
    let spec = cfg.scenario.to_spec()?;
    ctx.gate_size(spec.size_factor, spec.kind)?;
    let scenario = spec.build()?;
    save_scenario_artifact(ctx, &scenario)?;
    let shape = formation.target_shape(scenario.len(), cfg.scenario.spacing)?;
    let localizer = match cfg.variant {
        VariantChoice::Matrix => LocalizerKind::Matrix(cfg.vpe.params()),
        VariantChoice::Optical => {
            LocalizerKind::Optical(cfg.optical.params(), cfg.noise.sensor_model())
        }
    };
    let report = run_formation(
        scenario.clone(),
        &shape,
        &formation.params(),
        &localizer,
        formation.steps,
        formation.snapshot_every,
    )?;

    let outline: Vec<Vec2> = shape.vertices().to_vec();
    let mut csv = ctx.csv(
        "trajectory.csv",
        "step,robot_id,x,y,chi_x,chi_y,similarity",
    )?;
    for (step, poses, chi) in &report.snapshots {
        let similarity = if *step == 0 {
            report.steps.first().map(|s| s.similarity).unwrap_or(0.0)
        } else {
            report
                .steps
                .iter()
                .find(|s| s.step == *step)
                .map(|s| s.similarity)
                .unwrap_or(report.final_similarity)
        };
        for (id, (p, c)) in poses.iter().zip(chi).enumerate() {
            csv.row(&format!(
                "{step},{id},{},{},{},{},{similarity}",
                p.x, p.y, c.x, c.y
            ))?;
        }
    }
    csv.finish()?;

    for (step, poses, _) in &report.snapshots {
        let shift = shape.centroid() - centroid(poses);
        let aligned: Vec<Vec2> = poses.iter().map(|p| *p + shift).collect();
        save_snapshot(
            &ctx.out_dir.join(format!("formation_step_{step:05}.svg")),
            &format!("step {step}"),
            &aligned,
            None,
            Some(&outline),
        )?;
    }
    let chart = LineChart::new("Shape similarity", "step", "similarity").with_series(
        Series::new(
            "similarity",
            report
                .steps
                .iter()
                .map(|s| (s.step as f64, s.similarity))
                .collect(),
        ),
    );
    ctx.save_chart("similarity.svg", &chart)?;
    let mean_loc_error = if report.steps.is_empty() {
        0.0
    } else {
        report.steps.iter().map(|s| s.mean_loc_error).sum::<f64>() / report.steps.len() as f64
    };
    ctx.write_summary(&[
        format!("steps_run {}", report.steps.len()),
        format!("final_similarity {}", report.final_similarity),
        format!("mean_localization_error {mean_loc_error}"),
        format!("outcome {:?}", report.outcome),
    ])?;
    if let FormationOutcome::Fragmented { step } = report.outcome {
        return Err(Error::SwarmFragmented { step });
    }
    Ok(())
}

/// `oracle-check`: run to the stopping rule, then compare the converged
/// result against the spectral equilibrium and report the spectral gap.
pub fn cmd_oracle_check(ctx: &CommandContext) -> Result<()> {
    let cfg = &ctx.loaded.config;
    let spec = cfg.scenario.to_spec()?;
    ctx.gate_size(spec.size_factor, spec.kind)?;
    let scenario = spec.build()?;
    let params = cfg.vpe.params();

    let mut session = LocalizationSession::new(&scenario, params.clone())?;
    let stop = cfg.stop.criterion(scenario.r0);
    let report = session.run(&scenario, &stop, cfg.vpe.budget())?;

    let oracle = crate::spectral::session_equilibrium(&session, &scenario)?;
    let scale = params.extraction_scale(scenario.r0);
    let mut max_delta = 0.0f64;
    let mut csv = ctx.csv("oracle_check.csv", "axis,robot_id,chi,chi_equilibrium,delta")?;
    let mut lambda2 = Vec::new();
    for (axis_idx, (field, chi_inf)) in session.axes.iter().zip(&oracle).enumerate() {
        let chi = field.chi(scale, params.k);
        for (robot, (a, b)) in chi.iter().zip(chi_inf).enumerate() {
            let delta = (a - b).abs();
            max_delta = max_delta.max(delta);
            csv.row(&format!("{axis_idx},{robot},{a},{b},{delta}"))?;
        }
        let t = build_transition_matrix(&field.p_plus)?;
        let warm = boltzmann_warm_start(&scenario, field.axis, params.k, scale);
        let v = perron_vector_from(&t, Some(warm.0))?;
        lambda2.push(spectral_gap(&t, &v)?);
    }
    csv.finish()?;

    let tolerance = cfg.stop.tolerance;
    let lambda2_line = lambda2
        .iter()
        .map(|l| format!("{l:.6}"))
        .collect::<Vec<_>>()
        .join(",");
    ctx.write_summary(&[
        format!("robots {}", scenario.len()),
        format!("converged_at {}", report.converged_at),
        format!("max_delta_vs_oracle {max_delta}"),
        format!("lambda2 {lambda2_line}"),
        format!("tolerance {tolerance}"),
    ])?;
    if max_delta >= tolerance && matches!(cfg.stop.kind, StopKind::Oracle) {
        return Err(Error::NoConvergence {
            iterations: report.iterations_run,
        });
    }
    Ok(())
}

/// Least-squares line fit returning (slope, intercept, r^2).
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    if points.len() < 2 {
        return (0.0, points.first().map(|p| p.1).unwrap_or(0.0), 0.0);
    }
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return (0.0, sy / n, 0.0);
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, intercept, r2)
}

/// Centroid-aligned mean/max error of chi = r0 * g against true coordinates.
pub fn scaled_error(g: &[f64], truth: &[f64], r0: f64) -> (f64, f64) {
    let n = g.len() as f64;
    let g_mean = g.iter().sum::<f64>() / n;
    let t_mean = truth.iter().sum::<f64>() / n;
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for (gi, ti) in g.iter().zip(truth) {
        let err = (r0 * (gi - g_mean) - (ti - t_mean)).abs();
        sum += err;
        max = max.max(err);
    }
    (sum / n, max)
}

/// Golden-section search for the r0 minimizing the centroid-aligned mean
/// error of the equilibrium result.
pub fn optimized_r0_error(g: &[f64], truth: &[f64], spacing: f64) -> (f64, f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut a = 0.1 * spacing;
    let mut b = 5.0 * spacing;
    let err = |r0: f64| scaled_error(g, truth, r0).0;
    let mut c = b - (b - a) * INV_PHI;
    let mut d = a + (b - a) * INV_PHI;
    let mut fc = err(c);
    let mut fd = err(d);
    while (b - a) > 1e-4 * spacing {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * INV_PHI;
            fc = err(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * INV_PHI;
            fd = err(d);
        }
    }
    let r0 = if fc < fd { c } else { d };
    let (mean, max) = scaled_error(g, truth, r0);
    (r0, mean, max)
}

/// Saves the generated scenario next to the other outputs so a run can be
/// reproduced from its artifacts alone.
pub fn save_scenario_artifact(ctx: &CommandContext, scenario: &SwarmScenario) -> Result<()> {
    std::fs::create_dir_all(&ctx.out_dir)?;
    crate::swarm::save_scenario(scenario, &ctx.out_dir.join("scenario.txt"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_fit_recovers_exact_line() {
        let points: Vec<(f64, f64)> =
            (0..6).map(|i| (i as f64, 3.0 + 2.5 * i as f64)).collect();
        let (slope, intercept, r2) = linear_fit(&points);
        assert!((slope - 2.5).abs() < 1e-12);
        assert!((intercept - 3.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_fit_is_reported_as_such() {
        let (slope, _intercept, r2) = linear_fit(&[(5.0, 100.0)]);
        assert_eq!(slope, 0.0);
        assert_eq!(r2, 0.0);
    }

    #[test]
    fn optimized_r0_finds_the_exact_scale() {
        // g encodes positions at scale 1/1.7, truth at scale 1.
        let truth: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let g: Vec<f64> = truth.iter().map(|x| x / 1.7).collect();
        let (r0, mean, _) = optimized_r0_error(&g, &truth, 1.0);
        assert!((r0 - 1.7).abs() < 1e-3, "r0 = {r0}");
        assert!(mean < 1e-3);
    }
}
