//! Planar localization: an annulus of robots runs the exchange along both
//! axes in the same synchronous rounds and writes a snapshot (true positions,
//! estimates, error arrows) plus the error-versus-iteration curve as SVG.
//!
//! Run with: `cargo run --release --example localize_2d`

use std::path::Path;
use vpe_swarm::plot::{save_snapshot, LineChart, Series};
use vpe_swarm::swarm::{AttenuationLaw, ChannelModel, ScenarioKind, ScenarioSpec};
use vpe_swarm::vec2::{centroid, Vec2};
use vpe_swarm::vpe::{run_localization, ConvergenceCriterion, RunBudget, VpeParams};

fn main() -> vpe_swarm::Result<()> {
    let out = Path::new("vpe-example-out");
    std::fs::create_dir_all(out)?;

    let spec = ScenarioSpec {
        kind: ScenarioKind::Annulus,
        size_factor: 12.0,
        spacing: 1.0,
        channel: ChannelModel::new(AttenuationLaw::InverseLinear, 2.5, 1.0)?,
        seed: 42,
        r0_override: Some(1.72),
    };
    let scenario = spec.build()?;
    let report = run_localization(
        &scenario,
        &VpeParams::default(),
        &ConvergenceCriterion::OracleTolerance { tol: 0.1 },
        RunBudget::default(),
    )?;
    println!(
        "{} robots, converged at {} rounds, mean error {:.3}, max {:.3}",
        report.robots, report.converged_at, report.mean_error, report.max_error
    );

    let truth = scenario.positions();
    let shift = centroid(&truth) - centroid(&report.final_chi);
    let aligned: Vec<Vec2> = report.final_chi.iter().map(|c| *c + shift).collect();
    save_snapshot(
        &out.join("annulus_snapshot.svg"),
        "annulus localization (triangles: truth, circles: estimates)",
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
    chart.save(&out.join("annulus_error.svg"))?;
    println!("wrote {}", out.join("annulus_snapshot.svg").display());
    println!("wrote {}", out.join("annulus_error.svg").display());
    Ok(())
}
