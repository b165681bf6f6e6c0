//! Shape formation on top of the exchange localization: 52 robots pull
//! toward a triangle target with a potential-field controller while staying
//! evenly spaced through sensed repulsion. Writes snapshots and the
//! similarity curve.
//!
//! Run with: `cargo run --release --example shape_formation`

use std::path::Path;
use vpe_swarm::formation::{run_formation, FormationParams, LocalizerKind, TargetShape};
use vpe_swarm::plot::{save_snapshot, LineChart, Series};
use vpe_swarm::swarm::{AttenuationLaw, ChannelModel, ScenarioKind, ScenarioSpec};
use vpe_swarm::vec2::{centroid, Vec2};
use vpe_swarm::vpe::VpeParams;

fn main() -> vpe_swarm::Result<()> {
    let out = Path::new("vpe-example-out");
    std::fs::create_dir_all(out)?;
    let spacing = 0.2;
    let spec = ScenarioSpec {
        kind: ScenarioKind::Square,
        size_factor: (51.5f64).sqrt(), // 52 robots
        spacing,
        channel: ChannelModel::new(AttenuationLaw::InverseLinear, 0.5, spacing / 4.0)?,
        seed: 4,
        r0_override: Some(0.35),
    };
    let scenario = spec.build()?;
    let robots = scenario.len();
    let shape = TargetShape::triangle(robots as f64 * spacing * spacing)?;
    let vpe = VpeParams {
        k1: 0.01,
        ..VpeParams::default()
    };
    let report = run_formation(
        scenario,
        &shape,
        &FormationParams::default(),
        &LocalizerKind::Matrix(vpe),
        250,
        50,
    )?;
    println!(
        "{robots} robots, {} steps, final similarity {:.3} ({:?})",
        report.steps.len(),
        report.final_similarity,
        report.outcome
    );

    for (step, poses, _) in &report.snapshots {
        let shift = shape.centroid() - centroid(poses);
        let aligned: Vec<Vec2> = poses.iter().map(|p| *p + shift).collect();
        save_snapshot(
            &out.join(format!("formation_{step:04}.svg")),
            &format!("formation step {step}"),
            &aligned,
            None,
            Some(&shape.vertices().to_vec()),
        )?;
    }
    let chart = LineChart::new("Shape similarity", "step", "similarity").with_series(
        Series::new(
            "triangle",
            report
                .steps
                .iter()
                .map(|s| (s.step as f64, s.similarity))
                .collect(),
        ),
    );
    chart.save(&out.join("formation_similarity.svg"))?;
    println!("snapshots and similarity curve in {}", out.display());
    Ok(())
}
