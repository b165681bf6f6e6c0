//! Warm-started re-localization: when robots move a little, restarting the
//! exchange from the previous particle amounts instead of from scratch cuts
//! the rounds needed to re-converge by an order of magnitude.
//!
//! Run with: `cargo run --release --example warm_start`

use rand::{Rng, SeedableRng};
use vpe_swarm::spectral::session_equilibrium;
use vpe_swarm::swarm::{AttenuationLaw, ChannelModel, ScenarioKind, ScenarioSpec};
use vpe_swarm::vec2::Vec2;
use vpe_swarm::vpe::{LocalizationSession, VpeParams};

fn rounds_to_tolerance(
    session: &mut LocalizationSession,
    scenario: &vpe_swarm::swarm::SwarmScenario,
    tol: f64,
    params: &VpeParams,
) -> vpe_swarm::Result<u64> {
    let oracle = session_equilibrium(session, scenario)?;
    let scale = params.extraction_scale(scenario.r0);
    let start = session.iteration();
    loop {
        let worst = session
            .axes
            .iter()
            .zip(&oracle)
            .flat_map(|(field, chi_inf)| {
                field
                    .chi(scale, params.k)
                    .into_iter()
                    .zip(chi_inf.clone())
                    .map(|(a, b)| (a - b).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max);
        if worst < tol {
            return Ok(session.iteration() - start);
        }
        session.step();
    }
}

fn main() -> vpe_swarm::Result<()> {
    let spec = ScenarioSpec {
        kind: ScenarioKind::Square,
        size_factor: 10.0,
        spacing: 1.0,
        channel: ChannelModel::new(AttenuationLaw::InverseLinear, 2.5, 1.0)?,
        seed: 8,
        r0_override: Some(1.72),
    };
    let scenario = spec.build()?;
    let params = VpeParams::default();

    // Cold start from the uniform state.
    let mut session = LocalizationSession::new(&scenario, params.clone())?;
    let cold = rounds_to_tolerance(&mut session, &scenario, 0.1, &params)?;
    println!("cold start: {cold} rounds to 0.1-unit accuracy");

    // Every robot takes a small step; keep the particle state and re-run.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let moved: Vec<Vec2> = scenario
        .positions()
        .iter()
        .map(|p| {
            *p + Vec2::new(
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.05..0.05),
            )
        })
        .collect();
    let moved_scenario = scenario.with_positions(moved)?;
    session.rebuild(&moved_scenario)?;
    let warm = rounds_to_tolerance(&mut session, &moved_scenario, 0.1, &params)?;
    println!("warm restart after a small move: {warm} rounds");
    println!(
        "saved {:.0}% of the cold-start rounds",
        100.0 * (1.0 - warm as f64 / cold as f64)
    );
    Ok(())
}
