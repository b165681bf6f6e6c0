//! The ground-truth oracle: build the column-stochastic transition matrix,
//! read off its stationary vector and spectral gap, and check that the live
//! iteration converges to the predicted equilibrium at the predicted rate.
//!
//! Run with: `cargo run --release --example spectral_oracle`

use vpe_swarm::spectral::{build_transition_matrix, perron_oracle, session_equilibrium};
use vpe_swarm::swarm::{AttenuationLaw, ChannelModel, ScenarioKind, ScenarioSpec};
use vpe_swarm::vpe::{transition_probabilities, LocalizationSession, VpeParams};

fn main() -> vpe_swarm::Result<()> {
    let spec = ScenarioSpec {
        kind: ScenarioKind::Square,
        size_factor: 8.0,
        spacing: 1.0,
        channel: ChannelModel::new(AttenuationLaw::InverseLinear, 2.5, 1.0)?,
        seed: 1,
        r0_override: Some(1.72),
    };
    let scenario = spec.build()?;
    let params = VpeParams::default();

    let p = transition_probabilities(&scenario, &params, 1)?;
    let t = build_transition_matrix(&p)?;
    let summary = perron_oracle(&t, scenario.len() as f64, scenario.r0, params.k)?;
    println!(
        "{} robots: lambda2 = {:.6} (smaller gap means slower convergence)",
        scenario.len(),
        summary.lambda2_abs
    );
    let v_min = summary.perron_vector.iter().cloned().fold(f64::MAX, f64::min);
    let v_max = summary.perron_vector.iter().cloned().fold(0.0f64, f64::max);
    println!("stationary vector spans [{v_min:.3e}, {v_max:.3e}]");

    // Watch the live iteration approach the predicted equilibrium.
    let mut session = LocalizationSession::new(&scenario, params.clone())?;
    let oracle_chi = session_equilibrium(&session, &scenario)?;
    let scale = params.extraction_scale(scenario.r0);
    let discrepancy = |session: &LocalizationSession| -> f64 {
        session
            .axes
            .iter()
            .zip(&oracle_chi)
            .flat_map(|(field, chi_inf)| {
                field
                    .chi(scale, params.k)
                    .into_iter()
                    .zip(chi_inf.clone())
                    .map(|(a, b)| (a - b).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    };
    println!("round   max |chi - chi_inf|");
    let mut previous = (0u64, discrepancy(&session));
    for round in [50u64, 100, 200, 400, 800] {
        while session.iteration() < round {
            session.step();
        }
        let now = discrepancy(&session);
        let gap = (round - previous.0) as f64;
        let observed_rate = (now / previous.1).powf(1.0 / gap);
        println!(
            "{round:>5}   {now:.5}   (per-round decay ~{observed_rate:.5}, lambda2 {:.5})",
            summary.lambda2_abs
        );
        previous = (round, now);
    }
    Ok(())
}
