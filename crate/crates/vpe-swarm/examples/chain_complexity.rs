//! The idealized 1D chain: closed-form eigenvalues and eigenvectors, the
//! predicted iteration bound for a target accuracy, and the measured
//! iteration counts of live runs. Emits the sweep as CSV.
//!
//! Run with: `cargo run --release --example chain_complexity`

use std::io::Write;
use vpe_swarm::spectral::{accuracy_trace, chain_eigensystem, predict_nmax, ChainSpec};
use vpe_swarm::swarm::{ChannelModel, ScenarioKind, ScenarioSpec};
use vpe_swarm::vpe::{transition_probabilities, vpe_step, VpeParams, VpeState};

fn main() -> vpe_swarm::Result<()> {
    let k1 = 0.05;
    let k = 0.15;
    let delta0 = 0.1;
    let out = std::path::Path::new("vpe-example-out");
    std::fs::create_dir_all(out)?;
    let mut csv = std::fs::File::create(out.join("chain_sweep.csv"))?;
    writeln!(
        csv,
        "l,epsilon1,epsilon2,delta0,n_max_predicted,n_empirical,lambda2"
    )?;

    println!("   l   lambda2    n_max   n_empirical");
    for l in [4usize, 8, 16, 32, 64, 100] {
        let chain = ChainSpec::from_constants(l, k1, k)?;
        let lambda2 = chain_eigensystem(&chain)[1].0;
        let n_max = predict_nmax(&chain, delta0)?;

        // Live run on the matching line scenario: unit attenuation within
        // range couples immediate neighbors only.
        let spec = ScenarioSpec {
            kind: ScenarioKind::Line,
            size_factor: l as f64,
            spacing: 1.0,
            channel: ChannelModel::unit_within_range(1.5)?,
            seed: 0,
            r0_override: Some(1.0),
        };
        let scenario = spec.build()?;
        let params = VpeParams {
            k,
            k1,
            normalize_every: 0,
            ..VpeParams::default()
        };
        let p_plus = transition_probabilities(&scenario, &params, 1)?;
        let p_minus = transition_probabilities(&scenario, &params, -1)?;
        let gamma = chain.gamma_ratio();
        let total: f64 = (1..=l).map(|i| gamma.powi(-(i as i32))).sum();
        let chi_inf: Vec<f64> = (1..=l)
            .map(|i| {
                let xi = gamma.powi(-(i as i32)) * l as f64 / total;
                -xi.ln() / (2.0 * k)
            })
            .collect();
        let mut state = VpeState::uniform(l);
        let mut n_empirical = 0u64;
        while n_empirical < 10 * n_max.ceil() as u64 {
            let delta = accuracy_trace(&[state.xi_plus.clone()], &chi_inf, 1.0, k)[0];
            if delta <= delta0 {
                break;
            }
            vpe_step(&mut state, &p_plus, &p_minus);
            n_empirical += 1;
        }
        println!("{l:>4}   {lambda2:.5}   {n_max:>7.0}   {n_empirical:>8}");
        writeln!(
            csv,
            "{l},{},{},{delta0},{n_max},{n_empirical},{lambda2}",
            chain.epsilon1, chain.epsilon2
        )?;
    }
    println!("wrote {}", out.join("chain_sweep.csv").display());
    Ok(())
}
