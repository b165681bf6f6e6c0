//! Localization through light emission and ambient-intensity sensing only.
//!
//! Robots never exchange messages: each round they emit an anisotropic light
//! pattern scaled by their particle amount, read the ambient intensity, and
//! update from the two sensed values alone. In the noiseless case the update
//! is algebraically the same round as the matrix iteration, which is what the
//! equivalence tests pin down. Sensor noise enters only at the readings.

use crate::error::{Error, Result};
use crate::report::{RunReport, TraceRecorder};
use crate::swarm::SwarmScenario;
use crate::vec2::Vec2;
use crate::vpe::{extract_dual, ConvergenceCriterion, ConvergenceTracker, RunBudget};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Anisotropic emission pattern: intensity toward direction r is
/// base * exp(anisotropy * (r . axis)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionProfile {
    pub base_intensity: f64,
    pub anisotropy_k: f64,
    pub reference_axis: Vec2,
}

impl EmissionProfile {
    pub fn intensity_toward(&self, direction: Vec2) -> f64 {
        self.base_intensity * (self.anisotropy_k * direction.dot(self.reference_axis)).exp()
    }
}

/// Multiplicative sensor-noise family applied independently per reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    None,
    /// reading = true * (1 + u), u uniform in [-fraction, fraction].
    #[serde(alias = "uniform")]
    UniformMultiplicative,
    /// reading = true * (1 + g), g normal with standard deviation `fraction`.
    #[serde(alias = "gaussian")]
    GaussianMultiplicative,
}

/// Sensor imperfection model. The per-field biases model slowly varying
/// ambient conditions hitting the two opposed runs differently, the drift
/// mechanism the calibration study contrasts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub noise: NoiseKind,
    /// Relative noise amplitude, e.g. 0.10.
    pub noise_fraction: f64,
    /// Systematic relative gain error on readings of the forward field.
    pub bias_plus: f64,
    /// Systematic relative gain error on readings of the reversed field.
    pub bias_minus: f64,
    pub rng_seed: u64,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            noise: NoiseKind::None,
            noise_fraction: 0.0,
            bias_plus: 0.0,
            bias_minus: 0.0,
            rng_seed: 0,
        }
    }
}

impl SensorModel {
    pub fn noiseless() -> Self {
        SensorModel::default()
    }

    pub fn uniform(noise_fraction: f64, rng_seed: u64) -> Self {
        SensorModel {
            noise: NoiseKind::UniformMultiplicative,
            noise_fraction,
            ..SensorModel::default()
        }
        .with_seed(rng_seed)
    }

    pub fn with_seed(mut self, rng_seed: u64) -> Self {
        self.rng_seed = rng_seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_fraction >= 0.0 && self.noise_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "noise_fraction must lie in [0, 1), got {}",
                self.noise_fraction
            )));
        }
        Ok(())
    }
}

/// Which of the two opposed exchange fields a reading belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSign {
    Plus,
    Minus,
}

/// Seeded sensor bank: readings are reproducible bit for bit for a fixed
/// seed and read order.
#[derive(Debug, Clone)]
pub struct SensorBank {
    model: SensorModel,
    rng: ChaCha8Rng,
}

impl SensorBank {
    pub fn new(model: SensorModel) -> Result<Self> {
        model.validate()?;
        Ok(SensorBank {
            model,
            rng: ChaCha8Rng::seed_from_u64(model.rng_seed),
        })
    }

    /// Systematic gain error applied to particle-phase readings of a field.
    pub fn bias_for(&self, field: FieldSign) -> f64 {
        match field {
            FieldSign::Plus => self.model.bias_plus,
            FieldSign::Minus => self.model.bias_minus,
        }
    }

    /// One sensor reading of a true ambient intensity.
    pub fn read(&mut self, true_intensity: f64, bias: f64) -> f64 {
        let u = match self.model.noise {
            NoiseKind::None => 0.0,
            NoiseKind::UniformMultiplicative => {
                let f = self.model.noise_fraction;
                if f > 0.0 {
                    self.rng.random_range(-f..=f)
                } else {
                    0.0
                }
            }
            NoiseKind::GaussianMultiplicative => {
                // Box-Muller from two uniforms; deterministic given the seed.
                let u1: f64 = self.rng.random_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = self.rng.random_range(0.0..std::f64::consts::TAU);
                self.model.noise_fraction * (-2.0 * u1.ln()).sqrt() * u2.cos()
            }
        };
        true_intensity * (1.0 + bias) * (1.0 + u)
    }

    fn sample_skip(&mut self, probability: f64) -> bool {
        probability > 0.0 && self.rng.random_range(0.0..1.0) < probability
    }
}

/// Constants of the sensing-only implementation and its calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalParams {
    /// Emission scale of the particle-carrying pattern.
    pub k1: f64,
    /// Emission scale of the outflow-measuring pattern.
    pub k2: f64,
    /// Isotropic emission scale of the calibration process.
    pub k3: f64,
    /// Isotropic reference emission scale of the calibration process.
    pub k4: f64,
    /// Anisotropy constant shared with the matrix formulation.
    pub k: f64,
    /// Re-measure the outflow reference every round instead of once up front.
    pub recalibrate_c_every_round: bool,
    /// Run total-amount calibration every this many rounds; 0 disables.
    #[serde(default)]
    pub calibrate_every: u64,
    /// Rescale totals exactly instead of running the distributed isotropic
    /// process. The distributed process realizes the same contract but needs
    /// its round count to exceed the swarm mixing time.
    #[serde(default)]
    pub exact_calibration: bool,
    /// Synchronous rounds of the isotropic calibration process.
    #[serde(default = "default_calibration_rounds")]
    pub calibration_rounds: u64,
    /// Probability that a robot misses a whole round (synchronization loss).
    #[serde(default)]
    pub skip_probability: f64,
}

fn default_calibration_rounds() -> u64 {
    60
}

impl Default for OpticalParams {
    fn default() -> Self {
        OpticalParams {
            k1: 0.05,
            k2: 0.05,
            k3: 0.05,
            k4: 0.05,
            k: 0.15,
            recalibrate_c_every_round: false,
            calibrate_every: 20,
            exact_calibration: false,
            calibration_rounds: default_calibration_rounds(),
            skip_probability: 0.0,
        }
    }
}

impl OpticalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k2 > 0.0 && self.k3 > 0.0 && self.k4 > 0.0 && self.k > 0.0) {
            return Err(Error::InvalidParameter(
                "optical constants must all be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.skip_probability) {
            return Err(Error::InvalidParameter(format!(
                "skip_probability must lie in [0, 1), got {}",
                self.skip_probability
            )));
        }
        Ok(())
    }
}

/// True (noise-free) ambient intensities under per-robot emission profiles:
/// entry i sums the contributions every other robot's pattern sends toward i.
fn ambient_intensities(
    scenario: &SwarmScenario,
    profile: impl Fn(usize) -> EmissionProfile,
    active: Option<&[bool]>,
) -> Vec<f64> {
    let l = scenario.len();
    let mut out = vec![0.0; l];
    for i in 0..l {
        let (nbrs, vals) = scenario.gamma.row(i);
        let mut acc = 0.0;
        for (j, g) in nbrs.iter().zip(vals) {
            let j = *j as usize;
            if let Some(mask) = active {
                if !mask[j] {
                    continue;
                }
            }
            let toward_i =
                (scenario.poses[i].position - scenario.poses[j].position).unit();
            acc += g * profile(j).intensity_toward(toward_i);
        }
        out[i] = acc;
    }
    out
}

/// One sensing round along `direction` for the field `field`: the ambient
/// change from the particle-carrying emissions (s) and from the reference
/// emissions (c), both with sensor noise applied per reading.
pub fn sense_round(
    scenario: &SwarmScenario,
    xi: &[f64],
    params: &OpticalParams,
    sensors: &mut SensorBank,
    direction: Vec2,
    field: FieldSign,
) -> (Vec<f64>, Vec<f64>) {
    let s = sense_particle_phase(scenario, xi, params, sensors, direction, field, None);
    let c = sense_reference_phase(scenario, params, sensors, direction, None);
    (s, c)
}

fn sense_particle_phase(
    scenario: &SwarmScenario,
    xi: &[f64],
    params: &OpticalParams,
    sensors: &mut SensorBank,
    direction: Vec2,
    field: FieldSign,
    active: Option<&[bool]>,
) -> Vec<f64> {
    let k = params.k;
    let k1 = params.k1;
    let true_s = ambient_intensities(
        scenario,
        |j| EmissionProfile {
            base_intensity: xi[j] * k1,
            anisotropy_k: -k,
            reference_axis: direction,
        },
        active,
    );
    let bias = sensors.bias_for(field);
    true_s
        .into_iter()
        .map(|v| sensors.read(v, bias))
        .collect()
}

fn sense_reference_phase(
    scenario: &SwarmScenario,
    params: &OpticalParams,
    sensors: &mut SensorBank,
    direction: Vec2,
    active: Option<&[bool]>,
) -> Vec<f64> {
    let k = params.k;
    let k2 = params.k2;
    let true_c = ambient_intensities(
        scenario,
        |_| EmissionProfile {
            base_intensity: k2,
            anisotropy_k: k,
            reference_axis: direction,
        },
        active,
    );
    true_c
        .into_iter()
        .map(|v| sensors.read(v, 0.0))
        .collect()
}

/// The communication-free round update of robot `robot`: keep what was not
/// sent out, add what was sensed coming in. Fails when the sensed outflow
/// reference says the robot would send out a whole unit or more.
pub fn optical_update(robot: usize, xi_i: f64, s_i: f64, c_i: f64, k1: f64, k2: f64) -> Result<f64> {
    let ratio = c_i * k1 / k2;
    if ratio >= 1.0 {
        return Err(Error::OverdrawnRobot { robot, ratio });
    }
    Ok((1.0 - ratio) * xi_i + s_i)
}

/// Distributed calibration of the total particle amount.
///
/// Each robot runs an auxiliary isotropic exchange for `n_m` rounds starting
/// from its own amount; the auxiliary value converges to the swarm mean, and
/// dividing by it rescales the total toward the robot count while preserving
/// ratios. Works from sensed intensities alone.
pub fn calibrate_total(
    scenario: &SwarmScenario,
    xi: &[f64],
    k3: f64,
    k4: f64,
    n_m: u64,
    sensors: &mut SensorBank,
) -> Result<Vec<f64>> {
    let mut aux = xi.to_vec();
    let true_c = ambient_intensities(
        scenario,
        |_| EmissionProfile {
            base_intensity: k4,
            anisotropy_k: 0.0,
            reference_axis: Vec2::new(1.0, 0.0),
        },
        None,
    );
    let c: Vec<f64> = true_c.into_iter().map(|v| sensors.read(v, 0.0)).collect();
    for _ in 0..n_m {
        let true_s = ambient_intensities(
            scenario,
            |j| EmissionProfile {
                base_intensity: aux[j] * k3,
                anisotropy_k: 0.0,
                reference_axis: Vec2::new(1.0, 0.0),
            },
            None,
        );
        let mut next = Vec::with_capacity(aux.len());
        for (i, s_true) in true_s.into_iter().enumerate() {
            let s = sensors.read(s_true, 0.0);
            next.push(optical_update(i, aux[i], s, c[i], k3, k4)?);
        }
        aux = next;
    }
    Ok(xi
        .iter()
        .zip(&aux)
        .map(|(x, a)| x / a)
        .collect())
}

/// One opposed pair of sensed exchanges along an axis.
#[derive(Debug, Clone)]
struct OpticalAxis {
    axis: Vec2,
    xi_plus: Vec<f64>,
    xi_minus: Vec<f64>,
    c_plus: Vec<f64>,
    c_minus: Vec<f64>,
}

/// Row of the optional sensed-intensity trace (x axis, forward field).
#[derive(Debug, Clone, Copy)]
pub struct SenseSample {
    pub iteration: u64,
    pub robot: usize,
    pub s: f64,
    pub c: f64,
    pub xi_plus: f64,
    pub xi_minus: f64,
}

/// A sensing-only localization in progress.
#[derive(Debug)]
pub struct OpticalSession {
    pub params: OpticalParams,
    sensors: SensorBank,
    axes: Vec<OpticalAxis>,
    r0: f64,
    iteration: u64,
    sense_trace: Option<(u64, Vec<SenseSample>)>,
    last_forward_s: Vec<f64>,
}

impl OpticalSession {
    pub fn new(
        scenario: &SwarmScenario,
        params: OpticalParams,
        sensor_model: SensorModel,
    ) -> Result<Self> {
        params.validate()?;
        let mut sensors = SensorBank::new(sensor_model)?;
        let l = scenario.len();
        let mut axes = vec![make_axis(scenario, &params, &mut sensors, scenario.x_axis, l)];
        if !scenario.is_x_degenerate() {
            axes.push(make_axis(
                scenario,
                &params,
                &mut sensors,
                scenario.y_axis(),
                l,
            ));
        }
        Ok(OpticalSession {
            params,
            sensors,
            axes,
            r0: scenario.r0,
            iteration: 0,
            sense_trace: None,
            last_forward_s: vec![0.0; l],
        })
    }

    /// Records the forward x-axis readings every `stride` rounds.
    pub fn enable_sense_trace(&mut self, stride: u64) {
        self.sense_trace = Some((stride.max(1), Vec::new()));
    }

    pub fn sense_samples(&self) -> &[SenseSample] {
        self.sense_trace.as_ref().map(|(_, v)| v.as_slice()).unwrap_or(&[])
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Warm start: keep particle amounts, refresh the reference readings for
    /// a moved swarm.
    pub fn rebuild(&mut self, scenario: &SwarmScenario) -> Result<()> {
        self.r0 = scenario.r0;
        for axis in &mut self.axes {
            axis.c_plus =
                sense_reference_phase(scenario, &self.params, &mut self.sensors, axis.axis, None);
            axis.c_minus = sense_reference_phase(
                scenario,
                &self.params,
                &mut self.sensors,
                axis.axis * -1.0,
                None,
            );
        }
        Ok(())
    }

    /// One synchronous round: sense, update, optionally calibrate.
    pub fn step(&mut self, scenario: &SwarmScenario) -> Result<()> {
        self.iteration += 1;
        let l = scenario.len();
        let active: Option<Vec<bool>> = if self.params.skip_probability > 0.0 {
            Some(
                (0..l)
                    .map(|_| !self.sensors.sample_skip(self.params.skip_probability))
                    .collect(),
            )
        } else {
            None
        };
        let active_slice = active.as_deref();
        for (axis_idx, axis) in self.axes.iter_mut().enumerate() {
            if self.params.recalibrate_c_every_round {
                axis.c_plus = sense_reference_phase(
                    scenario,
                    &self.params,
                    &mut self.sensors,
                    axis.axis,
                    active_slice,
                );
                axis.c_minus = sense_reference_phase(
                    scenario,
                    &self.params,
                    &mut self.sensors,
                    axis.axis * -1.0,
                    active_slice,
                );
            }
            let s_plus = sense_particle_phase(
                scenario,
                &axis.xi_plus,
                &self.params,
                &mut self.sensors,
                axis.axis,
                FieldSign::Plus,
                active_slice,
            );
            let s_minus = sense_particle_phase(
                scenario,
                &axis.xi_minus,
                &self.params,
                &mut self.sensors,
                axis.axis * -1.0,
                FieldSign::Minus,
                active_slice,
            );
            if axis_idx == 0 {
                self.last_forward_s.copy_from_slice(&s_plus);
            }
            for i in 0..l {
                if let Some(mask) = active_slice {
                    if !mask[i] {
                        continue;
                    }
                }
                axis.xi_plus[i] = optical_update(
                    i,
                    axis.xi_plus[i],
                    s_plus[i],
                    axis.c_plus[i],
                    self.params.k1,
                    self.params.k2,
                )?;
                axis.xi_minus[i] = optical_update(
                    i,
                    axis.xi_minus[i],
                    s_minus[i],
                    axis.c_minus[i],
                    self.params.k1,
                    self.params.k2,
                )?;
            }
        }
        if self.params.calibrate_every > 0 && self.iteration % self.params.calibrate_every == 0 {
            self.calibrate(scenario)?;
        }
        if let Some((stride, samples)) = &mut self.sense_trace {
            if self.iteration % *stride == 0 {
                let axis = &self.axes[0];
                for i in 0..l {
                    samples.push(SenseSample {
                        iteration: self.iteration,
                        robot: i,
                        s: self.last_forward_s[i],
                        c: axis.c_plus[i],
                        xi_plus: axis.xi_plus[i],
                        xi_minus: axis.xi_minus[i],
                    });
                }
            }
        }
        Ok(())
    }

    /// Rescales every field's total toward the robot count, either exactly
    /// or by the distributed procedure.
    pub fn calibrate(&mut self, scenario: &SwarmScenario) -> Result<()> {
        if self.params.exact_calibration {
            for axis in &mut self.axes {
                crate::vpe::normalize(&mut axis.xi_plus);
                crate::vpe::normalize(&mut axis.xi_minus);
            }
            return Ok(());
        }
        for axis in &mut self.axes {
            axis.xi_plus = calibrate_total(
                scenario,
                &axis.xi_plus,
                self.params.k3,
                self.params.k4,
                self.params.calibration_rounds,
                &mut self.sensors,
            )?;
            axis.xi_minus = calibrate_total(
                scenario,
                &axis.xi_minus,
                self.params.k3,
                self.params.k4,
                self.params.calibration_rounds,
                &mut self.sensors,
            )?;
        }
        Ok(())
    }

    /// Current plane estimate.
    pub fn chi(&self) -> Vec<Vec2> {
        let l = self.axes[0].xi_plus.len();
        let mut result = vec![Vec2::default(); l];
        for axis in &self.axes {
            let coords = extract_dual(&axis.xi_plus, &axis.xi_minus, self.r0, self.params.k);
            for (acc, c) in result.iter_mut().zip(coords) {
                *acc += axis.axis * c;
            }
        }
        result
    }

    fn axis_chi(&self, idx: usize) -> Vec<f64> {
        let axis = &self.axes[idx];
        extract_dual(&axis.xi_plus, &axis.xi_minus, self.r0, self.params.k)
    }

    pub fn run_iters(&mut self, scenario: &SwarmScenario, iters: u64) -> Result<()> {
        for _ in 0..iters {
            self.step(scenario)?;
        }
        Ok(())
    }

    /// Runs to the stopping criterion, mirroring the matrix-path driver.
    pub fn run(
        &mut self,
        scenario: &SwarmScenario,
        stop: &ConvergenceCriterion,
        budget: RunBudget,
    ) -> Result<RunReport> {
        let start = Instant::now();
        let truth = scenario.positions();
        let mut trackers: Vec<ConvergenceTracker> = match stop {
            ConvergenceCriterion::OracleTolerance { .. } => {
                let oracle = self.noiseless_equilibrium(scenario)?;
                oracle
                    .into_iter()
                    .map(|chi_inf| ConvergenceTracker::new(stop, Some(chi_inf)))
                    .collect()
            }
            _ => self
                .axes
                .iter()
                .map(|_| ConvergenceTracker::new(stop, None))
                .collect(),
        };
        let mut converged: Vec<Option<u64>> = vec![None; self.axes.len()];
        let mut recorder = TraceRecorder::default();
        loop {
            let iteration = self.iteration;
            for idx in 0..self.axes.len() {
                if converged[idx].is_none() && trackers[idx].check(iteration, &self.axis_chi(idx))
                {
                    converged[idx] = Some(iteration);
                }
            }
            recorder.record(iteration, &self.chi(), &truth);
            if converged.iter().all(|c| c.is_some()) {
                break;
            }
            if iteration >= budget.max_iterations {
                return Err(Error::MaxIterationsExceeded {
                    budget: budget.max_iterations,
                });
            }
            self.step(scenario)?;
        }
        let converged_at = converged.iter().map(|c| c.unwrap()).max().unwrap_or(0);
        Ok(recorder.finish(
            converged_at,
            self.iteration,
            self.chi(),
            &truth,
            start.elapsed(),
        ))
    }

    /// Equilibrium of the matching matrix iteration, used by the oracle
    /// stopping rule. Meaningful for noiseless or lightly noisy runs.
    fn noiseless_equilibrium(&self, scenario: &SwarmScenario) -> Result<Vec<Vec<f64>>> {
        let params = self.matching_vpe_params();
        self.axes
            .iter()
            .map(|axis| {
                let p_plus =
                    crate::vpe::TransferProbabilities::build(scenario, &params, axis.axis)?;
                let p_minus = crate::vpe::TransferProbabilities::build(
                    scenario,
                    &params,
                    axis.axis * -1.0,
                )?;
                crate::spectral::dual_equilibrium_chi(
                    &p_plus,
                    &p_minus,
                    self.r0,
                    self.params.k,
                    None,
                )
            })
            .collect()
    }

    /// The matrix-formulation constants this optical configuration realizes.
    pub fn matching_vpe_params(&self) -> crate::vpe::VpeParams {
        crate::vpe::VpeParams {
            k: self.params.k,
            k1: self.params.k1,
            k0: self.params.k1,
            variant: crate::vpe::Variant::UnitDirection,
            normalize_every: 0,
            beacons: Vec::new(),
        }
    }
}

fn make_axis(
    scenario: &SwarmScenario,
    params: &OpticalParams,
    sensors: &mut SensorBank,
    axis: Vec2,
    l: usize,
) -> OpticalAxis {
    let c_plus = sense_reference_phase(scenario, params, sensors, axis, None);
    let c_minus = sense_reference_phase(scenario, params, sensors, axis * -1.0, None);
    OpticalAxis {
        axis,
        xi_plus: vec![1.0; l],
        xi_minus: vec![1.0; l],
        c_plus,
        c_minus,
    }
}

/// Full sensing-only localization from the uniform initial state.
pub fn run_optical_localization(
    scenario: &SwarmScenario,
    params: &OpticalParams,
    sensor_model: SensorModel,
    stop: &ConvergenceCriterion,
    budget: RunBudget,
) -> Result<RunReport> {
    let mut session = OpticalSession::new(scenario, *params, sensor_model)?;
    session.run(scenario, stop, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swarm::{ChannelModel, ScenarioKind, ScenarioSpec};
    use crate::vpe::{transition_probabilities, vpe_step, VpeState};
    use approx::assert_relative_eq;

    fn two_robot_scenario() -> SwarmScenario {
        SwarmScenario::from_positions(
            vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)],
            ChannelModel::unit_within_range(1.5).unwrap(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn sensed_intensities_match_hand_evaluation() {
        let scenario = two_robot_scenario();
        let params = OpticalParams::default();
        let mut sensors = SensorBank::new(SensorModel::noiseless()).unwrap();
        let xi = vec![2.0, 3.0];
        let (s, c) = sense_round(
            &scenario,
            &xi,
            &params,
            &mut sensors,
            Vec2::new(1.0, 0.0),
            FieldSign::Plus,
        );
        // Robot 0 hears robot 1 shining down the -x direction of its own
        // pattern: the particle phase is brighter, the reference phase dimmer.
        assert_relative_eq!(s[0], 3.0 * 0.05 * (0.15f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(s[1], 2.0 * 0.05 * (-0.15f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(c[0], 0.05 * (-0.15f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(c[1], 0.05 * (0.15f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn isolated_robot_senses_nothing() {
        let scenario = SwarmScenario::from_positions(
            vec![Vec2::new(0.0, 0.0)],
            ChannelModel::unit_within_range(1.0).unwrap(),
            None,
        )
        .unwrap();
        let params = OpticalParams::default();
        let mut sensors = SensorBank::new(SensorModel::noiseless()).unwrap();
        let (s, c) = sense_round(
            &scenario,
            &[1.0],
            &params,
            &mut sensors,
            Vec2::new(1.0, 0.0),
            FieldSign::Plus,
        );
        assert_eq!(s, vec![0.0]);
        assert_eq!(c, vec![0.0]);
        // Nothing sensed means nothing changes.
        let next = optical_update(0, 1.0, s[0], c[0], params.k1, params.k2).unwrap();
        assert_eq!(next, 1.0);
    }

    #[test]
    fn isotropic_reference_sums_the_attenuations() {
        let positions = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.2),
        ];
        let scenario = SwarmScenario::from_positions(
            positions,
            ChannelModel::inverse_square(1.0, 2.0).unwrap(),
            None,
        )
        .unwrap();
        let params = OpticalParams {
            k: 0.0,
            ..OpticalParams::default()
        };
        let mut sensors = SensorBank::new(SensorModel::noiseless()).unwrap();
        let (_, c) = sense_round(
            &scenario,
            &[1.0, 1.0, 1.0],
            &params,
            &mut sensors,
            Vec2::new(1.0, 0.0),
            FieldSign::Plus,
        );
        let expected: f64 = scenario.gamma.row(0).1.iter().sum::<f64>() * params.k2;
        assert_relative_eq!(c[0], expected, max_relative = 1e-12);
    }

    #[test]
    fn overdrawn_robot_is_rejected() {
        // c k1/k2 = 1.2.
        let err = optical_update(3, 1.0, 0.0, 1.2, 0.05, 0.05).unwrap_err();
        match err {
            Error::OverdrawnRobot { robot, ratio } => {
                assert_eq!(robot, 3);
                assert_relative_eq!(ratio, 1.2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn noiseless_round_equals_matrix_round_elementwise() {
        for seed in 0..10u64 {
            let spec = ScenarioSpec {
                kind: ScenarioKind::Square,
                size_factor: 3.2,
                spacing: 1.0,
                channel: ChannelModel::inverse_square(1.0, 2.5).unwrap(),
                seed,
                r0_override: None,
            };
            let scenario = spec.build().unwrap();
            let optical = OpticalParams {
                k2: 0.08,
                ..OpticalParams::default()
            };
            let mut sensors = SensorBank::new(SensorModel::noiseless()).unwrap();
            let xi: Vec<f64> = (0..scenario.len())
                .map(|i| 0.5 + 0.1 * (i as f64))
                .collect();
            let direction = scenario.x_axis;
            let (s, c) = sense_round(&scenario, &xi, &optical, &mut sensors, direction, FieldSign::Plus);
            let sensed: Vec<f64> = (0..scenario.len())
                .map(|i| optical_update(i, xi[i], s[i], c[i], optical.k1, optical.k2).unwrap())
                .collect();

            let vpe_params = crate::vpe::VpeParams {
                k: optical.k,
                k1: optical.k1,
                normalize_every: 0,
                ..crate::vpe::VpeParams::default()
            };
            let p_plus = transition_probabilities(&scenario, &vpe_params, 1).unwrap();
            let p_minus = transition_probabilities(&scenario, &vpe_params, -1).unwrap();
            let mut state = VpeState::from_fields(xi.clone(), xi.clone());
            vpe_step(&mut state, &p_plus, &p_minus);
            for (a, b) in sensed.iter().zip(&state.xi_plus) {
                assert_relative_eq!(a, b, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn calibration_rescales_totals_and_preserves_ratios() {
        let positions = (0..5).map(|i| Vec2::new(i as f64, 0.0)).collect();
        let scenario = SwarmScenario::from_positions(
            positions,
            ChannelModel::unit_within_range(1.5).unwrap(),
            None,
        )
        .unwrap();
        let mut sensors = SensorBank::new(SensorModel::noiseless()).unwrap();
        let base = vec![0.4, 0.8, 1.9, 0.6, 1.1];
        let xi: Vec<f64> = base.iter().map(|v| v * 3.0).collect();
        let calibrated =
            calibrate_total(&scenario, &xi, 0.2, 0.2, 200, &mut sensors).unwrap();
        let total: f64 = calibrated.iter().sum();
        assert!((total - 5.0).abs() < 0.05, "total = {total}");
        for i in 0..4 {
            let before = xi[i] / xi[i + 1];
            let after = calibrated[i] / calibrated[i + 1];
            assert_relative_eq!(before, after, max_relative = 1e-6);
        }
    }

    #[test]
    fn calibration_is_near_identity_at_the_fixed_point() {
        let positions = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)];
        let scenario = SwarmScenario::from_positions(
            positions,
            ChannelModel::unit_within_range(1.5).unwrap(),
            None,
        )
        .unwrap();
        let mut sensors = SensorBank::new(SensorModel::noiseless()).unwrap();
        let xi = vec![1.2, 0.8]; // already sums to the robot count
        let calibrated =
            calibrate_total(&scenario, &xi, 0.05, 0.05, 400, &mut sensors).unwrap();
        for (a, b) in xi.iter().zip(&calibrated) {
            assert_relative_eq!(a, b, max_relative = 1e-6);
        }
        // Fully connected pair scaled by 2 comes back to unit mean.
        let doubled = vec![2.0, 2.0];
        let calibrated =
            calibrate_total(&scenario, &doubled, 0.05, 0.05, 400, &mut sensors).unwrap();
        assert_relative_eq!(calibrated[0], 1.0, max_relative = 1e-9);
        assert_relative_eq!(calibrated[1], 1.0, max_relative = 1e-9);
    }

    #[test]
    fn seeded_noise_is_reproducible_bit_for_bit() {
        let spec = ScenarioSpec {
            kind: ScenarioKind::Square,
            size_factor: 3.0,
            spacing: 1.0,
            channel: ChannelModel::inverse_square(1.0, 2.5).unwrap(),
            seed: 5,
            r0_override: None,
        };
        let scenario = spec.build().unwrap();
        let params = OpticalParams::default();
        let model = SensorModel::uniform(0.10, 99);
        let mut a = OpticalSession::new(&scenario, params, model).unwrap();
        let mut b = OpticalSession::new(&scenario, params, model).unwrap();
        a.run_iters(&scenario, 40).unwrap();
        b.run_iters(&scenario, 40).unwrap();
        for (x, y) in a.chi().iter().zip(b.chi().iter()) {
            assert_eq!(x.x.to_bits(), y.x.to_bits());
            assert_eq!(x.y.to_bits(), y.y.to_bits());
        }
    }
}
