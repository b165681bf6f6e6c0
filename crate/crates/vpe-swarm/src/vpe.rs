//! The matrix-form virtual-particle exchange iteration: per-pair transfer
//! probabilities, the synchronous round update, normalization, dual-direction
//! result extraction and the localization run driver.

use crate::error::{Error, Result};
use crate::report::{RunReport, TraceRecorder};
use crate::swarm::SwarmScenario;
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// How the transfer exponent uses the neighbor offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Exponent uses the full displacement; exact up to a translation, but
    /// requires relative-position sensing.
    ExactDisplacement,
    /// Exponent uses only the bearing; realizable with anisotropic light.
    UnitDirection,
}

impl Default for Variant {
    fn default() -> Self {
        Variant::UnitDirection
    }
}

/// A robot with a known position whose particle amount is pinned each round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beacon {
    pub robot: usize,
    pub position: Vec2,
}

/// Constants of the exchange process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VpeParams {
    /// Anisotropy constant of the transfer exponent.
    pub k: f64,
    /// Speed constant of the exact-displacement variant.
    pub k0: f64,
    /// Speed constant of the unit-direction variant.
    pub k1: f64,
    pub variant: Variant,
    /// Rescale totals every this many iterations; 0 disables.
    pub normalize_every: u64,
    #[serde(default)]
    pub beacons: Vec<Beacon>,
}

impl Default for VpeParams {
    fn default() -> Self {
        VpeParams {
            k: 0.15,
            k0: 0.05,
            k1: 0.05,
            variant: Variant::UnitDirection,
            normalize_every: 20,
            beacons: Vec::new(),
        }
    }
}

impl VpeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 0.0) || !(self.k0 > 0.0) || !(self.k1 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "constants must be positive (k = {}, k0 = {}, k1 = {})",
                self.k, self.k0, self.k1
            )));
        }
        Ok(())
    }

    /// Distance scale of result extraction: r0 for the unit-direction
    /// variant, 1 for exact displacement.
    pub fn extraction_scale(&self, r0: f64) -> f64 {
        match self.variant {
            Variant::ExactDisplacement => 1.0,
            Variant::UnitDirection => r0,
        }
    }

    fn speed_constant(&self) -> f64 {
        match self.variant {
            Variant::ExactDisplacement => self.k0,
            Variant::UnitDirection => self.k1,
        }
    }
}

/// Per-pair transfer probabilities for one exchange direction, stored as
/// sparse rows over the attenuation pattern.
///
/// For each robot i, `out` holds P(i -> j) and `inc` holds P(j -> i) for the
/// neighbors j of i, so one pass computes both sides of the round update.
#[derive(Debug, Clone)]
pub struct TransferProbabilities {
    l: usize,
    /// Direction of the exchange (axis times sign), a unit vector.
    pub axis: Vec2,
    offsets: Vec<usize>,
    cols: Vec<u32>,
    out: Vec<f64>,
    inc: Vec<f64>,
    outflow: Vec<f64>,
}

impl TransferProbabilities {
    /// Builds P for the exchange along `direction` (unit vector). Fails with
    /// `ExcessiveTransfer` when some robot would send out one whole unit or
    /// more per round.
    pub fn build(
        scenario: &SwarmScenario,
        params: &VpeParams,
        direction: Vec2,
    ) -> Result<Self> {
        params.validate()?;
        let l = scenario.len();
        let speed = params.speed_constant();
        let gamma = &scenario.gamma;
        let mut offsets = Vec::with_capacity(l + 1);
        offsets.push(0usize);
        let mut cols = Vec::with_capacity(gamma.nnz());
        let mut out = Vec::with_capacity(gamma.nnz());
        let mut inc = Vec::with_capacity(gamma.nnz());
        let mut outflow = Vec::with_capacity(l);
        let mut worst = (0usize, 0.0f64);
        for i in 0..l {
            let (nbrs, vals) = gamma.row(i);
            let mut row_sum = 0.0;
            for (j, g) in nbrs.iter().zip(vals) {
                let j = *j as usize;
                let offset = scenario.poses[j].position - scenario.poses[i].position;
                let t = match params.variant {
                    Variant::ExactDisplacement => offset.dot(direction),
                    Variant::UnitDirection => offset.unit().dot(direction),
                };
                let p_out = g * speed * (-params.k * t).exp();
                let p_in = g * speed * (params.k * t).exp();
                cols.push(j as u32);
                out.push(p_out);
                inc.push(p_in);
                row_sum += p_out;
            }
            offsets.push(cols.len());
            outflow.push(row_sum);
            if row_sum > worst.1 {
                worst = (i, row_sum);
            }
        }
        if worst.1 >= 1.0 {
            return Err(Error::ExcessiveTransfer {
                robot: worst.0,
                sum: worst.1,
            });
        }
        Ok(TransferProbabilities {
            l,
            axis: direction,
            offsets,
            cols,
            out,
            inc,
            outflow,
        })
    }

    pub fn len(&self) -> usize {
        self.l
    }

    pub fn is_empty(&self) -> bool {
        self.l == 0
    }

    /// Neighbor indices of robot i.
    pub fn row_neighbors(&self, i: usize) -> &[u32] {
        &self.cols[self.offsets[i]..self.offsets[i + 1]]
    }

    /// P(i -> j) for the neighbors of i, aligned with `row_neighbors`.
    pub fn row_out(&self, i: usize) -> &[f64] {
        &self.out[self.offsets[i]..self.offsets[i + 1]]
    }

    /// P(j -> i) for the neighbors of i, aligned with `row_neighbors`.
    pub fn row_in(&self, i: usize) -> &[f64] {
        &self.inc[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Total fraction robot i sends away per round.
    pub fn outflow(&self, i: usize) -> f64 {
        self.outflow[i]
    }

    /// P(i -> j); zero when i and j are not coupled.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.row_neighbors(i).binary_search(&(j as u32)) {
            Ok(pos) => self.row_out(i)[pos],
            Err(_) => 0.0,
        }
    }

    /// One synchronous round applied to a particle vector: the i-th output is
    /// what i keeps plus what its neighbors send it.
    pub fn step_into(&self, xi: &[f64], next: &mut [f64]) {
        debug_assert_eq!(xi.len(), self.l);
        debug_assert_eq!(next.len(), self.l);
        for i in 0..self.l {
            let mut acc = xi[i] * (1.0 - self.outflow[i]);
            let range = self.offsets[i]..self.offsets[i + 1];
            for (j, p) in self.cols[range.clone()].iter().zip(&self.inc[range]) {
                acc += xi[*j as usize] * p;
            }
            next[i] = acc;
        }
    }
}

/// Builds P along the scenario's x axis; `axis_sign` selects the forward or
/// reversed direction.
pub fn transition_probabilities(
    scenario: &SwarmScenario,
    params: &VpeParams,
    axis_sign: i32,
) -> Result<TransferProbabilities> {
    let sign = match axis_sign {
        1 => 1.0,
        -1 => -1.0,
        other => {
            return Err(Error::InvalidParameter(format!(
                "axis_sign must be +1 or -1, got {other}"
            )))
        }
    };
    TransferProbabilities::build(scenario, params, scenario.x_axis * sign)
}

/// Particle amounts of the two opposed runs along one axis.
#[derive(Debug, Clone)]
pub struct VpeState {
    pub xi_plus: Vec<f64>,
    pub xi_minus: Vec<f64>,
    pub iteration: u64,
    scratch: Vec<f64>,
}

impl VpeState {
    /// Every robot starts with one particle unit.
    pub fn uniform(l: usize) -> Self {
        VpeState {
            xi_plus: vec![1.0; l],
            xi_minus: vec![1.0; l],
            iteration: 0,
            scratch: vec![0.0; l],
        }
    }

    pub fn len(&self) -> usize {
        self.xi_plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi_plus.is_empty()
    }

    pub fn from_fields(xi_plus: Vec<f64>, xi_minus: Vec<f64>) -> Self {
        assert_eq!(xi_plus.len(), xi_minus.len());
        let l = xi_plus.len();
        VpeState {
            xi_plus,
            xi_minus,
            iteration: 0,
            scratch: vec![0.0; l],
        }
    }
}

/// Advances both opposed fields one synchronous round. Totals are conserved
/// to roundoff because every column of the implied transition matrix sums
/// to one.
pub fn vpe_step(
    state: &mut VpeState,
    p_plus: &TransferProbabilities,
    p_minus: &TransferProbabilities,
) {
    p_plus.step_into(&state.xi_plus, &mut state.scratch);
    std::mem::swap(&mut state.xi_plus, &mut state.scratch);
    p_minus.step_into(&state.xi_minus, &mut state.scratch);
    std::mem::swap(&mut state.xi_minus, &mut state.scratch);
    state.iteration += 1;
}

/// Rescales so the total equals the robot count, preserving ratios.
pub fn normalize(xi: &mut [f64]) {
    let sum: f64 = xi.iter().sum();
    if sum <= 0.0 {
        return;
    }
    let scale = xi.len() as f64 / sum;
    for v in xi.iter_mut() {
        *v *= scale;
    }
}

/// Dual-direction result extraction along one axis.
pub fn extract_positions(state: &VpeState, r0: f64, k: f64) -> Vec<f64> {
    extract_dual(&state.xi_plus, &state.xi_minus, r0, k)
}

pub fn extract_dual(xi_plus: &[f64], xi_minus: &[f64], r0: f64, k: f64) -> Vec<f64> {
    xi_plus
        .iter()
        .zip(xi_minus)
        .map(|(p, m)| r0 * (m.ln() - p.ln()) / (4.0 * k))
        .collect()
}

/// Single-run extraction (forward direction only); the coordinate origin is
/// then pinned by the total particle amount instead of the swarm center.
pub fn extract_single(xi: &[f64], r0: f64, k: f64) -> Vec<f64> {
    xi.iter().map(|v| -r0 * v.ln() / (2.0 * k)).collect()
}

/// Stopping rules for a localization run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConvergenceCriterion {
    /// Stop when the maximum discrepancy between the current result and the
    /// spectral-oracle equilibrium drops below `tol` (per axis).
    OracleTolerance { tol: f64 },
    /// Oracle-free: stop when the translated result varies less than `tol`
    /// across a window of iterations.
    SlidingWindow { window: u64, tol: f64 },
    /// Run a fixed number of rounds.
    FixedIterations { iterations: u64 },
}

/// Iteration budget for localization runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunBudget {
    pub max_iterations: u64,
}

impl Default for RunBudget {
    fn default() -> Self {
        RunBudget {
            max_iterations: 200_000,
        }
    }
}

/// Per-axis convergence tracking.
#[derive(Debug, Clone)]
pub(crate) enum ConvergenceTracker {
    Oracle {
        chi_inf: Vec<f64>,
        tol: f64,
    },
    Window {
        window: u64,
        tol: f64,
        checkpoint: Option<Vec<f64>>,
    },
    Fixed {
        iterations: u64,
    },
}

impl ConvergenceTracker {
    pub(crate) fn new(criterion: &ConvergenceCriterion, chi_inf: Option<Vec<f64>>) -> Self {
        match criterion {
            ConvergenceCriterion::OracleTolerance { tol } => ConvergenceTracker::Oracle {
                chi_inf: chi_inf.expect("oracle criterion needs the equilibrium result"),
                tol: *tol,
            },
            ConvergenceCriterion::SlidingWindow { window, tol } => ConvergenceTracker::Window {
                window: (*window).max(1),
                tol: *tol,
                checkpoint: None,
            },
            ConvergenceCriterion::FixedIterations { iterations } => ConvergenceTracker::Fixed {
                iterations: *iterations,
            },
        }
    }

    /// Checks the criterion at `iteration` given the axis result `chi`.
    pub(crate) fn check(&mut self, iteration: u64, chi: &[f64]) -> bool {
        match self {
            ConvergenceTracker::Oracle { chi_inf, tol } => {
                let worst = chi
                    .iter()
                    .zip(chi_inf.iter())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                worst < *tol
            }
            ConvergenceTracker::Window {
                window,
                tol,
                checkpoint,
            } => {
                if iteration % *window != 0 {
                    return false;
                }
                let mean = chi.iter().sum::<f64>() / chi.len().max(1) as f64;
                let translated: Vec<f64> = chi.iter().map(|v| v - mean).collect();
                let converged = match checkpoint {
                    Some(prev) => {
                        let worst = translated
                            .iter()
                            .zip(prev.iter())
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0f64, f64::max);
                        worst < *tol
                    }
                    None => false,
                };
                *checkpoint = Some(translated);
                converged
            }
            ConvergenceTracker::Fixed { iterations } => iteration >= *iterations,
        }
    }
}

/// One axis of a localization: the opposed transfer matrices, the particle
/// state and the fixed beacon amounts.
#[derive(Debug, Clone)]
pub struct AxisField {
    pub axis: Vec2,
    pub p_plus: TransferProbabilities,
    pub p_minus: TransferProbabilities,
    pub state: VpeState,
    beacon_plus: Vec<(usize, f64)>,
    beacon_minus: Vec<(usize, f64)>,
}

impl AxisField {
    fn new(scenario: &SwarmScenario, params: &VpeParams, axis: Vec2) -> Result<Self> {
        let p_plus = TransferProbabilities::build(scenario, params, axis)?;
        let p_minus = TransferProbabilities::build(scenario, params, -axis)?;
        let mut field = AxisField {
            axis,
            p_plus,
            p_minus,
            state: VpeState::uniform(scenario.len()),
            beacon_plus: Vec::new(),
            beacon_minus: Vec::new(),
        };
        field.set_beacons(scenario, params)?;
        field.apply_beacons();
        Ok(field)
    }

    fn set_beacons(&mut self, scenario: &SwarmScenario, params: &VpeParams) -> Result<()> {
        let scale = params.extraction_scale(scenario.r0);
        self.beacon_plus.clear();
        self.beacon_minus.clear();
        for beacon in &params.beacons {
            if beacon.robot >= scenario.len() {
                return Err(Error::InvalidParameter(format!(
                    "beacon robot {} out of range",
                    beacon.robot
                )));
            }
            let coord = beacon.position.dot(self.axis);
            self.beacon_plus
                .push((beacon.robot, (-2.0 * params.k * coord / scale).exp()));
            self.beacon_minus
                .push((beacon.robot, (2.0 * params.k * coord / scale).exp()));
        }
        Ok(())
    }

    fn apply_beacons(&mut self) {
        for &(robot, value) in &self.beacon_plus {
            self.state.xi_plus[robot] = value;
        }
        for &(robot, value) in &self.beacon_minus {
            self.state.xi_minus[robot] = value;
        }
    }

    fn advance(&mut self, normalize_due: bool) {
        let iter = self.state.iteration;
        vpe_step(&mut self.state, &self.p_plus, &self.p_minus);
        debug_assert_eq!(self.state.iteration, iter + 1);
        if normalize_due {
            normalize(&mut self.state.xi_plus);
            normalize(&mut self.state.xi_minus);
        }
        self.apply_beacons();
    }

    /// Axis-frame coordinates of the current estimate.
    pub fn chi(&self, scale: f64, k: f64) -> Vec<f64> {
        extract_positions(&self.state, scale, k)
    }
}

/// A whole localization in progress: one axis pair, or two for planar
/// swarms, advanced in the same synchronous rounds. Keeping the state makes
/// warm-started re-localization of a slowly moving swarm cheap.
#[derive(Debug)]
pub struct LocalizationSession {
    pub params: VpeParams,
    pub axes: Vec<AxisField>,
    scale: f64,
    iteration: u64,
}

impl LocalizationSession {
    pub fn new(scenario: &SwarmScenario, params: VpeParams) -> Result<Self> {
        params.validate()?;
        if !(params.k > 0.0) {
            return Err(Error::InvalidParameter(
                "k must be positive for localization".into(),
            ));
        }
        let mut axes = vec![AxisField::new(scenario, &params, scenario.x_axis)?];
        if !scenario.is_x_degenerate() {
            axes.push(AxisField::new(scenario, &params, scenario.y_axis())?);
        }
        let scale = params.extraction_scale(scenario.r0);
        Ok(LocalizationSession {
            params,
            axes,
            scale,
            iteration: 0,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Rebuilds the transfer matrices after robots moved, keeping the
    /// particle state (warm start).
    pub fn rebuild(&mut self, scenario: &SwarmScenario) -> Result<()> {
        self.scale = self.params.extraction_scale(scenario.r0);
        for field in &mut self.axes {
            field.p_plus = TransferProbabilities::build(scenario, &self.params, field.axis)?;
            field.p_minus = TransferProbabilities::build(scenario, &self.params, -field.axis)?;
            field.set_beacons(scenario, &self.params)?;
        }
        Ok(())
    }

    /// Advances every axis one synchronous round.
    pub fn step(&mut self) {
        self.iteration += 1;
        let normalize_due = self.params.normalize_every > 0
            && self.iteration % self.params.normalize_every == 0;
        for field in &mut self.axes {
            field.advance(normalize_due);
        }
    }

    pub fn run_iters(&mut self, iters: u64) {
        for _ in 0..iters {
            self.step();
        }
    }

    /// Current plane estimate, combining the per-axis coordinates.
    pub fn chi(&self) -> Vec<Vec2> {
        let l = self.axes[0].state.len();
        let mut result = vec![Vec2::default(); l];
        for field in &self.axes {
            let coords = field.chi(self.scale, self.params.k);
            for (acc, c) in result.iter_mut().zip(coords) {
                *acc += field.axis * c;
            }
        }
        result
    }

    /// Runs until the stopping criterion holds on every axis, recording
    /// traces along the way.
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
                let oracle = crate::spectral::session_equilibrium(self, scenario)?;
                self.axes
                    .iter()
                    .zip(oracle)
                    .map(|(_, chi_inf)| ConvergenceTracker::new(stop, Some(chi_inf)))
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
            for (idx, field) in self.axes.iter().enumerate() {
                if converged[idx].is_none()
                    && trackers[idx].check(iteration, &field.chi(self.scale, self.params.k))
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
            self.step();
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
}

/// Runs a full localization from the uniform initial state.
pub fn run_localization(
    scenario: &SwarmScenario,
    params: &VpeParams,
    stop: &ConvergenceCriterion,
    budget: RunBudget,
) -> Result<RunReport> {
    let mut session = LocalizationSession::new(scenario, params.clone())?;
    session.run(scenario, stop, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swarm::{ChannelModel, ScenarioKind, ScenarioSpec, SwarmScenario};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn line_scenario(n: usize) -> SwarmScenario {
        let positions = (0..n).map(|i| Vec2::new(i as f64, 0.0)).collect();
        SwarmScenario::from_positions(
            positions,
            ChannelModel::unit_within_range(1.5).unwrap(),
            None,
        )
        .unwrap()
    }

    fn two_robot_params() -> VpeParams {
        VpeParams {
            k: 0.15,
            k1: 0.05,
            ..VpeParams::default()
        }
    }

    #[test]
    fn isotropic_probabilities_reduce_to_gamma_scale() {
        let scenario = line_scenario(3);
        let params = VpeParams {
            k: 0.0,
            k1: 0.05,
            ..VpeParams::default()
        };
        let p = transition_probabilities(&scenario, &params, 1).unwrap();
        assert_relative_eq!(p.get(0, 1), 0.05);
        assert_relative_eq!(p.get(1, 0), 0.05);
        assert_relative_eq!(p.get(1, 2), 0.05);
        assert_eq!(p.get(0, 2), 0.0);
    }

    #[test]
    fn two_robot_probabilities_match_hand_evaluation() {
        let scenario = line_scenario(2);
        let p = transition_probabilities(&scenario, &two_robot_params(), 1).unwrap();
        assert_relative_eq!(p.get(0, 1), 0.05 * (-0.15f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(p.get(1, 0), 0.05 * (0.15f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(p.get(0, 1), 0.043035, max_relative = 1e-4);
        assert_relative_eq!(p.get(1, 0), 0.058092, max_relative = 1e-4);
    }

    #[test]
    fn excessive_transfer_is_reported_with_the_worst_robot() {
        // Star center with neighbors on both sides at unit distance.
        let positions = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(-1.0, 0.0),
        ];
        let scenario = SwarmScenario::from_positions(
            positions,
            ChannelModel::unit_within_range(1.5).unwrap(),
            None,
        )
        .unwrap();
        let params = VpeParams {
            k: 0.15,
            k1: 0.6,
            ..VpeParams::default()
        };
        let err = transition_probabilities(&scenario, &params, 1).unwrap_err();
        match err {
            Error::ExcessiveTransfer { robot, sum } => {
                assert_eq!(robot, 0);
                let expected = 0.6 * ((0.15f64).exp() + (-0.15f64).exp());
                assert_relative_eq!(sum, expected, max_relative = 1e-12);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn single_robot_round_is_identity() {
        let scenario = SwarmScenario::from_positions(
            vec![Vec2::new(0.0, 0.0)],
            ChannelModel::unit_within_range(1.5).unwrap(),
            None,
        )
        .unwrap();
        let params = two_robot_params();
        let p_plus = transition_probabilities(&scenario, &params, 1).unwrap();
        let p_minus = transition_probabilities(&scenario, &params, -1).unwrap();
        let mut state = VpeState::uniform(1);
        vpe_step(&mut state, &p_plus, &p_minus);
        assert_eq!(state.xi_plus, vec![1.0]);
        assert_eq!(state.xi_minus, vec![1.0]);
        assert_eq!(state.iteration, 1);
    }

    #[test]
    fn two_robot_round_matches_hand_evaluation() {
        let scenario = line_scenario(2);
        let params = two_robot_params();
        let p_plus = transition_probabilities(&scenario, &params, 1).unwrap();
        let p_minus = transition_probabilities(&scenario, &params, -1).unwrap();
        let mut state = VpeState::uniform(2);
        vpe_step(&mut state, &p_plus, &p_minus);
        assert_relative_eq!(state.xi_plus[0], 1.015057, max_relative = 1e-5);
        assert_relative_eq!(state.xi_plus[1], 0.984943, max_relative = 1e-5);
        // The reversed run sees the mirrored geometry.
        assert_relative_eq!(state.xi_minus[0], 0.984943, max_relative = 1e-5);
        assert_relative_eq!(state.xi_minus[1], 1.015057, max_relative = 1e-5);
    }

    #[test]
    fn normalize_matches_stated_examples() {
        let mut a = vec![2.0, 2.0, 2.0];
        normalize(&mut a);
        assert_eq!(a, vec![1.0, 1.0, 1.0]);

        let mut b = vec![1.0, 2.0, 3.0];
        normalize(&mut b);
        assert_relative_eq!(b[0], 0.5);
        assert_relative_eq!(b[1], 1.0);
        assert_relative_eq!(b[2], 1.5);

        let mut c = vec![1e-8, 1e-8];
        normalize(&mut c);
        assert_relative_eq!(c[0], 1.0);
        assert_relative_eq!(c[1], 1.0);
    }

    #[test]
    fn extraction_recovers_exponential_profile() {
        let k = 0.15;
        let xs: [f64; 4] = [-1.0, 0.0, 0.5, 2.0];
        let xi_plus: Vec<f64> = xs.iter().map(|x| (-2.0 * k * x).exp()).collect();
        let xi_minus: Vec<f64> = xs.iter().map(|x| (2.0 * k * x).exp()).collect();
        let chi = extract_dual(&xi_plus, &xi_minus, 1.0, k);
        for (c, x) in chi.iter().zip(xs) {
            assert_relative_eq!(*c, x, max_relative = 1e-12);
        }
        let zero = extract_dual(&xi_plus, &xi_plus.clone(), 1.0, k);
        for c in zero {
            assert_relative_eq!(c, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn scaling_one_field_shifts_uniformly() {
        let k = 0.15;
        let r0 = 1.4;
        let xi_plus = vec![0.3, 1.1, 2.4];
        let xi_minus = vec![0.9, 0.8, 1.5];
        let base = extract_dual(&xi_plus, &xi_minus, r0, k);
        let c = 3.7;
        let scaled: Vec<f64> = xi_plus.iter().map(|v| v * c).collect();
        let shifted = extract_dual(&scaled, &xi_minus, r0, k);
        let expected_shift = -r0 * c.ln() / (4.0 * k);
        for (s, b) in shifted.iter().zip(&base) {
            assert_relative_eq!(s - b, expected_shift, max_relative = 1e-10);
        }
    }

    #[test]
    fn dual_fields_evolve_independently() {
        let scenario = line_scenario(6);
        let params = two_robot_params();
        let p_plus = transition_probabilities(&scenario, &params, 1).unwrap();
        let p_minus = transition_probabilities(&scenario, &params, -1).unwrap();

        let mut joint = VpeState::uniform(6);
        for _ in 0..50 {
            vpe_step(&mut joint, &p_plus, &p_minus);
        }

        // Sequential runs: advance each field alone.
        let mut plus_only = VpeState::uniform(6);
        let mut minus_only = VpeState::uniform(6);
        for _ in 0..50 {
            let scratch = &mut plus_only.scratch;
            p_plus.step_into(&plus_only.xi_plus, scratch);
            std::mem::swap(&mut plus_only.xi_plus, scratch);
            let scratch = &mut minus_only.scratch;
            p_minus.step_into(&minus_only.xi_minus, scratch);
            std::mem::swap(&mut minus_only.xi_minus, scratch);
        }
        assert_eq!(joint.xi_plus, plus_only.xi_plus);
        assert_eq!(joint.xi_minus, minus_only.xi_minus);
    }

    #[test]
    fn beacons_pin_the_coordinate_origin() {
        // With two beacons the chain localizes without centroid alignment.
        let scenario = line_scenario(5);
        let params = VpeParams {
            beacons: vec![
                Beacon {
                    robot: 0,
                    position: Vec2::new(0.0, 0.0),
                },
                Beacon {
                    robot: 4,
                    position: Vec2::new(4.0, 0.0),
                },
            ],
            normalize_every: 0,
            ..two_robot_params()
        };
        let mut session = LocalizationSession::new(&scenario, params).unwrap();
        session.run_iters(6000);
        let chi = session.chi();
        for (i, c) in chi.iter().enumerate() {
            assert!(
                (c.x - i as f64).abs() < 0.05,
                "robot {i} estimated at {} (true {})",
                c.x,
                i
            );
        }
    }

    proptest! {
        #[test]
        fn rounds_conserve_totals_and_positivity(
            seed in 0u64..50,
            steps in 1u64..60,
        ) {
            let spec = ScenarioSpec {
                kind: ScenarioKind::Square,
                size_factor: 3.0,
                spacing: 1.0,
                channel: ChannelModel::inverse_square(1.0, 2.5).unwrap(),
                seed,
                r0_override: None,
            };
            let scenario = spec.build().unwrap();
            let params = VpeParams::default();
            let p_plus = transition_probabilities(&scenario, &params, 1).unwrap();
            let p_minus = transition_probabilities(&scenario, &params, -1).unwrap();
            let mut state = VpeState::uniform(scenario.len());
            let total: f64 = state.xi_plus.iter().sum();
            for _ in 0..steps {
                vpe_step(&mut state, &p_plus, &p_minus);
                prop_assert!(state.xi_plus.iter().all(|v| *v > 0.0));
                prop_assert!(state.xi_minus.iter().all(|v| *v > 0.0));
            }
            let after: f64 = state.xi_plus.iter().sum();
            prop_assert!((after - total).abs() <= 1e-12 * total);
            let after_minus: f64 = state.xi_minus.iter().sum();
            prop_assert!((after_minus - total).abs() <= 1e-12 * total);
        }

        #[test]
        fn normalization_preserves_ratios(
            values in proptest::collection::vec(0.01f64..100.0, 2..20),
        ) {
            let mut xi = values.clone();
            normalize(&mut xi);
            let sum: f64 = xi.iter().sum();
            prop_assert!((sum - xi.len() as f64).abs() < 1e-9);
            for (a, b) in values.windows(2).zip(xi.windows(2)) {
                let before = a[0] / a[1];
                let after = b[0] / b[1];
                prop_assert!((before - after).abs() < 1e-9 * before.abs());
            }
        }
    }
}
