//! Ground-truth oracle and theory verifier: the column-stochastic transition
//! matrix, its Perron eigenvector and spectral gap, the closed-form
//! eigensystem of the 1D chain, and the iteration bound for reaching a given
//! localization accuracy.

use crate::error::{Error, Result};
use crate::swarm::SwarmScenario;
use crate::vec2::Vec2;
use crate::vpe::{extract_single, LocalizationSession, TransferProbabilities};
use nalgebra::{DMatrix, DVector};

/// Matrices up to this size use dense solvers; larger ones use power
/// iteration with deflation.
const DENSE_LIMIT: usize = 200;
const POWER_BUDGET: u64 = 2_000_000;
const PERRON_RESIDUAL: f64 = 1e-14;

/// The column-stochastic round-update matrix built from per-pair transfer
/// probabilities: diagonal entries are what each robot keeps, off-diagonals
/// what it receives.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    p: TransferProbabilities,
}

impl TransitionMatrix {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn axis(&self) -> Vec2 {
        self.p.axis
    }

    /// y = T x.
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        self.p.step_into(x, y);
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let l = self.len();
        let mut m = DMatrix::zeros(l, l);
        for i in 0..l {
            m[(i, i)] = 1.0 - self.p.outflow(i);
            for (j, p_in) in self.p.row_neighbors(i).iter().zip(self.p.row_in(i)) {
                m[(i, *j as usize)] = *p_in;
            }
        }
        m
    }

    /// Largest deviation of a column sum from 1, computed from the stored
    /// incoming entries (independent of the outflow accumulator).
    pub fn column_sum_residual(&self) -> f64 {
        let l = self.len();
        let mut sums = vec![0.0f64; l];
        for i in 0..l {
            for (j, p_in) in self.p.row_neighbors(i).iter().zip(self.p.row_in(i)) {
                sums[*j as usize] += *p_in;
            }
        }
        (0..l)
            .map(|j| (sums[j] + (1.0 - self.p.outflow(j)) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    fn is_strongly_connected(&self) -> bool {
        // The coupling pattern is symmetric, so ordinary reachability suffices.
        let l = self.len();
        if l <= 1 {
            return true;
        }
        let mut seen = vec![false; l];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for &j in self.p.row_neighbors(i) {
                let j = j as usize;
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == l
    }
}

/// Wraps transfer probabilities as a transition matrix, checking the
/// structure the convergence proof needs: positive diagonal and an
/// irreducible nonzero pattern.
pub fn build_transition_matrix(p: &TransferProbabilities) -> Result<TransitionMatrix> {
    for i in 0..p.len() {
        if p.outflow(i) >= 1.0 {
            return Err(Error::ExcessiveTransfer {
                robot: i,
                sum: p.outflow(i),
            });
        }
    }
    let t = TransitionMatrix { p: p.clone() };
    if !t.is_strongly_connected() {
        return Err(Error::NotIrreducible);
    }
    Ok(t)
}

/// Equilibrium summary of one exchange direction.
#[derive(Debug, Clone)]
pub struct SpectralSummary {
    /// Positive right eigenvector of eigenvalue 1, scaled to sum 1.
    pub perron_vector: Vec<f64>,
    /// Modulus of the second-largest eigenvalue; governs the convergence rate.
    pub lambda2_abs: f64,
    /// Single-direction equilibrium localization result.
    pub equilibrium_chi: Vec<f64>,
}

/// Stationary vector of T, scaled to sum 1.
///
/// Power iteration with a componentwise-relative stopping rule. The
/// stationary vector can be graded over many orders of magnitude (the chain
/// decays like gamma^-i), and a dense solve only bounds the absolute error,
/// which wrecks the small components the log extraction depends on; the
/// multiplicative iteration keeps every component relatively accurate.
pub fn perron_vector(t: &TransitionMatrix) -> Result<Vec<f64>> {
    perron_vector_from(t, None)
}

pub fn perron_vector_from(t: &TransitionMatrix, warm: Option<Vec<f64>>) -> Result<Vec<f64>> {
    let l = t.len();
    if l == 1 {
        return Ok(vec![1.0]);
    }
    let v = perron_power(t, warm)?;
    // Post condition: T v = v componentwise to a tight residual, v positive.
    let mut tv = vec![0.0; l];
    t.mul_into(&v, &mut tv);
    let residual = v
        .iter()
        .zip(&tv)
        .map(|(a, b)| (a - b).abs() / a.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    if residual > 1e-10 || v.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::NoConvergence {
            iterations: POWER_BUDGET,
        });
    }
    Ok(v)
}

fn perron_power(t: &TransitionMatrix, warm: Option<Vec<f64>>) -> Result<Vec<f64>> {
    let l = t.len();
    let mut v = warm.unwrap_or_else(|| vec![1.0 / l as f64; l]);
    let sum: f64 = v.iter().sum();
    if !(sum > 0.0) || v.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::InvalidParameter("warm start must be positive".into()));
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
    let mut next = vec![0.0; l];
    let mut iterations = 0u64;
    loop {
        t.mul_into(&v, &mut next);
        let sum: f64 = next.iter().sum();
        for x in next.iter_mut() {
            *x /= sum;
        }
        let diff = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs() / b.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        iterations += 1;
        if diff <= PERRON_RESIDUAL {
            return Ok(v);
        }
        if iterations >= POWER_BUDGET {
            return Err(Error::NoConvergence { iterations });
        }
    }
}

/// Modulus of the second-largest eigenvalue.
///
/// Dense eigendecomposition up to the dense limit; beyond it, power
/// iteration on the complement of the stationary direction (deflation by
/// the spectral projector v 1^T), with the growth rate read off a window
/// of norm ratios.
pub fn spectral_gap(t: &TransitionMatrix, v: &[f64]) -> Result<f64> {
    let l = t.len();
    if l == 1 {
        return Ok(0.0);
    }
    if l <= DENSE_LIMIT {
        let eigenvalues = t.to_dense().complex_eigenvalues();
        let mut moduli: Vec<f64> = eigenvalues.iter().map(|z| z.norm()).collect();
        moduli.sort_by(|a, b| b.partial_cmp(a).unwrap());
        return Ok(moduli[1]);
    }
    // Deterministic pseudo-random start with zero total.
    let mut x: Vec<f64> = (0..l)
        .map(|i| {
            let h = (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(17);
            (h as f64 / u64::MAX as f64) - 0.5
        })
        .collect();
    deflate(&mut x, v);
    normalize_l2(&mut x);
    let mut next = vec![0.0; l];
    let window = 50usize;
    let mut ratios: Vec<f64> = Vec::with_capacity(window);
    let mut prev_estimate = f64::NAN;
    for _ in 0..POWER_BUDGET {
        t.mul_into(&x, &mut next);
        deflate(&mut next, v);
        let norm = l2(&next);
        if norm == 0.0 {
            return Ok(0.0);
        }
        ratios.push(norm);
        for value in next.iter_mut() {
            *value /= norm;
        }
        std::mem::swap(&mut x, &mut next);
        if ratios.len() == window {
            let estimate = (ratios.iter().map(|r| r.ln()).sum::<f64>() / window as f64).exp();
            ratios.clear();
            if prev_estimate.is_finite()
                && (estimate - prev_estimate).abs() <= 1e-9 * estimate.max(1e-30)
            {
                return Ok(estimate.min(1.0));
            }
            prev_estimate = estimate;
        }
    }
    if prev_estimate.is_finite() {
        Ok(prev_estimate.min(1.0))
    } else {
        Err(Error::NoConvergence {
            iterations: POWER_BUDGET,
        })
    }
}

fn deflate(x: &mut [f64], v: &[f64]) {
    let total: f64 = x.iter().sum();
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= vi * total;
    }
}

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn normalize_l2(x: &mut [f64]) {
    let n = l2(x);
    if n > 0.0 {
        for a in x.iter_mut() {
            *a /= n;
        }
    }
}

/// Full equilibrium summary for one direction: the stationary particle
/// distribution is the Perron vector times the conserved total, and the
/// equilibrium result follows by the single-run extraction.
pub fn perron_oracle(
    t: &TransitionMatrix,
    total_vp: f64,
    r0: f64,
    k: f64,
) -> Result<SpectralSummary> {
    let v = perron_vector(t)?;
    let lambda2_abs = spectral_gap(t, &v)?;
    let xi_inf: Vec<f64> = v.iter().map(|x| x * total_vp).collect();
    let equilibrium_chi = extract_single(&xi_inf, r0, k);
    Ok(SpectralSummary {
        perron_vector: v,
        lambda2_abs,
        equilibrium_chi,
    })
}

/// Dual-direction equilibrium result along one axis. Totals cancel because
/// both opposed runs start from the same total.
pub fn dual_equilibrium_chi(
    p_plus: &TransferProbabilities,
    p_minus: &TransferProbabilities,
    scale: f64,
    k: f64,
    warm: Option<(Vec<f64>, Vec<f64>)>,
) -> Result<Vec<f64>> {
    let t_plus = build_transition_matrix(p_plus)?;
    let t_minus = build_transition_matrix(p_minus)?;
    let (warm_plus, warm_minus) = match warm {
        Some((a, b)) => (Some(a), Some(b)),
        None => (None, None),
    };
    let v_plus = perron_vector_from(&t_plus, warm_plus)?;
    let v_minus = perron_vector_from(&t_minus, warm_minus)?;
    Ok(v_plus
        .iter()
        .zip(&v_minus)
        .map(|(p, m)| scale * (m.ln() - p.ln()) / (4.0 * k))
        .collect())
}

/// Equilibrium results for every axis of a running localization, used as
/// the reference point of the oracle stopping rule.
pub fn session_equilibrium(
    session: &LocalizationSession,
    scenario: &SwarmScenario,
) -> Result<Vec<Vec<f64>>> {
    if !session.params.beacons.is_empty() {
        return Err(Error::InvalidParameter(
            "the oracle stopping rule does not model beacon clamping; use the sliding window"
                .into(),
        ));
    }
    let scale = session.params.extraction_scale(scenario.r0);
    let k = session.params.k;
    session
        .axes
        .iter()
        .map(|field| {
            let warm = boltzmann_warm_start(scenario, field.axis, k, scale);
            dual_equilibrium_chi(&field.p_plus, &field.p_minus, scale, k, Some(warm))
        })
        .collect()
}

/// Boltzmann-profile warm start for the power iteration: exact for the
/// exact-displacement variant and a close guess for unit direction.
pub fn boltzmann_warm_start(
    scenario: &SwarmScenario,
    axis: Vec2,
    k: f64,
    scale: f64,
) -> (Vec<f64>, Vec<f64>) {
    let coords: Vec<f64> = scenario
        .poses
        .iter()
        .map(|p| p.position.dot(axis) / scale)
        .collect();
    let plus: Vec<f64> = coords.iter().map(|x| (-2.0 * k * x).exp()).collect();
    let minus: Vec<f64> = coords.iter().map(|x| (2.0 * k * x).exp()).collect();
    (plus, minus)
}

/// The idealized 1D chain: robots on a line at unit spacing exchanging with
/// immediate neighbors only, with forward and backward transfer parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSpec {
    pub l: usize,
    pub epsilon1: f64,
    pub epsilon2: f64,
}

impl ChainSpec {
    pub fn new(l: usize, epsilon1: f64, epsilon2: f64) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidParameter(format!(
                "chain needs at least 2 robots, got {l}"
            )));
        }
        if !(epsilon1 > 0.0 && epsilon2 > 0.0 && epsilon1 + epsilon2 < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < eps1, eps2 with eps1 + eps2 < 1, got {epsilon1}, {epsilon2}"
            )));
        }
        if !(epsilon1 < epsilon2) {
            return Err(Error::InvalidParameter(
                "chain is normalized to eps1 < eps2".into(),
            ));
        }
        Ok(ChainSpec {
            l,
            epsilon1,
            epsilon2,
        })
    }

    /// From the exchange constants: forward parameter k1 e^{-k}, backward
    /// k1 e^{k}.
    pub fn from_constants(l: usize, k1: f64, k: f64) -> Result<Self> {
        ChainSpec::new(l, k1 * (-k).exp(), k1 * k.exp())
    }

    /// Ratio of the two transfer parameters, greater than 1.
    pub fn gamma_ratio(&self) -> f64 {
        self.epsilon2 / self.epsilon1
    }

    /// The anisotropy constant this chain corresponds to.
    pub fn k(&self) -> f64 {
        0.5 * self.gamma_ratio().ln()
    }

    /// Tridiagonal transition matrix of the chain.
    pub fn transition_dense(&self) -> DMatrix<f64> {
        let l = self.l;
        let (e1, e2) = (self.epsilon1, self.epsilon2);
        let mut t = DMatrix::zeros(l, l);
        for i in 0..l {
            let mut keep = 1.0;
            if i + 1 < l {
                t[(i + 1, i)] = e1; // sends forward
                keep -= e1;
            }
            if i > 0 {
                t[(i - 1, i)] = e2; // sends backward
                keep -= e2;
            }
            t[(i, i)] = keep;
        }
        t
    }

    /// y = T x without materializing the matrix.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let l = self.l;
        let (e1, e2) = (self.epsilon1, self.epsilon2);
        let mut y = vec![0.0; l];
        for i in 0..l {
            let keep = 1.0
                - if i + 1 < l { e1 } else { 0.0 }
                - if i > 0 { e2 } else { 0.0 };
            let mut acc = keep * x[i];
            if i > 0 {
                acc += e1 * x[i - 1]; // inflow from the left neighbor
            }
            if i + 1 < l {
                acc += e2 * x[i + 1]; // inflow from the right neighbor
            }
            y[i] = acc;
        }
        y
    }
}

/// Closed-form eigenpairs of the chain transition matrix, eigenvalue 1
/// first, then in the order of the mode index.
pub fn chain_eigensystem(chain: &ChainSpec) -> Vec<(f64, DVector<f64>)> {
    let l = chain.l;
    let gamma = chain.gamma_ratio();
    let sqrt_gamma = gamma.sqrt();
    let mut pairs = Vec::with_capacity(l);
    let v1 = DVector::from_fn(l, |m, _| gamma.powf(-((m + 1) as f64)));
    pairs.push((1.0, v1));
    let base = 1.0 - chain.epsilon1 - chain.epsilon2;
    let coupling = 2.0 * (chain.epsilon1 * chain.epsilon2).sqrt();
    for p in 2..=l {
        let theta = (p - 1) as f64 * std::f64::consts::PI / l as f64;
        let lambda = base + coupling * theta.cos();
        // Boundary phase: cos(phi) = sqrt(gamma) cos(theta + phi), solved in
        // closed form as tan(phi) = (sqrt(gamma) cos(theta) - 1)/(sqrt(gamma) sin(theta)).
        let phi = ((sqrt_gamma * theta.cos() - 1.0) / (sqrt_gamma * theta.sin())).atan();
        let v = DVector::from_fn(l, |m, _| {
            let i = (m + 1) as f64;
            gamma.powf(-i / 2.0) * (i * theta + phi).cos()
        });
        pairs.push((lambda, v));
    }
    pairs
}

/// Iteration bound for reaching localization accuracy `delta0` on the chain.
pub fn predict_nmax(chain: &ChainSpec, delta0: f64) -> Result<f64> {
    if !(delta0 > 0.0 && delta0 <= 0.5) {
        return Err(Error::InvalidAccuracy { delta0 });
    }
    let gamma = chain.gamma_ratio();
    let l = chain.l as f64;
    let lambda2_bound =
        1.0 - chain.epsilon1 - chain.epsilon2 + 2.0 * (chain.epsilon1 * chain.epsilon2).sqrt();
    let numerator =
        l * gamma.ln() - (gamma - 1.0).ln() - 2.0 * (1.0 - gamma.powf(-delta0)).ln();
    Ok(-numerator / (2.0 * lambda2_bound.ln()))
}

/// Per-iteration accuracy of a recorded particle trace against the
/// equilibrium result: the worst per-robot discrepancy of the single-run
/// extraction.
pub fn accuracy_trace(
    xi_trace: &[Vec<f64>],
    equilibrium_chi: &[f64],
    r0: f64,
    k: f64,
) -> Vec<f64> {
    xi_trace
        .iter()
        .map(|xi| {
            extract_single(xi, r0, k)
                .iter()
                .zip(equilibrium_chi)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Weighted norm sqrt(v^T S^-1 v) with S = diag(gamma^1..gamma^l), used by
/// the bound-verification tests.
#[cfg(test)]
fn s_norm(v: &[f64], gamma: f64) -> f64 {
    v.iter()
        .enumerate()
        .map(|(m, x)| x * x * gamma.powi(-((m + 1) as i32)))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swarm::ChannelModel;
    use crate::vpe::{transition_probabilities, Variant, VpeParams, VpeState};
    use approx::assert_relative_eq;

    fn line_scenario(n: usize) -> SwarmScenario {
        let positions = (0..n).map(|i| Vec2::new(i as f64, 0.0)).collect();
        SwarmScenario::from_positions(
            positions,
            ChannelModel::unit_within_range(1.5).unwrap(),
            None,
        )
        .unwrap()
    }

    fn paper_epsilons() -> (f64, f64) {
        (0.05 * (-0.15f64).exp(), 0.05 * (0.15f64).exp())
    }

    #[test]
    fn single_robot_transition_matrix_is_identity() {
        let scenario = SwarmScenario::from_positions(
            vec![Vec2::new(0.0, 0.0)],
            ChannelModel::unit_within_range(1.5).unwrap(),
            None,
        )
        .unwrap();
        let p = transition_probabilities(&scenario, &VpeParams::default(), 1).unwrap();
        let t = build_transition_matrix(&p).unwrap();
        assert_eq!(t.to_dense(), DMatrix::from_element(1, 1, 1.0));
        assert_eq!(perron_vector(&t).unwrap(), vec![1.0]);
    }

    #[test]
    fn two_robot_transition_matrix_matches_hand_value() {
        let scenario = line_scenario(2);
        let p = transition_probabilities(&scenario, &VpeParams::default(), 1).unwrap();
        let t = build_transition_matrix(&p).unwrap().to_dense();
        assert_relative_eq!(t[(0, 0)], 0.956965, max_relative = 1e-5);
        assert_relative_eq!(t[(0, 1)], 0.058092, max_relative = 1e-5);
        assert_relative_eq!(t[(1, 0)], 0.043035, max_relative = 1e-5);
        assert_relative_eq!(t[(1, 1)], 0.941908, max_relative = 1e-5);
    }

    #[test]
    fn column_sums_stay_at_one() {
        let scenario = line_scenario(12);
        let p = transition_probabilities(&scenario, &VpeParams::default(), 1).unwrap();
        let t = build_transition_matrix(&p).unwrap();
        assert!(t.column_sum_residual() <= 1e-12);
    }

    #[test]
    fn symmetric_two_robot_equilibrium_is_uniform() {
        let scenario = line_scenario(2);
        let params = VpeParams {
            k: 0.0,
            ..VpeParams::default()
        };
        let p = transition_probabilities(&scenario, &params, 1).unwrap();
        let t = build_transition_matrix(&p).unwrap();
        let v = perron_vector(&t).unwrap();
        assert_relative_eq!(v[0], 0.5, max_relative = 1e-12);
        assert_relative_eq!(v[1], 0.5, max_relative = 1e-12);
    }

    #[test]
    fn asymmetric_two_robot_equilibrium_matches_closed_form() {
        let scenario = line_scenario(2);
        let p = transition_probabilities(&scenario, &VpeParams::default(), 1).unwrap();
        let p01 = p.get(0, 1);
        let p10 = p.get(1, 0);
        let t = build_transition_matrix(&p).unwrap();
        let v = perron_vector(&t).unwrap();
        assert_relative_eq!(v[0], p10 / (p01 + p10), max_relative = 1e-12);
        assert_relative_eq!(v[1], p01 / (p01 + p10), max_relative = 1e-12);
    }

    #[test]
    fn exact_displacement_equilibrium_is_boltzmann() {
        let scenario = line_scenario(7);
        let params = VpeParams {
            variant: Variant::ExactDisplacement,
            k0: 0.05,
            ..VpeParams::default()
        };
        let p = transition_probabilities(&scenario, &params, 1).unwrap();
        let t = build_transition_matrix(&p).unwrap();
        let v = perron_vector(&t).unwrap();
        let weights: Vec<f64> = (0..7).map(|i| (-2.0 * 0.15 * i as f64).exp()).collect();
        let total: f64 = weights.iter().sum();
        for (vi, wi) in v.iter().zip(&weights) {
            assert_relative_eq!(*vi, wi / total, max_relative = 1e-9);
        }
    }

    #[test]
    fn chain_eigensystem_satisfies_the_matrix_to_high_residual() {
        let (e1, e2) = paper_epsilons();
        for l in [2usize, 3, 4, 16, 33] {
            let chain = ChainSpec::new(l, e1, e2).unwrap();
            for (lambda, v) in chain_eigensystem(&chain) {
                let x: Vec<f64> = v.iter().copied().collect();
                let tx = chain.matvec(&x);
                let norm = l2(&x);
                let residual = tx
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - lambda * b).abs())
                    .fold(0.0, f64::max);
                assert!(
                    residual <= 1e-8 * norm,
                    "l = {l}, lambda = {lambda}: residual {residual}"
                );
            }
        }
    }

    #[test]
    fn chain_eigenvalues_match_dense_solver() {
        let (e1, e2) = paper_epsilons();
        let chain = ChainSpec::new(4, e1, e2).unwrap();
        let mut closed: Vec<f64> = chain_eigensystem(&chain)
            .into_iter()
            .map(|(lambda, _)| lambda)
            .collect();
        closed.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut numeric: Vec<f64> = chain
            .transition_dense()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .collect();
        numeric.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (c, n) in closed.iter().zip(&numeric) {
            assert!((c - n).abs() <= 1e-8, "closed {c} vs numeric {n}");
        }
    }

    #[test]
    fn uniform_chain_limit_has_uniform_stationary_vector() {
        // gamma -> 1 makes the first closed-form eigenvector constant.
        let chain = ChainSpec::new(6, 0.05, 0.05 * (1.0 + 1e-12)).unwrap();
        let (_, v1) = &chain_eigensystem(&chain)[0];
        let first = v1[0];
        for value in v1.iter() {
            assert_relative_eq!(*value, first, max_relative = 1e-9);
        }
    }

    #[test]
    fn lambda2_never_exceeds_the_substitution_bound() {
        let (e1, e2) = paper_epsilons();
        let bound = 1.0 - e1 - e2 + 2.0 * (e1 * e2).sqrt();
        for l in [2usize, 5, 20, 64] {
            let chain = ChainSpec::new(l, e1, e2).unwrap();
            let lambda2 = chain_eigensystem(&chain)[1].0;
            assert!(lambda2 <= bound + 1e-15, "l = {l}");
        }
    }

    #[test]
    fn nmax_doubles_with_chain_length_in_the_limit() {
        let (e1, e2) = paper_epsilons();
        let a = predict_nmax(&ChainSpec::new(4000, e1, e2).unwrap(), 0.1).unwrap();
        let b = predict_nmax(&ChainSpec::new(8000, e1, e2).unwrap(), 0.1).unwrap();
        assert!((b / a - 2.0).abs() < 0.01, "ratio {}", b / a);
    }

    #[test]
    fn nmax_blows_up_as_accuracy_tightens() {
        let (e1, e2) = paper_epsilons();
        let chain = ChainSpec::new(50, e1, e2).unwrap();
        let loose = predict_nmax(&chain, 0.1).unwrap();
        let tight = predict_nmax(&chain, 1e-9).unwrap();
        let extreme = predict_nmax(&chain, 1e-100).unwrap();
        assert!(loose.is_finite() && loose > 0.0);
        assert!(tight > loose);
        assert!(extreme > 10.0 * loose);
        assert!(matches!(
            predict_nmax(&chain, 0.0),
            Err(Error::InvalidAccuracy { .. })
        ));
        assert!(matches!(
            predict_nmax(&chain, 0.51),
            Err(Error::InvalidAccuracy { .. })
        ));
    }

    #[test]
    fn accuracy_trace_is_zero_at_equilibrium_and_hand_checkable_after_one_round() {
        let scenario = line_scenario(2);
        let params = VpeParams {
            normalize_every: 0,
            ..VpeParams::default()
        };
        let p_plus = transition_probabilities(&scenario, &params, 1).unwrap();
        let t = build_transition_matrix(&p_plus).unwrap();
        let oracle = perron_oracle(&t, 2.0, 1.0, params.k).unwrap();

        let xi_inf: Vec<f64> = oracle.perron_vector.iter().map(|v| v * 2.0).collect();
        let at_equilibrium = accuracy_trace(&[xi_inf], &oracle.equilibrium_chi, 1.0, params.k);
        assert!(at_equilibrium[0] < 1e-10);

        let mut state = VpeState::uniform(2);
        crate::vpe::vpe_step(&mut state, &p_plus, &p_plus.clone());
        let traced = accuracy_trace(
            &[state.xi_plus.clone()],
            &oracle.equilibrium_chi,
            1.0,
            params.k,
        );
        // Hand evaluation: chi_0 = -ln(1.015057)/0.3 vs equilibrium.
        let chi0 = -(state.xi_plus[0].ln()) / 0.3;
        let expected = (chi0 - oracle.equilibrium_chi[0]).abs().max(
            ((-(state.xi_plus[1].ln()) / 0.3) - oracle.equilibrium_chi[1]).abs(),
        );
        assert_relative_eq!(traced[0], expected, max_relative = 1e-12);
    }

    #[test]
    fn weighted_norm_certifies_the_decay_estimate_on_a_chain() {
        // The transient of S xi, measured in the weighted norm, contracts by
        // at least lambda2 per round.
        let (e1, e2) = paper_epsilons();
        let l = 16;
        let chain = ChainSpec::new(l, e1, e2).unwrap();
        let gamma = chain.gamma_ratio();
        let lambda2 = chain_eigensystem(&chain)[1].0;
        let total: f64 = (1..=l).map(|i| gamma.powi(-(i as i32))).sum();
        let xi_inf: Vec<f64> = (1..=l)
            .map(|i| gamma.powi(-(i as i32)) * l as f64 / total)
            .collect();
        let weighted_residual = |xi: &[f64]| {
            let w: Vec<f64> = xi
                .iter()
                .zip(&xi_inf)
                .enumerate()
                .map(|(m, (a, b))| gamma.powi((m + 1) as i32) * (a - b))
                .collect();
            s_norm(&w, gamma)
        };
        let mut xi = vec![1.0; l];
        let d0 = weighted_residual(&xi);
        for n in 1..=200u32 {
            xi = chain.matvec(&xi);
            let dn = weighted_residual(&xi);
            assert!(
                dn <= lambda2.powi(n as i32) * d0 * (1.0 + 1e-9),
                "n = {n}: {dn} vs bound {}",
                lambda2.powi(n as i32) * d0
            );
        }
    }

    #[test]
    fn s_norm_dominates_componentwise_maximum() {
        let (e1, e2) = paper_epsilons();
        let chain = ChainSpec::new(12, e1, e2).unwrap();
        let gamma = chain.gamma_ratio();
        let v: Vec<f64> = (0..12).map(|i| ((i * 7 + 3) % 5) as f64 - 2.0).collect();
        let bound = gamma.powf(12.0 / 2.0) * s_norm(&v, gamma);
        let max = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(max <= bound + 1e-12);
    }

    fn l2(x: &[f64]) -> f64 {
        x.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}
