//! Potential-field shape formation driven by the exchange localization: an
//! attractive factor pulls robots toward and into the target polygon using
//! their own position estimates, a repulsive factor keeps them evenly spaced
//! using sensed directional intensities, and a Gaussian-density similarity
//! score quantifies how well the swarm fills the target.

use crate::error::{Error, Result};
use crate::optical::OpticalSession;
use crate::swarm::SwarmScenario;
use crate::vec2::{centroid, Vec2};
use crate::vpe::LocalizationSession;
use serde::{Deserialize, Serialize};

/// A simple polygon target with its enclosed area.
#[derive(Debug, Clone)]
pub struct TargetShape {
    polygon: Vec<Vec2>,
    area: f64,
}

impl TargetShape {
    /// Validates that the polygon is simple and stores it counterclockwise.
    pub fn new(polygon: Vec<Vec2>) -> Result<Self> {
        if polygon.len() < 3 {
            return Err(Error::InvalidParameter(
                "target polygon needs at least 3 vertices".into(),
            ));
        }
        if !polygon.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter(
                "target polygon has non-finite vertices".into(),
            ));
        }
        if has_self_intersection(&polygon) {
            return Err(Error::InvalidParameter(
                "target polygon is self-intersecting".into(),
            ));
        }
        let signed = signed_area(&polygon);
        if signed.abs() < 1e-12 {
            return Err(Error::InvalidParameter(
                "target polygon has zero area".into(),
            ));
        }
        let mut polygon = polygon;
        if signed < 0.0 {
            polygon.reverse();
        }
        let area = signed.abs();
        Ok(TargetShape { polygon, area })
    }

    /// Equilateral triangle of the given area centered at the origin.
    pub fn triangle(area: f64) -> Result<Self> {
        let side = (4.0 * area / 3f64.sqrt()).sqrt();
        let height = 3f64.sqrt() / 2.0 * side;
        TargetShape::new(vec![
            Vec2::new(-side / 2.0, -height / 3.0),
            Vec2::new(side / 2.0, -height / 3.0),
            Vec2::new(0.0, 2.0 * height / 3.0),
        ])
    }

    /// Blocky letter-K stand-in scaled to the given area and centered at the
    /// origin.
    pub fn letter_k(area: f64) -> Result<Self> {
        let raw = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(0.8, 0.0),
            Vec2::new(0.8, 1.5),
            Vec2::new(2.0, 0.0),
            Vec2::new(3.0, 0.0),
            Vec2::new(1.7, 2.0),
            Vec2::new(3.0, 4.0),
            Vec2::new(2.0, 4.0),
            Vec2::new(0.8, 2.5),
            Vec2::new(0.8, 4.0),
            Vec2::new(0.0, 4.0),
        ];
        let raw_area = signed_area(&raw).abs();
        let scale = (area / raw_area).sqrt();
        let scaled = TargetShape::new(raw.iter().map(|v| *v * scale).collect())?;
        let c = scaled.centroid();
        TargetShape::new(scaled.polygon.into_iter().map(|v| v - c).collect())
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.polygon
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    /// Even-odd containment test; boundary points are not inside.
    pub fn contains(&self, p: Vec2) -> bool {
        let mut inside = false;
        let n = self.polygon.len();
        let mut j = n - 1;
        for i in 0..n {
            let a = self.polygon[i];
            let b = self.polygon[j];
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// The paper's inside function: 1 outside the shape, 0 inside.
    pub fn in_indicator(&self, p: Vec2) -> f64 {
        if self.contains(p) {
            0.0
        } else {
            1.0
        }
    }

    /// Closest point on the boundary; ties go to the lowest edge index.
    pub fn nearest_boundary_point(&self, p: Vec2) -> Vec2 {
        let n = self.polygon.len();
        let mut best = self.polygon[0];
        let mut best_d = f64::INFINITY;
        for i in 0..n {
            let a = self.polygon[i];
            let b = self.polygon[(i + 1) % n];
            let q = nearest_on_segment(p, a, b);
            let d = (q - p).norm_sq();
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    }

    /// Axis-aligned bounding box.
    pub fn bbox(&self) -> (Vec2, Vec2) {
        bbox_of(&self.polygon)
    }

    /// Area centroid of the polygon.
    pub fn centroid(&self) -> Vec2 {
        let n = self.polygon.len();
        let mut acc = Vec2::default();
        for i in 0..n {
            let a = self.polygon[i];
            let b = self.polygon[(i + 1) % n];
            let w = a.cross(b);
            acc += (a + b) * w;
        }
        acc * (1.0 / (6.0 * signed_area(&self.polygon)))
    }
}

fn bbox_of(points: &[Vec2]) -> (Vec2, Vec2) {
    let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    (min, max)
}

fn signed_area(polygon: &[Vec2]) -> f64 {
    let n = polygon.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = polygon[i];
        let b = polygon[(i + 1) % n];
        acc += a.cross(b);
    }
    acc / 2.0
}

fn nearest_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    a + ab * t
}

fn has_self_intersection(polygon: &[Vec2]) -> bool {
    let n = polygon.len();
    for i in 0..n {
        let a1 = polygon[i];
        let a2 = polygon[(i + 1) % n];
        for j in (i + 1)..n {
            // Skip edges sharing a vertex (adjacent, including the wrap pair).
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let b1 = polygon[j];
            let b2 = polygon[(j + 1) % n];
            if segments_intersect(a1, a2, b1, b2) {
                return true;
            }
        }
    }
    false
}

fn segments_intersect(a1: Vec2, a2: Vec2, b1: Vec2, b2: Vec2) -> bool {
    let d1 = (a2 - a1).cross(b1 - a1);
    let d2 = (a2 - a1).cross(b2 - a1);
    let d3 = (b2 - b1).cross(a1 - b1);
    let d4 = (b2 - b1).cross(a2 - b1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |d: f64, p: Vec2, q: Vec2, r: Vec2| -> bool {
        d == 0.0
            && r.x >= p.x.min(q.x)
            && r.x <= p.x.max(q.x)
            && r.y >= p.y.min(q.y)
            && r.y <= p.y.max(q.y)
    };
    on(d1, a1, a2, b1) || on(d2, a1, a2, b2) || on(d3, b1, b2, a1) || on(d4, b1, b2, a2)
}

/// Controller constants of the two potential-field factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationParams {
    /// Repulsive strength.
    pub c1: f64,
    /// Repulsive tanh slope.
    pub c2: f64,
    /// Intensity at the desired spacing; readings above it repel.
    pub i0: f64,
    /// Anisotropy of the repulsion-sensing emission.
    pub k_prime: f64,
    /// Attractive strength.
    pub c3: f64,
    /// Attractive tanh slope.
    pub c4: f64,
    /// Per-step displacement cap.
    pub step_cap: f64,
    /// Rounds of the initial localization.
    pub initial_loc_iters: u64,
    /// Rounds of each warm-started re-localization.
    pub reloc_iters: u64,
}

impl Default for FormationParams {
    fn default() -> Self {
        FormationParams {
            c1: 0.015,
            c2: 1.0,
            i0: 2.4,
            k_prime: 1.0,
            c3: 0.015,
            c4: 2.0,
            step_cap: 0.03,
            initial_loc_iters: 100,
            reloc_iters: 10,
        }
    }
}

impl FormationParams {
    pub fn validate(&self) -> Result<()> {
        let all_positive = self.c1 > 0.0
            && self.c2 > 0.0
            && self.i0 > 0.0
            && self.k_prime > 0.0
            && self.c3 > 0.0
            && self.c4 > 0.0
            && self.step_cap > 0.0;
        if !all_positive {
            return Err(Error::InvalidParameter(
                "formation constants must all be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Current robot positions and their latest localization estimates.
#[derive(Debug, Clone)]
pub struct FormationState {
    pub poses: Vec<Vec2>,
    pub chi: Vec<Vec2>,
    pub step_index: usize,
    /// Estimates that fell exactly on the boundary (zero attractive factor).
    pub degenerate_events: usize,
}

/// Directional intensity readings along one axis: the sensed totals
/// attributed to the positive and negative sides.
fn side_intensities(scenario: &SwarmScenario, robot: usize, axis: Vec2, k_prime: f64) -> (f64, f64) {
    let (nbrs, vals) = scenario.gamma.row(robot);
    let own = scenario.poses[robot].position;
    let mut pos = 0.0;
    let mut neg = 0.0;
    for (j, g) in nbrs.iter().zip(vals) {
        let u = (scenario.poses[*j as usize].position - own).unit();
        let t = u.dot(axis);
        pos += g * (k_prime * t).exp();
        neg += g * (-k_prime * t).exp();
    }
    (pos, neg)
}

/// Repulsive factor from sensed intensities only: per axis, push away from
/// the brighter (closer-crowded) side when readings exceed the set point,
/// pull toward the swarm when they fall below it.
pub fn repulsive_factor(
    scenario: &SwarmScenario,
    robot: usize,
    params: &FormationParams,
) -> Vec2 {
    let axes = [scenario.x_axis, scenario.y_axis()];
    let mut d = Vec2::default();
    for axis in axes {
        let (i_pos, i_neg) = side_intensities(scenario, robot, axis, params.k_prime);
        let direction = (i_neg - i_pos).signum();
        if i_pos == i_neg {
            continue;
        }
        let magnitude = params.c1 * (params.c2 * (i_pos.max(i_neg) - params.i0)).tanh();
        d += axis * (magnitude * direction);
    }
    d
}

/// Attractive factor of the virtual-force controller: outside the target it
/// points at the nearest boundary point with magnitude between c3 and 2 c3;
/// inside it pushes away from the boundary, fading deeper in.
pub fn attractive_factor(
    chi: Vec2,
    shape: &TargetShape,
    params: &FormationParams,
) -> Result<Vec2> {
    let nearest = shape.nearest_boundary_point(chi);
    let f = nearest - chi;
    let dist = f.norm();
    if dist == 0.0 {
        return Err(Error::DegenerateBoundary);
    }
    let side = 2.0 * shape.in_indicator(chi) - 1.0; // +1 outside, -1 inside
    let magnitude = params.c3 * (1.0 + (params.c4 * side * dist).tanh());
    Ok(f * (magnitude * side / dist))
}

/// A localization backend that can refresh position estimates for a moved
/// swarm from its previous particle state.
pub trait Relocalizer {
    fn refresh(&mut self, scenario: &SwarmScenario, iters: u64) -> Result<Vec<Vec2>>;
}

impl Relocalizer for LocalizationSession {
    fn refresh(&mut self, scenario: &SwarmScenario, iters: u64) -> Result<Vec<Vec2>> {
        self.rebuild(scenario)?;
        self.run_iters(iters);
        Ok(self.chi())
    }
}

impl Relocalizer for OpticalSession {
    fn refresh(&mut self, scenario: &SwarmScenario, iters: u64) -> Result<Vec<Vec2>> {
        self.rebuild(scenario)?;
        self.run_iters(scenario, iters)?;
        Ok(self.chi())
    }
}

/// One movement round: every robot moves by the capped sum of the two
/// factors, the attenuation matrix is rebuilt for the new geometry, and the
/// estimates are refreshed by a warm-started localization burst.
pub fn formation_step(
    state: &mut FormationState,
    scenario: &mut SwarmScenario,
    shape: &TargetShape,
    params: &FormationParams,
    localizer: &mut dyn Relocalizer,
) -> Result<()> {
    params.validate()?;
    let l = state.poses.len();
    let mut displacements = Vec::with_capacity(l);
    for i in 0..l {
        let attract = match attractive_factor(state.chi[i], shape, params) {
            Ok(v) => v,
            Err(Error::DegenerateBoundary) => {
                state.degenerate_events += 1;
                Vec2::default()
            }
            Err(e) => return Err(e),
        };
        let repel = repulsive_factor(scenario, i, params);
        displacements.push((attract + repel).clamp_norm(params.step_cap));
    }
    let new_positions: Vec<Vec2> = state
        .poses
        .iter()
        .zip(&displacements)
        .map(|(p, d)| *p + *d)
        .collect();
    *scenario = scenario.with_positions(new_positions.clone()).map_err(|e| match e {
        Error::DisconnectedSwarm { .. } => Error::SwarmFragmented {
            step: state.step_index,
        },
        other => other,
    })?;
    state.poses = new_positions;
    state.chi = localizer.refresh(scenario, params.reloc_iters)?;
    state.step_index += 1;
    Ok(())
}

/// Mean nearest-neighbor distance, the spacing proxy of the similarity
/// metric's bandwidth search.
pub fn estimate_spacing(poses: &[Vec2], shape: &TargetShape) -> f64 {
    if poses.len() < 2 {
        return shape.area().sqrt();
    }
    let mut total = 0.0;
    for (i, p) in poses.iter().enumerate() {
        let mut best = f64::INFINITY;
        for (j, q) in poses.iter().enumerate() {
            if i != j {
                best = best.min((*p - *q).norm());
            }
        }
        total += best;
    }
    let mean = total / poses.len() as f64;
    if mean > 0.0 {
        mean
    } else {
        // Collapsed point sets fall back to a fraction of the shape scale.
        1e-3 * shape.area().sqrt()
    }
}

/// Shape-formation quality in [0, 1]: one minus the normalized mismatch
/// between the target's inside indicator and a Gaussian-smoothed robot
/// density, minimized over the smoothing bandwidth.
pub fn similarity(poses: &[Vec2], shape: &TargetShape) -> f64 {
    similarity_with_spacing(poses, shape, estimate_spacing(poses, shape))
}

pub fn similarity_with_spacing(poses: &[Vec2], shape: &TargetShape, spacing: f64) -> f64 {
    if poses.is_empty() {
        return 0.0;
    }
    let lo = 0.1 * spacing;
    let hi = 5.0 * spacing;
    let mismatch = |sigma: f64| density_mismatch(poses, shape, sigma);
    let best = golden_min(mismatch, lo, hi, 1e-3 * spacing);
    (1.0 - best / (2.0 * shape.area())).clamp(0.0, 1.0)
}

/// Integral of |inside - smoothed density| over the regions where either
/// term is nonzero: the shape's padded bounding box and the robots', merged
/// when they overlap so nothing is double counted.
fn density_mismatch(poses: &[Vec2], shape: &TargetShape, sigma: f64) -> f64 {
    let pad = 4.0 * sigma;
    let expand = |(min, max): (Vec2, Vec2)| {
        (
            Vec2::new(min.x - pad, min.y - pad),
            Vec2::new(max.x + pad, max.y + pad),
        )
    };
    let shape_box = expand(shape.bbox());
    let pose_box = expand(bbox_of(poses));
    let overlaps = shape_box.0.x <= pose_box.1.x
        && pose_box.0.x <= shape_box.1.x
        && shape_box.0.y <= pose_box.1.y
        && pose_box.0.y <= shape_box.1.y;
    if overlaps {
        let merged = (
            Vec2::new(
                shape_box.0.x.min(pose_box.0.x),
                shape_box.0.y.min(pose_box.0.y),
            ),
            Vec2::new(
                shape_box.1.x.max(pose_box.1.x),
                shape_box.1.y.max(pose_box.1.y),
            ),
        );
        mismatch_over_box(poses, shape, sigma, merged)
    } else {
        mismatch_over_box(poses, shape, sigma, shape_box)
            + mismatch_over_box(poses, shape, sigma, pose_box)
    }
}

fn mismatch_over_box(
    poses: &[Vec2],
    shape: &TargetShape,
    sigma: f64,
    (min, max): (Vec2, Vec2),
) -> f64 {
    let mut h = sigma / 4.0;
    let mut nx = ((max.x - min.x) / h).ceil() as usize + 1;
    let mut ny = ((max.y - min.y) / h).ceil() as usize + 1;
    // Keep the grid tractable for pathological bandwidths.
    const MAX_CELLS: usize = 4_000_000;
    while nx * ny > MAX_CELLS {
        h *= 2.0;
        nx = ((max.x - min.x) / h).ceil() as usize + 1;
        ny = ((max.y - min.y) / h).ceil() as usize + 1;
    }
    let coeff = shape.area() / (std::f64::consts::PI * sigma * sigma * poses.len() as f64);
    let mut density = vec![0.0f64; nx * ny];
    let reach = (5.0 * sigma / h).ceil() as i64;
    let inv_sigma_sq = 1.0 / (sigma * sigma);
    for p in poses {
        let cx = ((p.x - min.x) / h).round() as i64;
        let cy = ((p.y - min.y) / h).round() as i64;
        if cx < -reach || cy < -reach || cx > nx as i64 + reach || cy > ny as i64 + reach {
            continue;
        }
        for gy in (cy - reach).max(0)..=(cy + reach).min(ny as i64 - 1) {
            let y = min.y + gy as f64 * h;
            let dy = y - p.y;
            for gx in (cx - reach).max(0)..=(cx + reach).min(nx as i64 - 1) {
                let x = min.x + gx as f64 * h;
                let dx = x - p.x;
                density[gy as usize * nx + gx as usize] +=
                    coeff * (-(dx * dx + dy * dy) * inv_sigma_sq).exp();
            }
        }
    }
    let mut integral = 0.0;
    for gy in 0..ny {
        let y = min.y + gy as f64 * h;
        for gx in 0..nx {
            let x = min.x + gx as f64 * h;
            let inside = if shape.contains(Vec2::new(x, y)) { 1.0 } else { 0.0 };
            integral += (inside - density[gy * nx + gx]).abs();
        }
    }
    integral * h * h
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - (b - a) * INV_PHI;
    let mut d = a + (b - a) * INV_PHI;
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * INV_PHI;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * INV_PHI;
            fd = f(d);
        }
    }
    fc.min(fd)
}

/// Which localization backend drives a formation run.
#[derive(Debug, Clone)]
pub enum LocalizerKind {
    Matrix(crate::vpe::VpeParams),
    Optical(crate::optical::OpticalParams, crate::optical::SensorModel),
}

/// Per-step record of a formation run.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub similarity: f64,
    pub mean_loc_error: f64,
    pub max_displacement: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FormationOutcome {
    Completed,
    Fragmented { step: usize },
}

/// Full trajectory of a formation run.
#[derive(Debug, Clone)]
pub struct FormationReport {
    pub steps: Vec<StepRecord>,
    /// Sparse pose/estimate snapshots: (step, poses, estimates).
    pub snapshots: Vec<(usize, Vec<Vec2>, Vec<Vec2>)>,
    pub final_similarity: f64,
    pub outcome: FormationOutcome,
}

/// Similarity with the swarm centroid translated onto the target centroid.
///
/// Beacon-free localization leaves the swarm's absolute position a neutral
/// mode (the estimate frame rides on the swarm centroid), so run reports
/// score the formed shape rather than the unobservable world offset.
pub fn aligned_similarity_with_spacing(
    poses: &[Vec2],
    shape: &TargetShape,
    spacing: f64,
) -> f64 {
    let pose_centroid = centroid(poses);
    let shift = shape.centroid() - pose_centroid;
    let aligned: Vec<Vec2> = poses.iter().map(|p| *p + shift).collect();
    similarity_with_spacing(&aligned, shape, spacing)
}

/// Runs the full loop: initial localization, then `steps` movement rounds.
/// Fragmentation ends the run early with the trajectory so far.
pub fn run_formation(
    mut scenario: SwarmScenario,
    shape: &TargetShape,
    params: &FormationParams,
    localizer_kind: &LocalizerKind,
    steps: usize,
    snapshot_every: usize,
) -> Result<FormationReport> {
    params.validate()?;
    let mut matrix_session;
    let mut optical_session;
    let localizer: &mut dyn Relocalizer = match localizer_kind {
        LocalizerKind::Matrix(p) => {
            matrix_session = LocalizationSession::new(&scenario, p.clone())?;
            matrix_session.run_iters(params.initial_loc_iters);
            &mut matrix_session
        }
        LocalizerKind::Optical(p, sensors) => {
            optical_session = OpticalSession::new(&scenario, *p, *sensors)?;
            optical_session.run_iters(&scenario, params.initial_loc_iters)?;
            &mut optical_session
        }
    };
    let mut state = FormationState {
        poses: scenario.positions(),
        chi: localizer.refresh(&scenario, 0)?,
        step_index: 0,
        degenerate_events: 0,
    };
    let spacing = estimate_spacing(&state.poses, shape);
    let mut report = FormationReport {
        steps: Vec::with_capacity(steps),
        snapshots: vec![(0, state.poses.clone(), state.chi.clone())],
        final_similarity: aligned_similarity_with_spacing(&state.poses, shape, spacing),
        outcome: FormationOutcome::Completed,
    };
    for step in 0..steps {
        let before = state.poses.clone();
        match formation_step(&mut state, &mut scenario, shape, params, localizer) {
            Ok(()) => {}
            Err(Error::SwarmFragmented { step }) => {
                report.outcome = FormationOutcome::Fragmented { step };
                break;
            }
            Err(e) => return Err(e),
        }
        let sim = aligned_similarity_with_spacing(&state.poses, shape, spacing);
        let (_, mean_err, _) = crate::report::aligned_errors(&state.chi, &state.poses);
        let max_displacement = state
            .poses
            .iter()
            .zip(&before)
            .map(|(a, b)| (*a - *b).norm())
            .fold(0.0, f64::max);
        report.steps.push(StepRecord {
            step: step + 1,
            similarity: sim,
            mean_loc_error: mean_err,
            max_displacement,
        });
        report.final_similarity = sim;
        if snapshot_every > 0 && (step + 1) % snapshot_every == 0 {
            report
                .snapshots
                .push((step + 1, state.poses.clone(), state.chi.clone()));
        }
    }
    if report
        .snapshots
        .last()
        .map(|(s, _, _)| *s != state.step_index)
        .unwrap_or(true)
    {
        report
            .snapshots
            .push((state.step_index, state.poses.clone(), state.chi.clone()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swarm::ChannelModel;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_square() -> TargetShape {
        TargetShape::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn shoelace_area_and_orientation() {
        let square = unit_square();
        assert_relative_eq!(square.area(), 1.0);
        // Clockwise input gets normalized.
        let cw = TargetShape::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
        ])
        .unwrap();
        assert_relative_eq!(cw.area(), 1.0);
        assert!(signed_area(cw.vertices()) > 0.0);
    }

    #[test]
    fn bowtie_polygon_is_rejected() {
        let err = TargetShape::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn letter_k_is_simple_with_requested_area() {
        let k = TargetShape::letter_k(2.0).unwrap();
        assert_relative_eq!(k.area(), 2.0, max_relative = 1e-9);
        assert!(k.centroid().norm() < 1e-9);
    }

    #[test]
    fn containment_and_nearest_point() {
        let square = unit_square();
        assert!(square.contains(Vec2::new(0.5, 0.5)));
        assert!(!square.contains(Vec2::new(1.5, 0.5)));
        let q = square.nearest_boundary_point(Vec2::new(1.5, 0.5));
        assert_relative_eq!(q.x, 1.0);
        assert_relative_eq!(q.y, 0.5);
        let q = square.nearest_boundary_point(Vec2::new(0.5, 0.2));
        assert_relative_eq!(q.y, 0.0);
    }

    #[test]
    fn attraction_saturates_far_outside() {
        let square = unit_square();
        let params = FormationParams::default();
        let d = attractive_factor(Vec2::new(0.5, -50.0), &square, &params).unwrap();
        assert_relative_eq!(d.norm(), 2.0 * params.c3, max_relative = 1e-9);
        assert!(d.y > 0.0, "points toward the shape");
    }

    #[test]
    fn attraction_at_triangle_incenter_points_inward() {
        let tri = TargetShape::triangle(1.0).unwrap();
        let params = FormationParams::default();
        // Centroid = incenter for the equilateral triangle; the origin.
        let inradius = -tri.vertices()[0].y; // distance to the bottom edge
        let chi = Vec2::new(0.0, 0.0);
        let d = attractive_factor(chi, &tri, &params).unwrap();
        let expected = params.c3 * (1.0 - (params.c4 * inradius).tanh());
        assert_relative_eq!(d.norm(), expected, max_relative = 1e-9);
        // All three edges tie at the incenter; the factor points away from
        // whichever nearest point the tie-break selected.
        let toward_edge = (tri.nearest_boundary_point(chi) - chi).unit();
        assert_relative_eq!(d.dot(toward_edge), -d.norm(), max_relative = 1e-9);
    }

    #[test]
    fn attraction_on_boundary_is_degenerate() {
        let square = unit_square();
        let params = FormationParams::default();
        let err = attractive_factor(Vec2::new(0.5, 0.0), &square, &params).unwrap_err();
        assert!(matches!(err, Error::DegenerateBoundary));
    }

    fn two_robot_scenario(offset: Vec2) -> SwarmScenario {
        SwarmScenario::from_positions(
            vec![Vec2::new(0.0, 0.0), offset],
            ChannelModel::inverse_square(0.1, 0.5).unwrap(),
            Some(0.35),
        )
        .unwrap()
    }

    #[test]
    fn close_neighbor_repels_and_far_neighbor_attracts() {
        let params = FormationParams {
            i0: 0.5,
            ..FormationParams::default()
        };
        // Close neighbor on +x: reading above the set point, push -x.
        let close = two_robot_scenario(Vec2::new(0.12, 0.0));
        let d = repulsive_factor(&close, 0, &params);
        assert!(d.x < 0.0, "close neighbor should repel, got {d:?}");
        assert_relative_eq!(d.y, 0.0, epsilon = 1e-12);
        // Far neighbor still in range: reading below the set point, pull +x.
        let far = two_robot_scenario(Vec2::new(0.45, 0.0));
        let d = repulsive_factor(&far, 0, &params);
        assert!(d.x > 0.0, "isolated robot should rejoin the swarm, got {d:?}");
    }

    #[test]
    fn isolated_robot_has_zero_repulsion() {
        let scenario = SwarmScenario::from_positions(
            vec![Vec2::new(0.0, 0.0)],
            ChannelModel::inverse_square(0.1, 0.5).unwrap(),
            Some(0.35),
        )
        .unwrap();
        let d = repulsive_factor(&scenario, 0, &FormationParams::default());
        assert_eq!(d, Vec2::default());
    }

    #[test]
    fn similarity_of_full_lattice_is_high_and_far_cluster_is_low() {
        let square = TargetShape::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(15.0, 0.0),
            Vec2::new(15.0, 15.0),
            Vec2::new(0.0, 15.0),
        ])
        .unwrap();
        let lattice: Vec<Vec2> = (0..15)
            .flat_map(|i| (0..15).map(move |j| Vec2::new(i as f64 + 0.5, j as f64 + 0.5)))
            .collect();
        let s = similarity(&lattice, &square);
        assert!(s > 0.85, "lattice similarity {s}");

        let far: Vec<Vec2> = (0..20)
            .map(|i| Vec2::new(100.0 + 0.01 * i as f64, 100.0))
            .collect();
        let s = similarity(&far, &square);
        assert!(s < 0.05, "far-cluster similarity {s}");
    }

    #[test]
    fn tiny_step_cap_leaves_similarity_unchanged_to_first_order() {
        let spec = crate::swarm::ScenarioSpec {
            kind: crate::swarm::ScenarioKind::Square,
            size_factor: 4.0,
            spacing: 0.2,
            channel: ChannelModel::inverse_square(0.1, 0.5).unwrap(),
            seed: 2,
            r0_override: Some(0.35),
        };
        let mut scenario = spec.build().unwrap();
        let shape = TargetShape::triangle(16.0 * 0.04).unwrap();
        let params = FormationParams {
            step_cap: 1e-9,
            reloc_iters: 2,
            ..FormationParams::default()
        };
        let vpe = crate::vpe::VpeParams {
            k1: 0.01,
            ..crate::vpe::VpeParams::default()
        };
        let mut session = LocalizationSession::new(&scenario, vpe).unwrap();
        session.run_iters(50);
        let mut state = FormationState {
            poses: scenario.positions(),
            chi: session.chi(),
            step_index: 0,
            degenerate_events: 0,
        };
        let before = similarity(&state.poses, &shape);
        formation_step(&mut state, &mut scenario, &shape, &params, &mut session).unwrap();
        let after = similarity(&state.poses, &shape);
        assert!((before - after).abs() < 1e-6, "{before} vs {after}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn similarity_stays_in_unit_interval(
            seed in 0u64..30,
            n in 1usize..25,
            spread in 0.1f64..4.0,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let poses: Vec<Vec2> = (0..n)
                .map(|_| Vec2::new(rng.random_range(-spread..spread), rng.random_range(-spread..spread)))
                .collect();
            let shape = TargetShape::triangle(2.0).unwrap();
            let s = similarity(&poses, &shape);
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn attraction_magnitude_is_bounded_and_sign_correct(
            x in -3.0f64..3.0,
            y in -3.0f64..3.0,
        ) {
            let shape = TargetShape::triangle(2.0).unwrap();
            let params = FormationParams::default();
            let chi = Vec2::new(x, y);
            match attractive_factor(chi, &shape, &params) {
                Ok(d) => {
                    prop_assert!(d.norm() <= 2.0 * params.c3 + 1e-12);
                    let f = shape.nearest_boundary_point(chi) - chi;
                    let side = 2.0 * shape.in_indicator(chi) - 1.0;
                    let along = d.dot(f.unit());
                    prop_assert!(along * side >= -1e-12);
                }
                Err(Error::DegenerateBoundary) => {}
                Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
            }
        }

        #[test]
        fn repulsion_is_odd_under_mirror(
            dx in 0.05f64..0.45,
            dy in -0.3f64..0.3,
        ) {
            prop_assume!(Vec2::new(dx, dy).norm() <= 0.45);
            prop_assume!(Vec2::new(dx, dy).norm() >= 0.05);
            let params = FormationParams::default();
            let original = two_robot_scenario(Vec2::new(dx, dy));
            let mirrored = two_robot_scenario(Vec2::new(-dx, dy));
            let d1 = repulsive_factor(&original, 0, &params);
            let d2 = repulsive_factor(&mirrored, 0, &params);
            prop_assert!((d1.x + d2.x).abs() < 1e-12);
            prop_assert!((d1.y - d2.y).abs() < 1e-12);
        }
    }
}
