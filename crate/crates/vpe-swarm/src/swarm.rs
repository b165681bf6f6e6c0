//! Robot geometry, scenario generation and the optical attenuation matrix.
//!
//! Everything downstream (transfer probabilities, sensed intensities, the
//! transition matrix) derives from the symmetric attenuation matrix built
//! here: entry (i, j) is the intensity robot j senses when robot i emits
//! isotropic light of unit intensity.

use crate::error::{Error, Result};
use crate::vec2::{Vec2, X_AXIS};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Coincidence threshold for robot positions.
const MIN_SEPARATION: f64 = 1e-12;

/// A robot with a dense integer id and a plane position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotPose {
    pub id: usize,
    pub position: Vec2,
}

/// Distance-to-intensity law of the optical channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttenuationLaw {
    /// Intensity 1 anywhere within range, 0 beyond. Reproduces the idealized
    /// 1D chain analysis exactly.
    UnitWithinRange,
    /// 1 within the reference distance, (ref/d)^2 beyond it.
    InverseSquare,
    /// 1 within the reference distance, ref/d beyond it.
    InverseLinear,
}

impl AttenuationLaw {
    pub fn as_str(self) -> &'static str {
        match self {
            AttenuationLaw::UnitWithinRange => "unit-within-range",
            AttenuationLaw::InverseSquare => "inverse-square",
            AttenuationLaw::InverseLinear => "inverse-linear",
        }
    }
}

impl FromStr for AttenuationLaw {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "unit-within-range" => Ok(AttenuationLaw::UnitWithinRange),
            "inverse-square" => Ok(AttenuationLaw::InverseSquare),
            "inverse-linear" => Ok(AttenuationLaw::InverseLinear),
            other => Err(format!("unknown attenuation law `{other}`")),
        }
    }
}

/// Optical channel: how emitted light decays with distance, with a hard
/// cutoff at the maximum transmission distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub law: AttenuationLaw,
    /// Maximum transmission distance of light; no coupling beyond it.
    pub max_range: f64,
    /// Distance at which attenuation equals 1 (laws clamp to 1 inside it).
    pub reference_distance: f64,
}

impl ChannelModel {
    pub fn new(law: AttenuationLaw, max_range: f64, reference_distance: f64) -> Result<Self> {
        if !(max_range > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "max_range must be positive, got {max_range}"
            )));
        }
        if !(reference_distance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "reference_distance must be positive, got {reference_distance}"
            )));
        }
        Ok(ChannelModel {
            law,
            max_range,
            reference_distance,
        })
    }

    pub fn unit_within_range(max_range: f64) -> Result<Self> {
        ChannelModel::new(AttenuationLaw::UnitWithinRange, max_range, 1.0)
    }

    pub fn inverse_square(reference_distance: f64, max_range: f64) -> Result<Self> {
        ChannelModel::new(AttenuationLaw::InverseSquare, max_range, reference_distance)
    }

    /// Sensed intensity at distance `d` per unit emitted intensity.
    pub fn attenuation(&self, d: f64) -> f64 {
        if d > self.max_range {
            return 0.0;
        }
        match self.law {
            AttenuationLaw::UnitWithinRange => 1.0,
            AttenuationLaw::InverseSquare => {
                if d <= self.reference_distance {
                    1.0
                } else {
                    let r = self.reference_distance / d;
                    r * r
                }
            }
            AttenuationLaw::InverseLinear => {
                if d <= self.reference_distance {
                    1.0
                } else {
                    self.reference_distance / d
                }
            }
        }
    }
}

/// Symmetric attenuation matrix stored by sparse rows (neighbor lists).
///
/// The diagonal is zero: a robot does not sense its own light. Entries are
/// stored for both (i, j) and (j, i); neighbor lists are sorted by index.
#[derive(Debug, Clone)]
pub struct Gamma {
    l: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    values: Vec<f64>,
}

impl Gamma {
    /// Number of robots (matrix dimension).
    pub fn len(&self) -> usize {
        self.l
    }

    pub fn is_empty(&self) -> bool {
        self.l == 0
    }

    /// Stored entries over both triangles.
    pub fn nnz(&self) -> usize {
        self.neighbors.len()
    }

    /// Neighbor indices and attenuation values of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let range = self.offsets[i]..self.offsets[i + 1];
        (&self.neighbors[range.clone()], &self.values[range])
    }

    /// Entry (i, j); zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (nbrs, vals) = self.row(i);
        match nbrs.binary_search(&(j as u32)) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    /// Undirected edges (i < j) with their attenuation.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.l).flat_map(move |i| {
            let (nbrs, vals) = self.row(i);
            nbrs.iter()
                .zip(vals)
                .filter(move |(j, _)| (**j as usize) > i)
                .map(move |(j, v)| (i, *j as usize, *v))
        })
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.l, self.l);
        for i in 0..self.l {
            let (nbrs, vals) = self.row(i);
            for (j, v) in nbrs.iter().zip(vals) {
                m[(i, *j as usize)] = *v;
            }
        }
        m
    }

    /// Number of connected components of the nonzero pattern.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.l];
        let mut components = 0;
        let mut stack = Vec::new();
        for start in 0..self.l {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(i) = stack.pop() {
                let (nbrs, _) = self.row(i);
                for &j in nbrs {
                    let j = j as usize;
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.l <= 1 || self.component_count() == 1
    }
}

/// Builds the attenuation matrix from poses and a channel model.
///
/// Fails if any two robots coincide or if the induced graph is disconnected.
pub fn build_gamma(poses: &[RobotPose], channel: &ChannelModel) -> Result<Gamma> {
    let l = poses.len();
    if l == 0 {
        return Err(Error::InvalidParameter("no robots".into()));
    }
    let mut offsets = Vec::with_capacity(l + 1);
    let mut neighbors = Vec::new();
    let mut values = Vec::new();
    offsets.push(0);
    for i in 0..l {
        for j in 0..l {
            if i == j {
                continue;
            }
            let d = (poses[j].position - poses[i].position).norm();
            if d < MIN_SEPARATION {
                let (a, b) = (i.min(j), i.max(j));
                return Err(Error::CoincidentRobots(a, b));
            }
            let att = channel.attenuation(d);
            if att > 0.0 {
                neighbors.push(j as u32);
                values.push(att);
            }
        }
        offsets.push(neighbors.len());
    }
    let gamma = Gamma {
        l,
        offsets,
        neighbors,
        values,
    };
    if !gamma.is_connected() {
        return Err(Error::DisconnectedSwarm {
            components: gamma.component_count(),
        });
    }
    Ok(gamma)
}

/// Attenuation-weighted mean of pairwise distances, the default value of the
/// result-extraction scale r0.
pub fn weighted_mean_distance(gamma: &Gamma, poses: &[RobotPose]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, j, w) in gamma.edges() {
        let d = (poses[j].position - poses[i].position).norm();
        num += w * d;
        den += w;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Robot distribution patterns used throughout the simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Robots evenly spaced on a line along the x axis.
    Line,
    /// Square with edges parallel to the axes, random interior placement.
    Square,
    /// Square with its diagonal parallel to the x axis.
    RotatedSquare,
    /// Annulus whose outer radius is twice the inner radius.
    Annulus,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Line => "line",
            ScenarioKind::Square => "square",
            ScenarioKind::RotatedSquare => "rotated_square",
            ScenarioKind::Annulus => "annulus",
        }
    }

    pub fn is_planar(self) -> bool {
        !matches!(self, ScenarioKind::Line)
    }
}

impl FromStr for ScenarioKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "line" => Ok(ScenarioKind::Line),
            "square" => Ok(ScenarioKind::Square),
            "rotated_square" => Ok(ScenarioKind::RotatedSquare),
            "annulus" => Ok(ScenarioKind::Annulus),
            other => Err(format!("unknown scenario kind `{other}`")),
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Provenance of a generated scenario, kept for serialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioMeta {
    pub kind: ScenarioKind,
    pub size_factor: f64,
    pub spacing: f64,
    pub seed: u64,
}

/// A stationary swarm: poses, channel, the derived attenuation matrix, the
/// agreed x direction and the distance scale used in result extraction.
#[derive(Debug, Clone)]
pub struct SwarmScenario {
    pub poses: Vec<RobotPose>,
    pub channel: ChannelModel,
    pub gamma: Gamma,
    pub x_axis: Vec2,
    pub r0: f64,
    pub meta: Option<ScenarioMeta>,
}

impl SwarmScenario {
    /// Builds a scenario from explicit positions. `r0` defaults to the
    /// attenuation-weighted mean pairwise distance.
    pub fn from_positions(
        positions: Vec<Vec2>,
        channel: ChannelModel,
        r0_override: Option<f64>,
    ) -> Result<Self> {
        let poses: Vec<RobotPose> = positions
            .into_iter()
            .enumerate()
            .map(|(id, position)| RobotPose { id, position })
            .collect();
        let gamma = build_gamma(&poses, &channel)?;
        let default_r0 = weighted_mean_distance(&gamma, &poses);
        let r0 = r0_override.unwrap_or(if default_r0 > 0.0 { default_r0 } else { 1.0 });
        if !(r0 > 0.0) {
            return Err(Error::InvalidParameter(format!("r0 must be positive, got {r0}")));
        }
        Ok(SwarmScenario {
            poses,
            channel,
            gamma,
            x_axis: X_AXIS,
            r0,
            meta: None,
        })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.poses.iter().map(|p| p.position).collect()
    }

    pub fn y_axis(&self) -> Vec2 {
        self.x_axis.perp()
    }

    /// True when all robots lie on a line parallel to the x axis, in which
    /// case the y-axis exchange is skipped.
    pub fn is_x_degenerate(&self) -> bool {
        let y0 = self.poses[0].position.dot(self.y_axis());
        self.poses
            .iter()
            .all(|p| (p.position.dot(self.y_axis()) - y0).abs() < 1e-12)
    }

    /// Replaces positions (robots moved), rebuilding the attenuation matrix.
    /// Channel, axis and r0 are kept.
    pub fn with_positions(&self, positions: Vec<Vec2>) -> Result<Self> {
        let poses: Vec<RobotPose> = positions
            .into_iter()
            .enumerate()
            .map(|(id, position)| RobotPose { id, position })
            .collect();
        let gamma = build_gamma(&poses, &self.channel)?;
        Ok(SwarmScenario {
            poses,
            channel: self.channel,
            gamma,
            x_axis: self.x_axis,
            r0: self.r0,
            meta: None,
        })
    }
}

/// Full recipe for a generated scenario.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub size_factor: f64,
    pub spacing: f64,
    pub channel: ChannelModel,
    pub seed: u64,
    pub r0_override: Option<f64>,
}

impl ScenarioSpec {
    pub fn build(&self) -> Result<SwarmScenario> {
        generate_scenario(self)
    }
}

/// Minimum pairwise distance in random placement, as a fraction of spacing.
const PLACEMENT_MIN_DIST_FACTOR: f64 = 0.8;
/// Dart throws allowed per robot before a placement attempt is abandoned.
const PLACEMENT_DARTS_PER_ROBOT: usize = 2000;
/// Whole-placement retries (fresh darts, same RNG stream).
const PLACEMENT_RETRIES: usize = 8;

/// Generates a scenario for the requested distribution pattern.
///
/// Lines are deterministic; planar kinds place robots by dart throwing with
/// a minimum pairwise distance of 0.8 * spacing, retrying until the induced
/// graph is connected. Deterministic for a fixed seed.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<SwarmScenario> {
    if !(spec.size_factor >= 2.0) {
        return Err(Error::InvalidParameter(format!(
            "size_factor must be at least 2, got {}",
            spec.size_factor
        )));
    }
    if !(spec.spacing > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "spacing must be positive, got {}",
            spec.spacing
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let positions = match spec.kind {
        ScenarioKind::Line => {
            let n = spec.size_factor.ceil() as usize;
            (0..n)
                .map(|i| Vec2::new(i as f64 * spec.spacing, 0.0))
                .collect::<Vec<_>>()
        }
        planar => {
            let n = (spec.size_factor * spec.size_factor).ceil() as usize;
            let region = Region::for_kind(planar, spec.size_factor, spec.spacing);
            let min_dist = PLACEMENT_MIN_DIST_FACTOR * spec.spacing;
            let mut last_err = Error::PlacementFailure {
                placed: 0,
                requested: n,
            };
            let mut placed = None;
            for _ in 0..PLACEMENT_RETRIES {
                match throw_darts(&mut rng, &region, n, min_dist) {
                    Ok(points) => {
                        // Reject placements that leave the swarm disconnected.
                        let poses: Vec<RobotPose> = points
                            .iter()
                            .enumerate()
                            .map(|(id, &position)| RobotPose { id, position })
                            .collect();
                        match build_gamma(&poses, &spec.channel) {
                            Ok(_) => {
                                placed = Some(points);
                                break;
                            }
                            Err(e) => last_err = e,
                        }
                    }
                    Err(e) => last_err = e,
                }
            }
            match placed {
                Some(points) => points,
                None => return Err(last_err),
            }
        }
    };
    let mut scenario = SwarmScenario::from_positions(positions, spec.channel, spec.r0_override)?;
    scenario.meta = Some(ScenarioMeta {
        kind: spec.kind,
        size_factor: spec.size_factor,
        spacing: spec.spacing,
        seed: spec.seed,
    });
    Ok(scenario)
}

/// Sampling region for planar placement.
enum Region {
    Square { half_edge: f64 },
    RotatedSquare { half_edge: f64 },
    Annulus { inner: f64, outer: f64 },
}

impl Region {
    fn for_kind(kind: ScenarioKind, size_factor: f64, spacing: f64) -> Region {
        match kind {
            ScenarioKind::Square => Region::Square {
                half_edge: 0.5 * size_factor * spacing,
            },
            ScenarioKind::RotatedSquare => Region::RotatedSquare {
                half_edge: 0.5 * size_factor * spacing,
            },
            ScenarioKind::Annulus => {
                // Area pi*(4 - 1)*inner^2 holds ceil(size_factor^2) robots at
                // one robot per spacing^2.
                let inner = size_factor * spacing / (3.0 * std::f64::consts::PI).sqrt();
                Region::Annulus {
                    inner,
                    outer: 2.0 * inner,
                }
            }
            ScenarioKind::Line => unreachable!("lines are placed deterministically"),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec2 {
        match *self {
            Region::Square { half_edge } => Vec2::new(
                rng.random_range(-half_edge..=half_edge),
                rng.random_range(-half_edge..=half_edge),
            ),
            Region::RotatedSquare { half_edge } => {
                let p = Vec2::new(
                    rng.random_range(-half_edge..=half_edge),
                    rng.random_range(-half_edge..=half_edge),
                );
                // Rotate 45 degrees so the diagonal is parallel to x.
                let s = std::f64::consts::FRAC_1_SQRT_2;
                Vec2::new(s * (p.x - p.y), s * (p.x + p.y))
            }
            Region::Annulus { inner, outer } => {
                let u: f64 = rng.random_range(0.0..1.0);
                let r = (inner * inner + u * (outer * outer - inner * inner)).sqrt();
                let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                Vec2::new(r * theta.cos(), r * theta.sin())
            }
        }
    }
}

/// Dart throwing with a uniform grid for the minimum-distance check.
fn throw_darts(
    rng: &mut ChaCha8Rng,
    region: &Region,
    n: usize,
    min_dist: f64,
) -> Result<Vec<Vec2>> {
    let cell = min_dist.max(MIN_SEPARATION);
    let key = |p: Vec2| -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    };
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut points: Vec<Vec2> = Vec::with_capacity(n);
    let budget = PLACEMENT_DARTS_PER_ROBOT * n;
    let mut throws = 0;
    while points.len() < n {
        if throws >= budget {
            return Err(Error::PlacementFailure {
                placed: points.len(),
                requested: n,
            });
        }
        throws += 1;
        let p = region.sample(rng);
        let (cx, cy) = key(p);
        let mut ok = true;
        'check: for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = grid.get(&(cx + dx, cy + dy)) {
                    for &id in ids {
                        if (points[id] - p).norm() < min_dist {
                            ok = false;
                            break 'check;
                        }
                    }
                }
            }
        }
        if ok {
            grid.entry((cx, cy)).or_default().push(points.len());
            points.push(p);
        }
    }
    Ok(points)
}

const SCENARIO_FILE_HEADER: &str = "vpe-scenario v1";

/// Writes the scenario as a key-value header plus a position table.
/// Positions are printed with 17 significant digits and round-trip exactly.
pub fn write_scenario(scenario: &SwarmScenario, mut w: impl std::io::Write) -> Result<()> {
    writeln!(w, "{SCENARIO_FILE_HEADER}")?;
    match &scenario.meta {
        Some(meta) => {
            writeln!(w, "kind {}", meta.kind)?;
            writeln!(w, "size_factor {:.16e}", meta.size_factor)?;
            writeln!(w, "spacing {:.16e}", meta.spacing)?;
            writeln!(w, "seed {}", meta.seed)?;
        }
        None => writeln!(w, "kind custom")?,
    }
    writeln!(w, "law {}", scenario.channel.law.as_str())?;
    writeln!(w, "max_range {:.16e}", scenario.channel.max_range)?;
    writeln!(
        w,
        "reference_distance {:.16e}",
        scenario.channel.reference_distance
    )?;
    writeln!(w, "x_axis {:.16e} {:.16e}", scenario.x_axis.x, scenario.x_axis.y)?;
    writeln!(w, "r0 {:.16e}", scenario.r0)?;
    writeln!(w, "robots {}", scenario.len())?;
    for pose in &scenario.poses {
        writeln!(
            w,
            "{} {:.16e} {:.16e}",
            pose.id, pose.position.x, pose.position.y
        )?;
    }
    Ok(())
}

pub fn save_scenario(scenario: &SwarmScenario, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_scenario(scenario, std::io::BufWriter::new(file))
}

/// Reads a scenario written by [`write_scenario`], rebuilding the
/// attenuation matrix from the stored positions and channel.
pub fn read_scenario(text: &str, source: &str) -> Result<SwarmScenario> {
    let parse_err = |line: usize, message: String| Error::Parse {
        file: source.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    if header.trim() != SCENARIO_FILE_HEADER {
        return Err(parse_err(1, format!("expected `{SCENARIO_FILE_HEADER}`")));
    }

    let mut kind: Option<String> = None;
    let mut size_factor = None;
    let mut spacing = None;
    let mut seed = None;
    let mut law = None;
    let mut max_range = None;
    let mut reference_distance = None;
    let mut x_axis = None;
    let mut r0 = None;
    let mut robots: Option<usize> = None;
    let mut positions: Vec<Vec2> = Vec::new();

    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let first = parts.next().unwrap();
        if robots.is_some() {
            // Position table: `id x y`.
            let id: usize = first
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad robot id `{first}`")))?;
            let x: f64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(line_no, "missing x coordinate".into()))?;
            let y: f64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(line_no, "missing y coordinate".into()))?;
            if id != positions.len() {
                return Err(parse_err(
                    line_no,
                    format!("robot ids must be dense, expected {} got {id}", positions.len()),
                ));
            }
            positions.push(Vec2::new(x, y));
            continue;
        }
        let mut value_f64 = |name: &str| -> Result<f64> {
            parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(line_no, format!("bad value for `{name}`")))
        };
        match first {
            "kind" => {
                kind = Some(
                    parts
                        .next()
                        .ok_or_else(|| parse_err(line_no, "missing kind".into()))?
                        .to_string(),
                )
            }
            "size_factor" => size_factor = Some(value_f64("size_factor")?),
            "spacing" => spacing = Some(value_f64("spacing")?),
            "seed" => {
                seed = Some(
                    parts
                        .next()
                        .and_then(|s| s.parse::<u64>().ok())
                        .ok_or_else(|| parse_err(line_no, "bad value for `seed`".into()))?,
                )
            }
            "law" => {
                let s = parts
                    .next()
                    .ok_or_else(|| parse_err(line_no, "missing law".into()))?;
                law = Some(
                    AttenuationLaw::from_str(s).map_err(|e| parse_err(line_no, e))?,
                );
            }
            "max_range" => max_range = Some(value_f64("max_range")?),
            "reference_distance" => reference_distance = Some(value_f64("reference_distance")?),
            "x_axis" => {
                let x = value_f64("x_axis.x")?;
                let y = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(line_no, "bad value for `x_axis.y`".into()))?;
                x_axis = Some(Vec2::new(x, y));
            }
            "r0" => r0 = Some(value_f64("r0")?),
            "robots" => {
                robots = Some(
                    parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err(line_no, "bad value for `robots`".into()))?,
                )
            }
            other => return Err(parse_err(line_no, format!("unknown key `{other}`"))),
        }
    }

    let expected = robots.ok_or_else(|| parse_err(0, "missing `robots` count".into()))?;
    if positions.len() != expected {
        return Err(parse_err(
            0,
            format!("expected {expected} positions, found {}", positions.len()),
        ));
    }
    let channel = ChannelModel::new(
        law.ok_or_else(|| parse_err(0, "missing `law`".into()))?,
        max_range.ok_or_else(|| parse_err(0, "missing `max_range`".into()))?,
        reference_distance.ok_or_else(|| parse_err(0, "missing `reference_distance`".into()))?,
    )?;
    let mut scenario = SwarmScenario::from_positions(positions, channel, r0)?;
    if let Some(axis) = x_axis {
        scenario.x_axis = axis;
    }
    let kind = kind.ok_or_else(|| parse_err(0, "missing `kind`".into()))?;
    if kind != "custom" {
        let kind = ScenarioKind::from_str(&kind).map_err(|e| parse_err(0, e))?;
        scenario.meta = Some(ScenarioMeta {
            kind,
            size_factor: size_factor
                .ok_or_else(|| parse_err(0, "missing `size_factor`".into()))?,
            spacing: spacing.ok_or_else(|| parse_err(0, "missing `spacing`".into()))?,
            seed: seed.ok_or_else(|| parse_err(0, "missing `seed`".into()))?,
        });
    }
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<SwarmScenario> {
    let text = std::fs::read_to_string(path)?;
    read_scenario(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn poses(xs: &[(f64, f64)]) -> Vec<RobotPose> {
        xs.iter()
            .enumerate()
            .map(|(id, &(x, y))| RobotPose {
                id,
                position: Vec2::new(x, y),
            })
            .collect()
    }

    #[test]
    fn two_robots_within_range_unit_law() {
        let channel = ChannelModel::unit_within_range(1.5).unwrap();
        let gamma = build_gamma(&poses(&[(0.0, 0.0), (1.0, 0.0)]), &channel).unwrap();
        assert_eq!(gamma.get(0, 1), 1.0);
        assert_eq!(gamma.get(1, 0), 1.0);
        assert_eq!(gamma.get(0, 0), 0.0);
    }

    #[test]
    fn out_of_range_pair_is_disconnected() {
        let channel = ChannelModel::unit_within_range(1.5).unwrap();
        let err = build_gamma(&poses(&[(0.0, 0.0), (2.0, 0.0)]), &channel).unwrap_err();
        assert!(matches!(err, Error::DisconnectedSwarm { components: 2 }));
    }

    #[test]
    fn inverse_square_three_robot_chain() {
        let channel = ChannelModel::inverse_square(1.0, 1.5).unwrap();
        let gamma =
            build_gamma(&poses(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]), &channel).unwrap();
        assert_eq!(gamma.get(0, 1), 1.0);
        assert_eq!(gamma.get(0, 2), 0.0);
        assert_eq!(gamma.get(1, 2), 1.0);
    }

    #[test]
    fn inverse_laws_attenuate_beyond_reference() {
        let inv_sq = ChannelModel::inverse_square(1.0, 10.0).unwrap();
        assert_relative_eq!(inv_sq.attenuation(2.0), 0.25);
        let inv_lin = ChannelModel::new(AttenuationLaw::InverseLinear, 10.0, 1.0).unwrap();
        assert_relative_eq!(inv_lin.attenuation(2.0), 0.5);
        assert_eq!(inv_sq.attenuation(10.5), 0.0);
    }

    #[test]
    fn coincident_robots_rejected() {
        let channel = ChannelModel::unit_within_range(1.5).unwrap();
        let err = build_gamma(&poses(&[(0.5, 0.5), (0.5, 0.5)]), &channel).unwrap_err();
        assert!(matches!(err, Error::CoincidentRobots(0, 1)));
    }

    #[test]
    fn line_scenario_places_robots_at_integer_spacing() {
        let spec = ScenarioSpec {
            kind: ScenarioKind::Line,
            size_factor: 4.0,
            spacing: 1.0,
            channel: ChannelModel::unit_within_range(1.5).unwrap(),
            seed: 0,
            r0_override: None,
        };
        let scenario = spec.build().unwrap();
        assert_eq!(scenario.len(), 4);
        for (i, pose) in scenario.poses.iter().enumerate() {
            assert_eq!(pose.position, Vec2::new(i as f64, 0.0));
        }
        // Nearest-neighbor connectivity only, so r0 is the unit gap.
        assert_relative_eq!(scenario.r0, 1.0);
        assert!(scenario.is_x_degenerate());
    }

    #[test]
    fn annulus_radii_lie_between_inner_and_outer() {
        let spec = ScenarioSpec {
            kind: ScenarioKind::Annulus,
            size_factor: 10.0,
            spacing: 1.0,
            channel: ChannelModel::inverse_square(1.0, 2.5).unwrap(),
            seed: 7,
            r0_override: None,
        };
        let scenario = spec.build().unwrap();
        assert_eq!(scenario.len(), 100);
        let inner = 10.0 / (3.0 * std::f64::consts::PI).sqrt();
        for pose in &scenario.poses {
            let r = pose.position.norm();
            assert!(r >= inner - 1e-9 && r <= 2.0 * inner + 1e-9, "r = {r}");
        }
    }

    #[test]
    fn small_square_keeps_minimum_separation() {
        let spec = ScenarioSpec {
            kind: ScenarioKind::Square,
            size_factor: 2.0,
            spacing: 1.0,
            channel: ChannelModel::inverse_square(1.0, 2.5).unwrap(),
            seed: 3,
            r0_override: None,
        };
        let scenario = spec.build().unwrap();
        assert_eq!(scenario.len(), 4);
        for i in 0..4 {
            for j in (i + 1)..4 {
                let d = (scenario.poses[i].position - scenario.poses[j].position).norm();
                assert!(d >= 0.8, "pair ({i},{j}) at distance {d}");
            }
        }
    }

    #[test]
    fn scenario_file_round_trips_bit_exactly() {
        let spec = ScenarioSpec {
            kind: ScenarioKind::Annulus,
            size_factor: 5.0,
            spacing: 1.0,
            channel: ChannelModel::inverse_square(1.0, 2.5).unwrap(),
            seed: 11,
            r0_override: Some(1.72),
        };
        let scenario = spec.build().unwrap();
        let mut buf = Vec::new();
        write_scenario(&scenario, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let loaded = read_scenario(&text, "mem").unwrap();
        assert_eq!(loaded.len(), scenario.len());
        for (a, b) in scenario.poses.iter().zip(&loaded.poses) {
            assert_eq!(a.position.x.to_bits(), b.position.x.to_bits());
            assert_eq!(a.position.y.to_bits(), b.position.y.to_bits());
        }
        assert_eq!(loaded.r0.to_bits(), scenario.r0.to_bits());
        assert_eq!(loaded.meta, scenario.meta);
        assert_eq!(loaded.channel, scenario.channel);
    }

    proptest! {
        #[test]
        fn attenuation_is_non_increasing(
            law_idx in 0usize..3,
            d1 in 0.01f64..5.0,
            d2 in 0.01f64..5.0,
        ) {
            let law = [
                AttenuationLaw::UnitWithinRange,
                AttenuationLaw::InverseSquare,
                AttenuationLaw::InverseLinear,
            ][law_idx];
            let channel = ChannelModel::new(law, 3.0, 0.7).unwrap();
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(channel.attenuation(lo) >= channel.attenuation(hi));
            prop_assert!(channel.attenuation(hi) >= 0.0);
        }

        #[test]
        fn generated_scenarios_satisfy_gamma_invariants(
            kind_idx in 0usize..3,
            seed in 0u64..200,
            size in 2.0f64..6.0,
        ) {
            let kind = [ScenarioKind::Square, ScenarioKind::RotatedSquare, ScenarioKind::Annulus][kind_idx];
            let spec = ScenarioSpec {
                kind,
                size_factor: size,
                spacing: 1.0,
                channel: ChannelModel::inverse_square(1.0, 2.5).unwrap(),
                seed,
                r0_override: None,
            };
            let scenario = spec.build().unwrap();
            let gamma = &scenario.gamma;
            prop_assert!(gamma.is_connected());
            for i in 0..gamma.len() {
                prop_assert_eq!(gamma.get(i, i), 0.0);
                let (nbrs, vals) = gamma.row(i);
                for (j, v) in nbrs.iter().zip(vals) {
                    prop_assert!(*v > 0.0);
                    prop_assert_eq!(gamma.get(*j as usize, i), *v);
                }
            }
        }

        #[test]
        fn generation_is_deterministic(seed in 0u64..100) {
            let spec = ScenarioSpec {
                kind: ScenarioKind::Square,
                size_factor: 4.0,
                spacing: 1.0,
                channel: ChannelModel::inverse_square(1.0, 2.5).unwrap(),
                seed,
                r0_override: None,
            };
            let a = spec.build().unwrap();
            let b = spec.build().unwrap();
            for (pa, pb) in a.poses.iter().zip(&b.poses) {
                prop_assert_eq!(pa.position.x.to_bits(), pb.position.x.to_bits());
                prop_assert_eq!(pa.position.y.to_bits(), pb.position.y.to_bits());
            }
        }
    }
}
