//! Offline motion-primitive library generation.
//!
//! A library holds one state lattice per discretized articulation angle.
//! Each lattice carries control groups per travel direction: trajectories
//! that share their initial inputs, coincide until a first split, branch
//! there, and branch again at a second split. Everything is produced by
//! forward simulation of the kinematic model, so every stored point is
//! feasible by construction.
//!
//! Trajectories are stored in the vehicle frame (start pose at the origin)
//! and rigidly transformed online.

use crate::geom::wrap_angle;
use crate::kinematics::{integrate_step, ControlInput, VehicleParams, VehicleState};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::Forward, Direction::Backward];

    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Direction::Forward => 0,
            Direction::Backward => 1,
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::Forward => write!(f, "forward"),
            Direction::Backward => write!(f, "backward"),
        }
    }
}

/// One sample of a forward-simulated trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub pose: VehicleState,
    pub t: f64,
    pub speed: f64,
    /// Cumulative polyline length from the trajectory start [m].
    pub arc_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Id, unique within (lattice, direction).
    pub id: u16,
    pub direction: Direction,
    pub points: Vec<TrajectoryPoint>,
    /// Sample indices of the two control splits; strictly interior.
    pub split_indices: [usize; 2],
    /// Commanded articulation rates on the three inter-split segments.
    pub rate_schedule: [f64; 3],
}

impl Trajectory {
    pub fn start(&self) -> &TrajectoryPoint {
        &self.points[0]
    }

    pub fn end(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectory has points")
    }

    pub fn arc_length(&self) -> f64 {
        self.end().arc_length
    }

    /// The commanded articulation rate for the sample interval starting at
    /// `point_index`.
    pub fn rate_at(&self, point_index: usize) -> f64 {
        if point_index < self.split_indices[0] {
            self.rate_schedule[0]
        } else if point_index < self.split_indices[1] {
            self.rate_schedule[1]
        } else {
            self.rate_schedule[2]
        }
    }
}

/// Trajectories sharing initial inputs; point-identical up to
/// `shared_prefix_end`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGroup {
    pub id: u16,
    pub speed: f64,
    pub initial_rate: f64,
    pub shared_prefix_end: usize,
    pub trajectories: Vec<Trajectory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateLattice {
    pub id: u16,
    /// The articulation angle this lattice was generated for.
    pub articulation: f64,
    pub forward: Vec<ControlGroup>,
    pub backward: Vec<ControlGroup>,
}

impl StateLattice {
    pub fn groups(&self, direction: Direction) -> &[ControlGroup] {
        match direction {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        }
    }

    pub fn trajectory_count(&self, direction: Direction) -> usize {
        self.groups(direction).iter().map(|g| g.trajectories.len()).sum()
    }

    /// Look up a trajectory by its per-direction id.
    pub fn trajectory(&self, direction: Direction, id: u16) -> Option<&Trajectory> {
        self.groups(direction)
            .iter()
            .flat_map(|g| g.trajectories.iter())
            .find(|t| t.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    /// Number of evenly spaced lattices over the articulation range.
    pub lattice_count: usize,
    /// Explicit lattice articulations [rad]; overrides `lattice_count`.
    pub lattice_articulations: Option<Vec<f64>>,
    /// Control groups per lattice per direction.
    pub group_count: usize,
    /// Speed magnitude used for all groups [m/s].
    pub nominal_speed: f64,
    /// Branch factor at the first split.
    pub branch1: usize,
    /// Branch factor at the second split.
    pub branch2: usize,
    /// Trajectory sample spacing [s].
    pub sample_dt: f64,
    /// Internal integrator step [s].
    pub integrator_dt: f64,
    /// Arc-length horizon of every trajectory [m].
    pub horizon: f64,
    /// Leaves whose endpoints fall within this distance **and** the heading
    /// threshold of an already kept sibling are dropped.
    pub prune_dist: f64,
    pub prune_heading: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            lattice_count: 30,
            lattice_articulations: None,
            group_count: 15,
            nominal_speed: 1.0,
            branch1: 6,
            branch2: 5,
            sample_dt: 0.1,
            integrator_dt: 0.01,
            horizon: 10.0,
            prune_dist: 0.3,
            prune_heading: 5f64.to_radians(),
        }
    }
}

impl GenerationConfig {
    /// Trajectory duration [s].
    pub fn duration(&self) -> f64 {
        self.horizon / self.nominal_speed
    }

    /// Sample count past the start point.
    pub fn sample_count(&self) -> usize {
        (self.duration() / self.sample_dt).round() as usize
    }

    /// Sample indices of the two splits (at 30% and 60% of the horizon).
    pub fn split_samples(&self) -> [usize; 2] {
        let n = self.sample_count() as f64;
        [(0.3 * n).round() as usize, (0.6 * n).round() as usize]
    }

    pub fn validate(&self, params: &VehicleParams) -> Result<(), GenerationError> {
        if self.group_count < 2 {
            return Err(GenerationError::Invalid("generation.group_count must be >= 2".into()));
        }
        if self.branch1 < 1 || self.branch2 < 1 {
            return Err(GenerationError::Invalid("generation branch factors must be >= 1".into()));
        }
        if !(self.nominal_speed > 0.0) || self.nominal_speed > params.max_speed {
            return Err(GenerationError::Invalid(
                "generation.nominal_speed must lie in (0, vehicle.max_speed]".into(),
            ));
        }
        if !(self.sample_dt > 0.0 && self.integrator_dt > 0.0) {
            return Err(GenerationError::Invalid("generation time steps must be > 0".into()));
        }
        if self.sample_count() > 100_000 {
            return Err(GenerationError::Invalid(format!(
                "nominal_speed {} is too small for the numeric budget: {} samples per trajectory",
                self.nominal_speed,
                self.sample_count()
            )));
        }
        let [s1, s2] = self.split_samples();
        let n = self.sample_count();
        if s1 == 0 || s2 <= s1 || s2 >= n {
            return Err(GenerationError::Invalid(format!(
                "horizon {} m at speed {} m/s leaves no room for interior splits",
                self.horizon, self.nominal_speed
            )));
        }
        if let Some(gs) = &self.lattice_articulations {
            if gs.is_empty() {
                return Err(GenerationError::Invalid("explicit lattice list is empty".into()));
            }
            if gs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(GenerationError::Invalid(
                    "explicit lattice articulations must be strictly increasing".into(),
                ));
            }
            if gs.iter().any(|g| g.abs() > params.max_articulation + 1e-12) {
                return Err(GenerationError::Invalid(
                    "explicit lattice articulations exceed the articulation limit".into(),
                ));
            }
        } else if self.lattice_count < 2 {
            return Err(GenerationError::Invalid("generation.lattice_count must be >= 2".into()));
        }
        Ok(())
    }

    /// Lattice articulation grid: explicit list or an even grid over
    /// [-max_articulation, +max_articulation] (endpoints included).
    pub fn lattice_grid(&self, params: &VehicleParams) -> Vec<f64> {
        if let Some(gs) = &self.lattice_articulations {
            return gs.clone();
        }
        let n = self.lattice_count;
        let g = params.max_articulation;
        (0..n)
            .map(|i| -g + 2.0 * g * (i as f64) / ((n - 1) as f64))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("invalid generation config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveLibrary {
    pub params: VehicleParams,
    pub config: GenerationConfig,
    pub lattices: Vec<StateLattice>,
}

impl PrimitiveLibrary {
    pub fn lattice(&self, id: u16) -> &StateLattice {
        &self.lattices[id as usize]
    }

    pub fn trajectory_count(&self) -> usize {
        self.lattices
            .iter()
            .map(|l| l.trajectory_count(Direction::Forward) + l.trajectory_count(Direction::Backward))
            .sum()
    }
}

/// Build `TrajectoryPoint`s from sampled poses. Also used when loading a
/// library so that derived fields round-trip bit-exactly.
pub(crate) fn points_from_poses(
    poses: &[VehicleState],
    speed: f64,
    sample_dt: f64,
) -> Vec<TrajectoryPoint> {
    let mut arc = 0.0;
    let mut points = Vec::with_capacity(poses.len());
    for (k, pose) in poses.iter().enumerate() {
        if k > 0 {
            arc += pose.position().dist(poses[k - 1].position());
        }
        points.push(TrajectoryPoint {
            pose: *pose,
            t: k as f64 * sample_dt,
            speed,
            arc_length: arc,
        });
    }
    points
}

/// Simulate `samples` sample intervals at a constant input, appending the
/// resulting poses (one per sample) to `out`.
fn simulate_segment(
    start: VehicleState,
    input: ControlInput,
    params: &VehicleParams,
    cfg: &GenerationConfig,
    samples: usize,
    out: &mut Vec<VehicleState>,
) -> VehicleState {
    let substeps = (cfg.sample_dt / cfg.integrator_dt).round().max(1.0) as usize;
    let dt = cfg.sample_dt / substeps as f64;
    let mut state = start;
    for _ in 0..samples {
        for _ in 0..substeps {
            state = integrate_step(&state, &input, params, dt);
        }
        out.push(state);
    }
    state
}

/// Evenly fan `count` rates over [lo, hi]; a single branch takes the midpoint.
fn fan(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..count)
        .map(|i| lo + (hi - lo) * (i as f64) / ((count - 1) as f64))
        .collect()
}

/// Articulation rates that keep the articulation within its limit over a
/// segment of the given duration, intersected with the rate limit.
fn feasible_rates(
    articulation: f64,
    segment_duration: f64,
    params: &VehicleParams,
    count: usize,
) -> Vec<f64> {
    let lo = ((-params.max_articulation - articulation) / segment_duration)
        .max(-params.max_articulation_rate);
    let hi = ((params.max_articulation - articulation) / segment_duration)
        .min(params.max_articulation_rate);
    fan(lo, hi, count)
}

fn generate_lattice(
    lattice_id: u16,
    articulation: f64,
    params: &VehicleParams,
    cfg: &GenerationConfig,
) -> StateLattice {
    let [s1, s2] = cfg.split_samples();
    let n = cfg.sample_count();
    let seg1 = (s2 - s1) as f64 * cfg.sample_dt;
    let seg2 = (n - s2) as f64 * cfg.sample_dt;
    let group_rates = fan(
        -params.max_articulation_rate,
        params.max_articulation_rate,
        cfg.group_count,
    );

    let mut per_direction = Vec::with_capacity(2);
    for direction in Direction::ALL {
        let speed = direction.sign() * cfg.nominal_speed;
        let mut groups = Vec::with_capacity(cfg.group_count);
        let mut next_id: u16 = 0;
        for (gid, &rate0) in group_rates.iter().enumerate() {
            let start = VehicleState::new(0.0, 0.0, 0.0, articulation);
            let mut prefix = vec![start];
            let prefix_end = simulate_segment(
                start,
                ControlInput::new(speed, rate0),
                params,
                cfg,
                s1,
                &mut prefix,
            );

            let mut leaves: Vec<(Vec<VehicleState>, [f64; 3])> = Vec::new();
            for rate1 in feasible_rates(prefix_end.articulation, seg1, params, cfg.branch1) {
                let mut mid = prefix.clone();
                let mid_end = simulate_segment(
                    prefix_end,
                    ControlInput::new(speed, rate1),
                    params,
                    cfg,
                    s2 - s1,
                    &mut mid,
                );
                for rate2 in feasible_rates(mid_end.articulation, seg2, params, cfg.branch2) {
                    let mut poses = mid.clone();
                    simulate_segment(
                        mid_end,
                        ControlInput::new(speed, rate2),
                        params,
                        cfg,
                        n - s2,
                        &mut poses,
                    );
                    leaves.push((poses, [rate0, rate1, rate2]));
                }
            }

            // Drop near-duplicate leaves (endpoint and final heading both
            // within threshold of an already kept leaf of this group).
            let mut kept: Vec<(Vec<VehicleState>, [f64; 3])> = Vec::new();
            'leaf: for leaf in leaves {
                let end = leaf.0.last().unwrap();
                for k in &kept {
                    let ke = k.0.last().unwrap();
                    if end.position().dist(ke.position()) < cfg.prune_dist
                        && wrap_angle(end.heading - ke.heading).abs() < cfg.prune_heading
                    {
                        continue 'leaf;
                    }
                }
                kept.push(leaf);
            }

            let trajectories = kept
                .into_iter()
                .map(|(poses, rates)| {
                    let t = Trajectory {
                        id: next_id,
                        direction,
                        points: points_from_poses(&poses, speed, cfg.sample_dt),
                        split_indices: [s1, s2],
                        rate_schedule: rates,
                    };
                    next_id += 1;
                    t
                })
                .collect();
            groups.push(ControlGroup {
                id: gid as u16,
                speed,
                initial_rate: rate0,
                shared_prefix_end: s1,
                trajectories,
            });
        }
        per_direction.push(groups);
    }

    let backward = per_direction.pop().unwrap();
    let forward = per_direction.pop().unwrap();
    StateLattice {
        id: lattice_id,
        articulation,
        forward,
        backward,
    }
}

/// Generate the full primitive library. Parallel across lattices; the output
/// is independent of scheduling.
pub fn generate_library(
    params: &VehicleParams,
    cfg: &GenerationConfig,
) -> Result<PrimitiveLibrary, GenerationError> {
    params
        .validate()
        .map_err(GenerationError::Invalid)?;
    cfg.validate(params)?;
    let grid = cfg.lattice_grid(params);
    let lattices: Vec<StateLattice> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &g)| generate_lattice(i as u16, g, params, cfg))
        .collect();
    Ok(PrimitiveLibrary {
        params: params.clone(),
        config: cfg.clone(),
        lattices,
    })
}

/// Index of the lattice whose articulation is closest to `articulation`
/// (clamped to the limit first). Ties prefer the smaller |articulation|,
/// then the smaller index.
pub fn lattice_index(articulation: f64, library: &PrimitiveLibrary) -> u16 {
    let g = articulation.clamp(
        -library.params.max_articulation,
        library.params.max_articulation,
    );
    let mut best = 0usize;
    for (i, lattice) in library.lattices.iter().enumerate().skip(1) {
        let db = (library.lattices[best].articulation - g).abs();
        let di = (lattice.articulation - g).abs();
        if di + 1e-12 < db
            || ((di - db).abs() <= 1e-12
                && lattice.articulation.abs() + 1e-12 < library.lattices[best].articulation.abs())
        {
            best = i;
        }
    }
    best as u16
}

/// Rigidly transform a stored (vehicle-frame) trajectory by the given pose.
/// Articulation values and arc lengths are unchanged.
pub fn transform_to_world(traj: &Trajectory, pose: &VehicleState) -> Trajectory {
    let frame = pose.pose();
    Trajectory {
        id: traj.id,
        direction: traj.direction,
        points: traj
            .points
            .iter()
            .map(|p| {
                let world = frame.transform_point(p.pose.position());
                TrajectoryPoint {
                    pose: VehicleState::new(
                        world.x,
                        world.y,
                        wrap_angle(p.pose.heading + pose.heading),
                        p.pose.articulation,
                    ),
                    ..*p
                }
            })
            .collect(),
        split_indices: traj.split_indices,
        rate_schedule: traj.rate_schedule,
    }
}

/// Transform a single stored pose into the world frame.
pub fn transform_pose_to_world(local: &VehicleState, pose: &VehicleState) -> VehicleState {
    let world = pose.pose().transform_point(local.position());
    VehicleState::new(
        world.x,
        world.y,
        wrap_angle(local.heading + pose.heading),
        local.articulation,
    )
}

/// Egocentric poses of one executed group prefix (the part before the first
/// split), shared by every member of the group.
pub fn group_prefix(group: &ControlGroup) -> &[TrajectoryPoint] {
    let t = &group.trajectories[0];
    &t.points[..=group.shared_prefix_end.min(t.points.len() - 1)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::kinematics::steady_turn_radius;
    use approx::assert_relative_eq;

    fn small_cfg() -> GenerationConfig {
        GenerationConfig {
            lattice_count: 5,
            group_count: 5,
            branch1: 3,
            branch2: 2,
            ..GenerationConfig::default()
        }
    }

    #[test]
    fn default_grid_is_even_symmetric_and_avoids_zero() {
        let params = VehicleParams::saha();
        let cfg = GenerationConfig::default();
        let grid = cfg.lattice_grid(&params);
        assert_eq!(grid.len(), 30);
        assert_relative_eq!(grid[0], -params.max_articulation);
        assert_relative_eq!(grid[29], params.max_articulation);
        let spacing = grid[1] - grid[0];
        for w in grid.windows(2) {
            assert_relative_eq!(w[1] - w[0], spacing, epsilon = 1e-12);
        }
        assert!(grid.iter().all(|g| g.abs() > 1e-6));
        // Symmetric about zero.
        for i in 0..grid.len() {
            assert_relative_eq!(grid[i], -grid[grid.len() - 1 - i], epsilon = 1e-12);
        }
    }

    #[test]
    fn straight_group_prefix_is_a_straight_segment() {
        let params = VehicleParams::saha();
        let cfg = GenerationConfig {
            lattice_articulations: Some(vec![-params.max_articulation, 0.0, params.max_articulation]),
            ..small_cfg()
        };
        let lib = generate_library(&params, &cfg).unwrap();
        let lattice = &lib.lattices[1];
        assert_eq!(lattice.articulation, 0.0);
        // Middle group of an odd fan has zero initial rate.
        let group = &lattice.forward[cfg.group_count / 2];
        assert_relative_eq!(group.initial_rate, 0.0, epsilon = 1e-12);
        for p in group_prefix(group) {
            assert_relative_eq!(p.pose.y, 0.0, epsilon = 1e-12);
            assert_relative_eq!(p.pose.heading, 0.0, epsilon = 1e-12);
        }
        // The zero-rate branches continue straight for the full horizon.
        let straight = group
            .trajectories
            .iter()
            .find(|t| t.rate_schedule.iter().all(|r| r.abs() < 1e-12));
        if let Some(t) = straight {
            assert_relative_eq!(t.end().pose.x, cfg.horizon, epsilon = 1e-9);
            assert_relative_eq!(t.end().pose.y, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn default_library_shape() {
        let params = VehicleParams::saha();
        let cfg = GenerationConfig::default();
        let lib = generate_library(&params, &cfg).unwrap();
        assert_eq!(lib.lattices.len(), 30);
        for lattice in &lib.lattices {
            for direction in Direction::ALL {
                assert_eq!(lattice.groups(direction).len(), 15);
                let count = lattice.trajectory_count(direction);
                assert!(
                    (405..=495).contains(&count),
                    "lattice {} {direction}: {count} trajectories",
                    lattice.id
                );
                for g in lattice.groups(direction) {
                    for t in &g.trajectories {
                        let arc = t.arc_length();
                        assert!(
                            (arc - cfg.horizon).abs() <= 0.02 * cfg.horizon,
                            "arc {arc} out of tolerance"
                        );
                        assert_eq!(t.split_indices, [30, 60]);
                        assert_eq!(t.points.len(), 101);
                    }
                }
            }
        }
    }

    #[test]
    fn clamped_lattice_prefix_follows_minimum_radius_arc() {
        let params = VehicleParams::saha();
        let cfg = small_cfg();
        let lib = generate_library(&params, &cfg).unwrap();
        let lattice = lib.lattices.last().unwrap();
        assert_relative_eq!(lattice.articulation, params.max_articulation);
        let group = lattice.forward.last().unwrap(); // largest positive initial rate
        assert!(group.initial_rate > 0.0);
        let radius = steady_turn_radius(params.max_articulation, &params);
        let center = Vec2::new(0.0, -radius);
        for p in group_prefix(group) {
            assert_eq!(p.pose.articulation, params.max_articulation);
            assert!((p.pose.position().dist(center) - radius).abs() < 1e-3);
        }
    }

    #[test]
    fn points_respect_articulation_and_rate_limits() {
        let params = VehicleParams::saha();
        let cfg = small_cfg();
        let lib = generate_library(&params, &cfg).unwrap();
        for lattice in &lib.lattices {
            for direction in Direction::ALL {
                for g in lattice.groups(direction) {
                    for t in &g.trajectories {
                        for w in t.points.windows(2) {
                            assert!(w[1].pose.articulation.abs() <= params.max_articulation + 1e-12);
                            let rate = (w[1].pose.articulation - w[0].pose.articulation).abs()
                                / cfg.sample_dt;
                            assert!(rate <= params.max_articulation_rate + 1e-9);
                            assert!(w[1].arc_length >= w[0].arc_length);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn stored_points_reproducible_from_rate_schedule() {
        let params = VehicleParams::saha();
        let cfg = small_cfg();
        let lib = generate_library(&params, &cfg).unwrap();
        let lattice = &lib.lattices[3];
        for direction in Direction::ALL {
            for g in lattice.groups(direction) {
                for t in &g.trajectories {
                    let mut replay = vec![t.points[0].pose];
                    let mut state = t.points[0].pose;
                    for k in 0..t.points.len() - 1 {
                        let input = ControlInput::new(g.speed, t.rate_at(k));
                        state = simulate_segment(state, input, &params, &cfg, 1, &mut replay);
                    }
                    for (a, b) in replay.iter().zip(t.points.iter()) {
                        assert!(a.position().dist(b.pose.position()) < 1e-9);
                        assert!((a.heading - b.pose.heading).abs() < 1e-9);
                        assert!((a.articulation - b.pose.articulation).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn prefix_sharing_is_exact() {
        let params = VehicleParams::saha();
        let lib = generate_library(&params, &small_cfg()).unwrap();
        for lattice in &lib.lattices {
            for direction in Direction::ALL {
                for g in lattice.groups(direction) {
                    let first = &g.trajectories[0];
                    for t in &g.trajectories[1..] {
                        for k in 0..=g.shared_prefix_end {
                            assert_eq!(first.points[k].pose, t.points[k].pose);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn library_is_mirror_symmetric() {
        let params = VehicleParams::saha();
        let cfg = small_cfg();
        let lib = generate_library(&params, &cfg).unwrap();
        let n = lib.lattices.len();
        for (i, lattice) in lib.lattices.iter().enumerate() {
            let mirror = &lib.lattices[n - 1 - i];
            assert_relative_eq!(lattice.articulation, -mirror.articulation, epsilon = 1e-12);
            for direction in Direction::ALL {
                for g in lattice.groups(direction) {
                    for t in &g.trajectories {
                        let end = t.end().pose;
                        let found = mirror.groups(direction).iter().any(|mg| {
                            mg.trajectories.iter().any(|mt| {
                                let me = mt.end().pose;
                                (me.x - end.x).abs() < 1e-9
                                    && (me.y + end.y).abs() < 1e-9
                                    && wrap_angle(me.heading + end.heading).abs() < 1e-9
                            })
                        });
                        assert!(found, "no mirrored trajectory for lattice {i}");
                    }
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let params = VehicleParams::saha();
        let cfg = small_cfg();
        let a = generate_library(&params, &cfg).unwrap();
        let b = generate_library(&params, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn aggressive_pruning_reduces_leaves_but_keeps_groups() {
        let params = VehicleParams::saha();
        let cfg = small_cfg();
        let pruned_cfg = GenerationConfig {
            prune_dist: 5.0,
            prune_heading: 60f64.to_radians(),
            ..cfg.clone()
        };
        let full = generate_library(&params, &cfg).unwrap();
        let pruned = generate_library(&params, &pruned_cfg).unwrap();
        assert!(pruned.trajectory_count() < full.trajectory_count());
        for lattice in &pruned.lattices {
            for direction in Direction::ALL {
                for g in lattice.groups(direction) {
                    assert!(!g.trajectories.is_empty());
                }
            }
        }
    }

    #[test]
    fn rejects_unreachable_horizon() {
        let params = VehicleParams::saha();
        let cfg = GenerationConfig {
            nominal_speed: 1e-6,
            ..GenerationConfig::default()
        };
        assert!(generate_library(&params, &cfg).is_err());
    }

    #[test]
    fn lattice_index_selection() {
        let params = VehicleParams::saha();
        let lib = generate_library(&params, &GenerationConfig::default()).unwrap();
        // The articulation limit maps to the last lattice.
        assert_eq!(lattice_index(params.max_articulation, &lib), 29);
        assert_eq!(lattice_index(-params.max_articulation, &lib), 0);
        // Out-of-range values are clamped first.
        assert_eq!(lattice_index(1.0, &lib), 29);
        // Zero sits exactly between the middle pair; both have the same
        // |articulation|, so the smaller index wins.
        assert_eq!(lattice_index(0.0, &lib), 14);
        // An exact halfway point between two lattices on the negative side:
        // the tie goes to the smaller |articulation| member.
        let halfway = 0.5 * (lib.lattices[2].articulation + lib.lattices[3].articulation);
        assert_eq!(lattice_index(halfway, &lib), 3);
        // Anything nearer one lattice picks that lattice.
        let near = lib.lattices[7].articulation + 0.1e-2;
        assert_eq!(lattice_index(near, &lib), 7);
    }

    #[test]
    fn transform_round_trip_and_invariants() {
        let params = VehicleParams::saha();
        let lib = generate_library(&params, &small_cfg()).unwrap();
        let traj = &lib.lattices[2].forward[1].trajectories[0];

        let identity = VehicleState::new(0.0, 0.0, 0.0, 0.3);
        let same = transform_to_world(traj, &identity);
        assert_eq!(&same, traj);

        let pose = VehicleState::new(3.0, -2.0, std::f64::consts::PI, 0.0);
        let moved = transform_to_world(traj, &pose);
        // A 180 degree rotation negates coordinates relative to the origin.
        let end = traj.end().pose;
        let moved_end = moved.end().pose;
        assert_relative_eq!(moved_end.x, 3.0 - end.x, epsilon = 1e-12);
        assert_relative_eq!(moved_end.y, -2.0 - end.y, epsilon = 1e-12);
        // Arc lengths and articulations are invariant under the transform.
        for (a, b) in traj.points.iter().zip(moved.points.iter()) {
            assert_relative_eq!(a.arc_length, b.arc_length, epsilon = 1e-9);
            assert_eq!(a.pose.articulation, b.pose.articulation);
        }
    }
}
