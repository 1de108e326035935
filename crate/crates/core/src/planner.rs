//! Online receding-horizon planner.
//!
//! Every replan cycle rasterizes the sensed obstacles, masks occluded
//! trajectories of the lattice matching the live articulation, scores the
//! surviving trajectories, aggregates scores per control group and returns
//! the shared prefix of the best group. Goals inside the minimum-turning
//! "unreachable zone" are handled by pairing vehicle-originating
//! trajectories with a goal-anchored fan into a two-segment composite whose
//! legs are driven in opposite gears.

use crate::collision::{mark_occluded, rasterize_obstacles, CorrespondenceMap, OcclusionMask};
use crate::geom::{wrap_angle, Obstacle, Pose2, Vec2};
use crate::kinematics::{max_curvature, VehicleParams, VehicleState};
use crate::primitives::{
    group_prefix, lattice_index, transform_pose_to_world, Direction, PrimitiveLibrary, Trajectory,
    TrajectoryPoint,
};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Normalizations and weights of the heuristic score terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    /// Weight of the distance term inside the squared sum.
    pub alpha: f64,
    /// Distance normalization constant [m]; at least the map diagonal.
    pub d_max: f64,
    /// Mirror of the vehicle articulation limit [rad].
    pub max_articulation: f64,
    /// Mirror of the vehicle speed limit [m/s].
    pub max_speed: f64,
    /// Terrain heights above this cutoff zero a trajectory score [m].
    pub terrain_height_cutoff: f64,
    /// Length scale of the replan-consistency decay [m].
    pub consistency_scale: f64,
    /// Lower bound of the consistency term. A floor of f caps the penalty
    /// for jumping to a distant candidate at a factor of f, so a clearly
    /// better trajectory (or the opposite gear) can still win a replan.
    pub consistency_floor: f64,
    /// Per-term proportionality constants, each in (0, 1].
    pub dist_scale: f64,
    pub dir_scale: f64,
    pub state_scale: f64,
    pub vel_scale: f64,
    pub terrain_scale: f64,
    /// When set, group averages divide by the full member count instead of
    /// the collision-free member count.
    pub average_over_all_members: bool,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            alpha: 1.0,
            d_max: 57.0,
            max_articulation: 33f64.to_radians(),
            max_speed: 1.0,
            terrain_height_cutoff: 0.5,
            consistency_scale: 3.0,
            consistency_floor: 0.5,
            dist_scale: 1.0,
            dir_scale: 1.0,
            state_scale: 1.0,
            vel_scale: 1.0,
            terrain_scale: 1.0,
            average_over_all_members: false,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0) {
            return Err("scoring.alpha must be > 0".into());
        }
        if !(self.d_max > 0.0) {
            return Err("scoring.d_max must be > 0".into());
        }
        if !(self.consistency_scale > 0.0) {
            return Err("scoring.consistency_scale must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.consistency_floor) {
            return Err("scoring.consistency_floor must lie in [0, 1)".into());
        }
        for (name, v) in [
            ("dist_scale", self.dist_scale),
            ("dir_scale", self.dir_scale),
            ("state_scale", self.state_scale),
            ("vel_scale", self.vel_scale),
            ("terrain_scale", self.terrain_scale),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(format!("scoring.{name} must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub scoring: ScoringConfig,
    /// Goal positions within this distance count as reached [m].
    pub goal_tolerance: f64,
    /// Shrink of the unreachable-zone discs [m].
    pub zone_margin: f64,
    /// Sampled goal-fan headings for bi-directional planning.
    pub bidi_headings: usize,
    /// Position threshold for segment intersections [m].
    pub bidi_position_tolerance: f64,
    /// Heading threshold for segment intersections [rad].
    pub bidi_heading_tolerance: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            scoring: ScoringConfig::default(),
            goal_tolerance: 0.3,
            zone_margin: 0.05,
            bidi_headings: 36,
            bidi_position_tolerance: 0.5,
            bidi_heading_tolerance: 15f64.to_radians(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.scoring.validate()?;
        if !(self.goal_tolerance > 0.0) {
            return Err("planner.goal_tolerance must be > 0".into());
        }
        if self.bidi_headings == 0 {
            return Err("planner.bidi_headings must be >= 1".into());
        }
        if !(self.bidi_position_tolerance > 0.0 && self.bidi_heading_tolerance > 0.0) {
            return Err("planner bi-directional tolerances must be > 0".into());
        }
        Ok(())
    }
}

/// The six score terms, each in [0, 1], and their combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreBreakdown {
    pub dist: f64,
    pub dir: f64,
    pub state: f64,
    pub vel: f64,
    pub terrain: f64,
    pub consistency: f64,
    pub total: f64,
}

/// Score a trajectory sub-path ending at `end_index` toward `goal` (all in
/// one common frame).
fn score_at_index(
    points: &[TrajectoryPoint],
    end_index: usize,
    goal: Vec2,
    current_articulation: f64,
    previous_endpoint: Option<Vec2>,
    max_terrain_height: f64,
    cfg: &ScoringConfig,
) -> ScoreBreakdown {
    let start = &points[0];
    let end = &points[end_index];
    let end_pos = end.pose.position();

    let to_goal = goal - end_pos;
    let d_end = to_goal.norm();
    let dist = cfg.dist_scale * (cfg.d_max - d_end).max(0.0) / cfg.d_max;

    let dtheta1 = if d_end < 1e-9 {
        0.0
    } else {
        wrap_angle(end.pose.heading - to_goal.angle())
    };
    let travel = end_pos - start.pose.position();
    let goal_from_start = goal - start.pose.position();
    // A candidate whose scored portion makes no progress offers the worst
    // possible alignment, not a free pass.
    let dtheta2 = if travel.norm() < 1e-9 {
        PI
    } else if goal_from_start.norm() < 1e-9 {
        0.0
    } else {
        wrap_angle(travel.angle() - goal_from_start.angle())
    };
    let dir = cfg.dir_scale
        * ((2.0 * PI - dtheta1.abs()) / (2.0 * PI))
        * ((2.0 * PI - dtheta2.abs()) / (2.0 * PI));

    let g_max = cfg.max_articulation;
    let state = cfg.state_scale
        * (2.0 * g_max - (start.pose.articulation - current_articulation).abs()).max(0.0)
        / (2.0 * g_max);

    let vel = cfg.vel_scale * (start.speed.abs() / cfg.max_speed).min(1.0);

    let terrain = if max_terrain_height <= cfg.terrain_height_cutoff {
        cfg.terrain_scale
    } else {
        0.0
    };

    let consistency = match previous_endpoint {
        Some(prev) => {
            let decay = (-(end_pos.dist(prev)) / cfg.consistency_scale).exp();
            cfg.consistency_floor + (1.0 - cfg.consistency_floor) * decay
        }
        None => 1.0,
    };

    let total = (dir + cfg.alpha * dist).powi(2) * vel * state * terrain * consistency;
    ScoreBreakdown {
        dist,
        dir,
        state,
        vel,
        terrain,
        consistency,
        total,
    }
}

/// Score a full trajectory toward a goal, all expressed in the vehicle
/// frame the trajectory lives in.
///
/// The scored endpoint is the trajectory's closest-approach sample to the
/// goal. For goals at or beyond the trajectory's reach this is simply the
/// final point, which is the usual receding-horizon situation; for goals
/// inside the horizon it keeps the heading terms meaningful instead of
/// flipping them once the remainder of the trajectory overshoots.
pub fn score_trajectory(
    traj: &Trajectory,
    goal: Vec2,
    current_articulation: f64,
    previous_endpoint: Option<Vec2>,
    max_terrain_height: f64,
    cfg: &ScoringConfig,
) -> ScoreBreakdown {
    let mut end_index = traj.points.len() - 1;
    let mut best = f64::INFINITY;
    for (k, p) in traj.points.iter().enumerate() {
        let d = p.pose.position().dist(goal);
        if d < best {
            best = d;
            end_index = k;
        }
    }
    score_at_index(
        &traj.points,
        end_index,
        goal,
        current_articulation,
        previous_endpoint,
        max_terrain_height,
        cfg,
    )
}

/// Comprehensive group score: the mean of its member totals.
pub fn score_group(member_totals: &[f64]) -> Option<f64> {
    if member_totals.is_empty() {
        return None;
    }
    Some(member_totals.iter().sum::<f64>() / member_totals.len() as f64)
}

/// True when the goal sits strictly inside one of the two minimum-turning
/// discs beside the vehicle (shrunk by the margin).
pub fn in_unreachable_zone(goal_local: Vec2, params: &VehicleParams, margin: f64) -> bool {
    let r_min = 1.0 / max_curvature(params);
    let threshold = r_min - margin;
    goal_local.dist(Vec2::new(0.0, r_min)) < threshold
        || goal_local.dist(Vec2::new(0.0, -r_min)) < threshold
}

/// Cross-replan context threaded by the caller; `plan` itself stays a pure
/// function of its arguments.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanContext {
    /// World-frame endpoint of the previously selected trajectory.
    pub previous_endpoint: Option<Vec2>,
    /// Whether the previous plan was a bi-directional composite. Keeps the
    /// composite mode latched until the goal clearly leaves the zone, so
    /// the mode cannot flicker at the zone boundary.
    pub previous_composite: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PlanStatus {
    PathFound,
    GoalReached,
    NoPathFound,
}

/// One row of the per-replan score table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupScore {
    pub direction: Direction,
    pub lattice: u16,
    pub group: u16,
    pub scored_members: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub status: PlanStatus,
    pub direction: Option<Direction>,
    pub lattice: Option<u16>,
    pub group: Option<u16>,
    /// World-frame poses of the executed prefix (the part of the winning
    /// group before its first split).
    pub path: Vec<VehicleState>,
    /// Set when the plan is a bi-directional composite.
    pub composite: bool,
    /// World-frame poses of the composite's second leg, ordered as executed.
    pub second_segment: Option<Vec<VehicleState>>,
    pub score_table: Vec<GroupScore>,
    /// World-frame endpoint of the selected trajectory, feeding the
    /// consistency term of the next replan.
    pub selected_endpoint: Option<Vec2>,
}

impl PlanResult {
    fn terminal(status: PlanStatus) -> PlanResult {
        PlanResult {
            status,
            direction: None,
            lattice: None,
            group: None,
            path: Vec::new(),
            composite: false,
            second_segment: None,
            score_table: Vec::new(),
            selected_endpoint: None,
        }
    }

    /// CSV dump of the score table (one row per control group).
    pub fn score_table_csv(&self) -> String {
        let mut out = String::from("direction,lattice,group,scored_members,score\n");
        for row in &self.score_table {
            out.push_str(&format!(
                "{},{},{},{},{:.12}\n",
                row.direction, row.lattice, row.group, row.scored_members, row.score
            ));
        }
        out
    }
}

/// Algorithm: rasterize obstacles, mask occluded trajectories per
/// direction, then either run the bi-directional recovery (goal in the
/// unreachable zone) or score each collision-free trajectory, aggregate per
/// control group and return the first coinciding part of the argmax group.
pub fn plan(
    state: &VehicleState,
    goal_world: Vec2,
    obstacles: &[Obstacle],
    library: &PrimitiveLibrary,
    correspondence: &CorrespondenceMap,
    cfg: &PlannerConfig,
    ctx: PlanContext,
) -> PlanResult {
    let frame = state.pose();
    let goal_local = frame.inverse_transform_point(goal_world);
    if goal_local.norm() <= cfg.goal_tolerance {
        return PlanResult::terminal(PlanStatus::GoalReached);
    }

    let occupancy = rasterize_obstacles(obstacles, state, &correspondence.grid);
    let lattice_id = lattice_index(state.articulation, library);
    let masks: Vec<OcclusionMask> = Direction::ALL
        .iter()
        .map(|&d| mark_occluded(correspondence, &occupancy, lattice_id, d))
        .collect();
    let prev_local = ctx.previous_endpoint.map(|p| frame.inverse_transform_point(p));

    // A goal within goal_tolerance depth of the zone boundary can still be
    // passed within tolerance by a boundary-grazing unidirectional path, so
    // the entry trigger shrinks the discs by the tolerance as well. Once
    // engaged, the composite mode stays latched until the goal leaves the
    // bare-margin zone, which prevents flicker at the boundary.
    let engage = in_unreachable_zone(
        goal_local,
        &library.params,
        cfg.zone_margin + cfg.goal_tolerance,
    ) || (ctx.previous_composite
        && in_unreachable_zone(goal_local, &library.params, cfg.zone_margin));
    if engage {
        return plan_bidirectional_impl(state, goal_local, library, &masks, cfg, prev_local);
    }

    let lattice = library.lattice(lattice_id);
    let mut table = Vec::new();
    let mut best: Option<(f64, Direction, u16)> = None;
    let mut best_endpoint: Option<Vec2> = None;
    for direction in Direction::ALL {
        let mask = &masks[direction.index()];
        for group in lattice.groups(direction) {
            let mut totals = Vec::new();
            let mut member_best: Option<(f64, Vec2)> = None;
            for traj in &group.trajectories {
                if mask.is_blocked(traj.id) {
                    continue;
                }
                let s = score_trajectory(
                    traj,
                    goal_local,
                    state.articulation,
                    prev_local,
                    0.0,
                    &cfg.scoring,
                );
                totals.push(s.total);
                let end = traj.end().pose.position();
                if member_best.map_or(true, |(b, _)| s.total > b) {
                    member_best = Some((s.total, end));
                }
            }
            if totals.is_empty() {
                continue;
            }
            let denom = if cfg.scoring.average_over_all_members {
                group.trajectories.len()
            } else {
                totals.len()
            };
            let score = totals.iter().sum::<f64>() / denom as f64;
            table.push(GroupScore {
                direction,
                lattice: lattice_id,
                group: group.id,
                scored_members: totals.len(),
                score,
            });
            if best.map_or(true, |(b, _, _)| score > b) {
                best = Some((score, direction, group.id));
                best_endpoint = member_best.map(|(_, e)| e);
            }
        }
    }

    match best {
        None => {
            let mut r = PlanResult::terminal(PlanStatus::NoPathFound);
            r.score_table = table;
            r
        }
        Some((_, direction, group_id)) => {
            let group = &lattice.groups(direction)[group_id as usize];
            let path = group_prefix(group)
                .iter()
                .map(|p| transform_pose_to_world(&p.pose, state))
                .collect();
            PlanResult {
                status: PlanStatus::PathFound,
                direction: Some(direction),
                lattice: Some(lattice_id),
                group: Some(group_id),
                path,
                composite: false,
                second_segment: None,
                score_table: table,
                selected_endpoint: best_endpoint.map(|e| frame.transform_point(e)),
            }
        }
    }
}

/// Goal-fan trajectories are matched to vehicle-side trajectories by a
/// coarse spatial hash over vehicle-side points, bucketed by heading so
/// that only orientation-compatible candidates are visited.
struct PointHash {
    cell: f64,
    origin: f64,
    cols: i64,
    bins: Vec<Vec<HashEntry>>,
}

const HEADING_BUCKETS: i64 = 12;

#[derive(Debug, Clone, Copy)]
struct HashEntry {
    group: u16,
    trajectory: u16,
    point: u16,
    pos: Vec2,
    heading: f64,
}

fn heading_bucket(heading: f64) -> i64 {
    let frac = (heading + PI) / (2.0 * PI);
    ((frac * HEADING_BUCKETS as f64).floor() as i64).clamp(0, HEADING_BUCKETS - 1)
}

impl PointHash {
    fn new(reach: f64, cell: f64) -> PointHash {
        let cols = (2.0 * reach / cell).ceil() as i64 + 2;
        PointHash {
            cell,
            origin: -reach - cell,
            cols,
            bins: vec![Vec::new(); (cols * cols * HEADING_BUCKETS) as usize],
        }
    }

    fn insert(&mut self, e: HashEntry) {
        let col = ((e.pos.x - self.origin) / self.cell).floor() as i64;
        let row = ((e.pos.y - self.origin) / self.cell).floor() as i64;
        if col < 0 || row < 0 || col >= self.cols || row >= self.cols {
            return;
        }
        let bin = (row * self.cols + col) * HEADING_BUCKETS + heading_bucket(e.heading);
        self.bins[bin as usize].push(e);
    }

    fn visit_near(&self, p: Vec2, heading: f64, mut f: impl FnMut(&HashEntry)) {
        let col = ((p.x - self.origin) / self.cell).floor() as i64;
        let row = ((p.y - self.origin) / self.cell).floor() as i64;
        let hb = heading_bucket(heading);
        for r in (row - 1).max(0)..=(row + 1).min(self.cols - 1) {
            for c in (col - 1).max(0)..=(col + 1).min(self.cols - 1) {
                for db in -1..=1i64 {
                    let b = (hb + db).rem_euclid(HEADING_BUCKETS);
                    let bin = (r * self.cols + c) * HEADING_BUCKETS + b;
                    for e in &self.bins[bin as usize] {
                        f(e);
                    }
                }
            }
        }
    }
}

/// Only a deterministic subsample of the goal fan is matched; the
/// intersection thresholds are loose enough that this keeps every reachable
/// meeting region represented.
const GOAL_FAN_TRAJ_STRIDE: usize = 3;
const GOAL_FAN_POINT_STRIDE: usize = 3;

fn plan_bidirectional_impl(
    state: &VehicleState,
    goal_local: Vec2,
    library: &PrimitiveLibrary,
    masks: &[OcclusionMask],
    cfg: &PlannerConfig,
    prev_local: Option<Vec2>,
) -> PlanResult {
    let frame = state.pose();
    let lattice_id = masks[0].lattice;
    let lattice = library.lattice(lattice_id);
    let goal_lattice = library.lattice(lattice_index(0.0, library));
    let pos_tol = cfg.bidi_position_tolerance;
    let heading_tol = cfg.bidi_heading_tolerance;

    struct BestComposite {
        score: f64,
        direction: Direction,
        group: u16,
        meet_local: Vec2,
        second: Vec<VehicleState>,
    }
    let mut table = Vec::new();
    let mut best: Option<BestComposite> = None;

    for vdir in Direction::ALL {
        let mask = &masks[vdir.index()];
        let groups = lattice.groups(vdir);

        // Dense vehicle-side trajectory index and the spatial hash.
        let n_traj = mask.earliest_block.len();
        let mut by_id: Vec<Option<(&crate::primitives::ControlGroup, &Trajectory)>> =
            vec![None; n_traj];
        let reach = library.config.horizon + 2.0;
        let mut hash = PointHash::new(reach, pos_tol);
        let mut point_stride = 0usize;
        for group in groups {
            for traj in &group.trajectories {
                by_id[traj.id as usize] = Some((group, traj));
                point_stride = point_stride.max(traj.points.len());
                if mask.is_blocked(traj.id) {
                    continue;
                }
                for (pidx, pt) in traj.points.iter().enumerate() {
                    hash.insert(HashEntry {
                        group: group.id,
                        trajectory: traj.id,
                        point: pidx as u16,
                        pos: pt.pose.position(),
                        heading: pt.pose.heading,
                    });
                }
            }
        }

        // Lazily computed vehicle-side sub-path scores.
        let mut v_cache: Vec<f64> = vec![f64::NAN; n_traj * point_stride];

        // Best composite score per vehicle-side trajectory id, plus the data
        // needed to reconstruct the winning pair.
        let mut member_best: Vec<f64> = vec![f64::NEG_INFINITY; n_traj];
        let mut member_group: Vec<u16> = vec![0; n_traj];
        struct Meet {
            vehicle_point: u16,
            goal_group: u16,
            goal_traj: u16,
            goal_point: u16,
            heading_index: usize,
        }
        let mut member_meet: Vec<Option<Meet>> = (0..n_traj).map(|_| None).collect();

        // The goal fan uses primitives of the same direction label: their
        // time reversal is driven in the gear opposite the vehicle segment,
        // arriving at the goal.
        for h_idx in 0..cfg.bidi_headings {
            let h = 2.0 * PI * h_idx as f64 / cfg.bidi_headings as f64;
            let anchor = Pose2 {
                pos: goal_local,
                heading: h,
            };
            let veh_in_anchor = anchor.inverse_transform_point(Vec2::ZERO);
            for group in goal_lattice.groups(vdir) {
                for traj in group
                    .trajectories
                    .iter()
                    .step_by(GOAL_FAN_TRAJ_STRIDE.max(1))
                {
                    for (gpidx, gp) in traj
                        .points
                        .iter()
                        .enumerate()
                        .step_by(GOAL_FAN_POINT_STRIDE.max(1))
                    {
                        let gpos = anchor.transform_point(gp.pose.position());
                        if gpos.norm() > reach {
                            continue;
                        }
                        let gheading = wrap_angle(gp.pose.heading + h);
                        let mut g_total = f64::NAN;
                        hash.visit_near(gpos, gheading, |cand| {
                            if cand.pos.dist(gpos) > pos_tol {
                                return;
                            }
                            if wrap_angle(cand.heading - gheading).abs() > heading_tol {
                                return;
                            }
                            if g_total.is_nan() {
                                // Goal-side leg scored toward the vehicle
                                // origin, in the anchor frame.
                                g_total = score_at_index(
                                    &traj.points,
                                    gpidx,
                                    veh_in_anchor,
                                    state.articulation,
                                    None,
                                    0.0,
                                    &cfg.scoring,
                                )
                                .total;
                            }
                            let slot = cand.trajectory as usize;
                            let cache_idx = slot * point_stride + cand.point as usize;
                            if v_cache[cache_idx].is_nan() {
                                let (_, vtraj) = by_id[slot].expect("indexed trajectory");
                                v_cache[cache_idx] = score_at_index(
                                    &vtraj.points,
                                    cand.point as usize,
                                    goal_local,
                                    state.articulation,
                                    prev_local,
                                    0.0,
                                    &cfg.scoring,
                                )
                                .total;
                            }
                            let score = 0.5 * (v_cache[cache_idx] + g_total);
                            if score > member_best[slot] {
                                member_best[slot] = score;
                                member_group[slot] = cand.group;
                                member_meet[slot] = Some(Meet {
                                    vehicle_point: cand.point,
                                    goal_group: group.id,
                                    goal_traj: traj.id,
                                    goal_point: gpidx as u16,
                                    heading_index: h_idx,
                                });
                            }
                        });
                    }
                }
            }
        }

        // Aggregate member composites per vehicle group.
        for group in groups {
            let mut totals = Vec::new();
            let mut leader: Option<usize> = None;
            for traj in &group.trajectories {
                let slot = traj.id as usize;
                if member_best[slot] == f64::NEG_INFINITY || member_group[slot] != group.id {
                    continue;
                }
                totals.push(member_best[slot]);
                if leader.map_or(true, |l| member_best[slot] > member_best[l]) {
                    leader = Some(slot);
                }
            }
            let Some(score) = score_group(&totals) else {
                continue;
            };
            table.push(GroupScore {
                direction: vdir,
                lattice: lattice_id,
                group: group.id,
                scored_members: totals.len(),
                score,
            });
            if best.as_ref().map_or(true, |b| score > b.score) {
                let slot = leader.unwrap();
                let meet = member_meet[slot].as_ref().unwrap();
                let h = 2.0 * PI * meet.heading_index as f64 / cfg.bidi_headings as f64;
                let anchor = Pose2 {
                    pos: goal_local,
                    heading: h,
                };
                let gtraj = goal_lattice.groups(vdir)[meet.goal_group as usize]
                    .trajectories
                    .iter()
                    .find(|t| t.id == meet.goal_traj)
                    .unwrap();
                // Executed ordering: from the meeting point into the goal.
                let second: Vec<VehicleState> = (0..=meet.goal_point as usize)
                    .rev()
                    .map(|i| {
                        let p = &gtraj.points[i].pose;
                        let world_pos = anchor.transform_point(p.position());
                        VehicleState::new(
                            world_pos.x,
                            world_pos.y,
                            wrap_angle(p.heading + h),
                            p.articulation,
                        )
                    })
                    .collect();
                let vtraj = lattice
                    .trajectory(vdir, slot as u16)
                    .expect("leader trajectory");
                let meet_local = vtraj.points[meet.vehicle_point as usize].pose.position();
                best = Some(BestComposite {
                    score,
                    direction: vdir,
                    group: member_group[slot],
                    meet_local,
                    second,
                });
            }
        }
    }

    match best {
        None => {
            let mut r = PlanResult::terminal(PlanStatus::NoPathFound);
            r.score_table = table;
            r
        }
        Some(b) => {
            let group = &lattice.groups(b.direction)[b.group as usize];
            let path = group_prefix(group)
                .iter()
                .map(|p| transform_pose_to_world(&p.pose, state))
                .collect();
            let second = b
                .second
                .iter()
                .map(|p| transform_pose_to_world(p, state))
                .collect();
            PlanResult {
                status: PlanStatus::PathFound,
                direction: Some(b.direction),
                lattice: Some(lattice_id),
                group: Some(b.group),
                path,
                composite: true,
                second_segment: Some(second),
                score_table: table,
                selected_endpoint: Some(frame.transform_point(b.meet_local)),
            }
        }
    }
}
