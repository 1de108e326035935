//! Two-step collision handling.
//!
//! Offline, every trajectory point's three footprint circles are mapped to
//! the egocentric grid cells they overlap (the correspondence map). Online,
//! sensed obstacles are rasterized into the same grid and each occupied cell
//! marks its correspondent trajectories as occluded, so the online cost
//! scales with the obstacle count rather than the library size.
//!
//! Both grid sides are conservative: a cell is tagged when a footprint
//! circle overlaps any part of it, and a cell is occupied when an obstacle
//! overlaps any part of it. A trajectory that stays unblocked therefore
//! never collides, while a blocked one may in fact be free by up to roughly
//! one cell diagonal.

use crate::geom::{Obstacle, Vec2};
use crate::kinematics::{VehicleParams, VehicleState};
use crate::primitives::{Direction, PrimitiveLibrary};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Square egocentric collision window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub cell_size: f64,
    /// Half-width of the window [m].
    pub extent: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        // The window must hold a full reversing primitive plus the rear body
        // trailing l1 + l2 + rear_radius behind the control point.
        GridConfig {
            cell_size: 0.2,
            extent: 13.5,
        }
    }
}

impl GridConfig {
    pub fn cells_per_side(&self) -> usize {
        (2.0 * self.extent / self.cell_size).round() as usize
    }

    pub fn cell_count(&self) -> usize {
        let n = self.cells_per_side();
        n * n
    }

    pub fn cell_index(&self, p: Vec2) -> Option<u32> {
        let n = self.cells_per_side() as i64;
        let col = ((p.x + self.extent) / self.cell_size).floor() as i64;
        let row = ((p.y + self.extent) / self.cell_size).floor() as i64;
        if col < 0 || row < 0 || col >= n || row >= n {
            None
        } else {
            Some((row * n + col) as u32)
        }
    }

    /// Lower corner of a cell.
    pub fn cell_min(&self, index: u32) -> Vec2 {
        let n = self.cells_per_side() as u32;
        let col = index % n;
        let row = index / n;
        Vec2::new(
            -self.extent + col as f64 * self.cell_size,
            -self.extent + row as f64 * self.cell_size,
        )
    }

    pub fn cell_center(&self, index: u32) -> Vec2 {
        let min = self.cell_min(index);
        Vec2::new(min.x + 0.5 * self.cell_size, min.y + 0.5 * self.cell_size)
    }

    /// Largest distance any footprint circle can reach from the vehicle
    /// origin along a trajectory of the given horizon.
    pub fn required_extent(params: &VehicleParams, horizon: f64) -> f64 {
        let body_reach = (params.front_length + params.rear_length + params.rear_radius)
            .max(params.front_radius)
            .max(params.arm_offset.norm() + params.arm_radius);
        horizon + body_reach
    }

    pub fn validate(&self, params: &VehicleParams, horizon: f64) -> Result<(), String> {
        if !(self.cell_size > 0.0) {
            return Err("grid.cell_size must be > 0".into());
        }
        let required = Self::required_extent(params, horizon);
        if self.extent < required {
            return Err(format!(
                "grid.extent {} m is smaller than the swept footprint reach {:.2} m",
                self.extent, required
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootprintCircle {
    pub center: Vec2,
    pub radius: f64,
}

/// The three collision circles: front part at P1, rear part behind the
/// hitch, and the arm offset in the front frame.
pub fn footprint_circles(state: &VehicleState, params: &VehicleParams) -> [FootprintCircle; 3] {
    let front = state.position();
    let heading_dir = Vec2::from_angle(state.heading);
    let hitch = front - heading_dir * params.front_length;
    let rear = hitch - Vec2::from_angle(state.rear_heading()) * params.rear_length;
    let arm = state.pose().transform_point(params.arm_offset);
    [
        FootprintCircle {
            center: front,
            radius: params.front_radius,
        },
        FootprintCircle {
            center: rear,
            radius: params.rear_radius,
        },
        FootprintCircle {
            center: arm,
            radius: params.arm_radius,
        },
    ]
}

/// True when any footprint circle of the (world-frame) state intersects any
/// obstacle. This is the exact geometric route, used as ground truth by the
/// simulator and as the oracle for the grid pipeline.
pub fn footprint_collides(
    state: &VehicleState,
    obstacles: &[Obstacle],
    params: &VehicleParams,
) -> bool {
    let circles = footprint_circles(state, params);
    obstacles.iter().any(|o| {
        circles
            .iter()
            .any(|c| o.intersects_circle(c.center, c.radius))
    })
}

/// Correspondence entry: a trajectory whose swept footprint covers a cell,
/// with the earliest point index doing so.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorrEntry {
    pub trajectory: u16,
    pub point: u16,
}

/// Cell-indexed trajectory lists for one (lattice, direction), stored as
/// prefix offsets plus a flat entry array sorted by (cell, trajectory).
#[derive(Debug, Clone, PartialEq)]
pub struct DirCorrespondence {
    pub trajectory_count: u32,
    pub cell_start: Vec<u32>,
    pub entries: Vec<CorrEntry>,
}

impl DirCorrespondence {
    pub fn cell_entries(&self, cell: u32) -> &[CorrEntry] {
        let c = cell as usize;
        &self.entries[self.cell_start[c] as usize..self.cell_start[c + 1] as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceMap {
    pub grid: GridConfig,
    /// Indexed by lattice id, then `Direction::index()`.
    pub lattices: Vec<[DirCorrespondence; 2]>,
}

impl CorrespondenceMap {
    pub fn get(&self, lattice: u16, direction: Direction) -> &DirCorrespondence {
        &self.lattices[lattice as usize][direction.index()]
    }
}

#[derive(Debug, Error)]
pub enum CollisionError {
    #[error("collision window too small: lattice {lattice} {direction} trajectory {trajectory} sweeps outside the grid")]
    WindowTooSmall {
        lattice: u16,
        direction: Direction,
        trajectory: u16,
    },
}

/// Distance squared from a point to an axis-aligned cell rectangle.
fn dist_sq_to_cell(p: Vec2, cell_min: Vec2, cell_size: f64) -> f64 {
    let dx = (cell_min.x - p.x).max(p.x - (cell_min.x + cell_size)).max(0.0);
    let dy = (cell_min.y - p.y).max(p.y - (cell_min.y + cell_size)).max(0.0);
    dx * dx + dy * dy
}

fn build_dir_correspondence(
    library: &PrimitiveLibrary,
    lattice: u16,
    direction: Direction,
    grid: &GridConfig,
    params: &VehicleParams,
) -> Result<DirCorrespondence, CollisionError> {
    let n = grid.cells_per_side() as i64;
    let n_cells = grid.cell_count();
    let mut earliest: Vec<u16> = vec![u16::MAX; n_cells];
    let mut touched: Vec<u32> = Vec::new();
    let mut tuples: Vec<(u32, u16, u16)> = Vec::new();
    let groups = library.lattice(lattice).groups(direction);
    let mut trajectory_count = 0u32;

    for group in groups {
        for traj in &group.trajectories {
            trajectory_count += 1;
            touched.clear();
            for (pidx, point) in traj.points.iter().enumerate() {
                for circle in footprint_circles(&point.pose, params) {
                    let lo_col = ((circle.center.x - circle.radius + grid.extent) / grid.cell_size)
                        .floor() as i64;
                    let hi_col = ((circle.center.x + circle.radius + grid.extent) / grid.cell_size)
                        .floor() as i64;
                    let lo_row = ((circle.center.y - circle.radius + grid.extent) / grid.cell_size)
                        .floor() as i64;
                    let hi_row = ((circle.center.y + circle.radius + grid.extent) / grid.cell_size)
                        .floor() as i64;
                    if lo_col < 0 || lo_row < 0 || hi_col >= n || hi_row >= n {
                        return Err(CollisionError::WindowTooSmall {
                            lattice,
                            direction,
                            trajectory: traj.id,
                        });
                    }
                    let r_sq = circle.radius * circle.radius;
                    for row in lo_row..=hi_row {
                        for col in lo_col..=hi_col {
                            let idx = (row * n + col) as u32;
                            if earliest[idx as usize] != u16::MAX {
                                continue;
                            }
                            let min = grid.cell_min(idx);
                            if dist_sq_to_cell(circle.center, min, grid.cell_size) <= r_sq {
                                earliest[idx as usize] = pidx as u16;
                                touched.push(idx);
                            }
                        }
                    }
                }
            }
            for &cell in &touched {
                tuples.push((cell, traj.id, earliest[cell as usize]));
                earliest[cell as usize] = u16::MAX;
            }
        }
    }

    // (cell, trajectory) pairs are unique, so this order is total.
    tuples.sort_unstable_by_key(|&(cell, traj, _)| (cell, traj));
    let mut cell_start = vec![0u32; n_cells + 1];
    for &(cell, _, _) in &tuples {
        cell_start[cell as usize + 1] += 1;
    }
    for i in 0..n_cells {
        cell_start[i + 1] += cell_start[i];
    }
    let entries = tuples
        .into_iter()
        .map(|(_, trajectory, point)| CorrEntry { trajectory, point })
        .collect();
    Ok(DirCorrespondence {
        trajectory_count,
        cell_start,
        entries,
    })
}

/// Tag, for every trajectory point of every lattice, the grid cells its
/// footprint circles overlap. Parallel across lattices, deterministic.
pub fn precompute_correspondence(
    library: &PrimitiveLibrary,
    grid: &GridConfig,
    params: &VehicleParams,
) -> Result<CorrespondenceMap, CollisionError> {
    let lattices: Result<Vec<[DirCorrespondence; 2]>, CollisionError> = (0..library.lattices.len())
        .into_par_iter()
        .map(|i| {
            let fwd = build_dir_correspondence(library, i as u16, Direction::Forward, grid, params)?;
            let bwd = build_dir_correspondence(library, i as u16, Direction::Backward, grid, params)?;
            Ok([fwd, bwd])
        })
        .collect();
    Ok(CorrespondenceMap {
        grid: *grid,
        lattices: lattices?,
    })
}

/// Occupied cells of the egocentric window, sorted and deduplicated.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupancy {
    pub occupied: Vec<u32>,
}

/// Closed overlap test between an axis-aligned cell and an oriented
/// rectangle, by separating axes.
fn cell_overlaps_rect(cell_min: Vec2, cell_size: f64, center: Vec2, half: Vec2, yaw: f64) -> bool {
    let cell_center = Vec2::new(cell_min.x + 0.5 * cell_size, cell_min.y + 0.5 * cell_size);
    let d = center - cell_center;
    let (s, c) = yaw.sin_cos();
    let ux = Vec2::new(c, s);
    let uy = Vec2::new(-s, c);
    let hc = 0.5 * cell_size;
    // Cell axes.
    if d.x.abs() > hc + half.x * ux.x.abs() + half.y * uy.x.abs() {
        return false;
    }
    if d.y.abs() > hc + half.x * ux.y.abs() + half.y * uy.y.abs() {
        return false;
    }
    // Rectangle axes.
    if d.dot(ux).abs() > half.x + hc * (ux.x.abs() + ux.y.abs()) {
        return false;
    }
    if d.dot(uy).abs() > half.y + hc * (uy.x.abs() + uy.y.abs()) {
        return false;
    }
    true
}

/// Rasterize world-frame obstacles into the egocentric grid: a cell is
/// occupied when an obstacle overlaps any part of it.
pub fn rasterize_obstacles(
    obstacles: &[Obstacle],
    state: &VehicleState,
    grid: &GridConfig,
) -> Occupancy {
    let pose = state.pose();
    let n = grid.cells_per_side() as i64;
    let mut occupied: Vec<u32> = Vec::new();
    let mut visit_bbox = |lo: Vec2, hi: Vec2, mut test: Box<dyn FnMut(Vec2) -> bool + '_>| {
        let lo_col = (((lo.x + grid.extent) / grid.cell_size).floor() as i64).max(0);
        let hi_col = (((hi.x + grid.extent) / grid.cell_size).floor() as i64).min(n - 1);
        let lo_row = (((lo.y + grid.extent) / grid.cell_size).floor() as i64).max(0);
        let hi_row = (((hi.y + grid.extent) / grid.cell_size).floor() as i64).min(n - 1);
        for row in lo_row..=hi_row {
            for col in lo_col..=hi_col {
                let idx = (row * n + col) as u32;
                let min = grid.cell_min(idx);
                if test(min) {
                    occupied.push(idx);
                }
            }
        }
    };
    for obstacle in obstacles {
        match obstacle {
            Obstacle::Tree(disc) => {
                let c = pose.inverse_transform_point(disc.center);
                let r = disc.radius;
                let r_sq = r * r;
                visit_bbox(
                    Vec2::new(c.x - r, c.y - r),
                    Vec2::new(c.x + r, c.y + r),
                    Box::new(move |min| dist_sq_to_cell(c, min, grid.cell_size) <= r_sq),
                );
            }
            Obstacle::Wall(wall) => {
                let c = pose.inverse_transform_point(wall.center);
                let yaw = wall.yaw - state.heading;
                let half = Vec2::new(0.5 * wall.length, 0.5 * wall.thickness);
                let reach = half.x.hypot(half.y);
                visit_bbox(
                    Vec2::new(c.x - reach, c.y - reach),
                    Vec2::new(c.x + reach, c.y + reach),
                    Box::new(move |min| cell_overlaps_rect(min, grid.cell_size, c, half, yaw)),
                );
            }
        }
    }
    occupied.sort_unstable();
    occupied.dedup();
    Occupancy { occupied }
}

/// Which trajectories of one (lattice, direction) are occluded, and from
/// which point index on.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMask {
    pub lattice: u16,
    pub direction: Direction,
    /// Earliest blocked point index per trajectory id; `u16::MAX` = clear.
    pub earliest_block: Vec<u16>,
}

impl OcclusionMask {
    pub fn is_blocked(&self, trajectory: u16) -> bool {
        self.earliest_block[trajectory as usize] != u16::MAX
    }

    pub fn blocked_count(&self) -> usize {
        self.earliest_block.iter().filter(|&&e| e != u16::MAX).count()
    }
}

/// Fold occupied cells through the correspondence lists. Cost is
/// proportional to the occupied-cell count.
pub fn mark_occluded(
    correspondence: &CorrespondenceMap,
    occupancy: &Occupancy,
    lattice: u16,
    direction: Direction,
) -> OcclusionMask {
    let dir_corr = correspondence.get(lattice, direction);
    let mut earliest_block = vec![u16::MAX; dir_corr.trajectory_count as usize];
    for &cell in &occupancy.occupied {
        for entry in dir_corr.cell_entries(cell) {
            let slot = &mut earliest_block[entry.trajectory as usize];
            if entry.point < *slot {
                *slot = entry.point;
            }
        }
    }
    OcclusionMask {
        lattice,
        direction,
        earliest_block,
    }
}
