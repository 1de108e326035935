//! Small planar geometry toolkit: vectors, SE(2) poses, angle wrapping and
//! the obstacle shapes used by the simulator (discs for trees, oriented
//! rectangles for walls).

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Wrap an angle to the half-open interval (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(a: f64) -> Self {
        Vec2 ::new(a.cos(), a.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// 2D cross product (z component).
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Rotate by `a` radians about the origin.
    pub fn rotated(self, a: f64) -> Vec2 {
        let (s, c) = a.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// A planar pose (position + heading).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub pos: Vec2,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose2 {
            pos: Vec2::new(x, y),
            heading,
        }
    }

    /// Map a point given in this pose's frame into the parent frame.
    pub fn transform_point(&self, local: Vec2) -> Vec2 {
        self.pos + local.rotated(self.heading)
    }

    /// Map a pose given in this pose's frame into the parent frame.
    pub fn transform_pose(&self, local: Pose2) -> Pose2 {
        Pose2 {
            pos: self.transform_point(local.pos),
            heading: wrap_angle(self.heading + local.heading),
        }
    }

    /// Map a point from the parent frame into this pose's frame.
    pub fn inverse_transform_point(&self, world: Vec2) -> Vec2 {
        (world - self.pos).rotated(-self.heading)
    }
}

/// Circular obstacle (tree trunk).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: Vec2,
    pub radius: f64,
}

/// Oriented rectangular obstacle (wall segment).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub center: Vec2,
    /// Full length along the wall's local x axis.
    pub length: f64,
    /// Full thickness along the wall's local y axis.
    pub thickness: f64,
    pub yaw: f64,
}

impl Wall {
    /// Distance from a point to the rectangle (0 inside).
    pub fn distance(&self, p: Vec2) -> f64 {
        let local = (p - self.center).rotated(-self.yaw);
        let dx = (local.x.abs() - 0.5 * self.length).max(0.0);
        let dy = (local.y.abs() - 0.5 * self.thickness).max(0.0);
        dx.hypot(dy)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let local = (p - self.center).rotated(-self.yaw);
        local.x.abs() <= 0.5 * self.length && local.y.abs() <= 0.5 * self.thickness
    }

    /// The four corners in world coordinates.
    pub fn corners(&self) -> [Vec2; 4] {
        let hx = 0.5 * self.length;
        let hy = 0.5 * self.thickness;
        [
            Vec2::new(hx, hy),
            Vec2::new(-hx, hy),
            Vec2::new(-hx, -hy),
            Vec2::new(hx, -hy),
        ]
        .map(|c| self.center + c.rotated(self.yaw))
    }
}

/// World-frame obstacle, as produced by the map generator and consumed by the
/// collision and sensing code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Obstacle {
    Tree(Disc),
    Wall(Wall),
}

impl Obstacle {
    /// Distance from a point to the obstacle boundary region (0 inside).
    pub fn distance(&self, p: Vec2) -> f64 {
        match self {
            Obstacle::Tree(d) => (p.dist(d.center) - d.radius).max(0.0),
            Obstacle::Wall(w) => w.distance(p),
        }
    }

    /// Exact circle-vs-shape intersection test (closed contact counts).
    pub fn intersects_circle(&self, center: Vec2, radius: f64) -> bool {
        match self {
            Obstacle::Tree(d) => center.dist(d.center) <= radius + d.radius,
            Obstacle::Wall(w) => w.distance(center) <= radius,
        }
    }
}
