//! Kinematic model of a center-articulated vehicle (CAV).
//!
//! The vehicle bends at a central hitch. The front-part center P1 is the
//! control point: the state is (x, y, heading, articulation) and the inputs
//! are the signed front-point speed and the articulation rate. With
//! `L = l2 + l1*cos(articulation)` the yaw rate of the front part is
//!
//! ```text
//! d(heading)/dt = -(v*sin(articulation) + l2*rate) / L
//! ```
//!
//! Sign convention: positive articulation yields a negative yaw rate at
//! positive speed (the equations are used exactly as derived; "left turn"
//! at forward speed therefore corresponds to negative articulation). The
//! rear-part heading is `heading - articulation`.

use crate::geom::{wrap_angle, Pose2, Vec2};
use serde::{Deserialize, Serialize};

/// Physical parameters of the vehicle. Defaults model the SAHA harvester.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// Front axle center to hitch [m].
    pub front_length: f64,
    /// Hitch to rear axle center [m].
    pub rear_length: f64,
    /// Mechanical articulation limit [rad].
    pub max_articulation: f64,
    /// Articulation rate limit [rad/s].
    pub max_articulation_rate: f64,
    /// Speed limit [m/s].
    pub max_speed: f64,
    /// Collision circle radius around the front part [m].
    pub front_radius: f64,
    /// Collision circle radius around the rear part [m].
    pub rear_radius: f64,
    /// Collision circle radius around the arm [m].
    pub arm_radius: f64,
    /// Arm circle center in the front-part frame [m].
    pub arm_offset: Vec2,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self::saha()
    }
}

impl VehicleParams {
    /// The default "saha" profile: l1 = l2 = 0.95 m, 33 deg articulation
    /// limit, 2.2 m chassis width covered by 1.15 m body circles.
    pub fn saha() -> Self {
        VehicleParams {
            front_length: 0.95,
            rear_length: 0.95,
            max_articulation: 33f64.to_radians(),
            max_articulation_rate: 0.35,
            max_speed: 1.0,
            front_radius: 1.15,
            rear_radius: 1.15,
            arm_radius: 0.5,
            arm_offset: Vec2::new(1.2, 0.0),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.front_length > 0.0) {
            return Err("vehicle.front_length must be > 0".into());
        }
        if !(self.rear_length > 0.0) {
            return Err("vehicle.rear_length must be > 0".into());
        }
        if !(self.max_articulation > 0.0 && self.max_articulation < std::f64::consts::FRAC_PI_2) {
            return Err("vehicle.max_articulation must lie in (0, pi/2)".into());
        }
        if !(self.max_articulation_rate > 0.0) {
            return Err("vehicle.max_articulation_rate must be > 0".into());
        }
        if !(self.max_speed > 0.0) {
            return Err("vehicle.max_speed must be > 0".into());
        }
        if !(self.front_radius > 0.0 && self.rear_radius > 0.0 && self.arm_radius > 0.0) {
            return Err("vehicle body radii must be > 0".into());
        }
        Ok(())
    }

    /// Effective length L = l2 + l1*cos(articulation).
    pub fn effective_length(&self, articulation: f64) -> f64 {
        self.rear_length + self.front_length * articulation.cos()
    }
}

/// Planar pose of the front-part center plus the articulation angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Front-part heading, wrapped to (-pi, pi].
    pub heading: f64,
    /// Hitch angle between front and rear part headings.
    pub articulation: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, heading: f64, articulation: f64) -> Self {
        VehicleState {
            x,
            y,
            heading: wrap_angle(heading),
            articulation,
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.x, self.y, self.heading)
    }

    /// Rear-part heading.
    pub fn rear_heading(&self) -> f64 {
        wrap_angle(self.heading - self.articulation)
    }
}

/// Signed speed (negative = reverse) and articulation rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub speed: f64,
    pub articulation_rate: f64,
}

impl ControlInput {
    pub fn new(speed: f64, articulation_rate: f64) -> Self {
        ControlInput {
            speed,
            articulation_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub dx: f64,
    pub dy: f64,
    pub dheading: f64,
    pub darticulation: f64,
}

/// Exact state derivative of the four-state model.
pub fn derivative(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
) -> StateDerivative {
    let l = params.effective_length(state.articulation);
    StateDerivative {
        dx: input.speed * state.heading.cos(),
        dy: input.speed * state.heading.sin(),
        dheading: -(input.speed * state.articulation.sin() + params.rear_length * input.articulation_rate)
            / l,
        darticulation: input.articulation_rate,
    }
}

/// One classical fixed-step 4th-order integration step. The articulation is
/// clamped to the mechanical limit after the step and the heading is
/// renormalized to (-pi, pi].
///
/// At the mechanical stop an outward articulation rate is ineffective: the
/// joint cannot move, so neither the articulation nor its yaw coupling term
/// responds to the command. The rate is therefore zeroed stage-wise whenever
/// the articulation sits at (or momentarily beyond) the limit.
pub fn integrate_step(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
    dt: f64,
) -> VehicleState {
    debug_assert!(dt > 0.0);
    let eval = |s: &VehicleState| {
        let mut rate = input.articulation_rate;
        if (s.articulation >= params.max_articulation && rate > 0.0)
            || (s.articulation <= -params.max_articulation && rate < 0.0)
        {
            rate = 0.0;
        }
        derivative(s, &ControlInput::new(input.speed, rate), params)
    };
    let advance = |s: &VehicleState, d: &StateDerivative, h: f64| VehicleState {
        x: s.x + d.dx * h,
        y: s.y + d.dy * h,
        heading: s.heading + d.dheading * h,
        articulation: s.articulation + d.darticulation * h,
    };

    let k1 = eval(state);
    let k2 = eval(&advance(state, &k1, 0.5 * dt));
    let k3 = eval(&advance(state, &k2, 0.5 * dt));
    let k4 = eval(&advance(state, &k3, dt));

    let sixth = dt / 6.0;
    let articulation = (state.articulation
        + sixth * (k1.darticulation + 2.0 * k2.darticulation + 2.0 * k3.darticulation + k4.darticulation))
        .clamp(-params.max_articulation, params.max_articulation);
    VehicleState {
        x: state.x + sixth * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx),
        y: state.y + sixth * (k1.dy + 2.0 * k2.dy + 2.0 * k3.dy + k4.dy),
        heading: wrap_angle(
            state.heading + sixth * (k1.dheading + 2.0 * k2.dheading + 2.0 * k3.dheading + k4.dheading),
        ),
        articulation,
    }
}

/// Radius of the steady turn (zero articulation rate) at a fixed
/// articulation angle: `R = (l2 + l1*cos g) / |sin g|`. Returns infinity for
/// a zero angle (straight line).
pub fn steady_turn_radius(articulation: f64, params: &VehicleParams) -> f64 {
    let s = articulation.sin().abs();
    if s == 0.0 {
        return f64::INFINITY;
    }
    params.effective_length(articulation) / s
}

/// Curvature bound: the reciprocal of the minimum turning radius, reached at
/// the articulation limit.
pub fn max_curvature(params: &VehicleParams) -> f64 {
    params.max_articulation.sin() / params.effective_length(params.max_articulation)
}
