//! Pose-stabilizing path tracking.
//!
//! The controller samples a lookahead pose from the planned prefix and
//! drives the egocentric polar errors (r, phi, delta) to zero: a virtual
//! reference heading `delta_ref = atan(-k_phi * phi)` stabilizes the slow
//! position subsystem, a curvature command chases that reference, and the
//! curvature is mapped through the articulated kinematics into a steering
//! rate. Speed is a function of commanded curvature, rising from the
//! operating point toward the limit as the turn tightens.
//!
//! Reverse segments are tracked by mirroring the error through the
//! rear-facing frame (headings rotated by pi, speed negated); the gains
//! keep their meaning.
//!
//! A modified pure-pursuit controller using the same lookahead and the same
//! steering-rate mapping is included as the comparison baseline.

use crate::geom::{wrap_angle, Pose2};
use crate::kinematics::{max_curvature, ControlInput, VehicleParams, VehicleState};
use crate::primitives::Direction;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// How commanded speed responds to commanded curvature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedProfile {
    /// Speed grows from the operating point toward v_max as |curvature|
    /// approaches the bound.
    FastInTurns,
    /// Conventional alternative (not used by default): speed drops with
    /// curvature, bounded below by v_max * (1 - beta).
    SlowInTurns,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerGains {
    pub k_phi: f64,
    pub k_delta: f64,
    pub beta: f64,
    pub lambda: f64,
    /// Lookahead arc length along the tracked path [m].
    pub lookahead: f64,
    pub speed_profile: SpeedProfile,
}

impl Default for ControllerGains {
    fn default() -> Self {
        ControllerGains {
            k_phi: 0.5,
            k_delta: 1.0,
            beta: 0.5,
            lambda: 1.0,
            lookahead: 1.5,
            speed_profile: SpeedProfile::FastInTurns,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self, params: &VehicleParams) -> Result<(), String> {
        if !(self.k_phi > 0.0 && self.k_delta > 0.0) {
            return Err("gains.k_phi and gains.k_delta must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err("gains.beta must lie in [0, 1)".into());
        }
        if !(self.lambda > 0.0) {
            return Err("gains.lambda must be > 0".into());
        }
        if !(self.lookahead > 0.0) {
            return Err("gains.lookahead must be > 0".into());
        }
        let k_max = max_curvature(params);
        if self.beta * k_max.powf(self.lambda) >= 1.0 {
            return Err(format!(
                "gains.beta * max_curvature^lambda = {:.3} must stay below 1",
                self.beta * k_max.powf(self.lambda)
            ));
        }
        Ok(())
    }
}

/// Egocentric polar error toward a target pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarError {
    /// Distance to the target [m].
    pub r: f64,
    /// Orientation of the line of sight seen from the target frame.
    pub phi: f64,
    /// Vehicle heading relative to the line of sight.
    pub delta: f64,
}

/// Polar error of the front point toward a target pose. Returns `None`
/// within 1e-6 m of the target, where the angles are undefined.
pub fn polar_error(state: &VehicleState, target: &Pose2) -> Option<PolarError> {
    let to_target = target.pos - state.position();
    let r = to_target.norm();
    if r < 1e-6 {
        return None;
    }
    let line_of_sight = to_target.angle();
    Some(PolarError {
        r,
        phi: wrap_angle(target.heading - line_of_sight),
        delta: wrap_angle(state.heading - line_of_sight),
    })
}

/// Reference heading of the slow subsystem.
pub fn reference_heading(phi: f64, gains: &ControllerGains) -> f64 {
    (-gains.k_phi * phi).atan()
}

/// Curvature command of the closed-loop steering law.
pub fn curvature_command(err: &PolarError, gains: &ControllerGains) -> f64 {
    debug_assert!(err.r > 0.0);
    let k_phi = gains.k_phi;
    let delta_ref = (-k_phi * err.phi).atan();
    -(1.0 / err.r)
        * (gains.k_delta * (err.delta - delta_ref)
            + (1.0 + k_phi / (1.0 + (k_phi * err.phi).powi(2))) * err.delta.sin())
}

/// Map a desired path curvature into an articulation rate:
/// `rate = -[(L/l2)*kappa + sin(g)/l2] * v`, without any limits applied.
pub fn steering_rate_unclamped(
    kappa: f64,
    articulation: f64,
    speed: f64,
    params: &VehicleParams,
) -> f64 {
    let l = params.effective_length(articulation);
    -((l / params.rear_length) * kappa + articulation.sin() / params.rear_length) * speed
}

/// Steering rate with the rate limit applied and the command zeroed in the
/// saturating direction at the articulation stop.
pub fn steering_rate(kappa: f64, articulation: f64, speed: f64, params: &VehicleParams) -> f64 {
    let mut rate = steering_rate_unclamped(kappa, articulation, speed, params)
        .clamp(-params.max_articulation_rate, params.max_articulation_rate);
    if (articulation >= params.max_articulation && rate > 0.0)
        || (articulation <= -params.max_articulation && rate < 0.0)
    {
        rate = 0.0;
    }
    rate
}

/// Speed magnitude for a commanded curvature. Curvatures beyond the bound
/// are clamped before evaluation.
pub fn speed_command(kappa: f64, gains: &ControllerGains, params: &VehicleParams) -> f64 {
    let k_max = max_curvature(params);
    let k = kappa.abs().min(k_max);
    match gains.speed_profile {
        SpeedProfile::FastInTurns => {
            let v_op = params.max_speed * (1.0 - gains.beta * k_max.powf(gains.lambda));
            v_op / (1.0 - gains.beta * k.powf(gains.lambda))
        }
        SpeedProfile::SlowInTurns => {
            params.max_speed * (1.0 - gains.beta * (k / k_max).powf(gains.lambda))
        }
    }
}

/// First path pose at least `lookahead` meters of arc beyond the projection
/// of the vehicle position onto the path; the final pose when the path is
/// shorter. Returns the pose and whether the path end was hit.
pub fn lookahead_point(path: &[VehicleState], state: &VehicleState, lookahead: f64) -> (Pose2, bool) {
    assert!(!path.is_empty(), "lookahead on an empty path");
    if path.len() == 1 {
        let p = &path[0];
        return (Pose2::new(p.x, p.y, p.heading), true);
    }
    // Cumulative arc lengths of the polyline.
    let mut cum = Vec::with_capacity(path.len());
    let mut arc = 0.0;
    cum.push(0.0);
    for w in path.windows(2) {
        arc += w[1].position().dist(w[0].position());
        cum.push(arc);
    }
    // Closest-point projection onto the segments.
    let p = state.position();
    let mut best_d = f64::INFINITY;
    let mut proj_arc = 0.0;
    for i in 0..path.len() - 1 {
        let a = path[i].position();
        let b = path[i + 1].position();
        let ab = b - a;
        let len_sq = ab.norm_sq();
        let t = if len_sq > 0.0 {
            ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = a + ab * t;
        let d = p.dist(q);
        if d < best_d {
            best_d = d;
            proj_arc = cum[i] + ab.norm() * t;
        }
    }
    let target_arc = proj_arc + lookahead;
    for (i, &c) in cum.iter().enumerate() {
        if c >= target_arc {
            let pt = &path[i];
            return (Pose2::new(pt.x, pt.y, pt.heading), false);
        }
    }
    let last = path.last().unwrap();
    (Pose2::new(last.x, last.y, last.heading), true)
}

/// Per-tick controller telemetry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlTelemetry {
    pub target: Pose2,
    pub error: Option<PolarError>,
    pub curvature: f64,
    pub rate_saturated: bool,
    pub at_articulation_limit: bool,
}

fn command_from_error(
    err: &PolarError,
    state: &VehicleState,
    direction: Direction,
    gains: &ControllerGains,
    params: &VehicleParams,
) -> (ControlInput, f64, bool) {
    let kappa = curvature_command(err, gains);
    let v_mag = speed_command(kappa, gains, params);
    let (speed, rate_raw) = match direction {
        Direction::Forward => (
            v_mag,
            steering_rate_unclamped(kappa, state.articulation, v_mag, params),
        ),
        // Mirrored frame: the same curvature law acts on the rear-facing
        // error; the steering mapping takes the negated curvature at the
        // negated (signed) speed.
        Direction::Backward => (
            -v_mag,
            steering_rate_unclamped(-kappa, state.articulation, -v_mag, params),
        ),
    };
    let saturated = rate_raw.abs() > params.max_articulation_rate;
    let mut rate = rate_raw.clamp(-params.max_articulation_rate, params.max_articulation_rate);
    if (state.articulation >= params.max_articulation && rate > 0.0)
        || (state.articulation <= -params.max_articulation && rate < 0.0)
    {
        rate = 0.0;
    }
    (ControlInput::new(speed, rate), kappa, saturated)
}

/// One pose-stabilizing control step along a planned path.
pub fn control_step(
    state: &VehicleState,
    path: &[VehicleState],
    gains: &ControllerGains,
    params: &VehicleParams,
    direction: Direction,
) -> (ControlInput, ControlTelemetry) {
    let (target, _) = lookahead_point(path, state, gains.lookahead);
    let (observer, observed_target) = match direction {
        Direction::Forward => (*state, target),
        Direction::Backward => (
            VehicleState::new(state.x, state.y, wrap_angle(state.heading + PI), state.articulation),
            Pose2 {
                pos: target.pos,
                heading: wrap_angle(target.heading + PI),
            },
        ),
    };
    let at_limit = state.articulation.abs() >= params.max_articulation;
    match polar_error(&observer, &observed_target) {
        None => (
            ControlInput::new(0.0, 0.0),
            ControlTelemetry {
                target,
                error: None,
                curvature: 0.0,
                rate_saturated: false,
                at_articulation_limit: at_limit,
            },
        ),
        Some(err) => {
            let (input, curvature, rate_saturated) =
                command_from_error(&err, state, direction, gains, params);
            (
                input,
                ControlTelemetry {
                    target,
                    error: Some(err),
                    curvature,
                    rate_saturated,
                    at_articulation_limit: at_limit,
                },
            )
        }
    }
}

/// Pure-pursuit reference controller: curvature `2*sin(bearing)/lookahead`
/// toward the same lookahead point, mapped through the same steering-rate
/// and speed laws.
pub fn pure_pursuit_step(
    state: &VehicleState,
    path: &[VehicleState],
    gains: &ControllerGains,
    params: &VehicleParams,
    direction: Direction,
) -> (ControlInput, ControlTelemetry) {
    let (target, _) = lookahead_point(path, state, gains.lookahead);
    let to_target = target.pos - state.position();
    let at_limit = state.articulation.abs() >= params.max_articulation;
    if to_target.norm() < 1e-6 {
        return (
            ControlInput::new(0.0, 0.0),
            ControlTelemetry {
                target,
                error: None,
                curvature: 0.0,
                rate_saturated: false,
                at_articulation_limit: at_limit,
            },
        );
    }
    let heading = match direction {
        Direction::Forward => state.heading,
        Direction::Backward => wrap_angle(state.heading + PI),
    };
    let bearing = wrap_angle(to_target.angle() - heading);
    let k_max = max_curvature(params);
    let kappa = (2.0 * bearing.sin() / gains.lookahead).clamp(-k_max, k_max);
    let v_mag = speed_command(kappa, gains, params);
    let (speed, rate_raw) = match direction {
        Direction::Forward => (
            v_mag,
            steering_rate_unclamped(kappa, state.articulation, v_mag, params),
        ),
        Direction::Backward => (
            -v_mag,
            steering_rate_unclamped(-kappa, state.articulation, -v_mag, params),
        ),
    };
    let rate_saturated = rate_raw.abs() > params.max_articulation_rate;
    let mut rate = rate_raw.clamp(-params.max_articulation_rate, params.max_articulation_rate);
    if (state.articulation >= params.max_articulation && rate > 0.0)
        || (state.articulation <= -params.max_articulation && rate < 0.0)
    {
        rate = 0.0;
    }
    (
        ControlInput::new(speed, rate),
        ControlTelemetry {
            target,
            error: None,
            curvature: kappa,
            rate_saturated,
            at_articulation_limit: at_limit,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::kinematics::{derivative, integrate_step, steady_turn_radius};
    use approx::assert_relative_eq;

    fn params() -> VehicleParams {
        VehicleParams::saha()
    }

    fn gains() -> ControllerGains {
        ControllerGains::default()
    }

    #[test]
    fn polar_error_cases() {
        let ahead = polar_error(
            &VehicleState::new(0.0, 0.0, 0.0, 0.0),
            &Pose2::new(5.0, 0.0, 0.0),
        )
        .unwrap();
        assert_relative_eq!(ahead.r, 5.0);
        assert_relative_eq!(ahead.phi, 0.0);
        assert_relative_eq!(ahead.delta, 0.0);

        let behind = polar_error(
            &VehicleState::new(0.0, 0.0, 0.0, 0.0),
            &Pose2::new(-5.0, 0.0, 0.0),
        )
        .unwrap();
        assert_relative_eq!(behind.delta, PI);

        assert!(polar_error(
            &VehicleState::new(1.0, 1.0, 0.3, 0.0),
            &Pose2::new(1.0, 1.0, 0.7)
        )
        .is_none());
    }

    #[test]
    fn polar_error_is_rotation_invariant() {
        let state = VehicleState::new(1.0, -2.0, 0.4, 0.1);
        let target = Pose2::new(4.0, 1.0, 1.2);
        let base = polar_error(&state, &target).unwrap();
        for rot in [0.7, -1.3, 2.9] {
            let frame = Pose2::new(0.0, 0.0, rot);
            let sp = frame.transform_point(state.position());
            let tp = frame.transform_point(target.pos);
            let rotated = polar_error(
                &VehicleState::new(sp.x, sp.y, wrap_angle(state.heading + rot), state.articulation),
                &Pose2::new(tp.x, tp.y, wrap_angle(target.heading + rot)),
            )
            .unwrap();
            assert_relative_eq!(rotated.r, base.r, epsilon = 1e-12);
            assert_relative_eq!(rotated.phi, base.phi, epsilon = 1e-12);
            assert_relative_eq!(rotated.delta, base.delta, epsilon = 1e-12);
        }
    }

    #[test]
    fn reference_heading_shape() {
        let g = gains();
        assert_eq!(reference_heading(0.0, &g), 0.0);
        assert_relative_eq!(reference_heading(1.0, &g), (-0.5f64).atan(), epsilon = 1e-15);
        assert!(reference_heading(1e9, &g) > -PI / 2.0);
        assert_relative_eq!(reference_heading(1e12, &g), -PI / 2.0, epsilon = 1e-6);
        for phi in [-2.0, -0.3, 0.7, 2.5] {
            assert_relative_eq!(
                reference_heading(phi, &g),
                -reference_heading(-phi, &g),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn curvature_command_is_zero_at_equilibrium_and_odd() {
        let g = gains();
        let eq = PolarError {
            r: 3.0,
            phi: 0.0,
            delta: 0.0,
        };
        assert_eq!(curvature_command(&eq, &g), 0.0);

        for (phi, delta) in [(0.4, 0.2), (-1.0, 0.6), (2.0, -1.2)] {
            let e = PolarError {
                r: 2.5,
                phi,
                delta,
            };
            let m = PolarError {
                r: 2.5,
                phi: -phi,
                delta: -delta,
            };
            assert_relative_eq!(
                curvature_command(&e, &g),
                -curvature_command(&m, &g),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn curvature_on_reference_manifold_reduces_to_sine_term() {
        let g = gains();
        // With delta exactly on the reference, the k_delta term vanishes.
        for phi in [0.1, 0.5, -0.8] {
            let delta = reference_heading(phi, &g);
            let e = PolarError {
                r: 4.0,
                phi,
                delta,
            };
            let expected = -(1.0 / e.r)
                * (1.0 + g.k_phi / (1.0 + (g.k_phi * phi).powi(2)))
                * delta.sin();
            assert_relative_eq!(curvature_command(&e, &g), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn steering_rate_zeros() {
        let p = params();
        assert_eq!(steering_rate(0.0, 0.0, 1.0, &p), 0.0);
        // Steady turn: the curvature that holds the current articulation.
        for g in [-0.5f64, -0.2, 0.3, 0.55] {
            let steady_kappa = -g.sin() / p.effective_length(g);
            assert_relative_eq!(steering_rate(steady_kappa, g, 1.0, &p), 0.0, epsilon = 1e-12);
        }
        // At the stop, outward commands are zeroed.
        let k = -1.0; // strong negative curvature demands positive rate
        assert!(steering_rate_unclamped(k, p.max_articulation, 1.0, &p) > 0.0);
        assert_eq!(steering_rate(k, p.max_articulation, 1.0, &p), 0.0);
    }

    #[test]
    fn yaw_rate_identity_over_grid() {
        // Unclamped: the commanded curvature is realized exactly,
        // omega(articulation, rate(kappa)) = kappa * v.
        let p = params();
        for gi in -6..=6 {
            let g = gi as f64 * 0.09;
            for ki in -8..=8 {
                let kappa = ki as f64 * 0.05;
                for &v in &[0.3, 1.0, -0.7] {
                    let rate = steering_rate_unclamped(kappa, g, v, &p);
                    let d = derivative(
                        &VehicleState::new(0.0, 0.0, 0.0, g),
                        &ControlInput::new(v, rate),
                        &p,
                    );
                    assert_relative_eq!(d.dheading, kappa * v, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn speed_command_endpoints_and_symmetry() {
        let p = params();
        let g = gains();
        let k_max = max_curvature(&p);
        let v_op = p.max_speed * (1.0 - g.beta * k_max);
        assert_relative_eq!(speed_command(0.0, &g, &p), v_op, epsilon = 1e-12);
        assert_relative_eq!(speed_command(k_max, &g, &p), p.max_speed, epsilon = 1e-12);
        // Over-limit curvature is clamped first.
        assert_relative_eq!(speed_command(10.0, &g, &p), p.max_speed, epsilon = 1e-12);
        for k in [0.05, 0.1, 0.25] {
            assert_eq!(speed_command(k, &g, &p), speed_command(-k, &g, &p));
        }
        // The whole range stays within [v_op, v_max].
        for i in 0..=20 {
            let v = speed_command(k_max * i as f64 / 20.0, &g, &p);
            assert!(v >= v_op - 1e-12 && v <= p.max_speed + 1e-12);
        }
    }

    #[test]
    fn alternate_speed_profile_slows_in_turns() {
        let p = params();
        let g = ControllerGains {
            speed_profile: SpeedProfile::SlowInTurns,
            ..gains()
        };
        let k_max = max_curvature(&p);
        assert_relative_eq!(speed_command(0.0, &g, &p), p.max_speed, epsilon = 1e-12);
        assert_relative_eq!(
            speed_command(k_max, &g, &p),
            p.max_speed * (1.0 - g.beta),
            epsilon = 1e-12
        );
    }

    fn straight_path(n: usize, spacing: f64) -> Vec<VehicleState> {
        (0..n)
            .map(|i| VehicleState::new(i as f64 * spacing, 0.0, 0.0, 0.0))
            .collect()
    }

    #[test]
    fn lookahead_point_selection() {
        let path = straight_path(101, 0.1);
        let g = gains();
        let state = VehicleState::new(0.0, 0.0, 0.0, 0.0);
        let (target, at_end) = lookahead_point(&path, &state, g.lookahead);
        assert!(!at_end);
        assert_relative_eq!(target.pos.x, 1.5, epsilon = 1e-9);

        // Vehicle beyond the path end gets the final point.
        let beyond = VehicleState::new(12.0, 0.5, 0.0, 0.0);
        let (target, at_end) = lookahead_point(&path, &beyond, g.lookahead);
        assert!(at_end);
        assert_relative_eq!(target.pos.x, 10.0, epsilon = 1e-9);

        // Projection starts mid-path.
        let mid = VehicleState::new(5.03, -0.2, 0.0, 0.0);
        let (target, _) = lookahead_point(&path, &mid, g.lookahead);
        assert!((target.pos.x - (5.03 + 1.5)).abs() <= 0.1 + 1e-9);
    }

    #[test]
    fn control_step_straight_on_path() {
        let p = params();
        let g = gains();
        let path = straight_path(101, 0.1);
        let state = VehicleState::new(0.0, 0.0, 0.0, 0.0);
        let (input, telemetry) = control_step(&state, &path, &g, &p, Direction::Forward);
        let v_op = p.max_speed * (1.0 - g.beta * max_curvature(&p));
        assert_relative_eq!(input.speed, v_op, epsilon = 1e-12);
        assert_relative_eq!(input.articulation_rate, 0.0, epsilon = 1e-12);
        assert!(!telemetry.rate_saturated);
    }

    #[test]
    fn target_left_of_heading_steers_left() {
        let p = params();
        let g = gains();
        // Single-pose path up and to the left, aligned heading.
        let path = vec![VehicleState::new(4.0, 2.0, 0.0, 0.0)];
        let state = VehicleState::new(0.0, 0.0, 0.0, 0.0);
        let (input, telemetry) = control_step(&state, &path, &g, &p, Direction::Forward);
        // Turning left means positive yaw rate, i.e. positive curvature
        // command and negative articulation rate at positive speed.
        assert!(telemetry.curvature > 0.0);
        assert!(input.articulation_rate < 0.0);
        assert!(input.speed > 0.0);
    }

    #[test]
    fn reverse_straight_behind() {
        let p = params();
        let g = gains();
        let path: Vec<VehicleState> = (0..50)
            .map(|i| VehicleState::new(-(i as f64) * 0.1, 0.0, 0.0, 0.0))
            .collect();
        let state = VehicleState::new(0.0, 0.0, 0.0, 0.0);
        let (input, _) = control_step(&state, &path, &g, &p, Direction::Backward);
        assert!(input.speed < 0.0);
        assert_relative_eq!(input.articulation_rate, 0.0, epsilon = 1e-12);
    }

    /// Fixed-target closed-loop runner at the simulation rates (100 Hz
    /// physics, control every 2 ticks).
    pub(crate) fn run_to_target(
        start: VehicleState,
        target: Pose2,
        gains: &ControllerGains,
        params: &VehicleParams,
        max_time: f64,
    ) -> (bool, Vec<(f64, VehicleState, PolarError)>) {
        let dt = 0.01;
        let path = vec![VehicleState::new(
            target.pos.x,
            target.pos.y,
            target.heading,
            0.0,
        )];
        let mut state = start;
        let mut input = ControlInput::new(0.0, 0.0);
        let mut log = Vec::new();
        let steps = (max_time / dt) as usize;
        for tick in 0..steps {
            if tick % 2 == 0 {
                let (i, telemetry) = control_step(&state, &path, gains, params, Direction::Forward);
                input = i;
                if let Some(e) = telemetry.error {
                    log.push((tick as f64 * dt, state, e));
                }
            }
            state = integrate_step(&state, &input, params, dt);
            assert!(
                state.articulation.abs() <= params.max_articulation + 1e-12,
                "articulation limit violated"
            );
            assert!(
                input.articulation_rate.abs() <= params.max_articulation_rate + 1e-12,
                "rate limit violated"
            );
            if state.position().dist(target.pos) < 0.1 {
                return (true, log);
            }
        }
        (false, log)
    }

    #[test]
    fn converges_to_assorted_targets() {
        let p = params();
        let g = gains();
        for (x, y, heading) in [
            (8.0, 0.0, 0.0),
            (5.0, 4.0, 1.0),
            (-6.0, 2.0, PI),
            (4.0, -5.0, -1.2),
            (0.0, 8.0, 2.0),
        ] {
            let (ok, _) = run_to_target(
                VehicleState::new(0.0, 0.0, 0.0, 0.0),
                Pose2::new(x, y, heading),
                &g,
                &p,
                60.0,
            );
            assert!(ok, "no convergence to ({x}, {y}, {heading})");
        }
    }

    #[test]
    fn steady_circle_tracking_stays_near_reference() {
        // Tracking a minimum-radius arc: the closed loop holds the radius.
        let p = params();
        let g = gains();
        let radius = steady_turn_radius(p.max_articulation, &p);
        let center = Vec2::new(0.0, -radius);
        // Reference arc: start at the origin heading +x, turning clockwise
        // (positive articulation).
        let arc: Vec<VehicleState> = (0..=140)
            .map(|i| {
                let s = i as f64 * 0.1;
                let ang = PI / 2.0 - s / radius;
                VehicleState::new(
                    center.x + radius * ang.cos(),
                    center.y + radius * ang.sin(),
                    -(s / radius),
                    p.max_articulation,
                )
            })
            .collect();
        let mut state = VehicleState::new(0.0, 0.0, 0.0, p.max_articulation);
        let mut input = ControlInput::new(0.0, 0.0);
        let dt = 0.01;
        let mut worst = 0.0f64;
        for tick in 0..2000 {
            if tick % 2 == 0 {
                input = control_step(&state, &arc, &g, &p, Direction::Forward).0;
            }
            state = integrate_step(&state, &input, &p, dt);
            let radial = (state.position().dist(center) - radius).abs();
            worst = worst.max(radial);
        }
        assert!(worst < 0.25, "radial deviation {worst}");
    }
}
