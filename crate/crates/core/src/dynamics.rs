//! Drone state transitions for the two control regimes: discrete key presses
//! used while collecting data, and waypoint actions used by agents.
//!
//! Every transition is a pure function. Actions that would move the view
//! area outside the raster are rejected and the input state is left as is.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{bearing, Heading, ViewArea, WorldPoint};
use crate::raster::{in_bounds, CameraModel, RasterEnvironment};

/// Displacements at or below this keep the current heading.
pub const HEADING_HOLD_DISTANCE: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("action rejected: view area would leave the environment")]
    OutOfBounds,
    #[error("invalid waypoint: {0}")]
    InvalidWaypoint(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
}

/// Serialized as `{x, y, heading, altitude}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "StateRecord", try_from = "StateRecord")]
pub struct DroneState {
    pub position: WorldPoint,
    pub heading: Heading,
    pub altitude: f64,
}

impl DroneState {
    pub fn new(position: WorldPoint, heading: Heading, altitude: f64) -> Self {
        Self {
            position,
            heading,
            altitude,
        }
    }

    pub fn view(&self, cam: &CameraModel) -> Result<ViewArea, DynamicsError> {
        let width = cam
            .width_from_altitude(self.altitude)
            .map_err(|e| DynamicsError::InvalidState(e.to_string()))?;
        ViewArea::new(self.position, width, self.heading)
            .map_err(|e| DynamicsError::InvalidState(e.to_string()))
    }

    /// Altitude in range and the derived view inside the environment.
    pub fn is_valid(&self, env: &RasterEnvironment, cam: &CameraModel) -> bool {
        self.view(cam).map(|v| in_bounds(env, &v)).unwrap_or(false)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct StateRecord {
    x: f64,
    y: f64,
    heading: Heading,
    altitude: f64,
}

impl From<DroneState> for StateRecord {
    fn from(s: DroneState) -> Self {
        Self {
            x: s.position.x,
            y: s.position.y,
            heading: s.heading,
            altitude: s.altitude,
        }
    }
}

impl TryFrom<StateRecord> for DroneState {
    type Error = String;

    fn try_from(r: StateRecord) -> Result<Self, Self::Error> {
        let position = WorldPoint::new(r.x, r.y);
        if !position.is_finite() || !r.altitude.is_finite() {
            return Err("non-finite state".into());
        }
        Ok(DroneState::new(position, r.heading, r.altitude))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyCommand {
    Forward,
    Back,
    Left,
    Right,
    RotCw,
    RotCcw,
    AltUp,
    AltDown,
}

impl KeyCommand {
    pub const ALL: [KeyCommand; 8] = [
        KeyCommand::Forward,
        KeyCommand::Back,
        KeyCommand::Left,
        KeyCommand::Right,
        KeyCommand::RotCw,
        KeyCommand::RotCcw,
        KeyCommand::AltUp,
        KeyCommand::AltDown,
    ];

    /// Keyboard binding used by the follower console.
    pub fn from_keyboard(key: char) -> Option<KeyCommand> {
        match key {
            'w' => Some(KeyCommand::Forward),
            's' => Some(KeyCommand::Back),
            'a' => Some(KeyCommand::Left),
            'd' => Some(KeyCommand::Right),
            'q' => Some(KeyCommand::RotCw),
            'e' => Some(KeyCommand::RotCcw),
            '1' => Some(KeyCommand::AltUp),
            '2' => Some(KeyCommand::AltDown),
            _ => None,
        }
    }

    pub fn inverse(self) -> KeyCommand {
        match self {
            KeyCommand::Forward => KeyCommand::Back,
            KeyCommand::Back => KeyCommand::Forward,
            KeyCommand::Left => KeyCommand::Right,
            KeyCommand::Right => KeyCommand::Left,
            KeyCommand::RotCw => KeyCommand::RotCcw,
            KeyCommand::RotCcw => KeyCommand::RotCw,
            KeyCommand::AltUp => KeyCommand::AltDown,
            KeyCommand::AltDown => KeyCommand::AltUp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    /// Translation per key press as a fraction of the current view width.
    pub step_fraction: f64,
    /// Rotation per key press in degrees.
    pub rot_step: f64,
    /// Multiplicative altitude change per key press.
    pub alt_factor: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            step_fraction: 0.1,
            rot_step: 15.0,
            alt_factor: 1.1,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let ok = self.step_fraction > 0.0
            && self.step_fraction < 1.0
            && self.rot_step > 0.0
            && self.rot_step < 90.0
            && self.alt_factor > 1.0;
        if ok {
            Ok(())
        } else {
            Err(DynamicsError::InvalidState(format!("invalid control config {self:?}")))
        }
    }
}

/// Waypoint in the current view frame: `(0.5, 0.5)` is the view center,
/// `x` grows to the right of the heading, `y` grows along it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub h: f64,
}

impl Waypoint {
    pub fn new(x: f64, y: f64, h: f64) -> Self {
        Self { x, y, h }
    }

    pub fn validate(&self, cam: &CameraModel) -> Result<(), DynamicsError> {
        if !(0.0..=1.0).contains(&self.x) || !(0.0..=1.0).contains(&self.y) {
            return Err(DynamicsError::InvalidWaypoint(format!(
                "({}, {}) outside [0,1]^2",
                self.x, self.y
            )));
        }
        if !(cam.min_altitude..=cam.max_altitude).contains(&self.h) {
            return Err(DynamicsError::InvalidWaypoint(format!(
                "altitude {} outside [{}, {}]",
                self.h, cam.min_altitude, cam.max_altitude
            )));
        }
        Ok(())
    }
}

fn checked(env: &RasterEnvironment, cam: &CameraModel, next: DroneState) -> Result<DroneState, DynamicsError> {
    let view = next.view(cam)?;
    if in_bounds(env, &view) {
        Ok(next)
    } else {
        Err(DynamicsError::OutOfBounds)
    }
}

pub fn apply_key(
    env: &RasterEnvironment,
    cam: &CameraModel,
    cfg: &ControlConfig,
    s: &DroneState,
    key: KeyCommand,
) -> Result<DroneState, DynamicsError> {
    let width = s.view(cam)?.width;
    let step = cfg.step_fraction * width;
    let (fx, fy) = s.heading.forward();
    let (rx, ry) = s.heading.right();
    let mut next = *s;
    match key {
        KeyCommand::Forward => next.position = s.position.offset(step * fx, step * fy),
        KeyCommand::Back => next.position = s.position.offset(-step * fx, -step * fy),
        KeyCommand::Right => next.position = s.position.offset(step * rx, step * ry),
        KeyCommand::Left => next.position = s.position.offset(-step * rx, -step * ry),
        KeyCommand::RotCw => next.heading = s.heading.rotated(cfg.rot_step),
        KeyCommand::RotCcw => next.heading = s.heading.rotated(-cfg.rot_step),
        KeyCommand::AltUp => next.altitude = cam.clamp_altitude(s.altitude * cfg.alt_factor),
        KeyCommand::AltDown => next.altitude = cam.clamp_altitude(s.altitude / cfg.alt_factor),
    }
    checked(env, cam, next)
}

/// The state a waypoint leads to, without the boundary check.
pub fn waypoint_target(cam: &CameraModel, s: &DroneState, w: &Waypoint) -> Result<DroneState, DynamicsError> {
    w.validate(cam)?;
    let view = s.view(cam)?;
    let target = view.frame_to_world((w.x - 0.5) * view.width, (w.y - 0.5) * view.width);
    let heading = if target.distance(&s.position) > HEADING_HOLD_DISTANCE {
        bearing(&s.position, &target).unwrap_or(s.heading)
    } else {
        s.heading
    };
    Ok(DroneState::new(target, heading, w.h))
}

pub fn apply_waypoint(
    env: &RasterEnvironment,
    cam: &CameraModel,
    s: &DroneState,
    w: &Waypoint,
) -> Result<DroneState, DynamicsError> {
    let next = waypoint_target(cam, s, w)?;
    checked(env, cam, next)
}

/// Waypoint that moves `s` to `position` at `altitude`. `None` when the
/// position lies outside the current view area.
pub fn waypoint_to(cam: &CameraModel, s: &DroneState, position: &WorldPoint, altitude: f64) -> Option<Waypoint> {
    let view = s.view(cam).ok()?;
    let (right, forward) = view.world_to_frame(position);
    let tol = 1e-12;
    let x = right / view.width + 0.5;
    let y = forward / view.width + 0.5;
    if !(-tol..=1.0 + tol).contains(&x) || !(-tol..=1.0 + tol).contains(&y) {
        return None;
    }
    Some(Waypoint::new(x.clamp(0.0, 1.0), y.clamp(0.0, 1.0), altitude))
}

/// Signed heading change in `(-180, 180]` degrees.
pub fn rot_delta(before: &DroneState, after: &DroneState) -> f64 {
    before.heading.signed_delta_to(after.heading)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{generate_synthetic_world, SyntheticWorldSpec};

    fn world() -> RasterEnvironment {
        let spec = SyntheticWorldSpec {
            seed: 1,
            size_px: 1000,
            meters_per_pixel: 1.0,
            object_count: 0,
        };
        generate_synthetic_world(&spec).unwrap().0
    }

    fn state(x: f64, y: f64, heading: f64, altitude: f64) -> DroneState {
        DroneState::new(WorldPoint::new(x, y), Heading::new(heading), altitude)
    }

    fn close(a: WorldPoint, b: WorldPoint) -> bool {
        a.distance(&b) < 1e-9
    }

    #[test]
    fn forward_moves_along_heading() {
        let (env, cam, cfg) = (world(), CameraModel::default(), ControlConfig::default());
        let s = state(500.0, 500.0, 0.0, 100.0);
        let n = apply_key(&env, &cam, &cfg, &s, KeyCommand::Forward).unwrap();
        assert!(close(n.position, WorldPoint::new(500.0, 520.0)));
        let s = state(500.0, 500.0, 90.0, 100.0);
        let n = apply_key(&env, &cam, &cfg, &s, KeyCommand::Forward).unwrap();
        assert!(close(n.position, WorldPoint::new(520.0, 500.0)));
        let n = apply_key(&env, &cam, &cfg, &s, KeyCommand::Right).unwrap();
        assert!(close(n.position, WorldPoint::new(500.0, 480.0)));
    }

    #[test]
    fn altitude_clamps() {
        let (env, cam, cfg) = (world(), CameraModel::default(), ControlConfig::default());
        let s = state(500.0, 500.0, 0.0, cam.min_altitude);
        let n = apply_key(&env, &cam, &cfg, &s, KeyCommand::AltDown).unwrap();
        assert_eq!(n.altitude, cam.min_altitude);
        let n = apply_key(&env, &cam, &cfg, &s, KeyCommand::AltUp).unwrap();
        assert!((n.altitude - 11.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_keys() {
        let (env, cam, cfg) = (world(), CameraModel::default(), ControlConfig::default());
        let s = state(500.0, 500.0, 0.0, 50.0);
        assert_eq!(apply_key(&env, &cam, &cfg, &s, KeyCommand::RotCw).unwrap().heading.degrees(), 15.0);
        assert_eq!(apply_key(&env, &cam, &cfg, &s, KeyCommand::RotCcw).unwrap().heading.degrees(), 345.0);
    }

    #[test]
    fn out_of_bounds_key_is_rejected() {
        let (env, cam, cfg) = (world(), CameraModel::default(), ControlConfig::default());
        // width 200, center 100 from the south edge: touching the boundary
        let s = state(500.0, 100.0, 180.0, 100.0);
        assert!(s.is_valid(&env, &cam));
        assert_eq!(apply_key(&env, &cam, &cfg, &s, KeyCommand::Forward), Err(DynamicsError::OutOfBounds));
        assert!(apply_key(&env, &cam, &cfg, &s, KeyCommand::Back).is_ok());
    }

    #[test]
    fn centered_waypoint_is_identity() {
        let (env, cam) = (world(), CameraModel::default());
        let s = state(400.0, 600.0, 37.0, 80.0);
        let n = apply_waypoint(&env, &cam, &s, &Waypoint::new(0.5, 0.5, 80.0)).unwrap();
        assert_eq!(n, s);
    }

    #[test]
    fn waypoint_frame_examples() {
        let (env, cam) = (world(), CameraModel::default());
        let s = state(500.0, 500.0, 0.0, 50.0);
        let n = apply_waypoint(&env, &cam, &s, &Waypoint::new(1.0, 0.5, 50.0)).unwrap();
        assert!(close(n.position, WorldPoint::new(550.0, 500.0)));
        assert!((n.heading.degrees() - 90.0).abs() < 1e-9);

        let n = apply_waypoint(&env, &cam, &s, &Waypoint::new(0.5, 1.0, 100.0)).unwrap();
        assert!(close(n.position, WorldPoint::new(500.0, 550.0)));
        assert_eq!(n.heading.degrees(), 0.0);
        assert!((n.view(&cam).unwrap().width - 200.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_waypoints() {
        let (env, cam) = (world(), CameraModel::default());
        let s = state(500.0, 500.0, 0.0, 50.0);
        assert!(matches!(
            apply_waypoint(&env, &cam, &s, &Waypoint::new(1.2, 0.5, 50.0)),
            Err(DynamicsError::InvalidWaypoint(_))
        ));
        assert!(matches!(
            apply_waypoint(&env, &cam, &s, &Waypoint::new(0.5, 0.5, 900.0)),
            Err(DynamicsError::InvalidWaypoint(_))
        ));
        let s = state(300.0, 300.0, 0.0, 50.0);
        assert_eq!(
            apply_waypoint(&env, &cam, &s, &Waypoint::new(0.5, 0.5, 499.0)),
            Err(DynamicsError::OutOfBounds)
        );
    }

    #[test]
    fn waypoint_to_inverts_target() {
        let cam = CameraModel::default();
        let s = state(500.0, 500.0, 123.0, 60.0);
        let w = Waypoint::new(0.2, 0.9, 70.0);
        let t = waypoint_target(&cam, &s, &w).unwrap();
        let back = waypoint_to(&cam, &s, &t.position, 70.0).unwrap();
        assert!((back.x - 0.2).abs() < 1e-12 && (back.y - 0.9).abs() < 1e-12);
        assert!(waypoint_to(&cam, &s, &WorldPoint::new(900.0, 900.0), 60.0).is_none());
    }

    #[test]
    fn rot_delta_examples() {
        assert_eq!(rot_delta(&state(0.0, 0.0, 10.0, 50.0), &state(0.0, 0.0, 350.0, 50.0)), -20.0);
        assert_eq!(rot_delta(&state(0.0, 0.0, 350.0, 50.0), &state(0.0, 0.0, 10.0, 50.0)), 20.0);
        assert_eq!(rot_delta(&state(0.0, 0.0, 42.0, 50.0), &state(0.0, 0.0, 42.0, 50.0)), 0.0);
    }

    #[test]
    fn keyboard_bindings_cover_all_keys() {
        let mapped: Vec<_> = "wsadqe12".chars().filter_map(KeyCommand::from_keyboard).collect();
        assert_eq!(mapped.len(), 8);
        for k in KeyCommand::ALL {
            assert!(mapped.contains(&k));
            assert_eq!(k.inverse().inverse(), k);
        }
        assert_eq!(KeyCommand::from_keyboard('x'), None);
    }
}
