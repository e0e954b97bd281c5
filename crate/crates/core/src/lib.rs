//! Continuous-space aerial dialog-navigation simulator and evaluation
//! harness.
//!
//! A drone with a downward camera flies over a georeferenced raster. Its
//! view area is an oriented square whose width follows the altitude. The
//! crate provides the simulator ([`raster`], [`dynamics`]), the episode and
//! dataset model ([`episode`], [`dataset`]), task metrics ([`metrics`],
//! [`attention`]), the agent session protocol ([`protocol`]) and commander
//! overview rendering ([`overview`]).

pub mod attention;
pub mod dataset;
pub mod dynamics;
pub mod episode;
pub mod geometry;
pub mod metrics;
pub mod overview;
pub mod protocol;
pub mod raster;
pub mod synth;

pub use attention::{nss, render_mask, AttentionClick, AttentionMask, SaliencyMap};
pub use dynamics::{apply_key, apply_waypoint, ControlConfig, DroneState, KeyCommand, Waypoint};
pub use episode::{check_success, goal_area, Episode, GoalArea, SuccessMode, TaskInstance, TaskKind};
pub use geometry::{bearing, contains, iou, AxisRect, Heading, ViewArea, WorldPoint};
pub use raster::{observe, CameraModel, Observation, RasterEnvironment};
