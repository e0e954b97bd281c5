//! Task metrics (SR, SPL, GP), the progress target used for stopping, and
//! the navigation loss as a diagnostic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::{nss, AttentionError, SaliencyMap};
use crate::attention::{AttentionMask, Grid};
use crate::dynamics::{rot_delta, waypoint_target, DroneState, DynamicsError, Waypoint};
use crate::episode::{path_length, GoalArea, SuccessMode, TaskInstance};
use crate::geometry::{iou, AxisRect, ViewArea};
use crate::raster::CameraModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no results to aggregate")]
    EmptyResults,
    #[error("episode {0}: start coincides with the goal center")]
    DegenerateReference(String),
    #[error("{tasks} tasks but {trajectories} predicted trajectories")]
    ArityMismatch { tasks: usize, trajectories: usize },
    #[error("task {0}: predicted trajectory is empty")]
    EmptyTrajectory(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Attention(#[from] AttentionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpMode {
    /// Path length minus remaining distance to the goal center.
    #[default]
    Literal,
    /// Initial minus remaining distance to the goal center.
    DeltaDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub task: TaskInstance,
    pub predicted_states: Vec<DroneState>,
    pub success: bool,
    pub path_length: f64,
    pub goal_distance_final: f64,
}

impl EpisodeResult {
    /// Scores a predicted trajectory; the final view decides success.
    pub fn score(task: TaskInstance, predicted_states: Vec<DroneState>, cam: &CameraModel) -> Result<Self, MetricsError> {
        let last = *predicted_states
            .last()
            .ok_or_else(|| MetricsError::EmptyTrajectory(task.episode_id.clone()))?;
        let view = last.view(cam)?;
        let success = task.goal.is_reached(&view, SuccessMode::Eval);
        Ok(Self {
            path_length: path_length(&predicted_states),
            goal_distance_final: last.position.distance(&task.goal.center()),
            success,
            predicted_states,
            task,
        })
    }

    pub fn initial_distance(&self) -> f64 {
        self.task.start.position.distance(&self.task.goal.center())
    }
}

pub fn success_rate(results: &[EpisodeResult]) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyResults);
    }
    Ok(results.iter().filter(|r| r.success).count() as f64 / results.len() as f64)
}

/// Per-episode SPL term with the straight-line reference length.
pub fn spl_term(result: &EpisodeResult) -> Result<f64, MetricsError> {
    let reference = result.initial_distance();
    if reference <= 0.0 {
        return Err(MetricsError::DegenerateReference(result.task.episode_id.clone()));
    }
    if !result.success {
        return Ok(0.0);
    }
    Ok(reference / result.path_length.max(reference))
}

pub fn spl(results: &[EpisodeResult]) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyResults);
    }
    let mut total = 0.0;
    for r in results {
        total += spl_term(r)?;
    }
    Ok(total / results.len() as f64)
}

pub fn goal_progress(result: &EpisodeResult, mode: GpMode) -> f64 {
    match mode {
        GpMode::Literal => result.path_length - result.goal_distance_final,
        GpMode::DeltaDistance => result.initial_distance() - result.goal_distance_final,
    }
}

/// Supervision target for the progress indicator.
pub fn progress_target(view: &ViewArea, dest: &AxisRect) -> f64 {
    iou(view, dest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopDirection {
    /// Stop when the indicator is at or above the threshold.
    #[default]
    AtOrAbove,
    /// Stop when the indicator is below the threshold.
    Below,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopConfig {
    pub threshold: f64,
    pub direction: StopDirection,
}

impl Default for StopConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            direction: StopDirection::AtOrAbove,
        }
    }
}

pub fn should_stop(progress: f64, cfg: &StopConfig) -> bool {
    match cfg.direction {
        StopDirection::AtOrAbove => progress >= cfg.threshold,
        StopDirection::Below => progress < cfg.threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavLoss {
    pub total: f64,
    pub rotation: f64,
    pub waypoint: f64,
    pub progress: f64,
}

/// Sum of the rotation, waypoint and progress squared errors. Rotations are
/// the heading changes each waypoint induces from `ctx`, scaled by 1/180;
/// waypoint altitudes are scaled by the camera's maximum altitude.
pub fn nav_loss(
    predicted: &Waypoint,
    target: &Waypoint,
    predicted_progress: f64,
    target_progress: f64,
    ctx: &DroneState,
    cam: &CameraModel,
) -> Result<NavLoss, MetricsError> {
    let rot_pred = rot_delta(ctx, &waypoint_target(cam, ctx, predicted)?);
    let rot_true = rot_delta(ctx, &waypoint_target(cam, ctx, target)?);
    let rotation = ((rot_pred - rot_true) / 180.0).powi(2);
    let dh = (predicted.h - target.h) / cam.max_altitude;
    let waypoint = ((predicted.x - target.x).powi(2) + (predicted.y - target.y).powi(2) + dh * dh) / 3.0;
    let progress = (predicted_progress - target_progress).powi(2);
    Ok(NavLoss {
        total: rotation + waypoint + progress,
        rotation,
        waypoint,
        progress,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode_id: String,
    pub round: usize,
    pub success: bool,
    pub path_length: f64,
    pub initial_distance: f64,
    pub goal_distance_final: f64,
    pub spl: f64,
    pub gp: f64,
    /// `view_area` for intermediate goals, `destination` otherwise.
    pub goal: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub sr: f64,
    pub spl: f64,
    pub gp: f64,
    pub gp_mode: GpMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nss_mean: Option<f64>,
    /// Convention used for intermediate (view-area) goals.
    pub goal_reference: String,
    pub per_episode: Vec<EpisodeMetrics>,
}

/// Saliency prediction for one frame paired with its ground-truth mask.
#[derive(Debug, Clone)]
pub struct AttentionFrame {
    pub saliency: SaliencyMap,
    pub mask: AttentionMask,
}

pub const VIEW_GOAL_CONVENTION: &str =
    "view-area goals: footprint IoU when rotations match, otherwise IoU against the goal's axis-aligned bounding box";

/// Scores one predicted trajectory per task and aggregates. Attention
/// frames without attended pixels are skipped.
pub fn evaluate_run(
    tasks: &[TaskInstance],
    predictions: &[Vec<DroneState>],
    attention: Option<&[Vec<AttentionFrame>]>,
    cam: &CameraModel,
    gp_mode: GpMode,
) -> Result<MetricsReport, MetricsError> {
    if tasks.len() != predictions.len() {
        return Err(MetricsError::ArityMismatch {
            tasks: tasks.len(),
            trajectories: predictions.len(),
        });
    }
    if let Some(frames) = attention {
        if frames.len() != tasks.len() {
            return Err(MetricsError::ArityMismatch {
                tasks: tasks.len(),
                trajectories: frames.len(),
            });
        }
    }
    if tasks.is_empty() {
        return Err(MetricsError::EmptyResults);
    }
    let mut results = Vec::with_capacity(tasks.len());
    for (task, states) in tasks.iter().zip(predictions) {
        results.push(EpisodeResult::score(task.clone(), states.clone(), cam)?);
    }
    let mut per_episode = Vec::with_capacity(results.len());
    let mut nss_sum = 0.0;
    let mut nss_n = 0usize;
    for (i, r) in results.iter().enumerate() {
        let mut ep_nss = None;
        if let Some(frames) = attention {
            let mut sum = 0.0;
            let mut n = 0usize;
            for f in &frames[i] {
                match nss(&f.saliency, &f.mask.grid) {
                    Ok(v) => {
                        sum += v;
                        n += 1;
                    }
                    Err(AttentionError::EmptyGroundTruth) => {}
                    Err(e) => return Err(e.into()),
                }
            }
            if n > 0 {
                ep_nss = Some(sum / n as f64);
                nss_sum += sum;
                nss_n += n;
            }
        }
        per_episode.push(EpisodeMetrics {
            episode_id: r.task.episode_id.clone(),
            round: r.task.round,
            success: r.success,
            path_length: r.path_length,
            initial_distance: r.initial_distance(),
            goal_distance_final: r.goal_distance_final,
            spl: spl_term(r)?,
            gp: goal_progress(r, gp_mode),
            goal: match r.task.goal {
                GoalArea::ViewArea(_) => "view_area".into(),
                GoalArea::Destination(_) => "destination".into(),
            },
            nss: ep_nss,
        });
    }
    let n = results.len();
    Ok(MetricsReport {
        n,
        sr: success_rate(&results)?,
        spl: spl(&results)?,
        gp: per_episode.iter().map(|e| e.gp).sum::<f64>() / n as f64,
        gp_mode,
        nss_mean: (nss_n > 0).then(|| nss_sum / nss_n as f64),
        goal_reference: VIEW_GOAL_CONVENTION.into(),
        per_episode,
    })
}

/// Saliency map that equals the mask (1 on attended pixels, 0 elsewhere).
pub fn mask_as_saliency(mask: &AttentionMask) -> Grid<f64> {
    mask.as_f64()
}
