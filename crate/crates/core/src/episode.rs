//! Episode and dialog data model, task construction for ANDH and ANDH-Full,
//! success conditions and the follower-facing auto-instructions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::AttentionClick;
use crate::dynamics::DroneState;
use crate::geometry::{bearing, contains, iou, polygon_iou, AxisRect, ViewArea, WorldPoint};
use crate::raster::CameraModel;

/// IoU that must be exceeded for the destination to count as reached.
pub const SUCCESS_IOU: f64 = 0.4;
/// Auto-instruction appended when a claim succeeds.
pub const SUCCESS_MESSAGE: &str = "Yes, you have found it!!!";
/// Non-normative wording of the altitude auto-instruction.
pub const ALTITUDE_HINT_MESSAGE: &str = "Adjust your altitude and try again.";
/// Non-normative wording of the hint sent when a claim misses entirely.
pub const ASK_HINT_MESSAGE: &str =
    "The destination is not in your view yet. Please ask the commander a question.";
/// Trajectories shorter than this have no meaningful direction.
pub const MIN_DIRECTION_DISPLACEMENT: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpisodeError {
    #[error("round index {index} out of range for {rounds} rounds")]
    IndexOutOfRange { index: usize, rounds: usize },
    #[error("degenerate trajectory: net displacement below {MIN_DIRECTION_DISPLACEMENT} m")]
    DegenerateTrajectory,
    #[error("invalid episode: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    SeenVal,
    UnseenVal,
    UnseenTest,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::SeenVal, Split::UnseenVal, Split::UnseenTest];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::SeenVal => "seen_val",
            Split::UnseenVal => "unseen_val",
            Split::UnseenTest => "unseen_test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogRound {
    #[serde(rename = "T")]
    pub index: usize,
    /// Instruction (round 0) or answer to the previous round's question.
    pub commander: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub follower: Option<String>,
    #[serde(rename = "auto", default)]
    pub auto_instructions: Vec<String>,
}

impl DialogRound {
    pub fn new(index: usize, commander: impl Into<String>) -> Self {
        Self {
            index,
            commander: commander.into(),
            follower: None,
            auto_instructions: Vec::new(),
        }
    }

    /// Human-written words in the round (auto-instructions excluded).
    pub fn word_count(&self) -> usize {
        let follower = self.follower.as_deref().unwrap_or("");
        self.commander.split_whitespace().count() + follower.split_whitespace().count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubTrajectory {
    #[serde(rename = "T")]
    pub index: usize,
    pub states: Vec<DroneState>,
}

impl SubTrajectory {
    /// Length of the polyline through the view centers.
    pub fn path_length(&self) -> f64 {
        path_length(&self.states)
    }
}

pub fn path_length(states: &[DroneState]) -> f64 {
    states
        .windows(2)
        .map(|w| w[0].position.distance(&w[1].position))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: String,
    pub env_id: String,
    pub split: Split,
    pub start: DroneState,
    pub destination: AxisRect,
    pub rounds: Vec<DialogRound>,
    pub sub_trajectories: Vec<SubTrajectory>,
    #[serde(default)]
    pub attention_clicks: Vec<AttentionClick>,
}

impl Episode {
    /// Number of dialog rounds, `M`.
    pub fn round_count(&self) -> usize {
        self.rounds.len()
    }

    /// True when the final round recorded a successful claim.
    pub fn is_recorded_successful(&self) -> bool {
        self.rounds
            .last()
            .is_some_and(|r| r.auto_instructions.iter().any(|a| a == SUCCESS_MESSAGE))
    }

    pub fn final_state(&self) -> Option<&DroneState> {
        self.sub_trajectories.last().and_then(|s| s.states.last())
    }

    /// All recorded states in order, with the shared boundary state between
    /// consecutive sub-trajectories kept once.
    pub fn full_trajectory(&self) -> Vec<DroneState> {
        let mut out: Vec<DroneState> = Vec::new();
        for sub in &self.sub_trajectories {
            for (i, s) in sub.states.iter().enumerate() {
                if i == 0 && out.last().is_some_and(|l| l.position.distance(&s.position) < 1e-9 && l == s) {
                    continue;
                }
                out.push(*s);
            }
        }
        out
    }

    pub fn path_length(&self) -> f64 {
        path_length(&self.full_trajectory())
    }
}

/// Goal of a navigation task: an intermediate view area or the destination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalArea {
    ViewArea(ViewArea),
    Destination(AxisRect),
}

impl GoalArea {
    pub fn center(&self) -> WorldPoint {
        match self {
            GoalArea::ViewArea(v) => v.center,
            GoalArea::Destination(r) => r.center(),
        }
    }

    /// Rectangle used as the IoU reference when the goal is a view area
    /// whose rotation differs from the predicted view.
    pub fn reference_rect(&self) -> AxisRect {
        match self {
            GoalArea::ViewArea(v) => v.bounding_rect(),
            GoalArea::Destination(r) => *r,
        }
    }

    /// IoU of a predicted view against this goal. View-area goals with the
    /// same rotation are compared footprint to footprint; otherwise against
    /// the goal's axis-aligned bounding box.
    pub fn iou(&self, view: &ViewArea) -> f64 {
        match self {
            GoalArea::Destination(r) => iou(view, r),
            GoalArea::ViewArea(goal) => {
                if view.rotation.angle_to(goal.rotation) < 1e-9 {
                    polygon_iou(&view.corners(), &goal.corners())
                } else {
                    iou(view, &goal.bounding_rect())
                }
            }
        }
    }

    pub fn is_reached(&self, view: &ViewArea, mode: SuccessMode) -> bool {
        let overlap = self.iou(view) > SUCCESS_IOU;
        match mode {
            SuccessMode::Eval => overlap,
            SuccessMode::Claim => overlap && contains(&self.reference_rect(), &view.center),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessMode {
    /// Center inside the destination and IoU above the threshold.
    Claim,
    /// IoU above the threshold only.
    Eval,
}

pub fn check_success(view: &ViewArea, dest: &AxisRect, mode: SuccessMode) -> bool {
    GoalArea::Destination(*dest).is_reached(view, mode)
}

/// Goal of round `round_index`: the first view of the next sub-trajectory,
/// or the destination for the final round.
pub fn goal_area(ep: &Episode, round_index: usize, cam: &CameraModel) -> Result<GoalArea, EpisodeError> {
    let m = ep.round_count();
    if round_index >= m {
        return Err(EpisodeError::IndexOutOfRange {
            index: round_index,
            rounds: m,
        });
    }
    if round_index + 1 == m {
        return Ok(GoalArea::Destination(ep.destination));
    }
    let next = ep
        .sub_trajectories
        .get(round_index + 1)
        .and_then(|s| s.states.first())
        .ok_or_else(|| EpisodeError::Invalid(format!("sub-trajectory {} is empty or missing", round_index + 1)))?;
    next.view(cam)
        .map(GoalArea::ViewArea)
        .map_err(|e| EpisodeError::Invalid(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "andh")]
    Andh,
    #[serde(rename = "andh_full")]
    AndhFull,
}

/// One navigation task cut from a recorded episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub kind: TaskKind,
    pub episode_id: String,
    pub env_id: String,
    /// Round the task starts in (always 0 for ANDH-Full).
    pub round: usize,
    pub dialog_context: Vec<DialogRound>,
    pub start: DroneState,
    pub goal: GoalArea,
    /// Recorded states the task was cut from.
    pub reference: Vec<DroneState>,
}

/// One ANDH task per round: dialog up to and including the round, starting
/// from the round's first recorded state.
pub fn andh_tasks(ep: &Episode, cam: &CameraModel) -> Result<Vec<TaskInstance>, EpisodeError> {
    (0..ep.round_count())
        .map(|i| {
            let sub = ep
                .sub_trajectories
                .get(i)
                .ok_or_else(|| EpisodeError::Invalid(format!("missing sub-trajectory {i}")))?;
            let start = *sub
                .states
                .first()
                .ok_or_else(|| EpisodeError::Invalid(format!("sub-trajectory {i} is empty")))?;
            Ok(TaskInstance {
                kind: TaskKind::Andh,
                episode_id: ep.episode_id.clone(),
                env_id: ep.env_id.clone(),
                round: i,
                dialog_context: ep.rounds[..=i].to_vec(),
                start,
                goal: goal_area(ep, i, cam)?,
                reference: sub.states.clone(),
            })
        })
        .collect()
}

pub fn andh_full_task(ep: &Episode) -> TaskInstance {
    TaskInstance {
        kind: TaskKind::AndhFull,
        episode_id: ep.episode_id.clone(),
        env_id: ep.env_id.clone(),
        round: 0,
        dialog_context: ep.rounds.clone(),
        start: ep.start,
        goal: GoalArea::Destination(ep.destination),
        reference: ep.full_trajectory(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AltitudeDirection {
    Ascend,
    Descend,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AutoInstruction {
    Success { message: String },
    AltitudeHint { message: String, direction: AltitudeDirection },
    None,
}

impl AutoInstruction {
    pub fn message(&self) -> Option<&str> {
        match self {
            AutoInstruction::Success { message } | AutoInstruction::AltitudeHint { message, .. } => Some(message),
            AutoInstruction::None => None,
        }
    }
}

/// Auto-instruction issued when the follower claims the destination.
pub fn auto_instruction(view: &ViewArea, dest: &AxisRect) -> AutoInstruction {
    if check_success(view, dest, SuccessMode::Claim) {
        return AutoInstruction::Success {
            message: SUCCESS_MESSAGE.to_string(),
        };
    }
    if contains(dest, &view.center) {
        let direction = if view.width < dest.mean_side() {
            AltitudeDirection::Ascend
        } else {
            AltitudeDirection::Descend
        };
        let detail = match direction {
            AltitudeDirection::Ascend => "fly higher",
            AltitudeDirection::Descend => "fly lower",
        };
        return AutoInstruction::AltitudeHint {
            message: format!("{ALTITUDE_HINT_MESSAGE} ({detail})"),
            direction,
        };
    }
    AutoInstruction::None
}

/// True when the sub-trajectory's net displacement points more than 90
/// degrees away from the destination as seen from its first state.
pub fn label_direction_violation(sub: &SubTrajectory, dest: &AxisRect) -> Result<bool, EpisodeError> {
    let (first, last) = match (sub.states.first(), sub.states.last()) {
        (Some(f), Some(l)) if sub.states.len() >= 2 => (f, l),
        _ => return Err(EpisodeError::DegenerateTrajectory),
    };
    if first.position.distance(&last.position) < MIN_DIRECTION_DISPLACEMENT {
        return Err(EpisodeError::DegenerateTrajectory);
    }
    let moved = bearing(&first.position, &last.position).map_err(|_| EpisodeError::DegenerateTrajectory)?;
    let wanted = match bearing(&first.position, &dest.center()) {
        Ok(b) => b,
        Err(_) => return Ok(false),
    };
    Ok(moved.angle_to(wanted) > 90.0)
}
