//! Task sampling and scripted generation of recorded-successful episodes on
//! synthetic worlds.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::{render_mask, AttentionClick};
use crate::dynamics::{apply_waypoint, waypoint_to, DroneState, DynamicsError};
use crate::episode::{
    check_success, goal_area, DialogRound, Episode, GoalArea, Split, SubTrajectory, SuccessMode, SUCCESS_IOU,
    SUCCESS_MESSAGE,
};
use crate::geometry::{bearing, iou, AxisRect, Heading, ViewArea, WorldPoint};
use crate::raster::{
    generate_synthetic_world, in_bounds, CameraModel, RasterEnvironment, RasterError, SyntheticWorldSpec,
};

/// Maximum start-to-destination distance for sampled tasks.
pub const MAX_TASK_DISTANCE: f64 = 1500.0;
pub const MAX_SAMPLE_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no destination objects to sample from")]
    NoObjects,
    #[error("no feasible start found after {MAX_SAMPLE_ATTEMPTS} attempts")]
    NoFeasibleStart,
    #[error("could not build an episode after {0} attempts")]
    NoFeasibleEpisode(usize),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// The desk-scale world used by tests and examples: seed 7, 2048 px at
/// 1 m/px, 20 objects.
pub fn fixture_world_spec() -> SyntheticWorldSpec {
    SyntheticWorldSpec {
        seed: 7,
        size_px: 2048,
        meters_per_pixel: 1.0,
        object_count: 20,
    }
}

pub fn fixture_world() -> Result<(RasterEnvironment, Vec<AxisRect>), RasterError> {
    generate_synthetic_world(&fixture_world_spec())
}

/// Picks a destination uniformly and a start state uniformly among in-bounds
/// states within [`MAX_TASK_DISTANCE`] of it whose view does not already
/// overlap the destination by more than the success IoU.
pub fn sample_task(
    env: &RasterEnvironment,
    cam: &CameraModel,
    objects: &[AxisRect],
    seed: u64,
) -> Result<(DroneState, AxisRect), SynthError> {
    if objects.is_empty() {
        return Err(SynthError::NoObjects);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dest = objects[rng.random_range(0..objects.len())];
    let center = dest.center();
    for _ in 0..MAX_SAMPLE_ATTEMPTS {
        // uniform over the disk
        let r = MAX_TASK_DISTANCE * rng.random_range(0.0f64..1.0).sqrt();
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let position = center.offset(r * theta.cos(), r * theta.sin());
        let heading = Heading::new(rng.random_range(0.0..360.0));
        let altitude = rng.random_range(cam.min_altitude..=cam.max_altitude);
        let state = DroneState::new(position, heading, altitude);
        let Ok(view) = state.view(cam) else { continue };
        if !in_bounds(env, &view) {
            continue;
        }
        if iou(&view, &dest) > SUCCESS_IOU || check_success(&view, &dest, SuccessMode::Claim) {
            continue;
        }
        return Ok((state, dest));
    }
    Err(SynthError::NoFeasibleStart)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisParams {
    /// Relative weights of M = 1, 2, 3 dialog rounds.
    pub round_weights: [f64; 3],
    pub split: Split,
    /// Target attended fraction of each recorded view.
    pub attention_fraction: f64,
    /// Resolution used to measure the attended fraction while clicking.
    pub attention_resolution: u32,
    /// Per-step travel as a fraction of the view width, sampled in this range.
    pub step_fraction: (f64, f64),
    pub max_attempts: usize,
}

impl Default for SynthesisParams {
    fn default() -> Self {
        Self {
            round_weights: [0.4, 0.35, 0.25],
            split: Split::Train,
            attention_fraction: 1.0 / 7.0,
            attention_resolution: 48,
            step_fraction: (0.3, 0.45),
            max_attempts: 200,
        }
    }
}

impl SynthesisParams {
    pub fn expected_rounds(&self) -> f64 {
        let total: f64 = self.round_weights.iter().sum();
        self.round_weights
            .iter()
            .enumerate()
            .map(|(i, w)| (i + 1) as f64 * w / total)
            .sum()
    }
}

fn distance_to_boundary(env: &RasterEnvironment, p: &WorldPoint) -> f64 {
    let e = env.extent();
    (p.x - e.min.x).min(e.max.x - p.x).min(p.y - e.min.y).min(e.max.y - p.y)
}

fn compass_word(h: Heading) -> &'static str {
    const NAMES: [&str; 8] = ["north", "north-east", "east", "south-east", "south", "south-west", "west", "north-west"];
    NAMES[(((h.degrees() + 22.5) / 45.0) as usize) % 8]
}

const LANDMARKS: [&str; 6] = ["road", "crossing", "field", "parking lot", "row of trees", "roundabout"];
const QUESTIONS: [&str; 4] = [
    "where should I go? I can see a",
    "could you further explain it? I am next to a",
    "is the building near this",
    "should I keep going past the",
];

fn instruction_text(rng: &mut ChaCha8Rng, from: &WorldPoint, to: &WorldPoint, answer: bool) -> String {
    let dir = bearing(from, to).map(compass_word).unwrap_or("ahead");
    let dist = (from.distance(to) / 10.0).round() * 10.0;
    let landmark = LANDMARKS[rng.random_range(0..LANDMARKS.len())];
    if answer {
        format!("Go {dir} for about {dist:.0} meters, you will pass a {landmark} on the way.")
    } else {
        format!("Fly {dir} about {dist:.0} meters. The destination is a building close to a {landmark}.")
    }
}

fn question_text(rng: &mut ChaCha8Rng) -> String {
    let q = QUESTIONS[rng.random_range(0..QUESTIONS.len())];
    let landmark = LANDMARKS[rng.random_range(0..LANDMARKS.len())];
    format!("{q} {landmark}.")
}

/// Best axis-aligned square width for a centered view over `dest`.
fn best_final_width(dest: &AxisRect) -> f64 {
    (dest.width() * dest.height()).sqrt()
}

struct Plan {
    states: Vec<DroneState>,
}

/// Straight-line flight to a staging point south of the destination, then a
/// final northward step onto the destination center at the best altitude.
fn plan_flight(
    env: &RasterEnvironment,
    cam: &CameraModel,
    start: &DroneState,
    dest: &AxisRect,
    rng: &mut ChaCha8Rng,
    params: &SynthesisParams,
) -> Option<Plan> {
    let start_view = start.view(cam).ok()?;
    let target = dest.center();
    let final_width = best_final_width(dest).clamp(cam.min_width(), cam.max_width());
    let final_alt = cam.altitude_from_width(final_width).ok()?;
    let final_view = ViewArea::new(target, final_width, Heading::NORTH).ok()?;
    if !in_bounds(env, &final_view) || iou(&final_view, dest) <= SUCCESS_IOU + 0.02 {
        return None;
    }

    let sqrt2 = std::f64::consts::SQRT_2;
    let travel_cap = start_view
        .width
        .min(distance_to_boundary(env, &start.position) * sqrt2)
        .min(distance_to_boundary(env, &target) * sqrt2);
    let stage_offset = 0.4 * travel_cap;
    let staging = target.offset(0.0, -stage_offset);
    let travel_width = travel_cap.min(distance_to_boundary(env, &staging) * sqrt2);
    if travel_width < cam.min_width() || stage_offset > 0.45 * travel_width || stage_offset <= 1.0 {
        return None;
    }
    let travel_alt = cam.altitude_from_width(travel_width).ok()?;

    let mut states = vec![*start];
    let mut cur = *start;
    let step = |cur: &DroneState, to: &WorldPoint, alt: f64| -> Option<DroneState> {
        let w = waypoint_to(cam, cur, to, alt)?;
        apply_waypoint(env, cam, cur, &w).ok()
    };
    if (travel_alt - cur.altitude).abs() > 1e-9 {
        cur = step(&cur, &cur.position.clone(), travel_alt)?;
        states.push(cur);
    }
    let dist = cur.position.distance(&staging);
    if dist > 1e-6 {
        let frac = rng.random_range(params.step_fraction.0..=params.step_fraction.1);
        let n = (dist / (frac * travel_width)).ceil().max(1.0) as usize;
        let origin = cur.position;
        for k in 1..=n {
            let t = k as f64 / n as f64;
            let p = WorldPoint::new(
                origin.x + t * (staging.x - origin.x),
                origin.y + t * (staging.y - origin.y),
            );
            cur = step(&cur, &p, travel_alt)?;
            states.push(cur);
        }
    }
    cur = step(&cur, &target, final_alt)?;
    states.push(cur);
    let last_view = cur.view(cam).ok()?;
    if !check_success(&last_view, dest, SuccessMode::Claim) {
        return None;
    }
    Some(Plan { states })
}

fn pick_rounds(rng: &mut ChaCha8Rng, weights: &[f64; 3]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i + 1;
        }
        u -= w;
    }
    3
}

/// Cuts `transitions` steps into `m` non-empty consecutive ranges.
fn pick_cuts(rng: &mut ChaCha8Rng, transitions: usize, m: usize) -> Vec<usize> {
    let mut inner: Vec<usize> = Vec::new();
    while inner.len() < m - 1 {
        let c = rng.random_range(1..transitions);
        if !inner.contains(&c) {
            inner.push(c);
        }
    }
    inner.sort_unstable();
    let mut cuts = vec![0];
    cuts.extend(inner);
    cuts.push(transitions);
    cuts
}

fn add_attention(
    states: &[DroneState],
    cam: &CameraModel,
    params: &SynthesisParams,
    rng: &mut ChaCha8Rng,
) -> Vec<AttentionClick> {
    let views: Vec<_> = states.iter().filter_map(|s| s.view(cam).ok()).collect();
    let res = params.attention_resolution;
    let mut clicks: Vec<AttentionClick> = Vec::new();
    for view in &views {
        for _ in 0..64 {
            if render_mask(&clicks, view, res).attended_fraction() >= params.attention_fraction {
                break;
            }
            let half = 0.4 * view.width;
            let p = view.frame_to_world(rng.random_range(-half..=half), rng.random_range(-half..=half));
            clicks.push(AttentionClick::new(p, view.width));
        }
    }
    // Clicks persist across views, so topping up every view overshoots the
    // mean. Keep the shortest shuffled prefix that reaches the target.
    clicks.shuffle(rng);
    let mean_with = |k: usize| {
        views.iter().map(|v| render_mask(&clicks[..k], v, res).attended_fraction()).sum::<f64>() / views.len().max(1) as f64
    };
    let (mut lo, mut hi) = (0, clicks.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if mean_with(mid) >= params.attention_fraction {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    clicks.truncate(lo);
    clicks
}

/// Builds a recorded-successful episode on `env`. Every round starts outside
/// its goal so that no ANDH task is solved by standing still.
pub fn synthesize_episode(
    env: &RasterEnvironment,
    cam: &CameraModel,
    objects: &[AxisRect],
    seed: u64,
    params: &SynthesisParams,
) -> Result<Episode, SynthError> {
    for attempt in 0..params.max_attempts {
        let attempt_seed = seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(attempt as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(attempt_seed);
        let (start, dest) = match sample_task(env, cam, objects, attempt_seed) {
            Ok(t) => t,
            Err(SynthError::NoObjects) => return Err(SynthError::NoObjects),
            Err(_) => continue,
        };
        let Some(plan) = plan_flight(env, cam, &start, &dest, &mut rng, params) else {
            continue;
        };
        let m = pick_rounds(&mut rng, &params.round_weights);
        let transitions = plan.states.len() - 1;
        if transitions < m {
            continue;
        }
        for _ in 0..20 {
            let cuts = pick_cuts(&mut rng, transitions, m);
            let subs: Vec<SubTrajectory> = (0..m)
                .map(|i| SubTrajectory {
                    index: i,
                    states: plan.states[cuts[i]..=cuts[i + 1]].to_vec(),
                })
                .collect();
            let mut rounds = Vec::with_capacity(m);
            for (i, sub) in subs.iter().enumerate() {
                let from = sub.states[0].position;
                let to = if i + 1 == m { dest.center() } else { sub.states.last().unwrap().position };
                let mut round = DialogRound::new(i, instruction_text(&mut rng, &from, &to, i > 0));
                if i + 1 < m {
                    round.follower = Some(question_text(&mut rng));
                } else {
                    round.auto_instructions.push(SUCCESS_MESSAGE.to_string());
                }
                rounds.push(round);
            }
            let mut ep = Episode {
                episode_id: format!("{}-{seed:06}", env.env_id()),
                env_id: env.env_id().to_string(),
                split: params.split,
                start,
                destination: dest,
                rounds,
                sub_trajectories: subs,
                attention_clicks: Vec::new(),
            };
            if !rounds_start_outside_goal(&ep, cam) {
                continue;
            }
            ep.attention_clicks = add_attention(&plan.states, cam, params, &mut rng);
            return Ok(ep);
        }
    }
    Err(SynthError::NoFeasibleEpisode(params.max_attempts))
}

fn rounds_start_outside_goal(ep: &Episode, cam: &CameraModel) -> bool {
    (0..ep.round_count()).all(|i| {
        let Ok(goal) = goal_area(ep, i, cam) else { return false };
        let Ok(view) = ep.sub_trajectories[i].states[0].view(cam) else { return false };
        let far_enough = view.center.distance(&goal.center()) > 1.0;
        far_enough && !goal.is_reached(&view, SuccessMode::Eval) && !goal.is_reached(&view, SuccessMode::Claim)
    })
}

/// `n` episodes with consecutive seeds starting at `first_seed`.
pub fn synthesize_dataset(
    env: &RasterEnvironment,
    cam: &CameraModel,
    objects: &[AxisRect],
    first_seed: u64,
    n: usize,
    params: &SynthesisParams,
) -> Result<Vec<Episode>, SynthError> {
    (0..n as u64)
        .map(|i| synthesize_episode(env, cam, objects, first_seed + i, params))
        .collect()
}

/// Distance from a task's start to its goal center.
pub fn initial_distance(start: &DroneState, goal: &GoalArea) -> f64 {
    start.position.distance(&goal.center())
}
