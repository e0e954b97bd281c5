//! Session state machine and wire schema between agents and the simulator.
//!
//! Messages are JSON objects tagged by `type`. Over byte streams each
//! message is framed by a 4-byte big-endian length.

use std::collections::{BTreeMap, VecDeque};
use std::io::{self, Read, Write};
use std::sync::Arc;

use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::{remove_click, AttentionClick};
use crate::dynamics::{apply_key, apply_waypoint, waypoint_to, ControlConfig, DroneState, DynamicsError, KeyCommand, Waypoint};
use crate::episode::{
    auto_instruction, path_length, AutoInstruction, DialogRound, Episode, GoalArea, Split, SubTrajectory, SuccessMode,
    TaskInstance, ASK_HINT_MESSAGE, SUCCESS_MESSAGE,
};
use crate::geometry::{AxisRect, ViewArea};
use crate::raster::{observe, CameraModel, RasterEnvironment, Sampling, DEFAULT_RESOLUTION};

pub const DEFAULT_MAX_STEPS: usize = 200;
pub const MAX_FRAME_LEN: u32 = 64 << 20;

pub const DEFAULT_SHORTCUT_QUESTIONS: [&str; 2] = ["could you further explain it?", "where should I go?"];

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("{message} not allowed in phase {phase:?}")]
    ProtocolViolation { phase: Phase, message: String },
    #[error("replay diverged at step {step}: center off by {deviation} m")]
    ReplayDivergence { step: usize, deviation: f64 },
    #[error("frame of {0} bytes exceeds the limit")]
    FrameTooLarge(u32),
    #[error("malformed message: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("session setup: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingInstruction,
    Navigating,
    AwaitingAnswer,
    Claimed,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum AgentMessage {
    Key { key: KeyCommand },
    Waypoint { x: f64, y: f64, h: f64 },
    Question { text: String },
    Claim {},
    AttentionClick { px: f64, py: f64 },
    AttentionRemove { px: f64, py: f64 },
}

impl AgentMessage {
    fn name(&self) -> &'static str {
        match self {
            AgentMessage::Key { .. } => "Key",
            AgentMessage::Waypoint { .. } => "Waypoint",
            AgentMessage::Question { .. } => "Question",
            AgentMessage::Claim {} => "Claim",
            AgentMessage::AttentionClick { .. } => "AttentionClick",
            AgentMessage::AttentionRemove { .. } => "AttentionRemove",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Commander,
    Follower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndMetrics {
    pub steps: usize,
    pub path_length: f64,
    pub goal_distance_final: f64,
    pub goal_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum SimMessage {
    Observation {
        image_ref: String,
        compass_deg: f64,
        altitude_m: f64,
        step: usize,
    },
    Dialog {
        role: Role,
        text: String,
    },
    AutoInstruction {
        text: String,
    },
    ActionRejected {
        reason: String,
    },
    EpisodeEnd {
        success: bool,
        metrics: EndMetrics,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImageMode {
    /// `data:image/png;base64,...`
    Inline,
    /// `{prefix}{step}.png`; the PNG is kept by the session.
    Reference { prefix: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    /// Offline: dialog comes from the recorded episode, claims end the task.
    Evaluation,
    /// Live: commander text is delivered from outside, claims get hints.
    Collection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub mode: SessionMode,
    pub image_mode: ImageMode,
    pub resolution: u32,
    pub sampling: Sampling,
    pub max_steps: usize,
    pub control: ControlConfig,
    pub camera: CameraModel,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            mode: SessionMode::Evaluation,
            image_mode: ImageMode::Inline,
            resolution: DEFAULT_RESOLUTION,
            sampling: Sampling::Bilinear,
            max_steps: DEFAULT_MAX_STEPS,
            control: ControlConfig::default(),
            camera: CameraModel::default(),
        }
    }
}

/// Everything needed to rebuild a session from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSetup {
    pub episode_id: String,
    pub env_id: String,
    pub split: Split,
    pub start: DroneState,
    pub goal: GoalArea,
    /// Object box used for auto-instructions and the saved transcript.
    pub destination: AxisRect,
    /// Dialog shown before the first action (evaluation mode).
    #[serde(default)]
    pub dialog_context: Vec<DialogRound>,
    /// Commander answers replayed to questions (evaluation mode).
    #[serde(default)]
    pub recorded_answers: Vec<String>,
    pub config: SessionConfig,
}

impl SessionSetup {
    /// Offline task: later rounds of the episode answer the agent's
    /// questions.
    pub fn evaluation(task: &TaskInstance, ep: &Episode, config: SessionConfig) -> Self {
        let recorded_answers = ep
            .rounds
            .iter()
            .skip(task.dialog_context.len())
            .map(|r| r.commander.clone())
            .collect();
        Self {
            episode_id: task.episode_id.clone(),
            env_id: task.env_id.clone(),
            split: ep.split,
            start: task.start,
            goal: task.goal,
            destination: ep.destination,
            dialog_context: task.dialog_context.clone(),
            recorded_answers,
            config: SessionConfig {
                mode: SessionMode::Evaluation,
                ..config
            },
        }
    }

    /// Live collection from an episode's start pose and destination.
    pub fn collection(ep: &Episode, config: SessionConfig) -> Self {
        Self {
            episode_id: ep.episode_id.clone(),
            env_id: ep.env_id.clone(),
            split: ep.split,
            start: ep.start,
            goal: GoalArea::Destination(ep.destination),
            destination: ep.destination,
            dialog_context: Vec::new(),
            recorded_answers: Vec::new(),
            config: SessionConfig {
                mode: SessionMode::Collection,
                ..config
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum TraceEntry {
    Agent { message: AgentMessage },
    Commander { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTrace {
    pub setup: SessionSetup,
    pub entries: Vec<TraceEntry>,
}

#[derive(Debug, Clone)]
pub struct Session {
    env: Arc<RasterEnvironment>,
    setup: SessionSetup,
    phase: Phase,
    drone: DroneState,
    step_count: usize,
    rounds: Vec<DialogRound>,
    subs: Vec<SubTrajectory>,
    clicks: Vec<AttentionClick>,
    answers: VecDeque<String>,
    images: BTreeMap<usize, Vec<u8>>,
    trace: Vec<TraceEntry>,
    success: Option<bool>,
    started: bool,
}

impl Session {
    pub fn new(env: Arc<RasterEnvironment>, setup: SessionSetup) -> Result<Self, ProtocolError> {
        if env.env_id() != setup.env_id {
            return Err(ProtocolError::Setup(format!(
                "environment {} does not match {}",
                env.env_id(),
                setup.env_id
            )));
        }
        let cfg = &setup.config;
        cfg.camera.validate().map_err(|e| ProtocolError::Setup(e.to_string()))?;
        cfg.control.validate().map_err(|e| ProtocolError::Setup(e.to_string()))?;
        if cfg.resolution == 0 {
            return Err(ProtocolError::Setup("resolution must be positive".into()));
        }
        if !setup.start.is_valid(&env, &cfg.camera) {
            return Err(ProtocolError::Setup("start pose outside the environment".into()));
        }
        Ok(Self {
            answers: setup.recorded_answers.iter().cloned().collect(),
            drone: setup.start,
            env,
            phase: Phase::AwaitingInstruction,
            step_count: 0,
            rounds: Vec::new(),
            subs: Vec::new(),
            clicks: Vec::new(),
            images: BTreeMap::new(),
            trace: Vec::new(),
            success: None,
            started: false,
            setup,
        })
    }

    pub fn setup(&self) -> &SessionSetup {
        &self.setup
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn drone(&self) -> &DroneState {
        &self.drone
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn rounds(&self) -> &[DialogRound] {
        &self.rounds
    }

    pub fn attention_clicks(&self) -> &[AttentionClick] {
        &self.clicks
    }

    pub fn success(&self) -> Option<bool> {
        self.success
    }

    pub fn env(&self) -> &Arc<RasterEnvironment> {
        &self.env
    }

    pub fn view(&self) -> ViewArea {
        self.drone.view(&self.setup.config.camera).expect("session state is always valid")
    }

    /// PNG of the observation rendered at `step`.
    pub fn observation_png(&self, step: usize) -> Option<&[u8]> {
        self.images.get(&step).map(Vec::as_slice)
    }

    /// Visited states in order, boundary states kept once.
    pub fn trajectory(&self) -> Vec<DroneState> {
        let mut out = vec![self.setup.start];
        for sub in &self.subs {
            out.extend(sub.states.iter().skip(1).copied());
        }
        out
    }

    pub fn trace(&self) -> SessionTrace {
        SessionTrace {
            setup: self.setup.clone(),
            entries: self.trace.clone(),
        }
    }

    /// Opening messages. In evaluation mode the recorded dialog context is
    /// delivered at once and the session starts navigating.
    /// Later calls only repeat the current observation.
    pub fn start(&mut self) -> Vec<SimMessage> {
        let mut out = Vec::new();
        if !self.started && self.setup.config.mode == SessionMode::Evaluation {
            let context = if self.setup.dialog_context.is_empty() {
                vec![DialogRound::new(0, "")]
            } else {
                self.setup.dialog_context.clone()
            };
            for r in &context {
                if !r.commander.is_empty() {
                    out.push(SimMessage::Dialog {
                        role: Role::Commander,
                        text: r.commander.clone(),
                    });
                }
                if let Some(f) = &r.follower {
                    out.push(SimMessage::Dialog {
                        role: Role::Follower,
                        text: f.clone(),
                    });
                }
            }
            self.rounds = context;
            let last = self.rounds.len() - 1;
            self.subs.push(SubTrajectory {
                index: last,
                states: vec![self.drone],
            });
            self.phase = Phase::Navigating;
        }
        self.started = true;
        out.push(self.observation());
        out
    }

    /// Commander text: the initial instruction or an answer to a question.
    pub fn deliver_commander(&mut self, text: &str) -> Result<Vec<SimMessage>, ProtocolError> {
        match self.phase {
            Phase::AwaitingInstruction | Phase::AwaitingAnswer => {}
            phase => {
                return Err(ProtocolError::ProtocolViolation {
                    phase,
                    message: "commander text".into(),
                })
            }
        }
        self.trace.push(TraceEntry::Commander { text: text.to_string() });
        self.begin_round(text);
        Ok(vec![SimMessage::Dialog {
            role: Role::Commander,
            text: text.to_string(),
        }])
    }

    fn begin_round(&mut self, text: &str) {
        let index = self.rounds.len();
        self.rounds.push(DialogRound::new(index, text));
        self.subs.push(SubTrajectory {
            index,
            states: vec![self.drone],
        });
        self.phase = Phase::Navigating;
    }

    fn observation(&mut self) -> SimMessage {
        let cfg = &self.setup.config;
        let view = self.view();
        let obs = observe(&self.env, &view, cfg.resolution, cfg.sampling).expect("session views stay in bounds");
        let png = obs.to_png();
        let image_ref = match &cfg.image_mode {
            ImageMode::Inline => format!(
                "data:image/png;base64,{}",
                base64::engine::general_purpose::STANDARD.encode(&png)
            ),
            ImageMode::Reference { prefix } => format!("{prefix}{}.png", self.step_count),
        };
        self.images.insert(self.step_count, png);
        SimMessage::Observation {
            image_ref,
            compass_deg: self.drone.heading.degrees(),
            altitude_m: self.drone.altitude,
            step: self.step_count,
        }
    }

    fn end_metrics(&self) -> EndMetrics {
        let goal = self.setup.goal;
        EndMetrics {
            steps: self.step_count,
            path_length: path_length(&self.trajectory()),
            goal_distance_final: self.drone.position.distance(&goal.center()),
            goal_iou: goal.iou(&self.view()),
        }
    }

    fn end(&mut self, success: bool) -> SimMessage {
        self.phase = Phase::Done;
        self.success = Some(success);
        SimMessage::EpisodeEnd {
            success,
            metrics: self.end_metrics(),
        }
    }

    fn push_auto(&mut self, text: &str) -> SimMessage {
        if let Some(r) = self.rounds.last_mut() {
            r.auto_instructions.push(text.to_string());
        }
        SimMessage::AutoInstruction { text: text.to_string() }
    }

    /// Ends the session early without success.
    pub fn abort(&mut self) -> Vec<SimMessage> {
        if self.phase == Phase::Done {
            return Vec::new();
        }
        vec![self.end(false)]
    }

    pub fn step(&mut self, msg: AgentMessage) -> Result<Vec<SimMessage>, ProtocolError> {
        let allowed = match (&self.phase, &msg) {
            (Phase::Navigating, _) => true,
            // the ask hint leaves the follower in AwaitingAnswer before it
            // has phrased its question
            (Phase::AwaitingAnswer, AgentMessage::Question { .. }) => {
                self.rounds.last().is_some_and(|r| r.follower.is_none())
            }
            _ => false,
        };
        if !allowed {
            return Err(ProtocolError::ProtocolViolation {
                phase: self.phase,
                message: msg.name().into(),
            });
        }
        self.trace.push(TraceEntry::Agent { message: msg.clone() });
        let cfg = self.setup.config.clone();
        let out = match msg {
            AgentMessage::Key { key } => {
                let next = apply_key(&self.env, &cfg.camera, &cfg.control, &self.drone, key);
                self.apply_move(next)
            }
            AgentMessage::Waypoint { x, y, h } => {
                let next = apply_waypoint(&self.env, &cfg.camera, &self.drone, &Waypoint::new(x, y, h));
                self.apply_move(next)
            }
            AgentMessage::Question { text } => self.question(text),
            AgentMessage::Claim {} => self.claim(),
            AgentMessage::AttentionClick { px, py } => match self.check_pixel(px, py) {
                Err(m) => vec![m],
                Ok(()) => {
                    let click = AttentionClick::from_pixel(&self.view(), cfg.resolution, px, py);
                    self.clicks.push(click);
                    vec![self.observation()]
                }
            },
            AgentMessage::AttentionRemove { px, py } => match self.check_pixel(px, py) {
                Err(m) => vec![m],
                Ok(()) => {
                    let p = AttentionClick::from_pixel(&self.view(), cfg.resolution, px, py).world_point;
                    self.clicks = remove_click(&self.clicks, &p);
                    vec![self.observation()]
                }
            },
        };
        Ok(out)
    }

    fn check_pixel(&self, px: f64, py: f64) -> Result<(), SimMessage> {
        let r = self.setup.config.resolution as f64;
        if (0.0..r).contains(&px) && (0.0..r).contains(&py) {
            Ok(())
        } else {
            Err(SimMessage::ActionRejected {
                reason: format!("pixel ({px}, {py}) outside the {r}x{r} observation"),
            })
        }
    }

    fn apply_move(&mut self, next: Result<DroneState, DynamicsError>) -> Vec<SimMessage> {
        match next {
            Err(e) => vec![SimMessage::ActionRejected { reason: e.to_string() }],
            Ok(s) => {
                self.drone = s;
                self.step_count += 1;
                if let Some(sub) = self.subs.last_mut() {
                    sub.states.push(s);
                }
                if self.step_count >= self.setup.config.max_steps {
                    vec![self.end(false)]
                } else {
                    vec![self.observation()]
                }
            }
        }
    }

    fn question(&mut self, text: String) -> Vec<SimMessage> {
        match self.setup.config.mode {
            SessionMode::Evaluation => {
                let Some(answer) = self.answers.pop_front() else {
                    return vec![SimMessage::ActionRejected {
                        reason: "no recorded answer left for this task".into(),
                    }];
                };
                if let Some(r) = self.rounds.last_mut() {
                    r.follower = Some(text);
                }
                self.phase = Phase::AwaitingAnswer;
                self.begin_round(&answer);
                vec![SimMessage::Dialog {
                    role: Role::Commander,
                    text: answer,
                }]
            }
            SessionMode::Collection => {
                if let Some(r) = self.rounds.last_mut() {
                    r.follower = Some(text);
                }
                self.phase = Phase::AwaitingAnswer;
                Vec::new()
            }
        }
    }

    fn claim(&mut self) -> Vec<SimMessage> {
        self.phase = Phase::Claimed;
        let view = self.view();
        match self.setup.config.mode {
            SessionMode::Evaluation => {
                let success = self.setup.goal.is_reached(&view, SuccessMode::Eval);
                let mut out = Vec::new();
                if success {
                    out.push(self.push_auto(SUCCESS_MESSAGE));
                }
                out.push(self.end(success));
                out
            }
            SessionMode::Collection => match auto_instruction(&view, &self.setup.destination) {
                AutoInstruction::Success { message } => {
                    let m = self.push_auto(&message);
                    vec![m, self.end(true)]
                }
                AutoInstruction::AltitudeHint { message, .. } => {
                    self.phase = Phase::Navigating;
                    vec![self.push_auto(&message)]
                }
                AutoInstruction::None => {
                    self.phase = Phase::AwaitingAnswer;
                    vec![self.push_auto(ASK_HINT_MESSAGE)]
                }
            },
        }
    }

    /// Transcript as a dataset episode. Collection sessions yield
    /// schema-valid episodes once at least one round has started.
    pub fn to_episode(&self) -> Episode {
        Episode {
            episode_id: self.setup.episode_id.clone(),
            env_id: self.setup.env_id.clone(),
            split: self.setup.split,
            start: self.setup.start,
            destination: self.setup.destination,
            rounds: self.rounds.clone(),
            sub_trajectories: self.subs.clone(),
            attention_clicks: self.clicks.clone(),
        }
    }
}

/// Re-executes a trace and returns every message the session produced.
pub fn replay(env: Arc<RasterEnvironment>, trace: &SessionTrace) -> Result<Vec<SimMessage>, ProtocolError> {
    let mut session = Session::new(env, trace.setup.clone())?;
    let mut out = session.start();
    for entry in &trace.entries {
        match entry {
            TraceEntry::Agent { message } => out.extend(session.step(message.clone())?),
            TraceEntry::Commander { text } => out.extend(session.deliver_commander(text)?),
        }
    }
    Ok(out)
}

pub fn shortcut_questions(custom: Option<&[String]>) -> Vec<String> {
    match custom {
        Some(list) => list.to_vec(),
        None => DEFAULT_SHORTCUT_QUESTIONS.iter().map(|s| s.to_string()).collect(),
    }
}

pub fn write_frame<W: Write, T: Serialize>(w: &mut W, msg: &T) -> Result<(), ProtocolError> {
    let body = serde_json::to_vec(msg)?;
    let len = u32::try_from(body.len()).map_err(|_| ProtocolError::FrameTooLarge(u32::MAX))?;
    if len > MAX_FRAME_LEN {
        return Err(ProtocolError::FrameTooLarge(len));
    }
    w.write_all(&len.to_be_bytes())?;
    w.write_all(&body)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `None` on a clean end of stream.
pub fn read_frame<R: Read, T: DeserializeOwned>(r: &mut R) -> Result<Option<T>, ProtocolError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME_LEN {
        return Err(ProtocolError::FrameTooLarge(len));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    Ok(Some(serde_json::from_slice(&body)?))
}

/// What an agent may look at when choosing its next message.
pub struct AgentContext<'a> {
    pub drone: &'a DroneState,
    pub phase: Phase,
    pub step: usize,
    /// Messages produced in reply to the previous action.
    pub last: &'a [SimMessage],
}

pub trait Agent {
    /// `None` gives up on the episode.
    fn act(&mut self, ctx: &AgentContext<'_>) -> Result<Option<AgentMessage>, ProtocolError>;
}

/// Replays recorded states, then claims. Pure rotations are replayed as
/// keys, everything else as waypoints.
pub struct OracleAgent {
    states: Vec<DroneState>,
    next: usize,
    camera: CameraModel,
    control: ControlConfig,
    env: Arc<RasterEnvironment>,
}

pub fn oracle_agent(env: Arc<RasterEnvironment>, reference: &[DroneState], config: &SessionConfig) -> OracleAgent {
    OracleAgent {
        states: reference.to_vec(),
        next: 1,
        camera: config.camera,
        control: config.control,
        env,
    }
}

pub const REPLAY_TOLERANCE: f64 = 1e-6;

impl Agent for OracleAgent {
    fn act(&mut self, ctx: &AgentContext<'_>) -> Result<Option<AgentMessage>, ProtocolError> {
        if let Some(expected) = self.states.get(self.next - 1) {
            let deviation = ctx.drone.position.distance(&expected.position);
            if deviation > REPLAY_TOLERANCE {
                return Err(ProtocolError::ReplayDivergence {
                    step: self.next - 1,
                    deviation,
                });
            }
        }
        let Some(target) = self.states.get(self.next).copied() else {
            return Ok(Some(AgentMessage::Claim {}));
        };
        self.next += 1;
        let key = KeyCommand::ALL.into_iter().find(|k| {
            apply_key(&self.env, &self.camera, &self.control, ctx.drone, *k).is_ok_and(|s| same_state(&s, &target))
        });
        if let Some(key) = key {
            return Ok(Some(AgentMessage::Key { key }));
        }
        match waypoint_to(&self.camera, ctx.drone, &target.position, target.altitude) {
            Some(w) => Ok(Some(AgentMessage::Waypoint { x: w.x, y: w.y, h: w.h })),
            None => Err(ProtocolError::ReplayDivergence {
                step: self.next - 1,
                deviation: ctx.drone.position.distance(&target.position),
            }),
        }
    }
}

fn same_state(a: &DroneState, b: &DroneState) -> bool {
    a.position.distance(&b.position) <= REPLAY_TOLERANCE
        && a.heading.angle_to(b.heading) <= 1e-6
        && (a.altitude - b.altitude).abs() <= 1e-6
}

/// Uniform random waypoints, then a claim after `k ~ U{5..30}` actions.
pub struct RandomAgent {
    rng: ChaCha8Rng,
    remaining: usize,
    camera: CameraModel,
}

pub fn random_agent(seed: u64, camera: &CameraModel) -> RandomAgent {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let remaining = rng.random_range(5..=30);
    RandomAgent {
        rng,
        remaining,
        camera: *camera,
    }
}

impl Agent for RandomAgent {
    fn act(&mut self, _ctx: &AgentContext<'_>) -> Result<Option<AgentMessage>, ProtocolError> {
        if self.remaining == 0 {
            return Ok(Some(AgentMessage::Claim {}));
        }
        self.remaining -= 1;
        Ok(Some(AgentMessage::Waypoint {
            x: self.rng.random_range(0.0..=1.0),
            y: self.rng.random_range(0.0..=1.0),
            h: self.rng.random_range(self.camera.min_altitude..=self.camera.max_altitude),
        }))
    }
}

pub struct StationaryAgent;

pub fn stationary_agent() -> StationaryAgent {
    StationaryAgent
}

impl Agent for StationaryAgent {
    fn act(&mut self, _ctx: &AgentContext<'_>) -> Result<Option<AgentMessage>, ProtocolError> {
        Ok(Some(AgentMessage::Claim {}))
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub success: bool,
    pub states: Vec<DroneState>,
    pub messages: Vec<SimMessage>,
    pub trace: SessionTrace,
}

/// Drives a session with an agent until the episode ends. Protocol
/// violations by the agent end the episode as a failure.
pub fn run_agent(session: &mut Session, agent: &mut dyn Agent) -> Result<RunOutcome, ProtocolError> {
    let mut messages = session.start();
    let mut last = messages.clone();
    let budget = session.setup().config.max_steps * 10 + 100;
    let mut turns = 0;
    while session.phase() != Phase::Done {
        turns += 1;
        let action = if turns > budget {
            None
        } else {
            agent.act(&AgentContext {
                drone: session.drone(),
                phase: session.phase(),
                step: session.step_count(),
                last: &last,
            })?
        };
        let reply = match action {
            None => session.abort(),
            Some(msg) => match session.step(msg) {
                Ok(r) => r,
                Err(ProtocolError::ProtocolViolation { .. }) => session.abort(),
                Err(e) => return Err(e),
            },
        };
        messages.extend(reply.iter().cloned());
        last = reply;
    }
    Ok(RunOutcome {
        success: session.success().unwrap_or(false),
        states: session.trajectory(),
        messages,
        trace: session.trace(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Heading, WorldPoint};
    use image::{Rgb, RgbImage};

    fn env() -> Arc<RasterEnvironment> {
        let img = RgbImage::from_fn(400, 400, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, 90]));
        Arc::new(RasterEnvironment::new("grid", img, 1.0).unwrap())
    }

    fn setup(mode: SessionMode) -> SessionSetup {
        let dest = AxisRect::from_center(WorldPoint::new(200.0, 300.0), 40.0, 40.0).unwrap();
        SessionSetup {
            episode_id: "s".into(),
            env_id: "grid".into(),
            split: Split::Train,
            start: DroneState::new(WorldPoint::new(200.0, 200.0), Heading::NORTH, 20.0),
            goal: GoalArea::Destination(dest),
            destination: dest,
            dialog_context: vec![DialogRound::new(0, "fly north to the square")],
            recorded_answers: vec!["a bit further north".into()],
            config: SessionConfig {
                mode,
                resolution: 32,
                ..SessionConfig::default()
            },
        }
    }

    #[test]
    fn center_waypoint_keeps_view() {
        let mut s = Session::new(env(), setup(SessionMode::Evaluation)).unwrap();
        let first = s.start();
        let before = *s.drone();
        let out = s.step(AgentMessage::Waypoint { x: 0.5, y: 0.5, h: 20.0 }).unwrap();
        assert_eq!(*s.drone(), before);
        assert_eq!(out.len(), 1);
        match (&out[0], first.last().unwrap()) {
            (
                SimMessage::Observation { image_ref: a, step, .. },
                SimMessage::Observation { image_ref: b, .. },
            ) => {
                assert_eq!(*step, 1);
                assert_eq!(a, b);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejected_action_keeps_state() {
        let mut s = Session::new(env(), setup(SessionMode::Evaluation)).unwrap();
        s.start();
        let before = *s.drone();
        let out = s.step(AgentMessage::Waypoint { x: 0.5, y: 0.5, h: 500.0 }).unwrap();
        assert!(matches!(out[0], SimMessage::ActionRejected { .. }));
        assert_eq!(*s.drone(), before);
        assert_eq!(s.step_count(), 0);
    }

    #[test]
    fn question_replays_recorded_answer() {
        let mut s = Session::new(env(), setup(SessionMode::Evaluation)).unwrap();
        s.start();
        let out = s.step(AgentMessage::Question { text: "where?".into() }).unwrap();
        assert_eq!(
            out,
            vec![SimMessage::Dialog {
                role: Role::Commander,
                text: "a bit further north".into()
            }]
        );
        assert_eq!(s.phase(), Phase::Navigating);
        let out = s.step(AgentMessage::Question { text: "again?".into() }).unwrap();
        assert!(matches!(out[0], SimMessage::ActionRejected { .. }));
    }

    #[test]
    fn successful_claim_ends_episode() {
        let mut s = Session::new(env(), setup(SessionMode::Collection)).unwrap();
        s.start();
        assert!(s.step(AgentMessage::Claim {}).is_err());
        s.deliver_commander("fly north").unwrap();
        // width 40 at altitude 20; move 100 m north in 2.5-width hops
        for _ in 0..5 {
            s.step(AgentMessage::Waypoint { x: 0.5, y: 1.0, h: 20.0 }).unwrap();
        }
        assert!((s.drone().position.y - 300.0).abs() < 1e-9);
        let out = s.step(AgentMessage::Claim {}).unwrap();
        assert_eq!(
            out[0],
            SimMessage::AutoInstruction {
                text: SUCCESS_MESSAGE.into()
            }
        );
        assert!(matches!(out[1], SimMessage::EpisodeEnd { success: true, .. }));
        assert_eq!(s.phase(), Phase::Done);
        assert!(s.to_episode().is_recorded_successful());
    }

    #[test]
    fn missed_claim_asks_for_question() {
        let mut s = Session::new(env(), setup(SessionMode::Collection)).unwrap();
        s.start();
        s.deliver_commander("fly north").unwrap();
        let out = s.step(AgentMessage::Claim {}).unwrap();
        assert_eq!(out, vec![SimMessage::AutoInstruction { text: ASK_HINT_MESSAGE.into() }]);
        assert_eq!(s.phase(), Phase::AwaitingAnswer);
        assert!(s.step(AgentMessage::Key { key: KeyCommand::Forward }).is_err());
        s.step(AgentMessage::Question { text: "where is it?".into() }).unwrap();
        s.deliver_commander("north").unwrap();
        assert_eq!(s.phase(), Phase::Navigating);
        assert_eq!(s.rounds().len(), 2);
    }

    #[test]
    fn step_limit_ends_episode() {
        let mut st = setup(SessionMode::Evaluation);
        st.config.max_steps = 3;
        let mut s = Session::new(env(), st).unwrap();
        s.start();
        for _ in 0..2 {
            s.step(AgentMessage::Key { key: KeyCommand::RotCw }).unwrap();
        }
        let out = s.step(AgentMessage::Key { key: KeyCommand::RotCw }).unwrap();
        assert!(matches!(out[0], SimMessage::EpisodeEnd { success: false, .. }));
        assert!(s.step(AgentMessage::Claim {}).is_err());
    }

    #[test]
    fn attention_click_bounds() {
        let mut s = Session::new(env(), setup(SessionMode::Evaluation)).unwrap();
        s.start();
        let out = s.step(AgentMessage::AttentionClick { px: 40.0, py: 1.0 }).unwrap();
        assert!(matches!(out[0], SimMessage::ActionRejected { .. }));
        s.step(AgentMessage::AttentionClick { px: 16.0, py: 16.0 }).unwrap();
        assert_eq!(s.attention_clicks().len(), 1);
        s.step(AgentMessage::AttentionRemove { px: 17.0, py: 16.0 }).unwrap();
        assert!(s.attention_clicks().is_empty());
    }

    #[test]
    fn wire_format() {
        let m: AgentMessage = serde_json::from_str(r#"{"type":"Key","key":"rot_cw"}"#).unwrap();
        assert_eq!(m, AgentMessage::Key { key: KeyCommand::RotCw });
        let c: AgentMessage = serde_json::from_str(r#"{"type":"Claim"}"#).unwrap();
        assert_eq!(c, AgentMessage::Claim {});
        let mut buf = Vec::new();
        write_frame(&mut buf, &m).unwrap();
        write_frame(&mut buf, &c).unwrap();
        let body_len = serde_json::to_vec(&m).unwrap().len() as u32;
        assert_eq!(buf[..4], body_len.to_be_bytes());
        let mut r = &buf[..];
        assert_eq!(read_frame::<_, AgentMessage>(&mut r).unwrap(), Some(m));
        assert_eq!(read_frame::<_, AgentMessage>(&mut r).unwrap(), Some(c));
        assert_eq!(read_frame::<_, AgentMessage>(&mut r).unwrap(), None);
    }

    #[test]
    fn shortcuts() {
        let d = shortcut_questions(None);
        assert!(d.contains(&"could you further explain it?".to_string()));
        assert!(d.contains(&"where should I go?".to_string()));
        assert!(shortcut_questions(Some(&[])).is_empty());
    }

    #[test]
    fn random_agent_is_seeded() {
        let cam = CameraModel::default();
        let drone = DroneState::new(WorldPoint::new(200.0, 200.0), Heading::NORTH, 20.0);
        let ctx = AgentContext {
            drone: &drone,
            phase: Phase::Navigating,
            step: 0,
            last: &[],
        };
        let run = |seed| {
            let mut a = random_agent(seed, &cam);
            (0..40).map(|_| a.act(&ctx).unwrap().unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }
}
