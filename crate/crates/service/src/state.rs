use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use skynav::dataset::{append_episode, load_dataset};
use skynav::episode::{andh_full_task, andh_tasks, Episode, Split};
use skynav::geometry::AxisRect;
use skynav::protocol::{Session, SessionConfig, SessionMode, SessionSetup, SimMessage};
use skynav::raster::{list_bundles, load_bundle, CameraModel, RasterEnvironment};
use skynav::synth::sample_task;

use crate::config::ServiceConfig;
use crate::error::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientRole {
    FollowerUi,
    RemoteAgent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionHandle {
    pub session_id: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub role: ClientRole,
}

/// Body of `POST /sessions`. Either `episode_id`, or `env_id` plus a
/// sampler `seed`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub env_id: Option<String>,
    pub seed: Option<u64>,
    pub episode_id: Option<String>,
    pub role: Option<ClientRole>,
    /// Defaults to collection for the follower UI, evaluation for agents.
    pub mode: Option<SessionMode>,
    /// Evaluation only: run the ANDH task of this round instead of the
    /// full episode.
    pub round: Option<usize>,
}

pub struct EnvEntry {
    pub env: Arc<RasterEnvironment>,
    pub objects: Vec<AxisRect>,
}

pub(crate) struct Live {
    pub session: Session,
    pub persisted: bool,
}

pub struct SessionSlot {
    pub handle: SessionHandle,
    live: Mutex<Live>,
    touched: Mutex<Instant>,
}

impl SessionSlot {
    pub(crate) fn lock(&self) -> MutexGuard<'_, Live> {
        *self.touched.lock().unwrap_or_else(|e| e.into_inner()) = Instant::now();
        self.live.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn idle_since(&self) -> Instant {
        *self.touched.lock().unwrap_or_else(|e| e.into_inner())
    }
}

struct Shared {
    config: ServiceConfig,
    camera: CameraModel,
    envs: BTreeMap<String, EnvEntry>,
    episodes: BTreeMap<String, Episode>,
    sessions: Mutex<HashMap<String, Arc<SessionSlot>>>,
    next_id: AtomicU64,
}

/// Shared service state: immutable environments and episodes plus the
/// session table.
#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    pub fn new(
        config: ServiceConfig,
        envs: Vec<(RasterEnvironment, Vec<AxisRect>)>,
        episodes: Vec<Episode>,
    ) -> Self {
        let envs = envs
            .into_iter()
            .map(|(env, objects)| {
                (
                    env.env_id().to_string(),
                    EnvEntry {
                        env: Arc::new(env),
                        objects,
                    },
                )
            })
            .collect();
        let episodes = episodes.into_iter().map(|e| (e.episode_id.clone(), e)).collect();
        Self(Arc::new(Shared {
            config,
            camera: CameraModel::default(),
            envs,
            episodes,
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }))
    }

    /// Loads every bundle in `env_dir` and the optional dataset.
    pub fn load(config: ServiceConfig) -> Result<Self, ServiceError> {
        let mut envs = Vec::new();
        for id in list_bundles(&config.env_dir)? {
            envs.push(load_bundle(&config.env_dir, &id)?);
        }
        let episodes = match &config.dataset {
            Some(p) => load_dataset(p)?,
            None => Vec::new(),
        };
        tracing::info!("loaded {} environments, {} episodes", envs.len(), episodes.len());
        Ok(Self::new(config, envs, episodes))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.0.config
    }

    pub fn camera(&self) -> &CameraModel {
        &self.0.camera
    }

    pub fn environments(&self) -> impl Iterator<Item = (&String, &EnvEntry)> {
        self.0.envs.iter()
    }

    pub fn env(&self, id: &str) -> Result<&EnvEntry, ServiceError> {
        self.0.envs.get(id).ok_or_else(|| ServiceError::UnknownEnvironment(id.into()))
    }

    pub fn episodes(&self) -> impl Iterator<Item = &Episode> {
        self.0.episodes.values()
    }

    pub fn episode(&self, id: &str) -> Result<&Episode, ServiceError> {
        self.0.episodes.get(id).ok_or_else(|| ServiceError::UnknownEpisode(id.into()))
    }

    fn sessions(&self) -> MutexGuard<'_, HashMap<String, Arc<SessionSlot>>> {
        self.0.sessions.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn session(&self, id: &str) -> Result<Arc<SessionSlot>, ServiceError> {
        self.sessions()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.into()))
    }

    pub fn session_count(&self) -> usize {
        self.sessions().len()
    }

    /// Builds and starts a session. Returns its handle and opening messages.
    pub fn create_session(&self, req: &CreateSession) -> Result<(SessionHandle, Vec<SimMessage>), ServiceError> {
        let role = req.role.unwrap_or(ClientRole::FollowerUi);
        let mode = req.mode.unwrap_or(match role {
            ClientRole::FollowerUi => SessionMode::Collection,
            ClientRole::RemoteAgent => SessionMode::Evaluation,
        });
        let n = self.0.next_id.fetch_add(1, Ordering::Relaxed);
        let session_id = format!("s{n:06}");
        let cfg = SessionConfig {
            image_mode: self.0.config.image_mode(&session_id),
            resolution: self.0.config.resolution,
            max_steps: self.0.config.max_steps,
            camera: self.0.camera,
            ..SessionConfig::default()
        };

        let ep = match (&req.episode_id, &req.env_id) {
            (Some(id), _) => self.episode(id)?.clone(),
            (None, Some(env_id)) => {
                let entry = self.env(env_id)?;
                let seed = req.seed.unwrap_or(0);
                let (start, destination) = sample_task(&entry.env, &self.0.camera, &entry.objects, seed)?;
                Episode {
                    episode_id: format!("{env_id}-seed{seed}"),
                    env_id: env_id.clone(),
                    split: Split::Train,
                    start,
                    destination,
                    rounds: Vec::new(),
                    sub_trajectories: Vec::new(),
                    attention_clicks: Vec::new(),
                }
            }
            (None, None) => return Err(ServiceError::BadRequest("need episode_id or env_id".into())),
        };
        let env = self.env(&ep.env_id)?.env.clone();

        let setup = match mode {
            SessionMode::Collection => SessionSetup::collection(&ep, cfg),
            SessionMode::Evaluation => {
                let task = match req.round {
                    None => andh_full_task(&ep),
                    Some(r) => {
                        let tasks = andh_tasks(&ep, &self.0.camera)
                            .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
                        tasks.into_iter().nth(r).ok_or_else(|| {
                            ServiceError::BadRequest(format!("round {r} out of range for {}", ep.episode_id))
                        })?
                    }
                };
                SessionSetup::evaluation(&task, &ep, cfg)
            }
        };
        let mut session = Session::new(env, setup)?;
        let opening = session.start();

        let handle = SessionHandle {
            session_id: session_id.clone(),
            created_at: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            role,
        };
        let slot = Arc::new(SessionSlot {
            handle: handle.clone(),
            live: Mutex::new(Live {
                session,
                persisted: false,
            }),
            touched: Mutex::new(Instant::now()),
        });
        self.sessions().insert(session_id, slot);
        Ok((handle, opening))
    }

    pub fn remove_session(&self, id: &str) -> Result<(), ServiceError> {
        self.sessions()
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| ServiceError::UnknownSession(id.into()))
    }

    /// Drops sessions idle for longer than `timeout` as of `now`.
    pub fn sweep_idle(&self, now: Instant, timeout: Duration) -> usize {
        let mut sessions = self.sessions();
        let before = sessions.len();
        sessions.retain(|_, slot| now.saturating_duration_since(slot.idle_since()) <= timeout);
        before - sessions.len()
    }

    /// Appends a finished session to the transcript files once.
    pub(crate) fn persist_if_done(&self, live: &mut Live) -> Result<(), ServiceError> {
        let Some(dir) = &self.0.config.transcript_dir else {
            return Ok(());
        };
        if live.persisted || live.session.success().is_none() {
            return Ok(());
        }
        std::fs::create_dir_all(dir)?;
        if live.session.setup().config.mode == SessionMode::Collection && !live.session.rounds().is_empty() {
            append_episode(&live.session.to_episode(), &dir.join("transcripts.jsonl"))?;
        }
        append_line(&dir.join("traces.jsonl"), &live.session.trace())?;
        live.persisted = true;
        Ok(())
    }
}

fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<(), ServiceError> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let line = serde_json::to_string(value).map_err(|e| ServiceError::Worker(e.to_string()))?;
    writeln!(f, "{line}")?;
    Ok(())
}
