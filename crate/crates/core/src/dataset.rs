//! JSON Lines dataset files: one episode per line.
//!
//! Structural problems are reported with the 1-based line number and a JSON
//! pointer into that line's object, e.g. `line 3: /sub_trajectories/0/states/2`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::episode::{check_success, Episode, SuccessMode};
use crate::raster::{in_bounds, CameraModel, RasterEnvironment};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{0}")]
    SchemaViolation(SchemaViolation),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SchemaViolation {
    pub line: usize,
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pointer = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "line {}: {}: {}", self.line, pointer, self.message)
    }
}

/// Environment context for checks that need the raster extent.
pub struct BoundsContext<'a> {
    pub camera: &'a CameraModel,
    pub environments: &'a dyn Fn(&str) -> Option<&'a RasterEnvironment>,
}

fn path_to_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => {}
        }
    }
    out
}

/// Parses a single JSONL line into an episode (structure only).
pub fn parse_episode(line_no: usize, text: &str) -> Result<Episode, SchemaViolation> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize::<_, Episode>(de).map_err(|err| {
        let pointer = path_to_pointer(err.path());
        let inner = err.into_inner();
        SchemaViolation {
            line: line_no,
            pointer,
            message: inner.to_string(),
        }
    })
}

/// Semantic checks on a parsed episode. Bounds are only checked when a
/// context is given.
pub fn validate_episode(line: usize, ep: &Episode, ctx: Option<&BoundsContext<'_>>) -> Vec<SchemaViolation> {
    let mut out = Vec::new();
    let mut err = |pointer: String, message: String| out.push(SchemaViolation { line, pointer, message });

    if ep.episode_id.is_empty() {
        err("/episode_id".into(), "must not be empty".into());
    }
    let m = ep.rounds.len();
    if m == 0 {
        err("/rounds".into(), "an episode needs at least one dialog round (M >= 1)".into());
    }
    if ep.sub_trajectories.len() != m {
        err(
            "/sub_trajectories".into(),
            format!("{} sub-trajectories for {m} rounds", ep.sub_trajectories.len()),
        );
    }
    for (i, round) in ep.rounds.iter().enumerate() {
        if round.index != i {
            err(format!("/rounds/{i}/T"), format!("expected {i}, found {}", round.index));
        }
    }
    if let Some(first) = ep.rounds.first() {
        if first.commander.trim().is_empty() {
            err("/rounds/0/commander".into(), "round 0 needs an initial instruction".into());
        }
    }
    for i in 0..m.saturating_sub(1) {
        if ep.rounds[i].follower.is_some() && ep.rounds[i + 1].commander.trim().is_empty() {
            err(
                format!("/rounds/{}/commander", i + 1),
                format!("question in round {i} has no answer"),
            );
        }
    }
    for (i, sub) in ep.sub_trajectories.iter().enumerate() {
        if sub.index != i {
            err(format!("/sub_trajectories/{i}/T"), format!("expected {i}, found {}", sub.index));
        }
        if sub.states.is_empty() {
            err(format!("/sub_trajectories/{i}/states"), "must contain at least one state".into());
        }
    }
    if let Some(first) = ep.sub_trajectories.first().and_then(|s| s.states.first()) {
        if first != &ep.start {
            err("/sub_trajectories/0/states/0".into(), "does not match start".into());
        }
    }
    for i in 1..ep.sub_trajectories.len() {
        let prev = ep.sub_trajectories[i - 1].states.last();
        let next = ep.sub_trajectories[i].states.first();
        if let (Some(p), Some(n)) = (prev, next) {
            if p.position.distance(&n.position) > 1e-6 {
                err(
                    format!("/sub_trajectories/{i}/states/0"),
                    format!("does not continue from the end of sub-trajectory {}", i - 1),
                );
            }
        }
    }
    for (k, click) in ep.attention_clicks.iter().enumerate() {
        if !(click.width_at_click.is_finite() && click.width_at_click > 0.0) {
            err(format!("/attention_clicks/{k}/width_at_click"), "must be positive".into());
        }
    }

    if let Some(ctx) = ctx {
        let cam = ctx.camera;
        let env = (ctx.environments)(&ep.env_id);
        let Some(env) = env else {
            err("/env_id".into(), format!("unknown environment {:?}", ep.env_id));
            return out;
        };
        let mut check_state = |pointer: String, s: &crate::dynamics::DroneState| match s.view(cam) {
            Err(e) => err(pointer, e.to_string()),
            Ok(v) if !in_bounds(env, &v) => err(pointer, "view area outside the environment".into()),
            Ok(_) => {}
        };
        check_state("/start".into(), &ep.start);
        for (i, sub) in ep.sub_trajectories.iter().enumerate() {
            for (j, s) in sub.states.iter().enumerate() {
                check_state(format!("/sub_trajectories/{i}/states/{j}"), s);
            }
        }
        let extent = env.extent();
        if !(extent.contains(&ep.destination.min) && extent.contains(&ep.destination.max)) {
            err("/destination".into(), "outside the environment".into());
        }
        if ep.is_recorded_successful() {
            if let Some(last) = ep.final_state() {
                if let Ok(v) = last.view(cam) {
                    if !check_success(&v, &ep.destination, SuccessMode::Claim) {
                        let i = ep.sub_trajectories.len() - 1;
                        let j = ep.sub_trajectories[i].states.len() - 1;
                        err(
                            format!("/sub_trajectories/{i}/states/{j}"),
                            "recorded success but the final view does not reach the destination".into(),
                        );
                    }
                }
            }
        }
    } else {
        for (i, sub) in ep.sub_trajectories.iter().enumerate() {
            for (j, s) in sub.states.iter().enumerate() {
                if !(s.altitude.is_finite() && s.altitude > 0.0) {
                    err(format!("/sub_trajectories/{i}/states/{j}/altitude"), "must be positive".into());
                }
            }
        }
    }
    out
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, DatasetError> {
    let file = fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if !line.trim().is_empty() {
            lines.push((i + 1, line));
        }
    }
    Ok(lines)
}

/// Loads a dataset, failing on the first structural or semantic violation.
pub fn load_dataset(path: &Path) -> Result<Vec<Episode>, DatasetError> {
    let mut episodes = Vec::new();
    for (line_no, text) in read_lines(path)? {
        let ep = parse_episode(line_no, &text).map_err(DatasetError::SchemaViolation)?;
        if let Some(v) = validate_episode(line_no, &ep, None).into_iter().next() {
            return Err(DatasetError::SchemaViolation(v));
        }
        episodes.push(ep);
    }
    Ok(episodes)
}

/// Collects every violation in the file instead of stopping at the first.
pub fn validate_dataset(path: &Path, ctx: Option<&BoundsContext<'_>>) -> Result<Vec<SchemaViolation>, DatasetError> {
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    for (line_no, text) in read_lines(path)? {
        match parse_episode(line_no, &text) {
            Ok(ep) => {
                if !seen.insert(ep.episode_id.clone()) {
                    violations.push(SchemaViolation {
                        line: line_no,
                        pointer: "/episode_id".into(),
                        message: format!("duplicate episode id {:?}", ep.episode_id),
                    });
                }
                violations.extend(validate_episode(line_no, &ep, ctx));
            }
            Err(v) => violations.push(v),
        }
    }
    Ok(violations)
}

pub fn episode_to_line(ep: &Episode) -> String {
    serde_json::to_string(ep).expect("episode serialization cannot fail")
}

pub fn save_dataset(episodes: &[Episode], path: &Path) -> Result<(), DatasetError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| DatasetError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for ep in episodes {
        writeln!(file, "{}", episode_to_line(ep)).map_err(io_err)?;
    }
    file.flush().map_err(io_err)
}

/// Appends one episode to a JSONL file, creating it if needed.
pub fn append_episode(ep: &Episode, path: &Path) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err)?;
    writeln!(file, "{}", episode_to_line(ep)).map_err(io_err)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SplitStats {
    pub dialogs: usize,
    pub mean_words_per_dialog: f64,
    pub mean_rounds_per_dialog: f64,
    pub sub_paths: usize,
    pub mean_sub_path_length: f64,
    pub mean_destination_dim: f64,
    pub mean_path_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub overall: SplitStats,
    pub splits: BTreeMap<String, SplitStats>,
}

fn split_stats<'a>(episodes: impl Iterator<Item = &'a Episode>) -> SplitStats {
    let mut s = SplitStats::default();
    let (mut words, mut rounds, mut sub_len, mut dest, mut path) = (0usize, 0usize, 0.0, 0.0, 0.0);
    for ep in episodes {
        s.dialogs += 1;
        words += ep.rounds.iter().map(|r| r.word_count()).sum::<usize>();
        rounds += ep.rounds.len();
        s.sub_paths += ep.sub_trajectories.len();
        sub_len += ep.sub_trajectories.iter().map(|t| t.path_length()).sum::<f64>();
        dest += ep.destination.mean_side();
        path += ep.path_length();
    }
    if s.dialogs > 0 {
        let n = s.dialogs as f64;
        s.mean_words_per_dialog = words as f64 / n;
        s.mean_rounds_per_dialog = rounds as f64 / n;
        s.mean_destination_dim = dest / n;
        s.mean_path_length = path / n;
    }
    if s.sub_paths > 0 {
        s.mean_sub_path_length = sub_len / s.sub_paths as f64;
    }
    s
}

pub fn dataset_stats(episodes: &[Episode]) -> StatsReport {
    let mut splits = BTreeMap::new();
    for split in crate::episode::Split::ALL {
        let stats = split_stats(episodes.iter().filter(|e| e.split == split));
        if stats.dialogs > 0 {
            splits.insert(split.as_str().to_string(), stats);
        }
    }
    StatsReport {
        overall: split_stats(episodes.iter()),
        splits,
    }
}
