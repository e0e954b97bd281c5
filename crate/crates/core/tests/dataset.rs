mod common;

use common::world;
use proptest::prelude::*;
use skynav::attention::render_mask;
use skynav::dataset::{dataset_stats, load_dataset, parse_episode, save_dataset, validate_dataset, BoundsContext};
use skynav::episode::{goal_area, GoalArea, SuccessMode};
use skynav::geometry::WorldPoint;
use skynav::raster::{CameraModel, RasterEnvironment};
use skynav::synth::{sample_task, synthesize_dataset, SynthesisParams};

fn corpus(n: usize) -> Vec<skynav::Episode> {
    let (env, objects) = world();
    synthesize_dataset(env, &CameraModel::default(), objects, 1000, n, &SynthesisParams::default()).unwrap()
}

#[test]
fn save_load_identity() {
    let eps = corpus(60);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eps.jsonl");
    save_dataset(&eps, &path).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), eps);
}

#[test]
fn synthetic_corpus_is_valid_against_the_world() {
    let (env, _) = world();
    let cam = CameraModel::default();
    let eps = corpus(40);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eps.jsonl");
    save_dataset(&eps, &path).unwrap();
    let lookup = |id: &str| (id == env.env_id()).then_some(env.as_ref());
    let ctx = BoundsContext {
        camera: &cam,
        environments: &lookup,
    };
    assert_eq!(validate_dataset(&path, Some(&ctx)).unwrap(), vec![]);
}

#[test]
fn violations_carry_pointers() {
    let (env, _) = world();
    let cam = CameraModel::default();
    let mut eps = corpus(3);
    eps[0].rounds.clear();
    eps[0].sub_trajectories.clear();
    eps[1].sub_trajectories[0].states[1].position = WorldPoint::new(-500.0, 10.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    save_dataset(&eps, &path).unwrap();
    let lookup = |id: &str| (id == env.env_id()).then_some(env.as_ref() as &RasterEnvironment);
    let ctx = BoundsContext {
        camera: &cam,
        environments: &lookup,
    };
    let v = validate_dataset(&path, Some(&ctx)).unwrap();
    assert!(v.iter().any(|e| e.line == 1 && e.pointer == "/rounds"));
    assert!(v.iter().any(|e| e.line == 2 && e.pointer == "/sub_trajectories/0/states/1"));
    assert!(v.iter().all(|e| e.line != 3));
}

#[test]
fn malformed_fields_point_at_the_field() {
    let ep = &corpus(1)[0];
    let mut value = serde_json::to_value(ep).unwrap();
    value["start"]["heading"] = serde_json::json!(400.0);
    let err = parse_episode(7, &value.to_string()).unwrap_err();
    assert_eq!(err.line, 7);
    assert_eq!(err.pointer, "/start/heading");
    value["start"]["heading"] = serde_json::json!(10.0);
    value["rounds"][0]["T"] = serde_json::json!("zero");
    assert_eq!(parse_episode(1, &value.to_string()).unwrap_err().pointer, "/rounds/0/T");
}

#[test]
fn recorded_success_and_goal_rule() {
    let cam = CameraModel::default();
    for ep in corpus(50) {
        assert!(ep.is_recorded_successful());
        let last = ep.final_state().unwrap().view(&cam).unwrap();
        assert!(skynav::check_success(&last, &ep.destination, SuccessMode::Claim));
        let m = ep.round_count();
        assert_eq!(goal_area(&ep, m - 1, &cam).unwrap(), GoalArea::Destination(ep.destination));
        for i in 0..m - 1 {
            assert!(ep.rounds[i].follower.is_some());
            assert!(!ep.rounds[i + 1].commander.is_empty());
        }
    }
}

#[test]
fn stats_follow_the_generator() {
    let params = SynthesisParams::default();
    let eps = corpus(300);
    let stats = dataset_stats(&eps);
    assert_eq!(stats.overall.dialogs, 300);
    assert!((stats.overall.mean_rounds_per_dialog - params.expected_rounds()).abs() < 0.15);
    let mean_dest = eps.iter().map(|e| e.destination.mean_side()).sum::<f64>() / 300.0;
    assert!((stats.overall.mean_destination_dim - mean_dest).abs() < 1e-9);
}

#[test]
fn attended_fraction_near_one_seventh() {
    let cam = CameraModel::default();
    let eps = corpus(30);
    let mut total = 0.0;
    let mut n = 0usize;
    for ep in &eps {
        for s in ep.full_trajectory() {
            let v = s.view(&cam).unwrap();
            total += render_mask(&ep.attention_clicks, &v, 64).attended_fraction();
            n += 1;
        }
    }
    let mean = total / n as f64;
    assert!((mean - 1.0 / 7.0).abs() < 0.05, "mean attended fraction {mean}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn sampler_never_starts_successful(seed in any::<u64>()) {
        let (env, objects) = world();
        let cam = CameraModel::default();
        let (s, dest) = sample_task(env, &cam, objects, seed).unwrap();
        let v = s.view(&cam).unwrap();
        prop_assert!(!skynav::check_success(&v, &dest, SuccessMode::Claim));
        prop_assert!(!skynav::check_success(&v, &dest, SuccessMode::Eval));
        prop_assert!(s.position.distance(&dest.center()) <= skynav::synth::MAX_TASK_DISTANCE);
    }
}
