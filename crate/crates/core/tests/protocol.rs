mod common;

use common::world;
use skynav::dataset::{episode_to_line, parse_episode, validate_episode, BoundsContext};
use skynav::episode::{andh_full_task, andh_tasks, Episode, SUCCESS_MESSAGE};
use skynav::geometry::{iou, polygon_iou, AxisRect, WorldPoint};
use skynav::protocol::{
    oracle_agent, random_agent, replay, run_agent, stationary_agent, AgentMessage, ImageMode, Phase, ProtocolError,
    Session, SessionConfig, SessionSetup, SessionTrace, SimMessage,
};
use skynav::raster::CameraModel;
use skynav::synth::{sample_task, synthesize_dataset, SynthesisParams};
use skynav::{DroneState, KeyCommand};

fn config() -> SessionConfig {
    SessionConfig {
        resolution: 64,
        ..SessionConfig::default()
    }
}

fn episodes(n: usize, seed: u64) -> Vec<Episode> {
    let (env, objects) = world();
    synthesize_dataset(env, &CameraModel::default(), objects, seed, n, &SynthesisParams::default()).unwrap()
}

#[test]
fn oracle_reproduces_full_episodes() {
    let (env, _) = world();
    for ep in episodes(25, 500) {
        let task = andh_full_task(&ep);
        let mut session = Session::new(env.clone(), SessionSetup::evaluation(&task, &ep, config())).unwrap();
        let mut agent = oracle_agent(env.clone(), &task.reference, &config());
        let out = run_agent(&mut session, &mut agent).unwrap();
        assert!(out.success);
        assert_eq!(out.states.len(), task.reference.len());
        for (a, b) in out.states.iter().zip(&task.reference) {
            assert!(a.position.distance(&b.position) < 1e-6);
        }
        assert!(out.messages.contains(&SimMessage::AutoInstruction {
            text: SUCCESS_MESSAGE.into()
        }));
    }
}

#[test]
fn oracle_solves_every_round() {
    let (env, _) = world();
    let cam = CameraModel::default();
    for ep in episodes(15, 900) {
        for task in andh_tasks(&ep, &cam).unwrap() {
            let mut session = Session::new(env.clone(), SessionSetup::evaluation(&task, &ep, config())).unwrap();
            let mut agent = oracle_agent(env.clone(), &task.reference, &config());
            assert!(run_agent(&mut session, &mut agent).unwrap().success);
        }
    }
}

#[test]
fn truncated_replay_matches_success_oracle() {
    let (env, _) = world();
    let cam = CameraModel::default();
    for ep in &episodes(20, 1300) {
        let task = andh_full_task(ep);
        let cut = &task.reference[..task.reference.len() - 1];
        let mut session = Session::new(env.clone(), SessionSetup::evaluation(&task, ep, config())).unwrap();
        let mut agent = oracle_agent(env.clone(), cut, &config());
        let out = run_agent(&mut session, &mut agent).unwrap();
        // eval-mode rule applied to the last reproduced view, from scratch
        let last = cut.last().unwrap().view(&cam).unwrap();
        let expected = polygon_iou(&last.corners(), &ep.destination.to_polygon()) > 0.4;
        assert_eq!(out.success, expected);

        // stopping where the final round starts never reaches the destination
        let final_start = ep.sub_trajectories.last().unwrap().states[0];
        let upto = task.reference.iter().position(|s| *s == final_start).unwrap();
        let mut session = Session::new(env.clone(), SessionSetup::evaluation(&task, ep, config())).unwrap();
        let mut agent = oracle_agent(env.clone(), &task.reference[..=upto], &config());
        assert!(!run_agent(&mut session, &mut agent).unwrap().success);
    }
}

#[test]
fn oracle_reports_divergence() {
    let (env, _) = world();
    let ep = &episodes(1, 77)[0];
    let task = andh_full_task(ep);
    let mut reference = task.reference.clone();
    reference[0].position = reference[0].position.offset(0.01, 0.0);
    let mut session = Session::new(env.clone(), SessionSetup::evaluation(&task, ep, config())).unwrap();
    let mut agent = oracle_agent(env.clone(), &reference, &config());
    assert!(matches!(
        run_agent(&mut session, &mut agent),
        Err(ProtocolError::ReplayDivergence { step: 0, .. })
    ));
}

#[test]
fn stationary_never_succeeds_on_sampled_tasks() {
    let (env, objects) = world();
    let cam = CameraModel::default();
    for seed in 0..40 {
        let (start, dest) = sample_task(env, &cam, objects, seed).unwrap();
        let ep = Episode {
            episode_id: format!("s{seed}"),
            env_id: env.env_id().into(),
            split: skynav::episode::Split::Train,
            start,
            destination: dest,
            rounds: vec![skynav::episode::DialogRound::new(0, "find the roof")],
            sub_trajectories: vec![skynav::episode::SubTrajectory {
                index: 0,
                states: vec![start],
            }],
            attention_clicks: vec![],
        };
        let task = andh_full_task(&ep);
        let mut session = Session::new(env.clone(), SessionSetup::evaluation(&task, &ep, config())).unwrap();
        let out = run_agent(&mut session, &mut stationary_agent()).unwrap();
        assert!(!out.success);
        assert!(iou(&start.view(&cam).unwrap(), &dest) <= 0.4);
    }
}

fn recorded_trace() -> (SessionTrace, Vec<SimMessage>) {
    let (env, _) = world();
    let ep = &episodes(1, 4242)[0];
    let task = andh_full_task(ep);
    let mut session = Session::new(env.clone(), SessionSetup::evaluation(&task, ep, config())).unwrap();
    let mut msgs = session.start();
    msgs.extend(session.step(AgentMessage::AttentionClick { px: 10.0, py: 20.0 }).unwrap());
    msgs.extend(session.step(AgentMessage::Key { key: KeyCommand::RotCw }).unwrap());
    let mut agent = random_agent(9, &CameraModel::default());
    while session.phase() != Phase::Done {
        let ctx = skynav::protocol::AgentContext {
            drone: session.drone(),
            phase: session.phase(),
            step: session.step_count(),
            last: &[],
        };
        let action = skynav::protocol::Agent::act(&mut agent, &ctx).unwrap().unwrap();
        msgs.extend(session.step(action).unwrap());
    }
    (session.trace(), msgs)
}

#[test]
fn trace_replay_is_byte_identical() {
    let (env, _) = world();
    let (trace, first) = recorded_trace();
    let text = serde_json::to_string(&trace).unwrap();
    let parsed: SessionTrace = serde_json::from_str(&text).unwrap();
    let second = replay(env.clone(), &parsed).unwrap();
    assert_eq!(first, second);
    let images = first
        .iter()
        .filter(|m| matches!(m, SimMessage::Observation { .. }))
        .count();
    assert!(images > 3);
}

#[test]
fn reference_images_are_kept_per_step() {
    let (env, _) = world();
    let ep = &episodes(1, 31)[0];
    let task = andh_full_task(ep);
    let cfg = SessionConfig {
        image_mode: ImageMode::Reference {
            prefix: "/obs/".into(),
        },
        ..config()
    };
    let mut session = Session::new(env.clone(), SessionSetup::evaluation(&task, ep, cfg)).unwrap();
    let first = session.start();
    assert!(matches!(
        first.last(),
        Some(SimMessage::Observation { image_ref, step: 0, .. }) if image_ref == "/obs/0.png"
    ));
    assert!(session.observation_png(0).unwrap().starts_with(b"\x89PNG"));
}

#[test]
fn collection_transcript_is_a_valid_episode() {
    let (env, _) = world();
    let cam = CameraModel::default();
    let ep = &episodes(1, 8)[0];
    let mut session = Session::new(env.clone(), SessionSetup::collection(ep, config())).unwrap();
    session.start();
    assert_eq!(session.phase(), Phase::AwaitingInstruction);
    session.deliver_commander(&ep.rounds[0].commander).unwrap();
    // fly the recorded path with keys where possible, waypoints otherwise
    let mut agent = oracle_agent(env.clone(), &ep.full_trajectory(), &config());
    let out = run_agent(&mut session, &mut agent).unwrap();
    assert!(out.success);
    let transcript = session.to_episode();
    assert!(transcript.is_recorded_successful());
    let lookup = |id: &str| (id == env.env_id()).then_some(env.as_ref());
    let ctx = BoundsContext {
        camera: &cam,
        environments: &lookup,
    };
    assert_eq!(validate_episode(1, &transcript, Some(&ctx)), vec![]);
    assert_eq!(parse_episode(1, &episode_to_line(&transcript)).unwrap(), transcript);
}

#[test]
fn rejected_actions_keep_state() {
    let (env, _) = world();
    let dest = AxisRect::from_center(WorldPoint::new(1000.0, 1000.0), 80.0, 80.0).unwrap();
    // view touching the western border
    let start = DroneState::new(WorldPoint::new(50.0, 900.0), skynav::Heading::new(270.0), 50.0);
    let ep = Episode {
        episode_id: "edge".into(),
        env_id: env.env_id().into(),
        split: skynav::episode::Split::Train,
        start,
        destination: dest,
        rounds: vec![skynav::episode::DialogRound::new(0, "go east")],
        sub_trajectories: vec![skynav::episode::SubTrajectory {
            index: 0,
            states: vec![start],
        }],
        attention_clicks: vec![],
    };
    let task = andh_full_task(&ep);
    let mut session = Session::new(env.clone(), SessionSetup::evaluation(&task, &ep, config())).unwrap();
    session.start();
    let before = format!("{:?}", session.drone());
    let out = session.step(AgentMessage::Key { key: KeyCommand::Forward }).unwrap();
    assert!(matches!(out[..], [SimMessage::ActionRejected { .. }]));
    assert_eq!(format!("{:?}", session.drone()), before);
    assert_eq!(session.step_count(), 0);
}
