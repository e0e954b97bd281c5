use proptest::prelude::*;
use skynav::dynamics::{DroneState, Waypoint};
use skynav::episode::{GoalArea, TaskInstance, TaskKind};
use skynav::geometry::{AxisRect, Heading, WorldPoint};
use skynav::metrics::{evaluate_run, goal_progress, nav_loss, spl, success_rate, EpisodeResult, GpMode};
use skynav::raster::CameraModel;

fn task(id: usize, gx: f64, gy: f64) -> TaskInstance {
    TaskInstance {
        kind: TaskKind::AndhFull,
        episode_id: format!("t{id}"),
        env_id: "env".into(),
        round: 0,
        dialog_context: vec![],
        start: DroneState::new(WorldPoint::new(0.0, 0.0), Heading::NORTH, 50.0),
        goal: GoalArea::Destination(AxisRect::from_center(WorldPoint::new(gx, gy), 100.0, 100.0).unwrap()),
        reference: vec![],
    }
}

fn arb_path() -> impl Strategy<Value = Vec<DroneState>> {
    prop::collection::vec((-800.0..800.0f64, -800.0..800.0f64, 10.0..200.0f64), 0..12).prop_map(|pts| {
        let mut v = vec![DroneState::new(WorldPoint::new(0.0, 0.0), Heading::NORTH, 50.0)];
        v.extend(pts.into_iter().map(|(x, y, a)| DroneState::new(WorldPoint::new(x, y), Heading::NORTH, a)));
        v
    })
}

fn arb_run() -> impl Strategy<Value = (Vec<TaskInstance>, Vec<Vec<DroneState>>)> {
    prop::collection::vec(((50.0..700.0f64, -700.0..700.0f64), arb_path()), 1..12).prop_map(|items| {
        let tasks = items.iter().enumerate().map(|(i, ((x, y), _))| task(i, *x, *y)).collect();
        let paths = items.into_iter().map(|(_, p)| p).collect();
        (tasks, paths)
    })
}

proptest! {
    #[test]
    fn spl_bounded_by_sr((tasks, paths) in arb_run()) {
        let cam = CameraModel::default();
        let r = evaluate_run(&tasks, &paths, None, &cam, GpMode::Literal).unwrap();
        prop_assert!(0.0 <= r.spl && r.spl <= r.sr + 1e-12 && r.sr <= 1.0);
        let results: Vec<_> = tasks.iter().zip(&paths)
            .map(|(t, p)| EpisodeResult::score(t.clone(), p.clone(), &cam).unwrap()).collect();
        prop_assert_eq!(success_rate(&results).unwrap(), r.sr);
        prop_assert_eq!(spl(&results).unwrap(), r.spl);
        for res in &results {
            prop_assert!(goal_progress(res, GpMode::DeltaDistance) <= res.initial_distance() + 1e-9);
        }
    }

    #[test]
    fn evaluation_ignores_task_order((tasks, paths) in arb_run(), rot in 0usize..12) {
        let cam = CameraModel::default();
        let a = evaluate_run(&tasks, &paths, None, &cam, GpMode::DeltaDistance).unwrap();
        let k = rot % tasks.len();
        let mut t2 = tasks.clone();
        let mut p2 = paths.clone();
        t2.rotate_left(k);
        p2.rotate_left(k);
        let b = evaluate_run(&t2, &p2, None, &cam, GpMode::DeltaDistance).unwrap();
        prop_assert!((a.sr - b.sr).abs() < 1e-12);
        prop_assert!((a.spl - b.spl).abs() < 1e-12);
        prop_assert!((a.gp - b.gp).abs() < 1e-9);
    }

    #[test]
    fn nav_loss_zero_only_on_match(
        x in 0.0..=1.0f64, y in 0.0..=1.0f64, h in 10.0..500.0f64,
        x2 in 0.0..=1.0f64, y2 in 0.0..=1.0f64, h2 in 10.0..500.0f64,
        g in 0.0..=1.0f64, g2 in 0.0..=1.0f64,
    ) {
        let cam = CameraModel::default();
        let ctx = DroneState::new(WorldPoint::new(1000.0, 1000.0), Heading::new(40.0), 60.0);
        let w = Waypoint::new(x, y, h);
        prop_assert_eq!(nav_loss(&w, &w, g, g, &ctx, &cam).unwrap().total, 0.0);
        let l = nav_loss(&Waypoint::new(x2, y2, h2), &w, g2, g, &ctx, &cam).unwrap();
        prop_assert!(l.total >= 0.0);
        if (x2, y2, h2, g2) != (x, y, h, g) {
            prop_assert!(l.total > 0.0);
        }
    }
}

#[test]
fn straight_success_gp_equals_path_length() {
    let cam = CameraModel::default();
    let t = task(0, 0.0, 300.0);
    let path: Vec<_> = (0..=6)
        .map(|i| DroneState::new(WorldPoint::new(0.0, 50.0 * i as f64), Heading::NORTH, 50.0))
        .collect();
    let r = EpisodeResult::score(t, path, &cam).unwrap();
    assert!(r.success);
    assert!((goal_progress(&r, GpMode::Literal) - 300.0).abs() < 1e-9);
}

#[test]
fn empty_agent_gp_is_minus_initial_distance() {
    let cam = CameraModel::default();
    let tasks: Vec<_> = (0..5).map(|i| task(i, 100.0 + 50.0 * i as f64, 0.0)).collect();
    let paths: Vec<_> = tasks.iter().map(|t| vec![t.start]).collect();
    let r = evaluate_run(&tasks, &paths, None, &cam, GpMode::Literal).unwrap();
    assert_eq!(r.sr, 0.0);
    assert!((r.gp + 200.0).abs() < 1e-9);
    let json = serde_json::to_value(&r).unwrap();
    for key in ["n", "sr", "spl", "gp", "gp_mode", "per_episode"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert_eq!(json["gp_mode"], "literal");
}
