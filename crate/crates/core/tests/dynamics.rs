mod common;

use common::world;
use proptest::prelude::*;
use skynav::dynamics::{apply_key, apply_waypoint, ControlConfig, DroneState, KeyCommand, Waypoint};
use skynav::geometry::{bearing, Heading, WorldPoint};
use skynav::raster::CameraModel;

fn arb_state() -> impl Strategy<Value = DroneState> {
    (300.0..1750.0f64, 300.0..1750.0f64, 0.0..360.0f64, 10.0..120.0f64)
        .prop_map(|(x, y, h, a)| DroneState::new(WorldPoint::new(x, y), Heading::new(h), a))
}

fn arb_key() -> impl Strategy<Value = KeyCommand> {
    prop::sample::select(KeyCommand::ALL.to_vec())
}

proptest! {
    #[test]
    fn translations_reverse(s in arb_state(), k in prop::sample::select(vec![
        KeyCommand::Forward, KeyCommand::Back, KeyCommand::Left, KeyCommand::Right,
    ])) {
        let (env, _) = world();
        let (cam, cfg) = (CameraModel::default(), ControlConfig::default());
        if let Ok(a) = apply_key(env, &cam, &cfg, &s, k) {
            if let Ok(b) = apply_key(env, &cam, &cfg, &a, k.inverse()) {
                prop_assert!(b.position.distance(&s.position) < 1e-9);
            }
        }
    }

    #[test]
    fn rejected_keys_leave_input_untouched(s in arb_state(), k in arb_key()) {
        let (env, _) = world();
        let (cam, cfg) = (CameraModel::default(), ControlConfig::default());
        let before = s;
        let r = apply_key(env, &cam, &cfg, &s, k);
        prop_assert_eq!(s, before);
        if let Ok(n) = r {
            prop_assert!(n.is_valid(env, &cam));
        }
    }

    #[test]
    fn waypoint_lands_on_target(s in arb_state(), x in 0.0..=1.0f64, y in 0.0..=1.0f64, h in 10.0..120.0f64) {
        let (env, _) = world();
        let cam = CameraModel::default();
        let view = s.view(&cam).unwrap();
        // frame offsets computed from the heading vectors directly
        let t = s.heading.radians();
        let (right, fwd) = ((x - 0.5) * view.width, (y - 0.5) * view.width);
        let target = WorldPoint::new(
            s.position.x + right * t.cos() + fwd * t.sin(),
            s.position.y - right * t.sin() + fwd * t.cos(),
        );
        if let Ok(n) = apply_waypoint(env, &cam, &s, &Waypoint::new(x, y, h)) {
            prop_assert!(n.position.distance(&target) < 1e-9);
            let w = n.view(&cam).unwrap().width;
            prop_assert!((w - 2.0 * h * 45f64.to_radians().tan()).abs() < 1e-9);
            let moved = s.position.distance(&n.position);
            if moved > 0.5 {
                let b = bearing(&s.position, &n.position).unwrap();
                prop_assert!(b.angle_to(n.heading) < 1e-9);
            } else {
                prop_assert_eq!(n.heading, s.heading);
            }
        }
    }
}
