mod common;

use common::nss_oracle;
use proptest::prelude::*;
use skynav::attention::{nss, remove_click, render_mask, AttentionClick, Grid};
use skynav::geometry::{Heading, ViewArea, WorldPoint};

fn grid(rows: usize, cols: usize, v: Vec<f64>) -> Grid<f64> {
    Grid::from_vec(rows, cols, v).unwrap()
}

fn mask(rows: usize, cols: usize, v: Vec<bool>) -> Grid<bool> {
    Grid::from_vec(rows, cols, v).unwrap()
}

fn arb_case() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0..5.0f64, n * n),
            prop::collection::vec(any::<bool>(), n * n),
        )
    })
}

proptest! {
    #[test]
    fn nss_matches_oracle((s, m) in arb_case()) {
        let n = (s.len() as f64).sqrt() as usize;
        let r = nss(&grid(n, n, s.clone()), &mask(n, n, m.clone()));
        if m.iter().any(|b| *b) {
            let expected = nss_oracle(&s, &m);
            if expected.is_finite() {
                prop_assert!((r.unwrap() - expected).abs() < 1e-9);
            }
        } else {
            prop_assert!(r.is_err());
        }
    }

    #[test]
    fn nss_affine_invariant((s, m) in arb_case(), a in 0.01..100.0f64, b in -100.0..100.0f64) {
        prop_assume!(m.iter().any(|v| *v));
        let n = (s.len() as f64).sqrt() as usize;
        let base = nss(&grid(n, n, s.clone()), &mask(n, n, m.clone())).unwrap();
        let moved = nss(&grid(n, n, s.iter().map(|v| a * v + b).collect()), &mask(n, n, m)).unwrap();
        prop_assert!((base - moved).abs() < 1e-9);
    }

    #[test]
    fn duplicate_clicks_change_nothing(px in 0.0..64.0f64, py in 0.0..64.0f64) {
        let v = ViewArea::new(WorldPoint::new(100.0, 100.0), 50.0, Heading::new(20.0)).unwrap();
        let c = AttentionClick::from_pixel(&v, 64, px, py);
        let once = render_mask(&[c], &v, 64);
        let twice = render_mask(&[c, c], &v, 64);
        prop_assert_eq!(once.grid, twice.grid);
        prop_assert!(remove_click(&[c, c], &c.world_point).is_empty());
    }
}

#[test]
fn perfect_overlap_closed_form() {
    for (n, k) in [(16usize, 1usize), (16, 5), (100, 37), (49, 48)] {
        let m: Vec<bool> = (0..n).map(|i| i < k).collect();
        let s: Vec<f64> = m.iter().map(|b| *b as u8 as f64).collect();
        let side = (n as f64).sqrt() as usize;
        let (rows, cols) = if side * side == n { (side, side) } else { (1, n) };
        let got = nss(&grid(rows, cols, s), &mask(rows, cols, m)).unwrap();
        assert!((got - (((n - k) as f64) / k as f64).sqrt()).abs() < 1e-6);
    }
}

#[test]
fn centered_click_fraction() {
    let v = ViewArea::new(WorldPoint::new(0.0, 0.0), 100.0, Heading::NORTH).unwrap();
    let m = render_mask(&[AttentionClick::new(WorldPoint::new(0.0, 0.0), 100.0)], &v, 224);
    let expected = std::f64::consts::PI / 100.0;
    assert!((m.attended_fraction() - expected).abs() / expected < 0.05);
}

#[test]
fn clicks_persist_in_world_space() {
    // a click made from a wide view still covers the same ground later
    let wide = ViewArea::new(WorldPoint::new(0.0, 0.0), 200.0, Heading::NORTH).unwrap();
    let c = AttentionClick::from_pixel(&wide, 100, 60.0, 50.0);
    let narrow = ViewArea::new(c.world_point, 40.0, Heading::new(70.0)).unwrap();
    let m = render_mask(&[c], &narrow, 40);
    // radius 20 m covers the whole 40 m view's inscribed disk
    assert!(m.attended_fraction() > 0.75);
}
