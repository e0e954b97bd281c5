#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use skynav::geometry::{AxisRect, ViewArea, WorldPoint};
use skynav::raster::RasterEnvironment;
use skynav::synth::fixture_world;

pub fn world() -> &'static (Arc<RasterEnvironment>, Vec<AxisRect>) {
    static WORLD: OnceLock<(Arc<RasterEnvironment>, Vec<AxisRect>)> = OnceLock::new();
    WORLD.get_or_init(|| {
        let (env, objects) = fixture_world().expect("fixture world");
        (Arc::new(env), objects)
    })
}

/// Corners of an oriented square, computed from scratch.
pub fn square_corners(center: WorldPoint, width: f64, heading_deg: f64) -> [(f64, f64); 4] {
    let t = heading_deg.to_radians();
    let f = (t.sin(), t.cos());
    let r = (t.cos(), -t.sin());
    let h = width / 2.0;
    let at = |a: f64, b: f64| (center.x + a * r.0 + b * f.0, center.y + a * r.1 + b * f.1);
    [at(-h, -h), at(h, -h), at(h, h), at(-h, h)]
}

/// Horizontal extent of a convex polygon along the line `y`.
fn scan_interval(poly: &[(f64, f64)], y: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let (ymin, ymax) = (a.1.min(b.1), a.1.max(b.1));
        if y < ymin || y > ymax {
            continue;
        }
        if (b.1 - a.1).abs() < 1e-15 {
            lo = lo.min(a.0.min(b.0));
            hi = hi.max(a.0.max(b.0));
        } else {
            let x = a.0 + (y - a.1) / (b.1 - a.1) * (b.0 - a.0);
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Number of cell centers `x0 + (k + 0.5) * dx`, `k < n`, inside `[a, b]`.
fn count_centers(x0: f64, dx: f64, n: usize, a: f64, b: f64) -> usize {
    if b < a {
        return 0;
    }
    let k0 = ((a - x0) / dx - 0.5).ceil().max(0.0);
    let k1 = ((b - x0) / dx - 0.5).floor().min(n as f64 - 1.0);
    if k1 < k0 {
        0
    } else {
        (k1 - k0) as usize + 1
    }
}

/// Cell-center counts on an `n x n` grid spanning both shapes.
pub struct RasterCounts {
    pub in_square: usize,
    pub in_rect: usize,
    pub both: usize,
    pub cell_area: f64,
}

impl RasterCounts {
    pub fn iou(&self) -> f64 {
        let union = self.in_square + self.in_rect - self.both;
        if union == 0 {
            0.0
        } else {
            self.both as f64 / union as f64
        }
    }

    pub fn intersection_area(&self) -> f64 {
        self.both as f64 * self.cell_area
    }
}

/// IoU by counting cell centers of an `n x n` grid spanning both shapes.
pub fn raster_iou(view: &ViewArea, rect: &AxisRect, n: usize) -> f64 {
    raster_counts(view, rect, n).iou()
}

pub fn raster_counts(view: &ViewArea, rect: &AxisRect, n: usize) -> RasterCounts {
    let sq = square_corners(view.center, view.width, view.rotation.degrees());
    let xs = sq.iter().map(|p| p.0).chain([rect.min.x, rect.max.x]);
    let ys = sq.iter().map(|p| p.1).chain([rect.min.y, rect.max.y]);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let dx = (x1 - x0) / n as f64;
    let dy = (y1 - y0) / n as f64;
    let (mut in_sq, mut in_rect, mut both) = (0usize, 0usize, 0usize);
    for row in 0..n {
        let y = y0 + (row as f64 + 0.5) * dy;
        let rect_row = y >= rect.min.y && y <= rect.max.y;
        if rect_row {
            in_rect += count_centers(x0, dx, n, rect.min.x, rect.max.x);
        }
        if let Some((a, b)) = scan_interval(&sq, y) {
            in_sq += count_centers(x0, dx, n, a, b);
            if rect_row {
                both += count_centers(x0, dx, n, a.max(rect.min.x), b.min(rect.max.x));
            }
        }
    }
    RasterCounts {
        in_square: in_sq,
        in_rect,
        both,
        cell_area: dx * dy,
    }
}

/// Per-pixel point-in-polygon version of [`raster_iou`], for cross-checking.
pub fn raster_iou_brute(view: &ViewArea, rect: &AxisRect, n: usize) -> f64 {
    let sq = square_corners(view.center, view.width, view.rotation.degrees());
    let inside_sq = |x: f64, y: f64| {
        (0..4).all(|i| {
            let (a, b) = (sq[i], sq[(i + 1) % 4]);
            (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0) >= 0.0
        })
    };
    let xs = sq.iter().map(|p| p.0).chain([rect.min.x, rect.max.x]);
    let ys = sq.iter().map(|p| p.1).chain([rect.min.y, rect.max.y]);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let (mut i, mut u) = (0usize, 0usize);
    for row in 0..n {
        for col in 0..n {
            let x = x0 + (col as f64 + 0.5) * (x1 - x0) / n as f64;
            let y = y0 + (row as f64 + 0.5) * (y1 - y0) / n as f64;
            let a = inside_sq(x, y);
            let b = x >= rect.min.x && x <= rect.max.x && y >= rect.min.y && y <= rect.max.y;
            i += (a && b) as usize;
            u += (a || b) as usize;
        }
    }
    if u == 0 {
        0.0
    } else {
        i as f64 / u as f64
    }
}

/// Standardized saliency averaged over attended cells, computed directly.
pub fn nss_oracle(saliency: &[f64], mask: &[bool]) -> f64 {
    let n = saliency.len() as f64;
    let mean = saliency.iter().sum::<f64>() / n;
    let var = saliency.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    let picked: Vec<f64> = saliency.iter().zip(mask).filter(|(_, m)| **m).map(|(v, _)| (v - mean) / sd).collect();
    picked.iter().sum::<f64>() / picked.len() as f64
}
