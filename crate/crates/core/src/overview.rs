//! Commander's trajectory overview: the whole map with the start pose,
//! destination box, past trajectory and current view.

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::DroneState;
use crate::episode::Episode;
use crate::geometry::{AxisRect, WorldPoint};
use crate::raster::{CameraModel, RasterEnvironment};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OverviewError {
    #[error("round {round} out of range for {rounds} rounds")]
    IndexOutOfRange { round: usize, rounds: usize },
    #[error("episode has no state for round {0}")]
    MissingState(usize),
    #[error("invalid state: {0}")]
    InvalidState(String),
}

/// Styling for overview renders. Golden images depend on these values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverviewStyle {
    pub max_side: u32,
    pub start_color: [u8; 3],
    pub start_radius: f64,
    pub arrow_length: f64,
    pub destination_color: [u8; 3],
    pub trajectory_color: [u8; 3],
    pub view_color: [u8; 3],
    pub line_width: u32,
    pub dash_on: f64,
    pub dash_off: f64,
}

impl Default for OverviewStyle {
    fn default() -> Self {
        Self {
            max_side: 768,
            start_color: [230, 20, 20],
            start_radius: 5.0,
            arrow_length: 18.0,
            destination_color: [255, 220, 0],
            trajectory_color: [20, 120, 255],
            view_color: [0, 230, 90],
            line_width: 2,
            dash_on: 6.0,
            dash_off: 4.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OverviewRender {
    pub image: RgbImage,
    /// Past trajectory in world coordinates; empty at round 0.
    pub polyline: Vec<WorldPoint>,
    pub current: DroneState,
}

/// Past-trajectory vertices before `round`: sub-trajectories `0..round`
/// joined with shared boundary states kept once.
pub fn past_trajectory(ep: &Episode, round: usize) -> Vec<WorldPoint> {
    let mut out: Vec<WorldPoint> = Vec::new();
    for sub in ep.sub_trajectories.iter().take(round) {
        for (i, s) in sub.states.iter().enumerate() {
            if i == 0 && out.last().is_some_and(|l| l.distance(&s.position) < 1e-9) {
                continue;
            }
            out.push(s.position);
        }
    }
    out
}

/// State at the start of `round`, or the final state when `round == M`.
pub fn state_at_round(ep: &Episode, round: usize) -> Result<DroneState, OverviewError> {
    let m = ep.round_count();
    if round > m {
        return Err(OverviewError::IndexOutOfRange { round, rounds: m });
    }
    if round == 0 {
        return Ok(ep.start);
    }
    ep.sub_trajectories
        .get(round - 1)
        .and_then(|s| s.states.last())
        .copied()
        .ok_or(OverviewError::MissingState(round))
}

struct Canvas {
    image: RgbImage,
    scale: f64,
    env_height: f64,
    mpp: f64,
}

impl Canvas {
    fn to_px(&self, p: &WorldPoint) -> (f64, f64) {
        let col = p.x / self.mpp;
        let row = self.env_height - p.y / self.mpp;
        (col * self.scale, row * self.scale)
    }

    fn dot(&mut self, cx: f64, cy: f64, r: f64, color: [u8; 3]) {
        let (w, h) = (self.image.width() as i64, self.image.height() as i64);
        let x0 = (cx - r).floor().max(0.0) as i64;
        let y0 = (cy - r).floor().max(0.0) as i64;
        let x1 = ((cx + r).ceil() as i64).min(w - 1);
        let y1 = ((cy + r).ceil() as i64).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                if dx * dx + dy * dy <= r * r {
                    self.image.put_pixel(x as u32, y as u32, Rgb(color));
                }
            }
        }
    }

    fn segment(&mut self, a: (f64, f64), b: (f64, f64), width: u32, color: [u8; 3]) {
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let steps = (len * 2.0).ceil().max(1.0) as usize;
        let r = width as f64 / 2.0;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            self.dot(a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t, r, color);
        }
    }

    /// Dashed polyline; the dash phase carries across vertices.
    fn dashed(&mut self, pts: &[(f64, f64)], width: u32, on: f64, off: f64, color: [u8; 3]) {
        let period = on + off;
        let mut phase = 0.0;
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
            let mut s = 0.0;
            while s < len {
                let in_period = phase % period;
                let (drawing, remaining) = if in_period < on {
                    (true, on - in_period)
                } else {
                    (false, period - in_period)
                };
                let e = (s + remaining).min(len);
                if drawing {
                    let p = |t: f64| (a.0 + (b.0 - a.0) * t / len, a.1 + (b.1 - a.1) * t / len);
                    self.segment(p(s), p(e), width, color);
                }
                phase += e - s;
                s = e;
            }
        }
    }

    fn polygon(&mut self, pts: &[(f64, f64)], width: u32, color: [u8; 3]) {
        for i in 0..pts.len() {
            self.segment(pts[i], pts[(i + 1) % pts.len()], width, color);
        }
    }

    fn clamp(&self, p: (f64, f64)) -> (f64, f64) {
        let w = self.image.width() as f64;
        let h = self.image.height() as f64;
        (p.0.clamp(0.0, w - 1.0), p.1.clamp(0.0, h - 1.0))
    }
}

fn rect_px(c: &Canvas, r: &AxisRect) -> Vec<(f64, f64)> {
    r.to_polygon().vertices().iter().map(|p| c.clamp(c.to_px(p))).collect()
}

/// Renders the overview shown to the commander at the start of `round`
/// (`0..=M`).
pub fn render_overview(
    env: &RasterEnvironment,
    ep: &Episode,
    round: usize,
    cam: &CameraModel,
    style: &OverviewStyle,
) -> Result<OverviewRender, OverviewError> {
    let current = state_at_round(ep, round)?;
    let polyline = past_trajectory(ep, round);
    let (w, h) = (env.width_px(), env.height_px());
    let scale = (style.max_side as f64 / w.max(h) as f64).min(1.0);
    let out_w = ((w as f64 * scale).round() as u32).max(1);
    let out_h = ((h as f64 * scale).round() as u32).max(1);
    let image = if out_w == w && out_h == h {
        env.pixels().clone()
    } else {
        imageops::resize(env.pixels(), out_w, out_h, FilterType::Triangle)
    };
    let mut c = Canvas {
        image,
        scale: out_w as f64 / w as f64,
        env_height: h as f64,
        mpp: env.meters_per_pixel(),
    };

    let dest = rect_px(&c, &ep.destination);
    c.polygon(&dest, style.line_width, style.destination_color);

    if polyline.len() >= 2 {
        let pts: Vec<_> = polyline.iter().map(|p| c.clamp(c.to_px(p))).collect();
        c.dashed(&pts, style.line_width, style.dash_on, style.dash_off, style.trajectory_color);
    }

    let view = current.view(cam).map_err(|e| OverviewError::InvalidState(e.to_string()))?;
    let corners: Vec<_> = view.corners().vertices().iter().map(|p| c.clamp(c.to_px(p))).collect();
    c.polygon(&corners, style.line_width, style.view_color);

    let s = c.clamp(c.to_px(&ep.start.position));
    let (fx, fy) = ep.start.heading.forward();
    // image rows grow southward
    let tip = c.clamp((s.0 + fx * style.arrow_length, s.1 - fy * style.arrow_length));
    c.segment(s, tip, style.line_width, style.start_color);
    let back = ep.start.heading.rotated(180.0);
    for side in [-30.0, 30.0] {
        let (bx, by) = back.rotated(side).forward();
        let barb = c.clamp((tip.0 + bx * style.arrow_length * 0.4, tip.1 - by * style.arrow_length * 0.4));
        c.segment(tip, barb, style.line_width, style.start_color);
    }
    c.dot(s.0, s.1, style.start_radius, style.start_color);

    Ok(OverviewRender {
        image: c.image,
        polyline,
        current,
    })
}
