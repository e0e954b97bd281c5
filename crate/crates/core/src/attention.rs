//! Follower attention records, mask rasterization and the normalized
//! scanpath saliency score.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ViewArea, WorldPoint};
use crate::raster::{frame_to_pixel, pixel_to_frame};

/// Click disk radius as a fraction of the view width at click time.
pub const CLICK_RADIUS_FRACTION: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttentionError {
    #[error("ground-truth mask has no attended pixels")]
    EmptyGroundTruth,
    #[error("shape mismatch: saliency {0}x{1}, mask {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionClick {
    #[serde(flatten)]
    pub world_point: WorldPoint,
    pub width_at_click: f64,
}

impl AttentionClick {
    pub fn new(world_point: WorldPoint, width_at_click: f64) -> Self {
        Self {
            world_point,
            width_at_click,
        }
    }

    pub fn radius(&self) -> f64 {
        self.width_at_click * CLICK_RADIUS_FRACTION
    }

    pub fn covers(&self, p: &WorldPoint) -> bool {
        self.world_point.distance(p) <= self.radius()
    }

    /// Click at observation pixel `(px, py)` of `view`.
    pub fn from_pixel(view: &ViewArea, resolution: u32, px: f64, py: f64) -> Self {
        let (right, forward) = pixel_to_frame(view, resolution, px, py);
        Self::new(view.frame_to_world(right, forward), view.width)
    }
}

/// Row-major 2-D grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, AttentionError> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(AttentionError::InvalidGrid(format!(
                "{rows}x{cols} with {} values",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, AttentionError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(AttentionError::InvalidGrid("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.cols + col] = value;
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }
}

pub type SaliencyMap = Grid<f64>;

/// Binary attention mask aligned with an observation of `view`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask {
    pub grid: Grid<bool>,
    pub view: ViewArea,
}

impl AttentionMask {
    pub fn attended_count(&self) -> usize {
        self.grid.values().iter().filter(|&&b| b).count()
    }

    pub fn attended_fraction(&self) -> f64 {
        self.attended_count() as f64 / self.grid.values().len() as f64
    }

    pub fn as_f64(&self) -> Grid<f64> {
        Grid {
            rows: self.grid.rows,
            cols: self.grid.cols,
            data: self.grid.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Union of all click disks intersected with the view, rasterized at the
/// observation resolution. Clicks from any time step are retained.
pub fn render_mask(clicks: &[AttentionClick], view: &ViewArea, resolution: u32) -> AttentionMask {
    let r = resolution as usize;
    let mut grid = Grid::filled(r, r, false);
    let reach = view.width * std::f64::consts::FRAC_1_SQRT_2;
    for click in clicks {
        let radius = click.radius();
        if click.world_point.distance(&view.center) > reach + radius {
            continue;
        }
        // pixel bounding box of the disk in the view frame
        let (cr, cf) = view.world_to_frame(&click.world_point);
        let (pc, pr) = frame_to_pixel(view, resolution, cr, cf);
        let rad_px = radius / view.width * resolution as f64;
        let lo_c = (pc - rad_px).floor().max(0.0) as usize;
        let hi_c = ((pc + rad_px).ceil().max(0.0) as usize).min(r - 1);
        let lo_r = (pr - rad_px).floor().max(0.0) as usize;
        let hi_r = ((pr + rad_px).ceil().max(0.0) as usize).min(r - 1);
        if pc + rad_px < 0.0 || pr + rad_px < 0.0 {
            continue;
        }
        for row in lo_r..=hi_r {
            for col in lo_c..=hi_c {
                if grid.get(row, col) {
                    continue;
                }
                let (fr, ff) = pixel_to_frame(view, resolution, col as f64, row as f64);
                let world = view.frame_to_world(fr, ff);
                if click.covers(&world) {
                    grid.set(row, col, true);
                }
            }
        }
    }
    AttentionMask { grid, view: *view }
}

/// Removes every click whose disk contains `p`.
pub fn remove_click(clicks: &[AttentionClick], p: &WorldPoint) -> Vec<AttentionClick> {
    clicks.iter().copied().filter(|c| !c.covers(p)).collect()
}

/// Mean of the standardized saliency over attended pixels. A constant
/// saliency map scores 0.
pub fn nss(saliency: &SaliencyMap, mask: &Grid<bool>) -> Result<f64, AttentionError> {
    if saliency.rows() != mask.rows() || saliency.cols() != mask.cols() {
        return Err(AttentionError::ShapeMismatch(
            saliency.rows(),
            saliency.cols(),
            mask.rows(),
            mask.cols(),
        ));
    }
    let attended = mask.values().iter().filter(|&&b| b).count();
    if attended == 0 {
        return Err(AttentionError::EmptyGroundTruth);
    }
    let values = saliency.values();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sigma = var.sqrt();
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if sigma <= 1e-12 * scale {
        return Ok(0.0);
    }
    let total: f64 = values
        .iter()
        .zip(mask.values())
        .filter(|(_, &q)| q)
        .map(|(p, _)| (p - mean) / sigma)
        .sum();
    Ok(total / attended as f64)
}
