//! Georeferenced raster environments and the downward camera model.
//!
//! Pixel `(col, row)` covers the world square
//! `[col·mpp, (col+1)·mpp] × [(H-row-1)·mpp, (H-row)·mpp]`: world `y` grows
//! north while image rows grow south, and the extent starts at the origin.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageFormat, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{AxisRect, Heading, ViewArea, WorldPoint};

pub const DEFAULT_RESOLUTION: u32 = 224;
pub const DEFAULT_METERS_PER_PIXEL: f64 = 0.3;
pub const MIN_RASTER_SIDE: u32 = 64;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("altitude {altitude} m outside camera range [{min}, {max}]")]
    AltitudeOutOfRange { altitude: f64, min: f64, max: f64 },
    #[error("view width {width} m outside camera range [{min}, {max}]")]
    WidthOutOfRange { width: f64, min: f64, max: f64 },
    #[error("view area leaves the environment extent")]
    OutOfBounds,
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
    #[error("invalid synthetic world spec: {0}")]
    InvalidSpec(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("sidecar error on {path}: {source}")]
    Sidecar {
        path: PathBuf,
        source: serde_json::Error,
    },
}

/// Pinhole camera pointing straight down: `width = 2·h·tan(fov/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fov_degrees: f64,
    pub min_altitude: f64,
    pub max_altitude: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            fov_degrees: 90.0,
            min_altitude: 10.0,
            max_altitude: 500.0,
        }
    }
}

impl CameraModel {
    pub fn new(fov_degrees: f64, min_altitude: f64, max_altitude: f64) -> Result<Self, RasterError> {
        let cam = Self {
            fov_degrees,
            min_altitude,
            max_altitude,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), RasterError> {
        if !(self.fov_degrees > 0.0 && self.fov_degrees < 180.0) {
            return Err(RasterError::InvalidCamera(format!(
                "fov {} not in (0, 180)",
                self.fov_degrees
            )));
        }
        if !(self.min_altitude > 0.0 && self.min_altitude < self.max_altitude) {
            return Err(RasterError::InvalidCamera(format!(
                "altitude range [{}, {}]",
                self.min_altitude, self.max_altitude
            )));
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        2.0 * (self.fov_degrees.to_radians() / 2.0).tan()
    }

    pub fn width_from_altitude(&self, altitude: f64) -> Result<f64, RasterError> {
        if !(self.min_altitude..=self.max_altitude).contains(&altitude) {
            return Err(RasterError::AltitudeOutOfRange {
                altitude,
                min: self.min_altitude,
                max: self.max_altitude,
            });
        }
        Ok(altitude * self.scale())
    }

    pub fn altitude_from_width(&self, width: f64) -> Result<f64, RasterError> {
        let (min, max) = (self.min_width(), self.max_width());
        // the range ends are computed, allow their rounding error
        let tol = 1e-9 * max;
        if !(width >= min - tol && width <= max + tol) {
            return Err(RasterError::WidthOutOfRange { width, min, max });
        }
        Ok((width / self.scale()).clamp(self.min_altitude, self.max_altitude))
    }

    pub fn min_width(&self) -> f64 {
        self.min_altitude * self.scale()
    }

    pub fn max_width(&self) -> f64 {
        self.max_altitude * self.scale()
    }

    pub fn clamp_altitude(&self, altitude: f64) -> f64 {
        altitude.clamp(self.min_altitude, self.max_altitude)
    }
}

/// Top-down RGB raster with a uniform ground sampling distance.
#[derive(Debug, Clone)]
pub struct RasterEnvironment {
    env_id: String,
    pixels: RgbImage,
    meters_per_pixel: f64,
}

impl RasterEnvironment {
    pub fn new(env_id: impl Into<String>, pixels: RgbImage, meters_per_pixel: f64) -> Result<Self, RasterError> {
        let env_id = env_id.into();
        if pixels.width() < MIN_RASTER_SIDE || pixels.height() < MIN_RASTER_SIDE {
            return Err(RasterError::InvalidEnvironment(format!(
                "raster {}x{} smaller than {MIN_RASTER_SIDE}px",
                pixels.width(),
                pixels.height()
            )));
        }
        if !(meters_per_pixel.is_finite() && meters_per_pixel > 0.0) {
            return Err(RasterError::InvalidEnvironment(format!(
                "meters_per_pixel {meters_per_pixel}"
            )));
        }
        if env_id.is_empty() {
            return Err(RasterError::InvalidEnvironment("empty env_id".into()));
        }
        Ok(Self {
            env_id,
            pixels,
            meters_per_pixel,
        })
    }

    pub fn env_id(&self) -> &str {
        &self.env_id
    }

    pub fn pixels(&self) -> &RgbImage {
        &self.pixels
    }

    pub fn meters_per_pixel(&self) -> f64 {
        self.meters_per_pixel
    }

    pub fn width_px(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height_px(&self) -> u32 {
        self.pixels.height()
    }

    pub fn extent(&self) -> AxisRect {
        AxisRect {
            min: WorldPoint::new(0.0, 0.0),
            max: WorldPoint::new(
                self.width_px() as f64 * self.meters_per_pixel,
                self.height_px() as f64 * self.meters_per_pixel,
            ),
        }
    }

    /// Continuous pixel coordinate (column, row) of a world point, with pixel
    /// centers at integer positions.
    pub fn world_to_pixel(&self, p: &WorldPoint) -> (f64, f64) {
        (
            p.x / self.meters_per_pixel - 0.5,
            self.height_px() as f64 - p.y / self.meters_per_pixel - 0.5,
        )
    }

    /// World coordinate of a continuous pixel coordinate.
    pub fn pixel_to_world(&self, col: f64, row: f64) -> WorldPoint {
        WorldPoint::new(
            (col + 0.5) * self.meters_per_pixel,
            (self.height_px() as f64 - row - 0.5) * self.meters_per_pixel,
        )
    }

    fn sample(&self, p: &WorldPoint, sampling: Sampling) -> [u8; 3] {
        let (u, v) = self.world_to_pixel(p);
        let max_u = (self.width_px() - 1) as f64;
        let max_v = (self.height_px() - 1) as f64;
        let u = u.clamp(0.0, max_u);
        let v = v.clamp(0.0, max_v);
        match sampling {
            Sampling::Nearest => {
                let px = self.pixels.get_pixel(u.round() as u32, v.round() as u32);
                px.0
            }
            Sampling::Bilinear => {
                let u0 = u.floor();
                let v0 = v.floor();
                let fu = u - u0;
                let fv = v - v0;
                let (u0, v0) = (u0 as u32, v0 as u32);
                let u1 = (u0 + 1).min(self.width_px() - 1);
                let v1 = (v0 + 1).min(self.height_px() - 1);
                let p00 = self.pixels.get_pixel(u0, v0).0;
                let p10 = self.pixels.get_pixel(u1, v0).0;
                let p01 = self.pixels.get_pixel(u0, v1).0;
                let p11 = self.pixels.get_pixel(u1, v1).0;
                let mut out = [0u8; 3];
                for c in 0..3 {
                    let top = p00[c] as f64 * (1.0 - fu) + p10[c] as f64 * fu;
                    let bottom = p01[c] as f64 * (1.0 - fu) + p11[c] as f64 * fu;
                    let val = top * (1.0 - fv) + bottom * fv;
                    out[c] = val.round().clamp(0.0, 255.0) as u8;
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    Bilinear,
    /// Exact-crop mode for tests.
    Nearest,
}

#[derive(Debug, Clone)]
pub struct Observation {
    pub image: RgbImage,
    pub view: ViewArea,
    pub compass: Heading,
}

impl Observation {
    pub fn resolution(&self) -> u32 {
        self.image.width()
    }

    pub fn to_png(&self) -> Vec<u8> {
        encode_png(&self.image)
    }
}

pub fn encode_png(image: &RgbImage) -> Vec<u8> {
    let mut buf = std::io::Cursor::new(Vec::new());
    image
        .write_to(&mut buf, ImageFormat::Png)
        .expect("png encoding into memory cannot fail");
    buf.into_inner()
}

/// True iff all four footprint corners lie inside the (closed) extent.
pub fn in_bounds(env: &RasterEnvironment, view: &ViewArea) -> bool {
    let extent = env.extent();
    let tol = 1e-9;
    view.corners().vertices().iter().all(|c| {
        c.x >= extent.min.x - tol
            && c.x <= extent.max.x + tol
            && c.y >= extent.min.y - tol
            && c.y <= extent.max.y + tol
    })
}

/// Maps output pixel `(col, row)` of an `resolution`-square observation to
/// view-frame offsets `(right, forward)` in meters. Row 0 is the far edge
/// along the heading.
pub fn pixel_to_frame(view: &ViewArea, resolution: u32, col: f64, row: f64) -> (f64, f64) {
    let r = resolution as f64;
    (
        ((col + 0.5) / r - 0.5) * view.width,
        (0.5 - (row + 0.5) / r) * view.width,
    )
}

/// Inverse of [`pixel_to_frame`].
pub fn frame_to_pixel(view: &ViewArea, resolution: u32, right: f64, forward: f64) -> (f64, f64) {
    let r = resolution as f64;
    (
        (right / view.width + 0.5) * r - 0.5,
        (0.5 - forward / view.width) * r - 0.5,
    )
}

pub fn observe(
    env: &RasterEnvironment,
    view: &ViewArea,
    resolution: u32,
    sampling: Sampling,
) -> Result<Observation, RasterError> {
    if !in_bounds(env, view) {
        return Err(RasterError::OutOfBounds);
    }
    let mut image = RgbImage::new(resolution, resolution);
    for row in 0..resolution {
        for col in 0..resolution {
            let (right, forward) = pixel_to_frame(view, resolution, col as f64, row as f64);
            let world = view.frame_to_world(right, forward);
            image.put_pixel(col, row, Rgb(env.sample(&world, sampling)));
        }
    }
    Ok(Observation {
        image,
        view: *view,
        compass: view.rotation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorldSpec {
    pub seed: u64,
    pub size_px: u32,
    pub meters_per_pixel: f64,
    pub object_count: usize,
}

impl Default for SyntheticWorldSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            size_px: 2048,
            meters_per_pixel: DEFAULT_METERS_PER_PIXEL,
            object_count: 20,
        }
    }
}

/// Object box side lengths in meters.
pub const OBJECT_SIDE_RANGE: (f64, f64) = (60.0, 200.0);

/// Deterministic stand-in for satellite imagery: smooth terrain, a road
/// grid, scattered blobs and one roof-like block per destination object.
pub fn generate_synthetic_world(
    spec: &SyntheticWorldSpec,
) -> Result<(RasterEnvironment, Vec<AxisRect>), RasterError> {
    if spec.size_px < MIN_RASTER_SIDE {
        return Err(RasterError::InvalidSpec(format!(
            "size_px {} < {MIN_RASTER_SIDE}",
            spec.size_px
        )));
    }
    if !(spec.meters_per_pixel.is_finite() && spec.meters_per_pixel > 0.0) {
        return Err(RasterError::InvalidSpec(format!(
            "meters_per_pixel {}",
            spec.meters_per_pixel
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.size_px;
    let mpp = spec.meters_per_pixel;
    let side_m = n as f64 * mpp;

    // coarse lattice of random values, bilinearly upsampled
    let cell_m = 150.0;
    let lattice_n = (side_m / cell_m).ceil() as usize + 2;
    let lattice: Vec<[f64; 3]> = (0..lattice_n * lattice_n)
        .map(|_| {
            let base = rng.random_range(0.0..1.0);
            [
                60.0 + 70.0 * base + rng.random_range(0.0..25.0),
                80.0 + 80.0 * base + rng.random_range(0.0..25.0),
                50.0 + 50.0 * base + rng.random_range(0.0..20.0),
            ]
        })
        .collect();

    let mut img = RgbImage::new(n, n);
    for row in 0..n {
        for col in 0..n {
            let x = (col as f64 + 0.5) * mpp / cell_m;
            let y = (n as f64 - row as f64 - 0.5) * mpp / cell_m;
            let (x0, y0) = (x.floor() as usize, y.floor() as usize);
            let (fx, fy) = (x - x0 as f64, y - y0 as f64);
            let at = |i: usize, j: usize| lattice[j * lattice_n + i];
            let mut px = [0u8; 3];
            for (c, out) in px.iter_mut().enumerate() {
                let v = at(x0, y0)[c] * (1.0 - fx) * (1.0 - fy)
                    + at(x0 + 1, y0)[c] * fx * (1.0 - fy)
                    + at(x0, y0 + 1)[c] * (1.0 - fx) * fy
                    + at(x0 + 1, y0 + 1)[c] * fx * fy;
                // fine grain so rotated crops are not flat
                let grain = (((col.wrapping_mul(73) ^ row.wrapping_mul(151)) % 17) as f64) - 8.0;
                *out = (v + grain).clamp(0.0, 255.0) as u8;
            }
            img.put_pixel(col, row, Rgb(px));
        }
    }

    // roads: axis-aligned and one diagonal family
    let road_count = 2 + (side_m / 400.0) as usize;
    for _ in 0..road_count {
        let horizontal = rng.random_bool(0.5);
        let pos_m = rng.random_range(0.0..side_m);
        let half_w = rng.random_range(4.0..10.0);
        fill_where(&mut img, mpp, |wx, wy| {
            let d = if horizontal { (wy - pos_m).abs() } else { (wx - pos_m).abs() };
            d <= half_w
        }, [168, 166, 160]);
    }
    let diag_offset = rng.random_range(-side_m / 2.0..side_m / 2.0);
    fill_where(&mut img, mpp, |wx, wy| {
        ((wy - wx - diag_offset) / std::f64::consts::SQRT_2).abs() <= 6.0
    }, [120, 118, 112]);

    // blobs
    let blob_count = 10 + (side_m * side_m / 40_000.0) as usize;
    for _ in 0..blob_count {
        let cx = rng.random_range(0.0..side_m);
        let cy = rng.random_range(0.0..side_m);
        let r = rng.random_range(8.0..45.0);
        let color = [
            rng.random_range(20..240u8),
            rng.random_range(20..240u8),
            rng.random_range(20..240u8),
        ];
        fill_disk(&mut img, mpp, cx, cy, r, color);
    }

    let mut objects: Vec<AxisRect> = Vec::with_capacity(spec.object_count);
    let (lo, hi) = OBJECT_SIDE_RANGE;
    let mut attempts = 0usize;
    let mut misses = 0usize;
    while objects.len() < spec.object_count {
        attempts += 1;
        // an early large box can block the rest; start over
        if misses > 2_000 {
            objects.clear();
            misses = 0;
        }
        if attempts > 100_000 {
            return Err(RasterError::InvalidSpec(format!(
                "could not place {} disjoint objects in a {side_m:.0} m world",
                spec.object_count
            )));
        }
        let w = rng.random_range(lo..=hi);
        let h = rng.random_range(lo..=hi);
        if w >= side_m || h >= side_m {
            continue;
        }
        let min_x = rng.random_range(0.0..side_m - w);
        let min_y = rng.random_range(0.0..side_m - h);
        let rect = AxisRect {
            min: WorldPoint::new(min_x, min_y),
            max: WorldPoint::new(min_x + w, min_y + h),
        };
        if objects.iter().any(|o| o.intersects(&rect)) {
            misses += 1;
            continue;
        }
        misses = 0;
        objects.push(rect);
    }
    for obj in &objects {
        let roof = [
            rng.random_range(150..250u8),
            rng.random_range(40..120u8),
            rng.random_range(40..200u8),
        ];
        let inset = 3.0;
        fill_rect(&mut img, mpp, obj, [40, 40, 40]);
        let inner = AxisRect {
            min: obj.min.offset(inset, inset),
            max: obj.max.offset(-inset, -inset),
        };
        fill_rect(&mut img, mpp, &inner, roof);
    }

    let env = RasterEnvironment::new(format!("synthetic-{}", spec.seed), img, mpp)?;
    Ok((env, objects))
}

fn fill_where<F: Fn(f64, f64) -> bool>(img: &mut RgbImage, mpp: f64, pred: F, color: [u8; 3]) {
    let n_rows = img.height();
    for (col, row, px) in img.enumerate_pixels_mut() {
        let wx = (col as f64 + 0.5) * mpp;
        let wy = (n_rows as f64 - row as f64 - 0.5) * mpp;
        if pred(wx, wy) {
            *px = Rgb(color);
        }
    }
}

fn fill_rect(img: &mut RgbImage, mpp: f64, rect: &AxisRect, color: [u8; 3]) {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let col_lo = (rect.min.x / mpp - 0.5).ceil().max(0.0) as u32;
    let col_hi = (rect.max.x / mpp - 0.5).floor().min(w - 1.0);
    let row_lo = (h - rect.max.y / mpp - 0.5).ceil().max(0.0) as u32;
    let row_hi = (h - rect.min.y / mpp - 0.5).floor().min(h - 1.0);
    if col_hi < 0.0 || row_hi < 0.0 {
        return;
    }
    for row in row_lo..=row_hi as u32 {
        for col in col_lo..=col_hi as u32 {
            img.put_pixel(col, row, Rgb(color));
        }
    }
}

fn fill_disk(img: &mut RgbImage, mpp: f64, cx: f64, cy: f64, r: f64, color: [u8; 3]) {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let col_lo = ((cx - r) / mpp).floor().max(0.0) as u32;
    let col_hi = ((cx + r) / mpp).ceil().min(w - 1.0).max(0.0) as u32;
    let row_lo = (h - (cy + r) / mpp).floor().max(0.0) as u32;
    let row_hi = (h - (cy - r) / mpp).ceil().min(h - 1.0).max(0.0) as u32;
    for row in row_lo..=row_hi {
        for col in col_lo..=col_hi {
            let wx = (col as f64 + 0.5) * mpp;
            let wy = (h - row as f64 - 0.5) * mpp;
            if (wx - cx).hypot(wy - cy) <= r {
                img.put_pixel(col, row, Rgb(color));
            }
        }
    }
}

/// JSON sidecar stored next to `<env_id>.png`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSidecar {
    pub env_id: String,
    pub meters_per_pixel: f64,
    pub width_px: u32,
    pub height_px: u32,
    pub objects: Vec<AxisRect>,
}

/// Writes `<env_id>.png` and `<env_id>.json` into `dir`.
pub fn save_bundle(env: &RasterEnvironment, objects: &[AxisRect], dir: &Path) -> Result<(), RasterError> {
    fs::create_dir_all(dir).map_err(|source| RasterError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let png_path = dir.join(format!("{}.png", env.env_id()));
    env.pixels()
        .save_with_format(&png_path, ImageFormat::Png)
        .map_err(|source| RasterError::Image {
            path: png_path.clone(),
            source,
        })?;
    let sidecar = EnvSidecar {
        env_id: env.env_id().to_string(),
        meters_per_pixel: env.meters_per_pixel(),
        width_px: env.width_px(),
        height_px: env.height_px(),
        objects: objects.to_vec(),
    };
    let json_path = dir.join(format!("{}.json", env.env_id()));
    let text = serde_json::to_string_pretty(&sidecar).map_err(|source| RasterError::Sidecar {
        path: json_path.clone(),
        source,
    })?;
    fs::write(&json_path, text).map_err(|source| RasterError::Io {
        path: json_path,
        source,
    })
}

pub fn load_bundle(dir: &Path, env_id: &str) -> Result<(RasterEnvironment, Vec<AxisRect>), RasterError> {
    let json_path = dir.join(format!("{env_id}.json"));
    let text = fs::read_to_string(&json_path).map_err(|source| RasterError::Io {
        path: json_path.clone(),
        source,
    })?;
    let sidecar: EnvSidecar = serde_json::from_str(&text).map_err(|source| RasterError::Sidecar {
        path: json_path.clone(),
        source,
    })?;
    let png_path = dir.join(format!("{env_id}.png"));
    let pixels = image::open(&png_path)
        .map_err(|source| RasterError::Image {
            path: png_path.clone(),
            source,
        })?
        .to_rgb8();
    if pixels.width() != sidecar.width_px || pixels.height() != sidecar.height_px {
        return Err(RasterError::InvalidEnvironment(format!(
            "{}: sidecar says {}x{}, image is {}x{}",
            env_id,
            sidecar.width_px,
            sidecar.height_px,
            pixels.width(),
            pixels.height()
        )));
    }
    let env = RasterEnvironment::new(sidecar.env_id, pixels, sidecar.meters_per_pixel)?;
    Ok((env, sidecar.objects))
}

/// Lists env ids that have both a PNG and a JSON sidecar in `dir`.
pub fn list_bundles(dir: &Path) -> Result<Vec<String>, RasterError> {
    let entries = fs::read_dir(dir).map_err(|source| RasterError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut ids = Vec::new();
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if dir.join(format!("{stem}.png")).exists() {
                    ids.push(stem.to_string());
                }
            }
        }
    }
    ids.sort();
    Ok(ids)
}
