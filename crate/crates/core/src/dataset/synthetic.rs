//! Deterministic crowd-like corpus: agents walking along horizontal lanes
//! over a static textured background, with one anomalous agent per test video.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetSplit, Frame, GroundTruth, Mask, VideoSequence, MIN_FRAME_SIDE};
use crate::error::{config_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyType {
    /// Ordinary-looking agent moving `anomaly_speed_multiplier` times faster.
    FastMover,
    /// Agent walking against its lane's direction.
    WrongDirection,
    /// Object twice the usual size.
    LargeObject,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    /// `(height, width)`
    pub resolution: (usize, usize),
    pub n_train_videos: usize,
    pub n_test_videos: usize,
    pub frames_per_video: usize,
    pub agent_count: usize,
    /// Pixels per frame.
    pub normal_speed: f64,
    pub anomaly_type: AnomalyType,
    pub anomaly_speed_multiplier: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            resolution: (64, 64),
            n_train_videos: 8,
            n_test_videos: 4,
            frames_per_video: 60,
            agent_count: 6,
            normal_speed: 1.0,
            anomaly_type: AnomalyType::FastMover,
            anomaly_speed_multiplier: 3.0,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.resolution;
        if h < MIN_FRAME_SIDE.max(16) || w < MIN_FRAME_SIDE.max(16) {
            return Err(config_err!("synthetic resolution {h}x{w} below 16x16"));
        }
        if self.frames_per_video < 2 {
            return Err(config_err!(
                "frames_per_video must be at least 2, got {}",
                self.frames_per_video
            ));
        }
        if !(self.normal_speed > 0.0) || !self.normal_speed.is_finite() {
            return Err(config_err!("normal_speed must be positive, got {}", self.normal_speed));
        }
        if self.anomaly_type == AnomalyType::FastMover && !(self.anomaly_speed_multiplier > 1.0) {
            return Err(config_err!(
                "fast_mover needs anomaly_speed_multiplier > 1, got {}",
                self.anomaly_speed_multiplier
            ));
        }
        Ok(())
    }

    /// Side of a normal agent's square body.
    pub fn agent_size(&self) -> usize {
        let (h, w) = self.resolution;
        (h.min(w) / 10).max(3)
    }
}

/// Analytic description of the anomalous agent in one test video.
///
/// The agent occupies `[x(t), x(t) + size_w) × [top, top + size_h)` with
/// `x(t) = x_enter + velocity · (t - t_start)` for `t >= t_start`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyTrack {
    pub video_id: String,
    pub top: usize,
    pub size_h: usize,
    pub size_w: usize,
    pub x_enter: f64,
    pub velocity: f64,
    pub t_start: usize,
}

impl AnomalyTrack {
    pub fn x_at(&self, t: usize) -> Option<f64> {
        (t >= self.t_start).then(|| self.x_enter + self.velocity * (t - self.t_start) as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub split: DatasetSplit,
    pub anomalies: Vec<AnomalyTrack>,
}

struct Lane {
    top: usize,
    direction: f64,
}

struct Scene {
    height: usize,
    width: usize,
    background: Vec<f32>,
    lanes: Vec<Lane>,
}

const PALETTE: [[f32; 3]; 6] = [
    [40.0, 40.0, 90.0],
    [110.0, 30.0, 30.0],
    [30.0, 80.0, 40.0],
    [20.0, 20.0, 20.0],
    [90.0, 60.0, 20.0],
    [70.0, 20.0, 80.0],
];
const HEAD: [f32; 3] = [225.0, 190.0, 160.0];

struct Agent {
    lane: usize,
    x0: f64,
    velocity: f64,
    color: [f32; 3],
}

fn build_scene(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Scene {
    let (h, w) = spec.resolution;
    // two-octave value noise: coarse bilinear lattice plus fine grain
    let cell = 8usize;
    let gh = h / cell + 2;
    let gw = w / cell + 2;
    let lattice: Vec<[f32; 3]> = (0..gh * gw)
        .map(|_| {
            let base = rng.gen_range(110.0..170.0f32);
            [base - 10.0, base + rng.gen_range(-8.0..8.0f32), base - 25.0]
        })
        .collect();
    let mut background = vec![0.0f32; h * w * 3];
    for y in 0..h {
        let fy = y as f32 / cell as f32;
        let y0 = fy.floor() as usize;
        let ty = fy - y0 as f32;
        for x in 0..w {
            let fx = x as f32 / cell as f32;
            let x0 = fx.floor() as usize;
            let tx = fx - x0 as f32;
            let grain = rng.gen_range(-12.0..12.0f32);
            for c in 0..3 {
                let a = lattice[y0 * gw + x0][c];
                let b = lattice[y0 * gw + x0 + 1][c];
                let d = lattice[(y0 + 1) * gw + x0][c];
                let e = lattice[(y0 + 1) * gw + x0 + 1][c];
                let top = a + (b - a) * tx;
                let bot = d + (e - d) * tx;
                background[(y * w + x) * 3 + c] = (top + (bot - top) * ty + grain).clamp(0.0, 255.0);
            }
        }
    }
    let s = spec.agent_size();
    let pitch = 2 * s;
    let n_lanes = ((h - 2) / pitch).max(1);
    let margin = (h - n_lanes * pitch) / 2 + s / 2;
    let first_dir = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let lanes = (0..n_lanes)
        .map(|k| Lane {
            top: margin + k * pitch,
            direction: if k % 2 == 0 { first_dir } else { -first_dir },
        })
        .collect();
    Scene {
        height: h,
        width: w,
        background,
        lanes,
    }
}

/// Fraction of pixel column `i` covered by `[a, b)`.
fn column_coverage(i: usize, a: f64, b: f64) -> f64 {
    let lo = a.max(i as f64);
    let hi = b.min(i as f64 + 1.0);
    (hi - lo).max(0.0)
}

/// Blends an axis-aligned box with a lighter "head" band onto `canvas`.
fn draw_box(canvas: &mut [f32], scene: &Scene, x: f64, top: usize, size_w: usize, size_h: usize, color: [f32; 3]) {
    let w = scene.width;
    let x_end = x + size_w as f64;
    let c0 = x.floor().max(0.0) as usize;
    let c1 = (x_end.ceil().max(0.0) as usize).min(w);
    let head_rows = (size_h / 3).max(1);
    for row in 0..size_h {
        let y = top + row;
        if y >= scene.height {
            break;
        }
        let col = if row < head_rows { HEAD } else { color };
        for i in c0..c1 {
            let cov = column_coverage(i, x, x_end) as f32;
            if cov <= 0.0 {
                continue;
            }
            let px = &mut canvas[(y * w + i) * 3..(y * w + i) * 3 + 3];
            for c in 0..3 {
                px[c] = px[c] * (1.0 - cov) + col[c] * cov;
            }
        }
    }
}

/// Pixels whose column coverage by the box is at least one half.
fn box_mask(height: usize, width: usize, x: f64, top: usize, size_w: usize, size_h: usize) -> Mask {
    let mut m = Mask::empty(height, width);
    let x_end = x + size_w as f64;
    for y in top..(top + size_h).min(height) {
        for i in 0..width {
            if column_coverage(i, x, x_end) >= 0.5 {
                m.data[y * width + i] = true;
            }
        }
    }
    m
}

fn normal_agents(spec: &SyntheticSpec, scene: &Scene, rng: &mut ChaCha8Rng) -> Vec<Agent> {
    let period = (scene.width + spec.agent_size()) as f64;
    (0..spec.agent_count)
        .map(|i| {
            let lane = i % scene.lanes.len();
            Agent {
                lane,
                x0: rng.gen_range(0.0..period),
                velocity: scene.lanes[lane].direction * spec.normal_speed,
                color: PALETTE[i % PALETTE.len()],
            }
        })
        .collect()
}

fn render_normal(spec: &SyntheticSpec, scene: &Scene, agents: &[Agent], t: usize) -> Vec<f32> {
    let s = spec.agent_size();
    let period = (scene.width + s) as f64;
    let mut canvas = scene.background.clone();
    for a in agents {
        let x = (a.x0 + a.velocity * t as f64).rem_euclid(period) - s as f64;
        draw_box(&mut canvas, scene, x, scene.lanes[a.lane].top, s, s, a.color);
    }
    canvas
}

fn to_frame(video: &str, t: usize, scene: &Scene, canvas: &[f32]) -> Result<Frame> {
    let pixels = canvas.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    Frame::new(video, t, scene.height, scene.width, pixels)
}

fn anomaly_for(spec: &SyntheticSpec, scene: &Scene, video_id: &str, rng: &mut ChaCha8Rng) -> AnomalyTrack {
    let s = spec.agent_size();
    let t_len = spec.frames_per_video;
    let lane = rng.gen_range(0..scene.lanes.len());
    let dir = scene.lanes[lane].direction;
    let lo = t_len / 5;
    let hi = (t_len / 2).max(lo + 1);
    let t_start = rng.gen_range(lo..hi);
    let (size_w, size_h, velocity) = match spec.anomaly_type {
        AnomalyType::FastMover => (s, s, dir * spec.normal_speed * spec.anomaly_speed_multiplier),
        AnomalyType::WrongDirection => (s, s, -dir * spec.normal_speed),
        AnomalyType::LargeObject => (2 * s, 2 * s, dir * spec.normal_speed),
    };
    let top = scene.lanes[lane].top.min(scene.height.saturating_sub(size_h));
    let x_enter = if velocity > 0.0 {
        -(size_w as f64) + velocity
    } else {
        scene.width as f64 + velocity
    };
    AnomalyTrack {
        video_id: video_id.to_string(),
        top,
        size_h,
        size_w,
        x_enter,
        velocity,
        t_start,
    }
}

/// Builds the corpus; the output is a pure function of `spec`.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut scene_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scene = build_scene(spec, &mut scene_rng);
    let (h, w) = spec.resolution;

    let mut train = Vec::with_capacity(spec.n_train_videos);
    for v in 0..spec.n_train_videos {
        let id = format!("Train{:03}", v + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (0x7452_4149 + v as u64) << 1);
        let agents = normal_agents(spec, &scene, &mut rng);
        let frames = (0..spec.frames_per_video)
            .map(|t| to_frame(&id, t, &scene, &render_normal(spec, &scene, &agents, t)))
            .collect::<Result<Vec<_>>>()?;
        train.push(VideoSequence::new(id, frames, None)?);
    }

    let mut test = Vec::with_capacity(spec.n_test_videos);
    let mut anomalies = Vec::with_capacity(spec.n_test_videos);
    for v in 0..spec.n_test_videos {
        let id = format!("Test{:03}", v + 1);
        let mut rng = ChaCha8Rng::seed_from_u64((spec.seed ^ (0x5445_5354 + v as u64)) << 1 | 1);
        let agents = normal_agents(spec, &scene, &mut rng);
        let track = anomaly_for(spec, &scene, &id, &mut rng);
        let mut frames = Vec::with_capacity(spec.frames_per_video);
        let mut masks = Vec::with_capacity(spec.frames_per_video);
        for t in 0..spec.frames_per_video {
            let mut canvas = render_normal(spec, &scene, &agents, t);
            let mask = match track.x_at(t) {
                Some(x) if x < w as f64 && x + track.size_w as f64 > 0.0 => {
                    draw_box(
                        &mut canvas,
                        &scene,
                        x,
                        track.top,
                        track.size_w,
                        track.size_h,
                        PALETTE[3],
                    );
                    box_mask(h, w, x, track.top, track.size_w, track.size_h)
                }
                _ => Mask::empty(h, w),
            };
            frames.push(to_frame(&id, t, &scene, &canvas)?);
            masks.push(mask);
        }
        test.push(VideoSequence::new(id, frames, Some(GroundTruth::from_masks(masks)))?);
        anomalies.push(track);
    }
    Ok(SyntheticCorpus {
        split: DatasetSplit { train, test },
        anomalies,
    })
}
