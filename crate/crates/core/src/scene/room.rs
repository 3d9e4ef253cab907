use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Waveform;

pub type Point = [f64; 3];

/// Shoebox room. Walls are ordered `[x=0, x=Lx, y=0, y=Ly, z=0, z=Lz]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub dimensions: [f64; 3],
    pub wall_reflection: [f64; 6],
    #[serde(default = "default_speed_of_sound")]
    pub speed_of_sound: f64,
}

fn default_speed_of_sound() -> f64 {
    343.0
}

impl RoomSpec {
    pub fn new(dimensions: [f64; 3], wall_reflection: [f64; 6]) -> Result<Self> {
        let room = Self { dimensions, wall_reflection, speed_of_sound: default_speed_of_sound() };
        room.validate()?;
        Ok(room)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::config("room.dimensions", "all dimensions must be positive"));
        }
        if self.wall_reflection.iter().any(|&b| !(0.0..1.0).contains(&b)) {
            return Err(Error::config("room.wall_reflection", "coefficients must lie in [0, 1)"));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(Error::config("room.speed_of_sound", "must be positive"));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dimensions;
        2.0 * (x * y + x * z + y * z)
    }

    /// Strictly inside the room.
    pub fn contains(&self, p: &Point) -> bool {
        p.iter().zip(&self.dimensions).all(|(&c, &d)| c > 0.0 && c < d)
    }
}

/// Uniform reflection coefficient reaching `target_t60_s` under Sabine's
/// formula: `alpha = 0.161 V / (S T60)`, `beta = sqrt(1 - alpha)`.
pub fn t60_to_reflection(room: &RoomSpec, target_t60_s: f64) -> Result<[f64; 6]> {
    if !(target_t60_s > 0.0) {
        return Err(Error::config("target_t60_s", "must be positive"));
    }
    let alpha = 0.161 * room.volume() / (room.surface() * target_t60_s);
    if alpha >= 1.0 {
        return Err(Error::UnreachableT60 { t60_s: target_t60_s, absorption: alpha });
    }
    let beta = (1.0 - alpha).max(0.0).sqrt().clamp(0.0, 0.999);
    Ok([beta; 6])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource {
    pub position: Point,
    /// Reflection count per wall, same order as `RoomSpec::wall_reflection`.
    pub hits: [u32; 6],
    /// Axes along which the image is mirrored relative to the source.
    pub mirrored: [bool; 3],
}

impl ImageSource {
    pub fn order(&self) -> u32 {
        self.hits.iter().sum()
    }

    pub fn attenuation(&self, room: &RoomSpec) -> f64 {
        self.hits.iter().zip(&room.wall_reflection).map(|(&h, &b)| b.powi(h as i32)).product()
    }
}

/// All image sources of reflection order `<= max_order`, direct path first.
pub fn image_sources(room: &RoomSpec, src: &Point, max_order: u32) -> Vec<ImageSource> {
    let n_max = max_order as i64;
    // Per axis: (coordinate, hits on the near wall, hits on the far wall, mirrored).
    let axis_images = |axis: usize| -> Vec<(f64, u32, u32, bool)> {
        let len = room.dimensions[axis];
        let s = src[axis];
        let mut out = Vec::new();
        for n in -n_max..=n_max {
            for q in 0..=1i64 {
                let near = (n - q).unsigned_abs() as u32;
                let far = n.unsigned_abs() as u32;
                if near + far <= max_order {
                    let coord = (1 - 2 * q) as f64 * s + 2.0 * n as f64 * len;
                    out.push((coord, near, far, q == 1));
                }
            }
        }
        // Direct (n = 0, q = 0) first.
        out.sort_by_key(|&(_, a, b, _)| a + b);
        out
    };
    let (ax, ay, az) = (axis_images(0), axis_images(1), axis_images(2));
    let mut images = Vec::new();
    for x in &ax {
        for y in &ay {
            let xy = x.1 + x.2 + y.1 + y.2;
            if xy > max_order {
                continue;
            }
            for z in &az {
                if xy + z.1 + z.2 > max_order {
                    continue;
                }
                images.push(ImageSource {
                    position: [x.0, y.0, z.0],
                    hits: [x.1, x.2, y.1, y.2, z.1, z.2],
                    mirrored: [x.3, y.3, z.3],
                });
            }
        }
    }
    images.sort_by_key(|im| im.order());
    images
}

fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: &Point) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn cardioid(axis: &Point, dir: &Point) -> f64 {
    let na = norm(axis);
    let nd = norm(dir);
    if na == 0.0 || nd == 0.0 {
        return 1.0;
    }
    let cos = (axis[0] * dir[0] + axis[1] * dir[1] + axis[2] * dir[2]) / (na * nd);
    // cos^2(theta / 2)
    0.5 * (1.0 + cos)
}

/// One source/microphone impulse-response request.
#[derive(Debug, Clone)]
pub struct RirRequest<'a> {
    pub room: &'a RoomSpec,
    pub source: Point,
    pub mic: Point,
    pub max_order: u32,
    pub rir_len: usize,
    pub sample_rate_hz: u32,
    /// Cardioid source facing this axis; omnidirectional when `None`.
    pub source_axis: Option<Point>,
    /// Cardioid microphone facing this axis; omnidirectional when `None`.
    pub mic_axis: Option<Point>,
}

impl RirRequest<'_> {
    pub fn render(&self) -> Result<Waveform> {
        if norm(&sub(&self.source, &self.mic)) == 0.0 {
            return Err(Error::CoincidentSourceMic);
        }
        let fs = self.sample_rate_hz as f64;
        let c = self.room.speed_of_sound;
        let mut h = vec![0.0; self.rir_len];
        for im in image_sources(self.room, &self.source, self.max_order) {
            let arrival = sub(&im.position, &self.mic);
            let d = norm(&arrival);
            let tap = (d / c * fs).round() as usize;
            if tap >= self.rir_len {
                continue;
            }
            let mut gain = im.attenuation(self.room) / (4.0 * PI * d);
            if gain == 0.0 {
                continue;
            }
            if let Some(axis) = &self.mic_axis {
                gain *= cardioid(axis, &arrival);
            }
            if let Some(axis) = &self.source_axis {
                // Emission direction in the real room: image-to-mic vector with
                // mirrored axes flipped back.
                let mut emit = sub(&self.mic, &im.position);
                for (e, &m) in emit.iter_mut().zip(&im.mirrored) {
                    if m {
                        *e = -*e;
                    }
                }
                gain *= cardioid(axis, &emit);
            }
            h[tap] += gain;
        }
        Waveform::new(h, self.sample_rate_hz)
    }
}

/// Omnidirectional image-method impulse response.
pub fn image_method_rir(
    room: &RoomSpec,
    src: Point,
    mic: Point,
    max_order: u32,
    rir_len: usize,
    sample_rate_hz: u32,
) -> Result<Waveform> {
    RirRequest { room, source: src, mic, max_order, rir_len, sample_rate_hz, source_axis: None, mic_axis: None }
        .render()
}
