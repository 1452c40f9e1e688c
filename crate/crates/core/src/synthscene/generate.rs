use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{render, Door, Panel, SceneError, SceneSpec, Shading};
use crate::geomatch::{CameraModel, Pose2D, Side};
use crate::illuminant::Illuminant;
use crate::radiomap::{AccessPoint, Area};
use crate::Point2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub floor: [f64; 3],
    pub wall: [f64; 3],
    pub door: [f64; 3],
    pub ceiling: [f64; 3],
}

/// Surface colors whose differences run largely along the blue-yellow axis.
pub const PALETTES: [Palette; 4] = [
    Palette {
        floor: [0.22, 0.26, 0.42],
        wall: [0.72, 0.68, 0.5],
        door: [0.5, 0.36, 0.12],
        ceiling: [0.82, 0.82, 0.82],
    },
    Palette {
        floor: [0.42, 0.36, 0.16],
        wall: [0.55, 0.62, 0.82],
        door: [0.2, 0.22, 0.5],
        ceiling: [0.85, 0.85, 0.8],
    },
    Palette {
        floor: [0.3, 0.3, 0.52],
        wall: [0.78, 0.72, 0.42],
        door: [0.58, 0.3, 0.2],
        ceiling: [0.8, 0.82, 0.85],
    },
    Palette {
        floor: [0.46, 0.4, 0.22],
        wall: [0.6, 0.66, 0.86],
        door: [0.28, 0.2, 0.48],
        ceiling: [0.84, 0.84, 0.84],
    },
];

/// Ranges for randomly generated hallways.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HallwayParams {
    pub camera: CameraModel,
    pub width: (f64, f64),
    pub depth: (f64, f64),
    /// Inclusive range of door counts.
    pub doors: (usize, usize),
    pub door_width: (f64, f64),
    /// Doors start at least this far ahead of the camera.
    pub near_gap: f64,
    /// Doors end at least this far before the end wall.
    pub far_gap: f64,
    /// Minimum gap between doors on the same side.
    pub door_gap: f64,
    /// Camera offsets: lateral half-range, forward range, heading half-range (radians).
    pub lateral: f64,
    pub forward: (f64, f64),
    pub heading: f64,
    pub illuminant: Illuminant,
    pub shading: Shading,
}

impl Default for HallwayParams {
    fn default() -> Self {
        Self {
            camera: CameraModel {
                focal: 170.0,
                cx: 119.5,
                cy: 89.5,
                height: 1.5,
                pitch: 20f64.to_radians(),
                width: 240,
                rows: 180,
            },
            width: (2.2, 2.6),
            depth: (9.0, 11.0),
            doors: (2, 4),
            door_width: (0.85, 1.0),
            near_gap: 1.8,
            far_gap: 2.2,
            door_gap: 0.8,
            lateral: 0.25,
            forward: (0.3, 1.0),
            heading: 5f64.to_radians(),
            illuminant: Illuminant::white(),
            shading: Shading::Flat,
        }
    }
}

fn jitter<R: Rng + ?Sized>(rng: &mut R, a: [f64; 3], amount: f64) -> [f64; 3] {
    a.map(|v| (v + rng.random_range(-amount..=amount)).clamp(0.0, 1.0))
}

fn opposite(side: Side) -> Side {
    match side {
        Side::Left => Side::Right,
        Side::Right => Side::Left,
    }
}

/// A random hallway with a random palette, doors and camera placement.
/// The first two doors go on opposite walls.
pub fn random_hallway<R: Rng + ?Sized>(rng: &mut R, params: &HallwayParams) -> SceneSpec {
    let width = rng.random_range(params.width.0..=params.width.1);
    let depth = rng.random_range(params.depth.0..=params.depth.1);
    let pose = Pose2D::new(
        Point2::new(
            rng.random_range(-params.lateral..=params.lateral),
            rng.random_range(params.forward.0..=params.forward.1),
        ),
        rng.random_range(-params.heading..=params.heading),
    );
    let palette = PALETTES[rng.random_range(0..PALETTES.len())];
    let n_doors = rng.random_range(params.doors.0..=params.doors.1);
    let lo = pose.position.y + params.near_gap;
    let mut doors: Vec<Door> = Vec::new();
    for _ in 0..200 {
        if doors.len() == n_doors {
            break;
        }
        let w = rng.random_range(params.door_width.0..=params.door_width.1);
        let hi = depth - params.far_gap - w;
        if hi <= lo {
            break;
        }
        let side = match doors.len() {
            0 if rng.random_bool(0.5) => Side::Left,
            0 => Side::Right,
            1 => opposite(doors[0].side),
            _ if rng.random_bool(0.5) => Side::Left,
            _ => Side::Right,
        };
        let offset = rng.random_range(lo..hi);
        let clear = doors.iter().filter(|d| d.side == side).all(|d| {
            offset > d.offset + d.width + params.door_gap || offset + w + params.door_gap < d.offset
        });
        if clear {
            doors.push(Door {
                side,
                offset,
                width: w,
            });
        }
    }
    doors.sort_by(|a, b| a.offset.total_cmp(&b.offset));
    SceneSpec {
        hallway_width: width,
        visible_depth: depth,
        wall_height: 2.6,
        door_height: 2.0,
        floor_albedo: jitter(rng, palette.floor, 0.03),
        wall_albedo: jitter(rng, palette.wall, 0.03),
        door_albedo: jitter(rng, palette.door, 0.03),
        ceiling_albedo: palette.ceiling,
        doors,
        panels: vec![],
        illuminant: params.illuminant,
        specular_strength: 0.0,
        gloss: None,
        shading: params.shading,
        camera: params.camera,
        true_pose: pose,
    }
}

fn scale_albedos(spec: &mut SceneSpec, f: impl Fn([f64; 3]) -> [f64; 3]) {
    spec.floor_albedo = f(spec.floor_albedo);
    spec.wall_albedo = f(spec.wall_albedo);
    spec.door_albedo = f(spec.door_albedo);
    spec.ceiling_albedo = f(spec.ceiling_albedo);
    for p in &mut spec.panels {
        p.albedo = f(p.albedo);
    }
}

/// Rescales every albedo channel so the pixel-weighted mean albedo of the
/// rendered view is achromatic. Shading is set flat and highlights removed.
pub fn balance_grey_world(spec: &SceneSpec) -> Result<SceneSpec, SceneError> {
    let mut s = spec.clone();
    s.shading = Shading::Flat;
    s.specular_strength = 0.0;
    let mut probe = s.clone();
    probe.illuminant = Illuminant::white();
    let (img, _) = render(&probe)?;
    let n = img.pixel_count() as f64;
    let mean: Vec<f64> = (0..3).map(|c| img.channel(c).data.iter().sum::<f64>() / n).collect();
    let lo = mean.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lo > 0.0) {
        return Err(SceneError::InvalidSpec("a channel has zero mean albedo".into()));
    }
    let gains = [lo / mean[0], lo / mean[1], lo / mean[2]];
    scale_albedos(&mut s, |a| [a[0] * gains[0], a[1] * gains[1], a[2] * gains[2]]);
    Ok(s)
}

/// Adds a 0.95 white panel on the left wall a little ahead of the camera and
/// caps every other albedo at 0.9. Shading is set flat and highlights removed.
pub fn white_panel_scene(spec: &SceneSpec) -> SceneSpec {
    let mut s = spec.clone();
    s.shading = Shading::Flat;
    s.specular_strength = 0.0;
    s.panels.clear();
    scale_albedos(&mut s, |a| a.map(|v| v.min(0.9)));
    let start = (s.true_pose.position.y + 1.2).min(s.visible_depth - 1.0);
    s.panels.push(Panel {
        side: Side::Left,
        offset: start,
        width: 0.8,
        bottom: 0.6,
        top: 1.6,
        albedo: [0.95; 3],
    });
    s
}

/// Flat-shaded scene with a glossy floor patch of the given strength; the
/// floor albedo is scaled down where needed to leave headroom for it.
pub fn highlight_scene(spec: &SceneSpec, strength: f64) -> SceneSpec {
    let mut s = spec.clone();
    s.shading = Shading::Flat;
    s.specular_strength = strength;
    let peak = s.floor_albedo.iter().copied().fold(0.0, f64::max);
    let room = 1.0 - strength;
    if peak > room {
        s.floor_albedo = s.floor_albedo.map(|v| v * room / peak);
    }
    s
}

/// Four access points around the hallway and the fingerprint survey area
/// (the hallway floor).
pub fn radio_setup(spec: &SceneSpec) -> (Vec<AccessPoint>, Area) {
    let half = spec.hallway_width / 2.0;
    let len = spec.visible_depth;
    let ap = |id: &str, x: f64, y: f64| AccessPoint {
        id: id.into(),
        x,
        y,
        p0: -40.0,
        d0: 1.0,
        path_loss_exp: 3.0,
        shadow_sigma: 4.0,
    };
    let aps = vec![
        ap("ap0", -half - 5.0, -3.0),
        ap("ap1", half + 6.0, 1.0),
        ap("ap2", -half - 4.0, len + 2.0),
        ap("ap3", half + 5.0, len + 4.0),
    ];
    (aps, Area::new(-half, 0.0, half, len))
}
