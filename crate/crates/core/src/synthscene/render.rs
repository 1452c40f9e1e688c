use rayon::prelude::*;

use super::{make_plan, CornerTruth, GroundTruth, SceneError, SceneSpec, Shading};
use crate::geomatch::{project_ground, GroundPoint, Side};
use crate::imaging::Image;
use crate::Point2;

enum Surface {
    Floor,
    Ceiling,
    SideWall(Side),
    EndWall,
}

struct Hit {
    surface: Surface,
    point: [f64; 3],
    distance: f64,
}

/// First surface of the hallway box hit by a ray from `origin` (inside).
fn cast(spec: &SceneSpec, origin: [f64; 3], dir: [f64; 3]) -> Option<Hit> {
    let half = spec.hallway_width / 2.0;
    let mut best: Option<(f64, Surface)> = None;
    let mut consider = |t: f64, s: Surface| {
        if t > 0.0 && best.as_ref().is_none_or(|(bt, _)| t < *bt) {
            best = Some((t, s));
        }
    };
    if dir[2] < 0.0 {
        consider(-origin[2] / dir[2], Surface::Floor);
    } else if dir[2] > 0.0 {
        consider((spec.wall_height - origin[2]) / dir[2], Surface::Ceiling);
    }
    if dir[0] < 0.0 {
        consider((-half - origin[0]) / dir[0], Surface::SideWall(Side::Left));
    } else if dir[0] > 0.0 {
        consider((half - origin[0]) / dir[0], Surface::SideWall(Side::Right));
    }
    if dir[1] > 0.0 {
        consider((spec.visible_depth - origin[1]) / dir[1], Surface::EndWall);
    } else if dir[1] < 0.0 {
        consider(-origin[1] / dir[1], Surface::EndWall);
    }
    let (t, surface) = best?;
    let point = [origin[0] + t * dir[0], origin[1] + t * dir[1], origin[2] + t * dir[2]];
    let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    Some(Hit {
        surface,
        point,
        distance: t * norm,
    })
}

fn albedo(spec: &SceneSpec, hit: &Hit) -> [f64; 3] {
    let [_, y, z] = hit.point;
    match hit.surface {
        Surface::Floor => spec.floor_albedo,
        Surface::Ceiling => spec.ceiling_albedo,
        Surface::EndWall => spec.wall_albedo,
        Surface::SideWall(side) => {
            if let Some(p) = spec
                .panels
                .iter()
                .find(|p| p.side == side && y >= p.offset && y <= p.offset + p.width && z >= p.bottom && z <= p.top)
            {
                p.albedo
            } else if z <= spec.door_height
                && spec.doors.iter().any(|d| d.side == side && y >= d.offset && y <= d.offset + d.width)
            {
                spec.door_albedo
            } else {
                spec.wall_albedo
            }
        }
    }
}

/// Ray-casts every pixel (pixel `(i, j)` samples the continuous image point
/// `(i, j)`) and projects the plan landmarks for ground truth.
pub fn render(spec: &SceneSpec) -> Result<(Image, GroundTruth), SceneError> {
    spec.validate()?;
    let cam = &spec.camera;
    let (w, h) = (cam.width, cam.rows);
    let light = spec.illuminant.max_normalized();
    let gloss = spec.effective_gloss();
    let pose = spec.true_pose;
    let origin = [pose.position.x, pose.position.y, cam.height];
    let pixels: Vec<([f64; 3], bool)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (u, v) = ((i % w) as f64, (i / w) as f64);
            let [dx, dy, dz] = cam.ray(u, v);
            let d = Point2::new(dx, dy).rotate(pose.heading);
            let Some(hit) = cast(spec, origin, [d.x, d.y, dz]) else {
                return ([0.0; 3], false);
            };
            let a = albedo(spec, &hit);
            let m = match spec.shading {
                Shading::Flat => 1.0,
                Shading::Falloff { rate } => (-rate * hit.distance).exp(),
            };
            let floor = matches!(hit.surface, Surface::Floor);
            let ms = if floor && spec.specular_strength > 0.0 {
                gloss.strength(hit.point[0], hit.point[1]) * spec.specular_strength
            } else {
                0.0
            };
            let mut px = [0.0; 3];
            for c in 0..3 {
                px[c] = (m * a[c] * light[c] + ms * light[c]).clamp(0.0, 1.0);
            }
            (px, floor)
        })
        .collect();
    let floor_mask: Vec<bool> = pixels.iter().map(|p| p.1).collect();
    if !floor_mask.iter().any(|f| *f) {
        return Err(SceneError::DegenerateCamera);
    }
    let data: Vec<f64> = pixels.iter().flat_map(|p| p.0).collect();
    let image = Image::new(w, h, data).map_err(|e| SceneError::InvalidSpec(e.to_string()))?;

    let plan = make_plan(spec);
    let corners = plan
        .landmarks
        .iter()
        .filter_map(|l| {
            let g = pose.to_camera(l.position());
            if g.y <= 0.0 {
                return None;
            }
            let (u, v) = project_ground(cam, GroundPoint::new(g.x, g.y))?;
            let inside = u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64;
            inside.then_some(CornerTruth {
                u,
                v,
                landmark_id: l.id,
            })
        })
        .collect();
    Ok((
        image,
        GroundTruth {
            illuminant: spec.illuminant,
            corners,
            floor_mask,
            plan,
            pose,
        },
    ))
}
