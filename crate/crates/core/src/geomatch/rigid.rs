use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Candidate, FloorPlan, GeoError, GroundPoint, Landmark, Pose2D};
use crate::radiomap::{FixSource, PositionFix};
use crate::Point2;

/// Minimum radius of a fused fix, meters.
pub const FUSED_MIN_RADIUS: f64 = 0.25;

/// Least-squares rotation and translation taking camera-frame ground points
/// onto plan points.
pub fn estimate_rigid_2d(pairs: &[(Point2, Point2)]) -> Result<Pose2D, GeoError> {
    if pairs.len() < 2 {
        return Err(GeoError::DegenerateConfiguration(format!("{} pairs, need 2", pairs.len())));
    }
    let n = pairs.len() as f64;
    let cg = pairs.iter().fold(Point2::default(), |a, (g, _)| a.add(g)).scale(1.0 / n);
    let cp = pairs.iter().fold(Point2::default(), |a, (_, p)| a.add(p)).scale(1.0 / n);
    let spread = pairs.iter().map(|(g, _)| g.distance(&cg)).fold(0.0, f64::max);
    if spread < 1e-9 {
        return Err(GeoError::DegenerateConfiguration("ground points coincide".into()));
    }
    let (mut dot, mut cross) = (0.0, 0.0);
    for (g, p) in pairs {
        let (a, b) = (g.sub(&cg), p.sub(&cp));
        dot += a.dot(&b);
        cross += a.cross(&b);
    }
    let heading = cross.atan2(dot);
    Ok(Pose2D::new(cp.sub(&cg.rotate(heading)), heading))
}

/// RMS distance between transformed ground points and their plan points.
pub fn rigid_residual(pose: &Pose2D, pairs: &[(Point2, Point2)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    (pairs.iter().map(|(g, p)| pose.to_plan(*g).distance(p).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt()
}

/// One-to-one greedy nearest matching of detections to landmarks under
/// `pose`: `(detection index, landmark index, residual)` for every pair within
/// `tol`, smallest residuals claimed first.
pub fn match_inliers(pose: &Pose2D, detections: &[GroundPoint], landmarks: &[&Landmark], tol: f64) -> Vec<(usize, usize, f64)> {
    let mut all = Vec::new();
    for (i, d) in detections.iter().enumerate() {
        let p = pose.to_plan(d.point());
        for (j, l) in landmarks.iter().enumerate() {
            let r = p.distance(&l.position());
            if r <= tol {
                all.push((i, j, r));
            }
        }
    }
    all.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let (mut used_d, mut used_l) = (vec![false; detections.len()], vec![false; landmarks.len()]);
    all.into_iter()
        .filter(|&(i, j, _)| {
            let free = !used_d[i] && !used_l[j];
            if free {
                used_d[i] = true;
                used_l[j] = true;
            }
            free
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchHypothesis {
    /// The sampled correspondences the pose was seeded from.
    pub correspondences: Vec<(GroundPoint, u32)>,
    pub pose: Pose2D,
    /// Landmark ids matched under `pose`.
    pub inliers: Vec<u32>,
    /// Detection indices matched to `inliers`, position by position.
    pub inlier_detections: Vec<usize>,
    /// RMS inlier residual, meters.
    pub residual_rms: f64,
}

struct Scored {
    pose: Pose2D,
    matches: Vec<(usize, usize, f64)>,
    rms: f64,
}

fn rms(matches: &[(usize, usize, f64)]) -> f64 {
    if matches.is_empty() {
        0.0
    } else {
        (matches.iter().map(|m| m.2 * m.2).sum::<f64>() / matches.len() as f64).sqrt()
    }
}

fn better(a: &Scored, b: &Scored) -> bool {
    a.matches.len() > b.matches.len() || (a.matches.len() == b.matches.len() && a.rms < b.rms)
}

fn score(pose: Pose2D, detections: &[GroundPoint], landmarks: &[&Landmark], tol: f64) -> Scored {
    let matches = match_inliers(&pose, detections, landmarks, tol);
    let rms = rms(&matches);
    Scored { pose, matches, rms }
}

/// Re-estimates the pose over the inliers while that does not lose any.
fn refine(mut best: Scored, detections: &[GroundPoint], landmarks: &[&Landmark], tol: f64) -> Scored {
    for _ in 0..5 {
        if best.matches.len() < 2 {
            break;
        }
        let pairs: Vec<(Point2, Point2)> = best
            .matches
            .iter()
            .map(|&(i, j, _)| (detections[i].point(), landmarks[j].position()))
            .collect();
        let Ok(pose) = estimate_rigid_2d(&pairs) else { break };
        let next = score(pose, detections, landmarks, tol);
        if next.matches.len() < best.matches.len() || !(next.rms < best.rms || next.matches.len() > best.matches.len()) {
            break;
        }
        best = next;
    }
    best
}

/// Scores every candidate pose by its one-to-one inliers among the landmarks
/// inside the WLAN radius and returns the best refined pose that also lies
/// inside it. Ranking is by inlier count, then residual, then candidate order.
pub fn ransac_match(
    candidates: &[Candidate],
    detections: &[GroundPoint],
    plan: &FloorPlan,
    wlan: &PositionFix,
    inlier_tol: f64,
) -> Result<MatchHypothesis, GeoError> {
    let landmarks = plan.landmarks_within(wlan.position, wlan.radius);
    let scored: Vec<Option<Scored>> = candidates
        .par_iter()
        .map(|c| {
            let pairs: Vec<(Point2, Point2)> = c
                .pairs
                .iter()
                .filter_map(|(g, id)| plan.landmark(*id).map(|l| (g.point(), l.position())))
                .collect();
            let pose = estimate_rigid_2d(&pairs).ok()?;
            let s = refine(score(pose, detections, &landmarks, inlier_tol), detections, &landmarks, inlier_tol);
            (s.pose.position.distance(&wlan.position) <= wlan.radius).then_some(s)
        })
        .collect();
    let mut best: Option<(usize, Scored)> = None;
    for (i, s) in scored.into_iter().enumerate() {
        let Some(s) = s else { continue };
        if best.as_ref().is_none_or(|(_, b)| better(&s, b)) {
            best = Some((i, s));
        }
    }
    let (i, s) = best.ok_or(GeoError::NoHypothesis)?;
    Ok(MatchHypothesis {
        correspondences: candidates[i].pairs.clone(),
        pose: s.pose,
        inliers: s.matches.iter().map(|m| landmarks[m.1].id).collect(),
        inlier_detections: s.matches.iter().map(|m| m.0).collect(),
        residual_rms: s.rms,
    })
}

/// Switches to the match pose when it has at least `min_inliers` inliers and
/// lies inside the WLAN circle; otherwise returns the WLAN fix unchanged.
pub fn fuse(wlan: &PositionFix, matched: Option<&MatchHypothesis>, min_inliers: usize) -> PositionFix {
    match matched {
        Some(m) if m.inliers.len() >= min_inliers && m.pose.position.distance(&wlan.position) <= wlan.radius => {
            let radius = m.residual_rms.max(FUSED_MIN_RADIUS).min(wlan.radius);
            PositionFix::fused(m.pose.position, m.pose.heading, radius)
        }
        _ => PositionFix {
            source: FixSource::Wlan,
            ..*wlan
        },
    }
}
