use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EdgeFit, FloorPlan, GeoError, GroundPoint, Landmark, Side};
use crate::radiomap::PositionFix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HypothesisParams {
    /// Number of 2+2 point samples drawn from the edge lines.
    pub count: usize,
    /// Pairwise distance compatibility gate, meters.
    pub distance_gate: f64,
}

impl Default for HypothesisParams {
    fn default() -> Self {
        Self {
            count: 200,
            distance_gate: 0.5,
        }
    }
}

/// A four-point correspondence set between ground points and plan landmarks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub pairs: Vec<(GroundPoint, u32)>,
}

struct Slot<'a> {
    landmark: &'a Landmark,
    line: usize,
    side: Side,
    t: f64,
}

/// Index pairs `(i, j)` with `i < j`, weighted by point separation.
fn weighted_pairs(points: &[GroundPoint]) -> (Vec<(usize, usize)>, Vec<f64>) {
    let mut pairs = Vec::new();
    let mut weights = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            pairs.push((i, j));
            weights.push(points[i].point().distance(&points[j].point()));
        }
    }
    (pairs, weights)
}

fn sampler(weights: &[f64]) -> WeightedIndex<f64> {
    WeightedIndex::new(weights).unwrap_or_else(|_| WeightedIndex::new(vec![1.0; weights.len()]).expect("non-empty"))
}

/// Ordered landmark pairs on one plan line matching a ground pair.
fn line_pairs<'a>(
    slots: &'a [Slot<'a>],
    side: Side,
    forward: bool,
    g: (GroundPoint, GroundPoint),
    gate: f64,
) -> Vec<(&'a Slot<'a>, &'a Slot<'a>)> {
    let dg = g.0.point().distance(&g.1.point());
    let mut out = Vec::new();
    for a in slots.iter().filter(|s| s.side == side) {
        for b in slots.iter().filter(|s| s.side == side && s.line == a.line) {
            let ordered = if forward { a.t < b.t } else { a.t > b.t };
            if ordered && (a.landmark.position().distance(&b.landmark.position()) - dg).abs() <= gate {
                out.push((a, b));
            }
        }
    }
    out
}

/// Samples two points per edge line (probability proportional to their
/// separation, order along the line preserved) and enumerates every
/// assignment to in-radius plan landmarks that keeps sides, along-line order
/// and pairwise distances consistent. Both walking directions along each
/// plan line are tried.
pub fn generate_hypotheses<R: Rng + ?Sized>(
    left: &EdgeFit,
    right: &EdgeFit,
    plan: &FloorPlan,
    wlan: &PositionFix,
    params: &HypothesisParams,
    rng: &mut R,
) -> Result<Vec<Candidate>, GeoError> {
    for fit in [left, right] {
        if fit.points.len() < 2 {
            return Err(GeoError::InsufficientPoints {
                side: fit.side,
                found: fit.points.len(),
            });
        }
    }
    let nearby = plan.landmarks_within(wlan.position, wlan.radius);
    if nearby.is_empty() {
        return Err(GeoError::NoCandidates);
    }
    let slots: Vec<Slot> = nearby
        .into_iter()
        .filter_map(|l| {
            let line = plan.nearest_edge(l.position())?;
            let e = &plan.edge_lines[line];
            Some(Slot {
                landmark: l,
                line,
                side: e.side,
                t: e.param(l.position()),
            })
        })
        .collect();

    let (lp, lw) = weighted_pairs(&left.points);
    let (rp, rw) = weighted_pairs(&right.points);
    let (ls, rs) = (sampler(&lw), sampler(&rw));
    let gate = params.distance_gate;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for _ in 0..params.count {
        let (li, lj) = lp[ls.sample(rng)];
        let (ri, rj) = rp[rs.sample(rng)];
        if !seen.insert((li, lj, ri, rj)) {
            continue;
        }
        let gl = (left.points[li], left.points[lj]);
        let gr = (right.points[ri], right.points[rj]);
        for forward in [true, false] {
            let (lside, rside) = if forward { (Side::Left, Side::Right) } else { (Side::Right, Side::Left) };
            let lcands = line_pairs(&slots, lside, forward, gl, gate);
            if lcands.is_empty() {
                continue;
            }
            let rcands = line_pairs(&slots, rside, forward, gr, gate);
            for (a, b) in &lcands {
                for (c, d) in &rcands {
                    let cross_ok = [(gl.0, a), (gl.1, b)].iter().all(|(g, s)| {
                        [(gr.0, c), (gr.1, d)].iter().all(|(h, q)| {
                            let dg = g.point().distance(&h.point());
                            let dp = s.landmark.position().distance(&q.landmark.position());
                            (dg - dp).abs() <= gate
                        })
                    });
                    if cross_ok {
                        out.push(Candidate {
                            pairs: vec![
                                (gl.0, a.landmark.id),
                                (gl.1, b.landmark.id),
                                (gr.0, c.landmark.id),
                                (gr.1, d.landmark.id),
                            ],
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Ordered `m`-point correspondences between `n_image` detections and
/// `n_plan` plan points with no constraints: P(n_image, m) · P(n_plan, m).
pub fn unconstrained_assignments(n_image: u64, n_plan: u64, m: u64) -> u128 {
    let perm = |n: u64| -> u128 { (0..m).map(|i| u128::from(n.saturating_sub(i))).product() };
    perm(n_image) * perm(n_plan)
}
