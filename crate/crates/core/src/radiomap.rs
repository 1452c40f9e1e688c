//! WLAN fingerprinting: log-distance RSSI simulation, grid radio maps and
//! k-nearest-neighbour positioning in signal space.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{wrap_angle, Point2};

/// Minimum reported WLAN radius in meters.
pub const WLAN_MIN_RADIUS: f64 = 10.0;

#[derive(Debug, Error)]
pub enum RadioError {
    #[error("area contains no grid points")]
    EmptyArea,
    #[error("observation shares no access point with the radio map")]
    NoCommonAps,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid radio map: {0}")]
    InvalidMap(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccessPoint {
    #[serde(rename = "ap_id")]
    pub id: String,
    pub x: f64,
    pub y: f64,
    /// Received power at `d0`, dBm.
    pub p0: f64,
    #[serde(default = "default_d0")]
    pub d0: f64,
    pub path_loss_exp: f64,
    /// Log-normal shadowing standard deviation, dB.
    pub shadow_sigma: f64,
}

fn default_d0() -> f64 {
    1.0
}

impl AccessPoint {
    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn validate(&self) -> Result<(), RadioError> {
        let ok = self.d0 > 0.0
            && self.path_loss_exp > 0.0
            && self.shadow_sigma >= 0.0
            && [self.x, self.y, self.p0, self.d0, self.path_loss_exp, self.shadow_sigma]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(RadioError::InvalidParameter(format!("access point {}: bad propagation parameters", self.id)))
        }
    }

    /// Noiseless log-distance received power at `pos`.
    pub fn mean_rssi(&self, pos: Point2) -> f64 {
        let d = self.position().distance(&pos).max(self.d0);
        self.p0 - 10.0 * self.path_loss_exp * (d / self.d0).log10()
    }
}

/// Received power at `pos`, with Gaussian shadowing when `rng` is given.
pub fn simulate_rssi(ap: &AccessPoint, pos: Point2, rng: Option<&mut dyn RngCore>) -> f64 {
    let mean = ap.mean_rssi(pos);
    match rng {
        Some(rng) if ap.shadow_sigma > 0.0 => {
            let n = Normal::new(0.0, ap.shadow_sigma).expect("validated sigma");
            mean + n.sample(rng)
        }
        _ => mean,
    }
}

/// Signal-space observation keyed by access point id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RssiVector(pub BTreeMap<String, f64>);

impl RssiVector {
    /// One noisy reading per access point.
    pub fn observe<R: Rng + ?Sized>(aps: &[AccessPoint], pos: Point2, rng: &mut R) -> Self {
        let rng: &mut dyn RngCore = &mut RngAdapter(rng);
        Self(
            aps.iter()
                .map(|ap| (ap.id.clone(), simulate_rssi(ap, pos, Some(&mut *rng))))
                .collect(),
        )
    }

    pub fn noiseless(aps: &[AccessPoint], pos: Point2) -> Self {
        Self(aps.iter().map(|ap| (ap.id.clone(), ap.mean_rssi(pos))).collect())
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.0.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

struct RngAdapter<'a, R: Rng + ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Axis-aligned rectangle in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub min: Point2,
    pub max: Point2,
}

impl Area {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            min: Point2::new(x0, y0),
            max: Point2::new(x1, y1),
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub position: Point2,
    pub rssi: RssiVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadioMap {
    fingerprints: Vec<Fingerprint>,
    grid_spacing: f64,
}

impl RadioMap {
    /// Checks that positions are unique and every fingerprint covers the same ids.
    pub fn new(fingerprints: Vec<Fingerprint>, grid_spacing: f64) -> Result<Self, RadioError> {
        let first = fingerprints.first().ok_or_else(|| RadioError::InvalidMap("no fingerprints".into()))?;
        let ids: BTreeSet<&String> = first.rssi.0.keys().collect();
        if ids.is_empty() {
            return Err(RadioError::InvalidMap("fingerprint without readings".into()));
        }
        let mut seen = BTreeSet::new();
        for f in &fingerprints {
            if !f.rssi.0.keys().eq(ids.iter().copied()) {
                return Err(RadioError::InvalidMap(format!(
                    "fingerprint at ({}, {}) covers a different access point set",
                    f.position.x, f.position.y
                )));
            }
            if f.rssi.0.values().any(|v| !v.is_finite()) || !f.position.x.is_finite() || !f.position.y.is_finite() {
                return Err(RadioError::InvalidMap("non-finite value".into()));
            }
            if !seen.insert((f.position.x.to_bits(), f.position.y.to_bits())) {
                return Err(RadioError::InvalidMap(format!(
                    "duplicate fingerprint position ({}, {})",
                    f.position.x, f.position.y
                )));
            }
        }
        Ok(Self {
            fingerprints,
            grid_spacing,
        })
    }

    pub fn fingerprints(&self) -> &[Fingerprint] {
        &self.fingerprints
    }

    pub fn grid_spacing(&self) -> f64 {
        self.grid_spacing
    }

    pub fn ap_ids(&self) -> impl Iterator<Item = &str> {
        self.fingerprints[0].rssi.0.keys().map(String::as_str)
    }

    /// CSV with header `x,y,ap_id,rssi_dbm`, one row per fingerprint and access point.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), RadioError> {
        let mut out = csv::Writer::from_writer(w);
        for f in &self.fingerprints {
            for (id, rssi) in &f.rssi.0 {
                out.serialize(MapRow {
                    x: f.position.x,
                    y: f.position.y,
                    ap_id: id.clone(),
                    rssi_dbm: *rssi,
                })?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Rows are grouped into fingerprints by position in order of first
    /// appearance; the grid spacing is the smallest coordinate step present.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, RadioError> {
        let mut order: Vec<(u64, u64)> = Vec::new();
        let mut groups: BTreeMap<(u64, u64), Fingerprint> = BTreeMap::new();
        for row in csv::Reader::from_reader(r).deserialize() {
            let row: MapRow = row?;
            let key = (row.x.to_bits(), row.y.to_bits());
            let f = groups.entry(key).or_insert_with(|| {
                order.push(key);
                Fingerprint {
                    position: Point2::new(row.x, row.y),
                    rssi: RssiVector::default(),
                }
            });
            if f.rssi.0.insert(row.ap_id.clone(), row.rssi_dbm).is_some() {
                return Err(RadioError::InvalidMap(format!(
                    "duplicate reading for {} at ({}, {})",
                    row.ap_id, row.x, row.y
                )));
            }
        }
        let fingerprints: Vec<Fingerprint> = order.iter().map(|k| groups.remove(k).expect("grouped")).collect();
        let spacing = min_step(fingerprints.iter().map(|f| f.position.x))
            .into_iter()
            .chain(min_step(fingerprints.iter().map(|f| f.position.y)))
            .fold(f64::INFINITY, f64::min);
        Self::new(fingerprints, if spacing.is_finite() { spacing } else { 0.0 })
    }

    pub fn load(path: &Path) -> Result<Self, RadioError> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), RadioError> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn min_step(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 1e-9).reduce(f64::min)
}

#[derive(Serialize, Deserialize)]
struct MapRow {
    x: f64,
    y: f64,
    ap_id: String,
    rssi_dbm: f64,
}

/// CSV with header `ap_id,x,y,p0,d0,path_loss_exp,shadow_sigma`.
pub fn write_access_points<W: Write>(aps: &[AccessPoint], w: W) -> Result<(), RadioError> {
    let mut out = csv::Writer::from_writer(w);
    for ap in aps {
        out.serialize(ap)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_access_points<R: Read>(r: R) -> Result<Vec<AccessPoint>, RadioError> {
    let mut aps = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        let ap: AccessPoint = row?;
        ap.validate()?;
        aps.push(ap);
    }
    Ok(aps)
}

fn grid_axis(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let n = ((hi - lo) / spacing + 1e-9).floor() as usize + 1;
    (0..n).map(|i| lo + i as f64 * spacing).collect()
}

/// Offline survey: a grid over `area` at `spacing`, each fingerprint the mean
/// of `samples_per_point` noisy readings per access point. Rows run along x
/// first, starting at `area.min`.
pub fn build_radio_map<R: Rng + ?Sized>(
    aps: &[AccessPoint],
    area: Area,
    spacing: f64,
    samples_per_point: usize,
    rng: &mut R,
) -> Result<RadioMap, RadioError> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(RadioError::InvalidParameter(format!("grid spacing {spacing}")));
    }
    if samples_per_point == 0 {
        return Err(RadioError::InvalidParameter("samples_per_point must be at least 1".into()));
    }
    if aps.is_empty() {
        return Err(RadioError::InvalidParameter("no access points".into()));
    }
    for ap in aps {
        ap.validate()?;
    }
    let (w, h) = (area.max.x - area.min.x, area.max.y - area.min.y);
    if !(w >= 0.0 && h >= 0.0 && w.is_finite() && h.is_finite()) {
        return Err(RadioError::EmptyArea);
    }
    let xs = grid_axis(area.min.x, area.max.x, spacing);
    let ys = grid_axis(area.min.y, area.max.y, spacing);
    let rng: &mut dyn RngCore = &mut RngAdapter(rng);
    let mut fingerprints = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            let pos = Point2::new(x, y);
            let rssi = aps
                .iter()
                .map(|ap| {
                    let sum: f64 = (0..samples_per_point).map(|_| simulate_rssi(ap, pos, Some(&mut *rng))).sum();
                    (ap.id.clone(), sum / samples_per_point as f64)
                })
                .collect();
            fingerprints.push(Fingerprint {
                position: pos,
                rssi: RssiVector(rssi),
            });
        }
    }
    RadioMap::new(fingerprints, spacing)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixSource {
    Wlan,
    Fused,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionFix {
    pub position: Point2,
    /// Radians in (−π, π], present only for fused fixes.
    pub heading: Option<f64>,
    /// Uncertainty radius, meters.
    pub radius: f64,
    pub source: FixSource,
}

impl PositionFix {
    pub fn wlan(position: Point2, radius: f64) -> Self {
        Self {
            position,
            heading: None,
            radius,
            source: FixSource::Wlan,
        }
    }

    pub fn fused(position: Point2, heading: f64, radius: f64) -> Self {
        Self {
            position,
            heading: Some(wrap_angle(heading)),
            radius,
            source: FixSource::Fused,
        }
    }
}

/// Indices of the `k` fingerprints nearest to `observed` in signal space,
/// using only the access points both sides know. Ties go to the lower index.
pub fn nearest_fingerprints(map: &RadioMap, observed: &RssiVector, k: usize) -> Result<Vec<usize>, RadioError> {
    if k == 0 {
        return Err(RadioError::InvalidParameter("k must be at least 1".into()));
    }
    let shared: Vec<(&str, f64)> = map
        .ap_ids()
        .filter_map(|id| observed.get(id).map(|v| (id, v)))
        .collect();
    if shared.is_empty() {
        return Err(RadioError::NoCommonAps);
    }
    let dist: Vec<f64> = map
        .fingerprints
        .iter()
        .map(|f| {
            shared
                .iter()
                .map(|(id, v)| {
                    let d = f.rssi.0[*id] - v;
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    idx.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

/// Unweighted k-NN fix: centroid of the nearest fingerprints, radius the
/// larger of [`WLAN_MIN_RADIUS`] and their spread about the centroid.
pub fn wlan_locate(map: &RadioMap, observed: &RssiVector, k: usize) -> Result<PositionFix, RadioError> {
    let idx = nearest_fingerprints(map, observed, k)?;
    let n = idx.len() as f64;
    let sum = idx
        .iter()
        .fold(Point2::default(), |acc, &i| acc.add(&map.fingerprints[i].position));
    let centroid = sum.scale(1.0 / n);
    let spread = idx
        .iter()
        .map(|&i| map.fingerprints[i].position.distance(&centroid))
        .fold(0.0, f64::max);
    Ok(PositionFix::wlan(centroid, spread.max(WLAN_MIN_RADIUS)))
}
