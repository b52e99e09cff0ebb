//! Accessibility efficiency: observed accessibility divided by the
//! accessibility of a frictionless plane where every trip runs in a straight
//! line at the modal speed limit.

use rayon::prelude::*;

use crate::access::AccessibilityResult;
use crate::error::{Error, Result};
use crate::impedance::ImpedanceParams;
use crate::model::{haversine_unchecked, LatLon, Mode, OpportunityTable, Region, Weights, ZoneSet, EARTH_RADIUS_KM, KM_PER_MILE};

/// Presumed maximum speed of a mode, in mi/h.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModalSpeedLimit {
    mode: Mode,
    mph: f64,
}

impl ModalSpeedLimit {
    pub fn new(mode: Mode, mph: f64) -> Result<Self> {
        if !(mph.is_finite() && mph > 0.0) {
            return Err(Error::InvalidSpeed(mph));
        }
        Ok(ModalSpeedLimit { mode, mph })
    }

    /// 60, 4 and 16 mi/h for driving, walking and bicycling.
    pub fn default_for(mode: Mode) -> Self {
        let mph = match mode {
            Mode::Drive => 60.0,
            Mode::Walk => 4.0,
            Mode::Bike => 16.0,
        };
        ModalSpeedLimit { mode, mph }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn mph(&self) -> f64 {
        self.mph
    }

    pub fn km_per_min(&self) -> f64 {
        mph_to_km_per_min(self.mph)
    }
}

/// Converts mi/h to km/min.
pub fn mph_to_km_per_min(mph: f64) -> f64 {
    mph * KM_PER_MILE / 60.0
}

/// Frictionless weight for a pair `d_km` apart: `f(d/v̂)` inside the
/// catchment `d ≤ τ·v̂`, else 0.
pub fn ideal_weight(params: &ImpedanceParams, d_km: f64, speed: &ModalSpeedLimit, tau: f64) -> Result<f64> {
    if !(d_km.is_finite() && d_km >= 0.0) {
        return Err(Error::InvalidConfig(format!("distance {d_km} km must be finite and nonnegative")));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidThreshold(tau));
    }
    ModalSpeedLimit::new(speed.mode, speed.mph)?;
    let v = speed.km_per_min();
    Ok(if d_km <= tau * v { params.weight(d_km / v) } else { 0.0 })
}

/// Latitude-sorted centroids for radius queries.
struct CatchmentIndex {
    by_lat: Vec<(f64, usize)>,
    points: Vec<LatLon>,
}

impl CatchmentIndex {
    fn new(zones: &ZoneSet) -> Self {
        let points: Vec<LatLon> = zones.iter().map(|z| z.centroid()).collect();
        let mut by_lat: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (p.lat, i)).collect();
        by_lat.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        CatchmentIndex { by_lat, points }
    }

    /// Positions within `radius_km` of `center`, ascending, with distances.
    fn within(&self, center: LatLon, radius_km: f64) -> Vec<(usize, f64)> {
        let angle = radius_km / EARTH_RADIUS_KM;
        let band = angle.to_degrees();
        let lo = self.by_lat.partition_point(|&(lat, _)| lat < center.lat - band);
        let hi = self.by_lat.partition_point(|&(lat, _)| lat <= center.lat + band);
        // longitude half-width of the spherical cap, when it does not cover a pole
        let lon_limit = if angle < std::f64::consts::FRAC_PI_2 && center.lat.abs() + band < 90.0 {
            let s = angle.sin() / center.lat.to_radians().cos();
            (s < 1.0).then(|| s.asin().to_degrees() + 1e-9)
        } else {
            None
        };
        let mut out: Vec<(usize, f64)> = self.by_lat[lo..hi]
            .iter()
            .filter(|&&(_, i)| match lon_limit {
                Some(limit) => {
                    let dlon = (self.points[i].lon - center.lon).abs();
                    dlon.min(360.0 - dlon) <= limit
                }
                None => true,
            })
            .filter_map(|&(_, i)| {
                let d = haversine_unchecked(center, self.points[i]);
                (d <= radius_km).then_some((i, d))
            })
            .collect();
        out.sort_by_key(|&(i, _)| i);
        out
    }
}

/// Maximum possible accessibility `â_i = Σ_j o_j · ŵ_ij` over the whole
/// environment `zones`, using straight-line distances at `speed`.
pub fn ideal_accessibility(
    region: &Region,
    zones: &ZoneSet,
    opps: &OpportunityTable,
    kind: &str,
    params: &ImpedanceParams,
    speed: &ModalSpeedLimit,
    tau: f64,
) -> Result<AccessibilityResult> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidThreshold(tau));
    }
    if params.mode != speed.mode {
        return Err(Error::ModeMismatch { params: params.mode, matrix: speed.mode });
    }
    ModalSpeedLimit::new(speed.mode, speed.mph)?;
    for (zone, count) in opps.entries(kind)? {
        if count > 0.0 && zones.get(zone).is_none() {
            return Err(Error::MissingGeometry(zone.to_string()));
        }
    }
    let o = opps.dense(kind, &zones.ids())?;
    let positions = region
        .zone_ids()
        .iter()
        .map(|id| zones.position(id).ok_or_else(|| Error::UnknownZone(id.clone())))
        .collect::<Result<Vec<_>>>()?;

    let index = CatchmentIndex::new(zones);
    let v = speed.km_per_min();
    let radius = tau * v;
    let values = positions
        .par_iter()
        .map(|&i| {
            index
                .within(index.points[i], radius)
                .into_iter()
                .filter(|&(j, _)| o[j] != 0.0)
                .map(|(j, d)| o[j] * params.weight(d / v))
                .fold(0.0, |acc, term| acc + term)
        })
        .collect();
    AccessibilityResult::new(kind, params.mode, tau, region.zone_ids().to_vec(), values)
}

/// Zonal and aggregate efficiency for one (region, kind, mode, τ).
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyResult {
    pub kind: String,
    pub mode: Mode,
    pub tau: f64,
    pub zone_ids: Vec<String>,
    /// `a_i / â_i`, `None` where `â_i = 0`.
    pub zonal: Vec<Option<f64>>,
    /// `χ / χ̂`, `None` when `χ̂ = 0`.
    pub aggregate: Option<f64>,
    pub observed_aggregate: f64,
    pub ideal_aggregate: f64,
    /// Zones with `η_i > 1`, reported rather than clamped.
    pub flagged: Vec<String>,
}

pub fn efficiency(
    region: &Region,
    observed: &AccessibilityResult,
    ideal: &AccessibilityResult,
    weights: &Weights,
) -> Result<EfficiencyResult> {
    if !observed.same_key(ideal) {
        return Err(Error::KeyMismatch(format!(
            "observed ({}, {}, {}) vs ideal ({}, {}, {})",
            observed.kind, observed.mode, observed.tau, ideal.kind, ideal.mode, ideal.tau
        )));
    }
    if observed.zone_ids() != region.zone_ids() || ideal.zone_ids() != region.zone_ids() {
        return Err(Error::KeyMismatch("results do not cover the region in order".into()));
    }
    weights.check_aligned(region.zone_ids())?;

    let zonal: Vec<Option<f64>> = observed
        .values()
        .iter()
        .zip(ideal.values())
        .map(|(&a, &ideal)| (ideal > 0.0).then(|| a / ideal))
        .collect();
    let flagged = region
        .zone_ids()
        .iter()
        .zip(&zonal)
        .filter(|(_, eta)| matches!(eta, Some(e) if *e > 1.0))
        .map(|(z, _)| z.clone())
        .collect();
    let p = weights.values();
    let chi: f64 = p.iter().zip(observed.values()).map(|(p, a)| p * a).sum();
    let chi_hat: f64 = p.iter().zip(ideal.values()).map(|(p, a)| p * a).sum();
    Ok(EfficiencyResult {
        kind: observed.kind.clone(),
        mode: observed.mode,
        tau: observed.tau,
        zone_ids: region.zone_ids().to_vec(),
        zonal,
        aggregate: (chi_hat > 0.0).then(|| chi / chi_hat),
        observed_aggregate: chi,
        ideal_aggregate: chi_hat,
        flagged,
    })
}
