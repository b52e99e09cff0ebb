//! Zonal accessibility `a_i = Σ_{j: t_ij ≤ τ} o_j · f(t_ij)`, its regional
//! aggregate `χ = Σ p_i a_i`, threshold sweeps and the contour-vs-gravity
//! comparison.
//!
//! Rows are independent and run in parallel, but each row is summed
//! sequentially in ascending destination-id order, so results are
//! bit-identical at any thread count.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::impedance::ImpedanceParams;
use crate::model::{CostMatrix, Mode, OpportunityTable, Region, Weights};

/// Travel time used for a zone's own opportunities.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum Intrazonal {
    /// Use the matrix self pair, which is 0 unless the input supplied one.
    #[default]
    Matrix,
    /// Per-zone minutes; zones not listed fall back to the matrix.
    Override(HashMap<String, f64>),
}

impl Intrazonal {
    pub fn overrides(minutes: HashMap<String, f64>) -> Result<Self> {
        if let Some((_, &t)) = minutes.iter().find(|(_, t)| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::InvalidDuration(t));
        }
        Ok(Intrazonal::Override(minutes))
    }

    fn minutes_for(&self, zone: &str) -> Option<f64> {
        match self {
            Intrazonal::Matrix => None,
            Intrazonal::Override(map) => map.get(zone).copied(),
        }
    }
}

/// Per-zone accessibility for one (kind, mode, τ), aligned with a region.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessibilityResult {
    pub kind: String,
    pub mode: Mode,
    pub tau: f64,
    zone_ids: Vec<String>,
    values: Vec<f64>,
}

impl AccessibilityResult {
    pub fn new(kind: impl Into<String>, mode: Mode, tau: f64, zone_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if zone_ids.len() != values.len() {
            return Err(Error::DimensionMismatch(format!("{} zones but {} values", zone_ids.len(), values.len())));
        }
        if let Some(&v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidCount { zone: String::new(), value: v });
        }
        Ok(AccessibilityResult { kind: kind.into(), mode, tau, zone_ids, values })
    }

    pub fn zone_ids(&self) -> &[String] {
        &self.zone_ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.zone_ids.iter().map(String::as_str).zip(self.values.iter().copied())
    }

    pub fn get(&self, zone: &str) -> Option<f64> {
        self.zone_ids.iter().position(|z| z == zone).map(|i| self.values[i])
    }

    pub fn same_key(&self, other: &AccessibilityResult) -> bool {
        self.kind == other.kind && self.mode == other.mode && self.tau == other.tau
    }
}

/// Shared validation of a kernel call; returns region row positions and the
/// dense opportunity vector over the matrix universe.
fn prepare(
    region: &Region,
    matrix: &CostMatrix,
    opps: &OpportunityTable,
    kind: &str,
    params: &ImpedanceParams,
    max_tau: f64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    matrix.check_threshold(max_tau)?;
    if params.mode != matrix.mode() {
        return Err(Error::ModeMismatch { params: params.mode, matrix: matrix.mode() });
    }
    let o = opps.dense(kind, matrix.ids())?;
    let positions = matrix.region_positions(region)?;
    Ok((positions, o))
}

/// Accumulates one origin row into `acc`, one slot per ascending threshold.
#[inline]
fn accumulate_row(
    matrix: &CostMatrix,
    origin: usize,
    o: &[f64],
    params: &ImpedanceParams,
    taus: &[f64],
    self_minutes: Option<f64>,
    acc: &mut [f64],
) {
    let max_tau = taus[taus.len() - 1];
    for (j, stored) in matrix.row(origin) {
        let t = if j == origin { self_minutes.unwrap_or(stored) } else { stored };
        if o[j] == 0.0 || t > max_tau {
            continue;
        }
        let term = o[j] * params.weight(t);
        for (slot, &tau) in acc.iter_mut().zip(taus) {
            if t <= tau {
                *slot += term;
            }
        }
    }
}

fn kernel(
    region: &Region,
    matrix: &CostMatrix,
    o: &[f64],
    positions: &[usize],
    params: &ImpedanceParams,
    taus: &[f64],
    intrazonal: &Intrazonal,
) -> Vec<Vec<f64>> {
    positions
        .par_iter()
        .zip(region.zone_ids().par_iter())
        .map(|(&i, id)| {
            let mut acc = vec![0.0; taus.len()];
            accumulate_row(matrix, i, o, params, taus, intrazonal.minutes_for(id), &mut acc);
            acc
        })
        .collect()
}

/// Accessibility of every zone in `region` to opportunities of `kind`.
pub fn zonal_accessibility(
    region: &Region,
    matrix: &CostMatrix,
    opps: &OpportunityTable,
    kind: &str,
    params: &ImpedanceParams,
    tau: f64,
    intrazonal: &Intrazonal,
) -> Result<AccessibilityResult> {
    let (positions, o) = prepare(region, matrix, opps, kind, params, tau)?;
    let rows = kernel(region, matrix, &o, &positions, params, &[tau], intrazonal);
    Ok(AccessibilityResult {
        kind: kind.to_string(),
        mode: matrix.mode(),
        tau,
        zone_ids: region.zone_ids().to_vec(),
        values: rows.into_iter().map(|r| r[0]).collect(),
    })
}

/// `χ = Σ_i p_i · a_i` over the region.
pub fn aggregate(region: &Region, result: &AccessibilityResult, weights: &Weights) -> Result<f64> {
    if result.zone_ids() != region.zone_ids() {
        return Err(Error::DimensionMismatch(format!(
            "result covers {} zones, region has {}",
            result.zone_ids().len(),
            region.len()
        )));
    }
    weights.check_aligned(region.zone_ids())?;
    Ok(weights.values().iter().zip(result.values()).map(|(p, a)| p * a).sum())
}

/// Accessibility at each threshold, in the order given.
///
/// All thresholds share one pass over the matrix; each per-threshold sum
/// sees its terms in the same order as [`zonal_accessibility`] would, so the
/// values are bit-identical to separate calls.
pub fn threshold_sweep(
    region: &Region,
    matrix: &CostMatrix,
    opps: &OpportunityTable,
    kind: &str,
    params: &ImpedanceParams,
    taus: &[f64],
    intrazonal: &Intrazonal,
) -> Result<Vec<AccessibilityResult>> {
    if taus.is_empty() {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..taus.len()).collect();
    for &tau in taus {
        matrix.check_threshold(tau)?;
    }
    order.sort_by(|&a, &b| taus[a].total_cmp(&taus[b]));
    let sorted: Vec<f64> = order.iter().map(|&k| taus[k]).collect();
    let (positions, o) = prepare(region, matrix, opps, kind, params, sorted[sorted.len() - 1])?;
    let rows = kernel(region, matrix, &o, &positions, params, &sorted, intrazonal);

    let mut out: Vec<Option<AccessibilityResult>> = vec![None; taus.len()];
    for (slot, &k) in order.iter().enumerate() {
        out[k] = Some(AccessibilityResult {
            kind: kind.to_string(),
            mode: matrix.mode(),
            tau: taus[k],
            zone_ids: region.zone_ids().to_vec(),
            values: rows.iter().map(|r| r[slot]).collect(),
        });
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

/// Gravity and contour accessibility side by side, with the percent by which
/// the contour measure overstates the gravity one.
#[derive(Debug, Clone, PartialEq)]
pub struct Overestimation {
    pub gravity: AccessibilityResult,
    pub contour: AccessibilityResult,
    /// `100·(contour − gravity)/gravity`; `None` where gravity is 0.
    pub percent: Vec<Option<f64>>,
}

impl Overestimation {
    /// Zones whose gravity accessibility is zero.
    pub fn undefined(&self) -> Vec<&str> {
        self.gravity
            .zone_ids()
            .iter()
            .zip(&self.percent)
            .filter(|(_, p)| p.is_none())
            .map(|(z, _)| z.as_str())
            .collect()
    }

    /// Mean over zones where the percentage is defined.
    pub fn mean_percent(&self) -> Option<f64> {
        let defined: Vec<f64> = self.percent.iter().flatten().copied().collect();
        if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        }
    }
}

pub fn contour_overestimation(
    region: &Region,
    matrix: &CostMatrix,
    opps: &OpportunityTable,
    kind: &str,
    params: &ImpedanceParams,
    tau: f64,
    intrazonal: &Intrazonal,
) -> Result<Overestimation> {
    let gravity = zonal_accessibility(region, matrix, opps, kind, params, tau, intrazonal)?;
    let contour = zonal_accessibility(region, matrix, opps, kind, &params.as_contour(), tau, intrazonal)?;
    let percent = gravity
        .values()
        .iter()
        .zip(contour.values())
        .map(|(&g, &c)| if g > 0.0 { Some(100.0 * (c - g) / g) } else { None })
        .collect();
    Ok(Overestimation { gravity, contour, percent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Zone;
    use crate::model::ZoneSet;

    fn params() -> ImpedanceParams {
        ImpedanceParams::power_exponential("jobs_total", Mode::Drive, 0.008, 1.467).unwrap()
    }

    fn abc() -> (Region, CostMatrix, OpportunityTable) {
        let matrix = CostMatrix::from_triplets(
            Mode::Drive,
            120.0,
            ["A", "B", "C"].map(String::from),
            vec![("A".into(), "B".into(), 30.0), ("A".into(), "C".into(), 100.0)],
        )
        .unwrap();
        let mut opps = OpportunityTable::new();
        for (z, c) in [("A", 10.0), ("B", 20.0), ("C", 30.0)] {
            opps.set(z, "jobs_total", c).unwrap();
        }
        (Region::new(vec!["A".into()]).unwrap(), matrix, opps)
    }

    #[test]
    fn single_zone_counts_own_opportunities() {
        let matrix = CostMatrix::from_triplets(Mode::Drive, 90.0, ["A".to_string()], vec![]).unwrap();
        let mut opps = OpportunityTable::new();
        opps.set("A", "jobs_total", 5.0).unwrap();
        let region = Region::new(vec!["A".into()]).unwrap();
        let r = zonal_accessibility(&region, &matrix, &opps, "jobs_total", &params(), 30.0, &Intrazonal::Matrix).unwrap();
        assert_eq!(r.values(), &[5.0]);
    }

    #[test]
    fn three_zone_gravity_and_contour() {
        let (region, matrix, opps) = abc();
        let r = zonal_accessibility(&region, &matrix, &opps, "jobs_total", &params(), 60.0, &Intrazonal::Matrix).unwrap();
        // 10 + 20·exp(-0.008·30^1.467)
        assert!((r.values()[0] - 16.176563391180744).abs() < 1e-9);
        let c = zonal_accessibility(&region, &matrix, &opps, "jobs_total", &params().as_contour(), 60.0, &Intrazonal::Matrix)
            .unwrap();
        assert_eq!(c.values(), &[30.0]);
    }

    #[test]
    fn kernel_errors() {
        let (region, matrix, opps) = abc();
        let p = params();
        let none = &Intrazonal::Matrix;
        assert!(matches!(
            zonal_accessibility(&region, &matrix, &opps, "jobs_total", &p, 150.0, none),
            Err(Error::ThresholdExceedsPrune { .. })
        ));
        assert_eq!(
            zonal_accessibility(&region, &matrix, &opps, "nope", &p, 60.0, none),
            Err(Error::UnknownKind("nope".into()))
        );
        let walk = ImpedanceParams::power_exponential("jobs_total", Mode::Walk, 0.1, 1.0).unwrap();
        assert!(matches!(
            zonal_accessibility(&region, &matrix, &opps, "jobs_total", &walk, 60.0, none),
            Err(Error::ModeMismatch { .. })
        ));
        let stranger = Region::new(vec!["Z".into()]).unwrap();
        assert_eq!(
            zonal_accessibility(&stranger, &matrix, &opps, "jobs_total", &p, 60.0, none),
            Err(Error::UnknownZone("Z".into()))
        );
    }

    #[test]
    fn intrazonal_override() {
        let (region, matrix, opps) = abc();
        let over = Intrazonal::overrides(HashMap::from([("A".to_string(), 30.0)])).unwrap();
        let r = zonal_accessibility(&region, &matrix, &opps, "jobs_total", &params(), 60.0, &over).unwrap();
        let f30 = params().eval(30.0).unwrap();
        assert!((r.values()[0] - (10.0 * f30 + 20.0 * f30)).abs() < 1e-12);
        assert!(Intrazonal::overrides(HashMap::from([("A".to_string(), -1.0)])).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let region = Region::new(vec!["a".into(), "b".into()]).unwrap();
        let ids = region.zone_ids().to_vec();
        let result = AccessibilityResult::new("k", Mode::Drive, 30.0, ids.clone(), vec![10.0, 20.0]).unwrap();
        let half = Weights::new(ids.clone(), vec![0.5, 0.5]).unwrap();
        assert_eq!(aggregate(&region, &result, &half).unwrap(), 15.0);
        let skew = Weights::new(ids.clone(), vec![0.25, 0.75]).unwrap();
        assert_eq!(aggregate(&region, &result, &skew).unwrap(), 17.5);
        let misaligned = Weights::new(vec!["b".into(), "a".into()], vec![0.25, 0.75]).unwrap();
        assert!(matches!(aggregate(&region, &result, &misaligned), Err(Error::DimensionMismatch(_))));

        let one = Region::new(vec!["x".into()]).unwrap();
        let r = AccessibilityResult::new("k", Mode::Drive, 30.0, vec!["x".into()], vec![7.0]).unwrap();
        let w = Weights::new(vec!["x".into()], vec![1.0]).unwrap();
        assert_eq!(aggregate(&one, &r, &w).unwrap(), 7.0);
    }

    #[test]
    fn sweep_matches_individual_calls() {
        let (region, matrix, opps) = abc();
        let taus = [60.0, 15.0, 30.0, 100.0];
        let swept = threshold_sweep(&region, &matrix, &opps, "jobs_total", &params(), &taus, &Intrazonal::Matrix).unwrap();
        for (r, &tau) in swept.iter().zip(&taus) {
            let single = zonal_accessibility(&region, &matrix, &opps, "jobs_total", &params(), tau, &Intrazonal::Matrix).unwrap();
            assert_eq!(r, &single);
        }
        let empty = threshold_sweep(&region, &matrix, &opps, "jobs_total", &params(), &[], &Intrazonal::Matrix).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn overestimation_examples() {
        let zones = ZoneSet::new(vec![
            Zone::new("A", 0.0, 0.0, 1.0, 1.0).unwrap(),
            Zone::new("B", 0.0, 0.1, 1.0, 1.0).unwrap(),
            Zone::new("C", 0.0, 0.2, 1.0, 1.0).unwrap(),
        ])
        .unwrap();
        let matrix = CostMatrix::from_triplets(
            Mode::Drive,
            90.0,
            zones.ids(),
            vec![("A".into(), "B".into(), 30.0), ("C".into(), "B".into(), 80.0)],
        )
        .unwrap();
        let mut opps = OpportunityTable::new();
        opps.set("B", "jobs_total", 10.0).unwrap();
        let region = Region::all(&zones);
        let over = contour_overestimation(&region, &matrix, &opps, "jobs_total", &params(), 60.0, &Intrazonal::Matrix).unwrap();
        // A: gravity 10·f(30), contour 10
        let pct = over.percent[0].unwrap();
        assert!((pct - 223.80465856720843).abs() < 1e-9, "{pct}");
        // B: everything at t = 0
        assert_eq!(over.percent[1], Some(0.0));
        // C: B lies beyond the threshold
        assert_eq!(over.percent[2], None);
        assert_eq!(over.undefined(), vec!["C"]);
    }
}
