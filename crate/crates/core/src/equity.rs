//! Socio-economic disadvantage and where added opportunities raise regional
//! accessibility the most.
//!
//! The opportunity improvement potential is the gradient of `χ = pᵀWo` with
//! respect to the opportunities inside the region: `∇ = W̄ᵀp`, where `W̄` is
//! the region-by-region block of the thresholded weight matrix. Zone `i`'s
//! entry sums over the origins `j` that reach it, weighted by `p_j`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::access::Intrazonal;
use crate::error::{Error, Result};
use crate::impedance::ImpedanceParams;
use crate::model::{Basis, CostMatrix, Region, Weights, ZoneSet};

/// The six disadvantage factors, in file-column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Factor {
    Poverty,
    Minority,
    Unemployment,
    LowEducation,
    ZeroVehicle,
    SingleParent,
}

impl Factor {
    pub const ALL: [Factor; 6] = [
        Factor::Poverty,
        Factor::Minority,
        Factor::Unemployment,
        Factor::LowEducation,
        Factor::ZeroVehicle,
        Factor::SingleParent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Factor::Poverty => "poverty",
            Factor::Minority => "minority",
            Factor::Unemployment => "unemployment",
            Factor::LowEducation => "low_education",
            Factor::ZeroVehicle => "zero_vehicle",
            Factor::SingleParent => "single_parent",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Factor {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Factor::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown factor '{s}'"))
    }
}

/// Whether a larger raw value means more disadvantage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    #[default]
    HigherIsWorse,
    HigherIsBetter,
}

/// Raw factor values per zone. A `None` marks a missing measurement.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SediFactors {
    rows: BTreeMap<String, [Option<f64>; 6]>,
}

impl SediFactors {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, zone: impl Into<String>, values: [Option<f64>; 6]) -> Result<()> {
        let zone = zone.into();
        if let Some(v) = values.iter().flatten().find(|v| !v.is_finite()) {
            return Err(Error::InvalidCount { zone, value: *v });
        }
        if self.rows.contains_key(&zone) {
            return Err(Error::DuplicateZone(zone));
        }
        self.rows.insert(zone, values);
        Ok(())
    }

    pub fn get(&self, zone: &str) -> Option<&[Option<f64>; 6]> {
        self.rows.get(zone)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Option<f64>; 6])> + '_ {
        self.rows.iter().map(|(z, v)| (z.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Applies `f` to every present value of one factor.
    pub fn map_factor(&self, factor: Factor, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for values in out.rows.values_mut() {
            if let Some(v) = values[factor.slot()].as_mut() {
                *v = f(*v);
            }
        }
        out
    }
}

/// Per-factor direction and weight of the composite.
#[derive(Debug, Clone, PartialEq)]
pub struct SediConfig {
    pub directions: [Direction; 6],
    pub weights: [f64; 6],
}

impl Default for SediConfig {
    /// Every column is a share of a disadvantaged condition, so larger is
    /// worse; factors are weighted equally.
    fn default() -> Self {
        SediConfig { directions: [Direction::HigherIsWorse; 6], weights: [1.0; 6] }
    }
}

impl SediConfig {
    pub fn with_direction(mut self, factor: Factor, direction: Direction) -> Self {
        self.directions[factor.slot()] = direction;
        self
    }

    fn validate(&self) -> Result<f64> {
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidConfig("factor weights must be finite and nonnegative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidConfig("factor weights sum to zero".into()));
        }
        Ok(total)
    }
}

/// Composite disadvantage index in `[0, 1]`, relative to the region it was ranked in.
#[derive(Debug, Clone, PartialEq)]
pub struct SediTable {
    pub zone_ids: Vec<String>,
    pub values: Vec<f64>,
    /// Region zones dropped for missing factors.
    pub excluded: Vec<String>,
}

impl SediTable {
    pub fn get(&self, zone: &str) -> Option<f64> {
        self.zone_ids.iter().position(|z| z == zone).map(|i| self.values[i])
    }

    pub fn as_map(&self) -> HashMap<&str, f64> {
        self.zone_ids.iter().map(String::as_str).zip(self.values.iter().copied()).collect()
    }
}

/// Fractional ranks `(rank − 1)/(N − 1)` with ties sharing their average rank.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // 0-based positions start..end share their mean
        let mean = (start + end - 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = if n > 1 { mean / (n - 1) as f64 } else { 0.0 };
        }
        start = end;
    }
    ranks
}

/// Ranks each factor within the region and averages the disadvantage-aligned
/// fractional ranks.
pub fn sedi(factors: &SediFactors, region: &Region, config: &SediConfig) -> Result<SediTable> {
    let total_weight = config.validate()?;
    let mut zone_ids = Vec::new();
    let mut excluded = Vec::new();
    let mut rows: Vec<[f64; 6]> = Vec::new();
    for id in region.zone_ids() {
        match factors.get(id) {
            Some(values) if values.iter().all(Option::is_some) => {
                zone_ids.push(id.clone());
                rows.push(values.map(|v| v.unwrap()));
            }
            _ => excluded.push(id.clone()),
        }
    }
    if zone_ids.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} zones with complete factors; at least 2 required",
            zone_ids.len()
        )));
    }

    let mut composite = vec![0.0; zone_ids.len()];
    for factor in Factor::ALL {
        let k = factor.slot();
        let column: Vec<f64> = rows
            .iter()
            .map(|r| match config.directions[k] {
                Direction::HigherIsWorse => r[k],
                Direction::HigherIsBetter => -r[k],
            })
            .collect();
        for (acc, r) in composite.iter_mut().zip(fractional_ranks(&column)) {
            *acc += config.weights[k] * r;
        }
    }
    let values = composite.into_iter().map(|c| (c / total_weight).min(1.0)).collect();
    Ok(SediTable { zone_ids, values, excluded })
}

/// Population weights tilted toward disadvantaged zones:
/// `p̃_i ∝ n_i · (1 + λ·SEDI_i)`. With `λ = 0` this equals
/// [`crate::model::population_weights`] bit for bit.
pub fn sedi_weighted_population(
    zones: &ZoneSet,
    sedi: &SediTable,
    region: &Region,
    basis: Basis,
    lambda: f64,
) -> Result<Weights> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidLambda(lambda));
    }
    let index = sedi.as_map();
    let raw = region
        .zone_ids()
        .iter()
        .map(|id| {
            let n = zones.get(id).ok_or_else(|| Error::UnknownZone(id.clone()))?.count(basis);
            match index.get(id.as_str()) {
                Some(&s) => Ok(n * (1.0 + lambda * s)),
                None if n == 0.0 => Ok(n),
                None => Err(Error::MissingIndex(id.clone())),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Weights::normalized(region, raw, basis.as_str())
}

/// How the gradient's population vector was formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    Unweighted,
    Sedi { lambda: f64 },
}

impl Weighting {
    pub fn label(&self) -> String {
        match self {
            Weighting::Unweighted => "unweighted".to_string(),
            Weighting::Sedi { lambda } => format!("sedi(lambda={lambda})"),
        }
    }
}

/// Marginal gain in regional accessibility per added opportunity in each zone.
#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementPotential {
    pub zone_ids: Vec<String>,
    pub gradient: Vec<f64>,
    /// 1 = highest potential; ties go to the smaller zone id.
    pub rank: Vec<usize>,
    pub weighting: Weighting,
}

/// Ranks descending by value, ties broken by ascending id.
pub fn rank_descending(zone_ids: &[String], values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then_with(|| zone_ids[a].cmp(&zone_ids[b])));
    let mut rank = vec![0; values.len()];
    for (r, &k) in order.iter().enumerate() {
        rank[k] = r + 1;
    }
    rank
}

/// `gradient_i = Σ_{j∈S, t_ji ≤ τ} p_j · f(t_ji)`.
///
/// Weights are evaluated row-parallel; the scatter into destination slots
/// runs in region order so the sums never depend on the thread count.
pub fn improvement_potential(
    region: &Region,
    matrix: &CostMatrix,
    params: &ImpedanceParams,
    tau: f64,
    weights: &Weights,
    intrazonal: &Intrazonal,
    weighting: Weighting,
) -> Result<ImprovementPotential> {
    matrix.check_threshold(tau)?;
    if params.mode != matrix.mode() {
        return Err(Error::ModeMismatch { params: params.mode, matrix: matrix.mode() });
    }
    weights.check_aligned(region.zone_ids())?;
    let positions = matrix.region_positions(region)?;
    let mut slot_of = vec![usize::MAX; matrix.len()];
    for (slot, &pos) in positions.iter().enumerate() {
        slot_of[pos] = slot;
    }

    let p = weights.values();
    let contributions: Vec<Vec<(usize, f64)>> = positions
        .par_iter()
        .zip(region.zone_ids().par_iter())
        .zip(p.par_iter())
        .map(|((&j, id), &p_j)| {
            let self_minutes = match intrazonal {
                Intrazonal::Override(map) => map.get(id).copied(),
                Intrazonal::Matrix => None,
            };
            matrix
                .row(j)
                .filter_map(|(i, stored)| {
                    let slot = slot_of[i];
                    let t = if i == j { self_minutes.unwrap_or(stored) } else { stored };
                    (slot != usize::MAX && t <= tau).then(|| (slot, p_j * params.weight(t)))
                })
                .collect()
        })
        .collect();

    let mut gradient = vec![0.0; positions.len()];
    for row in contributions {
        for (slot, value) in row {
            gradient[slot] += value;
        }
    }
    let rank = rank_descending(region.zone_ids(), &gradient);
    Ok(ImprovementPotential { zone_ids: region.zone_ids().to_vec(), gradient, rank, weighting })
}

/// `rank_unweighted − rank_weighted` per zone; positive means the weighting
/// moved the zone up.
pub fn rank_shift(unweighted: &ImprovementPotential, weighted: &ImprovementPotential) -> Result<Vec<(String, i64)>> {
    if unweighted.zone_ids != weighted.zone_ids {
        return Err(Error::KeyMismatch("improvement potentials cover different regions".into()));
    }
    Ok(unweighted
        .zone_ids
        .iter()
        .zip(unweighted.rank.iter().zip(&weighted.rank))
        .map(|(z, (&u, &w))| (z.clone(), u as i64 - w as i64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{population_weights, Mode, Zone};

    fn region(ids: &[&str]) -> Region {
        Region::new(ids.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn single_factor(values: &[f64], factor: Factor) -> SediFactors {
        let mut f = SediFactors::new();
        for (i, &v) in values.iter().enumerate() {
            let mut row = [Some(0.0); 6];
            row[factor.slot()] = Some(v);
            f.insert(format!("z{i}"), row).unwrap();
        }
        f
    }

    #[test]
    fn fractional_rank_examples() {
        assert_eq!(fractional_ranks(&[1.0, 2.0, 3.0, 4.0]), vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert_eq!(fractional_ranks(&[5.0, 5.0, 1.0]), vec![0.75, 0.75, 0.0]);
    }

    #[test]
    fn sedi_direction_inversion() {
        let ids = ["z0", "z1", "z2", "z3"];
        let f = single_factor(&[1.0, 2.0, 3.0, 4.0], Factor::ZeroVehicle);
        let cfg = SediConfig { weights: [0.0, 0.0, 0.0, 0.0, 1.0, 0.0], ..SediConfig::default() };
        let worse = sedi(&f, &region(&ids), &cfg).unwrap();
        assert_eq!(worse.values, vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        let better = sedi(&f, &region(&ids), &cfg.with_direction(Factor::ZeroVehicle, Direction::HigherIsBetter)).unwrap();
        assert_eq!(better.values, vec![1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0]);
    }

    #[test]
    fn sedi_excludes_incomplete_zones() {
        let mut f = single_factor(&[1.0, 2.0, 3.0], Factor::Poverty);
        f.insert("z3", [Some(1.0), None, Some(1.0), Some(1.0), Some(1.0), Some(1.0)]).unwrap();
        let t = sedi(&f, &region(&["z0", "z1", "z2", "z3", "z9"]), &SediConfig::default()).unwrap();
        assert_eq!(t.zone_ids, vec!["z0", "z1", "z2"]);
        assert_eq!(t.excluded, vec!["z3", "z9"]);
        assert!(matches!(sedi(&f, &region(&["z0", "z3"]), &SediConfig::default()), Err(Error::InsufficientData(_))));
    }

    fn toy_zones() -> ZoneSet {
        ZoneSet::new(["A", "B", "C"].iter().map(|id| Zone::new(*id, 0.0, 0.0, 100.0, 10.0).unwrap()).collect()).unwrap()
    }

    #[test]
    fn weighted_population_examples() {
        let zones = ZoneSet::new(vec![
            Zone::new("A", 0.0, 0.0, 50.0, 1.0).unwrap(),
            Zone::new("B", 0.0, 0.0, 50.0, 1.0).unwrap(),
        ])
        .unwrap();
        let r = Region::all(&zones);
        let table = SediTable { zone_ids: r.zone_ids().to_vec(), values: vec![0.0, 1.0], excluded: vec![] };
        let w = sedi_weighted_population(&zones, &table, &r, Basis::Population, 1.0).unwrap();
        assert!((w.values()[0] - 1.0 / 3.0).abs() < 1e-15 && (w.values()[1] - 2.0 / 3.0).abs() < 1e-15);
        let zero = sedi_weighted_population(&zones, &table, &r, Basis::Population, 0.0).unwrap();
        assert_eq!(zero, population_weights(&r, &zones, Basis::Population).unwrap());
        let partial = SediTable { zone_ids: vec!["A".into()], values: vec![0.5], excluded: vec![] };
        assert_eq!(
            sedi_weighted_population(&zones, &partial, &r, Basis::Population, 1.0),
            Err(Error::MissingIndex("B".into()))
        );
        assert!(sedi_weighted_population(&zones, &table, &r, Basis::Population, -1.0).is_err());
    }

    fn toy_matrix() -> CostMatrix {
        let pairs = [("A", "B", 10.0), ("A", "C", 50.0), ("B", "C", 10.0)];
        let triplets = pairs
            .iter()
            .flat_map(|&(a, b, t)| [(a.to_string(), b.to_string(), t), (b.to_string(), a.to_string(), t)])
            .collect::<Vec<_>>();
        CostMatrix::from_triplets(Mode::Drive, 90.0, ["A", "B", "C"].map(String::from), triplets).unwrap()
    }

    fn base() -> ImpedanceParams {
        ImpedanceParams::power_exponential("essential_stores", Mode::Drive, 0.008, 1.467).unwrap()
    }

    #[test]
    fn toy_gradient_peaks_at_center() {
        let zones = toy_zones();
        let r = Region::all(&zones);
        let p = population_weights(&r, &zones, Basis::Population).unwrap();
        let g = improvement_potential(&r, &toy_matrix(), &base(), 30.0, &p, &Intrazonal::Matrix, Weighting::Unweighted)
            .unwrap();
        // (f(10) + 1 + f(10)) / 3
        assert!((g.gradient[1] - 0.860_659_205_793_590_5).abs() < 1e-12);
        assert_eq!(g.rank, vec![2, 1, 3]);
    }

    #[test]
    fn self_pairs_only_gives_p() {
        let zones = toy_zones();
        let r = Region::all(&zones);
        let p = population_weights(&r, &zones, Basis::Population).unwrap();
        let g = improvement_potential(&r, &toy_matrix(), &base(), 5.0, &p, &Intrazonal::Matrix, Weighting::Unweighted)
            .unwrap();
        assert_eq!(g.gradient, p.values());
    }

    #[test]
    fn rank_shift_examples() {
        let zones = toy_zones();
        let r = Region::all(&zones);
        let m = toy_matrix();
        let p = population_weights(&r, &zones, Basis::Population).unwrap();
        let unweighted = improvement_potential(&r, &m, &base(), 30.0, &p, &Intrazonal::Matrix, Weighting::Unweighted).unwrap();
        let same = rank_shift(&unweighted, &unweighted).unwrap();
        assert!(same.iter().all(|(_, s)| *s == 0));

        let table = SediTable { zone_ids: r.zone_ids().to_vec(), values: vec![0.0, 0.0, 1.0], excluded: vec![] };
        let tilted = sedi_weighted_population(&zones, &table, &r, Basis::Population, 5.0).unwrap();
        let weighted =
            improvement_potential(&r, &m, &base(), 30.0, &tilted, &Intrazonal::Matrix, Weighting::Sedi { lambda: 5.0 }).unwrap();
        let shift = rank_shift(&unweighted, &weighted).unwrap();
        assert_eq!(shift, vec![("A".into(), -1), ("B".into(), -1), ("C".into(), 2)]);
        assert_eq!(shift.iter().map(|(_, s)| s).sum::<i64>(), 0);

        let other = ImprovementPotential { zone_ids: vec!["A".into()], ..unweighted.clone() };
        assert!(matches!(rank_shift(&unweighted, &other), Err(Error::KeyMismatch(_))));
    }
}
