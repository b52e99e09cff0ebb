//! Domain types shared by every analysis: zones, regions, sparse travel-time
//! matrices and opportunity tables.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius (IUGG), kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Kilometers per statute mile.
pub const KM_PER_MILE: f64 = 1.609344;

/// Default opportunity kinds.
pub const DEFAULT_KINDS: [&str; 6] = [
    "jobs_total",
    "jobs_high",
    "jobs_low",
    "essential_stores",
    "primary_services",
    "leisure",
];

/// Travel mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Drive,
    Walk,
    Bike,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Drive, Mode::Walk, Mode::Bike];

    /// Stable array slot: drive 0, walk 1, bike 2.
    pub fn slot(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Drive => "drive",
            Mode::Walk => "walk",
            Mode::Bike => "bike",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "drive" => Ok(Mode::Drive),
            "walk" => Ok(Mode::Walk),
            "bike" => Ok(Mode::Bike),
            other => Err(format!("unknown mode '{other}' (expected drive, walk or bike)")),
        }
    }
}

/// A point in geographic degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = LatLon { lat, lon };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidCoordinate { lat: self.lat, lon: self.lon })
        }
    }
}

/// Great-circle distance in kilometers on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(a: LatLon, b: LatLon) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    Ok(haversine_unchecked(a, b))
}

pub(crate) fn haversine_unchecked(a: LatLon, b: LatLon) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let s1 = (dphi / 2.0).sin();
    let s2 = (dlambda / 2.0).sin();
    // sin² is even, so swapping a and b yields the same bits
    let h = s1 * s1 + (phi1.cos() * phi2.cos()) * (s2 * s2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// A spatial unit: centroid plus residential and worker counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub population: f64,
    pub workers: f64,
}

impl Zone {
    pub fn new(id: impl Into<String>, lat: f64, lon: f64, population: f64, workers: f64) -> Result<Self> {
        let id = id.into();
        LatLon::new(lat, lon)?;
        for value in [population, workers] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidCount { zone: id, value });
            }
        }
        Ok(Zone { id, lat, lon, population, workers })
    }

    pub fn centroid(&self) -> LatLon {
        LatLon { lat: self.lat, lon: self.lon }
    }

    pub fn count(&self, basis: Basis) -> f64 {
        match basis {
            Basis::Population => self.population,
            Basis::Workers => self.workers,
        }
    }
}

/// The environment set: every known zone, kept sorted by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ZoneSet {
    zones: Vec<Zone>,
    index: HashMap<String, usize>,
}

impl ZoneSet {
    pub fn new(mut zones: Vec<Zone>) -> Result<Self> {
        zones.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = zones.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::DuplicateZone(w[0].id.clone()));
        }
        let index = zones.iter().enumerate().map(|(i, z)| (z.id.clone(), i)).collect();
        Ok(ZoneSet { zones, index })
    }

    pub fn get(&self, id: &str) -> Option<&Zone> {
        self.index.get(id).map(|&i| &self.zones[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Zone> {
        self.zones.iter()
    }

    pub fn as_slice(&self) -> &[Zone] {
        &self.zones
    }

    pub fn ids(&self) -> Vec<String> {
        self.zones.iter().map(|z| z.id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }
}

/// An ordered target region S, a subset of the environment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    zone_ids: Vec<String>,
}

impl Region {
    /// Checks for duplicates only; membership is checked by whatever the
    /// region is used against.
    pub fn new(zone_ids: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(zone_ids.len());
        for id in &zone_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateZone(id.clone()));
            }
        }
        Ok(Region { zone_ids })
    }

    pub fn validated(zone_ids: Vec<String>, zones: &ZoneSet) -> Result<Self> {
        if let Some(id) = zone_ids.iter().find(|id| zones.get(id).is_none()) {
            return Err(Error::UnknownZone(id.clone()));
        }
        Region::new(zone_ids)
    }

    /// Every zone of the set, in id order.
    pub fn all(zones: &ZoneSet) -> Self {
        Region { zone_ids: zones.ids() }
    }

    pub fn zone_ids(&self) -> &[String] {
        &self.zone_ids
    }

    pub fn len(&self) -> usize {
        self.zone_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zone_ids.is_empty()
    }
}

/// Which zonal count weights the regional aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    #[default]
    Population,
    Workers,
}

impl Basis {
    pub fn as_str(self) -> &'static str {
        match self {
            Basis::Population => "population",
            Basis::Workers => "workers",
        }
    }
}

impl FromStr for Basis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "population" => Ok(Basis::Population),
            "workers" => Ok(Basis::Workers),
            other => Err(format!("unknown basis '{other}' (expected population or workers)")),
        }
    }
}

/// A weight vector aligned with a region's ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    zone_ids: Vec<String>,
    values: Vec<f64>,
}

impl Weights {
    /// Takes values as given; they are expected to sum to one.
    pub fn new(zone_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if zone_ids.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} zone ids but {} weights",
                zone_ids.len(),
                values.len()
            )));
        }
        Ok(Weights { zone_ids, values })
    }

    /// Normalizes nonnegative raw masses to unit sum.
    pub(crate) fn normalized(region: &Region, raw: Vec<f64>, basis: &'static str) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::EmptyPopulation { basis });
        }
        let values = raw.into_iter().map(|n| n / total).collect();
        Ok(Weights { zone_ids: region.zone_ids.clone(), values })
    }

    pub fn zone_ids(&self) -> &[String] {
        &self.zone_ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn check_aligned(&self, zone_ids: &[String]) -> Result<()> {
        if self.zone_ids.as_slice() != zone_ids {
            return Err(Error::DimensionMismatch(format!(
                "weights cover {} zones not aligned with the {} result zones",
                self.zone_ids.len(),
                zone_ids.len()
            )));
        }
        Ok(())
    }
}

/// `p_i = n_i / Σ n_j` over the region.
pub fn population_weights(region: &Region, zones: &ZoneSet, basis: Basis) -> Result<Weights> {
    let raw = region
        .zone_ids()
        .iter()
        .map(|id| zones.get(id).map(|z| z.count(basis)).ok_or_else(|| Error::UnknownZone(id.clone())))
        .collect::<Result<Vec<_>>>()?;
    Weights::normalized(region, raw, basis.as_str())
}

/// Sparse origin → destination travel times in minutes, stored row-compressed.
///
/// Zone ids are kept sorted, so each row lists destinations in ascending id
/// order. Every origin carries a self pair (0 minutes unless given). Pairs
/// slower than `max_threshold` are dropped on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    mode: Mode,
    max_threshold: f64,
    ids: Vec<String>,
    index: HashMap<String, u32>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    minutes: Vec<f64>,
}

impl CostMatrix {
    /// Builds a matrix over `zone_ids` from `(origin, destination, minutes)` triplets.
    pub fn from_triplets<I, T>(mode: Mode, max_threshold: f64, zone_ids: I, triplets: T) -> Result<Self>
    where
        I: IntoIterator<Item = String>,
        T: IntoIterator<Item = (String, String, f64)>,
    {
        let mut ids: Vec<String> = zone_ids.into_iter().collect();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateZone(w[0].clone()));
        }
        let index: HashMap<String, u32> =
            ids.iter().enumerate().map(|(i, id)| (id.clone(), i as u32)).collect();
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); ids.len()];
        for (origin, destination, t) in triplets {
            let o = *index.get(&origin).ok_or(Error::UnknownZone(origin))?;
            let d = *index.get(&destination).ok_or(Error::UnknownZone(destination))?;
            rows[o as usize].push((d, t));
        }
        Self::from_rows(mode, max_threshold, ids, rows)
    }

    /// Builds a matrix from per-origin rows of `(destination position, minutes)`.
    /// `ids` must be sorted and unique.
    pub fn from_rows(mode: Mode, max_threshold: f64, ids: Vec<String>, rows: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        if !(max_threshold.is_finite() && max_threshold > 0.0) {
            return Err(Error::InvalidThreshold(max_threshold));
        }
        if rows.len() != ids.len() {
            return Err(Error::DimensionMismatch(format!("{} rows for {} zones", rows.len(), ids.len())));
        }
        if let Some(w) = ids.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(format!("zone ids not strictly sorted at '{}'", w[1])));
        }
        let n = ids.len() as u32;
        let mut row_ptr = Vec::with_capacity(ids.len() + 1);
        let mut cols = Vec::new();
        let mut minutes = Vec::new();
        row_ptr.push(0);
        for (o, mut row) in rows.into_iter().enumerate() {
            let o = o as u32;
            for &(d, t) in &row {
                if d >= n {
                    return Err(Error::DimensionMismatch(format!("destination position {d} out of range")));
                }
                if !(t.is_finite() && t >= 0.0) {
                    return Err(Error::InvalidDuration(t));
                }
            }
            if !row.iter().any(|&(d, _)| d == o) {
                row.push((o, 0.0));
            }
            row.sort_by_key(|&(d, _)| d);
            if let Some(w) = row.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::DimensionMismatch(format!(
                    "duplicate pair ({}, {})",
                    ids[o as usize], ids[w[0].0 as usize]
                )));
            }
            for (d, t) in row {
                if t <= max_threshold {
                    cols.push(d);
                    minutes.push(t);
                }
            }
            row_ptr.push(cols.len());
        }
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i as u32)).collect();
        Ok(CostMatrix { mode, max_threshold, ids, index, row_ptr, cols, minutes })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn max_threshold(&self) -> f64 {
        self.max_threshold
    }

    /// Zone ids in ascending order; positions index rows and columns.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).map(|&i| i as usize)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of stored pairs.
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Stored `(destination position, minutes)` for an origin position, ascending.
    pub fn row(&self, origin: usize) -> impl ExactSizeIterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[origin]..self.row_ptr[origin + 1];
        self.cols[span.clone()].iter().zip(&self.minutes[span]).map(|(&d, &t)| (d as usize, t))
    }

    pub fn get(&self, origin: &str, destination: &str) -> Option<f64> {
        let o = self.position(origin)?;
        let d = self.position(destination)? as u32;
        let span = self.row_ptr[o]..self.row_ptr[o + 1];
        let cols = &self.cols[span.clone()];
        cols.binary_search(&d).ok().map(|k| self.minutes[span.start + k])
    }

    /// All stored pairs in row-major, ascending-id order.
    pub fn triplets(&self) -> impl Iterator<Item = (&str, &str, f64)> + '_ {
        (0..self.ids.len()).flat_map(move |o| {
            self.row(o).map(move |(d, t)| (self.ids[o].as_str(), self.ids[d].as_str(), t))
        })
    }

    /// Fails unless `tau` can be answered from the stored pairs.
    pub fn check_threshold(&self, tau: f64) -> Result<()> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidThreshold(tau));
        }
        if tau > self.max_threshold {
            return Err(Error::ThresholdExceedsPrune { tau, max_threshold: self.max_threshold });
        }
        Ok(())
    }

    /// Row positions of the region's zones.
    pub(crate) fn region_positions(&self, region: &Region) -> Result<Vec<usize>> {
        region
            .zone_ids()
            .iter()
            .map(|id| self.position(id).ok_or_else(|| Error::UnknownZone(id.clone())))
            .collect()
    }
}

/// Opportunity counts per zone and kind. Absent entries count as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct OpportunityTable {
    kinds: Vec<String>,
    counts: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Default for OpportunityTable {
    fn default() -> Self {
        Self::with_kinds(DEFAULT_KINDS.iter().map(|k| k.to_string()))
    }
}

impl OpportunityTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_kinds(kinds: impl IntoIterator<Item = String>) -> Self {
        let mut table = OpportunityTable { kinds: Vec::new(), counts: BTreeMap::new() };
        for kind in kinds {
            table.register_kind(kind);
        }
        table
    }

    pub fn register_kind(&mut self, kind: impl Into<String>) {
        let kind = kind.into();
        if !self.counts.contains_key(&kind) {
            self.kinds.push(kind.clone());
            self.counts.insert(kind, BTreeMap::new());
        }
    }

    pub fn kinds(&self) -> &[String] {
        &self.kinds
    }

    pub fn has_kind(&self, kind: &str) -> bool {
        self.counts.contains_key(kind)
    }

    pub fn set(&mut self, zone: impl Into<String>, kind: &str, count: f64) -> Result<()> {
        let zone = zone.into();
        if !(count.is_finite() && count >= 0.0) {
            return Err(Error::InvalidCount { zone, value: count });
        }
        let column = self.counts.get_mut(kind).ok_or_else(|| Error::UnknownKind(kind.to_string()))?;
        column.insert(zone, count);
        Ok(())
    }

    pub fn get(&self, zone: &str, kind: &str) -> f64 {
        self.counts.get(kind).and_then(|c| c.get(zone)).copied().unwrap_or(0.0)
    }

    /// Explicit `(zone, count)` entries of a kind, ascending by zone id.
    pub fn entries(&self, kind: &str) -> Result<impl Iterator<Item = (&str, f64)> + '_> {
        let column = self.counts.get(kind).ok_or_else(|| Error::UnknownKind(kind.to_string()))?;
        Ok(column.iter().map(|(z, &c)| (z.as_str(), c)))
    }

    /// Counts of `kind` laid out along `ids`; zones missing from the table get 0.
    pub fn dense(&self, kind: &str, ids: &[String]) -> Result<Vec<f64>> {
        let column = self.counts.get(kind).ok_or_else(|| Error::UnknownKind(kind.to_string()))?;
        Ok(ids.iter().map(|id| column.get(id).copied().unwrap_or(0.0)).collect())
    }

    /// A copy with every count multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut out = OpportunityTable::with_kinds(self.kinds.iter().cloned());
        for (kind, column) in &self.counts {
            for (zone, &c) in column {
                out.set(zone.clone(), kind, c * factor)?;
            }
        }
        Ok(out)
    }
}
