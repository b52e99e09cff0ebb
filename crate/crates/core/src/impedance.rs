//! Travel impedance: the power-exponential decay `f(t) = exp(-α·t^β)`, its
//! thresholded form, and fitting `(α, β)` from observed trip durations.
//!
//! Fitting linearizes the empirical survival function of trip durations.
//! For `S(t) = exp(-α·t^β)` we have `ln(-ln S(t)) = ln α + β·ln t`, so an
//! ordinary least-squares line through the binned survival values yields
//! both parameters in closed form.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Mode;

/// Minimum number of matching trips accepted by [`fit`].
pub const MIN_FIT_TRIPS: usize = 50;

/// Survival-curve bin width used when none is given, minutes.
pub const DEFAULT_BIN_WIDTH: f64 = 5.0;

/// Minimum number of usable bins accepted by [`fit`].
pub const MIN_FIT_BINS: usize = 3;

/// A bin is usable only when at least this many trips have ended before its
/// upper edge and at least this many are still under way. Sparser bins sit
/// where `ln(-ln S)` is dominated by a handful of trips.
pub const MIN_BIN_TRIPS: usize = 10;

/// Shape of the decay curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decay {
    /// `exp(-alpha · t^beta)`.
    PowerExponential { alpha: f64, beta: f64 },
    /// Constant unit weight: the cumulative-opportunities measure.
    Contour,
}

/// Impedance function for one (purpose, mode) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceParams {
    pub purpose: String,
    pub mode: Mode,
    pub decay: Decay,
}

impl ImpedanceParams {
    pub fn power_exponential(purpose: impl Into<String>, mode: Mode, alpha: f64, beta: f64) -> Result<Self> {
        let valid = alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0;
        if !valid {
            return Err(Error::InvalidParams { alpha, beta });
        }
        Ok(ImpedanceParams { purpose: purpose.into(), mode, decay: Decay::PowerExponential { alpha, beta } })
    }

    pub fn contour(purpose: impl Into<String>, mode: Mode) -> Self {
        ImpedanceParams { purpose: purpose.into(), mode, decay: Decay::Contour }
    }

    /// Same key, constant unit weight.
    pub fn as_contour(&self) -> Self {
        ImpedanceParams::contour(self.purpose.clone(), self.mode)
    }

    pub fn is_contour(&self) -> bool {
        matches!(self.decay, Decay::Contour)
    }

    /// `f(t)`; `f(0) = 1`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        check_duration(t)?;
        Ok(self.weight(t))
    }

    /// `f(t)` when `t <= tau`, otherwise 0.
    pub fn thresholded_weight(&self, t: f64, tau: f64) -> Result<f64> {
        check_duration(t)?;
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidThreshold(tau));
        }
        Ok(if t <= tau { self.weight(t) } else { 0.0 })
    }

    /// `f(t)` without input validation; callers guarantee `t >= 0`.
    #[inline]
    pub(crate) fn weight(&self, t: f64) -> f64 {
        match self.decay {
            Decay::PowerExponential { alpha, beta } => (-alpha * t.powf(beta)).exp(),
            Decay::Contour => 1.0,
        }
    }
}

fn check_duration(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidDuration(t))
    }
}

/// One surveyed trip.
#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub mode: Mode,
    pub purpose: String,
    pub duration: f64,
    /// Survey weight, 1 when the source has none.
    pub weight: f64,
}

impl TripRecord {
    pub fn new(mode: Mode, purpose: impl Into<String>, duration: f64) -> Result<Self> {
        Self::weighted(mode, purpose, duration, 1.0)
    }

    pub fn weighted(mode: Mode, purpose: impl Into<String>, duration: f64, weight: f64) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidDuration(duration));
        }
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::InvalidConfig(format!("trip weight {weight} must be finite and nonnegative")));
        }
        Ok(TripRecord { mode, purpose: purpose.into(), duration, weight })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitDiagnostics {
    /// Coefficient of determination of the log-log regression.
    pub r2: f64,
    pub n_bins: usize,
    pub n_trips: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub params: ImpedanceParams,
    pub diagnostics: FitDiagnostics,
}

/// Sorted `(duration, weight)` pairs of the trips matching a key.
fn matching(trips: &[TripRecord], purpose: &str, mode: Mode) -> Result<Vec<(f64, f64)>> {
    let mut picked = Vec::new();
    for trip in trips.iter().filter(|t| t.mode == mode && t.purpose == purpose) {
        check_duration(trip.duration)?;
        picked.push((trip.duration, trip.weight));
    }
    // total order on both fields makes every later sum independent of input order
    picked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(picked)
}

/// Suffix sums of the weights: `tail[i] = Σ_{m >= i} w_m`, `tail[n] = 0`.
fn tail_weights(sorted: &[(f64, f64)]) -> Vec<f64> {
    let mut tail = vec![0.0; sorted.len() + 1];
    for i in (0..sorted.len()).rev() {
        tail[i] = tail[i + 1] + sorted[i].1;
    }
    tail
}

/// Fits `(α, β)` for one (purpose, mode) key.
///
/// Survival `S(t)` is the weighted fraction of trips lasting at least `t`,
/// evaluated at the upper edge of each `bin_width` bin. Bins with `S` equal
/// to 0 or 1, or with fewer than [`MIN_BIN_TRIPS`] trips on either side of
/// the edge, are dropped before regressing `ln(-ln S)` on `ln t`.
pub fn fit(trips: &[TripRecord], purpose: &str, mode: Mode, bin_width: f64) -> Result<FitOutcome> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::InvalidConfig(format!("bin width {bin_width} must be positive")));
    }
    let sorted = matching(trips, purpose, mode)?;
    if sorted.len() < MIN_FIT_TRIPS {
        return Err(Error::InsufficientData(format!(
            "{} trips for ({purpose}, {mode}); at least {MIN_FIT_TRIPS} required",
            sorted.len()
        )));
    }
    let tail = tail_weights(&sorted);
    let total = tail[0];
    if !(total > 0.0) {
        return Err(Error::InsufficientData(format!("trips for ({purpose}, {mode}) carry zero weight")));
    }

    let max = sorted[sorted.len() - 1].0;
    let n_edges = (max / bin_width).ceil() as usize;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut first = 0;
    for k in 1..=n_edges {
        let edge = k as f64 * bin_width;
        while first < sorted.len() && sorted[first].0 < edge {
            first += 1;
        }
        let survival = tail[first] / total;
        let dense = first >= MIN_BIN_TRIPS && sorted.len() - first >= MIN_BIN_TRIPS;
        if dense && survival > 0.0 && survival < 1.0 {
            xs.push(edge.ln());
            ys.push((-survival.ln()).ln());
        }
    }
    if xs.len() < MIN_FIT_BINS {
        return Err(Error::InsufficientVariation(format!(
            "{} usable bins for ({purpose}, {mode}); at least {MIN_FIT_BINS} required",
            xs.len()
        )));
    }

    let line = least_squares_line(&xs, &ys)
        .ok_or_else(|| Error::InsufficientVariation(format!("degenerate durations for ({purpose}, {mode})")))?;
    let alpha = line.intercept.exp();
    let beta = line.slope;
    if !(beta > 0.0 && alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InsufficientVariation(format!(
            "survival of ({purpose}, {mode}) does not decay (beta = {beta})"
        )));
    }
    Ok(FitOutcome {
        params: ImpedanceParams::power_exponential(purpose, mode, alpha, beta)?,
        diagnostics: FitDiagnostics { r2: line.r2, n_bins: xs.len(), n_trips: sorted.len() },
    })
}

/// Fits every (purpose, mode) key present in `trips`, in key order.
pub fn fit_all(trips: &[TripRecord], bin_width: f64) -> Vec<((String, Mode), Result<FitOutcome>)> {
    let mut keys: Vec<(String, Mode)> = trips.iter().map(|t| (t.purpose.clone(), t.mode)).collect();
    keys.sort();
    keys.dedup();
    keys.into_par_iter()
        .map(|(purpose, mode)| {
            let outcome = fit(trips, &purpose, mode, bin_width);
            ((purpose, mode), outcome)
        })
        .collect()
}

struct Line {
    slope: f64,
    intercept: f64,
    r2: f64,
}

fn least_squares_line(xs: &[f64], ys: &[f64]) -> Option<Line> {
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mean_x, y - mean_y);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Some(Line { slope, intercept, r2 })
}

/// Cumulative distribution of trip durations for one key.
///
/// With `smoothing_window == 0` the exact empirical CDF is returned at each
/// distinct duration. Otherwise the CDF is sampled on a one-minute grid from
/// 0 until every trip has ended and smoothed with a centered moving average
/// of about `smoothing_window` minutes; the window shrinks near `t = 0` so the
/// curve starts at exactly 0.
pub fn duration_cdf(trips: &[TripRecord], purpose: &str, mode: Mode, smoothing_window: f64) -> Result<Vec<(f64, f64)>> {
    if !(smoothing_window.is_finite() && smoothing_window >= 0.0) {
        return Err(Error::InvalidConfig(format!("smoothing window {smoothing_window} must be nonnegative")));
    }
    let sorted = matching(trips, purpose, mode)?;
    if sorted.is_empty() {
        return Err(Error::InsufficientData(format!("no trips for ({purpose}, {mode})")));
    }
    let total: f64 = sorted.iter().map(|&(_, w)| w).sum();
    if !(total > 0.0) {
        return Err(Error::InsufficientData(format!("trips for ({purpose}, {mode}) carry zero weight")));
    }

    // prefix[i] = weight of the first i trips
    let mut prefix = Vec::with_capacity(sorted.len() + 1);
    prefix.push(0.0);
    for &(_, w) in &sorted {
        prefix.push(prefix.last().unwrap() + w);
    }
    let cdf_at = |t: f64| -> f64 {
        let count = sorted.partition_point(|&(d, _)| d <= t);
        if count == sorted.len() {
            1.0
        } else {
            prefix[count] / total
        }
    };

    if smoothing_window == 0.0 {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &(d, _)) in sorted.iter().enumerate() {
            let is_last_of_run = i + 1 == sorted.len() || sorted[i + 1].0 != d;
            if is_last_of_run {
                let value = if i + 1 == sorted.len() { 1.0 } else { prefix[i + 1] / total };
                out.push((d, value));
            }
        }
        return Ok(out);
    }

    let half = ((smoothing_window - 1.0) / 2.0).round().max(0.0) as i64;
    let max = sorted[sorted.len() - 1].0;
    let last = max.ceil() as i64 + half;
    let out = (0..=last)
        .map(|t| {
            let h = half.min(t);
            let sum: f64 = (t - h..=t + h).map(|s| cdf_at(s as f64)).sum();
            (t as f64, sum / (2 * h + 1) as f64)
        })
        .collect();
    Ok(out)
}

/// Serialized form of one fitted or user-supplied parameter pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsRecord {
    pub purpose: String,
    pub mode: Mode,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub r2: Option<f64>,
    #[serde(default)]
    pub n_trips: Option<u64>,
}

impl From<&FitOutcome> for ParamsRecord {
    fn from(outcome: &FitOutcome) -> Self {
        let (alpha, beta) = match outcome.params.decay {
            Decay::PowerExponential { alpha, beta } => (alpha, beta),
            Decay::Contour => unreachable!("fits are never contour"),
        };
        ParamsRecord {
            purpose: outcome.params.purpose.clone(),
            mode: outcome.params.mode,
            alpha,
            beta,
            r2: Some(outcome.diagnostics.r2),
            n_trips: Some(outcome.diagnostics.n_trips as u64),
        }
    }
}

/// Parameters keyed by (purpose, mode). Lookups never fall back to a default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamsRegistry {
    entries: BTreeMap<(String, Mode), ParamsRecord>,
}

impl ParamsRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<ParamsRecord>) -> Result<Self> {
        let mut registry = Self::new();
        for record in records {
            registry.insert(record)?;
        }
        Ok(registry)
    }

    pub fn insert(&mut self, record: ParamsRecord) -> Result<()> {
        ImpedanceParams::power_exponential(&record.purpose, record.mode, record.alpha, record.beta)?;
        let key = (record.purpose.clone(), record.mode);
        if self.entries.contains_key(&key) {
            return Err(Error::KeyMismatch(format!("duplicate parameters for ({}, {})", key.0, key.1)));
        }
        self.entries.insert(key, record);
        Ok(())
    }

    pub fn get(&self, purpose: &str, mode: Mode) -> Result<ImpedanceParams> {
        let record = self
            .entries
            .get(&(purpose.to_string(), mode))
            .ok_or_else(|| Error::MissingParams { purpose: purpose.to_string(), mode })?;
        ImpedanceParams::power_exponential(&record.purpose, record.mode, record.alpha, record.beta)
    }

    pub fn records(&self) -> impl Iterator<Item = &ParamsRecord> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
