//! File formats: CSV tables, the parameter JSON, GeoJSON point exports and a
//! binary matrix cache.
//!
//! Every CSV is UTF-8, comma-delimited, with a mandatory header that must
//! match the schema exactly. Line numbers in errors count the header as
//! line 1. Numbers are written with Rust's shortest round-trip formatting,
//! and parsers reject NaN and infinities.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::access::AccessibilityResult;
use crate::equity::{Factor, ImprovementPotential, SediFactors, SediTable, Weighting};
use crate::impedance::{ParamsRecord, ParamsRegistry, TripRecord};
use crate::model::{CostMatrix, Mode, OpportunityTable, Zone, ZoneSet};

pub const ZONES_HEADER: &[&str] = &["zone_id", "lat", "lon", "population", "workers"];
pub const OPPORTUNITIES_HEADER: &[&str] = &["zone_id", "kind", "count"];
pub const MATRIX_HEADER: &[&str] = &["origin_id", "destination_id", "minutes"];
pub const TRIPS_HEADER: &[&str] = &["mode", "purpose", "duration_min"];
pub const TRIPS_WEIGHTED_HEADER: &[&str] = &["mode", "purpose", "duration_min", "weight"];
pub const DEMOGRAPHICS_HEADER: &[&str] = &[
    "zone_id",
    "poverty",
    "minority",
    "unemployment",
    "low_education",
    "zero_vehicle",
    "single_parent",
];
pub const RESULTS_HEADER: &[&str] = &["zone_id", "kind", "mode", "tau", "value"];
pub const SEDI_HEADER: &[&str] = &["zone_id", "sedi"];
pub const IMPROVEMENT_HEADER: &[&str] = &["zone_id", "gradient", "rank", "weighting"];
pub const RANK_SHIFT_HEADER: &[&str] = &["zone_id", "rank_shift"];
pub const REGION_HEADER: &[&str] = &["zone_id"];
pub const INTRAZONAL_HEADER: &[&str] = &["zone_id", "minutes"];

/// Magic bytes opening a binary matrix cache.
pub const MATRIX_MAGIC: &[u8; 6] = b"GCAT01";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("missing header: expected '{expected}', found '{found}'")]
    MissingHeader { expected: String, found: String },

    #[error("line {line}: expected {expected} fields, found {found}")]
    BadFieldCount { line: u64, expected: usize, found: usize },

    #[error("line {line}: unparsable number in column '{column}'")]
    UnparsableNumber { line: u64, column: &'static str },

    #[error("line {line}: negative value in column '{column}'")]
    NegativeCount { line: u64, column: &'static str },

    #[error("line {line}: duplicate zone '{id}'")]
    DuplicateZone { line: u64, id: String },

    #[error("line {line}: invalid value in column '{column}': {reason}")]
    InvalidValue { line: u64, column: &'static str, reason: String },

    #[error("invalid JSON: {0}")]
    Json(String),

    #[error("invalid binary matrix: {0}")]
    Binary(String),

    #[error("read failed: {0}")]
    Io(String),
}

impl ParseError {
    /// Line the error refers to, when it has one.
    pub fn line(&self) -> Option<u64> {
        match self {
            ParseError::BadFieldCount { line, .. }
            | ParseError::UnparsableNumber { line, .. }
            | ParseError::NegativeCount { line, .. }
            | ParseError::DuplicateZone { line, .. }
            | ParseError::InvalidValue { line, .. } => Some(*line),
            ParseError::MissingHeader { .. } => Some(1),
            _ => None,
        }
    }
}

impl From<std::io::Error> for ParseError {
    fn from(e: std::io::Error) -> Self {
        ParseError::Io(e.to_string())
    }
}

impl From<csv::Error> for ParseError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        match e.into_kind() {
            csv::ErrorKind::Io(io) => ParseError::Io(io.to_string()),
            csv::ErrorKind::Utf8 { .. } => {
                ParseError::InvalidValue { line, column: "*", reason: "invalid UTF-8".into() }
            }
            other => ParseError::Io(format!("{other:?}")),
        }
    }
}

pub type ParseResult<T> = std::result::Result<T, ParseError>;

/// Header-checked CSV row reader.
struct Rows<R: Read> {
    reader: csv::Reader<R>,
    header: &'static [&'static str],
}

impl<R: Read> Rows<R> {
    /// Accepts the first of `headers` that matches exactly.
    fn open(source: R, headers: &[&'static [&'static str]]) -> ParseResult<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(source);
        let mut first = csv::StringRecord::new();
        let expected = headers.iter().map(|h| h.join(",")).collect::<Vec<_>>().join("' or '");
        if !reader.read_record(&mut first)? {
            return Err(ParseError::MissingHeader { expected, found: String::new() });
        }
        let found: Vec<&str> = first.iter().collect();
        let header = headers
            .iter()
            .find(|h| h.len() == found.len() && h.iter().zip(&found).all(|(a, b)| a == b))
            .ok_or_else(|| ParseError::MissingHeader { expected, found: found.join(",") })?;
        Ok(Rows { reader, header })
    }

    /// Next data row with its line number.
    fn next(&mut self) -> ParseResult<Option<(u64, csv::StringRecord)>> {
        let mut record = csv::StringRecord::new();
        if !self.reader.read_record(&mut record)? {
            return Ok(None);
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != self.header.len() {
            return Err(ParseError::BadFieldCount { line, expected: self.header.len(), found: record.len() });
        }
        Ok(Some((line, record)))
    }

    /// Like `next`, reusing `record` and skipping UTF-8 validation.
    fn next_bytes(&mut self, record: &mut csv::ByteRecord) -> ParseResult<Option<u64>> {
        if !self.reader.read_byte_record(record)? {
            return Ok(None);
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != self.header.len() {
            return Err(ParseError::BadFieldCount { line, expected: self.header.len(), found: record.len() });
        }
        Ok(Some(line))
    }
}

fn number(line: u64, column: &'static str, field: &str) -> ParseResult<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ParseError::UnparsableNumber { line, column }),
    }
}

fn count(line: u64, column: &'static str, field: &str) -> ParseResult<f64> {
    let v = number(line, column, field)?;
    if v < 0.0 {
        return Err(ParseError::NegativeCount { line, column });
    }
    Ok(v)
}

fn nonempty<'a>(line: u64, column: &'static str, field: &'a str) -> ParseResult<&'a str> {
    if field.is_empty() {
        return Err(ParseError::InvalidValue { line, column, reason: "empty".into() });
    }
    Ok(field)
}

fn mode(line: u64, field: &str) -> ParseResult<Mode> {
    field.parse().map_err(|reason| ParseError::InvalidValue { line, column: "mode", reason })
}

fn csv_writer<W: Write>(out: W, header: &[&str]) -> csv::Result<csv::Writer<W>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

// ---- zones ----

pub fn parse_zones<R: Read>(source: R) -> ParseResult<ZoneSet> {
    let mut rows = Rows::open(source, &[ZONES_HEADER])?;
    let mut seen = HashSet::new();
    let mut zones = Vec::new();
    while let Some((line, r)) = rows.next()? {
        let id = nonempty(line, "zone_id", &r[0])?.to_string();
        let lat = number(line, "lat", &r[1])?;
        let lon = number(line, "lon", &r[2])?;
        if !(-90.0..=90.0).contains(&lat) {
            return Err(ParseError::InvalidValue { line, column: "lat", reason: format!("{lat} outside [-90, 90]") });
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(ParseError::InvalidValue { line, column: "lon", reason: format!("{lon} outside [-180, 180]") });
        }
        let population = count(line, "population", &r[3])?;
        let workers = count(line, "workers", &r[4])?;
        if !seen.insert(id.clone()) {
            return Err(ParseError::DuplicateZone { line, id });
        }
        zones.push(Zone { id, lat, lon, population, workers });
    }
    ZoneSet::new(zones).map_err(|e| ParseError::Io(e.to_string()))
}

pub fn write_zones<W: Write>(out: W, zones: &ZoneSet) -> csv::Result<()> {
    let mut w = csv_writer(out, ZONES_HEADER)?;
    for z in zones.iter() {
        w.write_record([&z.id, &fmt_f64(z.lat), &fmt_f64(z.lon), &fmt_f64(z.population), &fmt_f64(z.workers)])?;
    }
    w.flush()?;
    Ok(())
}

// ---- opportunities ----

pub fn parse_opportunities<R: Read>(source: R) -> ParseResult<OpportunityTable> {
    let mut rows = Rows::open(source, &[OPPORTUNITIES_HEADER])?;
    let mut table = OpportunityTable::new();
    let mut seen = HashSet::new();
    while let Some((line, r)) = rows.next()? {
        let zone = nonempty(line, "zone_id", &r[0])?;
        let kind = nonempty(line, "kind", &r[1])?;
        let c = count(line, "count", &r[2])?;
        if !seen.insert((zone.to_string(), kind.to_string())) {
            return Err(ParseError::DuplicateZone { line, id: zone.to_string() });
        }
        table.register_kind(kind);
        table.set(zone, kind, c).map_err(|e| ParseError::InvalidValue { line, column: "count", reason: e.to_string() })?;
    }
    Ok(table)
}

pub fn write_opportunities<W: Write>(out: W, table: &OpportunityTable) -> csv::Result<()> {
    let mut w = csv_writer(out, OPPORTUNITIES_HEADER)?;
    for kind in table.kinds() {
        for (zone, c) in table.entries(kind).expect("registered kind") {
            w.write_record([zone, kind, &fmt_f64(c)])?;
        }
    }
    w.flush()?;
    Ok(())
}

// ---- matrix ----

/// Reads `matrix.csv` into a [`CostMatrix`] over `zone_ids`, pruning pairs
/// slower than `max_threshold`. Absent self pairs mean 0 minutes.
pub fn parse_matrix<R: Read>(mut source: R, mode: Mode, max_threshold: f64, zone_ids: &[String]) -> ParseResult<CostMatrix> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let mut sorted: Vec<String> = zone_ids.to_vec();
    sorted.sort();
    let index: HashMap<&[u8], u32> = sorted.iter().enumerate().map(|(i, id)| (id.as_bytes(), i as u32)).collect();
    let lookup = |line: u64, column: &'static str, id: &[u8]| {
        index.get(id).copied().ok_or_else(|| ParseError::InvalidValue {
            line,
            column,
            reason: format!("unknown zone '{}'", String::from_utf8_lossy(id)),
        })
    };
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); sorted.len()];
    let mut reader = Rows::open(bytes.as_slice(), &[MATRIX_HEADER])?;
    let mut record = csv::ByteRecord::new();
    // Rows usually arrive grouped by origin, so the last origin is cached.
    let mut last: Option<(Vec<u8>, u32)> = None;
    while let Some(line) = reader.next_bytes(&mut record)? {
        let o = match &last {
            Some((id, o)) if id.as_slice() == &record[0] => *o,
            _ => {
                let o = lookup(line, "origin_id", &record[0])?;
                last = Some((record[0].to_vec(), o));
                o
            }
        };
        let d = lookup(line, "destination_id", &record[1])?;
        let field = std::str::from_utf8(&record[2]).map_err(|_| ParseError::UnparsableNumber { line, column: "minutes" })?;
        let t = count(line, "minutes", field)?;
        rows[o as usize].push((d, t));
    }
    // Duplicates surface from the sorted rows; only then is the file rescanned for the line.
    CostMatrix::from_rows(mode, max_threshold, sorted, rows).map_err(|e| match duplicate_line(&bytes) {
        Some(line) => ParseError::InvalidValue { line, column: "destination_id", reason: "duplicate pair".into() },
        None => ParseError::Io(e.to_string()),
    })
}

fn duplicate_line(bytes: &[u8]) -> Option<u64> {
    let mut reader = Rows::open(bytes, &[MATRIX_HEADER]).ok()?;
    let mut record = csv::ByteRecord::new();
    let mut seen = HashSet::new();
    while let Ok(Some(line)) = reader.next_bytes(&mut record) {
        if !seen.insert((record[0].to_vec(), record[1].to_vec())) {
            return Some(line);
        }
    }
    None
}

pub fn write_matrix<W: Write>(out: W, matrix: &CostMatrix) -> csv::Result<()> {
    let mut w = csv_writer(out, MATRIX_HEADER)?;
    for (o, d, t) in matrix.triplets() {
        w.write_record([o, d, &fmt_f64(t)])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the binary matrix cache (layout in `docs/binary-matrix-format.md` at the repository root).
pub fn write_matrix_binary<W: Write>(mut out: W, matrix: &CostMatrix) -> std::io::Result<()> {
    out.write_all(MATRIX_MAGIC)?;
    out.write_all(&[matrix.mode().slot() as u8, 0])?;
    out.write_all(&matrix.max_threshold().to_le_bytes())?;
    out.write_all(&(matrix.len() as u32).to_le_bytes())?;
    for id in matrix.ids() {
        let bytes = id.as_bytes();
        let len = u16::try_from(bytes.len())
            .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "zone id longer than 65535 bytes"))?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(bytes)?;
    }
    for o in 0..matrix.len() {
        let row = matrix.row(o);
        out.write_all(&(row.len() as u32).to_le_bytes())?;
        for (d, t) in row {
            out.write_all(&(d as u32).to_le_bytes())?;
            out.write_all(&t.to_le_bytes())?;
        }
    }
    out.flush()
}

pub fn parse_matrix_binary<R: Read>(mut source: R) -> ParseResult<CostMatrix> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let mut cursor = ByteCursor { bytes: &bytes, at: 0 };
    if cursor.take(6)? != MATRIX_MAGIC {
        return Err(ParseError::Binary("bad magic".into()));
    }
    let mode = match cursor.take(2)?[0] {
        0 => Mode::Drive,
        1 => Mode::Walk,
        2 => Mode::Bike,
        m => return Err(ParseError::Binary(format!("unknown mode byte {m}"))),
    };
    let max_threshold = f64::from_le_bytes(cursor.array()?);
    let n = u32::from_le_bytes(cursor.array()?) as usize;
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        let len = u16::from_le_bytes(cursor.array()?) as usize;
        let id = std::str::from_utf8(cursor.take(len)?).map_err(|_| ParseError::Binary("zone id not UTF-8".into()))?;
        ids.push(id.to_string());
    }
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let k = u32::from_le_bytes(cursor.array()?) as usize;
        let mut row = Vec::with_capacity(k);
        for _ in 0..k {
            let d = u32::from_le_bytes(cursor.array()?);
            let t = f64::from_le_bytes(cursor.array()?);
            row.push((d, t));
        }
        rows.push(row);
    }
    if cursor.at != bytes.len() {
        return Err(ParseError::Binary("trailing bytes".into()));
    }
    CostMatrix::from_rows(mode, max_threshold, ids, rows).map_err(|e| ParseError::Binary(e.to_string()))
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize) -> ParseResult<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ParseError::Binary(format!("truncated at byte {}", self.at)))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> ParseResult<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

// ---- trips ----

pub fn parse_trips<R: Read>(source: R) -> ParseResult<Vec<TripRecord>> {
    let mut rows = Rows::open(source, &[TRIPS_HEADER, TRIPS_WEIGHTED_HEADER])?;
    let mut trips = Vec::new();
    while let Some((line, r)) = rows.next()? {
        let m = mode(line, &r[0])?;
        let purpose = nonempty(line, "purpose", &r[1])?;
        let duration = number(line, "duration_min", &r[2])?;
        if duration <= 0.0 {
            return Err(ParseError::InvalidValue { line, column: "duration_min", reason: "must be positive".into() });
        }
        let weight = if r.len() == 4 { count(line, "weight", &r[3])? } else { 1.0 };
        trips.push(TripRecord { mode: m, purpose: purpose.to_string(), duration, weight });
    }
    Ok(trips)
}

/// Writes the weight column only when some trip is weighted.
pub fn write_trips<W: Write>(out: W, trips: &[TripRecord]) -> csv::Result<()> {
    let weighted = trips.iter().any(|t| t.weight != 1.0);
    let header = if weighted { TRIPS_WEIGHTED_HEADER } else { TRIPS_HEADER };
    let mut w = csv_writer(out, header)?;
    for t in trips {
        let mut record = vec![t.mode.to_string(), t.purpose.clone(), fmt_f64(t.duration)];
        if weighted {
            record.push(fmt_f64(t.weight));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

// ---- demographics ----

/// Empty fields mark missing measurements.
pub fn parse_demographics<R: Read>(source: R) -> ParseResult<SediFactors> {
    let mut rows = Rows::open(source, &[DEMOGRAPHICS_HEADER])?;
    let mut factors = SediFactors::new();
    while let Some((line, r)) = rows.next()? {
        let zone = nonempty(line, "zone_id", &r[0])?;
        let mut values = [None; 6];
        for (k, slot) in values.iter_mut().enumerate() {
            let field = &r[k + 1];
            if !field.is_empty() {
                *slot = Some(number(line, DEMOGRAPHICS_HEADER[k + 1], field)?);
            }
        }
        if factors.get(zone).is_some() {
            return Err(ParseError::DuplicateZone { line, id: zone.to_string() });
        }
        factors.insert(zone, values).map_err(|e| ParseError::InvalidValue { line, column: "*", reason: e.to_string() })?;
    }
    Ok(factors)
}

pub fn write_demographics<W: Write>(out: W, factors: &SediFactors) -> csv::Result<()> {
    let mut w = csv_writer(out, DEMOGRAPHICS_HEADER)?;
    for (zone, values) in factors.iter() {
        let mut record = vec![zone.to_string()];
        record.extend(Factor::ALL.iter().map(|f| fmt_opt(values[*f as usize])));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

// ---- params.json ----

pub fn parse_params<R: Read>(source: R) -> ParseResult<ParamsRegistry> {
    let records: Vec<ParamsRecord> = serde_json::from_reader(source).map_err(|e| ParseError::Json(e.to_string()))?;
    ParamsRegistry::from_records(records).map_err(|e| ParseError::Json(e.to_string()))
}

pub fn write_params<W: Write>(mut out: W, registry: &ParamsRegistry) -> std::io::Result<()> {
    let records: Vec<&ParamsRecord> = registry.records().collect();
    serde_json::to_writer_pretty(&mut out, &records)?;
    out.write_all(b"\n")
}

// ---- single-column region and intrazonal overrides ----

pub fn parse_region_ids<R: Read>(source: R) -> ParseResult<Vec<String>> {
    let mut rows = Rows::open(source, &[REGION_HEADER])?;
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    while let Some((line, r)) = rows.next()? {
        let id = nonempty(line, "zone_id", &r[0])?.to_string();
        if !seen.insert(id.clone()) {
            return Err(ParseError::DuplicateZone { line, id });
        }
        ids.push(id);
    }
    Ok(ids)
}

pub fn parse_intrazonal<R: Read>(source: R) -> ParseResult<HashMap<String, f64>> {
    let mut rows = Rows::open(source, &[INTRAZONAL_HEADER])?;
    let mut out = HashMap::new();
    while let Some((line, r)) = rows.next()? {
        let id = nonempty(line, "zone_id", &r[0])?.to_string();
        let t = count(line, "minutes", &r[1])?;
        if out.insert(id.clone(), t).is_some() {
            return Err(ParseError::DuplicateZone { line, id });
        }
    }
    Ok(out)
}

// ---- accessibility results ----

pub fn write_results<W: Write>(out: W, results: &[AccessibilityResult]) -> csv::Result<()> {
    let mut w = csv_writer(out, RESULTS_HEADER)?;
    for r in results {
        let (mode, tau) = (r.mode.to_string(), fmt_f64(r.tau));
        for (zone, value) in r.iter() {
            w.write_record([zone, &r.kind, &mode, &tau, &fmt_f64(value)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Groups rows by (kind, mode, τ) in order of first appearance.
pub fn parse_results<R: Read>(source: R) -> ParseResult<Vec<AccessibilityResult>> {
    let mut rows = Rows::open(source, &[RESULTS_HEADER])?;
    type Key = (String, Mode, u64);
    type Group = (Vec<String>, Vec<f64>, HashSet<String>);
    let mut order: Vec<Key> = Vec::new();
    let mut groups: HashMap<Key, Group> = HashMap::new();
    while let Some((line, r)) = rows.next()? {
        let zone = nonempty(line, "zone_id", &r[0])?.to_string();
        let kind = nonempty(line, "kind", &r[1])?.to_string();
        let m = mode(line, &r[2])?;
        let tau = count(line, "tau", &r[3])?;
        let value = count(line, "value", &r[4])?;
        let key = (kind, m, tau.to_bits());
        let group = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            Default::default()
        });
        if !group.2.insert(zone.clone()) {
            return Err(ParseError::DuplicateZone { line, id: zone });
        }
        group.0.push(zone);
        group.1.push(value);
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let (ids, values, _) = groups.remove(&key).expect("grouped");
            AccessibilityResult::new(key.0, key.1, f64::from_bits(key.2), ids, values).expect("validated rows")
        })
        .collect())
}

// ---- equity tables ----

pub fn write_sedi<W: Write>(out: W, table: &SediTable) -> csv::Result<()> {
    let mut w = csv_writer(out, SEDI_HEADER)?;
    for (zone, v) in table.zone_ids.iter().zip(&table.values) {
        w.write_record([zone, &fmt_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_sedi<R: Read>(source: R) -> ParseResult<SediTable> {
    let mut rows = Rows::open(source, &[SEDI_HEADER])?;
    let mut seen = HashSet::new();
    let (mut zone_ids, mut values) = (Vec::new(), Vec::new());
    while let Some((line, r)) = rows.next()? {
        let zone = nonempty(line, "zone_id", &r[0])?.to_string();
        let v = count(line, "sedi", &r[1])?;
        if v > 1.0 {
            return Err(ParseError::InvalidValue { line, column: "sedi", reason: format!("{v} above 1") });
        }
        if !seen.insert(zone.clone()) {
            return Err(ParseError::DuplicateZone { line, id: zone });
        }
        zone_ids.push(zone);
        values.push(v);
    }
    Ok(SediTable { zone_ids, values, excluded: Vec::new() })
}

pub fn write_improvement<W: Write>(out: W, potential: &ImprovementPotential) -> csv::Result<()> {
    let mut w = csv_writer(out, IMPROVEMENT_HEADER)?;
    let label = potential.weighting.label();
    for ((zone, g), rank) in potential.zone_ids.iter().zip(&potential.gradient).zip(&potential.rank) {
        w.write_record([zone, &fmt_f64(*g), &rank.to_string(), &label])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_weighting(line: u64, field: &str) -> ParseResult<Weighting> {
    if field == "unweighted" {
        return Ok(Weighting::Unweighted);
    }
    field
        .strip_prefix("sedi(lambda=")
        .and_then(|rest| rest.strip_suffix(')'))
        .and_then(|v| v.parse::<f64>().ok())
        .filter(|v| v.is_finite() && *v >= 0.0)
        .map(|lambda| Weighting::Sedi { lambda })
        .ok_or_else(|| ParseError::InvalidValue { line, column: "weighting", reason: format!("unknown weighting '{field}'") })
}

pub fn parse_improvement<R: Read>(source: R) -> ParseResult<ImprovementPotential> {
    let mut rows = Rows::open(source, &[IMPROVEMENT_HEADER])?;
    let mut seen = HashSet::new();
    let (mut zone_ids, mut gradient, mut rank) = (Vec::new(), Vec::new(), Vec::new());
    let mut weighting = None;
    while let Some((line, r)) = rows.next()? {
        let zone = nonempty(line, "zone_id", &r[0])?.to_string();
        let g = count(line, "gradient", &r[1])?;
        let k: usize = r[2].parse().map_err(|_| ParseError::UnparsableNumber { line, column: "rank" })?;
        let w = parse_weighting(line, &r[3])?;
        if *weighting.get_or_insert(w) != w {
            return Err(ParseError::InvalidValue { line, column: "weighting", reason: "mixed weightings".into() });
        }
        if !seen.insert(zone.clone()) {
            return Err(ParseError::DuplicateZone { line, id: zone });
        }
        zone_ids.push(zone);
        gradient.push(g);
        rank.push(k);
    }
    Ok(ImprovementPotential { zone_ids, gradient, rank, weighting: weighting.unwrap_or(Weighting::Unweighted) })
}

pub fn write_rank_shift<W: Write>(out: W, shifts: &[(String, i64)]) -> csv::Result<()> {
    let mut w = csv_writer(out, RANK_SHIFT_HEADER)?;
    for (zone, s) in shifts {
        w.write_record([zone, &s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Generic CSV table writer for analysis outputs with their own headers.
pub fn write_table<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> csv::Result<()> {
    let mut w = csv_writer(out, header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

// ---- GeoJSON ----

/// Writes a FeatureCollection of centroid points. Each feature carries
/// `zone_id` plus the given properties; `metadata`, if any, becomes a
/// top-level member.
pub fn write_geojson<W: Write>(
    mut out: W,
    zones: &ZoneSet,
    properties: &[(String, BTreeMap<String, Value>)],
    metadata: Option<Value>,
) -> std::io::Result<()> {
    let mut features = Vec::with_capacity(properties.len());
    for (zone_id, props) in properties {
        let zone = zones.get(zone_id).ok_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("zone '{zone_id}' has no centroid"))
        })?;
        let mut p = Map::new();
        p.insert("zone_id".into(), Value::String(zone_id.clone()));
        for (k, v) in props {
            p.insert(k.clone(), v.clone());
        }
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "Point", "coordinates": [zone.lon, zone.lat] },
            "properties": p,
        }));
    }
    let mut collection = json!({ "type": "FeatureCollection", "features": features });
    if let Some(meta) = metadata {
        collection["metadata"] = meta;
    }
    serde_json::to_writer(&mut out, &collection)?;
    out.write_all(b"\n")
}

/// JSON number, or null for non-finite and absent values.
pub fn json_number(v: Option<f64>) -> Value {
    v.and_then(serde_json::Number::from_f64).map(Value::Number).unwrap_or(Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zone_row() {
        let z = parse_zones("zone_id,lat,lon,population,workers\nA,41.88,-87.63,1200,800\n".as_bytes()).unwrap();
        let a = z.get("A").unwrap();
        assert_eq!((a.lat, a.lon, a.population, a.workers), (41.88, -87.63, 1200.0, 800.0));
    }

    #[test]
    fn unparsable_lat() {
        let err = parse_zones("zone_id,lat,lon,population,workers\nA,x,1,2,3\n".as_bytes()).unwrap_err();
        assert_eq!(err, ParseError::UnparsableNumber { line: 2, column: "lat" });
    }

    #[test]
    fn rejects_non_finite() {
        for bad in ["NaN", "inf", "-inf", "infinity"] {
            let text = format!("zone_id,lat,lon,population,workers\nA,1,1,{bad},3\n");
            assert_eq!(
                parse_zones(text.as_bytes()).unwrap_err(),
                ParseError::UnparsableNumber { line: 2, column: "population" }
            );
        }
    }

    #[test]
    fn header_must_match_exactly() {
        let swapped = "zone_id,lon,lat,population,workers\n";
        assert!(matches!(parse_zones(swapped.as_bytes()), Err(ParseError::MissingHeader { .. })));
        assert!(matches!(parse_zones("".as_bytes()), Err(ParseError::MissingHeader { .. })));
    }

    #[test]
    fn matrix_absent_self_pair_is_zero() {
        let text = "origin_id,destination_id,minutes\nA,B,12.5\n";
        let m = parse_matrix(text.as_bytes(), Mode::Drive, 90.0, &["A".into(), "B".into()]).unwrap();
        assert_eq!(m.get("A", "A"), Some(0.0));
        assert_eq!(m.get("A", "B"), Some(12.5));
        assert_eq!(m.get("B", "A"), None);
    }

    #[test]
    fn binary_cache_round_trip() {
        let text = "origin_id,destination_id,minutes\nA,B,12.5\nB,A,0.1\nB,C,95\n";
        let ids: Vec<String> = ["A", "B", "C"].map(String::from).to_vec();
        let m = parse_matrix(text.as_bytes(), Mode::Bike, 90.0, &ids).unwrap();
        let mut bytes = Vec::new();
        write_matrix_binary(&mut bytes, &m).unwrap();
        assert_eq!(&bytes[..6], b"GCAT01");
        assert_eq!(parse_matrix_binary(bytes.as_slice()).unwrap(), m);
        assert!(matches!(parse_matrix_binary(&bytes[..bytes.len() - 1]), Err(ParseError::Binary(_))));
    }

    #[test]
    fn weighting_labels_round_trip() {
        for w in [Weighting::Unweighted, Weighting::Sedi { lambda: 1.0 }, Weighting::Sedi { lambda: 0.25 }] {
            assert_eq!(parse_weighting(2, &w.label()).unwrap(), w);
        }
    }
}
