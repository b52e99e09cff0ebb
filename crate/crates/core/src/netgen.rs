//! Synthetic cities and bounded many-to-many shortest paths.
//!
//! A city is a lattice (or ring-and-spoke) of zones whose centroids double as
//! road-graph nodes. Population and opportunities fall off from the center,
//! disadvantage factors follow a north-south gradient plus seeded noise, and
//! an optional sprawl setting thins the road network and slows roads toward
//! the edge. Identical configs produce identical cities.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::efficiency::{mph_to_km_per_min, ModalSpeedLimit};
use crate::equity::SediFactors;
use crate::error::{Error, Result};
use crate::model::{haversine_unchecked, CostMatrix, LatLon, Mode, OpportunityTable, Zone, ZoneSet, EARTH_RADIUS_KM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layout {
    Grid { rows: usize, cols: usize },
    /// A center zone plus `rings` concentric rings of `spokes` zones each.
    Radial { rings: usize, spokes: usize },
}

impl Layout {
    pub fn n_zones(&self) -> usize {
        match *self {
            Layout::Grid { rows, cols } => rows * cols,
            Layout::Radial { rings, spokes } => 1 + rings * spokes,
        }
    }
}

/// Spatial distribution of a quantity: `scale · exp(−γ·d_center_km)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    Uniform,
    CorePeaked { gamma: f64 },
}

impl Profile {
    fn factor(&self, d_center_km: f64) -> f64 {
        match *self {
            Profile::Uniform => 1.0,
            Profile::CorePeaked { gamma } => (-gamma * d_center_km).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpportunitySpec {
    pub kind: String,
    pub profile: Profile,
    /// Count at the city center.
    pub scale: f64,
}

/// Thinning and slowing of the road network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sprawl {
    /// Fraction of the edges outside a random spanning tree that are removed.
    pub edge_removal: f64,
    /// Roads at the city edge run at `1 / (1 + speed_decay)` of the base speed.
    pub speed_decay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CityConfig {
    pub layout: Layout,
    pub spacing_km: f64,
    pub origin: LatLon,
    pub population: Profile,
    pub population_scale: f64,
    /// Workers as a share of residents.
    pub worker_share: f64,
    pub opportunities: Vec<OpportunitySpec>,
    /// Base road speed per mode (drive, walk, bike), mi/h.
    pub road_speed_mph: [f64; 3],
    /// Road speeds may not exceed these.
    pub speed_limits: [ModalSpeedLimit; 3],
    pub sprawl: Option<Sprawl>,
    /// Weight in `[0, 1]` of the southward trend in disadvantage factors.
    pub sedi_gradient: f64,
    pub seed: u64,
}

impl Default for CityConfig {
    fn default() -> Self {
        let opportunities = [
            ("jobs_total", 0.25, 400.0),
            ("jobs_high", 0.3, 220.0),
            ("jobs_low", 0.15, 90.0),
            ("essential_stores", 0.1, 6.0),
            ("primary_services", 0.12, 4.0),
            ("leisure", 0.2, 12.0),
        ]
        .into_iter()
        .map(|(kind, gamma, scale)| OpportunitySpec {
            kind: kind.to_string(),
            profile: Profile::CorePeaked { gamma },
            scale,
        })
        .collect();
        CityConfig {
            layout: Layout::Grid { rows: 10, cols: 10 },
            spacing_km: 1.0,
            origin: LatLon { lat: 41.8781, lon: -87.6298 },
            population: Profile::CorePeaked { gamma: 0.08 },
            population_scale: 1500.0,
            worker_share: 0.5,
            opportunities,
            road_speed_mph: [30.0, 3.0, 10.0],
            speed_limits: Mode::ALL.map(ModalSpeedLimit::default_for),
            sprawl: None,
            sedi_gradient: 0.6,
            seed: 0,
        }
    }
}

impl CityConfig {
    pub fn grid(rows: usize, cols: usize) -> Self {
        CityConfig { layout: Layout::Grid { rows, cols }, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.layout.n_zones() == 0 {
            return bad("city needs at least one zone".into());
        }
        if let Layout::Radial { rings, spokes } = self.layout {
            if rings > 0 && spokes < 3 {
                return bad(format!("radial layout needs at least 3 spokes, got {spokes}"));
            }
        }
        if !(self.spacing_km.is_finite() && self.spacing_km > 0.0) {
            return bad(format!("spacing {} km must be positive", self.spacing_km));
        }
        LatLon::new(self.origin.lat, self.origin.lon)?;
        let profiles = std::iter::once(&self.population).chain(self.opportunities.iter().map(|o| &o.profile));
        for profile in profiles {
            if let Profile::CorePeaked { gamma } = profile {
                if !(gamma.is_finite() && *gamma >= 0.0) {
                    return bad(format!("profile gamma {gamma} must be nonnegative"));
                }
            }
        }
        let scales = [self.population_scale, self.worker_share]
            .into_iter()
            .chain(self.opportunities.iter().map(|o| o.scale));
        for s in scales {
            if !(s.is_finite() && s >= 0.0) {
                return bad(format!("scale {s} must be finite and nonnegative"));
            }
        }
        for mode in Mode::ALL {
            let speed = self.road_speed_mph[mode.slot()];
            let limit = self.speed_limits[mode.slot()].mph();
            if !(speed.is_finite() && speed > 0.0) {
                return bad(format!("{mode} road speed {speed} must be positive"));
            }
            if speed > limit {
                return bad(format!("{mode} road speed {speed} exceeds the modal limit {limit}"));
            }
        }
        if let Some(s) = self.sprawl {
            if !((0.0..=1.0).contains(&s.edge_removal) && s.speed_decay.is_finite() && s.speed_decay >= 0.0) {
                return bad(format!("invalid sprawl {s:?}"));
            }
        }
        if !(0.0..=1.0).contains(&self.sedi_gradient) {
            return bad(format!("sedi gradient {} must lie in [0, 1]", self.sedi_gradient));
        }
        Ok(())
    }
}

/// An undirected road segment between two nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub length_km: f64,
    /// Per-mode speed (drive, walk, bike), mi/h.
    pub speed_mph: [f64; 3],
}

impl Edge {
    /// Minutes to traverse the edge.
    pub fn minutes(&self, mode: Mode) -> f64 {
        self.length_km / mph_to_km_per_min(self.speed_mph[mode.slot()])
    }
}

/// Road network whose nodes are zone centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadGraph {
    ids: Vec<String>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl RoadGraph {
    /// `ids` must be strictly ascending; edges refer to positions in `ids`.
    pub fn new(ids: Vec<String>, edges: Vec<Edge>) -> Result<Self> {
        if let Some(w) = ids.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(format!("node ids not strictly ascending at '{}'", w[1])));
        }
        let mut adjacency = vec![Vec::new(); ids.len()];
        for (k, e) in edges.iter().enumerate() {
            if e.a >= ids.len() || e.b >= ids.len() || e.a == e.b {
                return Err(Error::InvalidConfig(format!("edge {k} has invalid endpoints ({}, {})", e.a, e.b)));
            }
            if !(e.length_km.is_finite() && e.length_km >= 0.0) {
                return Err(Error::InvalidConfig(format!("edge {k} has invalid length {}", e.length_km)));
            }
            if e.speed_mph.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(Error::InvalidConfig(format!("edge {k} has a nonpositive speed")));
            }
            adjacency[e.a].push((e.b, k));
            adjacency[e.b].push((e.a, k));
        }
        Ok(RoadGraph { ids, edges, adjacency })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn max_speed_mph(&self, mode: Mode) -> f64 {
        self.edges.iter().map(|e| e.speed_mph[mode.slot()]).fold(0.0, f64::max)
    }

    pub fn is_connected(&self) -> bool {
        if self.ids.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.ids.len()];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &(w, _) in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.ids.len()
    }

    /// Shortest times from `origin` no longer than `max_threshold`, ascending by node.
    fn bounded_dijkstra(&self, origin: usize, mode: Mode, max_threshold: f64, dist: &mut [f64]) -> Vec<(u32, f64)> {
        let mut heap = BinaryHeap::new();
        let mut settled = Vec::new();
        dist[origin] = 0.0;
        heap.push(HeapEntry { minutes: 0.0, node: origin });
        while let Some(HeapEntry { minutes, node }) = heap.pop() {
            if minutes > dist[node] {
                continue;
            }
            settled.push((node as u32, minutes));
            for &(next, k) in &self.adjacency[node] {
                let candidate = minutes + self.edges[k].minutes(mode);
                if candidate <= max_threshold && candidate < dist[next] {
                    dist[next] = candidate;
                    heap.push(HeapEntry { minutes: candidate, node: next });
                }
            }
        }
        for &(node, _) in &settled {
            dist[node as usize] = f64::INFINITY;
        }
        settled.sort_by_key(|&(node, _)| node);
        settled
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    minutes: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on time, then on node for a deterministic pop order
        other.minutes.total_cmp(&self.minutes).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All-origins bounded Dijkstra; pairs slower than `max_threshold` are absent.
pub fn travel_time_matrix(graph: &RoadGraph, mode: Mode, max_threshold: f64) -> Result<CostMatrix> {
    if !(max_threshold.is_finite() && max_threshold > 0.0) {
        return Err(Error::InvalidThreshold(max_threshold));
    }
    let n = graph.node_count();
    let rows: Vec<Vec<(u32, f64)>> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![f64::INFINITY; n],
            |dist, origin| graph.bounded_dijkstra(origin, mode, max_threshold, dist),
        )
        .collect();
    CostMatrix::from_rows(mode, max_threshold, graph.ids.clone(), rows)
}

/// Everything a synthetic city provides to the analyses.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCity {
    pub zones: ZoneSet,
    pub opportunities: OpportunityTable,
    pub graph: RoadGraph,
    pub factors: SediFactors,
    pub center: LatLon,
    /// Straight-line distance of each zone (in id order) from the center.
    pub center_distance_km: Vec<f64>,
}

impl SyntheticCity {
    pub fn travel_time_matrix(&self, mode: Mode, max_threshold: f64) -> Result<CostMatrix> {
        travel_time_matrix(&self.graph, mode, max_threshold)
    }
}

type Lattice = (Vec<(f64, f64)>, Vec<(usize, usize)>);

/// Planar offsets (east, north) in km of each zone, plus lattice edges.
fn lattice(layout: Layout, spacing: f64) -> Lattice {
    let mut points = Vec::new();
    let mut links = Vec::new();
    match layout {
        Layout::Grid { rows, cols } => {
            let (cx, cy) = ((cols as f64 - 1.0) / 2.0, (rows as f64 - 1.0) / 2.0);
            for r in 0..rows {
                for c in 0..cols {
                    points.push(((c as f64 - cx) * spacing, (r as f64 - cy) * spacing));
                    let k = r * cols + c;
                    if c + 1 < cols {
                        links.push((k, k + 1));
                    }
                    if r + 1 < rows {
                        links.push((k, k + cols));
                    }
                }
            }
        }
        Layout::Radial { rings, spokes } => {
            points.push((0.0, 0.0));
            let at = |ring: usize, spoke: usize| 1 + (ring - 1) * spokes + spoke;
            for ring in 1..=rings {
                for spoke in 0..spokes {
                    let angle = std::f64::consts::TAU * spoke as f64 / spokes as f64;
                    let radius = ring as f64 * spacing;
                    points.push((radius * angle.cos(), radius * angle.sin()));
                    let inner = if ring == 1 { 0 } else { at(ring - 1, spoke) };
                    links.push((inner, at(ring, spoke)));
                    links.push((at(ring, spoke), at(ring, (spoke + 1) % spokes)));
                }
            }
        }
    }
    (points, links)
}

/// Random spanning tree (Kruskal over shuffled links); true marks tree links.
fn spanning_tree(n: usize, links: &[(usize, usize)], order: &[usize]) -> Vec<bool> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut in_tree = vec![false; links.len()];
    for &k in order {
        let (a, b) = links[k];
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            in_tree[k] = true;
        }
    }
    in_tree
}

/// Builds a city from `config`.
pub fn generate(config: &CityConfig) -> Result<SyntheticCity> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (points, links) = lattice(config.layout, config.spacing_km);
    let n = points.len();
    let width = format!("{}", n.saturating_sub(1)).len();
    let ids: Vec<String> = (0..n).map(|k| format!("z{k:0width$}")).collect();

    let origin = config.origin;
    let km_per_deg = EARTH_RADIUS_KM.to_radians();
    let coords: Vec<LatLon> = points
        .iter()
        .map(|&(x, y)| LatLon {
            lat: origin.lat + y / km_per_deg,
            lon: origin.lon + x / (km_per_deg * origin.lat.to_radians().cos()),
        })
        .collect();
    for c in &coords {
        LatLon::new(c.lat, c.lon).map_err(|_| Error::InvalidConfig("city extends past valid coordinates".into()))?;
    }
    let center_distance_km: Vec<f64> = coords.iter().map(|&c| haversine_unchecked(origin, c)).collect();
    let max_distance = center_distance_km.iter().copied().fold(0.0, f64::max);

    let mut zones = Vec::with_capacity(n);
    for k in 0..n {
        let population = config.population_scale * config.population.factor(center_distance_km[k]);
        let workers = population * config.worker_share;
        zones.push(Zone::new(ids[k].clone(), coords[k].lat, coords[k].lon, population, workers)?);
    }
    let zones = ZoneSet::new(zones)?;

    let mut opportunities = OpportunityTable::with_kinds(config.opportunities.iter().map(|o| o.kind.clone()));
    for spec in &config.opportunities {
        for k in 0..n {
            let count = spec.scale * spec.profile.factor(center_distance_km[k]);
            opportunities.set(ids[k].clone(), &spec.kind, count)?;
        }
    }

    let mut order: Vec<usize> = (0..links.len()).collect();
    order.shuffle(&mut rng);
    let keep: Vec<bool> = match config.sprawl {
        Some(sprawl) if sprawl.edge_removal > 0.0 => {
            let in_tree = spanning_tree(n, &links, &order);
            let mut spare: Vec<usize> = (0..links.len()).filter(|&k| !in_tree[k]).collect();
            spare.shuffle(&mut rng);
            let removed = (sprawl.edge_removal * spare.len() as f64).round() as usize;
            let mut keep = vec![true; links.len()];
            for &k in &spare[..removed] {
                keep[k] = false;
            }
            keep
        }
        _ => vec![true; links.len()],
    };
    let speed_decay = config.sprawl.map_or(0.0, |s| s.speed_decay);
    let edges: Vec<Edge> = links
        .iter()
        .zip(&keep)
        .filter(|(_, &kept)| kept)
        .map(|(&(a, b), _)| {
            let mid = (center_distance_km[a] + center_distance_km[b]) / 2.0;
            let slowdown = if max_distance > 0.0 { 1.0 + speed_decay * mid / max_distance } else { 1.0 };
            Edge {
                a,
                b,
                length_km: haversine_unchecked(coords[a], coords[b]),
                speed_mph: config.road_speed_mph.map(|s| s / slowdown),
            }
        })
        .collect();
    let graph = RoadGraph::new(ids.clone(), edges)?;

    // north-south extent for the disadvantage trend
    let (y_min, y_max) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, y)| (lo.min(y), hi.max(y)));
    let mut factors = SediFactors::new();
    for (k, &(_, y)) in points.iter().enumerate() {
        let south = if y_max > y_min { (y_max - y) / (y_max - y_min) } else { 0.5 };
        let mut row = [None; 6];
        for slot in row.iter_mut() {
            let noise: f64 = rng.gen();
            *slot = Some(config.sedi_gradient * south + (1.0 - config.sedi_gradient) * noise);
        }
        factors.insert(ids[k].clone(), row)?;
    }

    Ok(SyntheticCity { zones, opportunities, graph, factors, center: origin, center_distance_km })
}
