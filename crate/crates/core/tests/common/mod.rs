//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the library's numeric kernels: accessibility is a
//! dense double loop, shortest paths are Floyd–Warshall, and trip durations
//! come from inverse-CDF sampling.

#![allow(dead_code)]

pub mod corpus;

use gravcat::netgen::{CityConfig, Profile};
use gravcat::{CostMatrix, LatLon};
use rand::Rng;

/// `exp(−α·t^β)` evaluated directly.
pub fn decay(alpha: f64, beta: f64, t: f64) -> f64 {
    (-alpha * t.powf(beta)).exp()
}

/// Dense copy of a sparse matrix; absent pairs are `None`.
pub fn dense(matrix: &CostMatrix) -> Vec<Vec<Option<f64>>> {
    let n = matrix.len();
    let mut out = vec![vec![None; n]; n];
    for (o, row) in out.iter_mut().enumerate() {
        for (d, t) in matrix.row(o) {
            row[d] = Some(t);
        }
    }
    out
}

/// `a_i = Σ_j o_j · f(t_ij) · 1[t_ij ≤ τ]` by brute force over a dense matrix.
/// `f = None` is the unit (contour) weight.
pub fn naive_accessibility(times: &[Vec<Option<f64>>], o: &[f64], f: Option<(f64, f64)>, tau: f64) -> Vec<f64> {
    times
        .iter()
        .map(|row| {
            let mut a = 0.0;
            for (j, t) in row.iter().enumerate() {
                if let Some(t) = *t {
                    if t <= tau {
                        a += o[j] * f.map_or(1.0, |(al, be)| decay(al, be, t));
                    }
                }
            }
            a
        })
        .collect()
}

/// All-pairs shortest times over an undirected edge list.
pub fn floyd_warshall(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for &(a, b, t) in edges {
        if t < d[a][b] {
            d[a][b] = t;
            d[b][a] = t;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Durations whose survival function is `exp(−α·t^β)`.
pub fn sample_durations<R: Rng>(rng: &mut R, alpha: f64, beta: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = 1.0 - rng.gen::<f64>();
            (-u.ln() / alpha).powf(1.0 / beta)
        })
        .collect()
}

/// Great-circle distance with the textbook formula, R = 6371.0088 km.
pub fn haversine(a: LatLon, b: LatLon) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * 6371.0088 * h.sqrt().min(1.0).asin()
}

/// The reference grid city: 30×30 zones 2.5 km apart, core-peaked
/// population and opportunities, road speeds below the modal limits.
pub fn reference_grid() -> CityConfig {
    CityConfig { spacing_km: 2.5, seed: 42, ..CityConfig::grid(30, 30) }
}

/// Same city with every quantity spread evenly.
pub fn uniform(mut config: CityConfig) -> CityConfig {
    config.population = Profile::Uniform;
    for o in &mut config.opportunities {
        o.profile = Profile::Uniform;
    }
    config
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}