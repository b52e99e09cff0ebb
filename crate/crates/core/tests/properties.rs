//! Property tests over randomly generated inputs.

mod common;

use gravcat::access::{threshold_sweep, zonal_accessibility, Intrazonal};
use gravcat::efficiency::ModalSpeedLimit;
use gravcat::equity::{improvement_potential, rank_shift, sedi, sedi_weighted_population, SediConfig, SediFactors, Weighting};
use gravcat::impedance::{fit, Decay, ImpedanceParams, TripRecord};
use gravcat::model::haversine_km;
use gravcat::netgen::{generate, travel_time_matrix, CityConfig, Edge, RoadGraph, Sprawl};
use gravcat::{aggregate, io, population_weights, Basis, CostMatrix, LatLon, Mode, OpportunityTable, Region, Zone, ZoneSet};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{dense, floyd_warshall, haversine, naive_accessibility, rel_err, sample_durations};

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|k| format!("z{k:02}")).collect()
}

/// A small city with random populations, one opportunity kind and a sparse
/// random matrix (self pairs always present).
#[derive(Debug, Clone)]
struct Instance {
    populations: Vec<f64>,
    opportunities: Vec<f64>,
    pairs: Vec<(usize, usize, f64)>,
}

impl Instance {
    fn zones(&self) -> ZoneSet {
        let zones = ids(self.populations.len())
            .into_iter()
            .zip(&self.populations)
            .enumerate()
            .map(|(k, (id, &p))| Zone::new(id, 41.0 + k as f64 * 0.01, -87.0, p, p / 2.0).unwrap())
            .collect();
        ZoneSet::new(zones).unwrap()
    }

    fn opportunities(&self) -> OpportunityTable {
        let mut table = OpportunityTable::with_kinds(["jobs".to_string()]);
        for (id, &o) in ids(self.opportunities.len()).iter().zip(&self.opportunities) {
            table.set(id.clone(), "jobs", o).unwrap();
        }
        table
    }

    fn matrix(&self, max_threshold: f64) -> CostMatrix {
        let names = ids(self.populations.len());
        let triplets: Vec<(String, String, f64)> =
            self.pairs.iter().map(|&(o, d, t)| (names[o].clone(), names[d].clone(), t)).collect();
        CostMatrix::from_triplets(Mode::Drive, max_threshold, names.clone(), triplets).unwrap()
    }
}

fn instance() -> impl Strategy<Value = Instance> {
    (2usize..12).prop_flat_map(|n| {
        (
            prop::collection::vec(1.0f64..5000.0, n),
            prop::collection::vec(0.0f64..800.0, n),
            prop::collection::btree_map((0..n, 0..n), 0.5f64..120.0, 0..n * n),
        )
            .prop_map(|(populations, opportunities, pairs)| Instance {
                populations,
                opportunities,
                pairs: pairs.into_iter().filter(|((o, d), _)| o != d).map(|((o, d), t)| (o, d, t)).collect(),
            })
    })
}

fn decay() -> impl Strategy<Value = (f64, f64)> {
    (0.001f64..0.05, 0.5f64..2.5)
}

fn latlon() -> impl Strategy<Value = LatLon> {
    (-89.0f64..89.0, -180.0f64..180.0).prop_map(|(lat, lon)| LatLon::new(lat, lon).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn haversine_matches_textbook_formula(a in latlon(), b in latlon()) {
        let d = haversine_km(a, b).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!(rel_err(d, haversine(a, b)) <= 1e-12);
        prop_assert_eq!(d, haversine_km(b, a).unwrap());
        prop_assert!(d <= std::f64::consts::PI * 6371.0088 + 1e-9);
    }

    #[test]
    fn accessibility_matches_dense_oracle(inst in instance(), (alpha, beta) in decay(), tau in 5.0f64..120.0) {
        let zones = inst.zones();
        let matrix = inst.matrix(120.0);
        let params = ImpedanceParams::power_exponential("jobs", Mode::Drive, alpha, beta).unwrap();
        let got = zonal_accessibility(&Region::all(&zones), &matrix, &inst.opportunities(), "jobs", &params, tau, &Intrazonal::Matrix).unwrap();
        let expected = naive_accessibility(&dense(&matrix), &inst.opportunities, Some((alpha, beta)), tau);
        for (a, e) in got.values().iter().zip(&expected) {
            prop_assert!(rel_err(*a, *e) <= 1e-12, "{} vs {}", a, e);
        }
    }

    #[test]
    fn accessibility_is_nondecreasing_in_tau(inst in instance(), (alpha, beta) in decay(), mut taus in prop::collection::vec(1.0f64..120.0, 2..6)) {
        taus.sort_by(f64::total_cmp);
        let zones = inst.zones();
        let params = ImpedanceParams::power_exponential("jobs", Mode::Drive, alpha, beta).unwrap();
        let sweep = threshold_sweep(&Region::all(&zones), &inst.matrix(120.0), &inst.opportunities(), "jobs", &params, &taus, &Intrazonal::Matrix).unwrap();
        for pair in sweep.windows(2) {
            for (lo, hi) in pair[0].values().iter().zip(pair[1].values()) {
                prop_assert!(lo <= hi);
            }
        }
    }

    #[test]
    fn contour_dominates_gravity(inst in instance(), (alpha, beta) in decay(), tau in 5.0f64..120.0) {
        let zones = inst.zones();
        let region = Region::all(&zones);
        let matrix = inst.matrix(120.0);
        let opps = inst.opportunities();
        let params = ImpedanceParams::power_exponential("jobs", Mode::Drive, alpha, beta).unwrap();
        let gravity = zonal_accessibility(&region, &matrix, &opps, "jobs", &params, tau, &Intrazonal::Matrix).unwrap();
        let contour = zonal_accessibility(&region, &matrix, &opps, "jobs", &params.as_contour(), tau, &Intrazonal::Matrix).unwrap();
        for (g, c) in gravity.values().iter().zip(contour.values()) {
            prop_assert!(g <= c);
        }
    }

    #[test]
    fn accessibility_is_linear_in_opportunities(inst in instance(), (alpha, beta) in decay(), c in 0.1f64..50.0) {
        let zones = inst.zones();
        let region = Region::all(&zones);
        let matrix = inst.matrix(120.0);
        let params = ImpedanceParams::power_exponential("jobs", Mode::Drive, alpha, beta).unwrap();
        let base = zonal_accessibility(&region, &matrix, &inst.opportunities(), "jobs", &params, 60.0, &Intrazonal::Matrix).unwrap();
        let scaled = zonal_accessibility(&region, &matrix, &inst.opportunities().scaled(c).unwrap(), "jobs", &params, 60.0, &Intrazonal::Matrix).unwrap();
        for (a, b) in base.values().iter().zip(scaled.values()) {
            prop_assert!(rel_err(c * a, *b) <= 1e-12);
        }
    }

    #[test]
    fn aggregate_ignores_population_scale(inst in instance(), c in 0.01f64..100.0) {
        let zones = inst.zones();
        let scaled = Instance { populations: inst.populations.iter().map(|p| p * c).collect(), ..inst.clone() }.zones();
        let region = Region::all(&zones);
        let params = ImpedanceParams::contour("jobs", Mode::Drive);
        let result = zonal_accessibility(&region, &inst.matrix(120.0), &inst.opportunities(), "jobs", &params, 60.0, &Intrazonal::Matrix).unwrap();
        let base = aggregate(&region, &result, &population_weights(&region, &zones, Basis::Population).unwrap()).unwrap();
        let other = aggregate(&region, &result, &population_weights(&region, &scaled, Basis::Population).unwrap()).unwrap();
        prop_assert!(rel_err(base, other) <= 1e-12);
    }

    #[test]
    fn sedi_lies_in_unit_interval(
        complete in prop::collection::vec(prop::array::uniform6(0.0f64..1.0), 2..30),
        partial in prop::collection::vec(prop::array::uniform6(prop::option::weighted(0.5, 0.0f64..1.0)), 0..10),
    ) {
        let names = ids(complete.len() + partial.len());
        let mut factors = SediFactors::new();
        let rows = complete.into_iter().map(|v| v.map(Some)).chain(partial);
        let mut incomplete = 0;
        for (id, v) in names.iter().zip(rows) {
            incomplete += usize::from(v.iter().any(Option::is_none));
            factors.insert(id.clone(), v).unwrap();
        }
        let table = sedi(&factors, &Region::new(names.clone()).unwrap(), &SediConfig::default()).unwrap();
        prop_assert_eq!(table.excluded.len(), incomplete);
        prop_assert_eq!(table.values.len(), names.len() - incomplete);
        for v in &table.values {
            prop_assert!((0.0..=1.0).contains(v), "sedi {}", v);
        }
    }

    #[test]
    fn rank_shifts_sum_to_zero(inst in instance(), lambda in 0.0f64..4.0, seed in any::<u64>()) {
        let zones = inst.zones();
        let region = Region::all(&zones);
        let names = region.zone_ids().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut factors = SediFactors::new();
        for id in &names {
            factors.insert(id.clone(), [(); 6].map(|_| Some(rand::Rng::gen::<f64>(&mut rng)))).unwrap();
        }
        let table = sedi(&factors, &region, &SediConfig::default()).unwrap();
        let matrix = inst.matrix(120.0);
        let params = ImpedanceParams::power_exponential("jobs", Mode::Drive, 0.01, 1.2).unwrap();
        let plain = population_weights(&region, &zones, Basis::Population).unwrap();
        let tilted = sedi_weighted_population(&zones, &table, &region, Basis::Population, lambda).unwrap();
        let u = improvement_potential(&region, &matrix, &params, 60.0, &plain, &Intrazonal::Matrix, Weighting::Unweighted).unwrap();
        let w = improvement_potential(&region, &matrix, &params, 60.0, &tilted, &Intrazonal::Matrix, Weighting::Sedi { lambda }).unwrap();
        let shifts = rank_shift(&u, &w).unwrap();
        prop_assert_eq!(shifts.len(), names.len());
        prop_assert_eq!(shifts.iter().map(|(_, s)| s).sum::<i64>(), 0);
    }

    #[test]
    fn floats_survive_text_round_trip(v in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        prop_assert_eq!(io::fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn bounded_dijkstra_matches_floyd_warshall(
        n in 2usize..14,
        raw in prop::collection::vec((0usize..14, 0usize..14, 0.1f64..3.0, 5.0f64..40.0), 1..40),
        max_threshold in 5.0f64..60.0,
    ) {
        let edges: Vec<Edge> = raw
            .into_iter()
            .map(|(a, b, km, mph)| (a % n, b % n, km, mph))
            .filter(|(a, b, _, _)| a != b)
            .map(|(a, b, length_km, mph)| Edge { a, b, length_km, speed_mph: [mph, 3.0, 10.0] })
            .collect();
        let graph = RoadGraph::new(ids(n), edges.clone()).unwrap();
        let matrix = travel_time_matrix(&graph, Mode::Drive, max_threshold).unwrap();
        let oracle = floyd_warshall(n, &edges.iter().map(|e| (e.a, e.b, e.minutes(Mode::Drive))).collect::<Vec<_>>());
        let got = dense(&matrix);
        for o in 0..n {
            for d in 0..n {
                match got[o][d] {
                    Some(t) => prop_assert!(rel_err(t, oracle[o][d]) <= 1e-12 && t <= max_threshold),
                    None => prop_assert!(oracle[o][d] > max_threshold * (1.0 - 1e-12)),
                }
            }
        }
    }

    #[test]
    fn fit_ignores_trip_order(seed in any::<u64>(), (alpha, beta) in (0.005f64..0.03, 0.8f64..1.8)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trips: Vec<TripRecord> = sample_durations(&mut rng, alpha, beta, 2000)
            .into_iter()
            .map(|t| TripRecord::new(Mode::Bike, "shop", t).unwrap())
            .collect();
        let before = fit(&trips, "shop", Mode::Bike, 1.0).unwrap();
        trips.shuffle(&mut rng);
        let after = fit(&trips, "shop", Mode::Bike, 1.0).unwrap();
        prop_assert_eq!(before, after);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn synthetic_travel_times_respect_speed_limits(
        seed in any::<u64>(),
        rows in 2usize..9,
        cols in 2usize..9,
        sprawl in prop::option::of((0.0f64..0.9, 0.0f64..3.0)),
    ) {
        let config = CityConfig {
            seed,
            sprawl: sprawl.map(|(edge_removal, speed_decay)| Sprawl { edge_removal, speed_decay }),
            ..CityConfig::grid(rows, cols)
        };
        let city = generate(&config).unwrap();
        prop_assert!(city.graph.is_connected());
        let centroids: Vec<LatLon> = city.zones.iter().map(|z| z.centroid()).collect();
        for mode in Mode::ALL {
            let matrix = city.travel_time_matrix(mode, 1e6).unwrap();
            let km_per_min = ModalSpeedLimit::default_for(mode).km_per_min();
            let t = dense(&matrix);
            let n = t.len();
            for i in 0..n {
                for j in 0..n {
                    let tij = t[i][j].expect("complete matrix on a connected graph");
                    prop_assert!(tij >= haversine(centroids[i], centroids[j]) / km_per_min * (1.0 - 1e-9));
                    for (tik, row_k) in t[i].iter().zip(&t) {
                        prop_assert!(tij <= tik.unwrap() + row_k[j].unwrap() + 1e-9 * tij.max(1.0));
                    }
                }
            }
        }
    }

    /// With 20 000 trips the sampling error of the fit is a few percent, so
    /// a 15 % band holds across the parameter range.
    #[test]
    fn fit_recovers_random_parameters(seed in any::<u64>(), alpha in 0.003f64..0.03, beta in 0.8f64..1.8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trips: Vec<TripRecord> = sample_durations(&mut rng, alpha, beta, 20_000)
            .into_iter()
            .map(|t| TripRecord::new(Mode::Walk, "work", t).unwrap())
            .collect();
        let outcome = fit(&trips, "work", Mode::Walk, 1.0).unwrap();
        let Decay::PowerExponential { alpha: a, beta: b } = outcome.params.decay else {
            panic!("fit returned a contour");
        };
        prop_assert!(rel_err(a, alpha) <= 0.15, "alpha {} vs {}", a, alpha);
        prop_assert!(rel_err(b, beta) <= 0.15, "beta {} vs {}", b, beta);
    }
}
