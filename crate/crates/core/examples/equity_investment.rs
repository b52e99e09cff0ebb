//! Disadvantage index, opportunity improvement potential and how weighting
//! by disadvantage reorders the zones.

use gravcat::access::Intrazonal;
use gravcat::equity::{improvement_potential, rank_shift, sedi, sedi_weighted_population, SediConfig, Weighting};
use gravcat::netgen::{generate, CityConfig};
use gravcat::{population_weights, Basis, ImpedanceParams, Mode, Region};

fn main() -> gravcat::Result<()> {
    let city = generate(&CityConfig { seed: 9, ..CityConfig::grid(12, 12) })?;
    let region = Region::all(&city.zones);
    let matrix = city.travel_time_matrix(Mode::Drive, 30.0)?;
    let params = ImpedanceParams::power_exponential("jobs_total", Mode::Drive, 0.008, 1.467)?;
    let index = sedi(&city.factors, &region, &SediConfig::default())?;

    let plain = population_weights(&region, &city.zones, Basis::Population)?;
    let unweighted = improvement_potential(&region, &matrix, &params, 30.0, &plain, &Intrazonal::Matrix, Weighting::Unweighted)?;
    let lambda = 2.0;
    let tilted = sedi_weighted_population(&city.zones, &index, &region, Basis::Population, lambda)?;
    let weighted = improvement_potential(&region, &matrix, &params, 30.0, &tilted, &Intrazonal::Matrix, Weighting::Sedi { lambda })?;

    let shifts = rank_shift(&unweighted, &weighted)?;
    let mut order: Vec<usize> = (0..shifts.len()).collect();
    order.sort_by_key(|&k| -shifts[k].1.abs());
    println!("zone  sedi   rank(unw) rank({})  shift", weighted.weighting.label());
    for &k in order.iter().take(10) {
        let zone = &shifts[k].0;
        println!(
            "{zone:<5} {:.3}  {:>9} {:>9}  {:>+5}",
            index.get(zone).unwrap_or(f64::NAN),
            unweighted.rank[k],
            weighted.rank[k],
            shifts[k].1
        );
    }
    println!("sum of shifts = {}", shifts.iter().map(|s| s.1).sum::<i64>());
    Ok(())
}
