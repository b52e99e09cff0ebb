//! Gravity and contour accessibility on a three-zone region, then the
//! population-weighted aggregate.

use gravcat::access::{aggregate, zonal_accessibility, Intrazonal};
use gravcat::{population_weights, Basis, CostMatrix, ImpedanceParams, Mode, OpportunityTable, Region, Zone, ZoneSet};

fn main() -> gravcat::Result<()> {
    let zones = ZoneSet::new(vec![
        Zone::new("A", 41.88, -87.63, 1200.0, 800.0)?,
        Zone::new("B", 41.89, -87.62, 600.0, 300.0)?,
        Zone::new("C", 41.87, -87.64, 200.0, 150.0)?,
    ])?;
    let matrix = CostMatrix::from_triplets(
        Mode::Drive,
        120.0,
        ["A", "B", "C"].map(String::from),
        [("A", "B", 10.0), ("A", "C", 20.0), ("B", "C", 12.0), ("B", "A", 10.0), ("C", "A", 20.0)]
            .map(|(o, d, t)| (o.to_string(), d.to_string(), t)),
    )?;
    let mut opps = OpportunityTable::new();
    opps.set("B", "jobs_total", 10.0)?;
    opps.set("C", "jobs_total", 20.0)?;

    let region = Region::all(&zones);
    let params = ImpedanceParams::power_exponential("jobs_total", Mode::Drive, 0.008, 1.467)?;
    let gravity = zonal_accessibility(&region, &matrix, &opps, "jobs_total", &params, 30.0, &Intrazonal::Matrix)?;
    let contour = zonal_accessibility(&region, &matrix, &opps, "jobs_total", &params.as_contour(), 30.0, &Intrazonal::Matrix)?;

    println!("zone  gravity   contour");
    for ((zone, g), c) in gravity.iter().zip(contour.values()) {
        println!("{zone:<5} {g:>8.4} {c:>8.1}");
    }
    for basis in [Basis::Population, Basis::Workers] {
        let weights = population_weights(&region, &zones, basis)?;
        println!("aggregate ({}) = {:.4}", basis.as_str(), aggregate(&region, &gravity, &weights)?);
    }
    Ok(())
}
