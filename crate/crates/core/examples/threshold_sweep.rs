//! Accessibility at τ = 15, 30, 45, 60, 90 minutes on a synthetic city,
//! for every travel mode.

use gravcat::access::{aggregate, threshold_sweep, Intrazonal};
use gravcat::netgen::{generate, CityConfig};
use gravcat::{population_weights, Basis, ImpedanceParams, Mode, Region};

fn main() -> gravcat::Result<()> {
    let city = generate(&CityConfig { seed: 3, ..CityConfig::grid(20, 20) })?;
    let region = Region::all(&city.zones);
    let weights = population_weights(&region, &city.zones, Basis::Population)?;
    let taus = [15.0, 30.0, 45.0, 60.0, 90.0];

    println!("{:<6} {}", "mode", taus.map(|t| format!("{:>12}", format!("tau={t}"))).join(""));
    for mode in Mode::ALL {
        let matrix = city.travel_time_matrix(mode, 90.0)?;
        let params = ImpedanceParams::power_exponential("jobs_total", mode, 0.008, 1.467)?;
        let sweep = threshold_sweep(&region, &matrix, &city.opportunities, "jobs_total", &params, &taus, &Intrazonal::Matrix)?;
        let row: Vec<String> = sweep
            .iter()
            .map(|r| aggregate(&region, r, &weights).map(|chi| format!("{chi:>12.1}")))
            .collect::<gravcat::Result<_>>()?;
        println!("{:<6} {}", mode.as_str(), row.join(""));
    }
    Ok(())
}
