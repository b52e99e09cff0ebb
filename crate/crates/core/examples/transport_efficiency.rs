//! Observed over straight-line ideal accessibility for a compact and a
//! sprawling city.

use gravcat::access::{zonal_accessibility, Intrazonal};
use gravcat::efficiency::{efficiency, ideal_accessibility, ModalSpeedLimit};
use gravcat::netgen::{generate, CityConfig, Sprawl};
use gravcat::{population_weights, Basis, ImpedanceParams, Mode, Region};

fn main() -> gravcat::Result<()> {
    let compact = CityConfig { seed: 5, ..CityConfig::grid(20, 20) };
    let sprawl = CityConfig { sprawl: Some(Sprawl { edge_removal: 0.5, speed_decay: 1.5 }), ..compact.clone() };
    let tau = 30.0;

    println!("{:<8} {:>8} {:>8} {:>8}", "city", "drive", "walk", "bike");
    for (name, config) in [("compact", compact), ("sprawl", sprawl)] {
        let city = generate(&config)?;
        let region = Region::all(&city.zones);
        let weights = population_weights(&region, &city.zones, Basis::Population)?;
        let mut row = Vec::new();
        for mode in Mode::ALL {
            let params = ImpedanceParams::power_exponential("jobs_total", mode, 0.008, 1.467)?;
            let matrix = city.travel_time_matrix(mode, tau)?;
            let observed = zonal_accessibility(&region, &matrix, &city.opportunities, "jobs_total", &params, tau, &Intrazonal::Matrix)?;
            let speed = ModalSpeedLimit::default_for(mode);
            let ideal = ideal_accessibility(&region, &city.zones, &city.opportunities, "jobs_total", &params, &speed, tau)?;
            let eta = efficiency(&region, &observed, &ideal, &weights)?;
            row.push(eta.aggregate.map_or("-".to_string(), |e| format!("{e:.4}")));
        }
        println!("{name:<8} {:>8} {:>8} {:>8}", row[0], row[1], row[2]);
    }
    Ok(())
}
