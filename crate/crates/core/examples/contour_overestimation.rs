//! How much a flat contour measure overstates gravity accessibility, by
//! threshold and by distance from the city center.

use gravcat::access::{contour_overestimation, Intrazonal};
use gravcat::netgen::{generate, CityConfig};
use gravcat::{ImpedanceParams, Mode, Region};

fn main() -> gravcat::Result<()> {
    let city = generate(&CityConfig::grid(25, 25))?;
    let region = Region::all(&city.zones);
    let matrix = city.travel_time_matrix(Mode::Drive, 90.0)?;
    let params = ImpedanceParams::power_exponential("jobs_total", Mode::Drive, 0.008, 1.467)?;
    let radius = city.center_distance_km.iter().cloned().fold(0.0, f64::max);

    println!("{:>5} {:>10} {:>10} {:>10}", "tau", "mean %", "core %", "edge %");
    for tau in [15.0, 30.0, 45.0, 60.0, 90.0] {
        let o = contour_overestimation(&region, &matrix, &city.opportunities, "jobs_total", &params, tau, &Intrazonal::Matrix)?;
        let band = |lo: f64, hi: f64| {
            let v: Vec<f64> = o
                .percent
                .iter()
                .zip(&city.center_distance_km)
                .filter(|(_, &d)| d >= lo * radius && d < hi * radius)
                .filter_map(|(p, _)| *p)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let mean = o.mean_percent().unwrap_or(f64::NAN);
        println!("{tau:>5} {mean:>10.1} {:>10.1} {:>10.1}", band(0.0, 0.3), band(0.7, 1.01));
    }
    Ok(())
}
