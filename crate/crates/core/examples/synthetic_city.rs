//! Generate grid and radial cities and summarize their travel-time matrices.

use gravcat::netgen::{generate, CityConfig, Layout, Sprawl};
use gravcat::Mode;

fn main() -> gravcat::Result<()> {
    let configs = [
        ("grid 15x15", CityConfig::grid(15, 15)),
        ("radial 6x12", CityConfig { layout: Layout::Radial { rings: 6, spokes: 12 }, ..CityConfig::default() }),
        (
            "grid sprawl",
            CityConfig { sprawl: Some(Sprawl { edge_removal: 0.6, speed_decay: 2.0 }), ..CityConfig::grid(15, 15) },
        ),
    ];
    for (name, config) in configs {
        let city = generate(&config)?;
        println!(
            "{name}: {} zones, {} edges, connected={}",
            city.zones.len(),
            city.graph.edges().len(),
            city.graph.is_connected()
        );
        for mode in Mode::ALL {
            let m = city.travel_time_matrix(mode, 60.0)?;
            println!("  {:<5} {:>7} pairs within 60 min ({:.1} per origin)", mode.as_str(), m.nnz(), m.nnz() as f64 / m.len() as f64);
        }
    }
    Ok(())
}
