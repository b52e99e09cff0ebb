//! Fit `exp(−α·t^β)` to synthetic trip durations and print the duration CDF.
//!
//! Run with `cargo run --example impedance_fit`.

use gravcat::impedance::{duration_cdf, fit};
use gravcat::{Mode, TripRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> gravcat::Result<()> {
    let (alpha, beta) = (0.008, 1.467);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // Inverse survival: S(t) = u  ⇒  t = (−ln u / α)^(1/β).
    let trips: Vec<TripRecord> = (0..20_000)
        .map(|_| {
            let u: f64 = rng.gen_range(f64::EPSILON..1.0);
            let t = (-u.ln() / alpha).powf(1.0 / beta);
            TripRecord::new(Mode::Drive, "jobs_total", t.max(1e-6))
        })
        .collect::<gravcat::Result<_>>()?;

    let outcome = fit(&trips, "jobs_total", Mode::Drive, 1.0)?;
    println!("true   alpha={alpha} beta={beta}");
    println!("fitted {:?}", outcome.params.decay);
    println!("r2={:.5} bins={} trips={}", outcome.diagnostics.r2, outcome.diagnostics.n_bins, outcome.diagnostics.n_trips);

    for t in [10.0, 30.0, 60.0] {
        println!("f({t}) = {:.5}", outcome.params.eval(t)?);
    }

    let cdf = duration_cdf(&trips, "jobs_total", Mode::Drive, 5.0)?;
    println!("\nminutes  cumulative (5-minute smoothing)");
    for (t, p) in cdf.iter().step_by(10).take(8) {
        println!("{t:>7}  {p:.4}");
    }
    Ok(())
}
