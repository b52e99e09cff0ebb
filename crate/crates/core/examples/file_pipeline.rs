//! The command-line pipeline end to end in a scratch directory:
//! synth → fit-free params → access → aggregate, with metadata sidecars.

use std::fs;

use gravcat::cli;

fn main() -> std::io::Result<()> {
    let dir = tempfile::tempdir()?;
    let d = |name: &str| dir.path().join(name).display().to_string();
    let run = |args: &[&str]| {
        let code = cli::run(std::iter::once("gravcat").chain(args.iter().copied()));
        assert_eq!(code, 0, "gravcat {} failed", args.join(" "));
    };

    run(&["synth", "--grid", "10x10", "--seed", "7", "--out-dir", &d("")]);
    fs::write(d("params.json"), r#"[{"purpose":"jobs_total","mode":"drive","alpha":0.008,"beta":1.467}]"#)?;
    let (zones, opps, matrix, params) = (d("zones.csv"), d("opportunities.csv"), d("matrix_drive.csv"), d("params.json"));
    let common = ["--zones", &zones, "--opportunities", &opps, "--matrix", &matrix, "--params", &params];

    let out = d("results.csv");
    let mut args = vec!["access", "--tau", "30", "--kind", "jobs_total", "--mode", "drive", "--out", &out];
    args.extend(common);
    run(&args);

    let sweep = d("sweep.csv");
    let mut args = vec!["sweep", "--taus", "15,30,45,60,90", "--kind", "jobs_total", "--mode", "drive", "--out", &sweep];
    args.extend(common);
    run(&args);

    let agg = d("aggregate.csv");
    run(&["aggregate", "--zones", &zones, "--results", &sweep, "--out", &agg]);

    let results = fs::read_to_string(&out)?;
    println!("results.csv: {} rows", results.lines().count() - 1);
    println!("{}", results.lines().take(4).collect::<Vec<_>>().join("\n"));
    println!("\naggregate.csv:\n{}", fs::read_to_string(&agg)?);
    println!("sidecar:\n{}", fs::read_to_string(cli::sidecar_path(std::path::Path::new(&out)))?);
    Ok(())
}
