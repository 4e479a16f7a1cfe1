//! Regenerates the files under `fixtures/`.
//!
//! ```text
//! cargo run --example generate_fixtures [-- <dir>]
//! ```

use std::fs;
use std::path::PathBuf;

use offgrid_mdp::cli::{CompareManifest, LocationEntry};
use offgrid_mdp::ingest::{build_ep_distributions, EpDistributionSet, ERLANG_TWO_PEAK_NAME};
use offgrid_mdp::model::Gain;
use offgrid_mdp::state::ModelConfig;
use offgrid_mdp::synthetic::{cities, city, synthetic_year, write_pvwatts_csv};

fn main() -> offgrid_mdp::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    let city_dir = dir.join("cities");
    fs::create_dir_all(&city_dir).map_err(|e| offgrid_mdp::Error::io(&city_dir, e))?;
    let io = |p: &PathBuf| {
        let p = p.clone();
        move |e| offgrid_mdp::Error::io(p, e)
    };

    // toy model: three hours, capacity three, uniform arrivals on {0, 1, 2}
    let toy = ModelConfig::new(9, 12, 3, 3, 0.01, 0.95);
    let p = dir.join("toy.conf");
    fs::write(&p, toy.to_kv_string()).map_err(io(&p))?;
    EpDistributionSet::stationary(9, 12, &[1.0 / 3.0; 3])?.save(&dir.join("toy_arrivals.json"))?;

    let barcelona = ModelConfig::new(7, 18, 65, 25, 0.01, 0.95);
    let p = dir.join("barcelona.conf");
    fs::write(&p, barcelona.to_kv_string()).map_err(io(&p))?;

    let mut locations = Vec::new();
    for c in cities() {
        let records = synthetic_year(&c, 300.0);
        let name = format!("{}.csv", c.name.to_lowercase());
        let p = city_dir.join(&name);
        write_pvwatts_csv(&c, &records, fs::File::create(&p).map_err(io(&p))?)?;
        locations.push(LocationEntry {
            name: c.name.to_string(),
            csv: PathBuf::from(name),
        });
        println!("wrote {}", p.display());
    }

    let bcn = city("Barcelona").expect("Barcelona profile");
    let records = synthetic_year(&bcn, 300.0);
    let p = dir.join("barcelona_august.csv");
    let august: Vec<_> = records.iter().filter(|r| r.month == 8).cloned().collect();
    write_pvwatts_csv(&bcn, &august, fs::File::create(&p).map_err(io(&p))?)?;
    build_ep_distributions(&august, 8, 300.0)?.save(&dir.join("barcelona_august.json"))?;

    let manifest = CompareManifest {
        capacity: 65,
        threshold: 25,
        alpha: 0.01,
        beta: 0.95,
        packet_size_wh: 300.0,
        actions: vec![0.1, 0.3, 0.5, 0.7, 0.9],
        rewards: [1.0, -100.0, -200.0],
        gain: Gain::Identity,
        service: ERLANG_TWO_PEAK_NAME.to_string(),
        months: (1..=12).collect(),
        locations,
    };
    let p = city_dir.join("cities.json");
    fs::write(&p, serde_json::to_string_pretty(&manifest)? + "\n").map_err(io(&p))?;
    println!("wrote fixtures into {}", dir.display());
    Ok(())
}
