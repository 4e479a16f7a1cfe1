//! Compares the five synthetic city profiles over the year and prints the
//! combined gain per location and month.
//!
//! ```text
//! cargo run --release --example city_comparison
//! ```

use offgrid_mdp::cli::CompareManifest;
use offgrid_mdp::measures::compare_locations;

fn main() -> offgrid_mdp::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/cities");
    let spec = CompareManifest::load(&dir.join("cities.json"))?;
    let (scenarios, failed) = spec.scenarios(&dir)?;
    let table = compare_locations(&scenarios, &spec.setup()?);

    print!("{:<10}", "month");
    let names = table.locations();
    for name in &names {
        print!("{name:>11}");
    }
    println!();
    for month in 1..=12 {
        print!("{month:<10}");
        for name in &names {
            match table.get(name, month) {
                Some(m) => print!("{:>11.4}", m.combined),
                None => print!("{:>11}", "-"),
            }
        }
        println!();
    }
    for row in failed {
        println!("{} month {}: {}", row.location, row.month, row.error.unwrap_or_default());
    }
    Ok(())
}
