//! Reads a PVWatts hourly CSV and prints the per-hour packet distributions
//! of one month.
//!
//! ```text
//! cargo run --example ingest_pvwatts -- [csv] [month] [packet Wh]
//! ```

use std::path::PathBuf;

use offgrid_mdp::ingest::{build_ep_distributions, read_pvwatts_file};

fn main() -> offgrid_mdp::Result<()> {
    let mut args = std::env::args().skip(1);
    let csv = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/barcelona_august.csv"));
    let month: u32 = args.next().map_or(Ok(8), |s| s.parse()).map_err(|_| offgrid_mdp::Error::config("bad month"))?;
    let packet: f64 = args.next().map_or(Ok(300.0), |s| s.parse()).map_err(|_| offgrid_mdp::Error::config("bad packet size"))?;

    let records = read_pvwatts_file(&csv)?;
    let set = build_ep_distributions(&records, month, packet)?;
    println!("{}: month {month}, t0 = {}, T = {}", csv.display(), set.t0, set.deadline);
    for (h, pmf) in &set.dists {
        println!("{h:>2}h  mean {:>6.3}  max {:>2}  P(0) {:.3}", set.mean(*h), set.max_batch(*h), pmf[0]);
    }
    Ok(())
}
