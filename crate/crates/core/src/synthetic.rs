//! Synthetic PVWatts-style hourly production years for the shipped fixtures.
//!
//! Every generated file is synthetic. Hourly means follow a clear-sky shape
//! from latitude, day length and local solar noon, scaled by a monthly
//! clearness factor; day-to-day weather spreads the counts. Per month and
//! hour, the packet counts are then nudged so that their sum over the days
//! equals `round(mean * days)`, which makes the ingested mean hit the target
//! to within `0.5 / days`.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::{HourlyEnergyRecord, COL_AC_OUTPUT, COL_DAY, COL_HOUR, COL_MONTH};

pub const DAYS_IN_MONTH: [u32; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

/// Target mean packets for Barcelona in August, hours 7 to 18.
pub const BARCELONA_AUGUST: [f64; 12] = [0.9, 2.4, 4.0, 5.5, 6.7, 7.4, 7.75, 7.84, 7.3, 6.1, 4.3, 2.0];
pub const BARCELONA_AUGUST_FIRST_HOUR: u32 = 7;

/// Packets per hour at a clear-sky noon with the sun at the zenith.
const PEAK_SCALE: f64 = 10.5;
/// Means below this produce only sub-packet output.
const MIN_MEAN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct CityProfile {
    pub name: &'static str,
    pub latitude: f64,
    /// Clock hour of solar noon without daylight saving time.
    pub solar_noon: f64,
    /// Shift clocks by one hour from April to October.
    pub dst: bool,
    /// Monthly clear-sky fraction.
    pub clearness: [f64; 12],
    pub seed: u64,
}

pub fn cities() -> Vec<CityProfile> {
    vec![
        CityProfile {
            name: "Rabat",
            latitude: 34.0,
            solar_noon: 12.45,
            dst: true,
            clearness: [0.62, 0.66, 0.72, 0.76, 0.80, 0.84, 0.88, 0.87, 0.81, 0.72, 0.64, 0.60],
            seed: 11,
        },
        CityProfile {
            name: "Barcelona",
            latitude: 41.4,
            solar_noon: 13.1,
            dst: true,
            clearness: [0.58, 0.62, 0.66, 0.68, 0.72, 0.78, 0.82, 0.85, 0.74, 0.64, 0.58, 0.55],
            seed: 12,
        },
        CityProfile {
            name: "Moscow",
            latitude: 55.8,
            solar_noon: 12.5,
            dst: false,
            clearness: [0.22, 0.32, 0.42, 0.50, 0.58, 0.60, 0.60, 0.56, 0.46, 0.34, 0.22, 0.18],
            seed: 13,
        },
        CityProfile {
            name: "Paris",
            latitude: 48.9,
            solar_noon: 12.85,
            dst: true,
            clearness: [0.34, 0.42, 0.52, 0.58, 0.60, 0.64, 0.66, 0.64, 0.58, 0.48, 0.36, 0.32],
            seed: 14,
        },
        CityProfile {
            name: "Unalaska",
            latitude: 53.9,
            solar_noon: 14.1,
            dst: true,
            clearness: [0.14, 0.18, 0.24, 0.28, 0.30, 0.30, 0.30, 0.28, 0.26, 0.22, 0.16, 0.12],
            seed: 15,
        },
    ]
}

pub fn city(name: &str) -> Option<CityProfile> {
    cities().into_iter().find(|c| c.name.eq_ignore_ascii_case(name))
}

fn mid_month_day(month: u32) -> f64 {
    DAYS_IN_MONTH[..month as usize - 1].iter().sum::<u32>() as f64 + 15.0
}

/// Mean packets per clock hour for one month.
pub fn hourly_means(city: &CityProfile, month: u32) -> [f64; 24] {
    let mut out = [0.0; 24];
    if city.name == "Barcelona" && month == 8 {
        for (k, &m) in BARCELONA_AUGUST.iter().enumerate() {
            out[BARCELONA_AUGUST_FIRST_HOUR as usize + k] = m;
        }
        return out;
    }
    let decl = 23.44_f64.to_radians() * (2.0 * PI * (284.0 + mid_month_day(month)) / 365.0).sin();
    let lat = city.latitude.to_radians();
    let cos_w0 = (-lat.tan() * decl.tan()).clamp(-1.0, 1.0);
    let day_length = 2.0 * cos_w0.acos().to_degrees() / 15.0;
    let noon = city.solar_noon + if city.dst && (4..=10).contains(&month) { 1.0 } else { 0.0 };
    let sunrise = noon - day_length / 2.0;
    let noon_elevation = (PI / 2.0 - (lat - decl).abs()).max(0.0);
    let peak = PEAK_SCALE * noon_elevation.sin() * city.clearness[month as usize - 1];
    for (h, m) in out.iter_mut().enumerate() {
        // average the daylight arc over the hour
        let samples = 8;
        let shape: f64 = (0..samples)
            .map(|k| {
                let t = h as f64 + (k as f64 + 0.5) / samples as f64;
                let phase = (t - sunrise) / day_length;
                if (0.0..=1.0).contains(&phase) {
                    (PI * phase).sin().powf(1.2)
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            / samples as f64;
        let v = peak * shape;
        *m = if v < MIN_MEAN { 0.0 } else { (v * 100.0).round() / 100.0 };
    }
    out
}

/// Daily packet counts for one month and hour with the exact target sum.
fn daily_counts(mean: f64, weather: &[f64], rng: &mut ChaCha8Rng) -> Vec<u32> {
    let days = weather.len();
    let target = (mean * days as f64).round() as i64;
    if target == 0 {
        return vec![0; days];
    }
    let mut counts: Vec<i64> = weather
        .iter()
        .map(|w| (mean * w + rng.gen_range(-0.5..0.5)).round().max(0.0) as i64)
        .collect();
    let mut sum: i64 = counts.iter().sum();
    while sum != target {
        let d = rng.gen_range(0..days);
        if sum < target {
            counts[d] += 1;
            sum += 1;
        } else if counts[d] > 0 {
            counts[d] -= 1;
            sum -= 1;
        }
    }
    counts.into_iter().map(|c| c as u32).collect()
}

/// One synthetic year of hourly AC output in watts.
///
/// Hours with packets get `count * packet + U[0, packet)` watts; daylight
/// hours with a zero mean get a small sub-packet output.
pub fn synthetic_year(city: &CityProfile, packet_size_wh: f64) -> Vec<HourlyEnergyRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(city.seed);
    let mut records = Vec::with_capacity(8760);
    for month in 1..=12u32 {
        let days = DAYS_IN_MONTH[month as usize - 1] as usize;
        let means = hourly_means(city, month);
        let clear = city.clearness[month as usize - 1];
        // weather factors with mean one: clear days above, overcast below
        let mut weather: Vec<f64> = (0..days)
            .map(|_| if rng.gen_bool(clear) { rng.gen_range(1.0..1.25) } else { rng.gen_range(0.15..0.8) })
            .collect();
        let avg = weather.iter().sum::<f64>() / days as f64;
        for w in &mut weather {
            *w /= avg;
        }
        let first = means.iter().position(|&m| m > 0.0);
        let last = means.iter().rposition(|&m| m > 0.0);
        let counts: Vec<Vec<u32>> = means.iter().map(|&m| daily_counts(m, &weather, &mut rng)).collect();
        for day in 0..days {
            for hour in 0..24usize {
                let c = counts[hour][day];
                let watts = if c > 0 {
                    c as f64 * packet_size_wh + rng.gen_range(0.0..packet_size_wh)
                } else {
                    let edge = matches!((first, last), (Some(f), Some(l)) if hour + 1 == f || hour == l + 1);
                    let inside = matches!((first, last), (Some(f), Some(l)) if (f..=l).contains(&hour));
                    if edge || inside {
                        rng.gen_range(0.05..0.6) * packet_size_wh
                    } else {
                        0.0
                    }
                };
                records.push(HourlyEnergyRecord {
                    month,
                    day: day as u32 + 1,
                    hour: hour as u32,
                    ac_output_watts: (watts * 1000.0).round() / 1000.0,
                });
            }
        }
    }
    records
}

/// Writes records in the PVWatts hourly layout with a metadata preamble and
/// a trailing `Totals` row.
pub fn write_pvwatts_csv<W: Write>(city: &CityProfile, records: &[HourlyEnergyRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record(["Requested Location:", &format!("{} (synthetic)", city.name)])?;
    w.write_record(["Location:", "synthetic profile, not measured data"])?;
    w.write_record(["Lat (deg N):", &format!("{}", city.latitude)])?;
    w.write_record(["DC System Size (kW):", "3"])?;
    w.write_record([
        COL_MONTH,
        COL_DAY,
        COL_HOUR,
        "Plane of Array Irradiance (W/m^2)",
        "DC Array Output (W)",
        COL_AC_OUTPUT,
    ])?;
    let mut total_ac = 0.0;
    for r in records {
        let dc = r.ac_output_watts / 0.96;
        let poa = dc / 3.0 / 0.86;
        total_ac += r.ac_output_watts;
        w.write_record([
            r.month.to_string(),
            r.day.to_string(),
            r.hour.to_string(),
            format!("{poa:.3}"),
            format!("{dc:.3}"),
            format!("{:.3}", r.ac_output_watts),
        ])?;
    }
    w.write_record(["Totals", "", "", "", "", &format!("{total_ac:.3}")])?;
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_ep_distributions, parse_pvwatts_csv};

    #[test]
    fn year_has_8760_rows() {
        let c = city("paris").unwrap();
        assert_eq!(synthetic_year(&c, 300.0).len(), 8760);
    }

    #[test]
    fn barcelona_august_targets() {
        let c = city("Barcelona").unwrap();
        let mut buf = Vec::new();
        write_pvwatts_csv(&c, &synthetic_year(&c, 300.0), &mut buf).unwrap();
        let recs = parse_pvwatts_csv(buf.as_slice()).unwrap();
        let set = build_ep_distributions(&recs, 8, 300.0).unwrap();
        assert_eq!((set.t0, set.deadline), (7, 18));
        for (k, &target) in BARCELONA_AUGUST.iter().enumerate() {
            let h = 7 + k as u32;
            assert!((set.mean(h) - target).abs() <= 0.5 / 31.0 + 1e-12, "hour {h}");
        }
    }

    #[test]
    fn summer_beats_winter() {
        for c in cities() {
            let s: f64 = hourly_means(&c, 6).iter().sum();
            let w: f64 = hourly_means(&c, 12).iter().sum();
            assert!(s > w, "{}", c.name);
        }
    }

    #[test]
    fn exact_count_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let weather = vec![1.0; 30];
        let c = daily_counts(3.33, &weather, &mut rng);
        assert_eq!(c.iter().sum::<u32>(), 100);
    }
}
