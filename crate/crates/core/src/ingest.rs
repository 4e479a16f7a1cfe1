//! Hourly PV production records to per-hour energy-packet batch distributions.
//!
//! Input is a PVWatts-style hourly CSV. Only four columns are read: `Month`,
//! `Day`, `Hour` and `AC System Output (W)`. Header matching ignores case and
//! surrounding whitespace, and metadata lines above the header are skipped.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COL_MONTH: &str = "Month";
pub const COL_DAY: &str = "Day";
pub const COL_HOUR: &str = "Hour";
pub const COL_AC_OUTPUT: &str = "AC System Output (W)";

const REQUIRED: [&str; 4] = [COL_MONTH, COL_DAY, COL_HOUR, COL_AC_OUTPUT];

/// Data rows in a typical meteorological year.
pub const TYPICAL_YEAR_ROWS: usize = 8760;

const PMF_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourlyEnergyRecord {
    pub month: u32,
    pub day: u32,
    pub hour: u32,
    pub ac_output_watts: f64,
}

/// Reads PVWatts hourly records in file order.
///
/// The PVWatts `Totals` summary row is skipped. Fewer than 8760 rows is
/// accepted with a warning.
pub fn parse_pvwatts_csv<R: Read>(input: R) -> Result<Vec<HourlyEnergyRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);

    let mut columns: Option<[usize; 4]> = None;
    let mut records = Vec::new();

    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);

        let Some(cols) = columns else {
            columns = header_columns(&row)?;
            continue;
        };

        if row.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        let cell = |i: usize| row.get(cols[i]).map(str::trim).unwrap_or("");
        if cell(0).eq_ignore_ascii_case("totals") {
            continue;
        }

        let month = parse_calendar(cell(0), COL_MONTH, 1..=12, line)?;
        let day = parse_calendar(cell(1), COL_DAY, 1..=31, line)?;
        let hour = parse_calendar(cell(2), COL_HOUR, 0..=23, line)?;
        let raw = cell(3);
        let ac_output_watts = f64::from_str(raw).map_err(|_| Error::BadRow {
            row: line,
            message: format!("non-numeric {COL_AC_OUTPUT:?} value {raw:?}"),
        })?;
        if !ac_output_watts.is_finite() {
            return Err(Error::BadRow {
                row: line,
                message: format!("non-finite output {raw:?}"),
            });
        }
        if ac_output_watts < 0.0 {
            return Err(Error::BadRow {
                row: line,
                message: format!("negative output {ac_output_watts}"),
            });
        }
        records.push(HourlyEnergyRecord {
            month,
            day,
            hour,
            ac_output_watts,
        });
    }

    if columns.is_none() {
        return Err(Error::MissingColumn {
            column: COL_MONTH.to_string(),
        });
    }
    if !records.is_empty() && records.len() != TYPICAL_YEAR_ROWS {
        log::warn!(
            "read {} hourly rows, a typical year has {TYPICAL_YEAR_ROWS}",
            records.len()
        );
    }
    Ok(records)
}

pub fn read_pvwatts_file(path: &Path) -> Result<Vec<HourlyEnergyRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_pvwatts_csv(std::io::BufReader::new(file))
}

/// Returns the column positions if `row` is the header row.
///
/// Rows mentioning none of the required names are treated as metadata and
/// skipped; a row naming some but not all of them is a schema error.
fn header_columns(row: &csv::StringRecord) -> Result<Option<[usize; 4]>> {
    let find = |name: &str| {
        row.iter()
            .position(|c| c.trim().eq_ignore_ascii_case(name))
    };
    let found: Vec<Option<usize>> = REQUIRED.iter().map(|n| find(n)).collect();
    if found.iter().all(Option::is_none) {
        return Ok(None);
    }
    let mut cols = [0usize; 4];
    for (i, (slot, name)) in found.iter().zip(REQUIRED).enumerate() {
        cols[i] = slot.ok_or_else(|| Error::MissingColumn {
            column: name.to_string(),
        })?;
    }
    Ok(Some(cols))
}

fn parse_calendar(
    raw: &str,
    column: &str,
    range: std::ops::RangeInclusive<u32>,
    line: usize,
) -> Result<u32> {
    let bad = |what: &str| Error::BadRow {
        row: line,
        message: format!("{what} {column:?} value {raw:?}"),
    };
    let value = f64::from_str(raw).map_err(|_| bad("non-numeric"))?;
    if value.fract() != 0.0 || value < 0.0 {
        return Err(bad("non-integer"));
    }
    let value = value as u32;
    if !range.contains(&value) {
        return Err(bad("out-of-range"));
    }
    Ok(value)
}

/// Per-hour batch-size distributions of energy packets for one month.
///
/// `dists[h][k]` is the probability that `k` packets arrive during hour `h`.
/// Only hours in `[t0, T]` are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpDistributionSet {
    pub month: u32,
    pub packet_size_wh: f64,
    pub t0: u32,
    #[serde(rename = "T")]
    pub deadline: u32,
    pub dists: BTreeMap<u32, Vec<f64>>,
}

impl EpDistributionSet {
    /// Builds a set from explicit pmfs, validating every invariant.
    pub fn from_pmfs(
        month: u32,
        packet_size_wh: f64,
        t0: u32,
        deadline: u32,
        dists: BTreeMap<u32, Vec<f64>>,
    ) -> Result<Self> {
        let set = EpDistributionSet {
            month,
            packet_size_wh,
            t0,
            deadline,
            dists,
        };
        set.validate()?;
        Ok(set)
    }

    /// Same pmf for every hour of `[t0, T]`.
    pub fn stationary(t0: u32, deadline: u32, pmf: &[f64]) -> Result<Self> {
        let dists = (t0..=deadline).map(|h| (h, pmf.to_vec())).collect();
        Self::from_pmfs(0, 300.0, t0, deadline, dists)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.packet_size_wh > 0.0) {
            return Err(Error::Data("packet_size_wh must be positive".into()));
        }
        if self.t0 > self.deadline || self.deadline > 23 {
            return Err(Error::Data(format!(
                "invalid production window [{}, {}]",
                self.t0, self.deadline
            )));
        }
        for h in self.t0..=self.deadline {
            if !self.dists.contains_key(&h) {
                return Err(Error::Data(format!("missing distribution for hour {h}")));
            }
        }
        for (&h, pmf) in &self.dists {
            if pmf.is_empty() {
                return Err(Error::Data(format!("empty pmf at hour {h}")));
            }
            if pmf.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Data(format!("pmf entry outside [0,1] at hour {h}")));
            }
            let total: f64 = pmf.iter().sum();
            if (total - 1.0).abs() > PMF_TOLERANCE {
                return Err(Error::Data(format!(
                    "pmf at hour {h} sums to {total}, not 1"
                )));
            }
            let outside = h < self.t0 || h > self.deadline;
            if outside && pmf[0] != 1.0 {
                return Err(Error::Data(format!(
                    "hour {h} lies outside [t0, T] but has production"
                )));
            }
        }
        Ok(())
    }

    pub fn pmf(&self, hour: u32) -> Option<&[f64]> {
        self.dists.get(&hour).map(Vec::as_slice)
    }

    pub fn mean(&self, hour: u32) -> f64 {
        self.pmf(hour)
            .map(|p| p.iter().enumerate().map(|(k, q)| k as f64 * q).sum())
            .unwrap_or(0.0)
    }

    /// Largest batch with positive probability at `hour`.
    pub fn max_batch(&self, hour: u32) -> u32 {
        self.pmf(hour)
            .and_then(|p| p.iter().rposition(|&q| q > 0.0))
            .unwrap_or(0) as u32
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: EpDistributionSet = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Empirical per-hour pmf of `floor(output / packet_size_wh)` over the days
/// of `month`, each day weighted equally.
pub fn build_ep_distributions(
    records: &[HourlyEnergyRecord],
    month: u32,
    packet_size_wh: f64,
) -> Result<EpDistributionSet> {
    if !(packet_size_wh > 0.0) {
        return Err(Error::config("packet size must be positive"));
    }
    let mut counts: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
    let mut samples = [0u64; 24];
    for rec in records.iter().filter(|r| r.month == month) {
        let packets = (rec.ac_output_watts / packet_size_wh).floor() as usize;
        let hist = counts.entry(rec.hour).or_default();
        if hist.len() <= packets {
            hist.resize(packets + 1, 0);
        }
        hist[packets] += 1;
        samples[rec.hour as usize] += 1;
    }
    if counts.is_empty() {
        return Err(Error::Data(format!("month {month} absent from records")));
    }

    let producing = |h: &u32| counts[h].iter().skip(1).any(|&c| c > 0);
    let t0 = counts.keys().copied().find(producing);
    let deadline = counts.keys().copied().rev().find(producing);
    let (Some(t0), Some(deadline)) = (t0, deadline) else {
        return Err(Error::Data("no production hours found".into()));
    };

    let mut dists = BTreeMap::new();
    for h in t0..=deadline {
        let pmf = match counts.get(&h) {
            Some(hist) => {
                let n = samples[h as usize] as f64;
                let mut pmf: Vec<f64> = hist.iter().map(|&c| c as f64 / n).collect();
                while pmf.len() > 1 && *pmf.last().unwrap() == 0.0 {
                    pmf.pop();
                }
                pmf
            }
            None => vec![1.0],
        };
        dists.insert(h, pmf);
    }

    EpDistributionSet::from_pmfs(month, packet_size_wh, t0, deadline, dists)
}

/// Per-hour Bernoulli probability that one data packet requests service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceProfile {
    pub probs: BTreeMap<u32, f64>,
}

/// Shape-faithful reconstruction of an Erlang-style daily workload with
/// peaks at 10:00 and 14:00. Indexed by hour of day.
pub const ERLANG_TWO_PEAK: [f64; 24] = [
    0.10, 0.08, 0.06, 0.05, 0.05, 0.07, 0.12, 0.25, 0.45, 0.65, 0.80, 0.70, //
    0.55, 0.62, 0.78, 0.66, 0.55, 0.48, 0.42, 0.38, 0.32, 0.25, 0.18, 0.13,
];

pub const ERLANG_TWO_PEAK_NAME: &str = "erlang-two-peak";

#[derive(Debug, Clone, PartialEq)]
pub enum ServiceSpec {
    Explicit(BTreeMap<u32, f64>),
    Preset(String),
}

impl ServiceProfile {
    pub fn prob(&self, hour: u32) -> Option<f64> {
        self.probs.get(&hour).copied()
    }

    /// Same probability for all 24 hours.
    pub fn constant(p: f64) -> Result<Self> {
        build_service_profile(&ServiceSpec::Explicit((0..24).map(|h| (h, p)).collect()))
    }

    pub fn covers(&self, t0: u32, deadline: u32) -> Result<()> {
        match (t0..=deadline).find(|h| !self.probs.contains_key(h)) {
            Some(h) => Err(Error::config(format!(
                "service profile has no probability for hour {h}"
            ))),
            None => Ok(()),
        }
    }

    /// Parses `hour = probability` lines; `#` starts a comment.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut probs = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("service line {}: expected hour = p", n + 1)))?;
            let hour: u32 = k.trim().parse().map_err(|_| {
                Error::config(format!("service line {}: bad hour {:?}", n + 1, k.trim()))
            })?;
            let p: f64 = v.trim().parse().map_err(|_| {
                Error::config(format!("service line {}: bad probability {:?}", n + 1, v.trim()))
            })?;
            probs.insert(hour, p);
        }
        build_service_profile(&ServiceSpec::Explicit(probs))
    }
}

pub fn build_service_profile(spec: &ServiceSpec) -> Result<ServiceProfile> {
    let probs: BTreeMap<u32, f64> = match spec {
        ServiceSpec::Explicit(map) => map.clone(),
        ServiceSpec::Preset(name) if name.eq_ignore_ascii_case(ERLANG_TWO_PEAK_NAME) => {
            (0u32..).zip(ERLANG_TWO_PEAK).collect()
        }
        ServiceSpec::Preset(name) => {
            return Err(Error::config(format!("unknown service preset {name:?}")))
        }
    };
    for (&h, &p) in &probs {
        if h > 23 {
            return Err(Error::config(format!("service hour {h} outside 0..=23")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(format!(
                "service probability {p} at hour {h} outside [0,1]"
            )));
        }
    }
    Ok(ServiceProfile { probs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_row_fixture() {
        let text = "Month,Day,Hour,AC System Output (W)\n8,1,14,2352\n8,1,15,1800\n8,1,19,0";
        let recs = parse_pvwatts_csv(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].ac_output_watts, 2352.0);
        assert_eq!(recs[2].hour, 19);
    }

    #[test]
    fn empty_data_section() {
        let recs = parse_pvwatts_csv("Month,Day,Hour,AC System Output (W)\n".as_bytes()).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn header_is_case_insensitive_and_trimmed() {
        let text = "\"Requested Location\",\"barcelona\"\n month , DAY,hour,Beam,  ac system output (w) \n1,1,0,5,0\n";
        let recs = parse_pvwatts_csv(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
    }

    #[test]
    fn missing_column_is_named() {
        let err = parse_pvwatts_csv("Month,Day,Hour,DC Output\n1,1,1,3\n".as_bytes()).unwrap_err();
        match err {
            Error::MissingColumn { column } => assert_eq!(column, COL_AC_OUTPUT),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn negative_output_reports_row() {
        let err = parse_pvwatts_csv(
            "Month,Day,Hour,AC System Output (W)\n1,1,1,3\n1,1,2,-4\n".as_bytes(),
        )
        .unwrap_err();
        match err {
            Error::BadRow { row, message } => {
                assert_eq!(row, 3);
                assert!(message.contains("negative"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn non_numeric_output_rejected() {
        let err = parse_pvwatts_csv("Month,Day,Hour,AC System Output (W)\n1,1,1,abc\n".as_bytes())
            .unwrap_err();
        assert!(matches!(err, Error::BadRow { row: 2, .. }));
    }

    #[test]
    fn floor_division_two_days() {
        let recs = [
            HourlyEnergyRecord { month: 3, day: 1, hour: 10, ac_output_watts: 650.0 },
            HourlyEnergyRecord { month: 3, day: 2, hour: 10, ac_output_watts: 320.0 },
        ];
        let set = build_ep_distributions(&recs, 3, 300.0).unwrap();
        assert_eq!(set.t0, 10);
        assert_eq!(set.deadline, 10);
        assert_eq!(set.pmf(10).unwrap(), &[0.0, 0.5, 0.5]);
    }

    #[test]
    fn zero_hours_at_edges_are_excluded() {
        let mut recs = Vec::new();
        for day in 1..=2 {
            for (hour, w) in [(5, 0.0), (6, 100.0), (7, 400.0), (8, 0.0), (9, 900.0), (10, 250.0)] {
                recs.push(HourlyEnergyRecord { month: 1, day, hour, ac_output_watts: w });
            }
        }
        let set = build_ep_distributions(&recs, 1, 300.0).unwrap();
        assert_eq!((set.t0, set.deadline), (7, 9));
        assert_eq!(set.pmf(8).unwrap(), &[1.0]);
    }

    #[test]
    fn absent_month_and_dark_month() {
        let recs = [HourlyEnergyRecord { month: 1, day: 1, hour: 12, ac_output_watts: 0.0 }];
        assert!(matches!(build_ep_distributions(&recs, 2, 300.0), Err(Error::Data(_))));
        let err = build_ep_distributions(&recs, 1, 300.0).unwrap_err();
        assert!(err.to_string().contains("no production hours found"));
    }

    #[test]
    fn preset_peaks() {
        let p = build_service_profile(&ServiceSpec::Preset("erlang-two-peak".into())).unwrap();
        let best = p
            .probs
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(h, _)| *h)
            .unwrap();
        assert!(best == 10 || best == 14);
        // both peaks are local maxima
        for peak in [10u32, 14] {
            assert!(p.probs[&peak] > p.probs[&(peak - 1)]);
            assert!(p.probs[&peak] > p.probs[&(peak + 1)]);
        }
    }

    #[test]
    fn explicit_profile_passes_through() {
        let map: BTreeMap<u32, f64> = [(3, 0.125), (4, 0.0), (5, 1.0)].into_iter().collect();
        let p = build_service_profile(&ServiceSpec::Explicit(map.clone())).unwrap();
        assert_eq!(p.probs, map);
        let bad: BTreeMap<u32, f64> = [(3, 1.5)].into_iter().collect();
        assert!(build_service_profile(&ServiceSpec::Explicit(bad)).is_err());
    }

    #[test]
    fn json_round_trip() {
        let set = EpDistributionSet::stationary(9, 12, &[0.25, 0.5, 0.25]).unwrap();
        let back = EpDistributionSet::from_json(&set.to_json().unwrap()).unwrap();
        assert_eq!(set, back);
        assert!(set.to_json().unwrap().contains("\"T\": 12"));
    }
}
