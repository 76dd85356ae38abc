//! Raw telemetry log ingestion: parsing, cleaning, and per-node resampling.
//!
//! The input is a plain-text log with one reading per line and eight
//! whitespace-separated columns:
//!
//! ```text
//! YYYY-MM-DD HH:MM:SS.ffffff epoch moteid temperature humidity light voltage
//! ```
//!
//! Malformed rows are rejected rather than treated as failures; rejections are
//! tallied by reason in an [`IngestSummary`]. Accepted records are grouped per
//! node and resampled to a fixed interval by mean aggregation. Buckets with no
//! readings are kept as gaps and never interpolated, so downstream state
//! sequences break at gaps instead of spanning them.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::RangeInclusive;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Node id range accepted by default (the deployment this tool was built
/// around used 54 motes).
pub const DEFAULT_MOTE_RANGE: RangeInclusive<u32> = 1..=54;

/// Default resampling interval: hourly.
pub const DEFAULT_INTERVAL_S: u64 = 3600;

const TIMESTAMP_IN_FMT: &str = "%Y-%m-%d %H:%M:%S%.f";
const TIMESTAMP_OUT_FMT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// Sensor channel selected for a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Temperature,
    Humidity,
    Light,
    Voltage,
}

impl Feature {
    /// All channels, in log column order.
    pub const ALL: [Feature; 4] = [
        Feature::Temperature,
        Feature::Humidity,
        Feature::Light,
        Feature::Voltage,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Feature::Temperature => "temperature",
            Feature::Humidity => "humidity",
            Feature::Light => "light",
            Feature::Voltage => "voltage",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "temperature" | "temp" => Ok(Feature::Temperature),
            "humidity" => Ok(Feature::Humidity),
            "light" => Ok(Feature::Light),
            "voltage" => Ok(Feature::Voltage),
            other => Err(format!(
                "unknown feature {other:?} (expected temperature, humidity, light, or voltage)"
            )),
        }
    }
}

/// One accepted telemetry row.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorRecord {
    /// Combined date+time of the reading (naive, as logged).
    pub timestamp: NaiveDateTime,
    /// Per-record sequence counter from the logger (not Unix time).
    pub epoch: u64,
    /// Node identifier, >= 1.
    pub mote_id: u32,
    /// Degrees Celsius.
    pub temperature: f64,
    /// Percent relative humidity.
    pub humidity: f64,
    /// Lux.
    pub light: f64,
    /// Volts.
    pub voltage: f64,
}

impl SensorRecord {
    /// Reading for the given channel.
    pub fn value(&self, feature: Feature) -> f64 {
        match feature {
            Feature::Temperature => self.temperature,
            Feature::Humidity => self.humidity,
            Feature::Light => self.light,
            Feature::Voltage => self.voltage,
        }
    }
}

/// Why a log row was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RejectReason {
    /// Fewer than eight columns.
    MissingField,
    /// More than eight columns.
    ExtraField,
    /// Date+time fields did not parse.
    BadTimestamp,
    /// A numeric column did not parse.
    BadNumber,
    /// A channel value parsed but was NaN or infinite.
    NonFinite,
    /// Mote id outside the configured range.
    MoteIdOutOfRange,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::MissingField => "missing_field",
            RejectReason::ExtraField => "extra_field",
            RejectReason::BadTimestamp => "bad_timestamp",
            RejectReason::BadNumber => "bad_number",
            RejectReason::NonFinite => "non_finite",
            RejectReason::MoteIdOutOfRange => "mote_id_out_of_range",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tally of what a log parse accepted and dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows_read: u64,
    pub rows_accepted: u64,
    /// Rejection counts keyed by [`RejectReason::as_str`].
    pub rejections: BTreeMap<String, u64>,
}

impl IngestSummary {
    pub fn add_rejection(&mut self, reason: RejectReason) {
        *self.rejections.entry(reason.as_str().to_string()).or_insert(0) += 1;
    }

    pub fn rejected(&self) -> u64 {
        self.rejections.values().sum()
    }
}

/// Parse one log row into a [`SensorRecord`].
///
/// A malformed row yields the rejection reason as the `Err` value; callers
/// tally these rather than aborting.
pub fn parse_record(
    line: &str,
    mote_range: &RangeInclusive<u32>,
) -> Result<SensorRecord, RejectReason> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() < 8 {
        return Err(RejectReason::MissingField);
    }
    if fields.len() > 8 {
        return Err(RejectReason::ExtraField);
    }
    let timestamp = parse_timestamp(fields[0], fields[1]).ok_or(RejectReason::BadTimestamp)?;
    let epoch: u64 = fields[2].parse().map_err(|_| RejectReason::BadNumber)?;
    let mote_id: u32 = fields[3].parse().map_err(|_| RejectReason::BadNumber)?;
    if mote_id == 0 || !mote_range.contains(&mote_id) {
        return Err(RejectReason::MoteIdOutOfRange);
    }
    let mut channels = [0.0f64; 4];
    for (slot, raw) in channels.iter_mut().zip(&fields[4..8]) {
        let v: f64 = raw.parse().map_err(|_| RejectReason::BadNumber)?;
        if !v.is_finite() {
            return Err(RejectReason::NonFinite);
        }
        *slot = v;
    }
    Ok(SensorRecord {
        timestamp,
        epoch,
        mote_id,
        temperature: channels[0],
        humidity: channels[1],
        light: channels[2],
        voltage: channels[3],
    })
}

fn parse_timestamp(date: &str, time: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(&format!("{date} {time}"), TIMESTAMP_IN_FMT).ok()
}

/// Parse a whole log, collecting accepted records and a rejection tally.
///
/// Blank lines are ignored; every other line counts as a row read.
pub fn parse_log(
    input: &str,
    mote_range: &RangeInclusive<u32>,
) -> (Vec<SensorRecord>, IngestSummary) {
    let mut records = Vec::new();
    let mut summary = IngestSummary::default();
    for line in input.lines() {
        if line.trim().is_empty() {
            continue;
        }
        summary.rows_read += 1;
        match parse_record(line, mote_range) {
            Ok(record) => {
                summary.rows_accepted += 1;
                records.push(record);
            }
            Err(reason) => summary.add_rejection(reason),
        }
    }
    (records, summary)
}

/// Errors building or loading a resampled series.
#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("resampling interval must be positive")]
    ZeroInterval,
    #[error("no readings for mote {mote_id} / {feature}")]
    EmptySeries { mote_id: u32, feature: Feature },
    #[error("series data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Regularly-resampled univariate series for one node and one channel.
///
/// Points are bucket means, strictly increasing in time and aligned to
/// interval boundaries. Empty buckets between the first and last occupied
/// bucket are listed in `gaps` and carry no value.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSeries {
    pub mote_id: u32,
    pub feature: Feature,
    pub interval_s: u64,
    pub points: Vec<(NaiveDateTime, f64)>,
    pub gaps: Vec<NaiveDateTime>,
}

/// Filter records to one mote, bucket them into interval-aligned windows, and
/// emit the mean of each occupied bucket.
///
/// Input order does not matter; duplicate timestamps all enter their bucket's
/// mean. Values within a bucket are summed in sorted order so the result is
/// bit-identical under input permutation.
pub fn build_series(
    records: &[SensorRecord],
    mote_id: u32,
    feature: Feature,
    interval_s: u64,
) -> Result<NodeSeries, SeriesError> {
    if interval_s == 0 {
        return Err(SeriesError::ZeroInterval);
    }
    let step = interval_s as i64;
    let mut buckets: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for record in records.iter().filter(|r| r.mote_id == mote_id) {
        let secs = record.timestamp.and_utc().timestamp();
        let bucket = secs.div_euclid(step) * step;
        buckets.entry(bucket).or_default().push(record.value(feature));
    }
    if buckets.is_empty() {
        return Err(SeriesError::EmptySeries { mote_id, feature });
    }
    let points: Vec<(NaiveDateTime, f64)> = buckets
        .iter()
        .map(|(&bucket, values)| {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
            (datetime_from_secs(bucket), mean)
        })
        .collect();
    let occupied: Vec<i64> = buckets.keys().copied().collect();
    let gaps = gap_buckets(&occupied, step);
    Ok(NodeSeries {
        mote_id,
        feature,
        interval_s,
        points,
        gaps,
    })
}

fn datetime_from_secs(secs: i64) -> NaiveDateTime {
    chrono::DateTime::from_timestamp(secs, 0)
        .expect("bucket timestamp in range")
        .naive_utc()
}

fn gap_buckets(occupied: &[i64], step: i64) -> Vec<NaiveDateTime> {
    let mut gaps = Vec::new();
    for pair in occupied.windows(2) {
        let mut t = pair[0] + step;
        while t < pair[1] {
            gaps.push(datetime_from_secs(t));
            t += step;
        }
    }
    gaps
}

impl NodeSeries {
    /// Rebuild a series from already-resampled points, recomputing gaps.
    ///
    /// Points must be finite, strictly increasing, and aligned to the
    /// interval.
    pub fn from_points(
        mote_id: u32,
        feature: Feature,
        interval_s: u64,
        points: Vec<(NaiveDateTime, f64)>,
    ) -> Result<Self, SeriesError> {
        if interval_s == 0 {
            return Err(SeriesError::ZeroInterval);
        }
        if points.is_empty() {
            return Err(SeriesError::EmptySeries { mote_id, feature });
        }
        let step = interval_s as i64;
        let mut occupied = Vec::with_capacity(points.len());
        for (ts, value) in &points {
            if !value.is_finite() {
                return Err(SeriesError::Format(format!("non-finite value at {ts}")));
            }
            let secs = ts.and_utc().timestamp();
            if secs.rem_euclid(step) != 0 {
                return Err(SeriesError::Format(format!(
                    "timestamp {ts} is not aligned to the {interval_s}s interval"
                )));
            }
            if let Some(&prev) = occupied.last() {
                if secs <= prev {
                    return Err(SeriesError::Format(format!(
                        "timestamps must be strictly increasing (at {ts})"
                    )));
                }
            }
            occupied.push(secs);
        }
        let gaps = gap_buckets(&occupied, step);
        Ok(NodeSeries {
            mote_id,
            feature,
            interval_s,
            points,
            gaps,
        })
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|&(_, v)| v).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Serialize as CSV with header `bucket_start,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bucket_start,value\n");
        for (ts, value) in &self.points {
            out.push_str(&format!("{},{}\n", ts.format(TIMESTAMP_OUT_FMT), value));
        }
        out
    }

    /// Parse the CSV written by [`NodeSeries::to_csv`].
    pub fn from_csv(
        text: &str,
        mote_id: u32,
        feature: Feature,
        interval_s: u64,
    ) -> Result<Self, SeriesError> {
        let mut lines = text.lines();
        match lines.next() {
            Some("bucket_start,value") => {}
            other => {
                return Err(SeriesError::Format(format!(
                    "expected header 'bucket_start,value', found {other:?}"
                )))
            }
        }
        let mut points = Vec::new();
        for (idx, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (raw_ts, raw_value) = line.split_once(',').ok_or_else(|| {
                SeriesError::Format(format!("line {}: expected two columns", idx + 2))
            })?;
            let ts = parse_bucket_timestamp(raw_ts).ok_or_else(|| {
                SeriesError::Format(format!("line {}: bad timestamp {raw_ts:?}", idx + 2))
            })?;
            let value: f64 = raw_value.trim().parse().map_err(|_| {
                SeriesError::Format(format!("line {}: bad value {raw_value:?}", idx + 2))
            })?;
            points.push((ts, value));
        }
        NodeSeries::from_points(mote_id, feature, interval_s, points)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), SeriesError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(
        path: &Path,
        mote_id: u32,
        feature: Feature,
        interval_s: u64,
    ) -> Result<Self, SeriesError> {
        let text = std::fs::read_to_string(path)?;
        NodeSeries::from_csv(&text, mote_id, feature, interval_s)
    }

    /// Points with timestamp in `[start, end)`; open bounds where `None`.
    pub fn slice_time(
        &self,
        start: Option<NaiveDateTime>,
        end: Option<NaiveDateTime>,
    ) -> Result<Self, SeriesError> {
        let points: Vec<(NaiveDateTime, f64)> = self
            .points
            .iter()
            .filter(|(ts, _)| start.is_none_or(|s| *ts >= s) && end.is_none_or(|e| *ts < e))
            .cloned()
            .collect();
        NodeSeries::from_points(self.mote_id, self.feature, self.interval_s, points)
    }

    /// Split into a leading train part and trailing test part by point count.
    ///
    /// `frac` is the leading fraction, rounded to the nearest point.
    pub fn split_leading_fraction(
        &self,
        frac: f64,
    ) -> Result<(Self, Self), SeriesError> {
        if !(0.0..=1.0).contains(&frac) {
            return Err(SeriesError::Format(format!(
                "split fraction {frac} outside [0, 1]"
            )));
        }
        let n_train = ((self.points.len() as f64 * frac).round() as usize).min(self.points.len());
        let train = NodeSeries::from_points(
            self.mote_id,
            self.feature,
            self.interval_s,
            self.points[..n_train].to_vec(),
        )?;
        let test = NodeSeries::from_points(
            self.mote_id,
            self.feature,
            self.interval_s,
            self.points[n_train..].to_vec(),
        )?;
        Ok((train, test))
    }
}

fn parse_bucket_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S%.fZ")
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S%.f"))
        .ok()
}
