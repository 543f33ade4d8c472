//! Raw time-series data model.
//!
//! Indices are 1-based and inclusive at every public boundary. A series of
//! length `n` is addressed as `1..=n`; `slice(IndexRange::new(a, b))` has
//! `b - a + 1` points.

use std::fmt;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("no data rows")]
    EmptyInput,
    #[error("row {row}: value is not finite")]
    NonFiniteValue { row: usize },
    #[error("row {row}: index does not increase")]
    NonMonotonicIndex { row: usize },
    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },
    #[error("invalid index range [{start}, {end}]")]
    InvalidRange { start: u64, end: u64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Inclusive, 1-based range of indices `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexRange {
    start: u64,
    end: u64,
}

impl IndexRange {
    pub fn new(start: u64, end: u64) -> Result<Self, SeriesError> {
        if start == 0 || start > end {
            return Err(SeriesError::InvalidRange { start, end });
        }
        Ok(Self { start, end })
    }

    /// Range `[1, n]`. Panics if `n == 0`.
    pub fn full(n: u64) -> Self {
        assert!(n >= 1, "series length must be at least 1");
        Self { start: 1, end: n }
    }

    #[inline]
    pub fn start(&self) -> u64 {
        self.start
    }

    #[inline]
    pub fn end(&self) -> u64 {
        self.end
    }

    #[inline]
    pub fn len(&self) -> u64 {
        self.end - self.start + 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn contains(&self, i: u64) -> bool {
        self.start <= i && i <= self.end
    }

    #[inline]
    pub fn covers(&self, other: &IndexRange) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    #[inline]
    pub fn overlaps(&self, other: &IndexRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn intersect(&self, other: &IndexRange) -> Option<IndexRange> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start <= end).then_some(IndexRange { start, end })
    }

    pub fn hull(&self, other: &IndexRange) -> IndexRange {
        IndexRange { start: self.start.min(other.start), end: self.end.max(other.end) }
    }

    /// Shifts both ends down by `offset`, clipping to `[1, limit]`.
    pub(crate) fn shift_down_clipped(&self, offset: u64, limit: u64) -> Option<IndexRange> {
        if self.end <= offset {
            return None;
        }
        let start = self.start.saturating_sub(offset).max(1);
        let end = (self.end - offset).min(limit);
        (start <= end).then_some(IndexRange { start, end })
    }
}

impl fmt::Display for IndexRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

/// The three per-segment error measures `(L, d*, f*)`.
///
/// `l1` is the Manhattan distance between data and compression function,
/// `d_star` the largest absolute data value and `f_star` the largest absolute
/// function value. For derived series each field is an upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorMeasures<S> {
    pub l1: S,
    pub d_star: S,
    pub f_star: S,
}

impl<S: Scalar> ErrorMeasures<S> {
    pub fn new(l1: S, d_star: S, f_star: S) -> Self {
        debug_assert!(l1 >= S::zero() && d_star >= S::zero() && f_star >= S::zero());
        Self { l1, d_star, f_star }
    }
}

/// An aligned sequence of finite data points. Immutable once ingested.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<S> {
    id: String,
    points: Vec<S>,
}

impl<S: Scalar> TimeSeries<S> {
    /// Builds a series from `(key, value)` rows. Keys only establish order
    /// and are dropped afterwards; they must strictly increase.
    pub fn ingest<K, I>(id: impl Into<String>, rows: I) -> Result<Self, SeriesError>
    where
        K: PartialOrd,
        I: IntoIterator<Item = (K, S)>,
    {
        let mut points = Vec::new();
        let mut prev: Option<K> = None;
        for (row, (key, value)) in rows.into_iter().enumerate() {
            let row = row + 1;
            if !value.is_finite() {
                return Err(SeriesError::NonFiniteValue { row });
            }
            if let Some(p) = &prev {
                if !matches!(p.partial_cmp(&key), Some(std::cmp::Ordering::Less)) {
                    return Err(SeriesError::NonMonotonicIndex { row });
                }
            }
            prev = Some(key);
            points.push(value);
        }
        if points.is_empty() {
            return Err(SeriesError::EmptyInput);
        }
        Ok(Self { id: id.into(), points })
    }

    /// Wraps values that are already in index order.
    pub fn from_values(id: impl Into<String>, values: Vec<S>) -> Result<Self, SeriesError> {
        Self::ingest(id, values.into_iter().enumerate())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    #[inline]
    pub fn len(&self) -> u64 {
        self.points.len() as u64
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn full_range(&self) -> IndexRange {
        IndexRange::full(self.len())
    }

    /// Value at 1-based index `i`.
    #[inline]
    pub fn get(&self, i: u64) -> Option<S> {
        i.checked_sub(1).and_then(|k| self.points.get(k as usize)).copied()
    }

    /// Values in `range`; `None` if it extends past the end.
    pub fn slice(&self, range: IndexRange) -> Option<&[S]> {
        if range.end() > self.len() {
            return None;
        }
        Some(&self.points[(range.start() - 1) as usize..range.end() as usize])
    }

    pub fn values(&self) -> &[S] {
        &self.points
    }

    /// Reads `index,value` or `timestamp,value` rows. A header line is
    /// detected and skipped.
    pub fn read_csv<R: Read>(id: impl Into<String>, reader: R) -> Result<Self, SeriesError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut rows: Vec<(OrderKey, S)> = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let line = line + 1;
            if record.len() != 2 {
                return Err(SeriesError::InvalidRow {
                    row: line,
                    message: format!("expected 2 columns, found {}", record.len()),
                });
            }
            let key = OrderKey::parse(&record[0]);
            let value = record[1].parse::<S>();
            match (key, value) {
                (Some(k), Ok(v)) => rows.push((k, v)),
                _ if line == 1 => continue, // header
                (None, _) => {
                    return Err(SeriesError::InvalidRow {
                        row: line,
                        message: format!("cannot parse index or timestamp {:?}", &record[0]),
                    })
                }
                (_, Err(_)) => {
                    return Err(SeriesError::InvalidRow {
                        row: line,
                        message: format!("cannot parse value {:?}", &record[1]),
                    })
                }
            }
        }
        if let Some(first) = rows.first() {
            let numeric = matches!(first.0, OrderKey::Number(_));
            if let Some(pos) = rows.iter().position(|(k, _)| matches!(k, OrderKey::Number(_)) != numeric) {
                return Err(SeriesError::InvalidRow {
                    row: pos + 1,
                    message: "mixes numeric indices and timestamps".into(),
                });
            }
        }
        Self::ingest(id, rows)
    }

    /// Writes `index,value` rows with a header. Values use the shortest
    /// representation that parses back to the same bits.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<(), SeriesError> {
        writeln!(writer, "index,value")?;
        for (i, v) in self.points.iter().enumerate() {
            writeln!(writer, "{},{}", i + 1, v)?;
        }
        Ok(())
    }
}

/// Ordering key of an input row.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
enum OrderKey {
    Number(f64),
    /// Seconds and nanoseconds since the epoch.
    Time(i64, u32),
}

impl OrderKey {
    fn parse(field: &str) -> Option<Self> {
        if let Ok(x) = field.parse::<f64>() {
            return x.is_finite().then_some(OrderKey::Number(x));
        }
        if let Ok(t) = DateTime::parse_from_rfc3339(field) {
            return Some(OrderKey::Time(t.timestamp(), t.timestamp_subsec_nanos()));
        }
        for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"] {
            if let Ok(t) = NaiveDateTime::parse_from_str(field, fmt) {
                let t = t.and_utc();
                return Some(OrderKey::Time(t.timestamp(), t.timestamp_subsec_nanos()));
            }
        }
        None
    }
}
