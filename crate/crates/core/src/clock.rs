//! Conversions between unix epochs, service dates and seconds-since-service-midnight.

use chrono::{Datelike, Duration, FixedOffset, NaiveDate, NaiveDateTime, TimeZone, Weekday};
use serde::{Deserialize, Serialize};

/// Epoch seconds (UTC).
pub type Epoch = i64;

/// Local wall-clock with a fixed UTC offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[derive(Default)]
pub struct ServiceClock {
    pub utc_offset_s: i32,
}


impl ServiceClock {
    pub fn new(utc_offset_s: i32) -> Self {
        Self { utc_offset_s }
    }

    fn offset(&self) -> FixedOffset {
        FixedOffset::east_opt(self.utc_offset_s).unwrap_or_else(|| FixedOffset::east_opt(0).unwrap())
    }

    /// Epoch of local midnight starting `date`.
    pub fn midnight(&self, date: NaiveDate) -> Epoch {
        date.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp() - self.utc_offset_s as i64
    }

    pub fn local(&self, epoch: Epoch) -> NaiveDateTime {
        self.offset().timestamp_opt(epoch, 0).unwrap().naive_local()
    }

    pub fn date_of(&self, epoch: Epoch) -> NaiveDate {
        self.local(epoch).date()
    }

    pub fn seconds_of_day(&self, epoch: Epoch) -> i64 {
        epoch - self.midnight(self.date_of(epoch))
    }

    pub fn epoch_of(&self, local: NaiveDateTime) -> Epoch {
        local.and_utc().timestamp() - self.utc_offset_s as i64
    }

    /// Service date a record belongs to; records before the cutoff count
    /// towards the previous day's service.
    pub fn service_date_of(&self, epoch: Epoch, cutoff_s: i64) -> NaiveDate {
        self.date_of(epoch - cutoff_s)
    }
}

/// Service-day cutoff used when assigning vehicle records to days.
pub const SERVICE_DAY_CUTOFF_S: i64 = 3 * 3600;

/// Most recent Tuesday, Wednesday or Thursday strictly before `date`.
pub fn preceding_working_day(date: NaiveDate) -> NaiveDate {
    let mut d = date - Duration::days(1);
    loop {
        if matches!(d.weekday(), Weekday::Tue | Weekday::Wed | Weekday::Thu) {
            return d;
        }
        d -= Duration::days(1);
    }
}

/// Rush-hour bands as [start, end) seconds of day.
pub const RUSH_BANDS: [(i64, i64); 2] = [(6 * 3600, 9 * 3600), (15 * 3600, 19 * 3600)];

/// Partition of the day into rush bands and the periods between them.
pub fn day_bands() -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    let mut cursor = 0;
    for &(s, e) in RUSH_BANDS.iter() {
        if s > cursor {
            out.push((cursor, s));
        }
        out.push((s, e));
        cursor = e;
    }
    if cursor < 86_400 {
        out.push((cursor, 86_400));
    }
    out
}

/// Union of day bands overlapping the clock interval [from_s, to_s].
pub fn overlapping_bands(from_s: i64, to_s: i64) -> (i64, i64) {
    let bands = day_bands();
    let from_s = from_s.clamp(0, 86_399);
    let to_s = to_s.clamp(from_s, 86_399);
    let mut lo = i64::MAX;
    let mut hi = i64::MIN;
    for (s, e) in bands {
        if s <= to_s && from_s < e {
            lo = lo.min(s);
            hi = hi.max(e);
        }
    }
    (lo, hi)
}

pub fn format_date(date: NaiveDate) -> String {
    date.format("%Y-%m-%d").to_string()
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s.trim(), "%Y%m%d"))
        .ok()
}
