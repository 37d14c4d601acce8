//! Minute-indexed time on top of a UTC start date.

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

/// Minutes since the start of the stream.
pub type Minute = u32;

pub const MINUTES_PER_DAY: u32 = 1440;
pub const SLOT_MINUTES: u32 = 15;
pub const SLOTS_PER_DAY: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calendar {
    pub start: NaiveDate,
}

impl Calendar {
    pub fn new(start: NaiveDate) -> Self {
        Calendar { start }
    }

    pub fn date(&self, m: Minute) -> NaiveDate {
        self.start + Duration::days(i64::from(m / MINUTES_PER_DAY))
    }

    pub fn day_index(&self, m: Minute) -> u32 {
        m / MINUTES_PER_DAY
    }

    /// Monday = 0.
    pub fn day_of_week(&self, m: Minute) -> usize {
        self.date(m).weekday().num_days_from_monday() as usize
    }

    pub fn minute_of_day(&self, m: Minute) -> u32 {
        m % MINUTES_PER_DAY
    }

    pub fn slot(&self, m: Minute) -> usize {
        (self.minute_of_day(m) / SLOT_MINUTES) as usize
    }

    pub fn datetime(&self, m: Minute) -> NaiveDateTime {
        self.start.and_time(NaiveTime::MIN) + Duration::minutes(i64::from(m))
    }

    pub fn rfc3339(&self, m: Minute) -> String {
        self.datetime(m).format("%Y-%m-%dT%H:%M:%SZ").to_string()
    }

    /// Inverse of [`Calendar::rfc3339`]; `None` before the start, off the
    /// minute grid, or when unparseable.
    pub fn parse_rfc3339(&self, s: &str) -> Option<Minute> {
        let dt = chrono::DateTime::parse_from_rfc3339(s).ok()?.naive_utc();
        let delta = dt - self.start.and_time(NaiveTime::MIN);
        if delta.num_seconds() < 0 || delta.num_seconds() % 60 != 0 {
            return None;
        }
        Minute::try_from(delta.num_minutes()).ok()
    }

    /// Minute index of `date` at `minute_of_day`, if not before the start.
    pub fn minute_at(&self, date: NaiveDate, minute_of_day: u32) -> Option<Minute> {
        let days = (date - self.start).num_days();
        if days < 0 {
            return None;
        }
        Minute::try_from(days * i64::from(MINUTES_PER_DAY) + i64::from(minute_of_day)).ok()
    }
}

/// Parses `HH:MM` into minutes after midnight. `24:00` is accepted.
pub fn parse_hhmm_colon(s: &str) -> Option<u32> {
    let (h, m) = s.split_once(':')?;
    let (h, m): (u32, u32) = (h.parse().ok()?, m.parse().ok()?);
    (m < 60 && (h < 24 || (h == 24 && m == 0))).then_some(h * 60 + m)
}

pub fn format_hhmm_colon(minute_of_day: u32) -> String {
    format!("{:02}:{:02}", minute_of_day / 60, minute_of_day % 60)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calendar_fields() {
        let cal = Calendar::new(NaiveDate::from_ymd_opt(2024, 1, 1).unwrap());
        assert_eq!(cal.day_of_week(0), 0);
        assert_eq!(cal.day_of_week(6 * 1440 + 5), 6);
        assert_eq!(cal.slot(8 * 60 + 14), 32);
        assert_eq!(cal.rfc3339(1441), "2024-01-02T00:01:00Z");
        assert_eq!(cal.parse_rfc3339("2024-01-02T00:01:00Z"), Some(1441));
        assert_eq!(cal.parse_rfc3339("2023-12-31T23:59:00Z"), None);
    }

    #[test]
    fn hhmm() {
        assert_eq!(parse_hhmm_colon("07:30"), Some(450));
        assert_eq!(parse_hhmm_colon("24:00"), Some(1440));
        assert_eq!(parse_hhmm_colon("24:01"), None);
        assert_eq!(format_hhmm_colon(450), "07:30");
    }
}
