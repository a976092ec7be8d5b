use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, Utc};
use thiserror::Error;

/// Name of one directory version inside a `...` history listing:
/// microsecond UTC time plus a disambiguating sequence number, written as
/// `2005-07-14T14:23:17.000001Z.1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VersionStamp {
    pub micros: i64,
    pub seq: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid version stamp {0:?}")]
pub struct ParseStampError(pub String);

impl VersionStamp {
    pub fn new(micros: i64, seq: u32) -> Self {
        Self { micros, seq }
    }

    pub fn now() -> Self {
        Self::new(Utc::now().timestamp_micros(), 0)
    }

    /// Smallest stamp strictly after `self` that is not earlier than `now`.
    pub fn next_after(self, now: VersionStamp) -> Self {
        if now > self {
            now
        } else {
            Self::new(self.micros, self.seq + 1)
        }
    }

    pub fn datetime(&self) -> Option<DateTime<Utc>> {
        DateTime::from_timestamp_micros(self.micros)
    }
}

impl fmt::Display for VersionStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.datetime() {
            Some(dt) => write!(f, "{}.{}", dt.format("%Y-%m-%dT%H:%M:%S%.6fZ"), self.seq),
            None => write!(f, "@{}.{}", self.micros, self.seq),
        }
    }
}

impl FromStr for VersionStamp {
    type Err = ParseStampError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseStampError(s.to_string());
        let (time, seq) = s.rsplit_once('.').ok_or_else(err)?;
        let seq: u32 = seq.parse().map_err(|_| err())?;
        let time = time.strip_suffix('Z').ok_or_else(err)?;
        let naive = NaiveDateTime::parse_from_str(time, "%Y-%m-%dT%H:%M:%S%.f").map_err(|_| err())?;
        Ok(Self::new(naive.and_utc().timestamp_micros(), seq))
    }
}
