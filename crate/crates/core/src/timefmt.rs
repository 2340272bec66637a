//! Second-resolution UTC timestamps and their wire format.

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serializer};

pub type Timestamp = DateTime<Utc>;

/// Parses an ISO-8601 / RFC 3339 timestamp with zone, truncated to seconds.
pub fn parse(s: &str) -> Result<Timestamp, chrono::ParseError> {
    let t = DateTime::parse_from_rfc3339(s.trim())?;
    Ok(Utc.timestamp_opt(t.timestamp(), 0).unwrap())
}

pub fn format(t: &Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn serialize<S: Serializer>(t: &Timestamp, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format(t))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Timestamp, D::Error> {
    let raw = String::deserialize(d)?;
    parse(&raw).map_err(serde::de::Error::custom)
}

pub mod option {
    use super::*;

    pub fn serialize<S: Serializer>(t: &Option<Timestamp>, s: S) -> Result<S::Ok, S::Error> {
        match t {
            Some(t) => s.serialize_str(&format(t)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Timestamp>, D::Error> {
        let raw = Option::<String>::deserialize(d)?;
        raw.map(|r| parse(&r).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_zone_and_subseconds() {
        let t = parse("2018-02-02T12:30:15.75+02:00").unwrap();
        assert_eq!(format(&t), "2018-02-02T10:30:15Z");
    }

    #[test]
    fn rejects_zoneless() {
        assert!(parse("2018-02-02T12:30:15").is_err());
    }
}
