//! KITTI raw oxts records: 30 whitespace-separated numeric fields per line.

use crate::error::{Error, Result};

/// Field names in file order, as documented by the dataset's own
/// `dataformat.txt`. The indices of `vf` and `wz` are pinned by a fixture
/// test against that file.
pub const FIELD_NAMES: [&str; 30] = [
    "lat", "lon", "alt", "roll", "pitch", "yaw", "vn", "ve", "vf", "vl", "vu", "ax", "ay", "az",
    "af", "al", "au", "wx", "wy", "wz", "wf", "wl", "wu", "pos_accuracy", "vel_accuracy",
    "navstat", "numsats", "posmode", "velmode", "orimode",
];

/// 0-based index of the forward velocity field `vf`.
pub const VF_INDEX: usize = 8;
/// 0-based index of the yaw-rate field `wz`.
pub const WZ_INDEX: usize = 19;

/// One parsed oxts line.
#[derive(Debug, Clone, PartialEq)]
pub struct OxtsRecord {
    pub fields: [f64; 30],
}

impl OxtsRecord {
    /// Forward (longitudinal) velocity in m/s.
    pub fn forward_velocity(&self) -> f64 {
        self.fields[VF_INDEX]
    }

    /// Yaw rate ψ̇ in rad/s.
    pub fn yaw_rate(&self) -> f64 {
        self.fields[WZ_INDEX]
    }

    /// Renders the record back to a line using the shortest f64
    /// representation, which reparses to identical values.
    pub fn to_line(&self) -> String {
        self.fields
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Parses one oxts line of exactly 30 numeric fields.
pub fn parse_oxts(line: &str) -> Result<OxtsRecord> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 30 {
        return Err(Error::Parse(format!(
            "oxts line has {} fields, expected 30",
            tokens.len()
        )));
    }
    let mut fields = [0.0; 30];
    for (i, tok) in tokens.iter().enumerate() {
        fields[i] = tok.parse::<f64>().map_err(|e| {
            Error::Parse(format!("oxts field {i} ('{}', {e})", FIELD_NAMES[i]))
        })?;
    }
    Ok(OxtsRecord { fields })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirty_zeros_parse() {
        let line = vec!["0"; 30].join(" ");
        let rec = parse_oxts(&line).unwrap();
        assert_eq!(rec.forward_velocity(), 0.0);
        assert_eq!(rec.yaw_rate(), 0.0);
    }

    #[test]
    fn accessors_read_fields_8_and_19() {
        let mut tokens = vec!["0".to_string(); 30];
        tokens[8] = "10.0".into();
        tokens[19] = "0.5".into();
        let rec = parse_oxts(&tokens.join(" ")).unwrap();
        assert_eq!(rec.forward_velocity(), 10.0);
        assert_eq!(rec.yaw_rate(), 0.5);
    }

    #[test]
    fn wrong_field_count_names_the_count() {
        let line = vec!["0"; 29].join(" ");
        match parse_oxts(&line) {
            Err(Error::Parse(msg)) => assert!(msg.contains("29")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_field_rejected() {
        let mut tokens = vec!["0".to_string(); 30];
        tokens[5] = "abc".into();
        assert!(parse_oxts(&tokens.join(" ")).is_err());
    }

    #[test]
    fn line_roundtrip_is_byte_exact() {
        let mut tokens = vec!["0".to_string(); 30];
        tokens[8] = "13.729".into();
        tokens[19] = "-0.04125".into();
        tokens[0] = "49.011212804408".into();
        let line = tokens.join(" ");
        let rec = parse_oxts(&line).unwrap();
        assert_eq!(rec.to_line(), line);
    }

    #[test]
    fn field_name_table_matches_pinned_indices() {
        assert_eq!(FIELD_NAMES[VF_INDEX], "vf");
        assert_eq!(FIELD_NAMES[WZ_INDEX], "wz");
        assert_eq!(FIELD_NAMES.len(), 30);
    }
}
