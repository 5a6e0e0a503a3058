use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Defect vocabulary of the industrial benchmark, plus `Normal`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DefectCode {
    /// AK
    Pit,
    /// BX
    Deformation,
    /// CH
    Abrasion,
    /// HS
    Scratch,
    /// PS
    Damage,
    /// QS
    MissingParts,
    /// YW
    ForeignObjects,
    /// ZW
    Contamination,
    Normal,
}

impl DefectCode {
    pub const DEFECTS: [DefectCode; 8] = [
        DefectCode::Pit,
        DefectCode::Deformation,
        DefectCode::Abrasion,
        DefectCode::Scratch,
        DefectCode::Damage,
        DefectCode::MissingParts,
        DefectCode::ForeignObjects,
        DefectCode::Contamination,
    ];

    /// Types the synthetic generator can render, in channel order.
    pub const SYNTHETIC: [DefectCode; 4] = [
        DefectCode::Pit,
        DefectCode::Scratch,
        DefectCode::MissingParts,
        DefectCode::Contamination,
    ];

    pub fn code(self) -> &'static str {
        match self {
            DefectCode::Pit => "AK",
            DefectCode::Deformation => "BX",
            DefectCode::Abrasion => "CH",
            DefectCode::Scratch => "HS",
            DefectCode::Damage => "PS",
            DefectCode::MissingParts => "QS",
            DefectCode::ForeignObjects => "YW",
            DefectCode::Contamination => "ZW",
            DefectCode::Normal => "NORMAL",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            DefectCode::Pit => "pit",
            DefectCode::Deformation => "deformation",
            DefectCode::Abrasion => "abrasion",
            DefectCode::Scratch => "scratch",
            DefectCode::Damage => "damage",
            DefectCode::MissingParts => "missing parts",
            DefectCode::ForeignObjects => "foreign objects",
            DefectCode::Contamination => "contamination",
            DefectCode::Normal => "normal",
        }
    }
}

impl fmt::Display for DefectCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for DefectCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let upper = s.to_ascii_uppercase();
        if upper == "NORMAL" || upper == "OK" {
            return Ok(DefectCode::Normal);
        }
        DefectCode::DEFECTS
            .into_iter()
            .find(|c| c.code() == upper)
            .ok_or_else(|| Error::Data(format!("unknown defect code {s:?}")))
    }
}

impl TryFrom<String> for DefectCode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

impl From<DefectCode> for String {
    fn from(c: DefectCode) -> String {
        c.code().to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip_and_are_unique() {
        let mut seen = std::collections::HashSet::new();
        for c in DefectCode::DEFECTS {
            assert!(seen.insert(c.code()));
            assert_eq!(c.code().parse::<DefectCode>().unwrap(), c);
        }
        assert_eq!("hs".parse::<DefectCode>().unwrap(), DefectCode::Scratch);
        assert!("XX".parse::<DefectCode>().is_err());
    }
}
