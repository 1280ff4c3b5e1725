use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// AAMI heartbeat class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AamiClass {
    /// Beats originating in the sinus node (includes bundle branch blocks and escape beats).
    N,
    /// Ventricular ectopic.
    V,
    /// Supraventricular ectopic.
    S,
    /// Fusion of ventricular and normal.
    F,
    /// Paced or unclassifiable.
    Q,
}

/// Binary view used by every detector: `Abnormal` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BeatLabel {
    Normal,
    Abnormal,
}

impl BeatLabel {
    pub fn is_abnormal(self) -> bool {
        matches!(self, BeatLabel::Abnormal)
    }

    pub fn from_abnormal(abnormal: bool) -> Self {
        if abnormal {
            BeatLabel::Abnormal
        } else {
            BeatLabel::Normal
        }
    }
}

impl AamiClass {
    /// Map an MIT-BIH beat annotation mnemonic onto its AAMI class.
    ///
    /// N, L, R, e and j are all treated as normal.
    pub fn from_symbol(symbol: &str) -> Result<Self> {
        Ok(match symbol {
            "N" | "L" | "R" | "e" | "j" => AamiClass::N,
            "V" | "E" => AamiClass::V,
            "A" | "a" | "J" | "S" => AamiClass::S,
            "F" => AamiClass::F,
            "/" | "f" | "Q" => AamiClass::Q,
            other => return Err(Error::UnmappedSymbol(other.to_string())),
        })
    }

    /// Canonical annotation symbol used when writing records of this class.
    pub fn symbol(self) -> &'static str {
        match self {
            AamiClass::N => "N",
            AamiClass::V => "V",
            AamiClass::S => "S",
            AamiClass::F => "F",
            AamiClass::Q => "Q",
        }
    }

    pub fn binary(self) -> BeatLabel {
        match self {
            AamiClass::N => BeatLabel::Normal,
            _ => BeatLabel::Abnormal,
        }
    }

    pub fn is_abnormal(self) -> bool {
        self.binary().is_abnormal()
    }
}

impl fmt::Display for AamiClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_equivalents() {
        for s in ["N", "L", "R", "e", "j"] {
            assert_eq!(AamiClass::from_symbol(s).unwrap(), AamiClass::N);
        }
    }

    #[test]
    fn abnormal_groups() {
        assert_eq!(AamiClass::from_symbol("E").unwrap(), AamiClass::V);
        assert_eq!(AamiClass::from_symbol("a").unwrap(), AamiClass::S);
        assert_eq!(AamiClass::from_symbol("J").unwrap(), AamiClass::S);
        assert_eq!(AamiClass::from_symbol("f").unwrap(), AamiClass::Q);
        assert!(AamiClass::from_symbol("/").unwrap().is_abnormal());
    }

    #[test]
    fn unmapped_rejected() {
        for s in ["B", "!", "+", "~", "x"] {
            assert!(matches!(AamiClass::from_symbol(s), Err(Error::UnmappedSymbol(_))));
        }
    }
}
