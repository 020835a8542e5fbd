use std::fmt;

use serde::{Deserialize, Serialize};

/// Selects between a formula as it is usually printed and the form re-derived
/// from the change-of-measure calculus. The two disagree for the drift-change
/// integral coefficient, the quadratic-target drift shift, the index shift
/// `ν(λ)`, the endpoint transform sign and the joint-transform exponent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Printed,
    #[default]
    Derived,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Printed, Variant::Derived];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Printed => "printed",
            Variant::Derived => "derived",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "printed" => Ok(Variant::Printed),
            "derived" => Ok(Variant::Derived),
            other => Err(format!("unknown variant {other:?} (expected printed|derived)")),
        }
    }
}
