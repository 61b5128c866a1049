use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The two field classes, in their fixed declaration order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CropClass {
    /// Populated: cane cover throughout.
    Poblada,
    /// Depopulated: bare patches inside the lot.
    Despoblada,
}

impl CropClass {
    pub const ALL: [CropClass; 2] = [CropClass::Poblada, CropClass::Despoblada];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CropClass::Poblada => "poblada",
            CropClass::Despoblada => "despoblada",
        }
    }
}

impl fmt::Display for CropClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CropClass {
    type Err = Error;

    /// Accepts the short names and the `Zonas_Pobladas` / `Zonas_Despobladas` directory names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "poblada" | "pobladas" | "zonas_pobladas" => Ok(CropClass::Poblada),
            "despoblada" | "despobladas" | "zonas_despobladas" => Ok(CropClass::Despoblada),
            _ => Err(Error::UnknownLabel(s.to_owned())),
        }
    }
}
