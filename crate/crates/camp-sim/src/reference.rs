//! Bundled per-κ damping and θ reference values.

use serde::Deserialize;

const TABLE: &str = include_str!("../data/reference_params.toml");

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ReferenceRow {
    pub kappa_min: f64,
    pub kappa_max: f64,
    #[serde(default)]
    pub theta: f64,
    pub zeta: f64,
}

impl ReferenceRow {
    fn distance(&self, kappa: f64) -> f64 {
        if kappa < self.kappa_min {
            self.kappa_min - kappa
        } else if kappa > self.kappa_max {
            kappa - self.kappa_max
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ReferenceTable {
    pub camp: Vec<ReferenceRow>,
    pub oamp: Vec<ReferenceRow>,
    pub amp: Vec<ReferenceRow>,
}

impl ReferenceTable {
    pub fn bundled() -> Self {
        toml::from_str(TABLE).expect("bundled table parses")
    }

    pub fn rows(&self, algorithm: &str) -> Option<&[ReferenceRow]> {
        match algorithm {
            "camp" => Some(&self.camp),
            "oamp" => Some(&self.oamp),
            "amp" => Some(&self.amp),
            _ => None,
        }
    }

    /// Row covering `kappa`, else the nearest one (earlier row on ties).
    /// `exact` reports whether `kappa` falls inside the row's range.
    pub fn lookup(&self, algorithm: &str, kappa: f64) -> Option<(ReferenceRow, bool)> {
        let rows = self.rows(algorithm)?;
        let best = rows.iter().min_by(|a, b| a.distance(kappa).total_cmp(&b.distance(kappa)))?;
        Some((*best, best.distance(kappa) == 0.0))
    }
}
