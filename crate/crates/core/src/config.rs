//! TOML model files.
//!
//! ```toml
//! name = "A"                 # optional label
//!
//! [model]
//! alpha0 = 1.0               # optional, default 1
//! alpha = [0.3, 0.15]        # q coefficients, last one positive
//! beta = [0.2, 0.1]          # p coefficients, may be empty or omitted
//!
//! [innovation]
//! kind = "skew_t"            # gaussian | scaled_t | skew_t
//! nu = 3.0                   # required for the t families, > 2
//! xi = 1.0                   # skew_t only
//!
//! [expected]                 # optional reference values for tests
//! gamma = -0.4611
//! kappa = 1.23
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::innovations::{Innovation, InnovationConfig};
use crate::sre::GarchSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelSection,
    pub innovation: InnovationConfig,
    #[serde(default)]
    pub expected: Option<Expected>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "one")]
    pub alpha0: f64,
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

/// Reference values shipped with a model, compared by the test suite.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub kappa: Option<f64>,
    pub theta: Option<f64>,
    pub theta_up: Option<f64>,
    pub theta_lo: Option<f64>,
    pub delta: Option<f64>,
}

impl ModelFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let file: ModelFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        file.spec()
            .map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn spec(&self) -> Result<GarchSpec> {
        let inn = Innovation::try_from(self.innovation)
            .map_err(|e| Error::Config(format!("[innovation] {e}")))?;
        GarchSpec::new(
            self.model.alpha0,
            self.model.alpha.clone(),
            self.model.beta.clone(),
            inn,
        )
        .map_err(|e| Error::Config(format!("[model] {e}")))
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| "model".into())
    }

    pub fn from_spec(name: Option<String>, spec: &GarchSpec) -> Self {
        Self {
            name,
            model: ModelSection {
                alpha0: spec.alpha0,
                alpha: spec.alpha.clone(),
                beta: spec.beta.clone(),
            },
            innovation: spec.innovation.config(),
            expected: None,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model files always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::innovations::InnovationKind;

    const A: &str = r#"
name = "A-2"
[model]
alpha = [0.3, 0.15]
beta = [0.2, 0.1]
[innovation]
kind = "skew_t"
nu = 3
xi = 1
[expected]
kappa = 1.23
"#;

    #[test]
    fn parses_and_round_trips() {
        let f = ModelFile::parse(A, "a.toml").unwrap();
        let s = f.spec().unwrap();
        assert_eq!((s.p, s.q, s.alpha0), (2, 2, 1.0));
        assert_eq!(s.innovation.kind, InnovationKind::SkewT);
        assert_eq!(f.expected.as_ref().unwrap().kappa, Some(1.23));
        let back = ModelFile::parse(&f.to_toml(), "b").unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn diagnostics_name_line_and_field() {
        let bad = A.replace("beta = [0.2, 0.1]", "betta = [0.2, 0.1]");
        let msg = ModelFile::parse(&bad, "a.toml").unwrap_err().to_string();
        assert!(msg.contains("betta") && msg.contains("line 5"), "{msg}");
        let neg = A.replace("alpha = [0.3, 0.15]", "alpha = [0.3, -0.15]");
        let err = ModelFile::parse(&neg, "a.toml").unwrap_err();
        assert!(err.to_string().contains("nonnegative"));
        assert_eq!(err.class(), crate::ErrorClass::Config);
        let dof = A.replace("nu = 3", "nu = 2");
        assert!(ModelFile::parse(&dof, "a.toml").is_err());
    }
}
