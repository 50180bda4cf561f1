//! JSON model document.
//!
//! ```json
//! {"states": [{"label": "on", "mu": 1.0, "sigma2": 0.5},
//!             {"label": "off", "mu": -2.0, "sigma2": 0.0}],
//!  "Q": [[-1, 1], [2, -2]],
//!  "B": 1.5, "x0": 0.0, "q": 0.0}
//! ```

use std::path::Path;

use mmbm::{Error, Matrix, Model, Strip, Vector};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDoc {
    pub label: String,
    pub mu: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub states: Vec<StateDoc>,
    #[serde(rename = "Q")]
    pub generator: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(default)]
    pub x0: Option<f64>,
    #[serde(default)]
    pub q: Option<f64>,
}

/// A parsed document: the model, its strip and the optional default `q`.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub model: Model,
    pub strip: Strip,
    pub q: Option<f64>,
}

#[derive(Debug)]
pub enum LoadError {
    Io(String),
    Parse(String),
    Model(Error),
}

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadError::Io(e) => write!(f, "cannot read model file: {e}"),
            LoadError::Parse(e) => write!(f, "invalid model document: {e}"),
            LoadError::Model(e) => write!(f, "invalid model: {e}"),
        }
    }
}

pub fn load(path: &Path) -> Result<Loaded, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io(format!("{}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Loaded, LoadError> {
    let doc: ModelDocument = serde_json::from_str(text).map_err(|e| LoadError::Parse(e.to_string()))?;
    doc.build()
}

impl ModelDocument {
    pub fn build(&self) -> Result<Loaded, LoadError> {
        let n = self.states.len();
        if n == 0 {
            return Err(LoadError::Parse("\"states\" is empty".into()));
        }
        if self.generator.len() != n || self.generator.iter().any(|r| r.len() != n) {
            return Err(LoadError::Parse(format!("\"Q\" must be {n}x{n} to match \"states\"")));
        }
        let finite = self.generator.iter().flatten().all(|v| v.is_finite())
            && self.states.iter().all(|s| s.mu.is_finite() && s.sigma2.is_finite())
            && self.b.is_finite()
            && self.x0.is_none_or(f64::is_finite)
            && self.q.is_none_or(f64::is_finite);
        if !finite {
            return Err(LoadError::Parse("numbers must be finite".into()));
        }
        let flat: Vec<f64> = self.generator.iter().flatten().copied().collect();
        let model = Model::with_labels(
            Matrix::from_row_slice(n, n, &flat),
            Vector::from_iterator(n, self.states.iter().map(|s| s.mu)),
            Vector::from_iterator(n, self.states.iter().map(|s| s.sigma2)),
            self.states.iter().map(|s| s.label.clone()).collect(),
        )
        .map_err(LoadError::Model)?;
        model.validate().map_err(LoadError::Model)?;
        let strip = Strip::new(self.b, self.x0.unwrap_or(0.0)).map_err(LoadError::Model)?;
        if let Some(q) = self.q {
            if q < 0.0 {
                return Err(LoadError::Parse(format!("\"q\" must be >= 0, got {q}")));
            }
        }
        Ok(Loaded { model, strip, q: self.q })
    }
}
