use serde::{Deserialize, Serialize};

use crate::converter::{unit_of, ConverterSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub value: f64,
    pub unit: String,
}

/// Ordered set of named parameter values (the calibrated subset of the
/// converter parameters).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector {
    entries: Vec<ParamEntry>,
}

impl ParameterVector {
    pub fn from_pairs<S: AsRef<str>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        let mut entries: Vec<ParamEntry> = Vec::new();
        for (name, value) in pairs {
            let name = name.as_ref();
            if entries.iter().any(|e| e.name == name) {
                return Err(Error::InvalidArgument(format!("duplicate parameter `{name}`")));
            }
            if !value.is_finite() {
                return Err(Error::InvalidArgument(format!("`{name}` = {value} is not finite")));
            }
            entries.push(ParamEntry {
                name: name.to_string(),
                value,
                unit: unit_of(name).to_string(),
            });
        }
        Ok(Self { entries })
    }

    /// Reads the named parameters from a spec.
    pub fn from_spec<S: AsRef<str>>(spec: &ConverterSpec, names: &[S]) -> Result<Self> {
        let pairs = names
            .iter()
            .map(|n| spec.get(n.as_ref()).map(|v| (n.as_ref().to_string(), v)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_pairs(pairs)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.value).collect()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.value)
    }

    pub fn pairs(&self) -> Vec<(String, f64)> {
        self.entries
            .iter()
            .map(|e| (e.name.clone(), e.value))
            .collect()
    }

    /// Copy of `spec` with every entry written into its field.
    pub fn apply_to(&self, spec: &ConverterSpec) -> Result<ConverterSpec> {
        let mut out = spec.clone();
        for e in &self.entries {
            out.set(&e.name, e.value)?;
        }
        Ok(out)
    }
}
