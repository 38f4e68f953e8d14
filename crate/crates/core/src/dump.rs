//! JSON documents describing fitted trees.
//!
//! Infinite half-widths are written as the string `"inf"`.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub method: String,
    pub nodes: Vec<DumpNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpNode {
    pub id: usize,
    pub split: Option<DumpSplit>,
    /// `[lt, geq]` child ids.
    pub children: Option<[usize; 2]>,
    pub leaf: Option<DumpLeaf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DumpSplit {
    pub feature: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpRule {
    pub feature: usize,
    pub threshold: f64,
    pub side: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpLeaf {
    pub n_train: usize,
    pub n_calib: usize,
    pub center: f64,
    #[serde(serialize_with = "ser_extended", deserialize_with = "de_extended")]
    pub halfwidth: f64,
    pub rule_path: Vec<DumpRule>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Extended {
    Num(f64),
    Str(String),
}

fn ser_extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_extended<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    match Extended::deserialize(d)? {
        Extended::Num(v) => Ok(v),
        Extended::Str(s) if s == "inf" => Ok(f64::INFINITY),
        Extended::Str(s) => Err(serde::de::Error::custom(format!(
            "expected a number or \"inf\", got {s:?}"
        ))),
    }
}

impl TreeDocument {
    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.leaf.is_some()).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree documents always serialize")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidData(format!("bad tree document: {e}")))
    }
}
