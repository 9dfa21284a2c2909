//! JSON file formats for families, realizations, policies and evaluation
//! reports. Matrices are row-major nested arrays.

use std::fs;
use std::path::Path;

use memlqr::{
    Cost, Interval, LinearSystem64, Matrix64, Policy64, PolicyMeta, Provenance, UncertainFamily64,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CliError;

pub type Rows = Vec<Vec<f64>>;

pub fn to_rows(m: &Matrix64) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn from_rows(rows: &Rows, nrows: usize, ncols: usize, what: &str) -> Result<Matrix64, CliError> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::validation(format!("{what}: expected a {nrows}x{ncols} matrix")));
    }
    Ok(Matrix64::from_row_iterator(nrows, ncols, rows.iter().flatten().copied()))
}

/// Shape of a nested array, requiring equal row lengths.
pub fn shape_of(rows: &Rows, what: &str) -> Result<(usize, usize), CliError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::validation(format!("{what}: ragged or empty matrix")));
    }
    Ok((rows.len(), ncols))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyFile {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "A0")]
    pub a0: Rows,
    #[serde(rename = "A_terms")]
    pub a_terms: Vec<Rows>,
    #[serde(rename = "B0")]
    pub b0: Rows,
    #[serde(rename = "B_terms")]
    pub b_terms: Vec<Rows>,
    pub delta_bounds: Vec<[f64; 2]>,
    pub gamma_bounds: Vec<[f64; 2]>,
}

impl FamilyFile {
    pub fn from_family(f: &UncertainFamily64) -> Self {
        let bounds = |b: &[Interval<f64>]| b.iter().map(|iv| [iv.lo, iv.hi]).collect();
        Self {
            n: f.n(),
            m: f.m(),
            a0: to_rows(f.a0()),
            a_terms: f.a_terms().iter().map(to_rows).collect(),
            b0: to_rows(f.b0()),
            b_terms: f.b_terms().iter().map(to_rows).collect(),
            delta_bounds: bounds(f.delta_bounds()),
            gamma_bounds: bounds(f.gamma_bounds()),
        }
    }

    pub fn to_family(&self) -> Result<UncertainFamily64, CliError> {
        let (n, m) = (self.n, self.m);
        let a_terms = self.a_terms.iter().map(|t| from_rows(t, n, n, "A_terms")).collect::<Result<_, _>>()?;
        let b_terms = self.b_terms.iter().map(|t| from_rows(t, n, m, "B_terms")).collect::<Result<_, _>>()?;
        let bounds = |b: &[[f64; 2]]| b.iter().map(|&[lo, hi]| Interval::new(lo, hi)).collect::<Result<Vec<_>, _>>();
        Ok(UncertainFamily64::new(
            from_rows(&self.a0, n, n, "A0")?,
            a_terms,
            from_rows(&self.b0, n, m, "B0")?,
            b_terms,
            bounds(&self.delta_bounds)?,
            bounds(&self.gamma_bounds)?,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvenanceFile {
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizationFile {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    pub id: usize,
    pub provenance: Option<ProvenanceFile>,
}

impl RealizationFile {
    pub fn from_system(s: &LinearSystem64) -> Self {
        Self {
            n: s.n(),
            m: s.m(),
            a: to_rows(&s.a),
            b: to_rows(&s.b),
            id: s.id,
            provenance: s.provenance.as_ref().map(|p| ProvenanceFile {
                delta: p.delta.clone(),
                gamma: p.gamma.clone(),
                seed: p.seed,
            }),
        }
    }

    pub fn to_system(&self) -> Result<LinearSystem64, CliError> {
        let mut s = LinearSystem64::new(
            from_rows(&self.a, self.n, self.n, "A")?,
            from_rows(&self.b, self.n, self.m, "B")?,
            self.id,
        )?;
        s.provenance = self.provenance.as_ref().map(|p| Provenance {
            delta: p.delta.clone(),
            gamma: p.gamma.clone(),
            seed: p.seed,
        });
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyMetaFile {
    pub algorithm: String,
    pub lambda: Option<f64>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "K")]
    pub k: Rows,
    pub meta: Option<PolicyMetaFile>,
}

impl PolicyFile {
    pub fn from_policy(p: &Policy64) -> Self {
        Self {
            n: p.k.ncols(),
            m: p.k.nrows(),
            k: to_rows(&p.k),
            meta: p.meta.as_ref().map(|m| PolicyMetaFile {
                algorithm: m.algorithm.clone(),
                lambda: m.lambda,
                iterations: m.iterations,
                seed: m.seed,
            }),
        }
    }

    pub fn to_policy(&self) -> Result<Policy64, CliError> {
        let mut p = Policy64::new(from_rows(&self.k, self.m, self.n, "K")?)?;
        p.meta = self.meta.as_ref().map(|m| PolicyMeta {
            algorithm: m.algorithm.clone(),
            lambda: m.lambda,
            iterations: m.iterations,
            seed: m.seed,
        });
        Ok(p)
    }
}

/// A real number that may be `+∞`, serialized as the string `"inf"` in that
/// case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaybeInf(pub f64);

impl From<Cost<f64>> for MaybeInf {
    fn from(c: Cost<f64>) -> Self {
        MaybeInf(c.to_f64())
    }
}

impl Serialize for MaybeInf {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for MaybeInf {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(MaybeInf(v)),
            Raw::Str(s) if s == "inf" => Ok(MaybeInf(f64::INFINITY)),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

impl std::fmt::Display for MaybeInf {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0 == f64::INFINITY {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub cost: MaybeInf,
    pub stable: bool,
    pub spectral_radius: f64,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::validation(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
