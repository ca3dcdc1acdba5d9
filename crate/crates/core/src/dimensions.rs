//! Dimension scoring: z-standardize a feature vector against a model's
//! reference means/SDs, then sum signed member z-scores per dimension.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::scalar::Scalar;

pub const DIMS_FORMAT: &str = "styloshift-dims/1";

const ENGLISH_MODEL: &str = include_str!("../data/biber1988-en.dims.toml");
const CZECH_SKELETON: &str = include_str!("../data/cvrcek-cs.dims.toml");

/// Text of a shipped model file: `biber1988-en` or `cvrcek-cs`.
pub fn builtin_model_source(name: &str) -> Option<&'static str> {
    match name {
        "biber1988-en" => Some(ENGLISH_MODEL),
        "cvrcek-cs" => Some(CZECH_SKELETON),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rescale<T> {
    pub scale: T,
    pub offset: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dimension<T> {
    pub dim_id: String,
    pub positive_pole_label: String,
    pub negative_pole_label: String,
    pub rescale: Option<Rescale<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Membership<T> {
    /// Index into [`DimensionModel::dimensions`].
    pub dim: usize,
    pub sign: i8,
    /// Magnitude of the contribution; 1 unless the model file overrides it.
    pub weight: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureParams<T> {
    pub mean: T,
    pub sd: T,
    pub memberships: Vec<Membership<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionModel<T> {
    pub model_id: String,
    pub language: String,
    pub dimensions: Vec<Dimension<T>>,
    pub features: BTreeMap<String, FeatureParams<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionScores<T> {
    pub model_id: String,
    pub chunk_id: String,
    pub v: Vec<T>,
}

#[derive(Deserialize)]
struct ModelFile {
    format: String,
    model_id: String,
    language: String,
    #[serde(default, rename = "dimension")]
    dimensions: Vec<DimSpec>,
    #[serde(default, rename = "feature")]
    features: Vec<FeatureSpec>,
}

#[derive(Deserialize)]
struct DimSpec {
    id: String,
    positive: String,
    negative: String,
    #[serde(default)]
    rescale: Option<Rescale<f64>>,
}

#[derive(Deserialize)]
struct FeatureSpec {
    id: String,
    mean: f64,
    sd: f64,
    #[serde(default)]
    members: BTreeMap<String, i64>,
    /// Optional raw loadings, replacing the unit magnitude per dimension.
    #[serde(default)]
    weights: BTreeMap<String, f64>,
}

pub fn load_dimension_model<T: Scalar>(path: &Path) -> Result<DimensionModel<T>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model_at(&raw, &path.display().to_string())
}

pub fn parse_dimension_model<T: Scalar>(text: &str) -> Result<DimensionModel<T>> {
    parse_model_at(text, "<model>")
}

pub(crate) fn parse_model_at<T: Scalar>(text: &str, location: &str) -> Result<DimensionModel<T>> {
    let file: ModelFile = toml::from_str(text).map_err(|e| Error::parse(location, e.to_string()))?;
    if file.format != DIMS_FORMAT {
        return Err(Error::parse(
            location,
            format!("field `format`: expected {DIMS_FORMAT}, found {}", file.format),
        ));
    }
    let mut seen = HashSet::new();
    let mut dimensions = Vec::new();
    for d in file.dimensions {
        if !seen.insert(d.id.clone()) {
            return Err(Error::parse(location, format!("duplicate dimension `{}`", d.id)));
        }
        if let Some(r) = d.rescale {
            if !(r.scale.is_finite() && r.offset.is_finite()) || r.scale == 0.0 {
                return Err(Error::parse(location, format!("dimension `{}`: bad rescale", d.id)));
            }
        }
        dimensions.push(Dimension {
            dim_id: d.id,
            positive_pole_label: d.positive,
            negative_pole_label: d.negative,
            rescale: d.rescale.map(|r| Rescale {
                scale: T::of(r.scale),
                offset: T::of(r.offset),
            }),
        });
    }
    let index_of = |id: &str| dimensions.iter().position(|d| d.dim_id == id);
    let mut features = BTreeMap::new();
    for f in file.features {
        let at = |msg: String| Error::parse(format!("{location}: feature {}", f.id), msg);
        if !(f.sd > 0.0 && f.sd.is_finite()) {
            return Err(Error::BadSd {
                feature: f.id,
                sd: f.sd,
            });
        }
        if !f.mean.is_finite() {
            return Err(at("mean is not finite".into()));
        }
        let mut memberships = Vec::new();
        for (dim_id, &sign) in &f.members {
            let dim = index_of(dim_id).ok_or_else(|| at(format!("unknown dimension `{dim_id}`")))?;
            if sign != 1 && sign != -1 {
                return Err(at(format!("sign on {dim_id} must be 1 or -1, found {sign}")));
            }
            let weight = match f.weights.get(dim_id) {
                Some(w) if w.is_finite() && *w > 0.0 => *w,
                Some(w) => return Err(at(format!("weight on {dim_id} must be positive, found {w}"))),
                None => 1.0,
            };
            memberships.push(Membership {
                dim,
                sign: sign as i8,
                weight: T::of(weight),
            });
        }
        if let Some(extra) = f.weights.keys().find(|k| !f.members.contains_key(*k)) {
            return Err(at(format!("weight given for non-member dimension `{extra}`")));
        }
        memberships.sort_by_key(|m| m.dim);
        let params = FeatureParams {
            mean: T::of(f.mean),
            sd: T::of(f.sd),
            memberships,
        };
        if features.insert(f.id.clone(), params).is_some() {
            return Err(at("duplicate feature".into()));
        }
    }
    Ok(DimensionModel {
        model_id: file.model_id,
        language: file.language,
        dimensions,
        features,
    })
}

impl<T: Scalar> DimensionModel<T> {
    /// The shipped six-dimension English model.
    pub fn english() -> Self {
        parse_model_at(ENGLISH_MODEL, "biber1988-en.dims.toml").expect("shipped model is valid")
    }

    /// The shipped eight-dimension Czech structure, without feature parameters.
    pub fn czech_skeleton() -> Self {
        parse_model_at(CZECH_SKELETON, "cvrcek-cs.dims.toml").expect("shipped model is valid")
    }

    pub fn dim_count(&self) -> usize {
        self.dimensions.len()
    }

    pub fn dim_ids(&self) -> impl Iterator<Item = &str> {
        self.dimensions.iter().map(|d| d.dim_id.as_str())
    }

    pub fn feature_ids(&self) -> impl Iterator<Item = &str> {
        self.features.keys().map(String::as_str)
    }

    pub fn has_feature(&self, id: &str) -> bool {
        self.features.contains_key(id)
    }

    /// Ids of dimensions that have no member features.
    pub fn empty_dimensions(&self) -> Vec<String> {
        let mut used = vec![false; self.dimensions.len()];
        for p in self.features.values() {
            for m in &p.memberships {
                used[m.dim] = true;
            }
        }
        self.dimensions
            .iter()
            .zip(used)
            .filter(|(_, u)| !u)
            .map(|(d, _)| d.dim_id.clone())
            .collect()
    }
}

/// z-scores for every model feature.
pub fn standardize<T: Scalar>(
    fv: &FeatureVector<T>,
    model: &DimensionModel<T>,
) -> Result<BTreeMap<String, T>> {
    model
        .features
        .iter()
        .map(|(id, p)| {
            let x = fv.get(id).ok_or_else(|| Error::MissingFeature(id.clone()))?;
            Ok((id.clone(), (x - p.mean) / p.sd))
        })
        .collect()
}

/// Signed sum of member z-scores per dimension.
pub fn score_z<T: Scalar>(z: &BTreeMap<String, T>, model: &DimensionModel<T>) -> Result<Vec<T>> {
    if let Some(d) = model.empty_dimensions().into_iter().next() {
        return Err(Error::EmptyDimension(d));
    }
    let mut v = vec![T::zero(); model.dim_count()];
    for (id, p) in &model.features {
        let zf = *z.get(id).ok_or_else(|| Error::MissingFeature(id.clone()))?;
        for m in &p.memberships {
            let term = m.weight * zf;
            if m.sign > 0 {
                v[m.dim] = v[m.dim] + term;
            } else {
                v[m.dim] = v[m.dim] - term;
            }
        }
    }
    for (vd, dim) in v.iter_mut().zip(&model.dimensions) {
        if let Some(r) = dim.rescale {
            *vd = r.scale * *vd + r.offset;
        }
    }
    Ok(v)
}

pub fn score_dimensions<T: Scalar>(
    fv: &FeatureVector<T>,
    model: &DimensionModel<T>,
    chunk_id: &str,
) -> Result<DimensionScores<T>> {
    let z = standardize(fv, model)?;
    let v = score_z(&z, model)?;
    if let Some(d) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::Precondition(format!(
            "chunk {chunk_id}: non-finite score on {}",
            model.dimensions[d].dim_id
        )));
    }
    Ok(DimensionScores {
        model_id: model.model_id.clone(),
        chunk_id: chunk_id.to_string(),
        v,
    })
}
