//! Matched-pair data model: pairs oriented by dose, CSV ingestion and export,
//! dose links, and the effect models used to test general sharp nulls.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One unit as it appears in an input row.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    pub unit_id: String,
    pub z: f64,
    pub y: f64,
    pub x: Vec<f64>,
}

impl UnitRecord {
    pub fn new(unit_id: impl Into<String>, z: f64, y: f64) -> Self {
        Self {
            unit_id: unit_id.into(),
            z,
            y,
            x: Vec::new(),
        }
    }

    pub fn with_covariates(mut self, x: Vec<f64>) -> Self {
        self.x = x;
        self
    }
}

/// Which of the two original units received the higher dose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    First,
    Second,
}

/// A matched pair stored with the higher-dose unit first.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPair {
    pub pair_id: String,
    pub z_lo: f64,
    pub z_hi: f64,
    pub y_of_hi: f64,
    pub y_of_lo: f64,
    pub x_of_hi: Vec<f64>,
    pub x_of_lo: Vec<f64>,
    pub hi_unit: String,
    pub lo_unit: String,
}

impl MatchedPair {
    /// Builds a pair from its two units, orienting by dose.
    pub fn from_units(pair_id: impl Into<String>, a: UnitRecord, b: UnitRecord) -> Result<Self> {
        let pair_id = pair_id.into();
        if !a.z.is_finite() || !a.y.is_finite() || !b.z.is_finite() || !b.y.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "pair `{pair_id}`: non-finite dose or outcome"
            )));
        }
        if a.unit_id == b.unit_id {
            return Err(Error::DuplicateUnit {
                pair_id,
                unit_id: a.unit_id,
            });
        }
        if a.x.len() != b.x.len() {
            return Err(Error::CovariateLength(pair_id));
        }
        let (hi, lo) = match a.z.partial_cmp(&b.z) {
            Some(Ordering::Greater) => (a, b),
            Some(Ordering::Less) => (b, a),
            _ => return Err(Error::TiedDoses(pair_id)),
        };
        Ok(Self {
            pair_id,
            z_lo: lo.z,
            z_hi: hi.z,
            y_of_hi: hi.y,
            y_of_lo: lo.y,
            x_of_hi: hi.x,
            x_of_lo: lo.x,
            hi_unit: hi.unit_id,
            lo_unit: lo.unit_id,
        })
    }

    /// Pair built from raw `(Z_i1, Z_i2, Y_i1, Y_i2)` with unit ids "1" and "2".
    pub fn from_doses_outcomes(
        pair_id: impl Into<String>,
        z1: f64,
        z2: f64,
        y1: f64,
        y2: f64,
    ) -> Result<Self> {
        Self::from_units(
            pair_id,
            UnitRecord::new("1", z1, y1),
            UnitRecord::new("2", z2, y2),
        )
    }

    pub fn orientation(&self) -> Orientation {
        match compare_unit_ids(&self.hi_unit, &self.lo_unit) {
            Ordering::Greater => Orientation::Second,
            _ => Orientation::First,
        }
    }

    /// z_hi - z_lo, strictly positive.
    pub fn dose_diff(&self) -> f64 {
        self.z_hi - self.z_lo
    }

    /// Outcome difference oriented higher dose minus lower dose.
    pub fn outcome_diff(&self) -> f64 {
        self.y_of_hi - self.y_of_lo
    }

    /// The pair's two units in the order they are written on export.
    pub fn units(&self) -> [UnitRecord; 2] {
        let hi = UnitRecord {
            unit_id: self.hi_unit.clone(),
            z: self.z_hi,
            y: self.y_of_hi,
            x: self.x_of_hi.clone(),
        };
        let lo = UnitRecord {
            unit_id: self.lo_unit.clone(),
            z: self.z_lo,
            y: self.y_of_lo,
            x: self.x_of_lo.clone(),
        };
        match self.orientation() {
            Orientation::First => [hi, lo],
            Orientation::Second => [lo, hi],
        }
    }
}

// Unit ids compare numerically when both parse, lexically otherwise.
fn compare_unit_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y).then_with(|| a.cmp(b)),
        _ => a.cmp(b),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedSample {
    pairs: Vec<MatchedPair>,
    covariate_names: Vec<String>,
}

impl MatchedSample {
    pub fn new(pairs: Vec<MatchedPair>) -> Result<Self> {
        let width = pairs.first().map(|p| p.x_of_hi.len()).unwrap_or(0);
        let names = (1..=width).map(|k| format!("x_{k}")).collect();
        Self::with_covariate_names(pairs, names)
    }

    pub fn with_covariate_names(
        pairs: Vec<MatchedPair>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut seen = HashMap::with_capacity(pairs.len());
        for p in &pairs {
            if seen.insert(p.pair_id.as_str(), ()).is_some() {
                return Err(Error::DuplicatePairId(p.pair_id.clone()));
            }
            if p.x_of_hi.len() != covariate_names.len() || p.x_of_lo.len() != covariate_names.len()
            {
                return Err(Error::CovariateLength(p.pair_id.clone()));
            }
            if !(p.z_lo < p.z_hi) {
                return Err(Error::TiedDoses(p.pair_id.clone()));
            }
        }
        Ok(Self {
            pairs,
            covariate_names,
        })
    }

    /// Sample from raw `(Z_i1, Z_i2, Y_i1, Y_i2)` rows; pair ids are 1-based indices.
    pub fn from_rows(rows: &[(f64, f64, f64, f64)]) -> Result<Self> {
        let pairs = rows
            .iter()
            .enumerate()
            .map(|(i, &(z1, z2, y1, y2))| {
                MatchedPair::from_doses_outcomes((i + 1).to_string(), z1, z2, y1, y2)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs)
    }

    pub fn pairs(&self) -> &[MatchedPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn min_low_dose(&self) -> f64 {
        self.pairs
            .iter()
            .map(|p| p.z_lo)
            .fold(f64::INFINITY, f64::min)
    }

    /// Same pairs with the outcome of the higher-dose unit replaced.
    pub fn with_high_outcomes(&self, y_of_hi: &[f64]) -> Result<Self> {
        if y_of_hi.len() != self.len() {
            return Err(Error::LengthMismatch(format!(
                "{} outcomes for {} pairs",
                y_of_hi.len(),
                self.len()
            )));
        }
        let mut out = self.clone();
        for (p, &y) in out.pairs.iter_mut().zip(y_of_hi) {
            p.y_of_hi = y;
        }
        Ok(out)
    }
}

/// Column names used when reading a pair file.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub pair_id: String,
    pub unit_id: String,
    pub dose: String,
    pub outcome: String,
    pub covariate_prefix: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            pair_id: "pair_id".into(),
            unit_id: "unit_id".into(),
            dose: "z".into(),
            outcome: "y".into(),
            covariate_prefix: "x_".into(),
        }
    }
}

pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<MatchedSample> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<MatchedSample> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let pair_col = find(&schema.pair_id)?;
    let unit_col = find(&schema.unit_id)?;
    let z_col = find(&schema.dose)?;
    let y_col = find(&schema.outcome)?;
    let cov_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with(&schema.covariate_prefix))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut order: Vec<String> = Vec::new();
    let mut units: HashMap<String, Vec<UnitRecord>> = HashMap::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row = row_idx + 2;
        let field = |col: usize| record.get(col).unwrap_or("");
        let number = |col: usize, name: &str| -> Result<f64> {
            let raw = field(col);
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumeric {
                    row,
                    column: name.to_string(),
                    value: raw.to_string(),
                })
        };
        let pair_id = field(pair_col).to_string();
        let unit = UnitRecord {
            unit_id: field(unit_col).to_string(),
            z: number(z_col, &schema.dose)?,
            y: number(y_col, &schema.outcome)?,
            x: cov_cols
                .iter()
                .map(|(c, name)| number(*c, name))
                .collect::<Result<Vec<_>>>()?,
        };
        let entry = units.entry(pair_id.clone()).or_insert_with(|| {
            order.push(pair_id.clone());
            Vec::new()
        });
        if entry.iter().any(|u| u.unit_id == unit.unit_id) {
            return Err(Error::DuplicateUnit {
                pair_id,
                unit_id: unit.unit_id,
            });
        }
        entry.push(unit);
    }

    let mut pairs = Vec::with_capacity(order.len());
    for id in order {
        let mut members = units.remove(&id).unwrap_or_default();
        if members.len() != 2 {
            return Err(Error::IncompletePair(id));
        }
        let b = members.pop().unwrap();
        let a = members.pop().unwrap();
        pairs.push(MatchedPair::from_units(id, a, b)?);
    }
    MatchedSample::with_covariate_names(pairs, cov_cols.into_iter().map(|(_, n)| n).collect())
}

pub fn export_csv(sample: &MatchedSample, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(sample, file)
}

pub fn write_csv<W: Write>(sample: &MatchedSample, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![
        "pair_id".to_string(),
        "unit_id".into(),
        "z".into(),
        "y".into(),
    ];
    header.extend(sample.covariate_names().iter().cloned());
    wtr.write_record(&header)?;
    for pair in sample.pairs() {
        for unit in pair.units() {
            let mut row = vec![
                pair.pair_id.clone(),
                unit.unit_id,
                unit.z.to_string(),
                unit.y.to_string(),
            ];
            row.extend(unit.x.iter().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Prespecified dose transform entering the bias model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[derive(Default)]
pub enum DoseLink {
    #[default]
    Identity,
    Log,
    /// Lookup table of `(dose, value)`; every observed dose must appear.
    Table {
        entries: Vec<(f64, f64)>,
    },
}

impl DoseLink {
    pub fn table(mut entries: Vec<(f64, f64)>) -> Result<Self> {
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidLink("duplicate dose in table".into()));
        }
        check_strictly_monotone(&entries)?;
        Ok(DoseLink::Table { entries })
    }

    pub fn eval(&self, z: f64) -> Result<f64> {
        match self {
            DoseLink::Identity => Ok(z),
            DoseLink::Log => {
                if z > 0.0 {
                    Ok(z.ln())
                } else {
                    Err(Error::InvalidLink(format!(
                        "log link needs positive doses, got {z}"
                    )))
                }
            }
            DoseLink::Table { entries } => entries
                .binary_search_by(|(d, _)| d.total_cmp(&z))
                .map(|i| entries[i].1)
                .map_err(|_| Error::InvalidLink(format!("dose {z} missing from link table"))),
        }
    }

    /// Checks strict monotonicity over every observed dose.
    pub fn validate_on(&self, sample: &MatchedSample) -> Result<()> {
        let mut doses: Vec<f64> = sample
            .pairs()
            .iter()
            .flat_map(|p| [p.z_lo, p.z_hi])
            .collect();
        doses.sort_by(f64::total_cmp);
        doses.dedup();
        let points = doses
            .iter()
            .map(|&z| self.eval(z).map(|v| (z, v)))
            .collect::<Result<Vec<_>>>()?;
        check_strictly_monotone(&points)
    }

    /// Per-pair |phi(z_hi) - phi(z_lo)|.
    pub fn gaps(&self, sample: &MatchedSample) -> Result<Vec<f64>> {
        self.validate_on(sample)?;
        sample
            .pairs()
            .iter()
            .map(|p| Ok((self.eval(p.z_hi)? - self.eval(p.z_lo)?).abs()))
            .collect()
    }
}

fn check_strictly_monotone(points: &[(f64, f64)]) -> Result<()> {
    if points.iter().any(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidLink("non-finite link value".into()));
    }
    if points.len() < 2 {
        return Ok(());
    }
    let increasing = points.windows(2).all(|w| w[1].1 > w[0].1);
    let decreasing = points.windows(2).all(|w| w[1].1 < w[0].1);
    if increasing || decreasing {
        Ok(())
    } else {
        Err(Error::InvalidLink(
            "link is not strictly monotone on the observed doses".into(),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectKind {
    Constant,
    EffectModification,
    Kink,
}

impl EffectKind {
    pub fn dim(self) -> usize {
        match self {
            EffectKind::Constant => 1,
            EffectKind::EffectModification => 2,
            EffectKind::Kink => 3,
        }
    }
}

/// Effect function h(beta, z_lo, z_hi, x) of a general sharp null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EffectModel {
    Constant {
        beta: f64,
    },
    EffectModification {
        beta1: f64,
        beta2: f64,
        modifier_index: usize,
    },
    /// `threshold` is the kink location d measured from the initial dose `z0`.
    Kink {
        beta1: f64,
        beta2: f64,
        threshold: f64,
        z0: Option<f64>,
    },
}

impl EffectModel {
    pub fn from_parts(
        kind: EffectKind,
        beta: &[f64],
        modifier_index: Option<usize>,
        z0: Option<f64>,
    ) -> Result<Self> {
        if beta.len() != kind.dim() {
            return Err(Error::InvalidModel(format!(
                "{kind:?} needs {} parameters, got {}",
                kind.dim(),
                beta.len()
            )));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        Ok(match kind {
            EffectKind::Constant => EffectModel::Constant { beta: beta[0] },
            EffectKind::EffectModification => EffectModel::EffectModification {
                beta1: beta[0],
                beta2: beta[1],
                modifier_index: modifier_index.ok_or_else(|| {
                    Error::InvalidModel("effect modification needs a modifier index".into())
                })?,
            },
            EffectKind::Kink => EffectModel::Kink {
                beta1: beta[0],
                beta2: beta[1],
                threshold: beta[2],
                z0,
            },
        })
    }

    pub fn kind(&self) -> EffectKind {
        match self {
            EffectModel::Constant { .. } => EffectKind::Constant,
            EffectModel::EffectModification { .. } => EffectKind::EffectModification,
            EffectModel::Kink { .. } => EffectKind::Kink,
        }
    }

    pub fn beta(&self) -> Vec<f64> {
        match *self {
            EffectModel::Constant { beta } => vec![beta],
            EffectModel::EffectModification { beta1, beta2, .. } => vec![beta1, beta2],
            EffectModel::Kink {
                beta1,
                beta2,
                threshold,
                ..
            } => vec![beta1, beta2, threshold],
        }
    }

    /// Same model with a different parameter vector.
    pub fn with_beta(&self, beta: &[f64]) -> Result<Self> {
        let (index, z0) = match *self {
            EffectModel::EffectModification { modifier_index, .. } => (Some(modifier_index), None),
            EffectModel::Kink { z0, .. } => (None, z0),
            EffectModel::Constant { .. } => (None, None),
        };
        Self::from_parts(self.kind(), beta, index, z0)
    }

    /// Fills a missing kink `z0` with the smallest low dose in the sample and
    /// checks the model against every pair.
    pub fn bind(&self, sample: &MatchedSample) -> Result<Self> {
        let bound = match *self {
            EffectModel::Kink {
                beta1,
                beta2,
                threshold,
                z0: None,
            } => EffectModel::Kink {
                beta1,
                beta2,
                threshold,
                z0: Some(sample.min_low_dose()),
            },
            ref other => other.clone(),
        };
        match bound {
            EffectModel::EffectModification { modifier_index, .. } => {
                let width = sample.covariate_names().len();
                if modifier_index >= width {
                    return Err(Error::InvalidModel(format!(
                        "modifier index {modifier_index} out of range for {width} covariates"
                    )));
                }
            }
            EffectModel::Kink { z0: Some(z0), .. } if z0 > sample.min_low_dose() => {
                return Err(Error::InvalidModel(format!(
                    "kink z0 = {z0} exceeds the smallest low dose {}",
                    sample.min_low_dose()
                )));
            }
            _ => {}
        }
        Ok(bound)
    }
}

/// h(beta, z_lo, z_hi, x) for the higher-dose unit of `pair`.
pub fn effect_offset(model: &EffectModel, pair: &MatchedPair) -> Result<f64> {
    let gap = pair.z_hi - pair.z_lo;
    match *model {
        EffectModel::Constant { beta } => Ok(beta * gap),
        EffectModel::EffectModification {
            beta1,
            beta2,
            modifier_index,
        } => {
            let x = pair.x_of_hi.get(modifier_index).ok_or_else(|| {
                Error::InvalidModel(format!(
                    "pair `{}`: modifier index {modifier_index} out of range",
                    pair.pair_id
                ))
            })?;
            Ok((beta1 + beta2 * x) * gap)
        }
        EffectModel::Kink {
            beta1,
            beta2,
            threshold,
            z0,
        } => {
            let z0 = z0.ok_or_else(|| {
                Error::InvalidModel("kink model has no z0; bind it to a sample".into())
            })?;
            if z0 > pair.z_lo {
                return Err(Error::InvalidModel(format!(
                    "pair `{}`: z0 = {z0} exceeds z_lo = {}",
                    pair.pair_id, pair.z_lo
                )));
            }
            let lo_below = pair.z_lo - z0 < threshold;
            let hi_below = pair.z_hi - z0 < threshold;
            Ok(match (lo_below, hi_below) {
                (true, true) => beta1 * gap,
                (true, false) => beta2 * (pair.z_hi - z0) - beta1 * (pair.z_hi - z0),
                (false, false) => beta2 * gap,
                // z_lo < z_hi makes this branch empty.
                (false, true) => 0.0,
            })
        }
    }
}

/// Removes the hypothesized effect from the higher-dose outcome of every pair.
pub fn adjust_outcomes(sample: &MatchedSample, model: &EffectModel) -> Result<MatchedSample> {
    let model = model.bind(sample)?;
    let adjusted = sample
        .pairs()
        .iter()
        .map(|p| Ok(p.y_of_hi - effect_offset(&model, p)?))
        .collect::<Result<Vec<_>>>()?;
    sample.with_high_outcomes(&adjusted)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(z_lo: f64, z_hi: f64) -> MatchedPair {
        MatchedPair::from_doses_outcomes("p", z_hi, z_lo, 5.0, 3.0).unwrap()
    }

    #[test]
    fn two_row_file_maps_fields() {
        let data = "pair_id,unit_id,z,y\n1,1,1,3\n1,2,2,5\n";
        let s = read_csv(data.as_bytes(), &CsvSchema::default()).unwrap();
        let p = &s.pairs()[0];
        assert_eq!((p.z_lo, p.z_hi, p.y_of_hi, p.y_of_lo), (1.0, 2.0, 5.0, 3.0));
        assert_eq!(p.orientation(), Orientation::Second);
    }

    #[test]
    fn tied_doses_rejected() {
        let data = "pair_id,unit_id,z,y\n1,1,2,3\n1,2,2,5\n";
        let err = read_csv(data.as_bytes(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::TiedDoses(_)));
        assert!(err.to_string().contains("tied doses"));
    }

    #[test]
    fn ingestion_errors() {
        let s = CsvSchema::default();
        let missing = "pair_id,unit_id,z\n1,1,2\n";
        assert!(matches!(
            read_csv(missing.as_bytes(), &s),
            Err(Error::MissingColumn(_))
        ));
        let single = "pair_id,unit_id,z,y\n1,1,2,3\n";
        assert!(matches!(
            read_csv(single.as_bytes(), &s),
            Err(Error::IncompletePair(_))
        ));
        let dup = "pair_id,unit_id,z,y\n1,1,2,3\n1,1,3,3\n";
        assert!(matches!(
            read_csv(dup.as_bytes(), &s),
            Err(Error::DuplicateUnit { .. })
        ));
        let triple = "pair_id,unit_id,z,y\n1,1,2,3\n1,2,3,3\n1,3,4,3\n";
        assert!(matches!(
            read_csv(triple.as_bytes(), &s),
            Err(Error::IncompletePair(_))
        ));
        let text = "pair_id,unit_id,z,y\n1,1,2,abc\n1,2,3,3\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &s),
            Err(Error::NonNumeric { .. })
        ));
    }

    #[test]
    fn covariates_attached_in_declaration_order() {
        let data = "pair_id,unit_id,x_b,z,y,x_a\n7,1,10,1,0,20\n7,2,11,3,1,21\n";
        let s = read_csv(data.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(s.covariate_names(), &["x_b".to_string(), "x_a".to_string()]);
        assert_eq!(s.pairs()[0].x_of_hi, vec![11.0, 21.0]);
        assert_eq!(s.pairs()[0].x_of_lo, vec![10.0, 20.0]);
    }

    #[test]
    fn swapping_rows_gives_same_pair() {
        let a = "pair_id,unit_id,z,y\n1,1,1,3\n1,2,2,5\n";
        let b = "pair_id,unit_id,z,y\n1,2,2,5\n1,1,1,3\n";
        let s = CsvSchema::default();
        assert_eq!(
            read_csv(a.as_bytes(), &s).unwrap(),
            read_csv(b.as_bytes(), &s).unwrap()
        );
    }

    #[test]
    fn constant_and_kink_offsets() {
        let p = pair(1.0, 3.0);
        assert_eq!(
            effect_offset(&EffectModel::Constant { beta: 0.0 }, &p).unwrap(),
            0.0
        );
        assert_eq!(
            effect_offset(&EffectModel::Constant { beta: 2.0 }, &p).unwrap(),
            4.0
        );

        let kink = EffectModel::Kink {
            beta1: 1.0,
            beta2: 3.0,
            threshold: 2.0,
            z0: Some(0.0),
        };
        assert_eq!(effect_offset(&kink, &pair(1.0, 5.0)).unwrap(), 10.0);
        // both below / both above the kink
        assert_eq!(effect_offset(&kink, &pair(0.5, 1.5)).unwrap(), 1.0);
        assert_eq!(effect_offset(&kink, &pair(2.5, 4.0)).unwrap(), 4.5);
    }

    #[test]
    fn model_binding_errors() {
        let s = MatchedSample::from_rows(&[(1.0, 2.0, 0.0, 1.0)]).unwrap();
        let em = EffectModel::EffectModification {
            beta1: 1.0,
            beta2: 1.0,
            modifier_index: 0,
        };
        assert!(matches!(
            adjust_outcomes(&s, &em),
            Err(Error::InvalidModel(_))
        ));
        let kink = EffectModel::Kink {
            beta1: 1.0,
            beta2: 1.0,
            threshold: 1.0,
            z0: Some(1.5),
        };
        assert!(matches!(
            adjust_outcomes(&s, &kink),
            Err(Error::InvalidModel(_))
        ));
        assert!(EffectModel::from_parts(EffectKind::Kink, &[1.0], None, None).is_err());
    }

    #[test]
    fn kink_z0_defaults_to_smallest_low_dose() {
        let s = MatchedSample::from_rows(&[(1.0, 2.0, 0.0, 1.0), (4.0, 3.0, 0.0, 0.0)]).unwrap();
        let kink = EffectModel::Kink {
            beta1: 1.0,
            beta2: 2.0,
            threshold: 10.0,
            z0: None,
        };
        match kink.bind(&s).unwrap() {
            EffectModel::Kink { z0, .. } => assert_eq!(z0, Some(1.0)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn adjust_constant_effect() {
        let s = MatchedSample::from_rows(&[(1.0, 3.0, 2.0, 5.0)]).unwrap();
        let adj = adjust_outcomes(&s, &EffectModel::Constant { beta: 2.0 }).unwrap();
        assert_eq!(adj.pairs()[0].y_of_hi, 1.0);
        assert_eq!(adj.pairs()[0].y_of_lo, 2.0);
    }

    #[test]
    fn links() {
        let s = MatchedSample::from_rows(&[(1.0, std::f64::consts::E, 0.0, 1.0)]).unwrap();
        let g = DoseLink::Log.gaps(&s).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-15);
        let bad = DoseLink::table(vec![(1.0, 0.0), (2.0, 1.0), (3.0, 0.5)]).unwrap_err();
        assert!(matches!(bad, Error::InvalidLink(_)));
        let t = DoseLink::table(vec![(1.0, 5.0)]).unwrap();
        assert!(t.gaps(&s).is_err());
        let neg = MatchedSample::from_rows(&[(-1.0, 1.0, 0.0, 1.0)]).unwrap();
        assert!(DoseLink::Log.gaps(&neg).is_err());
    }
}
