//! The unified entity abstraction shared by both deferral regimes.
//!
//! An *entity* is anything a query can be allocated to: a class label
//! (one-stage), the base predictor (two-stage), or an expert. Every entity
//! carries an error-penalty weight `alpha` and a fixed consultation fee
//! `beta`; allocating a query to entity `j` on an example with target `z`
//! costs
//!
//! ```text
//! mu_j(x, z) = alpha_j * psi(a_j(x), z) + beta_j
//! ```
//!
//! where `a_j(x)` is the entity's recorded prediction and `psi` a
//! task-specific penalty. Entity indices are 1-based at every interface;
//! only the internal vector storage is 0-based.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which deferral regime the entity set encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "variant")]
pub enum Regime {
    /// Labels 1..n plus experts n+1..n+J; a single scorer both predicts
    /// and defers.
    OneStage { n_classes: usize },
    /// Entity 1 is the frozen base predictor, entities 2..J+1 are experts;
    /// a separate rejector allocates queries.
    TwoStage,
}

/// What an entity does when consulted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EntityKind {
    /// Predicts the fixed class `class_id` for every input.
    Label { class_id: usize },
    /// The offline-trained main predictor (two-stage only).
    BasePredictor,
    /// Defers to expert `expert_id`.
    Expert { expert_id: usize },
}

/// One member of the action set, with its cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    /// 1-based position in the entity set.
    pub index: usize,
    pub kind: EntityKind,
    /// Error-penalty weight, `alpha >= 0`.
    pub alpha: f64,
    /// Consultation fee, `beta >= 0`.
    pub beta: f64,
}

/// The ordered action set for one regime.
///
/// Invariants enforced at construction: contiguous 1-based indices, label
/// entities at 1..n and experts after them (one-stage), or the base
/// predictor at index 1 followed by experts (two-stage).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySet {
    regime: Regime,
    entities: Vec<Entity>,
}

impl EntitySet {
    pub fn new(regime: Regime, entities: Vec<Entity>) -> Result<Self> {
        if let Regime::OneStage { n_classes } = regime {
            if n_classes < 2 {
                return Err(Error::InvalidParameter(format!(
                    "one-stage regime needs at least 2 classes, got {n_classes}"
                )));
            }
        }
        if entities.is_empty() {
            return Err(Error::InvalidParameter("empty entity set".into()));
        }
        for (slot, e) in entities.iter().enumerate() {
            if e.index != slot + 1 {
                return Err(Error::InvalidParameter(format!(
                    "entity indices must be contiguous 1..|A|: slot {} holds index {}",
                    slot + 1,
                    e.index
                )));
            }
            if !(e.alpha >= 0.0) || !(e.beta >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "entity {} has negative cost parameters (alpha={}, beta={})",
                    e.index, e.alpha, e.beta
                )));
            }
            match regime {
                Regime::OneStage { n_classes } => match e.kind {
                    EntityKind::Label { class_id } => {
                        if e.index > n_classes || class_id != e.index {
                            return Err(Error::InvalidParameter(format!(
                                "one-stage label entity {} must predict its own class in 1..{}",
                                e.index, n_classes
                            )));
                        }
                    }
                    EntityKind::Expert { .. } => {
                        if e.index <= n_classes {
                            return Err(Error::InvalidParameter(format!(
                                "one-stage expert at label slot {}",
                                e.index
                            )));
                        }
                    }
                    EntityKind::BasePredictor => {
                        return Err(Error::InvalidParameter(
                            "base predictor entity in one-stage regime".into(),
                        ))
                    }
                },
                Regime::TwoStage => match e.kind {
                    EntityKind::BasePredictor => {
                        if e.index != 1 {
                            return Err(Error::InvalidParameter(
                                "two-stage base predictor must sit at index 1".into(),
                            ));
                        }
                    }
                    EntityKind::Expert { .. } => {
                        if e.index == 1 {
                            return Err(Error::InvalidParameter(
                                "two-stage index 1 is reserved for the base predictor".into(),
                            ));
                        }
                    }
                    EntityKind::Label { .. } => {
                        return Err(Error::InvalidParameter(
                            "label entity in two-stage regime".into(),
                        ))
                    }
                },
            }
        }
        if regime == Regime::TwoStage && entities[0].kind != EntityKind::BasePredictor {
            return Err(Error::InvalidParameter(
                "two-stage entity set needs a base predictor at index 1".into(),
            ));
        }
        Ok(Self { regime, entities })
    }

    /// Standard one-stage set: labels 1..n (alpha=1, beta=0) followed by
    /// experts with the given cost parameters.
    pub fn one_stage(n_classes: usize, expert_costs: &[(f64, f64)]) -> Result<Self> {
        let mut entities = Vec::with_capacity(n_classes + expert_costs.len());
        for c in 1..=n_classes {
            entities.push(Entity {
                index: c,
                kind: EntityKind::Label { class_id: c },
                alpha: 1.0,
                beta: 0.0,
            });
        }
        for (j, &(alpha, beta)) in expert_costs.iter().enumerate() {
            entities.push(Entity {
                index: n_classes + j + 1,
                kind: EntityKind::Expert { expert_id: j + 1 },
                alpha,
                beta,
            });
        }
        Self::new(Regime::OneStage { n_classes }, entities)
    }

    /// Standard two-stage set: base predictor at index 1, then experts.
    pub fn two_stage(predictor_cost: (f64, f64), expert_costs: &[(f64, f64)]) -> Result<Self> {
        let mut entities = vec![Entity {
            index: 1,
            kind: EntityKind::BasePredictor,
            alpha: predictor_cost.0,
            beta: predictor_cost.1,
        }];
        for (j, &(alpha, beta)) in expert_costs.iter().enumerate() {
            entities.push(Entity {
                index: j + 2,
                kind: EntityKind::Expert { expert_id: j + 1 },
                alpha,
                beta,
            });
        }
        Self::new(Regime::TwoStage, entities)
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn size(&self) -> usize {
        self.entities.len()
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    /// Entity by 1-based index.
    pub fn entity(&self, index: usize) -> &Entity {
        &self.entities[index - 1]
    }

    /// Consultation fees in index order.
    pub fn fees(&self) -> Vec<f64> {
        self.entities.iter().map(|e| e.beta).collect()
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        let j = self.entities.iter().filter(|e| matches!(e.kind, EntityKind::Expert { .. })).count();
        let n = match self.regime {
            Regime::OneStage { n_classes } => n_classes,
            Regime::TwoStage => 0,
        };
        let file = EntitySetFile {
            regime: self.regime,
            n,
            j,
            entities: self.entities.clone(),
        };
        serde_json::to_writer_pretty(w, &file)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let file: EntitySetFile = serde_json::from_reader(r)?;
        Self::new(file.regime, file.entities)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_json(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_json(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[derive(Serialize, Deserialize)]
struct EntitySetFile {
    regime: Regime,
    n: usize,
    j: usize,
    entities: Vec<Entity>,
}

/// A value in the output space: class id for classification, real for
/// regression. Penalties check the tags at call time, so one code path
/// serves both regimes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputValue {
    ClassId(usize),
    Real(f64),
}

impl OutputValue {
    pub fn kind_name(&self) -> &'static str {
        match self {
            OutputValue::ClassId(_) => "class",
            OutputValue::Real(_) => "real",
        }
    }

    pub fn as_class(&self) -> Result<usize> {
        match self {
            OutputValue::ClassId(c) => Ok(*c),
            OutputValue::Real(_) => Err(Error::OutputSpaceMismatch {
                expected: "class",
                found: "real",
            }),
        }
    }

    pub fn as_real(&self) -> Result<f64> {
        match self {
            OutputValue::Real(v) => Ok(*v),
            OutputValue::ClassId(_) => Err(Error::OutputSpaceMismatch {
                expected: "real",
                found: "class",
            }),
        }
    }
}

impl Serialize for OutputValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            OutputValue::ClassId(c) => s.serialize_u64(*c as u64),
            OutputValue::Real(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for OutputValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match &v {
            serde_json::Value::Number(n) if n.is_u64() => {
                Ok(OutputValue::ClassId(n.as_u64().unwrap() as usize))
            }
            serde_json::Value::Number(n) => Ok(OutputValue::Real(n.as_f64().unwrap())),
            _ => Err(serde::de::Error::custom("expected a number")),
        }
    }
}

/// Task-specific penalty `psi`; zero on exact agreement and non-negative
/// everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskPenalty {
    ZeroOne,
    SquaredError,
    AbsoluteError,
}

impl TaskPenalty {
    pub fn apply(&self, prediction: &OutputValue, target: &OutputValue) -> Result<f64> {
        match self {
            TaskPenalty::ZeroOne => {
                let p = prediction.as_class()?;
                let t = target.as_class()?;
                Ok(if p == t { 0.0 } else { 1.0 })
            }
            TaskPenalty::SquaredError => {
                let p = prediction.as_real()?;
                let t = target.as_real()?;
                Ok((p - t) * (p - t))
            }
            TaskPenalty::AbsoluteError => {
                let p = prediction.as_real()?;
                let t = target.as_real()?;
                Ok((p - t).abs())
            }
        }
    }
}

/// Per-example table of entity predictions, `example_id -> [a_1(x), ..., a_|A|(x)]`.
///
/// Predictions are always supplied as data; experts are fixed maps in both
/// regimes, and tables keep runs reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityPredictions {
    num_entities: usize,
    rows: BTreeMap<u64, Vec<OutputValue>>,
}

impl EntityPredictions {
    pub fn new(num_entities: usize) -> Self {
        Self {
            num_entities,
            rows: BTreeMap::new(),
        }
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn insert(&mut self, example_id: u64, predictions: Vec<OutputValue>) -> Result<()> {
        if predictions.len() != self.num_entities {
            return Err(Error::LengthMismatch {
                what: "entity predictions",
                expected: self.num_entities,
                found: predictions.len(),
            });
        }
        self.rows.insert(example_id, predictions);
        Ok(())
    }

    pub fn get(&self, example_id: u64) -> Result<&[OutputValue]> {
        self.rows
            .get(&example_id)
            .map(Vec::as_slice)
            .ok_or(Error::MissingExample(example_id))
    }

    pub fn example_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.rows.keys().copied()
    }

    /// Checks the one-stage structural invariant: label entity `j`
    /// predicts class `j` on every example.
    pub fn validate_labels(&self, set: &EntitySet) -> Result<()> {
        if set.size() != self.num_entities {
            return Err(Error::LengthMismatch {
                what: "entity predictions",
                expected: set.size(),
                found: self.num_entities,
            });
        }
        for (id, row) in &self.rows {
            for e in set.entities() {
                if let EntityKind::Label { class_id } = e.kind {
                    if row[e.index - 1] != OutputValue::ClassId(class_id) {
                        return Err(Error::InvalidParameter(format!(
                            "example {id}: label entity {} predicts {:?}, expected its own class",
                            e.index,
                            row[e.index - 1]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Writes the table as CSV with header `example_id,entity_1,...,entity_|A|`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["example_id".to_string()];
        header.extend((1..=self.num_entities).map(|j| format!("entity_{j}")));
        wtr.write_record(&header)?;
        for (id, row) in &self.rows {
            let mut rec = vec![id.to_string()];
            for v in row {
                rec.push(match v {
                    OutputValue::ClassId(c) => c.to_string(),
                    OutputValue::Real(r) => format!("{r:?}"),
                });
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a prediction table; `kind` selects how cells are parsed
    /// (integers for classification, decimal floats for regression).
    pub fn read_csv<R: Read>(r: R, kind: OutputKind) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.is_empty() || &headers[0] != "example_id" {
            return Err(Error::MissingColumn("example_id".into()));
        }
        let num_entities = headers.len() - 1;
        let mut table = Self::new(num_entities);
        for (row_idx, record) in rdr.records().enumerate() {
            let record = record?;
            let id: u64 = record[0].parse().map_err(|_| Error::NonNumericCell {
                row: row_idx + 2,
                column: "example_id".into(),
                cell: record[0].into(),
            })?;
            let mut row = Vec::with_capacity(num_entities);
            for (col, cell) in record.iter().skip(1).enumerate() {
                let value = match kind {
                    OutputKind::Class => cell
                        .parse::<usize>()
                        .map(OutputValue::ClassId)
                        .map_err(|_| Error::NonNumericCell {
                            row: row_idx + 2,
                            column: headers[col + 1].into(),
                            cell: cell.into(),
                        })?,
                    OutputKind::Real => cell
                        .parse::<f64>()
                        .map(OutputValue::Real)
                        .map_err(|_| Error::NonNumericCell {
                            row: row_idx + 2,
                            column: headers[col + 1].into(),
                            cell: cell.into(),
                        })?,
                };
                row.push(value);
            }
            table.insert(id, row)?;
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path, kind: OutputKind) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?), kind)
    }
}

/// Which output space a file or dataset uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Class,
    Real,
}

/// Augmented cost of consulting one entity:
/// `alpha_j * psi(prediction, target) + beta_j`. Never below `beta_j`.
pub fn entity_cost(
    entity: &Entity,
    prediction: &OutputValue,
    target: &OutputValue,
    penalty: TaskPenalty,
) -> Result<f64> {
    Ok(entity.alpha * penalty.apply(prediction, target)? + entity.beta)
}

/// Full cost vector `(mu_1(x,z), ..., mu_|A|(x,z))` for one example.
pub fn cost_vector(
    set: &EntitySet,
    preds: &EntityPredictions,
    example_id: u64,
    target: &OutputValue,
    penalty: TaskPenalty,
) -> Result<Vec<f64>> {
    let row = preds.get(example_id)?;
    if row.len() != set.size() {
        return Err(Error::LengthMismatch {
            what: "prediction row",
            expected: set.size(),
            found: row.len(),
        });
    }
    set.entities()
        .iter()
        .zip(row)
        .map(|(e, pred)| entity_cost(e, pred, target, penalty))
        .collect()
}
