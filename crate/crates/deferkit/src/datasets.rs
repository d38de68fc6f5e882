//! The data layer: synthetic distributions with exact conditionals,
//! expert-pool construction, tabular ingestion, and split management.
//!
//! Synthetic classification draws from a Gaussian ring mixture with a
//! uniform class prior, so the class posterior at every sample is known in
//! closed form and the cost oracle is exact. Synthetic regression puts the
//! target on a three-point conditional around a smooth mean function, for
//! the same reason.
//!
//! # Expert realization
//!
//! Experts are competent (probability `p` of a correct prediction) on a
//! specialty subset of classes and uniformly random elsewhere. Rather than
//! flipping an independent coin per example, each expert's correctness is
//! realized as a deterministic region of input space chosen by seeded
//! projection quantiles: on a specialty class the expert is correct
//! exactly on the `p`-quantile slab of a fixed random direction, and on a
//! non-specialty class its prediction is the decile slab index along a
//! second direction (each class therefore receives 1/n of the mass,
//! including the true one). Marginal behavior matches the (p, uniform)
//! contract exactly, while keeping every expert a measurable function of
//! the input, which is what makes the cost oracle a learnable target
//! rather than an unpredictable coin flip.

use std::io::{Read, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bayes::DiscreteConditional;
use crate::entities::{EntityPredictions, EntitySet, OutputKind, OutputValue};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: u64,
    pub features: Vec<f64>,
    pub target: OutputValue,
}

/// An in-memory dataset; the optional conditionals run parallel to the
/// examples and carry the exact `p(z | x)` for synthetic data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_dim: usize,
    pub examples: Vec<Example>,
    pub conditionals: Option<Vec<DiscreteConditional>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn conditional(&self, idx: usize) -> Result<&DiscreteConditional> {
        self.conditionals
            .as_ref()
            .and_then(|c| c.get(idx))
            .ok_or_else(|| Error::ConditionalUndefined(self.examples[idx].id))
    }

    /// Seeded split into (train, test) with `floor((1 - test_fraction) n)`
    /// training rows.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::InvalidParameter(format!(
                "test fraction must lie in [0,1), got {test_fraction}"
            )));
        }
        let n = self.len();
        if n < 2 {
            return Err(Error::EmptyDataset);
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let n_train = ((1.0 - test_fraction) * n as f64).floor() as usize;
        let n_train = n_train.clamp(1, n - 1);
        let pick = |idxs: &[usize]| -> Dataset {
            Dataset {
                feature_dim: self.feature_dim,
                examples: idxs.iter().map(|&i| self.examples[i].clone()).collect(),
                conditionals: self
                    .conditionals
                    .as_ref()
                    .map(|c| idxs.iter().map(|&i| c[i].clone()).collect()),
            }
        };
        Ok((pick(&order[..n_train]), pick(&order[n_train..])))
    }

    /// CSV with header `example_id,f_1,...,f_d,target`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["example_id".to_string()];
        header.extend((1..=self.feature_dim).map(|i| format!("f_{i}")));
        header.push("target".to_string());
        wtr.write_record(&header)?;
        for ex in &self.examples {
            let mut rec = vec![ex.id.to_string()];
            rec.extend(ex.features.iter().map(|f| format!("{f:?}")));
            rec.push(match ex.target {
                OutputValue::ClassId(c) => c.to_string(),
                OutputValue::Real(r) => format!("{r:?}"),
            });
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, kind: OutputKind) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "example_id" {
            return Err(Error::MissingColumn("example_id".into()));
        }
        if &headers[headers.len() - 1] != "target" {
            return Err(Error::MissingColumn("target".into()));
        }
        let feature_dim = headers.len() - 2;
        let mut examples = Vec::new();
        for (row_idx, record) in rdr.records().enumerate() {
            let record = record?;
            let parse = |cell: &str, column: &str| -> Result<f64> {
                cell.parse::<f64>().map_err(|_| Error::NonNumericCell {
                    row: row_idx + 2,
                    column: column.into(),
                    cell: cell.into(),
                })
            };
            let id = record[0].parse::<u64>().map_err(|_| Error::NonNumericCell {
                row: row_idx + 2,
                column: "example_id".into(),
                cell: record[0].into(),
            })?;
            let features: Vec<f64> = (0..feature_dim)
                .map(|i| parse(&record[i + 1], &headers[i + 1]))
                .collect::<Result<_>>()?;
            let target_cell = &record[feature_dim + 1];
            let target = match kind {
                OutputKind::Class => OutputValue::ClassId(
                    target_cell
                        .parse::<usize>()
                        .map_err(|_| Error::NonNumericCell {
                            row: row_idx + 2,
                            column: "target".into(),
                            cell: target_cell.into(),
                        })?,
                ),
                OutputKind::Real => OutputValue::Real(parse(target_cell, "target")?),
            };
            examples.push(Example {
                id,
                features,
                target,
            });
        }
        Ok(Dataset {
            feature_dim,
            examples,
            conditionals: None,
        })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load_csv(path: &Path, kind: OutputKind) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?), kind)
    }

    /// Sidecar with the exact conditionals, JSON array of
    /// `{example_id, support, probs}`.
    pub fn write_conditionals_json<W: Write>(&self, w: W) -> Result<()> {
        let conditionals = self
            .conditionals
            .as_ref()
            .ok_or(Error::ConditionalUndefined(0))?;
        let rows: Vec<ConditionalRow> = self
            .examples
            .iter()
            .zip(conditionals)
            .map(|(ex, c)| ConditionalRow {
                example_id: ex.id,
                support: c.support().to_vec(),
                probs: c.probs().to_vec(),
            })
            .collect();
        serde_json::to_writer(w, &rows)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ConditionalRow {
    example_id: u64,
    support: Vec<OutputValue>,
    probs: Vec<f64>,
}

/// Gaussian ring mixture with uniform class prior: class means evenly
/// spaced on a circle of the given radius (first two feature dimensions),
/// isotropic noise `sigma`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub n_classes: usize,
    pub feature_dim: usize,
    pub n_examples: usize,
    pub radius: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for GaussianMixtureSpec {
    fn default() -> Self {
        Self {
            n_classes: 10,
            feature_dim: 2,
            n_examples: 20_000,
            radius: 4.2,
            sigma: 1.0,
            seed: 7,
        }
    }
}

fn class_mean(class: usize, spec: &GaussianMixtureSpec) -> Vec<f64> {
    let angle = 2.0 * std::f64::consts::PI * (class - 1) as f64 / spec.n_classes as f64;
    let mut mean = vec![0.0; spec.feature_dim];
    mean[0] = spec.radius * angle.cos();
    if spec.feature_dim > 1 {
        mean[1] = spec.radius * angle.sin();
    }
    mean
}

/// Exact posterior over classes at `x` for the ring mixture.
pub fn mixture_posterior(x: &[f64], spec: &GaussianMixtureSpec) -> Vec<f64> {
    let inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
    let logits: Vec<f64> = (1..=spec.n_classes)
        .map(|c| {
            let mean = class_mean(c, spec);
            -x.iter()
                .zip(&mean)
                .map(|(xi, mi)| (xi - mi) * (xi - mi))
                .sum::<f64>()
                * inv
        })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn generate_gaussian_mixture(spec: &GaussianMixtureSpec) -> Result<Dataset> {
    if spec.n_classes < 2 || spec.feature_dim == 0 || spec.n_examples == 0 {
        return Err(Error::InvalidParameter(
            "mixture needs >= 2 classes, >= 1 feature, >= 1 example".into(),
        ));
    }
    if !(spec.sigma > 0.0) || !(spec.radius >= 0.0) {
        return Err(Error::InvalidParameter(
            "mixture needs sigma > 0 and radius >= 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut examples = Vec::with_capacity(spec.n_examples);
    let mut conditionals = Vec::with_capacity(spec.n_examples);
    for id in 0..spec.n_examples {
        let class = rng.random_range(1..=spec.n_classes);
        let mean = class_mean(class, spec);
        let features: Vec<f64> = mean
            .iter()
            .map(|m| m + spec.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let probs = mixture_posterior(&features, spec);
        let support = (1..=spec.n_classes).map(OutputValue::ClassId).collect();
        conditionals.push(DiscreteConditional::new(support, probs)?);
        examples.push(Example {
            id: id as u64,
            features,
            target: OutputValue::ClassId(class),
        });
    }
    Ok(Dataset {
        feature_dim: spec.feature_dim,
        examples,
        conditionals: Some(conditionals),
    })
}

/// Synthetic regression with a three-point conditional around a smooth
/// mean `f(x)`: targets `f - delta, f, f + delta` with probabilities
/// (0.25, 0.5, 0.25), so the conditional is exactly representable.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DiscreteRegressionSpec {
    pub feature_dim: usize,
    pub n_examples: usize,
    pub delta: f64,
    pub seed: u64,
}

pub fn regression_mean(x: &[f64]) -> f64 {
    let linear: f64 = x.iter().enumerate().map(|(i, xi)| xi / (i + 1) as f64).sum();
    linear + (1.5 * x[0]).sin()
}

pub fn generate_discrete_regression(spec: &DiscreteRegressionSpec) -> Result<Dataset> {
    if spec.feature_dim == 0 || spec.n_examples == 0 || !(spec.delta >= 0.0) {
        return Err(Error::InvalidParameter(
            "regression spec needs >= 1 feature, >= 1 example, delta >= 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut examples = Vec::with_capacity(spec.n_examples);
    let mut conditionals = Vec::with_capacity(spec.n_examples);
    for id in 0..spec.n_examples {
        let features: Vec<f64> = (0..spec.feature_dim)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let mean = regression_mean(&features);
        let support = vec![
            OutputValue::Real(mean - spec.delta),
            OutputValue::Real(mean),
            OutputValue::Real(mean + spec.delta),
        ];
        let probs = vec![0.25, 0.5, 0.25];
        let conditional = DiscreteConditional::new(support, probs)?;
        let target = *conditional.sample(rng.random::<f64>());
        conditionals.push(conditional);
        examples.push(Example {
            id: id as u64,
            features,
            target,
        });
    }
    Ok(Dataset {
        feature_dim: spec.feature_dim,
        examples,
        conditionals: Some(conditionals),
    })
}

/// Expert-pool construction parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpertPoolSpec {
    pub n_experts: usize,
    /// Classes each expert is competent on.
    pub specialty_size: usize,
    /// Probability of a correct prediction on a specialty class.
    pub competence: f64,
    /// Fee schedule, first expert the most expensive; experts beyond the
    /// schedule repeat the last fee.
    pub fees: Vec<f64>,
    pub seed: u64,
}

impl ExpertPoolSpec {
    pub fn default_fee_schedule() -> Vec<f64> {
        vec![0.05, 0.045, 0.040, 0.035, 0.03]
    }

    pub fn fee_for(&self, expert_id: usize) -> f64 {
        if self.fees.is_empty() {
            return 0.0;
        }
        self.fees[(expert_id - 1).min(self.fees.len() - 1)]
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.competence) {
            return Err(Error::InvalidParameter(format!(
                "competence must lie in [0,1], got {}",
                self.competence
            )));
        }
        if self.specialty_size == 0 || self.specialty_size > n_classes {
            return Err(Error::InvalidParameter(format!(
                "specialty size {} outside 1..={n_classes}",
                self.specialty_size
            )));
        }
        if self.fees.iter().any(|&f| !(f >= 0.0)) {
            return Err(Error::InvalidParameter("negative expert fee".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum ClassRule {
    /// Correct iff the projection is at or below the stored quantile cut;
    /// otherwise predicts the fixed wrong class.
    Specialty { cut: f64, wrong_class: usize },
    /// Prediction is the decile slab index of the projection; slab y - 1
    /// is the correct one.
    OffSpecialty { cuts: Vec<f64> },
}

/// A generated pool of experts: per-expert projection directions plus
/// per-class decision rules. Deterministic given the generating dataset
/// and seed, and applicable to fresh inputs from the same distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpertPool {
    n_classes: usize,
    specialties: Vec<Vec<usize>>,
    directions: Vec<(Vec<f64>, Vec<f64>)>,
    rules: Vec<Vec<ClassRule>>,
}

impl ExpertPool {
    pub fn n_experts(&self) -> usize {
        self.specialties.len()
    }

    pub fn specialties(&self) -> &[Vec<usize>] {
        &self.specialties
    }

    /// The expert's prediction for an input whose realized class is
    /// `true_class`.
    pub fn predict(&self, expert_id: usize, features: &[f64], true_class: usize) -> usize {
        let (dir, off_dir) = &self.directions[expert_id - 1];
        match &self.rules[expert_id - 1][true_class - 1] {
            ClassRule::Specialty { cut, wrong_class } => {
                let proj: f64 = dir.iter().zip(features).map(|(d, f)| d * f).sum();
                if proj <= *cut {
                    true_class
                } else {
                    *wrong_class
                }
            }
            ClassRule::OffSpecialty { cuts } => {
                let proj: f64 = off_dir.iter().zip(features).map(|(d, f)| d * f).sum();
                let slab = cuts.iter().filter(|&&c| proj > c).count();
                slab + 1
            }
        }
    }

    /// The full prediction table (labels, base predictor, experts) for a
    /// dataset under the given entity set.
    pub fn tabulate(
        &self,
        dataset: &Dataset,
        set: &EntitySet,
        base_predictor: Option<&dyn Fn(&[f64]) -> OutputValue>,
    ) -> Result<EntityPredictions> {
        let mut preds = EntityPredictions::new(set.size());
        for ex in &dataset.examples {
            let true_class = ex.target.as_class()?;
            let mut row = Vec::with_capacity(set.size());
            for e in set.entities() {
                row.push(match e.kind {
                    crate::entities::EntityKind::Label { class_id } => {
                        OutputValue::ClassId(class_id)
                    }
                    crate::entities::EntityKind::BasePredictor => base_predictor
                        .ok_or_else(|| {
                            Error::InvalidParameter(
                                "entity set has a base predictor but none was supplied".into(),
                            )
                        })?(&ex.features),
                    crate::entities::EntityKind::Expert { expert_id } => {
                        OutputValue::ClassId(self.predict(expert_id, &ex.features, true_class))
                    }
                });
            }
            preds.insert(ex.id, row)?;
        }
        Ok(preds)
    }
}

fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Builds the expert pool on a classification dataset and tabulates its
/// predictions, together with the one-stage entity set (labels free,
/// experts at the schedule fees with unit error weight).
pub fn generate_experts(
    dataset: &Dataset,
    n_classes: usize,
    spec: &ExpertPoolSpec,
) -> Result<(EntitySet, EntityPredictions, ExpertPool)> {
    spec.validate(n_classes)?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Specialties: a seeded random subset of the classes per expert.
    let mut specialties = Vec::with_capacity(spec.n_experts);
    for _ in 0..spec.n_experts {
        let mut classes: Vec<usize> = (1..=n_classes).collect();
        for i in (1..classes.len()).rev() {
            let j = rng.random_range(0..=i);
            classes.swap(i, j);
        }
        let mut subset = classes[..spec.specialty_size].to_vec();
        subset.sort_unstable();
        specialties.push(subset);
    }
    let directions: Vec<(Vec<f64>, Vec<f64>)> = (0..spec.n_experts)
        .map(|_| {
            (
                unit_direction(&mut rng, dataset.feature_dim),
                unit_direction(&mut rng, dataset.feature_dim),
            )
        })
        .collect();

    // Per (expert, class) rules from within-class projection quantiles.
    let mut by_class: Vec<Vec<&Example>> = vec![Vec::new(); n_classes];
    for ex in &dataset.examples {
        let c = ex.target.as_class()?;
        if c == 0 || c > n_classes {
            return Err(Error::InvalidParameter(format!(
                "target class {c} outside 1..={n_classes}"
            )));
        }
        by_class[c - 1].push(ex);
    }
    let mut rules = Vec::with_capacity(spec.n_experts);
    for j in 0..spec.n_experts {
        let (dir, off_dir) = &directions[j];
        let mut class_rules = Vec::with_capacity(n_classes);
        for class in 1..=n_classes {
            let members = &by_class[class - 1];
            if specialties[j].contains(&class) {
                let mut projections: Vec<f64> = members
                    .iter()
                    .map(|ex| dir.iter().zip(&ex.features).map(|(d, f)| d * f).sum())
                    .collect();
                projections.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let cut = if projections.is_empty() {
                    f64::INFINITY
                } else {
                    let m = projections.len();
                    let idx = ((spec.competence * m as f64).round() as usize).clamp(0, m);
                    if idx == 0 {
                        f64::NEG_INFINITY
                    } else {
                        projections[idx - 1]
                    }
                };
                class_rules.push(ClassRule::Specialty {
                    cut,
                    wrong_class: class % n_classes + 1,
                });
            } else {
                let mut projections: Vec<f64> = members
                    .iter()
                    .map(|ex| off_dir.iter().zip(&ex.features).map(|(d, f)| d * f).sum())
                    .collect();
                projections.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let m = projections.len();
                let cuts: Vec<f64> = (1..n_classes)
                    .map(|i| {
                        if m == 0 {
                            f64::INFINITY
                        } else {
                            let idx = ((i * m) as f64 / n_classes as f64).ceil() as usize;
                            projections[idx.clamp(1, m) - 1]
                        }
                    })
                    .collect();
                class_rules.push(ClassRule::OffSpecialty { cuts });
            }
        }
        rules.push(class_rules);
    }
    let pool = ExpertPool {
        n_classes,
        specialties,
        directions,
        rules,
    };
    let expert_costs: Vec<(f64, f64)> = (1..=spec.n_experts)
        .map(|id| (1.0, spec.fee_for(id)))
        .collect();
    let set = EntitySet::one_stage(n_classes, &expert_costs)?;
    let preds = pool.tabulate(dataset, &set, None)?;
    Ok((set, preds, pool))
}

/// Column selection and split policy for tabular ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularSchema {
    pub feature_columns: Vec<String>,
    pub target_column: String,
    pub test_fraction: f64,
    pub seed: u64,
}

/// Per-column standardization statistics computed on the training split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnStats {
    pub column: String,
    pub mean: f64,
    pub variance: f64,
    pub constant: bool,
}

const VARIANCE_FLOOR: f64 = 1e-12;

/// Loads a CSV with the declared columns, splits it with the schema seed,
/// and standardizes features to zero mean and unit variance using
/// training-split statistics only. Constant columns standardize to zeros
/// with a warning.
pub fn load_tabular<R: Read>(
    r: R,
    schema: &TabularSchema,
) -> Result<(Dataset, Dataset, Vec<ColumnStats>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.into()))
    };
    let feature_idx: Vec<usize> = schema
        .feature_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<_>>()?;
    let target_idx = find(&schema.target_column)?;

    let mut examples = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let parse = |col: usize| -> Result<f64> {
            record[col].parse::<f64>().map_err(|_| Error::NonNumericCell {
                row: row_idx + 2,
                column: headers[col].to_string(),
                cell: record[col].to_string(),
            })
        };
        let features: Vec<f64> = feature_idx.iter().map(|&c| parse(c)).collect::<Result<_>>()?;
        let target = OutputValue::Real(parse(target_idx)?);
        examples.push(Example {
            id: row_idx as u64,
            features,
            target,
        });
    }
    if examples.is_empty() {
        return Err(Error::EmptyFile("tabular input".into()));
    }
    let dataset = Dataset {
        feature_dim: feature_idx.len(),
        examples,
        conditionals: None,
    };
    let (mut train, mut test) = dataset.split(schema.test_fraction, schema.seed)?;

    // Standardize with train statistics only; the test columns keep
    // whatever offset remains.
    let n = train.len() as f64;
    let dim = train.feature_dim;
    let mut stats = Vec::with_capacity(dim);
    for d in 0..dim {
        let mean = train.examples.iter().map(|e| e.features[d]).sum::<f64>() / n;
        let variance = train
            .examples
            .iter()
            .map(|e| (e.features[d] - mean) * (e.features[d] - mean))
            .sum::<f64>()
            / n;
        let constant = variance < VARIANCE_FLOOR;
        if constant {
            log::warn!(
                "feature column {:?} is constant on the training split; standardizing to zeros",
                schema.feature_columns[d]
            );
        }
        let scale = if constant { 0.0 } else { 1.0 / variance.sqrt() };
        for ex in train.examples.iter_mut().chain(test.examples.iter_mut()) {
            ex.features[d] = (ex.features[d] - mean) * scale;
        }
        stats.push(ColumnStats {
            column: schema.feature_columns[d].clone(),
            mean,
            variance,
            constant,
        });
    }
    Ok((train, test, stats))
}

pub fn load_tabular_path(
    path: &Path,
    schema: &TabularSchema,
) -> Result<(Dataset, Dataset, Vec<ColumnStats>)> {
    load_tabular(std::io::BufReader::new(std::fs::File::open(path)?), schema)
}
