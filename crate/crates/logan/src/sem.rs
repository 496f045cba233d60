//! Linear structural equation model with equal error variances.
//!
//! The model is X - mu = W (X - mu) + eps with eps ~ N(0, sigma^2 I) and W
//! the weighted adjacency matrix of an acyclic graph in child-row
//! convention. Node 0 is the exposure, nodes 1..=d are mediators, node
//! d+1 is the outcome: row 0 and column d+1 of W are structurally zero
//! (nothing points into the exposure, nothing leaves the outcome).

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::boolmat::{bool_star, threshold_binary};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::solve;
use crate::seeding::{stream, TAG_SAMPLE, TAG_SCENARIO};

#[derive(Debug, Clone)]
pub struct SemModel {
    pub weights: Array2<f64>,
    pub mean: Array1<f64>,
    /// Common standard deviation of the error terms.
    pub noise_sd: f64,
}

impl SemModel {
    pub fn new(weights: Array2<f64>, mean: Array1<f64>, noise_sd: f64) -> Result<SemModel> {
        let model = SemModel {
            weights,
            mean,
            noise_sd,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn d(&self) -> usize {
        self.dim() - 2
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.weights.nrows();
        if self.weights.ncols() != p {
            return Err(Error::Shape(format!(
                "weight matrix must be square, got {} x {}",
                p,
                self.weights.ncols()
            )));
        }
        if p < 3 {
            return Err(Error::InvalidInput(format!(
                "model needs exposure, at least one mediator and outcome, got {p} nodes"
            )));
        }
        if self.mean.len() != p {
            return Err(Error::Shape(format!(
                "mean vector length {} for {} nodes",
                self.mean.len(),
                p
            )));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd > 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise standard deviation must be positive and finite, got {}",
                self.noise_sd
            )));
        }
        if self.weights.iter().any(|v| !v.is_finite())
            || self.mean.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput("non-finite model parameter".into()));
        }
        if self.weights.row(0).iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidInput(
                "row 0 must be zero: nothing points into the exposure".into(),
            ));
        }
        if self.weights.column(p - 1).iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidInput(
                "last column must be zero: nothing leaves the outcome".into(),
            ));
        }
        self.topological_order().map(|_| ())
    }

    /// Topological order of the support graph; errors on a cycle.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let p = self.dim();
        // in-degree of node i = number of parents = nonzeros in row i.
        let mut indegree: Vec<usize> = (0..p)
            .map(|i| self.weights.row(i).iter().filter(|&&v| v != 0.0).count())
            .collect();
        let mut ready: Vec<usize> = (0..p).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(p);
        // Pop smallest-index-first for a deterministic order.
        while let Some(&node) = ready.first() {
            ready.remove(0);
            order.push(node);
            for child in 0..p {
                if self.weights[[child, node]] != 0.0 {
                    indegree[child] -= 1;
                    if indegree[child] == 0 {
                        let pos = ready.partition_point(|&r| r < child);
                        ready.insert(pos, child);
                    }
                }
            }
        }
        if order.len() != p {
            return Err(Error::InvalidInput(
                "weight matrix contains a directed cycle".into(),
            ));
        }
        Ok(order)
    }

    /// Model covariance sigma^2 (I - W)^-1 (I - W)^-T in closed form.
    pub fn covariance(&self) -> Result<Array2<f64>> {
        let p = self.dim();
        let eye = Array2::eye(p);
        let m = solve(&(&eye - &self.weights), &eye)?;
        Ok(m.dot(&m.t()) * (self.noise_sd * self.noise_sd))
    }

    pub fn to_json(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            mean: self.mean.to_vec(),
            noise_sd: self.noise_sd,
            weights: self
                .weights
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
        };
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::Data(format!("model serialization: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn from_json(path: &Path) -> Result<SemModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let file: ModelFile = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let p = file.weights.len();
        let mut weights = Array2::zeros((p, p));
        for (i, row) in file.weights.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Data(format!(
                    "{}: weight row {i} has length {}, expected {p}",
                    path.display(),
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                weights[[i, j]] = v;
            }
        }
        SemModel::new(weights, Array1::from_vec(file.mean), file.noise_sd)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    mean: Vec<f64>,
    noise_sd: f64,
    weights: Vec<Vec<f64>>,
}

/// Draws n samples by running the structural equations in topological
/// order. Deterministic given the seed.
pub fn sample(model: &SemModel, n: usize, seed: u64) -> Result<Dataset> {
    model.validate()?;
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    let p = model.dim();
    let order = model.topological_order()?;
    let mut rng = stream(seed, TAG_SAMPLE, 0, 0);
    let mut values = Array2::zeros((n, p));
    let mut eps = vec![0.0f64; p];
    let mut centered = vec![0.0f64; p];
    for i in 0..n {
        for e in eps.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *e = model.noise_sd * z;
        }
        for &j in &order {
            let mut v = eps[j];
            for k in 0..p {
                let w = model.weights[[j, k]];
                if w != 0.0 {
                    v += w * centered[k];
                }
            }
            centered[j] = v;
            values[[i, j]] = model.mean[j] + v;
        }
    }
    Dataset::new(values, Dataset::default_names(p - 2))
}

/// Random-graph parameters: `p1` is the edge frequency for edges touching
/// the exposure or the outcome, `p2` for edges between mediators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub d: usize,
    pub p1: f64,
    pub p2: f64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::InvalidInput("need at least one mediator".into()));
        }
        for (name, p) in [("p1", self.p1), ("p2", self.p2)] {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Named presets for the simulation scenarios used across the test and
/// benchmark suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioPreset {
    A,
    BBody,
    BAppendix,
    C,
}

impl ScenarioPreset {
    pub fn parse(name: &str) -> Result<ScenarioPreset> {
        match name {
            "A" => Ok(ScenarioPreset::A),
            "B-body" => Ok(ScenarioPreset::BBody),
            "B-appendix" => Ok(ScenarioPreset::BAppendix),
            "C" => Ok(ScenarioPreset::C),
            other => Err(Error::InvalidInput(format!(
                "unknown scenario {other:?}; expected A, B-body, B-appendix or C"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioPreset::A => "A",
            ScenarioPreset::BBody => "B-body",
            ScenarioPreset::BAppendix => "B-appendix",
            ScenarioPreset::C => "C",
        }
    }

    pub fn config(&self) -> ScenarioConfig {
        let (d, p1, p2) = match self {
            ScenarioPreset::A => (50, 0.05, 0.15),
            ScenarioPreset::BBody => (100, 0.03, 0.1),
            ScenarioPreset::BAppendix => (100, 0.025, 0.075),
            ScenarioPreset::C => (150, 0.02, 0.05),
        };
        ScenarioConfig { d, p1, p2 }
    }
}

/// Draws a random model: each lower off-diagonal entry of W is an
/// independent Bernoulli indicator times a magnitude uniform on
/// [-2, -0.5] u [0.5, 2]; means are all one and the noise variance is one.
/// Row 0 and column d+1 are zero by construction since the matrix is
/// strictly lower triangular.
pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<SemModel> {
    config.validate()?;
    let p = config.d + 2;
    let mut rng = stream(seed, TAG_SCENARIO, 0, 0);
    let mut weights = Array2::zeros((p, p));
    for j1 in 1..p {
        for j2 in 0..j1 {
            // Both variables are always drawn so the graph shape at one
            // entry never shifts the stream for later entries.
            let freq = if j2 == 0 || j1 == p - 1 {
                config.p1
            } else {
                config.p2
            };
            let present = rng.random::<f64>() < freq;
            let magnitude: f64 = rng.random_range(0.5..=2.0);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            if present {
                weights[[j1, j2]] = sign * magnitude;
            }
        }
    }
    SemModel::new(weights, Array1::ones(p), 1.0)
}

/// Pathway strength of each mediator: delta(q) is the product of the
/// closure entries (outcome <- q) and (q <- exposure) of |W|. Entry q-1 of
/// the result corresponds to mediator q; zero means no pathway through q.
pub fn mediation_strength(model: &SemModel) -> Result<Vec<f64>> {
    let p = model.dim();
    let star = bool_star(&model.weights.mapv(f64::abs))?;
    Ok((1..=p - 2)
        .map(|q| star[[p - 1, q]] * star[[q, 0]])
        .collect())
}

/// True pathway indicator per mediator, from the support of the weights.
pub fn pathway_truth(model: &SemModel) -> Result<Vec<bool>> {
    let p = model.dim();
    let support = threshold_binary(&model.weights, 0.0);
    let star = bool_star(&support)?;
    Ok((1..=p - 2)
        .map(|q| star[[p - 1, q]] != 0.0 && star[[q, 0]] != 0.0)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Five-node cancellation fixture; see boolmat tests for the story.
    fn cancellation_model() -> SemModel {
        let mut w = Array2::zeros((5, 5));
        w[[2, 0]] = 1.0;
        w[[3, 2]] = -1.0;
        w[[4, 2]] = -1.0;
        w[[4, 3]] = -1.0;
        SemModel::new(w, Array1::ones(5), 1.0).unwrap()
    }

    #[test]
    fn validation_catches_structural_violations() {
        let mut w = Array2::zeros((4, 4));
        w[[0, 1]] = 1.0; // into the exposure
        assert!(SemModel::new(w, Array1::ones(4), 1.0).is_err());

        let mut w = Array2::zeros((4, 4));
        w[[1, 3]] = 1.0; // out of the outcome
        assert!(SemModel::new(w, Array1::ones(4), 1.0).is_err());

        let mut w = Array2::zeros((4, 4));
        w[[1, 2]] = 1.0;
        w[[2, 1]] = 1.0; // cycle
        assert!(SemModel::new(w, Array1::ones(4), 1.0).is_err());

        let w = Array2::zeros((4, 4));
        assert!(SemModel::new(w.clone(), Array1::ones(4), 0.0).is_err());
        assert!(SemModel::new(w, Array1::ones(3), 1.0).is_err());
    }

    #[test]
    fn cancellation_fixture_has_unit_strengths() {
        let model = cancellation_model();
        let delta = mediation_strength(&model).unwrap();
        assert_eq!(delta, vec![0.0, 1.0, 1.0]);
        assert_eq!(pathway_truth(&model).unwrap(), vec![false, true, true]);
    }

    #[test]
    fn sampling_is_deterministic_and_seed_sensitive() {
        let model = cancellation_model();
        let a = sample(&model, 10, 3).unwrap();
        let b = sample(&model, 10, 3).unwrap();
        let c = sample(&model, 10, 4).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn sample_mean_approaches_model_mean() {
        let model = cancellation_model();
        let data = sample(&model, 20_000, 11).unwrap();
        for (j, mean) in data.column_means().iter().enumerate() {
            // Marginal variances are at most 3 here; 3 sigma over 20k draws.
            assert!(
                (mean - 1.0).abs() < 3.0 * (3.0f64 / 20_000.0).sqrt(),
                "column {j} mean {mean}"
            );
        }
    }

    #[test]
    fn sample_covariance_matches_closed_form() {
        let model = cancellation_model();
        let n = 100_000;
        let data = sample(&model, n, 7).unwrap();
        let centered = data.centered();
        let x = centered.values();
        let sigma = model.covariance().unwrap();
        let emp = x.t().dot(x) / n as f64;
        for i in 0..5 {
            for j in 0..5 {
                // Variance of a sample covariance entry for Gaussian data.
                let var = (sigma[[i, i]] * sigma[[j, j]] + sigma[[i, j]].powi(2)) / n as f64;
                let tol = 3.0 * var.sqrt();
                assert!(
                    (emp[[i, j]] - sigma[[i, j]]).abs() < tol,
                    "entry ({i}, {j}): {} vs {}",
                    emp[[i, j]],
                    sigma[[i, j]]
                );
            }
        }
    }

    #[test]
    fn scenario_graphs_respect_structure_and_magnitudes() {
        let config = ScenarioPreset::A.config();
        let model = generate_scenario(&config, 5).unwrap();
        let p = config.d + 2;
        assert_eq!(model.dim(), p);
        for i in 0..p {
            for j in i..p {
                assert_eq!(model.weights[[i, j]], 0.0, "upper entry ({i}, {j})");
            }
        }
        let mut magnitudes = Vec::new();
        for i in 0..p {
            for j in 0..i {
                let v = model.weights[[i, j]].abs();
                if v != 0.0 {
                    assert!((0.5..=2.0).contains(&v), "magnitude {v}");
                    magnitudes.push(v);
                }
            }
        }
        assert!(!magnitudes.is_empty());
        // Same seed regenerates the same graph; different seeds differ.
        let again = generate_scenario(&config, 5).unwrap();
        assert_eq!(model.weights, again.weights);
        let other = generate_scenario(&config, 6).unwrap();
        assert_ne!(model.weights, other.weights);
    }

    #[test]
    fn scenario_edge_frequencies_track_parameters() {
        // Large d so the frequencies concentrate.
        let config = ScenarioConfig {
            d: 120,
            p1: 0.05,
            p2: 0.15,
        };
        let model = generate_scenario(&config, 9).unwrap();
        let p = config.d + 2;
        let mut boundary = (0usize, 0usize);
        let mut interior = (0usize, 0usize);
        for i in 1..p {
            for j in 0..i {
                let cell = if j == 0 || i == p - 1 {
                    &mut boundary
                } else {
                    &mut interior
                };
                cell.1 += 1;
                if model.weights[[i, j]] != 0.0 {
                    cell.0 += 1;
                }
            }
        }
        let boundary_rate = boundary.0 as f64 / boundary.1 as f64;
        let interior_rate = interior.0 as f64 / interior.1 as f64;
        assert!((boundary_rate - 0.05).abs() < 0.03, "boundary {boundary_rate}");
        assert!((interior_rate - 0.15).abs() < 0.02, "interior {interior_rate}");
    }

    #[test]
    fn model_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = cancellation_model();
        model.to_json(&path).unwrap();
        let back = SemModel::from_json(&path).unwrap();
        assert_eq!(back.weights, model.weights);
        assert_eq!(back.mean, model.mean);
        assert_eq!(back.noise_sd, model.noise_sd);
    }

    #[test]
    fn covariance_of_chain_matches_hand_computation() {
        // Chain 0 -> 1 -> 2 with weights a and b, unit noise:
        // var(X0) = 1, var(X1) = a^2 + 1, var(X2) = b^2 (a^2 + 1) + 1.
        let (a, b) = (0.7, -1.2);
        let mut w = Array2::zeros((3, 3));
        w[[1, 0]] = a;
        w[[2, 1]] = b;
        let model = SemModel::new(w, Array1::zeros(3), 1.0).unwrap();
        let sigma = model.covariance().unwrap();
        assert!((sigma[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((sigma[[1, 1]] - (a * a + 1.0)).abs() < 1e-12);
        assert!((sigma[[2, 2]] - (b * b * (a * a + 1.0) + 1.0)).abs() < 1e-12);
        assert!((sigma[[1, 0]] - a).abs() < 1e-12);
        assert!((sigma[[2, 0]] - a * b).abs() < 1e-12);
        assert!((sigma[[2, 1]] - b * (a * a + 1.0)).abs() < 1e-12);
    }
}
