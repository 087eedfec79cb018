//! Shade predictors and their leave-one-out evaluation.
//!
//! Two models map the 6-dim input (bare-skin Lab ⊕ foundation Lab) to the
//! 3-dim skin-with-foundation Lab: closed-form multi-output linear regression
//! and per-dimension ε-insensitive linear SVR. Evaluation is leave-one-out
//! cross-validation reporting R², MSE, and MAE over the pooled held-out
//! predictions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::color::Lab;
use crate::dataset::SampleRow;
use crate::error::{Error, Result};
use crate::svr;

/// Multi-output linear model; `theta` is 7×3 (six weights plus bias per
/// output dimension) and prediction is `[x, 1] · theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub theta: [[f64; 3]; 7],
}

impl LinearModel {
    pub fn predict(&self, x: &[f64; 6]) -> [f64; 3] {
        let mut out = [0.0f64; 3];
        for (d, o) in out.iter_mut().enumerate() {
            *o = self.theta[6][d] + (0..6).map(|k| self.theta[k][d] * x[k]).sum::<f64>();
        }
        out
    }
}

/// Solve the normal equations for the linear model.
///
/// The system carries a relative ridge of 1e-10 per feature, so it stays
/// solvable below 7 distinct rows while perturbing well-conditioned solutions
/// far under the reported tolerances.
pub fn fit_linear(rows: &[SampleRow]) -> Result<LinearModel> {
    if rows.is_empty() {
        return Err(Error::FitFailed("cannot fit a linear model on zero rows".into()));
    }
    let n = rows.len();
    let a = DMatrix::from_fn(n, 7, |i, j| if j < 6 { rows[i].input[j] } else { 1.0 });
    let y = DMatrix::from_fn(n, 3, |i, j| rows[i].target[j]);
    let theta = crate::chart::ridge_solve(&a, &y, 1e-10)?;
    let mut out = [[0.0f64; 3]; 7];
    for (j, row) in out.iter_mut().enumerate() {
        for (d, v) in row.iter_mut().enumerate() {
            *v = theta[(j, d)];
        }
    }
    Ok(LinearModel { theta: out })
}

/// Per-feature affine standardization fitted on training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: [f64; 6],
    pub scale: [f64; 6],
}

impl Standardization {
    fn fit(rows: &[SampleRow]) -> Self {
        let n = rows.len() as f64;
        let mut mean = [0.0f64; 6];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.input.iter()) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut scale = [0.0f64; 6];
        for r in rows {
            for k in 0..6 {
                let d = r.input[k] - mean[k];
                scale[k] += d * d;
            }
        }
        for s in scale.iter_mut() {
            *s = (*s / n).sqrt();
            // Constant features pass through unscaled.
            if *s < 1e-12 {
                *s = 1.0;
            }
        }
        Standardization { mean, scale }
    }

    pub fn apply(&self, x: &[f64; 6]) -> [f64; 6] {
        std::array::from_fn(|k| (x[k] - self.mean[k]) / self.scale[k])
    }
}

/// One output dimension of the SVR model: dual coefficients (α − α*) per
/// training sample plus the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrDimension {
    pub coefficients: Vec<f64>,
    pub bias: f64,
}

/// Linear-kernel ε-SVR over the three output dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub c: f64,
    pub epsilon: f64,
    pub standardization: Standardization,
    /// Standardized training inputs, aligned with each dimension's
    /// coefficients; prediction is the kernel sum over these.
    pub training_inputs: Vec<[f64; 6]>,
    pub dims: [SvrDimension; 3],
    /// Set when the inputs were all identical and the model degraded to a
    /// constant per-dimension median predictor.
    pub degenerate: bool,
}

impl SvrModel {
    pub fn predict(&self, x: &[f64; 6]) -> [f64; 3] {
        let xs = self.standardization.apply(x);
        std::array::from_fn(|d| {
            let dim = &self.dims[d];
            let kernel_sum: f64 = self
                .training_inputs
                .iter()
                .zip(dim.coefficients.iter())
                .map(|(xi, b)| b * xi.iter().zip(xs.iter()).map(|(p, q)| p * q).sum::<f64>())
                .sum();
            kernel_sum + dim.bias
        })
    }
}

/// Fit one output dimension of the SVR.
pub fn fit_svr_dimension(rows: &[SampleRow], dim: usize, c: f64, eps: f64) -> Result<SvrDimension> {
    let model = fit_svr(rows, c, eps)?;
    Ok(model.dims[dim].clone())
}

/// Fit the three-dimension SVR model.
///
/// Inputs are standardized per feature; targets stay on their original
/// scale. Identical inputs across all rows degrade to a constant median
/// predictor (flagged on the returned model).
pub fn fit_svr(rows: &[SampleRow], c: f64, eps: f64) -> Result<SvrModel> {
    if rows.len() < 2 {
        return Err(Error::FitFailed(format!("SVR needs at least 2 rows, got {}", rows.len())));
    }
    if !(c > 0.0) || !(eps >= 0.0) {
        return Err(Error::InvalidInput(format!("invalid hyperparameters C={c}, eps={eps}")));
    }
    // Standardization and the solver both see the rows in a canonical order,
    // so the fitted model is a pure function of the sample multiset.
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&i, &j| {
        rows[i]
            .input
            .iter()
            .chain(rows[i].target.iter())
            .zip(rows[j].input.iter().chain(rows[j].target.iter()))
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sorted: Vec<SampleRow> = order.iter().map(|&i| rows[i].clone()).collect();
    let rows = &sorted[..];

    let standardization = Standardization::fit(rows);
    let inputs: Vec<[f64; 6]> = rows.iter().map(|r| standardization.apply(&r.input)).collect();

    if rows.iter().skip(1).all(|r| r.input == rows[0].input) {
        let dims = std::array::from_fn(|d| {
            let mut values: Vec<f64> = rows.iter().map(|r| r.target[d]).collect();
            values.sort_by(f64::total_cmp);
            let n = values.len();
            let median = if n % 2 == 1 {
                values[n / 2]
            } else {
                0.5 * (values[n / 2 - 1] + values[n / 2])
            };
            SvrDimension { coefficients: vec![0.0; n], bias: median }
        });
        return Ok(SvrModel {
            c,
            epsilon: eps,
            standardization,
            training_inputs: inputs,
            dims,
            degenerate: true,
        });
    }

    let x: Vec<Vec<f64>> = inputs.iter().map(|v| v.to_vec()).collect();
    let dims = std::array::from_fn(|d| {
        let y: Vec<f64> = rows.iter().map(|r| r.target[d]).collect();
        let sol = svr::solve(&x, &y, c, eps);
        SvrDimension { coefficients: sol.beta, bias: sol.bias }
    });
    Ok(SvrModel {
        c,
        epsilon: eps,
        standardization,
        training_inputs: inputs,
        dims,
        degenerate: false,
    })
}

/// A trained predictor, tagged for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Linear(LinearModel),
    Svr(SvrModel),
}

impl Model {
    pub fn predict(&self, x: &[f64; 6]) -> Lab {
        let out = match self {
            Model::Linear(m) => m.predict(x),
            Model::Svr(m) => m.predict(x),
        };
        Lab::new(out[0], out[1], out[2])
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::parse(path, None, e.to_string()))?;
        crate::write_atomic(path, json.as_bytes())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, Some(e.line() as u64), e.to_string()))
    }
}

/// Which predictor leave-one-out evaluation trains per fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Svr,
    /// Floor baseline: predicts the training-target mean.
    MeanBaseline,
}

/// SVR hyperparameters (box constraint and tube half-width).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub svr_c: f64,
    pub svr_eps: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { svr_c: 1.0, svr_eps: 0.1 }
    }
}

/// One held-out prediction of the cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResidual {
    pub subject_id: String,
    pub shade: String,
    pub predicted: [f64; 3],
    pub target: [f64; 3],
}

/// Pooled leave-one-out metrics.
///
/// R² is computed per output dimension over the pooled held-out predictions
/// and averaged uniformly over the three dimensions; MSE and MAE average
/// over all N·3 scalar components. R² is reported as computed and may be
/// negative on held-out data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: ModelKind,
    pub n: usize,
    pub r2: f64,
    pub r2_per_dim: [f64; 3],
    pub mse: f64,
    pub mae: f64,
    pub per_fold: Vec<FoldResidual>,
}

/// Leave-one-out cross-validation: train on N−1 rows, predict the held-out
/// row, pool all N predictions into one report.
pub fn loocv(rows: &[SampleRow], kind: ModelKind, hyper: Hyperparams) -> Result<EvalReport> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("LOOCV needs at least 3 rows, got {n}")));
    }

    let mut per_fold = Vec::with_capacity(n);
    let mut train = Vec::with_capacity(n - 1);
    for i in 0..n {
        train.clear();
        train.extend(rows.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, r)| r.clone()));
        let predicted = match kind {
            ModelKind::Linear => fit_linear(&train)?.predict(&rows[i].input),
            ModelKind::Svr => fit_svr(&train, hyper.svr_c, hyper.svr_eps)?.predict(&rows[i].input),
            ModelKind::MeanBaseline => {
                let m = train.len() as f64;
                std::array::from_fn(|d| train.iter().map(|r| r.target[d]).sum::<f64>() / m)
            }
        };
        per_fold.push(FoldResidual {
            subject_id: rows[i].subject_id.clone(),
            shade: rows[i].shade.clone(),
            predicted,
            target: rows[i].target,
        });
    }

    Ok(report_from_folds(kind, per_fold))
}

fn report_from_folds(model: ModelKind, per_fold: Vec<FoldResidual>) -> EvalReport {
    let n = per_fold.len();
    let mut r2_per_dim = [0.0f64; 3];
    for (d, r2) in r2_per_dim.iter_mut().enumerate() {
        let mean = per_fold.iter().map(|f| f.target[d]).sum::<f64>() / n as f64;
        let ss_res: f64 = per_fold
            .iter()
            .map(|f| (f.target[d] - f.predicted[d]) * (f.target[d] - f.predicted[d]))
            .sum();
        let ss_tot: f64 = per_fold
            .iter()
            .map(|f| (f.target[d] - mean) * (f.target[d] - mean))
            .sum();
        *r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 - ss_res };
    }
    let scalars = (n * 3) as f64;
    let mse = per_fold
        .iter()
        .flat_map(|f| (0..3).map(move |d| f.target[d] - f.predicted[d]))
        .map(|e| e * e)
        .sum::<f64>()
        / scalars;
    let mae = per_fold
        .iter()
        .flat_map(|f| (0..3).map(move |d| f.target[d] - f.predicted[d]))
        .map(f64::abs)
        .sum::<f64>()
        / scalars;
    EvalReport {
        model,
        n,
        r2: (r2_per_dim[0] + r2_per_dim[1] + r2_per_dim[2]) / 3.0,
        r2_per_dim,
        mse,
        mae,
        per_fold,
    }
}

impl EvalReport {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::parse(path, None, e.to_string()))?;
        crate::write_atomic(path, json.as_bytes())
    }
}
