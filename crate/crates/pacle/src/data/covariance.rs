//! Cumulative covariance matrices `Σ_h = λI + Σ_{i∈I_h} φ_hi φ_hiᵀ` with a
//! symmetric factorization computed once and reused for all solves.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::OfflineDataset;
use crate::error::{Error, Result};
use crate::mdp::FeatureSet;

/// One stage's covariance: the matrix, its regularizer, and its Cholesky
/// factor. The covariance is not normalized by the stage sample count, so
/// it accumulates the information contained in the stage sub-dataset.
#[derive(Debug, Clone)]
pub struct CumulativeCovariance {
    matrix: DMatrix<f64>,
    lambda: f64,
    chol: Cholesky<f64, Dyn>,
}

impl CumulativeCovariance {
    /// Builds `λI + Σ φφᵀ` from an iterator of feature vectors.
    pub fn from_features<'a, I>(dim: usize, lambda: f64, features: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a DVector<f64>>,
    {
        if lambda <= 0.0 {
            return Err(Error::Validation(format!("lambda {lambda} must be > 0")));
        }
        let mut m = DMatrix::identity(dim, dim).scale(lambda);
        for phi in features {
            if phi.len() != dim {
                return Err(Error::Shape(format!(
                    "feature dim {} does not match covariance dim {dim}",
                    phi.len()
                )));
            }
            m.syger(1.0, phi, phi, 1.0);
        }
        // syger fills only the lower triangle; mirror it.
        for i in 0..dim {
            for j in (i + 1)..dim {
                m[(i, j)] = m[(j, i)];
            }
        }
        let chol = Cholesky::new(m.clone())
            .ok_or_else(|| Error::Validation("covariance is not positive definite".into()))?;
        Ok(Self {
            matrix: m,
            lambda,
            chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower-triangular `L` with `Σ = LLᵀ`.
    pub fn factor_l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `Σ⁻¹ v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    /// `Σ⁻¹ M` column by column.
    pub fn solve_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(m)
    }

    /// `‖v‖_Σ = √(vᵀ Σ v)`.
    pub fn sigma_norm(&self, v: &DVector<f64>) -> f64 {
        (v.dot(&(&self.matrix * v))).max(0.0).sqrt()
    }

    /// `‖v‖_{Σ⁻¹} = √(vᵀ Σ⁻¹ v)`.
    pub fn sigma_inv_norm(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.solve(v)).max(0.0).sqrt()
    }
}

/// Feature vector of a stage-global action id at (h, s).
pub fn feature_of<'a, F: FeatureSet + ?Sized>(
    fs: &'a F,
    h: usize,
    s: usize,
    a: usize,
) -> Result<&'a DVector<f64>> {
    for j in 0..fs.n_actions(h, s) {
        let (id, phi) = fs.action_feature(h, s, j);
        if id == a {
            return Ok(phi);
        }
    }
    Err(Error::Validation(format!(
        "action {a} not available at stage {} state {s}",
        h + 1
    )))
}

/// Per-stage cumulative covariances of a dataset under a feature map.
pub fn build_covariances<F: FeatureSet + ?Sized>(
    dataset: &OfflineDataset,
    fs: &F,
    lambda: f64,
) -> Result<Vec<CumulativeCovariance>> {
    let mut out = Vec::with_capacity(fs.horizon());
    for h in 0..fs.horizon() {
        let mut feats = Vec::with_capacity(dataset.stage_len(h));
        for r in dataset.stage_records(h) {
            feats.push(feature_of(fs, h, r.state, r.action)?);
        }
        out.push(CumulativeCovariance::from_features(
            fs.dim(h),
            lambda,
            feats,
        )?);
    }
    Ok(out)
}
