//! Nyström feature maps and volumes computed through them.

use nalgebra::DMatrix;
use rand::seq::index::sample;

use super::cholesky::cholesky_with_tol;
use super::power::sym_eigen;
use super::KernelSpec;
use crate::data::ItemStore;
use crate::dense::RowMatrix;
use crate::util::rng_for;
use crate::{Error, ItemId, Result};

/// Relative eigenvalue floor: eigenvalues `≤ EIGEN_FLOOR × λ_max` are dropped.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Default Nyström rank `d′`.
pub const DEFAULT_RANK: usize = 100;

/// Relative pivot below which a Gram matrix is treated as singular.
const SINGULAR_PIVOT: f64 = 1e-12;

/// Explicit feature rows `ν(x_i)` with `k(x_i, x_j) ≈ ν(x_i)ᵀ ν(x_j)`.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    rows: RowMatrix,
    anchor_ids: Vec<ItemId>,
    eigen_floor: f64,
}

impl FeatureMap {
    /// Wraps precomputed feature rows, e.g. `ν = id` for the linear kernel.
    pub fn from_rows(rows: RowMatrix) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::invalid("feature map must be non-empty"));
        }
        if rows.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature rows must be finite"));
        }
        Ok(Self {
            rows,
            anchor_ids: Vec::new(),
            eigen_floor: f64::NAN,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    /// Retained rank `d′`.
    pub fn rank(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &RowMatrix {
        &self.rows
    }

    pub fn row(&self, id: ItemId) -> &[f64] {
        self.rows.row(id)
    }

    pub fn anchor_ids(&self) -> &[ItemId] {
        &self.anchor_ids
    }

    /// Smallest retained landmark eigenvalue (NaN for explicit feature maps).
    pub fn eigen_floor(&self) -> f64 {
        self.eigen_floor
    }

    /// Approximate kernel value `ν(x_i)ᵀ ν(x_j)`.
    pub fn kernel(&self, i: ItemId, j: ItemId) -> f64 {
        self.rows.row_dot(i, j)
    }

    pub(crate) fn check_ids(&self, ids: &[ItemId]) -> Result<()> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!(
                "unknown item id {bad} (universe has {} items)",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn gram(&self, ids: &[ItemId]) -> Result<DMatrix<f64>> {
        self.check_ids(ids)?;
        Ok(self.rows.gram(ids))
    }
}

/// Fits a Nyström feature map of rank `rank` from `rank` landmarks drawn
/// uniformly without replacement.
pub fn fit_nystroem(
    spec: &KernelSpec,
    items: &ItemStore,
    rank: usize,
    seed: u64,
) -> Result<FeatureMap> {
    spec.validate()?;
    let n = items.len();
    if rank == 0 || rank > n {
        return Err(Error::invalid(format!(
            "nyström rank {rank} must lie in 1..={n}"
        )));
    }
    let mut rng = rng_for(seed, &[0x4e79]);
    let mut anchors = sample(&mut rng, n, rank).into_vec();
    anchors.sort_unstable();
    let landmarks = items.rows(&anchors)?;

    let c = anchors.len();
    let k_ii = DMatrix::from_fn(c, c, |a, b| {
        spec.eval_raw(landmarks[a].as_slice(), landmarks[b].as_slice())
    });
    let eig = sym_eigen(&k_ii);
    let top = eig.values[0];
    if !(top > 0.0) {
        return Err(Error::DegenerateKernel(
            "landmark kernel matrix has no positive eigenvalue".into(),
        ));
    }
    let kept: Vec<usize> = (0..c)
        .filter(|&k| eig.values[k] > EIGEN_FLOOR * top)
        .collect();
    if kept.is_empty() {
        return Err(Error::DegenerateKernel(
            "all landmark eigenvalues fall below the floor".into(),
        ));
    }
    // U_I Λ^{-1/2}: c × r
    let r = kept.len();
    let proj = DMatrix::from_fn(c, r, |a, k| {
        eig.vectors[(a, kept[k])] / eig.values[kept[k]].sqrt()
    });
    let eigen_floor = eig.values[kept[r - 1]];

    let mut rows = RowMatrix::zeros(n, r);
    let mut kvec = vec![0.0; c];
    items.for_each_batch(|start, batch| {
        for local in 0..batch.nrows() {
            let x = batch.row(local);
            for (a, lm) in landmarks.iter().enumerate() {
                kvec[a] = spec.eval_raw(x, lm.as_slice());
            }
            let out = rows.row_mut(start + local);
            for (a, &ka) in kvec.iter().enumerate() {
                for (k, o) in out.iter_mut().enumerate() {
                    *o += ka * proj[(a, k)];
                }
            }
        }
        Ok(())
    })?;
    Ok(FeatureMap {
        rows,
        anchor_ids: anchors,
        eigen_floor,
    })
}

/// `½ log det(ν(S) ν(S)ᵀ)`; `0` for the empty set and `-∞` when the Gram
/// matrix is singular (e.g. repeated items).
pub fn log_volume(feat: &FeatureMap, subset: &[ItemId]) -> Result<f64> {
    feat.check_ids(subset)?;
    Ok(log_volume_rows(feat.rows(), subset))
}

pub(crate) fn log_volume_rows(rows: &RowMatrix, subset: &[ItemId]) -> f64 {
    if subset.is_empty() {
        return 0.0;
    }
    let g = rows.gram(subset);
    match cholesky_with_tol(&g, SINGULAR_PIVOT) {
        Ok(ch) => 0.5 * ch.logdet(),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Volume for reporting: the empty set and singular sets have volume `0`.
pub fn volume(feat: &FeatureMap, subset: &[ItemId]) -> Result<f64> {
    if subset.is_empty() {
        return Ok(0.0);
    }
    Ok(log_volume(feat, subset)?.exp())
}
