//! Kernel evaluation and the linear-algebra substrate: Nyström feature maps,
//! Cholesky log-determinants and solves, truncated matrix powers.

mod cholesky;
mod nystroem;
mod power;

pub use cholesky::{chol_logdet, chol_solve, cholesky, Cholesky};
pub use nystroem::{fit_nystroem, log_volume, volume, FeatureMap, DEFAULT_RANK, EIGEN_FLOOR};
pub use power::{default_power_rank, matrix_power, sym_eigen, SymEigen};

pub(crate) use cholesky::cholesky_with_tol;
pub(crate) use nystroem::log_volume_rows;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on the unit-norm invariant of embeddings.
pub const UNIT_TOL: f64 = 1e-9;

/// A unit-norm feature vector (item embedding or user context).
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalises `values` to unit ℓ2 norm. Vectors already unit-norm within
    /// `1e-12` are kept bit-for-bit.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite embedding coordinate"));
        }
        normalize_in_place(&mut values)?;
        Ok(Self(values))
    }

    /// Wraps values that are expected to be unit-norm already.
    pub fn from_unit(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite embedding coordinate"));
        }
        let n = norm(&values);
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::invalid(format!("embedding norm {n} is not 1")));
        }
        Ok(Self(values))
    }

    /// Rows served by an `ItemStore` are normalised at load time.
    pub(crate) fn raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn normalize_in_place(v: &mut [f64]) -> Result<()> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::invalid("cannot normalise a zero or non-finite vector"));
    }
    if (n - 1.0).abs() > 1e-12 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    #[default]
    Linear,
    Rbf,
}

/// A positive-definite kernel on unit vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// RBF bandwidth `h` in `exp(-‖a-b‖² / 2h²)`; ignored by the linear kernel.
    pub bandwidth: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::linear()
    }
}

impl KernelSpec {
    pub fn linear() -> Self {
        Self {
            family: KernelFamily::Linear,
            bandwidth: 1.0,
        }
    }

    pub fn rbf(bandwidth: f64) -> Self {
        Self {
            family: KernelFamily::Rbf,
            bandwidth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.family == KernelFamily::Rbf && !(self.bandwidth > 0.0 && self.bandwidth.is_finite())
        {
            return Err(Error::invalid("rbf bandwidth must be positive and finite"));
        }
        Ok(())
    }

    /// Kernel value on raw slices; no validation.
    #[inline]
    pub(crate) fn eval_raw(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Linear => crate::util::dot(a, b),
            KernelFamily::Rbf => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * self.bandwidth * self.bandwidth)).exp()
            }
        }
    }
}

/// `k(a, b)`.
pub fn kernel_eval(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<f64> {
    spec.validate()?;
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite embedding coordinate"));
    }
    Ok(spec.eval_raw(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_orthogonal_and_self() {
        let k = KernelSpec::linear();
        assert_eq!(kernel_eval(&k, &[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let v = [0.6, 0.8];
        assert!((kernel_eval(&k, &v, &v).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rbf_orthogonal_unit_vectors() {
        let k = KernelSpec::rbf(1.0);
        let v = kernel_eval(&k, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-12);
        assert!((v - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn non_finite_rejected() {
        let k = KernelSpec::linear();
        assert!(matches!(
            kernel_eval(&k, &[f64::NAN, 0.0], &[0.0, 1.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(Embedding::normalized(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn normalisation_is_idempotent_bitwise() {
        let e = Embedding::normalized(vec![3.0, 4.0]).unwrap();
        assert_eq!(e.as_slice(), &[0.6, 0.8]);
        let again = Embedding::normalized(e.as_slice().to_vec()).unwrap();
        assert_eq!(again, e);
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric(a in prop::collection::vec(-1.0f64..1.0, 4), b in prop::collection::vec(-1.0f64..1.0, 4), h in 0.1f64..3.0) {
            prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
            let a = Embedding::normalized(a).unwrap();
            let b = Embedding::normalized(b).unwrap();
            for spec in [KernelSpec::linear(), KernelSpec::rbf(h)] {
                let ab = kernel_eval(&spec, a.as_slice(), b.as_slice()).unwrap();
                let ba = kernel_eval(&spec, b.as_slice(), a.as_slice()).unwrap();
                prop_assert_eq!(ab, ba);
                let aa = kernel_eval(&spec, a.as_slice(), a.as_slice()).unwrap();
                prop_assert!((aa - 1.0).abs() < 1e-12);
            }
        }
    }
}
