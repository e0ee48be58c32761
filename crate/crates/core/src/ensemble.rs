//! Seeded Gaussian generator tuples `X_1, …, X_N` in `R^n`.
//!
//! Column `j` of the `n × N` matrix is `X_j`. Entries are drawn column by
//! column from a single [`SplitMix64`](crate::rng::SplitMix64) stream, so an
//! ensemble with more columns extends one with fewer under the same seed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub seed: u64,
    /// Optional `(K, K')` with `K <= N/n <= K'`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_bounds: Option<(f64, f64)>,
}

impl EnsembleConfig {
    pub fn new(n: usize, big_n: usize, seed: u64) -> Self {
        Self {
            n,
            big_n,
            seed,
            ratio_bounds: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be positive".into()));
        }
        if self.big_n < self.n {
            return Err(Error::InvalidConfig(format!(
                "N = {} must be at least n = {}",
                self.big_n, self.n
            )));
        }
        if let Some((k, k_prime)) = self.ratio_bounds {
            if !(k > 1.0 && k <= k_prime) {
                return Err(Error::InvalidConfig(format!(
                    "ratio bounds must satisfy 1 < K <= K' (got {k}, {k_prime})"
                )));
            }
            let ratio = self.big_n as f64 / self.n as f64;
            if ratio < k || ratio > k_prime {
                return Err(Error::InvalidConfig(format!("N/n = {ratio} outside [{k}, {k_prime}]")));
            }
        }
        Ok(())
    }
}

/// Config for an independent child stream; a pure function of `(config.seed, stream_id)`.
pub fn derive_stream(config: &EnsembleConfig, stream_id: u64) -> EnsembleConfig {
    EnsembleConfig {
        seed: derive_seed(config.seed, stream_id),
        ..*config
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    matrix: DMatrix<f64>,
    config: EnsembleConfig,
}

pub fn sample_ensemble(config: &EnsembleConfig) -> Result<Ensemble> {
    config.validate()?;
    let mut rng = SplitMix64::new(config.seed);
    let (n, big_n) = (config.n, config.big_n);
    let mut matrix = DMatrix::zeros(n, big_n);
    for j in 0..big_n {
        for i in 0..n {
            matrix[(i, j)] = rng.gaussian();
        }
    }
    let ensemble = Ensemble {
        matrix,
        config: *config,
    };
    if !ensemble.columns_distinct() {
        return Err(Error::Contract("sampled two identical columns".into()));
    }
    Ok(ensemble)
}

impl Ensemble {
    /// Wraps an explicit matrix (hand-built instances, deserialized data).
    pub fn from_matrix(matrix: DMatrix<f64>, seed: u64) -> Result<Self> {
        let config = EnsembleConfig::new(matrix.nrows(), matrix.ncols(), seed);
        config.validate()?;
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("matrix has non-finite entries".into()));
        }
        Ok(Self { matrix, config })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn big_n(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.matrix.column(j).into_owned()
    }

    /// Submatrix `A_J` keeping the listed columns in order.
    pub fn columns(&self, indices: &[usize]) -> DMatrix<f64> {
        self.matrix.select_columns(indices)
    }

    fn columns_distinct(&self) -> bool {
        let cols: Vec<_> = self.matrix.column_iter().collect();
        for a in 0..cols.len() {
            for b in a + 1..cols.len() {
                if cols[a] == cols[b] {
                    return false;
                }
            }
        }
        true
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&EnsembleFile::from(self)).expect("ensemble serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: EnsembleFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("ensemble JSON: {e}")))?;
        file.try_into()
    }
}

/// On-disk form: `{"n", "N", "seed", "data"}` with `data` row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleFile {
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub seed: u64,
    pub data: Vec<f64>,
}

impl From<&Ensemble> for EnsembleFile {
    fn from(e: &Ensemble) -> Self {
        let (n, big_n) = e.matrix.shape();
        let mut data = Vec::with_capacity(n * big_n);
        for i in 0..n {
            for j in 0..big_n {
                data.push(e.matrix[(i, j)]);
            }
        }
        Self {
            n,
            big_n,
            seed: e.config.seed,
            data,
        }
    }
}

impl TryFrom<EnsembleFile> for Ensemble {
    type Error = Error;

    fn try_from(file: EnsembleFile) -> Result<Self> {
        if file.data.len() != file.n * file.big_n {
            return Err(Error::DimensionMismatch {
                expected: file.n * file.big_n,
                found: file.data.len(),
            });
        }
        let matrix = DMatrix::from_row_slice(file.n, file.big_n, &file.data);
        Ensemble::from_matrix(matrix, file.seed)
    }
}
