use crate::error::{Error, Result};
use crate::numerics::{gaussian, is_finite, Matrix, SeededRng};

/// Linear encoder followed by a cosine-similarity prototype head.
///
/// Features are `z = x W`; class scores are `<z / |z|, c_k> / tau_s` with unit
/// prototype rows `c_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    /// `input_dim x feature_dim`
    pub encoder: Matrix,
    /// `num_classes x feature_dim`, rows of unit norm
    pub prototypes: Matrix,
}

impl Model {
    /// Seeded initialization. The encoder is drawn first from the stream, so two
    /// models initialized with the same seed share their encoder regardless of
    /// the number of prototypes.
    pub fn init(input_dim: usize, feature_dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || feature_dim == 0 || num_classes == 0 {
            return Err(Error::Argument("model dimensions must be >= 1".into()));
        }
        let mut rng = SeededRng::new(seed);
        let encoder = gaussian(&mut rng, 0.0, 1.0 / (feature_dim as f64).sqrt(), input_dim, feature_dim)?;
        let mut prototypes = gaussian(&mut rng, 0.0, 1.0, num_classes, feature_dim)?;
        normalize_rows(&mut prototypes);
        Ok(Self { encoder, prototypes })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.nrows()
    }

    pub fn features(&self, x: &Matrix) -> Matrix {
        x * &self.encoder
    }

    /// Index of the most similar prototype for each input row.
    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        let scores = self.features(x) * self.prototypes.transpose();
        scores
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for k in 1..row.len() {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        is_finite(&self.encoder) && is_finite(&self.prototypes)
    }

    pub fn check_compatible(&self, input_dim: usize) -> Result<()> {
        if self.input_dim() != input_dim {
            return Err(Error::Data(format!(
                "model expects {}-dimensional inputs, data has {}",
                self.input_dim(),
                input_dim
            )));
        }
        if self.prototypes.ncols() != self.feature_dim() {
            return Err(Error::Data("prototype width differs from encoder output width".into()));
        }
        Ok(())
    }
}

/// Scales every nonzero row to unit norm.
pub fn normalize_rows(m: &mut Matrix) {
    for mut row in m.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
}
