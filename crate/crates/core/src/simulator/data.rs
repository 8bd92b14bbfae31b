use crate::error::{Error, Result};
use crate::numerics::{gaussian, Matrix, SeededRng};

/// Labeled and unlabeled samples of a category-discovery task.
///
/// Classes `0..num_known` are known, `num_known..num_total` are novel.
/// Unlabeled ground truth is only read by evaluation and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub labeled_x: Matrix,
    pub labeled_y: Vec<usize>,
    pub unlabeled_x: Matrix,
    pub unlabeled_y: Vec<usize>,
    pub unlabeled_known: Vec<bool>,
    pub num_known: usize,
    pub num_total: usize,
}

impl DatasetSplit {
    pub fn input_dim(&self) -> usize {
        self.labeled_x.ncols()
    }

    pub fn num_labeled(&self) -> usize {
        self.labeled_x.nrows()
    }

    pub fn num_unlabeled(&self) -> usize {
        self.unlabeled_x.nrows()
    }

    /// `known_class[c]` is true for `c < num_known`.
    pub fn known_class_flags(&self) -> Vec<bool> {
        (0..self.num_total).map(|c| c < self.num_known).collect()
    }

    /// Indices of unlabeled samples from novel classes.
    pub fn novel_unlabeled_rows(&self) -> Vec<usize> {
        (0..self.num_unlabeled()).filter(|&i| !self.unlabeled_known[i]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_known == 0 || self.num_known > self.num_total {
            return Err(Error::Data(format!(
                "need 1 <= num_known <= num_total, got {} and {}",
                self.num_known, self.num_total
            )));
        }
        if self.labeled_x.nrows() != self.labeled_y.len() {
            return Err(Error::Data("labeled features and labels differ in length".into()));
        }
        if self.unlabeled_x.nrows() != self.unlabeled_y.len() || self.unlabeled_y.len() != self.unlabeled_known.len() {
            return Err(Error::Data("unlabeled features, labels and flags differ in length".into()));
        }
        if self.labeled_x.nrows() > 0
            && self.unlabeled_x.nrows() > 0
            && self.labeled_x.ncols() != self.unlabeled_x.ncols()
        {
            return Err(Error::Data("labeled and unlabeled feature widths differ".into()));
        }
        if let Some(&y) = self.labeled_y.iter().find(|&&y| y >= self.num_known) {
            return Err(Error::Data(format!("labeled sample has non-known class {y}")));
        }
        for (i, (&y, &known)) in self.unlabeled_y.iter().zip(&self.unlabeled_known).enumerate() {
            if y >= self.num_total {
                return Err(Error::Data(format!("unlabeled sample {i} has class {y} >= {}", self.num_total)));
            }
            if known != (y < self.num_known) {
                return Err(Error::Data(format!("unlabeled sample {i} has an inconsistent known flag")));
            }
        }
        crate::numerics::check_finite(&self.labeled_x, "labeled features")?;
        crate::numerics::check_finite(&self.unlabeled_x, "unlabeled features")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub num_known: usize,
    pub num_novel: usize,
    pub per_class: usize,
    pub input_dim: usize,
    pub class_sep: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// The frozen default benchmark: 4 known and 4 novel classes, 50 samples
    /// each, 32 input dimensions.
    pub fn benchmark(seed: u64) -> Self {
        Self { num_known: 4, num_novel: 4, per_class: 50, input_dim: 32, class_sep: 0.8, noise_std: 0.2, seed }
    }
}

/// Gaussian blobs around class means placed uniformly on a sphere of radius
/// `class_sep`. The first half of every known class is labeled.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<DatasetSplit> {
    if spec.num_known == 0 || spec.per_class == 0 {
        return Err(Error::Argument("class and sample counts must be >= 1".into()));
    }
    if spec.input_dim < 2 {
        return Err(Error::Argument(format!("input dimension must be >= 2, got {}", spec.input_dim)));
    }
    if !(spec.class_sep > 0.0) {
        return Err(Error::Argument(format!("class separation must be positive, got {}", spec.class_sep)));
    }
    let num_total = spec.num_known + spec.num_novel;
    let d = spec.input_dim;
    let mut rng = SeededRng::new(spec.seed);

    let mut means = gaussian(&mut rng, 0.0, 1.0, num_total, d)?;
    for mut row in means.row_iter_mut() {
        let norm = row.norm();
        row *= spec.class_sep / norm;
    }

    let half = spec.per_class / 2;
    let mut labeled_rows = Vec::new();
    let mut labeled_y = Vec::new();
    let mut unlabeled_rows = Vec::new();
    let mut unlabeled_y = Vec::new();
    for class in 0..num_total {
        let noise = gaussian(&mut rng, 0.0, spec.noise_std, spec.per_class, d)?;
        for s in 0..spec.per_class {
            let sample: Vec<f64> = (0..d).map(|c| means[(class, c)] + noise[(s, c)]).collect();
            if class < spec.num_known && s < half {
                labeled_rows.push(sample);
                labeled_y.push(class);
            } else {
                unlabeled_rows.push(sample);
                unlabeled_y.push(class);
            }
        }
    }

    let to_matrix = |rows: &[Vec<f64>]| Matrix::from_fn(rows.len(), d, |r, c| rows[r][c]);
    let unlabeled_known = unlabeled_y.iter().map(|&y| y < spec.num_known).collect();
    Ok(DatasetSplit {
        labeled_x: to_matrix(&labeled_rows),
        labeled_y,
        unlabeled_x: to_matrix(&unlabeled_rows),
        unlabeled_y,
        unlabeled_known,
        num_known: spec.num_known,
        num_total,
    })
}
