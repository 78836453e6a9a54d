use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variance {
    Up,
    Down,
}

/// Components of a tensor at one point, flattened row-major over `dim^rank`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSample {
    pub point: Vec<f64>,
    pub dim: usize,
    /// Human-readable index layout, e.g. `R^a_bcd`.
    pub layout: String,
    pub variance: Vec<Variance>,
    pub components: Vec<f64>,
    pub estimated_fd_error: f64,
}

impl TensorSample {
    pub fn rank(&self) -> usize {
        self.variance.len()
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank());
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.components[self.index(idx)]
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Iterates all multi-indices of `rank` indices ranging over `0..dim`.
pub(crate) fn multi_indices(dim: usize, rank: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = dim.pow(rank as u32);
    (0..total).map(move |mut flat| {
        let mut idx = vec![0; rank];
        for k in (0..rank).rev() {
            idx[k] = flat % dim;
            flat /= dim;
        }
        idx
    })
}
