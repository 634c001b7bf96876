use super::scalar::Real;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Named parameter tensors in a fixed order.
///
/// Gradients use the same type, so optimizer arithmetic works entry by entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<F> {
    entries: Vec<(String, Tensor<F>)>,
    seed: Option<u64>,
}

impl<F: Real> ParameterSet<F> {
    pub fn new(entries: Vec<(String, Tensor<F>)>, seed: Option<u64>) -> Result<Self> {
        let mut names: Vec<&str> = entries.iter().map(|(n, _)| n.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!("duplicate parameter name {}", w[0])));
        }
        Ok(Self { entries, seed })
    }

    /// Seed used for initialization, if the set came from one.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<F>> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensor(&self, idx: usize) -> &Tensor<F> {
        &self.entries[idx].1
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut Tensor<F> {
        &mut self.entries[idx].1
    }

    /// Mutable data of several distinct entries at once.
    pub(crate) fn disjoint_data_mut<const N: usize>(&mut self, idx: [usize; N]) -> [&mut [F]; N] {
        self.entries
            .get_disjoint_mut(idx)
            .expect("distinct in-range parameter indices")
            .map(|(_, t)| t.data_mut())
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.entries[idx].0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<F>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
            seed: None,
        }
    }

    pub fn same_layout(&self, other: &ParameterSet<F>) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((na, ta), (nb, tb))| na == nb && ta.shape() == tb.shape())
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: F, other: &ParameterSet<F>) {
        for ((_, a), (_, b)) in self.entries.iter_mut().zip(&other.entries) {
            for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += alpha * y;
            }
        }
    }

    pub fn scale(&mut self, alpha: F) {
        for (_, t) in &mut self.entries {
            for x in t.data_mut() {
                *x *= alpha;
            }
        }
    }

    /// Euclidean norm over all scalars, accumulated in `f64`.
    pub fn global_norm(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|(_, t)| t.data())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    pub fn has_non_finite(&self) -> bool {
        self.entries.iter().any(|(_, t)| t.has_non_finite())
    }

    pub fn cast<G: Real>(&self) -> ParameterSet<G> {
        ParameterSet {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.cast()))
                .collect(),
            seed: self.seed,
        }
    }
}
