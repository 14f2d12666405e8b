//! An ordered, name-addressed collection of parameter tensors.
//!
//! Models export their weights into a `ParamSet` so that the optimizer, the
//! gradient checker, and the checkpoint writer can all treat "the parameters"
//! as one flat, deterministic-ordered structure.

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct ParamSet<S: Scalar = f64> {
    entries: Vec<(String, Tensor<S>)>,
}

impl<S: Scalar> Default for ParamSet<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor<S>) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(Error::invalid(format!("duplicate parameter name {name:?}")));
        }
        self.entries.push((name, t));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor<S>> {
        self.get(name)
            .ok_or_else(|| Error::invalid(format!("missing parameter {name:?}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<S>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Total scalar count across every tensor.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Same names and shapes, all values zero. The canonical gradient buffer.
    pub fn zeros_like(&self) -> ParamSet<S> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    /// Checks that `other` carries exactly the same names and shapes, in the
    /// same order. Used before any aligned elementwise walk.
    pub fn check_aligned(&self, other: &ParamSet<S>, what: &str) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::invalid(format!(
                "{what}: {} tensors vs {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for ((an, at), (bn, bt)) in self.entries.iter().zip(&other.entries) {
            if an != bn {
                return Err(Error::invalid(format!(
                    "{what}: parameter order differs ({an:?} vs {bn:?})"
                )));
            }
            if at.shape() != bt.shape() {
                return Err(Error::Shape {
                    op: "check_aligned",
                    lhs: at.shape().to_string(),
                    rhs: bt.shape().to_string(),
                });
            }
        }
        Ok(())
    }

    /// Accumulates `other * k` into self. Shapes must align.
    pub fn add_scaled(&mut self, other: &ParamSet<S>, k: S) -> Result<()> {
        self.check_aligned(other, "add_scaled")?;
        for ((_, a), (_, b)) in self.entries.iter_mut().zip(&other.entries) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += *y * k;
            }
        }
        Ok(())
    }

    /// Multiplies every entry in place.
    pub fn scale(&mut self, k: S) {
        for (_, t) in self.entries.iter_mut() {
            for x in t.data_mut() {
                *x *= k;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.all_finite())
    }

    pub fn bit_eq(&self, other: &ParamSet<S>) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((an, at), (bn, bt))| an == bn && at.bit_eq(bt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Shape;

    #[test]
    fn duplicate_names_rejected() {
        let mut ps = ParamSet::<f64>::new();
        ps.push("w", Tensor::zeros(Shape::Vector(2))).unwrap();
        assert!(ps.push("w", Tensor::zeros(Shape::Vector(2))).is_err());
    }

    #[test]
    fn zeros_like_and_add_scaled() {
        let mut ps = ParamSet::<f64>::new();
        ps.push("a", Tensor::from_vec(vec![1.0, 2.0])).unwrap();
        let mut g = ps.zeros_like();
        g.add_scaled(&ps, 0.5).unwrap();
        assert_eq!(g.get("a").unwrap().data(), &[0.5, 1.0]);
    }

    #[test]
    fn misaligned_sets_rejected() {
        let mut a = ParamSet::<f64>::new();
        a.push("x", Tensor::zeros(Shape::Vector(2))).unwrap();
        let mut b = ParamSet::<f64>::new();
        b.push("y", Tensor::zeros(Shape::Vector(2))).unwrap();
        assert!(a.check_aligned(&b, "test").is_err());
    }
}
