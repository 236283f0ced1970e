use sha2::{Digest, Sha256};

use crate::autodiff::{Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub name: String,
    pub value: Tensor,
}

/// Flat policy parameters as an ordered list of named tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector {
    segments: Vec<Segment>,
}

impl ParamVector {
    pub fn new() -> Self {
        ParamVector::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        assert!(self.index_of(&name).is_none(), "duplicate segment name `{name}`");
        self.segments.push(Segment { name, value });
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_len(&self) -> usize {
        self.segments.iter().map(|s| s.value.len()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.segments.iter().position(|s| s.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.segments[i].value)
    }

    /// Names and shapes, in order.
    pub fn schema(&self) -> Vec<(String, Vec<usize>)> {
        self.segments
            .iter()
            .map(|s| (s.name.clone(), s.value.shape().to_vec()))
            .collect()
    }

    pub fn same_schema(&self, other: &ParamVector) -> bool {
        self.segments.len() == other.segments.len()
            && self
                .segments
                .iter()
                .zip(&other.segments)
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape())
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.segments.iter().map(|s| s.value.clone()).collect()
    }

    /// Same schema, new values.
    pub fn with_tensors(&self, values: Vec<Tensor>) -> ParamVector {
        assert_eq!(values.len(), self.segments.len(), "segment count mismatch");
        let segments = self
            .segments
            .iter()
            .zip(values)
            .map(|(s, v)| {
                assert_eq!(s.value.shape(), v.shape(), "segment `{}` shape mismatch", s.name);
                Segment { name: s.name.clone(), value: v }
            })
            .collect();
        ParamVector { segments }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.segments.iter().flat_map(|s| s.value.data().iter().copied()).collect()
    }

    pub fn unflatten(&self, flat: &[f64]) -> ParamVector {
        assert_eq!(flat.len(), self.total_len(), "flat length does not match schema");
        let mut offset = 0;
        let values = self
            .segments
            .iter()
            .map(|s| {
                let n = s.value.len();
                let t = Tensor::new(s.value.shape().to_vec(), flat[offset..offset + n].to_vec());
                offset += n;
                t
            })
            .collect();
        self.with_tensors(values)
    }

    pub fn zip_map(&self, other: &ParamVector, f: impl Fn(f64, f64) -> f64) -> ParamVector {
        assert!(self.same_schema(other), "parameter schema mismatch");
        let values = self
            .segments
            .iter()
            .zip(&other.segments)
            .map(|(a, b)| a.value.zip_map(&b.value, &f))
            .collect();
        self.with_tensors(values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ParamVector {
        self.with_tensors(self.segments.iter().map(|s| s.value.map(&f)).collect())
    }

    pub fn add(&self, other: &ParamVector) -> ParamVector {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> ParamVector {
        self.map(|a| c * a)
    }

    pub fn zeros_like(&self) -> ParamVector {
        self.map(|_| 0.0)
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        assert!(self.same_schema(other), "parameter schema mismatch");
        self.flatten().iter().zip(other.flatten()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.segments.iter().all(|s| s.value.is_finite())
    }

    /// First segment holding a non-finite value.
    pub fn non_finite_segment(&self) -> Option<&str> {
        self.segments.iter().find(|s| !s.value.is_finite()).map(|s| s.name.as_str())
    }

    /// SHA-256 over names, shapes and the bit patterns of every value.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.segments {
            h.update(s.name.as_bytes());
            for d in s.value.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in s.value.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Records every segment on `tape` as a differentiable leaf.
    pub fn to_params<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.segments.iter().map(|s| tape.param(s.value.clone())).collect()
    }

    /// Records every segment on `tape` as a constant.
    pub fn to_constants<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.segments.iter().map(|s| tape.constant(s.value.clone())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamVector {
        let mut p = ParamVector::new();
        p.push("w", Tensor::matrix(2, 2, vec![1.0, -2.0, 0.5, 0.1]));
        p.push("b", Tensor::vector(vec![0.3, f64::MIN_POSITIVE]));
        p
    }

    #[test]
    fn flatten_unflatten_is_identity() {
        let p = sample();
        let q = p.unflatten(&p.flatten());
        assert_eq!(p.digest(), q.digest());
        assert_eq!(p, q);
    }

    #[test]
    fn adding_zero_is_identity() {
        let p = sample();
        assert_eq!(p.add(&p.zeros_like()), p);
    }

    #[test]
    #[should_panic(expected = "duplicate")]
    fn names_are_unique() {
        let mut p = sample();
        p.push("w", Tensor::scalar(0.0));
    }

    #[test]
    fn norm_and_digest() {
        let p = sample();
        let expected = (1.0f64 + 4.0 + 0.25 + 0.01 + 0.09 + f64::MIN_POSITIVE.powi(2)).sqrt();
        assert!((p.norm() - expected).abs() < 1e-15);
        assert_ne!(p.digest(), p.scale(2.0).digest());
    }
}
