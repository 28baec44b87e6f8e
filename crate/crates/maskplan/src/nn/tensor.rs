//! Dense channel-major (CHW) tensor for single samples.

use super::Scalar;

/// A dense 3-D array laid out channel-major: `data[(c * h + y) * w + x]`.
///
/// Networks in this crate process one sample at a time (group normalization
/// is per-sample anyway), so there is no batch dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor {
            c,
            h,
            w,
            data: vec![S::zero(); c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), c * h * w, "tensor data length mismatch");
        Tensor { c, h, w, data }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        debug_assert!(c < self.c && y < self.h && x < self.w);
        (c * self.h + y) * self.w + x
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> S {
        self.data[self.idx(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: S) {
        let i = self.idx(c, y, x);
        self.data[i] = v;
    }

    /// One channel plane as a flat `h * w` slice.
    pub fn plane(&self, c: usize) -> &[S] {
        &self.data[c * self.h * self.w..(c + 1) * self.h * self.w]
    }

    pub fn zeros_like(&self) -> Self {
        Tensor::zeros(self.c, self.h, self.w)
    }

    /// Concatenate along the channel axis; spatial dims must match.
    pub fn concat_channels(&self, other: &Tensor<S>) -> Tensor<S> {
        assert_eq!((self.h, self.w), (other.h, other.w), "spatial dims differ");
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Tensor::from_vec(self.c + other.c, self.h, self.w, data)
    }

    /// Split along the channel axis into `(first at channels, rest)`.
    pub fn split_channels(&self, at: usize) -> (Tensor<S>, Tensor<S>) {
        assert!(at > 0 && at < self.c, "split point outside channel range");
        let plane = self.h * self.w;
        let head = Tensor::from_vec(at, self.h, self.w, self.data[..at * plane].to_vec());
        let tail = Tensor::from_vec(
            self.c - at,
            self.h,
            self.w,
            self.data[at * plane..].to_vec(),
        );
        (head, tail)
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &Tensor<S>) -> Tensor<S> {
        assert_eq!(
            (self.c, self.h, self.w),
            (other.c, other.h, other.w),
            "tensor shapes differ"
        );
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Tensor::from_vec(self.c, self.h, self.w, data)
    }

    /// Cast every element (used to lift `f32` checkpoints into `f64` nets).
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&v| T::from_f64(v.to_f64())).collect(),
        }
    }
}
