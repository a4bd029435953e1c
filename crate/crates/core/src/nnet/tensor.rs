//! Dense 4D tensors, batch x channels x rows x cols, row-major.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    /// [batch, channels, rows, cols]
    pub shape: [usize; 4],
    pub data: Vec<T>,
}

impl<T: Real> Tensor4<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            data: vec![T::zero(); shape.iter().product()],
            shape,
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::shape(
                format!("{} elements for shape {shape:?}", shape.iter().product::<usize>()),
                format!("{}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.shape[2]
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.shape[3]
    }

    #[inline]
    pub fn idx(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.idx(b, c, y, x)]
    }

    /// One channel plane of one batch item.
    pub fn plane(&self, b: usize, c: usize) -> &[T] {
        let n = self.shape[2] * self.shape[3];
        let start = (b * self.shape[1] + c) * n;
        &self.data[start..start + n]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let n = self.shape[2] * self.shape[3];
        let start = (b * self.shape[1] + c) * n;
        &mut self.data[start..start + n]
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(parts: &[&Tensor4<T>]) -> Result<Tensor4<T>> {
        let first = parts.first().ok_or_else(|| Error::EmptyInput("concat of nothing".into()))?;
        let (b, h, w) = (first.batch(), first.rows(), first.cols());
        let channels: usize = parts.iter().map(|p| p.channels()).sum();
        let mut out = Tensor4::zeros([b, channels, h, w]);
        for bi in 0..b {
            let mut c_off = 0;
            for part in parts {
                if part.batch() != b || part.rows() != h || part.cols() != w {
                    return Err(Error::shape(
                        format!("{b}x?x{h}x{w}"),
                        format!("{:?}", part.shape),
                    ));
                }
                for c in 0..part.channels() {
                    out.plane_mut(bi, c_off + c).copy_from_slice(part.plane(bi, c));
                }
                c_off += part.channels();
            }
        }
        Ok(out)
    }

    /// Split a channel range out into its own tensor.
    pub fn slice_channels(&self, start: usize, count: usize) -> Tensor4<T> {
        let mut out = Tensor4::zeros([self.batch(), count, self.rows(), self.cols()]);
        for b in 0..self.batch() {
            for c in 0..count {
                out.plane_mut(b, c).copy_from_slice(self.plane(b, start + c));
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor4<T> {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(context.to_string()));
        }
        Ok(())
    }
}

pub fn relu<T: Real>(t: &Tensor4<T>) -> Tensor4<T> {
    t.map(|v| v.max(T::zero()))
}

/// Propagate a gradient through relu given the pre-activation values.
pub fn relu_backward<T: Real>(pre: &Tensor4<T>, grad: &Tensor4<T>) -> Tensor4<T> {
    Tensor4 {
        shape: grad.shape,
        data: pre
            .data
            .iter()
            .zip(&grad.data)
            .map(|(p, g)| if *p > T::zero() { *g } else { T::zero() })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor4::<f64>::from_vec([1, 2, 2, 3], (0..12).map(|v| v as f64).collect()).unwrap();
        assert_eq!(t.at(0, 0, 0, 0), 0.0);
        assert_eq!(t.at(0, 0, 1, 2), 5.0);
        assert_eq!(t.at(0, 1, 0, 0), 6.0);
        assert_eq!(t.plane(0, 1), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
    }

    #[test]
    fn concat_and_slice_roundtrip() {
        let a = Tensor4::<f64>::from_vec([2, 1, 2, 2], (0..8).map(|v| v as f64).collect()).unwrap();
        let b = Tensor4::<f64>::from_vec([2, 2, 2, 2], (8..24).map(|v| v as f64).collect()).unwrap();
        let cat = Tensor4::concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape, [2, 3, 2, 2]);
        assert_eq!(cat.slice_channels(0, 1), a);
        assert_eq!(cat.slice_channels(1, 2), b);
    }

    #[test]
    fn relu_grad_masks_negative_preactivations() {
        let pre = Tensor4::<f64>::from_vec([1, 1, 1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        let grad = Tensor4::<f64>::from_vec([1, 1, 1, 3], vec![5.0, 5.0, 5.0]).unwrap();
        assert_eq!(relu_backward(&pre, &grad).data, vec![0.0, 0.0, 5.0]);
    }

    #[test]
    fn finite_check() {
        let mut t = Tensor4::<f64>::zeros([1, 1, 1, 2]);
        assert!(t.check_finite("ok").is_ok());
        t.data[1] = f64::NAN;
        assert!(t.check_finite("bad").is_err());
    }
}
