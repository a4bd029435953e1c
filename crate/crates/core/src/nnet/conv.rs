//! 2D convolution with dilation and shape-preserving zero padding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor4;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub dilation_h: usize,
    pub dilation_w: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: (usize, usize)) -> Self {
        Self::dilated(in_channels, out_channels, kernel, (1, 1))
    }

    pub fn dilated(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        dilation: (usize, usize),
    ) -> Self {
        assert!(kernel.0 % 2 == 1 && kernel.1 % 2 == 1, "kernels must be odd for SAME padding");
        assert!(dilation.0 >= 1 && dilation.1 >= 1);
        Self {
            in_channels,
            out_channels,
            kernel_h: kernel.0,
            kernel_w: kernel.1,
            dilation_h: dilation.0,
            dilation_w: dilation.1,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_h * self.kernel_w
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.out_channels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub spec: ConvSpec,
    /// [out_c][in_c][kh][kw]
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn zeros(spec: ConvSpec) -> Self {
        Self {
            weight: vec![T::zero(); spec.weight_count()],
            bias: vec![T::zero(); spec.out_channels],
            spec,
        }
    }

    /// Fan-in scaled uniform init: U(-s, s) with s = 1/sqrt(fan_in) for
    /// weights and biases alike (nonzero biases keep pre-activations off
    /// the rectifier kink, which matters for finite-difference checks).
    pub fn init(spec: ConvSpec, rng: &mut impl Rng) -> Self {
        let fan_in = (spec.in_channels * spec.kernel_h * spec.kernel_w) as f64;
        let scale = 1.0 / fan_in.sqrt();
        let weight = (0..spec.weight_count())
            .map(|_| T::from_f64(rng.gen_range(-scale..scale)))
            .collect();
        let bias = (0..spec.out_channels)
            .map(|_| T::from_f64(rng.gen_range(-scale..scale)))
            .collect();
        Self { weight, bias, spec }
    }

    #[inline]
    fn w_idx(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> usize {
        ((oc * self.spec.in_channels + ic) * self.spec.kernel_h + ky) * self.spec.kernel_w + kx
    }

    pub fn forward(&self, input: &Tensor4<T>) -> Result<Tensor4<T>> {
        let s = &self.spec;
        if input.channels() != s.in_channels {
            return Err(Error::shape(
                format!("{} input channels", s.in_channels),
                format!("{}", input.channels()),
            ));
        }
        let (batch, h, w) = (input.batch(), input.rows(), input.cols());
        let mut out = Tensor4::zeros([batch, s.out_channels, h, w]);
        let pad_h = ((s.kernel_h - 1) * s.dilation_h / 2) as isize;
        let pad_w = ((s.kernel_w - 1) * s.dilation_w / 2) as isize;
        for b in 0..batch {
            for oc in 0..s.out_channels {
                let out_plane = out.plane_mut(b, oc);
                let bias = self.bias[oc];
                for v in out_plane.iter_mut() {
                    *v = bias;
                }
                for ic in 0..s.in_channels {
                    let in_plane = input.plane(b, ic);
                    for ky in 0..s.kernel_h {
                        let dy = ky as isize * s.dilation_h as isize - pad_h;
                        let (y0, y1) = row_range(h, dy);
                        for kx in 0..s.kernel_w {
                            let dx = kx as isize * s.dilation_w as isize - pad_w;
                            let (x0, x1) = row_range(w, dx);
                            if y0 >= y1 || x0 >= x1 {
                                continue;
                            }
                            let weight = self.weight[self.w_idx(oc, ic, ky, kx)];
                            if weight == T::zero() {
                                continue;
                            }
                            for y in y0..y1 {
                                let iy = (y as isize + dy) as usize;
                                let out_row = &mut out_plane[y * w + x0..y * w + x1];
                                let in_row = &in_plane
                                    [iy * w + (x0 as isize + dx) as usize..iy * w + (x1 as isize + dx) as usize];
                                for (o, i) in out_row.iter_mut().zip(in_row) {
                                    *o += weight * *i;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Gradients of the loss wrt input, weights and bias given the
    /// gradient wrt the output.
    pub fn backward(
        &self,
        input: &Tensor4<T>,
        grad_out: &Tensor4<T>,
    ) -> Result<(Tensor4<T>, Vec<T>, Vec<T>)> {
        let s = &self.spec;
        let (batch, h, w) = (input.batch(), input.rows(), input.cols());
        if grad_out.shape != [batch, s.out_channels, h, w] {
            return Err(Error::shape(
                format!("{:?}", [batch, s.out_channels, h, w]),
                format!("{:?}", grad_out.shape),
            ));
        }
        let mut grad_in = Tensor4::zeros(input.shape);
        let mut grad_w = vec![T::zero(); self.weight.len()];
        let mut grad_b = vec![T::zero(); self.bias.len()];
        let pad_h = ((s.kernel_h - 1) * s.dilation_h / 2) as isize;
        let pad_w = ((s.kernel_w - 1) * s.dilation_w / 2) as isize;
        for b in 0..batch {
            for oc in 0..s.out_channels {
                let g_plane = grad_out.plane(b, oc);
                grad_b[oc] += g_plane.iter().copied().sum();
                for ic in 0..s.in_channels {
                    let in_plane = input.plane(b, ic);
                    let gi_plane = grad_in.plane_mut(b, ic);
                    for ky in 0..s.kernel_h {
                        let dy = ky as isize * s.dilation_h as isize - pad_h;
                        let (y0, y1) = row_range(h, dy);
                        for kx in 0..s.kernel_w {
                            let dx = kx as isize * s.dilation_w as isize - pad_w;
                            let (x0, x1) = row_range(w, dx);
                            if y0 >= y1 || x0 >= x1 {
                                continue;
                            }
                            let widx = self.w_idx(oc, ic, ky, kx);
                            let weight = self.weight[widx];
                            let mut wsum = T::zero();
                            for y in y0..y1 {
                                let iy = (y as isize + dy) as usize;
                                let ix0 = (x0 as isize + dx) as usize;
                                let ix1 = (x1 as isize + dx) as usize;
                                let g_row = &g_plane[y * w + x0..y * w + x1];
                                let in_row = &in_plane[iy * w + ix0..iy * w + ix1];
                                let gi_row = &mut gi_plane[iy * w + ix0..iy * w + ix1];
                                for ((g, i), gi) in g_row.iter().zip(in_row).zip(gi_row) {
                                    wsum += *g * *i;
                                    *gi += weight * *g;
                                }
                            }
                            grad_w[widx] += wsum;
                        }
                    }
                }
            }
        }
        Ok((grad_in, grad_w, grad_b))
    }
}

/// Output rows y for which y + dy is a valid input row.
#[inline]
fn row_range(extent: usize, offset: isize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (extent as isize).min(extent as isize - offset).max(0) as usize;
    (lo.min(extent), hi)
}
