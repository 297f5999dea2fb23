//! Layers with explicit forward and backward passes on single samples.
//! Activations are `[C, H, W]` tensors; parameter gradients accumulate into
//! the parameter tensors' buffers.

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    /// `[out, in, k, k]`
    pub weight: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
    pub stride: usize,
    pub pad: usize,
}

fn out_dim(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad - k) / stride + 1
}

impl<T: Real> Conv2d<T> {
    /// He-normal weights, zero bias.
    pub fn new(in_ch: usize, out_ch: usize, k: usize, stride: usize, pad: usize, rng: &mut Rng) -> Self {
        let std = (2.0 / (in_ch * k * k) as f64).sqrt();
        Conv2d {
            weight: Tensor::randn(&[out_ch, in_ch, k, k], std, rng).with_grad(),
            bias: Tensor::zeros(&[out_ch]).with_grad(),
            stride,
            pad,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    fn dims(&self, x: &Tensor<T>) -> Result<(usize, usize, usize, usize, usize)> {
        let s = x.shape();
        if s.len() != 3 || s[0] != self.in_channels() {
            return Err(Error::Shape(format!("conv expects [{}, H, W], got {s:?}", self.in_channels())));
        }
        let k = self.kernel();
        if s[1] + 2 * self.pad < k || s[2] + 2 * self.pad < k {
            return Err(Error::Shape(format!("input {s:?} smaller than kernel {k}")));
        }
        Ok((s[1], s[2], k, out_dim(s[1], k, self.stride, self.pad), out_dim(s[2], k, self.stride, self.pad)))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w, k, oh, ow) = self.dims(x)?;
        let (cin, cout) = (self.in_channels(), self.out_channels());
        let (xv, wv, bv) = (x.values(), self.weight.values(), self.bias.values());
        let mut out = vec![T::zero(); cout * oh * ow];
        for o in 0..cout {
            let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
            plane.iter_mut().for_each(|v| *v = bv[o]);
            for i in 0..cin {
                let src = &xv[i * h * w..(i + 1) * h * w];
                for ky in 0..k {
                    for kx in 0..k {
                        let wt = wv[((o * cin + i) * k + ky) * k + kx];
                        for oy in 0..oh {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row = &src[iy as usize * w..(iy as usize + 1) * w];
                            let orow = &mut plane[oy * ow..(oy + 1) * ow];
                            for (ox, ov) in orow.iter_mut().enumerate() {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix >= 0 && ix < w as isize {
                                    *ov = *ov + wt * row[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        Tensor::from_vec(&[cout, oh, ow], out)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w, k, oh, ow) = self.dims(x)?;
        let (cin, cout) = (self.in_channels(), self.out_channels());
        if grad_out.shape() != [cout, oh, ow] {
            return Err(Error::Shape(format!("conv grad shape {:?}", grad_out.shape())));
        }
        let (xv, gv) = (x.values(), grad_out.values());
        let mut gin = vec![T::zero(); cin * h * w];
        {
            let gb = self.bias.grad_mut().expect("bias requires grad");
            for o in 0..cout {
                gb[o] = gb[o] + gv[o * oh * ow..(o + 1) * oh * ow].iter().copied().sum::<T>();
            }
        }
        let (wv, gw) = self.weight.split_mut();
        let gw = gw.expect("weight requires grad");
        for o in 0..cout {
            let gplane = &gv[o * oh * ow..(o + 1) * oh * ow];
            for i in 0..cin {
                let src = &xv[i * h * w..(i + 1) * h * w];
                let dst = &mut gin[i * h * w..(i + 1) * h * w];
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((o * cin + i) * k + ky) * k + kx;
                        let wt = wv[widx];
                        let mut acc = T::zero();
                        for oy in 0..oh {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let base = iy as usize * w;
                            for ox in 0..ow {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix >= 0 && ix < w as isize {
                                    let g = gplane[oy * ow + ox];
                                    acc = acc + g * src[base + ix as usize];
                                    dst[base + ix as usize] = dst[base + ix as usize] + g * wt;
                                }
                            }
                        }
                        gw[widx] = gw[widx] + acc;
                    }
                }
            }
        }
        Tensor::from_vec(&[cin, h, w], gin)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    /// `[out, in]`
    pub weight: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
}

impl<T: Real> Linear<T> {
    /// Normal weights with standard deviation `sqrt(gain / fan_in)`.
    pub fn new(inputs: usize, outputs: usize, gain: f64, rng: &mut Rng) -> Self {
        let std = (gain / inputs as f64).sqrt();
        Linear {
            weight: Tensor::randn(&[outputs, inputs], std, rng).with_grad(),
            bias: Tensor::zeros(&[outputs]).with_grad(),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let (n_in, n_out) = (self.inputs(), self.outputs());
        if x.len() != n_in {
            return Err(Error::Shape(format!("linear expects {n_in} inputs, got {}", x.len())));
        }
        let (w, b) = (self.weight.values(), self.bias.values());
        Ok((0..n_out)
            .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(&a, &v)| a * v).sum::<T>())
            .collect())
    }

    pub fn backward(&mut self, x: &[T], grad_out: &[T]) -> Result<Vec<T>> {
        let (n_in, n_out) = (self.inputs(), self.outputs());
        if x.len() != n_in || grad_out.len() != n_out {
            return Err(Error::Shape("linear backward shape mismatch".into()));
        }
        {
            let gb = self.bias.grad_mut().expect("bias requires grad");
            for o in 0..n_out {
                gb[o] = gb[o] + grad_out[o];
            }
        }
        let (w, gw) = self.weight.split_mut();
        let gw = gw.expect("weight requires grad");
        let mut gin = vec![T::zero(); n_in];
        for o in 0..n_out {
            let g = grad_out[o];
            if g == T::zero() {
                continue;
            }
            for i in 0..n_in {
                gw[o * n_in + i] = gw[o * n_in + i] + g * x[i];
                gin[i] = gin[i] + g * w[o * n_in + i];
            }
        }
        Ok(gin)
    }
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let v = x.values().iter().map(|&v| v.max(T::zero())).collect();
    Tensor::from_vec(x.shape(), v).expect("same shape")
}

/// Gradient through a ReLU given its output.
pub fn relu_backward<T: Real>(out: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let v = out
        .values()
        .iter()
        .zip(grad_out.values())
        .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(out.shape(), v).expect("same shape")
}

pub fn relu_vec<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| v.max(T::zero())).collect()
}

pub fn relu_vec_backward<T: Real>(out: &[T], grad_out: &[T]) -> Vec<T> {
    out.iter().zip(grad_out).map(|(&y, &g)| if y > T::zero() { g } else { T::zero() }).collect()
}

pub fn add<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("add {:?} + {:?}", a.shape(), b.shape())));
    }
    Tensor::from_vec(a.shape(), a.values().iter().zip(b.values()).map(|(&x, &y)| x + y).collect())
}
