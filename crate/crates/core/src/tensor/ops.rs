use rand::Rng;

use super::{Real, Tensor};
use crate::error::{Error, Result};

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn swish_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v * sigmoid(v))
}

pub fn swish_backward<T: Real>(grad_out: &Tensor<T>, x: &Tensor<T>) -> Tensor<T> {
    let data = grad_out
        .data()
        .iter()
        .zip(x.data())
        .map(|(&g, &v)| {
            let s = sigmoid(v);
            g * (s + v * s * (T::one() - s))
        })
        .collect();
    Tensor::from_vec(x.dims(), data).expect("same shape")
}

pub fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of relu, gated on the relu *output* (positive iff input positive).
pub fn relu_backward<T: Real>(grad_out: &Tensor<T>, y: &Tensor<T>) -> Tensor<T> {
    let data = grad_out
        .data()
        .iter()
        .zip(y.data())
        .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(y.dims(), data).expect("same shape")
}

/// Mean over the frequency axis, keeping it as extent 1.
pub fn freq_avgpool_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (n, c, f, t) = x.dims4();
    let inv = T::one() / T::from_usize(f).unwrap();
    let mut out = Tensor::zeros(&[n, c, 1, t]);
    let src = x.data();
    let dst = out.data_mut();
    for nc in 0..n * c {
        let row = &mut dst[nc * t..(nc + 1) * t];
        for fi in 0..f {
            let s = &src[(nc * f + fi) * t..(nc * f + fi + 1) * t];
            for (d, &v) in row.iter_mut().zip(s) {
                *d = *d + v;
            }
        }
        row.iter_mut().for_each(|d| *d = *d * inv);
    }
    out
}

pub fn freq_avgpool_backward<T: Real>(grad_out: &Tensor<T>, freq: usize) -> Tensor<T> {
    let (n, c, _, t) = grad_out.dims4();
    let inv = T::one() / T::from_usize(freq).unwrap();
    let mut out = Tensor::zeros(&[n, c, freq, t]);
    let g = grad_out.data();
    let dst = out.data_mut();
    for nc in 0..n * c {
        for fi in 0..freq {
            let row = &mut dst[(nc * freq + fi) * t..(nc * freq + fi + 1) * t];
            for (d, &v) in row.iter_mut().zip(&g[nc * t..(nc + 1) * t]) {
                *d = v * inv;
            }
        }
    }
    out
}

/// `x + h` where `h` has frequency extent 1 and is broadcast over `x`'s bins.
pub fn freq_broadcast_add<T: Real>(x: &Tensor<T>, h: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, f, t) = x.dims4();
    if h.dims() != [n, c, 1, t] {
        return Err(Error::Shape(format!(
            "broadcast operand {:?} incompatible with {:?}",
            h.dims(),
            x.dims()
        )));
    }
    let mut out = x.clone();
    let hd = h.data();
    let dst = out.data_mut();
    for nc in 0..n * c {
        let hr = &hd[nc * t..(nc + 1) * t];
        for fi in 0..f {
            let row = &mut dst[(nc * f + fi) * t..(nc * f + fi + 1) * t];
            for (d, &v) in row.iter_mut().zip(hr) {
                *d = *d + v;
            }
        }
    }
    Ok(out)
}

/// Gradient wrt the broadcast operand (the gradient wrt `x` is `grad_out`).
pub fn freq_broadcast_add_backward<T: Real>(grad_out: &Tensor<T>) -> Tensor<T> {
    let (n, c, f, t) = grad_out.dims4();
    let mut out = Tensor::zeros(&[n, c, 1, t]);
    let g = grad_out.data();
    let dst = out.data_mut();
    for nc in 0..n * c {
        let row = &mut dst[nc * t..(nc + 1) * t];
        for fi in 0..f {
            for (d, &v) in row.iter_mut().zip(&g[(nc * f + fi) * t..(nc * f + fi + 1) * t]) {
                *d = *d + v;
            }
        }
    }
    out
}

/// Per-(sample, channel) keep mask already scaled by `1 / (1 - p)`.
pub fn dropout_mask<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize, c: usize, p: f64) -> Vec<T> {
    let keep = T::from_f64c(1.0 / (1.0 - p));
    (0..n * c)
        .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
        .collect()
}

pub fn channel_dropout_forward<T: Real>(x: &Tensor<T>, mask: &[T]) -> Tensor<T> {
    let (n, c, f, t) = x.dims4();
    assert_eq!(mask.len(), n * c);
    let plane = f * t;
    let mut out = x.clone();
    for (chunk, &m) in out.data_mut().chunks_mut(plane).zip(mask) {
        chunk.iter_mut().for_each(|v| *v = *v * m);
    }
    out
}

pub fn channel_dropout_backward<T: Real>(grad_out: &Tensor<T>, mask: &[T]) -> Tensor<T> {
    channel_dropout_forward(grad_out, mask)
}

/// Drops `left` frames from the start and `right` frames from the end of the
/// time axis.
pub fn time_trim_forward<T: Real>(x: &Tensor<T>, left: usize, right: usize) -> Result<Tensor<T>> {
    let (_, _, _, t) = x.dims4();
    if left + right >= t {
        return Err(Error::Shape(format!(
            "cannot trim {left}+{right} frames from time extent {t}"
        )));
    }
    Ok(x.time_slice(left, t - left - right))
}

pub fn time_trim_backward<T: Real>(grad_out: &Tensor<T>, left: usize, right: usize) -> Tensor<T> {
    let (n, c, f, t) = grad_out.dims4();
    let full = t + left + right;
    let mut out = Tensor::zeros(&[n, c, f, full]);
    for (dst, src) in out
        .data_mut()
        .chunks_mut(full)
        .zip(grad_out.data().chunks(t))
    {
        dst[left..left + t].copy_from_slice(src);
    }
    out
}
