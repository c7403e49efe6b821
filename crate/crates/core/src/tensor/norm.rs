use super::{Real, Tensor};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Normalize with batch statistics over (batch, freq, time).
    Train,
    /// Normalize with running statistics.
    Infer,
}

/// Saved state from a train-mode normalization, consumed by the backward pass
/// and by the running-statistics update.
#[derive(Debug, Clone)]
pub struct NormCache<T: Real> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub batch_mean: Vec<T>,
    /// Unbiased variance, used for the running estimate.
    pub batch_var: Vec<T>,
}

impl<T: Real> NormCache<T> {
    /// `running = (1 - momentum) * running + momentum * batch`.
    pub fn update_running(&self, running_mean: &mut [T], running_var: &mut [T]) {
        let m = T::from_f64c(BN_MOMENTUM);
        let keep = T::one() - m;
        for (r, &b) in running_mean.iter_mut().zip(&self.batch_mean) {
            *r = keep * *r + m * b;
        }
        for (r, &b) in running_var.iter_mut().zip(&self.batch_var) {
            *r = keep * *r + m * b;
        }
    }
}

fn check_params<T: Real>(c: usize, params: &[&Tensor<T>]) -> Result<()> {
    for p in params {
        if p.len() != c {
            return Err(Error::Shape(format!(
                "norm parameter length {} != channel extent {c}",
                p.len()
            )));
        }
    }
    Ok(())
}

/// Batch normalization over channels of a `[n, c, f, t]` tensor.
///
/// Train mode returns a cache; infer mode uses `running_mean`/`running_var`
/// and returns `None`.
pub fn batchnorm_forward<T: Real>(
    input: &Tensor<T>,
    scale: &Tensor<T>,
    shift: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    mode: NormMode,
) -> Result<(Tensor<T>, Option<NormCache<T>>)> {
    let (n, c, f, t) = input.dims4();
    check_params(c, &[scale, shift, running_mean, running_var])?;
    let plane = f * t;
    let eps = T::from_f64c(BN_EPS);
    let x = input.data();
    let mut out = Tensor::zeros(input.dims());

    match mode {
        NormMode::Infer => {
            let y = out.data_mut();
            for ch in 0..c {
                let inv = T::one() / (running_var.data()[ch] + eps).sqrt();
                let mu = running_mean.data()[ch];
                let (g, b) = (scale.data()[ch], shift.data()[ch]);
                for bi in 0..n {
                    let base = (bi * c + ch) * plane;
                    for i in base..base + plane {
                        y[i] = (x[i] - mu) * inv * g + b;
                    }
                }
            }
            Ok((out, None))
        }
        NormMode::Train => {
            let count = n * plane;
            if count == 0 {
                return Err(Error::Shape("batchnorm over an empty tensor".into()));
            }
            let m = T::from_usize(count).unwrap();
            let mut xhat = Tensor::zeros(input.dims());
            let mut inv_std = vec![T::zero(); c];
            let mut batch_mean = vec![T::zero(); c];
            let mut batch_var = vec![T::zero(); c];
            for ch in 0..c {
                let mut sum = T::zero();
                for bi in 0..n {
                    let base = (bi * c + ch) * plane;
                    sum = sum + x[base..base + plane].iter().copied().sum::<T>();
                }
                let mean = sum / m;
                let mut sq = T::zero();
                for bi in 0..n {
                    let base = (bi * c + ch) * plane;
                    sq = sq
                        + x[base..base + plane]
                            .iter()
                            .map(|&v| (v - mean) * (v - mean))
                            .sum::<T>();
                }
                let var = sq / m;
                let inv = T::one() / (var + eps).sqrt();
                let (g, b) = (scale.data()[ch], shift.data()[ch]);
                let xh = xhat.data_mut();
                let y = out.data_mut();
                for bi in 0..n {
                    let base = (bi * c + ch) * plane;
                    for i in base..base + plane {
                        let h = (x[i] - mean) * inv;
                        xh[i] = h;
                        y[i] = h * g + b;
                    }
                }
                inv_std[ch] = inv;
                batch_mean[ch] = mean;
                batch_var[ch] = if count > 1 {
                    sq / T::from_usize(count - 1).unwrap()
                } else {
                    var
                };
            }
            Ok((
                out,
                Some(NormCache {
                    xhat,
                    inv_std,
                    batch_mean,
                    batch_var,
                }),
            ))
        }
    }
}

/// Gradients `(input, scale, shift)` of a train-mode batch normalization.
pub fn batchnorm_backward<T: Real>(
    grad_out: &Tensor<T>,
    cache: &NormCache<T>,
    scale: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    if grad_out.dims() != cache.xhat.dims() {
        return Err(Error::Shape(format!(
            "grad {:?} vs cached {:?}",
            grad_out.dims(),
            cache.xhat.dims()
        )));
    }
    let (n, c, f, t) = grad_out.dims4();
    let plane = f * t;
    let m = T::from_usize(n * plane).unwrap();
    let gy = grad_out.data();
    let xh = cache.xhat.data();
    let mut gx = Tensor::zeros(grad_out.dims());
    let mut gscale = Tensor::zeros(&[c]);
    let mut gshift = Tensor::zeros(&[c]);
    for ch in 0..c {
        let mut sg = T::zero();
        let mut sgx = T::zero();
        for bi in 0..n {
            let base = (bi * c + ch) * plane;
            for i in base..base + plane {
                sg = sg + gy[i];
                sgx = sgx + gy[i] * xh[i];
            }
        }
        gscale.data_mut()[ch] = sgx;
        gshift.data_mut()[ch] = sg;
        let k = scale.data()[ch] * cache.inv_std[ch] / m;
        let out = gx.data_mut();
        for bi in 0..n {
            let base = (bi * c + ch) * plane;
            for i in base..base + plane {
                out[i] = k * (m * gy[i] - sg - xh[i] * sgx);
            }
        }
    }
    Ok((gx, gscale, gshift))
}

fn split_bands<T: Real>(input: &Tensor<T>, groups: usize) -> Result<Tensor<T>> {
    let (n, c, f, t) = input.dims4();
    if groups == 0 || f % groups != 0 {
        return Err(Error::Shape(format!(
            "frequency extent {f} not divisible into {groups} sub-bands"
        )));
    }
    input.clone().reshape(&[n, c * groups, f / groups, t])
}

/// Batch normalization applied separately to `groups` contiguous frequency
/// bands of every channel. Parameters are indexed `channel * groups + band`.
pub fn subspectral_norm_forward<T: Real>(
    input: &Tensor<T>,
    scale: &Tensor<T>,
    shift: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    groups: usize,
    mode: NormMode,
) -> Result<(Tensor<T>, Option<NormCache<T>>)> {
    let banded = split_bands(input, groups)?;
    let (y, cache) = batchnorm_forward(&banded, scale, shift, running_mean, running_var, mode)?;
    Ok((y.reshape(input.dims())?, cache))
}

pub fn subspectral_norm_backward<T: Real>(
    grad_out: &Tensor<T>,
    cache: &NormCache<T>,
    scale: &Tensor<T>,
    groups: usize,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let banded = split_bands(grad_out, groups)?;
    let (gx, gs, gb) = batchnorm_backward(&banded, cache, scale)?;
    Ok((gx.reshape(grad_out.dims())?, gs, gb))
}
