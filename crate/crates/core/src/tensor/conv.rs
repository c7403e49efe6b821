use serde::{Deserialize, Serialize};

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Geometry of a 2-D convolution over (frequency, time).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub dilation: (usize, usize),
    pub padding: (usize, usize),
    pub groups: usize,
}

impl ConvSpec {
    pub fn new(kernel: (usize, usize)) -> Self {
        ConvSpec {
            kernel,
            stride: (1, 1),
            dilation: (1, 1),
            padding: (0, 0),
            groups: 1,
        }
    }

    pub fn stride(mut self, sf: usize, st: usize) -> Self {
        self.stride = (sf, st);
        self
    }

    pub fn dilation(mut self, df: usize, dt: usize) -> Self {
        self.dilation = (df, dt);
        self
    }

    pub fn padding(mut self, pf: usize, pt: usize) -> Self {
        self.padding = (pf, pt);
        self
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.kernel.0 >= 1
            && self.kernel.1 >= 1
            && self.stride.0 >= 1
            && self.stride.1 >= 1
            && self.dilation.0 >= 1
            && self.dilation.1 >= 1
            && self.groups >= 1;
        if !ok {
            return Err(Error::Shape(format!("invalid conv spec {self:?}")));
        }
        Ok(())
    }

    /// Output extents `(freq, time)` for an input of `(freq, time)`.
    pub fn output_extent(&self, freq: usize, time: usize) -> Result<(usize, usize)> {
        let f = conv_out_len(freq, self.kernel.0, self.padding.0, self.dilation.0, self.stride.0)
            .map_err(|e| Error::Shape(format!("frequency axis: {e}")))?;
        let t = conv_out_len(time, self.kernel.1, self.padding.1, self.dilation.1, self.stride.1)
            .map_err(|e| Error::Shape(format!("time axis: {e}")))?;
        Ok((f, t))
    }

    /// Frames of input history a single output frame depends on, minus one.
    pub fn time_span(&self) -> usize {
        self.dilation.1 * (self.kernel.1 - 1)
    }
}

/// `floor((len + 2p - d(k-1) - 1) / s) + 1`, or an error if non-positive.
pub fn conv_out_len(len: usize, k: usize, p: usize, d: usize, s: usize) -> Result<usize, String> {
    let num = (len + 2 * p) as i64 - (d * (k - 1)) as i64 - 1;
    if num < 0 {
        return Err(format!(
            "extent {len} too small for kernel {k} dilation {d} padding {p}"
        ));
    }
    Ok(num as usize / s + 1)
}

fn check_shapes<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<(usize, usize, usize)> {
    spec.validate()?;
    let (_, ci, fi, ti) = input.dims4();
    if weight.dims().len() != 4 {
        return Err(Error::Shape(format!("kernel must be 4-D, got {:?}", weight.dims())));
    }
    let (co, cig, kf, kt) = (
        weight.dims()[0],
        weight.dims()[1],
        weight.dims()[2],
        weight.dims()[3],
    );
    if (kf, kt) != spec.kernel {
        return Err(Error::Shape(format!(
            "kernel dims {:?} disagree with spec kernel {:?}",
            weight.dims(),
            spec.kernel
        )));
    }
    if ci % spec.groups != 0 || co % spec.groups != 0 || cig * spec.groups != ci {
        return Err(Error::Shape(format!(
            "channels in={ci} out={co} incompatible with groups={} kernel {:?}",
            spec.groups,
            weight.dims()
        )));
    }
    let (fo, to) = spec.output_extent(fi, ti)?;
    Ok((co, fo, to))
}

/// Valid output index range along one axis for kernel tap `tap`.
#[inline]
fn valid_range(out_len: usize, in_len: usize, tap_offset: usize, pad: usize, stride: usize) -> (usize, usize) {
    // input index = o * stride + tap_offset - pad, must be in [0, in_len)
    let lo = if pad > tap_offset {
        (pad - tap_offset).div_ceil(stride)
    } else {
        0
    };
    let hi_num = in_len as i64 - 1 + pad as i64 - tap_offset as i64;
    if hi_num < 0 {
        return (0, 0);
    }
    let hi = ((hi_num as usize) / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

/// Cross-correlation with grouped channels, stride, dilation and zero padding.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let (co, fo, to) = check_shapes(input, weight, spec)?;
    let (n, ci, fi, ti) = input.dims4();
    if let Some(b) = bias {
        if b.len() != co {
            return Err(Error::Shape(format!("bias length {} != out channels {co}", b.len())));
        }
    }
    let g = spec.groups;
    let (cig, cog) = (ci / g, co / g);
    let (kf, kt) = spec.kernel;
    let (sf, st) = spec.stride;
    let (df, dt) = spec.dilation;
    let (pf, pt) = spec.padding;

    let mut out = Tensor::zeros(&[n, co, fo, to]);
    let x = input.data();
    let w = weight.data();
    let y = out.data_mut();
    for b in 0..n {
        for oc in 0..co {
            let grp = oc / cog;
            let ybase = (b * co + oc) * fo * to;
            if let Some(bias) = bias {
                let bv = bias.data()[oc];
                y[ybase..ybase + fo * to].iter_mut().for_each(|v| *v = bv);
            }
            for icg in 0..cig {
                let ic = grp * cig + icg;
                let xbase = (b * ci + ic) * fi * ti;
                for a in 0..kf {
                    let (of_lo, of_hi) = valid_range(fo, fi, a * df, pf, sf);
                    for k in 0..kt {
                        let wv = w[((oc * cig + icg) * kf + a) * kt + k];
                        let (ot_lo, ot_hi) = valid_range(to, ti, k * dt, pt, st);
                        if ot_lo >= ot_hi {
                            continue;
                        }
                        for of in of_lo..of_hi {
                            let fin = of * sf + a * df - pf;
                            let xrow = &x[xbase + fin * ti..xbase + (fin + 1) * ti];
                            let yrow = &mut y[ybase + of * to..ybase + (of + 1) * to];
                            if st == 1 {
                                let off = ot_lo + k * dt - pt;
                                let xs = &xrow[off..off + (ot_hi - ot_lo)];
                                for (yv, &xv) in yrow[ot_lo..ot_hi].iter_mut().zip(xs) {
                                    *yv = *yv + wv * xv;
                                }
                            } else {
                                for ot in ot_lo..ot_hi {
                                    yrow[ot] = yrow[ot] + wv * xrow[ot * st + k * dt - pt];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T: Real> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Exact adjoint of [`conv2d_forward`]. The bias gradient is always returned;
/// callers without a bias ignore it.
pub fn conv2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<ConvGrads<T>> {
    let (co, fo, to) = check_shapes(input, weight, spec)?;
    let (n, ci, fi, ti) = input.dims4();
    if grad_out.dims() != [n, co, fo, to] {
        return Err(Error::Shape(format!(
            "grad_out {:?} does not match forward output {:?}",
            grad_out.dims(),
            [n, co, fo, to]
        )));
    }
    let g = spec.groups;
    let (cig, cog) = (ci / g, co / g);
    let (kf, kt) = spec.kernel;
    let (sf, st) = spec.stride;
    let (df, dt) = spec.dilation;
    let (pf, pt) = spec.padding;

    let mut gin = Tensor::zeros(input.dims());
    let mut gw = Tensor::zeros(weight.dims());
    let mut gb = Tensor::zeros(&[co]);
    let x = input.data();
    let w = weight.data();
    let gy = grad_out.data();
    {
        let gx = gin.data_mut();
        let gwd = gw.data_mut();
        let gbd = gb.data_mut();
        for b in 0..n {
            for oc in 0..co {
                let grp = oc / cog;
                let ybase = (b * co + oc) * fo * to;
                gbd[oc] = gbd[oc] + gy[ybase..ybase + fo * to].iter().copied().sum::<T>();
                for icg in 0..cig {
                    let ic = grp * cig + icg;
                    let xbase = (b * ci + ic) * fi * ti;
                    for a in 0..kf {
                        let (of_lo, of_hi) = valid_range(fo, fi, a * df, pf, sf);
                        for k in 0..kt {
                            let widx = ((oc * cig + icg) * kf + a) * kt + k;
                            let wv = w[widx];
                            let (ot_lo, ot_hi) = valid_range(to, ti, k * dt, pt, st);
                            if ot_lo >= ot_hi {
                                continue;
                            }
                            let mut acc = T::zero();
                            for of in of_lo..of_hi {
                                let fin = of * sf + a * df - pf;
                                let yrow = &gy[ybase + of * to..ybase + (of + 1) * to];
                                let xr = xbase + fin * ti;
                                if st == 1 {
                                    let off = ot_lo + k * dt - pt;
                                    let xs = &x[xr + off..xr + off + (ot_hi - ot_lo)];
                                    let gxs = &mut gx[xr + off..xr + off + (ot_hi - ot_lo)];
                                    for ((gxv, &xv), &gv) in
                                        gxs.iter_mut().zip(xs).zip(&yrow[ot_lo..ot_hi])
                                    {
                                        acc = acc + gv * xv;
                                        *gxv = *gxv + wv * gv;
                                    }
                                } else {
                                    for ot in ot_lo..ot_hi {
                                        let xi = xr + ot * st + k * dt - pt;
                                        acc = acc + yrow[ot] * x[xi];
                                        gx[xi] = gx[xi] + wv * yrow[ot];
                                    }
                                }
                            }
                            gwd[widx] = gwd[widx] + acc;
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: gin,
        weight: gw,
        bias: gb,
    })
}
