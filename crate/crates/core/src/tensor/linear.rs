use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Conv2dGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

struct ConvGeometry {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeometry {
    fn new<T: Scalar>(
        input: &Tensor<T>,
        weights: &Tensor<T>,
        pad: (usize, usize),
    ) -> Result<Self> {
        input.expect_ndim(3, "conv2d input")?;
        weights.expect_ndim(4, "conv2d weights")?;
        let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let ws = weights.shape();
        let (c_out, kh, kw) = (ws[0], ws[2], ws[3]);
        let (ph, pw) = pad;
        if ws[1] != c_in {
            return Err(Error::ShapeMismatch(format!(
                "conv2d: weights expect {} input channels, input has {c_in}",
                ws[1]
            )));
        }
        if kh > h + 2 * ph || kw > w + 2 * pw {
            return Err(Error::ShapeMismatch(format!(
                "conv2d: kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * ph,
                w + 2 * pw
            )));
        }
        Ok(Self {
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            ph,
            pw,
            oh: h + 2 * ph - kh + 1,
            ow: w + 2 * pw - kw + 1,
        })
    }

    /// Output columns `ox` whose input column `ox + kx - pw` is inside the image.
    #[inline]
    fn ox_range(&self, kx: usize) -> (usize, usize) {
        let lo = self.pw.saturating_sub(kx).min(self.ow);
        let hi = (self.w + self.pw).saturating_sub(kx).min(self.ow);
        (lo, hi.max(lo))
    }

    /// Output rows `oy` whose input row `oy + ky - ph` is inside the image.
    #[inline]
    fn oy_range(&self, ky: usize) -> (usize, usize) {
        let lo = self.ph.saturating_sub(ky).min(self.oh);
        let hi = (self.h + self.ph).saturating_sub(ky).min(self.oh);
        (lo, hi.max(lo))
    }

    /// Single-column input and kernel: the convolution is 1-D along rows.
    #[inline]
    fn is_column(&self) -> bool {
        self.w == 1 && self.kw == 1 && self.pw == 0
    }

    #[inline]
    fn iy(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = (oy + ky).checked_sub(self.ph)?;
        (iy < self.h).then_some(iy)
    }
}

/// Cross-correlation of `input` `[C_in, H, W]` with `weights`
/// `[C_out, C_in, kH, kW]` over the zero-padded input. Output is
/// `[C_out, H + 2·pad_h − kH + 1, W + 2·pad_w − kW + 1]`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    pad: (usize, usize),
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(input, weights, pad)?;
    if let Some(b) = bias {
        b.expect_shape(&[g.c_out], "conv2d bias")?;
    }
    let x = input.data();
    let wt = weights.data();
    let plane = g.oh * g.ow;
    let mut out = vec![T::zero(); g.c_out * plane];
    for co in 0..g.c_out {
        let o = &mut out[co * plane..(co + 1) * plane];
        if let Some(b) = bias {
            o.fill(b.data()[co]);
        }
        for ci in 0..g.c_in {
            let xin = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            if g.is_column() {
                let wrow = &wt[(co * g.c_in + ci) * g.kh..(co * g.c_in + ci + 1) * g.kh];
                for (ky, &wv) in wrow.iter().enumerate() {
                    let (lo, hi) = g.oy_range(ky);
                    if lo == hi {
                        continue;
                    }
                    let irow = &xin[lo + ky - g.ph..hi + ky - g.ph];
                    for (ov, &iv) in o[lo..hi].iter_mut().zip(irow) {
                        *ov = *ov + wv * iv;
                    }
                }
                continue;
            }
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let wv = wt[((co * g.c_in + ci) * g.kh + ky) * g.kw + kx];
                    let (lo, hi) = g.ox_range(kx);
                    if lo == hi {
                        continue;
                    }
                    for oy in 0..g.oh {
                        let Some(iy) = g.iy(oy, ky) else { continue };
                        let orow = &mut o[oy * g.ow + lo..oy * g.ow + hi];
                        let irow = &xin[iy * g.w + lo + kx - g.pw..iy * g.w + hi + kx - g.pw];
                        for (ov, &iv) in orow.iter_mut().zip(irow) {
                            *ov = *ov + wv * iv;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![g.c_out, g.oh, g.ow], out)?.check_finite("conv2d")
}

/// Exact gradients of [`conv2d`] with respect to input, weights and bias.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    with_bias: bool,
    pad: (usize, usize),
    grad_out: &Tensor<T>,
) -> Result<Conv2dGrads<T>> {
    let g = ConvGeometry::new(input, weights, pad)?;
    grad_out.expect_shape(&[g.c_out, g.oh, g.ow], "conv2d grad_out")?;
    let x = input.data();
    let wt = weights.data();
    let go = grad_out.data();
    let plane = g.oh * g.ow;
    let mut gx = vec![T::zero(); x.len()];
    let mut gw = vec![T::zero(); wt.len()];
    for co in 0..g.c_out {
        let gplane = &go[co * plane..(co + 1) * plane];
        for ci in 0..g.c_in {
            let xin = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            let gin = &mut gx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            if g.is_column() {
                for ky in 0..g.kh {
                    let widx = (co * g.c_in + ci) * g.kh + ky;
                    let wv = wt[widx];
                    let (lo, hi) = g.oy_range(ky);
                    if lo == hi {
                        continue;
                    }
                    let grow = &gplane[lo..hi];
                    let span = lo + ky - g.ph..hi + ky - g.ph;
                    gw[widx] = grow
                        .iter()
                        .zip(&xin[span.clone()])
                        .fold(T::zero(), |a, (&gv, &iv)| a + gv * iv);
                    for (gi, &gv) in gin[span].iter_mut().zip(grow) {
                        *gi = *gi + wv * gv;
                    }
                }
                continue;
            }
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let widx = ((co * g.c_in + ci) * g.kh + ky) * g.kw + kx;
                    let wv = wt[widx];
                    let (lo, hi) = g.ox_range(kx);
                    if lo == hi {
                        continue;
                    }
                    let mut acc = T::zero();
                    for oy in 0..g.oh {
                        let Some(iy) = g.iy(oy, ky) else { continue };
                        let grow = &gplane[oy * g.ow + lo..oy * g.ow + hi];
                        let base = iy * g.w + lo + kx - g.pw;
                        let irow = &xin[base..base + (hi - lo)];
                        for (&gv, &iv) in grow.iter().zip(irow) {
                            acc = acc + gv * iv;
                        }
                        let girow = &mut gin[base..base + (hi - lo)];
                        for (gi, &gv) in girow.iter_mut().zip(grow) {
                            *gi = *gi + wv * gv;
                        }
                    }
                    gw[widx] = acc;
                }
            }
        }
    }
    let bias = with_bias.then(|| {
        let b = (0..g.c_out)
            .map(|co| go[co * plane..(co + 1) * plane].iter().copied().sum())
            .collect();
        Tensor::from_vec(b)
    });
    Ok(Conv2dGrads {
        input: Tensor::new(input.shape().to_vec(), gx)?,
        weights: Tensor::new(weights.shape().to_vec(), gw)?,
        bias,
    })
}

/// Affine map `weights · input + bias` for `input` `[N]`, `weights` `[M, N]`.
pub fn dense<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let (m, n) = dense_dims(input, weights)?;
    if let Some(b) = bias {
        b.expect_shape(&[m], "dense bias")?;
    }
    let x = input.data();
    let out = weights
        .data()
        .chunks_exact(n)
        .enumerate()
        .map(|(i, row)| {
            let dot = row.iter().zip(x).fold(T::zero(), |a, (&w, &v)| a + w * v);
            match bias {
                Some(b) => dot + b.data()[i],
                None => dot,
            }
        })
        .collect();
    Tensor::new(vec![m], out)?.check_finite("dense")
}

pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    with_bias: bool,
    grad_out: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    let (m, n) = dense_dims(input, weights)?;
    grad_out.expect_shape(&[m], "dense grad_out")?;
    let x = input.data();
    let go = grad_out.data();
    let mut gx = vec![T::zero(); n];
    let mut gw = Vec::with_capacity(m * n);
    for (row, &gv) in weights.data().chunks_exact(n).zip(go) {
        for (j, &w) in row.iter().enumerate() {
            gx[j] = gx[j] + w * gv;
        }
        gw.extend(x.iter().map(|&v| gv * v));
    }
    Ok(DenseGrads {
        input: Tensor::new(vec![n], gx)?,
        weights: Tensor::new(vec![m, n], gw)?,
        bias: with_bias.then(|| grad_out.clone()),
    })
}

fn dense_dims<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize)> {
    input.expect_ndim(1, "dense input")?;
    weights.expect_ndim(2, "dense weights")?;
    let (m, n) = (weights.shape()[0], weights.shape()[1]);
    if input.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "dense: weights [{m}, {n}] applied to input of length {}",
            input.len()
        )));
    }
    Ok((m, n))
}
