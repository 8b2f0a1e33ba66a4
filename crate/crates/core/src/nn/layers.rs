//! Batched forward and backward kernels.
//!
//! Activations are `(batch, features)` matrices; image features are laid out
//! `(channels, height, width)` row-major. Convolution weights are
//! `(filters, channels, k, k)` followed by one bias per filter and run as
//! im2col plus a matrix product. Dense weights are `(outputs, inputs)`
//! followed by one bias per output.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};

/// Geometry of one 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvDims {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kernel: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvDims {
    pub fn weight_len(&self) -> usize {
        self.filters * self.patch_len()
    }

    fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn out_len(&self) -> usize {
        self.out_height * self.out_width
    }

    /// Range of output columns `x` whose input column `x + kx - pad_left` is inside the image.
    #[inline]
    fn x_range(&self, kx: usize) -> (usize, usize) {
        let lo = self.pad_left.saturating_sub(kx);
        let hi = (self.width + self.pad_left).saturating_sub(kx).min(self.out_width);
        (lo, hi.max(lo))
    }

    #[inline]
    fn input_row(&self, y: usize, ky: usize) -> Option<usize> {
        let iy = (y + ky).checked_sub(self.pad_top)?;
        (iy < self.height).then_some(iy)
    }

    /// Unfolds every sample into `cols`, shaped `(C*k*k, batch*OH*OW)`.
    fn im2col(&self, x: ArrayView2<'_, f64>, cols: &mut [f64]) {
        let (k, hw, ohw) = (self.kernel, self.height * self.width, self.out_len());
        let stride = x.nrows() * ohw;
        cols.fill(0.0);
        for (b, sample) in x.outer_iter().enumerate() {
            let sample = sample.as_slice().expect("row-major activations");
            for ci in 0..self.channels {
                let img = &sample[ci * hw..(ci + 1) * hw];
                for ky in 0..k {
                    for kx in 0..k {
                        let r = (ci * k + ky) * k + kx;
                        let dst = &mut cols[r * stride + b * ohw..r * stride + (b + 1) * ohw];
                        let (x0, x1) = self.x_range(kx);
                        if x0 >= x1 {
                            continue;
                        }
                        for y in 0..self.out_height {
                            let Some(iy) = self.input_row(y, ky) else { continue };
                            let src = iy * self.width + x0 + kx - self.pad_left;
                            dst[y * self.out_width + x0..y * self.out_width + x1]
                                .copy_from_slice(&img[src..src + (x1 - x0)]);
                        }
                    }
                }
            }
        }
    }

    /// Adds the columns back onto their image positions.
    fn col2im(&self, cols: &[f64], mut gx: ArrayViewMut2<'_, f64>) {
        let (k, hw, ohw) = (self.kernel, self.height * self.width, self.out_len());
        let stride = gx.nrows() * ohw;
        for (b, mut sample) in gx.outer_iter_mut().enumerate() {
            let sample = sample.as_slice_mut().expect("row-major gradients");
            for ci in 0..self.channels {
                let img = &mut sample[ci * hw..(ci + 1) * hw];
                for ky in 0..k {
                    for kx in 0..k {
                        let r = (ci * k + ky) * k + kx;
                        let src = &cols[r * stride + b * ohw..r * stride + (b + 1) * ohw];
                        let (x0, x1) = self.x_range(kx);
                        if x0 >= x1 {
                            continue;
                        }
                        for y in 0..self.out_height {
                            let Some(iy) = self.input_row(y, ky) else { continue };
                            let dst = iy * self.width + x0 + kx - self.pad_left;
                            let row = &src[y * self.out_width + x0..y * self.out_width + x1];
                            for (t, &g) in img[dst..dst + (x1 - x0)].iter_mut().zip(row) {
                                *t += g;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Samples per im2col buffer, keeping it near `COLS_BUDGET` values.
fn conv_chunk(d: &ConvDims) -> usize {
    const COLS_BUDGET: usize = 1 << 19;
    (COLS_BUDGET / (d.patch_len() * d.out_len()).max(1)).max(1)
}

pub(crate) fn conv_forward(d: &ConvDims, params: &[f64], x: ArrayView2<'_, f64>) -> Array2<f64> {
    let ohw = d.out_len();
    let (weights, bias) = params.split_at(d.weight_len());
    let w = ArrayView2::from_shape((d.filters, d.patch_len()), weights).expect("sized");
    let mut out = Array2::zeros((x.nrows(), d.filters * ohw));
    let chunk = conv_chunk(d);
    let mut cols = Vec::new();
    for (xc, mut oc) in x.axis_chunks_iter(Axis(0), chunk).zip(out.axis_chunks_iter_mut(Axis(0), chunk)) {
        let n = xc.nrows();
        cols.resize(d.patch_len() * n * ohw, 0.0);
        d.im2col(xc, &mut cols);
        let cv = ArrayView2::from_shape((d.patch_len(), n * ohw), &cols).expect("sized");
        let y = w.dot(&cv);
        for (b, mut row) in oc.outer_iter_mut().enumerate() {
            let row = row.as_slice_mut().expect("contiguous");
            for f in 0..d.filters {
                let src = &y.row(f).to_slice().expect("contiguous")[b * ohw..(b + 1) * ohw];
                for (o, &v) in row[f * ohw..(f + 1) * ohw].iter_mut().zip(src) {
                    *o = v + bias[f];
                }
            }
        }
    }
    out
}

/// Accumulates parameter gradients into `grads`; returns the input gradient
/// when asked.
pub(crate) fn conv_backward(
    d: &ConvDims,
    params: &[f64],
    x: ArrayView2<'_, f64>,
    grad_out: ArrayView2<'_, f64>,
    grads: &mut [f64],
    want_input: bool,
) -> Option<Array2<f64>> {
    let (ohw, pl) = (d.out_len(), d.patch_len());
    let (weights, _) = params.split_at(d.weight_len());
    let w = ArrayView2::from_shape((d.filters, pl), weights).expect("sized");
    let (gw, gb) = grads.split_at_mut(d.weight_len());
    let mut gw = ArrayViewMut2::from_shape((d.filters, pl), gw).expect("sized");
    let mut gx = want_input.then(|| Array2::zeros(x.raw_dim()));
    let chunk = conv_chunk(d);
    let mut cols = Vec::new();
    for (ci, (xc, gc)) in x
        .axis_chunks_iter(Axis(0), chunk)
        .zip(grad_out.axis_chunks_iter(Axis(0), chunk))
        .enumerate()
    {
        let n = xc.nrows();
        // Regroup the output gradient by filter: (F, n*OH*OW).
        let mut g = Array2::<f64>::zeros((d.filters, n * ohw));
        for (b, row) in gc.outer_iter().enumerate() {
            let row = row.to_slice().expect("contiguous");
            for f in 0..d.filters {
                let src = &row[f * ohw..(f + 1) * ohw];
                g.row_mut(f).as_slice_mut().expect("contiguous")[b * ohw..(b + 1) * ohw].copy_from_slice(src);
                gb[f] += src.iter().sum::<f64>();
            }
        }
        cols.resize(pl * n * ohw, 0.0);
        d.im2col(xc, &mut cols);
        let cv = ArrayView2::from_shape((pl, n * ohw), &cols).expect("sized");
        general_mat_mul(1.0, &g, &cv.t(), 1.0, &mut gw);
        if let Some(gx) = gx.as_mut() {
            let gcols = w.t().dot(&g);
            let rows = gx.slice_mut(ndarray::s![ci * chunk..ci * chunk + n, ..]);
            d.col2im(gcols.as_slice().expect("standard layout"), rows);
        }
    }
    gx
}

/// 2x2 max pooling with stride 2; odd trailing rows and columns are dropped.
pub(crate) fn maxpool_forward(channels: usize, height: usize, width: usize, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let (oh, ow) = (height / 2, width / 2);
    let mut out = Array2::zeros((x.nrows(), channels * oh * ow));
    for (src, mut dst) in x.outer_iter().zip(out.outer_iter_mut()) {
        let src = src.to_slice().expect("contiguous");
        for c in 0..channels {
            let in_c = &src[c * height * width..];
            for y in 0..oh {
                for xx in 0..ow {
                    let i = (2 * y) * width + 2 * xx;
                    let m = in_c[i].max(in_c[i + 1]).max(in_c[i + width]).max(in_c[i + width + 1]);
                    dst[(c * oh + y) * ow + xx] = m;
                }
            }
        }
    }
    out
}

/// Routes each output gradient to the first maximal input of its window.
pub(crate) fn maxpool_backward(
    channels: usize,
    height: usize,
    width: usize,
    x: ArrayView2<'_, f64>,
    grad_out: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let (oh, ow) = (height / 2, width / 2);
    let mut gx = Array2::zeros(x.raw_dim());
    for ((input, g), mut gi) in x.outer_iter().zip(grad_out.outer_iter()).zip(gx.outer_iter_mut()) {
        let input = input.to_slice().expect("contiguous");
        let gi = gi.as_slice_mut().expect("contiguous");
        for c in 0..channels {
            let off = c * height * width;
            for y in 0..oh {
                for xx in 0..ow {
                    let i = off + (2 * y) * width + 2 * xx;
                    let mut best = i;
                    for j in [i + 1, i + width, i + width + 1] {
                        if input[j] > input[best] {
                            best = j;
                        }
                    }
                    gi[best] += g[(c * oh + y) * ow + xx];
                }
            }
        }
    }
    gx
}

pub(crate) fn dense_forward(inputs: usize, outputs: usize, params: &[f64], x: ArrayView2<'_, f64>) -> Array2<f64> {
    let (w, b) = params.split_at(inputs * outputs);
    let w = ArrayView2::from_shape((outputs, inputs), w).expect("sized");
    let mut y = x.dot(&w.t());
    for mut row in y.outer_iter_mut() {
        row.iter_mut().zip(b).for_each(|(v, &bias)| *v += bias);
    }
    y
}

pub(crate) fn dense_backward(
    inputs: usize,
    outputs: usize,
    params: &[f64],
    x: ArrayView2<'_, f64>,
    grad_out: ArrayView2<'_, f64>,
    grads: &mut [f64],
    want_input: bool,
) -> Option<Array2<f64>> {
    let (w, _) = params.split_at(inputs * outputs);
    let (gw, gb) = grads.split_at_mut(inputs * outputs);
    let mut gw = ArrayViewMut2::from_shape((outputs, inputs), gw).expect("sized");
    general_mat_mul(1.0, &grad_out.t(), &x, 1.0, &mut gw);
    for (t, s) in gb.iter_mut().zip(grad_out.sum_axis(Axis(0))) {
        *t += s;
    }
    want_input.then(|| {
        let w = ArrayView2::from_shape((outputs, inputs), w).expect("sized");
        grad_out.dot(&w)
    })
}
