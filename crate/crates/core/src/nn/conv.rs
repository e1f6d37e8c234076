//! 2-D cross-correlation via im2col + GEMM.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Geometry of one convolution layer. Kernels are square and odd.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.padding - self.kernel) / self.stride + 1,
            (w + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    pub fn patch_len(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.out_c, self.in_c, self.kernel, self.kernel]
    }
}

/// Unfolds `x` (`[C, H, W]`) into `[C*k*k, Ho*Wo]` columns.
pub(crate) fn im2col<T: Scalar>(x: &[T], h: usize, w: usize, g: &ConvGeom, cols: &mut Vec<T>) {
    let (ho, wo) = g.out_dims(h, w);
    let k = g.kernel;
    cols.clear();
    cols.resize(g.patch_len() * ho * wo, T::zero());
    let pad = g.padding as isize;
    for c in 0..g.in_c {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ki) as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kj) as isize - pad;
                        if ix >= 0 && ix < w as isize {
                            dst[oy * wo + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into `dx` (`[C, H, W]`).
pub(crate) fn col2im<T: Scalar>(cols: &[T], h: usize, w: usize, g: &ConvGeom, dx: &mut [T]) {
    let (ho, wo) = g.out_dims(h, w);
    let k = g.kernel;
    let pad = g.padding as isize;
    for c in 0..g.in_c {
        let plane = &mut dx[c * h * w..(c + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ki) as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kj) as isize - pad;
                        if ix >= 0 && ix < w as isize {
                            let v = plane[iy as usize * w + ix as usize] + src[oy * wo + ox];
                            plane[iy as usize * w + ix as usize] = v;
                        }
                    }
                }
            }
        }
    }
}

/// One sample: `y = W * cols + b`. `cols` receives the unfolded input, which
/// the backward pass reuses.
pub(crate) fn forward_one<T: Scalar>(
    g: &ConvGeom,
    weight: &[T],
    bias: &[T],
    x: &[T],
    h: usize,
    w: usize,
    cols: &mut Vec<T>,
) -> Vec<T> {
    let (ho, wo) = g.out_dims(h, w);
    let n = ho * wo;
    im2col(x, h, w, g, cols);
    let mut y = vec![T::zero(); g.out_c * n];
    for (o, row) in y.chunks_exact_mut(n).enumerate() {
        row.fill(bias[o]);
    }
    T::gemm(
        g.out_c,
        g.patch_len(),
        n,
        T::one(),
        weight,
        false,
        cols,
        false,
        T::one(),
        &mut y,
    );
    y
}

/// One sample backward. Accumulates into `dweight`/`dbias`; returns `dx`
/// when `need_dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward_one<T: Scalar>(
    g: &ConvGeom,
    weight: &[T],
    dy: &[T],
    cols: &[T],
    h: usize,
    w: usize,
    dweight: &mut [T],
    dbias: &mut [T],
    need_dx: bool,
) -> Option<Vec<T>> {
    let (ho, wo) = g.out_dims(h, w);
    let n = ho * wo;
    let p = g.patch_len();
    T::gemm(
        g.out_c,
        n,
        p,
        T::one(),
        dy,
        false,
        cols,
        true,
        T::one(),
        dweight,
    );
    for (o, row) in dy.chunks_exact(n).enumerate() {
        dbias[o] = dbias[o] + row.iter().copied().sum::<T>();
    }
    if !need_dx {
        return None;
    }
    let mut dcols = vec![T::zero(); p * n];
    T::gemm(
        p,
        g.out_c,
        n,
        T::one(),
        weight,
        true,
        dy,
        false,
        T::zero(),
        &mut dcols,
    );
    let mut dx = vec![T::zero(); g.in_c * h * w];
    col2im(&dcols, h, w, g, &mut dx);
    Some(dx)
}

/// Cross-correlation of `input` (`[N, C, H, W]`) with `weights`
/// (`[O, C, k, k]`, `k` in {1, 3}) and zero padding.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &[T],
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let &[n, c, h, w] = input.shape() else {
        return Err(Error::shape(format!(
            "conv input must be [N, C, H, W], got {:?}",
            input.shape()
        )));
    };
    let &[o, wc, kh, kw] = weights.shape() else {
        return Err(Error::shape(format!(
            "conv weights must be [O, C, k, k], got {:?}",
            weights.shape()
        )));
    };
    if wc != c {
        return Err(Error::shape(format!(
            "input has {c} channels, weights expect {wc}"
        )));
    }
    if kh != kw || !(kh == 1 || kh == 3) {
        return Err(Error::shape(format!("unsupported kernel {kh}x{kw}")));
    }
    if bias.len() != o {
        return Err(Error::shape(format!(
            "bias has {} entries for {o} filters",
            bias.len()
        )));
    }
    if stride == 0 || h + 2 * padding < kh || w + 2 * padding < kw {
        return Err(Error::shape(
            "kernel does not fit the padded input".to_string(),
        ));
    }
    let g = ConvGeom {
        in_c: c,
        out_c: o,
        kernel: kh,
        stride,
        padding,
    };
    let (ho, wo) = g.out_dims(h, w);
    let mut out = Vec::with_capacity(n * o * ho * wo);
    let mut cols = Vec::new();
    for i in 0..n {
        out.extend(forward_one(
            &g,
            weights.data(),
            bias,
            input.item(i),
            h,
            w,
            &mut cols,
        ));
    }
    Tensor::new(vec![n, o, ho, wo], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_kernel_counts_neighbours() {
        let x = Tensor::new(vec![1, 1, 3, 3], vec![1.0f64; 9]).unwrap();
        let k = Tensor::new(vec![1, 1, 3, 3], vec![1.0f64; 9]).unwrap();
        let y = conv2d_forward(&x, &k, &[0.0], 1, 1).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn identity_kernel() {
        let data: Vec<f64> = (0..2 * 2 * 4 * 5).map(|i| i as f64 * 0.1).collect();
        let x = Tensor::new(vec![2, 2, 4, 5], data).unwrap();
        let k = Tensor::new(vec![2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(conv2d_forward(&x, &k, &[0.0, 0.0], 1, 0).unwrap(), x);
    }

    #[test]
    fn zero_weights_give_bias() {
        let x = Tensor::new(vec![1, 1, 4, 4], vec![3.0f32; 16]).unwrap();
        let k = Tensor::zeros(vec![2, 1, 3, 3]);
        let y = conv2d_forward(&x, &k, &[0.5, -1.0], 1, 1).unwrap();
        assert!(y.item(0)[..16].iter().all(|&v| v == 0.5));
        assert!(y.item(0)[16..].iter().all(|&v| v == -1.0));
    }

    #[test]
    fn stride_two_output_dims() {
        let x = Tensor::<f32>::zeros(vec![1, 1, 9, 8]);
        let k = Tensor::zeros(vec![1, 1, 3, 3]);
        assert_eq!(
            conv2d_forward(&x, &k, &[0.0], 2, 1).unwrap().shape(),
            &[1, 1, 5, 4]
        );
    }

    #[test]
    fn mismatches_are_shape_errors() {
        let x = Tensor::<f32>::zeros(vec![1, 2, 4, 4]);
        let k = Tensor::zeros(vec![1, 1, 3, 3]);
        assert!(matches!(
            conv2d_forward(&x, &k, &[0.0], 1, 1),
            Err(Error::Shape(_))
        ));
        let k5 = Tensor::zeros(vec![1, 2, 5, 5]);
        assert!(conv2d_forward(&x, &k5, &[0.0], 1, 2).is_err());
        let k3 = Tensor::zeros(vec![1, 2, 3, 3]);
        assert!(conv2d_forward(&x, &k3, &[0.0, 1.0], 1, 1).is_err());
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)>
        let g = ConvGeom {
            in_c: 2,
            out_c: 1,
            kernel: 3,
            stride: 2,
            padding: 1,
        };
        let (h, w) = (5, 6);
        let x: Vec<f64> = (0..2 * h * w)
            .map(|i| ((i * 7) % 11) as f64 - 5.0)
            .collect();
        let mut cols = Vec::new();
        im2col(&x, h, w, &g, &mut cols);
        let c: Vec<f64> = (0..cols.len())
            .map(|i| ((i * 3) % 7) as f64 * 0.5)
            .collect();
        let mut back = vec![0.0; x.len()];
        col2im(&c, h, w, &g, &mut back);
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
