use ndarray::{ArrayD, IxDyn};

use super::Tensor;

/// Patch layout shared by `im2col` and its adjoint `col2im`.
///
/// The "big" tensor is `[n, c, big_h, big_w]`; the patch grid has
/// `small_h x small_w` positions. Patch `(i, j)` reads the `kh x kw` window at
/// `(i * sh, j * sw)`; positions outside the big tensor read zero. Columns are
/// `[n * small_h * small_w, c * kh * kw]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub n: usize,
    pub c: usize,
    pub big_h: usize,
    pub big_w: usize,
    pub small_h: usize,
    pub small_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
}

impl Geometry {
    /// Geometry of a valid (unpadded) convolution over `[n, c, h, w]`.
    pub fn valid(n: usize, c: usize, h: usize, w: usize, k: (usize, usize), s: (usize, usize)) -> Self {
        assert!(h >= k.0 && w >= k.1, "kernel {k:?} larger than input {h}x{w}");
        Self {
            n,
            c,
            big_h: h,
            big_w: w,
            small_h: (h - k.0) / s.0 + 1,
            small_w: (w - k.1) / s.1 + 1,
            kh: k.0,
            kw: k.1,
            sh: s.0,
            sw: s.1,
        }
    }

    pub fn cols_shape(&self) -> [usize; 2] {
        [
            self.n * self.small_h * self.small_w,
            self.c * self.kh * self.kw,
        ]
    }

    pub fn big_shape(&self) -> [usize; 4] {
        [self.n, self.c, self.big_h, self.big_w]
    }

    fn for_each(&self, mut f: impl FnMut(usize, usize)) {
        let (bh, bw) = (self.big_h, self.big_w);
        let ncols = self.c * self.kh * self.kw;
        for n in 0..self.n {
            for i in 0..self.small_h {
                for j in 0..self.small_w {
                    let row = (n * self.small_h + i) * self.small_w + j;
                    for c in 0..self.c {
                        for a in 0..self.kh {
                            let y = i * self.sh + a;
                            if y >= bh {
                                continue;
                            }
                            for b in 0..self.kw {
                                let x = j * self.sw + b;
                                if x >= bw {
                                    continue;
                                }
                                let col = (c * self.kh + a) * self.kw + b;
                                let big = ((n * self.c + c) * bh + y) * bw + x;
                                f(row * ncols + col, big);
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn im2col(&self, big: &Tensor) -> Tensor {
        assert_eq!(big.shape(), self.big_shape(), "im2col input shape");
        let src = big.as_standard_layout();
        let src = src.as_slice().unwrap();
        let mut out = vec![0.0; self.cols_shape().iter().product()];
        self.for_each(|col, b| out[col] = src[b]);
        ArrayD::from_shape_vec(IxDyn(&self.cols_shape()), out).unwrap()
    }

    pub fn col2im(&self, cols: &Tensor) -> Tensor {
        assert_eq!(cols.shape(), self.cols_shape(), "col2im input shape");
        let src = cols.as_standard_layout();
        let src = src.as_slice().unwrap();
        let mut out = vec![0.0; self.big_shape().iter().product()];
        self.for_each(|col, b| out[b] += src[col]);
        ArrayD::from_shape_vec(IxDyn(&self.big_shape()), out).unwrap()
    }
}
