use crate::autodiff::{Op, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::Padding;

/// Upper bound on im2col buffer elements per chunk.
const COL_BUDGET: usize = 1 << 21;

#[derive(Debug, Clone, Copy)]
struct Geometry {
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    cout: usize,
    stride: usize,
    pad_top: usize,
    pad_left: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn new(x: &[usize], wt: &[usize], stride: usize, padding: Padding) -> Result<Self> {
        let &[h, w, cin] = x else {
            return Err(Error::invalid(format!("conv2d input must be HxWxC, got {x:?}")));
        };
        let &[kh, kw, wcin, cout] = wt else {
            return Err(Error::invalid(format!(
                "conv2d weights must be kh x kw x in x out, got {wt:?}"
            )));
        };
        if !(1..=3).contains(&kh) || !(1..=3).contains(&kw) {
            return Err(Error::UnsupportedKernel { kh, kw });
        }
        if wcin != cin {
            return Err(Error::ChannelMismatch {
                op: "conv2d",
                expected: wcin,
                actual: cin,
            });
        }
        if cout == 0 || stride == 0 {
            return Err(Error::invalid("conv2d needs out_ch >= 1 and stride >= 1"));
        }
        let (oh, ow, pad_top, pad_left) = match padding {
            Padding::Valid => {
                if h < kh || w < kw {
                    return Err(Error::invalid(format!(
                        "valid conv2d needs input >= kernel, got {h}x{w} vs {kh}x{kw}"
                    )));
                }
                ((h - kh) / stride + 1, (w - kw) / stride + 1, 0, 0)
            }
            Padding::Same => {
                let oh = h.div_ceil(stride);
                let ow = w.div_ceil(stride);
                let pad_h = ((oh - 1) * stride + kh).saturating_sub(h);
                let pad_w = ((ow - 1) * stride + kw).saturating_sub(w);
                (oh, ow, pad_h / 2, pad_w / 2)
            }
        };
        Ok(Geometry {
            h,
            w,
            cin,
            kh,
            kw,
            cout,
            stride,
            pad_top,
            pad_left,
            oh,
            ow,
        })
    }

    fn k(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    fn pixels(&self) -> usize {
        self.oh * self.ow
    }

    /// Direct view: 1x1 kernel, stride 1, no padding means im2col is the input itself.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1
    }

    fn chunk_pixels(&self) -> usize {
        (COL_BUDGET / self.k().max(1)).clamp(1, self.pixels().max(1))
    }

    /// Fills `col` with patches for output pixels `p0..p0 + n`.
    fn im2col<T: Scalar>(&self, x: &[T], p0: usize, n: usize, col: &mut [T]) {
        let k = self.k();
        for (r, p) in (p0..p0 + n).enumerate() {
            let (oy, ox) = (p / self.ow, p % self.ow);
            let row = &mut col[r * k..(r + 1) * k];
            for ky in 0..self.kh {
                let iy = (oy * self.stride + ky) as isize - self.pad_top as isize;
                for kx in 0..self.kw {
                    let ix = (ox * self.stride + kx) as isize - self.pad_left as isize;
                    let dst = &mut row[(ky * self.kw + kx) * self.cin..][..self.cin];
                    if iy < 0 || ix < 0 || iy as usize >= self.h || ix as usize >= self.w {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                    } else {
                        let src = (iy as usize * self.w + ix as usize) * self.cin;
                        dst.copy_from_slice(&x[src..src + self.cin]);
                    }
                }
            }
        }
    }

    fn col2im_add<T: Scalar>(&self, col: &[T], p0: usize, n: usize, dx: &mut [T]) {
        let k = self.k();
        for (r, p) in (p0..p0 + n).enumerate() {
            let (oy, ox) = (p / self.ow, p % self.ow);
            let row = &col[r * k..(r + 1) * k];
            for ky in 0..self.kh {
                let iy = (oy * self.stride + ky) as isize - self.pad_top as isize;
                if iy < 0 || iy as usize >= self.h {
                    continue;
                }
                for kx in 0..self.kw {
                    let ix = (ox * self.stride + kx) as isize - self.pad_left as isize;
                    if ix < 0 || ix as usize >= self.w {
                        continue;
                    }
                    let src = &row[(ky * self.kw + kx) * self.cin..][..self.cin];
                    let dst = (iy as usize * self.w + ix as usize) * self.cin;
                    for (d, s) in dx[dst..dst + self.cin].iter_mut().zip(src) {
                        *d = *d + *s;
                    }
                }
            }
        }
    }
}

pub(crate) fn forward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let g = Geometry::new(x.shape(), weight.shape(), stride, padding)?;
    if bias.len() != g.cout {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            expected: vec![g.cout],
            actual: bias.shape().to_vec(),
        });
    }
    let (k, cout) = (g.k(), g.cout);
    let mut out = vec![T::zero(); g.pixels() * cout];
    for row in out.chunks_exact_mut(cout) {
        row.copy_from_slice(bias.data());
    }
    if g.is_pointwise() {
        T::gemm(
            g.pixels(),
            k,
            cout,
            T::one(),
            x.data(),
            k as isize,
            1,
            weight.data(),
            cout as isize,
            1,
            T::one(),
            &mut out,
            cout as isize,
            1,
        );
    } else {
        let chunk = g.chunk_pixels();
        let mut col = vec![T::zero(); chunk * k];
        let mut p0 = 0;
        while p0 < g.pixels() {
            let n = chunk.min(g.pixels() - p0);
            g.im2col(x.data(), p0, n, &mut col);
            T::gemm(
                n,
                k,
                cout,
                T::one(),
                &col,
                k as isize,
                1,
                weight.data(),
                cout as isize,
                1,
                T::one(),
                &mut out[p0 * cout..],
                cout as isize,
                1,
            );
            p0 += n;
        }
    }
    Tensor::new(vec![g.oh, g.ow, cout], out)
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub weight: Option<Vec<T>>,
    pub bias: Vec<T>,
}

pub(crate) fn backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    gout: &[T],
    stride: usize,
    padding: Padding,
    want_input: bool,
    want_weight: bool,
) -> ConvGrads<T> {
    let g = Geometry::new(x.shape(), weight.shape(), stride, padding)
        .expect("geometry validated in forward");
    let (k, cout) = (g.k(), g.cout);

    let mut bias = vec![T::zero(); cout];
    for row in gout.chunks_exact(cout) {
        for (b, v) in bias.iter_mut().zip(row) {
            *b = *b + *v;
        }
    }

    let mut dw = want_weight.then(|| vec![T::zero(); k * cout]);
    let mut dx = want_input.then(|| vec![T::zero(); x.len()]);

    if g.is_pointwise() {
        if let Some(dw) = dw.as_mut() {
            // dW = X^T * dOut
            T::gemm(
                k,
                g.pixels(),
                cout,
                T::one(),
                x.data(),
                1,
                k as isize,
                gout,
                cout as isize,
                1,
                T::zero(),
                dw,
                cout as isize,
                1,
            );
        }
        if let Some(dx) = dx.as_mut() {
            // dX = dOut * W^T
            T::gemm(
                g.pixels(),
                cout,
                k,
                T::one(),
                gout,
                cout as isize,
                1,
                weight.data(),
                1,
                cout as isize,
                T::zero(),
                dx,
                k as isize,
                1,
            );
        }
    } else {
        let chunk = g.chunk_pixels();
        let mut col = vec![T::zero(); chunk * k];
        let mut p0 = 0;
        while p0 < g.pixels() {
            let n = chunk.min(g.pixels() - p0);
            let gchunk = &gout[p0 * cout..(p0 + n) * cout];
            if let Some(dw) = dw.as_mut() {
                g.im2col(x.data(), p0, n, &mut col);
                T::gemm(
                    k,
                    n,
                    cout,
                    T::one(),
                    &col,
                    1,
                    k as isize,
                    gchunk,
                    cout as isize,
                    1,
                    T::one(),
                    dw,
                    cout as isize,
                    1,
                );
            }
            if let Some(dx) = dx.as_mut() {
                T::gemm(
                    n,
                    cout,
                    k,
                    T::one(),
                    gchunk,
                    cout as isize,
                    1,
                    weight.data(),
                    1,
                    cout as isize,
                    T::zero(),
                    &mut col,
                    k as isize,
                    1,
                );
                g.col2im_add(&col, p0, n, dx);
            }
            p0 += n;
        }
    }

    ConvGrads {
        input: dx,
        weight: dw,
        bias,
    }
}

impl<T: Scalar> Tape<T> {
    /// 2-D convolution of an `H x W x Cin` input with `kh x kw x Cin x Cout`
    /// weights plus a per-channel bias.
    pub fn conv2d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: Padding,
    ) -> Result<Var> {
        let (ix, tx) = self.resolve(x)?;
        let (iw, tw) = self.resolve(weight)?;
        let (ib, tb) = self.resolve(bias)?;
        let out = forward(tx, tw, tb, stride, padding)?;
        self.record(
            out,
            Op::Conv2d {
                x: ix,
                w: iw,
                b: ib,
                stride,
                padding,
            },
        )
    }
}
