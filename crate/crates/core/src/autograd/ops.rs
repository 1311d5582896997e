//! Elementwise, reduction and shape operations.

use super::tensor::gemm;
use super::{Tensor, Var};

fn unary(
    x: &Var,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64, f64) -> f64 + 'static,
) -> Var {
    let y = x.value().map(f);
    let xv = x.value().clone();
    let yv = y.clone();
    Var::from_op(y, vec![x.clone()], move |g, _| {
        let data = g
            .data()
            .iter()
            .zip(xv.data())
            .zip(yv.data())
            .map(|((&g, &x), &y)| g * df(x, y))
            .collect();
        vec![Some(Tensor::new(g.shape().to_vec(), data))]
    })
}

fn check_same(a: &Var, b: &Var, what: &str) {
    assert_eq!(a.shape(), b.shape(), "{what}: shape mismatch");
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Var {
    pub fn add(&self, other: &Var) -> Var {
        check_same(self, other, "add");
        let y = self.value().zip_map(other.value(), |a, b| a + b);
        Var::from_op(y, vec![self.clone(), other.clone()], |g, _| {
            vec![Some(g.clone()), Some(g.clone())]
        })
    }

    pub fn sub(&self, other: &Var) -> Var {
        check_same(self, other, "sub");
        let y = self.value().zip_map(other.value(), |a, b| a - b);
        Var::from_op(y, vec![self.clone(), other.clone()], |g, _| {
            vec![Some(g.clone()), Some(g.map(|v| -v))]
        })
    }

    pub fn mul(&self, other: &Var) -> Var {
        check_same(self, other, "mul");
        let y = self.value().zip_map(other.value(), |a, b| a * b);
        let (av, bv) = (self.value().clone(), other.value().clone());
        Var::from_op(y, vec![self.clone(), other.clone()], move |g, mask| {
            vec![
                mask[0].then(|| g.zip_map(&bv, |g, b| g * b)),
                mask[1].then(|| g.zip_map(&av, |g, a| g * a)),
            ]
        })
    }

    pub fn scale(&self, c: f64) -> Var {
        let y = self.value().map(|v| v * c);
        Var::from_op(y, vec![self.clone()], move |g, _| vec![Some(g.map(|v| v * c))])
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        let y = self.value().map(|v| v + c);
        Var::from_op(y, vec![self.clone()], |g, _| vec![Some(g.clone())])
    }

    pub fn tanh(&self) -> Var {
        unary(self, f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sigmoid(&self) -> Var {
        unary(self, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn relu(&self) -> Var {
        unary(self, |v| v.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn leaky_relu(&self, slope: f64) -> Var {
        unary(
            self,
            move |v| if v > 0.0 { v } else { slope * v },
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        )
    }

    pub fn square(&self) -> Var {
        unary(self, |v| v * v, |x, _| 2.0 * x)
    }

    pub fn abs(&self) -> Var {
        unary(self, f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn ln(&self) -> Var {
        unary(self, f64::ln, |x, _| 1.0 / x)
    }

    pub fn recip(&self) -> Var {
        unary(self, |v| 1.0 / v, |_, y| -y * y)
    }

    /// Elementwise quotient.
    pub fn div(&self, other: &Var) -> Var {
        self.mul(&other.recip())
    }

    /// Clamp into `[lo, hi]`; the gradient is zero where the clamp is active.
    pub fn clamp(&self, lo: f64, hi: f64) -> Var {
        unary(
            self,
            move |v| v.clamp(lo, hi),
            move |x, _| if x >= lo && x <= hi { 1.0 } else { 0.0 },
        )
    }

    pub fn clamp_min(&self, lo: f64) -> Var {
        self.clamp(lo, f64::INFINITY)
    }

    pub fn sum(&self) -> Var {
        let y = Tensor::scalar(self.value().sum());
        let shape = self.shape().to_vec();
        Var::from_op(y, vec![self.clone()], move |g, _| {
            vec![Some(Tensor::full(&shape, g.item()))]
        })
    }

    pub fn mean(&self) -> Var {
        let n = self.value().numel() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Euclidean (Frobenius) norm over all elements. The gradient at the
    /// origin is taken as zero.
    pub fn l2_norm(&self) -> Var {
        let norm = self.value().sq_norm().sqrt();
        let xv = self.value().clone();
        Var::from_op(Tensor::scalar(norm), vec![self.clone()], move |g, _| {
            let g = g.item();
            let grad = if norm > 0.0 {
                xv.map(|v| g * v / norm)
            } else {
                Tensor::zeros(xv.shape())
            };
            vec![Some(grad)]
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Var {
        let y = self.value().reshape(shape);
        let orig = self.shape().to_vec();
        Var::from_op(y, vec![self.clone()], move |g, _| vec![Some(g.reshape(&orig))])
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Var {
        let shape = self.shape().to_vec();
        assert!(start + len <= shape[axis], "narrow out of range");
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let full = shape[axis];
        let src = self.value().data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        Var::from_op(Tensor::new(out_shape, out), vec![self.clone()], move |g, _| {
            let mut grad = vec![0.0; outer * full * inner];
            let gd = g.data();
            for o in 0..outer {
                let base = (o * full + start) * inner;
                let gbase = o * len * inner;
                grad[base..base + len * inner].copy_from_slice(&gd[gbase..gbase + len * inner]);
            }
            vec![Some(Tensor::new(shape.clone(), grad))]
        })
    }

    /// Swap the last two axes.
    pub fn transpose_last(&self) -> Var {
        let shape = self.shape().to_vec();
        let r = shape.len();
        assert!(r >= 2);
        let (rows, cols) = (shape[r - 2], shape[r - 1]);
        let batch: usize = shape[..r - 2].iter().product();
        let y = transpose_data(self.value().data(), batch, rows, cols);
        let mut out_shape = shape.clone();
        out_shape.swap(r - 2, r - 1);
        Var::from_op(Tensor::new(out_shape, y), vec![self.clone()], move |g, _| {
            let gd = transpose_data(g.data(), batch, cols, rows);
            vec![Some(Tensor::new(shape.clone(), gd))]
        })
    }

    /// `x · wᵀ + b` contracting the last axis of `x` (`[.., in]`) with
    /// `w` of shape `[out, in]`.
    pub fn linear(&self, weight: &Var, bias: Option<&Var>) -> Var {
        let xs = self.shape().to_vec();
        let input = *xs.last().expect("linear on a scalar");
        let (out, w_in) = (weight.dim(0), weight.dim(1));
        assert_eq!(input, w_in, "linear: input width mismatch");
        let rows = self.value().numel() / input;
        let mut y = vec![0.0; rows * out];
        gemm(
            rows,
            input,
            out,
            1.0,
            self.value().data(),
            (input, 1),
            weight.value().data(),
            (1, input),
            0.0,
            &mut y,
            (out, 1),
        );
        if let Some(b) = bias {
            assert_eq!(b.shape(), [out]);
            let bd = b.value().data();
            for row in y.chunks_mut(out) {
                for (v, b) in row.iter_mut().zip(bd) {
                    *v += b;
                }
            }
        }
        let mut ys = xs.clone();
        *ys.last_mut().unwrap() = out;

        let xv = self.value().clone();
        let wv = weight.value().clone();
        let mut parents = vec![self.clone(), weight.clone()];
        parents.extend(bias.cloned());
        Var::from_op(Tensor::new(ys, y), parents, move |g, mask| {
            let gd = g.data();
            let dx = mask[0].then(|| {
                let mut dx = vec![0.0; rows * input];
                gemm(rows, out, input, 1.0, gd, (out, 1), wv.data(), (input, 1), 0.0, &mut dx, (input, 1));
                Tensor::new(xs.clone(), dx)
            });
            let dw = mask[1].then(|| {
                let mut dw = vec![0.0; out * input];
                gemm(out, rows, input, 1.0, gd, (1, out), xv.data(), (input, 1), 0.0, &mut dw, (input, 1));
                Tensor::new(vec![out, input], dw)
            });
            let mut grads = vec![dx, dw];
            if mask.len() > 2 {
                let mut db = vec![0.0; out];
                for row in gd.chunks(out) {
                    for (d, g) in db.iter_mut().zip(row) {
                        *d += g;
                    }
                }
                grads.push(Some(Tensor::new(vec![out], db)));
            }
            grads
        })
    }

    /// Normalise each row of a `[rows, dim]` matrix to unit Euclidean length.
    pub fn l2_normalize_rows(&self) -> Var {
        assert_eq!(self.value().rank(), 2);
        let (rows, dim) = (self.dim(0), self.dim(1));
        let x = self.value().data();
        let norms: Vec<f64> = x
            .chunks(dim)
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12))
            .collect();
        let mut y = x.to_vec();
        for (row, n) in y.chunks_mut(dim).zip(&norms) {
            row.iter_mut().for_each(|v| *v /= n);
        }
        let yv = Tensor::new(vec![rows, dim], y);
        let ycap = yv.clone();
        Var::from_op(yv, vec![self.clone()], move |g, _| {
            let mut dx = vec![0.0; rows * dim];
            for r in 0..rows {
                let yr = &ycap.data()[r * dim..(r + 1) * dim];
                let gr = &g.data()[r * dim..(r + 1) * dim];
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for i in 0..dim {
                    dx[r * dim + i] = (gr[i] - yr[i] * dot) / norms[r];
                }
            }
            vec![Some(Tensor::new(vec![rows, dim], dx))]
        })
    }
}

/// Concatenate along `axis`; all other extents must agree.
pub fn concat(vars: &[Var], axis: usize) -> Var {
    assert!(!vars.is_empty());
    let first = vars[0].shape().to_vec();
    let outer: usize = first[..axis].iter().product();
    let inner: usize = first[axis + 1..].iter().product();
    let sizes: Vec<usize> = vars
        .iter()
        .map(|v| {
            let s = v.shape();
            assert_eq!(s.len(), first.len());
            assert_eq!(&s[..axis], &first[..axis], "concat: leading axes differ");
            assert_eq!(&s[axis + 1..], &first[axis + 1..], "concat: trailing axes differ");
            s[axis]
        })
        .collect();
    let total: usize = sizes.iter().sum();
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for (v, &n) in vars.iter().zip(&sizes) {
            let d = v.value().data();
            out.extend_from_slice(&d[o * n * inner..(o + 1) * n * inner]);
        }
    }
    let mut shape = first.clone();
    shape[axis] = total;
    let shapes: Vec<Vec<usize>> = vars.iter().map(|v| v.shape().to_vec()).collect();
    Var::from_op(Tensor::new(shape, out), vars.to_vec(), move |g, mask| {
        let gd = g.data();
        let mut offset = 0;
        let mut grads = Vec::with_capacity(sizes.len());
        for ((&n, s), &needed) in sizes.iter().zip(&shapes).zip(mask) {
            if needed {
                let mut part = Vec::with_capacity(outer * n * inner);
                for o in 0..outer {
                    let base = (o * total + offset) * inner;
                    part.extend_from_slice(&gd[base..base + n * inner]);
                }
                grads.push(Some(Tensor::new(s.clone(), part)));
            } else {
                grads.push(None);
            }
            offset += n;
        }
        grads
    })
}

/// Sum of several same-shaped variables.
pub fn sum_all(vars: &[Var]) -> Var {
    assert!(!vars.is_empty());
    let mut acc = vars[0].value().clone();
    for v in &vars[1..] {
        acc.add_assign(v.value());
    }
    let n = vars.len();
    Var::from_op(acc, vars.to_vec(), move |g, _| vec![Some(g.clone()); n])
}

fn transpose_data(src: &[f64], batch: usize, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for b in 0..batch {
        let off = b * rows * cols;
        for r in 0..rows {
            for c in 0..cols {
                out[off + c * rows + r] = src[off + r * cols + c];
            }
        }
    }
    out
}
