//! Operations over `[batch, channels, time]` sequences.

use super::tensor::gemm;
use super::{Tensor, Var};

fn im2col(x: &[f64], cin: usize, t: usize, k: usize, dilation: usize, pad_left: usize, cols: &mut [f64]) {
    for ci in 0..cin {
        let row_in = &x[ci * t..(ci + 1) * t];
        for kk in 0..k {
            let dst = &mut cols[(ci * k + kk) * t..(ci * k + kk + 1) * t];
            let off = (kk * dilation) as isize - pad_left as isize;
            let lo = (-off).clamp(0, t as isize) as usize;
            let hi = (t as isize - off).clamp(0, t as isize) as usize;
            dst[..lo].fill(0.0);
            dst[hi..].fill(0.0);
            if lo < hi {
                let s = (lo as isize + off) as usize;
                dst[lo..hi].copy_from_slice(&row_in[s..s + (hi - lo)]);
            }
        }
    }
}

fn col2im_add(cols: &[f64], cin: usize, t: usize, k: usize, dilation: usize, pad_left: usize, dx: &mut [f64]) {
    for ci in 0..cin {
        for kk in 0..k {
            let src = &cols[(ci * k + kk) * t..(ci * k + kk + 1) * t];
            let off = (kk * dilation) as isize - pad_left as isize;
            let lo = (-off).clamp(0, t as isize) as usize;
            let hi = (t as isize - off).clamp(0, t as isize) as usize;
            if lo < hi {
                let s = (lo as isize + off) as usize;
                let dst = &mut dx[ci * t + s..ci * t + s + (hi - lo)];
                for (d, v) in dst.iter_mut().zip(&src[lo..hi]) {
                    *d += v;
                }
            }
        }
    }
}

/// Length-preserving 1-D convolution.
///
/// `x` is `[B, Cin, T]`, `weight` is `[Cout, Cin, K]`; output sample `t` reads
/// input samples `t + k·dilation − pad_left`, zero outside the sequence.
pub fn conv1d(x: &Var, weight: &Var, bias: Option<&Var>, dilation: usize, pad_left: usize) -> Var {
    let [b, cin, t] = x.shape().try_into().expect("conv1d input must be [B, C, T]");
    let [cout, wcin, k] = weight.shape().try_into().expect("conv1d weight must be [Cout, Cin, K]");
    assert_eq!(cin, wcin, "conv1d: channel mismatch");
    let ck = cin * k;
    let direct = k == 1 && pad_left == 0;

    let xd = x.value().data();
    let wd = weight.value().data();
    let mut y = vec![0.0; b * cout * t];
    let mut cols = if direct { Vec::new() } else { vec![0.0; ck * t] };
    for bi in 0..b {
        let xb = &xd[bi * cin * t..(bi + 1) * cin * t];
        let src: &[f64] = if direct {
            xb
        } else {
            im2col(xb, cin, t, k, dilation, pad_left, &mut cols);
            &cols
        };
        gemm(cout, ck, t, 1.0, wd, (ck, 1), src, (t, 1), 0.0, &mut y[bi * cout * t..(bi + 1) * cout * t], (t, 1));
    }
    if let Some(bias) = bias {
        assert_eq!(bias.shape(), [cout]);
        let bd = bias.value().data();
        for (row, bv) in y.chunks_mut(t).zip(bd.iter().cycle()) {
            row.iter_mut().for_each(|v| *v += bv);
        }
    }

    let xv = x.value().clone();
    let wv = weight.value().clone();
    let mut parents = vec![x.clone(), weight.clone()];
    parents.extend(bias.cloned());
    Var::from_op(Tensor::new(vec![b, cout, t], y), parents, move |g, mask| {
        let gd = g.data();
        let xd = xv.data();
        let wd = wv.data();
        let mut dx = mask[0].then(|| vec![0.0; b * cin * t]);
        let mut dw = mask[1].then(|| vec![0.0; cout * ck]);
        let mut cols = vec![0.0; ck * t];
        for bi in 0..b {
            let gb = &gd[bi * cout * t..(bi + 1) * cout * t];
            if let Some(dw) = dw.as_mut() {
                let xb = &xd[bi * cin * t..(bi + 1) * cin * t];
                let src: &[f64] = if direct {
                    xb
                } else {
                    im2col(xb, cin, t, k, dilation, pad_left, &mut cols);
                    &cols
                };
                gemm(cout, t, ck, 1.0, gb, (t, 1), src, (1, t), 1.0, dw, (ck, 1));
            }
            if let Some(dx) = dx.as_mut() {
                let dxb = &mut dx[bi * cin * t..(bi + 1) * cin * t];
                if direct {
                    gemm(ck, cout, t, 1.0, wd, (1, ck), gb, (t, 1), 0.0, dxb, (t, 1));
                } else {
                    gemm(ck, cout, t, 1.0, wd, (1, ck), gb, (t, 1), 0.0, &mut cols, (t, 1));
                    col2im_add(&cols, cin, t, k, dilation, pad_left, dxb);
                }
            }
        }
        let mut grads = vec![
            dx.map(|d| Tensor::new(vec![b, cin, t], d)),
            dw.map(|d| Tensor::new(vec![cout, cin, k], d)),
        ];
        if mask.len() > 2 {
            let mut db = vec![0.0; cout];
            for (row, d) in gd.chunks(t).zip((0..cout).cycle()) {
                db[d] += row.iter().sum::<f64>();
            }
            grads.push(Some(Tensor::new(vec![cout], db)));
        }
        grads
    })
}

/// Gated activation `tanh(a) ⊙ σ(b)` where `a` and `b` are the first and
/// second halves of the channel axis of a `[B, 2C, T]` input.
pub fn gated_activation(x: &Var) -> Var {
    let [b, c2, t] = x.shape().try_into().expect("gate input must be [B, C, T]");
    assert!(c2 % 2 == 0, "gate needs an even channel count");
    let c = c2 / 2;
    let xd = x.value().data();
    let n = c * t;
    let mut th = vec![0.0; b * n];
    let mut sg = vec![0.0; b * n];
    let mut y = vec![0.0; b * n];
    for bi in 0..b {
        let a = &xd[bi * 2 * n..bi * 2 * n + n];
        let s = &xd[bi * 2 * n + n..(bi + 1) * 2 * n];
        for i in 0..n {
            let tv = a[i].tanh();
            let sv = 1.0 / (1.0 + (-s[i]).exp());
            th[bi * n + i] = tv;
            sg[bi * n + i] = sv;
            y[bi * n + i] = tv * sv;
        }
    }
    Var::from_op(Tensor::new(vec![b, c, t], y), vec![x.clone()], move |g, _| {
        let gd = g.data();
        let mut dx = vec![0.0; b * 2 * n];
        for bi in 0..b {
            for i in 0..n {
                let (tv, sv, gv) = (th[bi * n + i], sg[bi * n + i], gd[bi * n + i]);
                dx[bi * 2 * n + i] = gv * sv * (1.0 - tv * tv);
                dx[bi * 2 * n + n + i] = gv * tv * sv * (1.0 - sv);
            }
        }
        vec![Some(Tensor::new(vec![b, c2, t], dx))]
    })
}

/// Repeat every sample of the last axis `factor` times.
pub fn repeat_nearest(x: &Var, factor: usize) -> Var {
    let shape = x.shape().to_vec();
    let t = *shape.last().unwrap();
    let y: Vec<f64> = x
        .value()
        .data()
        .iter()
        .flat_map(|&v| std::iter::repeat_n(v, factor))
        .collect();
    let mut ys = shape.clone();
    *ys.last_mut().unwrap() = t * factor;
    Var::from_op(Tensor::new(ys, y), vec![x.clone()], move |g, _| {
        let d = g.data().chunks(factor).map(|c| c.iter().sum()).collect();
        vec![Some(Tensor::new(shape.clone(), d))]
    })
}

/// Insert `factor − 1` zeros after every sample of the last axis.
pub fn upsample_zeros(x: &Var, factor: usize) -> Var {
    let shape = x.shape().to_vec();
    let t = *shape.last().unwrap();
    let mut y = vec![0.0; x.value().numel() * factor];
    for (i, v) in x.value().data().iter().enumerate() {
        y[i * factor] = *v;
    }
    let mut ys = shape.clone();
    *ys.last_mut().unwrap() = t * factor;
    Var::from_op(Tensor::new(ys, y), vec![x.clone()], move |g, _| {
        let d = g.data().iter().step_by(factor).copied().collect();
        vec![Some(Tensor::new(shape.clone(), d))]
    })
}

/// Strided average pooling over the last axis.
///
/// Output `j` averages `kernel` inputs starting at
/// `j·stride + ⌊(stride − kernel)/2⌋`, centring each window on its stride
/// cell; samples outside the sequence count as zero. The last axis must be a
/// multiple of `stride`.
pub fn avg_pool(x: &Var, kernel: usize, stride: usize) -> Var {
    let shape = x.shape().to_vec();
    let t = *shape.last().unwrap();
    assert!(t % stride == 0, "avg_pool: length {t} not divisible by stride {stride}");
    let rows = x.value().numel() / t;
    let tout = t / stride;
    let shift = (stride as isize - kernel as isize).div_euclid(2);
    let scale = 1.0 / kernel as f64;
    let window = move |j: usize| {
        let start = j as isize * stride as isize + shift;
        let lo = start.clamp(0, t as isize) as usize;
        let hi = (start + kernel as isize).clamp(0, t as isize) as usize;
        lo..hi
    };
    let xd = x.value().data();
    let mut y = vec![0.0; rows * tout];
    for r in 0..rows {
        let row = &xd[r * t..(r + 1) * t];
        for j in 0..tout {
            y[r * tout + j] = row[window(j)].iter().sum::<f64>() * scale;
        }
    }
    let mut ys = shape.clone();
    *ys.last_mut().unwrap() = tout;
    Var::from_op(Tensor::new(ys, y), vec![x.clone()], move |g, _| {
        let gd = g.data();
        let mut dx = vec![0.0; rows * t];
        for r in 0..rows {
            for j in 0..tout {
                let gv = gd[r * tout + j] * scale;
                dx[r * t..(r + 1) * t][window(j)].iter_mut().for_each(|d| *d += gv);
            }
        }
        vec![Some(Tensor::new(shape.clone(), dx))]
    })
}
