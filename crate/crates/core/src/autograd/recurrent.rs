use super::tensor::gemm;
use super::{Tensor, Var};

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// One unidirectional LSTM layer over `[B, T, In]`, zero initial state.
///
/// Weights use the `[input, forget, cell, output]` gate order:
/// `w_ih` is `[4H, In]`, `w_hh` is `[4H, H]`, `bias` is `[4H]`. Returns the
/// hidden-state sequence `[B, T, H]`.
pub fn lstm(x: &Var, w_ih: &Var, w_hh: &Var, bias: &Var) -> Var {
    let [b, t, input] = x.shape().try_into().expect("lstm input must be [B, T, In]");
    let h4 = w_ih.dim(0);
    assert_eq!(h4 % 4, 0);
    let h = h4 / 4;
    assert_eq!(w_ih.shape(), [h4, input], "lstm: w_ih shape");
    assert_eq!(w_hh.shape(), [h4, h], "lstm: w_hh shape");
    assert_eq!(bias.shape(), [h4], "lstm: bias shape");
    let rows = b * t;

    // Pre-activations start as the input projection plus bias.
    let mut acts = vec![0.0; rows * h4];
    gemm(rows, input, h4, 1.0, x.value().data(), (input, 1), w_ih.value().data(), (1, input), 0.0, &mut acts, (h4, 1));
    for row in acts.chunks_mut(h4) {
        for (v, bv) in row.iter_mut().zip(bias.value().data()) {
            *v += bv;
        }
    }

    let whh = w_hh.value().data();
    let mut hs = vec![0.0; rows * h];
    let mut cs = vec![0.0; rows * h];
    let mut h_prev = vec![0.0; b * h];
    for step in 0..t {
        if step > 0 {
            gemm(b, h, h4, 1.0, &h_prev, (h, 1), whh, (1, h), 1.0, &mut acts[step * h4..], (t * h4, 1));
        }
        for bi in 0..b {
            let r = bi * t + step;
            let a = &mut acts[r * h4..(r + 1) * h4];
            for j in 0..h {
                a[j] = sigmoid(a[j]);
                a[h + j] = sigmoid(a[h + j]);
                a[2 * h + j] = a[2 * h + j].tanh();
                a[3 * h + j] = sigmoid(a[3 * h + j]);
            }
            let c_prev = if step > 0 { cs[(r - 1) * h..r * h].to_vec() } else { vec![0.0; h] };
            for j in 0..h {
                let c = a[h + j] * c_prev[j] + a[j] * a[2 * h + j];
                cs[r * h + j] = c;
                let hv = a[3 * h + j] * c.tanh();
                hs[r * h + j] = hv;
                h_prev[bi * h + j] = hv;
            }
        }
    }

    let xv = x.value().clone();
    let wih = w_ih.value().clone();
    let whh = w_hh.value().clone();
    let hcap = hs.clone();
    let parents = vec![x.clone(), w_ih.clone(), w_hh.clone(), bias.clone()];
    Var::from_op(Tensor::new(vec![b, t, h], hs), parents, move |g, mask| {
        let gd = g.data();
        let mut dpre = vec![0.0; rows * h4];
        let mut dh_next = vec![0.0; b * h];
        let mut dc_next = vec![0.0; b * h];
        for step in (0..t).rev() {
            for bi in 0..b {
                let r = bi * t + step;
                let a = &acts[r * h4..(r + 1) * h4];
                let d = &mut dpre[r * h4..(r + 1) * h4];
                for j in 0..h {
                    let (i, f, gg, o) = (a[j], a[h + j], a[2 * h + j], a[3 * h + j]);
                    let c = cs[r * h + j];
                    let c_prev = if step > 0 { cs[(r - 1) * h + j] } else { 0.0 };
                    let tc = c.tanh();
                    let dh = gd[r * h + j] + dh_next[bi * h + j];
                    let dc = dh * o * (1.0 - tc * tc) + dc_next[bi * h + j];
                    d[j] = dc * gg * i * (1.0 - i);
                    d[h + j] = dc * c_prev * f * (1.0 - f);
                    d[2 * h + j] = dc * i * (1.0 - gg * gg);
                    d[3 * h + j] = dh * tc * o * (1.0 - o);
                    dc_next[bi * h + j] = dc * f;
                }
            }
            if step > 0 {
                gemm(b, h4, h, 1.0, &dpre[step * h4..], (t * h4, 1), whh.data(), (h, 1), 0.0, &mut dh_next, (h, 1));
            }
        }

        let dx = mask[0].then(|| {
            let mut dx = vec![0.0; rows * input];
            gemm(rows, h4, input, 1.0, &dpre, (h4, 1), wih.data(), (input, 1), 0.0, &mut dx, (input, 1));
            Tensor::new(vec![b, t, input], dx)
        });
        let dwih = mask[1].then(|| {
            let mut dw = vec![0.0; h4 * input];
            gemm(h4, rows, input, 1.0, &dpre, (1, h4), xv.data(), (input, 1), 0.0, &mut dw, (input, 1));
            Tensor::new(vec![h4, input], dw)
        });
        let dwhh = mask[2].then(|| {
            // Hidden state feeding each step: h[t−1], zero at t = 0.
            let mut prev = vec![0.0; rows * h];
            for bi in 0..b {
                for step in 1..t {
                    let r = bi * t + step;
                    prev[r * h..(r + 1) * h].copy_from_slice(&hcap[(r - 1) * h..r * h]);
                }
            }
            let mut dw = vec![0.0; h4 * h];
            gemm(h4, rows, h, 1.0, &dpre, (1, h4), &prev, (h, 1), 0.0, &mut dw, (h, 1));
            Tensor::new(vec![h4, h], dw)
        });
        let db = mask[3].then(|| {
            let mut db = vec![0.0; h4];
            for row in dpre.chunks(h4) {
                for (d, v) in db.iter_mut().zip(row) {
                    *d += v;
                }
            }
            Tensor::new(vec![h4], db)
        });
        vec![dx, dwih, dwhh, db]
    })
}
