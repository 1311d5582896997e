use crate::autograd::{Tensor, Var};
use crate::{Error, Result};

struct Pair {
    cos: f64,
    /// Centroid used for this comparison and its norm.
    centroid: Vec<f64>,
    centroid_norm: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

const TINY: f64 = 1e-12;

/// Softmax generalised end-to-end loss over embeddings `[N, M, D]`
/// (N speakers, M utterances each) with scalar scale `w` and bias `b`.
///
/// Each utterance is compared by scaled cosine similarity to every speaker
/// centroid; its own speaker's centroid leaves the utterance out. The loss
/// is the mean negative log-softmax of the true speaker.
pub fn ge2e_loss(embeddings: &Var, w: &Var, b: &Var) -> Result<Var> {
    let [n, m, d] = embeddings
        .shape()
        .try_into()
        .map_err(|_| Error::Shape(format!("embeddings must be [N, M, D], got {:?}", embeddings.shape())))?;
    if n < 2 || m < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 speakers with 2 utterances each, got {n}×{m}"
        )));
    }
    if w.value().numel() != 1 || b.value().numel() != 1 {
        return Err(Error::Shape("scale and bias must be single values".into()));
    }
    let e = embeddings.value().data().to_vec();
    let (wv, bv) = (w.value().data()[0], b.value().data()[0]);
    let row = |j: usize, i: usize| &e[(j * m + i) * d..(j * m + i + 1) * d];

    let mut sums = vec![0.0; n * d];
    for j in 0..n {
        for i in 0..m {
            for (s, v) in sums[j * d..(j + 1) * d].iter_mut().zip(row(j, i)) {
                *s += v;
            }
        }
    }

    let mut pairs = Vec::with_capacity(n * m * n);
    let mut probs = Vec::with_capacity(n * m * n);
    let mut loss = 0.0;
    for j in 0..n {
        for i in 0..m {
            let a = row(j, i);
            let na = norm(a);
            let mut logits = Vec::with_capacity(n);
            for k in 0..n {
                let sum = &sums[k * d..(k + 1) * d];
                let centroid: Vec<f64> = if k == j {
                    sum.iter().zip(a).map(|(s, v)| (s - v) / (m - 1) as f64).collect()
                } else {
                    sum.iter().map(|s| s / m as f64).collect()
                };
                let nc = norm(&centroid);
                let cos = if na * nc > TINY { dot(a, &centroid) / (na * nc) } else { 0.0 };
                logits.push(wv * cos + bv);
                pairs.push(Pair {
                    cos,
                    centroid,
                    centroid_norm: nc,
                });
            }
            let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - top).exp()).sum();
            loss += top + z.ln() - logits[j];
            probs.extend(logits.iter().map(|l| (l - top).exp() / z));
        }
    }
    let count = (n * m) as f64;
    loss /= count;

    Ok(Var::from_op(
        Tensor::scalar(loss),
        vec![embeddings.clone(), w.clone(), b.clone()],
        move |g: &Tensor, _: &[bool]| {
            let g = g.item() / count;
            let mut ge = vec![0.0; n * m * d];
            let (mut gw, mut gb) = (0.0, 0.0);
            for j in 0..n {
                for i in 0..m {
                    let a = &e[(j * m + i) * d..(j * m + i + 1) * d];
                    let na = norm(a);
                    for k in 0..n {
                        let idx = (j * m + i) * n + k;
                        let p = &pairs[idx];
                        let gs = g * (probs[idx] - if k == j { 1.0 } else { 0.0 });
                        gw += gs * p.cos;
                        gb += gs;
                        if na * p.centroid_norm <= TINY {
                            continue;
                        }
                        let gc = gs * wv;
                        let inv = 1.0 / (na * p.centroid_norm);
                        // d cos / d a and d cos / d centroid
                        for t in 0..d {
                            ge[(j * m + i) * d + t] += gc * (p.centroid[t] * inv - p.cos * a[t] / (na * na));
                        }
                        let dc: Vec<f64> = (0..d)
                            .map(|t| {
                                gc * (a[t] * inv - p.cos * p.centroid[t] / (p.centroid_norm * p.centroid_norm))
                            })
                            .collect();
                        let share = if k == j { (m - 1) as f64 } else { m as f64 };
                        for u in 0..m {
                            if k == j && u == i {
                                continue;
                            }
                            for t in 0..d {
                                ge[(k * m + u) * d + t] += dc[t] / share;
                            }
                        }
                    }
                }
            }
            vec![
                Some(Tensor::new(vec![n, m, d], ge)),
                Some(Tensor::new(vec![1], vec![gw])),
                Some(Tensor::new(vec![1], vec![gb])),
            ]
        },
    ))
}
