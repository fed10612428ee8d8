//! Reference implementations written with plain loops, shared by the integration tests.
#![allow(dead_code)]

use miri_core::{Mask, Matrix, MlpParams};

/// Mean-over-rows squared error of the network, evaluated row by row.
pub fn loss_by_hand(p: &MlpParams, x: &Matrix, y: &Matrix) -> f64 {
    let last = p.layers().len() - 1;
    let mut total = 0.0;
    for r in 0..x.rows() {
        let mut cur = x.row(r).to_vec();
        for (l, layer) in p.layers().iter().enumerate() {
            cur = (0..layer.output_dim())
                .map(|o| {
                    let z = layer.bias[o] + cur.iter().enumerate().map(|(i, v)| layer.weights[(o, i)] * v).sum::<f64>();
                    if l == last { z } else { p.activation().apply(z) }
                })
                .collect();
        }
        total += cur.iter().zip(y.row(r)).map(|(o, t)| (o - t).powi(2)).sum::<f64>();
    }
    total / x.rows() as f64
}

/// Worst relative gap `|a − n| / (|a| + 1e-8)` between the analytic gradient and central
/// differences with step `h`, over every parameter coordinate.
pub fn worst_gradient_gap(params: &MlpParams, x: &Matrix, y: &Matrix, h: f64) -> f64 {
    let (_, grads) = params.loss_grad(x, y).unwrap();
    let flat = params.to_flat();
    let analytic = grads.to_flat();
    let sizes = params.sizes();
    let mut worst: f64 = 0.0;
    for k in 0..flat.len() {
        let mut plus = flat.clone();
        plus[k] += h;
        let mut minus = flat.clone();
        minus[k] -= h;
        let lp = loss_by_hand(&MlpParams::from_flat(&sizes, params.activation(), &plus).unwrap(), x, y);
        let lm = loss_by_hand(&MlpParams::from_flat(&sizes, params.activation(), &minus).unwrap(), x, y);
        let numeric = (lp - lm) / (2.0 * h);
        worst = worst.max((analytic[k] - numeric).abs() / (analytic[k].abs() + 1e-8));
    }
    worst
}

/// MMD by the textbook double sum, no symmetry tricks.
pub fn mmd_by_hand(a: &Matrix, b: &Matrix, sigma: f64) -> f64 {
    let k = |x: &[f64], y: &[f64]| {
        let d2: f64 = x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum();
        (-d2 / (2.0 * sigma * sigma)).exp()
    };
    let mean = |p: &Matrix, q: &Matrix| {
        let mut s = 0.0;
        for i in 0..p.rows() {
            for j in 0..q.rows() {
                s += k(p.row(i), q.row(j));
            }
        }
        s / (p.rows() * q.rows()) as f64
    };
    (mean(a, a) + mean(b, b) - 2.0 * mean(a, b)).max(0.0).sqrt()
}

/// Median of all pooled pairwise distances, by full sort.
pub fn median_by_hand(a: &Matrix, b: &Matrix) -> f64 {
    let pts: Vec<&[f64]> = a.iter_rows().chain(b.iter_rows()).collect();
    let mut d = Vec::new();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d.push(pts[i].iter().zip(pts[j]).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    }
}

/// `H(X) + H(M) − H(X, M)` over equal-width bins, from sorted cell keys.
pub fn mi_by_hand(x: &Matrix, mask: &Mask, bins: usize) -> f64 {
    let n = x.rows();
    let d = x.cols();
    let bounds: Vec<(f64, f64)> = (0..d)
        .map(|j| {
            let c = x.column(j);
            (c.iter().copied().fold(f64::INFINITY, f64::min), c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        })
        .collect();
    let keys: Vec<(Vec<usize>, Vec<bool>)> = (0..n)
        .map(|i| {
            let cell = (0..d)
                .map(|j| {
                    let (lo, hi) = bounds[j];
                    if hi > lo {
                        (((x[(i, j)] - lo) / (hi - lo) * bins as f64).floor() as usize).min(bins - 1)
                    } else {
                        0
                    }
                })
                .collect();
            (cell, mask.row(i).to_vec())
        })
        .collect();
    let entropy = |mut labels: Vec<String>| {
        labels.sort();
        let mut h = 0.0;
        let mut i = 0;
        while i < labels.len() {
            let j = (i..labels.len()).find(|&j| labels[j] != labels[i]).unwrap_or(labels.len());
            let p = (j - i) as f64 / n as f64;
            h -= p * p.ln();
            i = j;
        }
        h
    };
    let hx = entropy(keys.iter().map(|(c, _)| format!("{c:?}")).collect());
    let hm = entropy(keys.iter().map(|(_, m)| format!("{m:?}")).collect());
    let hxm = entropy(keys.iter().map(|k| format!("{k:?}")).collect());
    (hx + hm - hxm).max(0.0)
}
