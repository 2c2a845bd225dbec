//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use dlc_core::autodiff::ParamSet;

/// Smallest `s >= 0` with `lhs(s) <= rhs`, found by bisection on the
/// feasibility predicate alone.
pub fn minimal_slack(feasible: impl Fn(f64) -> bool) -> f64 {
    if feasible(0.0) {
        return 0.0;
    }
    let mut hi = 1.0;
    while !feasible(hi) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

pub fn brute_con1(h_star: f64, h_tilde: f64) -> f64 {
    minimal_slack(|e| h_star <= h_tilde + e)
}

pub fn brute_con2(h_star: f64, h_omega: f64, dist_sq: f64, mu: f64) -> f64 {
    minimal_slack(|g| h_star <= h_omega - mu / 2.0 * dist_sq + g)
}

pub fn brute_con3(h_tilde: f64, h_star: f64, h_omega: f64, lambda: f64, dist_sq: f64, mu: f64) -> f64 {
    minimal_slack(|x| h_tilde <= (1.0 - lambda) * h_star + lambda * h_omega - lambda * (1.0 - lambda) * mu / 2.0 * dist_sq + x)
}

/// Expanded closed form of `Rz Ry Rx` (or the 2-D rotation).
pub fn rotation_rows(euler: &[f64]) -> Vec<Vec<f64>> {
    if euler.len() == 1 {
        let (s, c) = euler[0].sin_cos();
        return vec![vec![c, -s], vec![s, c]];
    }
    let (sz, cz) = euler[0].sin_cos();
    let (sy, cy) = euler[1].sin_cos();
    let (sx, cx) = euler[2].sin_cos();
    vec![
        vec![cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
        vec![sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
        vec![-sy, cy * sx, cy * cx],
    ]
}

fn mat(params: &ParamSet, name: &str) -> (Vec<f64>, usize, usize) {
    let t = params.get(name).unwrap();
    let (r, c) = t.as_matrix_dims().unwrap();
    (t.data().to_vec(), r, c)
}

/// Per-point 3-layer tanh MLP followed by concatenation with the row max.
pub fn pointnet_reference(params: &ParamSet, pts: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let layers = [("phi.w1", "phi.b1"), ("phi.w2", "phi.b2"), ("phi.w3", "phi.b3")];
    let mut rows: Vec<Vec<f64>> = pts.to_vec();
    for (li, (w, b)) in layers.iter().enumerate() {
        let (wd, r, c) = mat(params, w);
        let bd = params.get(b).unwrap().data().to_vec();
        rows = rows
            .iter()
            .map(|x| {
                assert_eq!(x.len(), r);
                (0..c)
                    .map(|j| {
                        let z: f64 = (0..r).map(|i| x[i] * wd[i * c + j]).sum::<f64>() + bd[j];
                        if li < 2 {
                            z.tanh()
                        } else {
                            z
                        }
                    })
                    .collect()
            })
            .collect();
    }
    let f = rows[0].len();
    let global: Vec<f64> = (0..f).map(|j| rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
    rows.into_iter().map(|mut r| {
        r.extend_from_slice(&global);
        r
    }).collect()
}

pub fn registration_reference(
    params: Option<&ParamSet>,
    source_matched: &[Vec<f64>],
    target: &[Vec<f64>],
    omega: &[f64],
) -> f64 {
    let d = target[0].len();
    let k = if d == 2 { 1 } else { 3 };
    let r = rotation_rows(&omega[..k]);
    let t = &omega[k..];
    let moved: Vec<Vec<f64>> = source_matched
        .iter()
        .map(|s| (0..d).map(|i| (0..d).map(|j| r[i][j] * s[j]).sum::<f64>() + t[i]).collect())
        .collect();
    let (a, b) = match params {
        Some(p) => (pointnet_reference(p, &moved), pointnet_reference(p, target)),
        None => (moved, target.to_vec()),
    };
    let total: f64 = a.iter().zip(&b).map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).powi(2)).sum::<f64>()).sum();
    total / a.len() as f64
}

/// Unrolled tanh RNN cross-entropy `-sum_k w_k log p_k`.
pub fn rnn_reference(params: &ParamSet, seq: &[f64], omega: &[f64]) -> f64 {
    let (wx, _, h) = mat(params, "rnn.wx");
    let (wh, _, _) = mat(params, "rnn.wh");
    let b = params.get("rnn.b").unwrap().data().to_vec();
    let (wo, _, k) = mat(params, "rnn.wo");
    let bo = params.get("rnn.bo").unwrap().data().to_vec();
    let mut state = vec![0.0; h];
    for &x in seq {
        state = (0..h)
            .map(|j| (x * wx[j] + (0..h).map(|i| state[i] * wh[i * h + j]).sum::<f64>() + b[j]).tanh())
            .collect();
    }
    let logits: Vec<f64> = (0..k).map(|j| (0..h).map(|i| state[i] * wo[i * k + j]).sum::<f64>() + bo[j]).collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    -omega.iter().zip(&logits).map(|(w, l)| w * (l - lse)).sum::<f64>()
}
