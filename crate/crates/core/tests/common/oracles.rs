//! Loop and iteration oracles independent of the library's kernels.

use adafm::metrics::analysis::DOMINANCE_MARGIN;
use adafm::metrics::sorted_gamma_matrix;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `W'_{ij} = γ_{ij}·W_{ij} + β_{ij}`, element by element.
pub fn adafm_loop(w: &[f32], gamma: &[f32], beta: &[f32], dims: [usize; 4]) -> Vec<f32> {
    let [o, i, k1, k2] = dims;
    let mut out = vec![0.0; w.len()];
    for a in 0..o {
        for b in 0..i {
            for y in 0..k1 {
                for x in 0..k2 {
                    let idx = ((a * i + b) * k1 + y) * k2 + x;
                    out[idx] = gamma[a * i + b] * w[idx] + beta[a * i + b];
                }
            }
        }
    }
    out
}

/// Linear-radicand demodulation `η_a = (Σ s_b·W_{ab·} + ε)^{-1/2}`.
pub fn demod_loop(w: &[f64], s: &[f64], eps: f64, dims: [usize; 4]) -> Vec<f64> {
    let [o, i, k1, k2] = dims;
    let kk = k1 * k2;
    let mut out = vec![0.0; w.len()];
    for a in 0..o {
        let mut radicand = eps;
        for b in 0..i {
            for k in 0..kk {
                radicand += s[b] * w[(a * i + b) * kk + k];
            }
        }
        let eta = 1.0 / radicand.sqrt();
        for b in 0..i {
            for k in 0..kk {
                let idx = (a * i + b) * kk + k;
                out[idx] = eta * s[b] * w[idx];
            }
        }
    }
    out
}

pub fn random_dims(rng: &mut ChaCha8Rng) -> [usize; 4] {
    let k = [1, 3][rng.gen_range(0..2)];
    [rng.gen_range(1..6), rng.gen_range(1..6), k, k]
}

pub fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.1
}

/// Denman–Beavers iteration; converges to the principal root for matrices
/// with positive real spectrum, symmetric or not.
pub fn db_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let (mut y, mut z) = (m.clone(), DMatrix::identity(n, n));
    for _ in 0..100 {
        let yi = y.clone().try_inverse().unwrap();
        let zi = z.clone().try_inverse().unwrap();
        let ny = (&y + zi) * 0.5;
        let nz = (&z + yi) * 0.5;
        let done = (&ny - &y).norm() < 1e-15 * ny.norm();
        y = ny;
        z = nz;
        if done {
            break;
        }
    }
    y
}

/// Checks that the sorted γ matrix of `m` is a column permutation of the
/// independently clipped and rescaled input, that dominant blocks are
/// ordered and dominant, and that shuffling input columns leaves the
/// dominant block unchanged (tie-free inputs only).
pub fn sorted_gamma_violation(m: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Option<String> {
    let (rows, cols) = (m.len(), m[0].len());
    let s = match sorted_gamma_matrix(m) {
        Ok(s) => s,
        Err(e) => return Some(e.to_string()),
    };
    let mut seen = s.permutation.clone();
    seen.sort_unstable();
    if seen != (0..cols).collect::<Vec<_>>() {
        return Some(format!("not a permutation: {:?}", s.permutation));
    }
    let clip: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|v| v.clamp(0.9, 1.1)).collect()).collect();
    let lo = clip.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = clip.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    for r in 0..rows {
        for (c, &j) in s.permutation.iter().enumerate() {
            let expect = if hi > lo { (clip[r][j] - lo) / (hi - lo) } else { 0.0 };
            if (s.matrix[r][c] - expect).abs() >= 1e-12 {
                return Some(format!("entry ({r},{c}) is {} not {expect}", s.matrix[r][c]));
            }
        }
    }
    let col_of = |j: usize| s.permutation.iter().position(|&p| p == j).unwrap();
    for (i, set) in s.dominant.iter().enumerate() {
        if set.windows(2).any(|w| s.matrix[i][col_of(w[0])] < s.matrix[i][col_of(w[1])]) {
            return Some(format!("dominant set of row {i} is not descending"));
        }
        for &j in set {
            let c = col_of(j);
            if !(0..rows).filter(|&k| k != i).all(|k| s.matrix[i][c] - s.matrix[k][c] > DOMINANCE_MARGIN) {
                return Some(format!("column {j} is not dominant for row {i}"));
            }
        }
    }
    // clipped ties fall back to index order, so only tie-free cases apply
    let mut flat: Vec<f64> = clip.iter().flatten().copied().collect();
    flat.sort_by(f64::total_cmp);
    if flat.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    let mut order: Vec<usize> = (0..cols).collect();
    order.shuffle(rng);
    let shuffled: Vec<Vec<f64>> = m.iter().map(|r| order.iter().map(|&j| r[j]).collect()).collect();
    let t = sorted_gamma_matrix(&shuffled).unwrap();
    let k: usize = s.dominant.iter().map(Vec::len).sum();
    (0..rows)
        .any(|r| s.matrix[r][..k] != t.matrix[r][..k])
        .then(|| "dominant block changed under column shuffle".to_string())
}
