//! Central finite-difference gradient checks in f64.

use adafm::tensor::{conv2d, grad, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type T64 = Tensor<f64>;

pub const H: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-4;

pub fn leaf(t: T64) -> T64 {
    t.into_leaf(true)
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Checks every coordinate of every parameter; returns the worst relative error.
pub fn check(params: &[T64], f: impl Fn(&[T64]) -> T64) -> f64 {
    check_impl(params, f, false).0
}

/// For functions that are piecewise linear in each coordinate: skips
/// coordinates whose ±h step crosses a breakpoint, detected by disagreeing
/// one-sided differences. Returns (worst error, skipped, total).
pub fn check_kinked(params: &[T64], f: impl Fn(&[T64]) -> T64) -> (f64, usize, usize) {
    check_impl(params, f, true)
}

fn check_impl(params: &[T64], f: impl Fn(&[T64]) -> T64, piecewise_linear: bool) -> (f64, usize, usize) {
    let loss = f(params);
    let analytic = grad(&loss, params, false).unwrap();
    let mut worst: f64 = 0.0;
    let (mut skipped, mut total) = (0, 0);
    for (pi, p) in params.iter().enumerate() {
        let g = analytic[pi].as_ref().map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; p.numel()]);
        for k in 0..p.numel() {
            let eval = |delta: f64| {
                let mut shifted: Vec<T64> = params.to_vec();
                let mut d = p.to_vec();
                d[k] += delta;
                shifted[pi] = T64::from_vec(d, p.shape()).unwrap();
                f(&shifted).item()
            };
            let (up, mid, down) = (eval(H), eval(0.0), eval(-H));
            total += 1;
            let (fwd, bwd) = ((up - mid) / H, (mid - down) / H);
            if piecewise_linear && (fwd - bwd).abs() > 1e-3 * fwd.abs().max(bwd.abs()).max(1e-3) {
                skipped += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * H);
            worst = worst.max(rel_err(g[k], numeric));
        }
    }
    (worst, skipped, total)
}

struct Net {
    c_in: usize,
    c_mid: usize,
    c_out: usize,
    size: usize,
    hidden: usize,
    slope: f64,
}

fn forward(net: &Net, x: &T64, probe: &T64, p: &[T64]) -> T64 {
    let n = x.shape()[0];
    let h1 = conv2d(x, &p[0], 1, 1).unwrap();
    let h1 = h1.add(&p[1].reshape(&[1, net.c_mid, 1, 1]).unwrap().expand(h1.shape()).unwrap()).unwrap().leaky_relu(net.slope);
    let h2 = conv2d(&h1, &p[2], 2, 1).unwrap().leaky_relu(net.slope);
    let flat = h2.reshape(&[n, h2.numel() / n]).unwrap();
    let d = flat.matmul(&p[3]).unwrap();
    let d = d.add(&p[4].reshape(&[1, net.hidden]).unwrap().expand(d.shape()).unwrap()).unwrap().leaky_relu(net.slope);
    d.mul(probe).unwrap().sum()
}

/// Gradient check of a random conv → strided conv → dense network with
/// leaky rectifiers. Returns (worst error, skipped, total).
pub fn random_network(trial: u64) -> (f64, usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
    let net = Net {
        c_in: rng.gen_range(1..=3),
        c_mid: rng.gen_range(2..=4),
        c_out: rng.gen_range(2..=4),
        size: rng.gen_range(4..=6),
        hidden: rng.gen_range(2..=4),
        slope: 0.2,
    };
    let n = 2;
    let ho = (net.size + 2 - 3) / 2 + 1;
    let flat = net.c_out * ho * ho;
    let x = T64::randn(&[n, net.c_in, net.size, net.size], 1.0, &mut rng);
    let probe = T64::randn(&[n, net.hidden], 1.0, &mut rng);
    let params = vec![
        leaf(T64::randn(&[net.c_mid, net.c_in, 3, 3], 0.5, &mut rng)),
        leaf(T64::randn(&[net.c_mid], 0.1, &mut rng)),
        leaf(T64::randn(&[net.c_out, net.c_mid, 3, 3], 0.5, &mut rng)),
        leaf(T64::randn(&[flat, net.hidden], 0.3, &mut rng)),
        leaf(T64::randn(&[net.hidden], 0.1, &mut rng)),
    ];
    check_kinked(&params, |p| forward(&net, &x, &probe, p))
}
