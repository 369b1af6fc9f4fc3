//! Reference implementations shared by the integration tests. Everything here
//! is deliberately naive: dense matrices, nested loops, explicit sums.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::function::gamma::ln_gamma;

/// All strictly increasing `m`-tuples from `1..=n-2`, by nested recursion.
pub fn all_configs(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(from: usize, last: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for c in from..=last {
            cur.push(c);
            rec(c + 1, last, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, n - 2, m, &mut Vec::new(), &mut out);
    out
}

pub fn knots(n: usize, config: &[usize]) -> Vec<usize> {
    let mut k = vec![0];
    k.extend_from_slice(config);
    k.push(n - 1);
    k
}

/// Hat-basis row at time `t` for the given knot times; outside the knot
/// range the outermost segments are extended.
pub fn basis_row(knot_times: &[f64], t: f64) -> Vec<f64> {
    let mk = knot_times.len();
    let mut g = vec![0.0; mk];
    let mut seg = 0;
    while seg + 2 < mk && knot_times[seg + 1] < t {
        seg += 1;
    }
    let (a, b) = (knot_times[seg], knot_times[seg + 1]);
    g[seg] = (b - t) / (b - a);
    g[seg + 1] = (t - a) / (b - a);
    g
}

pub fn design(times: &[f64], config: &[usize]) -> DMatrix<f64> {
    let kt: Vec<f64> = knots(times.len(), config).iter().map(|&k| times[k]).collect();
    let rows: Vec<Vec<f64>> = times.iter().map(|&t| basis_row(&kt, t)).collect();
    DMatrix::from_fn(times.len(), kt.len(), |i, j| rows[i][j])
}

pub fn rho_floor(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let centered: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let raw: f64 = values.iter().map(|v| v * v).sum();
    (1e-12 * centered).max(1e-24 * raw).max(f64::MIN_POSITIVE)
}

/// Least-squares fit of one configuration via Householder QR.
pub struct OracleFit {
    pub log_evidence: f64,
    pub beta: DVector<f64>,
    pub rho: f64,
    /// `(G'G)^-1`.
    pub cov: DMatrix<f64>,
    pub knot_times: Vec<f64>,
}

pub fn oracle_fit(times: &[f64], values: &[f64], config: &[usize]) -> OracleFit {
    let n = times.len();
    let g = design(times, config);
    let mk = g.ncols();
    let y = DVector::from_column_slice(values);
    let qr = g.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&qty.rows(0, mk).into_owned())
        .expect("full rank");
    let resid = &y - &g * &beta;
    let rho = resid.norm_squared().max(rho_floor(values));
    let log_det: f64 = (0..mk).map(|i| 2.0 * r[(i, i)].abs().ln()).sum();
    let k = (n - mk) as f64 / 2.0;
    let log_evidence =
        -0.5 * log_det - k * rho.ln() + ln_gamma(k) - k * std::f64::consts::PI.ln() - std::f64::consts::LN_2;
    let rinv = r.try_inverse().expect("invertible");
    let cov = &rinv * rinv.transpose();
    OracleFit {
        log_evidence,
        beta,
        rho,
        cov,
        knot_times: knots(n, config).iter().map(|&k| times[k]).collect(),
    }
}

/// Exhaustive posterior in lexicographic order.
pub struct OraclePosterior {
    pub configs: Vec<Vec<usize>>,
    pub log_evidence: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub log_z: f64,
}

pub fn oracle_posterior(times: &[f64], values: &[f64], m: usize) -> OraclePosterior {
    let configs = all_configs(times.len(), m);
    let log_evidence: Vec<f64> = configs
        .iter()
        .map(|c| oracle_fit(times, values, c).log_evidence)
        .collect();
    let max = log_evidence.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = log_evidence.iter().map(|l| (l - max).exp()).sum();
    let log_sum = max + sum.ln();
    let probabilities = log_evidence.iter().map(|l| (l - log_sum).exp()).collect();
    OraclePosterior {
        log_z: log_sum - (configs.len() as f64).ln(),
        configs,
        log_evidence,
        probabilities,
    }
}

/// Marginal mass per ordinal and grid index.
pub fn oracle_marginals(post: &OraclePosterior, n: usize, m: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; n]; m];
    for (c, p) in post.configs.iter().zip(&post.probabilities) {
        for (j, &i) in c.iter().enumerate() {
            out[j][i] += p;
        }
    }
    out
}

/// Posterior-weighted mean and sigma at each evaluation time.
pub fn oracle_segment_fit(
    times: &[f64],
    values: &[f64],
    post: &OraclePosterior,
    eval_times: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = times.len();
    let mut first = vec![0.0; eval_times.len()];
    let mut second = vec![0.0; eval_times.len()];
    for (c, p) in post.configs.iter().zip(&post.probabilities) {
        let fit = oracle_fit(times, values, c);
        let mk = c.len() + 2;
        let scale = fit.rho / (n - mk - 2) as f64;
        for (k, &t) in eval_times.iter().enumerate() {
            let g = DVector::from_vec(basis_row(&fit.knot_times, t));
            let phi = g.dot(&fit.beta);
            let var = scale * (g.transpose() * &fit.cov * &g)[(0, 0)];
            first[k] += p * phi;
            second[k] += p * (var + phi * phi);
        }
    }
    let sigma = first
        .iter()
        .zip(&second)
        .map(|(m, s)| (s - m * m).max(0.0).sqrt())
        .collect();
    (first, sigma)
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    // Legendre polynomial P_order and its derivative at x.
    let legendre = |x: f64| {
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=order {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        (p1, order as f64 * (x * p1 - p0) / (x * x - 1.0))
    };
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    for i in 0..order {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        for _ in 0..50 {
            let (p, dp) = legendre(x);
            x -= p / dp;
        }
        let (_, dp) = legendre(x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Log marginal likelihood of a single-change-point configuration by direct
/// numerical integration: tensor Gauss-Legendre over the three ordinates,
/// trapezoid over log sigma, flat ordinate prior and 1/sigma noise prior.
pub fn quadrature_log_evidence(times: &[f64], values: &[f64], config: &[usize]) -> f64 {
    let n = times.len();
    let g = design(times, config);
    let mk = g.ncols();
    assert_eq!(mk, 3, "quadrature oracle handles one change point");
    let fit = oracle_fit(times, values, config);
    let sigma_hat = (fit.rho / n as f64).sqrt();
    let (gl_x, gl_w) = gauss_legendre(32);
    let half_width: Vec<f64> = (0..mk).map(|j| 9.0 * fit.cov[(j, j)].sqrt()).collect();
    let rows: Vec<[f64; 3]> = (0..n).map(|i| [g[(i, 0)], g[(i, 1)], g[(i, 2)]]).collect();

    // Integral over the ordinates of exp(-rss / (2 sigma^2)) (2 pi sigma^2)^(-n/2).
    let inner = |sigma: f64| -> f64 {
        let s2 = 2.0 * sigma * sigma;
        let w: Vec<f64> = half_width.iter().map(|h| h * sigma).collect();
        let mut acc = 0.0;
        for (a, wa) in gl_x.iter().zip(&gl_w) {
            let b0 = fit.beta[0] + w[0] * a;
            for (b, wb) in gl_x.iter().zip(&gl_w) {
                let b1 = fit.beta[1] + w[1] * b;
                for (c, wc) in gl_x.iter().zip(&gl_w) {
                    let b2 = fit.beta[2] + w[2] * c;
                    let mut rss = 0.0;
                    for (row, y) in rows.iter().zip(values) {
                        let r = y - row[0] * b0 - row[1] * b1 - row[2] * b2;
                        rss += r * r;
                    }
                    // Shift by the minimum to keep the exponent in range.
                    acc += wa * wb * wc * (-(rss - fit.rho) / s2).exp();
                }
            }
        }
        let jac = w[0] * w[1] * w[2];
        (acc * jac).ln() - fit.rho / s2 - n as f64 / 2.0 * (std::f64::consts::PI * s2).ln()
    };

    // Trapezoid in u = ln sigma; the 1/sigma prior cancels the Jacobian.
    let h = 0.1;
    let (lo, hi) = (sigma_hat.ln() - 6.0, sigma_hat.ln() + 20.0);
    let steps = ((hi - lo) / h).round() as usize;
    let logs: Vec<f64> = (0..=steps).map(|i| inner((lo + i as f64 * h).exp())).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logs
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            w * (l - max).exp()
        })
        .sum();
    max + (sum * h).ln()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_noise(rng: &mut ChaCha8Rng, len: usize, sigma: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, sigma).unwrap();
    (0..len).map(|_| normal.sample(rng)).collect()
}

/// `offset + slope * t` up to the knee, slope changed by `delta` after it.
pub fn knee_series(times: &[f64], knee: usize, offset: f64, slope: f64, delta: f64) -> Vec<f64> {
    let tk = times[knee];
    times
        .iter()
        .map(|&t| offset + slope * t + if t > tk { delta * (t - tk) } else { 0.0 })
        .collect()
}

/// Random strictly increasing times starting at zero.
pub fn random_times(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    use rand::Rng;
    let mut t = 0.0;
    (0..len)
        .map(|i| {
            if i > 0 {
                t += rng.gen_range(0.5..1.5);
            }
            t
        })
        .collect()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
