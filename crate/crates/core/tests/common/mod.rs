//! Independent reference computations used by the integration tests.
//!
//! Everything here works on plain `Vec<Vec<f64>>` with textbook formulas
//! (cofactor determinants, adjugate inverses, conditional normals) so that it
//! shares no code path with the library.

#![allow(dead_code)]

use incomplete_fa::{FactorParams, MaskedMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Determinant by Laplace expansion along the first row.
pub fn det_cofactor(m: &Mat) -> f64 {
    let n = m.len();
    match n {
        0 => 1.0,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => (0..n)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[0][j] * det_cofactor(&minor(m, 0, j))
            })
            .sum(),
    }
}

pub fn minor(m: &Mat, row: usize, col: usize) -> Mat {
    m.iter()
        .enumerate()
        .filter(|&(i, _)| i != row)
        .map(|(_, r)| {
            r.iter()
                .enumerate()
                .filter(|&(j, _)| j != col)
                .map(|(_, &v)| v)
                .collect()
        })
        .collect()
}

/// Inverse as adjugate over determinant.
pub fn inverse_adjugate(m: &Mat) -> Mat {
    let n = m.len();
    if n == 1 {
        return vec![vec![1.0 / m[0][0]]];
    }
    let det = det_cofactor(m);
    let mut inv = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            inv[j][i] = sign * det_cofactor(&minor(m, i, j)) / det;
        }
    }
    inv
}

pub fn matvec(m: &Mat, v: &[f64]) -> Vec<f64> {
    m.iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|r| {
            (0..cols)
                .map(|j| (0..inner).map(|t| r[t] * b[t][j]).sum())
                .collect()
        })
        .collect()
}

pub fn transpose(m: &Mat) -> Mat {
    let cols = m.first().map_or(0, Vec::len);
    (0..cols).map(|j| m.iter().map(|r| r[j]).collect()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn to_mat(m: &DMatrix<f64>) -> Mat {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn from_mat(m: &Mat) -> DMatrix<f64> {
    let cols = m.first().map_or(0, Vec::len);
    DMatrix::from_fn(m.len(), cols, |i, j| m[i][j])
}

pub fn submatrix(m: &Mat, rows: &[usize], cols: &[usize]) -> Mat {
    rows.iter().map(|&i| cols.iter().map(|&j| m[i][j]).collect()).collect()
}

/// `A A' + diag(psi)` by explicit sums.
pub fn sigma_oracle(params: &FactorParams) -> Mat {
    let a = params.loadings();
    let psi = params.uniquenesses();
    let (d, k) = a.shape();
    let mut s = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            let mut v = 0.0;
            for t in 0..k {
                v += a[(i, t)] * a[(j, t)];
            }
            if i == j {
                v += psi[i];
            }
            s[i][j] = v;
        }
    }
    s
}

/// Multivariate normal log-density via cofactor determinant and adjugate inverse.
pub fn mvn_logpdf(x: &[f64], mu: &[f64], sigma: &Mat) -> f64 {
    let d = x.len();
    let r: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
    let inv = inverse_adjugate(sigma);
    let quad = dot(&r, &matvec(&inv, &r));
    -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + det_cofactor(sigma).ln() + quad)
}

/// Observed log-likelihood row by row from explicit submatrices.
pub fn loglik_observed_oracle(params: &FactorParams, data: &MaskedMatrix) -> f64 {
    let sigma = sigma_oracle(params);
    let mu: Vec<f64> = params.mu().iter().copied().collect();
    let mut total = 0.0;
    for n in 0..data.nrows() {
        let obs: Vec<usize> = (0..data.ncols()).filter(|&i| data.is_observed(n, i)).collect();
        if obs.is_empty() {
            continue;
        }
        let x: Vec<f64> = obs.iter().map(|&i| data.values()[(n, i)]).collect();
        let m: Vec<f64> = obs.iter().map(|&i| mu[i]).collect();
        total += mvn_logpdf(&x, &m, &submatrix(&sigma, &obs, &obs));
    }
    total
}

/// Conditional mean and covariance of the missing block given the observed one.
pub fn conditional_normal(
    sigma: &Mat,
    mu: &[f64],
    obs: &[usize],
    mis: &[usize],
    x_obs: &[f64],
) -> (Vec<f64>, Mat) {
    if obs.is_empty() {
        return (
            mis.iter().map(|&i| mu[i]).collect(),
            submatrix(sigma, mis, mis),
        );
    }
    let s_oo_inv = inverse_adjugate(&submatrix(sigma, obs, obs));
    let s_mo = submatrix(sigma, mis, obs);
    let r: Vec<f64> = obs.iter().zip(x_obs).map(|(&i, &x)| x - mu[i]).collect();
    let gain = matmul(&s_mo, &s_oo_inv);
    let shift = matvec(&gain, &r);
    let mean = mis.iter().zip(&shift).map(|(&i, s)| mu[i] + s).collect();
    let reduce = matmul(&gain, &transpose(&s_mo));
    let s_mm = submatrix(sigma, mis, mis);
    let cov = s_mm
        .iter()
        .zip(&reduce)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    (mean, cov)
}

/// `(1/N) sum_n [(xhat_n - mu)(xhat_n - mu)' + T_n]` built from conditional normals.
pub fn expected_cov_oracle(data: &MaskedMatrix, mu: &[f64], params: &FactorParams) -> Mat {
    let d = data.ncols();
    let sigma = sigma_oracle(params);
    let mut s = vec![vec![0.0; d]; d];
    for n in 0..data.nrows() {
        let obs: Vec<usize> = (0..d).filter(|&i| data.is_observed(n, i)).collect();
        let mis: Vec<usize> = (0..d).filter(|&i| !data.is_observed(n, i)).collect();
        let x_obs: Vec<f64> = obs.iter().map(|&i| data.values()[(n, i)]).collect();
        let (cmean, ccov) = conditional_normal(&sigma, mu, &obs, &mis, &x_obs);
        let mut xhat = vec![0.0; d];
        for (&i, &x) in obs.iter().zip(&x_obs) {
            xhat[i] = x;
        }
        for (&i, &m) in mis.iter().zip(&cmean) {
            xhat[i] = m;
        }
        for i in 0..d {
            for j in 0..d {
                s[i][j] += (xhat[i] - mu[i]) * (xhat[j] - mu[j]);
            }
        }
        for (a, &i) in mis.iter().enumerate() {
            for (b, &j) in mis.iter().enumerate() {
                s[i][j] += ccov[a][b];
            }
        }
    }
    let n = data.nrows() as f64;
    s.iter().map(|r| r.iter().map(|v| v / n).collect()).collect()
}

/// `E[z | x_o] = A_o' Sigma_oo^{-1} (x_o - mu_o)`.
pub fn posterior_mean_oracle(params: &FactorParams, obs: &[usize], x_obs: &[f64]) -> Vec<f64> {
    let k = params.dims().k;
    if obs.is_empty() {
        return vec![0.0; k];
    }
    let sigma = sigma_oracle(params);
    let inv = inverse_adjugate(&submatrix(&sigma, obs, obs));
    let r: Vec<f64> = obs.iter().zip(x_obs).map(|(&i, &x)| x - params.mu()[i]).collect();
    let w = matvec(&inv, &r);
    (0..k)
        .map(|t| obs.iter().zip(&w).map(|(&i, wi)| params.loadings()[(i, t)] * wi).sum())
        .collect()
}

/// `-(log|Sigma| + tr(Sigma^{-1} S))`, the part of the expected complete-data
/// log-likelihood that depends on `A` and `Psi`, up to the factor `N/2`.
pub fn q_function(loadings: &DMatrix<f64>, psi: &[f64], s: &Mat) -> f64 {
    let params = FactorParams::new(
        DVector::zeros(psi.len()),
        loadings.clone(),
        DVector::from_column_slice(psi),
    )
    .unwrap();
    let sigma = sigma_oracle(&params);
    let inv = inverse_adjugate(&sigma);
    let trace: f64 = (0..psi.len()).map(|i| dot(&inv[i], &transpose(s)[i])).sum();
    -(det_cofactor(&sigma).ln() + trace)
}

/// Maximizer of a unimodal function on `[lo, hi]`.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol * (1.0 + lo.abs() + hi.abs()) {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Random factor model with loadings of order one and uniquenesses in `[0.2, 1.2]`.
pub fn random_params(d: usize, k: usize, seed: u64) -> FactorParams {
    let mut r = rng(seed);
    let mu = DVector::from_fn(d, |_, _| normal(&mut r));
    let a = DMatrix::from_fn(d, k, |_, _| normal(&mut r));
    let psi = DVector::from_fn(d, |_, _| 0.2 + r.random::<f64>());
    FactorParams::new(mu, a, psi).unwrap()
}

/// Random data with each cell missing with probability `rate`; every row keeps
/// at least one observed value unless `allow_empty`.
pub fn random_masked(n: usize, d: usize, rate: f64, seed: u64, allow_empty: bool) -> MaskedMatrix {
    let mut r = rng(seed);
    let values = DMatrix::from_fn(n, d, |_, _| 2.0 * normal(&mut r));
    let mut mask = DMatrix::from_fn(n, d, |_, _| r.random::<f64>() >= rate);
    for row in 0..n {
        if !allow_empty && (0..d).all(|c| !mask[(row, c)]) {
            mask[(row, row % d)] = true;
        }
    }
    for c in 0..d {
        if (0..n).all(|row| !mask[(row, c)]) {
            mask[(c % n, c)] = true;
        }
    }
    MaskedMatrix::new(values, mask).unwrap()
}

/// Data drawn from `params` with MCAR deletion at a common rate.
pub fn model_masked(params: &FactorParams, n: usize, rate: f64, seed: u64) -> MaskedMatrix {
    let x = incomplete_fa::simulation::draw_rows(params, n, seed);
    let d = params.dims().d;
    let rates = incomplete_fa::MissingRates::new(vec![rate; d]).unwrap();
    incomplete_fa::apply_mcar_mask(&x, &rates, seed ^ 0xABCD).unwrap()
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
