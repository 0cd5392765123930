use crate::error::{Result, SvrError};
use crate::util::dot;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    Paper,
    Mahalanobis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceStats {
    pub h: usize,
    pub range: (f64, f64),
    #[serde(rename = "n")]
    pub n_lh: usize,
    pub mean: Vec<f64>,
    /// Descending, clipped at zero.
    pub eigvals: Vec<f64>,
    /// Column k (row-major d x d storage, `eigvecs[i * d + k]`) pairs with
    /// `eigvals[k]`.
    pub eigvecs: Vec<f64>,
    pub sig_vec: Vec<f64>,
    #[serde(rename = "H", with = "crate::float_serde")]
    pub h_stat: f64,
    pub heavy: bool,
}

impl SliceStats {
    pub fn d(&self) -> usize {
        self.mean.len()
    }

    /// lambda_d / lambda_1, or 1 for a slice with no spread.
    pub fn ratio(&self) -> f64 {
        let d = self.d();
        if self.eigvals[0] > 0.0 {
            self.eigvals[d - 1] / self.eigvals[0]
        } else {
            1.0
        }
    }

    pub fn is_thin(&self) -> bool {
        self.h_stat >= 0.0
    }

    fn eigvec(&self, k: usize) -> Vec<f64> {
        let d = self.d();
        (0..d).map(|i| self.eigvecs[i * d + k]).collect()
    }
}

/// H = ln(lambda_mid^2 / (lambda_1 lambda_d)) with lambda_mid the geometric
/// mean of lambda_2..lambda_{d-1}. In two dimensions there is no middle
/// eigenvalue and lambda_mid is taken as sqrt(lambda_1 lambda_2), so H = 0.
pub fn h_statistic(eigvals: &[f64]) -> f64 {
    let d = eigvals.len();
    let (l1, ld) = (eigvals[0], eigvals[d - 1]);
    if !(l1 > 0.0) {
        return 0.0;
    }
    if d < 3 {
        return 0.0;
    }
    let mid = &eigvals[1..d - 1];
    if mid.iter().any(|&v| v <= 0.0) {
        // middle spectrum collapsed as well: both logs diverge
        return if ld > 0.0 { f64::NEG_INFINITY } else { 0.0 };
    }
    let log_mid = mid.iter().map(|v| v.ln()).sum::<f64>() / mid.len() as f64;
    if ld <= 0.0 {
        return f64::INFINITY;
    }
    2.0 * log_mid - l1.ln() - ld.ln()
}

/// Flips v so that its largest-magnitude component is positive.
pub fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for k in 1..v.len() {
        if v[k].abs() > v[best].abs() {
            best = k;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Mean, biased covariance and spectrum of one slice.
pub fn slice_stats_from_rows(
    h: usize,
    range: (f64, f64),
    x: &[f64],
    d: usize,
    rows: &[usize],
    heavy: bool,
) -> Result<SliceStats> {
    let n = rows.len();
    let mut mean = vec![0.0; d];
    if n == 0 {
        let mut eigvecs = vec![0.0; d * d];
        for k in 0..d {
            eigvecs[k * d + k] = 1.0;
        }
        let mut sig = vec![0.0; d];
        sig[d - 1] = 1.0;
        return Ok(SliceStats {
            h,
            range,
            n_lh: 0,
            mean,
            eigvals: vec![0.0; d],
            eigvecs,
            sig_vec: sig,
            h_stat: 0.0,
            heavy,
        });
    }
    for &i in rows {
        for (m, v) in mean.iter_mut().zip(&x[i * d..(i + 1) * d]) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut c = vec![0.0; d];
    for &i in rows {
        for k in 0..d {
            c[k] = x[i * d + k] - mean[k];
        }
        for a in 0..d {
            let ca = c[a];
            for b in a..d {
                cov[(a, b)] += ca * c[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / n as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let eig = SymmetricEigen::try_new(cov, f64::EPSILON, 10_000).ok_or(SvrError::Eigen(h))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigvals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let mut eigvecs = vec![0.0; d * d];
    for (col, &k) in order.iter().enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        canonical_sign(&mut v);
        for i in 0..d {
            eigvecs[i * d + col] = v[i];
        }
    }
    let h_stat = h_statistic(&eigvals);
    let mut s = SliceStats {
        h,
        range,
        n_lh: n,
        mean,
        eigvals,
        eigvecs,
        sig_vec: Vec::new(),
        h_stat,
        heavy,
    };
    s.sig_vec = if s.is_thin() { s.eigvec(d - 1) } else { s.eigvec(0) };
    Ok(s)
}

/// Distance of x to a slice. Paper mode returns the squared form of the
/// thin or wide branch; Mahalanobis mode returns the whitened norm with
/// eigenvalues floored at 1e-10 lambda_1.
pub fn slice_distance(x: &[f64], s: &SliceStats, mode: DistanceMode) -> f64 {
    let d = s.d();
    match mode {
        DistanceMode::Paper => {
            let mut r2 = 0.0;
            let mut proj = 0.0;
            for k in 0..d {
                let c = x[k] - s.mean[k];
                r2 += c * c;
                proj += c * s.sig_vec[k];
            }
            let ratio = s.ratio();
            if s.is_thin() {
                proj * proj + ratio * r2
            } else {
                r2 + ratio * proj * proj
            }
        }
        DistanceMode::Mahalanobis => {
            let floor = if s.eigvals[0] > 0.0 { 1e-10 * s.eigvals[0] } else { 1.0 };
            let c: Vec<f64> = (0..d).map(|k| x[k] - s.mean[k]).collect();
            let mut acc = 0.0;
            for k in 0..d {
                let e: Vec<f64> = (0..d).map(|i| s.eigvecs[i * d + k]).collect();
                let p = dot(&c, &e);
                acc += p * p / s.eigvals[k].max(floor);
            }
            acc.sqrt()
        }
    }
}
