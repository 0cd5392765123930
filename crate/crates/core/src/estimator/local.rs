use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Piecewise polynomial in the projected coordinate z = <v, x> over j
/// uniform bins of `interval`. Each polynomial is stored in the local
/// coordinate u = (z - bin center) / (bin half width).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalRegressor {
    pub h: usize,
    pub direction: Vec<f64>,
    pub interval: (f64, f64),
    pub j: usize,
    /// Bins (0-based) holding at least n_lh / j pooled points.
    pub included: Vec<usize>,
    /// Coefficients, lowest degree first; empty for excluded bins.
    pub coeffs: Vec<Vec<f64>>,
    pub fallback: f64,
    /// Truncation level M; `None` means unbounded.
    pub clip: Option<f64>,
}

impl LocalRegressor {
    fn width(&self) -> f64 {
        (self.interval.1 - self.interval.0) / self.j as f64
    }

    /// Bin containing z, or None outside the interval.
    pub fn bin_of(&self, z: f64) -> Option<usize> {
        let (lo, hi) = self.interval;
        if !(z >= lo && z <= hi) {
            return None;
        }
        let w = self.width();
        if w > 0.0 {
            Some((((z - lo) / w).floor() as usize).min(self.j - 1))
        } else {
            Some(0)
        }
    }

    fn local_coord(&self, k: usize, z: f64) -> f64 {
        let w = self.width();
        if w > 0.0 {
            let c = self.interval.0 + (k as f64 + 0.5) * w;
            (z - c) / (0.5 * w)
        } else {
            0.0
        }
    }

    fn clip(&self, v: f64) -> f64 {
        match self.clip {
            Some(m) => v.clamp(-m, m),
            None => v,
        }
    }

    /// Raw evaluation in the projected coordinate.
    pub fn eval_projected(&self, z: f64) -> f64 {
        let v = match self.bin_of(z) {
            Some(k) if !self.coeffs[k].is_empty() => {
                let u = self.local_coord(k, z);
                self.coeffs[k].iter().rev().fold(0.0, |acc, c| acc * u + c)
            }
            _ => self.fallback,
        };
        self.clip(v)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let z: f64 = self.direction.iter().zip(x).map(|(a, b)| a * b).sum();
        self.eval_projected(z)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LocalFitParams {
    pub j: usize,
    pub m: usize,
    pub clip: Option<f64>,
    pub strict_paper_fallback: bool,
}

/// Fits the local regressor of slice h from the pooled sample already
/// projected onto `direction`. `n_lh` is the size of slice h itself and sets
/// the bin inclusion threshold.
pub fn fit_local_regressor(
    h: usize,
    direction: Vec<f64>,
    z: &[f64],
    y: &[f64],
    n_lh: usize,
    params: LocalFitParams,
) -> LocalRegressor {
    let j = params.j.max(1);
    let (lo, hi) = z.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let fallback = if params.strict_paper_fallback || y.is_empty() {
        0.0
    } else {
        y.iter().sum::<f64>() / y.len() as f64
    };
    let mut reg = LocalRegressor {
        h,
        direction,
        interval: if z.is_empty() { (0.0, 0.0) } else { (lo, hi) },
        j,
        included: Vec::new(),
        coeffs: vec![Vec::new(); j],
        fallback,
        clip: params.clip,
    };
    if z.is_empty() {
        return reg;
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); j];
    for (i, &v) in z.iter().enumerate() {
        if let Some(k) = reg.bin_of(v) {
            members[k].push(i);
        }
    }
    for (k, rows) in members.iter().enumerate() {
        if rows.is_empty() || rows.len() * j < n_lh {
            continue;
        }
        let u: Vec<f64> = rows.iter().map(|&i| reg.local_coord(k, z[i])).collect();
        let v: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        reg.coeffs[k] = least_squares_poly(&u, &v, params.m.min(rows.len() - 1));
        reg.included.push(k);
    }
    reg
}

/// Least-squares polynomial through (u, v), lowering the degree whenever the
/// normal equations are numerically singular.
pub fn least_squares_poly(u: &[f64], v: &[f64], degree: usize) -> Vec<f64> {
    let mut p = degree;
    loop {
        if p == 0 {
            return vec![v.iter().sum::<f64>() / v.len() as f64];
        }
        let q = p + 1;
        let mut a = DMatrix::<f64>::zeros(q, q);
        let mut b = DVector::<f64>::zeros(q);
        let mut pow = vec![0.0; 2 * q - 1];
        for (&ui, &vi) in u.iter().zip(v) {
            let mut w = 1.0;
            for e in pow.iter_mut() {
                *e = w;
                w *= ui;
            }
            for r in 0..q {
                b[r] += pow[r] * vi;
                for c in 0..q {
                    a[(r, c)] += pow[r + c];
                }
            }
        }
        let diag: Vec<f64> = (0..q).map(|r| a[(r, r)]).collect();
        if let Some(ch) = a.cholesky() {
            let l = ch.l();
            let well_posed = (0..q).all(|r| l[(r, r)] * l[(r, r)] > 1e-12 * diag[r]);
            if well_posed {
                return ch.solve(&b).iter().copied().collect();
            }
        }
        p -= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_quadratic_is_recovered() {
        let u: Vec<f64> = (0..20).map(|i| -1.0 + i as f64 / 10.0).collect();
        let v: Vec<f64> = u.iter().map(|x| 1.0 - 2.0 * x + 0.5 * x * x).collect();
        let c = least_squares_poly(&u, &v, 2);
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] + 2.0).abs() < 1e-12 && (c[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn repeated_abscissa_reduces_degree() {
        let c = least_squares_poly(&[0.3, 0.3, 0.3], &[1.0, 2.0, 3.0], 2);
        assert_eq!(c, vec![2.0]);
    }
}
