//! One-dimensional Gaussian mixtures fitted by EM, with the number of
//! components chosen by BIC.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::EncodeError;
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmConfig {
    pub max_modes: usize,
    pub weight_threshold: f64,
    /// Stop when the mean per-sample log-likelihood improves by less.
    pub tol: f64,
    pub max_iter: usize,
    pub std_floor: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            max_modes: 10,
            weight_threshold: 0.005,
            tol: 1e-4,
            max_iter: 100,
            std_floor: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub active: Vec<bool>,
}

impl GmmParams {
    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Indices of the active components, in order.
    pub fn active_modes(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&k| self.active[k]).collect()
    }

    /// Posterior over active components at `x`, in `active_modes` order.
    pub fn responsibilities(&self, x: f64) -> Vec<f64> {
        let modes = self.active_modes();
        let logp: Vec<f64> = modes
            .iter()
            .map(|&k| math::ln(self.weights[k]) + math::normal_log_pdf(x, self.means[k], self.stds[k]))
            .collect();
        let lse = math::log_sum_exp(&logp);
        if !lse.is_finite() {
            // x is astronomically far from every mode: fall back to the nearest.
            let mut out = vec![0.0; modes.len()];
            let nearest = (0..modes.len())
                .min_by(|&a, &b| {
                    let da = ((x - self.means[modes[a]]) / self.stds[modes[a]]).abs();
                    let db = ((x - self.means[modes[b]]) / self.stds[modes[b]]).abs();
                    da.total_cmp(&db)
                })
                .unwrap_or(0);
            out[nearest] = 1.0;
            return out;
        }
        logp.iter().map(|l| math::exp(l - lse)).collect()
    }

    pub fn log_likelihood(&self, values: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.weights.len()];
        values
            .iter()
            .map(|&x| {
                for k in 0..self.weights.len() {
                    buf[k] = math::ln(self.weights[k]) + math::normal_log_pdf(x, self.means[k], self.stds[k]);
                }
                math::log_sum_exp(&buf)
            })
            .sum()
    }
}

fn check_values(values: &[f64]) -> Result<(), EncodeError> {
    if values.is_empty() {
        return Err(EncodeError::Degenerate("no values to fit".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EncodeError::NonFinite);
    }
    Ok(())
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

fn distinct_count(sorted: &[f64]) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    1 + sorted.windows(2).filter(|w| w[0] != w[1]).count()
}

/// EM for a `k`-component mixture started from quantile means. Returns the
/// fit and the total log-likelihood after each iteration; the first entry
/// is the likelihood of the initial parameters.
pub fn em(values: &[f64], k: usize, cfg: &GmmConfig) -> Result<(GmmParams, Vec<f64>), EncodeError> {
    check_values(values)?;
    if k == 0 {
        return Err(EncodeError::Degenerate("zero components".into()));
    }
    let n = values.len();
    let s = sorted(values);
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let spread = math::sqrt(var).max(cfg.std_floor);
    let mut weights = vec![1.0 / k as f64; k];
    let mut means: Vec<f64> = (0..k)
        .map(|j| {
            let q = (j as f64 + 0.5) / k as f64;
            s[((q * n as f64) as usize).min(n - 1)]
        })
        .collect();
    let mut stds = vec![if k == 1 { spread } else { spread / k as f64 }.max(cfg.std_floor); k];

    let mut resp = vec![0.0; n * k];
    let mut logp = vec![0.0; k];
    let e_step = |weights: &[f64], means: &[f64], stds: &[f64], resp: &mut [f64], logp: &mut [f64]| -> f64 {
        let mut ll = 0.0;
        for (i, &x) in values.iter().enumerate() {
            for j in 0..k {
                logp[j] = math::ln(weights[j]) + math::normal_log_pdf(x, means[j], stds[j]);
            }
            let lse = math::log_sum_exp(logp);
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = math::exp(logp[j] - lse);
            }
        }
        ll
    };

    let mut trace = vec![e_step(&weights, &means, &stds, &mut resp, &mut logp)];
    for _ in 0..cfg.max_iter {
        for j in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if nk < 1e-10 {
                // An empty component keeps its location and is pruned later.
                weights[j] = 1e-300;
                continue;
            }
            let mu = (0..n).map(|i| resp[i * k + j] * values[i]).sum::<f64>() / nk;
            let v = (0..n)
                .map(|i| resp[i * k + j] * (values[i] - mu) * (values[i] - mu))
                .sum::<f64>()
                / nk;
            weights[j] = nk / n as f64;
            means[j] = mu;
            stds[j] = math::sqrt(v).max(cfg.std_floor);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let ll = e_step(&weights, &means, &stds, &mut resp, &mut logp);
        let prev = *trace.last().expect("non-empty");
        trace.push(ll);
        if (ll - prev) / (n as f64) < cfg.tol {
            break;
        }
    }
    let active = weights.iter().map(|&w| w >= cfg.weight_threshold).collect();
    let mut params = GmmParams {
        weights,
        means,
        stds,
        active,
    };
    ensure_active(&mut params);
    Ok((params, trace))
}

fn ensure_active(p: &mut GmmParams) {
    if p.n_active() == 0 {
        let best = (0..p.weights.len())
            .max_by(|&a, &b| p.weights[a].total_cmp(&p.weights[b]))
            .unwrap_or(0);
        p.active[best] = true;
    }
}

/// Fits mixtures with `1..=max_modes` components (capped by the number of
/// distinct values), keeps the one with the lowest BIC and deactivates
/// components lighter than `weight_threshold`.
pub fn fit_gmm(values: &[f64], cfg: &GmmConfig) -> Result<GmmParams, EncodeError> {
    check_values(values)?;
    let n = values.len() as f64;
    let max_k = cfg.max_modes.max(1).min(distinct_count(&sorted(values)));
    let mut best: Option<(f64, GmmParams)> = None;
    for k in 1..=max_k {
        let (params, trace) = em(values, k, cfg)?;
        let ll = *trace.last().expect("non-empty");
        let free = (3 * k - 1) as f64;
        let bic = -2.0 * ll + free * math::ln(n);
        if best.as_ref().is_none_or(|(b, _)| bic < *b) {
            best = Some((bic, params));
        }
    }
    Ok(best.expect("at least one candidate").1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_values_collapse_to_one_floored_mode() {
        let g = fit_gmm(&[3.5; 50], &GmmConfig::default()).unwrap();
        assert_eq!(g.n_active(), 1);
        assert_eq!(g.means[0], 3.5);
        assert_eq!(g.stds[0], 1e-4);
    }

    #[test]
    fn single_mode_is_the_sample_mle() {
        let values: Vec<f64> = (0..200).map(|i| math::powi(i as f64 * 0.37 % 5.0, 2)).collect();
        let cfg = GmmConfig {
            max_modes: 1,
            ..GmmConfig::default()
        };
        let g = fit_gmm(&values, &cfg).unwrap();
        let mean = values.iter().sum::<f64>() / 200.0;
        let std = math::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 200.0);
        assert!((g.means[0] - mean).abs() < 1e-6);
        assert!((g.stds[0] - std).abs() < 1e-6);
        assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(matches!(fit_gmm(&[1.0, f64::NAN], &GmmConfig::default()), Err(EncodeError::NonFinite)));
        assert!(matches!(fit_gmm(&[], &GmmConfig::default()), Err(EncodeError::Degenerate(_))));
    }
}
