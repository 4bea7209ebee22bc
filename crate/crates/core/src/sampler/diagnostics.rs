//! Convergence diagnostics for multiple chains.

use serde::Serialize;

use super::PosteriorDraws;

/// Summary of one parameter across chains.
#[derive(Debug, Clone, Serialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Split-R̂; `NaN` when undefined (constant chains).
    pub rhat: f64,
    pub ess: f64,
    pub mcse_mean: f64,
    pub mcse_sd: f64,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub params: Vec<ParamSummary>,
    pub acceptance: Vec<f64>,
    /// All R̂ values defined and at most this threshold.
    pub rhat_threshold: f64,
    pub converged: bool,
}

pub const RHAT_THRESHOLD: f64 = 1.05;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let half = n / 2;
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        out.push(&c[..half]);
        out.push(&c[n - half..n]);
    }
    out
}

/// Split-R̂ over equal-length chains; `NaN` when within-chain variance is zero.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let parts = split(chains);
    let n = parts.first().map_or(0, |p| p.len());
    if parts.len() < 2 || n < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = parts.iter().map(|p| mean(p)).collect();
    let w = parts.iter().map(|p| variance(p)).sum::<f64>() / parts.len() as f64;
    let b_over_n = variance(&means);
    if !(w > 0.0) {
        return f64::NAN;
    }
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;
    (var_plus / w).sqrt()
}

fn autocovariance(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    let m = mean(x);
    let mut s = 0.0;
    for i in 0..n - lag {
        s += (x[i] - m) * (x[i + lag] - m);
    }
    s / n as f64
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if m == 0 || n < 4 {
        return 0.0;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let chain_var: Vec<f64> = chains
        .iter()
        .map(|c| autocovariance(c, 0) * n as f64 / (n as f64 - 1.0))
        .collect();
    let w = chain_var.iter().sum::<f64>() / m as f64;
    if !(w > 0.0) {
        return 0.0;
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let b_over_n = if m > 1 { variance(&means) } else { 0.0 };
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;
    let rho = |t: usize| -> f64 {
        let acov = chains.iter().map(|c| autocovariance(c, t)).sum::<f64>() / m as f64;
        1.0 - (w - acov) / var_plus
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    let ess = (m * n) as f64 / tau.max(1.0 / ((m * n) as f64).log10().max(1.0));
    ess.min((m * n) as f64 * ((m * n) as f64).log10())
}

/// Per-parameter diagnostics for a set of draws.
pub fn diagnostics(draws: &PosteriorDraws) -> DiagnosticsReport {
    let mut params = Vec::with_capacity(draws.param_names.len());
    let mut converged = draws.n_chains() >= 1;
    for (j, name) in draws.param_names.iter().enumerate() {
        let chains = draws.chain_columns(j);
        let all: Vec<f64> = chains.iter().flatten().copied().collect();
        let m = mean(&all);
        let sd = if all.len() > 1 {
            variance(&all).sqrt()
        } else {
            0.0
        };
        let rhat = split_rhat(&chains);
        let ess = effective_sample_size(&chains);
        let mut flags = Vec::new();
        if rhat.is_nan() {
            flags.push("rhat_undefined".to_string());
            converged = false;
        } else if rhat > RHAT_THRESHOLD {
            flags.push(format!("rhat_above_{RHAT_THRESHOLD}"));
            converged = false;
        }
        if ess == 0.0 {
            flags.push("ess_zero".to_string());
        }
        let mcse_mean = if ess > 0.0 { sd / ess.sqrt() } else { f64::NAN };
        let sq: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| c.iter().map(|x| (x - m).powi(2)).collect())
            .collect();
        let ess_sq = effective_sample_size(&sq);
        let mcse_sd = if ess_sq > 0.0 && sd > 0.0 {
            let sq_all: Vec<f64> = sq.iter().flatten().copied().collect();
            variance(&sq_all).sqrt() / ess_sq.sqrt() / (2.0 * sd)
        } else {
            f64::NAN
        };
        params.push(ParamSummary {
            name: name.clone(),
            mean: m,
            sd,
            rhat,
            ess,
            mcse_mean,
            mcse_sd,
            flags,
        });
    }
    DiagnosticsReport {
        params,
        acceptance: draws.acceptance.clone(),
        rhat_threshold: RHAT_THRESHOLD,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_chains(m: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn constant_chains_are_flagged() {
        let chains = vec![vec![1.5; 100]; 4];
        assert!(split_rhat(&chains).is_nan());
        assert_eq!(effective_sample_size(&chains), 0.0);
    }

    #[test]
    fn independent_chains_have_rhat_near_one() {
        let r = split_rhat(&normal_chains(4, 5000, 1));
        assert!((0.99..=1.01).contains(&r), "{r}");
        let ess = effective_sample_size(&normal_chains(4, 5000, 2));
        assert!((ess / 20_000.0 - 1.0).abs() < 0.15, "{ess}");
    }

    #[test]
    fn ar1_effective_sample_size() {
        let phi: f64 = 0.9;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let mut x = vec![0.0; n];
        let innov = (1.0 - phi * phi).sqrt();
        x[0] = StandardNormal.sample(&mut rng);
        for t in 1..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            x[t] = phi * x[t - 1] + innov * e;
        }
        let ratio = effective_sample_size(&[x]) / n as f64;
        let expected = (1.0 - phi) / (1.0 + phi);
        assert!(
            (ratio / expected - 1.0).abs() < 0.5,
            "{ratio} vs {expected}"
        );
    }

    #[test]
    fn shifted_chains_fail_rhat() {
        let mut chains = normal_chains(4, 2000, 4);
        chains[0].iter_mut().for_each(|x| *x += 3.0);
        assert!(split_rhat(&chains) > 1.1);
    }
}
