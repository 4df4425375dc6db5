//! Metropolis–Hastings sampling of |Ψ(·, T)|² with a branch-mixture
//! independence proposal.
//!
//! Samples are produced by fixed-length chains; chain `c` draws from the
//! ChaCha stream `c` of the configured seed, so the output depends only on
//! the seed and never on the thread schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::wavefunction::{GaussianPacket, MftState};

/// Samples produced by one chain.
pub const CHAIN_LENGTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Proposal {
    /// `q(X) = Σₐ |cₐ|² Πᵢ |ψₐᵢ(xᵢ, tᵢ)|²`
    MixtureIndependence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub thinning: usize,
    pub proposal: Proposal,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            seed: 42,
            burn_in: 1000,
            thinning: 10,
            proposal: Proposal::MixtureIndependence,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
        }
        if self.thinning == 0 {
            return Err(Error::InvalidArgument("thinning must be >= 1".into()));
        }
        Ok(())
    }
}

/// Gaussian mixture matching the branch moduli at fixed times.
pub(crate) struct MixtureProposal {
    weights: Vec<f64>,
    /// `[branch][particle]` as (mean, std)
    components: Vec<Vec<(f64, f64)>>,
}

impl MixtureProposal {
    pub(crate) fn new(state: &MftState, t: &[f64]) -> Self {
        let total = state.coefficient_norm();
        let weights = state
            .coefficients()
            .iter()
            .map(|c| c.norm_sqr() / total)
            .collect();
        let components = state
            .branches()
            .iter()
            .map(|b| {
                b.evolve(t)
                    .iter()
                    .map(|p: &GaussianPacket| (p.center(), p.position_std()))
                    .collect()
            })
            .collect();
        Self {
            weights,
            components,
        }
    }

    pub(crate) fn draw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.weights.len() - 1;
        for (a, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = a;
                break;
            }
        }
        self.components[pick]
            .iter()
            .map(|(mu, sd)| {
                let z: f64 = rng.sample(StandardNormal);
                mu + sd * z
            })
            .collect()
    }

    pub(crate) fn log_density(&self, x: &[f64]) -> f64 {
        let logs: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.components)
            .map(|(w, comp)| {
                w.ln()
                    + comp
                        .iter()
                        .zip(x)
                        .map(|((mu, sd), xi)| {
                            let z = (xi - mu) / sd;
                            -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
                        })
                        .sum::<f64>()
            })
            .collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
    }
}

fn run_chain(
    state: &MftState,
    t: &[f64],
    proposal: &MixtureProposal,
    cfg: &SamplerConfig,
    chain: usize,
    count: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64);
    let mut x = proposal.draw(&mut rng);
    let mut lp = state.log_density(&x, t)? - proposal.log_density(&x);
    let step = |x: &mut Vec<f64>, lp: &mut f64, rng: &mut ChaCha8Rng| -> Result<()> {
        let y = proposal.draw(rng);
        let ly = state.log_density(&y, t)? - proposal.log_density(&y);
        let u: f64 = rng.random();
        if u.ln() < ly - *lp {
            *x = y;
            *lp = ly;
        }
        Ok(())
    };
    for _ in 0..cfg.burn_in {
        step(&mut x, &mut lp, &mut rng)?;
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        for _ in 0..cfg.thinning {
            step(&mut x, &mut lp, &mut rng)?;
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Draws `cfg.n_samples` configurations from `|Ψ(·, T)|²`.
pub fn sample_initial(state: &MftState, t: &[f64], cfg: &SamplerConfig) -> Result<Vec<Vec<f64>>> {
    check_len(state.particle_count(), t.len())?;
    cfg.validate()?;
    let proposal = MixtureProposal::new(state, t);
    let chains = cfg.n_samples.div_ceil(CHAIN_LENGTH);
    let per_chain: Vec<Vec<Vec<f64>>> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let count = CHAIN_LENGTH.min(cfg.n_samples - c * CHAIN_LENGTH);
            run_chain(state, t, &proposal, cfg, c, count)
        })
        .collect::<Result<_>>()?;
    Ok(per_chain.into_iter().flatten().collect())
}

/// A probe point `(X, T)` for residual checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbePoint {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
}

/// `count` probe points with each `tᵢ` uniform in `window` and `X` drawn
/// from `|Ψ(·, T)|²` by a short independent chain per probe.
pub fn sample_probe_points(
    state: &MftState,
    window: (f64, f64),
    count: usize,
    seed: u64,
) -> Result<Vec<ProbePoint>> {
    let n = state.particle_count();
    (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let t: Vec<f64> = (0..n)
                .map(|_| window.0 + (window.1 - window.0) * rng.random::<f64>())
                .collect();
            let cfg = SamplerConfig {
                n_samples: 1,
                seed: rng.random(),
                burn_in: 200,
                thinning: 1,
                proposal: Proposal::MixtureIndependence,
            };
            let proposal = MixtureProposal::new(state, &t);
            let x = run_chain(state, &t, &proposal, &cfg, 0, 1)?.remove(0);
            Ok(ProbePoint { x, t })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::stats::ks_test;
    use crate::wavefunction::{Potential, ProductState};

    fn normal_cdf(x: f64, mu: f64, sd: f64) -> f64 {
        let z = (x - mu) / sd;
        let n = 4000;
        let lo = -12.0f64;
        if z <= lo {
            return 0.0;
        }
        let h = (z - lo) / n as f64;
        let f = |u: f64| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(lo) + f(z);
        for k in 1..n {
            let u = lo + k as f64 * h;
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(u);
        }
        s * h / 3.0
    }

    #[test]
    fn single_gaussian_marginal_passes_ks() {
        let p = GaussianPacket::with_sigma(1.0, Potential::Free, 0.5, 1.0, 0.8).unwrap();
        let s = MftState::product(ProductState::new(vec![p]).unwrap());
        let cfg = SamplerConfig {
            n_samples: 4000,
            ..Default::default()
        };
        let t = [1.0];
        let xs: Vec<f64> = sample_initial(&s, &t, &cfg)
            .unwrap()
            .into_iter()
            .map(|x| x[0])
            .collect();
        let e = p.evolve(1.0);
        let (_, pv) = ks_test(&xs, |x| normal_cdf(x, e.center(), e.position_std()));
        assert!(pv > 0.01, "p = {pv}");
    }

    #[test]
    fn output_is_seed_deterministic() {
        let p = GaussianPacket::with_sigma(1.0, Potential::Free, 0.0, 0.0, 1.0).unwrap();
        let s = MftState::product(ProductState::new(vec![p, p]).unwrap());
        let cfg = SamplerConfig {
            n_samples: 300,
            burn_in: 50,
            ..Default::default()
        };
        let a = sample_initial(&s, &[0.0, 0.0], &cfg).unwrap();
        let b = sample_initial(&s, &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(a.len(), 300);
        assert_eq!(a, b);
        let c = sample_initial(&s, &[0.0, 0.0], &SamplerConfig { seed: 7, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_thinning_is_rejected() {
        let cfg = SamplerConfig {
            thinning: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
