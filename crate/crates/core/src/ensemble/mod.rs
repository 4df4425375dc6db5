//! Ensembles of beables: sampling from |Ψ|², equivariance along the diagonal
//! flow, and branch statistics once branch supports separate.

mod report;
mod sampler;
pub mod stats;

use num_complex::Complex64;
use rayon::prelude::*;

pub use report::{BranchFrequency, CoordinateTest, EnsembleReport, ReportMetadata};
pub use sampler::{
    sample_initial, sample_probe_points, ProbePoint, Proposal, SamplerConfig, CHAIN_LENGTH,
};

use crate::dynamics::{check_offsets, propagate};
use crate::error::{check_len, Error, Result};
use crate::wavefunction::{GaussianPacket, MftState};
use stats::{ks_test, wilson_interval, TabulatedCdf};

/// A configuration counts as belonging to a branch when that branch's
/// weight is at least this large.
pub const DOMINANCE: f64 = 1.0 - 1e-3;

/// Relative overlap below which two branches count as non-overlapping.
pub const NONOVERLAP: f64 = 1e-6;

/// Largest tolerated fraction of stalled trajectories.
pub const MAX_EXCLUDED_FRACTION: f64 = 1e-3;

/// Largest tolerated unclassified fraction.
pub const MAX_UNCLASSIFIED_FRACTION: f64 = 0.01;

/// Significance level of the KS gate.
pub const KS_ALPHA: f64 = 0.01;

/// Standard errors allowed between branch frequencies and |cₐ|².
pub const FREQUENCY_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Branch(usize),
    Unclassified,
}

/// `wₐ = |cₐΨₐ|² / Σ_b |c_bΨ_b|²`.
pub fn branch_weights(state: &MftState, x: &[f64], t: &[f64]) -> Result<Vec<f64>> {
    state.branch_weights(x, t)
}

/// Argmax branch if it dominates with weight ≥ `dominance`.
pub fn classify(state: &MftState, x: &[f64], t: &[f64], dominance: f64) -> Result<Classification> {
    let w = branch_weights(state, x, t)?;
    Ok(classify_weights(&w, dominance).0)
}

pub(crate) fn classify_weights(w: &[f64], dominance: f64) -> (Classification, f64) {
    let (best, wmax) =
        w.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |(b, m), (a, &v)| if v > m { (a, v) } else { (b, m) },
        );
    if wmax >= dominance {
        (Classification::Branch(best), wmax)
    } else {
        (Classification::Unclassified, wmax)
    }
}

/// Expected branch probabilities `|cₐ|² / Σ|c|²`.
pub fn born_weights(state: &MftState) -> Vec<f64> {
    let total = state.coefficient_norm();
    state
        .coefficients()
        .iter()
        .map(|c| c.norm_sqr() / total)
        .collect()
}

fn evolved_moduli(state: &MftState, t: &[f64]) -> Vec<Vec<GaussianPacket>> {
    state.branches().iter().map(|b| b.evolve(t)).collect()
}

/// `max_x |ψ_a ψ_b|` for two normalised Gaussians, and each peak `|ψ|²`.
fn factor_overlap(p: &GaussianPacket, q: &GaussianPacket) -> (f64, f64, f64) {
    let (va, vb) = (p.position_variance(), q.position_variance());
    let d = p.center() - q.center();
    let cross = (p.log_norm() + q.log_norm() - d * d / (4.0 * (va + vb))).exp();
    (
        (cross),
        (2.0 * p.log_norm()).exp(),
        (2.0 * q.log_norm()).exp(),
    )
}

fn pair_overlap(pa: &[GaussianPacket], pb: &[GaussianPacket], slots: &[usize]) -> f64 {
    let (mut cross, mut peak_a, mut peak_b) = (1.0, 1.0, 1.0);
    for &i in slots {
        let (c, a, b) = factor_overlap(&pa[i], &pb[i]);
        cross *= c;
        peak_a *= a;
        peak_b *= b;
    }
    cross / peak_a.max(peak_b)
}

/// Largest pairwise relative overlap `max_X|ΨₐΨ_b| / max_X(|Ψₐ|²+|Ψ_b|²)`
/// over branch pairs, using the closed-form maxima of Gaussian moduli
/// (the denominator is bounded below by the larger single peak).
pub fn branch_overlap(state: &MftState, t: &[f64]) -> Result<f64> {
    check_len(state.particle_count(), t.len())?;
    let packets = evolved_moduli(state, t);
    let slots: Vec<usize> = (0..state.particle_count()).collect();
    let mut worst = 0.0f64;
    for a in 0..packets.len() {
        for b in a + 1..packets.len() {
            worst = worst.max(pair_overlap(&packets[a], &packets[b], &slots));
        }
    }
    Ok(worst)
}

/// Same as [`branch_overlap`] restricted to particle `i`'s factors.
pub fn particle_overlap(state: &MftState, t: &[f64], i: usize) -> Result<f64> {
    check_len(state.particle_count(), t.len())?;
    let packets = evolved_moduli(state, t);
    let mut worst = 0.0f64;
    for a in 0..packets.len() {
        for b in a + 1..packets.len() {
            worst = worst.max(pair_overlap(&packets[a], &packets[b], &[i]));
        }
    }
    Ok(worst)
}

/// Exact marginal CDF of coordinate `k` of `|Ψ(·, T)|²`.
///
/// `ρ` is a finite sum of products, so its marginal is
/// `Σ_ab c̄ₐ c_b ψ̄ₐₖ ψ_bₖ Π_{i≠k} ⟨ψₐᵢ|ψ_bᵢ⟩`; the overlaps and the
/// cumulative integral are computed by trapezoidal quadrature on a fine grid.
pub fn marginal_cdf(state: &MftState, t: &[f64], k: usize) -> Result<TabulatedCdf> {
    let n = state.particle_count();
    check_len(n, t.len())?;
    if k >= n {
        return Err(Error::InvalidArgument(format!(
            "coordinate {k} out of range"
        )));
    }
    let packets = evolved_moduli(state, t);
    let coeffs = state.coefficients();
    let nb = packets.len();

    let grid_for = |i: usize| -> Vec<f64> {
        let (lo, hi, sd_min) = packets.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY),
            |(lo, hi, s), b| {
                let p = &b[i];
                let sd = p.position_std();
                (
                    lo.min(p.center() - 12.0 * sd),
                    hi.max(p.center() + 12.0 * sd),
                    s.min(sd),
                )
            },
        );
        let max_k = packets
            .iter()
            .map(|b| {
                b[i].momentum().abs() + 2.0 * b[i].width().re.abs() * 12.0 * b[i].position_std()
            })
            .fold(0.0, f64::max);
        let dx = (sd_min / 200.0).min(0.05 / (1.0 + max_k)).min(0.002);
        let m = ((hi - lo) / dx).ceil() as usize;
        (0..=m)
            .map(|j| lo + (hi - lo) * j as f64 / m as f64)
            .collect()
    };

    // ⟨ψₐᵢ|ψ_bᵢ⟩ for every i ≠ k
    let mut overlaps = vec![Complex64::new(1.0, 0.0); nb * nb];
    for i in (0..n).filter(|&i| i != k) {
        let g = grid_for(i);
        let vals: Vec<Vec<Complex64>> = packets
            .iter()
            .map(|b| g.iter().map(|&x| b[i].value(x)).collect())
            .collect();
        for a in 0..nb {
            for b in 0..nb {
                let integrand: Vec<Complex64> = vals[a]
                    .iter()
                    .zip(&vals[b])
                    .map(|(u, v)| u.conj() * v)
                    .collect();
                overlaps[a * nb + b] *= trapezoid(&g, &integrand);
            }
        }
    }

    let g = grid_for(k);
    let density: Vec<f64> = g
        .iter()
        .map(|&x| {
            let amps: Vec<Complex64> = packets
                .iter()
                .zip(coeffs)
                .map(|(b, c)| c * b[k].value(x))
                .collect();
            let mut s = 0.0;
            for a in 0..nb {
                for b in 0..nb {
                    s += (amps[a].conj() * amps[b] * overlaps[a * nb + b]).re;
                }
            }
            s.max(0.0)
        })
        .collect();
    Ok(TabulatedCdf::from_density(g, &density))
}

fn trapezoid(grid: &[f64], f: &[Complex64]) -> Complex64 {
    grid.windows(2)
        .zip(f.windows(2))
        .map(|(x, y)| (y[0] + y[1]) * (0.5 * (x[1] - x[0])))
        .sum()
}

/// Samples at `T(τ₀)`, transports every sample along its Δ-sheet to `τ₁`
/// and KS-tests each coordinate against the exact marginal of `|Ψ(·, T(τ₁))|²`.
pub fn equivariance_test(
    state: &MftState,
    offsets: &[f64],
    tau0: f64,
    tau1: f64,
    cfg: &SamplerConfig,
    step: f64,
) -> Result<EnsembleReport> {
    let n = state.particle_count();
    check_len(n, offsets.len())?;
    check_offsets(offsets)?;
    let t0: Vec<f64> = offsets.iter().map(|d| tau0 + d).collect();
    let t1: Vec<f64> = offsets.iter().map(|d| tau1 + d).collect();
    let samples = sample_initial(state, &t0, cfg)?;
    let finals: Vec<Option<Vec<f64>>> = samples
        .par_iter()
        .map(|x0| match propagate(state, offsets, x0, tau0, tau1, step) {
            Ok(x) => Ok(Some(x)),
            Err(Error::NodeStall { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let kept: Vec<&Vec<f64>> = finals.iter().flatten().collect();
    let excluded = finals.len() - kept.len();

    let mut coordinates = Vec::with_capacity(n);
    for k in 0..n {
        let cdf = marginal_cdf(state, &t1, k)?;
        let xs: Vec<f64> = kept.iter().map(|x| x[k]).collect();
        let (ks_stat, p_value) = ks_test(&xs, |x| cdf.eval(x));
        coordinates.push(CoordinateTest {
            coordinate: k,
            ks_stat,
            p_value,
            n: xs.len(),
        });
    }
    Ok(EnsembleReport {
        coordinates,
        branches: Vec::new(),
        unclassified: 0.0,
        excluded,
        flips: 0,
        valid: (excluded as f64) <= MAX_EXCLUDED_FRACTION * samples.len() as f64,
        metadata: ReportMetadata {
            seed: cfg.seed,
            state_hash: state.content_hash(),
            n_samples: samples.len(),
            offsets: offsets.to_vec(),
            tau0,
            tau1,
            step,
        },
    })
}

/// Parameters of a collapse run.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseSetup {
    pub offsets: Vec<f64>,
    pub tau0: f64,
    /// Branches must be non-overlapping at `T(tau1)`.
    pub tau1: f64,
    /// Later sheet times at which classification is re-checked.
    pub later_taus: Vec<f64>,
    pub step: f64,
}

/// Samples at `T(τ₀)`, evolves to `τ₁`, classifies by dominant branch and
/// compares frequencies with |cₐ|². Re-classification at every later τ
/// counts flips.
pub fn collapse_statistics(
    state: &MftState,
    setup: &CollapseSetup,
    cfg: &SamplerConfig,
) -> Result<EnsembleReport> {
    let n = state.particle_count();
    check_len(n, setup.offsets.len())?;
    check_offsets(&setup.offsets)?;
    let at = |tau: f64| -> Vec<f64> { setup.offsets.iter().map(|d| tau + d).collect() };
    let overlap = branch_overlap(state, &at(setup.tau1))?;
    if overlap >= NONOVERLAP {
        return Err(Error::InvalidArgument(format!(
            "branches still overlap at tau1 (relative overlap {overlap:.3e})"
        )));
    }
    let samples = sample_initial(state, &at(setup.tau0), cfg)?;

    // Per sample: classification at tau1, whether it flipped later, or None if stalled.
    let outcomes: Vec<Option<(Classification, bool)>> = samples
        .par_iter()
        .map(|x0| {
            let run = || -> Result<(Classification, bool)> {
                let mut x = propagate(
                    state,
                    &setup.offsets,
                    x0,
                    setup.tau0,
                    setup.tau1,
                    setup.step,
                )?;
                let first = classify(state, &x, &at(setup.tau1), DOMINANCE)?;
                let mut tau = setup.tau1;
                let mut flipped = false;
                for &later in &setup.later_taus {
                    x = propagate(state, &setup.offsets, &x, tau, later, setup.step)?;
                    tau = later;
                    if classify(state, &x, &at(later), DOMINANCE)? != first {
                        flipped = true;
                    }
                }
                Ok((first, flipped))
            };
            match run() {
                Ok(v) => Ok(Some(v)),
                Err(Error::NodeStall { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let total = samples.len();
    let excluded = outcomes.iter().filter(|o| o.is_none()).count();
    let expected = born_weights(state);
    let mut counts = vec![0usize; state.branch_count()];
    let mut unclassified = 0usize;
    let mut flips = 0usize;
    for (class, flipped) in outcomes.iter().flatten() {
        match class {
            Classification::Branch(a) => counts[*a] += 1,
            Classification::Unclassified => unclassified += 1,
        }
        flips += usize::from(*flipped);
    }
    let branches = counts
        .iter()
        .zip(&expected)
        .enumerate()
        .map(|(a, (&k, &e))| {
            let (ci_low, ci_high) = wilson_interval(k, total, FREQUENCY_SIGMAS);
            BranchFrequency {
                branch: a,
                count: k,
                freq: k as f64 / total as f64,
                ci_low,
                ci_high,
                expected: e,
            }
        })
        .collect();
    let unclassified_frac = unclassified as f64 / total as f64;
    Ok(EnsembleReport {
        coordinates: Vec::new(),
        branches,
        unclassified: unclassified_frac,
        excluded,
        flips,
        valid: unclassified_frac <= MAX_UNCLASSIFIED_FRACTION
            && (excluded as f64) <= MAX_EXCLUDED_FRACTION * total as f64,
        metadata: ReportMetadata {
            seed: cfg.seed,
            state_hash: state.content_hash(),
            n_samples: total,
            offsets: setup.offsets.clone(),
            tau0: setup.tau0,
            tau1: setup.tau1,
            step: setup.step,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavefunction::{Potential, ProductState};
    use approx::assert_relative_eq;

    fn free(center: f64, p: f64) -> GaussianPacket {
        GaussianPacket::with_sigma(1.0, Potential::Free, center, p, 1.0).unwrap()
    }

    fn split(c1: f64) -> MftState {
        let c = [
            Complex64::new(c1.sqrt(), 0.0),
            Complex64::new((1.0 - c1).sqrt(), 0.0),
        ];
        MftState::new(
            c.to_vec(),
            vec![
                ProductState::new(vec![free(-10.0, 0.0)]).unwrap(),
                ProductState::new(vec![free(10.0, 0.0)]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn weights_form_probability_vector() {
        let s = split(0.3);
        for x in [-12.0, -1.0, 0.0, 0.3, 9.0] {
            let w = branch_weights(&s, &[x], &[0.5]).unwrap();
            assert!(w.iter().all(|v| (0.0..=1.0).contains(v)));
            assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert!(branch_weights(&s, &[-10.0], &[0.0]).unwrap()[0] > 1.0 - 1e-6);
    }

    #[test]
    fn classification_ignores_global_phase() {
        let s = split(0.3);
        let rotated = s.scaled(Complex64::from_polar(1.0, 1.234));
        for x in [-9.5, -0.2, 0.0, 10.5] {
            assert_eq!(
                classify(&s, &[x], &[0.0], DOMINANCE).unwrap(),
                classify(&rotated, &[x], &[0.0], DOMINANCE).unwrap()
            );
        }
    }

    #[test]
    fn separated_branches_sample_with_born_weights() {
        let s = split(0.3);
        let cfg = SamplerConfig {
            n_samples: 10_000,
            ..Default::default()
        };
        let xs = sample_initial(&s, &[0.0], &cfg).unwrap();
        let near_first = xs.iter().filter(|x| x[0] < 0.0).count() as f64 / xs.len() as f64;
        let sigma = (0.3f64 * 0.7 / 1e4).sqrt();
        assert!((near_first - 0.3).abs() < 3.0 * sigma, "{near_first}");
    }

    #[test]
    fn overlap_of_identical_and_distant_branches() {
        let s = split(0.5);
        assert!(branch_overlap(&s, &[0.0]).unwrap() < 1e-20);
        let p = ProductState::new(vec![free(0.0, 1.0)]).unwrap();
        let c = Complex64::new(0.5f64.sqrt(), 0.0);
        let same = MftState::new(vec![c, c], vec![p.clone(), p]).unwrap();
        assert_relative_eq!(branch_overlap(&same, &[0.0]).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn marginal_of_single_packet_is_gaussian() {
        let s = MftState::product(ProductState::new(vec![free(0.5, 1.0), free(0.0, 0.0)]).unwrap());
        let cdf = marginal_cdf(&s, &[2.0, 0.0], 0).unwrap();
        // centre moves to 2.5, so the median is there
        assert_relative_eq!(cdf.eval(2.5), 0.5, epsilon = 1e-6);
        // one standard deviation √2 above
        assert_relative_eq!(
            cdf.eval(2.5 + 2f64.sqrt()),
            0.841_344_746_068_542_9,
            epsilon = 1e-6
        );
    }

    #[test]
    fn single_branch_collapse_is_certain() {
        let s = MftState::product(ProductState::new(vec![free(0.0, 0.0)]).unwrap());
        let setup = CollapseSetup {
            offsets: vec![0.0],
            tau0: 0.0,
            tau1: 0.5,
            later_taus: vec![1.0],
            step: 1e-2,
        };
        let cfg = SamplerConfig {
            n_samples: 200,
            burn_in: 20,
            ..Default::default()
        };
        let r = collapse_statistics(&s, &setup, &cfg).unwrap();
        assert_eq!(r.branches[0].freq, 1.0);
        assert_eq!(r.flips, 0);
        assert!(r.valid);
    }

    #[test]
    fn overlapping_collapse_setup_is_rejected() {
        let p = ProductState::new(vec![free(0.0, 0.0)]).unwrap();
        let q = ProductState::new(vec![free(0.5, 0.0)]).unwrap();
        let c = Complex64::new(0.5f64.sqrt(), 0.0);
        let s = MftState::new(vec![c, c], vec![p, q]).unwrap();
        let setup = CollapseSetup {
            offsets: vec![0.0],
            tau0: 0.0,
            tau1: 0.5,
            later_taus: vec![],
            step: 1e-2,
        };
        assert!(collapse_statistics(&s, &setup, &SamplerConfig::default()).is_err());
    }

    #[test]
    fn zero_duration_equivariance_passes() {
        let s = split(0.4);
        let cfg = SamplerConfig {
            n_samples: 2000,
            ..Default::default()
        };
        let r = equivariance_test(&s, &[0.0], 0.3, 0.3, &cfg, 1e-3).unwrap();
        assert!(r.valid);
        assert!(r.coordinates[0].p_value > KS_ALPHA);
    }
}
