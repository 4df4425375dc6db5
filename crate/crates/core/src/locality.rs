//! Locality diagnostics: an ordinary single-time Bohmian integrator used as
//! an oracle, the cross-time sensitivity `∂vᵢ/∂tⱼ`, and the EPR timing scan.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::dynamics::{beable_at, SheetRuleKind};
use crate::ensemble::stats::wilson_interval;
use crate::ensemble::{
    classify_weights, particle_overlap, sample_initial, BranchFrequency, Classification,
    SamplerConfig, DOMINANCE, FREQUENCY_SIGMAS, NONOVERLAP,
};
use crate::error::{check_len, Error, Result};
use crate::wavefunction::{MftState, NODE_THRESHOLD};

/// Step of the central difference in `tⱼ`.
pub const SENSITIVITY_STEP: f64 = 1e-4;

/// Relative agreement required between the step and the halved step.
pub const SENSITIVITY_AGREEMENT: f64 = 0.1;

/// Below this magnitude both estimates count as zero and agree trivially.
const SENSITIVITY_FLOOR: f64 = 1e-8;

/// Ψ at equal times `t` and its gradient, by direct complex summation.
fn psi_and_gradient(state: &MftState, x: &[f64], t: f64) -> Result<(Complex64, Vec<Complex64>)> {
    let n = state.particle_count();
    check_len(n, x.len())?;
    let mut psi = Complex64::new(0.0, 0.0);
    let mut grad = vec![Complex64::new(0.0, 0.0); n];
    let mut scale = 0.0;
    for (c, branch) in state.coefficients().iter().zip(state.branches()) {
        let packets: Vec<_> = branch.packets().iter().map(|p| p.evolve(t)).collect();
        let term = packets
            .iter()
            .zip(x)
            .fold(*c, |acc, (p, &xi)| acc * p.value(xi));
        psi += term;
        scale += term.norm();
        for (g, (p, &xi)) in grad.iter_mut().zip(packets.iter().zip(x)) {
            *g += term * p.log_gradient(xi);
        }
    }
    let resolved = psi.norm() >= NODE_THRESHOLD * scale;
    if !resolved || scale == 0.0 {
        return Err(Error::Node {
            relative: if scale > 0.0 { psi.norm() / scale } else { 0.0 },
        });
    }
    Ok((psi, grad))
}

/// `Ψ(X, t·1)` summed directly, with no log scaling.
pub fn single_time_psi(state: &MftState, x: &[f64], t: f64) -> Result<Complex64> {
    Ok(psi_and_gradient(state, x, t)?.0)
}

fn single_time_velocity(state: &MftState, x: &[f64], t: f64) -> Result<Vec<f64>> {
    let (psi, grad) = psi_and_gradient(state, x, t)?;
    Ok(grad
        .iter()
        .enumerate()
        .map(|(i, g)| (g / psi).im / state.mass(i))
        .collect())
}

/// Ordinary single-time trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    /// `x[k][i]`
    pub x: Vec<Vec<f64>>,
}

fn oracle_step(state: &MftState, x: &[f64], t: f64, h: f64) -> Result<Vec<f64>> {
    let shift =
        |k: &[f64], a: f64| -> Vec<f64> { x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect() };
    let k1 = single_time_velocity(state, x, t)?;
    let k2 = single_time_velocity(state, &shift(&k1, 0.5 * h), t + 0.5 * h)?;
    let k3 = single_time_velocity(state, &shift(&k2, 0.5 * h), t + 0.5 * h)?;
    let k4 = single_time_velocity(state, &shift(&k3, h), t + h)?;
    Ok((0..x.len())
        .map(|i| x[i] + h * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0)
        .collect())
}

fn oracle_advance(state: &MftState, x: &[f64], t: f64, h: f64, level: u32) -> Result<Vec<f64>> {
    match oracle_step(state, x, t, h) {
        Ok(next) => Ok(next),
        Err(Error::Node { .. }) if level < crate::dynamics::MAX_HALVINGS => {
            let half = oracle_advance(state, x, t, h / 2.0, level + 1)?;
            oracle_advance(state, &half, t + h / 2.0, h / 2.0, level + 1)
        }
        Err(Error::Node { .. }) => Err(Error::NodeStall {
            last_tau: t,
            position: x.to_vec(),
        }),
        Err(e) => Err(e),
    }
}

/// Integrates `dxᵢ/dt = ∇ᵢS(X, t·1)/mᵢ` from `t0` to `t1` with fixed-step
/// RK4, the step adjusted so the grid lands exactly on `t1`.
pub fn single_time_oracle(
    state: &MftState,
    x0: &[f64],
    t0: f64,
    t1: f64,
    h: f64,
) -> Result<Trajectory> {
    check_len(state.particle_count(), x0.len())?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be > 0, got {h}")));
    }
    single_time_velocity(state, x0, t0)?;
    let steps = if t1 == t0 {
        0
    } else {
        ((t1 - t0).abs() / h - 1e-9).ceil().max(1.0) as usize
    };
    let dt = if steps == 0 {
        0.0
    } else {
        (t1 - t0) / steps as f64
    };
    let mut traj = Trajectory {
        t: vec![t0],
        x: vec![x0.to_vec()],
    };
    let mut x = x0.to_vec();
    for k in 0..steps {
        x = oracle_advance(state, &x, t0 + k as f64 * dt, dt, 0)?;
        traj.t.push(if k + 1 == steps {
            t1
        } else {
            t0 + (k + 1) as f64 * dt
        });
        traj.x.push(x.clone());
    }
    Ok(traj)
}

/// `∂vᵢ/∂tⱼ` at one probe point.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub i: usize,
    pub j: usize,
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub value: f64,
    pub step: f64,
    /// Estimate at half the step.
    pub refined: f64,
}

impl SensitivityReport {
    /// Step and half-step estimates agree to 10%, or both are negligible.
    pub fn converged(&self) -> bool {
        let scale = self.value.abs().max(self.refined.abs());
        scale < SENSITIVITY_FLOOR
            || (self.value - self.refined).abs() <= SENSITIVITY_AGREEMENT * scale
    }
}

fn dv_dt(state: &MftState, x: &[f64], t: &[f64], i: usize, j: usize, h: f64) -> Result<f64> {
    let mut tp = t.to_vec();
    let mut tm = t.to_vec();
    tp[j] += h;
    tm[j] -= h;
    let vp = state.phase_gradient(x, &tp, i)?;
    let vm = state.phase_gradient(x, &tm, i)?;
    Ok((vp - vm) / (2.0 * h * state.mass(i)))
}

/// Central difference of `vᵢ` in `tⱼ` at [`SENSITIVITY_STEP`] and half of it.
pub fn cross_time_sensitivity(
    state: &MftState,
    x: &[f64],
    t: &[f64],
    i: usize,
    j: usize,
) -> Result<SensitivityReport> {
    let n = state.particle_count();
    check_len(n, x.len())?;
    check_len(n, t.len())?;
    if i >= n || j >= n || i == j {
        return Err(Error::InvalidArgument(format!(
            "need distinct particle indices below {n}, got ({i}, {j})"
        )));
    }
    state.evaluate(x, t)?;
    let step = SENSITIVITY_STEP;
    Ok(SensitivityReport {
        i,
        j,
        x: x.to_vec(),
        t: t.to_vec(),
        value: dv_dt(state, x, t, i, j, step)?,
        step,
        refined: dv_dt(state, x, t, i, j, 0.5 * step)?,
    })
}

/// Lattice of `points × points` configurations in the `(xᵢ, xⱼ)` plane,
/// spanning `±widths` packet widths around the mean of the branch centres.
/// Other coordinates sit at their mean centre.
pub fn probe_grid(
    state: &MftState,
    t: &[f64],
    i: usize,
    j: usize,
    points: usize,
    widths: f64,
) -> Result<Vec<Vec<f64>>> {
    let n = state.particle_count();
    check_len(n, t.len())?;
    if i >= n || j >= n || points < 2 {
        return Err(Error::InvalidArgument("bad probe grid request".into()));
    }
    let evolved: Vec<_> = state.branches().iter().map(|b| b.evolve(t)).collect();
    let nb = evolved.len() as f64;
    let mid: Vec<f64> = (0..n)
        .map(|k| evolved.iter().map(|b| b[k].center()).sum::<f64>() / nb)
        .collect();
    let width = |k: usize| {
        evolved
            .iter()
            .map(|b| b[k].position_std())
            .fold(0.0, f64::max)
    };
    let axis = |k: usize| -> Vec<f64> {
        (0..points)
            .map(|p| mid[k] + widths * width(k) * (2.0 * p as f64 / (points - 1) as f64 - 1.0))
            .collect()
    };
    let (ai, aj) = (axis(i), axis(j));
    let mut out = Vec::with_capacity(points * points);
    for xi in &ai {
        for xj in &aj {
            let mut x = mid.clone();
            x[i] = *xi;
            x[j] = *xj;
            out.push(x);
        }
    }
    Ok(out)
}

/// Classification of one sample at one `t₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct EprRow {
    pub sample: usize,
    pub t2: f64,
    pub class: Classification,
    pub w_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EprScanReport {
    pub t1_fixed: f64,
    pub rule: SheetRuleKind,
    pub t2_grid: Vec<f64>,
    pub rows: Vec<EprRow>,
    /// `frequencies[g][a]` for grid point `g`.
    pub frequencies: Vec<Vec<BranchFrequency>>,
    pub unclassified: Vec<f64>,
    /// Samples whose label changes somewhere along the grid.
    pub flips: usize,
    pub excluded: usize,
}

impl EprScanReport {
    pub fn frequencies_pass(&self) -> bool {
        self.frequencies
            .iter()
            .flatten()
            .all(BranchFrequency::consistent)
    }

    pub fn passed(&self) -> bool {
        self.flips == 0 && self.excluded == 0 && self.frequencies_pass()
    }
}

/// Times with particle 1 at `t1` and every other particle at `t2`.
fn epr_times(n: usize, t1: f64, t2: f64) -> Vec<f64> {
    let mut t = vec![t2; n];
    t[0] = t1;
    t
}

/// For each sample of `|Ψ(·, τ₀·1)|²` and each `t₂`, evaluates the beable at
/// `T = (t1_fixed, t₂, …)` from the base slice `τ₀` with sheet rule `rule`,
/// then classifies it by branch weights.
pub fn epr_timing_scan(
    state: &MftState,
    t1_fixed: f64,
    t2_grid: &[f64],
    tau0: f64,
    rule: SheetRuleKind,
    cfg: &SamplerConfig,
    step: f64,
) -> Result<EprScanReport> {
    let n = state.particle_count();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "timing scan needs two or more particles".into(),
        ));
    }
    if t2_grid.is_empty() {
        return Err(Error::InvalidArgument("empty t2 grid".into()));
    }
    let overlap = particle_overlap(state, &epr_times(n, t1_fixed, t1_fixed), 0)?;
    if overlap >= NONOVERLAP {
        return Err(Error::InvalidArgument(format!(
            "particle 1 branches still overlap at t1 = {t1_fixed} (relative overlap {overlap:.3e})"
        )));
    }
    let samples = sample_initial(state, &vec![tau0; n], cfg)?;
    let per_sample: Vec<Option<Vec<(Classification, f64)>>> = samples
        .par_iter()
        .map(|x0| {
            let rule = rule.with_base(x0.clone());
            let run = || -> Result<Vec<(Classification, f64)>> {
                t2_grid
                    .iter()
                    .map(|&t2| {
                        let t = epr_times(n, t1_fixed, t2);
                        let x = beable_at(state, &rule, tau0, &t, step)?;
                        Ok(classify_weights(&state.branch_weights(&x, &t)?, DOMINANCE))
                    })
                    .collect()
            };
            match run() {
                Ok(v) => Ok(Some(v)),
                Err(Error::NodeStall { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let total = samples.len();
    let nb = state.branch_count();
    let expected = crate::ensemble::born_weights(state);
    let mut rows = Vec::with_capacity(total * t2_grid.len());
    let mut counts = vec![vec![0usize; nb]; t2_grid.len()];
    let mut unclassified = vec![0usize; t2_grid.len()];
    let mut flips = 0;
    let mut excluded = 0;
    for (s, outcome) in per_sample.iter().enumerate() {
        let Some(classes) = outcome else {
            excluded += 1;
            continue;
        };
        if classes.iter().any(|(c, _)| *c != classes[0].0) {
            flips += 1;
        }
        for (g, (class, w)) in classes.iter().enumerate() {
            match class {
                Classification::Branch(a) => counts[g][*a] += 1,
                Classification::Unclassified => unclassified[g] += 1,
            }
            rows.push(EprRow {
                sample: s,
                t2: t2_grid[g],
                class: *class,
                w_max: *w,
            });
        }
    }
    let frequencies = counts
        .iter()
        .map(|row| {
            row.iter()
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
                .collect()
        })
        .collect();
    Ok(EprScanReport {
        rule,
        t1_fixed,
        t2_grid: t2_grid.to_vec(),
        rows,
        frequencies,
        unclassified: unclassified
            .iter()
            .map(|&u| u as f64 / total as f64)
            .collect(),
        flips,
        excluded,
    })
}
