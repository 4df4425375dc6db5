//! Integration of the many-fingered-time beable `xᵢ(T)`.
//!
//! The guidance law only fixes the derivative along the diagonal direction
//! `Σⱼ ∂/∂tⱼ`. A beable is therefore represented as a family of sheets:
//! for a fixed offset vector Δ (with `Σ Δⱼ = 0`) the times run as
//! `T(τ) = τ·1 + Δ` and the positions obey `dxᵢ/dτ = ∇ᵢS / mᵢ`. How the
//! initial data varies across Δ is supplied by a [`SheetRule`].

use crate::error::{check_len, Error, Result};
use crate::wavefunction::{MftState, TimeVector};

/// Default diagonal step.
pub const DEFAULT_STEP: f64 = 1e-3;

/// How many times a step is halved after hitting a node before giving up.
pub const MAX_HALVINGS: u32 = 20;

/// `T = τ·1 + Δ` with the gauge `Σ Δⱼ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalChart {
    tau: f64,
    offsets: Vec<f64>,
}

impl DiagonalChart {
    pub fn new(tau: f64, offsets: Vec<f64>) -> Result<Self> {
        check_offsets(&offsets)?;
        Ok(Self { tau, offsets })
    }

    /// Splits `T` with τ = mean(tᵢ).
    pub fn from_times(t: &[f64]) -> Self {
        let tau = t.iter().sum::<f64>() / t.len() as f64;
        Self {
            tau,
            offsets: t.iter().map(|ti| ti - tau).collect(),
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn times(&self) -> TimeVector {
        times_at(&self.offsets, self.tau).into()
    }
}

/// Checks the chart gauge `|Σ Δⱼ| ≤ 1e−12` (scaled by the largest offset).
pub fn check_offsets(offsets: &[f64]) -> Result<()> {
    if offsets.is_empty() {
        return Err(Error::InvalidArgument("empty offset vector".into()));
    }
    let sum: f64 = offsets.iter().sum();
    let scale = offsets.iter().fold(1.0f64, |m, d| m.max(d.abs()));
    if sum.abs() > 1e-12 * scale || offsets.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "offsets must sum to zero, got {sum:e}"
        )));
    }
    Ok(())
}

fn times_at(offsets: &[f64], tau: f64) -> Vec<f64> {
    offsets.iter().map(|d| tau + d).collect()
}

/// One Δ-slice of the beable, sampled on a uniform τ grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BeableSheet {
    pub offsets: Vec<f64>,
    /// Monotone in the direction of integration.
    pub tau: Vec<f64>,
    /// `positions[k][i]` is `xᵢ` at `tau[k]`.
    pub positions: Vec<Vec<f64>>,
}

impl BeableSheet {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn last_position(&self) -> &[f64] {
        self.positions.last().expect("sheet has at least one point")
    }

    /// `T(τ_k)` for grid point `k`.
    pub fn times(&self, k: usize) -> Vec<f64> {
        times_at(&self.offsets, self.tau[k])
    }
}

/// `vᵢ = ∇ᵢS / mᵢ`.
pub fn velocity_field(state: &MftState, x: &[f64], t: &[f64]) -> Result<Vec<f64>> {
    let mut v = state.phase_gradients(x, t)?;
    for (i, vi) in v.iter_mut().enumerate() {
        *vi /= state.mass(i);
    }
    Ok(v)
}

/// Right-hand side of the flow being integrated: position and parameter in,
/// velocity out.
trait Flow {
    fn velocity(&self, x: &[f64], s: f64) -> Result<Vec<f64>>;
}

struct Diagonal<'a> {
    state: &'a MftState,
    offsets: &'a [f64],
}

impl Flow for Diagonal<'_> {
    fn velocity(&self, x: &[f64], tau: f64) -> Result<Vec<f64>> {
        velocity_field(self.state, x, &times_at(self.offsets, tau))
    }
}

/// Moves only particle `j` while its own time runs; other times are frozen.
struct SingleTime<'a> {
    state: &'a MftState,
    times: &'a [f64],
    j: usize,
}

impl Flow for SingleTime<'_> {
    fn velocity(&self, x: &[f64], tj: f64) -> Result<Vec<f64>> {
        let mut t = self.times.to_vec();
        t[self.j] = tj;
        let vj = self.state.phase_gradient(x, &t, self.j)? / self.state.mass(self.j);
        let mut v = vec![0.0; x.len()];
        v[self.j] = vj;
        Ok(v)
    }
}

fn axpy(x: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

fn rk4_step<F: Flow>(flow: &F, x: &[f64], s: f64, h: f64) -> Result<Vec<f64>> {
    let k1 = flow.velocity(x, s)?;
    let k2 = flow.velocity(&axpy(x, 0.5 * h, &k1), s + 0.5 * h)?;
    let k3 = flow.velocity(&axpy(x, 0.5 * h, &k2), s + 0.5 * h)?;
    let k4 = flow.velocity(&axpy(x, h, &k3), s + h)?;
    Ok(x.iter()
        .enumerate()
        .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// One grid step; a node hit mid-step splits it into two half steps,
/// recursively up to [`MAX_HALVINGS`] levels.
fn advance<F: Flow>(flow: &F, x: &[f64], s: f64, h: f64, depth: u32) -> Result<Vec<f64>> {
    match rk4_step(flow, x, s, h) {
        Err(Error::Node { .. }) if depth < MAX_HALVINGS => {
            let mid = advance(flow, x, s, 0.5 * h, depth + 1)?;
            advance(flow, &mid, s + 0.5 * h, 0.5 * h, depth + 1)
        }
        Err(Error::Node { .. }) => Err(Error::NodeStall {
            last_tau: s,
            position: x.to_vec(),
        }),
        other => other,
    }
}

fn grid(s0: f64, s1: f64, step: f64) -> Result<(usize, f64)> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step must be > 0, got {step}"
        )));
    }
    if !(s0.is_finite() && s1.is_finite()) {
        return Err(Error::InvalidArgument(
            "non-finite integration bounds".into(),
        ));
    }
    let span = s1 - s0;
    if span == 0.0 {
        return Ok((0, 0.0));
    }
    let n = ((span.abs() / step) - 1e-9).ceil().max(1.0) as usize;
    Ok((n, span / n as f64))
}

/// Integrates `flow` from `s0` to `s1`, calling `visit` at every grid point
/// (including the start).
fn integrate<F: Flow>(
    flow: &F,
    x0: &[f64],
    s0: f64,
    s1: f64,
    step: f64,
    mut visit: impl FnMut(f64, &[f64]),
) -> Result<Vec<f64>> {
    let (n, h) = grid(s0, s1, step)?;
    let mut x = x0.to_vec();
    visit(s0, &x);
    for k in 0..n {
        let s = s0 + k as f64 * h;
        x = advance(flow, &x, s, h, 0)?;
        let next = if k + 1 == n {
            s1
        } else {
            s0 + (k + 1) as f64 * h
        };
        visit(next, &x);
    }
    Ok(x)
}

fn check_start(state: &MftState, offsets: &[f64], x0: &[f64]) -> Result<()> {
    let n = state.particle_count();
    check_len(n, offsets.len())?;
    check_len(n, x0.len())?;
    check_offsets(offsets)
}

/// Integrates the Δ-sheet from `tau0` to `tau1` with fixed step RK4.
pub fn integrate_sheet(
    state: &MftState,
    offsets: &[f64],
    x0: &[f64],
    tau0: f64,
    tau1: f64,
    step: f64,
) -> Result<BeableSheet> {
    check_start(state, offsets, x0)?;
    let flow = Diagonal { state, offsets };
    let mut tau = Vec::new();
    let mut positions = Vec::new();
    integrate(&flow, x0, tau0, tau1, step, |s, x| {
        tau.push(s);
        positions.push(x.to_vec());
    })?;
    Ok(BeableSheet {
        offsets: offsets.to_vec(),
        tau,
        positions,
    })
}

/// Endpoint of [`integrate_sheet`] without storing the grid.
pub fn propagate(
    state: &MftState,
    offsets: &[f64],
    x0: &[f64],
    tau0: f64,
    tau1: f64,
    step: f64,
) -> Result<Vec<f64>> {
    check_start(state, offsets, x0)?;
    integrate(
        &Diagonal { state, offsets },
        x0,
        tau0,
        tau1,
        step,
        |_, _| {},
    )
}

/// Initial data on the transversal slice `τ = τ₀`, as a function of Δ.
#[derive(Debug, Clone, PartialEq)]
pub enum SheetRule {
    /// `X₀(Δ) = X₀` for every Δ.
    Constant(Vec<f64>),
    /// `X₀` is given at `T = τ₀·1` and carried to `τ₀·1 + Δ` by advancing
    /// one time at a time, each `tⱼ` moving only `xⱼ` with `∇ⱼS/mⱼ`.
    /// Each leg obeys its own local continuity equation, so |Ψ|²-distributed
    /// data stays |Ψ|²-distributed on every sheet.
    LocalTransport(Vec<f64>),
}

/// The Δ-dependence of a [`SheetRule`], without its base configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SheetRuleKind {
    #[default]
    Constant,
    LocalTransport,
}

impl SheetRuleKind {
    pub fn with_base(self, x0: Vec<f64>) -> SheetRule {
        match self {
            SheetRuleKind::Constant => SheetRule::Constant(x0),
            SheetRuleKind::LocalTransport => SheetRule::LocalTransport(x0),
        }
    }
}

impl SheetRule {
    pub fn base(&self) -> &[f64] {
        match self {
            SheetRule::Constant(x) | SheetRule::LocalTransport(x) => x,
        }
    }

    /// Starting configuration of the Δ-sheet at `τ₀`.
    pub fn initial(
        &self,
        state: &MftState,
        offsets: &[f64],
        tau0: f64,
        step: f64,
    ) -> Result<Vec<f64>> {
        check_start(state, offsets, self.base())?;
        match self {
            SheetRule::Constant(x) => Ok(x.clone()),
            SheetRule::LocalTransport(x) => {
                let mut x = x.clone();
                let mut times = vec![tau0; offsets.len()];
                for (j, d) in offsets.iter().enumerate() {
                    let flow = SingleTime {
                        state,
                        times: &times,
                        j,
                    };
                    x = integrate(&flow, &x, tau0, tau0 + d, step, |_, _| {})?;
                    times[j] = tau0 + d;
                }
                Ok(x)
            }
        }
    }
}

/// Beable value `X(T)`: decompose `T` into (τ, Δ), take the Δ-sheet's
/// initial data from `rule` at `tau0` and integrate it to τ.
pub fn beable_at(
    state: &MftState,
    rule: &SheetRule,
    tau0: f64,
    t: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    check_len(state.particle_count(), t.len())?;
    let chart = DiagonalChart::from_times(t);
    let x0 = rule.initial(state, chart.offsets(), tau0, step)?;
    propagate(state, chart.offsets(), &x0, tau0, chart.tau(), step)
}

/// Residual of `mᵢ d²xᵢ/dτ² = −∂ᵢ(Vᵢ + Q)` at interior sheet points.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonResidual {
    pub tau: Vec<f64>,
    /// `residual[k][i]`
    pub residual: Vec<Vec<f64>>,
}

impl NewtonResidual {
    pub fn max(&self) -> f64 {
        self.residual.iter().flatten().fold(
            0.0,
            |m: f64, r| if r.is_nan() { f64::INFINITY } else { m.max(*r) },
        )
    }
}

/// Acceleration by central differences on the sheet grid, `∂ᵢQ` by central
/// differences with the same step, `∂ᵢV` analytic. Points where Q cannot be
/// evaluated report an infinite residual.
pub fn newton_residual(sheet: &BeableSheet, state: &MftState) -> NewtonResidual {
    let n = state.particle_count();
    let mut tau = Vec::new();
    let mut residual = Vec::new();
    for k in 1..sheet.len().saturating_sub(1) {
        let h = 0.5 * (sheet.tau[k + 1] - sheet.tau[k - 1]);
        let x = &sheet.positions[k];
        let t = sheet.times(k);
        let row = (0..n)
            .map(|i| {
                let m = state.mass(i);
                let acc =
                    (sheet.positions[k + 1][i] - 2.0 * x[i] + sheet.positions[k - 1][i]) / (h * h);
                let dq = quantum_force(state, x, &t, i, h.abs());
                match dq {
                    Ok(dq) => (m * acc + state.potential(i).gradient(m, x[i]) + dq).abs(),
                    Err(_) => f64::INFINITY,
                }
            })
            .collect();
        tau.push(sheet.tau[k]);
        residual.push(row);
    }
    NewtonResidual { tau, residual }
}

/// `∂ᵢQ` by central difference.
fn quantum_force(state: &MftState, x: &[f64], t: &[f64], i: usize, h: f64) -> Result<f64> {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    Ok((state.quantum_potential(&xp, t)? - state.quantum_potential(&xm, t)?) / (2.0 * h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavefunction::{GaussianPacket, Potential, ProductState};
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn free_packet(p: f64) -> GaussianPacket {
        GaussianPacket::with_sigma(1.0, Potential::Free, 0.0, p, 1.0).unwrap()
    }

    fn single(p: GaussianPacket) -> MftState {
        MftState::product(ProductState::new(vec![p]).unwrap())
    }

    fn entangled() -> MftState {
        let c = Complex64::new(0.5f64.sqrt(), 0.0);
        MftState::new(
            vec![c, c],
            vec![
                ProductState::new(vec![free_packet(2.0), free_packet(-2.0)]).unwrap(),
                ProductState::new(vec![free_packet(-2.0), free_packet(2.0)]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn chart_roundtrip() {
        let t = [1.5, -0.25, 0.75];
        let c = DiagonalChart::from_times(&t);
        assert_relative_eq!(c.tau(), 2.0 / 3.0, epsilon = 1e-15);
        assert!(c.offsets().iter().sum::<f64>().abs() < 1e-12);
        for (a, b) in c.times().iter().zip(t) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        assert!(DiagonalChart::new(0.0, vec![0.1, 0.1]).is_err());
    }

    #[test]
    fn moving_packet_velocity_at_center() {
        let v = velocity_field(&single(free_packet(2.0)), &[0.0], &[0.0]).unwrap();
        assert_relative_eq!(v[0], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn entangled_velocity_depends_on_partner_position() {
        let s = entangled();
        let t = [0.5, 0.5];
        let a = velocity_field(&s, &[0.3, -0.4], &t).unwrap();
        let b = velocity_field(&s, &[0.3, 0.6], &t).unwrap();
        assert!((a[0] - b[0]).abs() > 1e-3);
    }

    #[test]
    fn free_trajectory_follows_width() {
        let sheet =
            integrate_sheet(&single(free_packet(0.0)), &[0.0], &[1.0], 0.0, 2.0, 1e-3).unwrap();
        assert_eq!(sheet.len(), 2001);
        assert_eq!(*sheet.tau.last().unwrap(), 2.0);
        assert_relative_eq!(sheet.last_position()[0], 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn coherent_state_moves_rigidly() {
        let p = GaussianPacket::coherent(1.0, 1.0, 1.0, 0.0).unwrap();
        let s = single(p);
        let sheet = integrate_sheet(&s, &[0.0], &[1.5], 0.0, 3.0, 1e-3).unwrap();
        for (tau, x) in sheet.tau.iter().zip(&sheet.positions) {
            assert!((x[0] - (tau.cos() + 0.5)).abs() < 1e-10);
        }
    }

    #[test]
    fn product_sheet_is_time_shifted_single_time_trajectory() {
        let a = GaussianPacket::with_sigma(1.0, Potential::Free, 0.2, 0.5, 0.8).unwrap();
        let b = free_packet(-1.0);
        let s = MftState::product(ProductState::new(vec![a, b]).unwrap());
        let shifted = integrate_sheet(&s, &[1.0, -1.0], &[0.4, 0.1], 0.0, 2.0, 1e-3).unwrap();
        let only_a = single(a);
        let reference = integrate_sheet(&only_a, &[0.0], &[0.4], 1.0, 3.0, 1e-3).unwrap();
        for (x, y) in shifted.positions.iter().zip(&reference.positions) {
            assert!((x[0] - y[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_integration_returns_home() {
        let s = entangled();
        let fwd = propagate(&s, &[0.5, -0.5], &[0.4, -0.3], 0.0, 1.5, 5e-4).unwrap();
        let back = propagate(&s, &[0.5, -0.5], &fwd, 1.5, 0.0, 5e-4).unwrap();
        assert!(
            (back[0] - 0.4).abs() < 1e-5 && (back[1] + 0.3).abs() < 1e-5,
            "{fwd:?} {back:?}"
        );
    }

    #[test]
    fn node_stall_reports_last_tau() {
        // Two identical branches with opposite signs vanish identically.
        let prod = ProductState::new(vec![free_packet(0.0)]).unwrap();
        let c = Complex64::new(0.5f64.sqrt(), 0.0);
        let s = MftState::new(vec![c, -c], vec![prod.clone(), prod]).unwrap();
        match integrate_sheet(&s, &[0.0], &[0.5], 0.0, 1.0, 1e-2) {
            Err(Error::NodeStall { last_tau, .. }) => assert_eq!(last_tau, 0.0),
            other => panic!("expected stall, got {other:?}"),
        }
    }

    #[test]
    fn zero_offsets_rule_ignores_transport() {
        let s = entangled();
        let rule = SheetRule::LocalTransport(vec![0.4, -0.3]);
        assert_eq!(
            rule.initial(&s, &[0.0, 0.0], 0.0, 1e-3).unwrap(),
            vec![0.4, -0.3]
        );
    }

    #[test]
    fn beable_at_equal_times_is_the_diagonal_trajectory() {
        let s = entangled();
        let rule = SheetRule::Constant(vec![0.4, -0.3]);
        let x = beable_at(&s, &rule, 0.0, &[1.2, 1.2], 1e-3).unwrap();
        let sheet = integrate_sheet(&s, &[0.0, 0.0], &[0.4, -0.3], 0.0, 1.2, 1e-3).unwrap();
        assert_eq!(x, sheet.last_position());
    }

    #[test]
    fn quantum_force_pushes_outward_in_free_packet() {
        let s = single(free_packet(0.0));
        for x in [0.1, 0.5, 2.0] {
            // force = −∂Q ≥ 0 for x > 0
            assert!(-quantum_force(&s, &[x], &[0.3], 0, 1e-3).unwrap() >= 0.0);
        }
    }

    #[test]
    fn newton_residual_small_on_free_sheet() {
        let s = single(free_packet(0.0));
        let sheet = integrate_sheet(&s, &[0.0], &[1.0], 0.0, 2.0, 1e-3).unwrap();
        let r = newton_residual(&sheet, &s);
        assert_eq!(r.tau.len(), sheet.len() - 2);
        assert!(r.max() < 1e-3, "max = {}", r.max());
    }
}
