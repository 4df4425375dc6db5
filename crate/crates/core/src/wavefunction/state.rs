use std::ops::Deref;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use super::packet::{GaussianPacket, Potential};
use crate::error::{check_len, Error, Result};

/// Relative magnitude below which Ψ is treated as a node.
pub const NODE_THRESHOLD: f64 = 1e-12;

/// Multi-time argument `T = (t₁, …, tₙ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeVector(Vec<f64>);

impl TimeVector {
    pub fn new(times: Vec<f64>) -> Self {
        TimeVector(times)
    }

    /// All particles at the common time `t`.
    pub fn uniform(t: f64, n: usize) -> Self {
        TimeVector(vec![t; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for TimeVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for TimeVector {
    fn from(v: Vec<f64>) -> Self {
        TimeVector(v)
    }
}

/// Ψ stored as `exp(log_magnitude + i·phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amplitude {
    pub log_magnitude: f64,
    pub phase: f64,
}

impl Amplitude {
    pub fn magnitude(&self) -> f64 {
        self.log_magnitude.exp()
    }

    pub fn to_complex(&self) -> Complex64 {
        Complex64::from_polar(self.magnitude(), self.phase)
    }

    /// `ln(self / base)` with the phase difference folded into (−π, π].
    pub fn log_ratio(&self, base: &Amplitude) -> Complex64 {
        Complex64::new(
            self.log_magnitude - base.log_magnitude,
            wrap_phase(self.phase - base.phase),
        )
    }

    /// `self / base` as a complex number.
    pub fn ratio(&self, base: &Amplitude) -> Complex64 {
        self.log_ratio(base).exp()
    }
}

pub(crate) fn wrap_phase(phi: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = phi - TAU * (phi / TAU).round();
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Anything that can be evaluated as a multi-time wave function of
/// non-interacting particles.
pub trait WaveFunction {
    fn particle_count(&self) -> usize;
    fn mass(&self, i: usize) -> f64;
    fn potential(&self, i: usize) -> Potential;
    fn amplitude(&self, x: &[f64], t: &[f64]) -> Result<Amplitude>;
}

/// Local product `Πᵢ ψᵢ(xᵢ, tᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductState {
    packets: Vec<GaussianPacket>,
}

impl ProductState {
    pub fn new(packets: Vec<GaussianPacket>) -> Result<Self> {
        if packets.is_empty() {
            return Err(Error::InvalidState(
                "product state needs at least one packet".into(),
            ));
        }
        Ok(Self { packets })
    }

    pub fn packets(&self) -> &[GaussianPacket] {
        &self.packets
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    /// Each factor evolved to its own time.
    pub fn evolve(&self, t: &[f64]) -> Vec<GaussianPacket> {
        self.packets
            .iter()
            .zip(t)
            .map(|(p, &ti)| p.evolve(ti))
            .collect()
    }
}

/// `Ψ(X, T) = Σₐ cₐ Πᵢ ψₐᵢ(xᵢ, tᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MftState {
    coefficients: Vec<Complex64>,
    branches: Vec<ProductState>,
}

/// Branch terms evaluated at one configuration, scaled by the largest one.
pub(crate) struct BranchTerms {
    /// Evolved packets, row-major `[branch][particle]`.
    pub(crate) packets: Vec<GaussianPacket>,
    /// `ln(cₐ Ψₐ)`.
    pub(crate) logs: Vec<Complex64>,
    /// `cₐ Ψₐ / (e^{M + iφ_ref})`.
    pub(crate) scaled: Vec<Complex64>,
    pub(crate) scale_log: f64,
    pub(crate) ref_phase: f64,
    pub(crate) sum: Complex64,
    pub(crate) n: usize,
}

impl BranchTerms {
    pub(crate) fn packet(&self, branch: usize, i: usize) -> &GaussianPacket {
        &self.packets[branch * self.n + i]
    }

    /// |Ψ| relative to the largest branch term.
    pub(crate) fn relative(&self) -> f64 {
        self.sum.norm()
    }

    pub(crate) fn check_node(&self) -> Result<()> {
        let rel = self.relative();
        if rel < NODE_THRESHOLD || !rel.is_finite() {
            Err(Error::Node { relative: rel })
        } else {
            Ok(())
        }
    }

    pub(crate) fn amplitude(&self) -> Amplitude {
        Amplitude {
            log_magnitude: self.scale_log + self.sum.norm().ln(),
            phase: self.ref_phase + self.sum.im.atan2(self.sum.re),
        }
    }

    /// `∂ᵢΨ / Ψ`.
    pub(crate) fn gradient_ratio(&self, x: &[f64], i: usize) -> Complex64 {
        let num: Complex64 = self
            .scaled
            .iter()
            .enumerate()
            .map(|(a, z)| z * self.packet(a, i).log_gradient(x[i]))
            .sum();
        num / self.sum
    }

    /// `∂ᵢ²Ψ / Ψ`.
    pub(crate) fn laplacian_ratio(&self, x: &[f64], i: usize) -> Complex64 {
        let num: Complex64 = self
            .scaled
            .iter()
            .enumerate()
            .map(|(a, z)| z * self.packet(a, i).laplacian_ratio(x[i]))
            .sum();
        num / self.sum
    }
}

impl MftState {
    /// Builds a superposition; every branch must carry the same particle
    /// count, masses and potentials slot by slot.
    pub fn new(coefficients: Vec<Complex64>, branches: Vec<ProductState>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::InvalidState(
                "state needs at least one branch".into(),
            ));
        }
        check_len(branches.len(), coefficients.len())?;
        let first = &branches[0];
        for b in &branches[1..] {
            check_len(first.len(), b.len())?;
            for (p, q) in first.packets().iter().zip(b.packets()) {
                if p.mass() != q.mass() || p.potential() != q.potential() {
                    return Err(Error::InvalidState(
                        "branches disagree on a particle's mass or potential".into(),
                    ));
                }
            }
        }
        if coefficients
            .iter()
            .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(Error::InvalidState("coefficient is not finite".into()));
        }
        if coefficients.iter().all(|c| c.norm_sqr() == 0.0) {
            return Err(Error::InvalidState("all coefficients vanish".into()));
        }
        Ok(Self {
            coefficients,
            branches,
        })
    }

    pub fn product(state: ProductState) -> Self {
        Self {
            coefficients: vec![Complex64::new(1.0, 0.0)],
            branches: vec![state],
        }
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn branches(&self) -> &[ProductState] {
        &self.branches
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn particle_count(&self) -> usize {
        self.branches[0].len()
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.branches[0].packets()[i].mass()
    }

    pub fn potential(&self, i: usize) -> Potential {
        self.branches[0].packets()[i].potential()
    }

    /// `Σₐ |cₐ|²`.
    pub fn coefficient_norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Same state with each coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            coefficients: self.coefficients.iter().map(|c| c * factor).collect(),
            branches: self.branches.clone(),
        }
    }

    /// Stable content hash of all state parameters (hex, 16 chars).
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for (c, b) in self.coefficients.iter().zip(&self.branches) {
            h.update(c.re.to_bits().to_le_bytes());
            h.update(c.im.to_bits().to_le_bytes());
            for p in b.packets() {
                for v in [
                    p.mass(),
                    p.potential().omega(),
                    p.center(),
                    p.momentum(),
                    p.width().re,
                    p.width().im,
                    p.phase(),
                    p.ref_time(),
                ] {
                    h.update(v.to_bits().to_le_bytes());
                }
            }
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn check_dims(&self, x: &[f64], t: &[f64]) -> Result<()> {
        let n = self.particle_count();
        check_len(n, x.len())?;
        check_len(n, t.len())
    }

    pub(crate) fn terms(&self, x: &[f64], t: &[f64]) -> Result<BranchTerms> {
        self.check_dims(x, t)?;
        let n = self.particle_count();
        let nb = self.branches.len();
        let mut packets = Vec::with_capacity(nb * n);
        let mut logs = Vec::with_capacity(nb);
        for (c, branch) in self.coefficients.iter().zip(&self.branches) {
            let mut l = Complex64::new(c.norm().ln(), c.im.atan2(c.re));
            for (i, p) in branch.packets().iter().enumerate() {
                let e = p.evolve(t[i]);
                l += e.log_value(x[i]);
                packets.push(e);
            }
            logs.push(l);
        }
        let (best, _) = logs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (a, l)| {
                if l.re > bv {
                    (a, l.re)
                } else {
                    (bi, bv)
                }
            });
        let scale_log = logs[best].re;
        let ref_phase = logs[best].im;
        let scaled: Vec<Complex64> = logs
            .iter()
            .map(|l| Complex64::from_polar((l.re - scale_log).exp(), l.im - ref_phase))
            .collect();
        let sum = scaled.iter().sum();
        Ok(BranchTerms {
            packets,
            logs,
            scaled,
            scale_log,
            ref_phase,
            sum,
            n,
        })
    }

    /// Ψ(X, T) in log form. Fails with [`Error::Node`] when |Ψ| is below
    /// [`NODE_THRESHOLD`] times the largest branch term.
    pub fn evaluate(&self, x: &[f64], t: &[f64]) -> Result<Amplitude> {
        let terms = self.terms(x, t)?;
        terms.check_node()?;
        Ok(terms.amplitude())
    }

    /// `ln |Ψ|²`, `-inf` at exact nodes.
    pub fn log_density(&self, x: &[f64], t: &[f64]) -> Result<f64> {
        let terms = self.terms(x, t)?;
        Ok(2.0 * (terms.scale_log + terms.sum.norm().ln()))
    }

    /// `ρ = |Ψ|²`.
    pub fn density(&self, x: &[f64], t: &[f64]) -> Result<f64> {
        Ok(self.log_density(x, t)?.exp())
    }

    /// `∇ᵢS = Im(∂ᵢΨ/Ψ)`.
    pub fn phase_gradient(&self, x: &[f64], t: &[f64], i: usize) -> Result<f64> {
        check_len(self.particle_count(), x.len())?;
        if i >= self.particle_count() {
            return Err(Error::InvalidArgument(format!(
                "particle index {i} out of range"
            )));
        }
        let terms = self.terms(x, t)?;
        terms.check_node()?;
        Ok(terms.gradient_ratio(x, i).im)
    }

    /// `∇ᵢS` for every particle at once.
    pub fn phase_gradients(&self, x: &[f64], t: &[f64]) -> Result<Vec<f64>> {
        let terms = self.terms(x, t)?;
        terms.check_node()?;
        Ok((0..terms.n)
            .map(|i| terms.gradient_ratio(x, i).im)
            .collect())
    }

    /// `Q = −Σᵢ (1/2mᵢ) ∇ᵢ²R / R` with `∇²R/R = Re(∇²Ψ/Ψ) + (Im ∇Ψ/Ψ)²`.
    pub fn quantum_potential(&self, x: &[f64], t: &[f64]) -> Result<f64> {
        let terms = self.terms(x, t)?;
        terms.check_node()?;
        Ok((0..terms.n)
            .map(|i| {
                let g = terms.gradient_ratio(x, i);
                let l = terms.laplacian_ratio(x, i);
                -(l.re + g.im * g.im) / (2.0 * self.mass(i))
            })
            .sum())
    }

    /// `|cₐΨₐ|² / Σ_b |c_bΨ_b|²` at `(X, T)`.
    pub fn branch_weights(&self, x: &[f64], t: &[f64]) -> Result<Vec<f64>> {
        let terms = self.terms(x, t)?;
        let w: Vec<f64> = terms.scaled.iter().map(|z| z.norm_sqr()).collect();
        let total: f64 = w.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Unclassifiable);
        }
        Ok(w.into_iter().map(|v| v / total).collect())
    }

    /// `ln(cₐΨₐ(X,T))` for every branch.
    pub fn branch_logs(&self, x: &[f64], t: &[f64]) -> Result<Vec<Complex64>> {
        Ok(self.terms(x, t)?.logs)
    }
}

impl WaveFunction for MftState {
    fn particle_count(&self) -> usize {
        MftState::particle_count(self)
    }
    fn mass(&self, i: usize) -> f64 {
        MftState::mass(self, i)
    }
    fn potential(&self, i: usize) -> Potential {
        MftState::potential(self, i)
    }
    fn amplitude(&self, x: &[f64], t: &[f64]) -> Result<Amplitude> {
        self.evaluate(x, t)
    }
}
