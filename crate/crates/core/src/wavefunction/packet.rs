//! Thawed Gaussian packets with closed-form evolution (ħ = 1).
//!
//! A packet is parameterised as
//!
//! ```text
//! ψ(x, t₀) = N(A) · exp( i [ A (x − ξ)² + p (x − ξ) + γ ] ),   N(A) = (2 Im A / π)^¼
//! ```
//!
//! For at-most-quadratic potentials the Gaussian form is preserved exactly.
//! The width obeys the Riccati flow `dA/dt = −2A²/m − V''/2`, which
//! linearises through `A = (m/2) ṙ/r` with `r̈ = −ω² r`, `r(t₀) = 1`.
//! The complex prefactor `r^{-1/2}` contributes `−½ arg r` to the phase; the
//! argument is tracked continuously so that γ never needs 2π unwrapping.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Time-independent external potential acting on one particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential {
    Free,
    /// `V(x) = ½ m ω² x²`
    Harmonic {
        omega: f64,
    },
}

impl Potential {
    pub fn harmonic(omega: f64) -> Result<Self> {
        if omega.is_finite() && omega > 0.0 {
            Ok(Potential::Harmonic { omega })
        } else {
            Err(Error::InvalidState(format!(
                "harmonic potential needs omega > 0, got {omega}"
            )))
        }
    }

    pub fn omega(&self) -> f64 {
        match *self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => omega,
        }
    }

    pub fn value(&self, mass: f64, x: f64) -> f64 {
        match *self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => 0.5 * mass * omega * omega * x * x,
        }
    }

    pub fn gradient(&self, mass: f64, x: f64) -> f64 {
        match *self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => mass * omega * omega * x,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Potential::Free => Ok(()),
            Potential::Harmonic { omega } => Potential::harmonic(omega).map(|_| ()),
        }
    }
}

/// One particle's Gaussian factor ψ(x, t) described at its reference time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPacket {
    mass: f64,
    potential: Potential,
    center: f64,
    momentum: f64,
    width: Complex64,
    phase: f64,
    ref_time: f64,
}

impl GaussianPacket {
    pub fn new(
        mass: f64,
        potential: Potential,
        center: f64,
        momentum: f64,
        width: Complex64,
        phase: f64,
        ref_time: f64,
    ) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidState(format!("mass must be > 0, got {mass}")));
        }
        potential.validate()?;
        if !(width.re.is_finite() && width.im.is_finite() && width.im > 0.0) {
            return Err(Error::InvalidState(format!(
                "width parameter needs Im A > 0, got {width}"
            )));
        }
        for (name, v) in [
            ("center", center),
            ("momentum", momentum),
            ("phase", phase),
            ("ref_time", ref_time),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidState(format!("{name} is not finite")));
            }
        }
        Ok(Self {
            mass,
            potential,
            center,
            momentum,
            width,
            phase,
            ref_time,
        })
    }

    /// Real-width packet with position standard deviation `sigma` at `t = 0`.
    pub fn with_sigma(
        mass: f64,
        potential: Potential,
        center: f64,
        momentum: f64,
        sigma: f64,
    ) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidState(format!(
                "sigma must be > 0, got {sigma}"
            )));
        }
        let width = Complex64::new(0.0, 0.25 / (sigma * sigma));
        Self::new(mass, potential, center, momentum, width, 0.0, 0.0)
    }

    /// Ground-state width of the oscillator, displaced to `(center, momentum)`.
    pub fn coherent(mass: f64, omega: f64, center: f64, momentum: f64) -> Result<Self> {
        let potential = Potential::harmonic(omega)?;
        let width = Complex64::new(0.0, 0.5 * mass * omega);
        Self::new(mass, potential, center, momentum, width, 0.0, 0.0)
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }
    pub fn potential(&self) -> Potential {
        self.potential
    }
    pub fn center(&self) -> f64 {
        self.center
    }
    pub fn momentum(&self) -> f64 {
        self.momentum
    }
    pub fn width(&self) -> Complex64 {
        self.width
    }
    pub fn phase(&self) -> f64 {
        self.phase
    }
    pub fn ref_time(&self) -> f64 {
        self.ref_time
    }

    /// Variance of |ψ|², `1 / (4 Im A)`.
    pub fn position_variance(&self) -> f64 {
        0.25 / self.width.im
    }

    pub fn position_std(&self) -> f64 {
        self.position_variance().sqrt()
    }

    /// `ln N = ¼ ln(2 Im A / π)`.
    pub fn log_norm(&self) -> f64 {
        0.25 * (2.0 * self.width.im / PI).ln()
    }

    /// Closed-form Schrödinger evolution to absolute time `t` (either direction).
    pub fn evolve(&self, t: f64) -> GaussianPacket {
        let dt = t - self.ref_time;
        let m = self.mass;
        let a0 = self.width;
        let (center, momentum, width, arg_r) = match self.potential {
            Potential::Free => {
                let r = 1.0 + a0 * (2.0 * dt / m);
                (
                    self.center + self.momentum * dt / m,
                    self.momentum,
                    a0 / r,
                    r.im.atan2(r.re),
                )
            }
            Potential::Harmonic { omega } => {
                let angle = omega * dt;
                let (s, c) = angle.sin_cos();
                let k = a0 * (2.0 / (m * omega));
                let r = c + k * s;
                let width = (k * c - s) / r * (0.5 * m * omega);
                (
                    self.center * c + self.momentum / (m * omega) * s,
                    self.momentum * c - m * omega * self.center * s,
                    width,
                    harmonic_arg(angle, k),
                )
            }
        };
        // Action of a quadratic Lagrangian along the classical path is ½ Δ(pξ).
        let action = 0.5 * (momentum * center - self.momentum * self.center);
        GaussianPacket {
            center,
            momentum,
            width,
            phase: self.phase + action - 0.5 * arg_r,
            ref_time: t,
            ..*self
        }
    }

    /// `ln ψ(x)` at the reference time.
    pub fn log_value(&self, x: f64) -> Complex64 {
        let dx = x - self.center;
        let a = self.width;
        Complex64::new(
            self.log_norm() - a.im * dx * dx,
            a.re * dx * dx + self.momentum * dx + self.phase,
        )
    }

    /// `ψ(x)` at the reference time.
    pub fn value(&self, x: f64) -> Complex64 {
        self.log_value(x).exp()
    }

    /// `ψ'(x) / ψ(x)`.
    pub fn log_gradient(&self, x: f64) -> Complex64 {
        let dx = x - self.center;
        Complex64::i() * (self.width * (2.0 * dx) + self.momentum)
    }

    /// `ψ''(x) / ψ(x)`.
    pub fn laplacian_ratio(&self, x: f64) -> Complex64 {
        let g = self.log_gradient(x);
        g * g + Complex64::i() * self.width * 2.0
    }
}

/// Continuous argument of `r(φ) = cos φ + k sin φ` with `Im k > 0`.
///
/// `r` winds once around the origin every 2π, so the argument grows by π
/// on each half period and stays within `[0, π]` inside one.
fn harmonic_arg(angle: f64, k: Complex64) -> f64 {
    let turns = (angle / PI).floor();
    let rem = angle - turns * PI;
    let (s, c) = rem.sin_cos();
    let r = c + k * s;
    turns * PI + r.im.atan2(r.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn free(sigma: f64, p: f64) -> GaussianPacket {
        GaussianPacket::with_sigma(1.0, Potential::Free, 0.0, p, sigma).unwrap()
    }

    #[test]
    fn zero_duration_is_identity() {
        let p = free(1.0, 0.0);
        assert_eq!(p.evolve(0.0), p);
    }

    #[test]
    fn free_spreading_variance() {
        let p = free(1.0, 0.0).evolve(2.0);
        assert_relative_eq!(p.position_variance(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn coherent_state_returns_after_one_period() {
        let p = GaussianPacket::coherent(1.0, 1.0, 1.3, -0.4).unwrap();
        let q = p.evolve(2.0 * PI);
        assert_relative_eq!(q.center(), p.center(), epsilon = 1e-12);
        assert_relative_eq!(q.momentum(), p.momentum(), epsilon = 1e-12);
        assert_relative_eq!(q.width().re, p.width().re, epsilon = 1e-12);
        assert_relative_eq!(q.width().im, p.width().im, epsilon = 1e-12);
        // zero-point phase −ω/2 · 2π
        assert_relative_eq!(q.phase() - p.phase(), -PI, epsilon = 1e-12);
    }

    #[test]
    fn harmonic_arg_is_continuous_across_half_periods() {
        let k = Complex64::new(0.3, 0.7);
        let mut prev = harmonic_arg(-7.0, k);
        let mut angle = -7.0;
        while angle < 13.0 {
            angle += 1e-3;
            let a = harmonic_arg(angle, k);
            assert!((a - prev).abs() < 0.01, "jump at {angle}: {prev} -> {a}");
            prev = a;
        }
    }

    #[test]
    fn rejects_non_normalisable_width() {
        let err = GaussianPacket::new(
            1.0,
            Potential::Free,
            0.0,
            0.0,
            Complex64::new(0.0, -0.25),
            0.0,
            0.0,
        );
        assert!(err.is_err());
        assert!(GaussianPacket::with_sigma(0.0, Potential::Free, 0.0, 0.0, 1.0).is_err());
        assert!(Potential::harmonic(0.0).is_err());
    }

    #[test]
    fn analytic_normalisation_integrates_to_one() {
        let p = GaussianPacket::with_sigma(1.0, Potential::harmonic(0.7).unwrap(), 0.3, 1.0, 0.6)
            .unwrap()
            .evolve(3.1);
        let h = 1e-3;
        let s: f64 = (-20_000..=20_000)
            .map(|k| p.value(p.center() + k as f64 * h).norm_sqr())
            .sum::<f64>()
            * h;
        assert_relative_eq!(s, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn density_at_center_of_unit_packet() {
        let p = free(1.0, 0.0);
        assert_relative_eq!(
            p.value(0.0).norm_sqr(),
            (2.0 * PI).powf(-0.5),
            epsilon = 1e-15
        );
    }
}
