//! Scenario files: a JSON description of the state, the sheet to integrate,
//! the sampler and per-command analysis parameters.

use std::fmt;

use mftbohm_core::dynamics::SheetRuleKind;
use mftbohm_core::ensemble::{Proposal, SamplerConfig};
use mftbohm_core::wavefunction::{GaussianPacket, MftState, Potential, ProductState};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Largest tolerated deviation of `Σ|cₐ|²` from one; smaller deviations are
/// renormalised with a warning.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Deviations this small come from decimal input and are fixed silently.
const ROUNDING: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub state: StateSpec,
    #[serde(default)]
    pub dynamics: DynamicsSpec,
    #[serde(default)]
    pub sampler: SamplerSpec,
    #[serde(default)]
    pub analysis: Vec<Analysis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub particles: Vec<ParticleSpec>,
    pub branches: Vec<BranchSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default)]
    pub potential: PotentialSpec,
    /// Spatial dimension; only 1 is supported.
    #[serde(default = "one_usize")]
    pub dimension: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    Free,
    Harmonic {
        omega: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub coefficient: Coefficient,
    pub packets: Vec<PacketSpec>,
}

/// A real number or a `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Real(f64),
    Complex([f64; 2]),
}

impl Coefficient {
    pub fn value(&self) -> Complex64 {
        match *self {
            Coefficient::Real(r) => Complex64::new(r, 0.0),
            Coefficient::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

/// A Gaussian packet at t = 0; give exactly one of `sigma` (position
/// spread, zero chirp) or `width` (the complex `A` as `[re, im]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    #[serde(default)]
    pub center: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<[f64; 2]>,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    /// Δ; defaults to all zeros.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_offsets: Option<Vec<f64>>,
    #[serde(default)]
    pub tau0: f64,
    #[serde(default = "two")]
    pub tau1: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    /// Starting configuration of the simulated sheet; defaults to the mean
    /// branch centre at `T(tau0)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

impl Default for DynamicsSpec {
    fn default() -> Self {
        Self {
            delta_offsets: None,
            tau0: 0.0,
            tau1: 2.0,
            step: default_step(),
            x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    #[serde(default)]
    pub proposal: ProposalSpec,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        let d = SamplerConfig::default();
        Self {
            n_samples: d.n_samples,
            seed: d.seed,
            burn_in: d.burn_in,
            thinning: d.thinning,
            proposal: ProposalSpec::MixtureIndependence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalSpec {
    #[default]
    MixtureIndependence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SheetRuleSpec {
    /// The same configuration on every Δ-sheet.
    #[default]
    Constant,
    /// Each `xⱼ` carried from `tau0` to its own time by the single-time flow.
    LocalTransport,
}

impl SheetRuleSpec {
    pub fn kind(self) -> SheetRuleKind {
        match self {
            SheetRuleSpec::Constant => SheetRuleKind::Constant,
            SheetRuleSpec::LocalTransport => SheetRuleKind::LocalTransport,
        }
    }
}

/// Parameters of one command. Commands without an entry use defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Analysis {
    Residuals {
        #[serde(default = "default_probes")]
        probes: usize,
        /// Range of every `tᵢ`; defaults to `[tau0, tau1]`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<[f64; 2]>,
        #[serde(default = "default_step")]
        fd_step: f64,
    },
    Collapse {
        #[serde(default)]
        later_taus: Vec<f64>,
    },
    Sensitivity {
        /// Probe times; default `T(tau0)`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t: Option<Vec<f64>>,
        /// Explicit probe configurations; default is a lattice.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        points: Option<Vec<Vec<f64>>>,
        #[serde(default = "default_grid_points")]
        grid_points: usize,
        #[serde(default = "two")]
        grid_widths: f64,
        #[serde(default = "default_random_probes")]
        random_probes: usize,
    },
    EprScan {
        t1_fixed: f64,
        t2_grid: Vec<f64>,
        /// Base slice of the sample set; defaults to `t1_fixed`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau0: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<f64>,
        /// How samples drawn at `tau0·1` are placed on each Δ-sheet.
        #[serde(default)]
        sheet_rule: SheetRuleSpec,
    },
    NewtonCheck {
        /// Extra starting configurations besides `dynamics.x0`.
        #[serde(default)]
        starts: Vec<Vec<f64>>,
        /// Additional sheets from `|Ψ|²`-distributed starts, reported but
        /// not gated.
        #[serde(default)]
        random_starts: usize,
    },
}

impl Analysis {
    pub fn op(&self) -> &'static str {
        match self {
            Analysis::Residuals { .. } => "residuals",
            Analysis::Collapse { .. } => "collapse",
            Analysis::Sensitivity { .. } => "sensitivity",
            Analysis::EprScan { .. } => "epr_scan",
            Analysis::NewtonCheck { .. } => "newton_check",
        }
    }
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn two() -> f64 {
    2.0
}
fn default_step() -> f64 {
    1e-3
}
fn default_samples() -> usize {
    SamplerConfig::default().n_samples
}
fn default_seed() -> u64 {
    SamplerConfig::default().seed
}
fn default_burn_in() -> usize {
    SamplerConfig::default().burn_in
}
fn default_thinning() -> usize {
    SamplerConfig::default().thinning
}
fn default_probes() -> usize {
    100
}
fn default_grid_points() -> usize {
    5
}
fn default_random_probes() -> usize {
    100
}

/// Where a parse failed, 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

/// Parses and validates a scenario. Returns it with any warnings.
pub fn parse_scenario(text: &str) -> Result<(Scenario, Vec<String>), CliError> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| CliError::Parse {
        position: Position {
            line: e.line(),
            column: e.column(),
        },
        message: e.to_string(),
    })?;
    let warnings = scenario.validate()?;
    Ok((scenario, warnings))
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn finite(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite")))
    }
}

impl Scenario {
    pub fn particle_count(&self) -> usize {
        self.state.particles.len()
    }

    /// Checks every invariant; returns warnings for tolerated issues.
    pub fn validate(&self) -> Result<Vec<String>, CliError> {
        let mut warnings = Vec::new();
        let n = self.particle_count();
        if n == 0 {
            return Err(invalid("state.particles must not be empty"));
        }
        if self.state.branches.is_empty() {
            return Err(invalid("state.branches must not be empty"));
        }
        for (i, p) in self.state.particles.iter().enumerate() {
            if p.dimension != 1 {
                return Err(invalid(format!(
                    "particle {}: only dimension 1 is supported, got {}",
                    i + 1,
                    p.dimension
                )));
            }
            if !(p.mass.is_finite() && p.mass > 0.0) {
                return Err(invalid(format!("particle {}: mass must be > 0", i + 1)));
            }
            if let PotentialSpec::Harmonic { omega } = p.potential {
                if !(omega.is_finite() && omega > 0.0) {
                    return Err(invalid(format!("particle {}: omega must be > 0", i + 1)));
                }
            }
        }
        for (a, b) in self.state.branches.iter().enumerate() {
            if b.packets.len() != n {
                return Err(invalid(format!(
                    "branch {} has {} packets but there are {n} particles",
                    a + 1,
                    b.packets.len()
                )));
            }
            let c = b.coefficient.value();
            finite("coefficient", c.re)?;
            finite("coefficient", c.im)?;
            for (i, p) in b.packets.iter().enumerate() {
                let at = format!("branch {}, packet {}", a + 1, i + 1);
                finite(&at, p.center)?;
                finite(&at, p.momentum)?;
                finite(&at, p.phase)?;
                match (p.sigma, p.width) {
                    (Some(s), None) if s.is_finite() && s > 0.0 => {}
                    (None, Some([re, im])) if re.is_finite() && im.is_finite() && im > 0.0 => {}
                    (Some(_), Some(_)) => {
                        return Err(invalid(format!("{at}: give sigma or width, not both")))
                    }
                    (None, None) => return Err(invalid(format!("{at}: needs sigma or width"))),
                    _ => {
                        return Err(invalid(format!(
                            "{at}: sigma must be > 0 and width must have a positive imaginary part"
                        )))
                    }
                }
            }
        }
        let norm = self.coefficient_norm();
        if (norm - 1.0).abs() >= NORMALIZATION_TOLERANCE {
            return Err(invalid(format!(
                "coefficients are not normalised: sum |c|^2 = {norm}"
            )));
        }
        if (norm - 1.0).abs() > ROUNDING {
            warnings.push(format!(
                "coefficients renormalised (sum |c|^2 was {norm:.16e})"
            ));
        }

        let d = &self.dynamics;
        if let Some(off) = &d.delta_offsets {
            if off.len() != n {
                return Err(invalid(format!(
                    "dynamics.delta_offsets has {} entries for {n} particles",
                    off.len()
                )));
            }
            mftbohm_core::dynamics::check_offsets(off)
                .map_err(|e| invalid(format!("dynamics.delta_offsets: {e}")))?;
        }
        if let Some(x0) = &d.x0 {
            if x0.len() != n {
                return Err(invalid(format!(
                    "dynamics.x0 has {} entries for {n} particles",
                    x0.len()
                )));
            }
            for v in x0 {
                finite("dynamics.x0", *v)?;
            }
        }
        finite("dynamics.tau0", d.tau0)?;
        finite("dynamics.tau1", d.tau1)?;
        if !(d.step.is_finite() && d.step > 0.0) {
            return Err(invalid("dynamics.step must be > 0"));
        }

        let s = &self.sampler;
        if s.n_samples == 0 {
            return Err(invalid("sampler.n_samples must be >= 1"));
        }
        if s.thinning == 0 {
            return Err(invalid("sampler.thinning must be >= 1"));
        }

        let mut seen = Vec::new();
        for a in &self.analysis {
            if seen.contains(&a.op()) {
                return Err(invalid(format!("analysis op {} listed twice", a.op())));
            }
            seen.push(a.op());
            self.validate_analysis(a)?;
        }
        Ok(warnings)
    }

    fn validate_analysis(&self, a: &Analysis) -> Result<(), CliError> {
        let n = self.particle_count();
        match a {
            Analysis::Residuals {
                probes,
                window,
                fd_step,
            } => {
                if *probes == 0 {
                    return Err(invalid("residuals.probes must be >= 1"));
                }
                if let Some([lo, hi]) = window {
                    finite("residuals.window", *lo)?;
                    finite("residuals.window", *hi)?;
                }
                if !(fd_step.is_finite() && *fd_step > 0.0) {
                    return Err(invalid("residuals.fd_step must be > 0"));
                }
            }
            Analysis::Collapse { later_taus } => {
                for t in later_taus {
                    finite("collapse.later_taus", *t)?;
                }
            }
            Analysis::Sensitivity {
                t,
                points,
                grid_points,
                ..
            } => {
                if n < 2 {
                    return Err(invalid("sensitivity needs at least two particles"));
                }
                if t.as_ref().is_some_and(|t| t.len() != n) {
                    return Err(invalid("sensitivity.t must have one entry per particle"));
                }
                if points
                    .as_ref()
                    .is_some_and(|p| p.iter().any(|x| x.len() != n))
                {
                    return Err(invalid(
                        "sensitivity.points must have one entry per particle",
                    ));
                }
                if *grid_points < 2 {
                    return Err(invalid("sensitivity.grid_points must be >= 2"));
                }
            }
            Analysis::EprScan { t2_grid, step, .. } => {
                if n < 2 {
                    return Err(invalid("epr_scan needs at least two particles"));
                }
                if t2_grid.is_empty() {
                    return Err(invalid("epr_scan.t2_grid must not be empty"));
                }
                if step.is_some_and(|h| !(h.is_finite() && h > 0.0)) {
                    return Err(invalid("epr_scan.step must be > 0"));
                }
            }
            Analysis::NewtonCheck { starts, .. } => {
                if starts.iter().any(|x| x.len() != n) {
                    return Err(invalid(
                        "newton_check.starts must have one entry per particle",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn coefficient_norm(&self) -> f64 {
        self.state
            .branches
            .iter()
            .map(|b| b.coefficient.value().norm_sqr())
            .sum()
    }

    /// The wave function, with coefficients scaled to unit norm.
    pub fn build_state(&self) -> Result<MftState, CliError> {
        let scale = self.coefficient_norm().sqrt();
        let mut coefficients = Vec::new();
        let mut branches = Vec::new();
        for b in &self.state.branches {
            coefficients.push(b.coefficient.value() / scale);
            let packets = b
                .packets
                .iter()
                .zip(&self.state.particles)
                .map(|(p, particle)| {
                    let potential = match particle.potential {
                        PotentialSpec::Free => Potential::Free,
                        PotentialSpec::Harmonic { omega } => Potential::harmonic(omega)?,
                    };
                    let width = match (p.sigma, p.width) {
                        (Some(s), _) => Complex64::new(0.0, 1.0 / (4.0 * s * s)),
                        (None, Some([re, im])) => Complex64::new(re, im),
                        (None, None) => {
                            return Err(mftbohm_core::Error::InvalidState(
                                "packet needs sigma or width".into(),
                            ))
                        }
                    };
                    GaussianPacket::new(
                        particle.mass,
                        potential,
                        p.center,
                        p.momentum,
                        width,
                        p.phase,
                        0.0,
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            branches.push(ProductState::new(packets)?);
        }
        Ok(MftState::new(coefficients, branches)?)
    }

    pub fn offsets(&self) -> Vec<f64> {
        self.dynamics
            .delta_offsets
            .clone()
            .unwrap_or_else(|| vec![0.0; self.particle_count()])
    }

    /// `dynamics.x0`, or the mean branch centre at `T(tau0)`.
    pub fn start(&self, state: &MftState) -> Vec<f64> {
        if let Some(x0) = &self.dynamics.x0 {
            return x0.clone();
        }
        let t: Vec<f64> = self
            .offsets()
            .iter()
            .map(|d| self.dynamics.tau0 + d)
            .collect();
        let evolved: Vec<_> = state.branches().iter().map(|b| b.evolve(&t)).collect();
        (0..self.particle_count())
            .map(|i| evolved.iter().map(|b| b[i].center()).sum::<f64>() / evolved.len() as f64)
            .collect()
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            n_samples: self.sampler.n_samples,
            seed: self.sampler.seed,
            burn_in: self.sampler.burn_in,
            thinning: self.sampler.thinning,
            proposal: match self.sampler.proposal {
                ProposalSpec::MixtureIndependence => Proposal::MixtureIndependence,
            },
        }
    }

    pub fn analysis(&self, op: &str) -> Option<&Analysis> {
        self.analysis.iter().find(|a| a.op() == op)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    /// Hash of the resolved scenario (16 hex chars).
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("scenario serialises"));
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
