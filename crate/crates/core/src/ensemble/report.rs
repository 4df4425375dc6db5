use std::fmt::Write as _;

use super::KS_ALPHA;

/// KS outcome for one coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateTest {
    pub coordinate: usize,
    pub ks_stat: f64,
    pub p_value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchFrequency {
    pub branch: usize,
    pub count: usize,
    pub freq: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub expected: f64,
}

impl BranchFrequency {
    /// Whether `expected` lies inside the Wilson interval.
    pub fn consistent(&self) -> bool {
        self.ci_low <= self.expected && self.expected <= self.ci_high
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportMetadata {
    pub seed: u64,
    pub state_hash: String,
    pub n_samples: usize,
    pub offsets: Vec<f64>,
    pub tau0: f64,
    pub tau1: f64,
    pub step: f64,
}

/// Result of an equivariance or collapse run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleReport {
    pub coordinates: Vec<CoordinateTest>,
    pub branches: Vec<BranchFrequency>,
    pub unclassified: f64,
    /// Trajectories dropped after a node stall.
    pub excluded: usize,
    pub flips: usize,
    /// False when too many samples were excluded or unclassified for the
    /// statistics to mean anything.
    pub valid: bool,
    pub metadata: ReportMetadata,
}

impl EnsembleReport {
    /// All coordinates pass KS at the 1% level.
    pub fn ks_pass(&self) -> bool {
        self.coordinates.iter().all(|c| c.p_value > KS_ALPHA)
    }

    /// Every branch frequency is consistent with its Born weight.
    pub fn frequencies_pass(&self) -> bool {
        self.branches.iter().all(BranchFrequency::consistent)
    }

    /// Overall verdict of the gate this report belongs to.
    pub fn passed(&self) -> bool {
        self.valid && self.ks_pass() && self.frequencies_pass() && self.flips == 0
    }

    /// CSV of per-coordinate KS results; coordinates are numbered from 1.
    pub fn coordinates_csv(&self) -> String {
        let mut out = String::from("coordinate,ks_stat,p_value,n\n");
        for c in &self.coordinates {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{}",
                c.coordinate + 1,
                c.ks_stat,
                c.p_value,
                c.n
            );
        }
        out
    }

    /// CSV of branch frequencies; branches are numbered from 1.
    pub fn branches_csv(&self) -> String {
        let mut out = String::from("branch,freq,ci_low,ci_high,expected\n");
        for b in &self.branches {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e}",
                b.branch + 1,
                b.freq,
                b.ci_low,
                b.ci_high,
                b.expected
            );
        }
        out
    }

    /// Machine-readable `key=value` summary.
    pub fn summary(&self) -> String {
        let m = &self.metadata;
        let mut out = String::new();
        let _ = writeln!(out, "seed={}", m.seed);
        let _ = writeln!(out, "state_hash={}", m.state_hash);
        let _ = writeln!(out, "n_samples={}", m.n_samples);
        let offsets: Vec<String> = m.offsets.iter().map(|d| format!("{d:.16e}")).collect();
        let _ = writeln!(out, "offsets={}", offsets.join(";"));
        let _ = writeln!(out, "tau0={:.16e}", m.tau0);
        let _ = writeln!(out, "tau1={:.16e}", m.tau1);
        let _ = writeln!(out, "step={:.16e}", m.step);
        let _ = writeln!(out, "excluded={}", self.excluded);
        for c in &self.coordinates {
            let k = c.coordinate + 1;
            let _ = writeln!(out, "ks_stat_{k}={:.16e}", c.ks_stat);
            let _ = writeln!(out, "ks_p_{k}={:.16e}", c.p_value);
        }
        for b in &self.branches {
            let a = b.branch + 1;
            let _ = writeln!(out, "branch_freq_{a}={:.16e}", b.freq);
            let _ = writeln!(out, "branch_ci_{a}={:.16e};{:.16e}", b.ci_low, b.ci_high);
            let _ = writeln!(out, "branch_expected_{a}={:.16e}", b.expected);
        }
        if !self.branches.is_empty() {
            let _ = writeln!(out, "unclassified={:.16e}", self.unclassified);
            let _ = writeln!(out, "flips={}", self.flips);
        }
        let _ = writeln!(out, "valid={}", self.valid);
        let _ = writeln!(out, "pass={}", self.passed());
        out
    }
}
