//! One pipeline per command. Each returns whether its gate passed plus
//! summary entries; files go through [`OutputDir`].

use clap::ValueEnum;
use mftbohm_core::dynamics::{integrate_sheet, newton_residual};
use mftbohm_core::ensemble::{
    collapse_statistics, equivariance_test, sample_initial, sample_probe_points, Classification,
    CollapseSetup, EnsembleReport,
};
use mftbohm_core::locality::{
    cross_time_sensitivity, epr_timing_scan, probe_grid, single_time_oracle, SensitivityReport,
};
use mftbohm_core::wavefunction::{
    hj_continuity_residual, max_schrodinger_residual, FdSteps, MftState,
};
use rayon::prelude::*;

use crate::error::CliError;
use crate::output::{indexed, num, Csv, OutputDir};
use crate::scenario::{Analysis, Scenario, SheetRuleSpec};

/// Deviation allowed between the Δ = 0 sheet and the single-time oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-6;
/// Largest local residual accepted at the default difference step.
pub const RESIDUAL_TOLERANCE: f64 = 1e-5;
/// Largest quantum Newton residual accepted.
pub const NEWTON_TOLERANCE: f64 = 1e-3;
/// Cross-time sensitivity bound for single-branch states.
pub const PRODUCT_SENSITIVITY: f64 = 1e-9;
/// Entangled states must exceed this somewhere on the probe grid.
pub const WITNESS_THRESHOLD: f64 = 1e-3;
/// Error ratio under step halving accepted as second order.
pub const ORDER_TWO_RATIO: (f64, f64) = (3.0, 5.0);
/// Below this, errors sit at roundoff and no order is measurable.
const ROUNDOFF_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Simulate,
    Equivariance,
    Collapse,
    Sensitivity,
    EprScan,
    NewtonCheck,
    Residuals,
    Validate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Equivariance => "equivariance",
            Command::Collapse => "collapse",
            Command::Sensitivity => "sensitivity",
            Command::EprScan => "epr-scan",
            Command::NewtonCheck => "newton-check",
            Command::Residuals => "residuals",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub passed: bool,
    pub summary: Vec<(String, String)>,
}

impl Outcome {
    fn put(&mut self, key: impl Into<String>, value: impl ToString) {
        self.summary.push((key.into(), value.to_string()));
    }

    fn extend_from_report(&mut self, report: &EnsembleReport) {
        for line in report.summary().lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.put(k, v);
            }
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.summary
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.summary
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

fn times(offsets: &[f64], tau: f64) -> Vec<f64> {
    offsets.iter().map(|d| tau + d).collect()
}

/// Ratio of errors at step h and h/2, or `None` when both are at roundoff.
pub fn halving_ratio(coarse: f64, fine: f64) -> Option<f64> {
    (coarse > ROUNDOFF_FLOOR).then(|| coarse / fine)
}

fn second_order(ratio: Option<f64>) -> bool {
    ratio.is_none_or(|r| (ORDER_TWO_RATIO.0..=ORDER_TWO_RATIO.1).contains(&r))
}

fn ratio_text(ratio: Option<f64>) -> String {
    ratio.map_or_else(|| "roundoff".to_string(), num)
}

pub fn execute(
    command: Command,
    scenario: &Scenario,
    out: Option<&mut OutputDir>,
) -> Result<Outcome, CliError> {
    let state = scenario.build_state()?;
    let mut outcome = Outcome {
        passed: true,
        summary: Vec::new(),
    };
    outcome.put("command", command.name());
    outcome.put("scenario", &scenario.name);
    outcome.put("state_hash", state.content_hash());
    let Some(out) = out else {
        return Ok(outcome);
    };
    match command {
        Command::Validate => {}
        Command::Simulate => simulate(scenario, &state, out, &mut outcome)?,
        Command::Equivariance => {
            let d = &scenario.dynamics;
            let report = equivariance_test(
                &state,
                &scenario.offsets(),
                d.tau0,
                d.tau1,
                &scenario.sampler_config(),
                d.step,
            )?;
            out.csv(
                "equivariance.csv",
                &Csv::from_body(report.coordinates_csv()),
                Some("plot $FILE using 1:3 with points pt 7 title 'KS p-value'"),
            )?;
            outcome.extend_from_report(&report);
            outcome.passed = report.passed();
        }
        Command::Collapse => {
            let d = &scenario.dynamics;
            let later_taus = match scenario.analysis("collapse") {
                Some(Analysis::Collapse { later_taus }) => later_taus.clone(),
                _ => Vec::new(),
            };
            let setup = CollapseSetup {
                offsets: scenario.offsets(),
                tau0: d.tau0,
                tau1: d.tau1,
                later_taus,
                step: d.step,
            };
            let report = collapse_statistics(&state, &setup, &scenario.sampler_config())?;
            out.csv(
                "collapse.csv",
                &Csv::from_body(report.branches_csv()),
                Some("plot $FILE using 1:2:3:4 with yerrorbars title 'frequency', $FILE using 1:5 with points title 'expected'"),
            )?;
            outcome.extend_from_report(&report);
            outcome.passed = report.passed();
        }
        Command::Sensitivity => sensitivity(scenario, &state, out, &mut outcome)?,
        Command::EprScan => epr_scan(scenario, &state, out, &mut outcome)?,
        Command::NewtonCheck => newton_check(scenario, &state, out, &mut outcome)?,
        Command::Residuals => residuals(scenario, &state, out, &mut outcome)?,
    }
    Ok(outcome)
}

fn simulate(
    scenario: &Scenario,
    state: &MftState,
    out: &mut OutputDir,
    outcome: &mut Outcome,
) -> Result<(), CliError> {
    let d = &scenario.dynamics;
    let offsets = scenario.offsets();
    let x0 = scenario.start(state);
    let n = state.particle_count();
    let sheet = integrate_sheet(state, &offsets, &x0, d.tau0, d.tau1, d.step)?;
    let mut columns = vec!["tau".to_string()];
    columns.extend(indexed("t", n));
    columns.extend(indexed("x", n));
    let mut csv = Csv::new(&columns);
    for k in 0..sheet.len() {
        let mut row = vec![num(sheet.tau[k])];
        row.extend(sheet.times(k).into_iter().map(num));
        row.extend(sheet.positions[k].iter().map(|&v| num(v)));
        csv.row(&row);
    }
    let plot = (0..n)
        .map(|i| format!("$FILE using 1:{} with lines title 'x_{}'", 2 + n + i, i + 1))
        .collect::<Vec<_>>()
        .join(", ");
    out.csv("trajectory.csv", &csv, Some(&format!("plot {plot}")))?;
    for (i, x) in sheet.last_position().iter().enumerate() {
        outcome.put(format!("final_x_{}", i + 1), num(*x));
    }
    if offsets.iter().all(|&v| v == 0.0) {
        let oracle = single_time_oracle(state, &x0, d.tau0, d.tau1, d.step)?;
        let deviation = oracle
            .x
            .iter()
            .zip(&sheet.positions)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).abs()))
            .fold(0.0, f64::max);
        outcome.put("oracle_deviation", num(deviation));
        outcome.passed = deviation <= ORACLE_TOLERANCE;
    }
    Ok(())
}

fn sensitivity(
    scenario: &Scenario,
    state: &MftState,
    out: &mut OutputDir,
    outcome: &mut Outcome,
) -> Result<(), CliError> {
    let n = state.particle_count();
    if n < 2 {
        return Err(CliError::Validation(
            "sensitivity needs at least two particles".into(),
        ));
    }
    let d = &scenario.dynamics;
    let (t, points, grid_points, grid_widths, random_probes) =
        match scenario.analysis("sensitivity") {
            Some(Analysis::Sensitivity {
                t,
                points,
                grid_points,
                grid_widths,
                random_probes,
            }) => (
                t.clone(),
                points.clone(),
                *grid_points,
                *grid_widths,
                *random_probes,
            ),
            _ => (None, None, 5, 2.0, 100),
        };
    let t = t.unwrap_or_else(|| times(&scenario.offsets(), d.tau0));
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();

    // grid probes, lattice in the plane of each pair
    let mut grid: Vec<(usize, usize, Vec<f64>, Vec<f64>)> = Vec::new();
    for &(i, j) in &pairs {
        let xs = match &points {
            Some(p) => p.clone(),
            None => probe_grid(state, &t, i, j, grid_points, grid_widths)?,
        };
        grid.extend(xs.into_iter().map(|x| (i, j, x, t.clone())));
    }
    let lo = d.tau0.min(d.tau1);
    let hi = d.tau0.max(d.tau1);
    let random: Vec<(usize, usize, Vec<f64>, Vec<f64>)> =
        sample_probe_points(state, (lo, hi), random_probes, scenario.sampler.seed)?
            .into_iter()
            .enumerate()
            .map(|(k, p)| {
                let (i, j) = pairs[k % pairs.len()];
                (i, j, p.x, p.t)
            })
            .collect();

    let evaluate = |probes: &[(usize, usize, Vec<f64>, Vec<f64>)]| -> Result<Vec<Option<SensitivityReport>>, CliError> {
        probes
            .par_iter()
            .map(|(i, j, x, t)| match cross_time_sensitivity(state, x, t, *i, *j) {
                Ok(r) => Ok(Some(r)),
                Err(e) if e.is_node() => Ok(None),
                Err(e) => Err(e.into()),
            })
            .collect()
    };
    let grid_reports = evaluate(&grid)?;
    let random_reports = evaluate(&random)?;

    let mut columns = vec!["i".to_string(), "j".to_string()];
    columns.extend(indexed("x", n));
    columns.extend(indexed("t", n));
    columns.extend(["dvi_dtj".to_string(), "step".to_string()]);
    let mut csv = Csv::new(&columns);
    let mut nodes = 0usize;
    let mut unconverged = 0usize;
    let mut max_of = |reports: &[Option<SensitivityReport>]| -> f64 {
        let mut max = 0.0f64;
        for r in reports {
            let Some(r) = r else {
                nodes += 1;
                continue;
            };
            let mut row = vec![(r.i + 1).to_string(), (r.j + 1).to_string()];
            row.extend(r.x.iter().map(|&v| num(v)));
            row.extend(r.t.iter().map(|&v| num(v)));
            row.extend([num(r.value), num(r.step)]);
            csv.row(&row);
            unconverged += usize::from(!r.converged());
            max = max.max(r.value.abs());
        }
        max
    };
    let max_grid = max_of(&grid_reports);
    let max_random = max_of(&random_reports);
    out.csv(
        "sensitivity.csv",
        &csv,
        Some(&format!("set logscale y\nplot $FILE using 0:(abs(column({}))) with points pt 7 title '|dv_i/dt_j|'", 3 + 2 * n)),
    )?;

    let product = state.branch_count() == 1;
    outcome.put("probes", grid.len() + random.len());
    outcome.put("node_points", nodes);
    outcome.put("unconverged", unconverged);
    outcome.put("max_abs_dvdt_grid", num(max_grid));
    outcome.put("max_abs_dvdt_random", num(max_random));
    outcome.put("max_abs_dvdt", num(max_grid.max(max_random)));
    outcome.put("product_state", product);
    outcome.put("witness", max_grid > WITNESS_THRESHOLD);
    outcome.passed =
        unconverged == 0 && (!product || max_grid.max(max_random) < PRODUCT_SENSITIVITY);
    Ok(())
}

fn epr_scan(
    scenario: &Scenario,
    state: &MftState,
    out: &mut OutputDir,
    outcome: &mut Outcome,
) -> Result<(), CliError> {
    let Some(Analysis::EprScan {
        t1_fixed,
        t2_grid,
        tau0,
        step,
        sheet_rule,
    }) = scenario.analysis("epr_scan")
    else {
        return Err(CliError::Validation(
            "epr-scan needs an analysis entry with op \"epr_scan\"".into(),
        ));
    };
    let report = epr_timing_scan(
        state,
        *t1_fixed,
        t2_grid,
        tau0.unwrap_or(*t1_fixed),
        sheet_rule.kind(),
        &scenario.sampler_config(),
        step.unwrap_or(scenario.dynamics.step),
    )?;
    let mut csv = Csv::new(&["sample", "t2", "branch", "w_max"]);
    for row in &report.rows {
        let branch = match row.class {
            Classification::Branch(a) => (a + 1).to_string(),
            Classification::Unclassified => "unclassified".to_string(),
        };
        csv.row(&[
            (row.sample + 1).to_string(),
            num(row.t2),
            branch,
            num(row.w_max),
        ]);
    }
    out.csv(
        "epr_scan.csv",
        &csv,
        Some("plot $FILE using 2:4 with points title 'w_max'"),
    )?;
    outcome.put("seed", scenario.sampler.seed);
    outcome.put("n_samples", scenario.sampler.n_samples);
    outcome.put("t1_fixed", num(*t1_fixed));
    outcome.put(
        "sheet_rule",
        match sheet_rule {
            SheetRuleSpec::Constant => "constant",
            SheetRuleSpec::LocalTransport => "local_transport",
        },
    );
    for f in &report.frequencies[0] {
        outcome.put(format!("branch_expected_{}", f.branch + 1), num(f.expected));
    }
    for (g, (t2, freqs)) in report.t2_grid.iter().zip(&report.frequencies).enumerate() {
        let g = g + 1;
        outcome.put(format!("t2_{g}"), num(*t2));
        for f in freqs {
            let a = f.branch + 1;
            outcome.put(format!("branch_freq_{a}_at_{g}"), num(f.freq));
            outcome.put(
                format!("branch_ci_{a}_at_{g}"),
                format!("{};{}", num(f.ci_low), num(f.ci_high)),
            );
        }
        outcome.put(
            format!("unclassified_at_{g}"),
            num(report.unclassified[g - 1]),
        );
    }
    outcome.put("excluded", report.excluded);
    outcome.put("flips", report.flips);
    outcome.put("pass", report.passed());
    outcome.passed = report.passed();
    Ok(())
}

fn newton_check(
    scenario: &Scenario,
    state: &MftState,
    out: &mut OutputDir,
    outcome: &mut Outcome,
) -> Result<(), CliError> {
    let d = &scenario.dynamics;
    let offsets = scenario.offsets();
    let n = state.particle_count();
    let mut starts = vec![scenario.start(state)];
    let mut random_starts = 0;
    if let Some(Analysis::NewtonCheck {
        starts: extra,
        random_starts: r,
    }) = scenario.analysis("newton_check")
    {
        starts.extend(extra.iter().cloned());
        random_starts = *r;
    }
    let mut columns = vec!["sheet".to_string(), "tau".to_string()];
    columns.extend(indexed("r", n));
    let mut csv = Csv::new(&columns);
    let mut coarse = 0.0f64;
    let mut fine = 0.0f64;
    for (s, x0) in starts.iter().enumerate() {
        let sheet = integrate_sheet(state, &offsets, x0, d.tau0, d.tau1, d.step)?;
        let r = newton_residual(&sheet, state);
        for (tau, row) in r.tau.iter().zip(&r.residual) {
            let mut fields = vec![(s + 1).to_string(), num(*tau)];
            fields.extend(row.iter().map(|&v| num(v)));
            csv.row(&fields);
        }
        coarse = coarse.max(r.max());
        let half = integrate_sheet(state, &offsets, x0, d.tau0, d.tau1, 0.5 * d.step)?;
        fine = fine.max(newton_residual(&half, state).max());
    }
    let plot = (0..n)
        .map(|i| format!("$FILE using 2:{} with lines title 'r_{}'", 3 + i, i + 1))
        .collect::<Vec<_>>()
        .join(", ");
    out.csv(
        "newton.csv",
        &csv,
        Some(&format!("set logscale y\nplot {plot}")),
    )?;
    let ratio = halving_ratio(coarse, fine);
    outcome.put("sheets", starts.len());
    outcome.put("step", num(d.step));
    outcome.put("max_residual", num(coarse));
    outcome.put("max_residual_half_step", num(fine));
    outcome.put("halving_ratio", ratio_text(ratio));
    if random_starts > 0 {
        let t0: Vec<f64> = offsets.iter().map(|o| d.tau0 + o).collect();
        let mut cfg = scenario.sampler_config();
        cfg.n_samples = random_starts;
        let within = sample_initial(state, &t0, &cfg)?
            .par_iter()
            .map(|x0| {
                integrate_sheet(state, &offsets, x0, d.tau0, d.tau1, d.step)
                    .map(|sheet| newton_residual(&sheet, state).max() < NEWTON_TOLERANCE)
                    .unwrap_or(false)
            })
            .filter(|&ok| ok)
            .count();
        outcome.put("random_sheets", random_starts);
        outcome.put("random_sheets_within_tolerance", within);
    }
    outcome.passed = coarse < NEWTON_TOLERANCE && second_order(ratio);
    Ok(())
}

struct ResidualRow {
    x: Vec<f64>,
    t: Vec<f64>,
    /// Schrödinger, Hamilton–Jacobi and continuity at h, then at h/2.
    values: [f64; 6],
}

fn residuals(
    scenario: &Scenario,
    state: &MftState,
    out: &mut OutputDir,
    outcome: &mut Outcome,
) -> Result<(), CliError> {
    let d = &scenario.dynamics;
    let (probes, window, fd_step) = match scenario.analysis("residuals") {
        Some(Analysis::Residuals {
            probes,
            window,
            fd_step,
        }) => (*probes, *window, *fd_step),
        _ => (100, None, 1e-3),
    };
    let [lo, hi] = window.unwrap_or([d.tau0.min(d.tau1), d.tau0.max(d.tau1)]);
    let points = sample_probe_points(state, (lo, hi), probes, scenario.sampler.seed)?;
    let steps = FdSteps::uniform(fd_step);
    let rows: Vec<Option<ResidualRow>> = points
        .par_iter()
        .map(|p| {
            let eval = || -> mftbohm_core::Result<ResidualRow> {
                let s = max_schrodinger_residual(state, &p.x, &p.t, steps)?;
                let (hj, c) = hj_continuity_residual(state, &p.x, &p.t, steps)?;
                let s2 = max_schrodinger_residual(state, &p.x, &p.t, steps.halved())?;
                let (hj2, c2) = hj_continuity_residual(state, &p.x, &p.t, steps.halved())?;
                Ok(ResidualRow {
                    x: p.x.clone(),
                    t: p.t.clone(),
                    values: [s, hj, c, s2, hj2, c2],
                })
            };
            match eval() {
                Ok(r) => Ok(Some(r)),
                Err(e) if e.is_node() => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<mftbohm_core::Result<_>>()?;

    let n = state.particle_count();
    let mut columns = vec!["probe".to_string()];
    columns.extend(indexed("x", n));
    columns.extend(indexed("t", n));
    columns.extend(
        [
            "schrodinger",
            "hamilton_jacobi",
            "continuity",
            "schrodinger_half",
            "hamilton_jacobi_half",
            "continuity_half",
        ]
        .map(String::from),
    );
    let mut csv = Csv::new(&columns);
    let mut max = [0.0f64; 6];
    let mut sq = [0.0f64; 6];
    let mut used = 0usize;
    for (k, row) in rows.iter().enumerate() {
        let Some(row) = row else { continue };
        used += 1;
        let mut fields = vec![(k + 1).to_string()];
        fields.extend(row.x.iter().chain(&row.t).map(|&v| num(v)));
        fields.extend(row.values.iter().map(|&v| num(v)));
        csv.row(&fields);
        for (m, (s, v)) in max.iter_mut().zip(sq.iter_mut().zip(row.values)) {
            *m = m.max(v);
            *s += v * v;
        }
    }
    let c = 2 + 2 * n;
    out.csv(
        "residuals.csv",
        &csv,
        Some(&format!(
            "set logscale y\nplot $FILE using 1:{} title 'schrodinger', $FILE using 1:{} title 'hamilton-jacobi', $FILE using 1:{} title 'continuity'",
            c,
            c + 1,
            c + 2
        )),
    )?;
    let rms = sq.map(|s| (s / used.max(1) as f64).sqrt());
    outcome.put("probes", used);
    outcome.put("node_points", rows.len() - used);
    outcome.put("fd_step", num(fd_step));
    let mut passed = used > 0;
    for (k, name) in ["schrodinger", "hamilton_jacobi", "continuity"]
        .iter()
        .enumerate()
    {
        let ratio = halving_ratio(rms[k], rms[k + 3]);
        outcome.put(format!("max_{name}"), num(max[k]));
        outcome.put(format!("rms_{name}"), num(rms[k]));
        outcome.put(format!("halving_ratio_{name}"), ratio_text(ratio));
        passed &= max[k] < RESIDUAL_TOLERANCE && second_order(ratio);
    }
    outcome.passed = passed;
    Ok(())
}
