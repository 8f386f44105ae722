//! One-parameter sweeps written as CSV, and the named presets.

use std::fmt;
use std::io::Write;

use anyhow::{bail, Result};
use clap::ValueEnum;
use orbitq_core::measures::{compute, single_orbit_eq, MeasureOptions, PerformanceMeasures};
use orbitq_core::{check_stability, SystemParams};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Param {
    Lambda1,
    Lambda2,
    Mu,
    Mu1,
    Mu2,
}

impl Param {
    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(["lambda1", "lambda2", "mu", "mu1", "mu2"][self.slot()])
    }
}

/// Extra columns besides the measure fields.
pub const DERIVED_OUTPUTS: [&str; 2] = ["single_orbit_eq", "empty_gap"];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub varying: Param,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
    /// All five rates in declaration order; the varying slot is ignored.
    pub fixed: [f64; 5],
    pub outputs: Vec<String>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.from < self.to) {
            bail!("sweep range must satisfy from < to, got [{}, {}]", self.from, self.to);
        }
        if self.steps < 2 {
            bail!("a sweep needs at least 2 steps, got {}", self.steps);
        }
        for name in &self.outputs {
            if !PerformanceMeasures::FIELD_NAMES.contains(&name.as_str()) && !DERIVED_OUTPUTS.contains(&name.as_str()) {
                bail!("unknown output {name}");
            }
        }
        for p in self.points() {
            p?;
        }
        Ok(())
    }

    pub fn points(&self) -> impl Iterator<Item = Result<SystemParams>> + '_ {
        (0..self.steps).map(move |i| {
            let t = i as f64 / (self.steps - 1) as f64;
            let mut rates = self.fixed;
            rates[self.varying.slot()] = if i + 1 == self.steps {
                self.to
            } else {
                self.from + (self.to - self.from) * t
            };
            Ok(SystemParams::new(rates[0], rates[1], rates[2], rates[3], rates[4])?)
        })
    }
}

fn outputs(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub const PRESETS: [&str; 4] = ["fig3", "fig4", "fig5", "fig6"];

/// Preset sweeps, all with `mu = 4`.
pub fn preset(name: &str) -> Result<Vec<SweepSpec>> {
    let lambda2_sweep = |lambda1: f64, to: f64, steps: usize, outs: &[&str]| SweepSpec {
        varying: Param::Lambda2,
        from: 0.2,
        to,
        steps,
        fixed: [lambda1, 0.0, 4.0, 2.0, 2.0],
        outputs: outputs(outs),
    };
    Ok(match name {
        // empty-system probability against H0(1, 0)
        "fig3" => [0.1, 1.0]
            .iter()
            .map(|&l1| lambda2_sweep(l1, 1.9, 35, &["p_empty", "p_q2_empty_idle", "empty_gap"]))
            .collect(),
        "fig4" => [0.01, 0.1, 1.0]
            .iter()
            .map(|&l1| lambda2_sweep(l1, 1.9, 35, &["eq2", "single_orbit_eq"]))
            .collect(),
        "fig5" => vec![SweepSpec {
            varying: Param::Mu2,
            from: 2.0,
            to: 2.15,
            steps: 16,
            fixed: [1.2, 1.2, 4.0, 2.0, 0.0],
            outputs: outputs(&["eq1", "eq2"]),
        }],
        "fig6" => vec![lambda2_sweep(1.0, 1.34, 39, &["eq1", "eq2"])],
        other => bail!("unknown preset {other}; choose one of {}", PRESETS.join(", ")),
    })
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub params: SystemParams,
    pub rho1: f64,
    pub rho2: f64,
    pub verdict: String,
    pub values: Vec<Option<f64>>,
    pub error_estimate: Option<f64>,
    pub note: String,
}

fn derived(name: &str, p: &SystemParams, m: Option<&PerformanceMeasures>) -> Option<f64> {
    match name {
        "single_orbit_eq" => single_orbit_eq(p.lambda2, p.mu, p.mu2).ok(),
        "empty_gap" => m.map(|m| m.p_q2_empty_idle - m.p_empty),
        field => m.and_then(|m| m.get(field)),
    }
}

pub fn evaluate(p: &SystemParams, outputs: &[String], opts: &MeasureOptions) -> SweepRow {
    let report = check_stability(p);
    let (measures, note) = if report.is_stable() {
        match compute(p, opts) {
            Ok(m) => {
                let note = m.warnings.join("; ");
                (Some(m), note)
            }
            Err(e) => (None, e.to_string()),
        }
    } else {
        (None, String::new())
    };
    SweepRow {
        params: *p,
        rho1: report.rho1,
        rho2: report.rho2,
        verdict: report.verdict.to_string(),
        values: outputs.iter().map(|o| derived(o, p, measures.as_ref())).collect(),
        error_estimate: measures.as_ref().map(|m| m.error_estimate),
        note,
    }
}

/// Evaluates all grid points in parallel and writes them in grid order.
///
/// Every spec must share the same output list.
pub fn run<W: Write>(specs: &[SweepSpec], opts: &MeasureOptions, out: W) -> Result<()> {
    let Some(first) = specs.first() else {
        bail!("empty sweep");
    };
    for s in specs {
        s.validate()?;
        if s.outputs != first.outputs {
            bail!("all sweeps in one run must request the same outputs");
        }
    }
    let points: Vec<SystemParams> = specs
        .iter()
        .flat_map(|s| s.points())
        .collect::<Result<_>>()?;
    let rows: Vec<SweepRow> = points
        .par_iter()
        .map(|p| evaluate(p, &first.outputs, opts))
        .collect();

    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = vec!["lambda1", "lambda2", "mu", "mu1", "mu2", "rho1", "rho2", "verdict"];
    header.extend(first.outputs.iter().map(String::as_str));
    header.extend(["error_estimate", "note"]);
    w.write_record(&header)?;
    let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let p = r.params;
        let mut rec: Vec<String> = [p.lambda1, p.lambda2, p.mu, p.mu1, p.mu2, r.rho1, r.rho2]
            .iter()
            .map(|x| x.to_string())
            .collect();
        rec.push(r.verdict);
        rec.extend(r.values.into_iter().map(num));
        rec.push(num(r.error_estimate));
        rec.push(r.note);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
