//! Truncated continuous-time Markov chain, solved directly.
//!
//! States are `(m, n, k)`: orbit sizes and server occupancy. Transitions that
//! would push an orbit past its truncation level are dropped. Idle states are
//! entered only by a service completion from the busy state with the same
//! orbit contents, so they are eliminated exactly; the censored chain on busy
//! states is a nearest-neighbour walk on the grid and is solved by GTH state
//! reduction in banded storage. GTH involves no subtractions, so tiny tail
//! probabilities keep full relative accuracy.

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::PerformanceMeasures;
use crate::model::SystemParams;

/// Upper limit on stored band entries (8 bytes each).
pub const MAX_BAND_ENTRIES: usize = 96 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationSpec {
    pub m_max: usize,
    pub n_max: usize,
    pub tol: f64,
    pub max_level: usize,
}

impl Default for TruncationSpec {
    fn default() -> Self {
        Self {
            m_max: 120,
            n_max: 120,
            tol: 1e-8,
            max_level: 480,
        }
    }
}

impl TruncationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m_max < 8 || self.n_max < 8 {
            return Err(Error::InvalidTruncation(format!(
                "levels must be at least 8, got m_max = {}, n_max = {}",
                self.m_max, self.n_max
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidTruncation(format!("tol = {}", self.tol)));
        }
        if self.max_level < self.m_max.max(self.n_max) {
            return Err(Error::InvalidTruncation(format!(
                "max_level {} below the starting levels",
                self.max_level
            )));
        }
        Ok(())
    }
}

/// Transition structure of the chain truncated at `(m_max, n_max)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generator {
    pub params: SystemParams,
    pub m_max: usize,
    pub n_max: usize,
}

pub type State = (usize, usize, u8);

pub fn build_generator(params: &SystemParams, m_max: usize, n_max: usize) -> Generator {
    Generator {
        params: *params,
        m_max,
        n_max,
    }
}

impl Generator {
    pub fn state_count(&self) -> usize {
        2 * (self.m_max + 1) * (self.n_max + 1)
    }

    /// Outgoing transitions of a state, rim drops excluded.
    pub fn transitions(&self, (m, n, k): State) -> Vec<(State, f64)> {
        let p = &self.params;
        let mut out = Vec::with_capacity(3);
        if k == 0 {
            out.push(((m, n, 1), p.total_arrival()));
            if m > 0 {
                out.push(((m - 1, n, 1), p.mu1));
            }
            if n > 0 {
                out.push(((m, n - 1, 1), p.mu2));
            }
        } else {
            out.push(((m, n, 0), p.mu));
            if m < self.m_max {
                out.push(((m + 1, n, 1), p.lambda1));
            }
            if n < self.n_max {
                out.push(((m, n + 1, 1), p.lambda2));
            }
        }
        out
    }

    pub fn outflow(&self, s: State) -> f64 {
        self.transitions(s).iter().map(|t| t.1).sum()
    }

    /// Rate of transitions dropped at the rim from this state.
    pub fn lost_rate(&self, (m, n, k): State) -> f64 {
        if k == 0 {
            return 0.0;
        }
        let mut lost = 0.0;
        if m == self.m_max {
            lost += self.params.lambda1;
        }
        if n == self.n_max {
            lost += self.params.lambda2;
        }
        lost
    }

    fn idle_outflow(&self, m: usize, n: usize) -> f64 {
        let p = &self.params;
        let mut out = p.total_arrival();
        if m > 0 {
            out += p.mu1;
        }
        if n > 0 {
            out += p.mu2;
        }
        out
    }
}

/// Stationary distribution of a truncated chain.
#[derive(Debug, Clone, Serialize)]
pub struct StationarySolution {
    pub params: SystemParams,
    pub m_max: usize,
    pub n_max: usize,
    /// Largest balance violation `|inflow - outflow|` over all states.
    pub residual: f64,
    /// Probability of states with `m = m_max` or `n = n_max`.
    pub boundary_mass: f64,
    pub rim_mass_m: f64,
    pub rim_mass_n: f64,
    // [(m * (n_max + 1) + n) * 2 + k]
    #[serde(skip)]
    probabilities: Vec<f64>,
}

impl StationarySolution {
    fn index(&self, m: usize, n: usize, k: u8) -> usize {
        (m * (self.n_max + 1) + n) * 2 + k as usize
    }

    /// `P(Q1 = m, Q2 = n, L = k)`, zero outside the truncation.
    pub fn prob(&self, m: usize, n: usize, k: u8) -> f64 {
        if m > self.m_max || n > self.n_max || k > 1 {
            return 0.0;
        }
        self.probabilities[self.index(m, n, k)]
    }

    pub fn iter(&self) -> impl Iterator<Item = (State, f64)> + '_ {
        let width = self.n_max + 1;
        self.probabilities
            .iter()
            .enumerate()
            .map(move |(i, &pr)| (((i / 2) / width, (i / 2) % width, (i % 2) as u8), pr))
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// `P(Q1 = m, L = k)`.
    pub fn marginal_q1(&self, m: usize, k: u8) -> f64 {
        (0..=self.n_max).map(|n| self.prob(m, n, k)).sum()
    }

    /// `P(Q2 = n, L = k)`.
    pub fn marginal_q2(&self, n: usize, k: u8) -> f64 {
        (0..=self.m_max).map(|m| self.prob(m, n, k)).sum()
    }

    pub fn p_busy(&self) -> f64 {
        self.iter().filter(|((_, _, k), _)| *k == 1).map(|t| t.1).sum()
    }

    /// Writes `m,n,k,probability` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "m,n,k,probability")?;
        for ((m, n, k), pr) in self.iter() {
            writeln!(w, "{m},{n},{k},{pr:e}")?;
        }
        Ok(())
    }
}

// Banded square matrix: row i keeps columns i - w ..= i + w.
struct Band {
    w: usize,
    stride: usize,
    data: Vec<f64>,
}

impl Band {
    fn new(n: usize, w: usize) -> Result<Self> {
        let stride = 2 * w + 1;
        let entries = n
            .checked_mul(stride)
            .filter(|&e| e <= MAX_BAND_ENTRIES)
            .ok_or(Error::TooLarge(n.saturating_mul(stride)))?;
        Ok(Self {
            w,
            stride,
            data: vec![0.0; entries],
        })
    }

    fn pos(&self, i: usize, j: usize) -> usize {
        i * self.stride + (j + self.w - i)
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self.pos(i, j);
        self.data[p] += v;
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.pos(i, j)]
    }
}

fn band_entries(m_max: usize, n_max: usize) -> usize {
    let inner = m_max.min(n_max) + 1;
    (m_max + 1) * (n_max + 1) * (2 * inner + 1)
}

/// Solve one truncation level.
pub fn solve_truncated(gen: &Generator) -> Result<StationarySolution> {
    let p = &gen.params;
    let (mm, nn) = (gen.m_max, gen.n_max);
    // inner index along the shorter side keeps the band narrow
    let m_outer = mm >= nn;
    let inner = if m_outer { nn + 1 } else { mm + 1 };
    let count = (mm + 1) * (nn + 1);
    let busy = |m: usize, n: usize| if m_outer { m * inner + n } else { n * inner + m };

    let mut band = Band::new(count, inner)?;
    for m in 0..=mm {
        for n in 0..=nn {
            let s = busy(m, n);
            let idle = gen.idle_outflow(m, n);
            if m > 0 {
                band.add(s, busy(m - 1, n), p.mu * p.mu1 / idle);
            }
            if n > 0 {
                band.add(s, busy(m, n - 1), p.mu * p.mu2 / idle);
            }
            if m < mm {
                band.add(s, busy(m + 1, n), p.lambda1);
            }
            if n < nn {
                band.add(s, busy(m, n + 1), p.lambda2);
            }
        }
    }

    let w = band.w;
    let stride = band.stride;
    let mut pivots = vec![0.0; count];
    for k in (1..count).rev() {
        let lo = k.saturating_sub(w);
        let row_k_start = band.pos(k, lo);
        let len = k - lo;
        let s: f64 = band.data[row_k_start..row_k_start + len].iter().sum();
        if !(s > 0.0) {
            return Err(Error::Reducible(k));
        }
        pivots[k] = s;
        let (head, tail) = band.data.split_at_mut(k * stride);
        let row_k = &tail[row_k_start - k * stride..row_k_start - k * stride + len];
        for i in lo..k {
            let base = i * stride;
            let f = head[base + k + w - i];
            if f == 0.0 {
                continue;
            }
            let f = f / s;
            let start = base + lo + w - i;
            for (a, &b) in head[start..start + len].iter_mut().zip(row_k) {
                *a += f * b;
            }
        }
    }

    let mut busy_pi = vec![0.0; count];
    busy_pi[0] = 1.0;
    for k in 1..count {
        let lo = k.saturating_sub(w);
        let acc: f64 = (lo..k).map(|i| busy_pi[i] * band.get(i, k)).sum();
        busy_pi[k] = acc / pivots[k];
    }
    drop(band);

    let mut probabilities = vec![0.0; 2 * count];
    for m in 0..=mm {
        for n in 0..=nn {
            let b = busy_pi[busy(m, n)];
            let slot = (m * (nn + 1) + n) * 2;
            probabilities[slot] = p.mu * b / gen.idle_outflow(m, n);
            probabilities[slot + 1] = b;
        }
    }
    let total: f64 = probabilities.iter().sum();
    probabilities.iter_mut().for_each(|x| *x /= total);

    let mut sol = StationarySolution {
        params: *p,
        m_max: mm,
        n_max: nn,
        residual: 0.0,
        boundary_mass: 0.0,
        rim_mass_m: 0.0,
        rim_mass_n: 0.0,
        probabilities,
    };
    sol.rim_mass_m = (0..=nn).map(|n| sol.prob(mm, n, 0) + sol.prob(mm, n, 1)).sum();
    sol.rim_mass_n = (0..=mm).map(|m| sol.prob(m, nn, 0) + sol.prob(m, nn, 1)).sum();
    let corner = sol.prob(mm, nn, 0) + sol.prob(mm, nn, 1);
    sol.boundary_mass = sol.rim_mass_m + sol.rim_mass_n - corner;
    sol.residual = balance_residual(gen, &sol);
    Ok(sol)
}

/// Largest `|inflow - outflow|` over all states of the truncated chain.
pub fn balance_residual(gen: &Generator, sol: &StationarySolution) -> f64 {
    let mut net = vec![0.0; gen.state_count()];
    let idx = |(m, n, k): State| (m * (gen.n_max + 1) + n) * 2 + k as usize;
    for (s, pr) in sol.iter() {
        for (t, rate) in gen.transitions(s) {
            net[idx(t)] += pr * rate;
            net[idx(s)] -= pr * rate;
        }
    }
    net.iter().fold(0.0, |a, &b| a.max(b.abs()))
}

/// Solve with adaptive doubling of each truncation level while the
/// probability on its rim is at least `tol / 2`.
pub fn solve_stationary(params: &SystemParams, spec: &TruncationSpec) -> Result<StationarySolution> {
    params.validate()?;
    spec.validate()?;
    let (mut mm, mut nn) = (spec.m_max, spec.n_max);
    loop {
        let sol = solve_truncated(&build_generator(params, mm, nn))?;
        if sol.boundary_mass < spec.tol {
            return Ok(sol);
        }
        let mut grow_m = sol.rim_mass_m >= spec.tol / 2.0 && mm < spec.max_level;
        let mut grow_n = sol.rim_mass_n >= spec.tol / 2.0 && nn < spec.max_level;
        let next = |g: bool, level: usize| if g { (2 * level).min(spec.max_level) } else { level };
        // the solver cap ends the doubling like max_level does
        if grow_m && grow_n && band_entries(next(true, mm), next(true, nn)) > MAX_BAND_ENTRIES {
            if sol.rim_mass_m >= sol.rim_mass_n {
                grow_n = false;
            } else {
                grow_m = false;
            }
        }
        if band_entries(next(grow_m, mm), next(grow_n, nn)) > MAX_BAND_ENTRIES {
            grow_m = false;
            grow_n = false;
        }
        if !grow_m && !grow_n {
            return Err(Error::TruncationInsufficient {
                boundary_mass: sol.boundary_mass,
                tol: spec.tol,
                m_max: mm,
                n_max: nn,
                solution: Box::new(sol),
            });
        }
        mm = next(grow_m, mm);
        nn = next(grow_n, nn);
    }
}

/// Measures summed from a stationary solution.
pub fn oracle_measures(ss: &StationarySolution) -> PerformanceMeasures {
    let mut m = PerformanceMeasures::default();
    for ((qm, qn, k), pr) in ss.iter() {
        if k == 1 {
            m.p_busy += pr;
        } else {
            if qm == 0 {
                m.p_q1_empty_idle += pr;
                m.dh01 += qn as f64 * pr;
            }
            if qn == 0 {
                m.p_q2_empty_idle += pr;
                m.dh10 += qm as f64 * pr;
            }
        }
        m.eq1 += qm as f64 * pr;
        m.eq2 += qn as f64 * pr;
    }
    m.p_empty = ss.prob(0, 0, 0);
    m.el = m.p_busy;
    m.error_estimate = ss.boundary_mass;
    m
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldDeviation {
    pub field: &'static str,
    pub bvp: f64,
    pub oracle: f64,
    pub abs_deviation: f64,
    pub rel_deviation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub rel_tol: f64,
    pub fields: Vec<FieldDeviation>,
    pub pass: bool,
    pub worst_field: &'static str,
    pub worst_rel_deviation: f64,
    /// Truncation mass of the oracle run, when known.
    pub truncation_mass: Option<f64>,
    /// Set when the truncation mass is not negligible against `rel_tol`.
    pub elevated_uncertainty: bool,
}

/// Field by field relative deviations. Deviations of values that are zero on
/// the oracle side are measured in absolute terms.
pub fn compare(bvp: &PerformanceMeasures, oracle: &PerformanceMeasures, rel_tol: f64) -> CompareReport {
    let fields: Vec<FieldDeviation> = bvp
        .fields()
        .into_iter()
        .zip(oracle.fields())
        .map(|((field, a), (_, b))| {
            let abs_deviation = (a - b).abs();
            let rel_deviation = if b == 0.0 { abs_deviation } else { abs_deviation / b.abs() };
            FieldDeviation {
                field,
                bvp: a,
                oracle: b,
                abs_deviation,
                rel_deviation,
                pass: rel_deviation <= rel_tol,
            }
        })
        .collect();
    let worst = fields
        .iter()
        .max_by(|a, b| a.rel_deviation.total_cmp(&b.rel_deviation))
        .expect("nonempty field list");
    let truncation_mass = (oracle.error_estimate > 0.0).then_some(oracle.error_estimate);
    CompareReport {
        rel_tol,
        pass: fields.iter().all(|f| f.pass),
        worst_field: worst.field,
        worst_rel_deviation: worst.rel_deviation,
        elevated_uncertainty: truncation_mass.is_some_and(|t| t > 1e-2 * rel_tol),
        truncation_mass,
        fields,
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    fn p(l1: f64, l2: f64, mu: f64, m1: f64, m2: f64) -> SystemParams {
        SystemParams::new(l1, l2, mu, m1, m2).unwrap()
    }

    #[test]
    fn band_cap_admits_the_default_ceiling_on_one_side() {
        assert!(band_entries(480, 240) <= MAX_BAND_ENTRIES);
        assert!(band_entries(480, 480) > MAX_BAND_ENTRIES);
        assert_eq!(band_entries(2, 1), 3 * 2 * 5);
    }

    #[test]
    fn outflow_rates() {
        let params = p(0.3, 0.5, 4.0, 2.0, 1.5);
        let g = build_generator(&params, 10, 10);
        assert_relative_eq!(g.outflow((0, 0, 0)), 0.8, max_relative = 1e-15);
        assert_relative_eq!(g.outflow((3, 0, 0)), 0.8 + 2.0, max_relative = 1e-15);
        assert_relative_eq!(g.outflow((0, 4, 0)), 0.8 + 1.5, max_relative = 1e-15);
        assert_relative_eq!(g.outflow((3, 4, 0)), 0.8 + 2.0 + 1.5, max_relative = 1e-15);
        assert_relative_eq!(g.outflow((3, 4, 1)), 4.0 + 0.8, max_relative = 1e-15);
        assert_relative_eq!(g.outflow((10, 4, 1)), 4.5, max_relative = 1e-15);
        assert_eq!(g.lost_rate((10, 10, 1)), 0.8);
        assert_eq!(g.lost_rate((10, 10, 0)), 0.0);
    }

    #[test]
    fn spec_validation() {
        assert!(TruncationSpec::default().validate().is_ok());
        let bad = TruncationSpec {
            m_max: 4,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TruncationSpec {
            tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn small_chain_balances() {
        let params = p(0.4, 0.7, 3.0, 1.3, 2.2);
        let g = build_generator(&params, 12, 9);
        let sol = solve_truncated(&g).unwrap();
        assert_relative_eq!(sol.total(), 1.0, max_relative = 1e-13);
        assert!(sol.residual < 1e-14, "{}", sol.residual);
        assert!(sol.iter().all(|(_, pr)| pr > 0.0));
    }

    #[test]
    fn orientation_of_band_does_not_matter() {
        let params = p(0.4, 0.7, 3.0, 1.3, 2.2);
        let a = solve_truncated(&build_generator(&params, 14, 9)).unwrap();
        let b = solve_truncated(&build_generator(&params.swapped(), 9, 14)).unwrap();
        for ((m, n, k), pr) in a.iter() {
            assert_relative_eq!(pr, b.prob(n, m, k), max_relative = 1e-11);
        }
    }

    #[test]
    fn cut_balance() {
        let params = p(0.8, 0.6, 4.0, 2.0, 1.7);
        let sol = solve_truncated(&build_generator(&params, 30, 30)).unwrap();
        for m in 0..30 {
            let left = params.lambda1 * sol.marginal_q1(m, 1);
            let right = params.mu1 * sol.marginal_q1(m + 1, 0);
            assert!((left - right).abs() < 1e-15 + 1e-12 * left, "m = {m}");
        }
    }

    #[test]
    fn symmetric_set_converges() {
        let sol = solve_stationary(&p(1.0, 1.0, 4.0, 2.0, 2.0), &TruncationSpec::default()).unwrap();
        assert!(sol.boundary_mass < 1e-8);
        assert!((sol.p_busy() - 0.5).abs() < 1e-6);
        let m = oracle_measures(&sol);
        assert_relative_eq!(m.eq1, m.eq2, max_relative = 1e-9);
        assert_relative_eq!(m.p_q1_empty_idle, 0.25, max_relative = 1e-6);
    }

    #[test]
    fn unstable_set_does_not_converge() {
        let spec = TruncationSpec {
            m_max: 30,
            n_max: 30,
            tol: 1e-8,
            max_level: 120,
        };
        match solve_stationary(&p(1.0, 1.4, 4.0, 2.0, 2.0), &spec) {
            Err(Error::TruncationInsufficient { boundary_mass, n_max, .. }) => {
                assert!(boundary_mass > 1e-3);
                assert_eq!(n_max, 120);
            }
            other => panic!("expected truncation failure, got {other:?}"),
        }
    }

    #[test]
    fn rim_mass_shrinks_under_refinement() {
        let params = p(1.0, 1.0, 4.0, 2.0, 2.0);
        let mut last = f64::INFINITY;
        for level in [15, 30, 60] {
            let sol = solve_truncated(&build_generator(&params, level, level)).unwrap();
            assert!(sol.boundary_mass <= last);
            last = sol.boundary_mass;
        }
    }

    #[test]
    fn csv_dump() {
        let sol = solve_truncated(&build_generator(&p(0.2, 0.3, 4.0, 2.0, 2.0), 8, 8)).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("m,n,k,probability"));
        assert_eq!(lines.count(), 2 * 81);
    }

    #[test]
    fn compare_identity() {
        let sol = solve_truncated(&build_generator(&p(0.2, 0.3, 4.0, 2.0, 2.0), 20, 20)).unwrap();
        let m = oracle_measures(&sol);
        let report = compare(&m, &m, 1e-12);
        assert!(report.pass);
        assert_eq!(report.worst_rel_deviation, 0.0);
    }

    #[test]
    fn too_large_is_refused() {
        let g = build_generator(&p(0.2, 0.3, 4.0, 2.0, 2.0), 20_000, 20_000);
        assert!(matches!(solve_truncated(&g), Err(Error::TooLarge(_))));
    }
}
