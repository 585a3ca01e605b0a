//! Sweep configuration, per-distance optimization, CSV output and the KLM report.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::diqkd::{branch_table, fiber_transmissivity, Amplifier, BranchTable, Framework, PointResult, REPETITION_RATE};
use crate::error::{Error, Result};
use crate::fock::{FockState, Occupation};
use crate::herald::{self, CircuitDescription, DetectionPattern, KrausComparison, KrausOperator};
use crate::klm::{self, KlmSummary};
use crate::optics;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub framework: Framework,
    pub amplifier: Amplifier,
    pub dist_min: f64,
    pub dist_max: f64,
    pub dist_step: f64,
    pub atten_db_per_km: f64,
    pub eta_d: f64,
    pub eta_c: f64,
    /// Overrides η_d·η_c when set.
    pub eta_cd: Option<f64>,
    pub p_min: f64,
    pub p_max: f64,
    pub p_prime_min: f64,
    pub p_prime_max: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub grid_p: usize,
    pub grid_p_prime: usize,
    pub grid_t: usize,
    pub refine_evals: usize,
    pub repetition_rate: f64,
    pub photon_cap: u32,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            framework: Framework::Restricted,
            amplifier: Amplifier::Modified,
            dist_min: 0.0,
            dist_max: 100.0,
            dist_step: 10.0,
            atten_db_per_km: 0.2,
            eta_d: 0.95,
            eta_c: 0.90,
            eta_cd: None,
            p_min: 1e-5,
            p_max: 1e-2,
            p_prime_min: 1e-5,
            p_prime_max: 1e-2,
            t_min: 0.01,
            t_max: 0.99,
            grid_p: 20,
            grid_p_prime: 20,
            grid_t: 20,
            refine_evals: 200,
            repetition_rate: REPETITION_RATE,
            photon_cap: 6,
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(format!("{key}: cannot parse '{v}'")))
}

impl SweepConfig {
    pub fn eta_cd(&self) -> f64 {
        self.eta_cd.unwrap_or(self.eta_d * self.eta_c)
    }

    /// Applies one `key = value` setting. Keys match the long CLI flags with
    /// dashes replaced by underscores.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "framework" => self.framework = v.parse().map_err(bad)?,
            "amplifier" => self.amplifier = v.parse().map_err(bad)?,
            "dist_min" => self.dist_min = num(key, v)?,
            "dist_max" => self.dist_max = num(key, v)?,
            "dist_step" => self.dist_step = num(key, v)?,
            "atten_db_per_km" => self.atten_db_per_km = num(key, v)?,
            "eta_d" => self.eta_d = num(key, v)?,
            "eta_c" => self.eta_c = num(key, v)?,
            "eta_cd" => self.eta_cd = Some(num(key, v)?),
            "p_min" => self.p_min = num(key, v)?,
            "p_max" => self.p_max = num(key, v)?,
            "p_prime_min" => self.p_prime_min = num(key, v)?,
            "p_prime_max" => self.p_prime_max = num(key, v)?,
            "t_min" => self.t_min = num(key, v)?,
            "t_max" => self.t_max = num(key, v)?,
            "grid_p" => self.grid_p = num(key, v)?,
            "grid_p_prime" => self.grid_p_prime = num(key, v)?,
            "grid_t" => self.grid_t = num(key, v)?,
            "refine_evals" => self.refine_evals = num(key, v)?,
            "repetition_rate" => self.repetition_rate = num(key, v)?,
            "photon_cap" => self.photon_cap = num(key, v)?,
            other => return Err(bad(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Reads `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v).map_err(|e| bad(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(bad(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("eta_d", self.eta_d)?;
        unit("eta_c", self.eta_c)?;
        unit("eta_cd", self.eta_cd())?;
        for (name, lo, hi) in [("p", self.p_min, self.p_max), ("p_prime", self.p_prime_min, self.p_prime_max)] {
            if !(lo > 0.0 && lo <= hi && hi <= crate::sources::MAX_PUMP) {
                return Err(bad(format!("{name} range [{lo}, {hi}] must lie in (0, 0.01]")));
            }
        }
        if !(self.t_min > 0.0 && self.t_min <= self.t_max && self.t_max < 1.0) {
            return Err(bad(format!("t range [{}, {}] must lie in (0, 1)", self.t_min, self.t_max)));
        }
        if self.grid_p == 0 || self.grid_p_prime == 0 || self.grid_t == 0 {
            return Err(bad("grid resolutions must be positive"));
        }
        if !(self.dist_step > 0.0 && self.dist_min >= 0.0 && self.dist_min <= self.dist_max) {
            return Err(bad("distance grid must have 0 ≤ dist_min ≤ dist_max and dist_step > 0"));
        }
        if self.atten_db_per_km < 0.0 {
            return Err(bad("atten_db_per_km must be non-negative"));
        }
        if self.repetition_rate <= 0.0 {
            return Err(bad("repetition_rate must be positive"));
        }
        Ok(())
    }

    /// Coarse search axes: p and p′ log-spaced, t linear.
    pub fn search_axes(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            grid(self.p_min, self.p_max, self.grid_p, true),
            grid(self.p_prime_min, self.p_prime_max, self.grid_p_prime, true),
            grid(self.t_min, self.t_max, self.grid_t, false),
        )
    }

    pub fn distances(&self) -> Vec<f64> {
        let n = ((self.dist_max - self.dist_min) / self.dist_step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.dist_min + i as f64 * self.dist_step).collect()
    }
}

fn grid(lo: f64, hi: f64, n: usize, log: bool) -> Vec<f64> {
    if n == 1 || lo == hi {
        return vec![if log { (lo * hi).sqrt() } else { 0.5 * (lo + hi) }];
    }
    (0..n)
        .map(|i| {
            let f = i as f64 / (n - 1) as f64;
            if log {
                (lo.ln() + f * (hi.ln() - lo.ln())).exp().clamp(lo, hi)
            } else {
                lo + f * (hi - lo)
            }
        })
        .collect()
}

/// Quantity the optimizer maximizes: secret bits per second up to the
/// constant repetition rate, or a negative penalty tracking the raw key rate.
pub fn objective(r: &PointResult) -> f64 {
    if r.report.k_approx_raw > 0.0 {
        r.report.k_approx_raw * r.tally.herald_prob
    } else {
        r.report.k_approx_raw - 1.0
    }
}

fn better(a: &PointResult, b: &PointResult) -> bool {
    objective(a) > objective(b)
}

struct Problem<'a> {
    cfg: &'a SweepConfig,
    eta_t: f64,
}

impl Problem<'_> {
    fn table(&self, t: f64) -> Result<BranchTable> {
        branch_table(self.cfg.amplifier, t, self.eta_t, self.cfg.eta_cd(), self.cfg.photon_cap)
    }

    fn point(&self, table: &BranchTable, p: f64, pp: f64) -> Result<PointResult> {
        table.point(p, pp, self.cfg.framework, self.cfg.repetition_rate)
    }

    /// Maps unconstrained coordinates (ln p, ln p′, logit t) into the box.
    fn decode(&self, x: &[f64; 3]) -> (f64, f64, f64) {
        let c = self.cfg;
        let p = x[0].exp().clamp(c.p_min, c.p_max);
        let pp = x[1].exp().clamp(c.p_prime_min, c.p_prime_max);
        let t = (1.0 / (1.0 + (-x[2]).exp())).clamp(c.t_min, c.t_max);
        (p, pp, t)
    }

    fn eval(&self, x: &[f64; 3]) -> Result<PointResult> {
        let (p, pp, t) = self.decode(x);
        self.point(&self.table(t)?, p, pp)
    }
}

fn logit(t: f64) -> f64 {
    (t / (1.0 - t)).ln()
}

/// Coarse grid over (p, p′, t) followed by Nelder-Mead refinement in
/// (ln p, ln p′, logit t). Without an amplifier only p is searched.
pub fn optimize_point(cfg: &SweepConfig, distance_km: f64) -> Result<PointResult> {
    cfg.validate()?;
    let prob = Problem {
        cfg,
        eta_t: fiber_transmissivity(distance_km, cfg.atten_db_per_km),
    };
    let (ps, pps, ts) = cfg.search_axes();
    if cfg.amplifier == Amplifier::None {
        let table = prob.table(0.5)?;
        let mut best: Option<PointResult> = None;
        for &p in &ps {
            let mut r = prob.point(&table, p, 0.0)?;
            r.t = 0.0;
            if best.as_ref().is_none_or(|b| better(&r, b)) {
                best = Some(r);
            }
        }
        return Ok(best.expect("non-empty grid"));
    }
    let per_t: Vec<PointResult> = ts
        .par_iter()
        .map(|&t| -> Result<PointResult> {
            let table = prob.table(t)?;
            let mut best: Option<PointResult> = None;
            for &p in &ps {
                for &pp in &pps {
                    let r = prob.point(&table, p, pp)?;
                    if best.as_ref().is_none_or(|b| better(&r, b)) {
                        best = Some(r);
                    }
                }
            }
            Ok(best.expect("non-empty grid"))
        })
        .collect::<Result<_>>()?;
    let mut best = per_t
        .into_iter()
        .reduce(|a, b| if better(&b, &a) { b } else { a })
        .expect("non-empty grid");
    if cfg.refine_evals > 0 {
        let refined = nelder_mead(&prob, &best, cfg.refine_evals)?;
        if better(&refined, &best) {
            best = refined;
        }
    }
    Ok(best)
}

fn nelder_mead(prob: &Problem, start: &PointResult, budget: usize) -> Result<PointResult> {
    let c = prob.cfg;
    let x0 = [start.p.ln(), start.p_prime.ln(), logit(start.t)];
    let steps = [
        (c.p_max / c.p_min).ln() / c.grid_p.max(2) as f64,
        (c.p_prime_max / c.p_prime_min).ln() / c.grid_p_prime.max(2) as f64,
        0.5,
    ];
    let mut simplex: Vec<([f64; 3], PointResult)> = vec![(x0, *start)];
    let mut evals = 0;
    for d in 0..3 {
        let mut x = x0;
        x[d] += steps[d];
        simplex.push((x, prob.eval(&x)?));
        evals += 1;
    }
    let f = |r: &PointResult| -objective(r);
    while evals < budget {
        simplex.sort_by(|a, b| f(&a.1).total_cmp(&f(&b.1)));
        let worst = simplex[3];
        let mut centroid = [0.0; 3];
        for (x, _) in &simplex[..3] {
            for d in 0..3 {
                centroid[d] += x[d] / 3.0;
            }
        }
        let along = |s: f64| {
            let mut x = [0.0; 3];
            for d in 0..3 {
                x[d] = centroid[d] + s * (worst.0[d] - centroid[d]);
            }
            x
        };
        let xr = along(-1.0);
        let rr = prob.eval(&xr)?;
        evals += 1;
        if f(&rr) < f(&simplex[0].1) {
            let xe = along(-2.0);
            let re = prob.eval(&xe)?;
            evals += 1;
            simplex[3] = if f(&re) < f(&rr) { (xe, re) } else { (xr, rr) };
        } else if f(&rr) < f(&simplex[2].1) {
            simplex[3] = (xr, rr);
        } else {
            let xc = if f(&rr) < f(&worst.1) { along(-0.5) } else { along(0.5) };
            let rc = prob.eval(&xc)?;
            evals += 1;
            if f(&rc) < f(&worst.1).min(f(&rr)) {
                simplex[3] = (xc, rc);
            } else {
                let best = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    let mut x = [0.0; 3];
                    for d in 0..3 {
                        x[d] = best[d] + 0.5 * (v.0[d] - best[d]);
                    }
                    *v = (x, prob.eval(&x)?);
                    evals += 1;
                }
            }
        }
    }
    simplex.sort_by(|a, b| f(&a.1).total_cmp(&f(&b.1)));
    Ok(simplex[0].1)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub distance_km: f64,
    pub point: PointResult,
}

pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    cfg.distances()
        .par_iter()
        .map(|&d| {
            Ok(SweepRow {
                distance_km: d,
                point: optimize_point(cfg, d)?,
            })
        })
        .collect()
}

pub const CSV_HEADER: [&str; 16] = [
    "distance_km",
    "eta_t",
    "p",
    "p_prime",
    "t",
    "herald_prob",
    "mu_cc",
    "mu_c",
    "mu_minus_c",
    "S",
    "S_cc",
    "Q_cc",
    "Q_minus_c",
    "K_approx",
    "K_lower",
    "rate_per_second",
];

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Io {
        path: "csv output".into(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        let (pt, k) = (&r.point, &r.point.report);
        // Report the statistics that enter the chosen key formula.
        let t = &match k.framework {
            Framework::DetectorIndependent => pt.tally.alice_conditioned(),
            _ => pt.tally,
        };
        let fields = [
            r.distance_km,
            pt.eta_t,
            pt.p,
            pt.p_prime,
            pt.t,
            t.herald_prob,
            t.mu_cc,
            t.mu_c,
            t.mu_minus_c,
            t.s,
            t.s_cc,
            t.q_cc,
            t.q_minus_c,
            k.k_approx,
            k.k_lower,
            k.rate_per_second,
        ];
        w.write_record(fields.iter().map(f64::to_string)).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "csv output".into(),
        reason: e.to_string(),
    })
}

pub fn write_csv_file(rows: &[SweepRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    write_csv(rows, std::io::BufWriter::new(file)).map_err(|e| match e {
        Error::Io { reason, .. } => Error::Io {
            path: path.display().to_string(),
            reason,
        },
        other => other,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlmRow {
    pub teleport: KlmSummary,
    pub qnd: KlmSummary,
}

pub const KLM_MAX_N: usize = 6;

/// Success probability and worst success-branch fidelity for n = 1..=n_max,
/// using a fixed qubit with unequal, complex amplitudes.
pub fn report_klm(n_max: usize) -> Result<Vec<KlmRow>> {
    if n_max == 0 || n_max > KLM_MAX_N {
        return Err(bad(format!("n_max must be in 1..={KLM_MAX_N}")));
    }
    let (c0, c1) = (C64::new(0.6, 0.0), C64::new(0.0, 0.8));
    let single = FockState::from_terms(1, [(Occupation::from([0u8]), c0), (Occupation::from([1u8]), c1)])?;
    let dual = FockState::from_terms(2, [(Occupation::from([1u8, 0]), c0), (Occupation::from([0u8, 1]), c1)])?;
    (1..=n_max)
        .map(|n| {
            Ok(KlmRow {
                teleport: klm::teleport_summary(&single, n)?,
                qnd: klm::qnd_summary(&dual, n)?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KrausCircuit {
    RalphLund,
    Qubit,
    Modified,
}

impl std::str::FromStr for KrausCircuit {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ralph-lund" => Ok(Self::RalphLund),
            "qubit" => Ok(Self::Qubit),
            "modified" => Ok(Self::Modified),
            _ => Err(format!("unknown circuit '{s}' (ralph-lund, qubit, modified)")),
        }
    }
}

pub struct KrausReport {
    pub circuit: CircuitDescription,
    pub target: KrausOperator,
    pub operators: Vec<(DetectionPattern, KrausOperator)>,
    pub comparison: KrausComparison,
}

pub fn kraus_report(which: KrausCircuit, t: f64) -> Result<KrausReport> {
    let (circuit, target) = match which {
        KrausCircuit::RalphLund => (herald::ralph_lund(t)?, herald::ralph_lund_target(t)),
        KrausCircuit::Qubit => (herald::qubit_amplifier(t)?, herald::qubit_amplifier_target(t)),
        KrausCircuit::Modified => (herald::modified_amplifier(t)?, herald::modified_amplifier_target(t)),
    };
    let operators = herald::extract_kraus(&circuit, &target.basis_in)?;
    let comparison = herald::compare_kraus(&operators, &target);
    Ok(KrausReport {
        circuit,
        target,
        operators,
        comparison,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

/// Quick internal consistency checks: the Fock-space engine against the
/// permanent formula on random interferometers, the three amplifier circuits
/// against their closed forms, and the KLM success law.
pub fn selftest(seed: u64) -> Result<Vec<Check>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut out = Vec::new();

    for trial in 0..5 {
        let m = rng.gen_range(2..=4);
        let u = optics::random_unitary(m, &mut rng);
        let mut counts = vec![0u8; m];
        for _ in 0..rng.gen_range(1..=3) {
            counts[rng.gen_range(0..m)] += 1;
        }
        let input = Occupation::from(counts);
        let evolved = optics::apply(&u, &FockState::basis(input.clone()))?;
        let mut err: f64 = 0.0;
        for (o, a) in evolved.terms() {
            err = err.max((optics::amplitude_oracle(&u, &input, o)? - a).norm());
        }
        let norm_err = (evolved.norm_sq() - 1.0).abs();
        out.push(check(
            format!("permanent oracle #{trial} ({m} modes, input {input})"),
            err < 1e-10 && norm_err < 1e-10,
            format!("max amplitude error {err:.2e}, norm error {norm_err:.2e}"),
        ));
    }

    for which in [KrausCircuit::RalphLund, KrausCircuit::Qubit, KrausCircuit::Modified] {
        for t in [0.1, 0.5, 0.9] {
            let r = kraus_report(which, t)?;
            let c = &r.comparison;
            out.push(check(
                format!("kraus {which:?} t={t}"),
                c.max_deviation < 1e-10 && (c.scale_norm_sq - 1.0).abs() < 1e-10,
                format!("max deviation {:.2e}, sum s^2 = {:.12}", c.max_deviation, c.scale_norm_sq),
            ));
        }
    }

    for row in report_klm(3)? {
        let n = row.teleport.n as f64;
        let want = n / (n + 1.0);
        for (label, s) in [("teleport", row.teleport), ("qnd", row.qnd)] {
            out.push(check(
                format!("klm {label} n={}", s.n),
                (s.success_probability - want).abs() < 1e-10 && s.min_fidelity > 1.0 - 1e-10,
                format!("success {:.12}, min fidelity {:.12}", s.success_probability, s.min_fidelity),
            ));
        }
    }
    Ok(out)
}
