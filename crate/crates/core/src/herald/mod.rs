//! Heralding circuits: the single-mode noiseless amplifier, the two-mode qubit
//! amplifier built from two of them, and the variant with extra splitters
//! that suppresses the vacuum and bunches the two-photon leak.

mod circuit;
mod kraus;

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;

pub use circuit::{CircuitDescription, DetectionPattern, DetectionSpec, Element};
pub use kraus::{
    compare_kraus, extract_kraus, fit_output_phases, KrausComparison, KrausOperator, PatternFit, PhaseCorrection,
};

use crate::error::{Error, Result};
use crate::fock::{binomial, Branch, BranchEnsemble, FockState, Occupation};
use crate::optics;

#[derive(Clone, Debug, PartialEq)]
pub struct HeraldOutcome {
    pub conditional: BranchEnsemble,
    pub herald_probability: f64,
}

/// Splits a state by its photon counts on `modes`; each part has those modes removed.
pub(crate) fn split_by_modes(s: &FockState, modes: &[usize]) -> BTreeMap<Vec<u8>, FockState> {
    let keep: Vec<usize> = (0..s.mode_count()).filter(|m| !modes.contains(m)).collect();
    let mut parts: BTreeMap<Vec<u8>, Vec<(Occupation, C64)>> = BTreeMap::new();
    for (occ, a) in s.terms() {
        let key: Vec<u8> = modes.iter().map(|&m| occ.get(m)).collect();
        let rest: Vec<u8> = keep.iter().map(|&m| occ.get(m)).collect();
        parts.entry(key).or_default().push((Occupation::from(rest), *a));
    }
    parts
        .into_iter()
        .map(|(k, terms)| (k, s.rebuilt(keep.len(), terms)))
        .collect()
}

fn check_pattern(e: &BranchEnsemble, p: &DetectionPattern) -> Result<()> {
    if let Some(n) = e.mode_count() {
        for &m in &p.detector_modes {
            if m >= n {
                return Err(Error::ModeOutOfRange { index: m, mode_count: n });
            }
        }
    }
    Ok(())
}

/// Ideal photon-number-resolving conditioning on one pattern.
pub fn condition(e: &BranchEnsemble, p: &DetectionPattern) -> Result<HeraldOutcome> {
    condition_lossy(e, p, 1.0)
}

/// Conditioning through detectors of efficiency `eta`: a true count n yields
/// the recorded count k with probability C(n,k)·η^k·(1−η)^(n−k).
pub fn condition_lossy(e: &BranchEnsemble, p: &DetectionPattern, eta: f64) -> Result<HeraldOutcome> {
    check_pattern(e, p)?;
    let raw = condition_raw(e, p, eta);
    Ok(normalize_outcome(raw, e.truncation_weight()))
}

/// Unnormalized conditional branches: weights carry the herald probability.
fn condition_raw(e: &BranchEnsemble, p: &DetectionPattern, eta: f64) -> Vec<Branch> {
    let mut out = Vec::new();
    for b in e.branches() {
        if b.weight == 0.0 {
            continue;
        }
        for (n, part) in split_by_modes(&b.state, &p.detector_modes) {
            if n.iter().zip(&p.counts).any(|(&ni, &ki)| ni < ki) {
                continue;
            }
            let f: f64 = n
                .iter()
                .zip(&p.counts)
                .map(|(&ni, &ki)| {
                    let (ni, ki) = (u32::from(ni), u32::from(ki));
                    binomial(ni, ki) * eta.powi(ki as i32) * (1.0 - eta).powi((ni - ki) as i32)
                })
                .product();
            let w = b.weight * f * part.norm_sq();
            if w > 0.0 {
                if let Some(state) = part.normalized() {
                    out.push(Branch { weight: w, state });
                }
            }
        }
    }
    out
}

fn normalize_outcome(raw: Vec<Branch>, truncation: f64) -> HeraldOutcome {
    let p: f64 = raw.iter().map(|b| b.weight).sum();
    let branches = if p > 0.0 {
        raw.into_iter()
            .map(|b| Branch {
                weight: b.weight / p,
                state: b.state,
            })
            .collect()
    } else {
        Vec::new()
    };
    let tw = if truncation > 0.0 { truncation / (p + truncation) } else { 0.0 };
    HeraldOutcome {
        conditional: BranchEnsemble::from_parts(branches, tw),
        herald_probability: p,
    }
}

/// Runs the circuit, conditions on every accepted pattern with detector
/// efficiency `eta_detect`, applies the per-pattern output phase correction
/// and merges the successful branches.
pub fn herald(
    c: &CircuitDescription,
    input: &BranchEnsemble,
    eta_detect: f64,
    corrections: Option<&[PhaseCorrection]>,
) -> Result<HeraldOutcome> {
    let evolved = c.evolve_ensemble(input)?;
    let outputs = c.output_positions();
    let mut all = Vec::new();
    for (i, p) in c.detection.patterns().iter().enumerate() {
        check_pattern(&evolved, p)?;
        let mut raw = condition_raw(&evolved, p, eta_detect);
        if let Some(corr) = corrections.and_then(|cs| cs.get(i)) {
            for b in &mut raw {
                b.state = b.state.phase_shift(&outputs, &corr.per_mode)?;
            }
        }
        all.extend(raw);
    }
    Ok(normalize_outcome(all, input.truncation_weight()))
}

/// Probability of every detector record (accepted or not) under ideal detection.
pub fn outcome_distribution(c: &CircuitDescription, input: &BranchEnsemble) -> Result<BTreeMap<Vec<u8>, f64>> {
    let evolved = c.evolve_ensemble(input)?;
    let mut dist = BTreeMap::new();
    for b in evolved.branches() {
        for (n, part) in split_by_modes(&b.state, &c.detection.detector_modes) {
            *dist.entry(n).or_insert(0.0) += b.weight * part.norm_sq();
        }
    }
    Ok(dist)
}

fn check_t(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "t",
            value: t,
            min: 0.0,
            max: 1.0,
        })
    }
}

fn transform(u: optics::ModeTransform, modes: &[usize]) -> Element {
    Element::Transform(u.on(modes).expect("fixed circuit layout"))
}

/// Single-mode amplifier. Modes: 0 input, 1 ancilla photon (and output), 2 vacuum.
pub fn ralph_lund(t: f64) -> Result<CircuitDescription> {
    check_t(t)?;
    Ok(CircuitDescription {
        name: "ralph_lund".into(),
        mode_count: 3,
        input_modes: vec![0],
        ancilla: vec![(1, 1)],
        elements: vec![
            transform(optics::beamsplitter(t)?, &[1, 2]),
            transform(optics::beamsplitter(0.5)?, &[0, 2]),
        ],
        detection: DetectionSpec {
            detector_modes: vec![0, 2],
            accepted: vec![vec![1, 0], vec![0, 1]],
            output_modes: vec![1],
        },
    })
}

// Modes: 0 b_h, 1 b_v, 2 aux_h, 3 aux_v, 4 up_h, 5 up_v.
fn two_mode_amplifier(t: f64, modified: bool) -> Result<CircuitDescription> {
    check_t(t)?;
    let mut elements = vec![
        transform(optics::beamsplitter(t)?, &[2, 4]),
        transform(optics::beamsplitter(t)?, &[3, 5]),
    ];
    if modified {
        elements.push(transform(optics::symmetric_splitter(), &[4, 5]));
    }
    elements.push(transform(optics::beamsplitter(0.5)?, &[0, 4]));
    elements.push(transform(optics::beamsplitter(0.5)?, &[1, 5]));
    if modified {
        elements.push(transform(optics::symmetric_splitter_inverse(), &[2, 3]));
    }
    Ok(CircuitDescription {
        name: if modified { "modified_amplifier" } else { "qubit_amplifier" }.into(),
        mode_count: 6,
        input_modes: vec![0, 1],
        ancilla: vec![(2, 1), (3, 1)],
        elements,
        detection: DetectionSpec {
            detector_modes: vec![0, 4, 1, 5],
            accepted: vec![vec![1, 0, 1, 0], vec![1, 0, 0, 1], vec![0, 1, 1, 0], vec![0, 1, 0, 1]],
            output_modes: vec![2, 3],
        },
    })
}

/// Two amplifiers in parallel on the polarization modes; success needs one
/// click in each detector pair.
pub fn qubit_amplifier(t: f64) -> Result<CircuitDescription> {
    two_mode_amplifier(t, false)
}

/// The qubit amplifier with a symmetric 50:50 splitter between the two
/// upward heralding modes and its inverse between the two output modes.
pub fn modified_amplifier(t: f64) -> Result<CircuitDescription> {
    two_mode_amplifier(t, true)
}

fn occ(v: &[u8]) -> Occupation {
    Occupation::from(v.to_vec())
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Closed-form single-mode amplifier map on {|0⟩, |1⟩}.
pub fn ralph_lund_target(t: f64) -> KrausOperator {
    let basis = vec![occ(&[0]), occ(&[1])];
    KrausOperator::from_entries(
        basis.clone(),
        basis,
        &[(0, 0, real((1.0 - t).sqrt())), (1, 1, real(t.sqrt()))],
    )
}

pub fn dual_mode_basis() -> Vec<Occupation> {
    vec![occ(&[0, 0]), occ(&[1, 0]), occ(&[0, 1]), occ(&[1, 1])]
}

/// Closed-form qubit amplifier map on {|00⟩, |10⟩, |01⟩, |11⟩}.
pub fn qubit_amplifier_target(t: f64) -> KrausOperator {
    let s = (t * (1.0 - t)).sqrt();
    KrausOperator::from_entries(
        dual_mode_basis(),
        dual_mode_basis(),
        &[(0, 0, real(1.0 - t)), (1, 1, real(s)), (2, 2, real(s)), (3, 3, real(t))],
    )
}

/// Closed-form modified amplifier map: no vacuum term, and |11⟩ is sent to
/// the bunched pair (|20⟩ + |02⟩)/√2.
pub fn modified_amplifier_target(t: f64) -> KrausOperator {
    let s = (t * (1.0 - t)).sqrt();
    let b = t / std::f64::consts::SQRT_2;
    let out = vec![occ(&[0, 0]), occ(&[1, 0]), occ(&[0, 1]), occ(&[2, 0]), occ(&[0, 2])];
    KrausOperator::from_entries(
        dual_mode_basis(),
        out,
        &[(1, 1, real(s)), (2, 2, real(s)), (3, 3, real(b)), (4, 3, real(b))],
    )
}

/// Per-pattern output phase corrections that bring the circuit onto its
/// closed-form target. Fails if some pattern is not phase-equivalent.
pub fn feed_forward(c: &CircuitDescription, target: &KrausOperator) -> Result<Vec<PhaseCorrection>> {
    let ks = extract_kraus(c, &target.basis_in)?;
    Ok(ks.iter().map(|(_, k)| fit_output_phases(k, target)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitFraction {
    pub t_opt: f64,
    pub fraction: f64,
    /// The optimum sits at t = 0 or t = 1, where the success probability vanishes.
    pub limit: bool,
}

/// Best single-photon fraction reachable by the qubit amplifier over t, for
/// input amplitudes (or √ of diagonal density-matrix entries).
pub fn qubit_fraction_bound(c00: f64, c01: f64, c10: f64, c11: f64) -> Result<QubitFraction> {
    for (name, v) in [("c00", c00), ("c01", c01), ("c10", c10), ("c11", c11)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::OutOfRange {
                name,
                value: v,
                min: 0.0,
                max: f64::INFINITY,
            });
        }
    }
    if c00 == 0.0 && c01 == 0.0 && c10 == 0.0 && c11 == 0.0 {
        return Err(Error::DegenerateSource("all input coefficients are zero"));
    }
    let single = c10 * c10 + c01 * c01;
    let denom = 2.0 * c11 * c00 + single;
    let fraction = if denom > 0.0 { single / denom } else { 0.0 };
    let (t_opt, limit) = if c11 == 0.0 {
        (1.0, true)
    } else {
        let t = c00 / (c00 + c11);
        (t, t == 0.0 || t == 1.0)
    };
    Ok(QubitFraction { t_opt, fraction, limit })
}

/// Single-photon fraction of the qubit amplifier output at a given t.
pub fn heralded_qubit_fraction(c00: f64, c01: f64, c10: f64, c11: f64, t: f64) -> f64 {
    let single = t * (1.0 - t) * (c10 * c10 + c01 * c01);
    let total = (1.0 - t).powi(2) * c00 * c00 + single + t * t * c11 * c11;
    if total > 0.0 {
        single / total
    } else {
        0.0
    }
}
