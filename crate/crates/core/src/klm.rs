//! Teleportation through n-photon entangled ancillas measured in the
//! Fourier basis, and the two-group variant that heralds a dual-rail qubit
//! while counting the photons that entered.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::{FockState, Occupation};
use crate::optics;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AncillaKind {
    /// 2n modes: n teleporting modes followed by n output modes.
    Single,
    /// 4n modes: two copies of the single layout with complementary terms.
    Dual,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KlmAncilla {
    pub n: usize,
    pub kind: AncillaKind,
    pub state: FockState,
}

/// Teleporting and output occupations of the i-th ancilla term:
/// |1⟩^i |0⟩^(n−i) on the teleporting side, |0⟩^i |1⟩^(n−i) on the output side.
fn s_term(n: usize, i: usize) -> (Vec<u8>, Vec<u8>) {
    let tel = (0..n).map(|m| u8::from(m < i)).collect();
    let out = (0..n).map(|m| u8::from(m >= i)).collect();
    (tel, out)
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::OutOfRange {
            name: "n",
            value: 0.0,
            min: 1.0,
            max: f64::INFINITY,
        });
    }
    Ok(())
}

pub fn build_ancilla(n: usize, kind: AncillaKind) -> Result<KlmAncilla> {
    check_n(n)?;
    let amp = C64::new(1.0 / ((n + 1) as f64).sqrt(), 0.0);
    let terms = (0..=n).map(|i| {
        let (tel, out) = s_term(n, i);
        let mut v = tel;
        v.extend(out);
        if kind == AncillaKind::Dual {
            let (tel2, out2) = s_term(n, n - i);
            v.extend(tel2);
            v.extend(out2);
        }
        (Occupation::from(v), amp)
    });
    let modes = match kind {
        AncillaKind::Single => 2 * n,
        AncillaKind::Dual => 4 * n,
    };
    Ok(KlmAncilla {
        n,
        kind,
        state: FockState::from_terms(modes, terms)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TeleportResult {
    /// Detector record per Fourier group (input mode first, then teleporting modes).
    pub counts: Vec<Vec<u8>>,
    /// Total photons seen in each group.
    pub photon_counts: Vec<u32>,
    pub probability: f64,
    pub success: bool,
    /// Where the qubit sits within the output block (0-based); empty on failure.
    pub output_modes: Vec<usize>,
    /// Phase applied to the first identified output mode.
    pub applied_phase: C64,
    /// Normalized conditional state of all output modes, phase-corrected on success.
    pub output_state: FockState,
}

impl TeleportResult {
    /// The identified output mode(s), with the spectator modes projected onto
    /// their occupations in the dominant term. Also returns the retained
    /// weight, which is 1 when the spectators are in a product pattern.
    pub fn qubit(&self) -> Option<(FockState, f64)> {
        if !self.success {
            return None;
        }
        let (top, _) = self
            .output_state
            .terms()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))?;
        let spectators: Vec<usize> = (0..self.output_state.mode_count())
            .filter(|m| !self.output_modes.contains(m))
            .collect();
        let vals: Vec<u8> = spectators.iter().map(|&m| top.get(m)).collect();
        let proj = self.output_state.project(&spectators, &vals).ok()?;
        // project keeps the identified modes in increasing order; restore the listed order.
        let mut sorted = self.output_modes.clone();
        sorted.sort_unstable();
        let order: Vec<usize> = self
            .output_modes
            .iter()
            .map(|m| sorted.iter().position(|s| s == m).unwrap())
            .collect();
        let proj = proj.permute_modes(&order).ok()?;
        let w = proj.norm_sq();
        Some((proj.normalized()?, w))
    }

    /// |⟨input|qubit⟩|² for a normalized input; 0 on failure.
    pub fn fidelity(&self, input: &FockState) -> f64 {
        self.qubit().map_or(0.0, |(q, _)| input.inner(&q).norm_sqr())
    }
}

struct Contribution {
    term: usize,
    coeff: C64,
    groups: Vec<Occupation>,
    out: Occupation,
}

type Table = BTreeMap<Occupation, C64>;

fn fourier_table(cache: &mut BTreeMap<Occupation, Table>, g: &Occupation) -> Result<()> {
    if !cache.contains_key(g) {
        let u = optics::fourier(g.len())?;
        let s = optics::apply(&u, &FockState::basis(g.clone()))?;
        cache.insert(g.clone(), s.terms().map(|(o, a)| (o.clone(), *a)).collect());
    }
    Ok(())
}

/// Per-pattern conditional states, one per input basis term, for every
/// combination of group detector records. Patterns are visited grouped by
/// photon totals, in deterministic order.
fn stream<F>(contribs: &[Contribution], term_count: usize, out_modes: usize, mut f: F) -> Result<()>
where
    F: FnMut(&[Occupation], &[u32], Vec<FockState>),
{
    let mut cache = BTreeMap::new();
    let mut by_totals: BTreeMap<Vec<u32>, Vec<&Contribution>> = BTreeMap::new();
    for c in contribs {
        for g in &c.groups {
            fourier_table(&mut cache, g)?;
        }
        let totals = c.groups.iter().map(Occupation::total).collect();
        by_totals.entry(totals).or_default().push(c);
    }
    for (totals, cs) in by_totals {
        let groups = totals.len();
        let options: Vec<Vec<Occupation>> = (0..groups)
            .map(|gi| {
                let mut set = BTreeSet::new();
                for c in &cs {
                    set.extend(cache[&c.groups[gi]].keys().cloned());
                }
                set.into_iter().collect()
            })
            .collect();
        let mut idx = vec![0usize; groups];
        'outer: loop {
            let pattern: Vec<Occupation> = idx.iter().zip(&options).map(|(&i, o)| o[i].clone()).collect();
            let mut terms: Vec<Vec<(Occupation, C64)>> = vec![Vec::new(); term_count];
            for c in &cs {
                let mut a = c.coeff;
                for (g, p) in c.groups.iter().zip(&pattern) {
                    a *= cache[g].get(p).copied().unwrap_or_default();
                }
                if a.norm() > 0.0 {
                    terms[c.term].push((c.out.clone(), a));
                }
            }
            let states = terms
                .into_iter()
                .map(|t| FockState::from_terms(out_modes, t))
                .collect::<Result<Vec<_>>>()?;
            f(&pattern, &totals, states);
            for d in (0..groups).rev() {
                idx[d] += 1;
                if idx[d] < options[d].len() {
                    continue 'outer;
                }
                idx[d] = 0;
            }
            break;
        }
    }
    Ok(())
}

fn dominant(s: &FockState) -> Option<(Occupation, C64)> {
    s.terms()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(o, a)| (o.clone(), *a))
}

/// Combines per-term states with the input coefficients and, on success,
/// removes the reference phases so the qubit comes out exactly as it went in.
/// `marks[j]` is the output mode that carries the photon for reference term j.
fn finish(
    counts: &[Occupation],
    totals: &[u32],
    states: &[FockState],
    coeffs: &[C64],
    success: bool,
    marks: &[usize],
) -> Option<TeleportResult> {
    let out_modes = states[0].mode_count();
    let mut combined = FockState::zero(out_modes);
    for (s, c) in states.iter().zip(coeffs) {
        if c.norm() > 0.0 {
            combined.add_scaled(s, *c).ok()?;
        }
    }
    let probability = combined.norm_sq();
    if probability <= 0.0 {
        return None;
    }
    let mut state = combined;
    let mut applied_phase = C64::new(1.0, 0.0);
    let mut output_modes = Vec::new();
    if success {
        // References are the first two terms.
        let phases: Vec<f64> = states[..2]
            .iter()
            .map(|s| dominant(s).map_or(0.0, |(_, a)| a.arg()))
            .collect();
        match marks {
            // Teleport: term 0 carries no photon in the marked mode.
            [m] => {
                let rel = phases[1] - phases[0];
                state = state.phase_shift(&[*m], &[-rel]).ok()?.scaled(C64::from_polar(1.0, -phases[0]));
                applied_phase = C64::from_polar(1.0, -rel);
                output_modes.push(*m);
            }
            [m0, m1] => {
                state = state.phase_shift(&[*m0, *m1], &[-phases[0], -phases[1]]).ok()?;
                applied_phase = C64::from_polar(1.0, -phases[0]);
                output_modes.extend([*m0, *m1]);
            }
            _ => {}
        }
    }
    Some(TeleportResult {
        counts: counts.iter().map(|o| o.counts().to_vec()).collect(),
        photon_counts: totals.to_vec(),
        probability,
        success,
        output_modes,
        applied_phase,
        output_state: state.normalized()?,
    })
}

fn teleport_contribs(n: usize, input_terms: &[(u8, C64)]) -> Vec<Contribution> {
    let amp = 1.0 / ((n + 1) as f64).sqrt();
    let mut cs = Vec::new();
    for (term, &(a, _)) in input_terms.iter().enumerate() {
        for i in 0..=n {
            let (tel, out) = s_term(n, i);
            let mut g = vec![a];
            g.extend(tel);
            cs.push(Contribution {
                term,
                coeff: C64::new(amp, 0.0),
                groups: vec![Occupation::from(g)],
                out: Occupation::from(out),
            });
        }
    }
    cs
}

/// Streams every detector record of the teleporter. Success means the count
/// k is neither 0 nor n+1; the qubit then sits in output mode k (1-based).
pub fn teleport_for_each<F>(input: &FockState, n: usize, mut f: F) -> Result<()>
where
    F: FnMut(TeleportResult),
{
    check_n(n)?;
    if input.mode_count() != 1 || input.max_photons() > 1 {
        return Err(Error::UnsupportedInput);
    }
    let zero = Occupation::from(vec![0u8]);
    let one = Occupation::from(vec![1u8]);
    let coeffs = [input.amplitude(&zero), input.amplitude(&one)];
    let contribs = teleport_contribs(n, &[(0, coeffs[0]), (1, coeffs[1])]);
    stream(&contribs, 2, n, |counts, totals, states| {
        let k = totals[0] as usize;
        let success = k != 0 && k != n + 1;
        let marks = if success { vec![k - 1] } else { Vec::new() };
        if let Some(r) = finish(counts, totals, &states, &coeffs, success, &marks) {
            f(r);
        }
    })
}

pub fn teleport(input: &FockState, n: usize) -> Result<Vec<TeleportResult>> {
    let mut out = Vec::new();
    teleport_for_each(input, n, |r| out.push(r))?;
    Ok(out)
}

/// Two Fourier groups, each joining one input mode with the teleporting
/// modes of one half of the dual ancilla. Output block: O1 (n modes) then O2.
pub fn qnd_herald_for_each<F>(input: &FockState, n: usize, mut f: F) -> Result<()>
where
    F: FnMut(TeleportResult),
{
    check_n(n)?;
    if input.mode_count() != 2 {
        return Err(Error::ModeCountMismatch {
            expected: 2,
            found: input.mode_count(),
        });
    }
    let mut basis = vec![Occupation::from(vec![1u8, 0]), Occupation::from(vec![0u8, 1])];
    for (o, _) in input.terms() {
        if !basis.contains(o) {
            basis.push(o.clone());
        }
    }
    let coeffs: Vec<C64> = basis.iter().map(|o| input.amplitude(o)).collect();
    let amp = 1.0 / ((n + 1) as f64).sqrt();
    let mut contribs = Vec::new();
    for (term, b) in basis.iter().enumerate() {
        for i in 0..=n {
            let (tel1, out1) = s_term(n, i);
            let (tel2, out2) = s_term(n, n - i);
            let mut g1 = vec![b.get(0)];
            g1.extend(tel1);
            let mut g2 = vec![b.get(1)];
            g2.extend(tel2);
            let mut out = out1;
            out.extend(out2);
            contribs.push(Contribution {
                term,
                coeff: C64::new(amp, 0.0),
                groups: vec![Occupation::from(g1), Occupation::from(g2)],
                out: Occupation::from(out),
            });
        }
    }
    stream(&contribs, basis.len(), 2 * n, |counts, totals, states| {
        let (i1, i2) = (totals[0] as usize, totals[1] as usize);
        let success = i1 + i2 == n + 1 && i1 != 0 && i2 != 0;
        let marks = if success { vec![i1 - 1, 2 * n - i1] } else { Vec::new() };
        if let Some(r) = finish(counts, totals, &states, &coeffs, success, &marks) {
            f(r);
        }
    })
}

pub fn qnd_herald(input: &FockState, n: usize) -> Result<Vec<TeleportResult>> {
    let mut out = Vec::new();
    qnd_herald_for_each(input, n, |r| out.push(r))?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlmSummary {
    pub n: usize,
    pub success_probability: f64,
    pub total_probability: f64,
    /// Worst success-branch fidelity; 1 if there is no success branch.
    pub min_fidelity: f64,
}

fn summarize<G>(n: usize, input: &FockState, run: G) -> Result<KlmSummary>
where
    G: FnOnce(&mut dyn FnMut(TeleportResult)) -> Result<()>,
{
    let mut s = KlmSummary {
        n,
        success_probability: 0.0,
        total_probability: 0.0,
        min_fidelity: 1.0,
    };
    run(&mut |r: TeleportResult| {
        s.total_probability += r.probability;
        if r.success {
            s.success_probability += r.probability;
            s.min_fidelity = s.min_fidelity.min(r.fidelity(input));
        }
    })?;
    Ok(s)
}

pub fn teleport_summary(input: &FockState, n: usize) -> Result<KlmSummary> {
    let normalized = input.normalized().ok_or(Error::UnsupportedInput)?;
    summarize(n, &normalized, |f| teleport_for_each(&normalized, n, f))
}

pub fn qnd_summary(input: &FockState, n: usize) -> Result<KlmSummary> {
    let normalized = input.normalized().ok_or(Error::UnsupportedInput)?;
    summarize(n, &normalized, |f| qnd_herald_for_each(&normalized, n, f))
}
