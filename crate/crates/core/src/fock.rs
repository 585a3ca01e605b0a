//! Sparse multimode Fock states and classical mixtures of them.
//!
//! States are kept unnormalized: the squared norm of a conditional state is
//! the probability of the conditioning event. Mixtures are lists of weighted
//! pure branches rather than density matrices.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Amplitudes with magnitude below this are dropped.
pub const PRUNE_THRESHOLD: f64 = 1e-14;

/// Total photon number kept by default in pipeline states.
pub const DEFAULT_PHOTON_CAP: u32 = 6;

/// Photon counts per mode, ordered as the circuit diagrams read top to bottom.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Occupation(Vec<u8>);

impl Occupation {
    pub fn new(counts: &[i64]) -> Result<Self> {
        counts
            .iter()
            .map(|&c| {
                if c < 0 {
                    Err(Error::NegativeCount(c))
                } else {
                    u8::try_from(c).map_err(|_| Error::CountOverflow(c))
                }
            })
            .collect::<Result<Vec<u8>>>()
            .map(Self)
    }

    pub fn vacuum(mode_count: usize) -> Self {
        Self(vec![0; mode_count])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn counts(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, mode: usize) -> u8 {
        self.0[mode]
    }

    pub fn total(&self) -> u32 {
        self.0.iter().map(|&c| c as u32).sum()
    }

    /// ∏ nᵢ! over all modes.
    pub fn factorial_product(&self) -> f64 {
        self.0.iter().map(|&n| factorial(n as u32)).product()
    }
}

impl From<Vec<u8>> for Occupation {
    fn from(v: Vec<u8>) -> Self {
        Self(v)
    }
}

impl From<&[u8]> for Occupation {
    fn from(v: &[u8]) -> Self {
        Self(v.to_vec())
    }
}

impl<const N: usize> From<[u8; N]> for Occupation {
    fn from(v: [u8; N]) -> Self {
        Self(v.to_vec())
    }
}

impl fmt::Display for Occupation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for c in &self.0 {
            write!(f, "{c}")?;
        }
        write!(f, "⟩")
    }
}

pub(crate) fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

pub(crate) fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Pure multimode Fock state stored as a sparse occupation → amplitude map.
#[derive(Clone, Debug, PartialEq)]
pub struct FockState {
    mode_count: usize,
    amplitudes: BTreeMap<Occupation, C64>,
    photon_cap: Option<u32>,
    discarded: f64,
}

impl FockState {
    /// Builds a state from explicit terms; duplicate occupations are summed.
    pub fn from_terms<I>(mode_count: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Occupation, C64)>,
    {
        let mut s = Self::zero(mode_count);
        for (occ, amp) in terms {
            if occ.len() != mode_count {
                return Err(Error::ModeCountMismatch {
                    expected: mode_count,
                    found: occ.len(),
                });
            }
            s.accumulate(occ, amp);
        }
        s.prune();
        Ok(s)
    }

    pub fn zero(mode_count: usize) -> Self {
        Self {
            mode_count,
            amplitudes: BTreeMap::new(),
            photon_cap: None,
            discarded: 0.0,
        }
    }

    pub fn vacuum(mode_count: usize) -> Self {
        Self::basis(Occupation::vacuum(mode_count))
    }

    pub fn basis(occ: Occupation) -> Self {
        let mut s = Self::zero(occ.len());
        s.amplitudes.insert(occ, C64::new(1.0, 0.0));
        s
    }

    /// Sets the total-photon cap; terms above it are removed and their
    /// squared amplitude is added to [`FockState::discarded_weight`].
    pub fn with_photon_cap(mut self, cap: Option<u32>) -> Self {
        self.photon_cap = cap;
        self.enforce_cap();
        self
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn photon_cap(&self) -> Option<u32> {
        self.photon_cap
    }

    /// Squared amplitude dropped so far by the photon cap.
    pub fn discarded_weight(&self) -> f64 {
        self.discarded
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Occupation, &C64)> {
        self.amplitudes.iter()
    }

    pub fn amplitude(&self, occ: &Occupation) -> C64 {
        self.amplitudes.get(occ).copied().unwrap_or_default()
    }

    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn max_photons(&self) -> u32 {
        self.amplitudes.keys().map(Occupation::total).max().unwrap_or(0)
    }

    /// Normalized copy, or `None` for the zero state.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm_sq();
        if n == 0.0 {
            return None;
        }
        Some(self.scaled(C64::new(1.0 / n.sqrt(), 0.0)))
    }

    pub fn scaled(&self, c: C64) -> Self {
        let mut s = Self {
            amplitudes: BTreeMap::new(),
            ..self.clone()
        };
        for (occ, amp) in &self.amplitudes {
            s.accumulate(occ.clone(), amp * c);
        }
        s.prune();
        s
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &FockState) -> C64 {
        self.amplitudes
            .iter()
            .map(|(occ, a)| a.conj() * other.amplitude(occ))
            .sum()
    }

    /// self + c·other
    pub fn add_scaled(&mut self, other: &FockState, c: C64) -> Result<()> {
        if other.mode_count != self.mode_count {
            return Err(Error::ModeCountMismatch {
                expected: self.mode_count,
                found: other.mode_count,
            });
        }
        for (occ, amp) in &other.amplitudes {
            self.accumulate(occ.clone(), amp * c);
        }
        self.prune();
        Ok(())
    }

    /// Product state; the tighter of the two photon caps applies.
    pub fn tensor(&self, other: &FockState) -> FockState {
        let cap = match (self.photon_cap, other.photon_cap) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let mut s = Self::zero(self.mode_count + other.mode_count);
        s.discarded = self.discarded + other.discarded;
        for (oa, aa) in &self.amplitudes {
            for (ob, ab) in &other.amplitudes {
                let mut v = oa.counts().to_vec();
                v.extend_from_slice(ob.counts());
                s.accumulate(Occupation(v), aa * ab);
            }
        }
        s.prune();
        s.with_photon_cap(cap)
    }

    /// Keeps the terms with `counts` photons on `modes` and removes those modes.
    pub fn project(&self, modes: &[usize], counts: &[u8]) -> Result<FockState> {
        self.check_modes(modes)?;
        if modes.len() != counts.len() {
            return Err(Error::ModeCountMismatch {
                expected: modes.len(),
                found: counts.len(),
            });
        }
        let keep: Vec<usize> = (0..self.mode_count).filter(|m| !modes.contains(m)).collect();
        let mut s = Self::zero(keep.len());
        s.photon_cap = self.photon_cap;
        for (occ, amp) in &self.amplitudes {
            if modes.iter().zip(counts).all(|(&m, &c)| occ.get(m) == c) {
                let v: Vec<u8> = keep.iter().map(|&m| occ.get(m)).collect();
                s.accumulate(Occupation(v), *amp);
            }
        }
        s.prune();
        Ok(s)
    }

    /// New mode `i` is old mode `order[i]`; `order` must be a permutation.
    pub fn permute_modes(&self, order: &[usize]) -> Result<FockState> {
        if order.len() != self.mode_count {
            return Err(Error::ModeCountMismatch {
                expected: self.mode_count,
                found: order.len(),
            });
        }
        self.check_modes(order)?;
        let amplitudes = self
            .amplitudes
            .iter()
            .map(|(occ, a)| (Occupation(order.iter().map(|&m| occ.get(m)).collect()), *a))
            .collect();
        Ok(Self {
            amplitudes,
            ..self.clone()
        })
    }

    /// Multiplies each term by exp(i Σₘ phases[m]·nₘ).
    pub fn phase_shift(&self, modes: &[usize], phases: &[f64]) -> Result<FockState> {
        self.check_modes(modes)?;
        let mut s = self.clone();
        for (occ, amp) in s.amplitudes.iter_mut() {
            let theta: f64 = modes
                .iter()
                .zip(phases)
                .map(|(&m, &p)| p * occ.get(m) as f64)
                .sum();
            *amp *= C64::from_polar(1.0, theta);
        }
        Ok(s)
    }

    pub(crate) fn check_modes(&self, modes: &[usize]) -> Result<()> {
        for (i, &m) in modes.iter().enumerate() {
            if m >= self.mode_count {
                return Err(Error::ModeOutOfRange {
                    index: m,
                    mode_count: self.mode_count,
                });
            }
            if modes[..i].contains(&m) {
                return Err(Error::DuplicateMode(m));
            }
        }
        Ok(())
    }

    pub(crate) fn accumulate(&mut self, occ: Occupation, amp: C64) {
        *self.amplitudes.entry(occ).or_default() += amp;
    }

    pub(crate) fn prune(&mut self) {
        self.amplitudes.retain(|_, a| a.norm() >= PRUNE_THRESHOLD);
        self.enforce_cap();
    }

    /// Builds a state with the same cap and bookkeeping but new amplitudes.
    pub(crate) fn rebuilt<I>(&self, mode_count: usize, terms: I) -> FockState
    where
        I: IntoIterator<Item = (Occupation, C64)>,
    {
        let mut s = Self::zero(mode_count);
        s.photon_cap = self.photon_cap;
        s.discarded = self.discarded;
        for (occ, amp) in terms {
            s.accumulate(occ, amp);
        }
        s.prune();
        s
    }

    fn enforce_cap(&mut self) {
        if let Some(cap) = self.photon_cap {
            let mut dropped = 0.0;
            self.amplitudes.retain(|occ, a| {
                let keep = occ.total() <= cap;
                if !keep {
                    dropped += a.norm_sqr();
                }
                keep
            });
            self.discarded += dropped;
        }
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.amplitudes.is_empty() {
            return write!(f, "0");
        }
        for (i, (occ, a)) in self.amplitudes.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({:.6}{:+.6}i){}", a.re, a.im, occ)?;
        }
        Ok(())
    }
}

/// One component of a classical mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub weight: f64,
    pub state: FockState,
}

/// Classical mixture of pure states plus the accounted mass of terms that
/// were neglected (perturbative tails, photon-cap overflow).
#[derive(Clone, Debug, PartialEq)]
pub struct BranchEnsemble {
    branches: Vec<Branch>,
    truncation_weight: f64,
}

impl BranchEnsemble {
    pub fn new(branches: Vec<Branch>, truncation_weight: f64) -> Result<Self> {
        for b in &branches {
            if !(b.weight >= 0.0) {
                return Err(Error::OutOfRange {
                    name: "branch weight",
                    value: b.weight,
                    min: 0.0,
                    max: f64::INFINITY,
                });
            }
        }
        if !(truncation_weight >= 0.0) {
            return Err(Error::OutOfRange {
                name: "truncation weight",
                value: truncation_weight,
                min: 0.0,
                max: f64::INFINITY,
            });
        }
        Ok(Self {
            branches,
            truncation_weight,
        })
    }

    pub fn pure(state: FockState) -> Self {
        Self {
            branches: vec![Branch { weight: 1.0, state }],
            truncation_weight: 0.0,
        }
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn into_branches(self) -> Vec<Branch> {
        self.branches
    }

    pub fn truncation_weight(&self) -> f64 {
        self.truncation_weight
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn mode_count(&self) -> Option<usize> {
        self.branches.first().map(|b| b.state.mode_count())
    }

    /// Σ weight · ‖state‖²
    pub fn total_mass(&self) -> f64 {
        self.branches
            .iter()
            .map(|b| b.weight * b.state.norm_sq())
            .sum()
    }

    /// Applies a linear map branch by branch.
    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(&FockState) -> FockState,
    {
        Self {
            branches: self
                .branches
                .iter()
                .map(|b| Branch {
                    weight: b.weight,
                    state: f(&b.state),
                })
                .collect(),
            truncation_weight: self.truncation_weight,
        }
    }

    pub fn try_map<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&FockState) -> Result<FockState>,
    {
        let branches = self
            .branches
            .iter()
            .map(|b| {
                Ok(Branch {
                    weight: b.weight,
                    state: f(&b.state)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            branches,
            truncation_weight: self.truncation_weight,
        })
    }

    /// Product mixture. Mass removed by `cap` joins the truncation weight,
    /// which combines as 1 − (1 − a)(1 − b) + overflow.
    pub fn tensor(&self, other: &Self, cap: Option<u32>) -> Self {
        let mut branches = Vec::with_capacity(self.len() * other.len());
        let mut overflow = 0.0;
        for a in &self.branches {
            for b in &other.branches {
                let before = a.state.discarded_weight() + b.state.discarded_weight();
                let state = a.state.tensor(&b.state).with_photon_cap(cap);
                let weight = a.weight * b.weight;
                overflow += weight * (state.discarded_weight() - before);
                if !state.is_empty() {
                    branches.push(Branch { weight, state });
                }
            }
        }
        let (ta, tb) = (self.truncation_weight, other.truncation_weight);
        Self {
            branches,
            truncation_weight: ta + tb - ta * tb + overflow,
        }
    }

    pub fn permute_modes(&self, order: &[usize]) -> Result<Self> {
        self.try_map(|s| s.permute_modes(order))
    }

    pub(crate) fn from_parts(branches: Vec<Branch>, truncation_weight: f64) -> Self {
        Self {
            branches,
            truncation_weight,
        }
    }
}
