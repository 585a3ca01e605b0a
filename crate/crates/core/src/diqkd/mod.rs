//! Polarization measurements at both ends of the link, outcome tallies, the
//! Bell and error-rate statistics, and key rates for the three security
//! frameworks.

mod keyrate;
mod pipeline;

use std::f64::consts::{PI, TAU};

pub use keyrate::{
    chi, entropy_h, evaluate_report, key_detector_independent, key_rate, key_restricted, key_unrestricted,
    lower_bound, Framework, KeyRateReport, REPETITION_RATE,
};
pub use pipeline::{
    branch_table, evaluate_full, fiber_transmissivity, Amplifier, BranchTable, PointResult, MEASURE_ORDER,
};

use crate::error::Result;
use crate::fock::{BranchEnsemble, FockState};
use crate::optics;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Party {
    Alice,
    Bob,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Bell,
    Key,
}

/// Measurement stage mode layout: Bob's (h, v) then Alice's (h, v).
pub const BOB_MODES: [usize; 2] = [0, 1];
pub const ALICE_MODES: [usize; 2] = [2, 3];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementSetting {
    pub party: Party,
    angle: f64,
    pub role: Role,
}

impl MeasurementSetting {
    pub fn new(party: Party, angle: f64, role: Role) -> Self {
        Self {
            party,
            angle: angle.rem_euclid(TAU),
            role,
        }
    }

    /// Polarization rotation in [0, 2π).
    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn modes(&self) -> [usize; 2] {
        match self.party {
            Party::Alice => ALICE_MODES,
            Party::Bob => BOB_MODES,
        }
    }
}

pub fn alice_settings() -> [MeasurementSetting; 2] {
    [
        MeasurementSetting::new(Party::Alice, 0.0, Role::Bell),
        MeasurementSetting::new(Party::Alice, PI / 4.0, Role::Bell),
    ]
}

/// Two Bell settings and the key setting.
pub fn bob_settings() -> [MeasurementSetting; 3] {
    [
        MeasurementSetting::new(Party::Bob, PI / 8.0, Role::Bell),
        MeasurementSetting::new(Party::Bob, -PI / 8.0, Role::Bell),
        MeasurementSetting::new(Party::Bob, 0.0, Role::Key),
    ]
}

/// Alice's key measurement coincides with her first Bell setting.
pub const KEY_PAIR: (usize, usize) = (0, 2);

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OutcomeDistribution {
    pub bit0: f64,
    pub bit1: f64,
    pub inconclusive: f64,
}

/// Distribution over {bit 0, bit 1, inconclusive} for true counts (nh, nv)
/// seen through detectors of efficiency `eta`: exactly one click in h is 0,
/// exactly one in v is 1, anything else is inconclusive.
pub fn click_outcomes(nh: u8, nv: u8, eta: f64) -> [f64; 3] {
    let miss = |n: u8| (1.0 - eta).powi(i32::from(n));
    let one = |n: u8| {
        if n == 0 {
            0.0
        } else {
            f64::from(n) * eta * (1.0 - eta).powi(i32::from(n) - 1)
        }
    };
    let b0 = one(nh) * miss(nv);
    let b1 = one(nv) * miss(nh);
    [b0, b1, (1.0 - b0 - b1).max(0.0)]
}

fn rotate(s: &FockState, setting: &MeasurementSetting) -> Result<FockState> {
    optics::apply(&optics::rotation(setting.angle()).on(&setting.modes())?, s)
}

/// Outcome distribution of one party's measurement; loss must already have
/// been applied, detection here is ideal.
pub fn measure(e: &BranchEnsemble, setting: &MeasurementSetting) -> Result<OutcomeDistribution> {
    let [mh, mv] = setting.modes();
    let mut d = OutcomeDistribution::default();
    let total = e.total_mass();
    for b in e.branches() {
        let s = rotate(&b.state, setting)?;
        for (occ, a) in s.terms() {
            let w = b.weight * a.norm_sqr() / total;
            let [p0, p1, pi] = click_outcomes(occ.get(mh), occ.get(mv), 1.0);
            d.bit0 += w * p0;
            d.bit1 += w * p1;
            d.inconclusive += w * pi;
        }
    }
    Ok(d)
}

/// Joint outcome probabilities [alice][bob] for one setting pair.
pub type Joint = [[f64; 3]; 3];

fn tally_rotated(r: &FockState, eta: f64) -> Joint {
    let mut j = [[0.0; 3]; 3];
    for (occ, a) in r.terms() {
        let w = a.norm_sqr();
        let fa = click_outcomes(occ.get(ALICE_MODES[0]), occ.get(ALICE_MODES[1]), eta);
        let fb = click_outcomes(occ.get(BOB_MODES[0]), occ.get(BOB_MODES[1]), eta);
        for (x, pa) in fa.iter().enumerate() {
            for (y, pb) in fb.iter().enumerate() {
                j[x][y] += w * pa * pb;
            }
        }
    }
    j
}

/// Joint outcome table of a pure state, detection efficiency `eta` on every detector.
pub fn joint_pure(s: &FockState, alice: &MeasurementSetting, bob: &MeasurementSetting, eta: f64) -> Result<Joint> {
    Ok(tally_rotated(&rotate(&rotate(s, alice)?, bob)?, eta))
}

/// Joint tables of every (Alice, Bob) setting pair, indexed alice * 3 + bob.
#[derive(Clone, Debug, PartialEq)]
pub struct Tallies {
    pub joint: Vec<Joint>,
}

impl Tallies {
    pub fn zero() -> Self {
        Self {
            joint: vec![[[0.0; 3]; 3]; 6],
        }
    }

    pub fn pair(&self, alice: usize, bob: usize) -> &Joint {
        &self.joint[alice * 3 + bob]
    }

    pub fn add_scaled(&mut self, other: &Tallies, w: f64) {
        for (a, b) in self.joint.iter_mut().zip(&other.joint) {
            for x in 0..3 {
                for y in 0..3 {
                    a[x][y] += w * b[x][y];
                }
            }
        }
    }

    pub fn scaled(&self, w: f64) -> Tallies {
        let mut t = Tallies::zero();
        t.add_scaled(self, w);
        t
    }

    pub fn of_state(s: &FockState, eta: f64) -> Result<Tallies> {
        let mut t = Tallies::zero();
        for (ai, a) in alice_settings().iter().enumerate() {
            let ra = rotate(s, a)?;
            for (bi, b) in bob_settings().iter().enumerate() {
                t.joint[ai * 3 + bi] = tally_rotated(&rotate(&ra, b)?, eta);
            }
        }
        Ok(t)
    }

    /// Weighted tallies of an ensemble (weights are not renormalized).
    pub fn of_ensemble(e: &BranchEnsemble, eta: f64) -> Result<Tallies> {
        let mut t = Tallies::zero();
        for b in e.branches() {
            t.add_scaled(&Tallies::of_state(&b.state, eta)?, b.weight);
        }
        Ok(t)
    }
}

/// How inconclusive outcomes enter a Bell correlator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AssignmentPolicy {
    /// Keep only rounds where both sides are conclusive and renormalize.
    Discard,
    /// Replace each inconclusive outcome by a uniformly random bit.
    RandomBit,
}

fn correlator(j: &Joint, policy: AssignmentPolicy) -> f64 {
    let same = j[0][0] + j[1][1];
    let diff = j[0][1] + j[1][0];
    match policy {
        // Random bits are uncorrelated with everything, so they add zero.
        AssignmentPolicy::RandomBit => {
            let total: f64 = j.iter().flatten().sum();
            if total > 0.0 {
                (same - diff) / total
            } else {
                0.0
            }
        }
        AssignmentPolicy::Discard => {
            let cc = same + diff;
            if cc > 0.0 {
                (same - diff) / cc
            } else {
                0.0
            }
        }
    }
}

/// S = E₁₁ + E₁₂ + E₂₁ − E₂₂ over the four Bell setting pairs.
pub fn chsh(t: &Tallies, policy: AssignmentPolicy) -> f64 {
    let e = |a, b| correlator(t.pair(a, b), policy);
    e(0, 0) + e(0, 1) + e(1, 0) - e(1, 1)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TallySummary {
    pub mu_cc: f64,
    pub mu_c: f64,
    pub mu_minus_c: f64,
    pub s: f64,
    pub s_cc: f64,
    pub q_cc: f64,
    pub q_minus_c: f64,
    /// Probability that Alice's key-setting outcome is conclusive.
    pub alice_conclusive: f64,
    pub herald_prob: f64,
    pub truncation_weight: f64,
}

impl TallySummary {
    /// Statistics of normalized tallies (each joint table sums to 1).
    pub fn from_tallies(t: &Tallies, herald_prob: f64, truncation_weight: f64) -> Self {
        let k = t.pair(KEY_PAIR.0, KEY_PAIR.1);
        let total: f64 = k.iter().flatten().sum();
        let norm = if total > 0.0 { total } else { 1.0 };
        let mu_cc = (k[0][0] + k[0][1] + k[1][0] + k[1][1]) / norm;
        let alice_only = (k[0][2] + k[1][2]) / norm;
        let bob_only = (k[2][0] + k[2][1]) / norm;
        let mu_minus_c = mu_cc + bob_only;
        let err = (k[0][1] + k[1][0]) / norm;
        let q_cc = if mu_cc > 0.0 { err / mu_cc } else { 0.0 };
        let q_minus_c = if mu_minus_c > 0.0 {
            (err + 0.5 * bob_only) / mu_minus_c
        } else {
            0.0
        };
        Self {
            mu_cc,
            mu_c: alice_only + bob_only,
            mu_minus_c,
            s: chsh(t, AssignmentPolicy::RandomBit),
            s_cc: chsh(t, AssignmentPolicy::Discard),
            q_cc,
            q_minus_c,
            alice_conclusive: mu_cc + alice_only,
            herald_prob,
            truncation_weight,
        }
    }

    /// Statistics restricted to rounds where Alice is conclusive, as used when
    /// her side is trusted: μ₋c becomes P(Bob conclusive | Alice conclusive)
    /// and Q₋c the error rate of the double-conclusive rounds.
    pub fn alice_conditioned(&self) -> Self {
        let pa = self.alice_conclusive;
        Self {
            mu_minus_c: if pa > 0.0 { self.mu_cc / pa } else { 0.0 },
            q_minus_c: self.q_cc,
            alice_conclusive: 1.0,
            ..*self
        }
    }
}
