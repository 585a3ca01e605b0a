//! Perturbative SPDC sources as branch ensembles.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::{Branch, BranchEnsemble, FockState, Occupation};

pub const MAX_PUMP: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceConfig {
    pub p: f64,
    pub p_prime: f64,
    pub eta_cd: f64,
    pub eta_t: f64,
}

fn check(name: &'static str, value: f64, max: f64) -> Result<()> {
    if (0.0..=max).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            min: 0.0,
            max,
        })
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        check("p", self.p, MAX_PUMP)?;
        check("p_prime", self.p_prime, MAX_PUMP)?;
        check("eta_cd", self.eta_cd, 1.0)?;
        check("eta_t", self.eta_t, 1.0)
    }
}

fn state(modes: usize, terms: &[(&[u8], f64)]) -> FockState {
    let norm = terms.iter().map(|(_, a)| a * a).sum::<f64>().sqrt();
    FockState::from_terms(
        modes,
        terms
            .iter()
            .map(|(o, a)| (Occupation::from(o.to_vec()), C64::new(a / norm, 0.0))),
    )
    .expect("fixed occupation length")
}

/// The k-pair component of the polarization-entangled source, k ≤ 2.
/// Mode order: a_h, a_v, b_h, b_v.
pub fn pair_state(k: usize) -> FockState {
    match k {
        0 => FockState::vacuum(4),
        1 => state(4, &[(&[1, 0, 1, 0], 1.0), (&[0, 1, 0, 1], 1.0)]),
        2 => state(4, &[(&[2, 0, 2, 0], 1.0), (&[1, 1, 1, 1], 1.0), (&[0, 2, 0, 2], 1.0)]),
        _ => panic!("pair_state only covers k ≤ 2"),
    }
}

/// Weights of the 0, 1 and 2 pair branches and the neglected tail.
/// Normalized by the full geometric sum, so the tail is exactly p³.
pub fn epr_weights(p: f64) -> ([f64; 3], f64) {
    ([1.0 - p, p * (1.0 - p), p * p * (1.0 - p)], p.powi(3))
}

pub fn epr_source(p: f64) -> Result<BranchEnsemble> {
    check("p", p, MAX_PUMP)?;
    let (w, tail) = epr_weights(p);
    let branches = w
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(k, &weight)| Branch {
            weight,
            state: pair_state(k),
        })
        .collect();
    BranchEnsemble::new(branches, tail)
}

/// Normalized weights of the 1, 2 and 3 photon branches and the tail bound.
pub fn heralded_weights(p_prime: f64, eta_cd: f64) -> Result<([f64; 3], f64)> {
    check("p_prime", p_prime, MAX_PUMP)?;
    check("eta_cd", eta_cd, 1.0)?;
    let l = 1.0 - eta_cd;
    let raw = [
        p_prime * eta_cd,
        2.0 * l * eta_cd * p_prime.powi(2),
        3.0 * l * l * eta_cd * p_prime.powi(3),
    ];
    // k(1−η)^(k−1)η ≤ 1, so the k ≥ 4 terms sum to at most p′⁴/(1−p′).
    let tail = p_prime.powi(4) / (1.0 - p_prime);
    let z: f64 = raw.iter().sum::<f64>() + tail;
    if raw[0] == 0.0 {
        return Err(Error::DegenerateSource("heralded source has no single-photon weight"));
    }
    Ok((raw.map(|w| w / z), tail / z))
}

pub fn heralded_single_photon(p_prime: f64, eta_cd: f64) -> Result<BranchEnsemble> {
    let (w, tail) = heralded_weights(p_prime, eta_cd)?;
    let branches = w
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(k, &weight)| Branch {
            weight,
            state: FockState::basis(Occupation::from(vec![k as u8 + 1])),
        })
        .collect();
    BranchEnsemble::new(branches, tail)
}

/// Source pair, two heralded photons and two vacuum modes, in the order
/// a_h, a_v, b_h, b_v, aux_h, aux_v, vac_h, vac_v.
pub fn total_input(cfg: &SourceConfig, cap: Option<u32>) -> Result<BranchEnsemble> {
    cfg.validate()?;
    let src = epr_source(cfg.p)?;
    let aux = heralded_single_photon(cfg.p_prime, cfg.eta_cd)?;
    let vac = BranchEnsemble::pure(FockState::vacuum(2));
    Ok(src.tensor(&aux, cap).tensor(&aux, cap).tensor(&vac, cap))
}
