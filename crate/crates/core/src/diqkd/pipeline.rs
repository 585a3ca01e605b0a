use rayon::prelude::*;

use super::keyrate::{evaluate_report, Framework, KeyRateReport};
use super::{Tallies, TallySummary};
use crate::error::{Error, Result};
use crate::fock::{BranchEnsemble, FockState, Occupation};
use crate::herald::{self, CircuitDescription, KrausOperator, PhaseCorrection};
use crate::optics;
use crate::sources::{self, SourceConfig};

/// Source modes (a_h, a_v, b_h, b_v) reordered for measurement: Bob first.
pub const MEASURE_ORDER: [usize; 4] = [2, 3, 0, 1];

/// Full input (a_h, a_v, b_h, b_v, aux_h, aux_v, vac_h, vac_v) reordered so
/// the amplifier acts on modes 0..6 and Alice's pair trails as spectators.
const CIRCUIT_ORDER: [usize; 8] = [2, 3, 4, 5, 6, 7, 0, 1];

const TRAVELLING: [usize; 2] = [0, 1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Amplifier {
    None,
    Original,
    Modified,
}

impl std::str::FromStr for Amplifier {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "original" => Ok(Self::Original),
            "modified" => Ok(Self::Modified),
            _ => Err(format!("unknown amplifier '{s}'")),
        }
    }
}

impl std::fmt::Display for Amplifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Original => "original",
            Self::Modified => "modified",
        })
    }
}

impl Amplifier {
    pub fn circuit(&self, t: f64) -> Result<Option<CircuitDescription>> {
        Ok(match self {
            Self::None => None,
            Self::Original => Some(herald::qubit_amplifier(t)?),
            Self::Modified => Some(herald::modified_amplifier(t)?),
        })
    }

    pub fn target(&self, t: f64) -> Option<KrausOperator> {
        match self {
            Self::None => None,
            Self::Original => Some(herald::qubit_amplifier_target(t)),
            Self::Modified => Some(herald::modified_amplifier_target(t)),
        }
    }
}

/// η_t = 10^(−α·L/10) for attenuation α in dB/km.
pub fn fiber_transmissivity(distance_km: f64, atten_db_per_km: f64) -> f64 {
    10f64.powf(-atten_db_per_km * distance_km / 10.0)
}

struct Device {
    circuit: CircuitDescription,
    corrections: Vec<PhaseCorrection>,
}

fn device(amp: Amplifier, t: f64) -> Result<Option<Device>> {
    let (Some(c), Some(target)) = (amp.circuit(t)?, amp.target(t)) else {
        return Ok(None);
    };
    let corrections = herald::feed_forward(&c, &target)?;
    let circuit = CircuitDescription { mode_count: 8, ..c };
    Ok(Some(Device { circuit, corrections }))
}

/// Heralded, measured tallies of one input ensemble in circuit order.
/// Returns the herald probability and tallies normalized per setting pair,
/// plus the conditional truncation weight.
fn run_device(dev: &Device, input: &BranchEnsemble, eta_t: f64, eta_cd: f64) -> Result<(f64, Tallies, f64)> {
    let lossy = optics::loss_on_modes(eta_t, &TRAVELLING, input)?;
    let out = herald::herald(&dev.circuit, &lossy, eta_cd, Some(&dev.corrections))?;
    let tallies = Tallies::of_ensemble(&out.conditional, eta_cd)?;
    Ok((out.herald_probability, tallies, out.conditional.truncation_weight()))
}

fn run_bare(input: &BranchEnsemble, eta_t: f64, eta_cd: f64) -> Result<(f64, Tallies)> {
    let lossy = optics::loss_on_modes(eta_t, &TRAVELLING, input)?;
    let mass = lossy.total_mass();
    let tallies = Tallies::of_ensemble(&lossy, eta_cd)?;
    Ok((mass, tallies))
}

#[derive(Clone, Debug)]
struct TableEntry {
    pairs: usize,
    aux: Option<(usize, usize)>,
    herald: f64,
    /// Unnormalized: already multiplied by `herald`.
    tallies: Tallies,
}

/// Per-branch results at fixed (t, η_t, η_cd); any (p, p′) mixture is then a
/// weighted sum, so pump optimization does not re-run the optics.
#[derive(Clone, Debug)]
pub struct BranchTable {
    pub amplifier: Amplifier,
    pub t: f64,
    pub eta_t: f64,
    pub eta_cd: f64,
    pub cap: u32,
    entries: Vec<TableEntry>,
}

fn photon_state(n: usize) -> FockState {
    FockState::basis(Occupation::from(vec![n as u8]))
}

pub fn branch_table(amp: Amplifier, t: f64, eta_t: f64, eta_cd: f64, cap: u32) -> Result<BranchTable> {
    for (name, v) in [("eta_t", eta_t), ("eta_cd", eta_cd)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange {
                name,
                value: v,
                min: 0.0,
                max: 1.0,
            });
        }
    }
    let dev = device(amp, t)?;
    let mut combos = Vec::new();
    for k in 0..3 {
        match dev {
            None if 2 * k as u32 <= cap => combos.push((k, None)),
            Some(_) => {
                for h in 1..=3 {
                    for v in 1..=3 {
                        if (2 * k + h + v) as u32 <= cap {
                            combos.push((k, Some((h, v))));
                        }
                    }
                }
            }
            None => {}
        }
    }
    let entries = combos
        .par_iter()
        .map(|&(k, aux)| -> Result<TableEntry> {
            let src = sources::pair_state(k);
            let (herald, tallies) = match (&dev, aux) {
                (Some(d), Some((h, v))) => {
                    let s = src
                        .tensor(&photon_state(h))
                        .tensor(&photon_state(v))
                        .tensor(&FockState::vacuum(2))
                        .permute_modes(&CIRCUIT_ORDER)?;
                    let (p, t, _) = run_device(d, &BranchEnsemble::pure(s), eta_t, eta_cd)?;
                    (p, t.scaled(p))
                }
                _ => {
                    let s = src.permute_modes(&MEASURE_ORDER)?;
                    run_bare(&BranchEnsemble::pure(s), eta_t, eta_cd)?
                }
            };
            Ok(TableEntry {
                pairs: k,
                aux,
                herald,
                tallies,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BranchTable {
        amplifier: amp,
        t,
        eta_t,
        eta_cd,
        cap,
        entries,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointResult {
    pub p: f64,
    pub p_prime: f64,
    pub t: f64,
    pub eta_t: f64,
    pub tally: TallySummary,
    pub report: KeyRateReport,
}

impl BranchTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn summary(&self, p: f64, p_prime: f64) -> Result<TallySummary> {
        let (src, _) = sources::epr_weights(p);
        let aux = match self.amplifier {
            Amplifier::None => None,
            _ => Some(sources::heralded_weights(p_prime, self.eta_cd)?.0),
        };
        let mut kept = 0.0;
        let mut herald = 0.0;
        let mut tallies = Tallies::zero();
        for e in &self.entries {
            let w = src[e.pairs]
                * match (e.aux, aux) {
                    (Some((h, v)), Some(a)) => a[h - 1] * a[v - 1],
                    _ => 1.0,
                };
            kept += w;
            herald += w * e.herald;
            tallies.add_scaled(&e.tallies, w);
        }
        let w_raw = (1.0 - kept).max(0.0);
        let normalized = if herald > 0.0 { tallies.scaled(1.0 / herald) } else { tallies };
        let trunc = if w_raw > 0.0 { w_raw / (herald + w_raw) } else { 0.0 };
        Ok(TallySummary::from_tallies(&normalized, herald, trunc))
    }

    pub fn point(&self, p: f64, p_prime: f64, framework: Framework, repetition_rate: f64) -> Result<PointResult> {
        let tally = self.summary(p, p_prime)?;
        Ok(PointResult {
            p,
            p_prime,
            t: self.t,
            eta_t: self.eta_t,
            tally,
            report: evaluate_report(framework, &tally, repetition_rate),
        })
    }
}

/// Reference path: builds the whole input ensemble and pushes it through the
/// channel, amplifier and detectors in one go. Slow; used to check the tables.
pub fn evaluate_full(
    cfg: &SourceConfig,
    amp: Amplifier,
    t: f64,
    framework: Framework,
    cap: u32,
    repetition_rate: f64,
) -> Result<PointResult> {
    cfg.validate()?;
    let (herald_prob, tallies, trunc) = match device(amp, t)? {
        Some(dev) => {
            let input = sources::total_input(cfg, Some(cap))?.permute_modes(&CIRCUIT_ORDER)?;
            let (p, t, w) = run_device(&dev, &input, cfg.eta_t, cfg.eta_cd)?;
            (p, t, w)
        }
        None => {
            let src = sources::epr_source(cfg.p)?;
            let capped = src.tensor(&BranchEnsemble::pure(FockState::vacuum(0)), Some(cap));
            let input = capped.permute_modes(&MEASURE_ORDER)?;
            let (mass, t) = run_bare(&input, cfg.eta_t, cfg.eta_cd)?;
            let tw = capped.truncation_weight();
            (mass, t.scaled(1.0 / mass), if tw > 0.0 { tw / (mass + tw) } else { 0.0 })
        }
    };
    let tally = TallySummary::from_tallies(&tallies, herald_prob, trunc);
    Ok(PointResult {
        p: cfg.p,
        p_prime: cfg.p_prime,
        t,
        eta_t: cfg.eta_t,
        tally,
        report: evaluate_report(framework, &tally, repetition_rate),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &TallySummary, b: &TallySummary) -> bool {
        let pairs = [
            (a.mu_cc, b.mu_cc),
            (a.mu_c, b.mu_c),
            (a.mu_minus_c, b.mu_minus_c),
            (a.s, b.s),
            (a.s_cc, b.s_cc),
            (a.q_cc, b.q_cc),
            (a.q_minus_c, b.q_minus_c),
            (a.herald_prob, b.herald_prob),
            (a.truncation_weight, b.truncation_weight),
        ];
        pairs.iter().all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs()))
    }

    #[test]
    fn table_matches_full_ensemble() {
        for amp in [Amplifier::None, Amplifier::Original, Amplifier::Modified] {
            let cfg = SourceConfig {
                p: 8e-3,
                p_prime: 6e-3,
                eta_cd: 0.9,
                eta_t: 0.3,
            };
            let table = branch_table(amp, 0.2, cfg.eta_t, cfg.eta_cd, 6).unwrap();
            let fast = table.summary(cfg.p, cfg.p_prime).unwrap();
            let full = evaluate_full(&cfg, amp, 0.2, Framework::Restricted, 6, 1e10).unwrap().tally;
            assert!(close(&fast, &full), "{amp}: {fast:?} vs {full:?}");
        }
    }

    #[test]
    fn bare_source_at_low_pump_is_ideal() {
        let table = branch_table(Amplifier::None, 0.5, 1.0, 1.0, 6).unwrap();
        let s = table.summary(1e-5, 0.0).unwrap();
        // The vacuum branch dominates the unheralded statistics.
        assert!(s.mu_cc < 1e-4);
        assert!(s.q_cc < 1e-4);
        assert!((s.s_cc - 2.0 * 2f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn vacuum_input_never_heralds_modified() {
        let table = branch_table(Amplifier::Modified, 0.3, 0.0, 1.0, 6).unwrap();
        // With total channel loss only aux-photon terms remain at Bob.
        let s = table.summary(1e-3, 1e-3).unwrap();
        assert!(s.herald_prob < 1e-12);
    }

    #[test]
    fn fiber_model() {
        assert!((fiber_transmissivity(50.0, 0.2) - 0.1).abs() < 1e-15);
        assert_eq!(fiber_transmissivity(0.0, 0.2), 1.0);
    }
}
