use super::TallySummary;
use crate::error::{Error, Result};

pub const REPETITION_RATE: f64 = 1e10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Framework {
    /// Inconclusive rounds discarded under an extra assumption on the attack.
    Restricted,
    /// Inconclusive outcomes replaced by random bits.
    Unrestricted,
    /// Only the source and Alice's device trusted to be uncharacterized.
    DetectorIndependent,
}

impl std::str::FromStr for Framework {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "restricted" => Ok(Self::Restricted),
            "unrestricted" => Ok(Self::Unrestricted),
            "detector-independent" | "detector_independent" => Ok(Self::DetectorIndependent),
            _ => Err(format!("unknown framework '{s}'")),
        }
    }
}

impl std::fmt::Display for Framework {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Restricted => "restricted",
            Self::Unrestricted => "unrestricted",
            Self::DetectorIndependent => "detector-independent",
        })
    }
}

/// Binary entropy in bits, with 0·log 0 = 0.
pub fn entropy_h(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfRange {
            name: "x",
            value: x,
            min: 0.0,
            max: 1.0,
        });
    }
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    Ok(term(x) + term(1.0 - x))
}

fn h(x: f64) -> f64 {
    entropy_h(x.clamp(0.0, 1.0)).expect("clamped")
}

/// χ[x] = h[(1 + √((x/2)² − 1))/2]; 1 when |x| < 2 and 0 past the quantum bound.
pub fn chi(x: f64) -> f64 {
    if x.abs() < 2.0 {
        return 1.0;
    }
    let r = ((x / 2.0).powi(2) - 1.0).sqrt();
    if r >= 1.0 {
        0.0
    } else {
        h((1.0 + r) / 2.0)
    }
}

fn restricted_value(mu_cc: f64, mu_c: f64, q: f64, chi_value: f64) -> f64 {
    let r = mu_c / mu_cc;
    mu_cc * (1.0 - h(q) - ((1.0 - r) * chi_value + r))
}

fn restricted_chi_arg(mu_cc: f64, mu_c: f64, s_cc: f64) -> f64 {
    (mu_cc * s_cc - 4.0 * mu_c) / (mu_cc + mu_c)
}

pub fn key_restricted(t: &TallySummary) -> Result<f64> {
    if t.mu_cc <= 0.0 {
        return Err(Error::ZeroConclusive("mu_cc"));
    }
    let x = restricted_chi_arg(t.mu_cc, t.mu_c, t.s_cc);
    Ok(restricted_value(t.mu_cc, t.mu_c, t.q_cc, chi(x)))
}

pub fn key_unrestricted(t: &TallySummary) -> f64 {
    t.mu_minus_c * (1.0 - h(t.q_minus_c)) - chi(t.s)
}

fn detector_independent_value(mu: f64, q: f64) -> f64 {
    let delta = mu * q + (1.0 - mu) / 2.0;
    mu * (1.0 - h(q)) - h(delta)
}

pub fn key_detector_independent(t: &TallySummary) -> f64 {
    detector_independent_value(t.mu_minus_c, t.q_minus_c)
}

/// Key per heralded signal. Under the detector-independent framework Alice's
/// side is trusted, so her inconclusive rounds are dropped rather than
/// randomized and the formula is applied to the remaining fraction.
pub fn key_rate(framework: Framework, t: &TallySummary) -> Result<f64> {
    match framework {
        Framework::Restricted => key_restricted(t),
        Framework::Unrestricted => Ok(key_unrestricted(t)),
        Framework::DetectorIndependent => Ok(t.alice_conclusive * key_detector_independent(&t.alice_conditioned())),
    }
}

/// Values χ can take when its argument ranges over [lo, hi]: the endpoints,
/// plus 1 if the range reaches into (−2, 2).
fn chi_candidates(lo: f64, hi: f64) -> Vec<f64> {
    let mut c = vec![chi(lo), chi(hi)];
    if lo < 2.0 && hi > -2.0 {
        c.push(1.0);
    }
    c
}

fn worst_q(q: f64, w: f64) -> f64 {
    (q * (1.0 - w) + w).min(0.5).max(q.min(0.5))
}

/// Worst-case key rate when a fraction `w` of the heralded mass is unknown:
/// that mass may carry S = ±4 or anything between, errors on every round,
/// and may have been inconclusive (μ scaled by 1 − w). χ ranges are taken
/// over the whole adversarial box, so the bound only weakens as w grows.
pub fn lower_bound(framework: Framework, t: &TallySummary) -> Result<f64> {
    let w = t.truncation_weight.clamp(0.0, 1.0);
    let scales = [1.0, 1.0 - w];
    match framework {
        Framework::Restricted => {
            if t.mu_cc <= 0.0 {
                return Err(Error::ZeroConclusive("mu_cc"));
            }
            let q = worst_q(t.q_cc, w);
            let s_lo = (1.0 - w) * t.s_cc - 4.0 * w;
            let s_hi = (1.0 - w) * t.s_cc + 4.0 * w;
            // The χ argument is monotone in S and in the ratio μ_c/μ_cc.
            let mut args = Vec::new();
            for s in [s_lo, s_hi] {
                for ratio in [1.0 - w, 1.0 / (1.0 - w).max(f64::MIN_POSITIVE)] {
                    let mc = (t.mu_c * ratio).min(f64::MAX);
                    args.push(restricted_chi_arg(t.mu_cc, mc, s));
                }
            }
            let lo = args.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = args.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut best = f64::INFINITY;
            for c in chi_candidates(lo, hi) {
                for a in scales {
                    for b in scales {
                        let (mcc, mc) = (a * t.mu_cc, b * t.mu_c);
                        let k = if mcc > 0.0 {
                            restricted_value(mcc, mc, q, c)
                        } else {
                            -mc * (1.0 - c)
                        };
                        best = best.min(k);
                    }
                }
            }
            Ok(best)
        }
        Framework::Unrestricted => {
            let q = worst_q(t.q_minus_c, w);
            let lo = (1.0 - w) * t.s - 4.0 * w;
            let hi = (1.0 - w) * t.s + 4.0 * w;
            let mut best = f64::INFINITY;
            for c in chi_candidates(lo, hi) {
                for s in scales {
                    best = best.min(s * t.mu_minus_c * (1.0 - h(q)) - c);
                }
            }
            Ok(best)
        }
        Framework::DetectorIndependent => {
            let c = t.alice_conditioned();
            let mut best = f64::INFINITY;
            for q in [c.q_minus_c, worst_q(c.q_minus_c, w)] {
                for s in scales {
                    let k = detector_independent_value(s * c.mu_minus_c, q);
                    for a in scales {
                        best = best.min(a * t.alice_conclusive * k);
                    }
                }
            }
            Ok(best)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeyRateReport {
    pub framework: Framework,
    pub k_approx_raw: f64,
    pub k_lower_raw: f64,
    /// Both clamped at zero.
    pub k_approx: f64,
    pub k_lower: f64,
    pub rate_per_second: f64,
}

/// Key rates for a tally; a tally with no double-conclusive rounds gives
/// raw rates of −1 under the restricted framework.
pub fn evaluate_report(framework: Framework, t: &TallySummary, repetition_rate: f64) -> KeyRateReport {
    let k_approx_raw = key_rate(framework, t).unwrap_or(-1.0);
    let k_lower_raw = lower_bound(framework, t).unwrap_or(-1.0).min(k_approx_raw);
    let k_approx = k_approx_raw.max(0.0);
    KeyRateReport {
        framework,
        k_approx_raw,
        k_lower_raw,
        k_approx,
        k_lower: k_lower_raw.max(0.0),
        rate_per_second: k_approx * t.herald_prob * repetition_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TSIRELSON: f64 = 2.0 * std::f64::consts::SQRT_2;

    fn tally(mu_cc: f64, mu_c: f64, q: f64, s: f64) -> TallySummary {
        TallySummary {
            mu_cc,
            mu_c,
            mu_minus_c: mu_cc,
            s,
            s_cc: s,
            q_cc: q,
            q_minus_c: q,
            alice_conclusive: 1.0,
            herald_prob: 1.0,
            truncation_weight: 0.0,
        }
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy_h(0.5).unwrap(), 1.0);
        assert_eq!(entropy_h(0.0).unwrap(), 0.0);
        assert!((entropy_h(0.11).unwrap() - 0.499_915_958_2).abs() < 1e-9);
        assert!(entropy_h(1.5).is_err());
    }

    #[test]
    fn chi_values() {
        assert!((chi(2.0) - 1.0).abs() < 1e-15);
        assert!(chi(TSIRELSON).abs() < 1e-7);
        assert!((chi(2.5) - h(0.875)).abs() < 1e-15);
        assert_eq!(chi(1.0), 1.0);
    }

    #[test]
    fn restricted_anchors() {
        let k = key_restricted(&tally(1.0, 0.0, 0.0, TSIRELSON)).unwrap();
        assert!((k - 1.0).abs() < 1e-7);
        assert!(key_restricted(&tally(1.0, 0.0, 0.0, 2.0)).unwrap().abs() < 1e-15);
        for s in [2.0, 2.5, TSIRELSON] {
            let t = tally(0.4, 0.4, 0.05, s);
            assert!(key_restricted(&t).unwrap() <= -h(0.05) * 0.4 + 1e-12);
        }
        assert!(key_restricted(&tally(0.0, 0.1, 0.0, 2.5)).is_err());
    }

    #[test]
    fn unrestricted_anchors() {
        assert!((key_unrestricted(&tally(1.0, 0.0, 0.0, TSIRELSON)) - 1.0).abs() < 1e-7);
        for s in [0.0, 1.5, 2.0] {
            for mu in [0.2, 0.7, 1.0] {
                assert!(key_unrestricted(&tally(mu, 0.0, 0.0, s)) <= mu - 1.0 + 1e-15);
            }
        }
    }

    #[test]
    fn detector_independent_anchors() {
        assert!((key_detector_independent(&tally(1.0, 0.0, 0.0, 0.0)) - 1.0).abs() < 1e-15);
        assert!(key_detector_independent(&tally(0.9, 0.0, 0.5, 0.0)) < 0.0);
    }

    #[test]
    fn lower_bound_is_exact_without_truncation() {
        let t = tally(0.8, 0.05, 0.02, 2.7);
        for f in [Framework::Restricted, Framework::Unrestricted, Framework::DetectorIndependent] {
            assert!((lower_bound(f, &t).unwrap() - key_rate(f, &t).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn lower_bound_decreases_with_weight() {
        for f in [Framework::Restricted, Framework::Unrestricted, Framework::DetectorIndependent] {
            let mut last = f64::INFINITY;
            for i in 0..=100 {
                let mut t = tally(0.9, 0.02, 0.01, 2.75);
                t.truncation_weight = i as f64 / 100.0;
                let k = lower_bound(f, &t).unwrap();
                assert!(k <= last + 1e-15, "{f} at w={}", t.truncation_weight);
                assert!(k <= key_rate(f, &t).unwrap() + 1e-15);
                last = k;
            }
            assert!(last <= 0.0);
        }
    }
}
