use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use super::circuit::{CircuitDescription, DetectionPattern};
use crate::error::{Error, Result};
use crate::fock::{FockState, Occupation};

/// Matrix of a measurement branch in explicit Fock bases; column j is the
/// image of `basis_in[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausOperator {
    pub basis_in: Vec<Occupation>,
    pub basis_out: Vec<Occupation>,
    pub matrix: DMatrix<C64>,
}

impl KrausOperator {
    pub fn from_entries(basis_in: Vec<Occupation>, basis_out: Vec<Occupation>, entries: &[(usize, usize, C64)]) -> Self {
        let mut matrix = DMatrix::zeros(basis_out.len(), basis_in.len());
        for &(r, c, v) in entries {
            matrix[(r, c)] = v;
        }
        Self {
            basis_in,
            basis_out,
            matrix,
        }
    }

    /// Amplitude of output `out` for input column `col`; zero if `out` is not in the basis.
    pub fn entry(&self, out: &Occupation, col: usize) -> C64 {
        self.basis_out
            .iter()
            .position(|o| o == out)
            .map_or(C64::new(0.0, 0.0), |r| self.matrix[(r, col)])
    }

    pub fn largest_singular_value(&self) -> f64 {
        if self.matrix.is_empty() {
            return 0.0;
        }
        self.matrix.clone().svd(false, false).singular_values.max()
    }

    /// Applies the operator to a state on the input modes (unnormalized result).
    pub fn apply(&self, s: &FockState) -> Result<FockState> {
        let out_modes = self.basis_out.first().map_or(0, Occupation::len);
        let mut terms = Vec::new();
        for (occ, a) in s.terms() {
            let col = self
                .basis_in
                .iter()
                .position(|b| b == occ)
                .ok_or(Error::UnsupportedInput)?;
            for (r, o) in self.basis_out.iter().enumerate() {
                terms.push((o.clone(), self.matrix[(r, col)] * a));
            }
        }
        FockState::from_terms(out_modes, terms)
    }
}

impl std::fmt::Display for KrausOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let width = self.basis_out.first().map_or(2, |o| o.len() + 2) + 1;
        write!(f, "{:w$}", "", w = width)?;
        for b in &self.basis_in {
            write!(f, " {:>22}", b.to_string())?;
        }
        writeln!(f)?;
        for (r, o) in self.basis_out.iter().enumerate() {
            write!(f, "{:w$}", o.to_string(), w = width)?;
            for c in 0..self.basis_in.len() {
                let z = self.matrix[(r, c)];
                write!(f, " {:>10.6}{:>+10.6}i", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Extracts one Kraus operator per accepted detection pattern by sending each
/// basis input through the (unitary) circuit with ideal detection.
pub fn extract_kraus(c: &CircuitDescription, basis_in: &[Occupation]) -> Result<Vec<(DetectionPattern, KrausOperator)>> {
    if !c.is_unitary() {
        return Err(Error::NonUnitaryCircuit);
    }
    let patterns = c.detection.patterns();
    // images[pattern][column]
    let mut images: Vec<Vec<FockState>> = vec![Vec::new(); patterns.len()];
    let mut outs = BTreeSet::new();
    for b in basis_in {
        let s = c.prepare(&FockState::basis(b.clone()))?;
        let evolved = c.evolve(&s)?;
        for (i, p) in patterns.iter().enumerate() {
            let img = evolved.project(&p.detector_modes, &p.counts)?;
            outs.extend(img.terms().map(|(o, _)| o.clone()));
            images[i].push(img);
        }
    }
    let basis_out: Vec<Occupation> = outs.into_iter().collect();
    Ok(patterns
        .into_iter()
        .zip(images)
        .map(|(p, cols)| {
            let mut m = DMatrix::zeros(basis_out.len(), basis_in.len());
            for (j, img) in cols.iter().enumerate() {
                for (r, o) in basis_out.iter().enumerate() {
                    m[(r, j)] = img.amplitude(o);
                }
            }
            (
                p,
                KrausOperator {
                    basis_in: basis_in.to_vec(),
                    basis_out: basis_out.clone(),
                    matrix: m,
                },
            )
        })
        .collect())
}

/// Output phase shifter plus a global phase: an entry with output occupation
/// n is multiplied by exp(i(global + Σₘ per_mode[m]·nₘ)).
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseCorrection {
    pub global: f64,
    pub per_mode: Vec<f64>,
}

impl PhaseCorrection {
    fn phase(&self, occ: &Occupation) -> f64 {
        self.global
            + self
                .per_mode
                .iter()
                .zip(occ.counts())
                .map(|(p, &n)| p * f64::from(n))
                .sum::<f64>()
    }
}

fn union_out(k: &KrausOperator, target: &KrausOperator) -> Vec<Occupation> {
    let mut set: BTreeSet<Occupation> = k.basis_out.iter().cloned().collect();
    set.extend(target.basis_out.iter().cloned());
    set.into_iter().collect()
}

fn wrap(x: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let y = x.rem_euclid(tau);
    if y > std::f64::consts::PI {
        y - tau
    } else {
        y
    }
}

/// Phase correction that best aligns `k` with `target`, fitted exactly on a
/// maximal independent set of entries where both are nonzero.
pub fn fit_output_phases(k: &KrausOperator, target: &KrausOperator) -> PhaseCorrection {
    let modes = target
        .basis_out
        .first()
        .or(k.basis_out.first())
        .map_or(0, Occupation::len);
    let scale = target.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs = Vec::new();
    for out in union_out(k, target) {
        for col in 0..target.basis_in.len().min(k.basis_in.len()) {
            let tv = target.entry(&out, col);
            let kv = k.entry(&out, col);
            if tv.norm() <= 1e-12 * scale || kv.norm() <= 1e-14 {
                continue;
            }
            let mut row = vec![1.0];
            row.extend(out.counts().iter().map(|&n| f64::from(n)));
            let mut trial = rows.clone();
            trial.push(row);
            if rank(&trial) > rows.len() {
                rows = trial;
                rhs.push(wrap(kv.arg() - tv.arg()));
            }
        }
    }
    if rows.is_empty() {
        return PhaseCorrection {
            global: 0.0,
            per_mode: vec![0.0; modes],
        };
    }
    let a = DMatrix::from_fn(rows.len(), modes + 1, |r, c| rows[r][c]);
    let b = DVector::from_vec(rhs);
    let x = a.svd(true, true).solve(&b, 1e-12).expect("svd with both factors");
    // The fitted phases describe what the circuit added; the correction undoes them.
    PhaseCorrection {
        global: -x[0],
        per_mode: x.iter().skip(1).map(|v| -v).collect(),
    }
}

fn rank(rows: &[Vec<f64>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let m = DMatrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c]);
    m.rank(1e-9)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternFit {
    pub pattern: DetectionPattern,
    pub correction: PhaseCorrection,
    /// Real amplitude s with corrected K ≈ s·target.
    pub scale: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KrausComparison {
    pub fits: Vec<PatternFit>,
    pub max_deviation: f64,
    /// Σ s²; 1 when the patterns together reproduce the target exactly.
    pub scale_norm_sq: f64,
}

fn fit_one(k: &KrausOperator, target: &KrausOperator) -> (PhaseCorrection, f64, f64) {
    let corr = fit_output_phases(k, target);
    if k.basis_in != target.basis_in {
        return (corr, 0.0, f64::INFINITY);
    }
    let outs = union_out(k, target);
    let corrected: Vec<(C64, C64)> = outs
        .iter()
        .flat_map(|o| (0..target.basis_in.len()).map(move |c| (o, c)))
        .map(|(o, c)| (k.entry(o, c) * C64::from_polar(1.0, corr.phase(o)), target.entry(o, c)))
        .collect();
    let tt: f64 = corrected.iter().map(|(_, t)| t.norm_sqr()).sum();
    let s = if tt > 0.0 {
        corrected.iter().map(|(kv, t)| (t.conj() * kv).re).sum::<f64>() / tt
    } else {
        0.0
    };
    let dev = corrected.iter().map(|(kv, t)| (kv - t * s).norm()).fold(0.0, f64::max);
    (corr, s, dev)
}

/// Compares per-pattern operators with a closed form, each modulo its own
/// output phase correction and a real scale.
pub fn compare_kraus(ks: &[(DetectionPattern, KrausOperator)], target: &KrausOperator) -> KrausComparison {
    let fits: Vec<PatternFit> = ks
        .iter()
        .map(|(p, k)| {
            let (correction, scale, deviation) = fit_one(k, target);
            PatternFit {
                pattern: p.clone(),
                correction,
                scale,
                deviation,
            }
        })
        .collect();
    KrausComparison {
        max_deviation: fits.iter().map(|f| f.deviation).fold(0.0, f64::max),
        scale_norm_sq: fits.iter().map(|f| f.scale * f.scale).sum(),
        fits,
    }
}
