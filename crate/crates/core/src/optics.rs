//! Passive linear optics on Fock states.
//!
//! A [`ModeTransform`] is a unitary `U` acting on a subset of modes through
//! the substitution a†ⱼ → Σₖ Uₖⱼ a†ₖ. [`apply`] expands that substitution
//! directly; [`amplitude_oracle`] computes the same transition amplitudes
//! from matrix permanents and is used to cross-check it.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::{binomial, Branch, BranchEnsemble, FockState, Occupation};

pub const UNITARITY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum TransformKind {
    /// Real orthogonal splitter [[√t, √(1−t)], [√(1−t), −√t]].
    Beamsplitter { t: f64 },
    /// 50:50 splitter [[1, i], [i, 1]]/√2.
    Symmetric50,
    /// Inverse of [`TransformKind::Symmetric50`].
    Symmetric50Inverse,
    Fourier,
    /// Polarization rotation [[cos θ, −sin θ], [sin θ, cos θ]].
    Rotation { angle: f64 },
    PhaseShift { phases: Vec<f64> },
    Identity,
    Custom,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeTransform {
    matrix: DMatrix<C64>,
    modes: Vec<usize>,
    kind: TransformKind,
}

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn check_fraction(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            min: 0.0,
            max: 1.0,
        })
    }
}

impl ModeTransform {
    fn local(matrix: DMatrix<C64>, kind: TransformKind) -> Self {
        let modes = (0..matrix.nrows()).collect();
        Self {
            matrix,
            modes,
            kind,
        }
    }

    /// Arbitrary unitary; rejected if ‖U†U − I‖_max exceeds the tolerance.
    pub fn custom(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::TransformShape {
                matrix: matrix.nrows(),
                modes: matrix.ncols(),
            });
        }
        let t = Self::local(matrix, TransformKind::Custom);
        let dev = t.unitarity_error();
        if dev > UNITARITY_TOLERANCE {
            return Err(Error::NotUnitary(dev));
        }
        Ok(t)
    }

    pub fn identity(m: usize) -> Self {
        Self::local(DMatrix::identity(m, m), TransformKind::Identity)
    }

    /// Moves the transform onto the given modes of a larger state.
    pub fn on(mut self, modes: &[usize]) -> Result<Self> {
        if modes.len() != self.matrix.nrows() {
            return Err(Error::TransformShape {
                matrix: self.matrix.nrows(),
                modes: modes.len(),
            });
        }
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].contains(m) {
                return Err(Error::DuplicateMode(*m));
            }
        }
        self.modes = modes.to_vec();
        Ok(self)
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn kind(&self) -> &TransformKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// ‖U†U − I‖_max
    pub fn unitarity_error(&self) -> f64 {
        let n = self.dim();
        let d = self.matrix.adjoint() * &self.matrix - DMatrix::<C64>::identity(n, n);
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            modes: self.modes.clone(),
            kind: TransformKind::Custom,
        }
    }

    /// The transform `next · self`, embedded on the union of both mode sets.
    pub fn then(&self, next: &ModeTransform) -> Self {
        let mut modes = self.modes.clone();
        for m in &next.modes {
            if !modes.contains(m) {
                modes.push(*m);
            }
        }
        let embed = |t: &ModeTransform| {
            let n = modes.len();
            let mut e = DMatrix::<C64>::identity(n, n);
            let idx: Vec<usize> = t
                .modes
                .iter()
                .map(|m| modes.iter().position(|x| x == m).unwrap())
                .collect();
            for (r, &i) in idx.iter().enumerate() {
                for (c, &j) in idx.iter().enumerate() {
                    e[(i, j)] = t.matrix[(r, c)];
                }
            }
            e
        };
        let matrix = embed(next) * embed(self);
        Self {
            matrix,
            modes,
            kind: TransformKind::Custom,
        }
    }
}

/// Beamsplitter of transmissivity `t` in the real orthogonal convention.
pub fn beamsplitter(t: f64) -> Result<ModeTransform> {
    check_fraction("transmissivity", t)?;
    let (a, b) = (t.sqrt(), (1.0 - t).sqrt());
    Ok(ModeTransform::local(
        DMatrix::from_row_slice(2, 2, &[re(a), re(b), re(b), re(-a)]),
        TransformKind::Beamsplitter { t },
    ))
}

pub fn symmetric_splitter() -> ModeTransform {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let i = C64::new(0.0, h);
    ModeTransform::local(
        DMatrix::from_row_slice(2, 2, &[re(h), i, i, re(h)]),
        TransformKind::Symmetric50,
    )
}

pub fn symmetric_splitter_inverse() -> ModeTransform {
    let mut t = symmetric_splitter();
    t.matrix = t.matrix.adjoint();
    t.kind = TransformKind::Symmetric50Inverse;
    t
}

/// Discrete Fourier transform on `m` modes, entries ω^{jk}/√m.
pub fn fourier(m: usize) -> Result<ModeTransform> {
    if m == 0 {
        return Err(Error::OutOfRange {
            name: "Fourier size",
            value: 0.0,
            min: 1.0,
            max: f64::INFINITY,
        });
    }
    let norm = 1.0 / (m as f64).sqrt();
    let matrix = DMatrix::from_fn(m, m, |j, k| {
        C64::from_polar(norm, 2.0 * PI * ((j * k) % m) as f64 / m as f64)
    });
    Ok(ModeTransform::local(matrix, TransformKind::Fourier))
}

pub fn rotation(angle: f64) -> ModeTransform {
    let (s, c) = angle.sin_cos();
    ModeTransform::local(
        DMatrix::from_row_slice(2, 2, &[re(c), re(-s), re(s), re(c)]),
        TransformKind::Rotation { angle },
    )
}

pub fn phase_shifter(phases: &[f64]) -> ModeTransform {
    let diag: Vec<C64> = phases.iter().map(|&p| C64::from_polar(1.0, p)).collect();
    ModeTransform::local(
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)),
        TransformKind::PhaseShift {
            phases: phases.to_vec(),
        },
    )
}

/// Unitary Q factor of a matrix with entries uniform in the unit square.
/// Not Haar distributed; good enough for randomized cross-checks.
pub fn random_unitary<R: rand::Rng + ?Sized>(m: usize, rng: &mut R) -> ModeTransform {
    let a = DMatrix::from_fn(m, m, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    ModeTransform::local(a.qr().q(), TransformKind::Custom)
}

/// Output amplitudes of ∏ⱼ (Σₖ Uₖⱼ a†ₖ)^{nⱼ}/√(nⱼ!) |0⟩ on the local modes.
fn expand_local(u: &DMatrix<C64>, input: &[u8]) -> Vec<(Vec<u8>, C64)> {
    let m = input.len();
    let mut poly: BTreeMap<Vec<u8>, C64> = BTreeMap::new();
    poly.insert(vec![0; m], re(1.0));
    for (j, &nj) in input.iter().enumerate() {
        for _ in 0..nj {
            let mut next: BTreeMap<Vec<u8>, C64> = BTreeMap::new();
            for (mono, c) in &poly {
                for k in 0..m {
                    let ukj = u[(k, j)];
                    if ukj == C64::default() {
                        continue;
                    }
                    let mut mk = mono.clone();
                    mk[k] += 1;
                    *next.entry(mk).or_default() += c * ukj;
                }
            }
            poly = next;
        }
    }
    let in_norm: f64 = input.iter().map(|&n| crate::fock::factorial(n as u32)).product();
    poly.into_iter()
        .map(|(mono, c)| {
            let out_norm: f64 = mono.iter().map(|&n| crate::fock::factorial(n as u32)).product();
            let amp = c * (out_norm / in_norm).sqrt();
            (mono, amp)
        })
        .collect()
}

/// Evolves `s` through `u`; untouched modes are left alone.
pub fn apply(u: &ModeTransform, s: &FockState) -> Result<FockState> {
    s.check_modes(&u.modes)?;
    let mut cache: BTreeMap<Vec<u8>, Vec<(Vec<u8>, C64)>> = BTreeMap::new();
    let mut terms: Vec<(Occupation, C64)> = Vec::new();
    for (occ, amp) in s.terms() {
        let local: Vec<u8> = u.modes.iter().map(|&m| occ.get(m)).collect();
        let out = cache
            .entry(local.clone())
            .or_insert_with(|| expand_local(&u.matrix, &local));
        for (lo, a) in out.iter() {
            let mut v = occ.counts().to_vec();
            for (&m, &n) in u.modes.iter().zip(lo) {
                v[m] = n;
            }
            terms.push((Occupation::from(v), amp * a));
        }
    }
    Ok(s.rebuilt(s.mode_count(), terms))
}

/// Permanent by Ryser's formula.
pub fn permanent(a: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    if n == 0 {
        return re(1.0);
    }
    let mut total = C64::default();
    for subset in 1u32..(1u32 << n) {
        let mut prod = re(1.0);
        for i in 0..n {
            let row: C64 = (0..n).filter(|j| subset >> j & 1 == 1).map(|j| a[(i, j)]).sum();
            prod *= row;
        }
        let sign = if (n as u32 - subset.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
        total += prod * sign;
    }
    total
}

/// ⟨out|U|in⟩ = Per(U[out, in]) / √(∏ inᵢ! ∏ outⱼ!), on the transform's local modes.
pub fn amplitude_oracle(u: &ModeTransform, input: &Occupation, output: &Occupation) -> Result<C64> {
    for occ in [input, output] {
        if occ.len() != u.dim() {
            return Err(Error::ModeCountMismatch {
                expected: u.dim(),
                found: occ.len(),
            });
        }
    }
    if input.total() != output.total() {
        return Err(Error::PhotonNumberMismatch {
            input: input.total(),
            output: output.total(),
        });
    }
    let expand = |occ: &Occupation| -> Vec<usize> {
        occ.counts()
            .iter()
            .enumerate()
            .flat_map(|(m, &n)| std::iter::repeat(m).take(n as usize))
            .collect()
    };
    let (cols, rows) = (expand(input), expand(output));
    let n = cols.len();
    let sub = DMatrix::from_fn(n, n, |r, c| u.matrix[(rows[r], cols[c])]);
    let norm = (input.factorial_product() * output.factorial_product()).sqrt();
    Ok(permanent(&sub) / norm)
}

/// Pure loss on one mode: a beamsplitter to a vacuum environment mode whose
/// photon number is then read out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSpec {
    eta: f64,
    mode: usize,
}

impl LossSpec {
    pub fn new(eta: f64, mode: usize) -> Result<Self> {
        check_fraction("eta", eta)?;
        Ok(Self { eta, mode })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn mode(&self) -> usize {
        self.mode
    }
}

/// Splits every branch by the number of photons lost from the target mode.
/// Sub-branch states are normalized; their weights carry ‖Eₗψ‖².
pub fn loss(l: &LossSpec, e: &BranchEnsemble) -> Result<BranchEnsemble> {
    if l.eta == 1.0 {
        return Ok(e.clone());
    }
    let mut out = Vec::new();
    for b in e.branches() {
        let s = &b.state;
        s.check_modes(&[l.mode])?;
        let max_n = s.terms().map(|(o, _)| o.get(l.mode)).max().unwrap_or(0);
        for lost in 0..=max_n {
            let terms = s.terms().filter(|(o, _)| o.get(l.mode) >= lost).map(|(o, a)| {
                let n = o.get(l.mode) as u32;
                let k = lost as u32;
                let f = binomial(n, k) * l.eta.powi((n - k) as i32) * (1.0 - l.eta).powi(k as i32);
                let mut v = o.counts().to_vec();
                v[l.mode] -= lost;
                (Occupation::from(v), a * f.sqrt())
            });
            let sub = s.rebuilt(s.mode_count(), terms);
            let q = sub.norm_sq();
            if let Some(state) = sub.normalized() {
                out.push(Branch {
                    weight: b.weight * q,
                    state,
                });
            }
        }
    }
    Ok(BranchEnsemble::from_parts(out, e.truncation_weight()))
}

/// Same loss on several modes.
pub fn loss_on_modes(eta: f64, modes: &[usize], e: &BranchEnsemble) -> Result<BranchEnsemble> {
    let mut cur = e.clone();
    for &m in modes {
        cur = loss(&LossSpec::new(eta, m)?, &cur)?;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn transparent_splitter_is_diagonal() {
        let u = beamsplitter(1.0).unwrap();
        assert_eq!(u.matrix()[(0, 1)], re(0.0));
        assert_eq!(u.matrix()[(0, 0)], re(1.0));
        assert_eq!(u.matrix()[(1, 1)], re(-1.0));
    }

    #[test]
    fn splitters_are_unitary() {
        for t in [0.0, 0.3, 0.5, 0.7, 1.0] {
            assert!(beamsplitter(t).unwrap().unitarity_error() < UNITARITY_TOLERANCE);
        }
        assert!(symmetric_splitter().unitarity_error() < UNITARITY_TOLERANCE);
        assert!(beamsplitter(1.2).is_err());
        assert!(beamsplitter(-0.1).is_err());
    }

    #[test]
    fn fourier_small_sizes() {
        assert_eq!(fourier(1).unwrap().matrix()[(0, 0)], re(1.0));
        let f2 = fourier(2).unwrap();
        let h = FRAC_1_SQRT_2;
        let expect = [h, h, h, -h];
        for (z, e) in f2.matrix().transpose().iter().zip(expect) {
            assert!((z - re(e)).norm() < 1e-15);
        }
        assert!(fourier(4).unwrap().unitarity_error() < 1e-14);
        assert!(fourier(0).is_err());
    }

    #[test]
    fn hong_ou_mandel_bunching() {
        let u = beamsplitter(0.5).unwrap();
        let out = apply(&u, &FockState::basis([1, 1].into())).unwrap();
        assert!(out.amplitude(&[1, 1].into()).norm() < 1e-12);
        assert!((out.amplitude(&[2, 0].into()) - re(FRAC_1_SQRT_2)).norm() < 1e-12);
        assert!((out.amplitude(&[0, 2].into()) + re(FRAC_1_SQRT_2)).norm() < 1e-12);
    }

    #[test]
    fn single_photon_substitution() {
        let t: f64 = 0.7;
        let out = apply(&beamsplitter(t).unwrap(), &FockState::basis([1, 0].into())).unwrap();
        assert!((out.amplitude(&[1, 0].into()) - re(t.sqrt())).norm() < 1e-15);
        assert!((out.amplitude(&[0, 1].into()) - re((1.0 - t).sqrt())).norm() < 1e-15);
    }

    #[test]
    fn identity_leaves_state_alone() {
        let s = FockState::from_terms(3, [([1, 2, 0].into(), re(0.6)), ([0, 0, 3].into(), re(0.8))]).unwrap();
        let out = apply(&ModeTransform::identity(2).on(&[0, 2]).unwrap(), &s).unwrap();
        assert!((out.inner(&s) - re(1.0)).norm() < 1e-14);
    }

    #[test]
    fn apply_rejects_bad_modes() {
        let u = beamsplitter(0.5).unwrap().on(&[0, 3]).unwrap();
        assert!(apply(&u, &FockState::vacuum(2)).is_err());
        assert!(beamsplitter(0.5).unwrap().on(&[1, 1]).is_err());
    }

    #[test]
    fn oracle_small_cases() {
        let id = ModeTransform::identity(1);
        let a = amplitude_oracle(&id, &[3].into(), &[3].into()).unwrap();
        assert!((a - re(1.0)).norm() < 1e-14);
        let bs = beamsplitter(0.5).unwrap();
        let a = amplitude_oracle(&bs, &[1, 1].into(), &[1, 1].into()).unwrap();
        assert!(a.norm() < 1e-15);
        let a = amplitude_oracle(&bs, &[1, 1].into(), &[2, 0].into()).unwrap();
        assert!((a.norm() - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(amplitude_oracle(&bs, &[1, 1].into(), &[1, 0].into()).is_err());
    }

    #[test]
    fn single_photon_loss() {
        let e = BranchEnsemble::pure(FockState::basis([1].into()));
        let out = loss(&LossSpec::new(0.8, 0).unwrap(), &e).unwrap();
        let w: Vec<(u8, f64)> = out
            .branches()
            .iter()
            .map(|b| (b.state.terms().next().unwrap().0.get(0), b.weight))
            .collect();
        assert_eq!(w.len(), 2);
        assert!((w[0].1 - 0.8).abs() < 1e-15 && w[0].0 == 1);
        assert!((w[1].1 - 0.2).abs() < 1e-15 && w[1].0 == 0);
    }

    #[test]
    fn two_photon_loss_is_binomial() {
        let eta = 0.6;
        let e = BranchEnsemble::pure(FockState::basis([2].into()));
        let out = loss(&LossSpec::new(eta, 0).unwrap(), &e).unwrap();
        let expect = [(2, eta * eta), (1, 2.0 * eta * (1.0 - eta)), (0, (1.0 - eta) * (1.0 - eta))];
        for (b, (n, w)) in out.branches().iter().zip(expect) {
            assert_eq!(b.state.terms().next().unwrap().0.get(0), n);
            assert!((b.weight - w).abs() < 1e-15);
        }
    }

    #[test]
    fn total_loss_leaves_vacuum() {
        let s = FockState::from_terms(2, [([2, 1].into(), re(0.6)), ([0, 1].into(), re(0.8))]).unwrap();
        let out = loss(&LossSpec::new(0.0, 0).unwrap(), &BranchEnsemble::pure(s)).unwrap();
        for b in out.branches() {
            assert!(b.state.terms().all(|(o, _)| o.get(0) == 0));
        }
        assert!((out.total_mass() - 1.0).abs() < 1e-14);
        assert!(LossSpec::new(1.5, 0).is_err());
    }

    #[test]
    fn lossless_channel_is_identity() {
        let e = BranchEnsemble::pure(FockState::basis([2, 0].into()));
        assert_eq!(loss(&LossSpec::new(1.0, 0).unwrap(), &e).unwrap(), e);
    }
}
