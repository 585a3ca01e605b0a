//! Plain-data circuit descriptions and their line-oriented text form.
//!
//! ```text
//! circuit ralph_lund
//! modes 3
//! input 0
//! ancilla 1:1
//! beamsplitter 1 2 t=0.3
//! beamsplitter 0 2 t=0.5
//! detect 0 2
//! accept 10 01
//! output 1
//! ```

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::{BranchEnsemble, FockState, Occupation};
use crate::optics::{self, LossSpec, ModeTransform, TransformKind};

#[derive(Clone, Debug, PartialEq)]
pub enum Element {
    Transform(ModeTransform),
    Loss(LossSpec),
}

/// Photon counts required on a set of detector modes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DetectionPattern {
    pub detector_modes: Vec<usize>,
    pub counts: Vec<u8>,
}

impl DetectionPattern {
    pub fn new(detector_modes: Vec<usize>, counts: Vec<u8>) -> Result<Self> {
        if detector_modes.len() != counts.len() {
            return Err(Error::ModeCountMismatch {
                expected: detector_modes.len(),
                found: counts.len(),
            });
        }
        for (i, m) in detector_modes.iter().enumerate() {
            if detector_modes[..i].contains(m) {
                return Err(Error::DuplicateMode(*m));
            }
        }
        Ok(Self {
            detector_modes,
            counts,
        })
    }
}

impl fmt::Display for DetectionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.counts {
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Which detector modes are read out, which count patterns raise the flag,
/// and which surviving modes carry the output.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionSpec {
    pub detector_modes: Vec<usize>,
    pub accepted: Vec<Vec<u8>>,
    pub output_modes: Vec<usize>,
}

impl DetectionSpec {
    pub fn patterns(&self) -> Vec<DetectionPattern> {
        self.accepted
            .iter()
            .map(|c| DetectionPattern {
                detector_modes: self.detector_modes.clone(),
                counts: c.clone(),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircuitDescription {
    pub name: String,
    pub mode_count: usize,
    pub input_modes: Vec<usize>,
    /// Ideal ancilla preparation: (mode, photons); every other mode starts in vacuum.
    pub ancilla: Vec<(usize, u8)>,
    pub elements: Vec<Element>,
    pub detection: DetectionSpec,
}

impl CircuitDescription {
    /// Places `input` on the input modes next to the ideal ancillas.
    pub fn prepare(&self, input: &FockState) -> Result<FockState> {
        if input.mode_count() != self.input_modes.len() {
            return Err(Error::ModeCountMismatch {
                expected: self.input_modes.len(),
                found: input.mode_count(),
            });
        }
        let mut base = vec![0u8; self.mode_count];
        for &(m, n) in &self.ancilla {
            base[m] = n;
        }
        let terms = input.terms().map(|(occ, a)| {
            let mut v = base.clone();
            for (&m, &n) in self.input_modes.iter().zip(occ.counts()) {
                v[m] = n;
            }
            (Occupation::from(v), *a)
        });
        FockState::from_terms(self.mode_count, terms)
    }

    /// Runs the unitary part of the circuit on a pure state.
    pub fn evolve(&self, s: &FockState) -> Result<FockState> {
        let mut cur = s.clone();
        for el in &self.elements {
            match el {
                Element::Transform(u) => cur = optics::apply(u, &cur)?,
                Element::Loss(_) => return Err(Error::NonUnitaryCircuit),
            }
        }
        Ok(cur)
    }

    pub fn evolve_ensemble(&self, e: &BranchEnsemble) -> Result<BranchEnsemble> {
        let mut cur = e.clone();
        for el in &self.elements {
            cur = match el {
                Element::Transform(u) => cur.try_map(|s| optics::apply(u, s))?,
                Element::Loss(l) => optics::loss(l, &cur)?,
            };
        }
        Ok(cur)
    }

    pub fn is_unitary(&self) -> bool {
        self.elements.iter().all(|e| matches!(e, Element::Transform(_)))
    }

    /// Modes left after the detector modes are removed, in order.
    pub fn surviving_modes(&self) -> Vec<usize> {
        (0..self.mode_count)
            .filter(|m| !self.detection.detector_modes.contains(m))
            .collect()
    }

    /// Positions of the output modes among the surviving modes.
    pub fn output_positions(&self) -> Vec<usize> {
        let surv = self.surviving_modes();
        self.detection
            .output_modes
            .iter()
            .filter_map(|m| surv.iter().position(|s| s == m))
            .collect()
    }
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

impl fmt::Display for CircuitDescription {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "circuit {}", self.name)?;
        writeln!(f, "modes {}", self.mode_count)?;
        writeln!(f, "input {}", join(&self.input_modes))?;
        let anc: Vec<String> = self.ancilla.iter().map(|(m, n)| format!("{m}:{n}")).collect();
        writeln!(f, "ancilla {}", anc.join(" "))?;
        for el in &self.elements {
            match el {
                Element::Loss(l) => writeln!(f, "loss {} eta={}", l.mode(), l.eta())?,
                Element::Transform(u) => {
                    let modes = join(u.modes());
                    match u.kind() {
                        TransformKind::Beamsplitter { t } => writeln!(f, "beamsplitter {modes} t={t}")?,
                        TransformKind::Symmetric50 => writeln!(f, "symmetric50 {modes}")?,
                        TransformKind::Symmetric50Inverse => writeln!(f, "symmetric50inv {modes}")?,
                        TransformKind::Fourier => writeln!(f, "fourier {modes}")?,
                        TransformKind::Rotation { angle } => writeln!(f, "rotation {modes} angle={angle}")?,
                        TransformKind::PhaseShift { phases } => {
                            let p: Vec<String> = phases.iter().map(f64::to_string).collect();
                            writeln!(f, "phase {modes} phases={}", p.join(","))?
                        }
                        TransformKind::Identity => writeln!(f, "identity {modes}")?,
                        TransformKind::Custom => {
                            let m = u.matrix();
                            let entries: Vec<String> = (0..m.nrows())
                                .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
                                .map(|(r, c)| format!("{},{}", m[(r, c)].re, m[(r, c)].im))
                                .collect();
                            writeln!(f, "unitary {modes} matrix={}", entries.join(";"))?
                        }
                    }
                }
            }
        }
        writeln!(f, "detect {}", join(&self.detection.detector_modes))?;
        let acc: Vec<String> = self
            .detection
            .accepted
            .iter()
            .map(|p| p.iter().map(u8::to_string).collect::<String>())
            .collect();
        writeln!(f, "accept {}", acc.join(" "))?;
        writeln!(f, "output {}", join(&self.detection.output_modes))
    }
}

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::CircuitFormat {
        line,
        reason: reason.into(),
    }
}

fn parse_num<T: FromStr>(line: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| parse_err(line, format!("cannot parse '{s}'")))
}

fn split_args(line: usize, args: &[&str]) -> Result<(Vec<usize>, Option<(String, String)>)> {
    let mut modes = Vec::new();
    let mut param = None;
    for a in args {
        if let Some((k, v)) = a.split_once('=') {
            param = Some((k.to_string(), v.to_string()));
        } else {
            modes.push(parse_num(line, a)?);
        }
    }
    Ok((modes, param))
}

fn expect_param(line: usize, param: Option<(String, String)>, key: &str) -> Result<String> {
    match param {
        Some((k, v)) if k == key => Ok(v),
        _ => Err(parse_err(line, format!("missing {key}="))),
    }
}

impl FromStr for CircuitDescription {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut name = None;
        let mut mode_count = None;
        let mut input_modes = Vec::new();
        let mut ancilla = Vec::new();
        let mut elements = Vec::new();
        let mut detector_modes = Vec::new();
        let mut accepted = Vec::new();
        let mut output_modes = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut words = line.split_whitespace();
            let kind = words.next().unwrap();
            let args: Vec<&str> = words.collect();
            let with_modes = |u: ModeTransform, modes: &[usize]| -> Result<Element> {
                Ok(Element::Transform(u.on(modes).map_err(|e| parse_err(ln, e.to_string()))?))
            };
            match kind {
                "circuit" => name = Some(args.join(" ")),
                "modes" => mode_count = Some(parse_num(ln, args.first().copied().unwrap_or(""))?),
                "input" => input_modes = args.iter().map(|a| parse_num(ln, a)).collect::<Result<_>>()?,
                "ancilla" => {
                    for a in &args {
                        let (m, n) = a.split_once(':').ok_or_else(|| parse_err(ln, "expected mode:count"))?;
                        ancilla.push((parse_num(ln, m)?, parse_num(ln, n)?));
                    }
                }
                "detect" => detector_modes = args.iter().map(|a| parse_num(ln, a)).collect::<Result<_>>()?,
                "accept" => {
                    for a in &args {
                        let p = a
                            .chars()
                            .map(|c| c.to_digit(10).map(|d| d as u8))
                            .collect::<Option<Vec<u8>>>()
                            .ok_or_else(|| parse_err(ln, format!("bad pattern '{a}'")))?;
                        accepted.push(p);
                    }
                }
                "output" => output_modes = args.iter().map(|a| parse_num(ln, a)).collect::<Result<_>>()?,
                "loss" => {
                    let (modes, param) = split_args(ln, &args)?;
                    let eta: f64 = parse_num(ln, &expect_param(ln, param, "eta")?)?;
                    let mode = *modes.first().ok_or_else(|| parse_err(ln, "missing mode"))?;
                    elements.push(Element::Loss(
                        LossSpec::new(eta, mode).map_err(|e| parse_err(ln, e.to_string()))?,
                    ));
                }
                "beamsplitter" => {
                    let (modes, param) = split_args(ln, &args)?;
                    let t: f64 = parse_num(ln, &expect_param(ln, param, "t")?)?;
                    let u = optics::beamsplitter(t).map_err(|e| parse_err(ln, e.to_string()))?;
                    elements.push(with_modes(u, &modes)?);
                }
                "symmetric50" => elements.push(with_modes(optics::symmetric_splitter(), &split_args(ln, &args)?.0)?),
                "symmetric50inv" => {
                    elements.push(with_modes(optics::symmetric_splitter_inverse(), &split_args(ln, &args)?.0)?)
                }
                "fourier" => {
                    let modes = split_args(ln, &args)?.0;
                    let u = optics::fourier(modes.len()).map_err(|e| parse_err(ln, e.to_string()))?;
                    elements.push(with_modes(u, &modes)?);
                }
                "rotation" => {
                    let (modes, param) = split_args(ln, &args)?;
                    let angle: f64 = parse_num(ln, &expect_param(ln, param, "angle")?)?;
                    elements.push(with_modes(optics::rotation(angle), &modes)?);
                }
                "phase" => {
                    let (modes, param) = split_args(ln, &args)?;
                    let phases = expect_param(ln, param, "phases")?
                        .split(',')
                        .map(|p| parse_num(ln, p))
                        .collect::<Result<Vec<f64>>>()?;
                    elements.push(with_modes(optics::phase_shifter(&phases), &modes)?);
                }
                "identity" => {
                    let modes = split_args(ln, &args)?.0;
                    elements.push(with_modes(ModeTransform::identity(modes.len()), &modes)?);
                }
                "unitary" => {
                    let (modes, param) = split_args(ln, &args)?;
                    let entries = expect_param(ln, param, "matrix")?
                        .split(';')
                        .map(|z| {
                            let (r, i) = z.split_once(',').ok_or_else(|| parse_err(ln, "expected re,im"))?;
                            Ok(C64::new(parse_num(ln, r)?, parse_num(ln, i)?))
                        })
                        .collect::<Result<Vec<C64>>>()?;
                    let n = modes.len();
                    if entries.len() != n * n {
                        return Err(parse_err(ln, "matrix size does not match modes"));
                    }
                    let m = DMatrix::from_row_slice(n, n, &entries);
                    let u = ModeTransform::custom(m).map_err(|e| parse_err(ln, e.to_string()))?;
                    elements.push(with_modes(u, &modes)?);
                }
                other => return Err(parse_err(ln, format!("unknown element '{other}'"))),
            }
        }

        Ok(Self {
            name: name.ok_or_else(|| parse_err(0, "missing circuit line"))?,
            mode_count: mode_count.ok_or_else(|| parse_err(0, "missing modes line"))?,
            input_modes,
            ancilla,
            elements,
            detection: DetectionSpec {
                detector_modes,
                accepted,
                output_modes,
            },
        })
    }
}
