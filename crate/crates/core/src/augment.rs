//! Noise-based augmentation and the noise-class conditioning labels.
//!
//! A synthetic sample multiplies every non-framing value by an independent
//! factor from the open interval `(1 - N, 1 + N)` and squashes the result with
//! `tanh`. Zero (BREATH) is a fixed point, so phrase structure survives.

use std::fmt;
use std::io::Write;

use rand::distr::{Distribution, Uniform};
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{encode_piece_to, ContinuousSequence, Corpus, CorpusError, Piece};
use crate::rng::{self, Rng};
use crate::vocab::{token_to_value, Role};

pub const NUM_CLASSES: usize = 4;
pub const CLASS1_UPPER: f64 = 8.0 / 25.0;
pub const CLASS3_LOWER: f64 = 17.0 / 25.0;
pub const DEFAULT_PER_CLASS: usize = 10;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("noise factor {0} outside (0, 1]")]
    NoiseOutOfRange(f64),
    #[error("class label {0} outside 0..=3")]
    InvalidClass(i64),
    #[error("sequence does not encode piece {0:?}")]
    SequenceMismatch(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("sample CSV line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Multiplicative noise half-width, `0 < N <= 1`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct NoiseFactor(f64);

impl NoiseFactor {
    pub fn new(n: f64) -> Result<Self, AugmentError> {
        if n.is_finite() && n > 0.0 && n <= 1.0 {
            Ok(NoiseFactor(n))
        } else {
            Err(AugmentError::NoiseOutOfRange(n))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Conditioning class: 0 for real pieces, 1..=3 for increasing noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassLabel(u8);

impl ClassLabel {
    pub const REAL: ClassLabel = ClassLabel(0);

    pub fn new(c: i64) -> Result<Self, AugmentError> {
        if (0..NUM_CLASSES as i64).contains(&c) {
            Ok(ClassLabel(c as u8))
        } else {
            Err(AugmentError::InvalidClass(c))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = ClassLabel> {
        (0..NUM_CLASSES as u8).map(ClassLabel)
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub seq: ContinuousSequence,
    pub label: ClassLabel,
}

/// Class 1 for `N <= 8/25`, class 2 for `8/25 < N < 17/25`, class 3 above.
pub fn class_of_noise(n: f64) -> Result<ClassLabel, AugmentError> {
    let n = NoiseFactor::new(n)?.get();
    Ok(if n <= CLASS1_UPPER {
        ClassLabel(1)
    } else if n < CLASS3_LOWER {
        ClassLabel(2)
    } else {
        ClassLabel(3)
    })
}

/// Perturbs every position whose source token is not START or END.
/// Positions past the end of the piece are END padding and stay at 1.
pub fn augment_sequence(
    seq: &ContinuousSequence,
    piece: &Piece,
    noise: NoiseFactor,
    rng: &mut Rng,
) -> Result<ContinuousSequence, AugmentError> {
    let values = seq.values();
    let mismatch = || AugmentError::SequenceMismatch(piece.name().to_string());
    if values.len() < piece.len() {
        return Err(mismatch());
    }
    for (&v, &l) in values.iter().zip(piece.labels()) {
        if v != token_to_value(l).get() {
            return Err(mismatch());
        }
    }
    let n = noise.get();
    let lo = 1.0 - n;
    let hi = 1.0 + n;
    let factor = Uniform::new(lo, hi).expect("N > 0 gives a non-empty interval");
    let mut out = values.to_vec();
    for (v, &l) in out.iter_mut().zip(piece.labels()) {
        if matches!(Role::of(l), Role::Start | Role::End) {
            continue;
        }
        // Open interval: reject the closed lower endpoint.
        let r = loop {
            let r = factor.sample(rng);
            if r > lo && r < hi {
                break r;
            }
        };
        *v = (*v * r).tanh();
    }
    Ok(ContinuousSequence::new(out))
}

/// Draws a noise factor whose class is `class` (1..=3).
fn draw_noise_for(class: ClassLabel, rng: &mut Rng) -> NoiseFactor {
    let (lo, hi) = match class.get() {
        1 => (0.0, CLASS1_UPPER),
        2 => (CLASS1_UPPER, CLASS3_LOWER),
        3 => (CLASS3_LOWER, 1.0),
        _ => unreachable!("class 0 has no noise"),
    };
    let dist = Uniform::new_inclusive(lo, hi).expect("valid interval");
    loop {
        let n = dist.sample(rng);
        if matches!(class_of_noise(n), Ok(c) if c == class) {
            return NoiseFactor(n);
        }
    }
}

/// One class-0 sample per piece followed by `per_class` noisy variants per
/// class 1..=3. Each synthetic sample uses its own seed-derived stream, so the
/// result does not depend on thread scheduling.
pub fn build_augmented_dataset(
    corpus: &Corpus,
    seq_len: usize,
    per_class: usize,
    seed: u64,
) -> Result<Vec<LabeledSample>, AugmentError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus.into());
    }
    let encoded = corpus
        .pieces()
        .iter()
        .map(|p| encode_piece_to(p, seq_len))
        .collect::<Result<Vec<_>, _>>()?;

    let per_piece = 1 + 3 * per_class;
    let jobs: Vec<(usize, usize)> = (0..corpus.len())
        .flat_map(|p| (0..per_piece).map(move |k| (p, k)))
        .collect();
    jobs.par_iter()
        .map(|&(p, k)| {
            let seq = &encoded[p];
            if k == 0 {
                return Ok(LabeledSample {
                    seq: seq.clone(),
                    label: ClassLabel::REAL,
                });
            }
            let class = ClassLabel(1 + ((k - 1) / per_class) as u8);
            let mut rng = rng::indexed_stream("augment", seed, (p * per_piece + k) as u64);
            let noise = draw_noise_for(class, &mut rng);
            let seq = augment_sequence(seq, &corpus.pieces()[p], noise, &mut rng)?;
            Ok(LabeledSample { seq, label: class })
        })
        .collect()
}

/// Writes one sample per line: the class label, then every value.
pub fn write_samples<W: Write>(mut out: W, samples: &[LabeledSample]) -> std::io::Result<()> {
    for s in samples {
        write!(out, "{}", s.label)?;
        for v in s.seq.values() {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Inverse of [`write_samples`]. Every line must carry `seq_len` values.
pub fn read_samples(text: &str, seq_len: usize) -> Result<Vec<LabeledSample>, AugmentError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let err = |reason: String| AugmentError::Parse {
                line: i + 1,
                reason,
            };
            let mut fields = line.split(',').map(str::trim);
            let label: i64 = fields
                .next()
                .unwrap_or_default()
                .parse()
                .map_err(|_| err("bad class label".into()))?;
            let label = ClassLabel::new(label).map_err(|e| err(e.to_string()))?;
            let values = fields
                .map(|f| match f.parse::<f64>() {
                    Ok(v) if (-1.0..=1.0).contains(&v) => Ok(v),
                    _ => Err(err(format!("bad value {f:?}"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != seq_len {
                return Err(err(format!("{} values, expected {seq_len}", values.len())));
            }
            Ok(LabeledSample {
                seq: ContinuousSequence::new(values),
                label,
            })
        })
        .collect()
}
