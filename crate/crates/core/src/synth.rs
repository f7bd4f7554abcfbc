//! Sampling pieces from a trained generator, plus the lint and phrase
//! statistics used to inspect them.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use thiserror::Error;

use crate::augment::ClassLabel;
use crate::corpus::{decode_sequence, Piece};
use crate::gan::{condition_batch, noise_batch, GanError, Generator};
use crate::rng;
use crate::vocab::{TokenLabel, VocabError, BREATH_LABEL, END_LABEL, START_LABEL};

pub const LINT_HEADER: &str = "piece,kind,position,detail";
pub const STATS_HEADER: &str = "piece,length,num_phrases,min_phrase,max_phrase";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("sample count must be at least 1")]
    InvalidCount,
    #[error("temperature {0} must be finite and non-negative")]
    InvalidTemperature(f64),
    #[error("run threshold {0} must be at least 2")]
    InvalidThreshold(usize),
    #[error("no pieces to summarise")]
    NoPieces,
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRequest {
    pub count: usize,
    pub class: ClassLabel,
    /// Standard deviation of the input noise.
    pub temperature: f64,
    pub seed: u64,
}

impl SampleRequest {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.count == 0 {
            return Err(SynthError::InvalidCount);
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(SynthError::InvalidTemperature(self.temperature));
        }
        Ok(())
    }
}

/// Draws `req.count` pieces. Each piece has its own noise stream, so the
/// result does not depend on thread scheduling. Framing is not repaired.
pub fn sample(generator: &Generator, req: &SampleRequest) -> Result<Vec<Piece>, SynthError> {
    req.validate()?;
    let cfg = &generator.cfg;
    let cond = condition_batch(&[req.class], cfg.num_classes);
    (0..req.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::indexed_stream("sample", req.seed, i as u64);
            let z = noise_batch(1, cfg.noise_len, req.temperature, &mut rng);
            let out = generator.generate(&z, &cond)?;
            let labels = decode_sequence(out.data())?;
            Ok(Piece::unchecked(
                format!("sample_c{}_{i:03}", req.class),
                labels,
            ))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LintKind {
    MissingStart,
    ConsecutiveBreath,
    TokenRun,
    NoEnd,
}

impl fmt::Display for LintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LintKind::MissingStart => "MissingStart",
            LintKind::ConsecutiveBreath => "ConsecutiveBreath",
            LintKind::TokenRun => "TokenRun",
            LintKind::NoEnd => "NoEnd",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LintFinding {
    pub kind: LintKind,
    pub position: usize,
    pub detail: String,
}

/// Flags repeated breaths, runs of one symbol at least `run_threshold` long
/// (reported at the run's first index) and broken framing. Findings are
/// sorted by position.
pub fn lint(piece: &Piece, run_threshold: usize) -> Result<Vec<LintFinding>, SynthError> {
    if run_threshold < 2 {
        return Err(SynthError::InvalidThreshold(run_threshold));
    }
    let labels = piece.labels();
    let mut out = Vec::new();
    if labels.first() != Some(&START_LABEL) {
        out.push(LintFinding {
            kind: LintKind::MissingStart,
            position: 0,
            detail: match labels.first() {
                Some(l) => format!("starts with label {l}"),
                None => "piece is empty".into(),
            },
        });
    }
    for (i, w) in labels.windows(2).enumerate() {
        if w[0] == BREATH_LABEL && w[1] == BREATH_LABEL {
            out.push(LintFinding {
                kind: LintKind::ConsecutiveBreath,
                position: i + 1,
                detail: "breath follows breath".into(),
            });
        }
    }
    let mut start = 0;
    while start < labels.len() {
        let l = labels[start];
        let run = labels[start..].iter().take_while(|&&x| x == l).count();
        if !l.is_reserved() && run >= run_threshold {
            out.push(LintFinding {
                kind: LintKind::TokenRun,
                position: start,
                detail: format!("label {l} repeated {run} times"),
            });
        }
        start += run;
    }
    if !labels.contains(&END_LABEL) {
        out.push(LintFinding {
            kind: LintKind::NoEnd,
            position: labels.len().saturating_sub(1),
            detail: "no END label".into(),
        });
    }
    out.sort_by_key(|f| (f.position, f.kind));
    Ok(out)
}

/// Replaces each run of a repeated non-reserved label with a single token.
pub fn collapse_runs(piece: &Piece) -> Piece {
    let mut labels: Vec<TokenLabel> = Vec::with_capacity(piece.len());
    for &l in piece.labels() {
        if l.is_reserved() || labels.last() != Some(&l) {
            labels.push(l);
        }
    }
    Piece::unchecked(piece.name(), labels)
}

pub fn lint_report(findings: &[(&Piece, Vec<LintFinding>)]) -> String {
    let mut out = format!("{LINT_HEADER}\n");
    for (piece, fs) in findings {
        for f in fs {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                piece.name(),
                f.kind,
                f.position,
                f.detail
            );
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PieceStats {
    pub name: String,
    pub length: usize,
    /// Interior split on BREATH; adjacent breaths give empty phrases.
    pub phrase_lengths: Vec<usize>,
    pub breath_count: usize,
    /// START and END tokens stripped before splitting (0 to 2).
    pub framing_tokens: usize,
    pub distinct_token_count: usize,
}

pub fn piece_stats(piece: &Piece) -> PieceStats {
    let labels = piece.labels();
    let mut interior = labels;
    if interior.first() == Some(&START_LABEL) {
        interior = &interior[1..];
    }
    if interior.last() == Some(&END_LABEL) {
        interior = &interior[..interior.len() - 1];
    }
    let phrase_lengths = if interior.is_empty() {
        Vec::new()
    } else {
        interior
            .split(|&l| l == BREATH_LABEL)
            .map(<[_]>::len)
            .collect()
    };
    let mut distinct: Vec<TokenLabel> = labels.to_vec();
    distinct.sort();
    distinct.dedup();
    PieceStats {
        name: piece.name().to_string(),
        length: labels.len(),
        breath_count: interior.iter().filter(|&&l| l == BREATH_LABEL).count(),
        framing_tokens: labels.len() - interior.len(),
        phrase_lengths,
        distinct_token_count: distinct.len(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateStats {
    pub min_length: usize,
    pub max_length: usize,
    pub mean_length: f64,
    /// Phrase length to number of phrases with that length.
    pub phrase_histogram: BTreeMap<usize, usize>,
}

pub fn stats(pieces: &[Piece]) -> Result<(Vec<PieceStats>, AggregateStats), SynthError> {
    if pieces.is_empty() {
        return Err(SynthError::NoPieces);
    }
    let per: Vec<PieceStats> = pieces.iter().map(piece_stats).collect();
    let lengths = per.iter().map(|s| s.length);
    let mut phrase_histogram = BTreeMap::new();
    for &p in per.iter().flat_map(|s| &s.phrase_lengths) {
        *phrase_histogram.entry(p).or_insert(0) += 1;
    }
    let agg = AggregateStats {
        min_length: lengths.clone().min().unwrap(),
        max_length: lengths.clone().max().unwrap(),
        mean_length: lengths.sum::<usize>() as f64 / per.len() as f64,
        phrase_histogram,
    };
    Ok((per, agg))
}

pub fn stats_report(per: &[PieceStats]) -> String {
    let mut out = format!("{STATS_HEADER}\n");
    for s in per {
        let opt = |v: Option<&usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.name,
            s.length,
            s.phrase_lengths.len(),
            opt(s.phrase_lengths.iter().min()),
            opt(s.phrase_lengths.iter().max()),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn piece(ids: &[i64]) -> Piece {
        Piece::unchecked(
            "p",
            ids.iter().map(|&i| TokenLabel::new(i).unwrap()).collect(),
        )
    }

    fn kinds(f: &[LintFinding]) -> Vec<(LintKind, usize)> {
        f.iter().map(|f| (f.kind, f.position)).collect()
    }

    #[test]
    fn lint_examples() {
        let f = lint(&piece(&[0, 22, 22, 44]), 4).unwrap();
        assert_eq!(kinds(&f), [(LintKind::ConsecutiveBreath, 2)]);
        let f = lint(&piece(&[0, 15, 15, 15, 15, 44]), 4).unwrap();
        assert_eq!(kinds(&f), [(LintKind::TokenRun, 1)]);
        assert!(f[0].detail.contains('4'));
        assert!(lint(&piece(&[0, 3, 22, 5, 44]), 4).unwrap().is_empty());
        assert!(lint(&piece(&[0, 15, 15, 15, 44]), 4).unwrap().is_empty());
        assert_eq!(
            kinds(&lint(&piece(&[7, 22, 22, 22, 3]), 4).unwrap()),
            [
                (LintKind::MissingStart, 0),
                (LintKind::ConsecutiveBreath, 2),
                (LintKind::ConsecutiveBreath, 3),
                (LintKind::NoEnd, 4),
            ]
        );
        // Runs of reserved labels are breaths or padding, not symbol runs.
        assert!(kinds(&lint(&piece(&[0, 44, 44, 44, 44]), 2).unwrap()).is_empty());
        assert!(matches!(
            lint(&piece(&[0, 44]), 1),
            Err(SynthError::InvalidThreshold(1))
        ));
    }

    #[test]
    fn collapsing_runs_clears_token_runs() {
        let p = piece(&[0, 5, 5, 5, 5, 22, 22, 9, 9, 44]);
        let c = collapse_runs(&p);
        assert_eq!(c.labels(), piece(&[0, 5, 22, 22, 9, 44]).labels());
        assert!(lint(&c, 2)
            .unwrap()
            .iter()
            .all(|f| f.kind != LintKind::TokenRun));
    }

    #[test]
    fn phrase_examples() {
        assert_eq!(
            piece_stats(&piece(&[0, 3, 22, 5, 5, 44])).phrase_lengths,
            [1, 2]
        );
        assert!(piece_stats(&piece(&[0, 44])).phrase_lengths.is_empty());
        assert_eq!(
            piece_stats(&piece(&[0, 22, 22, 44])).phrase_lengths,
            [0, 0, 0]
        );
        let s = piece_stats(&piece(&[3, 22, 5]));
        assert_eq!(
            (s.phrase_lengths.as_slice(), s.framing_tokens),
            (&[1, 1][..], 0)
        );
    }

    #[test]
    fn aggregate_and_reports() {
        let pieces = [piece(&[0, 3, 22, 5, 5, 44]), piece(&[0, 44])];
        let (per, agg) = stats(&pieces).unwrap();
        assert_eq!(
            (agg.min_length, agg.max_length, agg.mean_length),
            (2, 6, 4.0)
        );
        assert_eq!(agg.phrase_histogram, BTreeMap::from([(1, 1), (2, 1)]));
        assert_eq!(
            stats_report(&per),
            "piece,length,num_phrases,min_phrase,max_phrase\np,6,2,1,2\np,2,0,,\n"
        );
        assert!(matches!(stats(&[]), Err(SynthError::NoPieces)));

        let p = piece(&[0, 22, 22, 44]);
        let f = lint(&p, 4).unwrap();
        assert_eq!(
            lint_report(&[(&p, f)]),
            "piece,kind,position,detail\np,ConsecutiveBreath,2,breath follows breath\n"
        );
    }
}
