//! Token inventory and the label <-> continuous value map.
//!
//! Every token carries an integer label in `0..=44`. The model sees each
//! label through the affine grid `(label - 22) / 22`, which pins START to
//! -1, BREATH to 0 and END to 1.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Number of distinct tokens, START and END included.
pub const VOCAB_SIZE: usize = 45;
pub const START_LABEL: TokenLabel = TokenLabel(0);
pub const BREATH_LABEL: TokenLabel = TokenLabel(22);
pub const END_LABEL: TokenLabel = TokenLabel(44);

const CENTRE: f64 = 22.0;

/// Manifest shipped with the crate.
pub const DEFAULT_MANIFEST: &str = include_str!("../data/default_vocab.csv");

#[derive(Debug, Error, PartialEq)]
pub enum VocabError {
    #[error("manifest has {0} entries, expected 45")]
    CountMismatch(usize),
    #[error("line {line}: malformed entry {text:?}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: label {label} out of range 0..=44")]
    LabelOutOfRange { line: usize, label: i64 },
    #[error("line {line}: duplicate label {label}")]
    DuplicateLabel { line: usize, label: u8 },
    #[error("line {line}: duplicate token name {name:?}")]
    DuplicateName { line: usize, name: String },
    #[error("label {0} out of range 0..=44")]
    InvalidLabel(i64),
    #[error("cannot map non-finite value {0} to a token")]
    NonFinite(f64),
}

/// Integer token label in `0..=44`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenLabel(u8);

impl TokenLabel {
    pub fn new(value: i64) -> Result<Self, VocabError> {
        if (0..VOCAB_SIZE as i64).contains(&value) {
            Ok(TokenLabel(value as u8))
        } else {
            Err(VocabError::InvalidLabel(value))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_reserved(self) -> bool {
        self == START_LABEL || self == BREATH_LABEL || self == END_LABEL
    }

    pub fn all() -> impl Iterator<Item = TokenLabel> {
        (0..VOCAB_SIZE as u8).map(TokenLabel)
    }
}

impl fmt::Display for TokenLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A point of the continuous grid, in `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct GridValue(f64);

impl GridValue {
    pub fn get(self) -> f64 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Start,
    Breath,
    End,
    Symbol,
}

impl Role {
    pub fn of(label: TokenLabel) -> Role {
        match label {
            START_LABEL => Role::Start,
            BREATH_LABEL => Role::Breath,
            END_LABEL => Role::End,
            _ => Role::Symbol,
        }
    }
}

/// The 45-entry token inventory. Immutable once loaded.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    names: Vec<String>,
    by_name: HashMap<String, TokenLabel>,
}

impl Vocabulary {
    /// Parses a manifest of `label,token_name` lines.
    pub fn from_manifest(source: &str) -> Result<Self, VocabError> {
        let lines: Vec<&str> = source.lines().collect();
        if lines.len() != VOCAB_SIZE {
            return Err(VocabError::CountMismatch(lines.len()));
        }
        let mut names: Vec<Option<String>> = vec![None; VOCAB_SIZE];
        let mut by_name = HashMap::with_capacity(VOCAB_SIZE);
        for (i, text) in lines.iter().enumerate() {
            let line = i + 1;
            let malformed = || VocabError::Malformed {
                line,
                text: text.to_string(),
            };
            let (label_text, name) = text.split_once(',').ok_or_else(malformed)?;
            let label: i64 = label_text.parse().map_err(|_| malformed())?;
            if name.is_empty()
                || !name.is_ascii()
                || name.contains(',')
                || name
                    .chars()
                    .any(|c| c.is_ascii_whitespace() || c.is_ascii_control())
            {
                return Err(malformed());
            }
            let label =
                TokenLabel::new(label).map_err(|_| VocabError::LabelOutOfRange { line, label })?;
            if names[label.index()].is_some() {
                return Err(VocabError::DuplicateLabel {
                    line,
                    label: label.get(),
                });
            }
            if by_name.insert(name.to_string(), label).is_some() {
                return Err(VocabError::DuplicateName {
                    line,
                    name: name.to_string(),
                });
            }
            names[label.index()] = Some(name.to_string());
        }
        // 45 distinct labels in range fill every slot.
        let names = names.into_iter().map(Option::unwrap).collect();
        Ok(Vocabulary { names, by_name })
    }

    pub fn name(&self, label: TokenLabel) -> &str {
        &self.names[label.index()]
    }

    pub fn label_of(&self, name: &str) -> Option<TokenLabel> {
        self.by_name.get(name).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (TokenLabel, &str)> {
        TokenLabel::all().map(move |l| (l, self.name(l)))
    }

    pub fn detokenize(&self, labels: &[TokenLabel]) -> Vec<&str> {
        labels.iter().map(|&l| self.name(l)).collect()
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::from_manifest(DEFAULT_MANIFEST).expect("bundled manifest is valid")
    }
}

pub fn token_to_value(label: TokenLabel) -> GridValue {
    GridValue((label.0 as f64 - CENTRE) / CENTRE)
}

/// Nearest grid label after clamping to `[-1, 1]`. Exact midpoints go to the
/// label closer to BREATH.
pub fn value_to_token(v: f64) -> Result<TokenLabel, VocabError> {
    if !v.is_finite() {
        return Err(VocabError::NonFinite(v));
    }
    let x = v.clamp(-1.0, 1.0) * CENTRE;
    let floor = x.floor();
    let frac = x - floor;
    // Ties round toward zero, i.e. toward the centre label.
    let offset = if frac > 0.5 || (frac == 0.5 && x < 0.0) {
        floor + 1.0
    } else {
        floor
    };
    Ok(TokenLabel((CENTRE + offset) as u8))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(v: i64) -> TokenLabel {
        TokenLabel::new(v).unwrap()
    }

    #[test]
    fn default_manifest_has_reserved_roles() {
        let vocab = Vocabulary::default();
        assert_eq!(vocab.name(START_LABEL), "START");
        assert_eq!(vocab.name(BREATH_LABEL), "BREATH");
        assert_eq!(vocab.name(END_LABEL), "END");
        assert_eq!(vocab.label_of("BREATH"), Some(label(22)));
        assert_eq!(Role::of(label(0)), Role::Start);
        assert_eq!(Role::of(label(22)), Role::Breath);
        assert_eq!(Role::of(label(44)), Role::End);
        assert_eq!(Role::of(label(7)), Role::Symbol);
    }

    #[test]
    fn manifest_errors() {
        let lines: Vec<&str> = DEFAULT_MANIFEST.lines().collect();
        let short = lines[..44].join("\n");
        assert_eq!(
            Vocabulary::from_manifest(&short),
            Err(VocabError::CountMismatch(44))
        );

        let mut dup = lines.clone();
        dup[3] = "2,other";
        assert!(matches!(
            Vocabulary::from_manifest(&dup.join("\n")),
            Err(VocabError::DuplicateLabel { label: 2, .. })
        ));

        let mut dup_name = lines.clone();
        dup_name[3] = "3,ro";
        assert!(matches!(
            Vocabulary::from_manifest(&dup_name.join("\n")),
            Err(VocabError::DuplicateName { .. })
        ));

        let mut range = lines.clone();
        range[3] = "45,x";
        assert!(matches!(
            Vocabulary::from_manifest(&range.join("\n")),
            Err(VocabError::LabelOutOfRange { label: 45, .. })
        ));

        for bad in ["3", "x,name", "3,", "3,two words"] {
            let mut m = lines.clone();
            m[3] = bad;
            assert!(
                matches!(
                    Vocabulary::from_manifest(&m.join("\n")),
                    Err(VocabError::Malformed { line: 4, .. })
                ),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn value_examples() {
        assert_eq!(token_to_value(label(0)).get(), -1.0);
        assert_eq!(token_to_value(label(22)).get(), 0.0);
        assert_eq!(token_to_value(label(44)).get(), 1.0);
        assert_eq!(token_to_value(label(11)).get(), -0.5);

        assert_eq!(value_to_token(-1.0).unwrap(), label(0));
        assert_eq!(value_to_token(0.5).unwrap(), label(33));
        assert_eq!(value_to_token(0.46).unwrap(), label(32));
        assert_eq!(value_to_token(7.0).unwrap(), label(44));
        assert_eq!(value_to_token(-3.5).unwrap(), label(0));
        assert!(value_to_token(f64::NAN).is_err());
        assert!(value_to_token(f64::INFINITY).is_err());
    }

    #[test]
    fn midpoints_round_towards_breath() {
        // 10.5 / 22 and -10.5 / 22 sit exactly between two grid points.
        assert_eq!(value_to_token(10.5 / 22.0).unwrap(), label(32));
        assert_eq!(value_to_token(-10.5 / 22.0).unwrap(), label(12));
        assert_eq!(value_to_token(0.5 / 22.0).unwrap(), label(22));
        assert_eq!(value_to_token(-0.5 / 22.0).unwrap(), label(22));
    }

    #[test]
    fn detokenize_examples() {
        let vocab = Vocabulary::default();
        assert_eq!(
            vocab.detokenize(&[label(0), label(22), label(44)]),
            vec!["START", "BREATH", "END"]
        );
        assert!(vocab.detokenize(&[]).is_empty());
        for l in TokenLabel::all() {
            let back = value_to_token(token_to_value(l).get()).unwrap();
            assert_eq!(vocab.detokenize(&[back]), vec![vocab.name(l)]);
        }
    }

    #[test]
    fn grid_spacing_is_one_over_22() {
        for l in 0..44 {
            let d = token_to_value(label(l + 1)).get() - token_to_value(label(l)).get();
            assert!((d - 1.0 / 22.0).abs() < 1e-15);
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn clamping_is_transparent(v in -1.0e6f64..1.0e6) {
                prop_assert_eq!(value_to_token(v).unwrap(), value_to_token(v.clamp(-1.0, 1.0)).unwrap());
            }

            #[test]
            fn nearest_grid_point(v in -1.0f64..=1.0) {
                let got = value_to_token(v).unwrap();
                let d = (token_to_value(got).get() - v).abs();
                for l in TokenLabel::all() {
                    prop_assert!(d <= (token_to_value(l).get() - v).abs() + 1e-12);
                }
            }
        }
    }
}
