//! Piece files, fixed-length continuous encoding and synthetic fixtures.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use thiserror::Error;

use crate::rng;
use crate::vocab::{
    token_to_value, value_to_token, TokenLabel, Vocabulary, BREATH_LABEL, END_LABEL, START_LABEL,
    VOCAB_SIZE,
};

/// Longest piece, and the length every sequence is padded to.
pub const MAX_SEQ_LEN: usize = 576;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown token {name:?} at position {position}")]
    UnknownToken { name: String, position: usize },
    #[error("piece does not begin with START")]
    MissingStart,
    #[error("piece has no END token")]
    MissingEnd,
    #[error("END token at position {position} is not the last token")]
    MisplacedEnd { position: usize },
    #[error("piece has {0} tokens, limit is {MAX_SEQ_LEN}")]
    TooLong(usize),
    #[error("piece of {len} tokens does not fit a sequence of length {seq_len}")]
    DoesNotFit { len: usize, seq_len: usize },
    #[error("piece is empty")]
    Empty,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate piece name {0:?}")]
    DuplicateName(String),
    #[error("invalid fixture request: {0}")]
    InvalidFixture(String),
    #[error("{file}: {source}")]
    InFile {
        file: String,
        #[source]
        source: Box<CorpusError>,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// An ordered token sequence with a source name.
///
/// Pieces built through [`Piece::new`] or [`load_piece`] are well framed:
/// START first, a single END last, at most 576 tokens. Generated pieces may
/// skip the framing check via [`Piece::unchecked`] so defects can be reported
/// rather than hidden.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Piece {
    name: String,
    labels: Vec<TokenLabel>,
}

impl Piece {
    pub fn new(name: impl Into<String>, labels: Vec<TokenLabel>) -> Result<Self, CorpusError> {
        check_framing(&labels)?;
        Ok(Piece {
            name: name.into(),
            labels,
        })
    }

    pub fn unchecked(name: impl Into<String>, labels: Vec<TokenLabel>) -> Self {
        Piece {
            name: name.into(),
            labels,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[TokenLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_well_framed(&self) -> bool {
        check_framing(&self.labels).is_ok()
    }

    /// One comma-separated line of token names.
    pub fn to_csv(&self, vocab: &Vocabulary) -> String {
        let mut out = vocab.detokenize(&self.labels).join(",");
        out.push('\n');
        out
    }
}

fn check_framing(labels: &[TokenLabel]) -> Result<(), CorpusError> {
    if labels.is_empty() {
        return Err(CorpusError::Empty);
    }
    if labels.len() > MAX_SEQ_LEN {
        return Err(CorpusError::TooLong(labels.len()));
    }
    if labels[0] != START_LABEL {
        return Err(CorpusError::MissingStart);
    }
    match labels.iter().position(|&l| l == END_LABEL) {
        None => Err(CorpusError::MissingEnd),
        Some(p) if p + 1 != labels.len() => Err(CorpusError::MisplacedEnd { position: p }),
        Some(_) => Ok(()),
    }
}

/// Splits piece text into token names: commas and line breaks both separate,
/// surrounding whitespace is ignored, empty fields are skipped.
pub fn split_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split([',', '\n', '\r'])
        .map(str::trim)
        .filter(|t| !t.is_empty())
}

fn resolve_tokens(text: &str, vocab: &Vocabulary) -> Result<Vec<TokenLabel>, CorpusError> {
    split_tokens(text)
        .enumerate()
        .map(|(position, name)| {
            vocab
                .label_of(name)
                .ok_or_else(|| CorpusError::UnknownToken {
                    name: name.to_string(),
                    position,
                })
        })
        .collect()
}

/// Parses and validates one piece file.
pub fn load_piece(name: &str, text: &str, vocab: &Vocabulary) -> Result<Piece, CorpusError> {
    let labels = resolve_tokens(text, vocab)?;
    Piece::new(name, labels)
}

/// Parses token names without enforcing framing; used for analysing
/// generated output.
pub fn load_piece_lenient(
    name: &str,
    text: &str,
    vocab: &Vocabulary,
) -> Result<Piece, CorpusError> {
    let labels = resolve_tokens(text, vocab)?;
    if labels.is_empty() {
        return Err(CorpusError::Empty);
    }
    if labels.len() > MAX_SEQ_LEN {
        return Err(CorpusError::TooLong(labels.len()));
    }
    Ok(Piece::unchecked(name, labels))
}

/// Fixed-length vector of grid values in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousSequence(Vec<f64>);

impl ContinuousSequence {
    pub fn new(values: Vec<f64>) -> Self {
        ContinuousSequence(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Encodes to the standard 576-long sequence.
pub fn encode_piece(piece: &Piece) -> ContinuousSequence {
    encode_piece_to(piece, MAX_SEQ_LEN).expect("pieces never exceed the maximum length")
}

/// Encodes and END-pads to `seq_len`.
pub fn encode_piece_to(piece: &Piece, seq_len: usize) -> Result<ContinuousSequence, CorpusError> {
    if piece.len() > seq_len {
        return Err(CorpusError::DoesNotFit {
            len: piece.len(),
            seq_len,
        });
    }
    let end = token_to_value(END_LABEL).get();
    let mut values: Vec<f64> = piece
        .labels
        .iter()
        .map(|&l| token_to_value(l).get())
        .collect();
    values.resize(seq_len, end);
    Ok(ContinuousSequence(values))
}

/// Rounds every value to its token and drops the END padding, keeping the
/// first END.
pub fn decode_sequence(values: &[f64]) -> Result<Vec<TokenLabel>, crate::vocab::VocabError> {
    let mut labels = values
        .iter()
        .map(|&v| value_to_token(v))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(p) = labels.iter().skip(1).position(|&l| l == END_LABEL) {
        labels.truncate(p + 2);
    }
    Ok(labels)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pieces: Vec<Piece>,
}

impl Corpus {
    /// Sorts pieces by name and rejects empty input or duplicate names.
    pub fn from_pieces(mut pieces: Vec<Piece>) -> Result<Self, CorpusError> {
        if pieces.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        pieces.sort_by(|a, b| a.name.cmp(&b.name));
        if let Some(w) = pieces.windows(2).find(|w| w[0].name == w[1].name) {
            return Err(CorpusError::DuplicateName(w[0].name.clone()));
        }
        Ok(Corpus { pieces })
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Shortest and longest piece lengths.
    pub fn length_range(&self) -> (usize, usize) {
        let lens = self.pieces.iter().map(Piece::len);
        let min = lens.clone().min().unwrap_or(0);
        let max = lens.max().unwrap_or(0);
        (min, max)
    }

    /// Writes every piece as `<name>.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path, vocab: &Vocabulary) -> Result<(), CorpusError> {
        fs::create_dir_all(dir).map_err(|source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        for piece in &self.pieces {
            let path = dir.join(format!("{}.csv", piece.name));
            fs::write(&path, piece.to_csv(vocab))
                .map_err(|source| CorpusError::Io { path, source })?;
        }
        Ok(())
    }
}

/// Validates a set of `(file name, content)` pairs into a corpus. Piece names
/// are file names without a `.csv` suffix; the first bad file aborts.
pub fn load_corpus<S: AsRef<str>>(
    files: &[(S, S)],
    vocab: &Vocabulary,
) -> Result<Corpus, CorpusError> {
    if files.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut sorted: Vec<(&str, &str)> = files
        .iter()
        .map(|(n, t)| (n.as_ref(), t.as_ref()))
        .collect();
    sorted.sort();
    let pieces = sorted
        .into_iter()
        .map(|(file, text)| {
            let name = file.strip_suffix(".csv").unwrap_or(file);
            load_piece(name, text, vocab).map_err(|e| CorpusError::InFile {
                file: file.to_string(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Corpus::from_pieces(pieces)
}

/// Reads every `*.csv` file in `dir`.
pub fn read_csv_dir(dir: &Path) -> Result<Vec<(String, String)>, CorpusError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Io { path, source }
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io(dir))? {
        let path = entry.map_err(io(dir))?.path();
        if path.extension().is_some_and(|e| e == "csv") && path.is_file() {
            let text = fs::read_to_string(&path).map_err(io(&path))?;
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            files.push((name, text));
        }
    }
    Ok(files)
}

pub fn load_corpus_dir(dir: &Path, vocab: &Vocabulary) -> Result<Corpus, CorpusError> {
    load_corpus(&read_csv_dir(dir)?, vocab)
}

/// Deterministic synthetic pieces for tests and demos: START, random symbols
/// with a BREATH after every 4 to 12 of them, END.
pub fn make_fixture_corpus(
    seed: u64,
    count: usize,
    length_range: (usize, usize),
) -> Result<Corpus, CorpusError> {
    let (min, max) = length_range;
    if count == 0 {
        return Err(CorpusError::InvalidFixture(
            "count must be at least 1".into(),
        ));
    }
    if min < 3 || min > max || max > MAX_SEQ_LEN {
        return Err(CorpusError::InvalidFixture(format!(
            "length range ({min},{max}) must satisfy 3 <= min <= max <= {MAX_SEQ_LEN}"
        )));
    }
    let symbols: Vec<TokenLabel> = TokenLabel::all().filter(|l| !l.is_reserved()).collect();
    debug_assert_eq!(symbols.len(), VOCAB_SIZE - 3);

    let pieces = (0..count)
        .map(|i| {
            let mut rng = rng::indexed_stream("fixture", seed, i as u64);
            let len = rng.random_range(min..=max);
            let interior = len - 2;
            let mut labels = Vec::with_capacity(len);
            labels.push(START_LABEL);
            while labels.len() - 1 < interior {
                let gap = rng.random_range(4..=12);
                for _ in 0..gap {
                    if labels.len() - 1 == interior {
                        break;
                    }
                    labels.push(symbols[rng.random_range(0..symbols.len())]);
                }
                if labels.len() - 1 < interior {
                    labels.push(BREATH_LABEL);
                }
            }
            labels.push(END_LABEL);
            Piece::new(format!("fixture_{i:03}"), labels)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Corpus::from_pieces(pieces)
}
