//! Word-level corpus ingestion and contiguous minibatching.
//!
//! Text is split on whitespace, one sentence per line, and an end-of-sentence
//! marker is appended to every line. The vocabulary always holds `<eos>` (id
//! 0) and `<unk>` (id 1); the remaining `max_vocab - 2` slots go to the most
//! frequent training tokens, ties broken lexicographically.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    pub unk_id: usize,
    pub eos_id: usize,
}

impl Vocab {
    /// Builds a vocabulary from an ordered token list that must contain
    /// `<eos>` and `<unk>`.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary entry `{t}`")));
            }
        }
        let find = |t: &str| {
            index
                .get(t)
                .copied()
                .ok_or_else(|| Error::invalid(format!("vocabulary lacks `{t}`")))
        };
        let eos_id = find(EOS)?;
        let unk_id = find(UNK)?;
        Ok(Vocab {
            tokens,
            index,
            unk_id,
            eos_id,
        })
    }

    /// Most frequent `max_vocab - 2` tokens of `words` plus the two markers.
    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>, max_vocab: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for w in words {
            if w != EOS && w != UNK {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut tokens = vec![EOS.to_string(), UNK.to_string()];
        tokens.extend(
            ranked
                .into_iter()
                .take(max_vocab.saturating_sub(2))
                .map(|(w, _)| w.to_string()),
        );
        Vocab::from_tokens(tokens).expect("markers are present and entries unique")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or the unknown-word id.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.unk_id)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// `id<TAB>token` lines.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(w, "{i}\t{t}")?;
        }
        Ok(())
    }

    pub fn read_tsv(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (id, tok) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: ln + 1,
                msg: "expected `id<TAB>token`".into(),
            })?;
            let id: usize = id.parse().map_err(|_| Error::Parse {
                line: ln + 1,
                msg: format!("bad id `{id}`"),
            })?;
            if id != tokens.len() {
                return Err(Error::Parse {
                    line: ln + 1,
                    msg: format!("ids must be dense and ordered, found {id}"),
                });
            }
            tokens.push(tok.to_string());
        }
        Vocab::from_tokens(tokens)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Vocab::read_tsv(&read_utf8(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_tsv(std::io::BufWriter::new(fs::File::create(path)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "val" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub enum VocabSource {
    FromTrain,
    Provided(Vocab),
}

#[derive(Clone, Debug, Default)]
pub struct CorpusPaths {
    pub train: PathBuf,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

impl CorpusPaths {
    /// `<dir>/train.txt`, `<dir>/valid.txt`, `<dir>/test.txt`; the latter two
    /// only if present.
    pub fn from_dir(dir: &Path) -> Self {
        let opt = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        CorpusPaths {
            train: dir.join("train.txt"),
            valid: opt("valid.txt"),
            test: opt("test.txt"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub vocab: Vocab,
}

impl Corpus {
    pub fn split(&self, s: Split) -> &[usize] {
        match s {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    /// Builds a corpus from in-memory texts.
    pub fn from_texts(
        train: &str,
        valid: &str,
        test: &str,
        source: VocabSource,
        max_vocab: usize,
        lowercase: bool,
    ) -> Result<Self> {
        let norm = |t: &str| if lowercase { t.to_lowercase() } else { t.to_string() };
        let (train, valid, test) = (norm(train), norm(valid), norm(test));
        let train_words = words(&train);
        if train_words.iter().all(|w| *w == EOS) {
            return Err(Error::Empty {
                what: "training split".into(),
            });
        }
        let vocab = match source {
            VocabSource::FromTrain => Vocab::from_words(train_words.iter().copied(), max_vocab),
            VocabSource::Provided(v) => v,
        };
        let encode = |ws: Vec<&str>| ws.into_iter().map(|w| vocab.id(w)).collect::<Vec<_>>();
        Ok(Corpus {
            train: encode(train_words),
            valid: encode(words(&valid)),
            test: encode(words(&test)),
            vocab,
        })
    }
}

/// Whitespace tokens of every line followed by `<eos>`.
fn words(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for line in text.lines() {
        out.extend(line.split_whitespace());
        out.push(EOS);
    }
    out
}

fn read_utf8(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    String::from_utf8(bytes).map_err(|e| Error::Utf8 {
        path: path.to_path_buf(),
        offset: e.utf8_error().valid_up_to(),
    })
}

/// Reads and tokenizes the corpus files.
pub fn build_corpus(
    paths: &CorpusPaths,
    source: VocabSource,
    max_vocab: usize,
    lowercase: bool,
) -> Result<Corpus> {
    let train = read_utf8(&paths.train)?;
    let read_opt = |p: &Option<PathBuf>| p.as_deref().map(read_utf8).transpose();
    let valid = read_opt(&paths.valid)?.unwrap_or_default();
    let test = read_opt(&paths.test)?.unwrap_or_default();
    Corpus::from_texts(&train, &valid, &test, source, max_vocab, lowercase)
}

/// One unrolled window: `tokens[lane][t]` predicts `targets[lane][t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub tokens: Vec<Vec<usize>>,
    pub targets: Vec<Vec<usize>>,
}

/// A split reshaped into `batch` contiguous streams, read `unroll` steps at
/// a time. The trailing partial window is dropped.
#[derive(Clone, Debug)]
pub struct BatchIter<'a> {
    split: &'a [usize],
    batch: usize,
    unroll: usize,
    stream_len: usize,
    cursor: usize,
}

impl<'a> BatchIter<'a> {
    pub fn new(split: &'a [usize], batch: usize, unroll: usize) -> Result<Self> {
        if batch == 0 || unroll == 0 {
            return Err(Error::invalid("batch and unroll length must be positive"));
        }
        if split.len() < batch * (unroll + 1) {
            return Err(Error::invalid(format!(
                "split of {} tokens is too small for batch {batch} x unroll {unroll}",
                split.len()
            )));
        }
        Ok(BatchIter {
            split,
            batch,
            unroll,
            stream_len: split.len() / batch,
            cursor: 0,
        })
    }

    pub fn num_windows(&self) -> usize {
        (self.stream_len - 1) / self.unroll
    }

    pub fn stream_len(&self) -> usize {
        self.stream_len
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Window;

    fn next(&mut self) -> Option<Window> {
        if self.cursor + self.unroll + 1 > self.stream_len {
            return None;
        }
        let (t0, t1) = (self.cursor, self.cursor + self.unroll);
        let mut tokens = Vec::with_capacity(self.batch);
        let mut targets = Vec::with_capacity(self.batch);
        for b in 0..self.batch {
            let s = &self.split[b * self.stream_len..(b + 1) * self.stream_len];
            tokens.push(s[t0..t1].to_vec());
            targets.push(s[t0 + 1..t1 + 1].to_vec());
        }
        self.cursor = t1;
        Some(Window { tokens, targets })
    }
}
