use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use super::{is_space, CorpusError, TagDoc};

/// Character inventory. Ids are dense and follow code-point order.
/// Characters outside the vocabulary have no id and embed as a zero
/// one-hot vector. Whitespace is never part of the vocabulary.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, u32>,
}

impl CharVocab {
    pub fn from_chars<I: IntoIterator<Item = char>>(chars: I) -> Self {
        let set: BTreeSet<char> = chars.into_iter().filter(|c| !is_space(*c)).collect();
        let chars: Vec<char> = set.into_iter().collect();
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect();
        CharVocab { chars, index }
    }

    pub fn id(&self, c: char) -> Option<u32> {
        self.index.get(&c).copied()
    }

    pub fn char(&self, id: u32) -> Option<char> {
        self.chars.get(id as usize).copied()
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// One character per line; the line number is the id.
    pub fn save<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for c in &self.chars {
            writeln!(w, "{c}")?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<Self, CorpusError> {
        let mut chars = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let mut it = line.chars();
            match (it.next(), it.next()) {
                (Some(c), None) if !is_space(c) => chars.push(c),
                _ => {
                    return Err(CorpusError::Parse {
                        line: i + 1,
                        message: format!("expected a single non-space character, got {line:?}"),
                    })
                }
            }
        }
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect();
        Ok(CharVocab { chars, index })
    }
}

/// Label inventory, sorted lexicographically.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TagSet {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl TagSet {
    pub fn from_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        let labels: Vec<String> = set.into_iter().collect();
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        TagSet { labels, index }
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn save<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for l in &self.labels {
            writeln!(w, "{l}")?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<Self, CorpusError> {
        let mut labels = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() || line.chars().any(is_space) {
                return Err(CorpusError::Parse {
                    line: i + 1,
                    message: format!("invalid label {line:?}"),
                });
            }
            labels.push(line);
        }
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Ok(TagSet { labels, index })
    }
}

/// Character and label vocabularies of a training document.
pub fn build_vocabs(doc: &TagDoc) -> Result<(CharVocab, TagSet), CorpusError> {
    if doc.token_count() == 0 {
        return Err(CorpusError::Config("training document has no tokens".into()));
    }
    let chars = CharVocab::from_chars(doc.sentences.iter().flat_map(|s| s.text.chars()));
    let tags = TagSet::from_labels(doc.sentences.iter().flat_map(|s| {
        s.tokens
            .iter()
            .flat_map(|t| std::iter::once(t.upos.clone()).chain(t.gold_upos.iter().cloned()))
    }));
    Ok((chars, tags))
}
