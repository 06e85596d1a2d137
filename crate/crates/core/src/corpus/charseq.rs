use super::{CharVocab, CorpusError, Sentence, TagSet};
use crate::semicrf::{Segment, Segmentation};

/// Characters treated as spaces: any Unicode whitespace.
pub fn is_space(c: char) -> bool {
    c.is_whitespace()
}

/// The non-space characters of one sentence with their spacing folded
/// into two flags per character.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharSequence {
    /// Vocabulary id per character; `None` for out-of-vocabulary.
    pub chars: Vec<Option<u32>>,
    pub surface: Vec<char>,
    pub space_before: Vec<bool>,
    pub space_after: Vec<bool>,
}

impl CharSequence {
    /// Splits raw text into non-space characters and space flags.
    /// Runs of whitespace collapse to one flag; leading and trailing
    /// whitespace is dropped. Returns `None` for blank text.
    pub fn from_text(text: &str, vocab: &CharVocab) -> Option<Self> {
        let mut surface = Vec::new();
        let mut space_before = Vec::new();
        let mut pending_space = false;
        for c in text.chars() {
            if is_space(c) {
                pending_space = true;
                continue;
            }
            space_before.push(pending_space && !surface.is_empty());
            surface.push(c);
            pending_space = false;
        }
        if surface.is_empty() {
            return None;
        }
        let mut space_after: Vec<bool> = space_before[1..].to_vec();
        space_after.push(false);
        let chars = surface.iter().map(|&c| vocab.id(c)).collect();
        Some(CharSequence {
            chars,
            surface,
            space_before,
            space_after,
        })
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    /// Rebuilds single-space-normalized text.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.surface.len() * 2);
        for (i, &c) in self.surface.iter().enumerate() {
            out.push(c);
            if self.space_after[i] && i + 1 < self.surface.len() {
                out.push(' ');
            }
        }
        out
    }

    /// Surface string of characters `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> String {
        self.surface[start..end].iter().collect()
    }

    /// Like [`slice`](Self::slice) but keeps single spaces between the
    /// characters where the text had them.
    pub fn spaced_slice(&self, start: usize, end: usize) -> String {
        let mut out = String::new();
        for i in start..end {
            out.push(self.surface[i]);
            if i + 1 < end && self.space_after[i] {
                out.push(' ');
            }
        }
        out
    }
}

/// Character sequence plus gold segmentation (one segment per token,
/// labelled with the token's training label).
pub fn to_char_sequence(
    sentence: &Sentence,
    vocab: &CharVocab,
    tags: &TagSet,
) -> Result<(CharSequence, Segmentation), CorpusError> {
    let seq = CharSequence::from_text(&sentence.text, vocab).ok_or(CorpusError::EmptySentence)?;
    let mut segments = Vec::with_capacity(sentence.tokens.len());
    for tok in &sentence.tokens {
        let label = tags
            .id(&tok.upos)
            .ok_or_else(|| CorpusError::UnknownLabel(tok.upos.clone()))?;
        segments.push(Segment::new(tok.span.start, tok.span.len(), label));
    }
    let seg = Segmentation::new(segments);
    if seg.total_len() != seq.len() {
        return Err(CorpusError::Alignment {
            line: 0,
            message: format!(
                "token spans cover {} characters but the sentence has {}",
                seg.total_len(),
                seq.len()
            ),
        });
    }
    Ok((seq, seg))
}

#[cfg(test)]
mod tests {
    use super::super::Token;
    use super::*;

    #[test]
    fn two_single_char_tokens() {
        let s = Sentence::assemble(None, vec![Token::new("a", "X"), Token::new("b", "Y")]).unwrap();
        let vocab = CharVocab::from_chars("ab".chars());
        let tags = TagSet::from_labels(["X", "Y"]);
        let (seq, gold) = to_char_sequence(&s, &vocab, &tags).unwrap();
        assert_eq!(seq.chars, [Some(0), Some(1)]);
        assert_eq!(seq.space_after, [true, false]);
        assert_eq!(seq.space_before, [false, true]);
        assert_eq!(
            gold.segments(),
            [Segment::new(0, 1, 0), Segment::new(1, 1, 1)]
        );
    }

    #[test]
    fn single_token_has_no_flags() {
        let s = Sentence::assemble(None, vec![Token::new("go", "VERB")]).unwrap();
        let vocab = CharVocab::from_chars("go".chars());
        let tags = TagSet::from_labels(["VERB"]);
        let (seq, gold) = to_char_sequence(&s, &vocab, &tags).unwrap();
        assert_eq!(gold.segments(), [Segment::new(0, 2, 0)]);
        assert!(seq.space_after.iter().chain(&seq.space_before).all(|f| !f));
    }

    #[test]
    fn whitespace_runs_collapse() {
        let vocab = CharVocab::default();
        let seq = CharSequence::from_text("  ab \t c  ", &vocab).unwrap();
        assert_eq!(seq.surface, ['a', 'b', 'c']);
        assert_eq!(seq.space_before, [false, false, true]);
        assert_eq!(seq.space_after, [false, true, false]);
        assert_eq!(seq.chars, [None, None, None]);
        assert_eq!(seq.to_text(), "ab c");
        assert_eq!(seq.spaced_slice(1, 3), "b c");
        assert_eq!(seq.slice(1, 3), "bc");
        assert!(CharSequence::from_text(" \n ", &vocab).is_none());
    }

    #[test]
    fn unknown_label_is_reported() {
        let s = Sentence::assemble(None, vec![Token::new("a", "Q")]).unwrap();
        let err = to_char_sequence(&s, &CharVocab::default(), &TagSet::default()).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownLabel(l) if l == "Q"));
    }
}
