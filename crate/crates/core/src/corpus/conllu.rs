use std::io::{BufRead, Write};

use super::{is_space, CorpusError, Sentence, TagDoc, Token};

const SPACE_AFTER_NO: &str = "SpaceAfter=No";
const GOLD_UPOS: &str = "GoldUPOS=";

#[derive(Default)]
struct Pending {
    id: Option<String>,
    text: Option<(usize, String)>,
    tokens: Vec<Token>,
    start_line: usize,
    /// Component word ids still to be skipped after a multiword line,
    /// and whether the first component's UPOS is still needed.
    mwt_until: Option<usize>,
    mwt_needs_upos: bool,
}

struct Misc {
    space_after: bool,
    gold: Vec<String>,
}

fn parse_misc(field: &str) -> Misc {
    let mut misc = Misc {
        space_after: true,
        gold: Vec::new(),
    };
    if field == "_" {
        return misc;
    }
    let mut in_gold = false;
    for item in field.split('|') {
        if item == SPACE_AFTER_NO {
            misc.space_after = false;
            in_gold = false;
        } else if let Some(rest) = item.strip_prefix(GOLD_UPOS) {
            misc.gold.push(rest.to_string());
            in_gold = true;
        } else if in_gold && !item.contains('=') && !item.is_empty() {
            // GoldUPOS=A|B: labels after the key continue the set
            misc.gold.push(item.to_string());
        } else {
            in_gold = false;
        }
    }
    misc
}

fn parse_err(line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_word_id(s: &str, line: usize) -> Result<usize, CorpusError> {
    s.parse::<usize>()
        .ok()
        .filter(|&v| v > 0)
        .ok_or_else(|| parse_err(line, format!("invalid token id {s:?}")))
}

impl Pending {
    fn finish(&mut self, doc: &mut TagDoc) -> Result<(), CorpusError> {
        let pending = std::mem::take(self);
        if pending.tokens.is_empty() {
            return Ok(());
        }
        let sentence = Sentence::assemble(pending.id, pending.tokens).map_err(|e| match e {
            CorpusError::Alignment { message, .. } => CorpusError::Alignment {
                line: pending.start_line,
                message,
            },
            other => other,
        })?;
        if let Some((line, text)) = pending.text {
            let expected: Vec<char> = text.chars().filter(|c| !is_space(*c)).collect();
            if expected != sentence.non_space_chars() {
                return Err(CorpusError::Alignment {
                    line,
                    message: "token forms do not cover the sentence text".into(),
                });
            }
        }
        doc.sentences.push(sentence);
        Ok(())
    }
}

/// Reads a CoNLL-U document. Multiword tokens are kept as their surface
/// line and labelled with the UPOS of their first component word.
pub fn parse_conllu<R: BufRead>(reader: R) -> Result<TagDoc, CorpusError> {
    let mut doc = TagDoc::default();
    let mut cur = Pending::default();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            cur.finish(&mut doc)?;
            continue;
        }
        if cur.tokens.is_empty() && cur.start_line == 0 {
            cur.start_line = lineno;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("sent_id") {
                if let Some(v) = v.trim_start().strip_prefix('=') {
                    cur.id = Some(v.trim().to_string());
                }
            } else if let Some(v) = comment.strip_prefix("text") {
                if let Some(v) = v.trim_start().strip_prefix('=') {
                    cur.text = Some((lineno, v.trim().to_string()));
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(parse_err(
                lineno,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        let (id, form, upos, misc) = (cols[0], cols[1], cols[3], cols[9]);

        if id.contains('.') {
            // empty node of the enhanced graph
            continue;
        }
        if let Some((a, b)) = id.split_once('-') {
            let (a, b) = (parse_word_id(a, lineno)?, parse_word_id(b, lineno)?);
            if b < a {
                return Err(parse_err(lineno, format!("invalid range {id:?}")));
            }
            let misc = parse_misc(misc);
            let mut tok = Token::new(form, upos);
            tok.space_after = misc.space_after;
            tok.gold_upos = misc.gold;
            cur.tokens.push(tok);
            cur.mwt_until = Some(b);
            cur.mwt_needs_upos = upos == "_";
            continue;
        }
        let word = parse_word_id(id, lineno)?;
        if let Some(until) = cur.mwt_until {
            if word <= until {
                if cur.mwt_needs_upos {
                    let tok = cur.tokens.last_mut().expect("multiword token pushed");
                    tok.upos = upos.to_string();
                    cur.mwt_needs_upos = false;
                }
                continue;
            }
            cur.mwt_until = None;
        }
        if upos == "_" || upos.is_empty() {
            return Err(parse_err(lineno, "missing UPOS"));
        }
        let misc = parse_misc(misc);
        let mut tok = Token::new(form, upos);
        tok.space_after = misc.space_after;
        tok.gold_upos = misc.gold;
        cur.tokens.push(tok);
    }
    cur.finish(&mut doc)?;
    Ok(doc)
}

pub fn parse_conllu_str(s: &str) -> Result<TagDoc, CorpusError> {
    parse_conllu(s.as_bytes())
}

fn misc_field(tok: &Token) -> String {
    let mut items = Vec::new();
    if !tok.space_after {
        items.push(SPACE_AFTER_NO.to_string());
    }
    if tok.gold_upos.len() != 1 || tok.gold_upos[0] != tok.upos {
        items.push(format!("{GOLD_UPOS}{}", tok.gold_upos.join("|")));
    }
    if items.is_empty() {
        "_".into()
    } else {
        items.join("|")
    }
}

/// Writes a document with FORM, UPOS and MISC filled and other columns `_`.
pub fn write_conllu<W: Write>(doc: &TagDoc, mut w: W) -> std::io::Result<()> {
    for s in &doc.sentences {
        if let Some(id) = &s.id {
            writeln!(w, "# sent_id = {id}")?;
        }
        writeln!(w, "# text = {}", s.text)?;
        for (i, tok) in s.tokens.iter().enumerate() {
            writeln!(
                w,
                "{}\t{}\t_\t{}\t_\t_\t_\t_\t_\t{}",
                i + 1,
                tok.form,
                tok.upos,
                misc_field(tok)
            )?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_conllu_string(doc: &TagDoc) -> String {
    let mut buf = Vec::new();
    write_conllu(doc, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("utf-8 output")
}
