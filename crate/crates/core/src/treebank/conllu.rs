//! CoNLL-U reader and writer for basic dependency trees.

use std::fmt::Write as _;

use thiserror::Error;

use super::{Sentence, Token, Treebank, UNDETERMINED};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },

    #[error("line {line}: invalid token id {value:?}")]
    BadId { line: usize, value: String },

    #[error("line {line}: token id {found}, expected {expected}")]
    IdSequence { line: usize, expected: usize, found: usize },

    #[error("line {line}: non-integer head {value:?}")]
    BadHead { line: usize, value: String },

    #[error("line {line}: head {head} out of range for sentence of length {len}")]
    HeadOutOfRange { line: usize, head: usize, len: usize },

    #[error("line {line}: empty {column} column")]
    EmptyField { line: usize, column: &'static str },
}

/// Parse CoNLL-U text. Multiword-token ranges (`3-4`) and empty nodes
/// (`5.1`) are skipped, comments ignored. Trees are not validated here;
/// see [`super::validate_tree`].
pub fn parse_conllu(text: &str) -> Result<Treebank, ParseError> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<Token> = Vec::new();
    // (line number, head) of each token, checked once the sentence is complete
    let mut heads: Vec<(usize, usize)> = Vec::new();

    let mut finish = |tokens: &mut Vec<Token>, heads: &mut Vec<(usize, usize)>| {
        if tokens.is_empty() {
            return Ok(());
        }
        let len = tokens.len();
        for &(line, head) in heads.iter() {
            if head > len {
                return Err(ParseError::HeadOutOfRange { line, head, len });
            }
        }
        sentences.push(Sentence::new(std::mem::take(tokens)));
        heads.clear();
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut tokens, &mut heads)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(ParseError::ColumnCount {
                line: line_no,
                found: cols.len(),
            });
        }
        let id_field = cols[0];
        if id_field.contains('-') || id_field.contains('.') {
            continue;
        }
        let id: usize = id_field.parse().map_err(|_| ParseError::BadId {
            line: line_no,
            value: id_field.to_owned(),
        })?;
        if id != tokens.len() + 1 {
            return Err(ParseError::IdSequence {
                line: line_no,
                expected: tokens.len() + 1,
                found: id,
            });
        }
        let head: usize = cols[6].parse().map_err(|_| ParseError::BadHead {
            line: line_no,
            value: cols[6].to_owned(),
        })?;
        for (column, value) in [("FORM", cols[1]), ("UPOS", cols[3]), ("DEPREL", cols[7])] {
            if value.is_empty() {
                return Err(ParseError::EmptyField { line: line_no, column });
            }
        }
        heads.push((line_no, head));
        tokens.push(Token::new(id, cols[1], cols[3], head, cols[7]));
    }
    finish(&mut tokens, &mut heads)?;
    Ok(Treebank::new(UNDETERMINED, sentences))
}

/// Canonical 10-column output; LEMMA, XPOS, FEATS, DEPS and MISC are `_`.
pub fn write_conllu(tb: &Treebank) -> String {
    let mut out = String::new();
    for s in &tb.sentences {
        for t in &s.tokens {
            writeln!(
                out,
                "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_",
                t.id, t.form, t.upos, t.head, t.deprel
            )
            .unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::validate_tree;

    const FIVE: &str = "# text = the cat saw a dog\n\
1\tthe\t_\tDET\t_\t_\t2\tdet\t_\t_\n\
2\tcat\t_\tNOUN\t_\t_\t0\troot\t_\t_\n\
3\tsaw\t_\tVERB\t_\t_\t2\tacl\t_\t_\n\
4\ta\t_\tDET\t_\t_\t5\tdet\t_\t_\n\
5\tdog\t_\tNOUN\t_\t_\t3\tobj\t_\t_\n\n";

    #[test]
    fn minimal_sentence() {
        let tb = parse_conllu("1\tHi\t_\tINTJ\t_\t_\t0\troot\t_\t_\n").unwrap();
        assert_eq!(tb.len(), 1);
        assert_eq!(tb.sentences[0].len(), 1);
        assert_eq!(tb.sentences[0].tokens[0].head, 0);
    }

    #[test]
    fn five_token_tree_and_cycle() {
        let tb = parse_conllu(FIVE).unwrap();
        assert_eq!(tb.sentences[0].heads(), vec![2, 0, 2, 5, 3]);
        assert!(validate_tree(&tb.sentences[0]).is_empty());

        let cyclic = "1\ta\t_\tX\t_\t_\t2\tdep\t_\t_\n\
2\tb\t_\tX\t_\t_\t3\tdep\t_\t_\n\
3\tc\t_\tX\t_\t_\t2\tdep\t_\t_\n";
        let tb = parse_conllu(cyclic).unwrap();
        assert!(!validate_tree(&tb.sentences[0]).is_empty());
    }

    #[test]
    fn round_trip() {
        let tb = parse_conllu(FIVE).unwrap();
        let text = write_conllu(&tb);
        assert_eq!(parse_conllu(&text).unwrap(), tb);
    }

    #[test]
    fn empty_treebank_writes_nothing() {
        assert_eq!(write_conllu(&Treebank::new("en", vec![])), "");
    }

    #[test]
    fn single_token_output() {
        let tb = parse_conllu("1\tHi\t_\tINTJ\t_\t_\t0\troot\t_\t_\n").unwrap();
        assert_eq!(write_conllu(&tb), "1\tHi\t_\tINTJ\t_\t_\t0\troot\t_\t_\n\n");
    }

    #[test]
    fn skips_ranges_and_empty_nodes() {
        let text = "1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_\n\
1\tde\t_\tADP\t_\t_\t2\tcase\t_\t_\n\
2\tel\t_\tDET\t_\t_\t0\troot\t_\t_\n\
2.1\tx\t_\tX\t_\t_\t_\t_\t_\t_\n";
        let tb = parse_conllu(text).unwrap();
        assert_eq!(tb.sentences[0].len(), 2);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad_cols = "1\tHi\tINTJ\n";
        assert_eq!(
            parse_conllu(bad_cols),
            Err(ParseError::ColumnCount { line: 1, found: 3 })
        );
        let bad_head = "# c\n1\tHi\t_\tINTJ\t_\t_\tx\troot\t_\t_\n";
        assert!(matches!(
            parse_conllu(bad_head),
            Err(ParseError::BadHead { line: 2, .. })
        ));
        let out_of_range = "1\tHi\t_\tINTJ\t_\t_\t0\troot\t_\t_\n2\tyo\t_\tINTJ\t_\t_\t7\tdep\t_\t_\n";
        assert_eq!(
            parse_conllu(out_of_range),
            Err(ParseError::HeadOutOfRange {
                line: 2,
                head: 7,
                len: 2
            })
        );
    }

    #[test]
    fn blank_line_runs_and_crlf() {
        let text = "\n\n1\tHi\t_\tINTJ\t_\t_\t0\troot\t_\t_\r\n\n\n\n1\tYo\t_\tINTJ\t_\t_\t0\troot\t_\t_";
        let tb = parse_conllu(text).unwrap();
        assert_eq!(tb.len(), 2);
        assert_eq!(tb.sentences[0].tokens[0].deprel, "root");
    }
}
