//! CoNLL-U reading and writing. Only ID, FORM, HEAD and DEPREL are used.

use std::fmt::Write as _;

use super::{DepTree, TreeError};

/// One parsed block: surface tokens and their tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConlluSentence {
    pub tokens: Vec<String>,
    pub tree: DepTree,
}

pub fn read_conllu(text: &str) -> Result<Vec<ConlluSentence>, TreeError> {
    let mut out = Vec::new();
    let mut tokens = Vec::new();
    let mut heads = Vec::new();
    let mut deprels = Vec::new();
    let mut block_start = 1;
    let mut block = 0;

    let mut finish = |tokens: &mut Vec<String>,
                      heads: &mut Vec<usize>,
                      deprels: &mut Vec<String>,
                      block: &mut usize,
                      line: usize|
     -> Result<(), TreeError> {
        if tokens.is_empty() {
            return Ok(());
        }
        let tree = DepTree::new(std::mem::take(heads), std::mem::take(deprels)).map_err(|e| {
            TreeError::Conllu {
                block: *block,
                line,
                message: e.to_string(),
            }
        })?;
        out.push(ConlluSentence {
            tokens: std::mem::take(tokens),
            tree,
        });
        *block += 1;
        Ok(())
    };

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut tokens, &mut heads, &mut deprels, &mut block, block_start)?;
            block_start = lineno + 1;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let err = |message: String| TreeError::Conllu {
            block,
            line: lineno,
            message,
        };
        if cols.len() != 10 {
            return Err(err(format!("expected 10 columns, found {}", cols.len())));
        }
        // multiword-token ranges and empty nodes
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| err(format!("non-integer ID {:?}", cols[0])))?;
        if id != tokens.len() + 1 {
            return Err(err(format!("expected ID {}, found {id}", tokens.len() + 1)));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| err(format!("non-integer HEAD {:?}", cols[6])))?;
        tokens.push(cols[1].to_string());
        heads.push(head);
        deprels.push(cols[7].to_string());
    }
    let last = text.lines().count();
    finish(&mut tokens, &mut heads, &mut deprels, &mut block, last.max(block_start))?;
    Ok(out)
}

pub fn write_conllu(sentences: &[ConlluSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for (i, tok) in s.tokens.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}\t{}\t_\t_\t_\t_\t{}\t{}\t_\t_",
                i + 1,
                tok,
                s.tree.heads()[i],
                s.tree.deprels()[i]
            );
        }
        out.push('\n');
    }
    out
}
