//! A small parser for the dot subset the exporter writes: one `digraph`
//! with node statements carrying attribute lists and `a -> b` edges.

use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Ident(String),
    Quoted(String),
    Arrow,
    Punct(char),
}

fn tokenize(src: &str) -> Result<Vec<Token>, String> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '{' | '}' | '[' | ']' | '=' | ';' | ',' => {
                out.push(Token::Punct(c));
                chars.next();
            }
            '-' => {
                chars.next();
                match chars.next() {
                    Some('>') => out.push(Token::Arrow),
                    other => return Err(format!("expected '>' after '-', got {other:?}")),
                }
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('\\') => match chars.next() {
                            Some('n') => s.push('\n'),
                            Some(e) => s.push(e),
                            None => return Err("dangling escape".into()),
                        },
                        Some('"') => break,
                        Some(ch) => s.push(ch),
                        None => return Err("unterminated string".into()),
                    }
                }
                out.push(Token::Quoted(s));
            }
            c if c.is_alphanumeric() || c == '_' => {
                let mut s = String::new();
                while let Some(&ch) = chars.peek() {
                    if ch.is_alphanumeric() || ch == '_' {
                        s.push(ch);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Token::Ident(s));
            }
            other => return Err(format!("unexpected character {other:?}")),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DotGraph {
    pub name: String,
    /// Node id to its attributes.
    pub nodes: BTreeMap<String, BTreeMap<String, String>>,
    pub edges: BTreeSet<(String, String)>,
}

impl DotGraph {
    /// Edges with the `t` prefix stripped from both endpoints.
    pub fn numeric_edges(&self) -> Result<BTreeSet<(u64, u64)>, String> {
        let num = |s: &str| {
            s.strip_prefix('t')
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| format!("node id {s:?} is not t<number>"))
        };
        self.edges
            .iter()
            .map(|(a, b)| Ok((num(a)?, num(b)?)))
            .collect()
    }
}

fn ident(tok: Option<&Token>) -> Result<String, String> {
    match tok {
        Some(Token::Ident(s)) | Some(Token::Quoted(s)) => Ok(s.clone()),
        other => Err(format!("expected identifier, got {other:?}")),
    }
}

pub fn parse(src: &str) -> Result<DotGraph, String> {
    let toks = tokenize(src)?;
    let mut i = 0;
    if ident(toks.get(i))? != "digraph" {
        return Err("expected digraph".into());
    }
    i += 1;
    let mut g = DotGraph::default();
    if let Some(Token::Ident(name)) = toks.get(i) {
        g.name = name.clone();
        i += 1;
    }
    if toks.get(i) != Some(&Token::Punct('{')) {
        return Err("expected '{'".into());
    }
    i += 1;
    loop {
        match toks.get(i) {
            Some(Token::Punct('}')) => {
                i += 1;
                break;
            }
            Some(Token::Punct(';')) => i += 1,
            None => return Err("unterminated graph body".into()),
            _ => {
                let a = ident(toks.get(i))?;
                i += 1;
                if toks.get(i) == Some(&Token::Arrow) {
                    let b = ident(toks.get(i + 1))?;
                    i += 2;
                    g.nodes.entry(a.clone()).or_default();
                    g.nodes.entry(b.clone()).or_default();
                    g.edges.insert((a, b));
                } else {
                    let attrs = g.nodes.entry(a).or_default();
                    if toks.get(i) == Some(&Token::Punct('[')) {
                        i += 1;
                        loop {
                            match toks.get(i) {
                                Some(Token::Punct(']')) => {
                                    i += 1;
                                    break;
                                }
                                Some(Token::Punct(',')) => i += 1,
                                _ => {
                                    let k = ident(toks.get(i))?;
                                    if toks.get(i + 1) != Some(&Token::Punct('=')) {
                                        return Err(format!("expected '=' after {k}"));
                                    }
                                    let v = ident(toks.get(i + 2))?;
                                    attrs.insert(k, v);
                                    i += 3;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if i != toks.len() {
        return Err("trailing tokens after graph".into());
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nodes_and_edges() {
        let g = parse(
            "digraph G {\n    t1 [label=\"a \\\"b\\\"\"];\n    t2 [label=\"c\", style=dashed];\n    t1 -> t2;\n}\n",
        )
        .unwrap();
        assert_eq!(g.nodes["t1"]["label"], "a \"b\"");
        assert_eq!(g.nodes["t2"]["style"], "dashed");
        assert_eq!(
            g.numeric_edges().unwrap().into_iter().collect::<Vec<_>>(),
            vec![(1, 2)]
        );
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse("digraph G { t1 -> ; }").is_err());
        assert!(parse("graph G { }").is_err());
        assert!(parse("digraph G { t1 }  x").is_err());
    }
}
