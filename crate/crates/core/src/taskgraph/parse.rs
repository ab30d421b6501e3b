use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use super::{AndOrGraph, Group, GroupOrdering};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    Semantic,
}

/// Parse failure with a 1-based source position.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    Open,
    Close,
    Comma,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        kind: ParseErrorKind::Syntax,
        line,
        column,
        message: message.into(),
    }
}

fn semantic(line: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        kind: ParseErrorKind::Semantic,
        line,
        column: 1,
        message: message.into(),
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.')
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        match c {
            '#' => break,
            c if c.is_whitespace() => i += 1,
            '[' | ']' | ',' => {
                let tok = match c {
                    '[' => Tok::Open,
                    ']' => Tok::Close,
                    _ => Tok::Comma,
                };
                out.push(Token { tok, column });
                i += 1;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(syntax(lineno, column, "unterminated string")),
                        Some('"') => break,
                        Some('\\') => match chars.get(i + 1) {
                            Some(&e @ ('"' | '\\')) => {
                                s.push(e);
                                i += 2;
                            }
                            _ => return Err(syntax(lineno, i + 1, "invalid escape in string")),
                        },
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                i += 1;
                out.push(Token { tok: Tok::Str(s), column });
            }
            c if is_word_char(c) => {
                let start = i;
                while i < chars.len() && is_word_char(chars[i]) {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Word(chars[start..i].iter().collect()),
                    column,
                });
            }
            other => return Err(syntax(lineno, column, format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

struct Line {
    no: usize,
    toks: Vec<Token>,
    pos: usize,
    end_column: usize,
}

impl Line {
    fn column(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_column, |t| t.column)
    }

    fn next(&mut self, what: &str) -> Result<Token, ParseError> {
        let t = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or_else(|| syntax(self.no, self.end_column, format!("expected {what}, found end of line")))?;
        self.pos += 1;
        Ok(t)
    }

    fn word(&mut self, what: &str) -> Result<String, ParseError> {
        let t = self.next(what)?;
        match t.tok {
            Tok::Word(w) => Ok(w),
            _ => Err(syntax(self.no, t.column, format!("expected {what}"))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        let column = self.column();
        match self.word(&format!("`{kw}`"))? {
            w if w == kw => Ok(()),
            w => Err(syntax(self.no, column, format!("expected `{kw}`, found `{w}`"))),
        }
    }

    fn id(&mut self) -> Result<u32, ParseError> {
        let column = self.column();
        let w = self.word("action id")?;
        match w.parse::<u32>() {
            Ok(v) if v > 0 && w.chars().all(|c| c.is_ascii_digit()) => Ok(v),
            _ => Err(syntax(self.no, column, format!("expected positive action id, found `{w}`"))),
        }
    }

    fn string(&mut self) -> Result<String, ParseError> {
        let t = self.next("quoted label")?;
        match t.tok {
            Tok::Str(s) => Ok(s),
            _ => Err(syntax(self.no, t.column, "expected quoted label")),
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        let t = self.next(what)?;
        if t.tok == want {
            Ok(())
        } else {
            Err(syntax(self.no, t.column, format!("expected {what}")))
        }
    }

    fn id_list(&mut self) -> Result<Vec<u32>, ParseError> {
        self.expect(Tok::Open, "`[`")?;
        let mut ids = Vec::new();
        if self.toks.get(self.pos).map(|t| &t.tok) == Some(&Tok::Close) {
            self.pos += 1;
            return Ok(ids);
        }
        loop {
            ids.push(self.id()?);
            let t = self.next("`,` or `]`")?;
            match t.tok {
                Tok::Comma => continue,
                Tok::Close => return Ok(ids),
                _ => return Err(syntax(self.no, t.column, "expected `,` or `]`")),
            }
        }
    }

    fn finish(&self) -> Result<(), ParseError> {
        match self.toks.get(self.pos) {
            None => Ok(()),
            Some(t) => Err(syntax(self.no, t.column, "unexpected trailing input")),
        }
    }
}

/// Parses the graph DSL:
///
/// ```text
/// graph <name>
/// action <id> "<label>"
/// group <name> take [id, ...] seq [id, ...]
/// retraction <id>
/// ordering unordered|ordered
/// ```
///
/// Blank lines and `#` comments are ignored. `retraction` and `ordering`
/// are optional; ordering defaults to `unordered`.
pub fn parse(text: &str) -> Result<AndOrGraph, ParseError> {
    let mut name: Option<(String, usize)> = None;
    let mut actions: BTreeMap<u32, String> = BTreeMap::new();
    let mut groups: Vec<(Group, usize)> = Vec::new();
    let mut retraction: Option<(u32, usize)> = None;
    let mut ordering: Option<GroupOrdering> = None;

    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let toks = tokenize(raw, no)?;
        if toks.is_empty() {
            continue;
        }
        let mut line = Line {
            no,
            toks,
            pos: 0,
            end_column: raw.chars().count() + 1,
        };
        let column = line.column();
        let kw = line.word("declaration keyword")?;
        match kw.as_str() {
            "graph" => {
                let n = line.word("graph name")?;
                if name.is_some() {
                    return Err(semantic(no, "graph name declared twice"));
                }
                name = Some((n, no));
            }
            "action" => {
                let id = line.id()?;
                let label = line.string()?;
                if actions.insert(id, label).is_some() {
                    return Err(semantic(no, format!("action {id} declared twice")));
                }
            }
            "group" => {
                let gname = line.word("group name")?;
                line.keyword("take")?;
                let take = line.id_list()?;
                line.keyword("seq")?;
                let seq = line.id_list()?;
                let take_set: BTreeSet<u32> = take.iter().copied().collect();
                if take_set.len() != take.len() {
                    return Err(semantic(no, format!("duplicate id in take list of group `{gname}`")));
                }
                if let Some(id) = seq.iter().find(|s| take_set.contains(s)) {
                    return Err(semantic(no, format!("action {id} is both take and seq in group `{gname}`")));
                }
                groups.push((
                    Group {
                        name: gname,
                        take: take_set,
                        seq,
                    },
                    no,
                ));
            }
            "retraction" => {
                let id = line.id()?;
                if retraction.is_some() {
                    return Err(semantic(no, "retraction declared twice"));
                }
                retraction = Some((id, no));
            }
            "ordering" => {
                let c = line.column();
                ordering = Some(match line.word("`unordered` or `ordered`")?.as_str() {
                    "unordered" => GroupOrdering::Unordered,
                    "ordered" => GroupOrdering::Ordered,
                    other => {
                        return Err(syntax(no, c, format!("expected `unordered` or `ordered`, found `{other}`")));
                    }
                });
            }
            other => return Err(syntax(no, column, format!("unknown declaration `{other}`"))),
        }
        line.finish()?;
    }

    let last_line = text.lines().count().max(1);
    let (name, _) = name.ok_or_else(|| semantic(last_line, "missing `graph <name>` declaration"))?;
    // Attribute semantic failures to the declaration that introduced them.
    let blame = |msg: &str| -> usize {
        groups
            .iter()
            .filter(|(g, _)| msg.contains(&format!("`{}`", g.name)))
            .map(|(_, l)| *l)
            .max()
            .or_else(|| retraction.filter(|_| msg.contains("retraction")).map(|(_, l)| l))
            .unwrap_or(last_line)
    };
    let group_list = groups.iter().map(|(g, _)| g.clone()).collect();
    AndOrGraph::new(
        name,
        actions,
        group_list,
        retraction.map(|(r, _)| r),
        ordering.unwrap_or(GroupOrdering::Unordered),
    )
    .map_err(|msg| semantic(blame(&msg), msg))
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn list(ids: impl IntoIterator<Item = u32>) -> String {
    let parts: Vec<String> = ids.into_iter().map(|i| i.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

/// Canonical text form; [`parse`] reads it back to an equal graph.
pub fn serialize(graph: &AndOrGraph) -> String {
    let mut out = String::new();
    writeln!(out, "graph {}", graph.name).unwrap();
    for (id, label) in &graph.actions {
        writeln!(out, "action {id} {}", quote(label)).unwrap();
    }
    for g in &graph.groups {
        writeln!(
            out,
            "group {} take {} seq {}",
            g.name,
            list(g.take.iter().copied()),
            list(g.seq.iter().copied())
        )
        .unwrap();
    }
    if let Some(r) = graph.retraction {
        writeln!(out, "retraction {r}").unwrap();
    }
    let ordering = match graph.ordering {
        GroupOrdering::Unordered => "unordered",
        GroupOrdering::Ordered => "ordered",
    };
    writeln!(out, "ordering {ordering}").unwrap();
    out
}
