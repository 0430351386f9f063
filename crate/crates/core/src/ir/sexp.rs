//! A small S-expression reader with source positions.
//!
//! Atoms are either symbols, integers or double-quoted strings. `;` starts a
//! comment that runs to the end of the line.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SexpKind {
    Symbol(String),
    Int(i64),
    Str(String),
    List(Vec<Sexp>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sexp {
    pub kind: SexpKind,
    pub pos: Pos,
}

impl Sexp {
    pub fn as_symbol(&self) -> Option<&str> {
        match &self.kind {
            SexpKind::Symbol(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexp]> {
        match &self.kind {
            SexpKind::List(items) => Some(items),
            _ => None,
        }
    }

    /// The head symbol of a non-empty list.
    pub fn head(&self) -> Option<&str> {
        self.as_list()?.first()?.as_symbol()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{pos}: {message}")]
pub struct LexError {
    pub pos: Pos,
    pub message: String,
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    pos: Pos,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader {
            chars: text.chars().peekable(),
            pos: Pos { line: 1, col: 1 },
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.pos.line += 1;
            self.pos.col = 1;
        } else {
            self.pos.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn err<T>(&self, pos: Pos, message: impl Into<String>) -> Result<T, LexError> {
        Err(LexError {
            pos,
            message: message.into(),
        })
    }

    fn read(&mut self) -> Result<Option<Sexp>, LexError> {
        self.skip_trivia();
        let start = self.pos;
        let Some(&c) = self.chars.peek() else {
            return Ok(None);
        };
        match c {
            '(' => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.chars.peek() {
                        None => return self.err(start, "unterminated list"),
                        Some(')') => {
                            self.bump();
                            break;
                        }
                        Some(_) => match self.read()? {
                            Some(item) => items.push(item),
                            None => return self.err(start, "unterminated list"),
                        },
                    }
                }
                Ok(Some(Sexp {
                    kind: SexpKind::List(items),
                    pos: start,
                }))
            }
            ')' => self.err(start, "unexpected ')'"),
            '"' => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return self.err(start, "unterminated string literal"),
                        Some('"') => break,
                        Some('\\') => match self.bump() {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some('\\') => s.push('\\'),
                            Some('"') => s.push('"'),
                            Some(other) => {
                                return self.err(self.pos, format!("unknown escape '\\{other}'"))
                            }
                            None => return self.err(start, "unterminated string literal"),
                        },
                        Some(c) => s.push(c),
                    }
                }
                Ok(Some(Sexp {
                    kind: SexpKind::Str(s),
                    pos: start,
                }))
            }
            _ => {
                let mut atom = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' || c == '"' {
                        break;
                    }
                    atom.push(c);
                    self.bump();
                }
                let looks_numeric = atom
                    .strip_prefix('-')
                    .unwrap_or(&atom)
                    .chars()
                    .next()
                    .is_some_and(|c| c.is_ascii_digit());
                let kind = if looks_numeric {
                    match atom.parse::<i64>() {
                        Ok(n) => SexpKind::Int(n),
                        Err(_) => return self.err(start, format!("malformed integer '{atom}'")),
                    }
                } else {
                    SexpKind::Symbol(atom)
                };
                Ok(Some(Sexp { kind, pos: start }))
            }
        }
    }
}

/// Reads every top-level datum in `text`.
pub fn read_all(text: &str) -> Result<Vec<Sexp>, LexError> {
    let mut reader = Reader::new(text);
    let mut out = Vec::new();
    while let Some(datum) = reader.read()? {
        out.push(datum);
    }
    Ok(out)
}

/// Writes a string literal with the escapes understood by [`read_all`].
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
