use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at {line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl ParseError {
    pub fn at(pos: Pos, msg: impl Into<String>) -> Self {
        ParseError {
            line: pos.line,
            col: pos.col,
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sexp {
    Atom(String, Pos),
    List(Vec<Sexp>, Pos),
}

impl Sexp {
    pub fn pos(&self) -> Pos {
        match self {
            Sexp::Atom(_, p) | Sexp::List(_, p) => *p,
        }
    }

    pub fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(s, _) => Some(s),
            _ => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(xs, _) => Some(xs),
            _ => None,
        }
    }

    /// Head symbol and arguments of a list form.
    pub fn form(&self) -> Option<(&str, &[Sexp])> {
        let xs = self.list()?;
        let (h, rest) = xs.split_first()?;
        Some((h.atom()?, rest))
    }

    pub fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::at(self.pos(), msg)
    }
}

/// Read every top-level datum. `;` starts a line comment.
pub fn read_all(text: &str) -> Result<Vec<Sexp>, ParseError> {
    let mut r = Reader {
        chars: text.chars().collect(),
        i: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    loop {
        r.skip_ws();
        if r.i >= r.chars.len() {
            return Ok(out);
        }
        out.push(r.datum()?);
    }
}

pub fn read_one(text: &str) -> Result<Sexp, ParseError> {
    let mut all = read_all(text)?;
    match all.len() {
        1 => Ok(all.remove(0)),
        0 => Err(ParseError {
            line: 1,
            col: 1,
            msg: "empty input".into(),
        }),
        _ => Err(ParseError::at(all[1].pos(), "unexpected trailing datum")),
    }
}

struct Reader {
    chars: Vec<char>,
    i: usize,
    line: usize,
    col: usize,
}

impl Reader {
    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = *self.chars.get(self.i)?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.i).copied()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn datum(&mut self) -> Result<Sexp, ParseError> {
        self.skip_ws();
        let start = self.pos();
        match self.peek() {
            None => Err(ParseError::at(start, "unexpected end of input")),
            Some(')') => Err(ParseError::at(start, "unexpected `)`")),
            Some('(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        None => {
                            return Err(ParseError::at(
                                self.pos(),
                                format!("unclosed `(` opened at {start}"),
                            ))
                        }
                        Some(')') => {
                            self.bump();
                            return Ok(Sexp::List(items, start));
                        }
                        Some(_) => items.push(self.datum()?),
                    }
                }
            }
            Some(_) => {
                let mut s = String::new();
                while let Some(c) = self.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    s.push(c);
                    self.bump();
                }
                Ok(Sexp::Atom(s, start))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_nested_lists() {
        let s = read_one("(a (b c) ; comment\n d)").unwrap();
        let (h, args) = s.form().unwrap();
        assert_eq!(h, "a");
        assert_eq!(args.len(), 2);
        assert_eq!(args[1].pos(), Pos { line: 2, col: 2 });
    }

    #[test]
    fn reports_position_of_unclosed_list() {
        let e = read_one("(compose (reduction").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(e.msg.contains("unclosed"));
    }
}
