//! Infix EFO1 text syntax.
//!
//! ```text
//! formula := "EX" var ("," var)* "." formula | or
//! or      := and ("|" and)*
//! and     := unary ("&" unary)*
//! unary   := "!" unary | "(" formula ")" | "EX" ... | atom
//! atom    := r<k> "(" term "," term ")"
//! term    := a<k> | e<k>        constant entity
//!          | x<k>               existential variable
//!          | any other name     the free variable
//! ```
//!
//! A quantifier extends as far right as possible. Existential variables that
//! no quantifier binds are quantified implicitly, outermost, in order of first
//! appearance.

use crate::kg::{EntityId, RelationId};

use super::{Formula, LogicError, Term};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Bang,
    Amp,
    Pipe,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, LogicError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'.' => Tok::Dot,
            b'!' | b'~' => Tok::Bang,
            b'&' => Tok::Amp,
            b'|' => Tok::Pipe,
            c if c.is_ascii_alphanumeric() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
                continue;
            }
            _ => {
                return Err(LogicError::Syntax {
                    pos: i,
                    message: format!(
                        "unexpected character `{}`",
                        src[i..].chars().next().unwrap_or('?')
                    ),
                })
            }
        };
        out.push((tok, i));
        i += 1;
    }
    Ok(out)
}

/// `prefix` followed by one or more digits.
fn numbered(name: &str, prefix: char) -> Option<u32> {
    let rest = name.strip_prefix(prefix)?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

fn classify_term(name: &str) -> Term {
    if let Some(k) = numbered(name, 'a').or_else(|| numbered(name, 'e')) {
        Term::Const(EntityId(k))
    } else if numbered(name, 'x').is_some() {
        Term::Exist(name.to_string())
    } else {
        Term::Free(name.to_string())
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |(_, p)| *p)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, LogicError> {
        Err(LogicError::Syntax {
            pos: self.pos(),
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), LogicError> {
        if self.peek() == Some(&tok) {
            self.at += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn at_keyword(&self) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == "EX")
    }

    fn formula(&mut self) -> Result<Formula, LogicError> {
        if self.at_keyword() {
            self.quantifier()
        } else {
            self.disjunction()
        }
    }

    fn quantifier(&mut self) -> Result<Formula, LogicError> {
        self.at += 1;
        let mut vars = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Ident(name)) if numbered(name, 'x').is_some() => {
                    vars.push(name.clone());
                    self.at += 1;
                }
                _ => return self.err("expected an existential variable x<k>"),
            }
            match self.peek() {
                Some(Tok::Comma) => self.at += 1,
                Some(Tok::Dot) => {
                    self.at += 1;
                    break;
                }
                _ => return self.err("expected `,` or `.` after quantified variable"),
            }
        }
        let body = self.formula()?;
        Ok(vars
            .into_iter()
            .rev()
            .fold(body, |acc, v| Formula::exists(v, acc)))
    }

    fn disjunction(&mut self) -> Result<Formula, LogicError> {
        let mut left = self.conjunction()?;
        while self.peek() == Some(&Tok::Pipe) {
            self.at += 1;
            let right = self.conjunction()?;
            left = Formula::or(left, right);
        }
        Ok(left)
    }

    fn conjunction(&mut self) -> Result<Formula, LogicError> {
        let mut left = self.unary()?;
        while self.peek() == Some(&Tok::Amp) {
            self.at += 1;
            let right = self.unary()?;
            left = Formula::and(left, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Formula, LogicError> {
        match self.peek() {
            Some(Tok::Bang) => {
                let pos = self.pos();
                self.at += 1;
                let inner = self.unary()?;
                if !matches!(inner, Formula::Atom(_)) {
                    return Err(LogicError::NegationOverCompound { pos });
                }
                Ok(Formula::not(inner))
            }
            Some(Tok::LParen) => {
                self.at += 1;
                let inner = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(Tok::Ident(_)) if self.at_keyword() => self.quantifier(),
            Some(Tok::Ident(_)) => self.atom(),
            Some(_) => self.err("expected an atom, `!`, `(` or `EX`"),
            None => self.err("unexpected end of input"),
        }
    }

    fn atom(&mut self) -> Result<Formula, LogicError> {
        let Some(Tok::Ident(name)) = self.peek().cloned() else {
            return self.err("expected a relation name");
        };
        let Some(r) = numbered(&name, 'r') else {
            return self.err(format!("`{name}` is not a relation name r<k>"));
        };
        self.at += 1;
        self.expect(Tok::LParen, "`(` after relation name")?;
        let head = self.term()?;
        self.expect(Tok::Comma, "`,` between atom arguments")?;
        let tail = self.term()?;
        self.expect(Tok::RParen, "`)` closing the atom")?;
        Ok(Formula::atom(RelationId(r), head, tail))
    }

    fn term(&mut self) -> Result<Term, LogicError> {
        match self.peek() {
            Some(Tok::Ident(name)) if name != "EX" => {
                let t = classify_term(name);
                self.at += 1;
                Ok(t)
            }
            _ => self.err("expected a term"),
        }
    }
}

/// Parses the infix EFO1 syntax and validates the result.
pub fn parse_efo1(text: &str) -> Result<Formula, LogicError> {
    let mut p = Parser {
        toks: lex(text)?,
        at: 0,
        end: text.len(),
    };
    let f = p.formula()?;
    if p.at != p.toks.len() {
        return p.err("trailing input");
    }
    let f = bind_implicit(f)?;
    f.validate()?;
    Ok(f)
}

fn bind_implicit(f: Formula) -> Result<Formula, LogicError> {
    let mut unbound = Vec::new();
    let mut binders = Vec::new();
    collect_unbound(&f, &mut Vec::new(), &mut unbound, &mut binders);
    if let Some(v) = unbound.iter().find(|v| binders.contains(v)) {
        return Err(LogicError::Rebound(v.clone()));
    }
    Ok(unbound
        .into_iter()
        .rev()
        .fold(f, |acc, v| Formula::exists(v, acc)))
}

fn collect_unbound(
    f: &Formula,
    scope: &mut Vec<String>,
    unbound: &mut Vec<String>,
    binders: &mut Vec<String>,
) {
    match f {
        Formula::Atom(a) => {
            for t in [&a.head, &a.tail] {
                if let Term::Exist(n) = t {
                    if !scope.contains(n) && !unbound.contains(n) {
                        unbound.push(n.clone());
                    }
                }
            }
        }
        Formula::Not(g) => collect_unbound(g, scope, unbound, binders),
        Formula::And(a, b) | Formula::Or(a, b) => {
            collect_unbound(a, scope, unbound, binders);
            collect_unbound(b, scope, unbound, binders);
        }
        Formula::Exists(v, g) => {
            binders.push(v.clone());
            scope.push(v.clone());
            collect_unbound(g, scope, unbound, binders);
            scope.pop();
        }
    }
}
