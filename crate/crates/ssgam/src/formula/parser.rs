//! Hand-written recursive descent parser for the formula mini-language.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! formula     = IDENT '~' sum
//! sum         = item (('+'|'-') item)*
//! item        = group ('^' INT)? | interaction
//! interaction = atom (':' atom)*
//! group       = '(' sum ')'
//! atom        = wrapper '(' IDENT (',' IDENT)* (',' IDENT '=' NUMBER)* ')'
//!             | IDENT | '1'
//! ```

use super::{
    ComponentKind, FormulaError, TermComponent, DEFAULT_LIN_DEGREE, DEFAULT_SM_BASIS,
    DEFAULT_SM_DEGREE, DEFAULT_SM_PENALTY_ORDER, DEFAULT_SRF_BASIS, DEFAULT_SRF_PENALTY_ORDER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wrapper {
    Lin,
    Sm,
    Fct,
    Rnd,
    Srf,
    Mrf,
    U,
}

impl Wrapper {
    fn from_name(name: &str) -> Option<Wrapper> {
        match name {
            "lin" => Some(Wrapper::Lin),
            "sm" => Some(Wrapper::Sm),
            "fct" => Some(Wrapper::Fct),
            "rnd" => Some(Wrapper::Rnd),
            "srf" => Some(Wrapper::Srf),
            "mrf" => Some(Wrapper::Mrf),
            "u" => Some(Wrapper::U),
            _ => None,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Wrapper::Lin => "lin",
            Wrapper::Sm => "sm",
            Wrapper::Fct => "fct",
            Wrapper::Rnd => "rnd",
            Wrapper::Srf => "srf",
            Wrapper::Mrf => "mrf",
            Wrapper::U => "u",
        }
    }

    fn covariate_count(&self) -> usize {
        match self {
            Wrapper::Srf => 2,
            _ => 1,
        }
    }
}

/// A term-type wrapper applied to covariates, with optional key=value
/// arguments already resolved against the wrapper's defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct WrappedTerm {
    pub wrapper: Wrapper,
    pub covariates: Vec<String>,
    pub kind: ComponentKind,
}

impl WrappedTerm {
    pub fn component(&self) -> TermComponent {
        TermComponent {
            kind: self.kind.clone(),
            covariates: self.covariates.clone(),
        }
    }
}

/// One additive item of the formula body.
#[derive(Debug, Clone, PartialEq)]
pub enum AstItem {
    /// Bare covariate; its term type is guessed from the schema.
    Raw(String),
    /// Literal `1`; a no-op since the intercept is always included.
    One,
    Wrapped(WrappedTerm),
    /// Explicit `a:b` interaction of atoms.
    Interaction(Vec<AstItem>),
    /// Parenthesized group, optionally raised to a power (`(a+b)^2`).
    Group {
        items: Vec<(Sign, AstItem)>,
        power: u32,
    },
}

/// Parsed formula: response name plus signed additive items in order of
/// appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct Ast {
    pub response: String,
    pub items: Vec<(Sign, AstItem)>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Tilde,
    Plus,
    Minus,
    Colon,
    Caret,
    Star,
    LParen,
    RParen,
    Comma,
    Equals,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(usize, Tok)>, FormulaError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        while let Some(tok) = lx.next_token()? {
            out.push(tok);
        }
        Ok(out)
    }

    fn next_token(&mut self) -> Result<Option<(usize, Tok)>, FormulaError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= bytes.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = bytes[self.pos];
        let tok = match c {
            b'~' => Tok::Tilde,
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b':' => Tok::Colon,
            b'^' => Tok::Caret,
            b'*' => Tok::Star,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'=' => Tok::Equals,
            _ if c.is_ascii_alphabetic() || c == b'_' => {
                while self.pos < bytes.len()
                    && (bytes[self.pos].is_ascii_alphanumeric()
                        || bytes[self.pos] == b'_'
                        || bytes[self.pos] == b'.')
                {
                    self.pos += 1;
                }
                return Ok(Some((
                    start,
                    Tok::Ident(self.src[start..self.pos].to_string()),
                )));
            }
            _ if c.is_ascii_digit() => {
                while self.pos < bytes.len()
                    && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.')
                {
                    self.pos += 1;
                }
                let text = &self.src[start..self.pos];
                let value = text.parse::<f64>().map_err(|_| FormulaError::Syntax {
                    offset: start,
                    message: format!("invalid number '{text}'"),
                })?;
                return Ok(Some((start, Tok::Number(value))));
            }
            _ => {
                return Err(FormulaError::Syntax {
                    offset: start,
                    message: format!("unexpected character '{}'", c as char),
                })
            }
        };
        self.pos += 1;
        Ok(Some((start, tok)))
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    idx: usize,
    end: usize,
}

/// Parse formula text into an AST. The AST preserves the order of term
/// appearance; wrapper arguments are resolved against their defaults.
pub fn parse_formula(text: &str) -> Result<Ast, FormulaError> {
    let tilde_count = text.bytes().filter(|&b| b == b'~').count();
    if tilde_count != 1 {
        return Err(FormulaError::DuplicateResponse);
    }
    let toks = Lexer::tokens(text)?;
    let mut p = Parser {
        toks,
        idx: 0,
        end: text.len(),
    };
    let response = match p.next() {
        Some((_, Tok::Ident(name))) => name,
        other => {
            return Err(FormulaError::Syntax {
                offset: other.map(|(o, _)| o).unwrap_or(0),
                message: "expected response name".to_string(),
            })
        }
    };
    match p.next() {
        Some((_, Tok::Tilde)) => {}
        other => {
            return Err(FormulaError::Syntax {
                offset: other.map(|(o, _)| o).unwrap_or(p.end),
                message: "expected '~' after response".to_string(),
            })
        }
    }
    let items = p.parse_sum()?;
    if let Some((offset, _)) = p.peek() {
        return Err(FormulaError::Syntax {
            offset,
            message: "unexpected trailing input".to_string(),
        });
    }
    Ok(Ast { response, items })
}

impl Parser {
    fn peek(&self) -> Option<(usize, Tok)> {
        self.toks.get(self.idx).cloned()
    }

    fn next(&mut self) -> Option<(usize, Tok)> {
        let t = self.toks.get(self.idx).cloned();
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<usize, FormulaError> {
        match self.next() {
            Some((offset, t)) if t == tok => Ok(offset),
            Some((offset, _)) => Err(FormulaError::Syntax {
                offset,
                message: format!("expected {what}"),
            }),
            None => Err(FormulaError::Syntax {
                offset: self.end,
                message: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn parse_sum(&mut self) -> Result<Vec<(Sign, AstItem)>, FormulaError> {
        let mut items = Vec::new();
        let first = self.parse_item()?;
        items.push((Sign::Plus, first));
        loop {
            match self.peek() {
                Some((_, Tok::Plus)) => {
                    self.next();
                    items.push((Sign::Plus, self.parse_item()?));
                }
                Some((_, Tok::Minus)) => {
                    self.next();
                    items.push((Sign::Minus, self.parse_item()?));
                }
                Some((offset, Tok::Star)) => return Err(FormulaError::StarUnsupported { offset }),
                _ => break,
            }
        }
        Ok(items)
    }

    fn parse_item(&mut self) -> Result<AstItem, FormulaError> {
        match self.peek() {
            Some((_, Tok::LParen)) => {
                self.next();
                let items = self.parse_sum()?;
                self.expect(Tok::RParen, "')'")?;
                let power = if let Some((offset, Tok::Caret)) = self.peek() {
                    self.next();
                    match self.next() {
                        Some((num_off, Tok::Number(v))) => {
                            let p = v as u32;
                            if p as f64 != v || p < 2 {
                                return Err(FormulaError::Syntax {
                                    offset: num_off,
                                    message: "power must be an integer >= 2".to_string(),
                                });
                            }
                            if p != 2 {
                                return Err(FormulaError::PowerUnsupported {
                                    offset: num_off,
                                    power: p,
                                });
                            }
                            p
                        }
                        _ => {
                            return Err(FormulaError::Syntax {
                                offset,
                                message: "expected integer after '^'".to_string(),
                            })
                        }
                    }
                } else {
                    1
                };
                Ok(AstItem::Group { items, power })
            }
            Some((offset, Tok::Star)) => Err(FormulaError::StarUnsupported { offset }),
            _ => self.parse_interaction(),
        }
    }

    fn parse_interaction(&mut self) -> Result<AstItem, FormulaError> {
        let first = self.parse_atom()?;
        let mut atoms = vec![first];
        while let Some((_, Tok::Colon)) = self.peek() {
            self.next();
            atoms.push(self.parse_atom()?);
        }
        if atoms.len() == 1 {
            Ok(atoms.pop().unwrap())
        } else {
            Ok(AstItem::Interaction(atoms))
        }
    }

    fn parse_atom(&mut self) -> Result<AstItem, FormulaError> {
        match self.next() {
            Some((_, Tok::Number(v))) if v == 1.0 => Ok(AstItem::One),
            Some((offset, Tok::Number(_))) => Err(FormulaError::Syntax {
                offset,
                message: "only the literal '1' is allowed as a bare number".to_string(),
            }),
            Some((offset, Tok::Ident(name))) => {
                if let Some((_, Tok::LParen)) = self.peek() {
                    let wrapper = Wrapper::from_name(&name)
                        .ok_or(FormulaError::UnknownWrapper { offset, name })?;
                    self.parse_wrapped(wrapper)
                } else {
                    Ok(AstItem::Raw(name))
                }
            }
            Some((offset, _)) => Err(FormulaError::Syntax {
                offset,
                message: "expected a term".to_string(),
            }),
            None => Err(FormulaError::Syntax {
                offset: self.end,
                message: "expected a term, found end of input".to_string(),
            }),
        }
    }

    fn parse_wrapped(&mut self, wrapper: Wrapper) -> Result<AstItem, FormulaError> {
        self.expect(Tok::LParen, "'('")?;
        let mut covariates = Vec::new();
        let mut args: Vec<(String, f64)> = Vec::new();
        loop {
            match self.next() {
                Some((offset, Tok::Ident(name))) => {
                    if let Some((_, Tok::Equals)) = self.peek() {
                        self.next();
                        match self.next() {
                            Some((_, Tok::Number(v))) => args.push((name, v)),
                            other => {
                                return Err(FormulaError::Syntax {
                                    offset: other.map(|(o, _)| o).unwrap_or(self.end),
                                    message: "expected numeric argument value".to_string(),
                                })
                            }
                        }
                    } else {
                        if !args.is_empty() {
                            return Err(FormulaError::Syntax {
                                offset,
                                message: "covariates must precede key=value arguments"
                                    .to_string(),
                            });
                        }
                        covariates.push(name);
                    }
                }
                Some((offset, _)) => {
                    return Err(FormulaError::Syntax {
                        offset,
                        message: "expected covariate or argument name".to_string(),
                    })
                }
                None => {
                    return Err(FormulaError::Syntax {
                        offset: self.end,
                        message: "unterminated wrapper call".to_string(),
                    })
                }
            }
            match self.next() {
                Some((_, Tok::Comma)) => continue,
                Some((_, Tok::RParen)) => break,
                Some((offset, _)) => {
                    return Err(FormulaError::Syntax {
                        offset,
                        message: "expected ',' or ')'".to_string(),
                    })
                }
                None => {
                    return Err(FormulaError::Syntax {
                        offset: self.end,
                        message: "unterminated wrapper call".to_string(),
                    })
                }
            }
        }
        if covariates.len() != wrapper.covariate_count() {
            return Err(FormulaError::CovariateCount(
                wrapper.name().to_string(),
                wrapper.covariate_count(),
            ));
        }
        let kind = resolve_kind(wrapper, &args)?;
        Ok(AstItem::Wrapped(WrappedTerm {
            wrapper,
            covariates,
            kind,
        }))
    }
}

fn resolve_kind(wrapper: Wrapper, args: &[(String, f64)]) -> Result<ComponentKind, FormulaError> {
    let lookup = |key: &str| args.iter().find(|(k, _)| k == key).map(|(_, v)| *v);
    let check_known = |allowed: &[&str]| -> Result<(), FormulaError> {
        for (k, _) in args {
            if !allowed.contains(&k.as_str()) {
                return Err(FormulaError::UnknownArgument {
                    wrapper: wrapper.name(),
                    arg: k.clone(),
                });
            }
        }
        Ok(())
    };
    Ok(match wrapper {
        Wrapper::Lin => {
            check_known(&["degree"])?;
            ComponentKind::Lin {
                degree: lookup("degree").map(|v| v as usize).unwrap_or(DEFAULT_LIN_DEGREE),
            }
        }
        Wrapper::Sm => {
            check_known(&["k", "degree", "order"])?;
            ComponentKind::Sm {
                n_basis: lookup("k").map(|v| v as usize).unwrap_or(DEFAULT_SM_BASIS),
                degree: lookup("degree").map(|v| v as usize).unwrap_or(DEFAULT_SM_DEGREE),
                penalty_order: lookup("order")
                    .map(|v| v as usize)
                    .unwrap_or(DEFAULT_SM_PENALTY_ORDER),
            }
        }
        Wrapper::Fct => {
            check_known(&[])?;
            ComponentKind::Fct
        }
        Wrapper::Rnd => {
            check_known(&[])?;
            ComponentKind::Rnd
        }
        Wrapper::Srf => {
            check_known(&["k", "order"])?;
            ComponentKind::Srf {
                n_basis: lookup("k").map(|v| v as usize).unwrap_or(DEFAULT_SRF_BASIS),
                penalty_order: lookup("order")
                    .map(|v| v as usize)
                    .unwrap_or(DEFAULT_SRF_PENALTY_ORDER),
            }
        }
        Wrapper::Mrf => {
            check_known(&[])?;
            ComponentKind::Mrf
        }
        Wrapper::U => {
            check_known(&[])?;
            ComponentKind::U
        }
    })
}
