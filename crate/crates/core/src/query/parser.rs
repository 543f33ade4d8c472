use super::ast::{ArithOp, Bound, Expr, MacroKind, SeriesExpr, StatisticMacro};
use super::QueryError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num { value: f64, int: Option<u64> },
    Ident(String),
    LParen,
    RParen,
    Comma,
    Op(ArithOp),
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, QueryError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = text[i..].chars().next().unwrap();
        let start = i;
        let simple = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '+' => Some(Tok::Op(ArithOp::Add)),
            '-' | '\u{2212}' => Some(Tok::Op(ArithOp::Sub)),
            '*' | '\u{00d7}' => Some(Tok::Op(ArithOp::Mul)),
            '/' | '\u{00f7}' => Some(Tok::Op(ArithOp::Div)),
            _ => None,
        };
        if let Some(t) = simple {
            out.push((t, start));
            i += c.len_utf8();
        } else if c.is_whitespace() {
            i += c.len_utf8();
        } else if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let int_end = i;
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let s = &text[start..i];
            let value: f64 = s
                .parse()
                .map_err(|_| QueryError::Syntax { position: start, expected: "a number".into() })?;
            if !value.is_finite() {
                return Err(QueryError::Syntax { position: start, expected: "a finite number".into() });
            }
            let int = if int_end == i { s.parse::<u64>().ok() } else { None };
            out.push((Tok::Num { value, int }, start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
        } else {
            return Err(QueryError::Syntax { position: start, expected: format!("a token, found `{c}`") });
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Func {
    Sum,
    Sqrt,
    SeriesGen,
    Plus,
    Minus,
    Times,
    Lag,
    Macro(MacroKind),
}

fn lookup(name: &str) -> Option<Func> {
    const TABLE: [(&str, Func); 7] = [
        ("sum", Func::Sum),
        ("sqrt", Func::Sqrt),
        ("seriesgen", Func::SeriesGen),
        ("plus", Func::Plus),
        ("minus", Func::Minus),
        ("times", Func::Times),
        ("lag", Func::Lag),
    ];
    TABLE
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|&(_, f)| f)
        .or_else(|| MacroKind::from_name(name).map(Func::Macro))
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn at(&self) -> usize {
        self.toks[self.pos].1
    }

    fn next(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: impl Into<String>) -> Result<T, QueryError> {
        Err(QueryError::Syntax { position: self.at(), expected: expected.into() })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), QueryError> {
        if *self.peek() == tok {
            self.next();
            Ok(())
        } else {
            self.fail(what)
        }
    }

    /// `IDENT (` if the next two tokens form a call.
    fn call_name(&self) -> Option<(String, usize)> {
        match (&self.toks[self.pos].0, self.toks.get(self.pos + 1).map(|t| &t.0)) {
            (Tok::Ident(name), Some(Tok::LParen)) => Some((name.clone(), self.at())),
            _ => None,
        }
    }

    fn expr(&mut self) -> Result<Expr, QueryError> {
        let mut left = self.term()?;
        while let Tok::Op(op @ (ArithOp::Add | ArithOp::Sub)) = *self.peek() {
            self.next();
            let right = self.term()?;
            left = Expr::arith(op, left, right);
        }
        Ok(left)
    }

    fn term(&mut self) -> Result<Expr, QueryError> {
        let mut left = self.factor()?;
        while let Tok::Op(op @ (ArithOp::Mul | ArithOp::Div)) = *self.peek() {
            self.next();
            let right = self.factor()?;
            left = Expr::arith(op, left, right);
        }
        Ok(left)
    }

    fn signed_number(&mut self) -> Result<f64, QueryError> {
        let negative = matches!(self.peek(), Tok::Op(ArithOp::Sub));
        if negative {
            self.next();
        }
        match *self.peek() {
            Tok::Num { value, .. } => {
                self.next();
                Ok(if negative { -value } else { value })
            }
            _ => self.fail("a number"),
        }
    }

    fn factor(&mut self) -> Result<Expr, QueryError> {
        if let Some((name, at)) = self.call_name() {
            let func = lookup(&name).ok_or(QueryError::UnknownFunction { name: name.clone(), position: at })?;
            self.next();
            self.next();
            let e = match func {
                Func::Sum => {
                    let series = self.series()?;
                    self.expect(Tok::Comma, "`,`")?;
                    let start_at = self.at();
                    let start = self.bound()?;
                    self.expect(Tok::Comma, "`,`")?;
                    let end = self.bound()?;
                    check_range(start, end, start_at)?;
                    Expr::Sum { series, start, end }
                }
                Func::Sqrt => Expr::Sqrt(Box::new(self.expr()?)),
                Func::Macro(kind) => Expr::Macro(self.macro_args(kind, &name)?),
                _ => {
                    return Err(QueryError::Syntax {
                        position: at,
                        expected: format!("an arithmetic expression; series operator `{name}` must be wrapped in Sum"),
                    })
                }
            };
            self.expect(Tok::RParen, "`)`")?;
            return Ok(e);
        }
        match self.peek().clone() {
            Tok::Num { value, .. } => {
                self.next();
                Ok(Expr::Number(value))
            }
            Tok::Op(ArithOp::Sub) => Ok(Expr::Number(self.signed_number()?)),
            Tok::LParen => {
                self.next();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(id) if id == "n" => {
                self.next();
                Ok(Expr::Length)
            }
            Tok::Ident(id) => self.fail(format!("an arithmetic expression; series `{id}` must be wrapped in Sum")),
            _ => self.fail("a number, `n`, `(` or a function call"),
        }
    }

    fn macro_args(&mut self, kind: MacroKind, name: &str) -> Result<StatisticMacro, QueryError> {
        let mut series = Vec::new();
        let mut lag = None;
        loop {
            match self.peek().clone() {
                Tok::Ident(id) if lag.is_none() => {
                    self.next();
                    series.push(id);
                }
                Tok::Num { int: Some(v), .. } if lag.is_none() && !series.is_empty() => {
                    self.next();
                    lag = Some(v);
                }
                _ => return self.fail("a series id or lag"),
            }
            if *self.peek() == Tok::Comma {
                self.next();
            } else {
                break;
            }
        }
        let wants_lag = kind == MacroKind::CrossCorrelation;
        if series.len() != kind.series_arity() || lag.is_some() != wants_lag {
            let expected = if wants_lag {
                "2 series and a lag".to_string()
            } else {
                format!("{} series", kind.series_arity())
            };
            return Err(QueryError::Arity {
                name: name.to_string(),
                expected,
                found: series.len() + lag.is_some() as usize,
            });
        }
        Ok(StatisticMacro { kind, series, lag })
    }

    fn series(&mut self) -> Result<SeriesExpr, QueryError> {
        if let Some((name, at)) = self.call_name() {
            let func = lookup(&name).ok_or(QueryError::UnknownFunction { name: name.clone(), position: at })?;
            self.next();
            self.next();
            let s = match func {
                Func::SeriesGen => {
                    let value = self.signed_number()?;
                    self.expect(Tok::Comma, "`,`")?;
                    let count_at = self.at();
                    let count = self.bound()?;
                    if count == Bound::Lit(0) {
                        return Err(QueryError::Syntax { position: count_at, expected: "a count >= 1".into() });
                    }
                    SeriesExpr::SeriesGen { value, count }
                }
                Func::Plus | Func::Minus | Func::Times => {
                    let a = self.series()?;
                    self.expect(Tok::Comma, "`,`")?;
                    let b = self.series()?;
                    match func {
                        Func::Plus => SeriesExpr::plus(a, b),
                        Func::Minus => SeriesExpr::minus(a, b),
                        _ => SeriesExpr::times(a, b),
                    }
                }
                Func::Lag => {
                    let series = self.series()?;
                    self.expect(Tok::Comma, "`,`")?;
                    let lag = match *self.peek() {
                        Tok::Num { int: Some(v), .. } => {
                            self.next();
                            v
                        }
                        _ => return self.fail("a non-negative integer lag"),
                    };
                    self.expect(Tok::Comma, "`,`")?;
                    let len = self.bound()?;
                    SeriesExpr::Lag { series: Box::new(series), lag, len }
                }
                _ => {
                    return Err(QueryError::Syntax {
                        position: at,
                        expected: format!("a series expression, found `{name}`"),
                    })
                }
            };
            self.expect(Tok::RParen, "`)`")?;
            return Ok(s);
        }
        match self.peek().clone() {
            Tok::Ident(id) => {
                self.next();
                Ok(SeriesExpr::Base(id))
            }
            _ => self.fail("a series expression"),
        }
    }

    fn bound(&mut self) -> Result<Bound, QueryError> {
        match self.peek().clone() {
            Tok::Num { int: Some(v), .. } => {
                self.next();
                Ok(Bound::Lit(v))
            }
            Tok::Ident(id) if id == "n" => {
                self.next();
                let sign = match *self.peek() {
                    Tok::Op(ArithOp::Add) => 1,
                    Tok::Op(ArithOp::Sub) => -1,
                    _ => return Ok(Bound::N(0)),
                };
                self.next();
                match *self.peek() {
                    Tok::Num { int: Some(v), .. } if v <= i64::MAX as u64 => {
                        self.next();
                        Ok(Bound::N(sign * v as i64))
                    }
                    _ => self.fail("an integer offset"),
                }
            }
            _ => self.fail("an integer index or `n`"),
        }
    }
}

fn check_range(start: Bound, end: Bound, at: usize) -> Result<(), QueryError> {
    let bad = |expected: &str| Err(QueryError::Syntax { position: at, expected: expected.into() });
    match (start, end) {
        (Bound::Lit(0), _) | (_, Bound::Lit(0)) => bad("an index >= 1"),
        (Bound::Lit(s), Bound::Lit(e)) if s > e => bad("a range with start <= end"),
        (Bound::N(s), Bound::N(e)) if s > e => bad("a range with start <= end"),
        _ => Ok(()),
    }
}

/// Parses query text into an [`Expr`].
pub fn parse(text: &str) -> Result<Expr, QueryError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.fail("end of input");
    }
    Ok(e)
}
