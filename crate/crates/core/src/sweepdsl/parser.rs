use std::str::FromStr;

use indexmap::IndexMap;
use rust_decimal::Decimal;

use super::{Arg, DslError, Literal, SearchSpace, SpaceEntry, SpaceExpr};

/// Lowercase snake-case form of a table label; `%` reads as `percent`.
pub fn normalize_name(label: &str) -> String {
    let mut out = String::new();
    let mut gap = false;
    for c in label.chars() {
        let piece: Option<String> = if c == '%' {
            Some("percent".into())
        } else if c.is_ascii_alphanumeric() {
            Some(c.to_ascii_lowercase().to_string())
        } else {
            None
        };
        match piece {
            Some(p) => {
                if gap && !out.is_empty() {
                    out.push('_');
                }
                gap = false;
                out.push_str(&p);
            }
            None => gap = true,
        }
    }
    out
}

struct Parser {
    chars: Vec<char>,
    i: usize,
}

fn syntax(position: usize, expected: &str) -> DslError {
    DslError::SyntaxError {
        position,
        expected: expected.into(),
    }
}

fn is_word_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.')
}

impl Parser {
    fn new(text: &str) -> Self {
        Parser {
            chars: text.chars().collect(),
            i: 0,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.i).copied()
    }

    fn peek_at(&self, k: usize) -> Option<char> {
        self.chars.get(self.i + k).copied()
    }

    fn ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.i += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.ws();
        if self.peek() == Some(c) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    /// Word at the cursor without consuming it.
    fn word_ahead(&self, from: usize) -> Option<String> {
        let c = *self.chars.get(from)?;
        if !is_word_start(c) {
            return None;
        }
        let end = (from..self.chars.len())
            .find(|&j| !is_word_char(self.chars[j]))
            .unwrap_or(self.chars.len());
        Some(self.chars[from..end].iter().collect())
    }

    fn at_keyword_and(&self) -> bool {
        self.word_ahead(self.i).as_deref() == Some("and")
    }

    fn list(&mut self) -> Result<SpaceExpr, DslError> {
        let mut items = vec![self.union()?];
        while self.eat(',') {
            items.push(self.union()?);
        }
        Ok(if items.len() == 1 {
            items.pop().expect("one item")
        } else {
            SpaceExpr::TermList(items)
        })
    }

    fn union(&mut self) -> Result<SpaceExpr, DslError> {
        let mut items = vec![self.atom()?];
        loop {
            self.ws();
            if !self.at_keyword_and() {
                break;
            }
            self.i += 3;
            items.push(self.atom()?);
        }
        Ok(if items.len() == 1 {
            items.pop().expect("one item")
        } else {
            SpaceExpr::Union(items)
        })
    }

    fn items(&mut self, close: char) -> Result<Vec<SpaceExpr>, DslError> {
        let mut items = Vec::new();
        if self.eat(close) {
            return Ok(items);
        }
        loop {
            items.push(self.union()?);
            if self.eat(close) {
                return Ok(items);
            }
            if !self.eat(',') {
                return Err(syntax(self.i, &format!("',' or '{close}'")));
            }
        }
    }

    fn args(&mut self) -> Result<Vec<Arg>, DslError> {
        let mut args = Vec::new();
        if self.eat(')') {
            return Ok(args);
        }
        loop {
            self.ws();
            let mut name = None;
            if let Some(w) = self.word_ahead(self.i) {
                let mut j = self.i + w.chars().count();
                while self.chars.get(j).is_some_and(|c| c.is_whitespace()) {
                    j += 1;
                }
                if self.chars.get(j) == Some(&'=') {
                    name = Some(w);
                    self.i = j + 1;
                }
            }
            args.push(Arg {
                name,
                value: self.union()?,
            });
            if self.eat(')') {
                return Ok(args);
            }
            if !self.eat(',') {
                return Err(syntax(self.i, "',' or ')'"));
            }
        }
    }

    fn atom(&mut self) -> Result<SpaceExpr, DslError> {
        self.ws();
        let start = self.i;
        match self.peek() {
            None => Err(syntax(start, "value")),
            Some('"') => self.quoted(),
            Some('[') => self.bracket(),
            Some('{') => {
                self.i += 1;
                let items = self.items('}')?;
                if items.is_empty() {
                    return Err(syntax(start + 1, "value"));
                }
                Ok(SpaceExpr::Set(items))
            }
            Some('(') => {
                self.i += 1;
                Ok(SpaceExpr::Term("tuple".into(), self.args()?))
            }
            Some('-') if !self.peek_at(1).is_some_and(|c| c.is_ascii_digit() || c == '.') => {
                self.i += 1;
                Ok(SpaceExpr::NotSelected)
            }
            Some(c) if c.is_ascii_digit() || matches!(c, '-' | '+' | '.') => self.number_literal(),
            Some(c) if is_word_start(c) => self.word_atom(),
            Some(_) => Err(syntax(start, "value")),
        }
    }

    fn quoted(&mut self) -> Result<SpaceExpr, DslError> {
        let start = self.i;
        self.i += 1;
        let mut s = String::new();
        loop {
            match self.peek() {
                None => return Err(syntax(start, "closing '\"'")),
                Some('"') => {
                    self.i += 1;
                    return Ok(SpaceExpr::Literal(Literal::Str(s)));
                }
                Some('\\') => {
                    let next = self.peek_at(1).ok_or_else(|| syntax(self.i + 1, "escaped character"))?;
                    s.push(next);
                    self.i += 2;
                }
                Some(c) => {
                    s.push(c);
                    self.i += 1;
                }
            }
        }
    }

    fn raw_number(&mut self) -> Result<(Decimal, bool), DslError> {
        self.ws();
        let start = self.i;
        let signed = matches!(self.peek(), Some('-' | '+'));
        if signed {
            self.i += 1;
        }
        let digits = |p: &mut Parser| {
            let s = p.i;
            while p.peek().is_some_and(|c| c.is_ascii_digit()) {
                p.i += 1;
            }
            p.i - s
        };
        let mut n = digits(self);
        if self.peek() == Some('.') {
            self.i += 1;
            n += digits(self);
        }
        if n == 0 {
            return Err(syntax(start, "number"));
        }
        if matches!(self.peek(), Some('e' | 'E'))
            && (self.peek_at(1).is_some_and(|c| c.is_ascii_digit())
                || (matches!(self.peek_at(1), Some('-' | '+')) && self.peek_at(2).is_some_and(|c| c.is_ascii_digit())))
        {
            self.i += 2;
            digits(self);
        }
        let text: String = self.chars[start..self.i].iter().collect();
        let text = text.strip_prefix('+').unwrap_or(&text);
        let value = if text.contains(['e', 'E']) {
            Decimal::from_scientific(text)
        } else {
            Decimal::from_str(text)
        }
        .map_err(|_| syntax(start, "representable number"))?;
        Ok((value, signed))
    }

    fn number_literal(&mut self) -> Result<SpaceExpr, DslError> {
        let start = self.i;
        let (value, signed) = self.raw_number()?;
        match self.peek() {
            Some('%') => {
                self.i += 1;
                Ok(SpaceExpr::Literal(Literal::Percent(value)))
            }
            Some('x' | '×') if self.peek_at(1).is_some_and(|c| c.is_ascii_digit()) => {
                let mut dims = vec![dim_component(value, signed, start)?];
                while matches!(self.peek(), Some('x' | '×')) && self.peek_at(1).is_some_and(|c| c.is_ascii_digit()) {
                    self.i += 1;
                    let at = self.i;
                    let (v, s) = self.raw_number()?;
                    dims.push(dim_component(v, s, at)?);
                }
                self.no_trailing_word()?;
                Ok(SpaceExpr::Literal(Literal::Dims(dims)))
            }
            _ => {
                self.no_trailing_word()?;
                Ok(SpaceExpr::Literal(Literal::Number(value)))
            }
        }
    }

    fn no_trailing_word(&self) -> Result<(), DslError> {
        if self.peek().is_some_and(is_word_char) {
            return Err(syntax(self.i, "delimiter after number"));
        }
        Ok(())
    }

    fn bracket(&mut self) -> Result<SpaceExpr, DslError> {
        let start = self.i;
        self.i += 1;
        if self.eat(']') {
            return Err(DslError::EmptyChoice(start));
        }
        let mut items = Vec::new();
        let mut factor_at = None;
        loop {
            self.ws();
            if matches!(self.peek(), Some('x' | '×')) && self.peek_at(1).is_some_and(|c| c.is_ascii_digit()) {
                self.i += 1;
                factor_at = Some(items.len());
                items.push(SpaceExpr::number(self.raw_number()?.0));
            } else {
                items.push(self.union()?);
            }
            if self.eat(']') {
                break;
            }
            if !self.eat(',') {
                return Err(syntax(self.i, "',' or ']'"));
            }
        }
        let nums: Option<Vec<Decimal>> = items.iter().map(SpaceExpr::as_number).collect();
        match (nums.as_deref(), factor_at) {
            (Some(&[lo, hi, k]), Some(2)) => {
                if lo > hi {
                    Err(DslError::ReversedRange(start))
                } else if k <= Decimal::ONE || lo <= Decimal::ZERO {
                    Err(DslError::BadStep(start))
                } else {
                    Ok(SpaceExpr::Geometric(lo, hi, k))
                }
            }
            (_, Some(_)) => Err(syntax(start, "geometric factor as the third of three numbers")),
            (Some(&[lo, hi]), None) => {
                if lo > hi {
                    Err(DslError::ReversedRange(start))
                } else {
                    Ok(SpaceExpr::Range(lo, hi))
                }
            }
            (Some(&[lo, hi, step]), None) => {
                if lo > hi {
                    Err(DslError::ReversedRange(start))
                } else if step <= Decimal::ZERO {
                    Err(DslError::BadStep(start))
                } else {
                    Ok(SpaceExpr::Stepped(lo, hi, step))
                }
            }
            _ => Ok(SpaceExpr::List(items)),
        }
    }

    fn word_atom(&mut self) -> Result<SpaceExpr, DslError> {
        let start = self.i;
        let first = self.word_ahead(self.i).expect("word start checked");
        self.i += first.chars().count();
        let after_word = self.i;
        self.ws();
        if first.eq_ignore_ascii_case("choice") && self.peek() == Some('[') {
            let open = self.i;
            self.i += 1;
            let items = self.items(']')?;
            if items.is_empty() {
                return Err(DslError::EmptyChoice(open));
            }
            return Ok(SpaceExpr::Choice(items));
        }
        if self.peek() == Some('(') {
            self.i += 1;
            return Ok(SpaceExpr::Term(first, self.args()?));
        }
        self.i = after_word;
        let mut words = vec![first];
        loop {
            let mut j = self.i;
            while self.chars.get(j).is_some_and(|c| c.is_whitespace()) {
                j += 1;
            }
            if j == self.i {
                break;
            }
            match self.word_ahead(j) {
                Some(w) if w != "and" => {
                    self.i = j + w.chars().count();
                    words.push(w);
                }
                _ => break,
            }
        }
        self.ws();
        if self.peek() == Some('(') {
            return Err(syntax(start, "quoted string for text containing '('"));
        }
        if words.len() == 1 {
            match words[0].as_str() {
                "True" | "true" => return Ok(SpaceExpr::Literal(Literal::Bool(true))),
                "False" | "false" => return Ok(SpaceExpr::Literal(Literal::Bool(false))),
                _ => {}
            }
        }
        Ok(SpaceExpr::Literal(Literal::Str(words.join(" "))))
    }
}

fn dim_component(value: Decimal, signed: bool, at: usize) -> Result<u64, DslError> {
    if signed || !value.fract().is_zero() || value <= Decimal::ZERO {
        return Err(syntax(at, "positive integer dimension"));
    }
    u64::try_from(value).map_err(|_| syntax(at, "positive integer dimension"))
}

pub fn parse_expr(text: &str) -> Result<SpaceExpr, DslError> {
    let mut p = Parser::new(text);
    p.ws();
    let e = p.list()?;
    p.ws();
    if p.i != p.chars.len() {
        return Err(syntax(p.i, "',' or end of expression"));
    }
    Ok(e)
}

/// Strips a `#` comment that is not inside a quoted string.
fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_quote => escaped = true,
            '"' => in_quote = !in_quote,
            '#' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Parses a `.sss` document: one `label = expr` per line, `#` comments.
pub fn parse_space(text: &str) -> Result<SearchSpace, DslError> {
    let mut entries: IndexMap<String, SpaceEntry> = IndexMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let at = |e: DslError| DslError::AtLine {
            line: n + 1,
            source: Box::new(e),
        };
        let Some((label, expr)) = line.split_once('=') else {
            return Err(at(syntax(line.len(), "'='")));
        };
        let label = label.trim();
        let name = normalize_name(label);
        if name.is_empty() {
            return Err(at(syntax(0, "hyperparameter name")));
        }
        let expr = parse_expr(expr).map_err(|e| match e {
            DslError::SyntaxError { position, expected } => DslError::SyntaxError {
                position: position + label.len() + 1,
                expected,
            },
            other => other,
        });
        let expr = expr.map_err(at)?;
        if entries.contains_key(&name) {
            return Err(at(DslError::DuplicateName(name)));
        }
        entries.insert(
            name,
            SpaceEntry {
                label: label.to_string(),
                expr,
            },
        );
    }
    Ok(SearchSpace { entries })
}
