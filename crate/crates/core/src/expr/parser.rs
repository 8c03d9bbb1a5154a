use super::{BinOp, Expr, Hole, ParseError, ParseErrorKind, Segment, Template};

const MAX_DEPTH: usize = 64;

/// Split `src` into literal runs and `${...}` holes. `$$` is an escaped `$`;
/// any other `$` not followed by `{` is kept literally.
pub fn parse_template(src: &str) -> Result<Template, ParseError> {
    let mut segments = Vec::new();
    let mut text = String::new();
    let mut lit_start = 0;
    let bytes = src.as_bytes();
    let mut i = 0;
    let flush = |segments: &mut Vec<Segment>, text: &mut String, raw: &str| {
        if !raw.is_empty() {
            segments.push(Segment::Literal { text: std::mem::take(text), raw: raw.to_string() });
        }
    };
    while i < bytes.len() {
        match (bytes[i], bytes.get(i + 1)) {
            (b'$', Some(b'$')) => {
                text.push('$');
                i += 2;
            }
            (b'$', Some(b'{')) => {
                flush(&mut segments, &mut text, &src[lit_start..i]);
                let body_start = i + 2;
                let close = src[body_start..]
                    .find('}')
                    .map(|p| body_start + p)
                    .ok_or(ParseError { offset: i, kind: ParseErrorKind::UnterminatedHole })?;
                let raw = &src[body_start..close];
                if raw.trim().is_empty() {
                    return Err(ParseError { offset: i, kind: ParseErrorKind::EmptyHole });
                }
                let mut p = Parser { src: raw, pos: 0, base: body_start, vars: Vec::new(), depth: 0 };
                let expr = p.parse_all()?;
                segments.push(Segment::Hole(Hole { expr, raw: raw.to_string(), offset: i, vars: p.vars }));
                i = close + 1;
                lit_start = i;
            }
            _ => {
                // Advance by one whole character so slicing stays on boundaries.
                let ch = src[i..].chars().next().unwrap();
                text.push(ch);
                i += ch.len_utf8();
            }
        }
    }
    flush(&mut segments, &mut text, &src[lit_start..]);
    Ok(Template { segments })
}

pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    if src.trim().is_empty() {
        return Err(ParseError { offset: 0, kind: ParseErrorKind::UnexpectedEnd });
    }
    Parser { src, pos: 0, base: 0, vars: Vec::new(), depth: 0 }.parse_all()
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    /// Offset of `src` inside the enclosing template.
    base: usize,
    vars: Vec<(String, usize)>,
    depth: usize,
}

impl Parser<'_> {
    fn err(&self, at: usize, kind: ParseErrorKind) -> ParseError {
        ParseError { offset: self.base + at, kind }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek().filter(|c| c.is_whitespace()) {
            self.pos += c.len_utf8();
        }
    }

    fn unexpected(&self) -> ParseError {
        match self.peek() {
            Some(c) => self.err(self.pos, ParseErrorKind::UnexpectedChar(c)),
            None => self.err(self.pos, ParseErrorKind::UnexpectedEnd),
        }
    }

    fn parse_all(&mut self) -> Result<Expr, ParseError> {
        let e = self.sum()?;
        self.skip_ws();
        if self.pos < self.src.len() {
            return Err(self.unexpected());
        }
        Ok(e)
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        loop {
            self.skip_ws();
            let op = match self.peek() {
                Some('+') => BinOp::Add,
                Some('-' | '−') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += self.peek().unwrap().len_utf8();
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            self.skip_ws();
            let op = match self.peek() {
                Some('*' | '×') => BinOp::Mul,
                Some('/' | '÷') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += self.peek().unwrap().len_utf8();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        if let Some(c @ ('-' | '−')) = self.peek() {
            let at = self.pos;
            self.pos += c.len_utf8();
            self.enter(at)?;
            let e = self.unary()?;
            self.depth -= 1;
            return Ok(Expr::Neg(Box::new(e)));
        }
        self.primary()
    }

    fn enter(&mut self, at: usize) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.err(at, ParseErrorKind::UnexpectedChar(self.src[at..].chars().next().unwrap())));
        }
        Ok(())
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(self.unexpected()),
            Some('(') => {
                self.enter(start)?;
                self.pos += 1;
                let e = self.sum()?;
                self.skip_ws();
                if self.peek() != Some(')') {
                    return Err(self.err(self.pos, ParseErrorKind::UnclosedParen));
                }
                self.pos += 1;
                self.depth -= 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => self.path(),
            Some(_) => Err(self.unexpected()),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let b = self.src.as_bytes();
        let mut i = self.pos;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i < b.len() && b[i] == b'.' {
            i += 1;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
        }
        if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
            let mut j = i + 1;
            if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                j += 1;
            }
            if j < b.len() && b[j].is_ascii_digit() {
                while j < b.len() && b[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = &self.src[start..i];
        let v: f64 = text.parse().map_err(|_| self.err(start, ParseErrorKind::BadNumber))?;
        if !v.is_finite() {
            return Err(self.err(start, ParseErrorKind::BadNumber));
        }
        self.pos = i;
        Ok(Expr::Num(v))
    }

    fn ident_end(&self, from: usize) -> usize {
        let b = self.src.as_bytes();
        let mut i = from;
        while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
            i += 1;
        }
        i
    }

    fn path(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let b = self.src.as_bytes();
        let mut end = self.ident_end(start);
        // Continue through `.segment` while a segment actually follows.
        while end + 1 < b.len() && b[end] == b'.' && (b[end + 1].is_ascii_alphabetic() || b[end + 1] == b'_') {
            end = self.ident_end(end + 1);
        }
        let name = &self.src[start..end];
        self.pos = end;
        self.skip_ws();
        if self.peek() == Some('(') {
            if name != "time" {
                return Err(self.err(start, ParseErrorKind::UnknownFunction(name.to_string())));
            }
            self.pos += 1;
            self.skip_ws();
            if self.peek() != Some(')') {
                return Err(self.err(self.pos, ParseErrorKind::UnclosedParen));
            }
            self.pos += 1;
            return Ok(Expr::Time);
        }
        self.vars.push((name.to_string(), self.base + start));
        Ok(Expr::Var(name.to_string()))
    }
}
