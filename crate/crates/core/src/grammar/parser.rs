//! Recursive-descent parser for the grammar text format.

use std::collections::BTreeMap;

use super::lexer::{tokenize, Tok, Token};
use super::*;
use crate::expr::{BinOp, Builtin, DistributionSpec, Expr, Family, AGE};

const SUBGRAMMAR_MSG: &str = "subgrammar calls are not supported";

pub fn parse_grammar(text: &str) -> Result<Grammar, ParseError> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0 };
    let g = p.grammar()?;
    resolve(g)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn at(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn peek(&self) -> &Tok {
        &self.at().tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span(&self) -> Span {
        let t = self.at();
        Span { line: t.line, col: t.col }
    }

    fn bump(&mut self) -> Tok {
        let t = self.peek().clone();
        self.pos += 1;
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        let s = self.span();
        Err(ParseError::Syntax { line: s.line, col: s.col, message: message.into() })
    }

    fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        self.error(format!("expected {wanted}, found {}", self.peek().describe()))
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok) -> PResult<()> {
        if self.eat(&t) {
            Ok(())
        } else {
            self.unexpected(&t.describe())
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => self.unexpected(what),
        }
    }

    fn grammar(&mut self) -> PResult<Grammar> {
        self.expect_kw("grammar")?;
        let name = self.ident("grammar name")?;
        self.expect(Tok::LBrace)?;
        let mut g = Grammar::empty(name);
        let mut dim_seen = false;
        loop {
            match self.peek().clone() {
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                Tok::Ident(kw) => match kw.as_str() {
                    "dim" => {
                        let span = self.span();
                        self.bump();
                        match self.bump() {
                            Tok::Int(d) if d >= 1 => g.dim = d as usize,
                            _ => {
                                return Err(ParseError::Syntax {
                                    line: span.line,
                                    col: span.col,
                                    message: "`dim` needs a positive integer".into(),
                                })
                            }
                        }
                        if dim_seen {
                            return sort_err(span, "dimension declared twice");
                        }
                        dim_seen = true;
                        self.expect(Tok::Semi)?;
                    }
                    "const" => {
                        let span = self.span();
                        self.bump();
                        let name = self.ident("constant name")?;
                        self.expect(Tok::Assign)?;
                        let value = self.signed_number()?;
                        self.expect(Tok::Semi)?;
                        g.constants.push(ConstDecl { name, value, span });
                    }
                    "species" => {
                        let d = self.species()?;
                        g.species.push(d);
                    }
                    "rule" => {
                        let r = self.rule()?;
                        g.rules.push(r);
                    }
                    "grammar" | "subgrammar" | "call" => return self.error(SUBGRAMMAR_MSG),
                    other => {
                        return self.error(format!(
                            "expected `dim`, `const`, `species`, `rule` or `}}`, found `{other}`"
                        ))
                    }
                },
                _ => return self.unexpected("a declaration or `}`"),
            }
        }
        if *self.peek() != Tok::Eof {
            return self.unexpected("end of input");
        }
        Ok(g)
    }

    fn signed_number(&mut self) -> PResult<f64> {
        let neg = self.eat(&Tok::Minus);
        let v = match self.bump() {
            Tok::Int(i) => i as f64,
            Tok::Real(r) => r,
            _ => {
                self.pos -= 1;
                return self.unexpected("a number");
            }
        };
        Ok(if neg { -v } else { v })
    }

    fn signed_int(&mut self) -> PResult<i64> {
        let neg = self.eat(&Tok::Minus);
        match self.bump() {
            Tok::Int(i) => Ok(if neg { -i } else { i }),
            _ => {
                self.pos -= 1;
                self.unexpected("an integer")
            }
        }
    }

    fn species(&mut self) -> PResult<SpeciesDecl> {
        let span = self.span();
        self.expect_kw("species")?;
        let name = self.ident("species name")?;
        self.expect(Tok::LBracket)?;
        let mut slots = Vec::new();
        if *self.peek() != Tok::RBracket {
            loop {
                let slot_name = if matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Colon {
                    let n = self.ident("slot name")?;
                    self.bump();
                    Some(n)
                } else {
                    None
                };
                let sort = self.sort()?;
                slots.push(SlotDecl { name: slot_name, sort });
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RBracket)?;
        self.expect(Tok::Semi)?;
        Ok(SpeciesDecl { name, slots, span })
    }

    fn sort(&mut self) -> PResult<Sort> {
        let span = self.span();
        match self.ident("a sort (`int`, `real` or `vec`)")?.as_str() {
            "int" => {
                if self.eat(&Tok::LParen) {
                    let lo = self.signed_int()?;
                    self.expect(Tok::DotDot)?;
                    let hi = self.signed_int()?;
                    self.expect(Tok::RParen)?;
                    if lo > hi {
                        return sort_err(span, format!("empty integer domain {lo}..{hi}"));
                    }
                    Ok(Sort::Int(Some((lo, hi))))
                } else {
                    Ok(Sort::Int(None))
                }
            }
            "real" => Ok(Sort::Real),
            "vec" => Ok(Sort::Vector),
            other => sort_err(span, format!("unknown sort `{other}`")),
        }
    }

    fn rule(&mut self) -> PResult<Rule> {
        let span = self.span();
        self.expect_kw("rule")?;
        let name = self.ident("rule name")?;
        let mut multiplicity = 1u32;
        if self.eat(&Tok::Star) {
            let s = self.span();
            match self.bump() {
                Tok::Int(m) if m >= 1 && m <= u32::MAX as i64 => multiplicity = m as u32,
                _ => {
                    return Err(ParseError::Syntax {
                        line: s.line,
                        col: s.col,
                        message: "multiplicity must be a positive integer".into(),
                    })
                }
            }
        }
        self.expect(Tok::Colon)?;
        let lhs = self.side(|p| p.pattern())?;
        self.expect(Tok::Arrow)?;
        let rhs = self.side(|p| p.template())?;
        let body = if self.eat_kw("with") {
            let propensity = self.expr()?;
            let mut fresh = Vec::new();
            if self.eat_kw("choosing") {
                loop {
                    fresh.push(self.fresh_var()?);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            RuleBody::Jump(JumpBody { propensity, fresh })
        } else if self.eat_kw("solving") {
            self.expect(Tok::LBrace)?;
            let mut derivatives = Vec::new();
            while *self.peek() != Tok::RBrace {
                derivatives.push(self.derivative()?);
                if !self.eat(&Tok::Comma) && !self.eat(&Tok::Semi) {
                    break;
                }
            }
            self.expect(Tok::RBrace)?;
            RuleBody::Continuous(ContinuousBody { derivatives })
        } else {
            return self.unexpected("`with` or `solving`");
        };
        self.expect(Tok::Semi)?;
        Ok(Rule { name, multiplicity, lhs, rhs, body, span })
    }

    fn side<T>(&mut self, mut item: impl FnMut(&mut Self) -> PResult<T>) -> PResult<Vec<T>> {
        if self.eat(&Tok::Empty) || self.eat(&Tok::Int(0)) {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        loop {
            out.push(item(self)?);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        Ok(out)
    }

    fn term_head(&mut self) -> PResult<(String, Span)> {
        let span = self.span();
        if self.is_kw("call") || self.is_kw("subgrammar") || self.is_kw("grammar") {
            return self.error(SUBGRAMMAR_MSG);
        }
        let name = self.ident("a species name")?;
        if *self.peek() == Tok::LParen {
            return self.error(SUBGRAMMAR_MSG);
        }
        self.expect(Tok::LBracket)?;
        Ok((name, span))
    }

    fn pattern(&mut self) -> PResult<TermPattern> {
        let (species, span) = self.term_head()?;
        let mut slots = Vec::new();
        if *self.peek() != Tok::RBracket {
            loop {
                let neg = self.eat(&Tok::Minus);
                let slot = match self.bump() {
                    Tok::Ident(v) if !neg => SlotPattern::Var(v),
                    Tok::Int(i) => SlotPattern::Int(if neg { -i } else { i }),
                    Tok::Real(r) => SlotPattern::Real(if neg { -r } else { r }),
                    _ => {
                        self.pos -= 1;
                        return self.unexpected("a variable or literal");
                    }
                };
                slots.push(slot);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RBracket)?;
        Ok(TermPattern { species, slots, span })
    }

    fn template(&mut self) -> PResult<TermTemplate> {
        let (species, span) = self.term_head()?;
        let mut slots = Vec::new();
        if *self.peek() != Tok::RBracket {
            loop {
                slots.push(self.expr()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RBracket)?;
        Ok(TermTemplate { species, slots, span })
    }

    fn fresh_var(&mut self) -> PResult<FreshVar> {
        let name = self.ident("a fresh variable name")?;
        let mut vector = false;
        if self.eat(&Tok::Colon) {
            let s = self.span();
            match self.ident("`vec`")?.as_str() {
                "vec" => vector = true,
                "real" | "int" => {}
                other => return sort_err(s, format!("unknown sort `{other}`")),
            }
        }
        self.expect(Tok::Tilde)?;
        let dist = self.distribution()?;
        Ok(FreshVar { name, vector, dist })
    }

    fn distribution(&mut self) -> PResult<DistributionSpec> {
        let span = self.span();
        let name = self.ident("a distribution family")?;
        let family = match Family::from_name(&name) {
            Some(f) => f,
            None => {
                return Err(ParseError::Syntax {
                    line: span.line,
                    col: span.col,
                    message: format!("unknown distribution `{name}`"),
                })
            }
        };
        self.expect(Tok::LParen)?;
        let params = self.expr_list(Tok::RParen)?;
        let (lo, hi) = family.arity();
        if params.len() < lo || params.len() > hi {
            return Err(ParseError::Syntax {
                line: span.line,
                col: span.col,
                message: format!("{name} takes {} parameters, got {}", arity_text(lo, hi), params.len()),
            });
        }
        Ok(DistributionSpec::new(family, params))
    }

    fn derivative(&mut self) -> PResult<Derivative> {
        let span = self.span();
        let d = self.ident("a derivative `dX/dt`")?;
        let target = match d.strip_prefix('d') {
            Some(t) if !t.is_empty() => t.to_string(),
            _ => {
                return Err(ParseError::Syntax {
                    line: span.line,
                    col: span.col,
                    message: format!("expected a derivative `dX/dt`, found `{d}`"),
                })
            }
        };
        self.expect(Tok::Slash)?;
        if !self.eat_kw("dt") {
            return self.unexpected("`dt`");
        }
        self.expect(Tok::Assign)?;
        let rhs = self.expr()?;
        Ok(Derivative { target, rhs })
    }

    fn expr_list(&mut self, close: Tok) -> PResult<Vec<Expr>> {
        let mut out = Vec::new();
        if self.eat(&close) {
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(close)?;
        Ok(out)
    }

    // Precedence climbing: || < && < comparison < + - < * / < unary < ^.
    fn expr(&mut self) -> PResult<Expr> {
        let mut l = self.and_expr()?;
        while self.eat(&Tok::OrOr) {
            let r = self.and_expr()?;
            l = Expr::binary(BinOp::Or, l, r);
        }
        Ok(l)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut l = self.cmp_expr()?;
        while self.eat(&Tok::AndAnd) {
            let r = self.cmp_expr()?;
            l = Expr::binary(BinOp::And, l, r);
        }
        Ok(l)
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let l = self.add_expr()?;
        let op = match self.peek() {
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::EqEq | Tok::Assign => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Ident(s) if s == "in" => {
                self.bump();
                self.expect(Tok::LBrace)?;
                let set = self.expr_list(Tok::RBrace)?;
                return Ok(Expr::In(Box::new(l), set));
            }
            _ => return Ok(l),
        };
        self.bump();
        let r = self.add_expr()?;
        Ok(Expr::binary(op, l, r))
    }

    fn add_expr(&mut self) -> PResult<Expr> {
        let mut l = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(l),
            };
            self.bump();
            let r = self.mul_expr()?;
            l = Expr::binary(op, l, r);
        }
    }

    fn mul_expr(&mut self) -> PResult<Expr> {
        let mut l = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(l),
            };
            self.bump();
            let r = self.unary()?;
            l = Expr::binary(op, l, r);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat(&Tok::Minus) {
            let e = self.unary()?;
            return Ok(match e {
                Expr::Int(i) if i >= 0 => Expr::Int(-i),
                Expr::Real(r) if !r.is_sign_negative() => Expr::Real(-r),
                other => Expr::Neg(Box::new(other)),
            });
        }
        if self.eat(&Tok::Plus) {
            return self.unary();
        }
        if self.eat(&Tok::Bang) {
            let e = self.unary()?;
            return Ok(Expr::Not(Box::new(e)));
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Expr> {
        let base = self.atom()?;
        if self.eat(&Tok::Caret) {
            let exp = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> PResult<Expr> {
        let span = self.span();
        match self.bump() {
            Tok::Int(i) => Ok(Expr::Int(i)),
            Tok::Real(r) => Ok(Expr::Real(r)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::LBracket => Ok(Expr::Vector(self.expr_list(Tok::RBracket)?)),
            Tok::Ident(name) => {
                if *self.peek() != Tok::LParen {
                    return Ok(Expr::Var(name));
                }
                self.bump();
                if name == "hazard" {
                    let t = self.expr()?;
                    self.expect(Tok::Semi)?;
                    let d = self.distribution()?;
                    self.expect(Tok::RParen)?;
                    return Ok(Expr::Hazard(Box::new(t), Box::new(d)));
                }
                let builtin = match Builtin::from_name(&name) {
                    Some(b) => b,
                    None => {
                        return Err(ParseError::Syntax {
                            line: span.line,
                            col: span.col,
                            message: format!("unknown function `{name}`"),
                        })
                    }
                };
                let args = if builtin == Builtin::NormalPdf {
                    let x = self.expr()?;
                    if !self.eat(&Tok::Semi) && !self.eat(&Tok::Comma) {
                        return self.unexpected("`;`");
                    }
                    let mut rest = self.expr_list(Tok::RParen)?;
                    rest.insert(0, x);
                    rest
                } else {
                    self.expr_list(Tok::RParen)?
                };
                let (lo, hi) = builtin.arity();
                if args.len() < lo || args.len() > hi {
                    return Err(ParseError::Syntax {
                        line: span.line,
                        col: span.col,
                        message: format!(
                            "`{}` takes {} arguments, got {}",
                            builtin.name(),
                            arity_text(lo, hi),
                            args.len()
                        ),
                    });
                }
                Ok(Expr::Call(builtin, args))
            }
            other => {
                self.pos -= 1;
                self.error(format!("expected an expression, found {}", other.describe()))
            }
        }
    }
}

fn arity_text(lo: usize, hi: usize) -> String {
    if lo == hi {
        lo.to_string()
    } else if hi == usize::MAX {
        format!("at least {lo}")
    } else {
        format!("{lo} to {hi}")
    }
}

fn sort_err<T>(span: Span, message: impl Into<String>) -> PResult<T> {
    Err(ParseError::Sort { line: span.line, col: span.col, message: message.into() })
}

fn resolve_expr(e: &Expr, consts: &BTreeMap<String, f64>) -> Expr {
    match e {
        Expr::Var(v) if consts.contains_key(v) => Expr::Const(v.clone()),
        Expr::Var(_) | Expr::Int(_) | Expr::Real(_) | Expr::Const(_) => e.clone(),
        Expr::Neg(x) => Expr::Neg(Box::new(resolve_expr(x, consts))),
        Expr::Not(x) => Expr::Not(Box::new(resolve_expr(x, consts))),
        Expr::Binary(op, l, r) => Expr::binary(*op, resolve_expr(l, consts), resolve_expr(r, consts)),
        Expr::Call(b, args) => Expr::Call(*b, args.iter().map(|a| resolve_expr(a, consts)).collect()),
        Expr::Vector(args) => Expr::Vector(args.iter().map(|a| resolve_expr(a, consts)).collect()),
        Expr::In(x, set) => Expr::In(
            Box::new(resolve_expr(x, consts)),
            set.iter().map(|a| resolve_expr(a, consts)).collect(),
        ),
        Expr::Hazard(t, d) => Expr::Hazard(
            Box::new(resolve_expr(t, consts)),
            Box::new(DistributionSpec::new(
                d.family,
                d.params.iter().map(|a| resolve_expr(a, consts)).collect(),
            )),
        ),
    }
}

fn sort_name(s: Sort) -> String {
    match s {
        Sort::Int(None) => "int".into(),
        Sort::Int(Some((lo, hi))) => format!("int({lo}..{hi})"),
        Sort::Real => "real".into(),
        Sort::Vector => "vec".into(),
    }
}

/// Second pass: turns identifiers naming constants into constant references
/// and checks every pattern and template against the species declarations.
fn resolve(mut g: Grammar) -> Result<Grammar, ParseError> {
    let mut consts = BTreeMap::new();
    for c in &g.constants {
        if c.name == AGE {
            return sort_err(c.span, "`age` is reserved and cannot name a constant");
        }
        if consts.insert(c.name.clone(), c.value).is_some() {
            return sort_err(c.span, format!("constant `{}` declared twice", c.name));
        }
    }
    let mut species: BTreeMap<String, Vec<Sort>> = BTreeMap::new();
    for s in &g.species {
        if species.insert(s.name.clone(), s.sorts().collect()).is_some() {
            return sort_err(s.span, format!("species `{}` declared twice", s.name));
        }
    }
    let lookup = |name: &str, arity: usize, span: Span| -> PResult<Vec<Sort>> {
        let sorts = match species.get(name) {
            Some(s) => s.clone(),
            None => return sort_err(span, format!("undeclared species `{name}`")),
        };
        if sorts.len() != arity {
            return sort_err(
                span,
                format!("species `{name}` has {} slots, pattern gives {arity}", sorts.len()),
            );
        }
        Ok(sorts)
    };

    for rule in &mut g.rules {
        let mut var_sorts: BTreeMap<String, Sort> = BTreeMap::new();
        for p in &mut rule.lhs {
            let sorts = lookup(&p.species, p.slots.len(), p.span)?;
            for (slot, sort) in p.slots.iter_mut().zip(sorts) {
                if let SlotPattern::Var(v) = slot {
                    if consts.contains_key(v.as_str()) {
                        *slot = SlotPattern::Const(v.clone());
                    }
                }
                match slot {
                    SlotPattern::Var(v) => {
                        if v == AGE {
                            return sort_err(p.span, "`age` is reserved and cannot be bound by a pattern");
                        }
                        match var_sorts.get(v.as_str()) {
                            Some(prev) if !same_kind(*prev, sort) => {
                                return sort_err(
                                    p.span,
                                    format!(
                                        "variable `{v}` used as both {} and {}",
                                        sort_name(*prev),
                                        sort_name(sort)
                                    ),
                                )
                            }
                            Some(_) => {}
                            None => {
                                var_sorts.insert(v.clone(), sort);
                            }
                        }
                    }
                    SlotPattern::Int(i) => check_literal(p.span, sort, *i as f64, true)?,
                    SlotPattern::Real(r) => check_literal(p.span, sort, *r, false)?,
                    SlotPattern::Const(c) => {
                        let v = consts[c.as_str()];
                        check_literal(p.span, sort, v, v.fract() == 0.0)?
                    }
                }
            }
        }
        for t in &mut rule.rhs {
            lookup(&t.species, t.slots.len(), t.span)?;
            for e in &mut t.slots {
                *e = resolve_expr(e, &consts);
            }
        }
        match &mut rule.body {
            RuleBody::Jump(j) => {
                j.propensity = resolve_expr(&j.propensity, &consts);
                for f in &mut j.fresh {
                    f.dist = DistributionSpec::new(
                        f.dist.family,
                        f.dist.params.iter().map(|a| resolve_expr(a, &consts)).collect(),
                    );
                }
            }
            RuleBody::Continuous(c) => {
                for d in &mut c.derivatives {
                    d.rhs = resolve_expr(&d.rhs, &consts);
                }
            }
        }
    }
    Ok(g)
}

fn same_kind(a: Sort, b: Sort) -> bool {
    matches!((a, b), (Sort::Int(_), Sort::Int(_)) | (Sort::Real, Sort::Real) | (Sort::Vector, Sort::Vector))
}

fn check_literal(span: Span, sort: Sort, value: f64, integer: bool) -> PResult<()> {
    match sort {
        Sort::Vector => sort_err(span, "vector slots cannot hold a literal"),
        Sort::Real => Ok(()),
        Sort::Int(dom) => {
            if !integer {
                return sort_err(span, format!("real literal {value:?} in an integer slot"));
            }
            if let Some((lo, hi)) = dom {
                if value < lo as f64 || value > hi as f64 {
                    return sort_err(span, format!("literal {value} outside domain {lo}..{hi}"));
                }
            }
            Ok(())
        }
    }
}
