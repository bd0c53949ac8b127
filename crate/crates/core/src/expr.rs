//! A small expression language for user-supplied Finsler functions and
//! projective-factor candidates, evaluated over jet arithmetic.
//!
//! Grammar:
//! ```text
//! expr   := term { ("+"|"-") term } ;
//! term   := factor { ("*"|"/") factor } ;
//! factor := "-" factor | power ;
//! power  := atom [ "^" integer ] ;
//! atom   := number | ident | "sqrt" "(" expr ")" | "(" expr ")" ;
//! ident  := "x" digits | "y" digits | "F" ;
//! ```
//! `^` takes an integer literal exponent and binds tighter than unary minus.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::jets::Jet;

#[derive(Clone, Debug, PartialEq)]
pub enum ExprAst {
    Num(f64),
    /// 1-based chart variable index.
    X(usize),
    /// 1-based fiber variable index.
    Y(usize),
    /// The bound Finsler function of the active metric.
    F,
    Neg(Box<ExprAst>),
    Add(Box<ExprAst>, Box<ExprAst>),
    Sub(Box<ExprAst>, Box<ExprAst>),
    Mul(Box<ExprAst>, Box<ExprAst>),
    Div(Box<ExprAst>, Box<ExprAst>),
    Pow(Box<ExprAst>, i32),
    Sqrt(Box<ExprAst>),
}

impl ExprAst {
    pub fn mentions_f(&self) -> bool {
        match self {
            ExprAst::F => true,
            ExprAst::Num(_) | ExprAst::X(_) | ExprAst::Y(_) => false,
            ExprAst::Neg(a) | ExprAst::Sqrt(a) | ExprAst::Pow(a, _) => a.mentions_f(),
            ExprAst::Add(a, b) | ExprAst::Sub(a, b) | ExprAst::Mul(a, b) | ExprAst::Div(a, b) => {
                a.mentions_f() || b.mentions_f()
            }
        }
    }

    pub fn mentions_y(&self) -> bool {
        match self {
            ExprAst::Y(_) | ExprAst::F => true,
            ExprAst::Num(_) | ExprAst::X(_) => false,
            ExprAst::Neg(a) | ExprAst::Sqrt(a) | ExprAst::Pow(a, _) => a.mentions_y(),
            ExprAst::Add(a, b) | ExprAst::Sub(a, b) | ExprAst::Mul(a, b) | ExprAst::Div(a, b) => {
                a.mentions_y() || b.mentions_y()
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            ExprAst::Add(..) | ExprAst::Sub(..) => 1,
            ExprAst::Mul(..) | ExprAst::Div(..) => 2,
            ExprAst::Neg(..) => 3,
            ExprAst::Pow(..) => 4,
            _ => 5,
        }
    }
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &ExprAst, min_prec: u8) -> fmt::Result {
            if e.precedence() < min_prec {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            ExprAst::Num(v) => write!(f, "{v}"),
            ExprAst::X(i) => write!(f, "x{i}"),
            ExprAst::Y(i) => write!(f, "y{i}"),
            ExprAst::F => write!(f, "F"),
            ExprAst::Neg(a) => {
                write!(f, "-")?;
                child(f, a, 3)
            }
            ExprAst::Add(a, b) => {
                child(f, a, 1)?;
                write!(f, " + ")?;
                child(f, b, 2)
            }
            ExprAst::Sub(a, b) => {
                child(f, a, 1)?;
                write!(f, " - ")?;
                child(f, b, 2)
            }
            ExprAst::Mul(a, b) => {
                child(f, a, 2)?;
                write!(f, "*")?;
                child(f, b, 3)
            }
            ExprAst::Div(a, b) => {
                child(f, a, 2)?;
                write!(f, "/")?;
                child(f, b, 3)
            }
            ExprAst::Pow(a, e) => {
                child(f, a, 5)?;
                write!(f, "^{e}")
            }
            ExprAst::Sqrt(a) => write!(f, "sqrt({a})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    X(usize),
    Y(usize),
    F,
    Sqrt,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn perr<T>(offset: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse {
        offset,
        message: message.into(),
    })
}

fn lex(source: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = source.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                toks.push((i, Tok::Plus));
                i += 1;
            }
            '-' => {
                toks.push((i, Tok::Minus));
                i += 1;
            }
            '*' => {
                toks.push((i, Tok::Star));
                i += 1;
            }
            '/' => {
                toks.push((i, Tok::Slash));
                i += 1;
            }
            '^' => {
                toks.push((i, Tok::Caret));
                i += 1;
            }
            '(' => {
                toks.push((i, Tok::LParen));
                i += 1;
            }
            ')' => {
                toks.push((i, Tok::RParen));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
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
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &source[start..i];
                match text.parse::<f64>() {
                    Ok(v) => toks.push((start, Tok::Num(v))),
                    Err(_) => return perr(start, format!("invalid number literal '{text}'")),
                }
            }
            'a'..='z' | 'A'..='Z' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric()) {
                    i += 1;
                }
                let word = &source[start..i];
                if word == "F" {
                    toks.push((start, Tok::F));
                } else if word == "sqrt" {
                    toks.push((start, Tok::Sqrt));
                } else if let Some(rest) = word.strip_prefix('x') {
                    match rest.parse::<usize>() {
                        Ok(k) if k >= 1 => toks.push((start, Tok::X(k))),
                        _ => return perr(start, format!("unknown identifier '{word}'")),
                    }
                } else if let Some(rest) = word.strip_prefix('y') {
                    match rest.parse::<usize>() {
                        Ok(k) if k >= 1 => toks.push((start, Tok::Y(k))),
                        _ => return perr(start, format!("unknown identifier '{word}'")),
                    }
                } else {
                    return perr(start, format!("unknown identifier '{word}'"));
                }
            }
            _ => return perr(i, format!("unexpected character '{c}'")),
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: &'a [(usize, Tok)],
    at: usize,
    end_offset: usize,
    n: usize,
    allow_f: bool,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks
            .get(self.at)
            .map(|(o, _)| *o)
            .unwrap_or(self.end_offset)
    }

    fn next(&mut self) -> Option<(usize, Tok)> {
        let t = self.toks.get(self.at).cloned();
        self.at += 1;
        t
    }

    fn expr(&mut self) -> Result<ExprAst> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.next();
                    acc = ExprAst::Add(Box::new(acc), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.next();
                    acc = ExprAst::Sub(Box::new(acc), Box::new(self.term()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<ExprAst> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.next();
                    acc = ExprAst::Mul(Box::new(acc), Box::new(self.factor()?));
                }
                Some(Tok::Slash) => {
                    self.next();
                    acc = ExprAst::Div(Box::new(acc), Box::new(self.factor()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<ExprAst> {
        if let Some(Tok::Minus) = self.peek() {
            self.next();
            return Ok(ExprAst::Neg(Box::new(self.factor()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<ExprAst> {
        let base = self.atom()?;
        if let Some(Tok::Caret) = self.peek() {
            self.next();
            let off = self.offset();
            // exponent: integer literal with optional sign
            let mut sign = 1i32;
            if let Some(Tok::Minus) = self.peek() {
                self.next();
                sign = -1;
            }
            match self.next() {
                Some((o, Tok::Num(v))) => {
                    if v.fract() != 0.0 || v.abs() > i32::MAX as f64 {
                        return perr(o, "exponent must be an integer");
                    }
                    return Ok(ExprAst::Pow(Box::new(base), sign * v as i32));
                }
                _ => return perr(off, "expected integer exponent after '^'"),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<ExprAst> {
        let off = self.offset();
        match self.next() {
            Some((_, Tok::Num(v))) => Ok(ExprAst::Num(v)),
            Some((o, Tok::X(k))) => {
                if k > self.n {
                    perr(o, format!("index out of range: x{k} with n = {}", self.n))
                } else {
                    Ok(ExprAst::X(k))
                }
            }
            Some((o, Tok::Y(k))) => {
                if k > self.n {
                    perr(o, format!("index out of range: y{k} with n = {}", self.n))
                } else {
                    Ok(ExprAst::Y(k))
                }
            }
            Some((o, Tok::F)) => {
                if self.allow_f {
                    Ok(ExprAst::F)
                } else {
                    perr(o, "the symbol F is not allowed in this expression")
                }
            }
            Some((o, Tok::Sqrt)) => {
                match self.next() {
                    Some((_, Tok::LParen)) => {}
                    _ => return perr(o, "expected '(' after sqrt"),
                }
                if let Some(Tok::RParen) = self.peek() {
                    return perr(self.offset(), "empty argument to sqrt");
                }
                let inner = self.expr()?;
                match self.next() {
                    Some((_, Tok::RParen)) => Ok(ExprAst::Sqrt(Box::new(inner))),
                    _ => perr(self.end_offset, "unbalanced parentheses"),
                }
            }
            Some((o, Tok::LParen)) => {
                if let Some(Tok::RParen) = self.peek() {
                    return perr(self.offset(), "empty parenthesized expression");
                }
                let inner = self.expr()?;
                match self.next() {
                    Some((_, Tok::RParen)) => Ok(inner),
                    _ => perr(o, "unbalanced parentheses"),
                }
            }
            Some((o, t)) => perr(o, format!("unexpected token {t:?}")),
            None => perr(off, "unexpected end of input"),
        }
    }
}

/// Parse a source string for dimension `n`. `allow_f` controls whether the
/// bound symbol `F` may appear (candidates yes, metric definitions no).
pub fn parse(source: &str, n: usize, allow_f: bool) -> Result<ExprAst> {
    if source.trim().is_empty() {
        return perr(0, "empty expression");
    }
    let toks = lex(source)?;
    let mut p = Parser {
        toks: &toks,
        at: 0,
        end_offset: source.len(),
        n,
        allow_f,
    };
    let ast = p.expr()?;
    if p.at != toks.len() {
        return perr(p.offset(), "trailing input after expression");
    }
    Ok(ast)
}

fn eval_ast(ast: &ExprAst, vars: &[Jet], n: usize, f_jet: Option<&Jet>) -> Result<Jet> {
    match ast {
        ExprAst::Num(v) => Ok(Jet::constant(vars[0].space(), *v)),
        ExprAst::X(k) => Ok(vars[k - 1].clone()),
        ExprAst::Y(k) => Ok(vars[n + k - 1].clone()),
        ExprAst::F => f_jet
            .cloned()
            .ok_or_else(|| Error::Compile("F used without a bound metric".into())),
        ExprAst::Neg(a) => Ok(-&eval_ast(a, vars, n, f_jet)?),
        ExprAst::Add(a, b) => Ok(&eval_ast(a, vars, n, f_jet)? + &eval_ast(b, vars, n, f_jet)?),
        ExprAst::Sub(a, b) => Ok(&eval_ast(a, vars, n, f_jet)? - &eval_ast(b, vars, n, f_jet)?),
        ExprAst::Mul(a, b) => Ok(&eval_ast(a, vars, n, f_jet)? * &eval_ast(b, vars, n, f_jet)?),
        ExprAst::Div(a, b) => eval_ast(a, vars, n, f_jet)?.div(&eval_ast(b, vars, n, f_jet)?),
        ExprAst::Pow(a, e) => eval_ast(a, vars, n, f_jet)?.powi(*e),
        ExprAst::Sqrt(a) => eval_ast(a, vars, n, f_jet)?.sqrt(),
    }
}

/// Compile an AST to a jet-evaluable field. `binding` supplies the field
/// bound to `F`; it must be present when the AST mentions `F`.
pub fn compile(ast: &ExprAst, n: usize, binding: Option<&ScalarField>) -> Result<ScalarField> {
    if ast.mentions_f() && binding.is_none() {
        return Err(Error::Compile("expression mentions F but no metric is bound".into()));
    }
    let ast = Arc::new(ast.clone());
    let binding = binding.cloned();
    let field = ScalarField::new(n, move |p, order| {
        let vars = crate::jets::phase_variables(p, order);
        let f_jet = match &binding {
            Some(b) => Some(b.eval_jet(p, order)?),
            None => None,
        };
        eval_ast(&ast, &vars, n, f_jet.as_ref())
    });
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::PhasePoint;

    fn p(x: &[f64], y: &[f64]) -> PhasePoint {
        PhasePoint::new(x.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn parses_to_expected_shapes() {
        let ast = parse("y1^2 + x1*y2", 2, false).unwrap();
        assert_eq!(
            ast,
            ExprAst::Add(
                Box::new(ExprAst::Pow(Box::new(ExprAst::Y(1)), 2)),
                Box::new(ExprAst::Mul(Box::new(ExprAst::X(1)), Box::new(ExprAst::Y(2)))),
            )
        );
        let ast = parse("y1/(1-x1)", 2, true).unwrap();
        assert_eq!(
            ast,
            ExprAst::Div(
                Box::new(ExprAst::Y(1)),
                Box::new(ExprAst::Sub(
                    Box::new(ExprAst::Num(1.0)),
                    Box::new(ExprAst::X(1))
                )),
            )
        );
    }

    #[test]
    fn index_out_of_range_reports_offset() {
        match parse("y3", 2, false) {
            Err(Error::Parse { offset, message }) => {
                assert_eq!(offset, 0);
                assert!(message.contains("index out of range"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn f_disallowed_in_metric_position() {
        match parse("2*F", 2, false) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unbalanced_parens_and_empty_argument() {
        assert!(matches!(parse("(y1+y2", 2, false), Err(Error::Parse { .. })));
        assert!(matches!(parse("sqrt()", 2, false), Err(Error::Parse { .. })));
        assert!(matches!(parse("", 2, false), Err(Error::Parse { .. })));
    }

    #[test]
    fn precedence_pow_over_unary_minus() {
        // -y1^2 must be -(y1^2), not (-y1)^2
        let f = compile(&parse("-y1^2", 2, false).unwrap(), 2, None).unwrap();
        let v = f.value(&p(&[0.0, 0.0], &[3.0, 0.0])).unwrap();
        assert_eq!(v, -9.0);
    }

    #[test]
    fn compile_examples() {
        let f = compile(&parse("sqrt(y1^2+y2^2)", 2, false).unwrap(), 2, None).unwrap();
        assert!((f.value(&p(&[0.0, 0.0], &[3.0, 4.0])).unwrap() - 5.0).abs() < 1e-14);

        let euclid = compile(&parse("sqrt(y1^2+y2^2)", 2, false).unwrap(), 2, None).unwrap();
        let half = compile(&parse("0.5*F", 2, true).unwrap(), 2, Some(&euclid)).unwrap();
        assert!((half.value(&p(&[0.0, 0.0], &[3.0, 4.0])).unwrap() - 2.5).abs() < 1e-14);

        let g = compile(&parse("y1/(1-x1)", 2, false).unwrap(), 2, None).unwrap();
        assert!((g.value(&p(&[0.5, 0.0], &[2.0, 0.0])).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn compile_requires_binding_for_f() {
        let ast = parse("0.5*F", 2, true).unwrap();
        assert!(matches!(compile(&ast, 2, None), Err(Error::Compile(_))));
    }

    #[test]
    fn division_by_zero_surfaces_as_domain_error() {
        let g = compile(&parse("y1/x1", 2, false).unwrap(), 2, None).unwrap();
        assert!(matches!(
            g.value(&p(&[0.0, 0.2], &[1.0, 0.0])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn pretty_print_is_a_fixed_point() {
        // 50-expression corpus generated from a seeded RNG.
        use rand::Rng;
        let mut rng = crate::sampling::seeded_rng(17);
        fn gen(rng: &mut rand_chacha::ChaCha8Rng, depth: usize) -> ExprAst {
            use rand::Rng;
            if depth == 0 {
                return match rng.gen_range(0..4) {
                    0 => ExprAst::Num((rng.gen_range(1..20) as f64) / 2.0),
                    1 => ExprAst::X(rng.gen_range(1..=2)),
                    2 => ExprAst::Y(rng.gen_range(1..=2)),
                    _ => ExprAst::F,
                };
            }
            match rng.gen_range(0..8) {
                0 => ExprAst::Add(Box::new(gen(rng, depth - 1)), Box::new(gen(rng, depth - 1))),
                1 => ExprAst::Sub(Box::new(gen(rng, depth - 1)), Box::new(gen(rng, depth - 1))),
                2 => ExprAst::Mul(Box::new(gen(rng, depth - 1)), Box::new(gen(rng, depth - 1))),
                3 => ExprAst::Div(Box::new(gen(rng, depth - 1)), Box::new(gen(rng, depth - 1))),
                4 => ExprAst::Neg(Box::new(gen(rng, depth - 1))),
                5 => ExprAst::Sqrt(Box::new(gen(rng, depth - 1))),
                6 => ExprAst::Pow(Box::new(gen(rng, depth - 1)), rng.gen_range(-3..=3)),
                _ => gen(rng, 0),
            }
        }
        for _ in 0..50 {
            let depth = rng.gen_range(1..=4);
            let ast = gen(&mut rng, depth);
            let once = ast.to_string();
            let reparsed = parse(&once, 2, true).unwrap();
            assert_eq!(reparsed.to_string(), once, "not a fixed point: {once}");
        }
    }

    #[test]
    fn order_zero_eval_matches_direct_float_eval() {
        // Random rational/sqrt expressions evaluated two ways.
        fn direct(ast: &ExprAst, x: &[f64], y: &[f64]) -> f64 {
            match ast {
                ExprAst::Num(v) => *v,
                ExprAst::X(k) => x[k - 1],
                ExprAst::Y(k) => y[k - 1],
                ExprAst::F => unreachable!(),
                ExprAst::Neg(a) => -direct(a, x, y),
                ExprAst::Add(a, b) => direct(a, x, y) + direct(b, x, y),
                ExprAst::Sub(a, b) => direct(a, x, y) - direct(b, x, y),
                ExprAst::Mul(a, b) => direct(a, x, y) * direct(b, x, y),
                ExprAst::Div(a, b) => direct(a, x, y) / direct(b, x, y),
                ExprAst::Pow(a, e) => direct(a, x, y).powi(*e),
                ExprAst::Sqrt(a) => direct(a, x, y).sqrt(),
            }
        }
        use rand::Rng;
        let sources = [
            "y1^2 + x1*y2",
            "sqrt(y1^2+y2^2)",
            "y1/(1-x1)",
            "(y1+y2)^3/(2+x2)",
            "sqrt(1+x1^2)*y2 - y1/2",
        ];
        let mut rng = crate::sampling::seeded_rng(5);
        for src in sources {
            let ast = parse(src, 2, false).unwrap();
            let f = compile(&ast, 2, None).unwrap();
            for _ in 0..100 {
                let x = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
                let y = [rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)];
                let want = direct(&ast, &x, &y);
                let got = f.value(&p(&x, &y)).unwrap();
                assert!(
                    (got - want).abs() <= 1e-12 * (1.0 + want.abs()),
                    "{src} at {x:?} {y:?}: {got} vs {want}"
                );
            }
        }
    }
}
