//! Canonical text form of expressions, with the minimal parentheses needed
//! to re-parse to the same tree.

use std::fmt::{self, Display, Formatter};

use super::{BinOp, Builtin, Expr};

const OR: u8 = 1;
const AND: u8 = 2;
const CMP: u8 = 3;
const ADD: u8 = 4;
const MUL: u8 = 5;
const UNARY: u8 = 6;
const POW: u8 = 7;
const ATOM: u8 = 8;

fn binop_prec(op: BinOp) -> u8 {
    match op {
        BinOp::Or => OR,
        BinOp::And => AND,
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => CMP,
        BinOp::Add | BinOp::Sub => ADD,
        BinOp::Mul | BinOp::Div => MUL,
        BinOp::Pow => POW,
    }
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Int(i) if *i < 0 => UNARY,
        Expr::Real(r) if r.is_sign_negative() => UNARY,
        Expr::Neg(_) | Expr::Not(_) => UNARY,
        Expr::Binary(op, ..) => binop_prec(*op),
        Expr::In(..) => CMP,
        _ => ATOM,
    }
}

fn write_prec(f: &mut Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if prec(e) < min {
        write!(f, "(")?;
        write_expr(f, e)?;
        write!(f, ")")
    } else {
        write_expr(f, e)
    }
}

fn write_list(f: &mut Formatter<'_>, items: &[Expr]) -> fmt::Result {
    for (i, a) in items.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        write_expr(f, a)?;
    }
    Ok(())
}

fn write_expr(f: &mut Formatter<'_>, e: &Expr) -> fmt::Result {
    match e {
        Expr::Int(i) => write!(f, "{i}"),
        Expr::Real(r) => write!(f, "{r:?}"),
        Expr::Const(n) | Expr::Var(n) => write!(f, "{n}"),
        Expr::Neg(inner) => {
            write!(f, "-")?;
            // `--x` would lex as two minus signs either way; the parentheses
            // keep a negative literal operand readable.
            if prec(inner) <= UNARY {
                write!(f, "(")?;
                write_expr(f, inner)?;
                write!(f, ")")
            } else {
                write_prec(f, inner, UNARY)
            }
        }
        Expr::Not(inner) => {
            write!(f, "!")?;
            write_prec(f, inner, UNARY)
        }
        Expr::Binary(op, l, r) => {
            let p = binop_prec(*op);
            let (lmin, rmin) = match op {
                BinOp::Pow => (ATOM, UNARY),
                _ if p == CMP => (p + 1, p + 1),
                _ => (p, p + 1),
            };
            write_prec(f, l, lmin)?;
            write!(f, " {} ", op.symbol())?;
            write_prec(f, r, rmin)
        }
        Expr::In(x, set) => {
            write_prec(f, x, CMP + 1)?;
            write!(f, " in {{")?;
            write_list(f, set)?;
            write!(f, "}}")
        }
        Expr::Vector(items) => {
            write!(f, "[")?;
            write_list(f, items)?;
            write!(f, "]")
        }
        Expr::Call(Builtin::NormalPdf, args) if args.len() == 3 => {
            write!(f, "normal_pdf(")?;
            write_expr(f, &args[0])?;
            write!(f, "; ")?;
            write_list(f, &args[1..])?;
            write!(f, ")")
        }
        Expr::Call(b, args) => {
            write!(f, "{}(", b.name())?;
            write_list(f, args)?;
            write!(f, ")")
        }
        Expr::Hazard(t, d) => {
            write!(f, "hazard(")?;
            write_expr(f, t)?;
            write!(f, "; {d})")
        }
    }
}

impl Display for Expr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_expr(f, self)
    }
}

impl Display for super::DistributionSpec {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.family.name())?;
        write_list(f, &self.params)?;
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(n: &str) -> Expr {
        Expr::Var(n.into())
    }

    #[test]
    fn minimal_parentheses() {
        let e = Expr::binary(
            BinOp::Mul,
            Expr::binary(BinOp::Add, v("a"), v("b")),
            v("c"),
        );
        assert_eq!(e.to_string(), "(a + b) * c");
        let e = Expr::binary(BinOp::Sub, v("a"), Expr::binary(BinOp::Sub, v("b"), v("c")));
        assert_eq!(e.to_string(), "a - (b - c)");
        let e = Expr::binary(BinOp::Pow, Expr::Int(-1), Expr::Int(2));
        assert_eq!(e.to_string(), "(-1) ^ 2");
        let e = Expr::binary(BinOp::Pow, v("a"), Expr::binary(BinOp::Pow, v("b"), v("c")));
        assert_eq!(e.to_string(), "a ^ b ^ c");
        let e = Expr::Neg(Box::new(Expr::binary(BinOp::Pow, v("x"), Expr::Int(2))));
        assert_eq!(e.to_string(), "-x ^ 2");
    }

    #[test]
    fn calls_and_reals() {
        let e = Expr::Call(Builtin::NormalPdf, vec![v("x"), Expr::Real(0.0), Expr::Real(1e-7)]);
        assert_eq!(e.to_string(), "normal_pdf(x; 0.0, 1e-7)");
        let e = Expr::In(Box::new(v("d")), vec![Expr::Int(0), Expr::Int(1)]);
        assert_eq!(e.to_string(), "d in {0, 1}");
    }
}
