//! Scalar expressions in `x`, `y`, `t`, `r` read from configuration files.
//!
//! Syntax is that of `evalexpr` (`^` for powers, `math::sin(x)` etc.);
//! `pi` is predefined.

use evalexpr::{
    build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node,
    Value,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Expr {
    source: String,
    tree: Node<DefaultNumericTypes>,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let tree = build_operator_tree::<DefaultNumericTypes>(source)
            .map_err(|e| Error::Expression(format!("{source}: {e}")))?;
        Ok(Expr {
            source: source.to_string(),
            tree,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Evaluates with the given named variables bound.
    pub fn eval(&self, vars: &[(&str, f64)]) -> Result<f64> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        ctx.set_value("pi".into(), Value::Float(std::f64::consts::PI))
            .map_err(|e| Error::Expression(e.to_string()))?;
        for (k, v) in vars {
            ctx.set_value((*k).into(), Value::Float(*v))
                .map_err(|e| Error::Expression(e.to_string()))?;
        }
        self.tree
            .eval_number_with_context(&ctx)
            .map_err(|e| Error::Expression(format!("{}: {e}", self.source)))
    }

    pub fn eval_xyt(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        self.eval(&[("x", x), ("y", y), ("t", t)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_with_variables() {
        let e = Expr::parse("math::sin(pi * x) * t + y^2").unwrap();
        let v = e.eval_xyt(0.5, 2.0, 3.0).unwrap();
        assert!((v - 7.0).abs() < 1e-14);
        let c = Expr::parse("1").unwrap();
        assert_eq!(c.eval_xyt(0.0, 0.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn reports_parse_errors() {
        assert!(matches!(Expr::parse("(("), Err(Error::Expression(_))));
    }
}
