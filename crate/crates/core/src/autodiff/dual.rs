//! Forward-mode dual numbers for scalar functions.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::tape::Unary;

/// A value paired with its derivative along one seeded input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualScalar {
    pub value: f64,
    pub tangent: f64,
}

impl DualScalar {
    pub fn new(value: f64, tangent: f64) -> Self {
        Self { value, tangent }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(value, 0.0)
    }

    /// The seeded input variable.
    pub fn variable(value: f64) -> Self {
        Self::new(value, 1.0)
    }

    fn chain(self, kind: Unary) -> Self {
        let (v, d) = kind.eval(self.value);
        Self::new(v, d * self.tangent)
    }

    pub fn exp(self) -> Self {
        self.chain(Unary::Exp)
    }

    pub fn ln(self) -> Self {
        self.chain(Unary::Ln)
    }

    pub fn tanh(self) -> Self {
        self.chain(Unary::Tanh)
    }

    pub fn sigmoid(self) -> Self {
        self.chain(Unary::Sigmoid)
    }

    pub fn swish(self) -> Self {
        self.chain(Unary::Swish)
    }

    pub fn powf(self, p: f64) -> Self {
        self.chain(Unary::Powf(p))
    }

    pub fn apply(self, kind: Unary) -> Self {
        self.chain(kind)
    }
}

impl From<f64> for DualScalar {
    fn from(v: f64) -> Self {
        Self::constant(v)
    }
}

impl Add for DualScalar {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.value + o.value, self.tangent + o.tangent)
    }
}

impl Sub for DualScalar {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.value - o.value, self.tangent - o.tangent)
    }
}

impl Mul for DualScalar {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.value * o.value,
            self.tangent * o.value + self.value * o.tangent,
        )
    }
}

impl Div for DualScalar {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        Self::new(
            self.value / o.value,
            (self.tangent * o.value - self.value * o.tangent) / (o.value * o.value),
        )
    }
}

impl Neg for DualScalar {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.value, -self.tangent)
    }
}

macro_rules! scalar_rhs {
    ($trait:ident, $method:ident) => {
        impl $trait<f64> for DualScalar {
            type Output = Self;
            fn $method(self, o: f64) -> Self {
                self.$method(DualScalar::constant(o))
            }
        }
        impl $trait<DualScalar> for f64 {
            type Output = DualScalar;
            fn $method(self, o: DualScalar) -> DualScalar {
                DualScalar::constant(self).$method(o)
            }
        }
    };
}

scalar_rhs!(Add, add);
scalar_rhs!(Sub, sub);
scalar_rhs!(Mul, mul);
scalar_rhs!(Div, div);
