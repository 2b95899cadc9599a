//! Loss terms written as integrals of products of linear combinations of
//! field values and first derivatives, independent of how the integrals
//! are evaluated.

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::mechanics::{sym_index, HookeCoefficients};

use super::grid::Region;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Quantity {
    /// Displacement component.
    U(usize),
    /// Stress component in `xx, yy, zz, xy, xz, yz` order.
    S(usize),
}

/// A field quantity or one of its first partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Term {
    pub q: Quantity,
    pub d: Option<usize>,
}

impl Term {
    pub fn value(q: Quantity) -> Self {
        Self { q, d: None }
    }

    pub fn partial(q: Quantity, axis: usize) -> Self {
        Self { q, d: Some(axis) }
    }
}

/// `constant + sum c_t term_t`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(f64, Term)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn term(c: f64, t: Term) -> Self {
        Self {
            terms: vec![(c, t)],
            constant: 0.0,
        }
    }

    pub fn add(mut self, c: f64, t: Term) -> Self {
        if c != 0.0 {
            match self.terms.iter_mut().find(|(_, u)| *u == t) {
                Some(e) => e.0 += c,
                None => self.terms.push((c, t)),
            }
        }
        self
    }

    pub fn plus(mut self, other: &LinExpr, scale: f64) -> Self {
        for &(c, t) in &other.terms {
            self = self.add(scale * c, t);
        }
        self.constant += scale * other.constant;
        self
    }

    pub fn shift(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }
}

/// Evaluates weighted integrals `sum_p w_p a(p) b(p)` over a region.
pub trait Integrator<'t> {
    fn tape(&self) -> &'t Tape;

    fn integrate(&mut self, region: &Region, a: &LinExpr, b: &LinExpr) -> Result<Var<'t>>;

    fn integrate_square(&mut self, region: &Region, a: &LinExpr) -> Result<Var<'t>> {
        self.integrate(region, a, a)
    }
}

fn du(i: usize, k: usize) -> Term {
    Term::partial(Quantity::U(i), k)
}

fn sigma(i: usize, k: usize) -> Term {
    Term::value(Quantity::S(sym_index(i, k)))
}

/// `eps_ik = (du_i/dx_k + du_k/dx_i) / 2`.
pub fn strain_expr(i: usize, k: usize) -> LinExpr {
    LinExpr::default().add(0.5, du(i, k)).add(0.5, du(k, i))
}

/// Hooke's law of the displacement field, component `(i, k)`.
pub fn hooke_expr(i: usize, k: usize, hooke: HookeCoefficients) -> LinExpr {
    let mut e = LinExpr::default().plus(&strain_expr(i, k), hooke.shear);
    if i == k {
        for j in 0..3 {
            e = e.add(hooke.lambda, du(j, j));
        }
    }
    e
}

pub fn sum_vars<'t>(tape: &'t Tape, vars: impl IntoIterator<Item = Var<'t>>) -> Var<'t> {
    vars.into_iter().reduce(|a, b| a + b).unwrap_or_else(|| tape.scalar(0.0))
}

const PAIRS: [(usize, usize, f64); 6] = [
    (0, 0, 1.0),
    (1, 1, 1.0),
    (2, 2, 1.0),
    (0, 1, 2.0),
    (0, 2, 2.0),
    (1, 2, 2.0),
];

/// `sum_l (d sigma_lk/dx_k + f_l)^2`.
pub fn residual<'t, I: Integrator<'t> + ?Sized>(int: &mut I, region: &Region, body_force: [f64; 3]) -> Result<Var<'t>> {
    let mut parts = Vec::with_capacity(3);
    for (l, f) in body_force.iter().enumerate() {
        let mut e = LinExpr::constant(*f);
        for k in 0..3 {
            e = e.add(1.0, Term::partial(Quantity::S(sym_index(l, k)), k));
        }
        parts.push(int.integrate_square(region, &e)?);
    }
    Ok(sum_vars(int.tape(), parts))
}

/// `sum_ik (sigma_ik - C(eps)_ik)^2` over all nine components.
pub fn coupling<'t, I: Integrator<'t> + ?Sized>(int: &mut I, region: &Region, hooke: HookeCoefficients) -> Result<Var<'t>> {
    let mut parts = Vec::with_capacity(6);
    for (i, k, mult) in PAIRS {
        let e = LinExpr::term(1.0, sigma(i, k)).plus(&hooke_expr(i, k, hooke), -1.0);
        parts.push(int.integrate_square(region, &e)?.scale(mult));
    }
    Ok(sum_vars(int.tape(), parts))
}

/// `sum_l (u_l - target_l)^2`.
pub fn dirichlet<'t, I: Integrator<'t> + ?Sized>(int: &mut I, region: &Region, target: [f64; 3]) -> Result<Var<'t>> {
    let mut parts = Vec::with_capacity(3);
    for (l, t) in target.iter().enumerate() {
        let e = LinExpr::term(1.0, Term::value(Quantity::U(l))).shift(-t);
        parts.push(int.integrate_square(region, &e)?);
    }
    Ok(sum_vars(int.tape(), parts))
}

/// `sum_l (sigma_lk n_k - T_l)^2`.
pub fn traction<'t, I: Integrator<'t> + ?Sized>(
    int: &mut I,
    region: &Region,
    normal: [f64; 3],
    t: [f64; 3],
) -> Result<Var<'t>> {
    let mut parts = Vec::with_capacity(3);
    for l in 0..3 {
        let mut e = LinExpr::constant(-t[l]);
        for (k, n) in normal.iter().enumerate() {
            e = e.add(*n, sigma(l, k));
        }
        parts.push(int.integrate_square(region, &e)?);
    }
    Ok(sum_vars(int.tape(), parts))
}

/// `sigma(eps):eps / 2 - f.u` with `sigma` from Hooke's law.
pub fn energy_density<'t, I: Integrator<'t> + ?Sized>(
    int: &mut I,
    region: &Region,
    hooke: HookeCoefficients,
    body_force: [f64; 3],
) -> Result<Var<'t>> {
    let mut trace = LinExpr::default();
    for j in 0..3 {
        trace = trace.add(1.0, du(j, j));
    }
    let mut parts = vec![int.integrate_square(region, &trace)?.scale(0.5 * hooke.lambda)];
    for (i, k, mult) in PAIRS {
        let e = strain_expr(i, k);
        parts.push(int.integrate_square(region, &e)?.scale(0.5 * hooke.shear * mult));
    }
    let work = work_expr(body_force);
    if !work.terms.is_empty() {
        parts.push(int.integrate(region, &work, &LinExpr::constant(1.0))?.scale(-1.0));
    }
    Ok(sum_vars(int.tape(), parts))
}

fn work_expr(load: [f64; 3]) -> LinExpr {
    let mut e = LinExpr::default();
    for (l, f) in load.iter().enumerate() {
        e = e.add(*f, Term::value(Quantity::U(l)));
    }
    e
}

/// Work `T.u` of a surface load.
pub fn load_work<'t, I: Integrator<'t> + ?Sized>(int: &mut I, region: &Region, t: [f64; 3]) -> Result<Var<'t>> {
    let work = work_expr(t);
    if work.terms.is_empty() {
        return Ok(int.tape().scalar(0.0));
    }
    int.integrate(region, &work, &LinExpr::constant(1.0))
}
