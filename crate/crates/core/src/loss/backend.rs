//! Two ways of evaluating the integrals of [`super::expr`] on the tape.
//!
//! [`GramIntegrator`] never forms a full grid tensor: with
//! `a = sum_j F_j(x) G_j(y) H_j(z)` and `b` likewise, the weighted sum over
//! a tensor region factorizes into per-axis Gram matrices,
//! `sum w a b = sum_jk (Fw^T F')_jk (Gw^T G')_jk (Hw^T H')_jk`.
//! [`PointIntegrator`] materializes every term at every point.

use std::collections::HashMap;
use std::rc::Rc;

use crate::autodiff::{Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{merge_grid, AxisBasis, FieldModel, MlpSpec, Network};

use super::expr::{Integrator, LinExpr, Quantity, Term};
use super::grid::{AxisSel, Region, RegionKind};

/// Where each field quantity lives: `(network index, output index)`.
#[derive(Clone, Debug)]
pub struct FieldLayout {
    u: [(usize, usize); 3],
    s: Option<[(usize, usize); 6]>,
}

impl FieldLayout {
    pub fn of(model: &FieldModel) -> Self {
        let locate = |nets: &[Network], first: usize, count: usize| -> Vec<(usize, usize)> {
            let mut out = Vec::with_capacity(count);
            for (n, net) in nets.iter().enumerate() {
                for c in 0..net.outputs() {
                    out.push((first + n, c));
                }
            }
            out
        };
        let u = locate(&model.displacement, 0, 3);
        let s = locate(&model.stress, model.displacement.len(), 6);
        Self {
            u: [u[0], u[1], u[2]],
            s: (s.len() == 6).then(|| [s[0], s[1], s[2], s[3], s[4], s[5]]),
        }
    }

    pub fn locate(&self, q: Quantity) -> Result<(usize, usize)> {
        match q {
            Quantity::U(l) => Ok(self.u[l]),
            Quantity::S(c) => self
                .s
                .map(|s| s[c])
                .ok_or_else(|| Error::Config("this loss needs a stress network".into())),
        }
    }
}

/// Index of the first parameter leaf of every network.
pub fn leaf_offsets(model: &FieldModel) -> Vec<usize> {
    let mut off = 0;
    model
        .networks()
        .map(|n| {
            let o = off;
            off += n.blocks().len();
            o
        })
        .collect()
}

/// Per-box, per-network axis bases; `None` for networks not needed.
pub type Bases<'t> = Vec<Vec<Option<[AxisBasis<'t>; 3]>>>;

pub fn separable_bases<'t>(
    leaves: &[Var<'t>],
    model: &FieldModel,
    coords: &[[Vec<f64>; 3]],
    needed: &[bool],
) -> Result<Bases<'t>> {
    let offsets = leaf_offsets(model);
    coords
        .iter()
        .map(|c| {
            model
                .networks()
                .enumerate()
                .map(|(n, net)| match net {
                    Network::Separable(m) if needed[n] => {
                        let o = offsets[n];
                        Ok(Some(m.bases([leaves[o], leaves[o + 1], leaves[o + 2]], [&c[0], &c[1], &c[2]])))
                    }
                    Network::Separable(_) => Ok(None),
                    Network::Pointwise { .. } => Err(Error::Config(
                        "tensor-grid evaluation needs separable networks".into(),
                    )),
                })
                .collect()
        })
        .collect()
}

fn tensor_parts(region: &Region) -> Result<(usize, &[AxisSel; 3])> {
    match &region.kind {
        RegionKind::Tensor { box_index, axes } => Ok((*box_index, axes)),
        RegionKind::Scattered { .. } => Err(Error::Unsupported(
            "separable integration needs tensor-product regions".into(),
        )),
    }
}

fn expand(e: &LinExpr) -> Vec<(f64, Option<Term>)> {
    let mut out: Vec<(f64, Option<Term>)> = e.terms.iter().map(|&(c, t)| (c, Some(t))).collect();
    if e.constant != 0.0 {
        out.push((e.constant, None));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Source {
    Ones,
    Net { net: usize, field: usize, deriv: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct FactorKey {
    src: Source,
    box_index: usize,
    axis: usize,
    start: usize,
    len: usize,
}

pub struct GramIntegrator<'t> {
    tape: &'t Tape,
    bases: Bases<'t>,
    ranks: Vec<usize>,
    layout: FieldLayout,
    factors: HashMap<FactorKey, Var<'t>>,
    scaled: HashMap<(FactorKey, usize), Var<'t>>,
    grams: HashMap<(FactorKey, FactorKey, usize), Var<'t>>,
}

impl<'t> GramIntegrator<'t> {
    pub fn new(tape: &'t Tape, model: &FieldModel, bases: Bases<'t>) -> Self {
        let ranks = model
            .networks()
            .map(|n| match n {
                Network::Separable(m) => m.rank(),
                Network::Pointwise { .. } => 0,
            })
            .collect();
        Self {
            tape,
            bases,
            ranks,
            layout: FieldLayout::of(model),
            factors: HashMap::new(),
            scaled: HashMap::new(),
            grams: HashMap::new(),
        }
    }

    fn key(&self, term: Option<Term>, box_index: usize, axis: usize, sel: &AxisSel) -> Result<FactorKey> {
        Ok(match term {
            None => FactorKey {
                src: Source::Ones,
                box_index: 0,
                axis: 0,
                start: 0,
                len: sel.len,
            },
            Some(t) => {
                let (net, field) = self.layout.locate(t.q)?;
                FactorKey {
                    src: Source::Net {
                        net,
                        field,
                        deriv: t.d == Some(axis),
                    },
                    box_index,
                    axis,
                    start: sel.start,
                    len: sel.len,
                }
            }
        })
    }

    fn factor(&mut self, k: FactorKey) -> Result<Var<'t>> {
        if let Some(v) = self.factors.get(&k) {
            return Ok(*v);
        }
        let v = match k.src {
            Source::Ones => self.tape.leaf(Mat::filled(k.len, 1, 1.0)),
            Source::Net { net, field, deriv } => {
                let basis = self.bases[k.box_index][net]
                    .ok_or_else(|| Error::Config(format!("network {net} was not evaluated")))?[k.axis];
                let block = basis.block(deriv, field, self.ranks[net]);
                if k.start == 0 && k.len == block.shape().0 {
                    block
                } else {
                    block.rows(k.start, k.len)
                }
            }
        };
        self.factors.insert(k, v);
        Ok(v)
    }

    fn gram(&mut self, s: FactorKey, t: FactorKey, sel: &AxisSel) -> Result<Var<'t>> {
        if let Some(v) = self.grams.get(&(s, t, sel.id)) {
            return Ok(*v);
        }
        let xs = match self.scaled.get(&(s, sel.id)) {
            Some(v) => *v,
            None => {
                let v = self.factor(s)?.row_scale(Rc::clone(&sel.weights));
                self.scaled.insert((s, sel.id), v);
                v
            }
        };
        let xt = self.factor(t)?;
        let g = xs.matmul_t(xt, true, false);
        self.grams.insert((s, t, sel.id), g);
        Ok(g)
    }
}

impl<'t> Integrator<'t> for GramIntegrator<'t> {
    fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn integrate(&mut self, region: &Region, a: &LinExpr, b: &LinExpr) -> Result<Var<'t>> {
        let (bi, sels) = tensor_parts(region)?;
        let same = std::ptr::eq(a, b);
        let (ea, eb) = (expand(a), expand(b));
        let mut constant = 0.0;
        let mut parts = Vec::new();
        for (i, &(ca, ta)) in ea.iter().enumerate() {
            for (j, &(cb, tb)) in eb.iter().enumerate() {
                if same && j < i {
                    continue;
                }
                let coef = if same && j > i { 2.0 * ca * cb } else { ca * cb };
                if coef == 0.0 {
                    continue;
                }
                if ta.is_none() && tb.is_none() {
                    let measure: f64 = sels.iter().map(|s| s.weights.iter().sum::<f64>()).product();
                    constant += coef * measure;
                    continue;
                }
                let mut g = Vec::with_capacity(3);
                for (axis, sel) in sels.iter().enumerate() {
                    let ks = self.key(ta, bi, axis, sel)?;
                    let kt = self.key(tb, bi, axis, sel)?;
                    g.push(self.gram(ks, kt, sel)?);
                }
                parts.push(g[0].triple_dot(g[1], g[2]).scale(coef));
            }
        }
        let sum = parts.into_iter().reduce(|x, y| x + y);
        Ok(match sum {
            Some(v) if constant != 0.0 => v.add_scalar(constant),
            Some(v) => v,
            None => self.tape.scalar(constant),
        })
    }
}

/// Network outputs and per-axis tangents at a region's points.
type Evaluated<'t> = (Var<'t>, [Var<'t>; 3]);

enum PointSource<'t> {
    Separable { bases: Bases<'t>, ranks: Vec<usize> },
    Mlp { nets: Vec<(MlpSpec, Var<'t>)> },
}

pub struct PointIntegrator<'t, 'g> {
    tape: &'t Tape,
    source: PointSource<'t>,
    layout: FieldLayout,
    coords: &'g [[Vec<f64>; 3]],
    terms: HashMap<(usize, Term), Var<'t>>,
    weights: HashMap<usize, (Var<'t>, f64)>,
    evaluated: HashMap<(usize, usize), Evaluated<'t>>,
}

impl<'t, 'g> PointIntegrator<'t, 'g> {
    /// Pointwise integration for separable networks, from their bases.
    pub fn separable(tape: &'t Tape, model: &FieldModel, bases: Bases<'t>, coords: &'g [[Vec<f64>; 3]]) -> Self {
        let ranks = model
            .networks()
            .map(|n| match n {
                Network::Separable(m) => m.rank(),
                Network::Pointwise { .. } => 0,
            })
            .collect();
        Self::with_source(tape, model, PointSource::Separable { bases, ranks }, coords)
    }

    /// Pointwise integration for multilayer perceptrons.
    pub fn mlp(tape: &'t Tape, leaves: &[Var<'t>], model: &FieldModel, coords: &'g [[Vec<f64>; 3]]) -> Result<Self> {
        let offsets = leaf_offsets(model);
        let nets = model
            .networks()
            .enumerate()
            .map(|(n, net)| match net {
                Network::Pointwise { spec, .. } => Ok((spec.clone(), leaves[offsets[n]])),
                Network::Separable(_) => Err(Error::Config(
                    "pointwise evaluation of a separable network goes through its bases".into(),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::with_source(tape, model, PointSource::Mlp { nets }, coords))
    }

    fn with_source(tape: &'t Tape, model: &FieldModel, source: PointSource<'t>, coords: &'g [[Vec<f64>; 3]]) -> Self {
        Self {
            tape,
            source,
            layout: FieldLayout::of(model),
            coords,
            terms: HashMap::new(),
            weights: HashMap::new(),
            evaluated: HashMap::new(),
        }
    }

    fn weights(&mut self, region: &Region) -> (Var<'t>, f64) {
        if let Some(w) = self.weights.get(&region.id) {
            return *w;
        }
        let (_, w) = region.points_and_weights(self.coords);
        let total = w.iter().sum();
        let v = (self.tape.leaf(Mat::column(w)), total);
        self.weights.insert(region.id, v);
        v
    }

    fn term(&mut self, region: &Region, t: Term) -> Result<Var<'t>> {
        if let Some(v) = self.terms.get(&(region.id, t)) {
            return Ok(*v);
        }
        let (net, field) = self.layout.locate(t.q)?;
        let v = match &self.source {
            PointSource::Separable { bases, ranks } => {
                let (bi, sels) = tensor_parts(region)?;
                let basis = bases[bi][net].ok_or_else(|| Error::Config(format!("network {net} was not evaluated")))?;
                let f = [0, 1, 2].map(|a| {
                    basis[a]
                        .block(t.d == Some(a), field, ranks[net])
                        .rows(sels[a].start, sels[a].len)
                });
                merge_grid(f[0], f[1], f[2]).reshape(region.len(), 1)
            }
            PointSource::Mlp { nets } => {
                let key = (region.id, net);
                let (out, tangents) = match self.evaluated.get(&key) {
                    Some(e) => *e,
                    None => {
                        let (spec, theta) = &nets[net];
                        let (pts, _) = region.points_and_weights(self.coords);
                        let input = self.tape.leaf(Mat::new(
                            pts.len(),
                            3,
                            pts.iter().flat_map(|p| p.iter().copied()).collect(),
                        ));
                        let seeds: Vec<Var<'t>> = (0..3)
                            .map(|k| {
                                let mut e = vec![0.0; 3];
                                e[k] = 1.0;
                                self.tape.leaf(Mat::row(e))
                            })
                            .collect();
                        let (out, d) = spec.forward_tape(*theta, input, &seeds);
                        let e = (out, [d[0], d[1], d[2]]);
                        self.evaluated.insert(key, e);
                        e
                    }
                };
                match t.d {
                    None => out.cols(field, 1),
                    Some(a) => tangents[a].cols(field, 1),
                }
            }
        };
        self.terms.insert((region.id, t), v);
        Ok(v)
    }

    fn expr(&mut self, region: &Region, e: &LinExpr) -> Result<Option<Var<'t>>> {
        let mut acc: Option<Var<'t>> = None;
        for &(c, t) in &e.terms {
            let v = self.term(region, t)?;
            let v = if c == 1.0 { v } else { v.scale(c) };
            acc = Some(match acc {
                Some(a) => a + v,
                None => v,
            });
        }
        Ok(acc.map(|v| if e.constant != 0.0 { v.add_scalar(e.constant) } else { v }))
    }
}

impl<'t, 'g> Integrator<'t> for PointIntegrator<'t, 'g> {
    fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn integrate(&mut self, region: &Region, a: &LinExpr, b: &LinExpr) -> Result<Var<'t>> {
        let (w, total) = self.weights(region);
        let same = std::ptr::eq(a, b);
        let va = self.expr(region, a)?;
        let vb = if same { va } else { self.expr(region, b)? };
        Ok(match (va, vb) {
            (Some(x), Some(_)) if same => (w * x.square()).sum(),
            (Some(x), Some(y)) => (w * x * y).sum(),
            (Some(x), None) => (w * x).sum().scale(b.constant),
            (None, Some(y)) => (w * y).sum().scale(a.constant),
            (None, None) => self.tape.scalar(a.constant * b.constant * total),
        })
    }
}
