//! Sample sets the losses are integrated over: per-box evaluation
//! coordinates and weighted volume and face regions.

use std::rc::Rc;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{resample_uniform, simpson_weights, BoxDomain, FaceTag, Side};
use crate::error::{Error, Result};
use crate::mechanics::HookeCoefficients;

/// Boundary condition on one box face. Faces without an entry are free.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    Clamped([f64; 3]),
    Traction([f64; 3]),
    /// Face shared with another box: not part of the boundary.
    Interface,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub box_index: usize,
    pub face: FaceTag,
    pub condition: Condition,
}

/// A non-dimensional elastostatic problem as seen by the losses.
#[derive(Clone, Debug, PartialEq)]
pub struct LossProblem {
    pub boxes: Vec<BoxDomain>,
    pub boundaries: Vec<Boundary>,
    pub hooke: HookeCoefficients,
    pub body_force: [f64; 3],
    pub lambda_bc: f64,
}

impl LossProblem {
    pub fn validate(&self) -> Result<()> {
        if self.boxes.is_empty() {
            return Err(Error::Config("problem has no boxes".into()));
        }
        for b in &self.boxes {
            b.validate()?;
        }
        for bd in &self.boundaries {
            if bd.box_index >= self.boxes.len() || bd.face.axis >= 3 {
                return Err(Error::Config(format!(
                    "boundary {} refers to a missing box {}",
                    bd.face, bd.box_index
                )));
            }
        }
        if !(self.lambda_bc >= 0.0) {
            return Err(Error::Config(format!("lambda_bc must be non-negative, got {}", self.lambda_bc)));
        }
        Ok(())
    }

    pub fn condition(&self, box_index: usize, face: FaceTag) -> Option<Condition> {
        self.boundaries
            .iter()
            .find(|b| b.box_index == box_index && b.face == face)
            .map(|b| b.condition)
    }

    /// Every exterior face with its condition; free faces carry zero traction.
    pub fn exterior_faces(&self) -> Vec<(usize, FaceTag, Condition)> {
        let mut out = Vec::new();
        for bi in 0..self.boxes.len() {
            for tag in FaceTag::all() {
                match self.condition(bi, tag) {
                    Some(Condition::Interface) => {}
                    Some(c) => out.push((bi, tag, c)),
                    None => out.push((bi, tag, Condition::Traction([0.0; 3]))),
                }
            }
        }
        out
    }
}

/// How sample points are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Fixed composite Simpson grid at each box's resolution.
    Quadrature,
    /// Independent sorted uniform samples per axis, redrawn on resampling.
    Tensor { count: usize },
    /// Independent uniform points in the volume and on the boundary faces.
    Scattered { volume: usize, surface: usize },
}

/// Selected rows of one axis of a box's coordinates with their weights.
#[derive(Clone, Debug)]
pub struct AxisSel {
    pub start: usize,
    pub len: usize,
    pub weights: Rc<[f64]>,
    pub id: usize,
}

#[derive(Clone, Debug)]
pub enum RegionKind {
    /// Cartesian product of row selections of one box's coordinates;
    /// point weights are products of the axis weights.
    Tensor { box_index: usize, axes: [AxisSel; 3] },
    Scattered { points: Vec<[f64; 3]>, weights: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct Region {
    pub id: usize,
    pub kind: RegionKind,
}

impl Region {
    pub fn len(&self) -> usize {
        match &self.kind {
            RegionKind::Tensor { axes, .. } => axes.iter().map(|a| a.len).product(),
            RegionKind::Scattered { points, .. } => points.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points in row-major order and their weights.
    pub fn points_and_weights(&self, coords: &[[Vec<f64>; 3]]) -> (Vec<[f64; 3]>, Vec<f64>) {
        match &self.kind {
            RegionKind::Scattered { points, weights } => (points.clone(), weights.clone()),
            RegionKind::Tensor { box_index, axes } => {
                let c = &coords[*box_index];
                let mut pts = Vec::with_capacity(self.len());
                let mut ws = Vec::with_capacity(self.len());
                for i in 0..axes[0].len {
                    for j in 0..axes[1].len {
                        for k in 0..axes[2].len {
                            pts.push([
                                c[0][axes[0].start + i],
                                c[1][axes[1].start + j],
                                c[2][axes[2].start + k],
                            ]);
                            ws.push(axes[0].weights[i] * axes[1].weights[j] * axes[2].weights[k]);
                        }
                    }
                }
                (pts, ws)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct DirichletRegion {
    pub region: Region,
    pub target: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct TractionRegion {
    pub region: Region,
    pub normal: [f64; 3],
    pub traction: [f64; 3],
}

/// All regions for one loss evaluation.
///
/// Weights already carry the averaging: residual and coupling regions sum
/// to one over all volume points, Dirichlet regions to `1/3` over all
/// clamped points, traction-mismatch regions to one over all other
/// exterior face points. Energy and load regions carry quadrature weights.
#[derive(Clone, Debug, Default)]
pub struct LossGrid {
    /// Per-box coordinates at which separable body networks are evaluated.
    pub coords: Vec<[Vec<f64>; 3]>,
    pub volume: Vec<Region>,
    pub dirichlet: Vec<DirichletRegion>,
    pub traction: Vec<TractionRegion>,
    pub loads: Vec<TractionRegion>,
}

struct Ids(usize);

impl Ids {
    fn next(&mut self) -> usize {
        self.0 += 1;
        self.0 - 1
    }

    fn sel(&mut self, start: usize, weights: Vec<f64>) -> AxisSel {
        AxisSel {
            start,
            len: weights.len(),
            weights: weights.into(),
            id: self.next(),
        }
    }
}

/// Row indices of the volume samples and of the lo and hi faces per axis.
struct Rows {
    volume: [(usize, usize); 3],
    lo: [usize; 3],
    hi: [usize; 3],
}

fn face_region(
    ids: &mut Ids,
    box_index: usize,
    rows: &Rows,
    tag: FaceTag,
    tangential: impl Fn(usize, usize) -> Vec<f64>,
    normal_weight: f64,
) -> Region {
    let axes = [0, 1, 2].map(|a| {
        if a == tag.axis {
            let row = match tag.side {
                Side::Lo => rows.lo[a],
                Side::Hi => rows.hi[a],
            };
            ids.sel(row, vec![normal_weight])
        } else {
            let (s, n) = rows.volume[a];
            ids.sel(s, tangential(a, n))
        }
    });
    Region {
        id: ids.next(),
        kind: RegionKind::Tensor { box_index, axes },
    }
}

fn face_points(rows: &Rows, tag: FaceTag) -> usize {
    (0..3).filter(|&a| a != tag.axis).map(|a| rows.volume[a].1).product()
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Builds the regions for `sampling`. Random sampling is reproducible from
/// `(seed, epoch)`.
pub fn build_grid(problem: &LossProblem, sampling: Sampling, energy: bool, seed: u64, epoch: u64) -> Result<LossGrid> {
    problem.validate()?;
    match sampling {
        Sampling::Scattered { volume, surface } => scattered_grid(problem, volume, surface, seed, epoch),
        _ => tensor_grid(problem, sampling, energy, seed, epoch),
    }
}

fn tensor_grid(problem: &LossProblem, sampling: Sampling, energy: bool, seed: u64, epoch: u64) -> Result<LossGrid> {
    let mut ids = Ids(0);
    let mut grid = LossGrid::default();
    let mut all_rows = Vec::new();
    let mut vol_weights = Vec::new();
    for (bi, b) in problem.boxes.iter().enumerate() {
        let (coords, rows, weights) = match sampling {
            Sampling::Quadrature => {
                let coords = [0, 1, 2].map(|a| b.axis_nodes(a));
                let weights = [0, 1, 2]
                    .map(|a| simpson_weights(b.resolution[a], b.lo[a], b.hi[a]))
                    .into_iter()
                    .collect::<Result<Vec<_>>>()?;
                let n = b.resolution;
                let rows = Rows {
                    volume: [(0, n[0]), (0, n[1]), (0, n[2])],
                    lo: [0; 3],
                    hi: [n[0] - 1, n[1] - 1, n[2] - 1],
                };
                (coords, rows, weights)
            }
            Sampling::Tensor { count } => {
                let stream = epoch.wrapping_mul(64).wrapping_add(bi as u64);
                let mut coords = resample_uniform(b, count, seed, stream)?;
                for a in 0..3 {
                    coords[a].push(b.lo[a]);
                    coords[a].push(b.hi[a]);
                }
                let rows = Rows {
                    volume: [(0, count); 3],
                    lo: [count; 3],
                    hi: [count + 1; 3],
                };
                (coords, rows, vec![uniform(count); 3])
            }
            Sampling::Scattered { .. } => unreachable!(),
        };
        grid.coords.push(coords);
        all_rows.push(rows);
        vol_weights.push(weights);
    }

    let total_vol: usize = all_rows
        .iter()
        .map(|r| r.volume.iter().map(|v| v.1).product::<usize>())
        .sum();
    for (bi, rows) in all_rows.iter().enumerate() {
        let count: usize = rows.volume.iter().map(|v| v.1).product();
        let axes = [0, 1, 2].map(|a| {
            let mut w = vol_weights[bi][a].clone();
            if !energy && a == 0 {
                let share = count as f64 / total_vol as f64;
                w.iter_mut().for_each(|v| *v *= share);
            }
            ids.sel(rows.volume[a].0, w)
        });
        grid.volume.push(Region {
            id: ids.next(),
            kind: RegionKind::Tensor { box_index: bi, axes },
        });
    }

    let faces = problem.exterior_faces();
    let count_of = |pred: &dyn Fn(&Condition) -> bool| -> usize {
        faces
            .iter()
            .filter(|f| pred(&f.2))
            .map(|f| face_points(&all_rows[f.0], f.1))
            .sum()
    };
    let n_clamped = count_of(&|c| matches!(c, Condition::Clamped(_)));
    let n_traction = count_of(&|c| matches!(c, Condition::Traction(_)));
    for &(bi, tag, cond) in &faces {
        let rows = &all_rows[bi];
        let share = face_points(rows, tag) as f64;
        match cond {
            Condition::Clamped(target) => {
                let region = face_region(&mut ids, bi, rows, tag, |_, n| uniform(n), share / (3.0 * n_clamped as f64));
                grid.dirichlet.push(DirichletRegion { region, target });
            }
            Condition::Traction(t) if energy => {
                if t != [0.0; 3] {
                    let region = face_region(
                        &mut ids,
                        bi,
                        rows,
                        tag,
                        |a, _| vol_weights[bi][a].clone(),
                        1.0,
                    );
                    grid.loads.push(TractionRegion {
                        region,
                        normal: tag.outward_normal(),
                        traction: t,
                    });
                }
            }
            Condition::Traction(t) => {
                let region = face_region(&mut ids, bi, rows, tag, |_, n| uniform(n), share / n_traction as f64);
                grid.traction.push(TractionRegion {
                    region,
                    normal: tag.outward_normal(),
                    traction: t,
                });
            }
            Condition::Interface => {}
        }
    }
    Ok(grid)
}

fn scattered_grid(problem: &LossProblem, volume: usize, surface: usize, seed: u64, epoch: u64) -> Result<LossGrid> {
    if volume == 0 || surface == 0 {
        return Err(Error::Config("scattered sampling needs volume and surface points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut ids = Ids(0);
    let mut grid = LossGrid::default();
    let total: f64 = problem.boxes.iter().map(BoxDomain::volume).sum();
    let mut pts = Vec::with_capacity(volume);
    let pick = Uniform::new(0.0, total);
    for _ in 0..volume {
        let mut r = pick.sample(&mut rng);
        let mut chosen = problem.boxes.len() - 1;
        for (bi, b) in problem.boxes.iter().enumerate() {
            if r < b.volume() {
                chosen = bi;
                break;
            }
            r -= b.volume();
        }
        let b = &problem.boxes[chosen];
        pts.push([0, 1, 2].map(|a| Uniform::new_inclusive(b.lo[a], b.hi[a]).sample(&mut rng)));
    }
    grid.volume.push(Region {
        id: ids.next(),
        kind: RegionKind::Scattered {
            weights: vec![1.0 / volume as f64; volume],
            points: pts,
        },
    });

    let faces = problem.exterior_faces();
    let per_face = (surface / faces.len()).max(1);
    let mut sampled = Vec::new();
    for &(bi, tag, cond) in &faces {
        let b = &problem.boxes[bi];
        let pts: Vec<[f64; 3]> = (0..per_face)
            .map(|_| {
                [0, 1, 2].map(|a| {
                    if a == tag.axis {
                        b.face_coordinate(tag)
                    } else {
                        Uniform::new_inclusive(b.lo[a], b.hi[a]).sample(&mut rng)
                    }
                })
            })
            .collect();
        sampled.push((tag, cond, pts));
    }
    let n_clamped = sampled.iter().filter(|s| matches!(s.1, Condition::Clamped(_))).count() * per_face;
    let n_traction = sampled.iter().filter(|s| matches!(s.1, Condition::Traction(_))).count() * per_face;
    for (tag, cond, points) in sampled {
        let n = points.len();
        match cond {
            Condition::Clamped(target) => grid.dirichlet.push(DirichletRegion {
                region: Region {
                    id: ids.next(),
                    kind: RegionKind::Scattered {
                        points,
                        weights: vec![1.0 / (3.0 * n_clamped as f64); n],
                    },
                },
                target,
            }),
            Condition::Traction(traction) => grid.traction.push(TractionRegion {
                region: Region {
                    id: ids.next(),
                    kind: RegionKind::Scattered {
                        points,
                        weights: vec![1.0 / n_traction as f64; n],
                    },
                },
                normal: tag.outward_normal(),
                traction,
            }),
            Condition::Interface => {}
        }
    }
    Ok(grid)
}
