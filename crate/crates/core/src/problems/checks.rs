//! Physical sanity checks on trained models.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::linspace;
use crate::error::{Error, Result};
use crate::loss::{build_grid, LossGrid, LossProblem, Mode, Sampling};
use crate::mechanics::{displacement_magnitude, stress_with, strain};
use crate::nn::{FieldBatch, FieldModel};

use super::{predict, ProblemConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeResult {
    /// Penalized energy of the model.
    pub energy: f64,
    /// Smallest `J(u+dv) + J(u-dv) - 2 J(u)` over the probed directions.
    pub worst_gap: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Sampled displacement fields on every region of an energy grid.
struct Sampled {
    volume: Vec<(FieldBatch, Vec<f64>)>,
    loads: Vec<(FieldBatch, Vec<f64>, [f64; 3])>,
    clamped: Vec<(FieldBatch, Vec<f64>, [f64; 3])>,
}

fn sample(model: &FieldModel, grid: &LossGrid) -> Result<Sampled> {
    let eval = |r: &crate::loss::Region| -> Result<(FieldBatch, Vec<f64>)> {
        let (pts, w) = r.points_and_weights(&grid.coords);
        Ok((model.eval_points(&pts)?.select(0, 3), w))
    };
    Ok(Sampled {
        volume: grid.volume.iter().map(eval).collect::<Result<_>>()?,
        loads: grid
            .loads
            .iter()
            .map(|l| eval(&l.region).map(|(b, w)| (b, w, l.traction)))
            .collect::<Result<_>>()?,
        clamped: grid
            .dirichlet
            .iter()
            .map(|d| eval(&d.region).map(|(b, w)| (b, w, d.target)))
            .collect::<Result<_>>()?,
    })
}

/// A smooth field vanishing on `x = 0`: `v_l = x a_l sin(b_l . p + c_l)`.
#[derive(Clone, Copy)]
struct Direction {
    a: [f64; 3],
    b: [[f64; 3]; 3],
    c: [f64; 3],
}

impl Direction {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let u = Uniform::new_inclusive(-1.0, 1.0);
        let mut d = Direction {
            a: [0.0; 3],
            b: [[0.0; 3]; 3],
            c: [0.0; 3],
        };
        for l in 0..3 {
            d.a[l] = u.sample(rng);
            d.c[l] = 3.0 * u.sample(rng);
            for k in 0..3 {
                d.b[l][k] = 4.0 * u.sample(rng);
            }
        }
        d
    }

    fn value_and_gradient(&self, p: [f64; 3], l: usize) -> (f64, [f64; 3]) {
        let arg: f64 = (0..3).map(|k| self.b[l][k] * p[k]).sum::<f64>() + self.c[l];
        let (s, c) = arg.sin_cos();
        let v = p[0] * self.a[l] * s;
        let mut g = [0.0; 3];
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = p[0] * self.a[l] * c * self.b[l][k];
        }
        g[0] += self.a[l] * s;
        (v, g)
    }

    fn shift(&self, b: &FieldBatch, t: f64) -> FieldBatch {
        let mut out = b.clone();
        for (i, p) in b.points.iter().enumerate() {
            for l in 0..3 {
                let (v, g) = self.value_and_gradient(*p, l);
                out.values[l][i] += t * v;
                for k in 0..3 {
                    out.d_values[l][i][k] += t * g[k];
                }
            }
        }
        out
    }
}

fn functional(s: &Sampled, problem: &LossProblem, dir: Option<(&Direction, f64)>) -> f64 {
    let field = |b: &FieldBatch| match dir {
        Some((d, t)) => d.shift(b, t),
        None => b.clone(),
    };
    let mut e = 0.0;
    for (b, w) in &s.volume {
        let u = field(b);
        for (i, wi) in w.iter().enumerate() {
            let eps = strain(&u.gradient(i));
            let sig = stress_with(&eps, problem.hooke);
            let fu: f64 = (0..3).map(|l| problem.body_force[l] * u.values[l][i]).sum();
            e += wi * (0.5 * sig.contract(&eps) - fu);
        }
    }
    for (b, w, t) in &s.loads {
        let u = field(b);
        for (i, wi) in w.iter().enumerate() {
            e -= wi * (0..3).map(|l| t[l] * u.values[l][i]).sum::<f64>();
        }
    }
    let mut bc = 0.0;
    for (b, w, target) in &s.clamped {
        let u = field(b);
        for (i, wi) in w.iter().enumerate() {
            bc += wi * (0..3).map(|l| (u.values[l][i] - target[l]).powi(2)).sum::<f64>();
        }
    }
    problem.lambda_bc * bc + e
}

/// Discrete convexity of the penalized energy around the model's field
/// along `directions` random smooth perturbations vanishing on the clamp.
/// `delta` is the perturbation amplitude relative to the largest sampled
/// displacement.
pub fn stationarity_probe(
    model: &FieldModel,
    p: &ProblemConfig,
    directions: usize,
    delta: f64,
    seed: u64,
) -> Result<ProbeResult> {
    if p.clamped.iter().any(|f| f.face.axis != 0 || p.domain.boxes[f.box_index].lo[0] != 0.0) {
        return Err(Error::Unsupported("the probe assumes clamping on x = 0".into()));
    }
    let problem = p.loss_problem(Mode::SpinnDem)?;
    let grid = build_grid(&problem, Sampling::Quadrature, true, seed, 0)?;
    let s = sample(model, &grid)?;
    let scale = s
        .volume
        .iter()
        .flat_map(|(b, _)| b.values.iter().flatten())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let t = delta * scale;
    let base = functional(&s, &problem, None);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..directions {
        let d = Direction::random(&mut rng);
        let plus = functional(&s, &problem, Some((&d, t)));
        let minus = functional(&s, &problem, Some((&d, -t)));
        worst = worst.min(plus + minus - 2.0 * base);
    }
    let tol = 1e-6 * base.abs();
    Ok(ProbeResult {
        energy: base,
        worst_gap: worst,
        tol,
        passed: worst >= -tol,
    })
}

/// `|u_y(y0+d) + u_y(y0-d)| / (|u_y(y0+d)| + |u_y(y0-d)|)` in the L2 norm
/// over mirrored point pairs about the mid-plane `y0` of a single box.
pub fn symmetry_defect(model: &FieldModel, p: &ProblemConfig) -> Result<f64> {
    let b = match p.domain.boxes.as_slice() {
        [b] => b,
        _ => return Err(Error::Unsupported("symmetry check needs a single box".into())),
    };
    let y0 = 0.5 * (b.lo[1] + b.hi[1]);
    let half = 0.5 * b.extent(1);
    let (mut plus, mut minus) = (Vec::new(), Vec::new());
    for &x in &linspace(b.lo[0], b.hi[0], 33) {
        for &z in &linspace(b.lo[2], b.hi[2], 9) {
            for k in 1..=8 {
                let d = half * k as f64 / 8.0;
                plus.push([x, y0 + d, z]);
                minus.push([x, y0 - d, z]);
            }
        }
    }
    let a = predict(model, p, &plus)?;
    let m = predict(model, p, &minus)?;
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let sum = norm(&mut a.displacement.iter().zip(&m.displacement).map(|(u, v)| u[1] + v[1]));
    let den = norm(&mut a.displacement.iter().map(|u| u[1])) + norm(&mut m.displacement.iter().map(|u| u[1]));
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(sum / den)
}

/// Mean displacement magnitude on the clamped faces over the largest
/// magnitude on the evaluation grid.
pub fn clamp_ratio(model: &FieldModel, p: &ProblemConfig) -> Result<f64> {
    let mut face = Vec::new();
    for f in &p.clamped {
        let b = &p.domain.boxes[f.box_index];
        let n = p.eval_grid[f.box_index];
        let mut axes = [0, 1, 2].map(|a| linspace(b.lo[a], b.hi[a], n[a]));
        axes[f.face.axis] = vec![b.face_coordinate(f.face)];
        face.extend(crate::nn::grid_points(&axes));
    }
    let on_face = predict(model, p, &face)?;
    let all = predict(model, p, &p.eval_points())?;
    let mean = on_face.displacement.iter().map(|u| displacement_magnitude(u)).sum::<f64>() / face.len() as f64;
    let max = all.displacement.iter().map(|u| displacement_magnitude(u)).fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::UndefinedMetric("displacement vanishes everywhere".into()));
    }
    Ok(mean / max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BoxDomain;
    use crate::problems::beam_problem;

    fn small_beam() -> ProblemConfig {
        let mut p = beam_problem();
        p.domain.boxes[0] = BoxDomain::new([0.0; 3], [1.0, 0.1, 0.1], [9, 5, 5]);
        p.architecture.hidden = vec![8];
        p.architecture.rank = 4;
        p
    }

    #[test]
    fn probe_holds_at_random_init() {
        let p = small_beam();
        let m = p.init_model(Mode::SpinnDem, 1).unwrap();
        let r = stationarity_probe(&m, &p, 4, 0.1, 7).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.worst_gap > 0.0);
    }

    #[test]
    fn direction_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Direction::random(&mut rng);
        let p = [0.3, 0.05, 0.02];
        let h = 1e-6;
        for l in 0..3 {
            let (_, g) = d.value_and_gradient(p, l);
            for k in 0..3 {
                let (mut a, mut b) = (p, p);
                a[k] += h;
                b[k] -= h;
                let fd = (d.value_and_gradient(a, l).0 - d.value_and_gradient(b, l).0) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-7);
            }
        }
        assert_eq!(d.value_and_gradient([0.0, 0.5, 0.5], 1).0, 0.0);
    }

    #[test]
    fn clamp_and_symmetry_are_finite() {
        let p = small_beam();
        let m = p.init_model(Mode::SpinnDem, 2).unwrap();
        assert!(clamp_ratio(&m, &p).unwrap().is_finite());
        let s = symmetry_defect(&m, &p).unwrap();
        assert!((0.0..=1.0).contains(&s));
    }
}
