//! Box-union domains, tensor-product Simpson quadrature, face point sets and
//! random collocation resampling.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lo,
    Hi,
}

/// One of the six faces of a box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaceTag {
    pub axis: usize,
    pub side: Side,
}

impl FaceTag {
    pub const fn new(axis: usize, side: Side) -> Self {
        Self { axis, side }
    }

    pub fn all() -> [FaceTag; 6] {
        let mut out = [FaceTag::new(0, Side::Lo); 6];
        for axis in 0..3 {
            out[2 * axis] = FaceTag::new(axis, Side::Lo);
            out[2 * axis + 1] = FaceTag::new(axis, Side::Hi);
        }
        out
    }

    pub fn outward_normal(&self) -> [f64; 3] {
        let mut n = [0.0; 3];
        n[self.axis] = match self.side {
            Side::Lo => -1.0,
            Side::Hi => 1.0,
        };
        n
    }
}

impl std::fmt::Display for FaceTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self.side {
            Side::Lo => "-",
            Side::Hi => "+",
        };
        write!(f, "{}{}", AXIS_NAMES[self.axis], s)
    }
}

/// Axis-aligned box with a per-axis point count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub resolution: [usize; 3],
}

impl BoxDomain {
    pub fn new(lo: [f64; 3], hi: [f64; 3], resolution: [usize; 3]) -> Self {
        Self { lo, hi, resolution }
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if !(self.lo[a] < self.hi[a]) {
                return Err(Error::Config(format!(
                    "box bounds along {} are not increasing",
                    AXIS_NAMES[a]
                )));
            }
        }
        Ok(())
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|a| self.extent(a)).product()
    }

    pub fn face_area(&self, tag: FaceTag) -> f64 {
        (0..3).filter(|&a| a != tag.axis).map(|a| self.extent(a)).product()
    }

    pub fn face_coordinate(&self, tag: FaceTag) -> f64 {
        match tag.side {
            Side::Lo => self.lo[tag.axis],
            Side::Hi => self.hi[tag.axis],
        }
    }

    pub fn contains(&self, p: [f64; 3], tol: f64) -> bool {
        (0..3).all(|a| p[a] >= self.lo[a] - tol && p[a] <= self.hi[a] + tol)
    }

    /// Uniform nodes including both ends.
    pub fn axis_nodes(&self, axis: usize) -> Vec<f64> {
        linspace(self.lo[axis], self.hi[axis], self.resolution[axis])
    }

    pub fn with_resolution(mut self, resolution: [usize; 3]) -> Self {
        self.resolution = resolution;
        self
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { b } else { a + h * i as f64 })
                .collect()
        }
    }
}

/// Composite Simpson weights on `n` uniform nodes over `[a, b]`.
pub fn simpson_weights(n: usize, a: f64, b: f64) -> Result<Vec<f64>> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::Config(format!(
            "composite Simpson needs an odd node count >= 3, got {n}"
        )));
    }
    if !(b > a) {
        return Err(Error::Config(format!("empty interval [{a}, {b}]")));
    }
    let h = (b - a) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            let c = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect())
}

fn axis_simpson(b: &BoxDomain, axis: usize) -> Result<Vec<f64>> {
    simpson_weights(b.resolution[axis], b.lo[axis], b.hi[axis]).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("axis {}: {msg}", AXIS_NAMES[axis])),
        other => other,
    })
}

/// Tensor-product point set with separable weights: the weight of point
/// `(i, j, k)` is `weights[0][i] * weights[1][j] * weights[2][k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorGrid {
    pub axes: [Vec<f64>; 3],
    pub weights: [Vec<f64>; 3],
}

impl TensorGrid {
    pub fn shape(&self) -> [usize; 3] {
        [self.axes[0].len(), self.axes[1].len(), self.axes[2].len()]
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points in row-major `(i, j, k)` order.
    pub fn points(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.len());
        for &x in &self.axes[0] {
            for &y in &self.axes[1] {
                for &z in &self.axes[2] {
                    out.push([x, y, z]);
                }
            }
        }
        out
    }

    /// Combined per-point weights in the same order as [`TensorGrid::points`].
    pub fn point_weights(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for &wx in &self.weights[0] {
            for &wy in &self.weights[1] {
                for &wz in &self.weights[2] {
                    out.push(wx * wy * wz);
                }
            }
        }
        out
    }

    pub fn total_weight(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| w.iter().sum::<f64>())
            .product()
    }

    /// Uniform weights `1/n` per axis, so the total is one and integrals are means.
    pub fn with_mean_weights(axes: [Vec<f64>; 3]) -> Self {
        let weights = [0, 1, 2].map(|a| {
            let n = axes[a].len();
            vec![1.0 / n as f64; n]
        });
        Self { axes, weights }
    }
}

/// Simpson volume quadrature on a box.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureGrid {
    pub grid: TensorGrid,
}

impl QuadratureGrid {
    pub fn total(&self) -> f64 {
        self.grid.total_weight()
    }
}

pub fn tensor_quadrature(b: &BoxDomain) -> Result<QuadratureGrid> {
    b.validate()?;
    let weights = [axis_simpson(b, 0)?, axis_simpson(b, 1)?, axis_simpson(b, 2)?];
    let axes = [b.axis_nodes(0), b.axis_nodes(1), b.axis_nodes(2)];
    Ok(QuadratureGrid {
        grid: TensorGrid { axes, weights },
    })
}

/// Surface quadrature on one face of a box. Along the face normal the grid
/// has a single coordinate with weight one.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceSet {
    pub tag: FaceTag,
    pub normal: [f64; 3],
    pub grid: TensorGrid,
}

impl FaceSet {
    pub fn area(&self) -> f64 {
        self.grid.total_weight()
    }
}

pub fn face_quadrature(b: &BoxDomain, tag: FaceTag) -> Result<FaceSet> {
    b.validate()?;
    let mut axes = [b.axis_nodes(0), b.axis_nodes(1), b.axis_nodes(2)];
    let mut weights: [Vec<f64>; 3] = Default::default();
    for a in 0..3 {
        weights[a] = if a == tag.axis {
            vec![1.0]
        } else {
            axis_simpson(b, a)?
        };
    }
    axes[tag.axis] = vec![b.face_coordinate(tag)];
    Ok(FaceSet {
        tag,
        normal: tag.outward_normal(),
        grid: TensorGrid { axes, weights },
    })
}

/// Independent sorted uniform samples per axis, reproducible from
/// `(seed, epoch)`.
pub fn resample_uniform(b: &BoxDomain, count: usize, seed: u64, epoch: u64) -> Result<[Vec<f64>; 3]> {
    if count < 2 {
        return Err(Error::Config(format!(
            "resampling needs at least 2 points per axis, got {count}"
        )));
    }
    b.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    Ok([0, 1, 2].map(|a| {
        let dist = Uniform::new_inclusive(b.lo[a], b.hi[a]);
        let mut v: Vec<f64> = (0..count).map(|_| dist.sample(&mut rng)).collect();
        v.sort_by(f64::total_cmp);
        v
    }))
}

/// Union of boxes that meet only along shared faces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub boxes: Vec<BoxDomain>,
}

impl DomainSpec {
    pub fn single(b: BoxDomain) -> Self {
        Self { boxes: vec![b] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.boxes.is_empty() {
            return Err(Error::Config("domain has no boxes".into()));
        }
        self.boxes.iter().try_for_each(BoxDomain::validate)
    }

    pub fn volume(&self) -> f64 {
        self.boxes.iter().map(BoxDomain::volume).sum()
    }

    pub fn contains(&self, p: [f64; 3], tol: f64) -> bool {
        self.boxes.iter().any(|b| b.contains(p, tol))
    }

    /// Bounding box of the union.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for b in &self.boxes {
            for a in 0..3 {
                lo[a] = lo[a].min(b.lo[a]);
                hi[a] = hi[a].max(b.hi[a]);
            }
        }
        (lo, hi)
    }
}

pub const ANGLE_WALL: f64 = 0.006;
pub const ANGLE_SIZE: f64 = 0.06;

/// L-section angle: a vertical wall `y in [0.054, 0.06], z in [0, 0.054]`
/// and a horizontal flange `y in [0, 0.06], z in [0.054, 0.06]`, length 1.
/// The boxes share the plane `z = 0.054`, which has no volume, so their
/// quadratures are simply added.
pub fn angle_domain() -> DomainSpec {
    angle_domain_with([513, 9, 65], [513, 65, 9])
}

pub fn angle_domain_with(wall_resolution: [usize; 3], flange_resolution: [usize; 3]) -> DomainSpec {
    let inner = ANGLE_SIZE - ANGLE_WALL;
    DomainSpec {
        boxes: vec![
            BoxDomain::new([0.0, inner, 0.0], [1.0, ANGLE_SIZE, inner], wall_resolution),
            BoxDomain::new([0.0, 0.0, inner], [1.0, ANGLE_SIZE, ANGLE_SIZE], flange_resolution),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_cube(n: usize) -> BoxDomain {
        BoxDomain::new([0.0; 3], [1.0; 3], [n; 3])
    }

    #[test]
    fn simpson_textbook_weights() {
        let w = simpson_weights(3, 0.0, 1.0).unwrap();
        assert_relative_eq!(w[0], 1.0 / 6.0, max_relative = 1e-15);
        assert_relative_eq!(w[1], 4.0 / 6.0, max_relative = 1e-15);
        assert_relative_eq!(w[2], 1.0 / 6.0, max_relative = 1e-15);
        let w = simpson_weights(3, 0.0, 2.0).unwrap();
        assert_relative_eq!(w[0], 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(w[1], 4.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn simpson_integrates_cubic() {
        let w = simpson_weights(5, 0.0, 1.0).unwrap();
        let x = linspace(0.0, 1.0, 5);
        let s: f64 = w.iter().zip(&x).map(|(w, x)| w * x.powi(3)).sum();
        assert!((s - 0.25).abs() <= 1e-15);
    }

    #[test]
    fn even_count_names_axis() {
        let b = BoxDomain::new([0.0; 3], [1.0; 3], [3, 4, 3]);
        let err = tensor_quadrature(&b).unwrap_err().to_string();
        assert!(err.contains("axis y"), "{err}");
    }

    #[test]
    fn cube_quadrature() {
        let q = tensor_quadrature(&unit_cube(3)).unwrap();
        assert_relative_eq!(q.total(), 1.0, max_relative = 1e-14);
        let q = tensor_quadrature(&unit_cube(5)).unwrap();
        let s: f64 = q
            .grid
            .points()
            .iter()
            .zip(q.grid.point_weights())
            .map(|(p, w)| w * p[0] * p[1] * p[2])
            .sum();
        assert!((s - 0.125).abs() <= 1e-14);
        let beam = BoxDomain::new([0.0; 3], [1.0, 0.1, 0.1], [33; 3]);
        assert_relative_eq!(tensor_quadrature(&beam).unwrap().total(), 0.01, max_relative = 1e-12);
    }

    #[test]
    fn face_sets() {
        let beam = BoxDomain::new([0.0; 3], [1.0, 0.1, 0.1], [33; 3]);
        let top = face_quadrature(&beam, FaceTag::new(2, Side::Hi)).unwrap();
        assert_eq!(top.normal, [0.0, 0.0, 1.0]);
        assert_relative_eq!(top.area(), 0.1, max_relative = 1e-12);
        let x0 = face_quadrature(&unit_cube(5), FaceTag::new(0, Side::Lo)).unwrap();
        assert_eq!(x0.normal, [-1.0, 0.0, 0.0]);
        let s: f64 = x0
            .grid
            .points()
            .iter()
            .zip(x0.grid.point_weights())
            .map(|(p, w)| w * p[1] * p[2])
            .sum();
        assert!((s - 0.25).abs() <= 1e-14);
    }

    #[test]
    fn resampling() {
        let b = BoxDomain::new([0.0; 3], [1.0, 0.1, 0.1], [32; 3]);
        let a = resample_uniform(&b, 32, 7, 3).unwrap();
        assert_eq!(a, resample_uniform(&b, 32, 7, 3).unwrap());
        assert_ne!(a, resample_uniform(&b, 32, 7, 4).unwrap());
        for axis in 0..3 {
            assert!(a[axis].windows(2).all(|w| w[0] <= w[1]));
            assert!(a[axis].iter().all(|&v| v >= b.lo[axis] && v <= b.hi[axis]));
        }
        assert!(resample_uniform(&b, 1, 0, 0).is_err());
    }

    #[test]
    fn angle_geometry() {
        let d = angle_domain();
        assert_relative_eq!(d.volume(), 6.84e-4, max_relative = 1e-12);
        assert!(!d.contains([0.5, 0.03, 0.03], 1e-12));
        assert!(d.contains([0.5, 0.057, 0.03], 1e-12));
        assert!(d.contains([0.5, 0.01, 0.058], 1e-12));
        assert_relative_eq!(ANGLE_SIZE - (ANGLE_SIZE - ANGLE_WALL), 0.006, max_relative = 1e-12);
        assert_eq!(d.boxes[0].resolution, [513, 9, 65]);
        assert_eq!(d.boxes[1].resolution, [513, 65, 9]);
        let total: f64 = d
            .boxes
            .iter()
            .map(|b| tensor_quadrature(b).unwrap().total())
            .sum();
        assert_relative_eq!(total, 6.84e-4, max_relative = 1e-12);
    }
}
