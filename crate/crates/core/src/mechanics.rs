//! Pointwise isotropic linear elasticity and the non-dimensional scaling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Isotropic material and load magnitudes, SI units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    /// Young's modulus, Pa.
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// kg/m^3
    pub density: f64,
    /// m/s^2, acting along -z.
    pub gravity: f64,
    /// Magnitude of the surface pressure, Pa.
    pub traction: f64,
}

impl MaterialSpec {
    /// Steel with the given surface pressure.
    pub fn steel(traction: f64) -> Self {
        Self {
            youngs_modulus: 2.1e11,
            poisson_ratio: 0.3,
            density: 7.8e3,
            gravity: 9.81,
            traction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nu = self.poisson_ratio;
        if !(self.youngs_modulus > 0.0) {
            return Err(Error::Material("Young's modulus must be positive".into()));
        }
        if nu >= 0.5 {
            return Err(Error::Material(format!(
                "Poisson ratio {nu} is at or beyond the incompressible limit 0.5"
            )));
        }
        if !(nu >= 0.0) {
            return Err(Error::Material(format!("Poisson ratio {nu} is negative")));
        }
        if !(self.density >= 0.0) || !(self.gravity >= 0.0) {
            return Err(Error::Material("density and gravity must be non-negative".into()));
        }
        Ok(())
    }
}

/// Characteristic length, displacement and shear modulus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpec {
    pub length: f64,
    pub displacement: f64,
    pub modulus: f64,
}

impl ScaleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length > 0.0 && self.displacement > 0.0 && self.modulus > 0.0 {
            Ok(())
        } else {
            Err(Error::Config("characteristic scales must be positive".into()))
        }
    }

    /// Stress scale `mu_c U_c / L_c`: dimensional stress per unit
    /// non-dimensional stress.
    pub fn stress_scale(&self) -> f64 {
        self.modulus * self.displacement / self.length
    }
}

/// Which form of Hooke's law to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constitutive {
    /// `sigma = lambda tr(eps) I + 2 mu eps`, `lambda = nu E / ((1+nu)(1-2nu))`.
    #[default]
    Standard,
    /// `sigma = lambda' tr(eps) I + mu eps` with `lambda' = lambda / 2`,
    /// i.e. half the standard stiffness.
    HalvedShear,
}

/// Coefficients of `sigma = lambda tr(eps) I + shear eps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HookeCoefficients {
    pub lambda: f64,
    pub shear: f64,
}

impl HookeCoefficients {
    pub fn new(lambda: f64, mu: f64, law: Constitutive) -> Self {
        match law {
            Constitutive::Standard => Self {
                lambda,
                shear: 2.0 * mu,
            },
            Constitutive::HalvedShear => Self {
                lambda: 0.5 * lambda,
                shear: mu,
            },
        }
    }
}

/// Lame constants `(lambda, mu)` in Pa.
pub fn lame_constants(mat: &MaterialSpec) -> Result<(f64, f64)> {
    mat.validate()?;
    let (e, nu) = (mat.youngs_modulus, mat.poisson_ratio);
    let lambda = nu * e / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    Ok((lambda, mu))
}

/// Symmetric 3x3 tensor (stress or strain).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SymTensor3 {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    pub xy: f64,
    pub xz: f64,
    pub yz: f64,
}

impl SymTensor3 {
    /// Component order used throughout: xx, yy, zz, xy, xz, yz.
    pub fn to_array(self) -> [f64; 6] {
        [self.xx, self.yy, self.zz, self.xy, self.xz, self.yz]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            xx: a[0],
            yy: a[1],
            zz: a[2],
            xy: a[3],
            xz: a[4],
            yz: a[5],
        }
    }

    pub fn identity(scale: f64) -> Self {
        Self {
            xx: scale,
            yy: scale,
            zz: scale,
            ..Self::default()
        }
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        match (i.min(k), i.max(k)) {
            (0, 0) => self.xx,
            (1, 1) => self.yy,
            (2, 2) => self.zz,
            (0, 1) => self.xy,
            (0, 2) => self.xz,
            (1, 2) => self.yz,
            _ => panic!("tensor index out of range"),
        }
    }

    /// Full contraction `a_ij b_ij`.
    pub fn contract(&self, other: &SymTensor3) -> f64 {
        self.xx * other.xx
            + self.yy * other.yy
            + self.zz * other.zz
            + 2.0 * (self.xy * other.xy + self.xz * other.xz + self.yz * other.yz)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_array(self.to_array().map(|v| v * c))
    }
}

/// Index of symmetric component `(i, k)` in [`SymTensor3::to_array`] order.
pub fn sym_index(i: usize, k: usize) -> usize {
    match (i.min(k), i.max(k)) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (0, 1) => 3,
        (0, 2) => 4,
        (1, 2) => 5,
        _ => panic!("tensor index out of range"),
    }
}

/// Small strain from a displacement gradient, `grad_u[i][k] = du_i/dx_k`.
pub fn strain(grad_u: &[[f64; 3]; 3]) -> SymTensor3 {
    let e = |i: usize, k: usize| 0.5 * (grad_u[i][k] + grad_u[k][i]);
    SymTensor3 {
        xx: e(0, 0),
        yy: e(1, 1),
        zz: e(2, 2),
        xy: e(0, 1),
        xz: e(0, 2),
        yz: e(1, 2),
    }
}

/// Standard isotropic Hooke's law.
pub fn stress(eps: &SymTensor3, lambda: f64, mu: f64) -> SymTensor3 {
    stress_with(eps, HookeCoefficients::new(lambda, mu, Constitutive::Standard))
}

pub fn stress_with(eps: &SymTensor3, c: HookeCoefficients) -> SymTensor3 {
    let p = c.lambda * eps.trace();
    SymTensor3 {
        xx: p + c.shear * eps.xx,
        yy: p + c.shear * eps.yy,
        zz: p + c.shear * eps.zz,
        xy: c.shear * eps.xy,
        xz: c.shear * eps.xz,
        yz: c.shear * eps.yz,
    }
}

/// Von Mises equivalent stress from normal-stress differences and shears.
pub fn von_mises(sigma: &SymTensor3) -> Result<f64> {
    let s = sigma;
    let normal = (s.xx - s.yy).powi(2) + (s.yy - s.zz).powi(2) + (s.zz - s.xx).powi(2);
    let shear = s.xy * s.xy + s.xz * s.xz + s.yz * s.yz;
    let v = (0.5 * normal + 3.0 * shear).sqrt();
    if !v.is_finite() {
        return Err(Error::Numeric(format!("von Mises stress is {v}")));
    }
    Ok(v)
}

pub fn displacement_magnitude(u: &[f64]) -> f64 {
    u.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Material constants in non-dimensional form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NondimConstants {
    pub lambda: f64,
    pub mu: f64,
    /// `L_c^2 rho g / (mu_c U_c)`, magnitude of the body force along -z.
    pub rho_g: f64,
    /// `L_c T / (mu_c U_c)`, magnitude of the surface pressure.
    pub traction: f64,
}

impl NondimConstants {
    pub fn hooke(&self, law: Constitutive) -> HookeCoefficients {
        HookeCoefficients::new(self.lambda, self.mu, law)
    }
}

pub fn nondim_forward(mat: &MaterialSpec, scale: &ScaleSpec) -> Result<NondimConstants> {
    scale.validate()?;
    let (lambda, mu) = lame_constants(mat)?;
    let denom = scale.modulus * scale.displacement;
    Ok(NondimConstants {
        lambda: lambda / scale.modulus,
        mu: mu / scale.modulus,
        rho_g: scale.length * scale.length * mat.density * mat.gravity / denom,
        traction: scale.length * mat.traction / denom,
    })
}

/// Restores SI displacement and stress from non-dimensional values.
pub fn dim_restore(u: [f64; 3], sigma: SymTensor3, scale: &ScaleSpec) -> ([f64; 3], SymTensor3) {
    (
        u.map(|v| v * scale.displacement),
        sigma.scaled(scale.stress_scale()),
    )
}

/// Inverse of [`dim_restore`].
pub fn dim_reduce(u: [f64; 3], sigma: SymTensor3, scale: &ScaleSpec) -> ([f64; 3], SymTensor3) {
    (
        u.map(|v| v / scale.displacement),
        sigma.scaled(1.0 / scale.stress_scale()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn steel() -> MaterialSpec {
        MaterialSpec::steel(1e4)
    }

    #[test]
    fn lame_constants_for_steel() {
        let (lambda, mu) = lame_constants(&steel()).unwrap();
        assert_relative_eq!(mu, 8.076_923_076_923_077e10, max_relative = 1e-14);
        assert_relative_eq!(lambda, 1.211_538_461_538_461_5e11, max_relative = 1e-14);
    }

    #[test]
    fn zero_poisson_ratio_gives_zero_lambda() {
        let mat = MaterialSpec {
            poisson_ratio: 0.0,
            ..steel()
        };
        assert_eq!(lame_constants(&mat).unwrap().0, 0.0);
    }

    #[test]
    fn incompressible_limit_rejected() {
        let mat = MaterialSpec {
            poisson_ratio: 0.5,
            ..steel()
        };
        assert!(matches!(lame_constants(&mat), Err(Error::Material(_))));
    }

    #[test]
    fn strain_examples() {
        let a = 0.7;
        let e = strain(&[[a, 0.0, 0.0], [0.0; 3], [0.0; 3]]);
        assert_eq!(e, SymTensor3 { xx: a, ..Default::default() });
        let rot = strain(&[[0.0, 2.0, -1.0], [-2.0, 0.0, 0.5], [1.0, -0.5, 0.0]]);
        assert_eq!(rot, SymTensor3::default());
        let e = strain(&[[0.0, 1.0, 0.0], [3.0, 0.0, 0.0], [0.0; 3]]);
        assert_eq!(e.xy, 2.0);
    }

    #[test]
    fn stress_examples() {
        let (l, m) = (1.5, 1.0);
        assert_eq!(stress(&SymTensor3::default(), l, m), SymTensor3::default());
        let a = 0.2;
        let s = stress(&SymTensor3::identity(a), l, m);
        assert_relative_eq!(s.xx, (3.0 * l + 2.0 * m) * a, max_relative = 1e-15);
        assert_eq!(s.xy, 0.0);
        let shear = SymTensor3 { xy: 0.3, ..Default::default() };
        let s = stress(&shear, l, m);
        assert_eq!(s.xy, 2.0 * m * 0.3);
        assert_eq!((s.xx, s.yy, s.zz), (0.0, 0.0, 0.0));
    }

    #[test]
    fn von_mises_examples() {
        let s = 3.5;
        let uni = SymTensor3 { xx: -s, ..Default::default() };
        assert_relative_eq!(von_mises(&uni).unwrap(), s, max_relative = 1e-15);
        assert_eq!(von_mises(&SymTensor3::identity(7.0)).unwrap(), 0.0);
        let tau = 2.0;
        let shear = SymTensor3 { xy: tau, ..Default::default() };
        assert_relative_eq!(von_mises(&shear).unwrap(), 3f64.sqrt() * tau, max_relative = 1e-15);
    }

    #[test]
    fn displacement_magnitudes() {
        assert_eq!(displacement_magnitude(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(displacement_magnitude(&[3.0, 4.0, 0.0]), 5.0);
        assert_relative_eq!(displacement_magnitude(&[1.0, 1.0, 1.0]), 3f64.sqrt());
    }

    #[test]
    fn beam_nondimensional_constants() {
        let (_, mu) = lame_constants(&steel()).unwrap();
        let scale = ScaleSpec {
            length: 1.0,
            displacement: 1e-4,
            modulus: 0.01 * mu,
        };
        let c = nondim_forward(&steel(), &scale).unwrap();
        assert_relative_eq!(c.traction, 1e4 / (0.01 * mu * 1e-4), max_relative = 1e-14);
        assert_relative_eq!(c.traction, 0.123_809_523_809_523_8, max_relative = 1e-12);
        assert_relative_eq!(c.rho_g, 0.947_365_714_285_714, max_relative = 1e-12);
        assert_relative_eq!(c.mu, 100.0, max_relative = 1e-14);

        let unit = ScaleSpec { modulus: mu, ..scale };
        assert_eq!(nondim_forward(&steel(), &unit).unwrap().mu, 1.0);
    }

    #[test]
    fn restore_examples() {
        let scale = ScaleSpec { length: 1.0, displacement: 1e-4, modulus: 8e8 };
        let (u, s) = dim_restore([1.0, 0.0, 0.0], SymTensor3::default(), &scale);
        assert_eq!(u[0], 1e-4);
        assert_eq!(s, SymTensor3::default());
    }
}
