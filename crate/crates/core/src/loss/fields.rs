//! Loss terms evaluated directly on sampled fields in plain arithmetic.
//! Displacement batches carry fields `u_x, u_y, u_z`; stress batches carry
//! `xx, yy, zz, xy, xz, yz`.

use crate::error::{Error, Result};
use crate::mechanics::{stress_with, strain, sym_index, HookeCoefficients, SymTensor3};
use crate::nn::FieldBatch;

fn check_fields(batch: &FieldBatch, count: usize, what: &str) -> Result<()> {
    if batch.field_count() != count {
        return Err(Error::Config(format!(
            "{what} batch has {} fields, expected {count}",
            batch.field_count()
        )));
    }
    Ok(())
}

fn sigma_at(s: &FieldBatch, p: usize) -> SymTensor3 {
    SymTensor3::from_array([0, 1, 2, 3, 4, 5].map(|c| s.values[c][p]))
}

/// Divergence residual `d sigma_lk / dx_k + f_l` at point `p`.
pub fn residual_at(s: &FieldBatch, p: usize, body_force: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|l| (0..3).map(|k| s.d_values[sym_index(l, k)][p][k]).sum::<f64>() + body_force[l])
}

/// Mean over points of the squared equilibrium residual.
pub fn residual_loss(stress: &FieldBatch, body_force: [f64; 3]) -> Result<f64> {
    check_fields(stress, 6, "stress")?;
    let n = stress.len();
    let sum: f64 = (0..n)
        .map(|p| residual_at(stress, p, body_force).iter().map(|r| r * r).sum::<f64>())
        .sum();
    Ok(sum / n as f64)
}

/// Squared Frobenius mismatch between the stress field and Hooke's law of
/// the displacement field at point `p`, over all nine components.
pub fn coupling_at(u: &FieldBatch, s: &FieldBatch, p: usize, hooke: HookeCoefficients) -> f64 {
    let hooke_sigma = stress_with(&strain(&u.gradient(p)), hooke);
    let diff = SymTensor3::from_array(
        [0, 1, 2, 3, 4, 5].map(|c| s.values[c][p] - hooke_sigma.to_array()[c]),
    );
    diff.contract(&diff)
}

pub fn coupling_loss(u: &FieldBatch, stress: &FieldBatch, hooke: HookeCoefficients) -> Result<f64> {
    check_fields(u, 3, "displacement")?;
    check_fields(stress, 6, "stress")?;
    if u.points != stress.points {
        return Err(Error::Config(
            "coupling needs displacement and stress on identical points".into(),
        ));
    }
    let n = u.len();
    Ok((0..n).map(|p| coupling_at(u, stress, p, hooke)).sum::<f64>() / n as f64)
}

/// Mean squared deviation of every displacement component from `target`,
/// i.e. the sum over points and components divided by `3 N`.
pub fn bc_dirichlet_loss(u: &FieldBatch, target: [f64; 3]) -> Result<f64> {
    check_fields(u, 3, "displacement")?;
    let n = u.len();
    let sum: f64 = (0..n)
        .flat_map(|p| (0..3).map(move |l| (p, l)))
        .map(|(p, l)| (u.values[l][p] - target[l]).powi(2))
        .sum();
    Ok(sum / (3 * n) as f64)
}

/// Stress samples on one boundary face with its outward normal and
/// prescribed traction.
pub struct TractionFace<'a> {
    pub stress: &'a FieldBatch,
    pub normal: [f64; 3],
    pub traction: [f64; 3],
}

/// Mean over all face points of `|sigma n - T|^2`.
pub fn bc_traction_loss(faces: &[TractionFace<'_>]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0;
    for f in faces {
        check_fields(f.stress, 6, "stress")?;
        for p in 0..f.stress.len() {
            let s = sigma_at(f.stress, p);
            for l in 0..3 {
                let t: f64 = (0..3).map(|k| s.get(l, k) * f.normal[k]).sum();
                sum += (t - f.traction[l]).powi(2);
            }
        }
        count += f.stress.len();
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok(sum / count as f64)
}

/// Displacement samples on a loaded face with quadrature weights.
pub struct LoadedFace<'a> {
    pub u: &'a FieldBatch,
    pub weights: &'a [f64],
    pub traction: [f64; 3],
}

/// Total potential energy: strain energy minus the work of body forces and
/// surface tractions, all by weighted quadrature.
pub fn energy_loss(
    volume: &FieldBatch,
    weights: &[f64],
    hooke: HookeCoefficients,
    body_force: [f64; 3],
    loads: &[LoadedFace<'_>],
) -> Result<f64> {
    check_fields(volume, 3, "displacement")?;
    if weights.len() != volume.len() {
        return Err(Error::Config("one quadrature weight per point is required".into()));
    }
    let mut e = 0.0;
    for (p, w) in weights.iter().enumerate() {
        let eps = strain(&volume.gradient(p));
        let sigma = stress_with(&eps, hooke);
        let fu: f64 = (0..3).map(|l| body_force[l] * volume.values[l][p]).sum();
        e += w * (0.5 * sigma.contract(&eps) - fu);
    }
    for f in loads {
        check_fields(f.u, 3, "displacement")?;
        if f.weights.len() != f.u.len() {
            return Err(Error::Config("one surface weight per point is required".into()));
        }
        for (p, w) in f.weights.iter().enumerate() {
            e -= w * (0..3).map(|l| f.traction[l] * f.u.values[l][p]).sum::<f64>();
        }
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanics::Constitutive;

    fn batch(points: Vec<[f64; 3]>, fields: usize, f: impl Fn([f64; 3], usize) -> (f64, [f64; 3])) -> FieldBatch {
        let mut b = FieldBatch::empty(points, fields);
        for c in 0..fields {
            for p in 0..b.len() {
                let (v, d) = f(b.points[p], c);
                b.values[c][p] = v;
                b.d_values[c][p] = d;
            }
        }
        b
    }

    fn pts() -> Vec<[f64; 3]> {
        vec![[0.1, 0.2, 0.3], [0.5, 0.5, 0.5], [0.9, 0.0, 0.7]]
    }

    #[test]
    fn constant_stress_has_no_residual() {
        let s = batch(pts(), 6, |_, c| (c as f64 + 1.0, [0.0; 3]));
        assert_eq!(residual_loss(&s, [0.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn hydrostatic_balance() {
        let rho_g = 0.947_365_714_285_714;
        let s = batch(pts(), 6, |p, c| {
            if c == 2 {
                (rho_g * p[2], [0.0, 0.0, rho_g])
            } else {
                (0.0, [0.0; 3])
            }
        });
        assert_eq!(residual_loss(&s, [0.0, 0.0, -rho_g]).unwrap(), 0.0);
    }

    #[test]
    fn uniaxial_coupling_closed_form() {
        let (lambda, mu, a) = (150.0, 100.0, 0.3);
        let hooke = HookeCoefficients::new(lambda, mu, Constitutive::Standard);
        let u = batch(pts(), 3, |p, c| if c == 0 { (a * p[0], [a, 0.0, 0.0]) } else { (0.0, [0.0; 3]) });
        let s = batch(pts(), 6, |_, _| (0.0, [0.0; 3]));
        let expect = (lambda * a + 2.0 * mu * a).powi(2) + 2.0 * (lambda * a).powi(2);
        let got = coupling_loss(&u, &s, hooke).unwrap();
        assert!((got - expect).abs() <= 1e-12 * expect);
        let s2 = batch(pts(), 6, |_, _| (0.0, [0.0; 3]));
        let u2 = batch(pts(), 3, |p, c| if c == 0 { (2.0 * a * p[0], [2.0 * a, 0.0, 0.0]) } else { (0.0, [0.0; 3]) });
        let quad = coupling_loss(&u2, &s2, hooke).unwrap();
        assert!((quad - 4.0 * got).abs() <= 1e-12 * quad);
    }

    #[test]
    fn coupling_point_mismatch() {
        let hooke = HookeCoefficients::new(1.0, 1.0, Constitutive::Standard);
        let u = batch(pts(), 3, |_, _| (0.0, [0.0; 3]));
        let s = batch(pts()[..2].to_vec(), 6, |_, _| (0.0, [0.0; 3]));
        assert!(matches!(coupling_loss(&u, &s, hooke), Err(Error::Config(_))));
    }

    #[test]
    fn dirichlet_component_mean() {
        let c = 0.7;
        let u = batch(pts(), 3, |_, f| (if f == 0 { c } else { 0.0 }, [0.0; 3]));
        let l = bc_dirichlet_loss(&u, [0.0; 3]).unwrap();
        assert!((l - c * c / 3.0).abs() < 1e-15);
        let z = batch(pts(), 3, |_, _| (0.0, [0.0; 3]));
        assert_eq!(bc_dirichlet_loss(&z, [0.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn traction_examples() {
        let t = 0.123_809_523_809_523_79;
        let loaded = batch(pts(), 6, |_, c| (if c == 2 { -t } else { 0.0 }, [0.0; 3]));
        let free = batch(pts(), 6, |_, _| (0.0, [0.0; 3]));
        let top = TractionFace {
            stress: &loaded,
            normal: [0.0, 0.0, 1.0],
            traction: [0.0, 0.0, -t],
        };
        assert_eq!(bc_traction_loss(&[top]).unwrap(), 0.0);
        let side = TractionFace {
            stress: &free,
            normal: [0.0, -1.0, 0.0],
            traction: [0.0; 3],
        };
        assert_eq!(bc_traction_loss(&[side]).unwrap(), 0.0);
        let unloaded_top = TractionFace {
            stress: &free,
            normal: [0.0, 0.0, 1.0],
            traction: [0.0, 0.0, -t],
        };
        assert!((bc_traction_loss(&[unloaded_top]).unwrap() - t * t).abs() < 1e-16);
    }

    #[test]
    fn rigid_translation_energy() {
        let (c, t, area) = (0.4, 0.12, 0.1);
        let hooke = HookeCoefficients::new(150.0, 100.0, Constitutive::Standard);
        let vol = batch(pts(), 3, |_, f| (if f == 2 { -c } else { 0.0 }, [0.0; 3]));
        let w = vec![0.01 / 3.0; 3];
        let face = batch(pts(), 3, |_, f| (if f == 2 { -c } else { 0.0 }, [0.0; 3]));
        let fw = vec![area / 3.0; 3];
        let load = LoadedFace {
            u: &face,
            weights: &fw,
            traction: [0.0, 0.0, -t],
        };
        let e = energy_loss(&vol, &w, hooke, [0.0; 3], &[load]).unwrap();
        assert!((e - (-t * c * area)).abs() < 1e-15);
        let zero = batch(pts(), 3, |_, _| (0.0, [0.0; 3]));
        assert_eq!(energy_loss(&zero, &w, hooke, [0.0, 0.0, -1.0], &[]).unwrap(), 0.0);
    }

    #[test]
    fn quadratic_field_strain_energy() {
        use crate::domain::{tensor_quadrature, BoxDomain};
        let (lambda, mu, a) = (150.0, 100.0, 0.2);
        let hooke = HookeCoefficients::new(lambda, mu, Constitutive::Standard);
        let q = tensor_quadrature(&BoxDomain::new([0.0; 3], [1.0; 3], [5; 3])).unwrap();
        let u = batch(q.grid.points(), 3, |p, c| {
            if c == 2 {
                (a * p[2] * p[2], [0.0, 0.0, 2.0 * a * p[2]])
            } else {
                (0.0, [0.0; 3])
            }
        });
        let e = energy_loss(&u, &q.grid.point_weights(), hooke, [0.0; 3], &[]).unwrap();
        let expect = 2.0 / 3.0 * (lambda + 2.0 * mu) * a * a;
        assert!((e - expect).abs() <= 1e-10 * expect);
    }
}
