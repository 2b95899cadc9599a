//! Reference fields, the Euler-Bernoulli oracle, predictions in SI units,
//! accuracy metrics and field export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::domain::{linspace, DomainSpec};
use crate::error::{Error, Result};
use crate::mechanics::{displacement_magnitude, stress_with, strain, von_mises, SymTensor3};
use crate::nn::FieldModel;
use crate::train::{relative_l2, Metric};

use super::{ProblemConfig, BEAM};

/// Membership tolerance for reference points, m.
pub const DOMAIN_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceField {
    pub points: Vec<[f64; 3]>,
    pub displacement: Vec<[f64; 3]>,
    pub stress: Option<Vec<SymTensor3>>,
    pub provenance: String,
}

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = line
        .split(',')
        .map(|f| {
            f.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("not a number: {:?}", f.trim()),
            })
        })
        .collect::<Result<_>>()?;
    if vals.len() != 6 && vals.len() != 12 {
        return Err(Error::Parse {
            line: lineno,
            message: format!("expected 6 or 12 fields, found {}", vals.len()),
        });
    }
    if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
        return Err(Error::Parse {
            line: lineno,
            message: format!("non-finite value {v}"),
        });
    }
    Ok(vals)
}

/// Parses `x,y,z,ux,uy,uz[,sxx,syy,szz,sxy,sxz,syz]` records (SI units,
/// `#` comments) and checks every point lies in `domain`.
pub fn parse_reference(text: &str, domain: &DomainSpec, provenance: &str) -> Result<ReferenceField> {
    let mut field = ReferenceField {
        points: Vec::new(),
        displacement: Vec::new(),
        stress: None,
        provenance: provenance.to_string(),
    };
    let mut stresses = Vec::new();
    let mut width = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v = parse_row(line, i + 1)?;
        match width {
            None => width = Some(v.len()),
            Some(w) if w != v.len() => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("record has {} fields, earlier records have {w}", v.len()),
                })
            }
            _ => {}
        }
        field.points.push([v[0], v[1], v[2]]);
        field.displacement.push([v[3], v[4], v[5]]);
        if v.len() == 12 {
            stresses.push(SymTensor3::from_array([v[6], v[7], v[8], v[9], v[10], v[11]]));
        }
    }
    if field.points.is_empty() {
        return Err(Error::Validation("no records".into()));
    }
    let outside: Vec<String> = field
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| !domain.contains(**p, DOMAIN_TOL))
        .map(|(i, p)| format!("#{} ({}, {}, {})", i + 1, p[0], p[1], p[2]))
        .collect();
    if !outside.is_empty() {
        return Err(Error::Validation(format!(
            "{} reference points lie outside the domain: {}",
            outside.len(),
            outside.join(", ")
        )));
    }
    if width == Some(12) {
        field.stress = Some(stresses);
    }
    Ok(field)
}

pub fn ingest_reference(path: &Path, domain: &DomainSpec) -> Result<ReferenceField> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_reference(&text, domain, &path.display().to_string())
}

fn beam_section(p: &ProblemConfig) -> Result<(f64, f64, f64)> {
    let b = match p.domain.boxes.as_slice() {
        [b] if p.name == BEAM => b,
        _ => {
            return Err(Error::Unsupported(format!(
                "the Euler-Bernoulli oracle applies to the beam, not {}",
                p.name
            )))
        }
    };
    Ok((b.extent(0), b.extent(1), b.extent(2)))
}

fn line_load(p: &ProblemConfig) -> Result<(f64, f64, f64)> {
    let (l, w, h) = beam_section(p)?;
    let q = p.material.traction * w + p.material.density * p.material.gravity * w * h;
    let i = w * h.powi(3) / 12.0;
    Ok((l, q, p.material.youngs_modulus * i))
}

/// Tip deflection magnitude `q L^4 / (8 E I)` of the clamped beam, m.
pub fn euler_bernoulli_tip_deflection(p: &ProblemConfig) -> Result<f64> {
    let (l, q, ei) = line_load(p)?;
    Ok(q * l.powi(4) / (8.0 * ei))
}

/// Vertical displacement `-q x^2 (6L^2 - 4Lx + x^2) / (24 E I)` at `x`, m.
pub fn euler_bernoulli_deflection(p: &ProblemConfig, x: f64) -> Result<f64> {
    let (l, q, ei) = line_load(p)?;
    Ok(-q * x * x * (6.0 * l * l - 4.0 * l * x + x * x) / (24.0 * ei))
}

/// Evaluation points with reference values for the available metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReference {
    pub points: Vec<[f64; 3]>,
    pub values: BTreeMap<Metric, Vec<f64>>,
    pub provenance: String,
}

impl EvalReference {
    pub fn from_field(f: &ReferenceField) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (m, c) in [(Metric::Ux, 0), (Metric::Uy, 1), (Metric::Uz, 2)] {
            values.insert(m, f.displacement.iter().map(|u| u[c]).collect());
        }
        values.insert(Metric::Um, f.displacement.iter().map(|u| displacement_magnitude(u)).collect());
        if let Some(s) = &f.stress {
            values.insert(Metric::SigmaVm, s.iter().map(von_mises).collect::<Result<_>>()?);
        }
        Ok(Self {
            points: f.points.clone(),
            values,
            provenance: f.provenance.clone(),
        })
    }
}

/// `u_z` from the Euler-Bernoulli solution along the beam centerline, with
/// as many stations as the evaluation grid has along x.
pub fn oracle_reference(p: &ProblemConfig) -> Result<EvalReference> {
    let (b, n) = match (p.domain.boxes.as_slice(), p.eval_grid.first()) {
        ([b], Some(n)) => (b, n[0]),
        _ => return Err(Error::Unsupported("the beam oracle needs a single box".into())),
    };
    let (yc, zc) = (0.5 * (b.lo[1] + b.hi[1]), 0.5 * (b.lo[2] + b.hi[2]));
    let points: Vec<[f64; 3]> = linspace(b.lo[0], b.hi[0], n).into_iter().map(|x| [x, yc, zc]).collect();
    let uz = points
        .iter()
        .map(|q| euler_bernoulli_deflection(p, q[0]))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReference {
        points,
        values: BTreeMap::from([(Metric::Uz, uz)]),
        provenance: "Euler-Bernoulli beam theory".into(),
    })
}

/// Predicted fields in SI units.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub points: Vec<[f64; 3]>,
    pub displacement: Vec<[f64; 3]>,
    pub stress: Vec<SymTensor3>,
    /// True when stresses come from a stress network rather than from
    /// Hooke's law of the predicted strain.
    pub stress_from_network: bool,
}

pub fn predict(model: &FieldModel, p: &ProblemConfig, points: &[[f64; 3]]) -> Result<Prediction> {
    let nd = p.nondim()?;
    let hooke = nd.hooke(p.law);
    let l = p.scale.length;
    let scaled: Vec<[f64; 3]> = points.iter().map(|q| q.map(|v| v / l)).collect();
    let f = model.eval_points(&scaled)?;
    let su = p.scale.displacement;
    let ss = p.scale.stress_scale();
    let displacement = (0..f.len())
        .map(|i| [0, 1, 2].map(|c| su * f.values[c][i]))
        .collect();
    let stress = (0..f.len())
        .map(|i| {
            let s = if model.has_stress() {
                SymTensor3::from_array([3, 4, 5, 6, 7, 8].map(|c| f.values[c][i]))
            } else {
                stress_with(&strain(&f.gradient(i)), hooke)
            };
            s.scaled(ss)
        })
        .collect();
    Ok(Prediction {
        points: points.to_vec(),
        displacement,
        stress,
        stress_from_network: model.has_stress(),
    })
}

/// Relative L2 error of every quantity the reference provides.
pub fn metrics(pred: &Prediction, reference: &EvalReference) -> Result<BTreeMap<Metric, f64>> {
    let mut out = BTreeMap::new();
    for (m, r) in &reference.values {
        let values: Vec<f64> = match m {
            Metric::Ux | Metric::Uy | Metric::Uz => {
                let c = *m as usize;
                pred.displacement.iter().map(|u| u[c]).collect()
            }
            Metric::Um => pred.displacement.iter().map(|u| displacement_magnitude(u)).collect(),
            Metric::SigmaVm => pred.stress.iter().map(von_mises).collect::<Result<_>>()?,
        };
        out.insert(*m, relative_l2(&values, r)?);
    }
    Ok(out)
}

/// Prediction in the reference record format with a descriptive header.
pub fn export_fields(pred: &Prediction, header: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in header {
        let _ = writeln!(s, "# {k}: {v}");
    }
    let _ = writeln!(
        s,
        "# stress: {}",
        if pred.stress_from_network { "stress network" } else { "Hooke's law of the predicted strain" }
    );
    let _ = writeln!(s, "# x,y,z,ux,uy,uz,sxx,syy,szz,sxy,sxz,syz");
    for ((p, u), sig) in pred.points.iter().zip(&pred.displacement).zip(&pred.stress) {
        let vals: Vec<String> = p
            .iter()
            .chain(u.iter())
            .chain(sig.to_array().iter())
            .map(|v| format!("{v:e}"))
            .collect();
        let _ = writeln!(s, "{}", vals.join(","));
    }
    s
}
