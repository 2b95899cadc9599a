//! Checkpoint files: one plain-text JSON header line describing the
//! networks, followed by every parameter as a little-endian `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::field::{FieldModel, Network, Role};
use super::mlp::{LayerShape, MlpSpec, ModelParams};
use super::separable::{SeparableModel, SeparableSpec};

const FORMAT: &str = "spinn-elastic-checkpoint/1";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub problem: String,
    pub mode: String,
    pub seed: u64,
    pub epoch: u64,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: FieldModel,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Layout {
    Separable {
        role: Role,
        rank: usize,
        outputs: usize,
        activation: super::Activation,
        hidden: Vec<usize>,
        shapes: Vec<LayerShape>,
    },
    Pointwise {
        role: Role,
        activation: super::Activation,
        layer_widths: Vec<usize>,
        shapes: Vec<LayerShape>,
    },
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    #[serde(flatten)]
    meta: CheckpointMeta,
    networks: Vec<Layout>,
    values: usize,
}

fn layout(role: Role, net: &Network) -> Layout {
    match net {
        Network::Separable(m) => Layout::Separable {
            role,
            rank: m.spec.rank,
            outputs: m.spec.outputs,
            activation: m.spec.activation,
            hidden: m.spec.hidden.clone(),
            shapes: m.spec.body().shapes(),
        },
        Network::Pointwise { spec, .. } => Layout::Pointwise {
            role,
            activation: spec.activation,
            layer_widths: spec.layer_widths.clone(),
            shapes: spec.shapes(),
        },
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let header = Header {
        format: FORMAT.into(),
        meta: ckpt.meta.clone(),
        networks: ckpt
            .model
            .networks_with_role()
            .map(|(r, n)| layout(r, n))
            .collect(),
        values: ckpt.model.param_count(),
    };
    let ctx = || format!("writing checkpoint {}", path.display());
    let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut w = BufWriter::new(file);
    let line = serde_json::to_string(&header).map_err(|e| Error::Config(e.to_string()))?;
    writeln!(w, "{line}").map_err(|e| Error::io(ctx(), e))?;
    for v in ckpt.model.flat() {
        w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(ctx(), e))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

fn take(data: &[f64], off: &mut usize, shapes: &[LayerShape]) -> Result<ModelParams> {
    let n: usize = shapes.iter().map(LayerShape::len).sum();
    let flat = data
        .get(*off..*off + n)
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "checkpoint data shorter than its header declares".into(),
        })?
        .to_vec();
    *off += n;
    Ok(ModelParams {
        flat,
        shapes: shapes.to_vec(),
    })
}

fn shape_error() -> Error {
    Error::Parse {
        line: 1,
        message: "layer shapes disagree with the declared architecture".into(),
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let ctx = || format!("reading checkpoint {}", path.display());
    let file = File::open(path).map_err(|e| Error::io(ctx(), e))?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    r.read_line(&mut line).map_err(|e| Error::io(ctx(), e))?;
    let header: Header = serde_json::from_str(line.trim_end()).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.format != FORMAT {
        return Err(Error::Parse {
            line: 1,
            message: format!("unknown checkpoint format {:?}", header.format),
        });
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(ctx(), e))?;
    if bytes.len() != header.values * 8 {
        return Err(Error::Parse {
            line: 2,
            message: format!("expected {} bytes of parameters, found {}", header.values * 8, bytes.len()),
        });
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let (mut disp, mut stress) = (Vec::new(), Vec::new());
    let mut off = 0;
    for l in header.networks {
        let (role, net) = match l {
            Layout::Separable {
                role,
                rank,
                outputs,
                activation,
                hidden,
                shapes,
            } => {
                let spec = SeparableSpec {
                    hidden,
                    rank,
                    outputs,
                    activation,
                };
                spec.validate()?;
                if spec.body().shapes() != shapes {
                    return Err(shape_error());
                }
                let bodies = [
                    take(&data, &mut off, &shapes)?,
                    take(&data, &mut off, &shapes)?,
                    take(&data, &mut off, &shapes)?,
                ];
                (role, Network::Separable(SeparableModel::from_params(spec, bodies)))
            }
            Layout::Pointwise {
                role,
                activation,
                layer_widths,
                shapes,
            } => {
                let spec = MlpSpec::new(layer_widths, activation);
                spec.validate()?;
                if spec.shapes() != shapes {
                    return Err(shape_error());
                }
                let params = take(&data, &mut off, &shapes)?;
                (role, Network::Pointwise { spec, params })
            }
        };
        match role {
            Role::Displacement => disp.push(net),
            Role::Stress => stress.push(net),
        }
    }
    if off != data.len() {
        return Err(Error::Parse {
            line: 2,
            message: "checkpoint carries more parameters than its networks use".into(),
        });
    }
    Ok(Checkpoint {
        meta: header.meta,
        model: FieldModel::new(disp, stress)?,
    })
}
