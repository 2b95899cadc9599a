//! Network families: pointwise multilayer perceptrons and separable
//! per-axis networks.

pub mod checkpoint;
pub mod field;
pub mod mlp;
pub mod separable;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use field::{grid_points, FieldModel, Network, Role};
pub use mlp::{init_params, mlp_field_eval, mlp_forward, Activation, LayerShape, MlpSpec, ModelParams};
pub use separable::{
    derive_seed, merge_grid, spinn_eval_grid, spinn_eval_grid_with_derivatives, spinn_eval_points,
    AxisBasis, SeparableModel, SeparableSpec,
};

/// Field values and first spatial derivatives at a set of points.
/// `values[f][p]` is field `f` at point `p`; `d_values[f][p][a]` its
/// derivative along axis `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldBatch {
    pub points: Vec<[f64; 3]>,
    pub values: Vec<Vec<f64>>,
    pub d_values: Vec<Vec<[f64; 3]>>,
}

impl FieldBatch {
    pub fn empty(points: Vec<[f64; 3]>, fields: usize) -> Self {
        let n = points.len();
        Self {
            points,
            values: vec![vec![0.0; n]; fields],
            d_values: vec![vec![[0.0; 3]; n]; fields],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn field_count(&self) -> usize {
        self.values.len()
    }

    /// Fields `start..start+count` on the same points.
    pub fn select(&self, start: usize, count: usize) -> FieldBatch {
        FieldBatch {
            points: self.points.clone(),
            values: self.values[start..start + count].to_vec(),
            d_values: self.d_values[start..start + count].to_vec(),
        }
    }

    /// Displacement gradient `du_i/dx_j` at point `p` from fields 0..3.
    pub fn gradient(&self, p: usize) -> [[f64; 3]; 3] {
        [0, 1, 2].map(|i| self.d_values[i][p])
    }
}
