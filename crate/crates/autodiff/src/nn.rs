//! Parameters, affine layers, residual MLP blocks and time embeddings.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tape::{Tape, Var};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

/// Tape handles for every parameter of a store, in store order.
#[derive(Debug, Clone)]
pub struct Bound(pub Vec<Var>);

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointEntry {
    name: String,
    shape: [usize; 2],
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    params: Vec<CheckpointEntry>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, values: Vec<T>) -> ParamId {
        assert_eq!(values.len(), rows * cols, "parameter size");
        self.params.push(Param {
            name: name.into(),
            rows,
            cols,
            values,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.add(name, rows, cols, vec![T::zero(); rows * cols])
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        Bound(
            self.params
                .iter()
                .map(|p| tape.leaf(p.values.clone(), p.rows, p.cols).expect("consistent parameter"))
                .collect(),
        )
    }

    /// Per-parameter gradients, zero where a parameter did not reach the output.
    pub fn collect_grads(&self, bound: &Bound, grads: &crate::tape::Gradients<T>) -> Vec<Vec<T>> {
        self.params
            .iter()
            .zip(&bound.0)
            .map(|(p, &v)| {
                grads
                    .get(v)
                    .map_or_else(|| vec![T::zero(); p.values.len()], <[T]>::to_vec)
            })
            .collect()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    rows: p.rows,
                    cols: p.cols,
                    values: p.values.iter().map(|&v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let ck = Checkpoint {
            params: self
                .params
                .iter()
                .map(|p| CheckpointEntry {
                    name: p.name.clone(),
                    shape: [p.rows, p.cols],
                    values: p.values.iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
        };
        serde_json::to_string(&ck).expect("checkpoint serializes")
    }

    /// Loads values into an existing store, matching parameters by name and shape.
    pub fn load_json(&mut self, text: &str) -> Result<()> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        if ck.params.len() != self.params.len() {
            return Err(TensorError::Checkpoint(format!(
                "expected {} parameters, found {}",
                self.params.len(),
                ck.params.len()
            )));
        }
        for entry in ck.params {
            let id = self
                .find(&entry.name)
                .ok_or_else(|| TensorError::Checkpoint(format!("unknown parameter {}", entry.name)))?;
            let p = &mut self.params[id.0];
            if [p.rows, p.cols] != entry.shape || entry.values.len() != p.values.len() {
                return Err(TensorError::Checkpoint(format!("shape mismatch for {}", entry.name)));
            }
            p.values = entry.values.into_iter().map(T::lit).collect();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Uniform on `±sqrt(6 / fan_in)`.
    KaimingUniform,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Linear {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        input_dim: usize,
        output_dim: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let values = match init {
            Init::Zero => vec![T::zero(); input_dim * output_dim],
            Init::KaimingUniform => {
                let bound = (6.0 / input_dim.max(1) as f64).sqrt();
                (0..input_dim * output_dim)
                    .map(|_| T::lit(rng.gen_range(-bound..bound)))
                    .collect()
            }
        };
        Linear {
            weight: store.add(format!("{name}.weight"), input_dim, output_dim, values),
            bias: store.zeros(format!("{name}.bias"), 1, output_dim),
            input_dim,
            output_dim,
        }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var> {
        let y = tape.matmul(x, bound.var(self.weight))?;
        tape.add_row(y, bound.var(self.bias))
    }
}

/// `residual + l2(leaky_relu(l1(layer_norm(input))))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpBlock {
    pub norm_gain: ParamId,
    pub norm_bias: ParamId,
    pub l1: Linear,
    pub l2: Linear,
}

impl MlpBlock {
    /// The output layer starts at zero, so a fresh block is the identity on its residual.
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Self {
        let norm_gain = store.add(format!("{name}.norm.gain"), 1, input_dim, vec![T::one(); input_dim]);
        let norm_bias = store.zeros(format!("{name}.norm.bias"), 1, input_dim);
        let l1 = Linear::new(store, &format!("{name}.l1"), input_dim, hidden_dim, Init::KaimingUniform, rng);
        let l2 = Linear::new(store, &format!("{name}.l2"), hidden_dim, output_dim, Init::Zero, rng);
        MlpBlock {
            norm_gain,
            norm_bias,
            l1,
            l2,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.l1.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.l2.output_dim
    }

    /// Transform without the skip connection.
    pub fn delta<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, input: Var) -> Result<Var> {
        let x = tape.layer_norm(input, bound.var(self.norm_gain), bound.var(self.norm_bias))?;
        let x = self.l1.forward(tape, bound, x)?;
        let x = tape.leaky_relu(x, T::lit(LEAKY_SLOPE))?;
        self.l2.forward(tape, bound, x)
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, input: Var, residual: Var) -> Result<Var> {
        let d = self.delta(tape, bound, input)?;
        tape.add(residual, d)
    }
}

/// Interleaved `sin, cos` pairs at geometric frequencies `10000^(-2i/dim)`.
pub fn sinusoidal_time_embedding(t: usize, dim: usize) -> Result<Vec<f64>> {
    if !dim.is_multiple_of(2) {
        return Err(TensorError::InvalidArgument {
            op: "sinusoidal_time_embedding",
            reason: format!("odd dimension {dim}"),
        });
    }
    let mut out = Vec::with_capacity(dim);
    for i in 0..dim / 2 {
        let freq = 10000f64.powf(-(2.0 * i as f64) / dim as f64);
        let angle = t as f64 * freq;
        out.push(angle.sin());
        out.push(angle.cos());
    }
    Ok(out)
}
