use std::collections::BTreeMap;

use crate::rng::SeededRng;
use crate::tensor::{glorot_bound, uniform_init, Tensor};

use super::{CellKind, ModelSpec, NnError};

/// Embedding rows are drawn from Uniform(-EMBEDDING_INIT, EMBEDDING_INIT).
pub const EMBEDDING_INIT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub w: Tensor,
    pub u: Tensor,
    pub b: Tensor,
}

impl CellParams {
    pub fn zeros(kind: CellKind, input: usize, hidden: usize) -> Self {
        let g = kind.gates() * hidden;
        Self {
            w: Tensor::zeros(&[g, input]),
            u: Tensor::zeros(&[g, hidden]),
            b: Tensor::zeros(&[g]),
        }
    }

    /// Glorot-uniform `w` and `u`, zero bias except an LSTM forget-gate
    /// bias of one. Draw order: `w` then `u`.
    fn init(kind: CellKind, input: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        let g = kind.gates() * hidden;
        let w = uniform_init(rng, &[g, input], glorot_bound(input, g));
        let u = uniform_init(rng, &[g, hidden], glorot_bound(hidden, g));
        let mut b = Tensor::zeros(&[g]);
        if kind == CellKind::Lstm {
            b.data_mut()[hidden..2 * hidden].fill(1.0);
        }
        Self { w, u, b }
    }

    pub fn hidden(&self) -> usize {
        self.u.cols()
    }

    pub fn input(&self) -> usize {
        self.w.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub forward: CellParams,
    pub backward: Option<CellParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `[out, in]`
    pub w: Tensor,
    pub b: Tensor,
}

impl DenseParams {
    fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Tensor::zeros(&[output, input]),
            b: Tensor::zeros(&[output]),
        }
    }

    fn init(input: usize, output: usize, rng: &mut SeededRng) -> Self {
        Self {
            w: uniform_init(rng, &[output, input], glorot_bound(input, output)),
            b: Tensor::zeros(&[output]),
        }
    }
}

/// Every trainable tensor after the embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub layers: Vec<LayerParams>,
    pub dense_hidden: Option<DenseParams>,
    pub output: DenseParams,
}

impl NetworkWeights {
    fn zeros(spec: &ModelSpec) -> Self {
        let layers = spec
            .recurrent_stack
            .iter()
            .zip(spec.layer_input_widths())
            .map(|(l, d)| LayerParams {
                forward: CellParams::zeros(l.kind, d, l.hidden_units),
                backward: l
                    .bidirectional
                    .then(|| CellParams::zeros(l.kind, d, l.hidden_units)),
            })
            .collect();
        let feat = spec.recurrent_output_width();
        let (dense_hidden, out_in) = match spec.dense_hidden_units {
            Some(h) => (Some(DenseParams::zeros(feat, h)), h),
            None => (None, feat),
        };
        Self {
            layers,
            dense_hidden,
            output: DenseParams::zeros(out_in, spec.num_classes),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |t: &Tensor| Tensor::zeros_like(t);
        let cz = |c: &CellParams| CellParams {
            w: z(&c.w),
            u: z(&c.u),
            b: z(&c.b),
        };
        let dz = |d: &DenseParams| DenseParams {
            w: z(&d.w),
            b: z(&d.b),
        };
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    forward: cz(&l.forward),
                    backward: l.backward.as_ref().map(cz),
                })
                .collect(),
            dense_hidden: self.dense_hidden.as_ref().map(dz),
            output: dz(&self.output),
        }
    }

    /// Tensors in canonical order with stable names.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let dirs = [("fwd", Some(&layer.forward)), ("bwd", layer.backward.as_ref())];
            for (dir, cell) in dirs {
                if let Some(c) = cell {
                    out.push((format!("rnn{i}.{dir}.w"), &c.w));
                    out.push((format!("rnn{i}.{dir}.u"), &c.u));
                    out.push((format!("rnn{i}.{dir}.b"), &c.b));
                }
            }
        }
        if let Some(d) = &self.dense_hidden {
            out.push(("dense_hidden.w".into(), &d.w));
            out.push(("dense_hidden.b".into(), &d.b));
        }
        out.push(("output.w".into(), &self.output.w));
        out.push(("output.b".into(), &self.output.b));
        out
    }

    /// Mutable tensors in the same order as [`NetworkWeights::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            let LayerParams { forward, backward } = layer;
            out.extend([&mut forward.w, &mut forward.u, &mut forward.b]);
            if let Some(c) = backward {
                out.extend([&mut c.w, &mut c.u, &mut c.b]);
            }
        }
        if let Some(d) = &mut self.dense_hidden {
            out.extend([&mut d.w, &mut d.b]);
        }
        out.extend([&mut self.output.w, &mut self.output.b]);
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    pub fn add_assign(&mut self, other: &NetworkWeights) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b).expect("gradient shapes follow the parameter layout");
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.scale(factor);
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.tensors().iter().map(|t| t.sum_squares()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `[vocab, embedding_dim]`
    pub embedding: Tensor,
    pub net: NetworkWeights,
}

impl ModelParams {
    pub fn zeros(spec: &ModelSpec, vocab_size: usize) -> Self {
        Self {
            embedding: Tensor::zeros(&[vocab_size, spec.embedding_dim]),
            net: NetworkWeights::zeros(spec),
        }
    }

    /// Seeded initialisation. Draws, in order: the embedding (row 0, the
    /// padding row, is then zeroed), each recurrent layer's forward and
    /// backward cell (`w`, `u`), the dense hidden `w`, the output `w`.
    pub fn init(spec: &ModelSpec, vocab_size: usize, seed: u64) -> Result<Self, NnError> {
        spec.validate()?;
        let mut rng = SeededRng::new(seed);
        let mut embedding = uniform_init(&mut rng, &[vocab_size, spec.embedding_dim], EMBEDDING_INIT);
        embedding.row_mut(0).fill(0.0);
        let layers = spec
            .recurrent_stack
            .iter()
            .zip(spec.layer_input_widths())
            .map(|(l, d)| {
                let forward = CellParams::init(l.kind, d, l.hidden_units, &mut rng);
                let backward = l
                    .bidirectional
                    .then(|| CellParams::init(l.kind, d, l.hidden_units, &mut rng));
                LayerParams { forward, backward }
            })
            .collect();
        let feat = spec.recurrent_output_width();
        let (dense_hidden, out_in) = match spec.dense_hidden_units {
            Some(h) => (Some(DenseParams::init(feat, h, &mut rng)), h),
            None => (None, feat),
        };
        let output = DenseParams::init(out_in, spec.num_classes, &mut rng);
        Ok(Self {
            embedding,
            net: NetworkWeights {
                layers,
                dense_hidden,
                output,
            },
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        out.extend(self.net.named());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embedding];
        out.extend(self.net.tensors_mut());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Checks every tensor against the shape implied by `spec`.
    pub fn check_shapes(&self, spec: &ModelSpec) -> Result<(), NnError> {
        let wanted = expected_shapes(spec, self.vocab_size());
        let found = self.named();
        if found.len() != wanted.len() {
            return Err(NnError::ParamShape {
                name: "<tensor count>".into(),
                expected: vec![wanted.len()],
                found: vec![found.len()],
            });
        }
        for ((name, t), e) in found.iter().zip(&wanted) {
            if t.shape() != e.as_slice() {
                return Err(NnError::ParamShape {
                    name: name.clone(),
                    expected: e.clone(),
                    found: t.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.is_finite())
    }
}

/// Shapes of every parameter tensor, in [`ModelParams::named`] order.
pub fn expected_shapes(spec: &ModelSpec, vocab_size: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![vocab_size, spec.embedding_dim]];
    for (l, d) in spec.recurrent_stack.iter().zip(spec.layer_input_widths()) {
        let g = l.kind.gates() * l.hidden_units;
        for _ in 0..l.directions() {
            out.extend([vec![g, d], vec![g, l.hidden_units], vec![g]]);
        }
    }
    let mut feat = spec.recurrent_output_width();
    if let Some(h) = spec.dense_hidden_units {
        out.extend([vec![h, feat], vec![h]]);
        feat = h;
    }
    out.extend([vec![spec.num_classes, feat], vec![spec.num_classes]]);
    out
}

/// Row-sparse gradient of a `[rows, cols]` matrix. Only rows that were
/// looked up carry an entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    rows: usize,
    cols: usize,
    entries: BTreeMap<usize, Vec<f64>>,
}

impl SparseRows {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: BTreeMap::new(),
        }
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn add_row(&mut self, row: usize, values: &[f64]) {
        debug_assert!(row < self.rows && values.len() == self.cols);
        let entry = self
            .entries
            .entry(row)
            .or_insert_with(|| vec![0.0; values.len()]);
        for (e, v) in entry.iter_mut().zip(values) {
            *e += v;
        }
    }

    pub fn row(&self, row: usize) -> Option<&[f64]> {
        self.entries.get(&row).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.entries.iter().map(|(&r, v)| (r, v.as_slice()))
    }

    pub fn add_assign(&mut self, other: &SparseRows) {
        for (r, v) in other.iter() {
            self.add_row(r, v);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.entries.values_mut() {
            v.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.entries.values().flatten().map(|v| v * v).sum()
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(&[self.rows, self.cols]);
        for (r, v) in self.iter() {
            t.row_mut(r).copy_from_slice(v);
        }
        t
    }
}

/// Loss gradient with the same layout as [`ModelParams`]; the embedding
/// part is row-sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: SparseRows,
    pub net: NetworkWeights,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            embedding: SparseRows::new(params.embedding.rows(), params.embedding.cols()),
            net: params.net.zeros_like(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        self.embedding.add_assign(&other.embedding);
        self.net.add_assign(&other.net);
    }

    pub fn scale(&mut self, factor: f64) {
        self.embedding.scale(factor);
        self.net.scale(factor);
    }

    pub fn global_norm(&self) -> f64 {
        (self.embedding.sum_squares() + self.net.sum_squares()).sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm.is_finite() {
            self.scale(max_norm / norm);
        }
        norm
    }

    /// Dense copy with names matching [`ModelParams::named`].
    pub fn to_dense_named(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![("embedding".to_string(), self.embedding.to_dense())];
        out.extend(self.net.named().into_iter().map(|(n, t)| (n, t.clone())));
        out
    }
}
