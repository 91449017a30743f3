//! Classification head on top of the fused node embedding.
//!
//! Each embedding row is treated as a one-channel signal: a bank of odd
//! kernels convolves it (zero padding, same length, ReLU), non-overlapping
//! windows max-pool every kernel's map, the flattened result goes through
//! `tanh` and is cut into `T` equal chunks that a bidirectional recurrent
//! layer reads as a sequence. The fused state at the last step feeds a
//! sigmoid MLP.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{glorot_uniform, Mlp, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub num_kernels: usize,
    /// `k` in a window of `2k + 1`.
    pub half_width: usize,
}

impl ConvSpec {
    pub fn window(&self) -> usize {
        2 * self.half_width + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub half_width: usize,
}

impl PoolSpec {
    pub fn window(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn pooled_len(&self, len: usize) -> usize {
        len.div_ceil(self.window())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceLayout {
    pub chunks: usize,
    pub chunk_width: usize,
}

impl SequenceLayout {
    /// Splits `len` features into `chunks` equal pieces.
    pub fn for_length(len: usize, chunks: usize) -> Result<Self> {
        if chunks == 0 || len == 0 || !len.is_multiple_of(chunks) {
            return Err(Error::InvalidConfig(format!(
                "pooled feature length {len} cannot be cut into {chunks} equal chunks"
            )));
        }
        Ok(SequenceLayout {
            chunks,
            chunk_width: len / chunks,
        })
    }
}

/// Recurrent cell used by the bidirectional layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellKind {
    /// `h_n = tanh(W_a x_n + W_r h_{n∓1})` in each direction.
    #[default]
    ElmanRnn,
    /// Gated LSTM cell in each direction.
    StandardLstm,
}

impl CellKind {
    fn gates(self) -> usize {
        match self {
            CellKind::ElmanRnn => 1,
            CellKind::StandardLstm => 4,
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::ElmanRnn => "elman-rnn",
            CellKind::StandardLstm => "standard-lstm",
        })
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elman-rnn" => Ok(CellKind::ElmanRnn),
            "standard-lstm" => Ok(CellKind::StandardLstm),
            other => Err(Error::InvalidConfig(format!("unknown cell kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub num_kernels: usize,
    pub half_width: usize,
    pub chunks: usize,
    pub hidden: usize,
    pub cell: CellKind,
    pub classifier_hidden: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            num_kernels: 4,
            half_width: 1,
            chunks: 4,
            hidden: 16,
            cell: CellKind::ElmanRnn,
            classifier_hidden: 64,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub spec: ConvSpec,
    pub kernels: ParamId,
    pub bias: ParamId,
}

impl ConvLayer {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, spec: ConvSpec, rng: &mut R) -> Result<Self> {
        if spec.num_kernels == 0 {
            return Err(Error::InvalidConfig("at least one kernel is required".into()));
        }
        let w = spec.window();
        let kernels = store.add(
            format!("{name}.kernels"),
            glorot_uniform(rng, spec.num_kernels, w, w, spec.num_kernels),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(1, spec.num_kernels));
        Ok(ConvLayer { spec, kernels, bias })
    }
}

/// `ReLU(conv(x) + b)` for every row of `x`; output is `m × (K·d)`.
pub fn conv1d_forward(tape: &mut Tape, store: &ParamStore, conv: &ConvLayer, x: Var) -> Result<Var> {
    let k = tape.param(store, conv.kernels);
    let b = tape.param(store, conv.bias);
    let c = tape.conv1d(x, k, b)?;
    tape.relu(c)
}

/// Non-overlapping max over windows of `2k + 1` within each channel block.
pub fn max_pool(tape: &mut Tape, spec: PoolSpec, feature_map: Var, channels: usize) -> Result<Var> {
    if tape.value(feature_map)?.is_empty() {
        return Err(Error::InvalidArgument("empty feature map".into()));
    }
    tape.max_pool(feature_map, channels, spec.window())
}

#[derive(Clone, Debug)]
struct Direction {
    input: ParamId,
    recurrent: ParamId,
    bias: Option<ParamId>,
}

/// Weights of the bidirectional recurrent layer.
#[derive(Clone, Debug)]
pub struct BiRnnParams {
    pub cell: CellKind,
    pub input_width: usize,
    pub hidden: usize,
    forward: Direction,
    backward: Direction,
    pub mix_forward: ParamId,
    pub mix_backward: ParamId,
}

impl BiRnnParams {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cell: CellKind, input_width: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        if input_width == 0 || hidden == 0 {
            return Err(Error::InvalidConfig("recurrent widths must be positive".into()));
        }
        let g = cell.gates() * hidden;
        let mut direction = |store: &mut ParamStore, dir: &str| Direction {
            input: store.add(
                format!("{name}.{dir}.input"),
                glorot_uniform(rng, input_width, g, input_width, hidden),
            ),
            recurrent: store.add(
                format!("{name}.{dir}.recurrent"),
                glorot_uniform(rng, hidden, g, hidden, hidden),
            ),
            bias: (cell == CellKind::StandardLstm)
                .then(|| store.add(format!("{name}.{dir}.bias"), Tensor::zeros(1, g))),
        };
        let forward = direction(store, "forward");
        let backward = direction(store, "backward");
        let mix_forward = store.add(
            format!("{name}.mix_forward"),
            glorot_uniform(rng, hidden, hidden, hidden, hidden),
        );
        let mix_backward = store.add(
            format!("{name}.mix_backward"),
            glorot_uniform(rng, hidden, hidden, hidden, hidden),
        );
        Ok(BiRnnParams {
            cell,
            input_width,
            hidden,
            forward,
            backward,
            mix_forward,
            mix_backward,
        })
    }

    /// Parameter ids of one direction: input, recurrent and optional bias.
    pub fn direction_params(&self, backward: bool) -> (ParamId, ParamId, Option<ParamId>) {
        let d = if backward { &self.backward } else { &self.forward };
        (d.input, d.recurrent, d.bias)
    }
}

struct DirectionVars {
    input: Var,
    recurrent: Var,
    bias: Option<Var>,
}

fn direction_vars(tape: &mut Tape, store: &ParamStore, d: &Direction) -> DirectionVars {
    DirectionVars {
        input: tape.param(store, d.input),
        recurrent: tape.param(store, d.recurrent),
        bias: d.bias.map(|b| tape.param(store, b)),
    }
}

fn cell_step(tape: &mut Tape, cell: CellKind, hidden: usize, w: &DirectionVars, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
    let xi = tape.matmul(x, w.input)?;
    let hr = tape.matmul(h, w.recurrent)?;
    let mut z = tape.add(xi, hr)?;
    if let Some(b) = w.bias {
        z = tape.add_row(z, b)?;
    }
    match cell {
        CellKind::ElmanRnn => Ok((tape.tanh(z)?, c)),
        CellKind::StandardLstm => {
            let gate = |tape: &mut Tape, k: usize| tape.slice_cols(z, k * hidden, hidden);
            let i = gate(tape, 0)?;
            let i = tape.sigmoid(i)?;
            let f = gate(tape, 1)?;
            let f = tape.sigmoid(f)?;
            let g = gate(tape, 2)?;
            let g = tape.tanh(g)?;
            let o = gate(tape, 3)?;
            let o = tape.sigmoid(o)?;
            let keep = tape.mul(f, c)?;
            let write = tape.mul(i, g)?;
            let c_next = tape.add(keep, write)?;
            let squashed = tape.tanh(c_next)?;
            Ok((tape.mul(o, squashed)?, c_next))
        }
    }
}

/// Runs both directions over `sequence` (each element `m × s`) from zero
/// initial states and returns `σ(h→_T W^f + h←_T W^b)`, `m × H`.
pub fn birnn_forward(tape: &mut Tape, store: &ParamStore, params: &BiRnnParams, sequence: &[Var]) -> Result<Var> {
    if sequence.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    let m = tape.value(sequence[0])?.rows();
    for &x in sequence {
        let v = tape.value(x)?;
        if v.cols() != params.input_width || v.rows() != m {
            return Err(Error::shape(
                "birnn_forward",
                format!("chunk {:?}, expected {m} x {}", v.shape(), params.input_width),
            ));
        }
    }
    let h0 = tape.constant(Tensor::zeros(m, params.hidden));
    let fw = direction_vars(tape, store, &params.forward);
    let bw = direction_vars(tape, store, &params.backward);

    let (mut hf, mut cf) = (h0, h0);
    for &x in sequence {
        (hf, cf) = cell_step(tape, params.cell, params.hidden, &fw, x, hf, cf)?;
    }
    // The backward direction starts at the last element; at the final time
    // step its state has only seen that element.
    let (hb, _) = cell_step(tape, params.cell, params.hidden, &bw, *sequence.last().unwrap(), h0, h0)?;

    let mix_f = tape.param(store, params.mix_forward);
    let mix_b = tape.param(store, params.mix_backward);
    let a = tape.matmul(hf, mix_f)?;
    let b = tape.matmul(hb, mix_b)?;
    let z = tape.add(a, b)?;
    tape.sigmoid(z)
}

/// Full head: conv → pool → tanh → chunk → bidirectional recurrence → MLP.
#[derive(Clone, Debug)]
pub struct SequenceHead {
    pub input_width: usize,
    pub conv: ConvLayer,
    pub pool: PoolSpec,
    pub layout: SequenceLayout,
    pub birnn: BiRnnParams,
    pub classifier: Mlp,
}

impl SequenceHead {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input_width: usize, config: &HeadConfig, rng: &mut R) -> Result<Self> {
        let spec = ConvSpec {
            num_kernels: config.num_kernels,
            half_width: config.half_width,
        };
        if input_width < spec.window() {
            return Err(Error::InvalidConfig(format!(
                "embedding width {input_width} is shorter than the conv window {}",
                spec.window()
            )));
        }
        let pool = PoolSpec {
            half_width: config.half_width,
        };
        let pooled = config.num_kernels * pool.pooled_len(input_width);
        let layout = SequenceLayout::for_length(pooled, config.chunks)?;
        let conv = ConvLayer::new(store, &format!("{name}.conv"), spec, rng)?;
        let birnn = BiRnnParams::new(
            store,
            &format!("{name}.birnn"),
            config.cell,
            layout.chunk_width,
            config.hidden,
            rng,
        )?;
        let classifier = Mlp::new(
            store,
            &format!("{name}.classifier"),
            &[config.hidden, config.classifier_hidden, 1],
            rng,
        )?;
        Ok(SequenceHead {
            input_width,
            conv,
            pool,
            layout,
            birnn,
            classifier,
        })
    }

    /// Fraud probabilities, `m × 1`, in row order of `h`.
    pub fn predict(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Result<Var> {
        let width = tape.value(h)?.cols();
        if width != self.input_width {
            return Err(Error::shape(
                "head_predict",
                format!("embedding width {width}, head expects {}", self.input_width),
            ));
        }
        let c = conv1d_forward(tape, store, &self.conv, h)?;
        let pooled = max_pool(tape, self.pool, c, self.conv.spec.num_kernels)?;
        let squashed = tape.tanh(pooled)?;
        let s = self.layout.chunk_width;
        let chunks = (0..self.layout.chunks)
            .map(|t| tape.slice_cols(squashed, t * s, s))
            .collect::<Result<Vec<_>>>()?;
        let state = birnn_forward(tape, store, &self.birnn, &chunks)?;
        self.classifier.forward(tape, store, state)
    }
}
