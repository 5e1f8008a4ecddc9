//! The four network architectures: vanilla RNN, standard LSTM,
//! recurrent-projection LSTM and dual-projection LSTM. Parameter containers,
//! deterministic initialization, forward stepping and parameter counting.
//!
//! One time step of the LSTM family computes
//!
//! ```text
//! i_t = sigmoid(W_ix x_t + W_im rec_{t-1} + w_ic . c_{t-1} + b_i)
//! f_t = sigmoid(W_fx x_t + W_fm rec_{t-1} + w_fc . c_{t-1} + b_f)
//! c_t = f_t . c_{t-1} + i_t . tanh(W_cx x_t + W_cm rec_{t-1} + b_c)
//! o_t = sigmoid(W_ox x_t + W_om rec_{t-1} + w_oc . c_t + b_o)
//! m_t = o_t . tanh(c_t)
//! ```
//!
//! where `.` is element-wise product and `rec` is the recurrent signal:
//! `m` for the standard LSTM, the projection output `r = W_rm m` for the
//! projected variants. Note the output gate reads the freshly updated `c_t`
//! while the input and forget gates read `c_{t-1}`. The peephole weights
//! `w_ic`, `w_fc`, `w_oc` are diagonal, i.e. per-cell vectors.
//!
//! The projected variants append
//!
//! ```text
//! r_t = W_rm m_t                    (feeds both recurrence and the output)
//! p_t = W_pm m_t                    (dual-projection only, output-side)
//! y_t = W_yr r_t [+ W_yp p_t] + b_y
//! ```
//!
//! and the vanilla RNN computes `h_t = sigmoid(W_hx x_t + W_hh h_{t-1} + b_h)`
//! with a linear output layer. All projection layers are linear.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{affine_cols, sigmoid, Matrix, Vector};
use crate::scalar::Scalar;

/// Which architecture a model instance follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArchKind {
    Rnn,
    Lstm,
    LstmRp,
    LstmRpNp,
}

impl ArchKind {
    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Rnn => "rnn",
            ArchKind::Lstm => "lstm",
            ArchKind::LstmRp => "lstm_rp",
            ArchKind::LstmRpNp => "lstm_rp_np",
        }
    }

    pub fn from_name(s: &str) -> Option<ArchKind> {
        match s {
            "rnn" => Some(ArchKind::Rnn),
            "lstm" => Some(ArchKind::Lstm),
            "lstm_rp" => Some(ArchKind::LstmRp),
            "lstm_rp_np" => Some(ArchKind::LstmRpNp),
            _ => None,
        }
    }
}

/// Architecture sizes: input dim `n_i`, cell count `n_c`, recurrent
/// projection dim `n_r`, non-recurrent projection dim `n_p`, output classes
/// `n_o`. `n_r` is present exactly for the projected variants, `n_p` exactly
/// for the dual-projection variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArchSpec {
    pub kind: ArchKind,
    pub n_i: usize,
    pub n_c: usize,
    pub n_r: Option<usize>,
    pub n_p: Option<usize>,
    pub n_o: usize,
}

impl ArchSpec {
    pub fn rnn(n_i: usize, n_c: usize, n_o: usize) -> ArchSpec {
        ArchSpec { kind: ArchKind::Rnn, n_i, n_c, n_r: None, n_p: None, n_o }
    }

    pub fn lstm(n_i: usize, n_c: usize, n_o: usize) -> ArchSpec {
        ArchSpec { kind: ArchKind::Lstm, n_i, n_c, n_r: None, n_p: None, n_o }
    }

    pub fn lstm_rp(n_i: usize, n_c: usize, n_r: usize, n_o: usize) -> ArchSpec {
        ArchSpec { kind: ArchKind::LstmRp, n_i, n_c, n_r: Some(n_r), n_p: None, n_o }
    }

    pub fn lstm_rp_np(n_i: usize, n_c: usize, n_r: usize, n_p: usize, n_o: usize) -> ArchSpec {
        ArchSpec { kind: ArchKind::LstmRpNp, n_i, n_c, n_r: Some(n_r), n_p: Some(n_p), n_o }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::InvalidArg(format!("{name} must be >= 1")))
            } else {
                Ok(())
            }
        };
        positive("n_i", self.n_i)?;
        positive("n_c", self.n_c)?;
        positive("n_o", self.n_o)?;
        let projected = matches!(self.kind, ArchKind::LstmRp | ArchKind::LstmRpNp);
        if projected != self.n_r.is_some() {
            return Err(Error::InvalidArg(format!(
                "n_r must be present exactly for projected variants (arch {})",
                self.kind.name()
            )));
        }
        if (self.kind == ArchKind::LstmRpNp) != self.n_p.is_some() {
            return Err(Error::InvalidArg(format!(
                "n_p must be present exactly for the dual-projection variant (arch {})",
                self.kind.name()
            )));
        }
        if let Some(n_r) = self.n_r {
            positive("n_r", n_r)?;
        }
        if let Some(n_p) = self.n_p {
            positive("n_p", n_p)?;
        }
        Ok(())
    }

    /// Width of the recurrent signal fed back into the gates:
    /// `n_c` for RNN/LSTM, `n_r` for the projected variants.
    pub fn rec_dim(&self) -> usize {
        self.n_r.unwrap_or(self.n_c)
    }

    /// Width of the cell-state part of the carried state (0 for the RNN,
    /// which has no memory cell).
    pub fn cell_dim(&self) -> usize {
        match self.kind {
            ArchKind::Rnn => 0,
            _ => self.n_c,
        }
    }
}

/// Number of weights (optionally plus biases) a spec instantiates.
///
/// Closed forms, with diagonal peepholes counted as `3 n_c`:
///   LSTM:       4 n_c^2  + 4 n_i n_c + n_c n_o          + 3 n_c
///   LSTM_RP:    4 n_c n_r + 4 n_i n_c + n_r n_o + n_c n_r + 3 n_c
///   LSTM_RP_NP: 4 n_c n_r + 4 n_i n_c + (n_r+n_p) n_o + n_c (n_r+n_p) + 3 n_c
///   RNN:        n_c^2 + n_i n_c + n_c n_o
pub fn param_count(spec: &ArchSpec, include_biases: bool) -> usize {
    let (n_i, n_c, n_o) = (spec.n_i, spec.n_c, spec.n_o);
    let weights = match spec.kind {
        ArchKind::Rnn => n_c * n_c + n_i * n_c + n_c * n_o,
        ArchKind::Lstm => 4 * n_c * n_c + 4 * n_i * n_c + n_c * n_o + 3 * n_c,
        ArchKind::LstmRp => {
            let n_r = spec.n_r.unwrap();
            4 * n_c * n_r + 4 * n_i * n_c + n_r * n_o + n_c * n_r + 3 * n_c
        }
        ArchKind::LstmRpNp => {
            let n_r = spec.n_r.unwrap();
            let n_p = spec.n_p.unwrap();
            4 * n_c * n_r + 4 * n_i * n_c + (n_r + n_p) * n_o + n_c * (n_r + n_p) + 3 * n_c
        }
    };
    let biases = match spec.kind {
        ArchKind::Rnn => n_c + n_o,
        _ => 4 * n_c + n_o,
    };
    if include_biases {
        weights + biases
    } else {
        weights
    }
}

/// Gate weights shared by all LSTM variants. Input-side matrices are
/// `n_c x n_i`, recurrent-side matrices `n_c x rec_dim`, peepholes and
/// biases length `n_c`.
#[derive(Clone, Debug, PartialEq)]
pub struct GateBlock<S: Scalar> {
    pub w_ix: Matrix<S>,
    pub w_fx: Matrix<S>,
    pub w_cx: Matrix<S>,
    pub w_ox: Matrix<S>,
    pub w_im: Matrix<S>,
    pub w_fm: Matrix<S>,
    pub w_cm: Matrix<S>,
    pub w_om: Matrix<S>,
    pub w_ic: Vector<S>,
    pub w_fc: Vector<S>,
    pub w_oc: Vector<S>,
    pub b_i: Vector<S>,
    pub b_f: Vector<S>,
    pub b_c: Vector<S>,
    pub b_o: Vector<S>,
}

impl<S: Scalar> GateBlock<S> {
    fn zeros(n_i: usize, n_c: usize, rec: usize) -> Self {
        GateBlock {
            w_ix: Matrix::zeros(n_c, n_i),
            w_fx: Matrix::zeros(n_c, n_i),
            w_cx: Matrix::zeros(n_c, n_i),
            w_ox: Matrix::zeros(n_c, n_i),
            w_im: Matrix::zeros(n_c, rec),
            w_fm: Matrix::zeros(n_c, rec),
            w_cm: Matrix::zeros(n_c, rec),
            w_om: Matrix::zeros(n_c, rec),
            w_ic: Vector::zeros(n_c),
            w_fc: Vector::zeros(n_c),
            w_oc: Vector::zeros(n_c),
            b_i: Vector::zeros(n_c),
            b_f: Vector::zeros(n_c),
            b_c: Vector::zeros(n_c),
            b_o: Vector::zeros(n_c),
        }
    }
}

/// Architecture-specific weight layout.
#[derive(Clone, Debug, PartialEq)]
pub enum Weights<S: Scalar> {
    Rnn {
        w_hx: Matrix<S>,
        w_hh: Matrix<S>,
        b_h: Vector<S>,
        w_yh: Matrix<S>,
        b_y: Vector<S>,
    },
    Lstm {
        gates: GateBlock<S>,
        w_ym: Matrix<S>,
        b_y: Vector<S>,
    },
    LstmRp {
        gates: GateBlock<S>,
        w_rm: Matrix<S>,
        w_yr: Matrix<S>,
        b_y: Vector<S>,
    },
    LstmRpNp {
        gates: GateBlock<S>,
        w_rm: Matrix<S>,
        w_pm: Matrix<S>,
        w_yr: Matrix<S>,
        w_yp: Matrix<S>,
        b_y: Vector<S>,
    },
}

/// A named view over one parameter block (matrix or vector).
pub struct BlockRef<'a, S> {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub is_bias: bool,
    pub data: &'a [S],
}

/// Mutable counterpart of [`BlockRef`], in the same canonical order.
pub struct BlockMut<'a, S> {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub is_bias: bool,
    pub data: &'a mut [S],
}

/// All weights, peepholes and biases of one architecture instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<S: Scalar> {
    spec: ArchSpec,
    pub weights: Weights<S>,
}

impl<S: Scalar> ModelParams<S> {
    /// All-zero parameters of the given shape.
    pub fn zeros(spec: &ArchSpec) -> Result<ModelParams<S>> {
        spec.validate()?;
        let (n_i, n_c, n_o) = (spec.n_i, spec.n_c, spec.n_o);
        let weights = match spec.kind {
            ArchKind::Rnn => Weights::Rnn {
                w_hx: Matrix::zeros(n_c, n_i),
                w_hh: Matrix::zeros(n_c, n_c),
                b_h: Vector::zeros(n_c),
                w_yh: Matrix::zeros(n_o, n_c),
                b_y: Vector::zeros(n_o),
            },
            ArchKind::Lstm => Weights::Lstm {
                gates: GateBlock::zeros(n_i, n_c, n_c),
                w_ym: Matrix::zeros(n_o, n_c),
                b_y: Vector::zeros(n_o),
            },
            ArchKind::LstmRp => {
                let n_r = spec.n_r.unwrap();
                Weights::LstmRp {
                    gates: GateBlock::zeros(n_i, n_c, n_r),
                    w_rm: Matrix::zeros(n_r, n_c),
                    w_yr: Matrix::zeros(n_o, n_r),
                    b_y: Vector::zeros(n_o),
                }
            }
            ArchKind::LstmRpNp => {
                let n_r = spec.n_r.unwrap();
                let n_p = spec.n_p.unwrap();
                Weights::LstmRpNp {
                    gates: GateBlock::zeros(n_i, n_c, n_r),
                    w_rm: Matrix::zeros(n_r, n_c),
                    w_pm: Matrix::zeros(n_p, n_c),
                    w_yr: Matrix::zeros(n_o, n_r),
                    w_yp: Matrix::zeros(n_o, n_p),
                    b_y: Vector::zeros(n_o),
                }
            }
        };
        Ok(ModelParams { spec: *spec, weights })
    }

    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    /// Parameter blocks in canonical order (weights first, then biases).
    /// Initialization, SGD updates, checkpoints and the finite-difference
    /// oracle all iterate this order.
    pub fn blocks(&self) -> Vec<BlockRef<'_, S>> {
        fn mat<'a, S>(name: &'static str, m: &'a Matrix<S>) -> BlockRef<'a, S>
        where
            S: Scalar,
        {
            BlockRef { name, rows: m.rows(), cols: m.cols(), is_bias: false, data: m.data() }
        }
        fn vec<'a, S: Scalar>(name: &'static str, v: &'a Vector<S>, is_bias: bool) -> BlockRef<'a, S> {
            BlockRef { name, rows: v.len(), cols: 1, is_bias, data: v.as_slice() }
        }
        match &self.weights {
            Weights::Rnn { w_hx, w_hh, b_h, w_yh, b_y } => vec![
                mat("w_hx", w_hx),
                mat("w_hh", w_hh),
                mat("w_yh", w_yh),
                vec("b_h", b_h, true),
                vec("b_y", b_y, true),
            ],
            Weights::Lstm { gates: g, w_ym, b_y } => {
                let mut out = gate_blocks(g);
                out.push(mat("w_ym", w_ym));
                out.extend(gate_bias_blocks(g));
                out.push(vec("b_y", b_y, true));
                out
            }
            Weights::LstmRp { gates: g, w_rm, w_yr, b_y } => {
                let mut out = gate_blocks(g);
                out.push(mat("w_rm", w_rm));
                out.push(mat("w_yr", w_yr));
                out.extend(gate_bias_blocks(g));
                out.push(vec("b_y", b_y, true));
                out
            }
            Weights::LstmRpNp { gates: g, w_rm, w_pm, w_yr, w_yp, b_y } => {
                let mut out = gate_blocks(g);
                out.push(mat("w_rm", w_rm));
                out.push(mat("w_pm", w_pm));
                out.push(mat("w_yr", w_yr));
                out.push(mat("w_yp", w_yp));
                out.extend(gate_bias_blocks(g));
                out.push(vec("b_y", b_y, true));
                out
            }
        }
    }

    /// Mutable blocks, same canonical order as [`ModelParams::blocks`].
    pub fn blocks_mut(&mut self) -> Vec<BlockMut<'_, S>> {
        fn mat<'a, S>(name: &'static str, m: &'a mut Matrix<S>) -> BlockMut<'a, S>
        where
            S: Scalar,
        {
            let (rows, cols) = (m.rows(), m.cols());
            BlockMut { name, rows, cols, is_bias: false, data: m.data_mut() }
        }
        fn vec<'a, S: Scalar>(
            name: &'static str,
            v: &'a mut Vector<S>,
            is_bias: bool,
        ) -> BlockMut<'a, S> {
            let rows = v.len();
            BlockMut { name, rows, cols: 1, is_bias, data: v.as_mut_slice() }
        }
        match &mut self.weights {
            Weights::Rnn { w_hx, w_hh, b_h, w_yh, b_y } => vec![
                mat("w_hx", w_hx),
                mat("w_hh", w_hh),
                mat("w_yh", w_yh),
                vec("b_h", b_h, true),
                vec("b_y", b_y, true),
            ],
            Weights::Lstm { gates: g, w_ym, b_y } => {
                let mut out = gate_blocks_mut(g);
                out.insert(11, mat("w_ym", w_ym));
                out.push(vec("b_y", b_y, true));
                out
            }
            Weights::LstmRp { gates: g, w_rm, w_yr, b_y } => {
                let mut out = gate_blocks_mut(g);
                out.insert(11, mat("w_rm", w_rm));
                out.insert(12, mat("w_yr", w_yr));
                out.push(vec("b_y", b_y, true));
                out
            }
            Weights::LstmRpNp { gates: g, w_rm, w_pm, w_yr, w_yp, b_y } => {
                let mut out = gate_blocks_mut(g);
                out.insert(11, mat("w_rm", w_rm));
                out.insert(12, mat("w_pm", w_pm));
                out.insert(13, mat("w_yr", w_yr));
                out.insert(14, mat("w_yp", w_yp));
                out.push(vec("b_y", b_y, true));
                out
            }
        }
    }

    /// Scalar count from the instantiated blocks (the counting oracle for
    /// [`param_count`]).
    pub fn scalar_count(&self, include_biases: bool) -> usize {
        self.blocks()
            .iter()
            .filter(|b| include_biases || !b.is_bias)
            .map(|b| b.data.len())
            .sum()
    }

    /// Positive forget-gate bias, off by default.
    pub fn set_forget_bias(&mut self, value: S) {
        match &mut self.weights {
            Weights::Lstm { gates, .. }
            | Weights::LstmRp { gates, .. }
            | Weights::LstmRpNp { gates, .. } => {
                for v in gates.b_f.as_mut_slice() {
                    *v = value;
                }
            }
            Weights::Rnn { .. } => {}
        }
    }
}

fn gate_blocks<S: Scalar>(g: &GateBlock<S>) -> Vec<BlockRef<'_, S>> {
    fn mat<'a, S: Scalar>(name: &'static str, m: &'a Matrix<S>) -> BlockRef<'a, S> {
        BlockRef { name, rows: m.rows(), cols: m.cols(), is_bias: false, data: m.data() }
    }
    fn peep<'a, S: Scalar>(name: &'static str, v: &'a Vector<S>) -> BlockRef<'a, S> {
        BlockRef { name, rows: v.len(), cols: 1, is_bias: false, data: v.as_slice() }
    }
    vec![
        mat("w_ix", &g.w_ix),
        mat("w_fx", &g.w_fx),
        mat("w_cx", &g.w_cx),
        mat("w_ox", &g.w_ox),
        mat("w_im", &g.w_im),
        mat("w_fm", &g.w_fm),
        mat("w_cm", &g.w_cm),
        mat("w_om", &g.w_om),
        peep("w_ic", &g.w_ic),
        peep("w_fc", &g.w_fc),
        peep("w_oc", &g.w_oc),
    ]
}

fn gate_bias_blocks<S: Scalar>(g: &GateBlock<S>) -> Vec<BlockRef<'_, S>> {
    fn bias<'a, S: Scalar>(name: &'static str, v: &'a Vector<S>) -> BlockRef<'a, S> {
        BlockRef { name, rows: v.len(), cols: 1, is_bias: true, data: v.as_slice() }
    }
    vec![bias("b_i", &g.b_i), bias("b_f", &g.b_f), bias("b_c", &g.b_c), bias("b_o", &g.b_o)]
}

fn gate_blocks_mut<S: Scalar>(g: &mut GateBlock<S>) -> Vec<BlockMut<'_, S>> {
    fn mat<'a, S: Scalar>(name: &'static str, m: &'a mut Matrix<S>) -> BlockMut<'a, S> {
        let (rows, cols) = (m.rows(), m.cols());
        BlockMut { name, rows, cols, is_bias: false, data: m.data_mut() }
    }
    fn vec<'a, S: Scalar>(name: &'static str, v: &'a mut Vector<S>, is_bias: bool) -> BlockMut<'a, S> {
        let rows = v.len();
        BlockMut { name, rows, cols: 1, is_bias, data: v.as_mut_slice() }
    }
    // Weight blocks first (indices 0..11), then gate biases; the caller
    // inserts projection/output matrices at index 11 to keep the canonical
    // weights-then-biases order.
    vec![
        mat("w_ix", &mut g.w_ix),
        mat("w_fx", &mut g.w_fx),
        mat("w_cx", &mut g.w_cx),
        mat("w_ox", &mut g.w_ox),
        mat("w_im", &mut g.w_im),
        mat("w_fm", &mut g.w_fm),
        mat("w_cm", &mut g.w_cm),
        mat("w_om", &mut g.w_om),
        vec("w_ic", &mut g.w_ic, false),
        vec("w_fc", &mut g.w_fc, false),
        vec("w_oc", &mut g.w_oc, false),
        vec("b_i", &mut g.b_i, true),
        vec("b_f", &mut g.b_f, true),
        vec("b_c", &mut g.b_c, true),
        vec("b_o", &mut g.b_o, true),
    ]
}

/// Random initialization: weights i.i.d. uniform on `[-scale, +scale]` drawn
/// from a ChaCha8 stream seeded by `seed`, biases zero. Identical
/// `(spec, seed, scale)` reproduces identical parameters bit for bit.
pub fn init_params<S: Scalar>(spec: &ArchSpec, seed: u64, scale: f64) -> Result<ModelParams<S>> {
    if !(scale > 0.0) {
        return Err(Error::InvalidArg(format!("init scale must be > 0, got {scale}")));
    }
    let mut params = ModelParams::zeros(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for block in params.blocks_mut() {
        if block.is_bias {
            continue;
        }
        for v in block.data {
            *v = S::from_config(rng.random_range(-scale..=scale));
        }
    }
    Ok(params)
}

/// Per-lane recurrent carry-over: cell activations `c` and the recurrent
/// signal `rec`: `m` for RNN/LSTM (the RNN stores its hidden state here and
/// carries no cell vector), `r` for the projected variants.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState<S: Scalar> {
    pub c: Vector<S>,
    pub rec: Vector<S>,
}

/// Zeroed state of the dimensions the spec dictates.
pub fn reset_state<S: Scalar>(spec: &ArchSpec) -> CellState<S> {
    CellState { c: Vector::zeros(spec.cell_dim()), rec: Vector::zeros(spec.rec_dim()) }
}

/// Lane-batched state: one column per lane.
#[derive(Clone, Debug)]
pub struct BatchState<S: Scalar> {
    pub c: Matrix<S>,
    pub rec: Matrix<S>,
}

impl<S: Scalar> BatchState<S> {
    pub fn reset(spec: &ArchSpec, lanes: usize) -> BatchState<S> {
        BatchState {
            c: Matrix::zeros(spec.cell_dim(), lanes),
            rec: Matrix::zeros(spec.rec_dim(), lanes),
        }
    }

    pub fn lanes(&self) -> usize {
        self.rec.cols()
    }

    pub fn from_states(states: &[&CellState<S>]) -> BatchState<S> {
        assert!(!states.is_empty(), "batch state from zero lanes");
        let mut c = Matrix::zeros(states[0].c.len(), states.len());
        let mut rec = Matrix::zeros(states[0].rec.len(), states.len());
        for (l, st) in states.iter().enumerate() {
            c.set_col(l, st.c.as_slice());
            rec.set_col(l, st.rec.as_slice());
        }
        BatchState { c, rec }
    }

    pub fn col_to_state(&self, lane: usize) -> CellState<S> {
        CellState { c: self.c.col_to_vector(lane), rec: self.rec.col_to_vector(lane) }
    }
}

/// Per-time-step activation record needed by the backward pass. Columns are
/// lanes; a single-lane step has width 1.
#[derive(Clone, Debug)]
pub enum StepCache<S: Scalar> {
    Rnn {
        x: Matrix<S>,
        h_prev: Matrix<S>,
        /// Raw pre-activation and the clamp bound applied to it (if any);
        /// the backward pass zeroes the derivative where the clamp was active.
        pre: Matrix<S>,
        bound: Option<S>,
        h: Matrix<S>,
        y: Matrix<S>,
    },
    Lstm {
        x: Matrix<S>,
        rec_prev: Matrix<S>,
        c_prev: Matrix<S>,
        i: Matrix<S>,
        f: Matrix<S>,
        g: Matrix<S>,
        o: Matrix<S>,
        c: Matrix<S>,
        hc: Matrix<S>,
        m: Matrix<S>,
        r: Option<Matrix<S>>,
        p: Option<Matrix<S>>,
        y: Matrix<S>,
    },
}

impl<S: Scalar> StepCache<S> {
    pub fn logits(&self) -> &Matrix<S> {
        match self {
            StepCache::Rnn { y, .. } => y,
            StepCache::Lstm { y, .. } => y,
        }
    }

    pub fn lanes(&self) -> usize {
        self.logits().cols()
    }
}

/// One lane-batched time step. `x` is `n_i x lanes`. `act_bound` clamps the
/// RNN hidden pre-activations; the LSTM variants never apply it.
pub fn forward_batch<S: Scalar>(
    params: &ModelParams<S>,
    state: &BatchState<S>,
    x: &Matrix<S>,
    act_bound: Option<S>,
) -> (BatchState<S>, StepCache<S>) {
    match &params.weights {
        Weights::Rnn { w_hx, w_hh, b_h, w_yh, b_y } => {
            let h_prev = state.rec.clone();
            let mut pre = affine_cols(w_hx, x, b_h);
            pre.gemm_acc(w_hh, &h_prev);
            let mut h = pre.clone();
            if let Some(b) = act_bound {
                h.map_inplace(|v| num_traits::clamp(v, -b, b));
            }
            h.map_inplace(sigmoid);
            let y = affine_cols(w_yh, &h, b_y);
            let next = BatchState { c: Matrix::zeros(0, h.cols()), rec: h.clone() };
            (next, StepCache::Rnn { x: x.clone(), h_prev, pre, bound: act_bound, h, y })
        }
        Weights::Lstm { gates, w_ym, b_y } => {
            let (core, next_rec_is_m) = lstm_core(gates, state, x);
            let y = affine_cols(w_ym, &next_rec_is_m, b_y);
            let next = BatchState { c: core.c.clone(), rec: next_rec_is_m.clone() };
            (next, core.into_cache(x.clone(), state.rec.clone(), None, None, y))
        }
        Weights::LstmRp { gates, w_rm, w_yr, b_y } => {
            let (core, m) = lstm_core(gates, state, x);
            let mut r = Matrix::zeros(w_rm.rows(), m.cols());
            r.gemm_acc(w_rm, &m);
            let y = affine_cols(w_yr, &r, b_y);
            let next = BatchState { c: core.c.clone(), rec: r.clone() };
            (next, core.into_cache(x.clone(), state.rec.clone(), Some(r), None, y))
        }
        Weights::LstmRpNp { gates, w_rm, w_pm, w_yr, w_yp, b_y } => {
            let (core, m) = lstm_core(gates, state, x);
            let mut r = Matrix::zeros(w_rm.rows(), m.cols());
            r.gemm_acc(w_rm, &m);
            let mut p = Matrix::zeros(w_pm.rows(), m.cols());
            p.gemm_acc(w_pm, &m);
            let mut y = affine_cols(w_yr, &r, b_y);
            y.gemm_acc(w_yp, &p);
            let next = BatchState { c: core.c.clone(), rec: r.clone() };
            (next, core.into_cache(x.clone(), state.rec.clone(), Some(r), Some(p), y))
        }
    }
}

struct LstmCore<S: Scalar> {
    c_prev: Matrix<S>,
    i: Matrix<S>,
    f: Matrix<S>,
    g: Matrix<S>,
    o: Matrix<S>,
    c: Matrix<S>,
    hc: Matrix<S>,
    m: Matrix<S>,
}

impl<S: Scalar> LstmCore<S> {
    fn into_cache(
        self,
        x: Matrix<S>,
        rec_prev: Matrix<S>,
        r: Option<Matrix<S>>,
        p: Option<Matrix<S>>,
        y: Matrix<S>,
    ) -> StepCache<S> {
        StepCache::Lstm {
            x,
            rec_prev,
            c_prev: self.c_prev,
            i: self.i,
            f: self.f,
            g: self.g,
            o: self.o,
            c: self.c,
            hc: self.hc,
            m: self.m,
            r,
            p,
            y,
        }
    }
}

/// Gate arithmetic shared by all LSTM variants; returns the core record and
/// the block output `m_t`.
fn lstm_core<S: Scalar>(
    gates: &GateBlock<S>,
    state: &BatchState<S>,
    x: &Matrix<S>,
) -> (LstmCore<S>, Matrix<S>) {
    let c_prev = &state.c;
    let rec_prev = &state.rec;

    let mut a_i = affine_cols(&gates.w_ix, x, &gates.b_i);
    a_i.gemm_acc(&gates.w_im, rec_prev);
    a_i.addmul_rows(&gates.w_ic, c_prev);
    a_i.map_inplace(sigmoid);
    let i = a_i;

    let mut a_f = affine_cols(&gates.w_fx, x, &gates.b_f);
    a_f.gemm_acc(&gates.w_fm, rec_prev);
    a_f.addmul_rows(&gates.w_fc, c_prev);
    a_f.map_inplace(sigmoid);
    let f = a_f;

    let mut a_g = affine_cols(&gates.w_cx, x, &gates.b_c);
    a_g.gemm_acc(&gates.w_cm, rec_prev);
    a_g.map_inplace(|v| v.tanh());
    let g = a_g;

    let mut c = Matrix::zeros(c_prev.rows(), c_prev.cols());
    {
        let cd = c.data_mut();
        for (((cv, &fv), &cp), (&iv, &gv)) in cd
            .iter_mut()
            .zip(f.data())
            .zip(c_prev.data())
            .zip(i.data().iter().zip(g.data()))
        {
            *cv = fv * cp + iv * gv;
        }
    }

    // The output gate reads the freshly updated cell state.
    let mut a_o = affine_cols(&gates.w_ox, x, &gates.b_o);
    a_o.gemm_acc(&gates.w_om, rec_prev);
    a_o.addmul_rows(&gates.w_oc, &c);
    a_o.map_inplace(sigmoid);
    let o = a_o;

    let mut hc = c.clone();
    hc.map_inplace(|v| v.tanh());
    let mut m = Matrix::zeros(hc.rows(), hc.cols());
    for ((mv, &ov), &hv) in m.data_mut().iter_mut().zip(o.data()).zip(hc.data()) {
        *mv = ov * hv;
    }

    (LstmCore { c_prev: c_prev.clone(), i, f, g, o, c, hc, m: m.clone() }, m)
}

pub(crate) fn check_state_dims<S: Scalar>(spec: &ArchSpec, state: &CellState<S>) -> Result<()> {
    if state.c.len() != spec.cell_dim() || state.rec.len() != spec.rec_dim() {
        return Err(Error::shape(
            "forward_step",
            format!(
                "state has c[{}] rec[{}] but {} spec needs c[{}] rec[{}]",
                state.c.len(),
                state.rec.len(),
                spec.kind.name(),
                spec.cell_dim(),
                spec.rec_dim()
            ),
        ));
    }
    Ok(())
}

/// One single-lane time step; returns the next state and the activation
/// record the backward pass needs.
pub fn forward_step<S: Scalar>(
    params: &ModelParams<S>,
    state: &CellState<S>,
    x_t: &Vector<S>,
) -> Result<(CellState<S>, StepCache<S>)> {
    let spec = params.spec();
    check_state_dims(spec, state)?;
    if x_t.len() != spec.n_i {
        return Err(Error::shape(
            "forward_step",
            format!("input frame has length {} but n_i = {}", x_t.len(), spec.n_i),
        ));
    }
    let batch = BatchState::from_states(&[state]);
    let mut x = Matrix::zeros(spec.n_i, 1);
    x.set_col(0, x_t.as_slice());
    let (next, cache) = forward_batch(params, &batch, &x, None);
    Ok((next.col_to_state(0), cache))
}

/// Fold [`forward_step`] over `t = 0..T`. `frames` is `T x n_i` (one row per
/// frame); returns the post-T state, the per-step caches and the `T x n_o`
/// logit rows.
pub fn forward_sequence<S: Scalar>(
    params: &ModelParams<S>,
    state: &CellState<S>,
    frames: &Matrix<S>,
) -> Result<(CellState<S>, Vec<StepCache<S>>, Matrix<S>)> {
    let spec = params.spec();
    if frames.rows() == 0 {
        return Err(Error::InvalidArg("forward_sequence needs at least one frame".into()));
    }
    if frames.cols() != spec.n_i {
        return Err(Error::shape(
            "forward_sequence",
            format!("frames are {}x{} but n_i = {}", frames.rows(), frames.cols(), spec.n_i),
        ));
    }
    check_state_dims(spec, state)?;
    let t_len = frames.rows();
    let mut caches = Vec::with_capacity(t_len);
    let mut logits = Matrix::zeros(t_len, spec.n_o);
    let mut st = state.clone();
    for t in 0..t_len {
        let x_t = Vector::from_vec(frames.row(t).to_vec());
        let (next, cache) = forward_step(params, &st, &x_t)?;
        for k in 0..spec.n_o {
            logits.set(t, k, cache.logits().get(k, 0));
        }
        caches.push(cache);
        st = next;
    }
    Ok((st, caches, logits))
}
