//! MPNN + virtual-node layers and layer programs.
//!
//! One heterogeneous layer computes, from the pre-layer state only,
//!
//! ```text
//! vn'  = γ_vn(vn, POOL_j φ_vn(vn, x_j))
//! x_i' = γ_gn(x_i, φ_gv(x_i, vn) + Σ_{j ∈ N(i)} φ_gg(x_i, x_j))
//! ```
//!
//! The simplified layer has no `φ_gg` channel. Sums run in node-index
//! order so results are bit-reproducible.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{check_dim, usage, Result};
use crate::graphs::Graph;
use crate::mlp::{Activation, MlpParams};
use crate::numkit::{softmax, Matrix};

/// Message `φ(receiver, sender)`.
pub trait MessageFn: Send + Sync {
    /// Accepted `(receiver, sender)` widths; `None` accepts any width.
    fn in_dims(&self) -> (Option<usize>, Option<usize>);
    fn out_dim(&self) -> usize;
    fn eval(&self, receiver: &[f64], sender: &[f64], out: &mut [f64]);
    fn describe(&self) -> Value;
}

/// Update `γ(own, aggregate)`.
pub trait UpdateFn: Send + Sync {
    fn in_dims(&self) -> (Option<usize>, Option<usize>);
    fn out_dim(&self) -> usize;
    fn eval(&self, own: &[f64], aggregate: &[f64], out: &mut [f64]);
    fn describe(&self) -> Value;
}

/// Attention logit used by an attention pool. The sender's index is passed
/// for oracle selectors; feature-only scores ignore it.
pub trait ScoreFn: Send + Sync {
    fn in_dims(&self) -> (Option<usize>, Option<usize>);
    fn eval(&self, receiver: &[f64], sender: &[f64], sender_index: usize) -> f64;
    fn describe(&self) -> Value;
}

/// How the virtual node pools graph-node messages.
#[derive(Clone)]
pub enum Pool {
    Sum(Arc<dyn MessageFn>),
    /// `Σ_j softmax_j(score(vn, x_j, j)) · value(vn, x_j)`.
    Attention {
        score: Arc<dyn ScoreFn>,
        value: Arc<dyn MessageFn>,
    },
    /// Ignores the graph and returns a fixed vector.
    Constant(Vec<f64>),
}

impl Pool {
    pub fn out_dim(&self) -> usize {
        match self {
            Pool::Sum(m) => m.out_dim(),
            Pool::Attention { value, .. } => value.out_dim(),
            Pool::Constant(v) => v.len(),
        }
    }

    fn check(&self, vn: usize, gn: usize) -> Result<()> {
        match self {
            Pool::Sum(m) => check_in(m.in_dims(), vn, gn, "VN pool message"),
            Pool::Attention { score, value } => {
                check_in(score.in_dims(), vn, gn, "VN pool score")?;
                check_in(value.in_dims(), vn, gn, "VN pool value")
            }
            Pool::Constant(_) => Ok(()),
        }
    }

    fn describe(&self) -> Value {
        match self {
            Pool::Sum(m) => json!({"kind": "sum", "message": m.describe()}),
            Pool::Attention { score, value } => json!({
                "kind": "attention",
                "score": score.describe(),
                "value": value.describe(),
            }),
            Pool::Constant(v) => json!({"kind": "constant", "value": v}),
        }
    }
}

impl fmt::Debug for Pool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.describe())
    }
}

fn check_in(
    dims: (Option<usize>, Option<usize>),
    first: usize,
    second: usize,
    context: &'static str,
) -> Result<()> {
    if let Some(a) = dims.0 {
        check_dim(context, a, first)?;
    }
    if let Some(b) = dims.1 {
        check_dim(context, b, second)?;
    }
    Ok(())
}

/// Widths of the graph-node and virtual-node states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDims {
    pub gn: usize,
    pub vn: usize,
}

impl StateDims {
    pub fn new(gn: usize, vn: usize) -> Self {
        Self { gn, vn }
    }

    pub fn max(&self) -> usize {
        self.gn.max(self.vn)
    }
}

/// One heterogeneous MPNN + VN layer.
#[derive(Clone)]
pub struct MpnnVnLayer {
    label: String,
    input: StateDims,
    output: StateDims,
    vn_pool: Pool,
    vn_update: Arc<dyn UpdateFn>,
    gn_from_vn: Arc<dyn MessageFn>,
    gn_from_gn: Option<Arc<dyn MessageFn>>,
    gn_update: Arc<dyn UpdateFn>,
}

impl MpnnVnLayer {
    /// Simplified layer (no graph-node to graph-node channel).
    pub fn simplified(
        label: impl Into<String>,
        input: StateDims,
        vn_pool: Pool,
        vn_update: Arc<dyn UpdateFn>,
        gn_from_vn: Arc<dyn MessageFn>,
        gn_update: Arc<dyn UpdateFn>,
    ) -> Result<Self> {
        vn_pool.check(input.vn, input.gn)?;
        check_in(vn_update.in_dims(), input.vn, vn_pool.out_dim(), "VN update")?;
        check_in(gn_from_vn.in_dims(), input.gn, input.vn, "GN message from VN")?;
        check_in(gn_update.in_dims(), input.gn, gn_from_vn.out_dim(), "GN update")?;
        let output = StateDims::new(gn_update.out_dim(), vn_update.out_dim());
        Ok(Self {
            label: label.into(),
            input,
            output,
            vn_pool,
            vn_update,
            gn_from_vn,
            gn_from_gn: None,
            gn_update,
        })
    }

    /// Adds the graph-node channel, whose pooled messages are summed with
    /// the virtual-node message.
    pub fn with_gn_channel(mut self, message: Arc<dyn MessageFn>) -> Result<Self> {
        check_in(message.in_dims(), self.input.gn, self.input.gn, "GN message from GN")?;
        check_dim("GN channel width", self.gn_from_vn.out_dim(), message.out_dim())?;
        self.gn_from_gn = Some(message);
        Ok(self)
    }

    /// Same layer with the graph-node channel removed.
    pub fn simplify(&self) -> Self {
        Self {
            gn_from_gn: None,
            ..self.clone()
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn input_dims(&self) -> StateDims {
        self.input
    }

    pub fn output_dims(&self) -> StateDims {
        self.output
    }

    pub fn is_simplified(&self) -> bool {
        self.gn_from_gn.is_none()
    }

    pub fn describe(&self) -> Value {
        json!({
            "label": self.label,
            "input": self.input,
            "output": self.output,
            "vn_pool": self.vn_pool.describe(),
            "vn_update": self.vn_update.describe(),
            "gn_from_vn": self.gn_from_vn.describe(),
            "gn_from_gn": self.gn_from_gn.as_ref().map(|m| m.describe()),
            "gn_update": self.gn_update.describe(),
        })
    }
}

impl fmt::Debug for MpnnVnLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.describe())
    }
}

/// Graph-node states (one row per node) and the virtual-node state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub graph: Matrix,
    pub vn: Vec<f64>,
}

impl NodeState {
    pub fn new(graph: Matrix, vn: Vec<f64>) -> Self {
        Self { graph, vn }
    }

    pub fn dims(&self) -> StateDims {
        StateDims::new(self.graph.cols(), self.vn.len())
    }

    pub fn max_abs_diff(&self, other: &NodeState) -> f64 {
        let vn = self
            .vn
            .iter()
            .zip(&other.vn)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        self.graph.max_abs_diff(&other.graph).max(vn)
    }
}

/// What one layer did, for tracing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    /// Softmax weights of an attention pool, one per graph node.
    pub attention: Option<Vec<f64>>,
}

fn require_vn(g: &Graph, s: &NodeState) -> Result<()> {
    if !g.has_virtual_node() {
        return Err(usage("MPNN + VN layers need a graph with a virtual node"));
    }
    check_dim("graph nodes vs state rows", g.graph_nodes(), s.graph.rows())
}

/// Applies one layer with a synchronous barrier: every message is computed
/// from the pre-layer state.
pub fn run_layer(g: &Graph, s: &NodeState, layer: &MpnnVnLayer) -> Result<NodeState> {
    require_vn(g, s)?;
    Ok(step(g, s, layer)?.0)
}

fn step(g: &Graph, s: &NodeState, layer: &MpnnVnLayer) -> Result<(NodeState, LayerTrace)> {
    check_dim("GN state width", layer.input.gn, s.graph.cols())?;
    check_dim("VN state width", layer.input.vn, s.vn.len())?;
    let n = s.graph.rows();
    let mut trace = LayerTrace::default();

    let mut pooled = vec![0.0; layer.vn_pool.out_dim()];
    match &layer.vn_pool {
        Pool::Sum(msg) => {
            let mut buf = vec![0.0; msg.out_dim()];
            for x in s.graph.row_iter() {
                msg.eval(&s.vn, x, &mut buf);
                pooled.iter_mut().zip(&buf).for_each(|(p, b)| *p += b);
            }
        }
        Pool::Attention { score, value } => {
            if n > 0 {
                let logits: Vec<f64> = s
                    .graph
                    .row_iter()
                    .enumerate()
                    .map(|(j, x)| score.eval(&s.vn, x, j))
                    .collect();
                let weights = softmax(&logits)?;
                let mut buf = vec![0.0; value.out_dim()];
                for (x, w) in s.graph.row_iter().zip(&weights) {
                    value.eval(&s.vn, x, &mut buf);
                    pooled.iter_mut().zip(&buf).for_each(|(p, b)| *p += w * b);
                }
                trace.attention = Some(weights);
            }
        }
        Pool::Constant(v) => pooled.copy_from_slice(v),
    }
    let mut vn = vec![0.0; layer.output.vn];
    layer.vn_update.eval(&s.vn, &pooled, &mut vn);

    let adjacency = layer.gn_from_gn.as_ref().map(|_| g.adjacency());
    let mut graph = Matrix::zeros(n, layer.output.gn);
    let mut agg = vec![0.0; layer.gn_from_vn.out_dim()];
    let mut buf = vec![0.0; agg.len()];
    for i in 0..n {
        let x = s.graph.row(i);
        layer.gn_from_vn.eval(x, &s.vn, &mut agg);
        if let (Some(msg), Some(adj)) = (&layer.gn_from_gn, &adjacency) {
            let mut nsum = vec![0.0; agg.len()];
            for &j in &adj[i] {
                msg.eval(x, s.graph.row(j), &mut buf);
                nsum.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
            }
            agg.iter_mut().zip(&nsum).for_each(|(a, b)| *a += b);
        }
        layer.gn_update.eval(x, &agg, graph.row_mut(i));
    }
    Ok((NodeState { graph, vn }, trace))
}

/// Maps raw features to the initial state and the final state back to the
/// output features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    /// Features are copied into the first columns and zero-padded to this width.
    pub gn_width: usize,
    pub vn_init: Vec<f64>,
    /// Output columns `[start, start + len)` of the final graph state.
    pub output_start: usize,
    pub output_len: usize,
}

/// Compiled sequence of layers plus its input/output encoding.
#[derive(Clone, Debug)]
pub struct LayerProgram {
    provenance: String,
    feature_dim: usize,
    encoding: Encoding,
    layers: Vec<MpnnVnLayer>,
}

impl LayerProgram {
    pub fn new(
        provenance: impl Into<String>,
        feature_dim: usize,
        encoding: Encoding,
        layers: Vec<MpnnVnLayer>,
    ) -> Result<Self> {
        if feature_dim > encoding.gn_width {
            return Err(usage("feature width exceeds graph-node state width"));
        }
        let mut dims = StateDims::new(encoding.gn_width, encoding.vn_init.len());
        for layer in &layers {
            if layer.input != dims {
                return Err(usage(format!(
                    "layer '{}' expects {:?} but receives {:?}",
                    layer.label, layer.input, dims
                )));
            }
            dims = layer.output;
        }
        if encoding.output_start + encoding.output_len > dims.gn {
            return Err(usage("output slice exceeds final state width"));
        }
        Ok(Self {
            provenance: provenance.into(),
            feature_dim,
            encoding,
            layers,
        })
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn layers(&self) -> &[MpnnVnLayer] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn encoding(&self) -> &Encoding {
        &self.encoding
    }

    /// Widest state the program ever holds.
    pub fn max_width(&self) -> usize {
        let first = StateDims::new(self.encoding.gn_width, self.encoding.vn_init.len()).max();
        self.layers
            .iter()
            .map(|l| l.output.max())
            .fold(first, usize::max)
    }

    pub fn encode(&self, x: &Matrix) -> Result<NodeState> {
        check_dim("program input width", self.feature_dim, x.cols())?;
        let mut graph = Matrix::zeros(x.rows(), self.encoding.gn_width);
        for (i, row) in x.row_iter().enumerate() {
            graph.row_mut(i)[..row.len()].copy_from_slice(row);
        }
        Ok(NodeState::new(graph, self.encoding.vn_init.clone()))
    }

    pub fn decode(&self, s: &NodeState) -> Matrix {
        s.graph
            .column_block(self.encoding.output_start, self.encoding.output_len)
    }

    /// Encodes `x`, runs the program on `g`, decodes the result.
    pub fn apply(&self, g: &Graph, x: &Matrix) -> Result<Matrix> {
        let s = run_program(g, &self.encode(x)?, self)?;
        Ok(self.decode(&s))
    }

    /// Same as [`apply`](Self::apply) on the edgeless graph with a virtual node.
    pub fn apply_vn(&self, x: &Matrix) -> Result<Matrix> {
        self.apply(&star(x.rows()), x)
    }

    pub fn describe(&self) -> Value {
        json!({
            "provenance": self.provenance,
            "feature_dim": self.feature_dim,
            "encoding": self.encoding,
            "layers": self.layers.iter().map(|l| l.describe()).collect::<Vec<_>>(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.describe())?)
    }
}

/// `n` graph nodes without edges, plus the virtual node.
pub fn star(n: usize) -> Graph {
    crate::graphs::add_virtual_node(&Graph::empty(n)).expect("fresh graph has no virtual node")
}

pub fn run_program(g: &Graph, s0: &NodeState, prog: &LayerProgram) -> Result<NodeState> {
    require_vn(g, s0)?;
    let mut s = s0.clone();
    for layer in &prog.layers {
        s = step(g, &s, layer)?.0;
    }
    Ok(s)
}

/// Every intermediate state (index 0 is `s0`) and per-layer trace.
pub fn run_program_traced(
    g: &Graph,
    s0: &NodeState,
    prog: &LayerProgram,
) -> Result<(Vec<NodeState>, Vec<LayerTrace>)> {
    require_vn(g, s0)?;
    let mut states = vec![s0.clone()];
    let mut traces = Vec::with_capacity(prog.len());
    for layer in &prog.layers {
        let (next, t) = step(g, states.last().expect("non-empty"), layer)?;
        states.push(next);
        traces.push(t);
    }
    Ok((states, traces))
}

// Generic evaluators.

/// Constant zero message.
#[derive(Clone, Debug)]
pub struct ZeroMessage(pub usize);

impl MessageFn for ZeroMessage {
    fn in_dims(&self) -> (Option<usize>, Option<usize>) {
        (None, None)
    }
    fn out_dim(&self) -> usize {
        self.0
    }
    fn eval(&self, _: &[f64], _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn describe(&self) -> Value {
        json!({"kind": "zero", "dim": self.0})
    }
}

/// Fixed message.
#[derive(Clone, Debug)]
pub struct ConstantMessage(pub Vec<f64>);

impl MessageFn for ConstantMessage {
    fn in_dims(&self) -> (Option<usize>, Option<usize>) {
        (None, None)
    }
    fn out_dim(&self) -> usize {
        self.0.len()
    }
    fn eval(&self, _: &[f64], _: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
    fn describe(&self) -> Value {
        json!({"kind": "constant", "value": self.0})
    }
}

/// Copies the sender's state.
#[derive(Clone, Debug)]
pub struct CopySender(pub usize);

impl MessageFn for CopySender {
    fn in_dims(&self) -> (Option<usize>, Option<usize>) {
        (None, Some(self.0))
    }
    fn out_dim(&self) -> usize {
        self.0
    }
    fn eval(&self, _: &[f64], sender: &[f64], out: &mut [f64]) {
        out.copy_from_slice(sender);
    }
    fn describe(&self) -> Value {
        json!({"kind": "copy_sender", "dim": self.0})
    }
}

/// Row-vector affine map of the sender, `x_j W + b`.
#[derive(Clone, Debug)]
pub struct AffineMessage {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl AffineMessage {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        check_dim("affine message bias", weight.cols(), bias.len())?;
        Ok(Self { weight, bias })
    }

    pub fn linear(weight: Matrix) -> Self {
        let bias = vec![0.0; weight.cols()];
        Self { weight, bias }
    }
}

impl MessageFn for AffineMessage {
    fn in_dims(&self) -> (Option<usize>, Option<usize>) {
        (None, Some(self.weight.rows()))
    }
    fn out_dim(&self) -> usize {
        self.weight.cols()
    }
    fn eval(&self, _: &[f64], sender: &[f64], out: &mut [f64]) {
        self.weight.vecmul_into(sender, out);
        out.iter_mut().zip(&self.bias).for_each(|(o, b)| *o += b);
    }
    fn describe(&self) -> Value {
        json!({"kind": "affine", "weight": self.weight, "bias": self.bias})
    }
}

/// MLP applied to the sender, or to `[receiver ‖ sender]`.
#[derive(Clone, Debug)]
pub struct MlpMessage {
    pub params: MlpParams,
    pub use_receiver: bool,
}

impl MessageFn for MlpMessage {
    fn in_dims(&self) -> (Option<usize>, Option<usize>) {
        (None, None)
    }
    fn out_dim(&self) -> usize {
        self.params.output_dim()
    }
    fn eval(&self, receiver: &[f64], sender: &[f64], out: &mut [f64]) {
        let y = if self.use_receiver {
            let cat: Vec<f64> = receiver.iter().chain(sender).copied().collect();
            self.params.forward_unchecked(&cat)
        } else {
            self.params.forward_unchecked(sender)
        };
        out.copy_from_slice(&y);
    }
    fn describe(&self) -> Value {
        json!({"kind": "mlp", "use_receiver": self.use_receiver, "params": self.params})
    }
}

/// Keeps the node's own state.
#[derive(Clone, Debug)]
pub struct KeepOwn(pub usize);

impl UpdateFn for KeepOwn {
    fn in_dims(&self) -> (Option<usize>, Option<usize>) {
        (Some(self.0), None)
    }
    fn out_dim(&self) -> usize {
        self.0
    }
    fn eval(&self, own: &[f64], _: &[f64], out: &mut [f64]) {
        out.copy_from_slice(own);
    }
    fn describe(&self) -> Value {
        json!({"kind": "keep_own", "dim": self.0})
    }
}

/// Replaces the state by the aggregate ("copy the second argument").
#[derive(Clone, Debug)]
pub struct TakeAggregate(pub usize);

impl UpdateFn for TakeAggregate {
    fn in_dims(&self) -> (Option<usize>, Option<usize>) {
        (None, Some(self.0))
    }
    fn out_dim(&self) -> usize {
        self.0
    }
    fn eval(&self, _: &[f64], agg: &[f64], out: &mut [f64]) {
        out.copy_from_slice(agg);
    }
    fn describe(&self) -> Value {
        json!({"kind": "take_aggregate", "dim": self.0})
    }
}

/// `ν(own · A + aggregate · B + c)`; `ν` is the identity when absent.
#[derive(Clone, Debug)]
pub struct AffineUpdate {
    pub own: Matrix,
    pub aggregate: Matrix,
    pub bias: Vec<f64>,
    pub activation: Option<Activation>,
}

impl AffineUpdate {
    pub fn new(
        own: Matrix,
        aggregate: Matrix,
        bias: Vec<f64>,
        activation: Option<Activation>,
    ) -> Result<Self> {
        check_dim("affine update widths", own.cols(), aggregate.cols())?;
        check_dim("affine update bias", own.cols(), bias.len())?;
        Ok(Self {
            own,
            aggregate,
            bias,
            activation,
        })
    }
}

impl UpdateFn for AffineUpdate {
    fn in_dims(&self) -> (Option<usize>, Option<usize>) {
        (Some(self.own.rows()), Some(self.aggregate.rows()))
    }
    fn out_dim(&self) -> usize {
        self.own.cols()
    }
    fn eval(&self, own: &[f64], agg: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.own.vecmul_into(own, out);
        self.aggregate.vecmul_into(agg, &mut tmp);
        for ((o, t), b) in out.iter_mut().zip(&tmp).zip(&self.bias) {
            *o += t + b;
            if let Some(act) = self.activation {
                *o = act.apply(*o);
            }
        }
    }
    fn describe(&self) -> Value {
        json!({
            "kind": "affine",
            "own": self.own,
            "aggregate": self.aggregate,
            "bias": self.bias,
            "activation": self.activation,
        })
    }
}

/// MLP on `[own ‖ aggregate]`.
#[derive(Clone, Debug)]
pub struct MlpUpdate {
    pub params: MlpParams,
    pub own_dim: usize,
}

impl UpdateFn for MlpUpdate {
    fn in_dims(&self) -> (Option<usize>, Option<usize>) {
        let own = self.own_dim;
        (Some(own), Some(self.params.input_dim() - own))
    }
    fn out_dim(&self) -> usize {
        self.params.output_dim()
    }
    fn eval(&self, own: &[f64], agg: &[f64], out: &mut [f64]) {
        let cat: Vec<f64> = own.iter().chain(agg).copied().collect();
        out.copy_from_slice(&self.params.forward_unchecked(&cat));
    }
    fn describe(&self) -> Value {
        json!({"kind": "mlp", "own_dim": self.own_dim, "params": self.params})
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::add_virtual_node;
    use crate::numkit::{gaussian_matrix, Rng};

    fn identity_sum_layer(d: usize) -> MpnnVnLayer {
        MpnnVnLayer::simplified(
            "sum",
            StateDims::new(d, d),
            Pool::Sum(Arc::new(CopySender(d))),
            Arc::new(TakeAggregate(d)),
            Arc::new(ZeroMessage(d)),
            Arc::new(KeepOwn(d)),
        )
        .unwrap()
    }

    /// Layer 1: VN = mean. Layer 2: x_i − VN.
    fn mean_subtraction(n: usize, d: usize) -> LayerProgram {
        let mean = MpnnVnLayer::simplified(
            "mean",
            StateDims::new(d, d),
            Pool::Sum(Arc::new(AffineMessage::linear(
                Matrix::identity(d).scale(1.0 / n as f64),
            ))),
            Arc::new(TakeAggregate(d)),
            Arc::new(ZeroMessage(d)),
            Arc::new(KeepOwn(d)),
        )
        .unwrap();
        let subtract = MpnnVnLayer::simplified(
            "subtract",
            StateDims::new(d, d),
            Pool::Constant(vec![0.0; d]),
            Arc::new(TakeAggregate(d)),
            Arc::new(CopySender(d)),
            Arc::new(
                AffineUpdate::new(
                    Matrix::identity(d),
                    Matrix::identity(d).scale(-1.0),
                    vec![0.0; d],
                    None,
                )
                .unwrap(),
            ),
        )
        .unwrap();
        let enc = Encoding {
            gn_width: d,
            vn_init: vec![0.0; d],
            output_start: 0,
            output_len: d,
        };
        LayerProgram::new("mean subtraction", d, enc, vec![mean, subtract]).unwrap()
    }

    #[test]
    fn sum_pooling_star() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 0.5]]).unwrap();
        let s = NodeState::new(x.clone(), vec![0.0, 0.0]);
        let out = run_layer(&star(3), &s, &identity_sum_layer(2)).unwrap();
        assert_eq!(out.vn, vec![4.5, 1.5]);
        assert_eq!(out.graph, x);
    }

    #[test]
    fn zero_messages_leave_state_unchanged() {
        let mut rng = Rng::new(3);
        let x = gaussian_matrix(5, 3, &mut rng).unwrap();
        let s = NodeState::new(x, rng.normal_vec(3));
        let layer = MpnnVnLayer::simplified(
            "noop",
            StateDims::new(3, 3),
            Pool::Sum(Arc::new(ZeroMessage(3))),
            Arc::new(KeepOwn(3)),
            Arc::new(ZeroMessage(3)),
            Arc::new(KeepOwn(3)),
        )
        .unwrap();
        assert_eq!(run_layer(&star(5), &s, &layer).unwrap(), s);
    }

    #[test]
    fn mean_subtraction_matches_direct() {
        let mut rng = Rng::new(4);
        let x = gaussian_matrix(7, 3, &mut rng).unwrap();
        let out = mean_subtraction(7, 3).apply_vn(&x).unwrap();
        for c in 0..3 {
            let mean: f64 = (0..7).map(|i| x.get(i, c)).sum::<f64>() / 7.0;
            for i in 0..7 {
                assert!((out.get(i, c) - (x.get(i, c) - mean)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn empty_program_is_identity() {
        let enc = Encoding {
            gn_width: 2,
            vn_init: vec![1.0],
            output_start: 0,
            output_len: 2,
        };
        let prog = LayerProgram::new("empty", 2, enc, vec![]).unwrap();
        let s = NodeState::new(Matrix::filled(3, 2, 0.5), vec![1.0]);
        assert_eq!(run_program(&star(3), &s, &prog).unwrap(), s);
    }

    #[test]
    fn program_is_layer_composition() {
        let prog = mean_subtraction(4, 2);
        let x = gaussian_matrix(4, 2, &mut Rng::new(5)).unwrap();
        let g = star(4);
        let s0 = prog.encode(&x).unwrap();
        let manual = prog
            .layers()
            .iter()
            .try_fold(s0.clone(), |s, l| run_layer(&g, &s, l))
            .unwrap();
        assert_eq!(run_program(&g, &s0, &prog).unwrap(), manual);
        let (states, traces) = run_program_traced(&g, &s0, &prog).unwrap();
        assert_eq!(states.len(), 3);
        assert_eq!(traces.len(), 2);
        assert_eq!(states[2], manual);
    }

    #[test]
    fn dimension_errors() {
        let layer = identity_sum_layer(2);
        let s = NodeState::new(Matrix::zeros(3, 3), vec![0.0; 2]);
        assert!(run_layer(&star(3), &s, &layer).is_err());
        let s = NodeState::new(Matrix::zeros(3, 2), vec![0.0; 2]);
        assert!(run_layer(&Graph::empty(3), &s, &layer).is_err());
        assert!(run_layer(&star(4), &s, &layer).is_err());
        assert!(MpnnVnLayer::simplified(
            "bad",
            StateDims::new(2, 2),
            Pool::Sum(Arc::new(CopySender(3))),
            Arc::new(TakeAggregate(3)),
            Arc::new(ZeroMessage(2)),
            Arc::new(KeepOwn(2)),
        )
        .is_err());
        let enc = Encoding {
            gn_width: 3,
            vn_init: vec![0.0; 2],
            output_start: 0,
            output_len: 2,
        };
        assert!(LayerProgram::new("bad", 2, enc, vec![layer]).is_err());
    }

    #[test]
    fn gn_channel_uses_neighbours() {
        let g = add_virtual_node(&Graph::path(3)).unwrap();
        let layer = MpnnVnLayer::simplified(
            "nbr",
            StateDims::new(1, 1),
            Pool::Constant(vec![0.0]),
            Arc::new(TakeAggregate(1)),
            Arc::new(ZeroMessage(1)),
            Arc::new(TakeAggregate(1)),
        )
        .unwrap()
        .with_gn_channel(Arc::new(CopySender(1)))
        .unwrap();
        let s = NodeState::new(Matrix::from_rows(&[vec![1.0], vec![10.0], vec![100.0]]).unwrap(), vec![0.0]);
        let out = run_layer(&g, &s, &layer).unwrap();
        assert_eq!(out.graph.values(), &[10.0, 101.0, 10.0]);
    }

    #[test]
    fn nulled_gn_channel_equals_simplified() {
        let mut rng = Rng::new(6);
        let g = add_virtual_node(&Graph::path(6)).unwrap();
        let d = 3;
        let upd = Arc::new(
            AffineUpdate::new(
                gaussian_matrix(d, d, &mut rng).unwrap(),
                gaussian_matrix(d, d, &mut rng).unwrap(),
                rng.normal_vec(d),
                Some(Activation::Relu),
            )
            .unwrap(),
        );
        let simple = MpnnVnLayer::simplified(
            "s",
            StateDims::new(d, d),
            Pool::Sum(Arc::new(CopySender(d))),
            Arc::new(TakeAggregate(d)),
            Arc::new(CopySender(d)),
            upd,
        )
        .unwrap();
        let hetero = simple
            .clone()
            .with_gn_channel(Arc::new(ZeroMessage(d)))
            .unwrap();
        let s = NodeState::new(gaussian_matrix(6, d, &mut rng).unwrap(), rng.normal_vec(d));
        assert_eq!(run_layer(&g, &s, &simple).unwrap(), run_layer(&g, &s, &hetero).unwrap());
        assert_eq!(
            run_layer(&g, &s, &hetero.simplify()).unwrap(),
            run_layer(&g, &s, &simple).unwrap()
        );
    }

    #[test]
    fn program_json_has_layers() {
        let v: Value = serde_json::from_str(&mean_subtraction(3, 2).to_json().unwrap()).unwrap();
        assert_eq!(v["provenance"], "mean subtraction");
        assert_eq!(v["layers"].as_array().unwrap().len(), 2);
        assert_eq!(v["layers"][0]["vn_pool"]["kind"], "sum");
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use crate::numkit::{gaussian_matrix, Rng};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn feature_only_programs_commute_with_permutations(seed in 0u64..100_000, n in 1usize..10) {
            let mut rng = Rng::new(seed);
            let d = 3;
            let layer = MpnnVnLayer::simplified(
                "mix",
                StateDims::new(d, d),
                Pool::Sum(Arc::new(AffineMessage::linear(gaussian_matrix(d, d, &mut rng).unwrap()))),
                Arc::new(TakeAggregate(d)),
                Arc::new(CopySender(d)),
                Arc::new(AffineUpdate::new(
                    gaussian_matrix(d, d, &mut rng).unwrap(),
                    gaussian_matrix(d, d, &mut rng).unwrap().scale(0.1),
                    rng.normal_vec(d),
                    Some(Activation::Relu),
                ).unwrap()),
            ).unwrap();
            let enc = Encoding { gn_width: d, vn_init: vec![0.0; d], output_start: 0, output_len: d };
            let prog = LayerProgram::new("mix", d, enc, vec![layer.clone(), layer]).unwrap();
            let x = gaussian_matrix(n, d, &mut rng).unwrap();
            let perm = rng.permutation(n);
            let a = prog.apply_vn(&x).unwrap().permute_rows(&perm);
            let b = prog.apply_vn(&x.permute_rows(&perm)).unwrap();
            prop_assert!(a.max_abs_diff(&b) <= 1e-12);
        }
    }
}
