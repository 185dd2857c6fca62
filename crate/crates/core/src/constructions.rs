//! Compilers from attention layers to MPNN + VN layer programs, and error
//! reports against the layers they simulate.
//!
//! Two constructions:
//!
//! * kernelised (Performer / Linear Transformer) attention in two layers: the
//!   virtual node sums `[φ(k_j), flatten(φ(k_j) ⊗ v_j)]`, then every node
//!   reads its output back from that state;
//! * full softmax attention in `n + 2` layers: the virtual node selects one
//!   node per layer and every node accumulates the unnormalised attention
//!   sum in state `[x, tmp, ps]`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::attention::{
    approx_attention, check_assumptions, self_attention, AttnWeights, FeatureMap, Gatv2Score,
};
use crate::error::{check_dim, usage, Result};
use crate::mlp::{fit, tabulate, Activation, FitBudget, FitReport, MlpParams, MlpSpec, Sample};
use crate::mpnnvn::{
    run_program_traced, star, AffineUpdate, CopySender, Encoding, KeepOwn, LayerProgram,
    MessageFn, MpnnVnLayer, Pool, ScoreFn, StateDims, TakeAggregate, UpdateFn, ZeroMessage,
};
use crate::numkit::{dist, dot, norm, uniform_ball_rows, Matrix, Rng};
use crate::separability::{SeparabilityCertificate, MARGIN_BAND};

// Kernelised attention.

/// `[φ(x W_K), flatten(φ(x W_K) ⊗ x W_V)]`.
struct KeyValueMessage {
    w: AttnWeights,
    fm: FeatureMap,
}

impl MessageFn for KeyValueMessage {
    fn in_dims(&self) -> (Option<usize>, Option<usize>) {
        (None, Some(self.w.dim()))
    }
    fn out_dim(&self) -> usize {
        (self.w.dim() + 1) * self.fm.output_dim()
    }
    fn eval(&self, _: &[f64], sender: &[f64], out: &mut [f64]) {
        let m = self.fm.output_dim();
        let pk = self.fm.apply(&self.w.key(sender));
        let v = self.w.value(sender);
        out[..m].copy_from_slice(&pk);
        for (l, p) in pk.iter().enumerate() {
            let block = &mut out[m + l * v.len()..m + (l + 1) * v.len()];
            block.iter_mut().zip(&v).for_each(|(o, vv)| *o = p * vv);
        }
    }
    fn describe(&self) -> Value {
        json!({"kind": "kernel_key_value", "weights": self.w, "feature_map": self.fm})
    }
}

/// `(φ(q)ᵀ S) / (φ(q)ᵀ z)` with `[z, S]` read from the virtual node.
struct KernelReadout {
    w: AttnWeights,
    fm: FeatureMap,
}

impl UpdateFn for KernelReadout {
    fn in_dims(&self) -> (Option<usize>, Option<usize>) {
        let d = self.w.dim();
        (Some(d), Some((d + 1) * self.fm.output_dim()))
    }
    fn out_dim(&self) -> usize {
        self.w.dim()
    }
    fn eval(&self, own: &[f64], agg: &[f64], out: &mut [f64]) {
        let m = self.fm.output_dim();
        let d = out.len();
        let pq = self.fm.apply(&self.w.query(own));
        let denom = dot(&pq, &agg[..m]);
        out.fill(0.0);
        for (l, p) in pq.iter().enumerate() {
            let row = &agg[m + l * d..m + (l + 1) * d];
            out.iter_mut().zip(row).for_each(|(o, s)| *o += p * s);
        }
        out.iter_mut().for_each(|o| *o /= denom);
    }
    fn describe(&self) -> Value {
        json!({"kind": "kernel_readout", "weights": self.w, "feature_map": self.fm})
    }
}

/// An MLP fitted on a box domain, with inputs rescaled to `[-1, 1]` and the
/// output multiplied by `out_scale`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScaledNet {
    pub params: MlpParams,
    pub in_lo: Vec<f64>,
    pub in_hi: Vec<f64>,
    pub out_scale: f64,
}

impl ScaledNet {
    fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.in_lo.iter().zip(&self.in_hi))
            .map(|(v, (lo, hi))| 2.0 * (v - lo) / (hi - lo) - 1.0)
            .collect()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.params.forward_unchecked(&self.normalize(x));
        y.iter_mut().for_each(|v| *v *= self.out_scale);
        y
    }

    pub fn sup_error(&self, samples: &[Sample]) -> f64 {
        samples
            .iter()
            .map(|(x, y)| {
                self.eval(x)
                    .iter()
                    .zip(y)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .fold(0.0, f64::max)
    }
}

/// `ab ≈ A B (s(a/A + b/B) − s(a/A − b/B)) / 4` with a fitted square net
/// `s` on `[-2, 2]`.
#[derive(Clone, Debug)]
struct Multiplier {
    square: Arc<ScaledNet>,
}

impl Multiplier {
    fn mul(&self, a: f64, b: f64, sa: f64, sb: f64) -> f64 {
        let (u, v) = (a / sa, b / sb);
        let plus = self.square.eval(&[u + v])[0];
        let minus = self.square.eval(&[u - v])[0];
        sa * sb * (plus - minus) / 4.0
    }
}

/// Magnitude bounds on the intermediate quantities over the declared domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBounds {
    /// Largest feature-map entry.
    pub feature: f64,
    /// Largest value-vector entry.
    pub value: f64,
    pub denom_lo: f64,
    pub denom_hi: f64,
}

impl KernelBounds {
    pub fn new(fm: &FeatureMap, n: usize, c1: f64, c2: f64) -> Self {
        let r = c1 * c2;
        let (feature, pair_hi) = match fm {
            FeatureMap::Performer { projection } => {
                let m = projection.rows() as f64;
                let max_w = projection.row_iter().map(norm).fold(0.0, f64::max);
                let hi: f64 = projection
                    .row_iter()
                    .map(|w| (2.0 * norm(w) * r).exp())
                    .sum::<f64>()
                    / m;
                ((max_w * r).exp() / m.sqrt(), hi)
            }
            FeatureMap::LinearTransformer { dim } => (1.0 + r, *dim as f64 * (1.0 + r).powi(2)),
        };
        Self {
            feature,
            value: r,
            denom_lo: n as f64 * fm.pair_lower_bound(r),
            denom_hi: n as f64 * pair_hi,
        }
    }
}

struct MlpKeyValue {
    key: Arc<ScaledNet>,
    w_v: Matrix,
    mul: Multiplier,
    bounds: KernelBounds,
}

impl MessageFn for MlpKeyValue {
    fn in_dims(&self) -> (Option<usize>, Option<usize>) {
        (None, Some(self.w_v.rows()))
    }
    fn out_dim(&self) -> usize {
        (self.w_v.cols() + 1) * self.key.params.output_dim()
    }
    fn eval(&self, _: &[f64], sender: &[f64], out: &mut [f64]) {
        let pk = self.key.eval(sender);
        let v = self.w_v.vecmul(sender).expect("checked at compile time");
        let m = pk.len();
        out[..m].copy_from_slice(&pk);
        let b = &self.bounds;
        for (l, p) in pk.iter().enumerate() {
            for (c, vv) in v.iter().enumerate() {
                out[m + l * v.len() + c] = self.mul.mul(*p, *vv, b.feature, b.value);
            }
        }
    }
    fn describe(&self) -> Value {
        json!({
            "kind": "mlp_kernel_key_value",
            "key_net": *self.key,
            "value_weights": self.w_v,
            "square_net": *self.mul.square,
            "bounds": self.bounds,
        })
    }
}

struct MlpReadout {
    query: Arc<ScaledNet>,
    reciprocal: Arc<ScaledNet>,
    mul: Multiplier,
    bounds: KernelBounds,
    n: usize,
    d: usize,
}

impl UpdateFn for MlpReadout {
    fn in_dims(&self) -> (Option<usize>, Option<usize>) {
        let m = self.query.params.output_dim();
        (Some(self.d), Some((self.d + 1) * m))
    }
    fn out_dim(&self) -> usize {
        self.d
    }
    fn eval(&self, own: &[f64], agg: &[f64], out: &mut [f64]) {
        let b = &self.bounds;
        let n = self.n as f64;
        let pq = self.query.eval(own);
        let m = pq.len();
        let mut denom = 0.0;
        for (l, p) in pq.iter().enumerate() {
            denom += self.mul.mul(*p, agg[l], b.feature, n * b.feature);
        }
        let inv = self.reciprocal.eval(&[denom])[0];
        for (c, o) in out.iter_mut().enumerate() {
            let mut numer = 0.0;
            for (l, p) in pq.iter().enumerate() {
                let s = agg[m + l * self.d + c];
                numer += self.mul.mul(*p, s, b.feature, n * b.feature * b.value);
            }
            *o = self
                .mul
                .mul(numer, inv, b.denom_hi * b.value, 1.0 / b.denom_lo);
        }
    }
    fn describe(&self) -> Value {
        json!({
            "kind": "mlp_kernel_readout",
            "query_net": *self.query,
            "reciprocal_net": *self.reciprocal,
            "square_net": *self.mul.square,
            "bounds": self.bounds,
            "nodes": self.n,
        })
    }
}

/// Fitting settings for the MLP mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModeConfig {
    /// Node count the program is compiled for (fixes the denominator range).
    pub nodes: usize,
    /// Inputs satisfy `‖x_i‖ < c1`.
    pub c1: f64,
    /// Weight spectral norms are below `c2`.
    pub c2: f64,
    pub hidden: usize,
    pub activation: Activation,
    pub train_points: usize,
    pub budget: FitBudget,
    /// Sup-error each fitted unit should reach on its held-out set.
    pub unit_target: f64,
    pub seed: u64,
}

impl Default for MlpModeConfig {
    fn default() -> Self {
        Self {
            nodes: 4,
            c1: 1.0,
            c2: 0.35,
            hidden: 32,
            activation: Activation::Elu,
            train_points: 384,
            budget: FitBudget {
                max_epochs: 3000,
                learning_rate: 3e-3,
                final_lr_fraction: 1e-3,
                batch_size: 32,
                target_sup_error: None,
                eval_every: 50,
            },
            unit_target: 5e-3,
            seed: 2024,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SimMode {
    Exact,
    Mlp(MlpModeConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformerSimConfig {
    pub feature_map: FeatureMap,
    pub mode: SimMode,
}

impl PerformerSimConfig {
    pub fn exact(feature_map: FeatureMap) -> Self {
        Self {
            feature_map,
            mode: SimMode::Exact,
        }
    }
}

/// Held-out accuracy of one fitted unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitFit {
    pub unit: String,
    pub sup_error: f64,
    pub target: f64,
    pub epochs: usize,
    pub final_loss: f64,
}

#[derive(Clone, Debug)]
pub struct CompiledProgram {
    pub program: LayerProgram,
    pub fits: Vec<UnitFit>,
    pub warnings: Vec<String>,
}

fn fit_unit(
    name: &str,
    f: impl Fn(&[f64]) -> Vec<f64>,
    train_x: Vec<Vec<f64>>,
    hold_x: Vec<Vec<f64>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    out_scale: f64,
    cfg: &MlpModeConfig,
    rng: &mut Rng,
) -> Result<(ScaledNet, UnitFit)> {
    let out_dim = f(&train_x[0]).len();
    let mut net = ScaledNet {
        params: MlpParams::init(
            &MlpSpec::new(vec![lo.len(), cfg.hidden, cfg.hidden, out_dim], cfg.activation)?,
            rng,
        ),
        in_lo: lo,
        in_hi: hi,
        out_scale,
    };
    let scaled = |xs: &[Vec<f64>]| -> Vec<Sample> {
        xs.iter()
            .map(|x| {
                let y: Vec<f64> = f(x).iter().map(|v| v / out_scale).collect();
                (net.normalize(x), y)
            })
            .collect()
    };
    let train = scaled(&train_x);
    let hold = scaled(&hold_x);
    let spec = MlpSpec::new(net.params.widths(), cfg.activation)?;
    let (params, report): (MlpParams, FitReport) = fit(&spec, &train, &hold, &cfg.budget, rng)?;
    net.params = params;
    let raw = tabulate(hold_x, |x| f(x));
    let unit = UnitFit {
        unit: name.to_string(),
        sup_error: net.sup_error(&raw),
        target: cfg.unit_target,
        epochs: report.epochs,
        final_loss: report.loss_curve.last().copied().unwrap_or(f64::NAN),
    };
    Ok((net, unit))
}

fn line(lo: f64, hi: f64, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| vec![lo + (hi - lo) * i as f64 / (count - 1) as f64])
        .collect()
}

fn ball_points(d: usize, radius: f64, count: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    uniform_ball_rows(count, d, radius, rng).to_rows()
}

/// Two-layer program computing kernelised attention.
///
/// Layer 1: the virtual node (initialised to all ones) sums
/// `[φ(k_j), flatten(φ(k_j) ⊗ v_j)]` over all nodes; graph nodes keep their
/// state. Layer 2: the virtual node keeps its state and every node computes
/// `(φ(q_i)ᵀ S) / (φ(q_i)ᵀ z)` from it.
pub fn compile_performer_vn(w: &AttnWeights, cfg: &PerformerSimConfig) -> Result<CompiledProgram> {
    let fm = &cfg.feature_map;
    check_dim("feature map input vs W_Q columns", w.proj_dim(), fm.input_dim())?;
    let d = w.dim();
    let vn_dim = (d + 1) * fm.output_dim();
    let mut fits = Vec::new();
    let mut warnings = Vec::new();

    let (message, readout): (Arc<dyn MessageFn>, Arc<dyn UpdateFn>) = match &cfg.mode {
        SimMode::Exact => (
            Arc::new(KeyValueMessage {
                w: w.clone(),
                fm: fm.clone(),
            }),
            Arc::new(KernelReadout {
                w: w.clone(),
                fm: fm.clone(),
            }),
        ),
        SimMode::Mlp(mc) => {
            let probe = Matrix::zeros(1, d);
            let report = check_assumptions(&probe, w, mc.c1, mc.c2);
            if !report.as3_ok {
                return Err(usage(format!(
                    "weight spectral norms {:?} are not below c2 = {}",
                    report.spectral_norms, mc.c2
                )));
            }
            let (key, query, square, reciprocal, bounds, unit_fits) = fit_kernel_units(w, fm, mc)?;
            for u in &unit_fits {
                if u.sup_error > u.target {
                    warnings.push(format!(
                        "{} reached sup-error {:.3e}, above its target {:.1e}",
                        u.unit, u.sup_error, u.target
                    ));
                }
            }
            fits = unit_fits;
            let mul = Multiplier { square };
            (
                Arc::new(MlpKeyValue {
                    key,
                    w_v: w.w_v.clone(),
                    mul: mul.clone(),
                    bounds,
                }),
                Arc::new(MlpReadout {
                    query,
                    reciprocal,
                    mul,
                    bounds,
                    n: mc.nodes,
                    d,
                }),
            )
        }
    };

    let aggregate = MpnnVnLayer::simplified(
        "kernel.aggregate",
        StateDims::new(d, vn_dim),
        Pool::Sum(message),
        Arc::new(TakeAggregate(vn_dim)),
        Arc::new(ZeroMessage(1)),
        Arc::new(KeepOwn(d)),
    )?;
    let read = MpnnVnLayer::simplified(
        "kernel.readout",
        StateDims::new(d, vn_dim),
        Pool::Constant(vec![0.0]),
        Arc::new(KeepOwn(vn_dim)),
        Arc::new(CopySender(vn_dim)),
        readout,
    )?;
    let encoding = Encoding {
        gn_width: d,
        vn_init: vec![1.0; vn_dim],
        output_start: 0,
        output_len: d,
    };
    let provenance = match (&cfg.mode, fm) {
        (SimMode::Exact, FeatureMap::Performer { .. }) => "performer attention (exact)",
        (SimMode::Exact, FeatureMap::LinearTransformer { .. }) => {
            "linear-transformer attention (exact)"
        }
        (SimMode::Mlp(_), FeatureMap::Performer { .. }) => "performer attention (mlp)",
        (SimMode::Mlp(_), FeatureMap::LinearTransformer { .. }) => {
            "linear-transformer attention (mlp)"
        }
    };
    Ok(CompiledProgram {
        program: LayerProgram::new(provenance, d, encoding, vec![aggregate, read])?,
        fits,
        warnings,
    })
}

type KernelUnits = (
    Arc<ScaledNet>,
    Arc<ScaledNet>,
    Arc<ScaledNet>,
    Arc<ScaledNet>,
    KernelBounds,
    Vec<UnitFit>,
);

fn fit_kernel_units(w: &AttnWeights, fm: &FeatureMap, mc: &MlpModeConfig) -> Result<KernelUnits> {
    let d = w.dim();
    let bounds = KernelBounds::new(fm, mc.nodes, mc.c1, mc.c2);
    let mut rng = Rng::derive(mc.seed, 0xfeed);
    let cube = |r: f64| (vec![-r; d], vec![r; d]);

    let (lo, hi) = cube(mc.c1);
    let train = ball_points(d, mc.c1, mc.train_points, &mut rng);
    let hold = ball_points(d, mc.c1, mc.train_points / 2, &mut rng);
    let (key, kf) = fit_unit(
        "key feature net",
        |x| fm.apply(&w.key(x)),
        train.clone(),
        hold.clone(),
        lo.clone(),
        hi.clone(),
        bounds.feature,
        mc,
        &mut rng,
    )?;
    let (query, qf) = fit_unit(
        "query feature net",
        |x| fm.apply(&w.query(x)),
        train,
        hold,
        lo,
        hi,
        bounds.feature,
        mc,
        &mut rng,
    )?;
    let (square, sf) = fit_unit(
        "square net",
        |x| vec![x[0] * x[0]],
        line(-2.0, 2.0, mc.train_points),
        (0..mc.train_points / 2)
            .map(|_| vec![rng.uniform(-2.0, 2.0)])
            .collect(),
        vec![-2.0],
        vec![2.0],
        4.0,
        mc,
        &mut rng,
    )?;
    let (dl, dh) = (bounds.denom_lo, bounds.denom_hi);
    let mut rtrain = line(dl, dh, mc.train_points / 2);
    rtrain.extend(
        line(dl.ln(), dh.ln(), mc.train_points / 2)
            .into_iter()
            .map(|v| vec![v[0].exp()]),
    );
    let rhold: Vec<Vec<f64>> = (0..mc.train_points / 2)
        .map(|_| vec![rng.uniform(dl.ln(), dh.ln()).exp()])
        .collect();
    let (reciprocal, rf) = fit_unit(
        "reciprocal net",
        |x| vec![1.0 / x[0]],
        rtrain,
        rhold,
        vec![dl],
        vec![dh],
        1.0 / dl,
        mc,
        &mut rng,
    )?;
    Ok((
        Arc::new(key),
        Arc::new(query),
        Arc::new(square),
        Arc::new(reciprocal),
        bounds,
        vec![kf, qf, sf, rf],
    ))
}

// Full attention.

/// Selects node `target` with weight exactly one.
struct OracleScore {
    target: usize,
}

impl ScoreFn for OracleScore {
    fn in_dims(&self) -> (Option<usize>, Option<usize>) {
        (None, None)
    }
    fn eval(&self, _: &[f64], _: &[f64], j: usize) -> f64 {
        if j == self.target {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }
    fn describe(&self) -> Value {
        json!({"kind": "oracle", "target": self.target})
    }
}

/// `c · ⟨z_j[0..d], z_vn[d..2d]⟩`.
struct BilinearScore {
    d: usize,
    c: f64,
}

impl ScoreFn for BilinearScore {
    fn in_dims(&self) -> (Option<usize>, Option<usize>) {
        (Some(2 * self.d + 1), Some(2 * self.d + 1))
    }
    fn eval(&self, vn: &[f64], z: &[f64], _: usize) -> f64 {
        self.c * dot(&z[..self.d], &vn[self.d..2 * self.d])
    }
    fn describe(&self) -> Value {
        json!({"kind": "bilinear", "dim": self.d, "amplification": self.c})
    }
}

struct Gatv2SelectScore {
    d: usize,
    c: f64,
    score: Gatv2Score,
}

impl ScoreFn for Gatv2SelectScore {
    fn in_dims(&self) -> (Option<usize>, Option<usize>) {
        (Some(2 * self.d + 1), Some(2 * self.d + 1))
    }
    fn eval(&self, vn: &[f64], z: &[f64], _: usize) -> f64 {
        self.c * self.score.eval(&vn[..self.d], &z[..self.d])
    }
    fn describe(&self) -> Value {
        json!({"kind": "gatv2", "amplification": self.c, "score": self.score})
    }
}

/// `[y_{0:d}, next, 0]` with `next` the selector for the following layer.
struct RollSelector {
    d: usize,
    next: Vec<f64>,
}

impl UpdateFn for RollSelector {
    fn in_dims(&self) -> (Option<usize>, Option<usize>) {
        (Some(2 * self.d + 1), Some(2 * self.d + 1))
    }
    fn out_dim(&self) -> usize {
        2 * self.d + 1
    }
    fn eval(&self, _: &[f64], y: &[f64], out: &mut [f64]) {
        let d = self.d;
        out[..d].copy_from_slice(&y[..d]);
        out[d..2 * d].copy_from_slice(&self.next);
        out[2 * d] = 0.0;
    }
    fn describe(&self) -> Value {
        json!({"kind": "roll_selector", "next": self.next})
    }
}

/// `[x, tmp + e^{α'(x, y)} y W_V, ps + e^{α'(x, y)}]` with `y = y_{0:d}`.
struct Accumulate {
    w: AttnWeights,
}

impl UpdateFn for Accumulate {
    fn in_dims(&self) -> (Option<usize>, Option<usize>) {
        let width = 2 * self.w.dim() + 1;
        (Some(width), Some(width))
    }
    fn out_dim(&self) -> usize {
        2 * self.w.dim() + 1
    }
    fn eval(&self, own: &[f64], y: &[f64], out: &mut [f64]) {
        let d = self.w.dim();
        let (x, y) = (&own[..d], &y[..d]);
        let e = self.w.score(x, y).exp();
        let v = self.w.value(y);
        out[..d].copy_from_slice(x);
        for c in 0..d {
            out[d + c] = own[d + c] + e * v[c];
        }
        out[2 * d] = own[2 * d] + e;
    }
    fn describe(&self) -> Value {
        json!({"kind": "accumulate", "weights": self.w})
    }
}

/// `[tmp / ps, 0, 0]`, or `[x, tmp / ps, 0]` when `keep_input`.
struct Normalize {
    d: usize,
    keep_input: bool,
}

impl UpdateFn for Normalize {
    fn in_dims(&self) -> (Option<usize>, Option<usize>) {
        (Some(2 * self.d + 1), None)
    }
    fn out_dim(&self) -> usize {
        2 * self.d + 1
    }
    fn eval(&self, own: &[f64], _: &[f64], out: &mut [f64]) {
        let d = self.d;
        let ps = own[2 * d];
        out.fill(0.0);
        let (dst, keep) = if self.keep_input { (d, true) } else { (0, false) };
        if keep {
            out[..d].copy_from_slice(&own[..d]);
        }
        for c in 0..d {
            out[dst + c] = own[d + c] / ps;
        }
    }
    fn describe(&self) -> Value {
        json!({"kind": "normalize", "keep_input": self.keep_input})
    }
}

/// One amplified GATv2 score per target node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gatv2Selection {
    pub score: Gatv2Score,
    pub amplification: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selection {
    /// Node `k` is selected exactly at layer `k`.
    Oracle,
    /// `c · x_j · v'_k`, directions and `c` from the certificate.
    Softmax(SeparabilityCertificate),
    /// One trained selector per node.
    Gatv2(Vec<Gatv2Selection>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepSimConfig {
    pub n: usize,
    pub selection: Selection,
    /// Finish with `[x, out, 0]` followed by a linear layer moving `out` to
    /// the front, instead of normalising straight into the first channels.
    pub extra_linear: bool,
}

impl DeepSimConfig {
    pub fn oracle(n: usize) -> Self {
        Self {
            n,
            selection: Selection::Oracle,
            extra_linear: false,
        }
    }

    pub fn softmax(cert: SeparabilityCertificate) -> Self {
        Self {
            n: cert.len(),
            selection: Selection::Softmax(cert),
            extra_linear: false,
        }
    }
}

/// `n + 2` layer program (one more with `extra_linear`) over states of width
/// `2d + 1`: graph nodes `[x_i, tmp, ps]`, virtual node `[x̃_k, v_{k+1}, 0]`.
///
/// Layers `1..=n` select node `k` into the virtual node. Graph nodes keep
/// their state at layer 1, accumulate the selection made one layer earlier
/// at layers `2..=n+1`, and normalise at layer `n + 2`.
pub fn compile_deep_vn(w: &AttnWeights, cfg: &DeepSimConfig) -> Result<LayerProgram> {
    let n = cfg.n;
    let d = w.dim();
    if n == 0 {
        return Err(usage("deep construction needs n ≥ 1"));
    }
    if w.proj_dim() == 0 {
        return Err(usage("attention projection width must be positive"));
    }
    let width = 2 * d + 1;
    let dims = StateDims::new(width, width);
    let selector = |k: usize| -> Vec<f64> {
        match &cfg.selection {
            Selection::Softmax(cert) if k < n => cert.direction(k).to_vec(),
            _ => vec![0.0; d],
        }
    };
    match &cfg.selection {
        Selection::Oracle => {}
        Selection::Softmax(cert) => {
            check_dim("certificate nodes", n, cert.len())?;
            check_dim("certificate feature width", d, cert.directions.cols())?;
            if cert.delta <= MARGIN_BAND {
                return Err(usage(format!(
                    "certificate margin {:.3e} is inside the {MARGIN_BAND:.0e} band",
                    cert.delta
                )));
            }
        }
        Selection::Gatv2(sel) => {
            check_dim("GATv2 selectors", n, sel.len())?;
            for s in sel {
                check_dim("GATv2 selector width", d, s.score.input_dim())?;
            }
        }
    }

    let copy: Arc<dyn MessageFn> = Arc::new(CopySender(width));
    let ones = vec![1.0; width];
    let accumulate: Arc<dyn UpdateFn> = Arc::new(Accumulate { w: w.clone() });
    let mut layers = Vec::with_capacity(n + 3);
    for k in 1..=n {
        let score: Arc<dyn ScoreFn> = match &cfg.selection {
            Selection::Oracle => Arc::new(OracleScore { target: k - 1 }),
            Selection::Softmax(cert) => Arc::new(BilinearScore {
                d,
                c: cert.amplification,
            }),
            Selection::Gatv2(sel) => Arc::new(Gatv2SelectScore {
                d,
                c: sel[k - 1].amplification,
                score: sel[k - 1].score.clone(),
            }),
        };
        let gn_update: Arc<dyn UpdateFn> = if k == 1 {
            Arc::new(KeepOwn(width))
        } else {
            accumulate.clone()
        };
        layers.push(MpnnVnLayer::simplified(
            format!("deep.select[{k}]"),
            dims,
            Pool::Attention {
                score,
                value: copy.clone(),
            },
            Arc::new(RollSelector { d, next: selector(k) }),
            copy.clone(),
            gn_update,
        )?);
    }
    layers.push(MpnnVnLayer::simplified(
        format!("deep.accumulate[{}]", n + 1),
        dims,
        Pool::Constant(ones.clone()),
        Arc::new(TakeAggregate(width)),
        copy.clone(),
        accumulate,
    )?);
    layers.push(MpnnVnLayer::simplified(
        format!("deep.normalize[{}]", n + 2),
        dims,
        Pool::Constant(ones.clone()),
        Arc::new(TakeAggregate(width)),
        copy,
        Arc::new(Normalize {
            d,
            keep_input: cfg.extra_linear,
        }),
    )?);
    if cfg.extra_linear {
        let mut shift = Matrix::zeros(width, width);
        for c in 0..d {
            shift.set(d + c, c, 1.0);
        }
        layers.push(MpnnVnLayer::simplified(
            format!("deep.linear[{}]", n + 3),
            dims,
            Pool::Constant(ones),
            Arc::new(TakeAggregate(width)),
            Arc::new(ZeroMessage(1)),
            Arc::new(AffineUpdate::new(
                shift,
                Matrix::zeros(1, width),
                vec![0.0; width],
                None,
            )?),
        )?);
    }
    let mut vn_init = vec![0.0; width];
    vn_init[d..2 * d].copy_from_slice(&selector(0));
    let encoding = Encoding {
        gn_width: width,
        vn_init,
        output_start: 0,
        output_len: d,
    };
    let provenance = match cfg.selection {
        Selection::Oracle => "full attention by sequential selection (oracle)",
        Selection::Softmax(_) => "full attention by sequential selection (softmax)",
        Selection::Gatv2(_) => "full attention by sequential selection (gatv2)",
    };
    LayerProgram::new(provenance, d, encoding, layers)
}

// Reports.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Reference {
    Full,
    Performer { feature_map: FeatureMap },
    LinearTransformer,
}

impl Reference {
    pub fn name(&self) -> &'static str {
        match self {
            Reference::Full => "full",
            Reference::Performer { .. } => "performer",
            Reference::LinearTransformer => "linear-transformer",
        }
    }

    pub fn evaluate(&self, x: &Matrix, w: &AttnWeights) -> Result<Matrix> {
        match self {
            Reference::Full => self_attention(x, w),
            Reference::Performer { feature_map } => approx_attention(x, w, feature_map),
            Reference::LinearTransformer => {
                approx_attention(x, w, &FeatureMap::linear_transformer(w.proj_dim()))
            }
        }
    }
}

/// How well one attention-pool layer selected its target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionDiagnostic {
    pub layer: usize,
    pub target: usize,
    pub weight: f64,
    /// Total weight on the other nodes, `1 − weight` without cancellation.
    pub leak: f64,
    /// `‖x̃_k − x_k‖` read from the virtual node after the layer.
    pub error: f64,
    /// `n · C1 · leak`.
    pub bound: f64,
    pub bound_satisfied: bool,
}

/// Errors of a program's output against a reference layer. The relative
/// error is the max abs error divided by the largest reference entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub reference: String,
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
    pub max_rel_error: f64,
    /// Max abs error per node.
    pub per_node: Vec<f64>,
    /// One entry per attention-pool layer; the `k`-th such layer is taken
    /// to select node `k`.
    pub selection: Vec<SelectionDiagnostic>,
    pub config: Value,
    pub seed: Option<u64>,
}

impl ErrorReport {
    pub fn bounds_satisfied(&self) -> bool {
        self.selection.iter().all(|s| s.bound_satisfied)
    }

    pub fn with_config(mut self, config: Value) -> Self {
        self.config = config;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn trial_row(&self, n: usize, d: usize, param: f64) -> TrialRow {
        TrialRow {
            seed: self.seed.unwrap_or(0),
            n,
            d,
            param,
            max_err: self.max_abs_error,
            mean_err: self.mean_abs_error,
            bound_satisfied: self.bounds_satisfied(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Flat CSV row: one trial. `param` is `c` or `m` depending on the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub param: f64,
    pub max_err: f64,
    pub mean_err: f64,
    pub bound_satisfied: bool,
}

pub fn write_trial_csv<W: std::io::Write>(rows: &[TrialRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Rounding allowance, relative to `n · C1`, when comparing a measured
/// selection error with its bound.
pub const SELECTION_ROUNDING: f64 = 4.0 * f64::EPSILON;

/// Runs `prog` on `x` (edgeless graph plus virtual node) and compares with
/// the reference layer. `c1` bounds the input norms for the selection bound.
pub fn run_and_report(
    x: &Matrix,
    prog: &LayerProgram,
    w: &AttnWeights,
    reference: &Reference,
    c1: f64,
) -> Result<ErrorReport> {
    let g = star(x.rows());
    let s0 = prog.encode(x)?;
    let (states, traces) = run_program_traced(&g, &s0, prog)?;
    let out = prog.decode(states.last().expect("at least the initial state"));
    let want = reference.evaluate(x, w)?;
    check_dim("program output width", want.cols(), out.cols())?;

    let n = x.rows();
    let mut per_node = vec![0.0; n];
    let mut total = 0.0;
    for i in 0..n {
        for (a, b) in out.row(i).iter().zip(want.row(i)) {
            let e = (a - b).abs();
            per_node[i] = f64::max(per_node[i], e);
            total += e;
        }
    }
    let max_abs = per_node.iter().cloned().fold(0.0, f64::max);
    let scale = want.max_abs();
    let d = x.cols();
    let selection = traces
        .iter()
        .enumerate()
        .filter_map(|(layer, t)| t.attention.as_ref().map(|a| (layer, a)))
        .enumerate()
        .filter(|(target, _)| *target < n)
        .map(|(target, (layer, weights))| {
            let selected = &states[layer + 1].vn[..d];
            let error = dist(selected, x.row(target));
            let leak: f64 = weights
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != target)
                .map(|(_, w)| w)
                .sum();
            let bound = n as f64 * c1 * leak;
            SelectionDiagnostic {
                layer: layer + 1,
                target,
                weight: weights[target],
                leak,
                error,
                bound,
                bound_satisfied: error <= bound + SELECTION_ROUNDING * n as f64 * c1,
            }
        })
        .collect();
    Ok(ErrorReport {
        reference: reference.name().to_string(),
        max_abs_error: max_abs,
        mean_abs_error: if n == 0 { 0.0 } else { total / (n * want.cols()) as f64 },
        max_rel_error: if scale > 0.0 { max_abs / scale } else { max_abs },
        per_node,
        selection,
        config: Value::Null,
        seed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpnnvn::run_program;
    use crate::separability::{amplification_for, selection_bound, vdelta_certificate};

    fn instance(n: usize, d: usize, m: usize, seed: u64) -> (Matrix, AttnWeights, FeatureMap) {
        let mut rng = Rng::new(seed);
        let x = uniform_ball_rows(n, d, 1.0, &mut rng);
        let w = AttnWeights::random(d, d, 0.9, &mut rng).unwrap();
        let fm = FeatureMap::performer(m, d, &mut rng).unwrap();
        (x, w, fm)
    }

    #[test]
    fn performer_exact_matches_kernel_attention() {
        for (seed, n) in [1usize, 2, 5, 17, 64].iter().enumerate() {
            let (x, w, fm) = instance(*n, 3, 16, seed as u64);
            let prog = compile_performer_vn(&w, &PerformerSimConfig::exact(fm.clone()))
                .unwrap()
                .program;
            assert_eq!(prog.len(), 2);
            let rep = run_and_report(&x, &prog, &w, &Reference::Performer { feature_map: fm }, 1.0)
                .unwrap();
            assert!(rep.max_abs_error <= 1e-12, "n={n}: {}", rep.max_abs_error);

            let lt = FeatureMap::linear_transformer(3);
            let prog = compile_performer_vn(&w, &PerformerSimConfig::exact(lt)).unwrap().program;
            let rep = run_and_report(&x, &prog, &w, &Reference::LinearTransformer, 1.0).unwrap();
            assert!(rep.max_abs_error <= 1e-12);
        }
    }

    #[test]
    fn performer_single_node_is_value() {
        let (x, w, fm) = instance(1, 4, 8, 9);
        let out = compile_performer_vn(&w, &PerformerSimConfig::exact(fm))
            .unwrap()
            .program
            .apply_vn(&x)
            .unwrap();
        for (a, b) in out.row(0).iter().zip(w.value(x.row(0))) {
            assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn performer_vn_initial_state() {
        let (_, w, fm) = instance(1, 2, 5, 3);
        let prog = compile_performer_vn(&w, &PerformerSimConfig::exact(fm)).unwrap().program;
        assert_eq!(prog.encoding().vn_init, vec![1.0; 15]);
        assert!(prog.max_width() == 15);
    }

    fn trace_oracle(x: &Matrix, w: &AttnWeights, t: usize) -> (Matrix, Vec<f64>) {
        let (n, d) = x.shape();
        let mut gn = Matrix::zeros(n, 2 * d + 1);
        for i in 0..n {
            let xi = x.row(i);
            gn.row_mut(i)[..d].copy_from_slice(xi);
            if t == n + 2 {
                continue;
            }
            let mut tmp = vec![0.0; d];
            let mut ps = 0.0;
            for k in 0..t.saturating_sub(1).min(n) {
                let e = w.score(xi, x.row(k)).exp();
                let v = w.value(x.row(k));
                for c in 0..d {
                    tmp[c] += e * v[c];
                }
                ps += e;
            }
            gn.row_mut(i)[d..2 * d].copy_from_slice(&tmp);
            gn.set(i, 2 * d, ps);
        }
        if t == n + 2 {
            let want = self_attention(x, w).unwrap();
            for i in 0..n {
                gn.row_mut(i).fill(0.0);
                let mut tmp = vec![0.0; d];
                let mut ps = 0.0;
                for k in 0..n {
                    let e = w.score(x.row(i), x.row(k)).exp();
                    let v = w.value(x.row(k));
                    for c in 0..d {
                        tmp[c] += e * v[c];
                    }
                    ps += e;
                }
                for c in 0..d {
                    gn.set(i, c, tmp[c] / ps);
                    assert!((tmp[c] / ps - want.get(i, c)).abs() < 1e-10);
                }
            }
        }
        let vn = if t == 0 {
            vec![0.0; 2 * d + 1]
        } else if t <= n {
            let mut v = vec![0.0; 2 * d + 1];
            v[..d].copy_from_slice(x.row(t - 1));
            v
        } else {
            vec![1.0; 2 * d + 1]
        };
        (gn, vn)
    }

    #[test]
    fn deep_oracle_matches_trace_and_attention() {
        for n in [1usize, 2, 3, 7, 16] {
            let mut rng = Rng::new(40 + n as u64);
            let x = uniform_ball_rows(n, 3, 1.0, &mut rng);
            let w = AttnWeights::random(3, 3, 0.9, &mut rng).unwrap();
            let prog = compile_deep_vn(&w, &DeepSimConfig::oracle(n)).unwrap();
            assert_eq!(prog.len(), n + 2);
            let g = star(n);
            let (states, _) = run_program_traced(&g, &prog.encode(&x).unwrap(), &prog).unwrap();
            for t in 0..=n + 2 {
                let (gn, vn) = trace_oracle(&x, &w, t);
                assert_eq!(states[t].graph, gn, "n={n} time {t}");
                assert_eq!(states[t].vn, vn, "n={n} time {t}");
            }
            for t in [0, 1, n + 2] {
                assert!(states[t].graph.row_iter().all(|r| r[6] == 0.0));
            }
            for s in &states[..=n] {
                assert_eq!(s.vn[6], 0.0);
            }
            let rep = run_and_report(&x, &prog, &w, &Reference::Full, 1.0).unwrap();
            assert!(rep.max_abs_error <= 1e-10);
            assert!(rep.selection.iter().all(|s| s.weight == 1.0 && s.error == 0.0));
        }
    }

    #[test]
    fn deep_single_node_is_value() {
        let mut rng = Rng::new(5);
        let x = uniform_ball_rows(1, 2, 1.0, &mut rng);
        let w = AttnWeights::random(2, 2, 0.9, &mut rng).unwrap();
        let out = compile_deep_vn(&w, &DeepSimConfig::oracle(1))
            .unwrap()
            .apply_vn(&x)
            .unwrap();
        for (a, b) in out.row(0).iter().zip(w.value(x.row(0))) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn extra_linear_layer_gives_same_output() {
        let mut rng = Rng::new(6);
        let x = uniform_ball_rows(5, 2, 1.0, &mut rng);
        let w = AttnWeights::random(2, 2, 0.9, &mut rng).unwrap();
        let plain = compile_deep_vn(&w, &DeepSimConfig::oracle(5)).unwrap();
        let cfg = DeepSimConfig {
            extra_linear: true,
            ..DeepSimConfig::oracle(5)
        };
        let extra = compile_deep_vn(&w, &cfg).unwrap();
        assert_eq!(extra.len(), 8);
        let g = star(5);
        let (states, _) = run_program_traced(&g, &extra.encode(&x).unwrap(), &extra).unwrap();
        let before = &states[7].graph;
        for i in 0..5 {
            assert_eq!(&before.row(i)[..2], x.row(i));
            assert_eq!(before.get(i, 4), 0.0);
        }
        assert_eq!(extra.apply_vn(&x).unwrap(), plain.apply_vn(&x).unwrap());
    }

    fn certified_instance(n: usize, d: usize, min_delta: f64, rng: &mut Rng) -> (Matrix, SeparabilityCertificate) {
        loop {
            let mut x = Matrix::zeros(n, d);
            for i in 0..n {
                let dir = rng.normal_vec(d);
                let len = norm(&dir);
                let r = rng.uniform(0.8, 0.95);
                for (o, v) in x.row_mut(i).iter_mut().zip(&dir) {
                    *o = r * v / len;
                }
            }
            if let Some(cert) = vdelta_certificate(&x).unwrap().certificate() {
                if cert.delta >= min_delta {
                    return (x, cert);
                }
            }
        }
    }

    #[test]
    fn deep_softmax_meets_selection_bounds() {
        let mut rng = Rng::new(77);
        for _ in 0..5 {
            let (x, cert) = certified_instance(6, 3, 0.1, &mut rng);
            let cert = cert.with_epsilon(1e-4).unwrap();
            let c = cert.amplification;
            let w = AttnWeights::random(3, 3, 0.9, &mut rng).unwrap();
            let prog = compile_deep_vn(&w, &DeepSimConfig::softmax(cert.clone())).unwrap();
            let rep = run_and_report(&x, &prog, &w, &Reference::Full, 1.0).unwrap();
            assert_eq!(rep.selection.len(), 6);
            for s in &rep.selection {
                assert!(s.weight >= selection_bound(c, cert.delta, 6) - 1e-12);
                assert!(s.bound_satisfied, "{s:?}");
            }
            assert!(rep.max_rel_error <= 1e-2, "{}", rep.max_rel_error);
        }
    }

    #[test]
    fn deep_softmax_error_shrinks_with_amplification() {
        let mut rng = Rng::new(78);
        let (x, cert) = certified_instance(5, 2, 0.1, &mut rng);
        let w = AttnWeights::random(2, 2, 0.9, &mut rng).unwrap();
        let mut last = f64::INFINITY;
        for k in [2.0, 4.0, 8.0, 16.0] {
            let cert = cert.clone().with_amplification(k / cert.delta);
            let prog = compile_deep_vn(&w, &DeepSimConfig::softmax(cert)).unwrap();
            let err = run_and_report(&x, &prog, &w, &Reference::Full, 1.0)
                .unwrap()
                .max_abs_error;
            assert!(err < last);
            last = err;
        }
    }

    #[test]
    fn deep_refuses_thin_certificates() {
        let mut rng = Rng::new(79);
        let (_, cert) = certified_instance(4, 2, 0.05, &mut rng);
        let mut thin = cert;
        thin.delta = 1e-8;
        let w = AttnWeights::random(2, 2, 0.9, &mut rng).unwrap();
        assert!(compile_deep_vn(&w, &DeepSimConfig::softmax(thin)).is_err());
        assert!(compile_deep_vn(&w, &DeepSimConfig::oracle(0)).is_err());
    }

    #[test]
    fn deep_gatv2_selects_middle_cluster() {
        use crate::separability::{three_cluster_instance, train_gatv2_selector, SelectorConfig};
        let sets = three_cluster_instance(5, 0.1);
        let cfg = SelectorConfig {
            jitter: 0.1,
            ..SelectorConfig::default()
        };
        let x = Matrix::from_rows(&[vec![-1.0], vec![0.0], vec![1.0]]).unwrap();
        let selections: Vec<Gatv2Selection> = (0..3)
            .map(|k| {
                let sel = train_gatv2_selector(&sets, k, 1.0, &cfg).unwrap();
                Gatv2Selection {
                    amplification: sel.amplification_for_weight(0.999, 3).unwrap(),
                    score: sel.score,
                }
            })
            .collect();
        let w = AttnWeights::random(1, 1, 0.9, &mut Rng::new(3)).unwrap();
        let prog = compile_deep_vn(
            &w,
            &DeepSimConfig {
                n: 3,
                selection: Selection::Gatv2(selections),
                extra_linear: false,
            },
        )
        .unwrap();
        let rep = run_and_report(&x, &prog, &w, &Reference::Full, 1.0).unwrap();
        assert!(rep.selection.iter().all(|s| s.weight >= 0.999));
        assert!(rep.max_rel_error <= 1e-2);
    }

    #[test]
    fn amplification_round_trip_in_program() {
        let mut rng = Rng::new(80);
        let (x, cert) = certified_instance(8, 3, 0.1, &mut rng);
        let c = amplification_for(cert.delta, 1e-4, 8).unwrap();
        assert!((cert.clone().with_epsilon(1e-4).unwrap().amplification - c).abs() < 1e-12);
        let w = AttnWeights::random(3, 3, 0.9, &mut rng).unwrap();
        let prog = compile_deep_vn(&w, &DeepSimConfig::softmax(cert.with_epsilon(1e-4).unwrap()))
            .unwrap();
        let g = star(8);
        let s = run_program(&g, &prog.encode(&x).unwrap(), &prog).unwrap();
        assert!(s.graph.row_iter().all(|r| r[6] == 0.0));
    }

    #[test]
    fn reports_serialize() {
        let (x, w, fm) = instance(4, 2, 8, 1);
        let prog = compile_performer_vn(&w, &PerformerSimConfig::exact(fm.clone())).unwrap().program;
        let rep = run_and_report(&x, &prog, &w, &Reference::Performer { feature_map: fm }, 1.0)
            .unwrap()
            .with_seed(1)
            .with_config(json!({"n": 4}));
        let back: ErrorReport = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
        assert_eq!(back, rep);
        let mut buf = Vec::new();
        write_trial_csv(&[rep.trial_row(4, 2, 8.0)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("seed,n,d,param,max_err,mean_err,bound_satisfied\n1,4,2,8.0,"));
    }
}

#[cfg(test)]
mod proptests {
    use super::{compile_performer_vn, PerformerSimConfig};
    use crate::attention::{AttnWeights, FeatureMap};
    use crate::numkit::{uniform_ball_rows, Rng};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn performer_program_is_equivariant(seed in 0u64..100_000, n in 1usize..12) {
            let mut rng = Rng::new(seed);
            let x = uniform_ball_rows(n, 3, 1.0, &mut rng);
            let w = AttnWeights::random(3, 3, 0.9, &mut rng).unwrap();
            let fm = FeatureMap::performer(8, 3, &mut rng).unwrap();
            let prog = compile_performer_vn(&w, &PerformerSimConfig::exact(fm)).unwrap().program;
            let perm = rng.permutation(n);
            let a = prog.apply_vn(&x.permute_rows(&perm)).unwrap();
            let b = prog.apply_vn(&x).unwrap().permute_rows(&perm);
            prop_assert!(a.max_abs_diff(&b) <= 1e-12);
        }
    }
}

#[cfg(test)]
mod mlp_mode {
    use super::*;

    fn setup(seed: u64) -> (AttnWeights, FeatureMap) {
        let mut rng = Rng::new(seed);
        let w = AttnWeights::random(2, 2, 0.3, &mut rng).unwrap();
        let fm = FeatureMap::performer(4, 2, &mut rng).unwrap();
        (w, fm)
    }

    #[test]
    fn mlp_mode_error_is_small_but_nonzero() {
        let (w, fm) = setup(11);
        let exact = compile_performer_vn(&w, &PerformerSimConfig::exact(fm.clone())).unwrap();
        let cfg = PerformerSimConfig {
            feature_map: fm.clone(),
            mode: SimMode::Mlp(MlpModeConfig::default()),
        };
        let approx = compile_performer_vn(&w, &cfg).unwrap();
        assert_eq!(approx.fits.len(), 4);
        assert!(approx.warnings.is_empty(), "{:?}", approx.warnings);
        let reference = Reference::Performer { feature_map: fm };
        for s in 0..5 {
            let x = uniform_ball_rows(4, 2, 0.999, &mut Rng::new(100 + s));
            let e = run_and_report(&x, &exact.program, &w, &reference, 1.0).unwrap();
            let a = run_and_report(&x, &approx.program, &w, &reference, 1.0).unwrap();
            assert!(a.max_abs_error <= 1e-2, "{}", a.max_abs_error);
            assert!(a.max_abs_error > e.max_abs_error);
        }
    }

    #[test]
    fn short_budget_warns_with_achieved_errors() {
        let (w, fm) = setup(12);
        let mut mc = MlpModeConfig::default();
        mc.budget.max_epochs = 3;
        mc.train_points = 64;
        let cp = compile_performer_vn(
            &w,
            &PerformerSimConfig {
                feature_map: fm,
                mode: SimMode::Mlp(mc),
            },
        )
        .unwrap();
        assert!(!cp.warnings.is_empty());
        assert!(cp.warnings.iter().all(|m| m.contains("sup-error")));
    }

    #[test]
    fn mlp_mode_rejects_large_weights() {
        let mut rng = Rng::new(13);
        let w = AttnWeights::random(2, 2, 0.9, &mut rng).unwrap();
        let fm = FeatureMap::performer(4, 2, &mut rng).unwrap();
        let cfg = PerformerSimConfig {
            feature_map: fm,
            mode: SimMode::Mlp(MlpModeConfig::default()),
        };
        assert!(compile_performer_vn(&w, &cfg).is_err());
    }
}
