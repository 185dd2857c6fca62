//! Feed-forward networks with hand-written backpropagation and an Adam
//! fitting loop. Used wherever a construction replaces a closed-form map by
//! an MLP and we want the substitution error measured, not assumed.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, usage, Error, Result};
use crate::numkit::{elu, leaky_relu, relu, Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
    Elu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => relu(x),
            Activation::LeakyRelu { slope } => leaky_relu(x, slope),
            Activation::Elu => elu(x),
            Activation::Identity => x,
        }
    }

    /// Derivative at pre-activation `x` (right derivative at kinks).
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Elu => {
                if x >= 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Layer widths `[input, hidden.., output]` plus the hidden activation.
/// The last layer is always affine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    widths: Vec<usize>,
    activation: Activation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if widths.len() < 3 {
            return Err(usage("an MLP spec needs at least one hidden layer"));
        }
        if widths.contains(&0) {
            return Err(usage("MLP widths must be >= 1"));
        }
        Ok(Self { widths, activation })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

/// One affine layer, `y = W x + b` with `W` of shape `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        check_dim("Dense bias", weights.rows(), bias.len())?;
        Ok(Self { weights, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.weights.row(r);
            let mut acc = self.bias[r];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            *o = acc;
        }
    }
}

/// Network parameters. Hidden layers use `activation`; the final layer is
/// affine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layers: Vec<Dense>,
    activation: Activation,
}

impl MlpParams {
    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(usage("an MLP needs at least one layer"));
        }
        for pair in layers.windows(2) {
            check_dim("MLP layer chaining", pair[0].out_dim(), pair[1].in_dim())?;
        }
        Ok(Self { layers, activation })
    }

    /// He-style initialisation: `N(0, 2/fan_in)` weights, zero biases.
    pub fn init(spec: &MlpSpec, rng: &mut Rng) -> Self {
        let layers = spec
            .widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = (2.0 / fan_in as f64).sqrt();
                Dense {
                    weights: Matrix::from_fn(fan_out, fan_in, |_, _| std * rng.normal()),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Self {
            layers,
            activation: spec.activation,
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::out_dim))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.values().len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("MLP forward input", self.input_dim(), x.len())?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.out_dim()];
            layer.apply_into(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            cur = next;
        }
        cur
    }

    /// Squared-error loss `½‖f(x) − y‖²` and its gradient for every weight
    /// and bias.
    pub fn gradient(&self, x: &[f64], target: &[f64]) -> Result<(f64, Gradients)> {
        check_dim("MLP gradient input", self.input_dim(), x.len())?;
        check_dim("MLP gradient target", self.output_dim(), target.len())?;
        let mut grads = Gradients::zeros_like(self);
        let mut ws = Workspace::new(self);
        let loss = self.accumulate_gradient(x, target, &mut grads, &mut ws);
        Ok((loss, grads))
    }

    fn accumulate_gradient(
        &self,
        x: &[f64],
        target: &[f64],
        grads: &mut Gradients,
        ws: &mut Workspace,
    ) -> f64 {
        let last = self.layers.len() - 1;
        ws.acts[0].copy_from_slice(x);
        for (i, layer) in self.layers.iter().enumerate() {
            let (before, after) = ws.acts.split_at_mut(i + 1);
            layer.apply_into(&before[i], &mut ws.pre[i]);
            let out = &mut after[0];
            if i < last {
                for (o, &p) in out.iter_mut().zip(&ws.pre[i]) {
                    *o = self.activation.apply(p);
                }
            } else {
                out.copy_from_slice(&ws.pre[i]);
            }
        }

        let mut loss = 0.0;
        {
            let out = &ws.acts[last + 1];
            for ((d, &o), &t) in ws.delta[last].iter_mut().zip(out).zip(target) {
                *d = o - t;
                loss += 0.5 * (o - t) * (o - t);
            }
        }

        for i in (0..=last).rev() {
            let layer = &self.layers[i];
            let g = &mut grads.layers[i];
            let input = &ws.acts[i];
            {
                let delta = &ws.delta[i];
                let gw = g.weights.values_mut();
                let n_in = input.len();
                for (r, &dr) in delta.iter().enumerate() {
                    g.bias[r] += dr;
                    if dr != 0.0 {
                        let row = &mut gw[r * n_in..(r + 1) * n_in];
                        for (gv, &a) in row.iter_mut().zip(input) {
                            *gv += dr * a;
                        }
                    }
                }
            }
            if i > 0 {
                let (lower, upper) = ws.delta.split_at_mut(i);
                let delta = &upper[0];
                let prev = &mut lower[i - 1];
                prev.iter_mut().for_each(|v| *v = 0.0);
                for (r, &dr) in delta.iter().enumerate() {
                    if dr == 0.0 {
                        continue;
                    }
                    for (p, &w) in prev.iter_mut().zip(layer.weights.row(r)) {
                        *p += dr * w;
                    }
                }
                for (p, &z) in prev.iter_mut().zip(&ws.pre[i - 1]) {
                    *p *= self.activation.derivative(z);
                }
            }
        }
        loss
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: MlpParams = serde_json::from_str(s)?;
        MlpParams::from_layers(p.layers, p.activation)
    }
}

/// Per-layer gradients with the same shapes as the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    fn zeros_like(p: &MlpParams) -> Self {
        Self {
            layers: p
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.values_mut().iter_mut().for_each(|v| *v = 0.0);
            l.bias.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

struct Workspace {
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(p: &MlpParams) -> Self {
        let widths = p.widths();
        Self {
            acts: widths.iter().map(|&w| vec![0.0; w]).collect(),
            pre: widths[1..].iter().map(|&w| vec![0.0; w]).collect(),
            delta: widths[1..].iter().map(|&w| vec![0.0; w]).collect(),
        }
    }
}

/// Axis-aligned box `[lo, hi]` in `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Domain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim("Domain bounds", lo.len(), hi.len())?;
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(usage("domain lower bound exceeds upper bound"));
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Regular lattice with `per_axis` points on every axis, endpoints
    /// included.
    pub fn lattice(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let per_axis = per_axis.max(2);
        let d = self.dim();
        let total = per_axis.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                (0..d)
                    .map(|a| {
                        let k = idx % per_axis;
                        idx /= per_axis;
                        let t = k as f64 / (per_axis - 1) as f64;
                        self.lo[a] + t * (self.hi[a] - self.lo[a])
                    })
                    .collect()
            })
            .collect()
    }

    pub fn sample(&self, count: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                self.lo
                    .iter()
                    .zip(&self.hi)
                    .map(|(&l, &h)| rng.uniform(l, h))
                    .collect()
            })
            .collect()
    }
}

pub type Sample = (Vec<f64>, Vec<f64>);

/// Evaluates `f` at every point.
pub fn tabulate(points: Vec<Vec<f64>>, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<Sample> {
    points
        .into_iter()
        .map(|x| {
            let y = f(&x);
            (x, y)
        })
        .collect()
}

/// Optimiser budget. The learning rate follows a cosine schedule from
/// `learning_rate` down to `learning_rate * final_lr_fraction`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitBudget {
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub final_lr_fraction: f64,
    /// 0 means full batch.
    pub batch_size: usize,
    /// Stop as soon as the held-out sup-error reaches this value.
    pub target_sup_error: Option<f64>,
    /// Held-out evaluation period in epochs.
    pub eval_every: usize,
}

impl Default for FitBudget {
    fn default() -> Self {
        Self {
            max_epochs: 2000,
            learning_rate: 1e-3,
            final_lr_fraction: 1.0,
            batch_size: 32,
            target_sup_error: None,
            eval_every: 25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Max absolute error over the held-out set, for the returned params.
    pub sup_error: f64,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
    pub epochs: usize,
    pub seed: u64,
    pub reached_target: bool,
}

impl FitReport {
    /// Running minimum of the loss curve.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.loss_curve
            .iter()
            .map(|&l| {
                best = best.min(l);
                best
            })
            .collect()
    }
}

/// Largest absolute componentwise error of `params` over `samples`.
pub fn sup_error(params: &MlpParams, samples: &[Sample]) -> f64 {
    samples
        .iter()
        .map(|(x, y)| {
            params
                .forward_unchecked(x)
                .iter()
                .zip(y)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        })
        .fold(0.0, f64::max)
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Trains a fresh network on `train` with Adam and squared-error loss,
/// tracking the held-out sup-error. Returns the best parameters seen.
pub fn fit(
    spec: &MlpSpec,
    train: &[Sample],
    holdout: &[Sample],
    budget: &FitBudget,
    rng: &mut Rng,
) -> Result<(MlpParams, FitReport)> {
    let params = MlpParams::init(spec, rng);
    fit_from(params, train, holdout, budget, rng)
}

/// Like [`fit`] but starting from given parameters.
pub fn fit_from(
    mut params: MlpParams,
    train: &[Sample],
    holdout: &[Sample],
    budget: &FitBudget,
    rng: &mut Rng,
) -> Result<(MlpParams, FitReport)> {
    if train.is_empty() {
        return Err(usage("fit needs at least one training sample"));
    }
    for (x, y) in train.iter().chain(holdout) {
        check_dim("fit sample input", params.input_dim(), x.len())?;
        check_dim("fit sample target", params.output_dim(), y.len())?;
    }
    let holdout = if holdout.is_empty() { train } else { holdout };

    let mut grads = Gradients::zeros_like(&params);
    let mut m1 = Gradients::zeros_like(&params);
    let mut m2 = Gradients::zeros_like(&params);
    let mut ws = Workspace::new(&params);
    let batch = if budget.batch_size == 0 {
        train.len()
    } else {
        budget.batch_size.min(train.len())
    };
    let eval_every = budget.eval_every.max(1);

    let mut best = params.clone();
    let mut best_sup = sup_error(&params, holdout);
    let mut loss_curve = Vec::with_capacity(budget.max_epochs);
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = 0;
    let mut reached = budget.target_sup_error.is_some_and(|t| best_sup <= t);

    while epochs < budget.max_epochs && !reached {
        let progress = epochs as f64 / budget.max_epochs.max(1) as f64;
        let lr = budget.learning_rate
            * (budget.final_lr_fraction
                + (1.0 - budget.final_lr_fraction)
                    * 0.5
                    * (1.0 + (std::f64::consts::PI * progress).cos()));
        for i in (1..order.len()).rev() {
            let j = rng.below(i + 1);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            grads.clear();
            for &idx in chunk {
                let (x, y) = &train[idx];
                epoch_loss += params.accumulate_gradient(x, y, &mut grads, &mut ws);
            }
            step += 1;
            adam_step(&mut params, &grads, &mut m1, &mut m2, lr, step, chunk.len());
        }
        epoch_loss /= train.len() as f64;
        epochs += 1;
        if !epoch_loss.is_finite() {
            return Err(Error::Training {
                epoch: epochs,
                diagnostic: format!(
                    "mean loss became {epoch_loss} at learning rate {lr:.3e}; best held-out sup-error so far {best_sup:.3e}"
                ),
            });
        }
        loss_curve.push(epoch_loss);

        if epochs % eval_every == 0 || epochs == budget.max_epochs {
            let sup = sup_error(&params, holdout);
            if sup < best_sup {
                best_sup = sup;
                best = params.clone();
            }
            reached = budget.target_sup_error.is_some_and(|t| best_sup <= t);
        }
    }

    Ok((
        best,
        FitReport {
            sup_error: best_sup,
            loss_curve,
            epochs,
            seed: rng.seed(),
            reached_target: reached,
        },
    ))
}

fn adam_step(
    params: &mut MlpParams,
    grads: &Gradients,
    m1: &mut Gradients,
    m2: &mut Gradients,
    lr: f64,
    step: i32,
    batch: usize,
) {
    let scale = 1.0 / batch as f64;
    let c1 = 1.0 - ADAM_BETA1.powi(step);
    let c2 = 1.0 - ADAM_BETA2.powi(step);
    let update = |p: &mut [f64], g: &[f64], a: &mut [f64], b: &mut [f64]| {
        for i in 0..p.len() {
            let gi = g[i] * scale;
            a[i] = ADAM_BETA1 * a[i] + (1.0 - ADAM_BETA1) * gi;
            b[i] = ADAM_BETA2 * b[i] + (1.0 - ADAM_BETA2) * gi * gi;
            let mhat = a[i] / c1;
            let vhat = b[i] / c2;
            p[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    };
    for (((layer, g), a), b) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut m1.layers)
        .zip(&mut m2.layers)
    {
        update(
            layer.weights.values_mut(),
            g.weights.values(),
            a.weights.values_mut(),
            b.weights.values_mut(),
        );
        update(&mut layer.bias, &g.bias, &mut a.bias, &mut b.bias);
    }
}

/// Layer widths covered by the gradient check.
pub const GRADIENT_SHAPES: &[&[usize]] = &[
    &[1, 1],
    &[1, 4, 1],
    &[2, 8, 3],
    &[3, 16, 16, 2],
    &[5, 3, 7, 4, 1],
    &[8, 32, 8],
];

/// Largest relative error between the analytic gradient and central
/// differences with step `h`, over every weight and bias. Entries are
/// compared relative to `max(|analytic|, |numeric|, 1e-6)`.
pub fn gradient_check(params: &MlpParams, x: &[f64], y: &[f64], h: f64) -> Result<f64> {
    let (_, grads) = params.gradient(x, y)?;
    let loss = |p: &MlpParams| -> f64 {
        p.forward_unchecked(x)
            .iter()
            .zip(y)
            .map(|(a, b)| 0.5 * (a - b) * (a - b))
            .sum()
    };
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    let mut compare = |analytic: f64, plus: f64, minus: f64| {
        let numeric = (plus - minus) / (2.0 * h);
        let scale = analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic - numeric).abs() / scale);
    };
    for li in 0..params.layers.len() {
        for k in 0..params.layers[li].weights.values().len() {
            let orig = params.layers[li].weights.values()[k];
            probe.layers[li].weights.values_mut()[k] = orig + h;
            let plus = loss(&probe);
            probe.layers[li].weights.values_mut()[k] = orig - h;
            let minus = loss(&probe);
            probe.layers[li].weights.values_mut()[k] = orig;
            compare(grads.layers[li].weights.values()[k], plus, minus);
        }
        for k in 0..params.layers[li].bias.len() {
            let orig = params.layers[li].bias[k];
            probe.layers[li].bias[k] = orig + h;
            let plus = loss(&probe);
            probe.layers[li].bias[k] = orig - h;
            let minus = loss(&probe);
            probe.layers[li].bias[k] = orig;
            compare(grads.layers[li].bias[k], plus, minus);
        }
    }
    Ok(worst)
}

/// JSON weight document: spec, row-major weights and the seed used to
/// produce them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightDocument {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub layers: Vec<Dense>,
    pub seed: u64,
}

impl WeightDocument {
    pub fn new(params: &MlpParams, seed: u64) -> Self {
        Self {
            widths: params.widths(),
            activation: params.activation,
            layers: params.layers.clone(),
            seed,
        }
    }

    pub fn into_params(self) -> Result<MlpParams> {
        let params = MlpParams::from_layers(self.layers, self.activation)?;
        if params.widths() != self.widths {
            return Err(usage("weight document widths do not match its layers"));
        }
        Ok(params)
    }
}
