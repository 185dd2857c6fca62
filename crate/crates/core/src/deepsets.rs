//! Permutation-equivariant DeepSets layers and their exact MPNN + VN
//! compilation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, usage, Result};
use crate::mlp::Activation;
use crate::mpnnvn::{
    AffineMessage, AffineUpdate, CopySender, Encoding, LayerProgram, MpnnVnLayer, Pool, StateDims,
    TakeAggregate, ZeroMessage,
};
use crate::numkit::{gaussian_matrix, Matrix, Rng};

/// `L(X) = X A + (1/n) 1 1ᵀ X B + 1 cᵀ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivariantLinear {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Vec<f64>,
}

impl EquivariantLinear {
    pub fn new(a: Matrix, b: Matrix, c: Vec<f64>) -> Result<Self> {
        check_dim("DeepSets A/B rows", a.rows(), b.rows())?;
        check_dim("DeepSets A/B cols", a.cols(), b.cols())?;
        check_dim("DeepSets bias", a.cols(), c.len())?;
        Ok(Self { a, b, c })
    }

    pub fn random(d_in: usize, d_out: usize, rng: &mut Rng) -> Result<Self> {
        Self::new(
            gaussian_matrix(d_in, d_out, rng)?,
            gaussian_matrix(d_in, d_out, rng)?,
            rng.normal_vec(d_out),
        )
    }

    pub fn in_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.a.cols()
    }
}

/// Column means of `x`.
fn column_mean(x: &Matrix) -> Vec<f64> {
    let mut mean = vec![0.0; x.cols()];
    for row in x.row_iter() {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    let n = x.rows() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

pub fn eval_linear(x: &Matrix, layer: &EquivariantLinear) -> Result<Matrix> {
    check_dim("eval_linear input width", layer.in_dim(), x.cols())?;
    let pooled = layer.b.vecmul(&column_mean(x))?;
    let mut out = x.matmul(&layer.a)?;
    for i in 0..out.rows() {
        for ((o, p), c) in out.row_mut(i).iter_mut().zip(&pooled).zip(&layer.c) {
            *o = *o + p + c;
        }
    }
    Ok(out)
}

/// Linear equivariant layers with a pointwise `ν` between them (not after
/// the last one).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepSetsNet {
    layers: Vec<EquivariantLinear>,
    activation: Activation,
}

impl DeepSetsNet {
    pub fn new(layers: Vec<EquivariantLinear>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(usage("DeepSets network needs at least one layer"));
        }
        for w in layers.windows(2) {
            check_dim("DeepSets widths", w[0].out_dim(), w[1].in_dim())?;
        }
        Ok(Self { layers, activation })
    }

    pub fn random(widths: &[usize], activation: Activation, rng: &mut Rng) -> Result<Self> {
        if widths.len() < 2 {
            return Err(usage("need at least input and output widths"));
        }
        let layers = widths
            .windows(2)
            .map(|w| EquivariantLinear::random(w[0], w[1], rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers, activation)
    }

    pub fn layers(&self) -> &[EquivariantLinear] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn max_width(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.in_dim().max(l.out_dim()))
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, x: &Matrix) -> Result<Matrix> {
        let last = self.layers.len() - 1;
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = eval_linear(&cur, layer)?;
            if i < last {
                cur = cur.map(|v| self.activation.apply(v));
            }
        }
        Ok(cur)
    }
}

/// `d_out + d_in + C(n + d_in, d_in)`, the width sufficient for a universal
/// equivariant DeepSets network on sets of size `n`.
pub fn width_bound(n: u64, d_in: u64, d_out: u64) -> Result<u128> {
    if n == 0 || d_in == 0 || d_out == 0 {
        return Err(usage("width_bound needs n, d_in, d_out ≥ 1"));
    }
    let overflow = || usage(format!("width bound overflows for n={n}, d_in={d_in}"));
    let top = u128::from(n) + u128::from(d_in);
    let k = u128::from(d_in.min(n));
    let mut binom: u128 = 1;
    for i in 1..=k {
        binom = binom
            .checked_mul(top - k + i)
            .ok_or_else(overflow)?
            / i;
    }
    binom
        .checked_add(u128::from(d_in) + u128::from(d_out))
        .ok_or_else(overflow)
}

/// The two layers simulating one equivariant linear layer, with `ν` applied
/// at the end when given.
fn linear_layers(
    layer: &EquivariantLinear,
    n: usize,
    activation: Option<Activation>,
    index: usize,
) -> Result<[MpnnVnLayer; 2]> {
    let (d_in, d_out) = (layer.in_dim(), layer.out_dim());
    let average = MpnnVnLayer::simplified(
        format!("deepsets[{index}].average"),
        StateDims::new(d_in, d_in),
        Pool::Sum(Arc::new(AffineMessage::linear(
            Matrix::identity(d_in).scale(1.0 / n as f64),
        ))),
        Arc::new(TakeAggregate(d_in)),
        Arc::new(ZeroMessage(1)),
        Arc::new(AffineUpdate::new(
            layer.a.clone(),
            Matrix::zeros(1, d_out),
            vec![0.0; d_out],
            None,
        )?),
    )?;
    let combine = MpnnVnLayer::simplified(
        format!("deepsets[{index}].combine"),
        StateDims::new(d_out, d_in),
        Pool::Constant(vec![0.0; d_out]),
        Arc::new(TakeAggregate(d_out)),
        Arc::new(CopySender(d_in)),
        Arc::new(AffineUpdate::new(
            Matrix::identity(d_out),
            layer.b.clone(),
            layer.c.clone(),
            activation,
        )?),
    )?;
    Ok([average, combine])
}

/// Two-layer program: the VN averages the inputs while each node computes
/// `x_i A`; then each node adds `mean · B + c` and the VN resets to zero.
pub fn compile_linear(layer: &EquivariantLinear, n: usize) -> Result<LayerProgram> {
    if n == 0 {
        return Err(usage("compile_linear needs n ≥ 1"));
    }
    let d_in = layer.in_dim();
    let encoding = Encoding {
        gn_width: d_in,
        vn_init: vec![0.0; d_in],
        output_start: 0,
        output_len: layer.out_dim(),
    };
    let layers = linear_layers(layer, n, None, 0)?.to_vec();
    LayerProgram::new("deepsets linear layer", d_in, encoding, layers)
}

pub fn compile_network(net: &DeepSetsNet, n: usize) -> Result<LayerProgram> {
    if n == 0 {
        return Err(usage("compile_network needs n ≥ 1"));
    }
    let last = net.layers.len() - 1;
    let mut layers = Vec::with_capacity(2 * net.layers.len());
    for (i, layer) in net.layers.iter().enumerate() {
        let act = (i < last).then_some(net.activation);
        layers.extend(linear_layers(layer, n, act, i)?);
    }
    let d_in = net.layers[0].in_dim();
    let encoding = Encoding {
        gn_width: d_in,
        vn_init: vec![0.0; d_in],
        output_start: 0,
        output_len: net.layers[last].out_dim(),
    };
    LayerProgram::new("deepsets network", d_in, encoding, layers)
}


#[cfg(test)]
mod proptests {
    use super::{eval_linear, EquivariantLinear};
    use crate::numkit::{gaussian_matrix, Rng};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn eval_linear_is_equivariant(seed in 0u64..100_000, n in 1usize..12, d in 1usize..6) {
            let mut rng = Rng::new(seed);
            let l = EquivariantLinear::random(d, d + 1, &mut rng).unwrap();
            let x = gaussian_matrix(n, d, &mut rng).unwrap();
            let perm = rng.permutation(n);
            let a = eval_linear(&x.permute_rows(&perm), &l).unwrap();
            let b = eval_linear(&x, &l).unwrap().permute_rows(&perm);
            prop_assert!(a.max_abs_diff(&b) <= 1e-12);
        }
    }
}
