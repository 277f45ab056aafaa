//! Fully connected scalar networks with exact spatial derivatives.
//!
//! A network with hidden widths `d_1..d_L` maps `x` to
//! `u(x) = W_out · σ(W_L · … σ(W_1 x + b_1) … + b_L) + b_out`.
//!
//! Spatial derivatives are carried forward as second-order jets `(v, v', v'')`:
//! after an affine map the jet is `(Wv + b, W v', W v'')`, after the activation it is
//! `(σ(z), σ'(z) z', σ''(z) z'^2 + σ'(z) z'')`. Parameter gradients of any linear
//! combination of `u, u', u''` are obtained by one reverse sweep through the same jets,
//! for a whole batch of points at once (see [`JetTape`]).
//!
//! # Parameter ordering
//!
//! Flattened parameter vectors are layer-major, starting at the input layer. Within a
//! layer the weight matrix comes first, row-major (`W[i, j]` at `i * fan_in + j`), then
//! the bias vector. The output layer is last and its bias is the final entry.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::activation::Activation;
use crate::error::{Error, Result};

/// Seedable generator used for every random draw in the crate (ChaCha with 8 rounds).
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Scalar-in, scalar-out fully connected architecture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpArchitecture {
    hidden_widths: Vec<usize>,
    activation: Activation,
}

impl MlpArchitecture {
    pub fn new(hidden_widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if hidden_widths.is_empty() {
            return Err(Error::Architecture(
                "at least one hidden layer is required".into(),
            ));
        }
        if hidden_widths.contains(&0) {
            return Err(Error::Architecture(format!(
                "hidden widths must be positive, got {hidden_widths:?}"
            )));
        }
        Ok(Self {
            hidden_widths,
            activation,
        })
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.hidden_widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn depth(&self) -> usize {
        self.hidden_widths.len()
    }

    /// `(fan_out, fan_in)` of every affine map, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut fan_in = 1;
        for &w in &self.hidden_widths {
            shapes.push((w, fan_in));
            fan_in = w;
        }
        shapes.push((1, fan_in));
        shapes
    }

    pub fn num_params(&self) -> usize {
        self.layer_shapes().iter().map(|&(o, i)| o * i + o).sum()
    }
}

/// Weights and bias of one affine map. `weights` is `fan_out × fan_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// All weights and biases of a network, input layer first.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    layers: Vec<DenseLayer>,
}

impl ParameterSet {
    pub fn zeros(arch: &MlpArchitecture) -> Self {
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|(o, i)| DenseLayer {
                weights: Array2::zeros((o, i)),
                bias: Array1::zeros(o),
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(arch: &MlpArchitecture, layers: Vec<DenseLayer>) -> Result<Self> {
        let params = Self { layers };
        params.check(arch)?;
        Ok(params)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn output_bias(&self) -> f64 {
        self.layers.last().map(|l| l.bias[0]).unwrap_or(0.0)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Verifies that every layer has the shape `arch` prescribes.
    pub fn check(&self, arch: &MlpArchitecture) -> Result<()> {
        let shapes = arch.layer_shapes();
        if shapes.len() != self.layers.len() {
            return Err(Error::Shape {
                expected: shapes.len(),
                got: self.layers.len(),
            });
        }
        for (layer, &(o, i)) in self.layers.iter().zip(&shapes) {
            if layer.weights.dim() != (o, i) {
                return Err(Error::Shape {
                    expected: o * i,
                    got: layer.weights.len(),
                });
            }
            if layer.bias.len() != o {
                return Err(Error::Shape {
                    expected: o,
                    got: layer.bias.len(),
                });
            }
        }
        Ok(())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend(layer.weights.iter().copied());
            out.extend(layer.bias.iter().copied());
        }
        out
    }

    pub fn unflatten(arch: &MlpArchitecture, flat: &[f64]) -> Result<Self> {
        let mut params = Self::zeros(arch);
        params.assign_flat(flat)?;
        Ok(params)
    }

    /// Overwrites every parameter from a flattened vector, keeping the allocation.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for layer in &mut self.layers {
            for (w, v) in layer.weights.iter_mut().zip(&mut it) {
                *w = v;
            }
            for (b, v) in layer.bias.iter_mut().zip(&mut it) {
                *b = v;
            }
        }
        Ok(())
    }

    /// Sum of squares of all parameters, square-rooted.
    pub fn l2_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Every weight and bias an independent standard-normal draw, in flattening order.
pub fn init_normal(arch: &MlpArchitecture, seed: u64) -> ParameterSet {
    let mut rng = rng_from_seed(seed);
    let flat: Vec<f64> = (0..arch.num_params())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    ParameterSet::unflatten(arch, &flat).expect("length matches architecture")
}

/// Glorot-uniform weights on `±sqrt(6 / (fan_in + fan_out))`, zero biases.
pub fn init_glorot(arch: &MlpArchitecture, seed: u64) -> ParameterSet {
    let mut rng = rng_from_seed(seed);
    let mut params = ParameterSet::zeros(arch);
    for layer in &mut params.layers {
        let (fan_out, fan_in) = layer.weights.dim();
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        for w in layer.weights.iter_mut() {
            *w = dist.sample(&mut rng);
        }
    }
    params
}

/// Value, first and second spatial derivative of a scalar function at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet2 {
    pub fn new(v: f64, d1: f64, d2: f64) -> Self {
        Self { v, d1, d2 }
    }

    /// The identity map evaluated at `x`.
    pub fn seed(x: f64) -> Self {
        Self {
            v: x,
            d1: 1.0,
            d2: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            v: c,
            d1: 0.0,
            d2: 0.0,
        }
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(s * self.v, s * self.d1, s * self.d2)
    }
}

impl std::ops::Add for Jet2 {
    type Output = Self;

    fn add(self, other: Self) -> Self {
        Self::new(self.v + other.v, self.d1 + other.d1, self.d2 + other.d2)
    }
}

/// Gradients of `u`, `u'` and `u''` with respect to every parameter, in flattening order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradJet {
    pub dv: Vec<f64>,
    pub dd1: Vec<f64>,
    pub dd2: Vec<f64>,
}

/// Plain forward evaluation of `u(x)`, without derivative propagation.
pub fn forward_value(params: &ParameterSet, arch: &MlpArchitecture, x: f64) -> Result<f64> {
    params.check(arch)?;
    let act = arch.activation();
    let mut h = vec![x];
    let last = params.layers.len() - 1;
    for (l, layer) in params.layers.iter().enumerate() {
        let mut next = Vec::with_capacity(layer.bias.len());
        for (row, b) in layer.weights.outer_iter().zip(layer.bias.iter()) {
            let z: f64 = row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() + b;
            next.push(if l == last { z } else { act.eval(z) });
        }
        h = next;
    }
    Ok(h[0])
}

/// Exact `(u, u', u'')` at a single point.
pub fn forward_jet(params: &ParameterSet, arch: &MlpArchitecture, x: f64) -> Result<Jet2> {
    let tape = JetTape::forward(params, arch, &[x])?;
    Ok(tape.jet(0))
}

/// Exact parameter gradients of `u`, `u'`, `u''` at a single point.
pub fn param_grad_jet(
    params: &ParameterSet,
    arch: &MlpArchitecture,
    x: f64,
) -> Result<ParamGradJet> {
    let tape = JetTape::forward(params, arch, &[x])?;
    let rows = tape.param_grad_jets(params);
    Ok(ParamGradJet {
        dv: rows.dv.row(0).to_vec(),
        dd1: rows.dd1.row(0).to_vec(),
        dd2: rows.dd2.row(0).to_vec(),
    })
}

/// Whether a tape carries derivative channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetOrder {
    /// Values only; `u'` and `u''` are reported as zero.
    Value,
    /// Values with first and second spatial derivatives.
    Second,
}

impl JetOrder {
    fn channels(self) -> usize {
        match self {
            JetOrder::Value => 1,
            JetOrder::Second => 3,
        }
    }
}

/// Per-point weights of the functional `Σ_n (value[n] u_n + d1[n] u'_n + d2[n] u''_n)`.
#[derive(Debug, Clone)]
pub struct JetAdjoint {
    pub value: Array1<f64>,
    pub d1: Array1<f64>,
    pub d2: Array1<f64>,
}

impl JetAdjoint {
    pub fn zeros(n: usize) -> Self {
        Self {
            value: Array1::zeros(n),
            d1: Array1::zeros(n),
            d2: Array1::zeros(n),
        }
    }

    fn channels(&self) -> [&Array1<f64>; 3] {
        [&self.value, &self.d1, &self.d2]
    }
}

/// Row-per-point parameter Jacobians of `u`, `u'`, `u''` (each `n_points × N_p`).
#[derive(Debug, Clone)]
pub struct ParamGradBatch {
    pub dv: Array2<f64>,
    pub dd1: Array2<f64>,
    pub dd2: Array2<f64>,
}

fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

struct HiddenCache {
    z1: Array2<f64>,
    z2: Array2<f64>,
    s1: Array2<f64>,
    s2: Array2<f64>,
    s3: Array2<f64>,
}

/// Forward jets for a batch of points, kept for reverse sweeps.
///
/// Columns index points. `posts[l]` holds the jet entering affine map `l`
/// (`posts[0]` is the input `x`, `1`, `0`).
pub struct JetTape {
    order: JetOrder,
    n: usize,
    posts: Vec<Vec<Array2<f64>>>,
    hidden: Vec<HiddenCache>,
    output: Vec<Array1<f64>>,
}

impl JetTape {
    pub fn forward(params: &ParameterSet, arch: &MlpArchitecture, xs: &[f64]) -> Result<Self> {
        Self::forward_with_order(params, arch, xs, JetOrder::Second)
    }

    pub fn forward_with_order(
        params: &ParameterSet,
        arch: &MlpArchitecture,
        xs: &[f64],
        order: JetOrder,
    ) -> Result<Self> {
        params.check(arch)?;
        let n = xs.len();
        let nch = order.channels();
        let act = arch.activation();

        let x = Array2::from_shape_vec((1, n), xs.to_vec()).expect("1 x n input");
        let mut input = vec![x];
        if nch == 3 {
            input.push(Array2::ones((1, n)));
            input.push(Array2::zeros((1, n)));
        }

        let depth = params.layers.len() - 1;
        let mut posts = Vec::with_capacity(depth + 1);
        let mut hidden = Vec::with_capacity(depth);
        posts.push(input);

        for layer in &params.layers[..depth] {
            let prev = posts.last().expect("input present");
            let bias = layer.bias.view().insert_axis(Axis(1));
            let mut z = layer.weights.dot(&prev[0]);
            z += &bias;
            let d = z.dim();
            let mut h = Array2::zeros(d);
            let mut s1 = Array2::zeros(d);
            let mut s2 = Array2::zeros(d);
            let mut s3 = Array2::zeros(d);
            Zip::from(&mut h)
                .and(&mut s1)
                .and(&mut s2)
                .and(&mut s3)
                .and(&z)
                .for_each(|h, s1, s2, s3, &z| {
                    let a = act.derivs(z);
                    *h = a.value;
                    *s1 = a.d1;
                    *s2 = a.d2;
                    *s3 = a.d3;
                });
            if nch == 3 {
                let z1 = standard(layer.weights.dot(&prev[1]));
                let z2 = standard(layer.weights.dot(&prev[2]));
                let mut h1 = Array2::zeros(d);
                let mut h2 = Array2::zeros(d);
                Zip::from(&mut h1)
                    .and(&mut h2)
                    .and(&z1)
                    .and(&z2)
                    .and(&s1)
                    .and(&s2)
                    .for_each(|h1, h2, &z1, &z2, &s1, &s2| {
                        *h1 = s1 * z1;
                        *h2 = s2 * z1 * z1 + s1 * z2;
                    });
                posts.push(vec![h, h1, h2]);
                hidden.push(HiddenCache { z1, z2, s1, s2, s3 });
            } else {
                posts.push(vec![h]);
                hidden.push(HiddenCache {
                    z1: Array2::zeros((0, 0)),
                    z2: Array2::zeros((0, 0)),
                    s1,
                    s2,
                    s3,
                });
            }
        }

        let out_layer = &params.layers[depth];
        let last = posts.last().expect("hidden output present");
        let w = out_layer.weights.row(0);
        let mut output: Vec<Array1<f64>> = last.iter().map(|h| w.dot(h)).collect();
        output[0] += out_layer.bias[0];

        Ok(Self {
            order,
            n,
            posts,
            hidden,
            output,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn order(&self) -> JetOrder {
        self.order
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.output[0]
    }

    /// `u'` at every point. Panics on a value-only tape.
    pub fn d1(&self) -> &Array1<f64> {
        &self.output[1]
    }

    /// `u''` at every point. Panics on a value-only tape.
    pub fn d2(&self) -> &Array1<f64> {
        &self.output[2]
    }

    pub fn jet(&self, i: usize) -> Jet2 {
        match self.order {
            JetOrder::Value => Jet2::new(self.output[0][i], 0.0, 0.0),
            JetOrder::Second => Jet2::new(self.output[0][i], self.output[1][i], self.output[2][i]),
        }
    }

    /// Adjoints of the pre-activations of every layer, output layer last.
    fn backward(&self, params: &ParameterSet, adj: &JetAdjoint) -> Vec<Vec<Array2<f64>>> {
        let nch = self.order.channels();
        let n = self.n;
        let depth = params.layers.len() - 1;
        let mut bars: Vec<Vec<Array2<f64>>> = vec![Vec::new(); depth + 1];

        let out_bar: Vec<Array2<f64>> = adj.channels()[..nch]
            .iter()
            .map(|a| {
                assert_eq!(a.len(), n, "adjoint length must match the batch");
                a.view().insert_axis(Axis(0)).to_owned()
            })
            .collect();

        let w_out = params.layers[depth].weights.t();
        let mut h_bar: Vec<Array2<f64>> = out_bar.iter().map(|a| standard(w_out.dot(a))).collect();
        bars[depth] = out_bar;

        for l in (0..depth).rev() {
            let c = &self.hidden[l];
            let d = h_bar[0].dim();
            let z_bar = if nch == 3 {
                let mut zb = Array2::zeros(d);
                let mut zb1 = Array2::zeros(d);
                let mut zb2 = Array2::zeros(d);
                {
                    let out0 = zb.as_slice_mut().expect("contiguous");
                    let out1 = zb1.as_slice_mut().expect("contiguous");
                    let out2 = zb2.as_slice_mut().expect("contiguous");
                    let hb0 = h_bar[0].as_slice().expect("contiguous");
                    let hb1 = h_bar[1].as_slice().expect("contiguous");
                    let hb2 = h_bar[2].as_slice().expect("contiguous");
                    let z1 = c.z1.as_slice().expect("contiguous");
                    let z2 = c.z2.as_slice().expect("contiguous");
                    let s1 = c.s1.as_slice().expect("contiguous");
                    let s2 = c.s2.as_slice().expect("contiguous");
                    let s3 = c.s3.as_slice().expect("contiguous");
                    for k in 0..out0.len() {
                        let (a0, a1, a2) = (hb0[k], hb1[k], hb2[k]);
                        out0[k] = a0 * s1[k]
                            + a1 * s2[k] * z1[k]
                            + a2 * (s3[k] * z1[k] * z1[k] + s2[k] * z2[k]);
                        out1[k] = a1 * s1[k] + 2.0 * a2 * s2[k] * z1[k];
                        out2[k] = a2 * s1[k];
                    }
                }
                vec![zb, zb1, zb2]
            } else {
                vec![&h_bar[0] * &c.s1]
            };
            if l > 0 {
                let wt = params.layers[l].weights.t();
                h_bar = z_bar.iter().map(|zb| standard(wt.dot(zb))).collect();
            }
            bars[l] = z_bar;
        }
        bars
    }

    /// Gradient of `Σ_n adj(n) · (u_n, u'_n, u''_n)` with respect to all parameters.
    pub fn gradient(&self, params: &ParameterSet, adj: &JetAdjoint) -> Vec<f64> {
        let bars = self.backward(params, adj);
        let mut grad = Vec::with_capacity(params.num_params());
        for (l, layer_bars) in bars.iter().enumerate() {
            let prev = &self.posts[l];
            let mut gw = Array2::<f64>::zeros(params.layers[l].weights.dim());
            for (c, (bar, post)) in layer_bars.iter().zip(prev).enumerate() {
                // the input's second-derivative channel is identically zero
                if l == 0 && c == 2 {
                    continue;
                }
                gw += &bar.dot(&post.t());
            }
            grad.extend(gw.iter().copied());
            grad.extend(layer_bars[0].sum_axis(Axis(1)).iter().copied());
        }
        grad
    }

    /// Per-point gradients: row `n` is the gradient of `adj(n) · (u_n, u'_n, u''_n)`.
    pub fn jacobian(&self, params: &ParameterSet, adj: &JetAdjoint) -> Array2<f64> {
        let bars = self.backward(params, adj);
        let np = params.num_params();
        let mut jac = Array2::zeros((self.n, np));
        for (p, mut row) in jac.outer_iter_mut().enumerate() {
            let mut k = 0;
            for (l, layer_bars) in bars.iter().enumerate() {
                let prev = &self.posts[l];
                let (fan_out, fan_in) = params.layers[l].weights.dim();
                for i in 0..fan_out {
                    for j in 0..fan_in {
                        let mut acc = 0.0;
                        for (bar, post) in layer_bars.iter().zip(prev) {
                            acc += bar[[i, p]] * post[[j, p]];
                        }
                        row[k] = acc;
                        k += 1;
                    }
                }
                for i in 0..fan_out {
                    row[k] = layer_bars[0][[i, p]];
                    k += 1;
                }
            }
        }
        jac
    }

    /// Row-per-point Jacobians of `u`, `u'` and `u''`.
    pub fn param_grad_jets(&self, params: &ParameterSet) -> ParamGradBatch {
        let ones = Array1::ones(self.n);
        let mut adj = JetAdjoint::zeros(self.n);
        adj.value = ones.clone();
        let dv = self.jacobian(params, &adj);
        if self.order == JetOrder::Value {
            let zeros = Array2::zeros(dv.dim());
            return ParamGradBatch {
                dv,
                dd1: zeros.clone(),
                dd2: zeros,
            };
        }
        adj.value.fill(0.0);
        adj.d1 = ones.clone();
        let dd1 = self.jacobian(params, &adj);
        adj.d1.fill(0.0);
        adj.d2 = ones;
        let dd2 = self.jacobian(params, &adj);
        ParamGradBatch { dv, dd1, dd2 }
    }
}
