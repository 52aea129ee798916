//! Residual encoder-decoder correction network with forward, reverse and
//! forward-over-reverse differentiation.
//!
//! The network is a small static graph. Every node supports a primal pass, a
//! tangent pass (directional derivative along an input direction) and a
//! reverse pass over the primal/tangent pair. The reverse pass over the pair
//! yields the usual vector-Jacobian product and, when seeded on the tangent
//! output, the parameter gradient of `⟨r, J(u)·v⟩`.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand_distr::{Distribution, Normal};
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::tensor::{col2im, gemm, im2col, Tensor};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rng::stream_rng;

/// Shape of the encoder-decoder body.
///
/// `channels[l]` is the width of resolution level `l`; the last level is the
/// bottleneck. Levels are separated by 2×2 average pooling on the way down and
/// 2×2 stride-2 transpose convolutions on the way up, with skip concatenation.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct NetArch {
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub convs_per_block: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub activation: Activation,
}

/// Nonlinearity applied after every hidden convolution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    /// `a·sigmoid(a)`: smooth, so second derivatives exist everywhere.
    #[default]
    Silu,
    /// No nonlinearity; the body becomes linear.
    Identity,
}

impl Activation {
    fn eval(self, a: f64) -> (f64, f64, f64) {
        match self {
            Activation::Silu => silu(a),
            Activation::Identity => (a, 1.0, 0.0),
        }
    }
}

impl NetArch {
    /// Three resolution levels, widths 16/32/64, 5×5 kernels.
    pub fn desk() -> Self {
        Self {
            channels: vec![16, 32, 64],
            kernel: 5,
            convs_per_block: 2,
            activation: Activation::Silu,
        }
    }

    /// Five resolution levels (four poolings), widths 32…512, 5×5 kernels.
    pub fn wide() -> Self {
        Self {
            channels: vec![32, 64, 128, 256, 512],
            kernel: 5,
            convs_per_block: 2,
            activation: Activation::Silu,
        }
    }

    /// A cheap two-level network for smoke runs and tests.
    pub fn tiny() -> Self {
        Self {
            channels: vec![4, 8],
            kernel: 3,
            convs_per_block: 1,
            activation: Activation::Silu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.iter().any(|&c| c == 0) {
            return Err(Error::Config("network channels must be non-empty and positive".into()));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::Config(alloc::format!(
                "kernel size must be odd, got {}",
                self.kernel
            )));
        }
        if self.convs_per_block == 0 {
            return Err(Error::Config("convs_per_block must be at least 1".into()));
        }
        Ok(())
    }

    /// Input sides must be divisible by this value.
    pub fn divisor(&self) -> usize {
        1 << (self.channels.len() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    cin: usize,
    cout: usize,
    k: usize,
    transpose: bool,
    w_off: usize,
    b_off: usize,
}

impl Layer {
    fn weight_len(&self) -> usize {
        if self.transpose {
            self.cout * 4 * self.cin
        } else {
            self.cout * self.cin * self.k * self.k
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Node {
    Input,
    Conv { src: usize, layer: usize },
    Up { src: usize, layer: usize },
    Act { src: usize },
    Pool { src: usize },
    Concat { a: usize, b: usize },
    Add { a: usize, b: usize },
}

/// Intermediate values of one forward evaluation, reused by the reverse passes.
#[derive(Debug, Clone)]
pub struct Tape {
    rows: usize,
    cols: usize,
    values: Vec<Tensor>,
    tangents: Option<Vec<Tensor>>,
}

impl Tape {
    /// Network output of the recorded evaluation.
    pub fn output(&self) -> Grid {
        let t = self.values.last().expect("tape is never empty");
        Grid::from_vec(self.rows, self.cols, t.data.clone()).expect("output shape")
    }

    /// Directional derivative `J(u)·v`, if the tape was recorded with a tangent.
    pub fn tangent_output(&self) -> Option<Grid> {
        let t = self.tangents.as_ref()?.last()?;
        Some(Grid::from_vec(self.rows, self.cols, t.data.clone()).expect("output shape"))
    }
}

/// A trainable map `u ↦ u + body(u)` between single-channel grids of equal shape.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionNet {
    arch: NetArch,
    layers: Vec<Layer>,
    nodes: Vec<Node>,
    params: Vec<f64>,
}

fn silu(a: f64) -> (f64, f64, f64) {
    let s = 1.0 / (1.0 + (-a).exp());
    let d1 = s * (1.0 + a * (1.0 - s));
    let d2 = s * (1.0 - s) * (2.0 + a * (1.0 - 2.0 * s));
    (a * s, d1, d2)
}

struct Builder {
    layers: Vec<Layer>,
    nodes: Vec<Node>,
    n_params: usize,
}

impl Builder {
    fn push(&mut self, node: Node) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    fn layer(&mut self, cin: usize, cout: usize, k: usize, transpose: bool) -> usize {
        let mut l = Layer {
            cin,
            cout,
            k,
            transpose,
            w_off: self.n_params,
            b_off: 0,
        };
        l.b_off = l.w_off + l.weight_len();
        self.n_params = l.b_off + cout;
        self.layers.push(l);
        self.layers.len() - 1
    }

    fn conv_act(&mut self, src: usize, cin: usize, cout: usize, k: usize) -> usize {
        let layer = self.layer(cin, cout, k, false);
        let c = self.push(Node::Conv { src, layer });
        self.push(Node::Act { src: c })
    }
}

impl CorrectionNet {
    /// Fresh network: He-normal hidden weights, zero biases and a zero final
    /// convolution, so the network is exactly the identity.
    pub fn new(arch: NetArch, seed: u64) -> Result<Self> {
        let mut net = Self::skeleton(arch)?;
        net.init_hidden(seed);
        Ok(net)
    }

    /// Network whose final convolution is random as well; useful for testing
    /// properties that must hold for arbitrary parameters.
    pub fn random(arch: NetArch, seed: u64, final_scale: f64) -> Result<Self> {
        let mut net = Self::new(arch, seed)?;
        let last = *net.layers.last().expect("final layer");
        let mut rng = stream_rng(seed, 1);
        let normal = Normal::new(0.0, final_scale).expect("finite scale");
        for p in &mut net.params[last.w_off..last.b_off + last.cout] {
            *p = normal.sample(&mut rng);
        }
        Ok(net)
    }

    /// Rebuild a network from a descriptor and a flat parameter vector.
    pub fn from_params(arch: NetArch, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::skeleton(arch)?;
        if params.len() != net.params.len() {
            return Err(Error::Input(alloc::format!(
                "parameter vector has {} entries, architecture needs {}",
                params.len(),
                net.params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                context: "network parameters".into(),
            });
        }
        net.params = params;
        Ok(net)
    }

    fn skeleton(arch: NetArch) -> Result<Self> {
        arch.validate()?;
        let mut b = Builder {
            layers: Vec::new(),
            nodes: Vec::new(),
            n_params: 0,
        };
        let k = arch.kernel;
        let levels = arch.channels.len();
        let input = b.push(Node::Input);
        let mut cur = input;
        let mut cin = 1;
        let mut skips = Vec::new();
        for (l, &ch) in arch.channels.iter().enumerate() {
            if l > 0 {
                cur = b.push(Node::Pool { src: cur });
            }
            for _ in 0..arch.convs_per_block {
                cur = b.conv_act(cur, cin, ch, k);
                cin = ch;
            }
            if l + 1 < levels {
                skips.push(cur);
            }
        }
        for l in (0..levels - 1).rev() {
            let ch = arch.channels[l];
            let layer = b.layer(cin, ch, 2, true);
            cur = b.push(Node::Up { src: cur, layer });
            cur = b.push(Node::Act { src: cur });
            cur = b.push(Node::Concat { a: cur, b: skips[l] });
            cin = 2 * ch;
            for _ in 0..arch.convs_per_block {
                cur = b.conv_act(cur, cin, ch, k);
                cin = ch;
            }
        }
        let last = b.layer(cin, 1, 1, false);
        let body = b.push(Node::Conv { src: cur, layer: last });
        b.push(Node::Add { a: input, b: body });
        Ok(Self {
            arch,
            layers: b.layers,
            nodes: b.nodes,
            params: vec![0.0; b.n_params],
        })
    }

    fn init_hidden(&mut self, seed: u64) {
        let mut rng = stream_rng(seed, 0);
        let hidden = self.layers.len() - 1;
        for layer in &self.layers[..hidden] {
            let fan_in = if layer.transpose {
                layer.cin
            } else {
                layer.cin * layer.k * layer.k
            };
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
            for p in &mut self.params[layer.w_off..layer.b_off] {
                *p = normal.sample(&mut rng);
            }
        }
    }

    pub fn arch(&self) -> &NetArch {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, u: &Grid) -> Result<()> {
        let d = self.arch.divisor();
        if u.rows() == 0 || u.cols() == 0 || u.rows() % d != 0 || u.cols() % d != 0 {
            return Err(Error::Input(alloc::format!(
                "network input {}×{} must have sides divisible by {}",
                u.rows(),
                u.cols(),
                d
            )));
        }
        Ok(())
    }

    /// `net(u)`.
    pub fn apply(&self, u: &Grid) -> Result<Grid> {
        Ok(self.forward(u)?.output())
    }

    /// Forward pass keeping intermediates for [`Self::vjp`].
    pub fn forward(&self, u: &Grid) -> Result<Tape> {
        self.run(u, None)
    }

    /// Forward pass that also propagates the input direction `v`, giving
    /// `J(u)·v` and enabling [`Self::tangent_param_grad`].
    pub fn forward_with_tangent(&self, u: &Grid, v: &Grid) -> Result<Tape> {
        crate::error::check_shape(u.shape(), v.shape())?;
        self.run(u, Some(v))
    }

    fn run(&self, u: &Grid, v: Option<&Grid>) -> Result<Tape> {
        self.check_input(u)?;
        let (h, w) = u.shape();
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        let mut tangents: Option<Vec<Tensor>> = v.map(|_| Vec::with_capacity(self.nodes.len()));
        let mut col = Vec::new();
        for node in &self.nodes {
            let (val, tan) = match *node {
                Node::Input => (
                    Tensor {
                        c: 1,
                        h,
                        w,
                        data: u.as_slice().to_vec(),
                    },
                    v.map(|v| Tensor {
                        c: 1,
                        h,
                        w,
                        data: v.as_slice().to_vec(),
                    }),
                ),
                Node::Conv { src, layer } => {
                    let l = &self.layers[layer];
                    let z = self.conv_forward(l, &values[src], true, &mut col);
                    let t = tangents
                        .as_ref()
                        .map(|t| self.conv_forward(l, &t[src], false, &mut col));
                    (z, t)
                }
                Node::Up { src, layer } => {
                    let l = &self.layers[layer];
                    let z = self.up_forward(l, &values[src], true);
                    let t = tangents.as_ref().map(|t| self.up_forward(l, &t[src], false));
                    (z, t)
                }
                Node::Act { src } => {
                    let a = &values[src];
                    let mut z = Tensor::zeros_like(a);
                    let mut t = tangents.as_ref().map(|_| Tensor::zeros_like(a));
                    for (i, &ai) in a.data.iter().enumerate() {
                        let (s, d1, _) = self.arch.activation.eval(ai);
                        z.data[i] = s;
                        if let (Some(t), Some(ts)) = (t.as_mut(), tangents.as_ref()) {
                            t.data[i] = d1 * ts[src].data[i];
                        }
                    }
                    (z, t)
                }
                Node::Pool { src } => (
                    pool(&values[src]),
                    tangents.as_ref().map(|t| pool(&t[src])),
                ),
                Node::Concat { a, b } => (
                    concat(&values[a], &values[b]),
                    tangents.as_ref().map(|t| concat(&t[a], &t[b])),
                ),
                Node::Add { a, b } => {
                    let mut z = values[a].clone();
                    z.add_assign(&values[b]);
                    let t = tangents.as_ref().map(|t| {
                        let mut s = t[a].clone();
                        s.add_assign(&t[b]);
                        s
                    });
                    (z, t)
                }
            };
            values.push(val);
            if let (Some(ts), Some(t)) = (tangents.as_mut(), tan) {
                ts.push(t);
            }
        }
        Ok(Tape {
            rows: h,
            cols: w,
            values,
            tangents,
        })
    }

    fn conv_forward(&self, l: &Layer, x: &Tensor, bias: bool, col: &mut Vec<f64>) -> Tensor {
        let hw = x.plane();
        let kk = l.cin * l.k * l.k;
        let mut out = Tensor::zeros(l.cout, x.h, x.w);
        let wts = &self.params[l.w_off..l.b_off];
        if l.k == 1 {
            gemm(l.cout, kk, hw, wts, false, &x.data, false, 0.0, &mut out.data);
        } else {
            im2col(x, l.k, col);
            gemm(l.cout, kk, hw, wts, false, col, false, 0.0, &mut out.data);
        }
        if bias {
            let b = &self.params[l.b_off..l.b_off + l.cout];
            for (co, &bc) in b.iter().enumerate() {
                out.data[co * hw..(co + 1) * hw].iter_mut().for_each(|v| *v += bc);
            }
        }
        out
    }

    fn up_forward(&self, l: &Layer, x: &Tensor, bias: bool) -> Tensor {
        let hw = x.plane();
        let mut t = vec![0.0; l.cout * 4 * hw];
        let wts = &self.params[l.w_off..l.b_off];
        gemm(l.cout * 4, l.cin, hw, wts, false, &x.data, false, 0.0, &mut t);
        let (h2, w2) = (2 * x.h, 2 * x.w);
        let mut out = Tensor::zeros(l.cout, h2, w2);
        for co in 0..l.cout {
            let b = if bias { self.params[l.b_off + co] } else { 0.0 };
            for d in 0..4 {
                let (di, dj) = (d / 2, d % 2);
                let row = &t[(co * 4 + d) * hw..(co * 4 + d + 1) * hw];
                for i in 0..x.h {
                    for j in 0..x.w {
                        out.data[co * h2 * w2 + (2 * i + di) * w2 + 2 * j + dj] =
                            row[i * x.w + j] + b;
                    }
                }
            }
        }
        out
    }

    /// Vector-Jacobian product: returns `[Dnet(u)]*·cot` and accumulates
    /// `∂⟨net(u), cot⟩/∂params` into `param_grad` when given.
    pub fn vjp(&self, tape: &Tape, cot: &Grid, param_grad: Option<&mut [f64]>) -> Result<Grid> {
        crate::error::check_shape((tape.rows, tape.cols), cot.shape())?;
        let seed = Tensor {
            c: 1,
            h: tape.rows,
            w: tape.cols,
            data: cot.as_slice().to_vec(),
        };
        let (bar, _) = self.reverse(tape, Some(seed), None, param_grad)?;
        Ok(Grid::from_vec(tape.rows, tape.cols, bar.data).expect("input shape"))
    }

    /// Accumulates `∂⟨r, J(u;Θ)·v⟩/∂Θ` into `param_grad`, where the tape was
    /// recorded by [`Self::forward_with_tangent`] with direction `v`.
    pub fn tangent_param_grad(&self, tape: &Tape, r: &Grid, param_grad: &mut [f64]) -> Result<()> {
        if tape.tangents.is_none() {
            return Err(Error::Input("tape was recorded without a tangent".into()));
        }
        crate::error::check_shape((tape.rows, tape.cols), r.shape())?;
        let seed = Tensor {
            c: 1,
            h: tape.rows,
            w: tape.cols,
            data: r.as_slice().to_vec(),
        };
        self.reverse(tape, None, Some(seed), Some(param_grad))?;
        Ok(())
    }

    /// General reverse pass: accumulates the parameter gradient of
    /// `⟨cot, net(u)⟩ + ⟨tangent_cot, J(u)·v⟩` and returns the input gradient
    /// of the first term (plus the second-order input term when both are set).
    pub fn backward(
        &self,
        tape: &Tape,
        cot: Option<&Grid>,
        tangent_cot: Option<&Grid>,
        param_grad: Option<&mut [f64]>,
    ) -> Result<Grid> {
        if tangent_cot.is_some() && tape.tangents.is_none() {
            return Err(Error::Input("tape was recorded without a tangent".into()));
        }
        let seed = |g: &Grid| -> Result<Tensor> {
            crate::error::check_shape((tape.rows, tape.cols), g.shape())?;
            Ok(Tensor {
                c: 1,
                h: tape.rows,
                w: tape.cols,
                data: g.as_slice().to_vec(),
            })
        };
        let bar = cot.map(seed).transpose()?;
        let tbar = tangent_cot.map(seed).transpose()?;
        let (g, _) = self.reverse(tape, bar, tbar, param_grad)?;
        Ok(Grid::from_vec(tape.rows, tape.cols, g.data).expect("input shape"))
    }

    /// Reverse pass over the primal/tangent pair. Returns the cotangents of
    /// the input's primal and tangent values.
    fn reverse(
        &self,
        tape: &Tape,
        out_bar: Option<Tensor>,
        out_tbar: Option<Tensor>,
        mut param_grad: Option<&mut [f64]>,
    ) -> Result<(Tensor, Tensor)> {
        if let Some(g) = param_grad.as_deref() {
            if g.len() != self.params.len() {
                return Err(Error::Shape {
                    expected: (self.params.len(), 1),
                    got: (g.len(), 1),
                });
            }
        }
        let n = self.nodes.len();
        let mut bars: Vec<Option<Tensor>> = vec![None; n];
        let mut tbars: Vec<Option<Tensor>> = vec![None; n];
        bars[n - 1] = out_bar;
        tbars[n - 1] = out_tbar;
        let empty: Vec<Tensor> = Vec::new();
        let tangents = tape.tangents.as_ref().unwrap_or(&empty);
        let mut col = Vec::new();
        for i in (1..n).rev() {
            let bar = bars[i].take();
            let tbar = tbars[i].take();
            if bar.is_none() && tbar.is_none() {
                continue;
            }
            match self.nodes[i] {
                Node::Input => unreachable!("input is node 0"),
                Node::Conv { src, layer } => {
                    let l = &self.layers[layer];
                    if let Some(b) = &bar {
                        let g = self.conv_back(l, &tape.values[src], b, true, param_grad.as_deref_mut(), &mut col);
                        accumulate(&mut bars[src], g);
                    }
                    if let Some(tb) = &tbar {
                        let g = self.conv_back(l, &tangents[src], tb, false, param_grad.as_deref_mut(), &mut col);
                        accumulate(&mut tbars[src], g);
                    }
                }
                Node::Up { src, layer } => {
                    let l = &self.layers[layer];
                    if let Some(b) = &bar {
                        let g = self.up_back(l, &tape.values[src], b, true, param_grad.as_deref_mut());
                        accumulate(&mut bars[src], g);
                    }
                    if let Some(tb) = &tbar {
                        let g = self.up_back(l, &tangents[src], tb, false, param_grad.as_deref_mut());
                        accumulate(&mut tbars[src], g);
                    }
                }
                Node::Act { src } => {
                    let a = &tape.values[src];
                    let mut abar = Tensor::zeros_like(a);
                    let mut tabar = tbar.as_ref().map(|_| Tensor::zeros_like(a));
                    for (k, &ak) in a.data.iter().enumerate() {
                        let (_, d1, d2) = self.arch.activation.eval(ak);
                        let mut g = 0.0;
                        if let Some(b) = &bar {
                            g += d1 * b.data[k];
                        }
                        if let Some(tb) = &tbar {
                            g += d2 * tangents[src].data[k] * tb.data[k];
                            tabar.as_mut().expect("allocated with tbar").data[k] = d1 * tb.data[k];
                        }
                        abar.data[k] = g;
                    }
                    accumulate(&mut bars[src], abar);
                    if let Some(t) = tabar {
                        accumulate(&mut tbars[src], t);
                    }
                }
                Node::Pool { src } => {
                    if let Some(b) = &bar {
                        accumulate(&mut bars[src], unpool(b));
                    }
                    if let Some(tb) = &tbar {
                        accumulate(&mut tbars[src], unpool(tb));
                    }
                }
                Node::Concat { a, b } => {
                    let ca = tape.values[a].c;
                    if let Some(g) = &bar {
                        let (ga, gb) = split(g, ca);
                        accumulate(&mut bars[a], ga);
                        accumulate(&mut bars[b], gb);
                    }
                    if let Some(g) = &tbar {
                        let (ga, gb) = split(g, ca);
                        accumulate(&mut tbars[a], ga);
                        accumulate(&mut tbars[b], gb);
                    }
                }
                Node::Add { a, b } => {
                    if let Some(g) = &bar {
                        accumulate(&mut bars[a], g.clone());
                        accumulate(&mut bars[b], g.clone());
                    }
                    if let Some(g) = &tbar {
                        accumulate(&mut tbars[a], g.clone());
                        accumulate(&mut tbars[b], g.clone());
                    }
                }
            }
        }
        let zero = || Tensor::zeros(1, tape.rows, tape.cols);
        Ok((
            bars[0].take().unwrap_or_else(zero),
            tbars[0].take().unwrap_or_else(zero),
        ))
    }

    fn conv_back(
        &self,
        l: &Layer,
        x: &Tensor,
        g: &Tensor,
        bias: bool,
        param_grad: Option<&mut [f64]>,
        col: &mut Vec<f64>,
    ) -> Tensor {
        let hw = x.plane();
        let kk = l.cin * l.k * l.k;
        let wts = &self.params[l.w_off..l.b_off];
        if l.k != 1 {
            im2col(x, l.k, col);
        }
        let cols: &[f64] = if l.k == 1 { &x.data } else { col };
        if let Some(pg) = param_grad {
            gemm(l.cout, hw, kk, &g.data, false, cols, true, 1.0, &mut pg[l.w_off..l.b_off]);
            if bias {
                for co in 0..l.cout {
                    pg[l.b_off + co] += g.data[co * hw..(co + 1) * hw].iter().sum::<f64>();
                }
            }
        }
        let mut out = Tensor::zeros_like(x);
        if l.k == 1 {
            gemm(kk, l.cout, hw, wts, true, &g.data, false, 0.0, &mut out.data);
        } else {
            let mut dcol = vec![0.0; kk * hw];
            gemm(kk, l.cout, hw, wts, true, &g.data, false, 0.0, &mut dcol);
            col2im(&dcol, l.k, &mut out);
        }
        out
    }

    fn up_back(
        &self,
        l: &Layer,
        x: &Tensor,
        g: &Tensor,
        bias: bool,
        param_grad: Option<&mut [f64]>,
    ) -> Tensor {
        let hw = x.plane();
        let (h2, w2) = (g.h, g.w);
        let mut t = vec![0.0; l.cout * 4 * hw];
        for co in 0..l.cout {
            for d in 0..4 {
                let (di, dj) = (d / 2, d % 2);
                let row = &mut t[(co * 4 + d) * hw..(co * 4 + d + 1) * hw];
                for i in 0..x.h {
                    for j in 0..x.w {
                        row[i * x.w + j] = g.data[co * h2 * w2 + (2 * i + di) * w2 + 2 * j + dj];
                    }
                }
            }
        }
        if let Some(pg) = param_grad {
            gemm(l.cout * 4, hw, l.cin, &t, false, &x.data, true, 1.0, &mut pg[l.w_off..l.b_off]);
            if bias {
                for co in 0..l.cout {
                    pg[l.b_off + co] += g.data[co * h2 * w2..(co + 1) * h2 * w2].iter().sum::<f64>();
                }
            }
        }
        let wts = &self.params[l.w_off..l.b_off];
        let mut out = Tensor::zeros_like(x);
        gemm(l.cin, l.cout * 4, hw, wts, true, &t, false, 0.0, &mut out.data);
        out
    }
}

fn accumulate(slot: &mut Option<Tensor>, t: Tensor) {
    match slot {
        Some(s) => s.add_assign(&t),
        None => *slot = Some(t),
    }
}

fn pool(x: &Tensor) -> Tensor {
    let (h, w) = (x.h / 2, x.w / 2);
    let mut out = Tensor::zeros(x.c, h, w);
    for c in 0..x.c {
        let src = &x.data[c * x.h * x.w..(c + 1) * x.h * x.w];
        for i in 0..h {
            for j in 0..w {
                let s = src[2 * i * x.w + 2 * j]
                    + src[2 * i * x.w + 2 * j + 1]
                    + src[(2 * i + 1) * x.w + 2 * j]
                    + src[(2 * i + 1) * x.w + 2 * j + 1];
                out.data[c * h * w + i * w + j] = 0.25 * s;
            }
        }
    }
    out
}

fn unpool(g: &Tensor) -> Tensor {
    let (h, w) = (2 * g.h, 2 * g.w);
    let mut out = Tensor::zeros(g.c, h, w);
    for c in 0..g.c {
        for i in 0..h {
            for j in 0..w {
                out.data[c * h * w + i * w + j] = 0.25 * g.data[c * g.h * g.w + (i / 2) * g.w + j / 2];
            }
        }
    }
    out
}

fn concat(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!((a.h, a.w), (b.h, b.w));
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Tensor {
        c: a.c + b.c,
        h: a.h,
        w: a.w,
        data,
    }
}

fn split(g: &Tensor, ca: usize) -> (Tensor, Tensor) {
    let cut = ca * g.plane();
    (
        Tensor {
            c: ca,
            h: g.h,
            w: g.w,
            data: g.data[..cut].to_vec(),
        },
        Tensor {
            c: g.c - ca,
            h: g.h,
            w: g.w,
            data: g.data[cut..].to_vec(),
        },
    )
}
