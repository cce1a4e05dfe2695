//! Reverse-mode differentiation over a recorded tape.
//!
//! Nodes are appended in evaluation order, so walking the tape backwards is
//! a reverse topological traversal and each node is visited exactly once.
//! Every node holds a flat `Vec<f64>`; shapes are carried by the operations
//! that need them.

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::dmp::Integrator;
use crate::error::{invalid_input, Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Linear { w: Var, b: Var, x: Var, rows: usize, cols: usize },
    Tanh(Var),
    Relu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine { a: Var, scale: f64 },
    AffineVec { a: Var, scale: Vec<f64> },
    Exp(Var),
    Square(Var),
    Sqrt(Var),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
    Slice { a: Var, start: usize },
    Clamp { a: Var, lo: f64, hi: f64 },
    Min(Var, Var),
    Integrate(Box<IntegrateNode>),
    SpatialSoftmax { a: Var, channels: usize, pixels: usize, temperature: f64, weights: Vec<f64>, coords: Arc<[(f64, f64)]> },
    AvgPool { a: Var, channels: usize, height: usize, width: usize, pool: usize },
}

#[derive(Debug, Clone)]
struct IntegrateNode {
    params: Var,
    integrator: Arc<Integrator>,
    y0: Vec<f64>,
    alpha: f64,
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

/// One recorded forward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of one backward pass, indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
}

impl Gradients {
    /// Gradient with respect to `var`; zeros when nothing flowed into it.
    pub fn wrt(&self, var: Var) -> Vec<f64> {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => vec![0.0; self.lens[var.0]],
        }
    }

    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads[var.0].as_deref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn same_len(&self, a: Var, b: Var, what: &str) -> Result<usize> {
        let (la, lb) = (self.nodes[a.0].value.len(), self.nodes[b.0].value.len());
        if la != lb {
            return Err(invalid_input!("{what}: operand lengths {la} and {lb} differ"));
        }
        Ok(la)
    }

    /// Input, constant or parameter.
    pub fn leaf(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// `W x + b` with `W` stored row-major as `rows × cols`.
    pub fn linear(&mut self, w: Var, b: Var, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let (wv, bv, xv) = (&self.nodes[w.0].value, &self.nodes[b.0].value, &self.nodes[x.0].value);
        if wv.len() != rows * cols || bv.len() != rows || xv.len() != cols {
            return Err(invalid_input!(
                "linear layer {rows}x{cols} got weight {}, bias {}, input {}",
                wv.len(),
                bv.len(),
                xv.len()
            ));
        }
        let out = (0..rows)
            .map(|r| {
                let row = &wv[r * cols..(r + 1) * cols];
                bv[r] + row.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Ok(self.push(out, Op::Linear { w, b, x, rows, cols }))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.iter().map(|v| libm::tanh(*v)).collect();
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.iter().map(|v| v.max(0.0)).collect();
        self.push(out, Op::Relu(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "add")?;
        let out = self.nodes[a.0].value.iter().zip(&self.nodes[b.0].value).map(|(x, y)| x + y).collect();
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "sub")?;
        let out = self.nodes[a.0].value.iter().zip(&self.nodes[b.0].value).map(|(x, y)| x - y).collect();
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "mul")?;
        let out = self.nodes[a.0].value.iter().zip(&self.nodes[b.0].value).map(|(x, y)| x * y).collect();
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// `a·scale + offset` with scalar constants.
    pub fn affine(&mut self, a: Var, scale: f64, offset: f64) -> Var {
        let out = self.nodes[a.0].value.iter().map(|v| v * scale + offset).collect();
        self.push(out, Op::Affine { a, scale })
    }

    /// Elementwise `a·scale + offset` with constant vectors.
    pub fn affine_vec(&mut self, a: Var, scale: &[f64], offset: &[f64]) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        if scale.len() != av.len() || offset.len() != av.len() {
            return Err(invalid_input!("affine constants do not match operand length {}", av.len()));
        }
        let out = av.iter().zip(scale).zip(offset).map(|((v, s), o)| v * s + o).collect();
        Ok(self.push(out, Op::AffineVec { a, scale: scale.to_vec() }))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.iter().map(|v| libm::exp(*v)).collect();
        self.push(out, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.iter().map(|v| v * v).collect();
        self.push(out, Op::Square(a))
    }

    /// Square root; the gradient at zero is taken as zero.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.iter().map(|v| libm::sqrt(v.max(0.0))).collect();
        self.push(out, Op::Sqrt(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = vec![self.nodes[a.0].value.iter().sum()];
        self.push(out, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let out = vec![v.iter().sum::<f64>() / v.len().max(1) as f64];
        self.push(out, Op::Mean(a))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let out = parts.iter().flat_map(|p| self.nodes[p.0].value.iter().copied()).collect();
        self.push(out, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        if start + len > av.len() {
            return Err(invalid_input!("slice {start}..{} out of {}", start + len, av.len()));
        }
        let out = av[start..start + len].to_vec();
        Ok(self.push(out, Op::Slice { a, start }))
    }

    /// Clamp into `[lo, hi]`; no gradient flows through clamped entries.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.nodes[a.0].value.iter().map(|v| v.clamp(lo, hi)).collect();
        self.push(out, Op::Clamp { a, lo, hi })
    }

    /// Elementwise minimum; ties send the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "min")?;
        let out = self.nodes[a.0].value.iter().zip(&self.nodes[b.0].value).map(|(x, y)| x.min(*y)).collect();
        Ok(self.push(out, Op::Min(a, b)))
    }

    /// DMP rollout as a node. `params` holds the weights (`dims × n`)
    /// followed by the absolute goals (`dims`); the output is the
    /// `steps × dims` position trajectory. Start state and gain are constants.
    pub fn integrate(
        &mut self,
        params: Var,
        integrator: Arc<Integrator>,
        y0: &[f64],
        ydot0: &[f64],
        alpha: f64,
    ) -> Result<Var> {
        let dims = y0.len();
        let n = integrator.bank().len();
        let pv = &self.nodes[params.0].value;
        if pv.len() != dims * (n + 1) || ydot0.len() != dims {
            return Err(invalid_input!(
                "integrator node expects {} parameters for {dims} dims, got {}",
                dims * (n + 1),
                pv.len()
            ));
        }
        let (w, g) = pv.split_at(dims * n);
        let (y, _, _) = integrator.rollout_raw(w, g, y0, ydot0, alpha)?;
        let node = IntegrateNode { params, integrator, y0: y0.to_vec(), alpha };
        Ok(self.push(y, Op::Integrate(Box::new(node))))
    }

    /// Per-channel soft-argmax over a `channels × height × width` map.
    /// Output is `[x_0, y_0, x_1, y_1, …]` in normalized `[-1, 1]`
    /// coordinates (column → x, row → y).
    pub fn spatial_softmax(
        &mut self,
        a: Var,
        channels: usize,
        height: usize,
        width: usize,
        temperature: f64,
    ) -> Result<Var> {
        let pixels = height * width;
        let av = &self.nodes[a.0].value;
        if av.len() != channels * pixels || pixels == 0 {
            return Err(invalid_input!(
                "spatial softmax over {channels}x{height}x{width} got {} values",
                av.len()
            ));
        }
        if !(temperature > 0.0) {
            return Err(invalid_input!("temperature must be positive"));
        }
        let coords: Arc<[(f64, f64)]> = pixel_coords(height, width).into();
        let mut weights = vec![0.0; av.len()];
        let mut out = Vec::with_capacity(2 * channels);
        for c in 0..channels {
            let map = &av[c * pixels..(c + 1) * pixels];
            let s = &mut weights[c * pixels..(c + 1) * pixels];
            let peak = map.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
            let mut total = 0.0;
            for (w, v) in s.iter_mut().zip(map) {
                *w = libm::exp((v - peak) / temperature);
                total += *w;
            }
            s.iter_mut().for_each(|w| *w /= total);
            let fx: f64 = s.iter().zip(coords.iter()).map(|(w, (x, _))| w * x).sum();
            let fy: f64 = s.iter().zip(coords.iter()).map(|(w, (_, y))| w * y).sum();
            out.push(fx.clamp(-1.0, 1.0));
            out.push(fy.clamp(-1.0, 1.0));
        }
        Ok(self.push(out, Op::SpatialSoftmax { a, channels, pixels, temperature, weights, coords }))
    }

    /// Non-overlapping `pool × pool` average pooling. Trailing rows or
    /// columns that do not fill a window are dropped.
    pub fn avg_pool(&mut self, a: Var, channels: usize, height: usize, width: usize, pool: usize) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        if av.len() != channels * height * width || pool == 0 || pool > height || pool > width {
            return Err(invalid_input!("cannot pool {channels}x{height}x{width} by {pool}"));
        }
        let (oh, ow) = (height / pool, width / pool);
        let norm = 1.0 / (pool * pool) as f64;
        let mut out = Vec::with_capacity(channels * oh * ow);
        for c in 0..channels {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for di in 0..pool {
                        let row = c * height * width + (i * pool + di) * width + j * pool;
                        acc += av[row..row + pool].iter().sum::<f64>();
                    }
                    out.push(acc * norm);
                }
            }
        }
        Ok(self.push(out, Op::AvgPool { a, channels, height, width, pool }))
    }

    /// Reverse pass seeded with `output_grad` at `output`. A tape can be
    /// differentiated once.
    pub fn backward(&mut self, output: Var, output_grad: &[f64]) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if output_grad.len() != self.nodes[output.0].value.len() {
            return Err(invalid_input!(
                "output gradient has {} entries, node has {}",
                output_grad.len(),
                self.nodes[output.0].value.len()
            ));
        }
        self.consumed = true;
        let lens: Vec<usize> = self.nodes.iter().map(|n| n.value.len()).collect();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(output_grad.to_vec());

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Linear { w, b, x, rows, cols } => {
                    let (rows, cols) = (*rows, *cols);
                    let wv = &self.nodes[w.0].value;
                    let xv = &self.nodes[x.0].value;
                    let gw = slot(&mut grads, &lens, *w);
                    for r in 0..rows {
                        if g[r] != 0.0 {
                            let row = &mut gw[r * cols..(r + 1) * cols];
                            row.iter_mut().zip(xv).for_each(|(a, xi)| *a += g[r] * xi);
                        }
                    }
                    accumulate(slot(&mut grads, &lens, *b), &g);
                    let gx = slot(&mut grads, &lens, *x);
                    for r in 0..rows {
                        if g[r] != 0.0 {
                            let row = &wv[r * cols..(r + 1) * cols];
                            gx.iter_mut().zip(row).for_each(|(a, wi)| *a += g[r] * wi);
                        }
                    }
                }
                Op::Tanh(a) => {
                    let gi: Vec<f64> = node.value.iter().zip(&g).map(|(y, g)| g * (1.0 - y * y)).collect();
                    accumulate(slot(&mut grads, &lens, *a), &gi);
                }
                Op::Relu(a) => {
                    let av = &self.nodes[a.0].value;
                    let gi: Vec<f64> = av.iter().zip(&g).map(|(x, g)| if *x > 0.0 { *g } else { 0.0 }).collect();
                    accumulate(slot(&mut grads, &lens, *a), &gi);
                }
                Op::Add(a, b) => {
                    accumulate(slot(&mut grads, &lens, *a), &g);
                    accumulate(slot(&mut grads, &lens, *b), &g);
                }
                Op::Sub(a, b) => {
                    accumulate(slot(&mut grads, &lens, *a), &g);
                    let gb = slot(&mut grads, &lens, *b);
                    gb.iter_mut().zip(&g).for_each(|(a, g)| *a -= g);
                }
                Op::Mul(a, b) => {
                    let ga: Vec<f64> = self.nodes[b.0].value.iter().zip(&g).map(|(y, g)| y * g).collect();
                    let gb: Vec<f64> = self.nodes[a.0].value.iter().zip(&g).map(|(x, g)| x * g).collect();
                    accumulate(slot(&mut grads, &lens, *a), &ga);
                    accumulate(slot(&mut grads, &lens, *b), &gb);
                }
                Op::Affine { a, scale } => {
                    let gi: Vec<f64> = g.iter().map(|g| g * scale).collect();
                    accumulate(slot(&mut grads, &lens, *a), &gi);
                }
                Op::AffineVec { a, scale } => {
                    let gi: Vec<f64> = g.iter().zip(scale).map(|(g, s)| g * s).collect();
                    accumulate(slot(&mut grads, &lens, *a), &gi);
                }
                Op::Exp(a) => {
                    let gi: Vec<f64> = node.value.iter().zip(&g).map(|(y, g)| y * g).collect();
                    accumulate(slot(&mut grads, &lens, *a), &gi);
                }
                Op::Square(a) => {
                    let gi: Vec<f64> = self.nodes[a.0].value.iter().zip(&g).map(|(x, g)| 2.0 * x * g).collect();
                    accumulate(slot(&mut grads, &lens, *a), &gi);
                }
                Op::Sqrt(a) => {
                    let gi: Vec<f64> =
                        node.value.iter().zip(&g).map(|(y, g)| if *y > 0.0 { g / (2.0 * y) } else { 0.0 }).collect();
                    accumulate(slot(&mut grads, &lens, *a), &gi);
                }
                Op::Sum(a) => {
                    slot(&mut grads, &lens, *a).iter_mut().for_each(|x| *x += g[0]);
                }
                Op::Mean(a) => {
                    let share = g[0] / lens[a.0].max(1) as f64;
                    slot(&mut grads, &lens, *a).iter_mut().for_each(|x| *x += share);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = lens[p.0];
                        accumulate(slot(&mut grads, &lens, *p), &g[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::Slice { a, start } => {
                    let ga = slot(&mut grads, &lens, *a);
                    accumulate(&mut ga[*start..*start + g.len()], &g);
                }
                Op::Clamp { a, lo, hi } => {
                    let av = &self.nodes[a.0].value;
                    let gi: Vec<f64> =
                        av.iter().zip(&g).map(|(x, g)| if *x >= *lo && *x <= *hi { *g } else { 0.0 }).collect();
                    accumulate(slot(&mut grads, &lens, *a), &gi);
                }
                Op::Min(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let mut ga = vec![0.0; g.len()];
                    let mut gb = vec![0.0; g.len()];
                    for i in 0..g.len() {
                        if av[i] <= bv[i] {
                            ga[i] = g[i];
                        } else {
                            gb[i] = g[i];
                        }
                    }
                    accumulate(slot(&mut grads, &lens, *a), &ga);
                    accumulate(slot(&mut grads, &lens, *b), &gb);
                }
                Op::Integrate(n) => {
                    let pv = &self.nodes[n.params.0].value;
                    let dims = n.y0.len();
                    let basis = n.integrator.bank().len();
                    let (w, goal) = pv.split_at(dims * basis);
                    let (gw, gg) = n.integrator.backprop_positions(w, goal, &n.y0, n.alpha, &g);
                    let gp = slot(&mut grads, &lens, n.params);
                    accumulate(&mut gp[..dims * basis], &gw);
                    accumulate(&mut gp[dims * basis..], &gg);
                }
                Op::SpatialSoftmax { a, channels, pixels, temperature, weights, coords } => {
                    let mut gi = vec![0.0; channels * pixels];
                    for c in 0..*channels {
                        let (fx, fy) = (node.value[2 * c], node.value[2 * c + 1]);
                        let (gx, gy) = (g[2 * c], g[2 * c + 1]);
                        let s = &weights[c * pixels..(c + 1) * pixels];
                        for p in 0..*pixels {
                            let (x, y) = coords[p];
                            gi[c * pixels + p] = s[p] * (gx * (x - fx) + gy * (y - fy)) / temperature;
                        }
                    }
                    accumulate(slot(&mut grads, &lens, *a), &gi);
                }
                Op::AvgPool { a, channels, height, width, pool } => {
                    let (oh, ow) = (height / pool, width / pool);
                    let norm = 1.0 / (pool * pool) as f64;
                    let ga = slot(&mut grads, &lens, *a);
                    let mut k = 0;
                    for c in 0..*channels {
                        for i in 0..oh {
                            for j in 0..ow {
                                for di in 0..*pool {
                                    let row = c * height * width + (i * pool + di) * width + j * pool;
                                    ga[row..row + pool].iter_mut().for_each(|x| *x += g[k] * norm);
                                }
                                k += 1;
                            }
                        }
                    }
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads, lens })
    }

    /// Backward from a scalar node.
    pub fn backward_scalar(&mut self, output: Var) -> Result<Gradients> {
        self.backward(output, &[1.0])
    }
}

fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], lens: &[usize], v: Var) -> &'a mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; lens[v.0]])
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// Normalized pixel-center coordinates, row-major: `x` from the column,
/// `y` from the row, both spanning `[-1, 1]`.
pub fn pixel_coords(height: usize, width: usize) -> Vec<(f64, f64)> {
    let axis = |i: usize, n: usize| if n == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 };
    (0..height).flat_map(|i| (0..width).map(move |j| (axis(j, width), axis(i, height)))).collect()
}

/// Soft-argmax on a plain feature map (no tape).
pub fn spatial_softmax(map: &[f64], channels: usize, height: usize, width: usize, temperature: f64) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let a = tape.leaf(map.to_vec());
    let out = tape.spatial_softmax(a, channels, height, width, temperature)?;
    Ok(tape.value(out).to_vec())
}
