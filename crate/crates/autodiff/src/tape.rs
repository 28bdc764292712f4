//! Reverse-mode tape over row-major 2-D tensors.

use crate::error::{Result, TensorError};
use crate::real::Real;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub usize);

/// Segment id that excludes a row from every group.
pub const DROP: usize = usize::MAX;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, T),
    MatMul(Var, Var),
    Concat(Vec<Var>),
    Gather(Var, Vec<usize>),
    ScatterAdd(Var, Vec<usize>, Var),
    SegmentSum {
        src: Var,
        seg: Vec<usize>,
        scale: Vec<T>,
    },
    SegmentMax {
        src: Var,
        arg: Vec<usize>,
    },
    LeakyRelu(Var, T),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Softmax(Var),
    Log(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<T>,
    },
    GumbelSt {
        logits: Var,
        seg: Vec<usize>,
        soft: Vec<T>,
        inv_tau: T,
    },
    RowsDot(Var, Var),
    Sum(Var),
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Vec<T>,
    rows: usize,
    cols: usize,
    requires_grad: bool,
    op: Op<T>,
}

#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn segment_checks(op: &'static str, seg: &[usize], rows: usize, groups: usize) -> Result<()> {
    if seg.len() != rows {
        return Err(TensorError::ShapeMismatch {
            op,
            left: (rows, 1),
            right: (seg.len(), 1),
        });
    }
    match seg.iter().find(|&&g| g != DROP && g >= groups) {
        Some(&group) => Err(TensorError::GroupOutOfRange { op, group, groups }),
        None => Ok(()),
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Vec<T>, rows: usize, cols: usize, op: Op<T>, inputs: &[Var]) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            rows,
            cols,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn new_leaf(&mut self, value: Vec<T>, rows: usize, cols: usize, requires_grad: bool) -> Result<Var> {
        if value.len() != rows * cols {
            return Err(TensorError::ShapeMismatch {
                op: "leaf",
                left: (rows, cols),
                right: (value.len(), 1),
            });
        }
        self.nodes.push(Node {
            value,
            rows,
            cols,
            requires_grad,
            op: Op::Leaf,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Vec<T>, rows: usize, cols: usize) -> Result<Var> {
        self.new_leaf(value, rows, cols, true)
    }

    pub fn constant(&mut self, value: Vec<T>, rows: usize, cols: usize) -> Result<Var> {
        self.new_leaf(value, rows, cols, false)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::ShapeMismatch { op, left: sa, right: sb });
        }
        Ok(sa)
    }

    fn zip(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, node: Op<T>) -> Result<Var> {
        let (r, c) = self.same_shape(op, a, b)?;
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(value, r, c, node, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a `[1, c]` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if self.shape(row) != (1, c) {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                left: (r, c),
                right: self.shape(row),
            });
        }
        let b = self.value(row);
        let mut value = self.value(a).to_vec();
        for x in value.chunks_mut(c.max(1)) {
            add_into(x, b);
        }
        Ok(self.push(value, r, c, Op::AddRow(a, row), &[a, row]))
    }

    /// Scales row `i` of `a` by `s[i]`, where `s` is `[r, 1]`.
    pub fn mul_col(&mut self, a: Var, s: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if self.shape(s) != (r, 1) {
            return Err(TensorError::ShapeMismatch {
                op: "mul_col",
                left: (r, c),
                right: self.shape(s),
            });
        }
        let sv = self.value(s);
        let mut value = self.value(a).to_vec();
        for (i, row) in value.chunks_mut(c.max(1)).enumerate().take(r) {
            for x in row {
                *x *= sv[i];
            }
        }
        Ok(self.push(value, r, c, Op::MulCol(a, s), &[a, s]))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Result<Var> {
        let (r, c) = self.shape(a);
        let value = self.value(a).iter().map(|&x| x * k).collect();
        Ok(self.push(value, r, c, Op::Scale(a, k), &[a]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((m, k), (k2, n)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: (m, k),
                right: (k2, n),
            });
        }
        let mut value = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            self.value(a),
            k as isize,
            1,
            self.value(b),
            n as isize,
            1,
            T::zero(),
            &mut value,
            n as isize,
            1,
        );
        Ok(self.push(value, m, n, Op::MatMul(a, b), &[a, b]))
    }

    /// Concatenates along columns.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(TensorError::InvalidArgument {
                op: "concat",
                reason: "no inputs".into(),
            });
        };
        let r = self.shape(first).0;
        for &p in parts {
            if self.shape(p).0 != r {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: self.shape(first),
                    right: self.shape(p),
                });
            }
        }
        let c: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut value = Vec::with_capacity(r * c);
        for i in 0..r {
            for &p in parts {
                let pc = self.shape(p).1;
                value.extend_from_slice(&self.value(p)[i * pc..(i + 1) * pc]);
            }
        }
        Ok(self.push(value, r, c, Op::Concat(parts.to_vec()), parts))
    }

    /// Row selection, `out[i] = a[idx[i]]`.
    pub fn gather(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(TensorError::IndexOutOfRange {
                op: "gather",
                index: bad,
                len: r,
            });
        }
        let src = self.value(a);
        let mut value = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            value.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        Ok(self.push(value, idx.len(), c, Op::Gather(a, idx.to_vec()), &[a]))
    }

    /// `base` with row `idx[i]` incremented by `delta[i]`.
    pub fn scatter_add(&mut self, base: Var, idx: &[usize], delta: Var) -> Result<Var> {
        let (r, c) = self.shape(base);
        let (dr, dc) = self.shape(delta);
        if dr != idx.len() || dc != c {
            return Err(TensorError::ShapeMismatch {
                op: "scatter_add",
                left: (idx.len(), c),
                right: (dr, dc),
            });
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(TensorError::IndexOutOfRange {
                op: "scatter_add",
                index: bad,
                len: r,
            });
        }
        let mut value = self.value(base).to_vec();
        let d = self.value(delta);
        for (k, &i) in idx.iter().enumerate() {
            for j in 0..c {
                value[i * c + j] += d[k * c + j];
            }
        }
        Ok(self.push(value, r, c, Op::ScatterAdd(base, idx.to_vec(), delta), &[base, delta]))
    }

    /// `out[g] = scale[g] * sum of rows with seg == g`; rows tagged [`DROP`] are ignored.
    pub fn segment_sum_scaled(&mut self, src: Var, seg: &[usize], scale: Vec<T>) -> Result<Var> {
        let (r, c) = self.shape(src);
        let groups = scale.len();
        segment_checks("segment_sum", seg, r, groups)?;
        let x = self.value(src);
        let mut value = vec![T::zero(); groups * c];
        for (i, &g) in seg.iter().enumerate() {
            if g == DROP {
                continue;
            }
            for j in 0..c {
                value[g * c + j] += x[i * c + j];
            }
        }
        for (g, &s) in scale.iter().enumerate() {
            for v in &mut value[g * c..(g + 1) * c] {
                *v *= s;
            }
        }
        let op = Op::SegmentSum {
            src,
            seg: seg.to_vec(),
            scale,
        };
        Ok(self.push(value, groups, c, op, &[src]))
    }

    pub fn segment_sum(&mut self, src: Var, seg: &[usize], groups: usize) -> Result<Var> {
        self.segment_sum_scaled(src, seg, vec![T::one(); groups])
    }

    /// Group means; empty groups give zero rows.
    pub fn segment_mean(&mut self, src: Var, seg: &[usize], groups: usize) -> Result<Var> {
        let counts = group_counts(seg, groups);
        let scale = counts
            .iter()
            .map(|&n| if n == 0 { T::zero() } else { T::one() / T::lit(n as f64) })
            .collect();
        self.segment_sum_scaled(src, seg, scale)
    }

    /// `mean(rows) * ln(count + 1)` per group.
    pub fn log_scaled_sum(&mut self, src: Var, seg: &[usize], groups: usize) -> Result<Var> {
        segment_checks("log_scaled_sum", seg, self.shape(src).0, groups)?;
        let counts = group_counts(seg, groups);
        if let Some(group) = counts.iter().position(|&n| n == 0) {
            return Err(TensorError::EmptyGroup {
                op: "log_scaled_sum",
                group,
            });
        }
        let scale = counts.iter().map(|&n| T::lit(log_scale(n as f64))).collect();
        self.segment_sum_scaled(src, seg, scale)
    }

    /// Columnwise group maxima; ties go to the first row, empty groups give 0.
    pub fn segment_max(&mut self, src: Var, seg: &[usize], groups: usize) -> Result<Var> {
        let (r, c) = self.shape(src);
        segment_checks("segment_max", seg, r, groups)?;
        let x = self.value(src);
        let mut arg = vec![DROP; groups * c];
        for (i, &g) in seg.iter().enumerate() {
            if g == DROP {
                continue;
            }
            for j in 0..c {
                let slot = &mut arg[g * c + j];
                if *slot == DROP || x[i * c + j] > x[*slot * c + j] {
                    *slot = i;
                }
            }
        }
        let value = arg
            .iter()
            .enumerate()
            .map(|(k, &i)| if i == DROP { T::zero() } else { x[i * c + k % c] })
            .collect();
        Ok(self.push(value, groups, c, Op::SegmentMax { src, arg }, &[src]))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Result<Var> {
        let (r, c) = self.shape(a);
        let value = self
            .value(a)
            .iter()
            .map(|&x| if x >= T::zero() { x } else { x * slope })
            .collect();
        Ok(self.push(value, r, c, Op::LeakyRelu(a, slope), &[a]))
    }

    /// Per-row normalization with `[1, c]` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        for p in [gain, bias] {
            if self.shape(p) != (1, c) {
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    left: (r, c),
                    right: self.shape(p),
                });
            }
        }
        let (xv, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
        let mut xhat = Vec::with_capacity(r * c);
        let mut inv_std = Vec::with_capacity(r);
        let mut value = Vec::with_capacity(r * c);
        let n = T::lit(c as f64);
        for row in xv.chunks(c.max(1)).take(r) {
            let mu = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / n;
            let inv = T::one() / (var + T::lit(LN_EPS)).sqrt();
            inv_std.push(inv);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mu) * inv;
                xhat.push(h);
                value.push(h * gv[j] + bv[j]);
            }
        }
        let op = Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        };
        Ok(self.push(value, r, c, op, &[x, gain, bias]))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        let mut value = self.value(a).to_vec();
        for row in value.chunks_mut(c.max(1)) {
            softmax_in_place(row);
        }
        Ok(self.push(value, r, c, Op::Softmax(a), &[a]))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        let value: Vec<T> = self.value(a).iter().map(|&x| x.ln()).collect();
        if value.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: "log" });
        }
        Ok(self.push(value, r, c, Op::Log(a), &[a]))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(logits);
        if targets.len() != r || r == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                left: (r, c),
                right: (targets.len(), 1),
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(TensorError::IndexOutOfRange {
                op: "cross_entropy",
                index: bad,
                len: c,
            });
        }
        let mut probs = self.value(logits).to_vec();
        let mut loss = T::zero();
        for (row, &t) in probs.chunks_mut(c).zip(targets) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
            loss += lse - row[t];
            softmax_in_place(row);
        }
        loss /= T::lit(r as f64);
        if !loss.is_finite() {
            return Err(TensorError::NonFinite { op: "cross_entropy" });
        }
        let op = Op::CrossEntropy {
            logits,
            targets: targets.to_vec(),
            probs,
        };
        Ok(self.push(vec![loss], 1, 1, op, &[logits]))
    }

    /// Straight-through Gumbel softmax over `[m, 1]` logits partitioned by `seg`.
    ///
    /// Forward is the one-hot argmax of `(logits + noise) / tau` per segment when
    /// `hard`, else the softmax itself. Backward is always the softmax Jacobian.
    pub fn gumbel_softmax_st(
        &mut self,
        logits: Var,
        seg: &[usize],
        groups: usize,
        noise: &[T],
        tau: T,
        hard: bool,
    ) -> Result<Var> {
        let op_name = "gumbel_softmax_st";
        let (m, c) = self.shape(logits);
        if c != 1 || noise.len() != m {
            return Err(TensorError::ShapeMismatch {
                op: op_name,
                left: (m, c),
                right: (noise.len(), 1),
            });
        }
        if tau.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
            return Err(TensorError::InvalidArgument {
                op: op_name,
                reason: format!("temperature {tau} must be positive"),
            });
        }
        segment_checks(op_name, seg, m, groups)?;
        if seg.contains(&DROP) {
            return Err(TensorError::InvalidArgument {
                op: op_name,
                reason: "every row needs a segment".into(),
            });
        }
        let z = self.value(logits);
        if z.iter().chain(noise).any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let inv_tau = T::one() / tau;
        let s: Vec<T> = z.iter().zip(noise).map(|(&a, &b)| (a + b) * inv_tau).collect();
        let mut best = vec![DROP; groups];
        let mut sum = vec![T::zero(); groups];
        for (i, &g) in seg.iter().enumerate() {
            if best[g] == DROP || s[i] > s[best[g]] {
                best[g] = i;
            }
        }
        let mut soft = vec![T::zero(); m];
        for (i, &g) in seg.iter().enumerate() {
            soft[i] = (s[i] - s[best[g]]).exp();
            sum[g] += soft[i];
        }
        for (i, &g) in seg.iter().enumerate() {
            soft[i] /= sum[g];
        }
        let value = if hard {
            (0..m)
                .map(|i| if best[seg[i]] == i { T::one() } else { T::zero() })
                .collect()
        } else {
            soft.clone()
        };
        let op = Op::GumbelSt {
            logits,
            seg: seg.to_vec(),
            soft,
            inv_tau,
        };
        Ok(self.push(value, m, 1, op, &[logits]))
    }

    /// Row-wise dot products, `[r, c] x [r, c] -> [r, 1]`.
    pub fn rows_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape("rows_dot", a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let value = (0..r)
            .map(|i| {
                x[i * c..(i + 1) * c]
                    .iter()
                    .zip(&y[i * c..(i + 1) * c])
                    .map(|(&p, &q)| p * q)
                    .sum()
            })
            .collect();
        Ok(self.push(value, r, 1, Op::RowsDot(a, b), &[a, b]))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).iter().copied().sum();
        Ok(self.push(vec![s], 1, 1, Op::Sum(a), &[a]))
    }

    /// Backpropagates from a `[1, 1]` output.
    pub fn backward(&self, out: Var) -> Result<Gradients<T>> {
        if self.shape(out) != (1, 1) {
            return Err(TensorError::ShapeMismatch {
                op: "backward",
                left: self.shape(out),
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(vec![T::one()]);
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            if matches!(node.op, Op::Leaf) || i == out.0 {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            let n = &self.nodes[v.0];
            if !n.requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); n.rows * n.cols]);
            f(slot);
        };
        let pass = |v: Var, grads: &mut [Option<Vec<T>>]| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(d) => add_into(d, g),
                slot => *slot = Some(g.to_vec()),
            }
        };
        let (rows, cols) = (node.rows, node.cols);
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                pass(*a, grads);
                pass(*b, grads);
            }
            Op::Sub(a, b) => {
                acc(*b, &mut |d| d.iter_mut().zip(g).for_each(|(x, &y)| *x -= y));
                pass(*a, grads);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] * bv[k];
                    }
                });
                acc(*b, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] * av[k];
                    }
                });
            }
            Op::AddRow(a, row) => {
                acc(*row, &mut |d| {
                    for gr in g.chunks(cols.max(1)) {
                        add_into(d, gr);
                    }
                });
                pass(*a, grads);
            }
            Op::MulCol(a, s) => {
                let (av, sv) = (self.value(*a), self.value(*s));
                let c = cols.max(1);
                acc(*a, &mut |d| {
                    for ((dr, gr), &k) in d.chunks_mut(c).zip(g.chunks(c)).zip(sv) {
                        dr.iter_mut().zip(gr).for_each(|(x, &y)| *x += y * k);
                    }
                });
                acc(*s, &mut |d| {
                    for ((x, gr), ar) in d.iter_mut().zip(g.chunks(c)).zip(av.chunks(c)) {
                        *x += gr.iter().zip(ar).map(|(&p, &q)| p * q).sum::<T>();
                    }
                });
            }
            Op::Scale(a, k) => {
                acc(*a, &mut |d| d.iter_mut().zip(g).for_each(|(x, &y)| *x += y * *k));
            }
            Op::MatMul(a, b) => {
                let ((m, k), n) = (self.shape(*a), cols);
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |d| {
                    T::gemm(m, n, k, T::one(), g, n as isize, 1, bv, 1, n as isize, T::one(), d, k as isize, 1)
                });
                acc(*b, &mut |d| {
                    T::gemm(k, m, n, T::one(), av, 1, k as isize, g, n as isize, 1, T::one(), d, n as isize, 1)
                });
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let pc = self.shape(p).1;
                    acc(p, &mut |d| {
                        for i in 0..rows {
                            add_into(&mut d[i * pc..(i + 1) * pc], &g[i * cols + off..i * cols + off + pc]);
                        }
                    });
                    off += pc;
                }
            }
            Op::Gather(a, idx) => {
                acc(*a, &mut |d| {
                    for (k, &i) in idx.iter().enumerate() {
                        add_into(&mut d[i * cols..(i + 1) * cols], &g[k * cols..(k + 1) * cols]);
                    }
                });
            }
            Op::ScatterAdd(base, idx, delta) => {
                acc(*delta, &mut |d| {
                    for (k, &i) in idx.iter().enumerate() {
                        add_into(&mut d[k * cols..(k + 1) * cols], &g[i * cols..(i + 1) * cols]);
                    }
                });
                pass(*base, grads);
            }
            Op::SegmentSum { src, seg, scale } => {
                acc(*src, &mut |d| {
                    for (dr, &s) in d.chunks_mut(cols.max(1)).zip(seg) {
                        if s == DROP {
                            continue;
                        }
                        let k = scale[s];
                        dr.iter_mut().zip(&g[s * cols..(s + 1) * cols]).for_each(|(x, &y)| *x += y * k);
                    }
                });
            }
            Op::SegmentMax { src, arg } => {
                acc(*src, &mut |d| {
                    for (k, &i) in arg.iter().enumerate() {
                        if i != DROP {
                            d[i * cols + k % cols] += g[k];
                        }
                    }
                });
            }
            Op::LeakyRelu(a, slope) => {
                let av = self.value(*a);
                acc(*a, &mut |d| {
                    for ((x, &y), &v) in d.iter_mut().zip(g).zip(av) {
                        *x += if v >= T::zero() { y } else { y * *slope };
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let gv = self.value(*gain);
                let n = T::lit(cols as f64);
                acc(*x, &mut |d| {
                    for i in 0..rows {
                        let r = i * cols..(i + 1) * cols;
                        let (gr, hr) = (&g[r.clone()], &xhat[r.clone()]);
                        let mut mean_dh = T::zero();
                        let mut mean_dh_h = T::zero();
                        for j in 0..cols {
                            let dh = gr[j] * gv[j];
                            mean_dh += dh;
                            mean_dh_h += dh * hr[j];
                        }
                        mean_dh /= n;
                        mean_dh_h /= n;
                        for j in 0..cols {
                            d[i * cols + j] += inv_std[i] * (gr[j] * gv[j] - mean_dh - hr[j] * mean_dh_h);
                        }
                    }
                });
                acc(*gain, &mut |d| {
                    for k in 0..g.len() {
                        d[k % cols] += g[k] * xhat[k];
                    }
                });
                acc(*bias, &mut |d| {
                    for gr in g.chunks(cols.max(1)) {
                        add_into(d, gr);
                    }
                });
            }
            Op::Softmax(a) => {
                let y = &node.value;
                acc(*a, &mut |d| {
                    for i in 0..rows {
                        let r = i * cols..(i + 1) * cols;
                        let dot: T = y[r.clone()].iter().zip(&g[r.clone()]).map(|(&p, &q)| p * q).sum();
                        for k in r {
                            d[k] += y[k] * (g[k] - dot);
                        }
                    }
                });
            }
            Op::Log(a) => {
                let av = self.value(*a);
                acc(*a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] / av[k];
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let c = self.shape(*logits).1;
                let w = g[0] / T::lit(targets.len() as f64);
                acc(*logits, &mut |d| {
                    for (i, &t) in targets.iter().enumerate() {
                        for j in 0..c {
                            let onehot = if j == t { T::one() } else { T::zero() };
                            d[i * c + j] += w * (probs[i * c + j] - onehot);
                        }
                    }
                });
            }
            Op::GumbelSt {
                logits,
                seg,
                soft,
                inv_tau,
            } => {
                let groups = seg.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = vec![T::zero(); groups];
                for (i, &s) in seg.iter().enumerate() {
                    dot[s] += soft[i] * g[i];
                }
                acc(*logits, &mut |d| {
                    for (i, &s) in seg.iter().enumerate() {
                        d[i] += *inv_tau * soft[i] * (g[i] - dot[s]);
                    }
                });
            }
            Op::RowsDot(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let c = self.shape(*a).1;
                acc(*a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += g[k / c] * bv[k];
                    }
                });
                acc(*b, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += g[k / c] * av[k];
                    }
                });
            }
            Op::Sum(a) => {
                acc(*a, &mut |d| d.iter_mut().for_each(|x| *x += g[0]));
            }
        }
    }
}

fn add_into<T: Real>(d: &mut [T], g: &[T]) {
    d.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
}

fn softmax_in_place<T: Real>(row: &mut [T]) {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

/// Number of non-dropped rows per group.
pub fn group_counts(seg: &[usize], groups: usize) -> Vec<usize> {
    let mut counts = vec![0; groups];
    for &g in seg {
        if g != DROP && g < groups {
            counts[g] += 1;
        }
    }
    counts
}

/// `ln(n + 1) / n`, the per-row weight of a log-scaled sum over `n` rows; 0 when `n == 0`.
pub fn log_scale(n: f64) -> f64 {
    if n <= 0.0 {
        0.0
    } else {
        (n + 1.0).ln() / n
    }
}
