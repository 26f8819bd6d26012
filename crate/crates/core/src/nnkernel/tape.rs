//! Reverse-mode automatic differentiation over eagerly evaluated rank-2 tensors.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};

use super::tensor::{matmul, matmul_at, matmul_bt};
use super::{KernelError, ParameterStore, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

const LAYER_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Elu(Var),
    Sigmoid(Var),
    Tanh(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<Option<usize>>),
    GatherMean(Var, Vec<Vec<usize>>),
    SoftmaxRows(Var),
    LayerNormRows(Var, Vec<f64>),
    MeanRows(Var, Vec<bool>),
    Reshape(Var),
    SegmentSoftmax(Var, Vec<usize>),
    ScaleRows(Var, Var),
    ScatterRows(Var, Vec<usize>),
    Transpose(Var),
    Sum(Var),
    Cosine(Var, Var),
}

struct Node<'s> {
    value: Cow<'s, Tensor>,
    op: Op,
}

/// Records a forward computation so that gradients can be pulled back from
/// any scalar result. Parameters are borrowed from a [`ParameterStore`].
pub struct Tape<'s> {
    store: &'s ParameterStore,
    nodes: Vec<Node<'s>>,
    param_vars: HashMap<String, Var>,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    params: BTreeMap<String, Tensor>,
    vars: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.vars.get(v.0).and_then(Option::as_ref)
    }

    pub fn into_params(self) -> BTreeMap<String, Tensor> {
        self.params
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(t) => t.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(t.shape.clone(), t.data.iter().map(|&x| f(x)).collect())
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    assert_eq!(a.dims(), b.dims(), "elementwise shape mismatch");
    Tensor::new(a.shape.clone(), a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect())
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParameterStore) -> Self {
        Tape { store, nodes: Vec::new(), param_vars: HashMap::new() }
    }

    pub fn store(&self) -> &'s ParameterStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value: Cow::Owned(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Looks up one parameter by name.
    pub fn param(&mut self, name: &str) -> Result<Var, KernelError> {
        self.params(&[name]).map(|v| v[0])
    }

    /// Looks up several parameters; a missing name is reported together with
    /// every other missing name.
    pub fn params<S: AsRef<str>>(&mut self, names: &[S]) -> Result<Vec<Var>, KernelError> {
        let missing: Vec<String> = names
            .iter()
            .map(AsRef::as_ref)
            .filter(|n| !self.store.contains(n))
            .map(str::to_string)
            .collect();
        if !missing.is_empty() {
            return Err(KernelError::MissingParameters(missing));
        }
        Ok(names
            .iter()
            .map(|n| {
                let n = n.as_ref();
                if let Some(&v) = self.param_vars.get(n) {
                    return v;
                }
                let t = self.store.get(n).expect("checked above");
                self.nodes.push(Node { value: Cow::Borrowed(t), op: Op::Param });
                let v = Var(self.nodes.len() - 1);
                self.param_vars.insert(n.to_string(), v);
                v
            })
            .collect())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let ((m, k), (k2, n)) = (av.dims(), bv.dims());
        assert_eq!(k, k2, "matmul inner dimension mismatch");
        let out = Tensor::matrix(m, n, matmul(&av.data, &bv.data, m, k, n));
        self.push(out, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let ((m, k), (n, k2)) = (av.dims(), bv.dims());
        assert_eq!(k, k2, "matmul_bt inner dimension mismatch");
        let out = Tensor::matrix(m, n, matmul_bt(&av.data, &bv.data, m, k, n));
        self.push(out, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = zip(self.value(a), self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = zip(self.value(a), self.value(b), |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    /// Adds the `1 × n` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(bv.dims(), (1, av.cols()), "add_row expects a matching row vector");
        let mut out = av.clone();
        out.requires_grad = false;
        let n = bv.cols();
        for (i, x) in out.data.iter_mut().enumerate() {
            *x += bv.data[i % n];
        }
        self.push(out, Op::AddRow(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = zip(self.value(a), self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = map(self.value(a), |x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out = map(self.value(a), |x| x + s);
        self.push(out, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = map(self.value(a), |x| if x > 0.0 { x } else { 0.0 });
        self.push(out, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = map(self.value(a), |x| if x > 0.0 { x } else { slope * x });
        self.push(out, Op::LeakyRelu(a, slope))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let out = map(self.value(a), |x| if x > 0.0 { x } else { x.exp_m1() });
        self.push(out, Op::Elu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = map(self.value(a), |x| 1.0 / (1.0 + (-x).exp()));
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = map(self.value(a), f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                let t = self.value(p);
                assert_eq!(t.rows(), rows, "concat_cols row mismatch");
                data.extend_from_slice(t.row_slice(r));
            }
        }
        self.push(Tensor::matrix(rows, total, data), Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(&t.data);
        }
        let rows = data.len() / cols.max(1);
        self.push(Tensor::matrix(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let t = self.value(a);
        let (rows, cols) = t.dims();
        assert!(start + width <= cols, "slice_cols out of range");
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend_from_slice(&t.row_slice(r)[start..start + width]);
        }
        self.push(Tensor::matrix(rows, width, data), Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, count: usize) -> Var {
        let t = self.value(a);
        let cols = t.cols();
        assert!(start + count <= t.rows(), "slice_rows out of range");
        let data = t.data[start * cols..(start + count) * cols].to_vec();
        self.push(Tensor::matrix(count, cols, data), Op::SliceRows(a, start))
    }

    /// Row lookup; `None` yields a zero row.
    pub fn gather_rows(&mut self, table: Var, ids: &[Option<usize>]) -> Var {
        let t = self.value(table);
        let cols = t.cols();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for id in ids {
            match id {
                Some(i) => data.extend_from_slice(t.row_slice(*i)),
                None => data.extend(std::iter::repeat_n(0.0, cols)),
            }
        }
        self.push(Tensor::matrix(ids.len(), cols, data), Op::GatherRows(table, ids.to_vec()))
    }

    /// Mean of the looked-up rows per group; an empty group yields a zero row.
    pub fn gather_mean(&mut self, table: Var, groups: &[Vec<usize>]) -> Var {
        let t = self.value(table);
        let cols = t.cols();
        let mut data = vec![0.0; groups.len() * cols];
        for (g, ids) in groups.iter().enumerate() {
            let out = &mut data[g * cols..(g + 1) * cols];
            let w = 1.0 / ids.len().max(1) as f64;
            for &i in ids {
                for (o, x) in out.iter_mut().zip(t.row_slice(i)) {
                    *o += w * x;
                }
            }
        }
        self.push(Tensor::matrix(groups.len(), cols, data), Op::GatherMean(table, groups.to_vec()))
    }

    /// Row-wise softmax where columns with `mask[j] == false` are excluded
    /// (additive −∞) and receive exactly zero weight.
    pub fn masked_softmax_rows(&mut self, a: Var, mask: &[bool]) -> Result<Var, KernelError> {
        let t = self.value(a);
        let (rows, cols) = t.dims();
        assert_eq!(mask.len(), cols, "mask length must equal key count");
        if !mask.iter().any(|&m| m) {
            return Err(KernelError::AllMasked);
        }
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = t.row_slice(r);
            let shifted: Vec<f64> =
                row.iter().zip(mask).map(|(&x, &m)| if m { x } else { f64::NEG_INFINITY }).collect();
            let max = shifted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let out = &mut data[r * cols..(r + 1) * cols];
            let mut total = 0.0;
            for (o, &x) in out.iter_mut().zip(&shifted) {
                *o = (x - max).exp();
                total += *o;
            }
            for o in out.iter_mut() {
                *o /= total;
            }
        }
        Ok(self.push(Tensor::matrix(rows, cols, data), Op::SoftmaxRows(a)))
    }

    /// Normalizes each row to zero mean and unit variance (no affine part).
    pub fn layer_norm_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (rows, cols) = t.dims();
        let mut data = Vec::with_capacity(rows * cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = t.row_slice(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(inv);
            data.extend(row.iter().map(|x| (x - mean) * inv));
        }
        self.push(Tensor::matrix(rows, cols, data), Op::LayerNormRows(a, inv_std))
    }

    /// Mean over the rows with `mask[r] == true`, as a `1 × n` row.
    pub fn mean_rows_masked(&mut self, a: Var, mask: &[bool]) -> Result<Var, KernelError> {
        let t = self.value(a);
        let (rows, cols) = t.dims();
        assert_eq!(mask.len(), rows, "mask length must equal row count");
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(KernelError::AllMasked);
        }
        let mut data = vec![0.0; cols];
        for r in (0..rows).filter(|&r| mask[r]) {
            for (o, x) in data.iter_mut().zip(t.row_slice(r)) {
                *o += x;
            }
        }
        for o in &mut data {
            *o /= count as f64;
        }
        Ok(self.push(Tensor::row(data), Op::MeanRows(a, mask.to_vec())))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let t = self.value(a);
        assert_eq!(rows * cols, t.data.len(), "reshape must keep the element count");
        let out = Tensor::matrix(rows, cols, t.data.clone());
        self.push(out, Op::Reshape(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (rows, cols) = t.dims();
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                data[c * rows + r] = t.data[r * cols + c];
            }
        }
        self.push(Tensor::matrix(cols, rows, data), Op::Transpose(a))
    }

    /// Softmax of a column of scores within each segment (`segments[e]` is the
    /// group of row `e`).
    pub fn segment_softmax(&mut self, scores: Var, segments: &[usize]) -> Var {
        let t = self.value(scores);
        assert_eq!(t.dims(), (segments.len(), 1), "segment_softmax expects an E×1 column");
        let groups = segments.iter().copied().max().map_or(0, |m| m + 1);
        let mut max = vec![f64::NEG_INFINITY; groups];
        for (e, &s) in segments.iter().enumerate() {
            max[s] = max[s].max(t.data[e]);
        }
        let mut data: Vec<f64> = segments.iter().enumerate().map(|(e, &s)| (t.data[e] - max[s]).exp()).collect();
        let mut total = vec![0.0; groups];
        for (e, &s) in segments.iter().enumerate() {
            total[s] += data[e];
        }
        for (e, &s) in segments.iter().enumerate() {
            data[e] /= total[s];
        }
        let out = Tensor::matrix(segments.len(), 1, data);
        self.push(out, Op::SegmentSoftmax(scores, segments.to_vec()))
    }

    /// Multiplies row `e` of `a` by the scalar `w[e]` (`w` is an E×1 column).
    pub fn scale_rows(&mut self, a: Var, w: Var) -> Var {
        let (t, s) = (self.value(a), self.value(w));
        let (rows, cols) = t.dims();
        assert_eq!(s.dims(), (rows, 1), "scale_rows expects one weight per row");
        let data = t.data.iter().enumerate().map(|(i, x)| x * s.data[i / cols]).collect();
        self.push(Tensor::matrix(rows, cols, data), Op::ScaleRows(a, w))
    }

    /// Sums row `e` of `a` into output row `targets[e]`.
    pub fn scatter_add_rows(&mut self, a: Var, targets: &[usize], out_rows: usize) -> Var {
        let t = self.value(a);
        let cols = t.cols();
        assert_eq!(t.rows(), targets.len(), "scatter_add_rows expects one target per row");
        let mut data = vec![0.0; out_rows * cols];
        for (e, &r) in targets.iter().enumerate() {
            for (o, x) in data[r * cols..(r + 1) * cols].iter_mut().zip(t.row_slice(e)) {
                *o += x;
            }
        }
        self.push(Tensor::matrix(out_rows, cols, data), Op::ScatterRows(a, targets.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::row(vec![s]), Op::Sum(a))
    }

    /// Cosine similarity of two equally sized tensors, as a `1 × 1` value.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        let c = cosine(&self.value(a).data, &self.value(b).data)?;
        Ok(self.push(Tensor::row(vec![c]), Op::Cosine(a, b)))
    }

    /// Pulls gradients back from `root`, seeding its gradient with ones.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let seed = self.value(root);
        grads[root.0] = Some(Tensor::new(seed.shape.clone(), vec![1.0; seed.data.len()]));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let mut params = BTreeMap::new();
        for (name, v) in &self.param_vars {
            if let Some(g) = &grads[v.0] {
                params.insert(name.clone(), g.clone());
            }
        }
        Gradients { params, vars: grads }
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ((m, k), n) = (av.dims(), bv.cols());
                accumulate(grads, *a, Tensor::matrix(m, k, matmul_bt(&g.data, &bv.data, m, n, k)));
                accumulate(grads, *b, Tensor::matrix(k, n, matmul_at(&av.data, &g.data, m, k, n)));
            }
            Op::MatMulBt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ((m, k), n) = (av.dims(), bv.rows());
                accumulate(grads, *a, Tensor::matrix(m, k, matmul(&g.data, &bv.data, m, n, k)));
                accumulate(grads, *b, Tensor::matrix(n, k, matmul_at(&g.data, &av.data, m, n, k)));
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.scaled(-1.0));
            }
            Op::AddRow(a, b) => {
                accumulate(grads, *a, g.clone());
                let n = g.cols();
                let mut gb = vec![0.0; n];
                for (i, x) in g.data.iter().enumerate() {
                    gb[i % n] += x;
                }
                accumulate(grads, *b, Tensor::row(gb));
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, zip(g, self.value(*b), |x, y| x * y));
                accumulate(grads, *b, zip(g, self.value(*a), |x, y| x * y));
            }
            Op::Scale(a, s) => accumulate(grads, *a, g.scaled(*s)),
            Op::AddScalar(a) => accumulate(grads, *a, g.clone()),
            Op::Relu(a) => accumulate(grads, *a, zip(g, self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 })),
            Op::LeakyRelu(a, s) => {
                accumulate(grads, *a, zip(g, self.value(*a), |g, x| if x > 0.0 { g } else { s * g }))
            }
            Op::Elu(a) => {
                let d = zip(self.value(*a), out, |x, y| if x > 0.0 { 1.0 } else { y + 1.0 });
                accumulate(grads, *a, zip(g, &d, |g, d| g * d));
            }
            Op::Sigmoid(a) => accumulate(grads, *a, zip(g, out, |g, y| g * y * (1.0 - y))),
            Op::Tanh(a) => accumulate(grads, *a, zip(g, out, |g, y| g * (1.0 - y * y))),
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let mut data = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        data.extend_from_slice(&g.row_slice(r)[offset..offset + w]);
                    }
                    accumulate(grads, p, Tensor::matrix(rows, w, data));
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).data.len();
                    let rows = n / cols.max(1);
                    accumulate(grads, p, Tensor::matrix(rows, cols, g.data[offset..offset + n].to_vec()));
                    offset += n;
                }
            }
            Op::SliceCols(a, start) => {
                let (rows, cols) = self.value(*a).dims();
                let w = g.cols();
                let mut data = vec![0.0; rows * cols];
                for r in 0..rows {
                    data[r * cols + start..r * cols + start + w].copy_from_slice(g.row_slice(r));
                }
                accumulate(grads, *a, Tensor::matrix(rows, cols, data));
            }
            Op::SliceRows(a, start) => {
                let (rows, cols) = self.value(*a).dims();
                let mut data = vec![0.0; rows * cols];
                data[start * cols..start * cols + g.data.len()].copy_from_slice(&g.data);
                accumulate(grads, *a, Tensor::matrix(rows, cols, data));
            }
            Op::GatherRows(table, ids) => {
                let (rows, cols) = self.value(*table).dims();
                let mut data = vec![0.0; rows * cols];
                for (k, id) in ids.iter().enumerate() {
                    if let Some(r) = id {
                        for (o, x) in data[r * cols..(r + 1) * cols].iter_mut().zip(g.row_slice(k)) {
                            *o += x;
                        }
                    }
                }
                accumulate(grads, *table, Tensor::matrix(rows, cols, data));
            }
            Op::GatherMean(table, groups) => {
                let (rows, cols) = self.value(*table).dims();
                let mut data = vec![0.0; rows * cols];
                for (k, ids) in groups.iter().enumerate() {
                    let w = 1.0 / ids.len().max(1) as f64;
                    for &r in ids {
                        for (o, x) in data[r * cols..(r + 1) * cols].iter_mut().zip(g.row_slice(k)) {
                            *o += w * x;
                        }
                    }
                }
                accumulate(grads, *table, Tensor::matrix(rows, cols, data));
            }
            Op::SoftmaxRows(a) => {
                let (rows, cols) = out.dims();
                let mut data = vec![0.0; rows * cols];
                for r in 0..rows {
                    let (y, gy) = (out.row_slice(r), g.row_slice(r));
                    let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        data[r * cols + c] = y[c] * (gy[c] - dot);
                    }
                }
                accumulate(grads, *a, Tensor::matrix(rows, cols, data));
            }
            Op::LayerNormRows(a, inv_std) => {
                let (rows, cols) = out.dims();
                let n = cols as f64;
                let mut data = vec![0.0; rows * cols];
                for r in 0..rows {
                    let (y, gy) = (out.row_slice(r), g.row_slice(r));
                    let mean_g = gy.iter().sum::<f64>() / n;
                    let mean_gy = y.iter().zip(gy).map(|(a, b)| a * b).sum::<f64>() / n;
                    for c in 0..cols {
                        data[r * cols + c] = inv_std[r] * (gy[c] - mean_g - y[c] * mean_gy);
                    }
                }
                accumulate(grads, *a, Tensor::matrix(rows, cols, data));
            }
            Op::MeanRows(a, mask) => {
                let (rows, cols) = self.value(*a).dims();
                let count = mask.iter().filter(|&&m| m).count() as f64;
                let mut data = vec![0.0; rows * cols];
                for r in (0..rows).filter(|&r| mask[r]) {
                    for c in 0..cols {
                        data[r * cols + c] = g.data[c] / count;
                    }
                }
                accumulate(grads, *a, Tensor::matrix(rows, cols, data));
            }
            Op::Reshape(a) => {
                let shape = self.value(*a).shape.clone();
                accumulate(grads, *a, Tensor::new(shape, g.data.clone()));
            }
            Op::Transpose(a) => {
                let (rows, cols) = g.dims();
                let mut data = vec![0.0; rows * cols];
                for r in 0..rows {
                    for c in 0..cols {
                        data[c * rows + r] = g.data[r * cols + c];
                    }
                }
                accumulate(grads, *a, Tensor::matrix(cols, rows, data));
            }
            Op::SegmentSoftmax(a, segments) => {
                let groups = segments.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; groups];
                for (e, &s) in segments.iter().enumerate() {
                    dot[s] += out.data[e] * g.data[e];
                }
                let data = segments.iter().enumerate().map(|(e, &s)| out.data[e] * (g.data[e] - dot[s])).collect();
                accumulate(grads, *a, Tensor::matrix(segments.len(), 1, data));
            }
            Op::ScaleRows(a, w) => {
                let (t, s) = (self.value(*a), self.value(*w));
                let (rows, cols) = t.dims();
                let ga = g.data.iter().enumerate().map(|(i, x)| x * s.data[i / cols]).collect();
                let gw = (0..rows)
                    .map(|r| g.row_slice(r).iter().zip(t.row_slice(r)).map(|(x, y)| x * y).sum())
                    .collect();
                accumulate(grads, *a, Tensor::matrix(rows, cols, ga));
                accumulate(grads, *w, Tensor::matrix(rows, 1, gw));
            }
            Op::ScatterRows(a, targets) => {
                let cols = g.cols();
                let mut data = Vec::with_capacity(targets.len() * cols);
                for &r in targets {
                    data.extend_from_slice(g.row_slice(r));
                }
                accumulate(grads, *a, Tensor::matrix(targets.len(), cols, data));
            }
            Op::Sum(a) => {
                let shape = self.value(*a).shape.clone();
                let n = self.value(*a).data.len();
                accumulate(grads, *a, Tensor::new(shape, vec![g.data[0]; n]));
            }
            Op::Cosine(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (na, nb) = (av.norm(), bv.norm());
                let c = out.data[0];
                let s = g.data[0];
                let ga = zip(av, bv, |x, y| s * (y / (na * nb) - c * x / (na * na)));
                let gb = zip(bv, av, |y, x| s * (x / (na * nb) - c * y / (nb * nb)));
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
        }
    }
}

/// Cosine similarity of two vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, KernelError> {
    assert_eq!(a.len(), b.len(), "cosine of vectors with different widths");
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(KernelError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
