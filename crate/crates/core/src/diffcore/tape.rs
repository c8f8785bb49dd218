//! Reverse-mode differentiation over whole matrices.
//!
//! Each primitive appends one node holding its forward value and the ids of
//! its inputs. Nodes are created in evaluation order, so the node list is a
//! topological order and the backward sweep walks it once in reverse.

use super::activation::Activation;
use super::matrix::{gemm, Matrix};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Node handle on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param { offset: usize },
    /// x · wᵀ
    MatMulNT { x: Var, w: Var },
    /// a · b
    MatMul { a: Var, b: Var },
    /// x + 1·bias, bias is 1×c
    AddRow { x: Var, bias: Var },
    /// row s·P + p = a[s] + b[p]
    OuterAdd { a: Var, b: Var },
    /// row s·P + p = x[s·P + p] + a[s]
    AddGrouped { x: Var, a: Var },
    Activation { x: Var, kind: Activation },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, alpha: f64 },
    Exp { x: Var },
    Clamp { x: Var, lo: f64, hi: f64 },
    /// row i of x times s[i], s is r×1
    ScaleRows { x: Var, s: Var },
    MulConstRows { x: Var, c: Vec<f64> },
    ConcatCols { parts: Vec<Var> },
    SliceCols { x: Var, start: usize },
    RepeatRows { x: Var, times: usize },
    GroupMean { x: Var, size: usize },
    Reshape { x: Var },
    WhiteNoiseRecon { d: Var, target: Matrix, weights: Vec<f64> },
    KlDiag { mu: Var, log_sigma: Var },
    Mean { x: Var },
    Sum { x: Var },
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> Result<f64> {
        self.value(v)
            .scalar()
            .ok_or_else(|| Error::Contract(format!("node {} is not a scalar", v.0)))
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Brings a stored tensor onto the tape with its natural matrix shape:
    /// rank-2 tensors keep `(rows, cols)`, everything else becomes a row.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let slot = store.slot(id);
        let (r, c) = match slot.shape.as_slice() {
            [r, c] => (*r, *c),
            _ => (1, slot.len),
        };
        self.param_as(store, id, r, c).expect("natural shape always fits")
    }

    pub fn param_as(&mut self, store: &ParamStore, id: ParamId, rows: usize, cols: usize) -> Result<Var> {
        let slot = store.slot(id);
        if rows * cols != slot.len {
            return Err(Error::dim("Tape::param_as", slot.len, rows * cols));
        }
        let value = Matrix::from_vec(rows, cols, store.tensor(id).to_vec())?;
        Ok(self.push(value, Op::Param { offset: slot.offset }))
    }

    pub fn matmul_nt(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.cols() != wv.cols() {
            return Err(Error::dim("matmul_nt", wv.cols(), xv.cols()));
        }
        let mut out = Matrix::zeros(xv.rows(), wv.rows());
        gemm(1.0, xv, false, wv, true, 0.0, &mut out);
        Ok(self.push(out, Op::MatMulNT { x, w }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(Error::dim("matmul", av.cols(), bv.rows()));
        }
        let mut out = Matrix::zeros(av.rows(), bv.cols());
        gemm(1.0, av, false, bv, false, 0.0, &mut out);
        Ok(self.push(out, Op::MatMul { a, b }))
    }

    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::dim("add_row", xv.cols(), bv.rows() * bv.cols()));
        }
        let mut out = xv.clone();
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow { x, bias }))
    }

    pub fn outer_add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(Error::dim("outer_add", av.cols(), bv.cols()));
        }
        let (s, p, c) = (av.rows(), bv.rows(), av.cols());
        let mut out = Matrix::zeros(s * p, c);
        for i in 0..s {
            let ar = av.row(i);
            for j in 0..p {
                let br = bv.row(j);
                for ((o, x), y) in out.row_mut(i * p + j).iter_mut().zip(ar).zip(br) {
                    *o = x + y;
                }
            }
        }
        Ok(self.push(out, Op::OuterAdd { a, b }))
    }

    pub fn add_grouped(&mut self, x: Var, a: Var) -> Result<Var> {
        let (xv, av) = (self.value(x), self.value(a));
        if av.cols() != xv.cols() {
            return Err(Error::dim("add_grouped", xv.cols(), av.cols()));
        }
        if av.rows() == 0 || xv.rows() % av.rows() != 0 {
            return Err(Error::dim("add_grouped rows", xv.rows(), av.rows()));
        }
        let group = xv.rows() / av.rows();
        let mut out = xv.clone();
        for i in 0..out.rows() {
            let ar = av.row(i / group);
            for (o, y) in out.row_mut(i).iter_mut().zip(ar) {
                *o += y;
            }
        }
        Ok(self.push(out, Op::AddGrouped { x, a }))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        if kind == Activation::Identity {
            return x;
        }
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = kind.apply(*v));
        self.push(out, Op::Activation { x, kind })
    }

    fn same_shape(&self, a: Var, b: Var, ctx: &'static str) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::dim(ctx, sa.0 * sa.1, sb.0 * sb.1));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let mut out = self.value(a).clone();
        for (o, y) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o *= y;
        }
        Ok(self.push(out, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Var, alpha: f64) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= alpha);
        self.push(out, Op::Scale { x, alpha })
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.exp());
        self.push(out, Op::Exp { x })
    }

    /// Clamps into `[lo, hi]`; the gradient is passed through inside the
    /// interval (endpoints included) and zero outside.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        self.push(out, Op::Clamp { x, lo, hi })
    }

    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (xv, sv) = (self.value(x), self.value(s));
        if sv.cols() != 1 || sv.rows() != xv.rows() {
            return Err(Error::dim("scale_rows", xv.rows(), sv.rows() * sv.cols()));
        }
        let mut out = xv.clone();
        for i in 0..out.rows() {
            let f = sv.data()[i];
            out.row_mut(i).iter_mut().for_each(|v| *v *= f);
        }
        Ok(self.push(out, Op::ScaleRows { x, s }))
    }

    pub fn mul_const_rows(&mut self, x: Var, c: Vec<f64>) -> Result<Var> {
        let xv = self.value(x);
        if c.len() != xv.rows() {
            return Err(Error::dim("mul_const_rows", xv.rows(), c.len()));
        }
        let mut out = xv.clone();
        for (i, f) in c.iter().enumerate() {
            out.row_mut(i).iter_mut().for_each(|v| *v *= f);
        }
        Ok(self.push(out, Op::MulConstRows { x, c }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |p| self.shape(*p).0);
        let mut cols = 0;
        for p in parts {
            let (r, c) = self.shape(*p);
            if r != rows {
                return Err(Error::dim("concat_cols", rows, r));
            }
            cols += c;
        }
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut at = 0;
            for p in parts {
                let src = self.value(*p).row(i);
                out.row_mut(i)[at..at + src.len()].copy_from_slice(src);
                at += src.len();
            }
        }
        Ok(self.push(
            out,
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let xv = self.value(x);
        if start > end || end > xv.cols() {
            return Err(Error::dim("slice_cols", xv.cols(), end));
        }
        let mut out = Matrix::zeros(xv.rows(), end - start);
        for i in 0..xv.rows() {
            out.row_mut(i).copy_from_slice(&xv.row(i)[start..end]);
        }
        Ok(self.push(out, Op::SliceCols { x, start }))
    }

    /// Each row repeated `times` times consecutively.
    pub fn repeat_rows(&mut self, x: Var, times: usize) -> Var {
        let xv = self.value(x);
        let mut out = Matrix::zeros(xv.rows() * times, xv.cols());
        for i in 0..xv.rows() {
            for t in 0..times {
                out.row_mut(i * times + t).copy_from_slice(xv.row(i));
            }
        }
        self.push(out, Op::RepeatRows { x, times })
    }

    /// Mean over consecutive groups of `size` rows.
    pub fn group_mean(&mut self, x: Var, size: usize) -> Result<Var> {
        let xv = self.value(x);
        if size == 0 || xv.rows() % size != 0 {
            return Err(Error::dim("group_mean", xv.rows(), size));
        }
        let groups = xv.rows() / size;
        let mut out = Matrix::zeros(groups, xv.cols());
        for g in 0..groups {
            for k in 0..size {
                for (o, v) in out.row_mut(g).iter_mut().zip(xv.row(g * size + k)) {
                    *o += v;
                }
            }
            out.row_mut(g).iter_mut().for_each(|v| *v /= size as f64);
        }
        Ok(self.push(out, Op::GroupMean { x, size }))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let xv = self.value(x);
        if rows * cols != xv.rows() * xv.cols() {
            return Err(Error::dim("reshape", xv.rows() * xv.cols(), rows * cols));
        }
        let out = xv.clone().reshaped(rows, cols);
        Ok(self.push(out, Op::Reshape { x }))
    }

    /// Row-wise `Σⱼ wⱼ(½dᵢⱼ² − dᵢⱼuᵢⱼ)`: the negated white-noise
    /// log-likelihood of each decoded row against its target row.
    pub fn white_noise_recon(&mut self, d: Var, target: Matrix, weights: Vec<f64>) -> Result<Var> {
        let dv = self.value(d);
        if dv.shape() != target.shape() {
            return Err(Error::dim("white_noise_recon target", dv.rows() * dv.cols(), target.rows() * target.cols()));
        }
        if weights.len() != dv.cols() {
            return Err(Error::dim("white_noise_recon weights", dv.cols(), weights.len()));
        }
        let mut out = Matrix::zeros(dv.rows(), 1);
        for i in 0..dv.rows() {
            let mut acc = 0.0;
            for ((dd, uu), w) in dv.row(i).iter().zip(target.row(i)).zip(&weights) {
                acc += w * (0.5 * dd * dd - dd * uu);
            }
            out.data_mut()[i] = acc;
        }
        Ok(self.push(out, Op::WhiteNoiseRecon { d, target, weights }))
    }

    /// Row-wise `KL(N(μ, diag σ²) ‖ N(0, I))` with `σ = exp(log_sigma)`.
    pub fn kl_diag(&mut self, mu: Var, log_sigma: Var) -> Result<Var> {
        self.same_shape(mu, log_sigma, "kl_diag")?;
        let (mv, lv) = (self.value(mu), self.value(log_sigma));
        let mut out = Matrix::zeros(mv.rows(), 1);
        for i in 0..mv.rows() {
            out.data_mut()[i] = kl_row(mv.row(i), lv.row(i));
        }
        Ok(self.push(out, Op::KlDiag { mu, log_sigma }))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let n = xv.data().len();
        let s: f64 = xv.data().iter().sum();
        self.push(Matrix::filled(1, 1, s / n as f64), Op::Mean { x })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Matrix::filled(1, 1, s), Op::Sum { x })
    }

    /// Writes `∂loss/∂θ` into `store`'s gradient buffer. Parameters that do
    /// not reach `loss` receive exactly zero.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            let (r, c) = self.shape(loss);
            return Err(Error::Contract(format!("backward needs a scalar loss, got {r}x{c}")));
        }
        store.zero_grads();
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param { offset } => {
                    let dst = &mut store.grads_mut()[*offset..*offset + g.data().len()];
                    for (d, v) in dst.iter_mut().zip(g.data()) {
                        *d += v;
                    }
                }
                Op::MatMulNT { x, w } => {
                    // y = x wᵀ: dx = g w, dw = gᵀ x
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                    gemm(1.0, &g, false, wv, false, 0.0, &mut dx);
                    let mut dw = Matrix::zeros(wv.rows(), wv.cols());
                    gemm(1.0, &g, true, xv, false, 0.0, &mut dw);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                }
                Op::MatMul { a, b } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut da = Matrix::zeros(av.rows(), av.cols());
                    gemm(1.0, &g, false, bv, true, 0.0, &mut da);
                    let mut db = Matrix::zeros(bv.rows(), bv.cols());
                    gemm(1.0, av, true, &g, false, 0.0, &mut db);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::AddRow { x, bias } => {
                    let mut db = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (d, v) in db.data_mut().iter_mut().zip(g.row(i)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *bias, db);
                    accumulate(&mut grads, *x, g);
                }
                Op::OuterAdd { a, b } => {
                    let (s, p) = (self.shape(*a).0, self.shape(*b).0);
                    let mut da = Matrix::zeros(s, g.cols());
                    let mut db = Matrix::zeros(p, g.cols());
                    for i in 0..s {
                        for j in 0..p {
                            let gr = g.row(i * p + j);
                            for (d, v) in da.row_mut(i).iter_mut().zip(gr) {
                                *d += v;
                            }
                            for (d, v) in db.row_mut(j).iter_mut().zip(gr) {
                                *d += v;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::AddGrouped { x, a } => {
                    let s = self.shape(*a).0;
                    let group = g.rows() / s;
                    let mut da = Matrix::zeros(s, g.cols());
                    for i in 0..g.rows() {
                        for (d, v) in da.row_mut(i / group).iter_mut().zip(g.row(i)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *x, g);
                }
                Op::Activation { x, kind } => {
                    let xv = self.value(*x);
                    let mut dx = g;
                    for ((d, xi), yi) in dx.data_mut().iter_mut().zip(xv.data()).zip(node.value.data()) {
                        *d *= kind.derivative(*xi, *yi);
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Mul { a, b } => {
                    let mut da = g.clone();
                    for (d, v) in da.data_mut().iter_mut().zip(self.value(*b).data()) {
                        *d *= v;
                    }
                    let mut db = g;
                    for (d, v) in db.data_mut().iter_mut().zip(self.value(*a).data()) {
                        *d *= v;
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale { x, alpha } => {
                    let mut dx = g;
                    dx.data_mut().iter_mut().for_each(|v| *v *= alpha);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Exp { x } => {
                    let mut dx = g;
                    for (d, y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        *d *= y;
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Clamp { x, lo, hi } => {
                    let mut dx = g;
                    for (d, xi) in dx.data_mut().iter_mut().zip(self.value(*x).data()) {
                        if *xi < *lo || *xi > *hi {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::ScaleRows { x, s } => {
                    let (xv, sv) = (self.value(*x), self.value(*s));
                    let mut dx = g.clone();
                    let mut ds = Matrix::zeros(sv.rows(), 1);
                    for i in 0..xv.rows() {
                        let f = sv.data()[i];
                        let mut acc = 0.0;
                        for (d, xi) in dx.row_mut(i).iter_mut().zip(xv.row(i)) {
                            acc += *d * xi;
                            *d *= f;
                        }
                        ds.data_mut()[i] = acc;
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *s, ds);
                }
                Op::MulConstRows { x, c } => {
                    let mut dx = g;
                    for (i, f) in c.iter().enumerate() {
                        dx.row_mut(i).iter_mut().for_each(|v| *v *= f);
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::ConcatCols { parts } => {
                    let mut at = 0;
                    for p in parts {
                        let (r, c) = self.shape(*p);
                        let mut dp = Matrix::zeros(r, c);
                        for i in 0..r {
                            dp.row_mut(i).copy_from_slice(&g.row(i)[at..at + c]);
                        }
                        at += c;
                        accumulate(&mut grads, *p, dp);
                    }
                }
                Op::SliceCols { x, start } => {
                    let (r, c) = self.shape(*x);
                    let mut dx = Matrix::zeros(r, c);
                    for i in 0..r {
                        dx.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::RepeatRows { x, times } => {
                    let (r, c) = self.shape(*x);
                    let mut dx = Matrix::zeros(r, c);
                    for i in 0..r {
                        for t in 0..*times {
                            for (d, v) in dx.row_mut(i).iter_mut().zip(g.row(i * times + t)) {
                                *d += v;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::GroupMean { x, size } => {
                    let (r, c) = self.shape(*x);
                    let mut dx = Matrix::zeros(r, c);
                    let inv = 1.0 / *size as f64;
                    for i in 0..r {
                        for (d, v) in dx.row_mut(i).iter_mut().zip(g.row(i / size)) {
                            *d = v * inv;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Reshape { x } => {
                    let (r, c) = self.shape(*x);
                    accumulate(&mut grads, *x, g.reshaped(r, c));
                }
                Op::WhiteNoiseRecon { d, target, weights } => {
                    let dv = self.value(*d);
                    let mut dd = Matrix::zeros(dv.rows(), dv.cols());
                    for i in 0..dv.rows() {
                        let gi = g.data()[i];
                        for (((o, x), u), w) in dd.row_mut(i).iter_mut().zip(dv.row(i)).zip(target.row(i)).zip(weights) {
                            *o = gi * w * (x - u);
                        }
                    }
                    accumulate(&mut grads, *d, dd);
                }
                Op::KlDiag { mu, log_sigma } => {
                    let (mv, lv) = (self.value(*mu), self.value(*log_sigma));
                    let mut dm = Matrix::zeros(mv.rows(), mv.cols());
                    let mut dl = Matrix::zeros(lv.rows(), lv.cols());
                    for i in 0..mv.rows() {
                        let gi = g.data()[i];
                        for (o, m) in dm.row_mut(i).iter_mut().zip(mv.row(i)) {
                            *o = gi * m;
                        }
                        for (o, l) in dl.row_mut(i).iter_mut().zip(lv.row(i)) {
                            *o = gi * ((2.0 * l).exp() - 1.0);
                        }
                    }
                    accumulate(&mut grads, *mu, dm);
                    accumulate(&mut grads, *log_sigma, dl);
                }
                Op::Mean { x } => {
                    let (r, c) = self.shape(*x);
                    let v = g.data()[0] / (r * c) as f64;
                    accumulate(&mut grads, *x, Matrix::filled(r, c, v));
                }
                Op::Sum { x } => {
                    let (r, c) = self.shape(*x);
                    accumulate(&mut grads, *x, Matrix::filled(r, c, g.data()[0]));
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn kl_row(mu: &[f64], log_sigma: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(log_sigma)
        .map(|(m, l)| m * m + (2.0 * l).exp() - 1.0 - 2.0 * l)
        .sum::<f64>()
}
