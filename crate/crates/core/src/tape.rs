//! Minimal reverse-mode autodiff over row-major `f64` matrices.
//!
//! A [`Tape`] records one forward pass as a topologically ordered list of
//! nodes; [`Tape::backward`] walks it once in reverse and accumulates
//! gradients for every node. The op set is exactly what the denoiser needs:
//! dense linear algebra, gather/scatter for graph edges, segment softmax for
//! graph attention, full softmax attention for the transformer branch, layer
//! norm, and two custom ops (per-net gradient projection, RMS normalization).
//!
//! Shapes are asserted, not returned as errors: a shape violation here is a
//! bug in the caller, never a data condition.

use alloc::boxed::Box;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

type BackFn = Box<dyn Fn(&[f64], &mut [Vec<f64>])>;

struct Node {
    value: Rc<Matrix>,
    back: Option<BackFn>,
}

/// Gradients of one backward pass, indexed by [`Var`].
pub struct Gradients {
    store: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> &[f64] {
        &self.store[v.0]
    }
}

/// Recorded forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn rc_value(&self, v: Var) -> Rc<Matrix> {
        Rc::clone(&self.nodes[v.0].value)
    }

    fn push(&mut self, value: Matrix, back: Option<BackFn>) -> Var {
        self.nodes.push(Node { value: Rc::new(value), back });
        Var(self.nodes.len() - 1)
    }

    /// Insert an input (parameter or constant). Constants simply never have
    /// their gradient read.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, None)
    }

    /// `a + b`, same shape.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.rc_value(a), self.rc_value(b));
        assert_eq!((va.rows, va.cols), (vb.rows, vb.cols), "add shapes");
        let data = va.data.iter().zip(vb.data.iter()).map(|(x, y)| x + y).collect();
        let out = Matrix::from_vec(va.rows, va.cols, data);
        let (ai, bi) = (a.0, b.0);
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                for (dst, &src) in grads[ai].iter_mut().zip(g.iter()) {
                    *dst += src;
                }
                for (dst, &src) in grads[bi].iter_mut().zip(g.iter()) {
                    *dst += src;
                }
            })),
        )
    }

    /// `c * a` for a compile-time-known scalar.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let va = self.rc_value(a);
        let data = va.data.iter().map(|x| c * x).collect();
        let out = Matrix::from_vec(va.rows, va.cols, data);
        let ai = a.0;
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                for (dst, &src) in grads[ai].iter_mut().zip(g.iter()) {
                    *dst += c * src;
                }
            })),
        )
    }

    /// `a @ b`: (m x k) (k x n) -> (m x n).
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.rc_value(a), self.rc_value(b));
        assert_eq!(va.cols, vb.rows, "matmul inner dims");
        let (m, k, n) = (va.rows, va.cols, vb.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for kk in 0..k {
                let aik = va.data[i * k + kk];
                if aik == 0.0 {
                    continue;
                }
                let brow = &vb.data[kk * n..(kk + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += aik * brow[j];
                }
            }
        }
        let (ai, bi) = (a.0, b.0);
        let (ra, rb) = (Rc::clone(&va), Rc::clone(&vb));
        self.push(
            Matrix::from_vec(m, n, out),
            Some(Box::new(move |g, grads| {
                // gA[i,kk] += sum_j G[i,j] B[kk,j]
                {
                    let ga = &mut grads[ai];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for kk in 0..k {
                            let brow = &rb.data[kk * n..(kk + 1) * n];
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += grow[j] * brow[j];
                            }
                            ga[i * k + kk] += acc;
                        }
                    }
                }
                // gB[kk,j] += sum_i A[i,kk] G[i,j]
                {
                    let gb = &mut grads[bi];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for kk in 0..k {
                            let aik = ra.data[i * k + kk];
                            if aik == 0.0 {
                                continue;
                            }
                            let gbrow = &mut gb[kk * n..(kk + 1) * n];
                            for j in 0..n {
                                gbrow[j] += aik * grow[j];
                            }
                        }
                    }
                }
            })),
        )
    }

    /// Broadcast-add a `1 x d` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let (vx, vr) = (self.rc_value(x), self.rc_value(row));
        assert_eq!(vr.rows, 1, "add_row row shape");
        assert_eq!(vx.cols, vr.cols, "add_row width");
        let d = vx.cols;
        let mut out = vx.data.clone();
        for r in 0..vx.rows {
            for c in 0..d {
                out[r * d + c] += vr.data[c];
            }
        }
        let (xi, ri) = (x.0, row.0);
        let nrows = vx.rows;
        self.push(
            Matrix::from_vec(vx.rows, d, out),
            Some(Box::new(move |g, grads| {
                for (dst, &src) in grads[xi].iter_mut().zip(g.iter()) {
                    *dst += src;
                }
                let gr = &mut grads[ri];
                for r in 0..nrows {
                    for c in 0..d {
                        gr[c] += g[r * d + c];
                    }
                }
            })),
        )
    }

    /// Elementwise leaky ReLU with the given negative slope.
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let vx = self.rc_value(x);
        let data = vx.data.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect();
        let out = Matrix::from_vec(vx.rows, vx.cols, data);
        let xi = x.0;
        let rx = Rc::clone(&vx);
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                let gx = &mut grads[xi];
                for (i, &v) in rx.data.iter().enumerate() {
                    gx[i] += g[i] * if v > 0.0 { 1.0 } else { slope };
                }
            })),
        )
    }

    /// Elementwise ReLU.
    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, 0.0)
    }

    /// Select rows of `x` by index (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Var {
        let vx = self.rc_value(x);
        let d = vx.cols;
        let mut out = Vec::with_capacity(idx.len() * d);
        for &r in idx {
            out.extend_from_slice(vx.row(r));
        }
        let xi = x.0;
        let idx: Vec<usize> = idx.to_vec();
        self.push(
            Matrix::from_vec(idx.len(), d, out),
            Some(Box::new(move |g, grads| {
                let gx = &mut grads[xi];
                for (e, &r) in idx.iter().enumerate() {
                    let grow = &g[e * d..(e + 1) * d];
                    let dst = &mut gx[r * d..(r + 1) * d];
                    for c in 0..d {
                        dst[c] += grow[c];
                    }
                }
            })),
        )
    }

    /// Zero out rows where `keep` is false.
    pub fn mask_rows(&mut self, x: Var, keep: &[bool]) -> Var {
        let vx = self.rc_value(x);
        assert_eq!(vx.rows, keep.len(), "mask length");
        let d = vx.cols;
        let mut out = vx.data.clone();
        for (r, &k) in keep.iter().enumerate() {
            if !k {
                for c in 0..d {
                    out[r * d + c] = 0.0;
                }
            }
        }
        let xi = x.0;
        let keep: Vec<bool> = keep.to_vec();
        self.push(
            Matrix::from_vec(vx.rows, d, out),
            Some(Box::new(move |g, grads| {
                let gx = &mut grads[xi];
                for (r, &k) in keep.iter().enumerate() {
                    if k {
                        for c in 0..d {
                            gx[r * d + c] += g[r * d + c];
                        }
                    }
                }
            })),
        )
    }

    /// Per-head dot products with a shared attention vector:
    /// `out[e, h] = sum_k s[e, h*dh + k] * a[h*dh + k]`.
    pub fn attn_score(&mut self, s: Var, a: Var, heads: usize) -> Var {
        let (vs, va) = (self.rc_value(s), self.rc_value(a));
        assert_eq!(va.rows, 1, "attention vector shape");
        assert_eq!(vs.cols, va.cols, "attention widths");
        assert_eq!(vs.cols % heads, 0, "heads divide width");
        let (e_count, d) = (vs.rows, vs.cols);
        let dh = d / heads;
        let mut out = vec![0.0; e_count * heads];
        for e in 0..e_count {
            for h in 0..heads {
                let mut acc = 0.0;
                for k in 0..dh {
                    acc += vs.data[e * d + h * dh + k] * va.data[h * dh + k];
                }
                out[e * heads + h] = acc;
            }
        }
        let (si, aidx) = (s.0, a.0);
        let (rs, ra) = (Rc::clone(&vs), Rc::clone(&va));
        self.push(
            Matrix::from_vec(e_count, heads, out),
            Some(Box::new(move |g, grads| {
                {
                    let gs = &mut grads[si];
                    for e in 0..e_count {
                        for h in 0..heads {
                            let ge = g[e * heads + h];
                            for k in 0..dh {
                                gs[e * d + h * dh + k] += ge * ra.data[h * dh + k];
                            }
                        }
                    }
                }
                {
                    let ga = &mut grads[aidx];
                    for e in 0..e_count {
                        for h in 0..heads {
                            let ge = g[e * heads + h];
                            for k in 0..dh {
                                ga[h * dh + k] += ge * rs.data[e * d + h * dh + k];
                            }
                        }
                    }
                }
            })),
        )
    }

    /// Softmax over edges sharing a destination segment, independently per
    /// head. Empty segments are fine (they simply own no rows).
    pub fn segment_softmax(&mut self, logits: Var, seg: &[usize], nseg: usize) -> Var {
        let vl = self.rc_value(logits);
        assert_eq!(vl.rows, seg.len(), "segment count");
        let heads = vl.cols;
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); nseg];
        for (e, &s) in seg.iter().enumerate() {
            assert!(s < nseg, "segment id in range");
            members[s].push(e);
        }
        let mut out = vec![0.0; vl.data.len()];
        for list in &members {
            if list.is_empty() {
                continue;
            }
            for h in 0..heads {
                let mut hi = f64::NEG_INFINITY;
                for &e in list {
                    hi = hi.max(vl.data[e * heads + h]);
                }
                let mut sum = 0.0;
                for &e in list {
                    let v = libm::exp(vl.data[e * heads + h] - hi);
                    out[e * heads + h] = v;
                    sum += v;
                }
                for &e in list {
                    out[e * heads + h] /= sum;
                }
            }
        }
        let li = logits.0;
        let alpha = Rc::new(out.clone());
        self.push(
            Matrix::from_vec(vl.rows, heads, out),
            Some(Box::new(move |g, grads| {
                let gl = &mut grads[li];
                for list in &members {
                    if list.is_empty() {
                        continue;
                    }
                    for h in 0..heads {
                        let mut dot = 0.0;
                        for &e in list {
                            dot += alpha[e * heads + h] * g[e * heads + h];
                        }
                        for &e in list {
                            let a = alpha[e * heads + h];
                            gl[e * heads + h] += a * (g[e * heads + h] - dot);
                        }
                    }
                }
            })),
        )
    }

    /// Attention-weighted segment sum:
    /// `out[s, h*dh + k] = sum_{e in segment s} alpha[e, h] * values[e, h*dh + k]`.
    pub fn attn_aggregate(&mut self, alpha: Var, values: Var, seg: &[usize], nseg: usize) -> Var {
        let (va, vv) = (self.rc_value(alpha), self.rc_value(values));
        assert_eq!(va.rows, vv.rows, "edge counts");
        assert_eq!(va.rows, seg.len(), "segment list length");
        let heads = va.cols;
        let d = vv.cols;
        assert_eq!(d % heads, 0, "heads divide value width");
        let dh = d / heads;
        let mut out = vec![0.0; nseg * d];
        for (e, &s) in seg.iter().enumerate() {
            for h in 0..heads {
                let a = va.data[e * heads + h];
                for k in 0..dh {
                    out[s * d + h * dh + k] += a * vv.data[e * d + h * dh + k];
                }
            }
        }
        let (aidx, vi) = (alpha.0, values.0);
        let (ra, rv) = (Rc::clone(&va), Rc::clone(&vv));
        let seg: Vec<usize> = seg.to_vec();
        self.push(
            Matrix::from_vec(nseg, d, out),
            Some(Box::new(move |g, grads| {
                {
                    let ga = &mut grads[aidx];
                    for (e, &s) in seg.iter().enumerate() {
                        for h in 0..heads {
                            let mut acc = 0.0;
                            for k in 0..dh {
                                acc += g[s * d + h * dh + k] * rv.data[e * d + h * dh + k];
                            }
                            ga[e * heads + h] += acc;
                        }
                    }
                }
                {
                    let gv = &mut grads[vi];
                    for (e, &s) in seg.iter().enumerate() {
                        for h in 0..heads {
                            let a = ra.data[e * heads + h];
                            for k in 0..dh {
                                gv[e * d + h * dh + k] += a * g[s * d + h * dh + k];
                            }
                        }
                    }
                }
            })),
        )
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        const EPS: f64 = 1e-5;
        let (vx, vg, vb) = (self.rc_value(x), self.rc_value(gain), self.rc_value(bias));
        assert_eq!(vg.rows, 1, "gain shape");
        assert_eq!(vb.rows, 1, "bias shape");
        assert_eq!(vx.cols, vg.cols, "gain width");
        assert_eq!(vx.cols, vb.cols, "bias width");
        let (n, d) = (vx.rows, vx.cols);
        let mut out = vec![0.0; n * d];
        let mut xhat = vec![0.0; n * d];
        let mut inv_std = vec![0.0; n];
        for r in 0..n {
            let row = vx.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / libm::sqrt(var + EPS);
            inv_std[r] = is;
            for c in 0..d {
                let xh = (row[c] - mean) * is;
                xhat[r * d + c] = xh;
                out[r * d + c] = xh * vg.data[c] + vb.data[c];
            }
        }
        let (xi, gi, bi) = (x.0, gain.0, bias.0);
        let rg = Rc::clone(&vg);
        let xhat = Rc::new(xhat);
        let inv_std = Rc::new(inv_std);
        self.push(
            Matrix::from_vec(n, d, out),
            Some(Box::new(move |g, grads| {
                // Per row: gx = (is/d) * (d*gxh - sum(gxh) - xhat*sum(gxh*xhat))
                {
                    let gx = &mut grads[xi];
                    for r in 0..n {
                        let is = inv_std[r];
                        let mut sum_g = 0.0;
                        let mut sum_gx = 0.0;
                        for c in 0..d {
                            let gxh = g[r * d + c] * rg.data[c];
                            sum_g += gxh;
                            sum_gx += gxh * xhat[r * d + c];
                        }
                        for c in 0..d {
                            let gxh = g[r * d + c] * rg.data[c];
                            gx[r * d + c] += (is / d as f64)
                                * (d as f64 * gxh - sum_g - xhat[r * d + c] * sum_gx);
                        }
                    }
                }
                {
                    let gg = &mut grads[gi];
                    for r in 0..n {
                        for c in 0..d {
                            gg[c] += g[r * d + c] * xhat[r * d + c];
                        }
                    }
                }
                {
                    let gb = &mut grads[bi];
                    for r in 0..n {
                        for c in 0..d {
                            gb[c] += g[r * d + c];
                        }
                    }
                }
            })),
        )
    }

    /// Multi-head scaled-dot-product attention. `q` is `nq x d`, `k`/`v` are
    /// `nk x d`; per head `O = softmax(Q Kt / sqrt(dh)) V`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Var {
        let (vq, vk, vv) = (self.rc_value(q), self.rc_value(k), self.rc_value(v));
        assert_eq!(vq.cols, vk.cols, "q/k width");
        assert_eq!(vk.rows, vv.rows, "k/v rows");
        assert_eq!(vk.cols, vv.cols, "k/v width");
        assert_eq!(vq.cols % heads, 0, "heads divide width");
        let (nq, nk, d) = (vq.rows, vk.rows, vq.cols);
        let dh = d / heads;
        let scale = 1.0 / libm::sqrt(dh as f64);
        let mut out = vec![0.0; nq * d];
        // Cache the attention weights per head for the backward pass.
        let mut attn = vec![0.0; heads * nq * nk];
        for h in 0..heads {
            for i in 0..nq {
                let arow = &mut attn[(h * nq + i) * nk..(h * nq + i + 1) * nk];
                let mut hi = f64::NEG_INFINITY;
                for j in 0..nk {
                    let mut s = 0.0;
                    for c in 0..dh {
                        s += vq.data[i * d + h * dh + c] * vk.data[j * d + h * dh + c];
                    }
                    arow[j] = s * scale;
                    hi = hi.max(arow[j]);
                }
                let mut sum = 0.0;
                for j in 0..nk {
                    arow[j] = libm::exp(arow[j] - hi);
                    sum += arow[j];
                }
                for j in 0..nk {
                    arow[j] /= sum;
                }
                for j in 0..nk {
                    let a = arow[j];
                    for c in 0..dh {
                        out[i * d + h * dh + c] += a * vv.data[j * d + h * dh + c];
                    }
                }
            }
        }
        let (qi, ki, vi) = (q.0, k.0, v.0);
        let (rq, rk, rv) = (Rc::clone(&vq), Rc::clone(&vk), Rc::clone(&vv));
        let attn = Rc::new(attn);
        self.push(
            Matrix::from_vec(nq, d, out),
            Some(Box::new(move |g, grads| {
                for h in 0..heads {
                    for i in 0..nq {
                        let arow = &attn[(h * nq + i) * nk..(h * nq + i + 1) * nk];
                        // dA[j] = sum_c G[i, h, c] * V[j, h, c]; dV += A * G.
                        let mut da = vec![0.0; nk];
                        for j in 0..nk {
                            let mut acc = 0.0;
                            for c in 0..dh {
                                acc += g[i * d + h * dh + c] * rv.data[j * d + h * dh + c];
                            }
                            da[j] = acc;
                        }
                        {
                            let gv = &mut grads[vi];
                            for j in 0..nk {
                                let a = arow[j];
                                if a == 0.0 {
                                    continue;
                                }
                                for c in 0..dh {
                                    gv[j * d + h * dh + c] += a * g[i * d + h * dh + c];
                                }
                            }
                        }
                        // dS = A o (dA - <dA, A>)
                        let mut dot = 0.0;
                        for j in 0..nk {
                            dot += da[j] * arow[j];
                        }
                        let mut ds = vec![0.0; nk];
                        for j in 0..nk {
                            ds[j] = arow[j] * (da[j] - dot) * scale;
                        }
                        {
                            let gq = &mut grads[qi];
                            for j in 0..nk {
                                let s = ds[j];
                                if s == 0.0 {
                                    continue;
                                }
                                for c in 0..dh {
                                    gq[i * d + h * dh + c] += s * rk.data[j * d + h * dh + c];
                                }
                            }
                        }
                        {
                            let gk = &mut grads[ki];
                            for j in 0..nk {
                                let s = ds[j];
                                if s == 0.0 {
                                    continue;
                                }
                                for c in 0..dh {
                                    gk[j * d + h * dh + c] += s * rq.data[i * d + h * dh + c];
                                }
                            }
                        }
                    }
                }
            })),
        )
    }

    /// Scaled sum of squared errors against a constant target:
    /// `scale * sum (pred - target)^2`, a `1 x 1` node.
    pub fn mse_scaled(&mut self, pred: Var, target: &Matrix, scale: f64) -> Var {
        let vp = self.rc_value(pred);
        assert_eq!((vp.rows, vp.cols), (target.rows, target.cols), "mse shapes");
        let loss: f64 = vp
            .data
            .iter()
            .zip(target.data.iter())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            * scale;
        let pi = pred.0;
        let rp = Rc::clone(&vp);
        let tgt = target.data.clone();
        self.push(
            Matrix::from_vec(1, 1, vec![loss]),
            Some(Box::new(move |g, grads| {
                let gp = &mut grads[pi];
                let go = g[0] * scale * 2.0;
                for (i, (p, t)) in rp.data.iter().zip(tgt.iter()).enumerate() {
                    gp[i] += go * (p - t);
                }
            })),
        )
    }

    /// Project per-net scalars into coordinate space through fixed sparse
    /// per-net gradients: `out[m, c] = sum_n w[n] * sum_{(m, g) in coeffs[n]} g[c]`.
    ///
    /// The coefficients are constants of the op (evaluated at the current
    /// noisy state), so this is linear in `w` and its backward is the exact
    /// transpose.
    pub fn hpwl_project(
        &mut self,
        w: Var,
        coeffs: Rc<Vec<Vec<(usize, [f64; 2])>>>,
        num_movable: usize,
    ) -> Var {
        let vw = self.rc_value(w);
        assert_eq!(vw.cols, 1, "net weights are a column");
        assert_eq!(vw.rows, coeffs.len(), "one weight per net");
        let mut out = vec![0.0; num_movable * 2];
        for (n, entries) in coeffs.iter().enumerate() {
            let wn = vw.data[n];
            if wn == 0.0 {
                continue;
            }
            for &(mac, g) in entries {
                out[mac * 2] += wn * g[0];
                out[mac * 2 + 1] += wn * g[1];
            }
        }
        let wi = w.0;
        let coeffs_b = Rc::clone(&coeffs);
        self.push(
            Matrix::from_vec(num_movable, 2, out),
            Some(Box::new(move |g, grads| {
                let gw = &mut grads[wi];
                for (n, entries) in coeffs_b.iter().enumerate() {
                    let mut acc = 0.0;
                    for &(mac, cg) in entries {
                        acc += g[mac * 2] * cg[0] + g[mac * 2 + 1] * cg[1];
                    }
                    gw[n] += acc;
                }
            })),
        )
    }

    /// Divide by the root-mean-square plus a small epsilon:
    /// `y = x / (rms(x) + 1e-8)`.
    pub fn rms_normalize(&mut self, x: Var) -> Var {
        const EPS: f64 = 1e-8;
        let vx = self.rc_value(x);
        let k = vx.data.len() as f64;
        let rms = libm::sqrt(vx.data.iter().map(|v| v * v).sum::<f64>() / k);
        let denom = rms + EPS;
        let data = vx.data.iter().map(|v| v / denom).collect();
        let out = Matrix::from_vec(vx.rows, vx.cols, data);
        let xi = x.0;
        let rx = Rc::clone(&vx);
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                let gx = &mut grads[xi];
                if rms == 0.0 {
                    // x = 0 exactly: locally y = x / EPS.
                    for (i, &gi) in g.iter().enumerate() {
                        gx[i] += gi / EPS;
                    }
                    return;
                }
                // gx = g/denom - <g, x> * x / (k * rms * denom^2)
                let mut dot = 0.0;
                for (gi, xv) in g.iter().zip(rx.data.iter()) {
                    dot += gi * xv;
                }
                let corr = dot / (k * rms * denom * denom);
                for (i, (&gi, &xv)) in g.iter().zip(rx.data.iter()).enumerate() {
                    gx[i] += gi / denom - corr * xv;
                }
            })),
        )
    }

    /// Reverse pass from a scalar root. Gradients of every node (leaves
    /// included) are returned; constants are simply never read.
    pub fn backward(&self, root: Var) -> Gradients {
        let rv = self.value(root);
        assert_eq!((rv.rows, rv.cols), (1, 1), "backward root must be scalar");
        let mut store: Vec<Vec<f64>> =
            self.nodes.iter().map(|n| vec![0.0; n.value.data.len()]).collect();
        store[root.0][0] = 1.0;
        for i in (0..=root.0).rev() {
            let g = core::mem::take(&mut store[i]);
            if let Some(back) = &self.nodes[i].back {
                back(&g, &mut store);
            }
            store[i] = g;
        }
        Gradients { store }
    }
}
