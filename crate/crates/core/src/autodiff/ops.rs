//! Differentiable operations. Feature maps are channels-first `[B, C, H, W]`.

use super::real::gemm;
use super::tape::{Tape, Var};
use super::Real;
use crate::error::{shape_err, Result};

const GELU_K: f64 = 0.044_715;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Numpy-style broadcast of two shapes.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return shape_err(format!("shapes {a:?} and {b:?} do not broadcast")),
        };
    }
    Ok(out)
}

/// For each output element, the flat index into an operand of `shape`.
fn broadcast_index(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let n = out.len();
    let mut strides = vec![0usize; n];
    let mut s = 1;
    for i in (0..shape.len()).rev() {
        let oi = i + n - shape.len();
        strides[oi] = if shape[i] == 1 { 0 } else { s };
        s *= shape[i];
    }
    let total: usize = out.iter().product();
    let mut idx = Vec::with_capacity(total);
    let mut counter = vec![0usize; n];
    let mut flat = 0usize;
    for _ in 0..total {
        idx.push(flat);
        for d in (0..n).rev() {
            counter[d] += 1;
            flat += strides[d];
            if counter[d] < out[d] {
                break;
            }
            flat -= strides[d] * out[d];
            counter[d] = 0;
        }
    }
    idx
}

fn reduce_to<T: Real>(g: &[T], idx: &[usize], len: usize) -> Vec<T> {
    let mut r = vec![T::zero(); len];
    for (gi, &i) in g.iter().zip(idx) {
        r[i] = r[i] + *gi;
    }
    r
}

#[derive(Clone, Copy)]
enum Bin {
    Add,
    Sub,
    Mul,
}

pub fn gelu<T: Real>(x: T) -> T {
    let c = T::c(SQRT_2_OVER_PI);
    let half = T::c(0.5);
    half * x * (T::one() + (c * (x + T::c(GELU_K) * x * x * x)).tanh())
}

/// `tanh` through a single `exp`; saturates cleanly at both ends.
fn tanh_exp<T: Real>(y: T) -> T {
    let e = (y + y).exp();
    T::one() - T::c(2.0) / (e + T::one())
}

pub fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::c(SQRT_2_OVER_PI);
    let half = T::c(0.5);
    let t = (c * (x + T::c(GELU_K) * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::c(3.0 * GELU_K) * x * x)
}

/// Output spatial extent of a convolution.
pub fn conv_out(n: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 || n + 2 * pad < k {
        return shape_err(format!("conv of extent {n} with kernel {k}, stride {stride}, pad {pad}"));
    }
    Ok((n + 2 * pad - k) / stride + 1)
}

struct ConvGeom {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let (hw_o, k) = (self.ho * self.wo, self.k);
        for c in 0..self.cin {
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((c * k + ky) * k + kx) * hw_o..][..hw_o];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        let dst = &mut row[oy * self.wo..(oy + 1) * self.wo];
                        if iy < 0 || iy >= self.h as isize {
                            dst.iter_mut().for_each(|v| *v = T::zero());
                            continue;
                        }
                        let src = &x[(c * self.h + iy as usize) * self.w..][..self.w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            *d = if ix < 0 || ix >= self.w as isize { T::zero() } else { src[ix as usize] };
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Real>(&self, cols: &[T], dx: &mut [T]) {
        let (hw_o, k) = (self.ho * self.wo, self.k);
        for c in 0..self.cin {
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((c * k + ky) * k + kx) * hw_o..][..hw_o];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut dx[(c * self.h + iy as usize) * self.w..][..self.w];
                        for ox in 0..self.wo {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] = dst[ix as usize] + row[oy * self.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Batch statistics from a training-mode batch norm, for updating running averages.
#[derive(Debug, Clone)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased (population) variance used for normalization.
    pub var: Vec<T>,
    /// Number of values per channel.
    pub count: usize,
}

impl<'a, T: Real> Tape<'a, T> {
    fn binary(&mut self, a: Var, b: Var, op: Bin) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let out_shape = broadcast_shape(&sa, &sb)?;
        let (va, vb) = (self.value(a), self.value(b));
        let value: Vec<T>;
        let (ia, ib): (Option<Vec<usize>>, Option<Vec<usize>>);
        if sa == sb {
            value = match op {
                Bin::Add => va.iter().zip(vb).map(|(x, y)| *x + *y).collect(),
                Bin::Sub => va.iter().zip(vb).map(|(x, y)| *x - *y).collect(),
                Bin::Mul => va.iter().zip(vb).map(|(x, y)| *x * *y).collect(),
            };
            ia = None;
            ib = None;
        } else {
            let xa = broadcast_index(&sa, &out_shape);
            let xb = broadcast_index(&sb, &out_shape);
            value = xa
                .iter()
                .zip(&xb)
                .map(|(&i, &j)| match op {
                    Bin::Add => va[i] + vb[j],
                    Bin::Sub => va[i] - vb[j],
                    Bin::Mul => va[i] * vb[j],
                })
                .collect();
            ia = Some(xa);
            ib = Some(xb);
        }
        let (la, lb) = (va.len(), vb.len());
        Ok(self.push_op(
            value,
            out_shape,
            vec![a, b],
            Box::new(move |ctx, g| {
                let (va, vb) = (ctx.inputs[0], ctx.inputs[1]);
                let ga: Option<Vec<T>> = ctx.needs[0].then(|| {
                    let full: Vec<T> = match op {
                        Bin::Add | Bin::Sub => g.to_vec(),
                        Bin::Mul => match &ib {
                            None => g.iter().zip(vb).map(|(g, y)| *g * *y).collect(),
                            Some(ib) => g.iter().zip(ib).map(|(g, &j)| *g * vb[j]).collect(),
                        },
                    };
                    match &ia {
                        None => full,
                        Some(ia) => reduce_to(&full, ia, la),
                    }
                });
                let gb: Option<Vec<T>> = ctx.needs[1].then(|| {
                    let full: Vec<T> = match op {
                        Bin::Add => g.to_vec(),
                        Bin::Sub => g.iter().map(|g| -*g).collect(),
                        Bin::Mul => match &ia {
                            None => g.iter().zip(va).map(|(g, x)| *g * *x).collect(),
                            Some(ia) => g.iter().zip(ia).map(|(g, &i)| *g * va[i]).collect(),
                        },
                    };
                    match &ib {
                        None => full,
                        Some(ib) => reduce_to(&full, ib, lb),
                    }
                });
                vec![ga, gb]
            }),
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Bin::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Bin::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Bin::Mul)
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, df: impl Fn(T, T) -> T + 'a) -> Var {
        let value = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push_op(
            value,
            shape,
            vec![a],
            Box::new(move |ctx, g| vec![Some(g.iter().zip(ctx.inputs[0]).zip(ctx.out).map(|((g, &x), &y)| *g * df(x, y)).collect())]),
        )
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        self.unary(a, move |x| x * s, move |_, _| s)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        self.unary(
            a,
            move |x| if x >= T::zero() { x } else { x * slope },
            move |x, _| if x >= T::zero() { T::one() } else { slope },
        )
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let (c, k, half, one) = (T::c(SQRT_2_OVER_PI), T::c(GELU_K), T::c(0.5), T::one());
        let xs = self.value(a);
        let mut th = Vec::with_capacity(xs.len());
        let mut y = Vec::with_capacity(xs.len());
        for &x in xs {
            let t = tanh_exp(c * (x + k * x * x * x));
            th.push(t);
            y.push(half * x * (one + t));
        }
        let shape = self.shape(a).to_vec();
        let k3 = T::c(3.0 * GELU_K);
        self.push_op(
            y,
            shape,
            vec![a],
            Box::new(move |ctx, g| {
                let d = g
                    .iter()
                    .zip(ctx.inputs[0])
                    .zip(&th)
                    .map(|((g, &x), &t)| *g * (half * (one + t) + half * x * (one - t * t) * c * (one + k3 * x * x)))
                    .collect();
                vec![Some(d)]
            }),
        )
    }

    pub fn identity(&mut self, a: Var) -> Var {
        self.unary(a, |x| x, |_, _| T::one())
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let s = self.value(a).iter().copied().sum::<T>();
        self.push_op(vec![s], vec![1], vec![a], Box::new(move |_, g| vec![Some(vec![g[0]; n])]))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let s = self.sum(a);
        self.scale(s, T::one() / T::c(n as f64))
    }

    /// Mean squared entrywise difference.
    pub fn mse(&mut self, pred: Var, label: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(label) {
            return shape_err(format!("mse of {:?} and {:?}", self.shape(pred), self.shape(label)));
        }
        let n = T::c(self.value(pred).len() as f64);
        let s = self.value(pred).iter().zip(self.value(label)).map(|(p, l)| (*p - *l) * (*p - *l)).sum::<T>() / n;
        Ok(self.push_op(
            vec![s],
            vec![1],
            vec![pred, label],
            Box::new(move |ctx, g| {
                let two = T::c(2.0) * g[0] / n;
                let d: Vec<T> = ctx.inputs[0].iter().zip(ctx.inputs[1]).map(|(p, l)| two * (*p - *l)).collect();
                let neg = ctx.needs[1].then(|| d.iter().map(|x| -*x).collect());
                vec![ctx.needs[0].then_some(d), neg]
            }),
        ))
    }

    /// Euclidean norm of each sample (leading axis), averaged over the batch.
    pub fn l2norm(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.is_empty() || shape[0] == 0 {
            return shape_err("l2norm needs a leading batch axis");
        }
        let b = shape[0];
        let per = self.value(x).len() / b;
        let norms: Vec<T> = self.value(x).chunks(per).map(|c| c.iter().map(|v| *v * *v).sum::<T>().sqrt()).collect();
        let s = norms.iter().copied().sum::<T>() / T::c(b as f64);
        Ok(self.push_op(
            vec![s],
            vec![1],
            vec![x],
            Box::new(move |ctx, g| {
                let scale = g[0] / T::c(b as f64);
                let mut out = Vec::with_capacity(ctx.inputs[0].len());
                for (c, &n) in ctx.inputs[0].chunks(per).zip(&norms) {
                    if n > T::zero() {
                        out.extend(c.iter().map(|v| scale * *v / n));
                    } else {
                        out.extend(std::iter::repeat_n(T::zero(), c.len()));
                    }
                }
                vec![Some(out)]
            }),
        ))
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return shape_err(format!("narrow {start}+{len} on axis {axis} of {shape:?}"));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let n = shape[axis];
        let v = self.value(x);
        let mut value = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            value.extend_from_slice(&v[(o * n + start) * inner..(o * n + start + len) * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let total = v.len();
        Ok(self.push_op(
            value,
            out_shape,
            vec![x],
            Box::new(move |_, g| {
                let mut d = vec![T::zero(); total];
                for o in 0..outer {
                    d[(o * n + start) * inner..(o * n + start + len) * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(d)]
            }),
        ))
    }

    /// Same values, new shape.
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return shape_err(format!("cannot reshape {:?} to {shape:?}", self.shape(x)));
        }
        let value = self.value(x).to_vec();
        Ok(self.push_op(value, shape.to_vec(), vec![x], Box::new(|_, g| vec![Some(g.to_vec())])))
    }

    /// Pointwise linear map over the channel axis (axis 1): `W` is
    /// `[c_in, c_out]`, `bias` is `[c_out]`.
    pub fn channel_mix(&mut self, h: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let hs = self.shape(h).to_vec();
        let ws = self.shape(w).to_vec();
        if hs.len() < 2 || ws.len() != 2 || ws[0] != hs[1] {
            return shape_err(format!("channel_mix of {hs:?} with weight {ws:?}"));
        }
        let (b, cin, cout) = (hs[0], hs[1], ws[1]);
        if let Some(bv) = bias {
            if self.shape(bv) != [cout] {
                return shape_err(format!("channel_mix bias {:?} for {cout} outputs", self.shape(bv)));
            }
        }
        let s: usize = hs[2..].iter().product();
        let (hv, wv) = (self.value(h), self.value(w));
        let mut out = vec![T::zero(); b * cout * s];
        if let Some(bv) = bias {
            let bv = self.value(bv);
            for (i, chunk) in out.chunks_mut(s).enumerate() {
                chunk.iter_mut().for_each(|v| *v = bv[i % cout]);
            }
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        for bi in 0..b {
            gemm(true, false, cout, cin, s, T::one(), wv, &hv[bi * cin * s..(bi + 1) * cin * s], beta, &mut out[bi * cout * s..(bi + 1) * cout * s]);
        }
        let mut shape = hs.clone();
        shape[1] = cout;
        let mut inputs = vec![h, w];
        inputs.extend(bias);
        Ok(self.push_op(
            out,
            shape,
            inputs,
            Box::new(move |ctx, g| {
                let (hv, wv) = (ctx.inputs[0], ctx.inputs[1]);
                let dh = ctx.needs[0].then(|| {
                    let mut dh = vec![T::zero(); b * cin * s];
                    for bi in 0..b {
                        gemm(false, false, cin, cout, s, T::one(), wv, &g[bi * cout * s..(bi + 1) * cout * s], T::zero(), &mut dh[bi * cin * s..(bi + 1) * cin * s]);
                    }
                    dh
                });
                let dw = ctx.needs[1].then(|| {
                    let mut dw = vec![T::zero(); cin * cout];
                    for bi in 0..b {
                        gemm(false, true, cin, s, cout, T::one(), &hv[bi * cin * s..(bi + 1) * cin * s], &g[bi * cout * s..(bi + 1) * cout * s], T::one(), &mut dw);
                    }
                    dw
                });
                let mut r = vec![dh, dw];
                if ctx.inputs.len() == 3 {
                    r.push(ctx.needs[2].then(|| {
                        let mut db = vec![T::zero(); cout];
                        for (i, chunk) in g.chunks(s).enumerate() {
                            db[i % cout] = db[i % cout] + chunk.iter().copied().sum::<T>();
                        }
                        db
                    }));
                }
                r
            }),
        ))
    }

    /// 2-D convolution, square kernel `[c_out, c_in, k, k]`.
    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(kernel).to_vec();
        if xs.len() != 4 || ks.len() != 4 || ks[1] != xs[1] || ks[2] != ks[3] {
            return shape_err(format!("conv2d of {xs:?} with kernel {ks:?}"));
        }
        let (b, cin, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, k) = (ks[0], ks[2]);
        if let Some(bv) = bias {
            if self.shape(bv) != [cout] {
                return shape_err("conv2d bias length differs from output channels");
            }
        }
        let geom = ConvGeom { cin, h, w, k, stride, pad, ho: conv_out(h, k, stride, pad)?, wo: conv_out(w, k, stride, pad)? };
        let (ho, wo) = (geom.ho, geom.wo);
        let (so, ckk) = (ho * wo, cin * k * k);
        let (xv, kv) = (self.value(x), self.value(kernel));
        let mut out = vec![T::zero(); b * cout * so];
        let mut cols = vec![T::zero(); ckk * so];
        for bi in 0..b {
            geom.im2col(&xv[bi * cin * h * w..(bi + 1) * cin * h * w], &mut cols);
            gemm(false, false, cout, ckk, so, T::one(), kv, &cols, T::zero(), &mut out[bi * cout * so..(bi + 1) * cout * so]);
        }
        if let Some(bv) = bias {
            let bv = self.value(bv);
            for (i, chunk) in out.chunks_mut(so).enumerate() {
                let c = bv[i % cout];
                chunk.iter_mut().for_each(|v| *v = *v + c);
            }
        }
        let mut inputs = vec![x, kernel];
        inputs.extend(bias);
        Ok(self.push_op(
            out,
            vec![b, cout, ho, wo],
            inputs,
            Box::new(move |ctx, g| {
                let (xv, kv) = (ctx.inputs[0], ctx.inputs[1]);
                let mut cols = vec![T::zero(); ckk * so];
                let mut dx = ctx.needs[0].then(|| vec![T::zero(); b * cin * h * w]);
                let mut dk = ctx.needs[1].then(|| vec![T::zero(); cout * ckk]);
                for bi in 0..b {
                    let gb = &g[bi * cout * so..(bi + 1) * cout * so];
                    if let Some(dk) = dk.as_mut() {
                        geom.im2col(&xv[bi * cin * h * w..(bi + 1) * cin * h * w], &mut cols);
                        gemm(false, true, cout, so, ckk, T::one(), gb, &cols, T::one(), dk);
                    }
                    if let Some(dx) = dx.as_mut() {
                        gemm(true, false, ckk, cout, so, T::one(), kv, gb, T::zero(), &mut cols);
                        geom.col2im(&cols, &mut dx[bi * cin * h * w..(bi + 1) * cin * h * w]);
                    }
                }
                let mut r = vec![dx, dk];
                if ctx.inputs.len() == 3 {
                    r.push(ctx.needs[2].then(|| {
                        let mut db = vec![T::zero(); cout];
                        for (i, chunk) in g.chunks(so).enumerate() {
                            db[i % cout] = db[i % cout] + chunk.iter().copied().sum::<T>();
                        }
                        db
                    }));
                }
                r
            }),
        ))
    }

    fn bn_check(&self, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize, usize)> {
        let xs = self.shape(x);
        if xs.len() < 2 || self.shape(gamma) != [xs[1]] || self.shape(beta) != [xs[1]] {
            return shape_err(format!("batchnorm of {xs:?} with gamma {:?}", self.shape(gamma)));
        }
        Ok((xs[0], xs[1], xs[2..].iter().product()))
    }

    /// Batch norm over `(B, spatial)` per channel using the batch statistics.
    pub fn batchnorm2d_train(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<(Var, BatchStats<T>)> {
        let (b, c, s) = self.bn_check(x, gamma, beta)?;
        let n = b * s;
        let xv = self.value(x);
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for (i, chunk) in xv.chunks(s).enumerate() {
            mean[i % c] = mean[i % c] + chunk.iter().copied().sum::<T>();
        }
        mean.iter_mut().for_each(|m| *m = *m / T::c(n as f64));
        for (i, chunk) in xv.chunks(s).enumerate() {
            let m = mean[i % c];
            var[i % c] = var[i % c] + chunk.iter().map(|v| (*v - m) * (*v - m)).sum::<T>();
        }
        var.iter_mut().for_each(|v| *v = *v / T::c(n as f64));
        let inv: Vec<T> = var.iter().map(|v| T::one() / (*v + eps).sqrt()).collect();
        let (gv, bv) = (self.value(gamma), self.value(beta));
        let mut xhat = Vec::with_capacity(xv.len());
        let mut out = Vec::with_capacity(xv.len());
        for (i, chunk) in xv.chunks(s).enumerate() {
            let ch = i % c;
            for v in chunk {
                let xh = (*v - mean[ch]) * inv[ch];
                xhat.push(xh);
                out.push(gv[ch] * xh + bv[ch]);
            }
        }
        let stats = BatchStats { mean: mean.clone(), var, count: n };
        let y = self.push_op(
            out,
            self.shape(x).to_vec(),
            vec![x, gamma, beta],
            Box::new(move |ctx, g| {
                let gv = ctx.inputs[1];
                let mut sum_g = vec![T::zero(); c];
                let mut sum_gx = vec![T::zero(); c];
                for (i, (gc, xc)) in g.chunks(s).zip(xhat.chunks(s)).enumerate() {
                    let ch = i % c;
                    for (gi, xi) in gc.iter().zip(xc) {
                        sum_g[ch] = sum_g[ch] + *gi;
                        sum_gx[ch] = sum_gx[ch] + *gi * *xi;
                    }
                }
                let dx = ctx.needs[0].then(|| {
                    let nn = T::c(n as f64);
                    let mut dx = Vec::with_capacity(g.len());
                    for (i, (gc, xc)) in g.chunks(s).zip(xhat.chunks(s)).enumerate() {
                        let ch = i % c;
                        let k = gv[ch] * inv[ch] / nn;
                        dx.extend(gc.iter().zip(xc).map(|(gi, xi)| k * (nn * *gi - sum_g[ch] - *xi * sum_gx[ch])));
                    }
                    dx
                });
                vec![dx, ctx.needs[1].then_some(sum_gx), ctx.needs[2].then_some(sum_g)]
            }),
        );
        Ok((y, stats))
    }

    /// Batch norm with fixed statistics.
    pub fn batchnorm2d_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[T], var: &[T], eps: T) -> Result<Var> {
        let (_, c, s) = self.bn_check(x, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return shape_err("running statistics do not match the channel count");
        }
        let inv: Vec<T> = var.iter().map(|v| T::one() / (*v + eps).sqrt()).collect();
        let mean = mean.to_vec();
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let mut out = Vec::with_capacity(xv.len());
        for (i, chunk) in xv.chunks(s).enumerate() {
            let ch = i % c;
            out.extend(chunk.iter().map(|v| gv[ch] * (*v - mean[ch]) * inv[ch] + bv[ch]));
        }
        Ok(self.push_op(
            out,
            self.shape(x).to_vec(),
            vec![x, gamma, beta],
            Box::new(move |ctx, g| {
                let (xv, gv) = (ctx.inputs[0], ctx.inputs[1]);
                let mut dg = vec![T::zero(); c];
                let mut db = vec![T::zero(); c];
                let mut dx = Vec::with_capacity(g.len());
                for (i, (gc, xc)) in g.chunks(s).zip(xv.chunks(s)).enumerate() {
                    let ch = i % c;
                    for (gi, xi) in gc.iter().zip(xc) {
                        dg[ch] = dg[ch] + *gi * (*xi - mean[ch]) * inv[ch];
                        db[ch] = db[ch] + *gi;
                        dx.push(*gi * gv[ch] * inv[ch]);
                    }
                }
                vec![ctx.needs[0].then_some(dx), ctx.needs[1].then_some(dg), ctx.needs[2].then_some(db)]
            }),
        ))
    }

    /// Nearest-neighbour upsampling of the two trailing axes by `scale`.
    pub fn upsample_nearest(&mut self, x: Var, scale: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 || scale == 0 {
            return shape_err(format!("upsample of {xs:?} by {scale}"));
        }
        let (h, w) = (xs[xs.len() - 2], xs[xs.len() - 1]);
        let (ho, wo) = (h * scale, w * scale);
        let planes = self.value(x).len() / (h * w);
        let xv = self.value(x);
        let mut out = Vec::with_capacity(planes * ho * wo);
        for p in 0..planes {
            let src = &xv[p * h * w..(p + 1) * h * w];
            for oy in 0..ho {
                let row = &src[(oy / scale) * w..(oy / scale + 1) * w];
                out.extend((0..wo).map(|ox| row[ox / scale]));
            }
        }
        let mut shape = xs.clone();
        let n = shape.len();
        shape[n - 2] = ho;
        shape[n - 1] = wo;
        Ok(self.push_op(
            out,
            shape,
            vec![x],
            Box::new(move |_, g| {
                let mut d = vec![T::zero(); planes * h * w];
                for p in 0..planes {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let i = p * h * w + (oy / scale) * w + ox / scale;
                            d[i] = d[i] + g[p * ho * wo + oy * wo + ox];
                        }
                    }
                }
                vec![Some(d)]
            }),
        ))
    }

    /// Centered `out_h x out_w` window of the two trailing axes.
    pub fn crop_center(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let n = xs.len();
        if n < 2 || out_h > xs[n - 2] || out_w > xs[n - 1] {
            return shape_err(format!("crop {out_h}x{out_w} from {xs:?}"));
        }
        let (h, w) = (xs[n - 2], xs[n - 1]);
        let (oy, ox) = ((h - out_h) / 2, (w - out_w) / 2);
        let planes = self.value(x).len() / (h * w);
        let xv = self.value(x);
        let mut out = Vec::with_capacity(planes * out_h * out_w);
        for p in 0..planes {
            for y in 0..out_h {
                let r = p * h * w + (y + oy) * w + ox;
                out.extend_from_slice(&xv[r..r + out_w]);
            }
        }
        let mut shape = xs.clone();
        shape[n - 2] = out_h;
        shape[n - 1] = out_w;
        Ok(self.push_op(
            out,
            shape,
            vec![x],
            Box::new(move |_, g| {
                let mut d = vec![T::zero(); planes * h * w];
                for p in 0..planes {
                    for y in 0..out_h {
                        let r = p * h * w + (y + oy) * w + ox;
                        d[r..r + out_w].copy_from_slice(&g[(p * out_h + y) * out_w..(p * out_h + y + 1) * out_w]);
                    }
                }
                vec![Some(d)]
            }),
        ))
    }
}

