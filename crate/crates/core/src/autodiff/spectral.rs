//! Spectral operations on the two trailing (spatial) axes.
//!
//! Complex tensors carry a trailing axis of length 2 (real, imaginary).
//! `irfft2` is the real-valued map `x = (1/HW) sum w_kx Re(X exp(+i theta))`
//! with `w = 1` on the zero and Nyquist columns and 2 elsewhere, so it
//! inverts `rfft2` exactly.

use std::f64::consts::TAU;

use num_complex::Complex;
use rustfft::FftPlanner;

use super::real::gemm;
use super::tape::{Tape, Var};
use super::Real;
use crate::error::{shape_err, Result};

fn column_weight(kx: usize, w: usize) -> f64 {
    if kx == 0 || 2 * kx == w {
        1.0
    } else {
        2.0
    }
}

/// Unnormalized 2-D FFT of an `h x w` complex plane in place.
fn fft2_plane<T: Real>(planner: &mut FftPlanner<T>, buf: &mut [Complex<T>], h: usize, w: usize, inverse: bool) {
    let row = if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    row.process(buf);
    let col = if inverse { planner.plan_fft_inverse(h) } else { planner.plan_fft_forward(h) };
    let mut tmp = vec![Complex::new(T::zero(), T::zero()); h];
    for x in 0..w {
        for y in 0..h {
            tmp[y] = buf[y * w + x];
        }
        col.process(&mut tmp);
        for y in 0..h {
            buf[y * w + x] = tmp[y];
        }
    }
}

/// Kept spectrum rows: the lowest `mz` nonnegative and `mz` negative frequencies.
pub fn kept_rows(h: usize, mz: usize) -> Vec<usize> {
    (0..mz).chain(h - mz..h).collect()
}

fn check_modes(h: usize, wr: usize, mz: usize, mx: usize) -> Result<()> {
    if mz == 0 || mx == 0 || 2 * mz > h || mx > wr {
        return shape_err(format!("{mz}x{mx} modes do not fit a {h}x{wr} half spectrum"));
    }
    Ok(())
}

fn check_weights<T: Real>(tape: &Tape<'_, T>, re: Var, im: Var) -> Result<[usize; 5]> {
    let s = tape.shape(re);
    if s.len() != 5 || s[0] != 2 || tape.shape(im) != s {
        return shape_err(format!("mode weights must be [2, mz, mx, cin, cout], got {s:?} and {:?}", tape.shape(im)));
    }
    Ok([s[0], s[1], s[2], s[3], s[4]])
}

impl<'a, T: Real> Tape<'a, T> {
    /// `[..., H, W]` real to `[..., H, W/2+1, 2]`.
    pub fn rfft2(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let n = xs.len();
        if n < 2 {
            return shape_err("rfft2 needs two spatial axes");
        }
        let (h, w) = (xs[n - 2], xs[n - 1]);
        let wr = w / 2 + 1;
        let planes = self.value(x).len() / (h * w).max(1);
        let mut planner = FftPlanner::new();
        let mut out = Vec::with_capacity(planes * h * wr * 2);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); h * w];
        for p in self.value(x).chunks(h * w) {
            buf.iter_mut().zip(p).for_each(|(b, v)| *b = Complex::new(*v, T::zero()));
            fft2_plane(&mut planner, &mut buf, h, w, false);
            for y in 0..h {
                for kx in 0..wr {
                    let c = buf[y * w + kx];
                    out.push(c.re);
                    out.push(c.im);
                }
            }
        }
        let mut shape = xs[..n - 1].to_vec();
        shape.push(wr);
        shape.push(2);
        Ok(self.push_op(
            out,
            shape,
            vec![x],
            Box::new(move |_, g| {
                let mut planner = FftPlanner::new();
                let mut d = Vec::with_capacity(planes * h * w);
                let mut buf = vec![Complex::new(T::zero(), T::zero()); h * w];
                for gp in g.chunks(h * wr * 2) {
                    buf.iter_mut().for_each(|b| *b = Complex::new(T::zero(), T::zero()));
                    for y in 0..h {
                        for kx in 0..wr {
                            let i = (y * wr + kx) * 2;
                            buf[y * w + kx] = Complex::new(gp[i], gp[i + 1]);
                        }
                    }
                    fft2_plane(&mut planner, &mut buf, h, w, true);
                    d.extend(buf.iter().map(|c| c.re));
                }
                vec![Some(d)]
            }),
        ))
    }

    /// `[..., H, Wr, 2]` to a real `[..., H, w]` field; `Wr <= w/2 + 1`.
    pub fn irfft2(&mut self, spec: Var, w: usize) -> Result<Var> {
        let ss = self.shape(spec).to_vec();
        let n = ss.len();
        if n < 3 || ss[n - 1] != 2 || ss[n - 2] > w / 2 + 1 {
            return shape_err(format!("irfft2 of {ss:?} to width {w}"));
        }
        let (h, wr) = (ss[n - 3], ss[n - 2]);
        let planes = self.value(spec).len() / (h * wr * 2).max(1);
        let norm = T::one() / T::c((h * w) as f64);
        let weights: Vec<T> = (0..wr).map(|kx| T::c(column_weight(kx, w)) * norm).collect();
        let mut planner = FftPlanner::new();
        let mut out = Vec::with_capacity(planes * h * w);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); h * w];
        for p in self.value(spec).chunks(h * wr * 2) {
            buf.iter_mut().for_each(|b| *b = Complex::new(T::zero(), T::zero()));
            for y in 0..h {
                for kx in 0..wr {
                    let i = (y * wr + kx) * 2;
                    buf[y * w + kx] = Complex::new(p[i], p[i + 1]) * weights[kx];
                }
            }
            fft2_plane(&mut planner, &mut buf, h, w, true);
            out.extend(buf.iter().map(|c| c.re));
        }
        let mut shape = ss[..n - 2].to_vec();
        shape[n - 3] = h;
        shape.push(w);
        Ok(self.push_op(
            out,
            shape,
            vec![spec],
            Box::new(move |_, g| {
                let mut planner = FftPlanner::new();
                let mut d = Vec::with_capacity(planes * h * wr * 2);
                let mut buf = vec![Complex::new(T::zero(), T::zero()); h * w];
                for gp in g.chunks(h * w) {
                    buf.iter_mut().zip(gp).for_each(|(b, v)| *b = Complex::new(*v, T::zero()));
                    fft2_plane(&mut planner, &mut buf, h, w, false);
                    for y in 0..h {
                        for kx in 0..wr {
                            let c = buf[y * w + kx] * weights[kx];
                            d.push(c.re);
                            d.push(c.im);
                        }
                    }
                }
                vec![Some(d)]
            }),
        ))
    }

    /// Contracts the kept mode block of `[B, Cin, H, Wr, 2]` with complex
    /// weights `[2, mz, mx, Cin, Cout]` (block 0: rows `0..mz`, block 1:
    /// rows `H-mz..H`) and zeroes all other modes.
    pub fn mode_multiply(&mut self, spec: Var, r_re: Var, r_im: Var) -> Result<Var> {
        let ss = self.shape(spec).to_vec();
        let [_, mz, mx, cin, cout] = check_weights(self, r_re, r_im)?;
        if ss.len() != 5 || ss[4] != 2 || ss[1] != cin {
            return shape_err(format!("mode_multiply of {ss:?} with {cin} input channels"));
        }
        let (b, h, wr) = (ss[0], ss[2], ss[3]);
        check_modes(h, wr, mz, mx)?;
        let rows = kept_rows(h, mz);
        let idx = move |bb: usize, c: usize, cs: usize, y: usize, kx: usize| (((bb * cs + c) * h + y) * wr + kx) * 2;
        let (sv, rre, rim) = (self.value(spec), self.value(r_re), self.value(r_im));
        let mut out = vec![T::zero(); b * cout * h * wr * 2];
        for (r, &y) in rows.iter().enumerate() {
            for kx in 0..mx {
                let wbase = (r * mx + kx) * cin * cout;
                for bb in 0..b {
                    for i in 0..cin {
                        let xi = idx(bb, i, cin, y, kx);
                        let (xr, xm) = (sv[xi], sv[xi + 1]);
                        for o in 0..cout {
                            let (wr_, wi) = (rre[wbase + i * cout + o], rim[wbase + i * cout + o]);
                            let oi = idx(bb, o, cout, y, kx);
                            out[oi] = out[oi] + xr * wr_ - xm * wi;
                            out[oi + 1] = out[oi + 1] + xr * wi + xm * wr_;
                        }
                    }
                }
            }
        }
        Ok(self.push_op(
            out,
            vec![b, cout, h, wr, 2],
            vec![spec, r_re, r_im],
            Box::new(move |ctx, g| {
                let (sv, rre, rim) = (ctx.inputs[0], ctx.inputs[1], ctx.inputs[2]);
                let mut dx = vec![T::zero(); sv.len()];
                let mut dre = vec![T::zero(); rre.len()];
                let mut dim = vec![T::zero(); rim.len()];
                for (r, &y) in rows.iter().enumerate() {
                    for kx in 0..mx {
                        let wbase = (r * mx + kx) * cin * cout;
                        for bb in 0..b {
                            for i in 0..cin {
                                let xi = idx(bb, i, cin, y, kx);
                                let (xr, xm) = (sv[xi], sv[xi + 1]);
                                for o in 0..cout {
                                    let oi = idx(bb, o, cout, y, kx);
                                    let (gr, gi) = (g[oi], g[oi + 1]);
                                    let wi_ = wbase + i * cout + o;
                                    let (wr_, wm) = (rre[wi_], rim[wi_]);
                                    dx[xi] = dx[xi] + gr * wr_ + gi * wm;
                                    dx[xi + 1] = dx[xi + 1] + gi * wr_ - gr * wm;
                                    dre[wi_] = dre[wi_] + xr * gr + xm * gi;
                                    dim[wi_] = dim[wi_] + xr * gi - xm * gr;
                                }
                            }
                        }
                    }
                }
                vec![ctx.needs[0].then_some(dx), ctx.needs[1].then_some(dre), ctx.needs[2].then_some(dim)]
            }),
        ))
    }

    /// `irfft2(mode_multiply(rfft2(h), R), W)` computed with truncated DFT
    /// matrices, touching only the kept modes.
    pub fn spectral_conv(&mut self, x: Var, r_re: Var, r_im: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let [_, mz, mx, cin, cout] = check_weights(self, r_re, r_im)?;
        if xs.len() != 4 || xs[1] != cin {
            return shape_err(format!("spectral_conv of {xs:?} with {cin} input channels"));
        }
        let (b, h, w) = (xs[0], xs[2], xs[3]);
        check_modes(h, w / 2 + 1, mz, mx)?;
        let plan = DftPlan::new(h, w, mz, mx);
        let (xv, rre, rim) = (self.value(x), self.value(r_re), self.value(r_im));
        let (x2re, x2im) = plan.forward(xv, b * cin);
        let (y2re, y2im) = plan.mix(&x2re, &x2im, rre, rim, b, cin, cout);
        let out = plan.inverse(&y2re, &y2im, b * cout);
        Ok(self.push_op(
            out,
            vec![b, cout, h, w],
            vec![x, r_re, r_im],
            Box::new(move |ctx, g| {
                let (rre, rim) = (ctx.inputs[1], ctx.inputs[2]);
                let (gre, gim) = plan.inverse_adjoint(g, b * cout);
                let m = plan.modes();
                let mut dx2re = vec![T::zero(); b * cin * m];
                let mut dx2im = vec![T::zero(); b * cin * m];
                let mut dre = vec![T::zero(); rre.len()];
                let mut dim = vec![T::zero(); rim.len()];
                let ngre: Vec<T> = gre.iter().map(|v| -*v).collect();
                for mode in 0..m {
                    let wo = mode * cin * cout;
                    let (wre, wim) = (&rre[wo..wo + cin * cout], &rim[wo..wo + cin * cout]);
                    // dX = dO R^H
                    strided_mm(b, cout, cin, &gre[mode..], cout * m, m, wre, 1, cout, &mut dx2re[mode..], cin * m, m, T::one());
                    strided_mm(b, cout, cin, &gim[mode..], cout * m, m, wim, 1, cout, &mut dx2re[mode..], cin * m, m, T::one());
                    strided_mm(b, cout, cin, &gim[mode..], cout * m, m, wre, 1, cout, &mut dx2im[mode..], cin * m, m, T::one());
                    strided_mm(b, cout, cin, &ngre[mode..], cout * m, m, wim, 1, cout, &mut dx2im[mode..], cin * m, m, T::one());
                    if ctx.needs[1] || ctx.needs[2] {
                        let x2r = &x2re[mode..];
                        let x2i = &x2im[mode..];
                        let (dr, di) = (&mut dre[wo..wo + cin * cout], &mut dim[wo..wo + cin * cout]);
                        // dR = X^H dO
                        strided_mm(cin, b, cout, x2r, m, cin * m, &gre[mode..], cout * m, m, dr, cout, 1, T::one());
                        strided_mm(cin, b, cout, x2i, m, cin * m, &gim[mode..], cout * m, m, dr, cout, 1, T::one());
                        strided_mm(cin, b, cout, x2r, m, cin * m, &gim[mode..], cout * m, m, di, cout, 1, T::one());
                        strided_mm(cin, b, cout, x2i, m, cin * m, &ngre[mode..], cout * m, m, di, cout, 1, T::one());
                    }
                }
                let dx = ctx.needs[0].then(|| plan.forward_adjoint(&dx2re, &dx2im, b * cin));
                vec![dx, ctx.needs[1].then_some(dre), ctx.needs[2].then_some(dim)]
            }),
        ))
    }
}

/// `C (m x n) += alpha A (m x k) B (k x n)` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn strided_mm<T: Real>(m: usize, k: usize, n: usize, a: &[T], rsa: usize, csa: usize, b: &[T], rsb: usize, csb: usize, c: &mut [T], rsc: usize, csc: usize, alpha: T) {
    T::gemm_raw(m, k, n, alpha, a, rsa as isize, csa as isize, b, rsb as isize, csb as isize, T::one(), c, rsc as isize, csc as isize);
}

/// Truncated DFT matrices for one `(H, W, mz, mx)` geometry.
struct DftPlan<T> {
    h: usize,
    w: usize,
    mx: usize,
    /// `2mz` kept rows.
    r: usize,
    /// `W x mx` forward cos / sin.
    cw: Vec<T>,
    sw: Vec<T>,
    /// `W x mx` inverse cos / sin, scaled by column weight and `1/(HW)`.
    cwi: Vec<T>,
    swi: Vec<T>,
    /// `2mz x H` cos / sin.
    ch: Vec<T>,
    sh: Vec<T>,
}

impl<T: Real> DftPlan<T> {
    fn new(h: usize, w: usize, mz: usize, mx: usize) -> Self {
        let rows = kept_rows(h, mz);
        let r = rows.len();
        let mut cw = vec![T::zero(); w * mx];
        let mut sw = vec![T::zero(); w * mx];
        let mut cwi = vec![T::zero(); w * mx];
        let mut swi = vec![T::zero(); w * mx];
        let norm = 1.0 / (h * w) as f64;
        for x in 0..w {
            for kx in 0..mx {
                let th = TAU * ((kx * x) % w) as f64 / w as f64;
                let wt = column_weight(kx, w) * norm;
                cw[x * mx + kx] = T::c(th.cos());
                sw[x * mx + kx] = T::c(th.sin());
                cwi[x * mx + kx] = T::c(wt * th.cos());
                swi[x * mx + kx] = T::c(wt * th.sin());
            }
        }
        let mut ch = vec![T::zero(); r * h];
        let mut sh = vec![T::zero(); r * h];
        for (i, &kz) in rows.iter().enumerate() {
            for y in 0..h {
                let th = TAU * ((kz * y) % h) as f64 / h as f64;
                ch[i * h + y] = T::c(th.cos());
                sh[i * h + y] = T::c(th.sin());
            }
        }
        Self { h, w, mx, r, cw, sw, cwi, swi, ch, sh }
    }

    fn modes(&self) -> usize {
        self.r * self.mx
    }

    /// `planes x H x W` real to kept spectrum `planes x (2mz * mx)` (re, im).
    fn forward(&self, x: &[T], planes: usize) -> (Vec<T>, Vec<T>) {
        let (h, w, mx, r) = (self.h, self.w, self.mx, self.r);
        let rows = planes * h;
        let mut a = vec![T::zero(); rows * mx];
        let mut bm = vec![T::zero(); rows * mx];
        gemm(false, false, rows, w, mx, T::one(), x, &self.cw, T::zero(), &mut a);
        gemm(false, false, rows, w, mx, -T::one(), x, &self.sw, T::zero(), &mut bm);
        let mut xre = vec![T::zero(); planes * r * mx];
        let mut xim = vec![T::zero(); planes * r * mx];
        for p in 0..planes {
            let (ap, bp) = (&a[p * h * mx..(p + 1) * h * mx], &bm[p * h * mx..(p + 1) * h * mx]);
            let (re, im) = (&mut xre[p * r * mx..(p + 1) * r * mx], &mut xim[p * r * mx..(p + 1) * r * mx]);
            // (Ch - i Sh)(A + i B)
            gemm(false, false, r, h, mx, T::one(), &self.ch, ap, T::zero(), re);
            gemm(false, false, r, h, mx, T::one(), &self.sh, bp, T::one(), re);
            gemm(false, false, r, h, mx, T::one(), &self.ch, bp, T::zero(), im);
            gemm(false, false, r, h, mx, -T::one(), &self.sh, ap, T::one(), im);
        }
        (xre, xim)
    }

    #[allow(clippy::too_many_arguments)]
    fn mix(&self, xre: &[T], xim: &[T], rre: &[T], rim: &[T], b: usize, cin: usize, cout: usize) -> (Vec<T>, Vec<T>) {
        let m = self.modes();
        let mut yre = vec![T::zero(); b * cout * m];
        let mut yim = vec![T::zero(); b * cout * m];
        for mode in 0..m {
            let wo = mode * cin * cout;
            let (wre, wim) = (&rre[wo..wo + cin * cout], &rim[wo..wo + cin * cout]);
            let (xr, xi) = (&xre[mode..], &xim[mode..]);
            strided_mm(b, cin, cout, xr, cin * m, m, wre, cout, 1, &mut yre[mode..], cout * m, m, T::one());
            strided_mm(b, cin, cout, xi, cin * m, m, wim, cout, 1, &mut yre[mode..], cout * m, m, -T::one());
            strided_mm(b, cin, cout, xr, cin * m, m, wim, cout, 1, &mut yim[mode..], cout * m, m, T::one());
            strided_mm(b, cin, cout, xi, cin * m, m, wre, cout, 1, &mut yim[mode..], cout * m, m, T::one());
        }
        (yre, yim)
    }

    /// Kept spectrum `planes x (2mz * mx)` to `planes x H x W`.
    fn inverse(&self, yre: &[T], yim: &[T], planes: usize) -> Vec<T> {
        let (h, w, mx, r) = (self.h, self.w, self.mx, self.r);
        let mut are = vec![T::zero(); planes * h * mx];
        let mut aim = vec![T::zero(); planes * h * mx];
        for p in 0..planes {
            let (yr, yi) = (&yre[p * r * mx..(p + 1) * r * mx], &yim[p * r * mx..(p + 1) * r * mx]);
            let (ar, ai) = (&mut are[p * h * mx..(p + 1) * h * mx], &mut aim[p * h * mx..(p + 1) * h * mx]);
            // (Ch^T + i Sh^T)(Yr + i Yi)
            gemm(true, false, h, r, mx, T::one(), &self.ch, yr, T::zero(), ar);
            gemm(true, false, h, r, mx, -T::one(), &self.sh, yi, T::one(), ar);
            gemm(true, false, h, r, mx, T::one(), &self.ch, yi, T::zero(), ai);
            gemm(true, false, h, r, mx, T::one(), &self.sh, yr, T::one(), ai);
        }
        let rows = planes * h;
        let mut out = vec![T::zero(); rows * w];
        gemm(false, true, rows, mx, w, T::one(), &are, &self.cwi, T::zero(), &mut out);
        gemm(false, true, rows, mx, w, -T::one(), &aim, &self.swi, T::one(), &mut out);
        out
    }

    fn inverse_adjoint(&self, g: &[T], planes: usize) -> (Vec<T>, Vec<T>) {
        let (h, w, mx, r) = (self.h, self.w, self.mx, self.r);
        let rows = planes * h;
        let mut dre = vec![T::zero(); rows * mx];
        let mut dim = vec![T::zero(); rows * mx];
        gemm(false, false, rows, w, mx, T::one(), g, &self.cwi, T::zero(), &mut dre);
        gemm(false, false, rows, w, mx, -T::one(), g, &self.swi, T::zero(), &mut dim);
        let mut yre = vec![T::zero(); planes * r * mx];
        let mut yim = vec![T::zero(); planes * r * mx];
        for p in 0..planes {
            let (ar, ai) = (&dre[p * h * mx..(p + 1) * h * mx], &dim[p * h * mx..(p + 1) * h * mx]);
            let (yr, yi) = (&mut yre[p * r * mx..(p + 1) * r * mx], &mut yim[p * r * mx..(p + 1) * r * mx]);
            // (Ch - i Sh)(Ar + i Ai)
            gemm(false, false, r, h, mx, T::one(), &self.ch, ar, T::zero(), yr);
            gemm(false, false, r, h, mx, T::one(), &self.sh, ai, T::one(), yr);
            gemm(false, false, r, h, mx, T::one(), &self.ch, ai, T::zero(), yi);
            gemm(false, false, r, h, mx, -T::one(), &self.sh, ar, T::one(), yi);
        }
        (yre, yim)
    }

    fn forward_adjoint(&self, dre: &[T], dim: &[T], planes: usize) -> Vec<T> {
        let (h, w, mx, r) = (self.h, self.w, self.mx, self.r);
        let mut are = vec![T::zero(); planes * h * mx];
        let mut aim = vec![T::zero(); planes * h * mx];
        for p in 0..planes {
            let (xr, xi) = (&dre[p * r * mx..(p + 1) * r * mx], &dim[p * r * mx..(p + 1) * r * mx]);
            let (ar, ai) = (&mut are[p * h * mx..(p + 1) * h * mx], &mut aim[p * h * mx..(p + 1) * h * mx]);
            // (Ch^T + i Sh^T)(Xr + i Xi)
            gemm(true, false, h, r, mx, T::one(), &self.ch, xr, T::zero(), ar);
            gemm(true, false, h, r, mx, -T::one(), &self.sh, xi, T::one(), ar);
            gemm(true, false, h, r, mx, T::one(), &self.ch, xi, T::zero(), ai);
            gemm(true, false, h, r, mx, T::one(), &self.sh, xr, T::one(), ai);
        }
        let rows = planes * h;
        let mut out = vec![T::zero(); rows * w];
        // Re((Ar + i Ai)(Cw^T + i Sw^T))
        gemm(false, true, rows, mx, w, T::one(), &are, &self.cw, T::zero(), &mut out);
        gemm(false, true, rows, mx, w, -T::one(), &aim, &self.sw, T::one(), &mut out);
        out
    }
}
