//! Derivative engine for the fixed feed-forward tanh architecture.
//!
//! Forward pass: every neuron carries a 5-channel jet
//! `(value, ∂_t, ∂_ξ, ∂²_t, ∂²_ξ)` propagated exactly through each layer
//! (linear maps act channel-wise, tanh via the chain rule up to second
//! order). Reverse pass: adjoints of all five channels flow back together,
//! so one sweep accumulates the θ-gradient of any seeded combination of the
//! five output scalars. The mixed derivative ∂_t∂_ξ is never needed and not
//! carried.
//!
//! Losses only ever activate a channel prefix: plain data terms run 1
//! channel, the initial-velocity condition 2, the PDE residual all 5.

/// Channel count and order: value, d_t, d_xi, d_tt, d_xixi.
pub(crate) const CH: usize = 5;

/// Parameter layout for a layer-size vector; offsets into the flat θ.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub sizes: Vec<usize>,
    pub weight_off: Vec<usize>,
    pub bias_off: Vec<usize>,
    pub n_params: usize,
    pub max_width: usize,
}

impl Layout {
    pub fn new(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need an input and an output layer");
        assert!(sizes.iter().all(|&s| s > 0));
        let mut weight_off = Vec::with_capacity(sizes.len() - 1);
        let mut bias_off = Vec::with_capacity(sizes.len() - 1);
        let mut off = 0;
        for l in 1..sizes.len() {
            weight_off.push(off);
            off += sizes[l] * sizes[l - 1];
            bias_off.push(off);
            off += sizes[l];
        }
        Layout {
            sizes: sizes.to_vec(),
            weight_off,
            bias_off,
            n_params: off,
            max_width: *sizes.iter().max().unwrap(),
        }
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }
}

/// Scratch buffers reused across evaluations; no allocation in the hot loop.
pub(crate) struct Workspace {
    /// Post-activation jets per node layer, channel-major `[c * width + j]`.
    post: Vec<Vec<f64>>,
    /// Pre-activation jets per weight layer (1-based, index 0 unused).
    pre: Vec<Vec<f64>>,
    adj_a: Vec<f64>,
    adj_b: Vec<f64>,
}

impl Workspace {
    pub fn new(layout: &Layout) -> Self {
        let post = layout.sizes.iter().map(|&w| vec![0.0; CH * w]).collect();
        let pre = layout.sizes.iter().map(|&w| vec![0.0; CH * w]).collect();
        Workspace {
            post,
            pre,
            adj_a: vec![0.0; CH * layout.max_width],
            adj_b: vec![0.0; CH * layout.max_width],
        }
    }
}

/// Jet of the scalar network output.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct OutputJet {
    pub value: f64,
    pub d_t: f64,
    pub d_xi: f64,
    pub d_tt: f64,
    pub d_xixi: f64,
}

/// Forward pass carrying `n_ch` jet channels (a prefix of the five).
pub(crate) fn forward(
    theta: &[f64],
    layout: &Layout,
    ws: &mut Workspace,
    t: f64,
    xi: f64,
    n_ch: usize,
) -> OutputJet {
    debug_assert!(n_ch >= 1 && n_ch <= CH);
    debug_assert_eq!(theta.len(), layout.n_params);
    let input = &mut ws.post[0];
    input.iter_mut().for_each(|v| *v = 0.0);
    input[0] = t;
    input[1] = xi;
    if n_ch > 1 {
        input[2] = 1.0; // ∂t/∂t
    }
    if n_ch > 2 {
        input[2 * 2 + 1] = 1.0; // ∂ξ/∂ξ
    }

    let n_layers = layout.n_layers();
    for l in 1..=n_layers {
        let n_in = layout.sizes[l - 1];
        let n_out = layout.sizes[l];
        let w = &theta[layout.weight_off[l - 1]..layout.weight_off[l - 1] + n_out * n_in];
        let b = &theta[layout.bias_off[l - 1]..layout.bias_off[l - 1] + n_out];
        let (head, tail) = ws.post.split_at_mut(l);
        let x = &head[l - 1];
        let z = &mut ws.pre[l];
        // sequential accumulation, bit-compatible with the lane engine
        for (i, row) in w.chunks_exact(n_in).enumerate() {
            for c in 0..n_ch {
                let xc = &x[c * n_in..c * n_in + n_in];
                let mut acc = 0.0;
                for (wj, xj) in row.iter().zip(xc) {
                    acc = wj.mul_add(*xj, acc);
                }
                z[c * n_out + i] = acc;
            }
            z[i] += b[i];
        }
        let y = &mut tail[0];
        if l < n_layers {
            for j in 0..n_out {
                let tv = tanh_fast(z[j]);
                let s = 1.0 - tv * tv;
                let sp = -2.0 * tv * s;
                y[j] = tv;
                if n_ch > 1 {
                    let zt = z[n_out + j];
                    y[n_out + j] = s * zt;
                    if n_ch > 3 {
                        y[3 * n_out + j] = s * z[3 * n_out + j] + sp * zt * zt;
                    }
                }
                if n_ch > 2 {
                    let zx = z[2 * n_out + j];
                    y[2 * n_out + j] = s * zx;
                    if n_ch > 4 {
                        y[4 * n_out + j] = s * z[4 * n_out + j] + sp * zx * zx;
                    }
                }
            }
        } else {
            y[..n_ch * n_out].copy_from_slice(&z[..n_ch * n_out]);
        }
    }
    let out_w = layout.sizes[n_layers];
    let last = &ws.post[n_layers];
    let mut jet = OutputJet::default();
    jet.value = last[0];
    if n_ch > 1 {
        jet.d_t = last[out_w];
    }
    if n_ch > 2 {
        jet.d_xi = last[2 * out_w];
    }
    if n_ch > 3 {
        jet.d_tt = last[3 * out_w];
    }
    if n_ch > 4 {
        jet.d_xixi = last[4 * out_w];
    }
    jet
}

/// Reverse pass over the jet computation recorded by the latest [`forward`]
/// on this workspace. Accumulates `∇_θ Σ_c seed[c] · out_c` into `grad`.
pub(crate) fn backward(
    theta: &[f64],
    layout: &Layout,
    ws: &mut Workspace,
    seed: &[f64; CH],
    n_ch: usize,
    grad: &mut [f64],
) {
    debug_assert_eq!(grad.len(), layout.n_params);
    let n_layers = layout.n_layers();
    let out_w = layout.sizes[n_layers];
    let zbar = &mut ws.adj_a;
    zbar.iter_mut().for_each(|v| *v = 0.0);
    for c in 0..n_ch {
        // single scalar output per channel sits at neuron 0
        zbar[c * out_w] = seed[c];
    }

    for l in (1..=n_layers).rev() {
        let n_in = layout.sizes[l - 1];
        let n_out = layout.sizes[l];
        let w = &theta[layout.weight_off[l - 1]..layout.weight_off[l - 1] + n_out * n_in];
        let x = &ws.post[l - 1];
        let (gw, gb) = {
            let (a, b) = grad.split_at_mut(layout.bias_off[l - 1]);
            (
                &mut a[layout.weight_off[l - 1]..],
                &mut b[..n_out],
            )
        };
        let xbar = &mut ws.adj_b;
        xbar[..CH * n_in].iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in w.chunks_exact(n_in).enumerate() {
            gb[i] += ws.adj_a[i];
            for c in 0..n_ch {
                let s = ws.adj_a[c * n_out + i];
                if s != 0.0 {
                    axpy(&mut gw[i * n_in..(i + 1) * n_in], s, &x[c * n_in..c * n_in + n_in]);
                    axpy(&mut xbar[c * n_in..c * n_in + n_in], s, row);
                }
            }
        }
        if l > 1 {
            // through tanh of layer l−1: post-activation adjoint → pre-activation
            let width = n_in;
            let tpost = &ws.post[l - 1];
            let zpre = &ws.pre[l - 1];
            let zb = &mut ws.adj_a;
            for j in 0..width {
                let tv = tpost[j];
                let s = 1.0 - tv * tv;
                let sp = -2.0 * tv * s;
                let yb_v = xbar[j];
                let mut acc_v = yb_v * s;
                if n_ch > 1 {
                    let zt = zpre[width + j];
                    let yb_t = xbar[width + j];
                    acc_v += yb_t * sp * zt;
                    let mut acc_t = yb_t * s;
                    if n_ch > 3 {
                        let q = -2.0 * s * s - 2.0 * tv * sp;
                        let ztt = zpre[3 * width + j];
                        let yb_tt = xbar[3 * width + j];
                        acc_v += yb_tt * (sp * ztt + q * zt * zt);
                        acc_t += yb_tt * 2.0 * sp * zt;
                        zb[3 * width + j] = yb_tt * s;
                    }
                    zb[width + j] = acc_t;
                }
                if n_ch > 2 {
                    let zx = zpre[2 * width + j];
                    let yb_x = xbar[2 * width + j];
                    acc_v += yb_x * sp * zx;
                    let mut acc_x = yb_x * s;
                    if n_ch > 4 {
                        let q = -2.0 * s * s - 2.0 * tv * sp;
                        let zxx = zpre[4 * width + j];
                        let yb_xx = xbar[4 * width + j];
                        acc_v += yb_xx * (sp * zxx + q * zx * zx);
                        acc_x += yb_xx * 2.0 * sp * zx;
                        zb[4 * width + j] = yb_xx * s;
                    }
                    zb[2 * width + j] = acc_x;
                }
                zb[j] = acc_v;
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] = xa[k].mul_add(xb[k], acc[k]);
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail = x.mul_add(*y, tail);
    }
    (((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))) + tail
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = a.mul_add(*xi, *yi);
    }
}

// ---------------------------------------------------------------------------
// Lane engine: the same computation over blocks of 8 points in
// structure-of-arrays form, so every hot loop is a contiguous FMA stream the
// vector units can chew through. Layer buffers are laid out
// `[neuron][channel][lane]`; per-point accumulation order matches the scalar
// engine, so values agree bit for bit.
// ---------------------------------------------------------------------------

pub(crate) const LANES: usize = 8;
const BLK: usize = CH * LANES;

pub(crate) struct BlockWorkspace {
    post: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    adj: Vec<f64>,
    adj2: Vec<f64>,
}

impl BlockWorkspace {
    pub fn new(layout: &Layout) -> Self {
        let post = layout.sizes.iter().map(|&w| vec![0.0; BLK * w]).collect();
        let pre = layout.sizes.iter().map(|&w| vec![0.0; BLK * w]).collect();
        BlockWorkspace {
            post,
            pre,
            adj: vec![0.0; BLK * layout.max_width],
            adj2: vec![0.0; BLK * layout.max_width],
        }
    }
}

/// Output jets of the 8 lanes, `[channel][lane]`.
pub(crate) type BlockJets = [[f64; LANES]; CH];

pub(crate) fn forward_block(
    theta: &[f64],
    layout: &Layout,
    ws: &mut BlockWorkspace,
    t: &[f64; LANES],
    xi: &[f64; LANES],
    n_ch: usize,
) -> BlockJets {
    // monomorphized kernels give the optimizer constant trip counts
    match n_ch {
        1 => forward_block_impl::<1>(theta, layout, ws, t, xi),
        2 => forward_block_impl::<2>(theta, layout, ws, t, xi),
        5 => forward_block_impl::<5>(theta, layout, ws, t, xi),
        _ => unreachable!("channel counts are 1, 2 or 5"),
    }
}

fn forward_block_impl<const NCH: usize>(
    theta: &[f64],
    layout: &Layout,
    ws: &mut BlockWorkspace,
    t: &[f64; LANES],
    xi: &[f64; LANES],
) -> BlockJets {
    let n_ch = NCH;
    let nb = NCH * LANES;
    let input = &mut ws.post[0];
    input.iter_mut().for_each(|v| *v = 0.0);
    for l in 0..LANES {
        input[l] = t[l]; // neuron 0 value channel
        input[BLK + l] = xi[l]; // neuron 1 value channel
        if n_ch > 1 {
            input[LANES + l] = 1.0; // ∂t/∂t on neuron 0
        }
        if n_ch > 2 {
            input[BLK + 2 * LANES + l] = 1.0; // ∂ξ/∂ξ on neuron 1
        }
    }

    let n_layers = layout.n_layers();
    for layer in 1..=n_layers {
        let n_in = layout.sizes[layer - 1];
        let n_out = layout.sizes[layer];
        let w = &theta[layout.weight_off[layer - 1]..layout.weight_off[layer - 1] + n_out * n_in];
        let b = &theta[layout.bias_off[layer - 1]..layout.bias_off[layer - 1] + n_out];
        let (head, tail) = ws.post.split_at_mut(layer);
        let x = &head[layer - 1];
        let z = &mut ws.pre[layer];
        // local accumulators keep the inner loops provably alias-free so the
        // compiler vectorizes them; write-back happens once per neuron
        for (i, row) in w.chunks_exact(n_in).enumerate() {
            let mut acc = [0.0f64; BLK];
            let acc_n = &mut acc[..nb];
            for (j, &wij) in row.iter().enumerate() {
                let xj = &x[j * BLK..j * BLK + nb];
                for (a, &xv) in acc_n.iter_mut().zip(xj) {
                    *a = wij.mul_add(xv, *a);
                }
            }
            let bi = b[i];
            for v in acc_n[..LANES].iter_mut() {
                *v += bi;
            }
            z[i * BLK..i * BLK + nb].copy_from_slice(acc_n);
        }
        let y = &mut tail[0];
        if layer < n_layers {
            for j in 0..n_out {
                let base = j * BLK;
                let mut zl = [0.0f64; BLK];
                zl[..nb].copy_from_slice(&z[base..base + nb]);
                let mut yl = [0.0f64; BLK];
                let mut tv = [0.0f64; LANES];
                let mut s = [0.0f64; LANES];
                let mut sp = [0.0f64; LANES];
                for l in 0..LANES {
                    tv[l] = tanh_clamped(zl[l]);
                    s[l] = 1.0 - tv[l] * tv[l];
                    sp[l] = -2.0 * tv[l] * s[l];
                    yl[l] = tv[l];
                }
                if n_ch > 1 {
                    for l in 0..LANES {
                        yl[LANES + l] = s[l] * zl[LANES + l];
                    }
                    if n_ch > 3 {
                        for l in 0..LANES {
                            let zt = zl[LANES + l];
                            yl[3 * LANES + l] = s[l] * zl[3 * LANES + l] + sp[l] * zt * zt;
                        }
                    }
                }
                if n_ch > 2 {
                    for l in 0..LANES {
                        yl[2 * LANES + l] = s[l] * zl[2 * LANES + l];
                    }
                    if n_ch > 4 {
                        for l in 0..LANES {
                            let zx = zl[2 * LANES + l];
                            yl[4 * LANES + l] = s[l] * zl[4 * LANES + l] + sp[l] * zx * zx;
                        }
                    }
                }
                y[base..base + nb].copy_from_slice(&yl[..nb]);
            }
        } else {
            for i in 0..n_out {
                y[i * BLK..i * BLK + nb].copy_from_slice(&z[i * BLK..i * BLK + nb]);
            }
        }
    }
    let last = &ws.post[n_layers];
    let mut out = [[0.0; LANES]; CH];
    for (c, lane_vals) in out.iter_mut().enumerate().take(n_ch) {
        lane_vals.copy_from_slice(&last[c * LANES..(c + 1) * LANES]);
    }
    out
}

/// Reverse sweep over the block recorded by the latest [`forward_block`];
/// accumulates `Σ_lanes Σ_c seed[c][lane] · out_c(lane)` gradients into
/// `grad`. Lanes with zero seeds contribute exactly zero.
pub(crate) fn backward_block(
    theta: &[f64],
    layout: &Layout,
    ws: &mut BlockWorkspace,
    seeds: &BlockJets,
    n_ch: usize,
    grad: &mut [f64],
) {
    match n_ch {
        1 => backward_block_impl::<1>(theta, layout, ws, seeds, grad),
        2 => backward_block_impl::<2>(theta, layout, ws, seeds, grad),
        5 => backward_block_impl::<5>(theta, layout, ws, seeds, grad),
        _ => unreachable!("channel counts are 1, 2 or 5"),
    }
}

fn backward_block_impl<const NCH: usize>(
    theta: &[f64],
    layout: &Layout,
    ws: &mut BlockWorkspace,
    seeds: &BlockJets,
    grad: &mut [f64],
) {
    let n_ch = NCH;
    let nb = NCH * LANES;
    let n_layers = layout.n_layers();
    let out_w = layout.sizes[n_layers];
    ws.adj[..out_w * BLK].iter_mut().for_each(|v| *v = 0.0);
    for c in 0..n_ch {
        ws.adj[c * LANES..(c + 1) * LANES].copy_from_slice(&seeds[c]);
    }

    for layer in (1..=n_layers).rev() {
        let n_in = layout.sizes[layer - 1];
        let n_out = layout.sizes[layer];
        let w = &theta[layout.weight_off[layer - 1]..layout.weight_off[layer - 1] + n_out * n_in];
        let x = &ws.post[layer - 1];
        let (gw, gb) = {
            let (a, b) = grad.split_at_mut(layout.bias_off[layer - 1]);
            (&mut a[layout.weight_off[layer - 1]..], &mut b[..n_out])
        };
        // pass 1: bias and weight gradients, neuron-major
        for i in 0..n_out {
            let mut zloc = [0.0f64; BLK];
            zloc[..nb].copy_from_slice(&ws.adj[i * BLK..i * BLK + nb]);
            gb[i] += sum_lanes(&zloc[..LANES]);
            let grow = &mut gw[i * n_in..(i + 1) * n_in];
            for (j, gj) in grow.iter_mut().enumerate() {
                let xj = &x[j * BLK..j * BLK + nb];
                *gj += dot(&zloc[..nb], xj);
            }
        }
        // pass 2: input adjoints, input-major with a local accumulator
        let xbar = &mut ws.adj2;
        for j in 0..n_in {
            let mut acc = [0.0f64; BLK];
            let acc_n = &mut acc[..nb];
            for i in 0..n_out {
                let wij = w[i * n_in + j];
                let zblk = &ws.adj[i * BLK..i * BLK + nb];
                for (a, &zv) in acc_n.iter_mut().zip(zblk) {
                    *a = wij.mul_add(zv, *a);
                }
            }
            xbar[j * BLK..j * BLK + nb].copy_from_slice(acc_n);
        }
        if layer > 1 {
            let width = n_in;
            let tpost = &ws.post[layer - 1];
            let zpre = &ws.pre[layer - 1];
            let zb = &mut ws.adj;
            for j in 0..width {
                let base = j * BLK;
                let mut yb = [0.0f64; BLK];
                yb[..nb].copy_from_slice(&xbar[base..base + nb]);
                let mut zl = [0.0f64; BLK];
                zl[..nb].copy_from_slice(&zpre[base..base + nb]);
                let mut tvl = [0.0f64; LANES];
                tvl.copy_from_slice(&tpost[base..base + LANES]);
                let mut out = [0.0f64; BLK];
                for l in 0..LANES {
                    let tv = tvl[l];
                    let s = 1.0 - tv * tv;
                    let sp = -2.0 * tv * s;
                    let mut acc_v = yb[l] * s;
                    if n_ch > 1 {
                        let zt = zl[LANES + l];
                        let yb_t = yb[LANES + l];
                        acc_v += yb_t * sp * zt;
                        let mut acc_t = yb_t * s;
                        if n_ch > 3 {
                            let q = -2.0 * s * s - 2.0 * tv * sp;
                            let yb_tt = yb[3 * LANES + l];
                            acc_v += yb_tt * (sp * zl[3 * LANES + l] + q * zt * zt);
                            acc_t += yb_tt * 2.0 * sp * zt;
                            out[3 * LANES + l] = yb_tt * s;
                        }
                        out[LANES + l] = acc_t;
                    }
                    if n_ch > 2 {
                        let zx = zl[2 * LANES + l];
                        let yb_x = yb[2 * LANES + l];
                        acc_v += yb_x * sp * zx;
                        let mut acc_x = yb_x * s;
                        if n_ch > 4 {
                            let q = -2.0 * s * s - 2.0 * tv * sp;
                            let yb_xx = yb[4 * LANES + l];
                            acc_v += yb_xx * (sp * zl[4 * LANES + l] + q * zx * zx);
                            acc_x += yb_xx * 2.0 * sp * zx;
                            out[4 * LANES + l] = yb_xx * s;
                        }
                        out[2 * LANES + l] = acc_x;
                    }
                    out[l] = acc_v;
                }
                zb[base..base + nb].copy_from_slice(&out[..nb]);
            }
        }
    }
}

#[inline]
fn sum_lanes(x: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), LANES);
    ((x[0] + x[1]) + (x[2] + x[3])) + ((x[4] + x[5]) + (x[6] + x[7]))
}

/// Branchless clamped variant of [`tanh_fast`]; identical results (the clamp
/// saturates to 1.0 through the exp identity).
#[inline]
fn tanh_clamped(x: f64) -> f64 {
    let ax = x.abs().min(20.0);
    let e = exp_neg(-2.0 * ax);
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

/// tanh via `1 − 2/(e^{2|x|} + 1)` with a Cody–Waite range-reduced exp and a
/// degree-11 Taylor kernel. Within a few ulp of libm tanh and considerably
/// faster, which matters: the training loop evaluates it millions of times
/// per epoch.
#[inline]
pub(crate) fn tanh_fast(x: f64) -> f64 {
    let ax = x.abs();
    if ax >= 20.0 {
        return 1.0_f64.copysign(x);
    }
    let e = exp_neg(-2.0 * ax); // argument in (−40, 0]
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

/// exp for non-positive arguments above −45; not a general-purpose exp.
#[inline]
fn exp_neg(x: f64) -> f64 {
    const LOG2_E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let k = (x * LOG2_E).round();
    let r = (x - k * LN2_HI) - k * LN2_LO;
    // Taylor kernel on |r| ≤ ln2/2
    let mut p: f64 = 1.0 / 39_916_800.0; // 1/11!
    p = p.mul_add(r, 1.0 / 3_628_800.0);
    p = p.mul_add(r, 1.0 / 362_880.0);
    p = p.mul_add(r, 1.0 / 40_320.0);
    p = p.mul_add(r, 1.0 / 5_040.0);
    p = p.mul_add(r, 1.0 / 720.0);
    p = p.mul_add(r, 1.0 / 120.0);
    p = p.mul_add(r, 1.0 / 24.0);
    p = p.mul_add(r, 1.0 / 6.0);
    p = p.mul_add(r, 0.5);
    p = p.mul_add(r, 1.0);
    p = p.mul_add(r, 1.0);
    let bits = ((k as i64 + 1023) as u64) << 52;
    p * f64::from_bits(bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_fast_matches_std() {
        let mut x = -30.0;
        while x <= 30.0 {
            let got = tanh_fast(x);
            let want = x.tanh();
            let err = (got - want).abs();
            assert!(
                err <= 5e-13 * want.abs().max(1e-3),
                "x={x}: got {got}, want {want}"
            );
            x += 0.0137;
        }
        assert_eq!(tanh_fast(0.0), 0.0);
        assert_eq!(tanh_fast(-0.0).to_bits(), (-0.0f64).to_bits());
        assert_eq!(tanh_fast(25.0), 1.0);
        assert_eq!(tanh_fast(-25.0), -1.0);
        assert_eq!(tanh_fast(f64::INFINITY), 1.0);
        assert!(tanh_fast(f64::NAN).is_nan());
    }

    #[test]
    fn layout_counts_default_architecture() {
        let l = Layout::new(&[2, 20, 20, 20, 20, 20, 1]);
        assert_eq!(l.n_params, 1761);
        assert_eq!(l.n_layers(), 6);
    }

    #[test]
    fn tanh_clamped_equals_tanh_fast() {
        let mut x = -25.0;
        while x <= 25.0 {
            assert_eq!(tanh_clamped(x).to_bits(), tanh_fast(x).to_bits(), "x = {x}");
            x += 0.00517;
        }
        for x in [19.999999, 20.0, 20.000001, 0.0, -0.0] {
            assert_eq!(tanh_clamped(x).to_bits(), tanh_fast(x).to_bits());
        }
    }

    #[test]
    fn block_forward_matches_scalar_bitwise() {
        use rand::{Rng, SeedableRng};
        let layout = Layout::new(&[2, 20, 20, 20, 20, 20, 1]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1234);
        let theta: Vec<f64> = (0..layout.n_params).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let mut ws = Workspace::new(&layout);
        let mut bws = BlockWorkspace::new(&layout);
        for n_ch in [1usize, 2, 5] {
            let mut t = [0.0; LANES];
            let mut x = [0.0; LANES];
            for l in 0..LANES {
                t[l] = rng.gen_range(0.0..2.0);
                x[l] = rng.gen_range(-1.0..1.0);
            }
            let jets = forward_block(&theta, &layout, &mut bws, &t, &x, n_ch);
            for l in 0..LANES {
                let s = forward(&theta, &layout, &mut ws, t[l], x[l], n_ch);
                assert_eq!(jets[0][l].to_bits(), s.value.to_bits(), "value lane {l}");
                if n_ch > 1 {
                    assert_eq!(jets[1][l].to_bits(), s.d_t.to_bits(), "d_t lane {l}");
                }
                if n_ch > 4 {
                    assert_eq!(jets[3][l].to_bits(), s.d_tt.to_bits(), "d_tt lane {l}");
                    assert_eq!(jets[4][l].to_bits(), s.d_xixi.to_bits(), "d_xixi lane {l}");
                }
            }
        }
    }

    #[test]
    fn block_backward_matches_scalar_gradients() {
        use rand::{Rng, SeedableRng};
        let layout = Layout::new(&[2, 9, 7, 1]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(55);
        let theta: Vec<f64> = (0..layout.n_params).map(|_| rng.gen_range(-0.7..0.7)).collect();
        let mut ws = Workspace::new(&layout);
        let mut bws = BlockWorkspace::new(&layout);
        let mut t = [0.0; LANES];
        let mut x = [0.0; LANES];
        let mut seeds = [[0.0; LANES]; CH];
        for l in 0..LANES {
            t[l] = rng.gen_range(0.0..2.0);
            x[l] = rng.gen_range(-1.0..1.0);
            for c in 0..CH {
                seeds[c][l] = rng.gen_range(-1.0..1.0);
            }
        }
        let mut got = vec![0.0; layout.n_params];
        forward_block(&theta, &layout, &mut bws, &t, &x, CH);
        backward_block(&theta, &layout, &mut bws, &seeds, CH, &mut got);
        let mut want = vec![0.0; layout.n_params];
        for l in 0..LANES {
            forward(&theta, &layout, &mut ws, t[l], x[l], CH);
            let seed = [seeds[0][l], seeds[1][l], seeds[2][l], seeds[3][l], seeds[4][l]];
            backward(&theta, &layout, &mut ws, &seed, CH, &mut want);
        }
        for (g, w) in got.iter().zip(&want) {
            let err = (g - w).abs();
            assert!(err <= 1e-12 * w.abs().max(1e-9), "{g} vs {w}");
        }
    }

    #[test]
    fn forward_with_fewer_channels_matches_full() {
        use rand::{Rng, SeedableRng};
        let layout = Layout::new(&[2, 7, 5, 1]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let theta: Vec<f64> = (0..layout.n_params).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let mut ws = Workspace::new(&layout);
        let full = forward(&theta, &layout, &mut ws, 0.3, -0.4, CH);
        let v1 = forward(&theta, &layout, &mut ws, 0.3, -0.4, 1);
        let v2 = forward(&theta, &layout, &mut ws, 0.3, -0.4, 2);
        assert_eq!(v1.value, full.value);
        assert_eq!(v2.value, full.value);
        assert_eq!(v2.d_t, full.d_t);
        assert_eq!(v2.d_xi, 0.0);
    }
}
