//! Framework-free numeric reference of spherical spatial cross-attention:
//! patch-center directions, fixed sinusoidal spherical encoding, a small
//! projection MLP, pre-normalized multi-head cross-attention over the
//! spherical tokens, and a gated residual — all in f64, with a hand-derived
//! backward pass checked against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::sphere::{pixel_to_direction, SphericalDirection};

pub const LN_EPS: f64 = 1e-5;
pub const DEFAULT_FREQS: usize = 6;
pub const DEFAULT_GATE_INIT: f64 = 1e-2;
pub const SNAPSHOT_VERSION: u32 = 1;
const SNAPSHOT_MAGIC: &[u8; 4] = b"SSCA";

#[derive(Debug, Error)]
pub enum SscaError {
    #[error("dimension mismatch: {0}")]
    Dim(String),
    #[error("patch size {patch} does not divide image {what} {value}")]
    BadGrid { patch: u32, what: &'static str, value: u32 },
    #[error("parameter snapshot: {0}")]
    Snapshot(String),
}

/// Dense row-major matrix of finite f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl TokenMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn validate_finite(&self) -> Result<(), SscaError> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(SscaError::Dim("matrix contains non-finite values".into()));
        }
        Ok(())
    }
}

/// ERP patch grid; patch size must divide both image dimensions.
#[derive(Debug, Clone, Copy)]
pub struct PatchGridSpec {
    pub width: u32,
    pub height: u32,
    pub patch: u32,
}

impl PatchGridSpec {
    pub fn new(width: u32, height: u32, patch: u32) -> Result<Self, SscaError> {
        if patch == 0 || width % patch != 0 {
            return Err(SscaError::BadGrid { patch, what: "width", value: width });
        }
        if height % patch != 0 {
            return Err(SscaError::BadGrid { patch, what: "height", value: height });
        }
        Ok(Self { width, height, patch })
    }

    pub fn grid_w(&self) -> usize {
        (self.width / self.patch) as usize
    }

    pub fn grid_h(&self) -> usize {
        (self.height / self.patch) as usize
    }

    pub fn token_count(&self) -> usize {
        self.grid_w() * self.grid_h()
    }
}

/// Spherical direction of each patch center, row-major over the grid.
pub fn patch_centers(spec: &PatchGridSpec) -> Vec<SphericalDirection> {
    let p = spec.patch as f64;
    let mut out = Vec::with_capacity(spec.token_count());
    for r in 0..spec.grid_h() {
        for c in 0..spec.grid_w() {
            let u = (c as f64 + 0.5) * p;
            let v = (r as f64 + 0.5) * p;
            out.push(
                pixel_to_direction(u, v, spec.width, spec.height)
                    .expect("patch centers lie inside the raster"),
            );
        }
    }
    out
}

/// Fixed sinusoidal spherical encoding: concat over k = 0..F-1 of
/// [sin(2^k yaw), cos(2^k yaw), sin(2^k pitch), cos(2^k pitch)].
pub fn sinusoidal_encode(d: SphericalDirection, freqs: usize) -> Vec<f64> {
    assert!(freqs >= 1);
    let mut out = Vec::with_capacity(4 * freqs);
    for k in 0..freqs {
        let s = (1u64 << k) as f64;
        out.push((s * d.yaw()).sin());
        out.push((s * d.yaw()).cos());
        out.push((s * d.pitch()).sin());
        out.push((s * d.pitch()).cos());
    }
    out
}

/// Analytic Jacobian of the encoding: (d/dyaw, d/dpitch) per coordinate.
pub fn sinusoidal_encode_grad(d: SphericalDirection, freqs: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(4 * freqs);
    for k in 0..freqs {
        let s = (1u64 << k) as f64;
        out.push((s * (s * d.yaw()).cos(), 0.0));
        out.push((-s * (s * d.yaw()).sin(), 0.0));
        out.push((0.0, s * (s * d.pitch()).cos()));
        out.push((0.0, -s * (s * d.pitch()).sin()));
    }
    out
}

/// All learnable state of the adapter. Linear layers are row-major
/// (out x in); the four attention projections are full d x d matrices whose
/// row blocks form the heads.
#[derive(Debug, Clone, PartialEq)]
pub struct SscaParams {
    pub d: usize,
    pub heads: usize,
    pub freqs: usize,
    pub mlp_w1: Vec<f64>, // d x 4F
    pub mlp_b1: Vec<f64>, // d
    pub mlp_w2: Vec<f64>, // d x d
    pub mlp_b2: Vec<f64>, // d
    pub wq: Vec<f64>,     // d x d
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub wo: Vec<f64>,
    pub ln_q_gamma: Vec<f64>,
    pub ln_q_beta: Vec<f64>,
    pub ln_kv_gamma: Vec<f64>,
    pub ln_kv_beta: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl SscaParams {
    /// Seeded init: uniform +-1/sqrt(fan_in) affine weights, unit
    /// normalization scales, constant small gate.
    pub fn init(d: usize, heads: usize, freqs: usize, seed: u64) -> Result<Self, SscaError> {
        if d % heads != 0 {
            return Err(SscaError::Dim(format!("d = {d} not divisible by heads = {heads}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut affine = |rows: usize, cols: usize| -> Vec<f64> {
            let bound = 1.0 / (cols as f64).sqrt();
            (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        Ok(Self {
            d,
            heads,
            freqs,
            mlp_w1: affine(d, 4 * freqs),
            mlp_b1: vec![0.0; d],
            mlp_w2: affine(d, d),
            mlp_b2: vec![0.0; d],
            wq: affine(d, d),
            wk: affine(d, d),
            wv: affine(d, d),
            wo: affine(d, d),
            ln_q_gamma: vec![1.0; d],
            ln_q_beta: vec![0.0; d],
            ln_kv_gamma: vec![1.0; d],
            ln_kv_beta: vec![0.0; d],
            alpha: vec![DEFAULT_GATE_INIT; d],
        })
    }

    /// Named views of every parameter group, used by the gradient checker
    /// and the snapshot format (order is part of the format).
    pub fn groups_mut(&mut self) -> Vec<(&'static str, &mut Vec<f64>)> {
        vec![
            ("mlp_w1", &mut self.mlp_w1),
            ("mlp_b1", &mut self.mlp_b1),
            ("mlp_w2", &mut self.mlp_w2),
            ("mlp_b2", &mut self.mlp_b2),
            ("wq", &mut self.wq),
            ("wk", &mut self.wk),
            ("wv", &mut self.wv),
            ("wo", &mut self.wo),
            ("ln_q_gamma", &mut self.ln_q_gamma),
            ("ln_q_beta", &mut self.ln_q_beta),
            ("ln_kv_gamma", &mut self.ln_kv_gamma),
            ("ln_kv_beta", &mut self.ln_kv_beta),
            ("alpha", &mut self.alpha),
        ]
    }

    fn group_order(&self) -> Vec<(&'static str, usize)> {
        vec![
            ("mlp_w1", self.d * 4 * self.freqs),
            ("mlp_b1", self.d),
            ("mlp_w2", self.d * self.d),
            ("mlp_b2", self.d),
            ("wq", self.d * self.d),
            ("wk", self.d * self.d),
            ("wv", self.d * self.d),
            ("wo", self.d * self.d),
            ("ln_q_gamma", self.d),
            ("ln_q_beta", self.d),
            ("ln_kv_gamma", self.d),
            ("ln_kv_beta", self.d),
            ("alpha", self.d),
        ]
    }
}

fn matvec(w: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    assert_eq!(w.len(), rows * cols);
    assert_eq!(x.len(), cols);
    (0..rows).map(|r| w[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// y = W^T x for W stored row-major (rows x cols): result length cols.
fn matvec_t(w: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    assert_eq!(x.len(), rows);
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c] += w[r * cols + c] * x[r];
        }
    }
    out
}

fn outer_add(acc: &mut [f64], a: &[f64], b: &[f64]) {
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            acc[i * b.len() + j] += ai * bj;
        }
    }
}

struct LnCache {
    xhat: Vec<f64>,
    inv_std: f64,
}

fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64]) -> (Vec<f64>, LnCache) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + LN_EPS).sqrt();
    let xhat: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
    let y = xhat.iter().zip(gamma).zip(beta).map(|((h, g), b)| h * g + b).collect();
    (y, LnCache { xhat, inv_std })
}

/// dL/dx for layer norm given dL/dy; accumulates dgamma/dbeta.
fn layer_norm_backward(
    dy: &[f64],
    gamma: &[f64],
    cache: &LnCache,
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let n = dy.len() as f64;
    let dxhat: Vec<f64> = dy.iter().zip(gamma).map(|(d, g)| d * g).collect();
    for i in 0..dy.len() {
        dgamma[i] += dy[i] * cache.xhat[i];
        dbeta[i] += dy[i];
    }
    let mean_dxhat = dxhat.iter().sum::<f64>() / n;
    let mean_dxhat_xhat =
        dxhat.iter().zip(&cache.xhat).map(|(a, b)| a * b).sum::<f64>() / n;
    dxhat
        .iter()
        .zip(&cache.xhat)
        .map(|(dx, xh)| cache.inv_std * (dx - mean_dxhat - xh * mean_dxhat_xhat))
        .collect()
}

/// Everything the backward pass and the invariant suite need from one
/// forward evaluation.
pub struct ForwardCache {
    pub output: TokenMatrix,
    /// per head: N x N attention probabilities, rows are queries
    pub probs: Vec<TokenMatrix>,
    /// residual branch before the gate, N x d
    pub branch: TokenMatrix,
    enc: Vec<Vec<f64>>,       // N x 4F
    mlp_t: Vec<Vec<f64>>,     // tanh activations, N x d
    ln_q: Vec<(Vec<f64>, LnCache)>,
    ln_kv: Vec<(Vec<f64>, LnCache)>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    concat: Vec<Vec<f64>>,
}

fn check_dims(h0: &TokenMatrix, n_tokens: usize, params: &SscaParams) -> Result<(), SscaError> {
    if h0.rows != n_tokens {
        return Err(SscaError::Dim(format!(
            "token rows {} != grid patch count {n_tokens}",
            h0.rows
        )));
    }
    if h0.cols != params.d {
        return Err(SscaError::Dim(format!("token cols {} != hidden dim {}", h0.cols, params.d)));
    }
    h0.validate_finite()
}

/// Full forward pass over explicit patch directions, keeping intermediates.
pub fn forward_full(
    h0: &TokenMatrix,
    dirs: &[SphericalDirection],
    params: &SscaParams,
) -> Result<ForwardCache, SscaError> {
    check_dims(h0, dirs.len(), params)?;
    let (n, d, heads) = (h0.rows, params.d, params.heads);
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let f4 = 4 * params.freqs;

    // spherical tokens s_i = MLP(encoding)
    let mut enc = Vec::with_capacity(n);
    let mut mlp_t = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for dir in dirs {
        let e = sinusoidal_encode(*dir, params.freqs);
        let u = {
            let mut u = matvec(&params.mlp_w1, &e, d, f4);
            for (ui, b) in u.iter_mut().zip(&params.mlp_b1) {
                *ui += b;
            }
            u
        };
        let t: Vec<f64> = u.iter().map(|v| v.tanh()).collect();
        let mut si = matvec(&params.mlp_w2, &t, d, d);
        for (vi, b) in si.iter_mut().zip(&params.mlp_b2) {
            *vi += b;
        }
        enc.push(e);
        mlp_t.push(t);
        s.push(si);
    }

    // pre-norm branches and projections
    let ln_q: Vec<(Vec<f64>, LnCache)> =
        (0..n).map(|i| layer_norm(h0.row(i), &params.ln_q_gamma, &params.ln_q_beta)).collect();
    let ln_kv: Vec<(Vec<f64>, LnCache)> =
        (0..n).map(|i| layer_norm(&s[i], &params.ln_kv_gamma, &params.ln_kv_beta)).collect();
    let q: Vec<Vec<f64>> = ln_q.iter().map(|(x, _)| matvec(&params.wq, x, d, d)).collect();
    let k: Vec<Vec<f64>> = ln_kv.iter().map(|(x, _)| matvec(&params.wk, x, d, d)).collect();
    let v: Vec<Vec<f64>> = ln_kv.iter().map(|(x, _)| matvec(&params.wv, x, d, d)).collect();

    // attention per head, softmax over spherical tokens
    let mut probs = vec![TokenMatrix::zeros(n, n); heads];
    let mut concat = vec![vec![0.0; d]; n];
    for h in 0..heads {
        let lo = h * dh;
        let hi = lo + dh;
        for i in 0..n {
            let mut z: Vec<f64> = (0..n)
                .map(|j| {
                    q[i][lo..hi].iter().zip(&k[j][lo..hi]).map(|(a, b)| a * b).sum::<f64>() * scale
                })
                .collect();
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for zi in z.iter_mut() {
                *zi = (*zi - max).exp();
            }
            let sum: f64 = z.iter().sum();
            for (j, zi) in z.iter().enumerate() {
                probs[h].data[i * n + j] = zi / sum;
            }
            for j in 0..n {
                let p = probs[h].data[i * n + j];
                for (c, vv) in concat[i][lo..hi].iter_mut().zip(&v[j][lo..hi]) {
                    *c += p * vv;
                }
            }
        }
    }

    // output projection and gated residual
    let mut branch = TokenMatrix::zeros(n, d);
    let mut output = TokenMatrix::zeros(n, d);
    for i in 0..n {
        let a = matvec(&params.wo, &concat[i], d, d);
        for j in 0..d {
            branch.data[i * d + j] = a[j];
            output.data[i * d + j] = h0.data[i * d + j] + params.alpha[j] * a[j];
        }
    }
    Ok(ForwardCache { output, probs, branch, enc, mlp_t, ln_q, ln_kv, q, k, v, concat })
}

/// Adapter forward over a patch grid: H0 + alpha .* MHA(LN(H0), LN(S)).
pub fn ssca_forward(
    h0: &TokenMatrix,
    spec: &PatchGridSpec,
    params: &SscaParams,
) -> Result<TokenMatrix, SscaError> {
    Ok(forward_full(h0, &patch_centers(spec), params)?.output)
}

/// Gradients of a scalar loss with respect to every parameter group plus
/// the input tokens; same shapes as the forward quantities.
pub struct Gradients {
    pub params: SscaParams,
    pub h0: TokenMatrix,
}

/// Hand-derived backward pass for loss = sum of squares of the output.
pub fn backward_sumsq(
    h0: &TokenMatrix,
    dirs: &[SphericalDirection],
    params: &SscaParams,
    cache: &ForwardCache,
) -> Gradients {
    let (n, d, heads) = (h0.rows, params.d, params.heads);
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let f4 = 4 * params.freqs;
    let mut g = SscaParams {
        d,
        heads,
        freqs: params.freqs,
        mlp_w1: vec![0.0; d * f4],
        mlp_b1: vec![0.0; d],
        mlp_w2: vec![0.0; d * d],
        mlp_b2: vec![0.0; d],
        wq: vec![0.0; d * d],
        wk: vec![0.0; d * d],
        wv: vec![0.0; d * d],
        wo: vec![0.0; d * d],
        ln_q_gamma: vec![0.0; d],
        ln_q_beta: vec![0.0; d],
        ln_kv_gamma: vec![0.0; d],
        ln_kv_beta: vec![0.0; d],
        alpha: vec![0.0; d],
    };
    let mut dh0 = TokenMatrix::zeros(n, d);

    // loss = sum out^2 -> dOut = 2 out; out = h0 + alpha .* branch
    let mut dbranch = vec![vec![0.0; d]; n];
    for i in 0..n {
        for j in 0..d {
            let dout = 2.0 * cache.output.data[i * d + j];
            dh0.data[i * d + j] += dout;
            g.alpha[j] += dout * cache.branch.data[i * d + j];
            dbranch[i][j] = dout * params.alpha[j];
        }
    }

    // branch_i = Wo concat_i
    let mut dconcat = vec![vec![0.0; d]; n];
    for i in 0..n {
        outer_add(&mut g.wo, &dbranch[i], &cache.concat[i]);
        dconcat[i] = matvec_t(&params.wo, &dbranch[i], d, d);
    }

    // attention backward per head
    let mut dq = vec![vec![0.0; d]; n];
    let mut dk = vec![vec![0.0; d]; n];
    let mut dv = vec![vec![0.0; d]; n];
    for h in 0..heads {
        let lo = h * dh;
        let hi = lo + dh;
        for i in 0..n {
            // dP_ij = dconcat_i . v_j (head slice); dV_j += P_ij dconcat_i
            let mut dp = vec![0.0; n];
            for j in 0..n {
                let p = cache.probs[h].data[i * n + j];
                let mut dot = 0.0;
                for c in lo..hi {
                    dot += dconcat[i][c] * cache.v[j][c];
                    dv[j][c] += p * dconcat[i][c];
                }
                dp[j] = dot;
            }
            // softmax backward: dz_j = P_j (dP_j - sum_k dP_k P_k)
            let inner: f64 =
                (0..n).map(|j| dp[j] * cache.probs[h].data[i * n + j]).sum();
            for j in 0..n {
                let dz = cache.probs[h].data[i * n + j] * (dp[j] - inner);
                for c in lo..hi {
                    dq[i][c] += dz * cache.k[j][c] * scale;
                    dk[j][c] += dz * cache.q[i][c] * scale;
                }
            }
        }
    }

    // projections and layer norms
    let mut ds = vec![vec![0.0; d]; n];
    for i in 0..n {
        outer_add(&mut g.wq, &dq[i], &cache.ln_q[i].0);
        let dln_q = matvec_t(&params.wq, &dq[i], d, d);
        let dx = layer_norm_backward(
            &dln_q,
            &params.ln_q_gamma,
            &cache.ln_q[i].1,
            &mut g.ln_q_gamma,
            &mut g.ln_q_beta,
        );
        for j in 0..d {
            dh0.data[i * d + j] += dx[j];
        }

        outer_add(&mut g.wk, &dk[i], &cache.ln_kv[i].0);
        outer_add(&mut g.wv, &dv[i], &cache.ln_kv[i].0);
        let mut dln_kv = matvec_t(&params.wk, &dk[i], d, d);
        for (a, b) in dln_kv.iter_mut().zip(matvec_t(&params.wv, &dv[i], d, d)) {
            *a += b;
        }
        ds[i] = layer_norm_backward(
            &dln_kv,
            &params.ln_kv_gamma,
            &cache.ln_kv[i].1,
            &mut g.ln_kv_gamma,
            &mut g.ln_kv_beta,
        );
    }

    // MLP backward: s = W2 tanh(W1 e + b1) + b2
    for i in 0..n {
        outer_add(&mut g.mlp_w2, &ds[i], &cache.mlp_t[i]);
        for j in 0..d {
            g.mlp_b2[j] += ds[i][j];
        }
        let dt = matvec_t(&params.mlp_w2, &ds[i], d, d);
        let du: Vec<f64> = dt
            .iter()
            .zip(&cache.mlp_t[i])
            .map(|(dt, t)| dt * (1.0 - t * t))
            .collect();
        outer_add(&mut g.mlp_w1, &du, &cache.enc[i]);
        for j in 0..d {
            g.mlp_b1[j] += du[j];
        }
    }
    let _ = dirs;
    Gradients { params: g, h0: dh0 }
}

fn loss_of(h0: &TokenMatrix, dirs: &[SphericalDirection], params: &SscaParams) -> f64 {
    forward_full(h0, dirs, params)
        .expect("dims already validated")
        .output
        .data
        .iter()
        .map(|v| v * v)
        .sum()
}

/// Max relative error of the analytic gradients against central finite
/// differences over every parameter group and the input tokens.
pub fn grad_check(
    h0: &TokenMatrix,
    dirs: &[SphericalDirection],
    params: &SscaParams,
) -> Result<f64, SscaError> {
    let cache = forward_full(h0, dirs, params)?;
    let grads = backward_sumsq(h0, dirs, params, &cache);
    let step = 1e-5;
    let mut max_rel = 0.0f64;
    let rel = |analytic: f64, numeric: f64| -> f64 {
        (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
    };

    let mut p = params.clone();
    let analytic_groups: Vec<(&'static str, Vec<f64>)> = {
        let mut gp = grads.params;
        gp.groups_mut().into_iter().map(|(name, v)| (name, v.clone())).collect()
    };
    for (name, analytic) in &analytic_groups {
        let len = analytic.len();
        for idx in 0..len {
            let orig = {
                let mut groups = p.groups_mut();
                let slot = groups.iter_mut().find(|(n, _)| n == name).unwrap();
                let orig = slot.1[idx];
                slot.1[idx] = orig + step;
                orig
            };
            let plus = loss_of(h0, dirs, &p);
            {
                let mut groups = p.groups_mut();
                let slot = groups.iter_mut().find(|(n, _)| n == name).unwrap();
                slot.1[idx] = orig - step;
            }
            let minus = loss_of(h0, dirs, &p);
            {
                let mut groups = p.groups_mut();
                let slot = groups.iter_mut().find(|(n, _)| n == name).unwrap();
                slot.1[idx] = orig;
            }
            let numeric = (plus - minus) / (2.0 * step);
            max_rel = max_rel.max(rel(analytic[idx], numeric));
        }
    }

    let mut h = h0.clone();
    for idx in 0..h.data.len() {
        let orig = h.data[idx];
        h.data[idx] = orig + step;
        let plus = loss_of(&h, dirs, params);
        h.data[idx] = orig - step;
        let minus = loss_of(&h, dirs, params);
        h.data[idx] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        max_rel = max_rel.max(rel(grads.h0.data[idx], numeric));
    }
    Ok(max_rel)
}

// --- parameter snapshot (versioned, little-endian f64) ---

/// Header: magic, version, d, heads, freqs; then every group in the fixed
/// `groups_mut` order as little-endian f64.
pub fn save_params(params: &SscaParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.d as u32).to_le_bytes());
    out.extend_from_slice(&(params.heads as u32).to_le_bytes());
    out.extend_from_slice(&(params.freqs as u32).to_le_bytes());
    let mut p = params.clone();
    for (_, group) in p.groups_mut() {
        for v in group.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn load_params(bytes: &[u8]) -> Result<SscaParams, SscaError> {
    let header = 4 + 4 * 4;
    if bytes.len() < header {
        return Err(SscaError::Snapshot("truncated header".into()));
    }
    if &bytes[..4] != SNAPSHOT_MAGIC {
        return Err(SscaError::Snapshot("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != SNAPSHOT_VERSION {
        return Err(SscaError::Snapshot(format!(
            "unsupported version {version} (expected {SNAPSHOT_VERSION})"
        )));
    }
    let d = u32_at(8) as usize;
    let heads = u32_at(12) as usize;
    let freqs = u32_at(16) as usize;
    if d == 0 || heads == 0 || freqs == 0 || d % heads != 0 {
        return Err(SscaError::Snapshot(format!("bad dims d={d} heads={heads} freqs={freqs}")));
    }
    let mut params = SscaParams::init(d, heads, freqs, 0)?;
    let total: usize = params.group_order().iter().map(|(_, len)| len).sum();
    if bytes.len() != header + total * 8 {
        return Err(SscaError::Snapshot(format!(
            "payload length {} != expected {}",
            bytes.len() - header,
            total * 8
        )));
    }
    let mut off = header;
    for (_, group) in params.groups_mut() {
        for v in group.iter_mut() {
            *v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            off += 8;
        }
    }
    Ok(params)
}
