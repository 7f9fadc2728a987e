use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use super::layers::{
    layer_norm, layer_norm_backward, linear, linear_backward, pe_table, relu_backward, relu_in_place,
    softmax_rows, softmax_rows_backward, LnCache,
};
use super::weights::{EncoderSlots, HeadSlots, Layout, LocalSlots};
use super::{AttentionScale, HeadValues, ModelConfig, ModelWeights};
use crate::embedding::TrajectoryImage;
use crate::math;
use crate::tensor::{gemm, gemm_strided, matvec, matvec_t_acc, outer_acc, Matrix};
use crate::{Error, Result};

/// Two disjoint mutable views into the gradient buffer.
fn pair_mut(buf: &mut [f64], a: Range<usize>, b: Range<usize>) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a.end <= b.start || b.end <= a.start);
    if a.start < b.start {
        let (lo, hi) = buf.split_at_mut(b.start);
        (&mut lo[a], &mut hi[..b.end - b.start])
    } else {
        let (lo, hi) = buf.split_at_mut(a.start);
        (&mut hi[..a.end - a.start], &mut lo[b])
    }
}

/// One attention matrix captured during a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionCapture {
    pub layer: usize,
    pub head: usize,
    /// `N x N`, rows index keys and columns queries; each column sums to 1.
    pub matrix: Matrix,
}

struct EncoderCache {
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Per head `N x N`, row = query, column = key (rows sum to 1).
    probs: Vec<f64>,
    concat: Vec<f64>,
    ln1: LnCache,
    z: Vec<f64>,
    ff_pre: Vec<f64>,
    ff_act: Vec<f64>,
    ln2: LnCache,
}

struct LocalCache {
    /// `10 x (m*N)`: the image, then its nine zero-padded 3x3 shifts.
    cols: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    map: Vec<f64>,
}

struct HeadCache {
    y: Vec<f64>,
    ln1: LnCache,
    y1: Vec<f64>,
    h_pre: Vec<f64>,
    h_act: Vec<f64>,
    ln2: LnCache,
    y2: Vec<f64>,
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardCache {
    image: Vec<f64>,
    layers: Vec<EncoderCache>,
    enc_out: Vec<f64>,
    local: Option<LocalCache>,
    head: HeadCache,
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// Compressed local feature map (`m x N`, row-major), full variant only.
    pub fn local_map(&self) -> Option<&[f64]> {
        self.local.as_ref().map(|l| l.map.as_slice())
    }

    /// Input of encoder layer `layer` in `d_model x N` orientation.
    pub fn encoder_input(&self, layer: usize, d_model: usize) -> Matrix {
        let x = &self.layers[layer].x;
        let n = x.len() / d_model;
        Matrix::from_fn(d_model, n, |r, c| x[c * d_model + r])
    }

    /// Attention matrices of every layer and head, keys x queries.
    pub fn attention(&self, n_heads: usize) -> Vec<AttentionCapture> {
        let mut out = Vec::new();
        for (layer, cache) in self.layers.iter().enumerate() {
            let n = (cache.probs.len() / n_heads).isqrt();
            for head in 0..n_heads {
                let p = &cache.probs[head * n * n..(head + 1) * n * n];
                out.push(AttentionCapture {
                    layer,
                    head,
                    matrix: Matrix::from_fn(n, n, |key, query| p[query * n + key]),
                });
            }
        }
        out
    }
}

/// A configured network with its weights.
#[derive(Debug, Clone)]
pub struct Model {
    weights: ModelWeights,
    layout: Layout,
    pe: Vec<f64>,
}

impl Model {
    pub fn new(weights: ModelWeights) -> Result<Self> {
        let cfg = weights.config();
        cfg.validate()?;
        let layout = weights.layout();
        let pe = pe_table(cfg.d_model, cfg.n);
        Ok(Self { weights, layout, pe })
    }

    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        Self::new(ModelWeights::init(config, seed)?)
    }

    pub fn config(&self) -> &ModelConfig {
        self.weights.config()
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut ModelWeights {
        &mut self.weights
    }

    pub fn into_weights(self) -> ModelWeights {
        self.weights
    }

    pub fn num_params(&self) -> usize {
        self.weights.len()
    }

    fn w(&self, r: &Range<usize>) -> &[f64] {
        &self.weights.values()[r.clone()]
    }

    fn check_image(&self, image: &TrajectoryImage) -> Result<()> {
        let cfg = self.config();
        if image.m() != cfg.m || image.n() != cfg.n {
            return Err(Error::ShapeMismatch(format!(
                "image is {}x{}, model expects {}x{}",
                image.m(),
                image.n(),
                cfg.m,
                cfg.n
            )));
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        let cfg = self.config();
        match cfg.attention_scale {
            AttentionScale::PerHead => 1.0 / math::sqrt(cfg.head_dim() as f64),
            AttentionScale::PaperExact => 1.0 / math::sqrt(cfg.d_model as f64),
        }
    }

    /// Prediction in normalised units.
    pub fn forward(&self, image: &TrajectoryImage) -> Result<Vec<f64>> {
        Ok(self.forward_cached(image)?.output)
    }

    pub fn forward_cached(&self, image: &TrajectoryImage) -> Result<ForwardCache> {
        self.check_image(image)?;
        let img = image.data().as_slice();
        let mut layers = Vec::with_capacity(self.config().e_layers);
        let mut h = self.embed(img);
        for slots in &self.layout.enc {
            let (y, cache) = self.encoder_forward(slots, h);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteActivation("encoder"));
            }
            layers.push(cache);
            h = y;
        }
        let y_g = self.global(&h);
        let (local, y_l) = match &self.layout.local {
            Some(slots) => {
                let cache = self.local_forward(slots, img);
                let y_l = self.local_project(slots, &cache.map);
                (Some(cache), Some(y_l))
            }
            None => (None, None),
        };
        let (head, output) = self.head_forward(&y_g, y_l.as_deref());
        if output.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteActivation("output"));
        }
        Ok(ForwardCache {
            image: img.to_vec(),
            layers,
            enc_out: h,
            local,
            head,
            output,
        })
    }

    /// Value embedding plus positions, token-major.
    fn embed(&self, img: &[f64]) -> Vec<f64> {
        let cfg = self.config();
        let (d, m, n) = (cfg.d_model, cfg.m, cfg.n);
        let mut h = vec![0.0; n * d];
        gemm(n, m, d, img, true, self.w(&self.layout.ve_w), true, &mut h, false);
        let b = self.w(&self.layout.ve_b);
        for t in 0..n {
            for c in 0..d {
                h[t * d + c] += b[c] + self.pe[t * d + c];
            }
        }
        h
    }

    fn attention_forward(&self, s: &EncoderSlots, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let cfg = self.config();
        let (d, n, heads, dh) = (cfg.d_model, cfg.n, cfg.n_heads, cfg.head_dim());
        let mut q = vec![0.0; n * d];
        let mut k = vec![0.0; n * d];
        linear(x, n, d, self.w(&s.wq), d, None, &mut q);
        linear(x, n, d, self.w(&s.wk), d, None, &mut k);
        let mut v = vec![0.0; n * d];
        if cfg.head_values == HeadValues::Projected {
            linear(x, n, d, self.w(&s.wv), d, None, &mut v);
        }
        let src: &[f64] = match cfg.head_values {
            HeadValues::Projected => &v,
            HeadValues::Input => x,
        };
        let scale = self.scale();
        let mut probs = vec![0.0; heads * n * n];
        let mut concat = vec![0.0; n * d];
        for hd in 0..heads {
            let off = hd * dh;
            let p = &mut probs[hd * n * n..(hd + 1) * n * n];
            // scores[query][key] = q_query . k_key
            gemm_strided(n, dh, n, &q[off..], (d, 1), &k[off..], (1, d), p, (n, 1), false);
            p.iter_mut().for_each(|v| *v *= scale);
            softmax_rows(p, n, n);
            gemm_strided(n, n, dh, p, (n, 1), &src[off..], (d, 1), &mut concat[off..], (d, 1), false);
        }
        (q, k, v, probs, concat)
    }

    fn encoder_forward(&self, s: &EncoderSlots, x: Vec<f64>) -> (Vec<f64>, EncoderCache) {
        let cfg = self.config();
        let (d, n, f) = (cfg.d_model, cfg.n, cfg.d_ff);
        let (q, k, v, probs, concat) = self.attention_forward(s, &x);
        let mut s1 = vec![0.0; n * d];
        linear(&concat, n, d, self.w(&s.wo), d, None, &mut s1);
        for (a, b) in s1.iter_mut().zip(&x) {
            *a += b;
        }
        let mut z = vec![0.0; n * d];
        let ln1 = layer_norm(&s1, n, d, self.w(&s.ln1_g), self.w(&s.ln1_b), &mut z);
        let mut ff_pre = vec![0.0; n * f];
        linear(&z, n, d, self.w(&s.ff_w1), f, Some(self.w(&s.ff_b1)), &mut ff_pre);
        let mut ff_act = ff_pre.clone();
        relu_in_place(&mut ff_act);
        let mut s2 = vec![0.0; n * d];
        linear(&ff_act, n, f, self.w(&s.ff_w2), d, Some(self.w(&s.ff_b2)), &mut s2);
        for (a, b) in s2.iter_mut().zip(&z) {
            *a += b;
        }
        let mut y = vec![0.0; n * d];
        let ln2 = layer_norm(&s2, n, d, self.w(&s.ln2_g), self.w(&s.ln2_b), &mut y);
        let cache = EncoderCache {
            x,
            q,
            k,
            v,
            probs,
            concat,
            ln1,
            z,
            ff_pre,
            ff_act,
            ln2,
        };
        (y, cache)
    }

    fn global(&self, enc_out: &[f64]) -> Vec<f64> {
        let d = self.config().d_model;
        let last = &enc_out[enc_out.len() - d..];
        let mut y_g = vec![0.0; d];
        matvec(self.w(&self.layout.wg), d, d, last, &mut y_g, false);
        y_g
    }

    fn local_forward(&self, s: &LocalSlots, img: &[f64]) -> LocalCache {
        let cfg = self.config();
        let (d, m, n) = (cfg.d_model, cfg.m, cfg.n);
        let mn = m * n;
        let mut cols = vec![0.0; 10 * mn];
        cols[..mn].copy_from_slice(img);
        for a in 0..3 {
            for b in 0..3 {
                let row = &mut cols[(1 + a * 3 + b) * mn..(2 + a * 3 + b) * mn];
                for i in 0..m {
                    let si = i as isize + a as isize - 1;
                    if si < 0 || si >= m as isize {
                        continue;
                    }
                    for j in 0..n {
                        let sj = j as isize + b as isize - 1;
                        if sj < 0 || sj >= n as isize {
                            continue;
                        }
                        row[i * n + j] = img[si as usize * n + sj as usize];
                    }
                }
            }
        }
        let w1 = self.w(&s.conv1_w);
        let w3 = self.w(&s.conv3_w);
        let mut kern = vec![0.0; d * 10];
        for c in 0..d {
            kern[c * 10] = w1[c];
            kern[c * 10 + 1..c * 10 + 10].copy_from_slice(&w3[c * 9..c * 9 + 9]);
        }
        let mut pre = vec![0.0; d * mn];
        gemm(d, 10, mn, &kern, false, &cols, false, &mut pre, false);
        let (b1, b3) = (self.w(&s.conv1_b), self.w(&s.conv3_b));
        for c in 0..d {
            let bias = b1[c] + b3[c];
            pre[c * mn..(c + 1) * mn].iter_mut().for_each(|v| *v += bias);
        }
        let mut act = pre.clone();
        relu_in_place(&mut act);
        let mut map = vec![0.0; mn];
        gemm(1, d, mn, self.w(&s.compress_w), false, &act, false, &mut map, false);
        let cb = self.w(&s.compress_b)[0];
        map.iter_mut().for_each(|v| *v += cb);
        LocalCache { cols, pre, act, map }
    }

    fn local_project(&self, s: &LocalSlots, map: &[f64]) -> Vec<f64> {
        let d = self.config().d_model;
        let mut y_l = vec![0.0; d];
        matvec(self.w(&s.wl), d, map.len(), map, &mut y_l, false);
        y_l
    }

    fn head_forward(&self, y_g: &[f64], y_l: Option<&[f64]>) -> (HeadCache, Vec<f64>) {
        let cfg = self.config();
        let s: &HeadSlots = &self.layout.head;
        let (w, f, p) = (cfg.feature_width(), cfg.d_ff, cfg.d_pred);
        let mut y = y_g.to_vec();
        if let Some(l) = y_l {
            y.extend_from_slice(l);
        }
        let mut u = y.clone();
        matvec(self.w(&s.w1), w, w, &y, &mut u, true);
        let mut y1 = vec![0.0; w];
        let ln1 = layer_norm(&u, 1, w, self.w(&s.ln1_g), self.w(&s.ln1_b), &mut y1);
        let mut h_pre = vec![0.0; f];
        matvec(self.w(&s.w2), f, w, &y1, &mut h_pre, false);
        let mut h_act = h_pre.clone();
        relu_in_place(&mut h_act);
        let mut v = y1.clone();
        matvec(self.w(&s.w3), w, f, &h_act, &mut v, true);
        let mut y2 = vec![0.0; w];
        let ln2 = layer_norm(&v, 1, w, self.w(&s.ln2_g), self.w(&s.ln2_b), &mut y2);
        let mut out = self.w(&s.b).to_vec();
        matvec(self.w(&s.w4), p, w, &y2, &mut out, true);
        let cache = HeadCache {
            y,
            ln1,
            y1,
            h_pre,
            h_act,
            ln2,
            y2,
        };
        (cache, out)
    }

    /// Accumulates parameter gradients of `sum(d_out * output)` into `grad`.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.weights.len());
        let cfg = self.config();
        let (d, n, m) = (cfg.d_model, cfg.n, cfg.m);
        let d_feat = self.head_backward(&cache.head, d_out, grad);
        if let (Some(slots), Some(local)) = (&self.layout.local, &cache.local) {
            self.local_backward(slots, local, &d_feat[d..], grad);
        }
        // Global projection of the last phase point.
        let mut dh = vec![0.0; n * d];
        let last = &cache.enc_out[(n - 1) * d..];
        outer_acc(&d_feat[..d], last, &mut grad[self.layout.wg.clone()]);
        matvec_t_acc(self.w(&self.layout.wg), d, d, &d_feat[..d], &mut dh[(n - 1) * d..]);
        for (slots, lc) in self.layout.enc.iter().zip(&cache.layers).rev() {
            dh = self.encoder_backward(slots, lc, &dh, grad);
        }
        // Value embedding.
        gemm(d, n, m, &dh, true, &cache.image, true, &mut grad[self.layout.ve_w.clone()], true);
        let gb = &mut grad[self.layout.ve_b.clone()];
        for t in 0..n {
            for c in 0..d {
                gb[c] += dh[t * d + c];
            }
        }
    }

    /// Returns the gradient with respect to the concatenated features.
    fn head_backward(&self, c: &HeadCache, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let cfg = self.config();
        let s = &self.layout.head;
        let (w, f, p) = (cfg.feature_width(), cfg.d_ff, cfg.d_pred);
        outer_acc(d_out, &c.y2, &mut grad[s.w4.clone()]);
        grad[s.b.clone()].iter_mut().zip(d_out).for_each(|(g, v)| *g += v);
        let mut dy2 = vec![0.0; w];
        matvec_t_acc(self.w(&s.w4), p, w, d_out, &mut dy2);
        let mut dv = vec![0.0; w];
        {
            let (dg, db) = pair_mut(grad, s.ln2_g.clone(), s.ln2_b.clone());
            layer_norm_backward(&dy2, &c.ln2, 1, w, self.w(&s.ln2_g), dg, db, &mut dv);
        }
        let mut dy1 = dv.clone();
        outer_acc(&dv, &c.h_act, &mut grad[s.w3.clone()]);
        let mut dh = vec![0.0; f];
        matvec_t_acc(self.w(&s.w3), w, f, &dv, &mut dh);
        relu_backward(&c.h_pre, &mut dh);
        outer_acc(&dh, &c.y1, &mut grad[s.w2.clone()]);
        matvec_t_acc(self.w(&s.w2), f, w, &dh, &mut dy1);
        let mut du = vec![0.0; w];
        {
            let (dg, db) = pair_mut(grad, s.ln1_g.clone(), s.ln1_b.clone());
            layer_norm_backward(&dy1, &c.ln1, 1, w, self.w(&s.ln1_g), dg, db, &mut du);
        }
        let mut dy = du.clone();
        outer_acc(&du, &c.y, &mut grad[s.w1.clone()]);
        matvec_t_acc(self.w(&s.w1), w, w, &du, &mut dy);
        dy
    }

    /// Gradient of the local feature w.r.t. the compressed map.
    fn local_map_grad(&self, s: &LocalSlots, dy_l: &[f64]) -> Vec<f64> {
        let cfg = self.config();
        let mn = cfg.m * cfg.n;
        let mut dmap = vec![0.0; mn];
        matvec_t_acc(self.w(&s.wl), cfg.d_model, mn, dy_l, &mut dmap);
        dmap
    }

    fn local_backward(&self, s: &LocalSlots, c: &LocalCache, dy_l: &[f64], grad: &mut [f64]) {
        let cfg = self.config();
        let d = cfg.d_model;
        let mn = cfg.m * cfg.n;
        outer_acc(dy_l, &c.map, &mut grad[s.wl.clone()]);
        let dmap = self.local_map_grad(s, dy_l);
        gemm(d, mn, 1, &c.act, false, &dmap, false, &mut grad[s.compress_w.clone()], true);
        grad[s.compress_b.clone()][0] += dmap.iter().sum::<f64>();
        let cw = self.w(&s.compress_w);
        let mut dact = vec![0.0; d * mn];
        for ch in 0..d {
            let row = &mut dact[ch * mn..(ch + 1) * mn];
            for (g, &dm) in row.iter_mut().zip(&dmap) {
                *g = cw[ch] * dm;
            }
        }
        relu_backward(&c.pre, &mut dact);
        let mut dkern = vec![0.0; d * 10];
        gemm(d, mn, 10, &dact, false, &c.cols, true, &mut dkern, false);
        let (g1, g3) = pair_mut(grad, s.conv1_w.clone(), s.conv3_w.clone());
        for ch in 0..d {
            g1[ch] += dkern[ch * 10];
            for k in 0..9 {
                g3[ch * 9 + k] += dkern[ch * 10 + 1 + k];
            }
        }
        let (gb1, gb3) = pair_mut(grad, s.conv1_b.clone(), s.conv3_b.clone());
        for ch in 0..d {
            let sum: f64 = dact[ch * mn..(ch + 1) * mn].iter().sum();
            gb1[ch] += sum;
            gb3[ch] += sum;
        }
    }

    fn encoder_backward(&self, s: &EncoderSlots, c: &EncoderCache, dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let cfg = self.config();
        let (d, n, f, heads, dh) = (cfg.d_model, cfg.n, cfg.d_ff, cfg.n_heads, cfg.head_dim());
        let mut ds2 = vec![0.0; n * d];
        {
            let (dg, db) = pair_mut(grad, s.ln2_g.clone(), s.ln2_b.clone());
            layer_norm_backward(dy, &c.ln2, n, d, self.w(&s.ln2_g), dg, db, &mut ds2);
        }
        let mut dz = ds2.clone();
        let mut dff = vec![0.0; n * f];
        {
            let (dw, db) = pair_mut(grad, s.ff_w2.clone(), s.ff_b2.clone());
            linear_backward(&ds2, &c.ff_act, n, f, self.w(&s.ff_w2), d, dw, Some(db), Some(&mut dff));
        }
        relu_backward(&c.ff_pre, &mut dff);
        {
            let (dw, db) = pair_mut(grad, s.ff_w1.clone(), s.ff_b1.clone());
            linear_backward(&dff, &c.z, n, d, self.w(&s.ff_w1), f, dw, Some(db), Some(&mut dz));
        }
        let mut ds1 = vec![0.0; n * d];
        {
            let (dg, db) = pair_mut(grad, s.ln1_g.clone(), s.ln1_b.clone());
            layer_norm_backward(&dz, &c.ln1, n, d, self.w(&s.ln1_g), dg, db, &mut ds1);
        }
        let mut dx = ds1.clone();
        let mut dconcat = vec![0.0; n * d];
        linear_backward(&ds1, &c.concat, n, d, self.w(&s.wo), d, &mut grad[s.wo.clone()], None, Some(&mut dconcat));

        let scale = self.scale();
        let input_values = cfg.head_values == HeadValues::Input;
        let src: &[f64] = if input_values { &c.x } else { &c.v };
        let mut dq = vec![0.0; n * d];
        let mut dk = vec![0.0; n * d];
        let mut dv = vec![0.0; n * d];
        let mut dp = vec![0.0; n * n];
        for hd in 0..heads {
            let off = hd * dh;
            let p = &c.probs[hd * n * n..(hd + 1) * n * n];
            // dP = dO src^T
            gemm_strided(n, dh, n, &dconcat[off..], (d, 1), &src[off..], (1, d), &mut dp, (n, 1), false);
            // d src += P^T dO
            let dsrc: &mut [f64] = if input_values { &mut dx } else { &mut dv };
            gemm_strided(n, n, dh, p, (1, n), &dconcat[off..], (d, 1), &mut dsrc[off..], (d, 1), true);
            softmax_rows_backward(p, &mut dp, n, n);
            dp.iter_mut().for_each(|v| *v *= scale);
            gemm_strided(n, n, dh, &dp, (n, 1), &c.k[off..], (d, 1), &mut dq[off..], (d, 1), true);
            gemm_strided(n, n, dh, &dp, (1, n), &c.q[off..], (d, 1), &mut dk[off..], (d, 1), true);
        }
        linear_backward(&dq, &c.x, n, d, self.w(&s.wq), d, &mut grad[s.wq.clone()], None, Some(&mut dx));
        linear_backward(&dk, &c.x, n, d, self.w(&s.wk), d, &mut grad[s.wk.clone()], None, Some(&mut dx));
        if !input_values {
            linear_backward(&dv, &c.x, n, d, self.w(&s.wv), d, &mut grad[s.wv.clone()], None, Some(&mut dx));
        }
        dx
    }

    /// Mean-squared error of one sample; accumulates its gradient into `grad`.
    pub fn loss_and_grad(&self, image: &TrajectoryImage, target: &[f64], grad: &mut [f64]) -> Result<f64> {
        if target.len() != self.config().d_pred {
            return Err(Error::LengthMismatch {
                left: target.len(),
                right: self.config().d_pred,
            });
        }
        let cache = self.forward_cached(image)?;
        let k = target.len() as f64;
        let mut loss = 0.0;
        let mut d_out = vec![0.0; target.len()];
        for ((g, &o), &t) in d_out.iter_mut().zip(&cache.output).zip(target) {
            let e = o - t;
            loss += e * e;
            *g = 2.0 * e / k;
        }
        self.backward(&cache, &d_out, grad);
        Ok(loss / k)
    }

    /// Gradient of `sum(d_out * output)` with respect to the compressed
    /// local map (`m x N`, row-major).
    pub fn local_map_gradient(&self, cache: &ForwardCache, d_out: &[f64]) -> Result<Vec<f64>> {
        let slots = self.layout.local.as_ref().ok_or(Error::VariantHasNoLocalBranch)?;
        let mut scratch = vec![0.0; self.weights.len()];
        let d_feat = self.head_backward(&cache.head, d_out, &mut scratch);
        Ok(self.local_map_grad(slots, &d_feat[self.config().d_model..]))
    }

    /// Forward pass with the compressed local map replaced by `map`.
    pub fn predict_with_local_map(&self, image: &TrajectoryImage, map: &[f64]) -> Result<Vec<f64>> {
        let slots = self.layout.local.as_ref().ok_or(Error::VariantHasNoLocalBranch)?;
        let cfg = self.config();
        if map.len() != cfg.m * cfg.n {
            return Err(Error::LengthMismatch {
                left: map.len(),
                right: cfg.m * cfg.n,
            });
        }
        self.check_image(image)?;
        let mut h = self.embed(image.data().as_slice());
        for s in &self.layout.enc {
            h = self.encoder_forward(s, h).0;
        }
        let y_g = self.global(&h);
        let y_l = self.local_project(slots, map);
        Ok(self.head_forward(&y_g, Some(&y_l)).1)
    }

    // Single-stage helpers in d_model x N orientation.

    fn to_tokens(x: &Matrix) -> Vec<f64> {
        x.transpose().into_vec()
    }

    fn from_tokens(t: &[f64], d: usize) -> Matrix {
        let n = t.len() / d;
        Matrix::from_fn(d, n, |r, c| t[c * d + r])
    }

    fn check_sequence(&self, x: &Matrix) -> Result<()> {
        let cfg = self.config();
        if x.rows() != cfg.d_model || x.cols() != cfg.n {
            return Err(Error::ShapeMismatch(format!(
                "sequence is {}x{}, expected {}x{}",
                x.rows(),
                x.cols(),
                cfg.d_model,
                cfg.n
            )));
        }
        Ok(())
    }

    fn layer_slots(&self, layer: usize) -> Result<&EncoderSlots> {
        self.layout
            .enc
            .get(layer)
            .ok_or_else(|| Error::InvalidParameter(format!("no encoder layer {layer}")))
    }

    /// Value embedding alone (no positions): column `i` is `W_ve x_i + b_ve`.
    pub fn value_embed(&self, image: &TrajectoryImage) -> Result<Matrix> {
        self.check_image(image)?;
        let cfg = self.config();
        let (d, m, n) = (cfg.d_model, cfg.m, cfg.n);
        let mut h = vec![0.0; n * d];
        gemm(n, m, d, image.data().as_slice(), true, self.w(&self.layout.ve_w), true, &mut h, false);
        let b = self.w(&self.layout.ve_b);
        for t in 0..n {
            for c in 0..d {
                h[t * d + c] += b[c];
            }
        }
        Ok(Self::from_tokens(&h, d))
    }

    /// Multi-head attention of encoder layer `layer`; returns the fused
    /// output and each head's attention matrix (keys x queries).
    pub fn multi_head_attention(&self, layer: usize, x: &Matrix) -> Result<(Matrix, Vec<Matrix>)> {
        self.check_sequence(x)?;
        let s = self.layer_slots(layer)?;
        let cfg = self.config();
        let (d, n) = (cfg.d_model, cfg.n);
        let xt = Self::to_tokens(x);
        let (_, _, _, probs, concat) = self.attention_forward(s, &xt);
        let mut out = vec![0.0; n * d];
        linear(&concat, n, d, self.w(&s.wo), d, None, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteActivation("attention"));
        }
        let maps = (0..cfg.n_heads)
            .map(|h| {
                let p = &probs[h * n * n..(h + 1) * n * n];
                Matrix::from_fn(n, n, |key, query| p[query * n + key])
            })
            .collect();
        Ok((Self::from_tokens(&out, d), maps))
    }

    pub fn encoder_layer(&self, layer: usize, x: &Matrix) -> Result<Matrix> {
        self.check_sequence(x)?;
        let s = self.layer_slots(layer)?;
        let (y, _) = self.encoder_forward(s, Self::to_tokens(x));
        Ok(Self::from_tokens(&y, self.config().d_model))
    }

    /// `W_g` applied to the last column of an encoder output.
    pub fn global_feature(&self, y: &Matrix) -> Result<Vec<f64>> {
        self.check_sequence(y)?;
        Ok(self.global(&Self::to_tokens(y)))
    }

    pub fn local_branch(&self, image: &TrajectoryImage) -> Result<Vec<f64>> {
        self.check_image(image)?;
        let slots = self.layout.local.as_ref().ok_or(Error::VariantHasNoLocalBranch)?;
        let cache = self.local_forward(slots, image.data().as_slice());
        Ok(self.local_project(slots, &cache.map))
    }

    pub fn predict_head(&self, y_g: &[f64], y_l: Option<&[f64]>) -> Result<Vec<f64>> {
        let cfg = self.config();
        let width = y_g.len() + y_l.map_or(0, <[f64]>::len);
        if y_g.len() != cfg.d_model || width != cfg.feature_width() {
            return Err(Error::ShapeMismatch(format!(
                "predictor input width {width}, expected {}",
                cfg.feature_width()
            )));
        }
        Ok(self.head_forward(y_g, y_l).1)
    }
}
