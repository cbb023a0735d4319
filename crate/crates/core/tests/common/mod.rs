//! Shared test helpers: random inputs and a nested-loop reference
//! implementation of the model, written against named weight tensors only.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use tfe_core::model::{ModelConfig, ModelInput, Targets, Task, Weights};
use tfe_core::rng;

pub type Rows = Vec<Vec<f64>>;

/// Random cells in `[-2, 2)` with roughly `nan_rate` missing.
pub fn random_cells(r: usize, f: usize, nan_rate: f64, seed: u64) -> Rows {
    let mut g = rng::stream(seed, 99);
    (0..r)
        .map(|_| {
            (0..f)
                .map(|_| if g.random::<f64>() < nan_rate { f64::NAN } else { g.random_range(-2.0..2.0) })
                .collect()
        })
        .collect()
}

pub fn random_labels(n: usize, c: usize, seed: u64) -> Vec<usize> {
    let mut g = rng::stream(seed, 98);
    let mut y: Vec<usize> = (0..n).map(|_| g.random_range(0..c)).collect();
    // every class present when possible
    for (i, v) in y.iter_mut().enumerate().take(c.min(n)) {
        *v = i;
    }
    y
}

pub fn class_input(cells: &Rows, n_train: usize, labels: &[usize], c: usize) -> ModelInput<f64> {
    ModelInput::from_rows(cells, n_train, Targets::Classes { labels: labels.to_vec(), n_classes: c }).unwrap()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_diff_rows(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| max_diff(x, y)).fold(0.0, f64::max)
}

/// Stages reduced to pass-through branches and identity-like decoder
/// projections turn the model into a soft nearest-neighbour classifier.
pub fn soft_knn_weights() -> Weights<f64> {
    let c = ModelConfig::micro(Task::Classification);
    let mut w = Weights::<f64>::zeros(&c).unwrap();
    let d = c.embed_dim;
    // cell projection: value of each feature to its own coordinate
    for j in 0..c.feature_group_size {
        w.embed.cell_w.data_mut()[(2 * j) * d + j] = 1.0;
    }
    for norm in [&mut w.stage2.final_norm, &mut w.stage3.final_norm] {
        norm.data_mut().iter_mut().for_each(|v| *v = 1.0);
    }
    // aggregation: uniform attention, values copied straight through
    for b in &mut w.stage2.blocks {
        b.attn.norm.data_mut().iter_mut().for_each(|v| *v = 1.0);
        for i in 0..d {
            b.attn.wv.data_mut()[i * d + i] = 1.0;
            b.attn.wo.data_mut()[i * d + i] = 1.0;
        }
    }
    let width = c.decoder_heads * c.decoder_head_dim;
    assert!(c.icl_emsize() >= width);
    let dec = w.decoder.as_mut().unwrap();
    for i in 0..width {
        dec.wq.data_mut()[i * width + i] = 4.0;
        dec.wk.data_mut()[i * width + i] = 4.0;
    }
    w
}

/// Two Gaussian clusters around `(3, 3, 3)` and `(-3, -3, -3)` with noise
/// 0.3: `(cells, train labels, test labels)`, train rows first.
pub fn two_clusters(seed: u64, n_train_each: usize, n_test_each: usize) -> (Rows, Vec<usize>, Vec<usize>) {
    use rand_distr::{Distribution, Normal};
    let mut g = rng::stream(seed, 0);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let centers = [[3.0, 3.0, 3.0], [-3.0, -3.0, -3.0]];
    let mut draw = |n: usize| {
        let mut cells = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            for (k, ctr) in centers.iter().enumerate() {
                cells.push(ctr.iter().map(|v| v + noise.sample(&mut g)).collect::<Vec<f64>>());
                labels.push(k);
            }
        }
        (cells, labels)
    };
    let (mut cells, labels) = draw(n_train_each);
    let (test, truth) = draw(n_test_each);
    cells.extend(test);
    (cells, labels, truth)
}

/// Reference model evaluated with plain loops.
pub struct Oracle {
    pub cfg: ModelConfig,
    p: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x * x * x)).tanh())
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 { x } else { (1.0 + x.exp()).ln() }
}

fn softmax(s: &mut [f64]) {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in s.iter_mut() {
        *v = (*v - m).exp();
        z += *v;
    }
    for v in s.iter_mut() {
        *v /= z;
    }
}

impl Oracle {
    pub fn new(w: &Weights<f64>) -> Oracle {
        let p = w
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, (t.shape().to_vec(), t.data().to_vec())))
            .collect();
        Oracle { cfg: w.config.clone(), p }
    }

    pub fn get(&self, name: &str) -> &[f64] {
        &self.p.get(name).unwrap_or_else(|| panic!("no tensor {name}")).1
    }

    fn has(&self, name: &str) -> bool {
        self.p.contains_key(name)
    }

    fn dims(&self, name: &str) -> &[usize] {
        &self.p[name].0
    }

    fn lin(&self, x: &[Vec<f64>], w: &str, b: Option<&str>) -> Rows {
        let (din, dout) = (self.dims(w)[0], self.dims(w)[1]);
        let wd = self.get(w);
        x.iter()
            .map(|row| {
                (0..dout)
                    .map(|o| {
                        let mut acc = b.map_or(0.0, |b| self.get(b)[o]);
                        for i in 0..din {
                            acc += row[i] * wd[i * dout + o];
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    }

    fn rms(&self, x: &[Vec<f64>], g: &str) -> Rows {
        let gd = self.get(g);
        x.iter()
            .map(|row| {
                let ms = row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64;
                let inv = 1.0 / (ms + self.cfg.norm_eps).sqrt();
                row.iter().zip(gd).map(|(v, g)| g * v * inv).collect()
            })
            .collect()
    }

    fn scale(&self, prefix: &str, q: &[f64]) -> f64 {
        let w1 = self.get(&format!("{prefix}.w1"));
        let b1 = self.get(&format!("{prefix}.b1"));
        let w2 = self.get(&format!("{prefix}.w2"));
        let b2 = self.get(&format!("{prefix}.b2"));
        let hidden = b1.len();
        let mut acc = b2[0];
        for j in 0..hidden {
            let mut h = b1[j];
            for (i, qi) in q.iter().enumerate() {
                h += qi * w1[i * hidden + j];
            }
            acc += w2[j] * gelu(h);
        }
        1.0 + softplus(acc)
    }

    /// Multi-head attention; `scale` names a QASSMax MLP or `None` for a
    /// plain softmax.
    #[allow(clippy::too_many_arguments)]
    fn attend(&self, q: &[Vec<f64>], k: &[Vec<f64>], v: &[Vec<f64>], heads: usize, kv_heads: usize, dh: usize, scale: Option<&str>) -> Rows {
        let n = k.len();
        q.iter()
            .map(|qr| {
                let mut out = vec![0.0; heads * dh];
                for h in 0..heads {
                    let kh = if kv_heads == 1 { 0 } else { h };
                    let qh = &qr[h * dh..(h + 1) * dh];
                    let mut factor = 1.0 / (dh as f64).sqrt();
                    if let Some(s) = scale {
                        factor *= self.scale(s, qh) * (n as f64).ln();
                    }
                    let mut s: Vec<f64> = (0..n)
                        .map(|j| (0..dh).map(|d| qh[d] * k[j][kh * dh + d]).sum::<f64>() * factor)
                        .collect();
                    softmax(&mut s);
                    for j in 0..n {
                        for d in 0..dh {
                            out[h * dh + d] += s[j] * v[j][kh * dh + d];
                        }
                    }
                }
                out
            })
            .collect()
    }

    fn add(x: &mut [Vec<f64>], y: &[Vec<f64>]) {
        for (a, b) in x.iter_mut().zip(y) {
            for (u, v) in a.iter_mut().zip(b) {
                *u += v;
            }
        }
    }

    fn ff(&self, prefix: &str, x: &mut [Vec<f64>]) {
        let n = self.rms(x, &format!("{prefix}.norm"));
        let mut h = self.lin(&n, &format!("{prefix}.w1"), Some(&format!("{prefix}.b1")));
        for row in h.iter_mut() {
            for v in row.iter_mut() {
                *v = gelu(*v);
            }
        }
        let o = self.lin(&h, &format!("{prefix}.w2"), Some(&format!("{prefix}.b2")));
        Self::add(x, &o);
    }

    fn cross(&self, prefix: &str, x: &mut [Vec<f64>], ctx: &[Vec<f64>], heads: usize) {
        let qn = self.rms(x, &format!("{prefix}.norm_q"));
        let kn = self.rms(ctx, &format!("{prefix}.norm_kv"));
        let q = self.lin(&qn, &format!("{prefix}.wq"), None);
        let k = self.lin(&kn, &format!("{prefix}.wk"), None);
        let v = self.lin(&kn, &format!("{prefix}.wv"), None);
        let dh = q[0].len() / heads;
        let o = self.attend(&q, &k, &v, heads, heads, dh, Some(&format!("{prefix}.scale")));
        let o = self.lin(&o, &format!("{prefix}.wo"), None);
        Self::add(x, &o);
    }

    fn target_term(&self, table: &str, wname: &str, bname: &str, targets: &Targets, r: usize) -> Vec<f64> {
        match targets {
            Targets::Classes { labels, .. } => {
                let d = self.dims(table)[1];
                self.get(table)[labels[r] * d..(labels[r] + 1) * d].to_vec()
            }
            Targets::Values(y) => {
                let n = y.len() as f64;
                let mean = y.iter().sum::<f64>() / n;
                let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let std = if var > 1e-24 { var.sqrt() } else { 1.0 };
                let z = (y[r] - mean) / std;
                self.get(wname).iter().zip(self.get(bname)).map(|(w, b)| w * z + b).collect()
            }
        }
    }

    /// `[R][G][D]`
    pub fn embed(&self, cells: &Rows, targets: &Targets) -> Vec<Rows> {
        let f = cells[0].len();
        let gs = self.cfg.feature_group_size;
        let g_count = f.div_ceil(gs);
        let d = self.cfg.embed_dim;
        let w = self.get("embed.cell_w");
        let b = self.get("embed.cell_b");
        cells
            .iter()
            .enumerate()
            .map(|(r, row)| {
                (0..g_count)
                    .map(|g| {
                        let mut inp = Vec::new();
                        for j in 0..gs {
                            let x = row[(g * gs + j) % f];
                            if x.is_finite() {
                                inp.extend([x, 0.0]);
                            } else {
                                inp.extend([0.0, 1.0]);
                            }
                        }
                        let mut out: Vec<f64> =
                            (0..d).map(|o| b[o] + (0..inp.len()).map(|i| inp[i] * w[i * d + o]).sum::<f64>()).collect();
                        if r < targets.len() {
                            let t = self.target_term("embed.label_col", "embed.target_w", "embed.target_b", targets, r);
                            for (o, tv) in out.iter_mut().zip(t) {
                                *o += tv;
                            }
                        }
                        out
                    })
                    .collect()
            })
            .collect()
    }

    /// Returns updated cells and `inducing[b][g]` as `[K][D]`.
    pub fn stage1(&self, mut cells: Vec<Rows>, n_train: usize) -> (Vec<Rows>, Vec<Vec<Rows>>) {
        let g_count = cells[0].len();
        let heads = self.cfg.dist_heads;
        let mut inducing = vec![Vec::new(); self.cfg.dist_blocks];
        for g in 0..g_count {
            let mut x: Rows = cells.iter().map(|r| r[g].clone()).collect();
            for (b, ind_out) in inducing.iter_mut().enumerate() {
                let pre = format!("stage1.{b}");
                let k = self.dims(&format!("{pre}.inducing"))[0];
                let d = self.cfg.embed_dim;
                let src = self.get(&format!("{pre}.inducing"));
                let mut ind: Rows = (0..k).map(|i| src[i * d..(i + 1) * d].to_vec()).collect();
                self.cross(&format!("{pre}.gather"), &mut ind, &x[..n_train], heads);
                self.ff(&format!("{pre}.gather_ff"), &mut ind);
                self.cross(&format!("{pre}.broadcast"), &mut x, &ind, heads);
                self.ff(&format!("{pre}.broadcast_ff"), &mut x);
                ind_out.push(ind);
            }
            for (row, xr) in cells.iter_mut().zip(x) {
                row[g] = xr;
            }
        }
        (cells, inducing)
    }

    fn rope(&self, x: &mut [f64], pos: f64) {
        let d = x.len();
        for i in 0..d / 2 {
            let th = pos * self.cfg.rope_base.powf(-((2 * i) as f64) / d as f64);
            let (a, b) = (x[2 * i], x[2 * i + 1]);
            x[2 * i] = a * th.cos() - b * th.sin();
            x[2 * i + 1] = a * th.sin() + b * th.cos();
        }
    }

    /// `[R][E]`
    pub fn stage2(&self, cells: &[Rows]) -> Rows {
        let d = self.cfg.embed_dim;
        let n_cls = self.cfg.n_cls_tokens;
        let heads = self.cfg.agg_heads;
        let dh = d / heads;
        let cls = self.get("stage2.cls");
        cells
            .iter()
            .map(|row| {
                let mut seq: Rows = (0..n_cls).map(|i| cls[i * d..(i + 1) * d].to_vec()).collect();
                seq.extend(row.iter().cloned());
                for b in 0..self.cfg.agg_blocks {
                    let pre = format!("stage2.blocks.{b}");
                    let n = self.rms(&seq, &format!("{pre}.attn.norm"));
                    let mut q = self.lin(&n, &format!("{pre}.attn.wq"), None);
                    let mut k = self.lin(&n, &format!("{pre}.attn.wk"), None);
                    let v = self.lin(&n, &format!("{pre}.attn.wv"), None);
                    for (t, (qr, kr)) in q.iter_mut().zip(k.iter_mut()).enumerate() {
                        for h in 0..heads {
                            self.rope(&mut qr[h * dh..(h + 1) * dh], t as f64);
                            self.rope(&mut kr[h * dh..(h + 1) * dh], t as f64);
                        }
                    }
                    let o = self.attend(&q, &k, &v, heads, heads, dh, None);
                    let o = self.lin(&o, &format!("{pre}.attn.wo"), None);
                    Self::add(&mut seq, &o);
                    self.ff(&format!("{pre}.ff"), &mut seq);
                }
                let normed = self.rms(&seq[..n_cls], "stage2.final_norm");
                normed.concat()
            })
            .collect()
    }

    /// Final embeddings `[R][E]`.
    pub fn stage3(&self, rows: &Rows, targets: &Targets) -> Rows {
        let n_train = targets.len();
        let heads = self.cfg.icl_heads;
        let dh = self.cfg.icl_head_dim();
        let mut train: Rows = rows[..n_train].to_vec();
        let mut test: Rows = rows[n_train..].to_vec();
        for (r, row) in train.iter_mut().enumerate() {
            let t = self.target_term("stage3.label_icl", "stage3.target_w", "stage3.target_b", targets, r);
            for (a, b) in row.iter_mut().zip(t) {
                *a += b;
            }
        }
        for l in 0..self.cfg.icl_layers {
            let pre = format!("stage3.layers.{l}");
            let scale = format!("{pre}.scale");
            let nt = self.rms(&train, &format!("{pre}.norm"));
            let q = self.lin(&nt, &format!("{pre}.wq"), None);
            let k = self.lin(&nt, &format!("{pre}.wk"), None);
            let v = self.lin(&nt, &format!("{pre}.wv"), None);
            let o = self.attend(&q, &k, &v, heads, self.cfg.icl_kv_heads_train, dh, Some(&scale));
            let o_train = self.lin(&o, &format!("{pre}.wo"), None);
            let (kt, vt, kvh) = if self.has(&format!("{pre}.wk_test")) {
                (
                    self.lin(&nt, &format!("{pre}.wk_test"), None),
                    self.lin(&nt, &format!("{pre}.wv_test"), None),
                    1,
                )
            } else {
                (k, v, self.cfg.icl_kv_heads_train)
            };
            if !test.is_empty() {
                let ns = self.rms(&test, &format!("{pre}.norm"));
                let qs = self.lin(&ns, &format!("{pre}.wq"), None);
                let os = self.attend(&qs, &kt, &vt, heads, kvh, dh, Some(&scale));
                let os = self.lin(&os, &format!("{pre}.wo"), None);
                Self::add(&mut test, &os);
                self.ff(&format!("{pre}.ff"), &mut test);
            }
            Self::add(&mut train, &o_train);
            self.ff(&format!("{pre}.ff"), &mut train);
        }
        train.extend(test);
        self.rms(&train, "stage3.final_norm")
    }

    /// Decoder probabilities; `qass` selects QASSMax over a plain softmax.
    pub fn decode(&self, train: &Rows, onehot: &Rows, test: &Rows, qass: bool) -> Rows {
        let heads = self.cfg.decoder_heads;
        let dh = self.cfg.decoder_head_dim;
        let q = self.lin(test, "decoder.wq", None);
        let k = self.lin(train, "decoder.wk", None);
        let n = train.len();
        let c = onehot[0].len();
        q.iter()
            .map(|qr| {
                let mut p = vec![0.0; c];
                for h in 0..heads {
                    let qh = &qr[h * dh..(h + 1) * dh];
                    let mut factor = 1.0 / (dh as f64).sqrt();
                    if qass {
                        factor *= self.scale("decoder.scale", qh) * (n as f64).ln();
                    }
                    let mut s: Vec<f64> = (0..n)
                        .map(|j| (0..dh).map(|d| qh[d] * k[j][h * dh + d]).sum::<f64>() * factor)
                        .collect();
                    softmax(&mut s);
                    for j in 0..n {
                        for cc in 0..c {
                            p[cc] += s[j] * onehot[j][cc] / heads as f64;
                        }
                    }
                }
                p
            })
            .collect()
    }

    pub fn regression_logits(&self, test: &Rows) -> Rows {
        let mut h = self.lin(test, "head.w1", Some("head.b1"));
        for row in h.iter_mut() {
            for v in row.iter_mut() {
                *v = gelu(*v);
            }
        }
        self.lin(&h, "head.w2", Some("head.b2"))
    }

    /// Full classification forward: probabilities for test rows.
    pub fn classify(&self, cells: &Rows, labels: &[usize], c: usize) -> Rows {
        let targets = Targets::Classes { labels: labels.to_vec(), n_classes: c };
        let n_train = labels.len();
        let e = self.embed(cells, &targets);
        let (s1, _) = self.stage1(e, n_train);
        let rows = self.stage2(&s1);
        let fin = self.stage3(&rows, &targets);
        let onehot: Rows = labels.iter().map(|&l| (0..c).map(|k| (k == l) as u8 as f64).collect()).collect();
        self.decode(&fin[..n_train].to_vec(), &onehot, &fin[n_train..].to_vec(), true)
    }
}
