//! The visual kinematics transformer and its action heads.
//!
//! Tokens of all views in a batch are laid out as groups `g = b * V + v`.
//! Each group carries a query block (`TEXT_LEN` instruction tokens followed
//! by `T` kinematics tokens) and a vision block (one token per patch).

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use vkchain_core::{seed, PointSet, RasterImage};
use vkchain_tensor::{Float, ParamId, ParamStore, Tape, Tensor, Var};

use crate::config::{Mode, VktConfig, FFN_MULT, TEXT_LEN};
use crate::loss::from_target_space;
use crate::ModelError;

pub const LN_EPS: f64 = 1e-5;
const EMBED_STD: f64 = 0.02;
pub const ACTION_KERNEL: usize = 3;

#[derive(Debug, Clone, Copy)]
struct Lin {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    g: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Sublayer {
    ln: Norm,
    /// Separate normalization of the key/value stream for cross-attention.
    ln_kv: Option<Norm>,
    q: Lin,
    k: Lin,
    v: Lin,
    o: Lin,
    ffn_ln: Norm,
    fc1: Lin,
    fc2: Lin,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    self_q: Sublayer,
    cross_qv: Sublayer,
    mv_q: Option<Sublayer>,
    mv_v: Option<Sublayer>,
    cross_vq: Option<Sublayer>,
}

#[derive(Debug, Clone)]
struct Layout {
    patch: Lin,
    pos: ParamId,
    text: ParamId,
    kin: ParamId,
    blocks: Vec<Block>,
    final_ln: Norm,
    point_head: Option<(Lin, Lin)>,
    action_heads: BTreeMap<String, (Lin, usize)>,
}

struct Builder<'a, F: Float> {
    store: &'a mut ParamStore<F>,
    rng: ChaCha8Rng,
}

impl<F: Float> Builder<'_, F> {
    fn add(&mut self, name: String, shape: &[usize], data: Vec<f64>) -> ParamId {
        self.store.add(name, Tensor::from_f64(shape, &data).expect("param shape")).expect("unique param name")
    }

    fn zeros(&mut self, name: String, shape: &[usize]) -> ParamId {
        let n = shape.iter().product();
        self.add(name, shape, vec![0.0; n])
    }

    fn normal(&mut self, name: String, shape: &[usize], std: f64) -> ParamId {
        let dist = Normal::new(0.0, std).expect("positive std");
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        self.add(name, shape, data)
    }

    /// Weights from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero bias.
    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Lin {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| self.rng.random_range(-bound..bound)).collect();
        let w = self.add(format!("{name}.w"), &[fan_in, fan_out], data);
        let b = self.zeros(format!("{name}.b"), &[fan_out]);
        Lin { w, b }
    }

    fn norm(&mut self, name: &str, d: usize) -> Norm {
        let g = self.add(format!("{name}.g"), &[d], vec![1.0; d]);
        let b = self.zeros(format!("{name}.b"), &[d]);
        Norm { g, b }
    }

    fn sublayer(&mut self, name: &str, d: usize, cross: bool) -> Sublayer {
        Sublayer {
            ln: self.norm(&format!("{name}.ln"), d),
            ln_kv: cross.then(|| self.norm(&format!("{name}.ln_kv"), d)),
            q: self.linear(&format!("{name}.attn.q"), d, d),
            k: self.linear(&format!("{name}.attn.k"), d, d),
            v: self.linear(&format!("{name}.attn.v"), d, d),
            o: self.linear(&format!("{name}.attn.o"), d, d),
            ffn_ln: self.norm(&format!("{name}.ffn.ln"), d),
            fc1: self.linear(&format!("{name}.ffn.fc1"), d, FFN_MULT * d),
            fc2: self.linear(&format!("{name}.ffn.fc2"), FFN_MULT * d, d),
        }
    }
}

pub const BACKBONE: &str = "backbone.";
pub const POINT_HEAD: &str = "point_head.";
pub const ACTION_HEAD: &str = "action_head.";

/// One sample: an instruction and one image per view.
#[derive(Debug, Clone)]
pub struct Observation<'a> {
    pub instruction_id: usize,
    pub views: Vec<&'a RasterImage>,
}

/// Tape handles produced by a forward pass over a batch of `batch` samples with `views` views each.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub batch: usize,
    pub views: usize,
    /// `[B * V, T, D]` kinematics-token outputs after the final norm.
    pub kinematics: Var,
    /// `[B * V, T, N_points * 2]` sigmoid outputs, present when the model has a point head.
    pub points: Option<Var>,
}

/// Forecast for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastOutput {
    /// `[V][T]` point sets in the sigmoid output space `[0, 1]^2`.
    pub point_sets: Vec<Vec<PointSet>>,
    /// `[V, T, D]` kinematics-token embeddings.
    pub kinematics_embeddings: Tensor<f64>,
}

impl ForecastOutput {
    /// Point sets in image-normalized coordinates (`pixel / image size`).
    pub fn image_points(&self) -> Vec<Vec<PointSet>> {
        self.point_sets
            .iter()
            .map(|v| v.iter().map(|s| PointSet::new(s.points.iter().map(|p| [from_target_space(p[0]), from_target_space(p[1])]).collect())).collect())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Vkt<F: Float> {
    pub config: VktConfig,
    pub params: ParamStore<F>,
    layout: Layout,
}

impl<F: Float> Vkt<F> {
    /// A forecasting model: backbone plus point head.
    pub fn new(config: VktConfig, seed: u64) -> Result<Self, ModelError> {
        Self::build(config, seed, true)
    }

    /// The behavior-cloning baseline: the same backbone, no point head.
    pub fn new_bct(config: VktConfig, seed: u64, envs: &[(&str, usize)]) -> Result<Self, ModelError> {
        let mut m = Self::build(config, seed, false)?;
        for &(env, dim) in envs {
            m.register_head(env, dim)?;
        }
        Ok(m)
    }

    fn build(config: VktConfig, seed_value: u64, point_head: bool) -> Result<Self, ModelError> {
        config.validate()?;
        let c = &config;
        let mut params = ParamStore::new();
        let mut b = Builder { store: &mut params, rng: seed::rng(seed_value, "init", 0) };
        let d = c.D;
        let patch = b.linear("backbone.embed.patch", c.patch_dim(), d);
        let pos = b.normal("backbone.embed.pos".into(), &[c.n_patches(), d], EMBED_STD);
        let text = b.normal("backbone.embed.text".into(), &[c.vocab, d], EMBED_STD);
        let kin = b.normal("backbone.embed.kinematics".into(), &[c.T, d], EMBED_STD);
        let mut blocks = Vec::with_capacity(c.L);
        for l in 0..c.L {
            let name = |s: &str| format!("backbone.block{l}.{s}");
            // vision tokens leaving the last block are never read, so it has no vision updates
            let last = l + 1 == c.L;
            blocks.push(Block {
                self_q: b.sublayer(&name("self_q"), d, false),
                cross_qv: b.sublayer(&name("cross_qv"), d, true),
                mv_q: c.multi_view.then(|| b.sublayer(&name("mv_q"), d, false)),
                mv_v: (c.multi_view && !last).then(|| b.sublayer(&name("mv_v"), d, false)),
                cross_vq: (!last).then(|| b.sublayer(&name("cross_vq"), d, true)),
            });
        }
        let final_ln = b.norm("backbone.final_ln", d);
        let point_head = point_head.then(|| (b.linear("point_head.fc1", d, d), b.linear("point_head.fc2", d, c.N_points * 2)));
        let layout = Layout { patch, pos, text, kin, blocks, final_ln, point_head, action_heads: BTreeMap::new() };
        Ok(Vkt { config, params, layout })
    }

    /// Adds a zero-initialized 1D-convolution head mapping `D` channels to `action_dim`.
    pub fn register_head(&mut self, env: &str, action_dim: usize) -> Result<(), ModelError> {
        if self.layout.action_heads.contains_key(env) {
            return Err(ModelError::Config(format!("head {env} already registered")));
        }
        let d = self.config.D;
        let w = self.params.add(format!("action_head.{env}.w"), Tensor::zeros(&[ACTION_KERNEL, d, action_dim]))?;
        let b = self.params.add(format!("action_head.{env}.b"), Tensor::zeros(&[action_dim]))?;
        self.layout.action_heads.insert(env.to_string(), (Lin { w, b }, action_dim));
        Ok(())
    }

    pub fn heads(&self) -> impl Iterator<Item = (&str, usize)> {
        self.layout.action_heads.iter().map(|(k, (_, d))| (k.as_str(), *d))
    }

    pub fn has_point_head(&self) -> bool {
        self.layout.point_head.is_some()
    }

    /// Rebuilds the layout for `config` and takes every value from `store`.
    pub fn from_params(config: VktConfig, store: ParamStore<F>) -> Result<Self, ModelError> {
        let point_head = store.id("point_head.fc1.w").is_some();
        let mut m = Self::build(config, 0, point_head)?;
        let mut heads: Vec<(String, usize)> = Vec::new();
        for (_, p) in store.iter() {
            if let Some(env) = p.name.strip_prefix(ACTION_HEAD).and_then(|s| s.strip_suffix(".b")) {
                heads.push((env.to_string(), p.tensor.numel()));
            }
        }
        for (env, dim) in heads {
            m.register_head(&env, dim)?;
        }
        if m.params.len() != store.len() {
            return Err(ModelError::Config(format!("checkpoint has {} params, config expects {}", store.len(), m.params.len())));
        }
        let matched = m.params.load_from(&store)?;
        if matched != store.len() {
            return Err(ModelError::Config(format!("only {matched} of {} checkpoint params match the config", store.len())));
        }
        Ok(m)
    }

    /// Patch pixels as `[G, n_patches, patch_dim]`, scaled to `[-0.5, 0.5]`.
    fn patches(&self, obs: &[Observation]) -> Result<Tensor<F>, ModelError> {
        let c = &self.config;
        let (s, p) = (c.image_size, c.patch_size);
        let per_side = s / p;
        let mut data = Vec::with_capacity(obs.len() * obs[0].views.len() * c.n_patches() * c.patch_dim());
        for o in obs {
            for img in &o.views {
                if img.width as usize != s || img.height as usize != s {
                    return Err(ModelError::Input(format!("image {}x{} but config expects {s}x{s}", img.width, img.height)));
                }
                for py in 0..per_side {
                    for px in 0..per_side {
                        for y in py * p..(py + 1) * p {
                            let row = (y * s + px * p) * 3;
                            for &v in &img.data[row..row + p * 3] {
                                data.push(F::lit(f64::from(v) / 255.0 - 0.5));
                            }
                        }
                    }
                }
            }
        }
        let g = data.len() / (c.n_patches() * c.patch_dim());
        Ok(Tensor::new(&[g, c.n_patches(), c.patch_dim()], data)?)
    }

    fn check_obs(&self, obs: &[Observation]) -> Result<usize, ModelError> {
        let first = obs.first().ok_or_else(|| ModelError::Input("empty batch".into()))?;
        let v = first.views.len();
        if v == 0 || v > self.config.V_max {
            return Err(ModelError::Input(format!("{v} views, supported 1..={}", self.config.V_max)));
        }
        for o in obs {
            if o.views.len() != v {
                return Err(ModelError::Input(format!("mixed view counts {v} and {}", o.views.len())));
            }
            if o.instruction_id >= self.config.vocab {
                return Err(ModelError::Input(format!("instruction {} outside vocab {}", o.instruction_id, self.config.vocab)));
            }
        }
        Ok(v)
    }

    /// Embeds a batch into `(query [G, TEXT_LEN + T, D], vision [G, P, D])`.
    pub fn encode_inputs(&self, t: &mut Tape<F>, obs: &[Observation]) -> Result<(Var, Var), ModelError> {
        let views = self.check_obs(obs)?;
        let c = &self.config;
        let g = obs.len() * views;
        let lay = &self.layout;
        let patches = t.constant(self.patches(obs)?);
        let vision = self.lin(t, lay.patch, patches)?;
        let pos = t.param(&self.params, lay.pos);
        let vision = t.add(vision, pos)?;

        let text = t.param(&self.params, lay.text);
        let ids: Vec<usize> = obs.iter().flat_map(|o| std::iter::repeat_n(o.instruction_id, views)).collect();
        let text = t.gather_rows(text, &ids)?;
        let text = t.reshape(text, &[g, TEXT_LEN, c.D])?;
        let kin = t.param(&self.params, lay.kin);
        let kin = t.reshape(kin, &[1, c.T, c.D])?;
        let kin = t.gather_rows(kin, &vec![0; g])?;
        let query = t.concat(&[text, kin], 1)?;
        Ok((query, vision))
    }

    fn lin(&self, t: &mut Tape<F>, l: Lin, x: Var) -> Result<Var, ModelError> {
        let w = t.param(&self.params, l.w);
        let b = t.param(&self.params, l.b);
        Ok(t.linear(x, w, Some(b))?)
    }

    fn norm(&self, t: &mut Tape<F>, n: Norm, x: Var) -> Result<Var, ModelError> {
        let g = t.param(&self.params, n.g);
        let b = t.param(&self.params, n.b);
        Ok(t.layer_norm(x, g, b, F::lit(LN_EPS))?)
    }

    /// `x + attn(norm(x), ctx)` followed by `x + ffn(norm(x))`.
    ///
    /// `ctx` maps the normalized queries to the key/value tokens.
    fn sublayer(&self, t: &mut Tape<F>, s: Sublayer, x: Var, ctx: impl FnOnce(&mut Tape<F>, Var) -> Result<Var, ModelError>) -> Result<Var, ModelError> {
        let h = self.norm(t, s.ln, x)?;
        let kv = ctx(t, h)?;
        let q = self.lin(t, s.q, h)?;
        let k = self.lin(t, s.k, kv)?;
        let v = self.lin(t, s.v, kv)?;
        let a = t.attention(q, k, v, self.config.n_heads)?;
        let a = self.lin(t, s.o, a)?;
        let x = t.add(x, a)?;
        let h = self.norm(t, s.ffn_ln, x)?;
        let h = self.lin(t, s.fc1, h)?;
        let h = t.gelu(h);
        let h = self.lin(t, s.fc2, h)?;
        Ok(t.add(x, h)?)
    }

    fn cross(&self, t: &mut Tape<F>, s: Sublayer, x: Var, other: Var) -> Result<Var, ModelError> {
        let ln_kv = s.ln_kv.expect("cross sub-layer has a key/value norm");
        self.sublayer(t, s, x, |t, _| self.norm(t, ln_kv, other))
    }

    /// Each view attends to the concatenated tokens of the other views of its sample.
    fn multi_view(&self, t: &mut Tape<F>, s: Sublayer, x: Var, batch: usize, views: usize) -> Result<Var, ModelError> {
        let shape = t.shape(x).to_vec();
        let (n, d) = (shape[1], shape[2]);
        let mut idx = Vec::with_capacity(batch * views * (views - 1));
        for b in 0..batch {
            for v in 0..views {
                idx.extend((0..views).filter(|&u| u != v).map(|u| b * views + u));
            }
        }
        self.sublayer(t, s, x, |t, h| {
            let others = t.gather_rows(h, &idx)?;
            Ok(t.reshape(others, &[batch * views, (views - 1) * n, d])?)
        })
    }

    /// Runs the block stack and returns the normalized kinematics tokens `[G, T, D]`.
    pub fn backbone(&self, t: &mut Tape<F>, obs: &[Observation]) -> Result<(Var, usize), ModelError> {
        let (mut q, mut vis) = self.encode_inputs(t, obs)?;
        let views = obs[0].views.len();
        let batch = obs.len();
        for blk in &self.layout.blocks {
            q = self.sublayer(t, blk.self_q, q, |_, h| Ok(h))?;
            q = self.cross(t, blk.cross_qv, q, vis)?;
            if views > 1 {
                let q_in = q;
                if let Some(s) = blk.mv_q {
                    q = self.multi_view(t, s, q_in, batch, views)?;
                }
                if let Some(s) = blk.mv_v {
                    vis = self.multi_view(t, s, vis, batch, views)?;
                }
            }
            if let Some(s) = blk.cross_vq {
                vis = self.cross(t, s, vis, q)?;
            }
        }
        let kin = self.config.kinematics_slice();
        let k = t.slice(q, 1, kin.start, kin.end)?;
        Ok((self.norm(t, self.layout.final_ln, k)?, views))
    }

    /// Backbone plus point head (when present).
    pub fn forward(&self, t: &mut Tape<F>, obs: &[Observation]) -> Result<ForwardVars, ModelError> {
        let (kinematics, views) = self.backbone(t, obs)?;
        let points = match self.layout.point_head {
            Some((fc1, fc2)) => {
                let h = self.lin(t, fc1, kinematics)?;
                let h = t.gelu(h);
                let h = self.lin(t, fc2, h)?;
                Some(t.sigmoid(h))
            }
            None => None,
        };
        Ok(ForwardVars { batch: obs.len(), views, kinematics, points })
    }

    /// Kinematics tokens `[G, T, D]` to per-sample actions `[B, T, A]`, averaged over views.
    pub fn action_head(&self, t: &mut Tape<F>, kinematics: Var, batch: usize, views: usize, env: &str) -> Result<Var, ModelError> {
        let (lin, dim) = *self.layout.action_heads.get(env).ok_or_else(|| ModelError::UnknownEnv(env.to_string()))?;
        let w = t.param(&self.params, lin.w);
        let b = t.param(&self.params, lin.b);
        let a = t.conv1d(kinematics, w, Some(b))?;
        let a = t.reshape(a, &[batch, views, self.config.T, dim])?;
        Ok(t.mean_axis(a, 1)?)
    }

    /// Forecast for a single observation, no gradients.
    pub fn forecast(&self, obs: &Observation) -> Result<ForecastOutput, ModelError> {
        let mut t = Tape::inference();
        let out = self.forward(&mut t, std::slice::from_ref(obs))?;
        let points = out.points.ok_or_else(|| ModelError::Config("model has no point head".into()))?;
        let c = &self.config;
        let vals = t.value(points).to_f64_vec();
        let per_set = c.N_points * 2;
        let point_sets = (0..out.views)
            .map(|v| {
                (0..c.T)
                    .map(|s| {
                        let off = (v * c.T + s) * per_set;
                        PointSet::new(vals[off..off + per_set].chunks_exact(2).map(|p| [p[0], p[1]]).collect())
                    })
                    .collect()
            })
            .collect();
        let emb = t.value(out.kinematics).cast::<f64>().reshape(&[out.views, c.T, c.D])?;
        Ok(ForecastOutput { point_sets, kinematics_embeddings: emb })
    }

    /// `T` actions for a single observation, no gradients.
    pub fn act(&self, obs: &Observation, env: &str) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut t = Tape::inference();
        let out = self.forward_backbone_only(&mut t, obs)?;
        let a = self.action_head(&mut t, out.0, 1, out.1, env)?;
        let dim = t.shape(a)[2];
        Ok(t.value(a).to_f64_vec().chunks_exact(dim).map(<[f64]>::to_vec).collect())
    }

    fn forward_backbone_only(&self, t: &mut Tape<F>, obs: &Observation) -> Result<(Var, usize), ModelError> {
        self.backbone(t, std::slice::from_ref(obs))
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }
}
