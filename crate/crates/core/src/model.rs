//! The full segmentation network: cascaded inference blocks, highways, the
//! vote-and-upsample decoder and the decision unit.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blocks::{Ess, Stem, Vu, VuMode};
use crate::engine::{Activation, Mode, ParamStore, RawEntry, Session, Shape, Tensor, Var};
use crate::error::{Error, Result};
use crate::gam::{gam_residual, Gam, OutMap};
use crate::io::kv::{parse_extent, KvMap};
use crate::nn::Conv2d;
use crate::scalar::Scalar;

/// Input image channels.
pub const IMAGE_CHANNELS: usize = 3;
/// Bottleneck count of each decoder dense stack.
pub const DECODER_ESS: usize = 3;
/// Name of the container entry holding the model configuration text.
pub const CONFIG_ENTRY: &str = "__config__";

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub scales: usize,
    pub k: usize,
    /// Bottleneck expansion: the 1×1 conv widens to `expansion·k` channels.
    pub expansion: usize,
    pub ess_sizes: Vec<usize>,
    /// Highway indices in `1..scales` cut from the decoder.
    pub blocked_highways: BTreeSet<usize>,
    pub with_du: bool,
    /// Dense stacks after the two finest decoder stages.
    pub decoder_ess: bool,
    pub num_classes: usize,
    /// `(H, W)`; any positive extents, odd ones round up at each stride-2 stem.
    pub input_size: (usize, usize),
    pub vu_mode: VuMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            scales: 5,
            k: 15,
            expansion: DEFAULT_EXPANSION,
            ess_sizes: vec![3, 3, 6, 12, 24],
            blocked_highways: BTreeSet::new(),
            with_du: true,
            decoder_ess: true,
            num_classes: 3,
            input_size: (480, 640),
            vu_mode: VuMode::Nearest,
        }
    }
}

/// Gives the default network about 3.4M trainable parameters.
pub const DEFAULT_EXPANSION: usize = 10;

impl ModelConfig {
    /// Blocks the `m` deepest highways.
    pub fn blocked_last(mut self, m: usize) -> Self {
        self.blocked_highways = blocked_preset(self.scales, m);
        self
    }

    /// Every violated constraint in one error.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.scales == 0 {
            bad.push("scales must be at least 1".to_string());
        }
        if self.k == 0 {
            bad.push("k must be at least 1".to_string());
        }
        if self.expansion == 0 {
            bad.push("expansion must be at least 1".to_string());
        }
        if self.num_classes == 0 {
            bad.push("num_classes must be at least 1".to_string());
        }
        if self.ess_sizes.len() != self.scales {
            bad.push(format!(
                "ess_sizes has {} entries for {} scales",
                self.ess_sizes.len(),
                self.scales
            ));
        }
        let (h, w) = self.input_size;
        if h == 0 || w == 0 {
            bad.push(format!("input size {h}x{w} is empty"));
        }
        for &b in &self.blocked_highways {
            if b == 0 || b >= self.scales {
                bad.push(format!("blocked highway {b} outside 1..{}", self.scales.saturating_sub(1)));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid model config: {}", bad.join("; "))))
        }
    }

    /// Spatial extent after `level` stride-2 stems; odd extents round up.
    pub fn extent_at(&self, level: usize) -> (usize, usize) {
        let halve = |mut v: usize| {
            for _ in 0..level {
                v = v.div_ceil(2);
            }
            v
        };
        (halve(self.input_size.0), halve(self.input_size.1))
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::default();
        let list = |v: &mut dyn Iterator<Item = usize>| {
            v.map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
        };
        kv.insert("scales", self.scales);
        kv.insert("k", self.k);
        kv.insert("expansion", self.expansion);
        kv.insert("ess_sizes", list(&mut self.ess_sizes.iter().copied()));
        kv.insert("blocked_highways", list(&mut self.blocked_highways.iter().copied()));
        kv.insert("with_du", self.with_du);
        kv.insert("decoder_ess", self.decoder_ess);
        kv.insert("num_classes", self.num_classes);
        kv.insert("input_size", format!("{}x{}", self.input_size.0, self.input_size.1));
        kv.insert(
            "vu_mode",
            match self.vu_mode {
                VuMode::Nearest => "nearest",
                VuMode::Deconv => "deconv",
            },
        );
        kv
    }

    /// Reads keys from `kv` over the defaults; `blocked_last = m` is accepted
    /// as a preset. Unknown keys are left for the caller to reject.
    pub fn from_kv(kv: &mut KvMap) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        if let Some(v) = kv.take("scales")? {
            cfg.scales = v;
        }
        if let Some(v) = kv.take("k")? {
            cfg.k = v;
        }
        if let Some(v) = kv.take("expansion")? {
            cfg.expansion = v;
        }
        match kv.take_list("ess_sizes")? {
            Some(v) => cfg.ess_sizes = v,
            None if cfg.scales != 5 => {
                return Err(Error::Config("ess_sizes is required when scales differs from 5".into()))
            }
            None => {}
        }
        if let Some(v) = kv.take_list::<usize>("blocked_highways")? {
            cfg.blocked_highways = v.into_iter().collect();
        }
        if let Some(m) = kv.take::<usize>("blocked_last")? {
            if !cfg.blocked_highways.is_empty() {
                return Err(Error::Config("give blocked_highways or blocked_last, not both".into()));
            }
            cfg.blocked_highways = blocked_preset(cfg.scales, m);
        }
        if let Some(v) = kv.take("with_du")? {
            cfg.with_du = v;
        }
        if let Some(v) = kv.take("decoder_ess")? {
            cfg.decoder_ess = v;
        }
        if let Some(v) = kv.take("num_classes")? {
            cfg.num_classes = v;
        }
        if let Some(v) = kv.take_str("input_size") {
            cfg.input_size = parse_extent(&v)?;
        }
        if let Some(v) = kv.take_str("vu_mode") {
            cfg.vu_mode = match v.as_str() {
                "nearest" => VuMode::Nearest,
                "deconv" => VuMode::Deconv,
                other => return Err(Error::Config(format!("vu_mode must be nearest or deconv, got {other}"))),
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Highways `scales-m .. scales-1`, i.e. the `m` deepest.
pub fn blocked_preset(scales: usize, m: usize) -> BTreeSet<usize> {
    let top = scales.saturating_sub(1);
    (top.saturating_sub(m) + 1..=top).collect()
}

#[derive(Clone, Debug, PartialEq)]
struct InferenceBlock {
    name: String,
    stem: Stem,
    ess: Ess,
    gam: Gam,
    squeeze: Conv2d,
}

#[derive(Clone, Debug, PartialEq)]
struct DecoderStage {
    /// Highway index merged at this stage; output is one level finer.
    index: usize,
    highway: bool,
    vu: Vu,
    ess: Option<Ess>,
}

#[derive(Clone, Debug, PartialEq)]
enum Head {
    Decision { head: Conv2d, gam: Gam },
    Plain { head: Conv2d },
}

/// Layer layout derived from a [`ModelConfig`]; holds no values.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    config: ModelConfig,
    ibs: Vec<InferenceBlock>,
    stages: Vec<DecoderStage>,
    squeeze: Option<Conv2d>,
    head: Head,
}

impl Network {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let k = config.k;
        let s = config.expansion;
        let n = config.scales;
        let mut ibs = Vec::with_capacity(n);
        for i in 1..=n {
            let name = format!("ib{i}");
            let ess = Ess::new(format!("{name}.ess"), config.ess_sizes[i - 1], k, s);
            let (h, w) = config.extent_at(i);
            let c = ess.out_channels();
            ibs.push(InferenceBlock {
                stem: Stem {
                    prefix: format!("{name}.stem"),
                    c_in: if i == 1 { IMAGE_CHANNELS } else { k },
                    k,
                },
                gam: Gam::new(format!("{name}.gam"), h, w, c, OutMap::Sigmoid),
                squeeze: Conv2d::new(format!("{name}.squeeze"), c, k, 1).with_bias(),
                ess,
                name,
            });
        }
        let mut stages = Vec::new();
        let mut trunk = k;
        for i in (1..n).rev() {
            let highway = !config.blocked_highways.contains(&i);
            let vu = Vu {
                prefix: format!("vu{i}"),
                c_in: trunk + if highway { k } else { 0 },
                k,
                mode: config.vu_mode,
            };
            let ess = (config.decoder_ess && i <= 2).then(|| Ess::new(format!("dec{i}.ess"), DECODER_ESS, k, s));
            trunk = ess.as_ref().map_or(k, Ess::out_channels);
            stages.push(DecoderStage {
                index: i,
                highway,
                vu,
                ess,
            });
        }
        let squeeze = (trunk != k).then(|| Conv2d::new("dec.squeeze", trunk, k, 1).with_bias());
        let (h, w) = config.input_size;
        let head = if config.with_du {
            Head::Decision {
                head: Conv2d::new("du.head", k + IMAGE_CHANNELS, config.num_classes, 1).with_bias(),
                gam: Gam::new("du.gam", h, w, config.num_classes, OutMap::SoftmaxChannels),
            }
        } else {
            Head::Plain {
                head: Conv2d::new("head", k, config.num_classes, 1).with_bias(),
            }
        };
        Ok(Network {
            config,
            ibs,
            stages,
            squeeze,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Top-level module names in forward order; parameters of module `m` are
    /// named `m.<...>`.
    pub fn module_names(&self) -> Vec<String> {
        let mut out: Vec<String> = self.ibs.iter().map(|ib| ib.name.clone()).collect();
        for st in &self.stages {
            out.push(st.vu.prefix.clone());
            if st.ess.is_some() {
                out.push(format!("dec{}", st.index));
            }
        }
        if self.squeeze.is_some() {
            out.push("dec".into());
        }
        out.push(match self.head {
            Head::Decision { .. } => "du".into(),
            Head::Plain { .. } => "head".into(),
        });
        out
    }

    /// Every GAM with its name prefix.
    pub fn gams(&self) -> Vec<&Gam> {
        let mut out: Vec<&Gam> = self.ibs.iter().map(|ib| &ib.gam).collect();
        if let Head::Decision { gam, .. } = &self.head {
            out.push(gam);
        }
        out
    }

    pub fn init<T: Scalar>(&self, store: &mut ParamStore<T>, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for ib in &self.ibs {
            ib.stem.init(store, &mut rng)?;
            ib.ess.init(store, &mut rng)?;
            ib.gam.init(store, &mut rng)?;
            ib.squeeze.init(store, &mut rng)?;
        }
        for st in &self.stages {
            st.vu.init(store, &mut rng)?;
            if let Some(ess) = &st.ess {
                ess.init(store, &mut rng)?;
            }
        }
        if let Some(sq) = &self.squeeze {
            sq.init(store, &mut rng)?;
        }
        match &self.head {
            Head::Decision { head, gam } => {
                head.init(store, &mut rng)?;
                gam.init(store, &mut rng)?;
            }
            Head::Plain { head } => head.init(store, &mut rng)?,
        }
        Ok(())
    }

    /// Expected input shape for a batch of `n`.
    pub fn input_shape(&self, n: usize) -> Shape {
        let (h, w) = self.config.input_size;
        Shape::new(n, IMAGE_CHANNELS, h, w)
    }

    /// Records the forward pass on `sess`; returns per-pixel class probabilities.
    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, image: Var) -> Result<Var> {
        let s = sess.tape().shape(image);
        let want = self.input_shape(s.n);
        if s != want || s.n == 0 {
            return Err(Error::shape(
                "forward",
                format!(
                    "expected N×{}×{}×{} image, got {s}",
                    IMAGE_CHANNELS, want.h, want.w
                ),
            ));
        }
        let mut highways = Vec::with_capacity(self.ibs.len());
        let mut cur = image;
        for ib in &self.ibs {
            cur = sess.scoped(&ib.name, |sess| {
                let x = sess.scoped("stem", |sess| ib.stem.forward(sess, cur))?;
                let e = sess.scoped("ess", |sess| ib.ess.forward(sess, x))?;
                let g = sess.scoped("gam", |sess| {
                    let (lambda, _) = ib.gam.forward(sess, e)?;
                    gam_residual(sess, e, lambda)
                })?;
                sess.scoped("squeeze", |sess| ib.squeeze.forward(sess, g))
            })?;
            highways.push(cur);
        }
        let cfg = &self.config;
        let (h, w) = cfg.extent_at(cfg.scales - 1);
        let up = sess.tape_mut().upsample_nearest2x(cur)?;
        let mut trunk = sess.tape_mut().crop(up, h, w)?;
        for st in &self.stages {
            let hw = st.highway.then(|| highways[st.index - 1]);
            let (h, w) = cfg.extent_at(st.index - 1);
            trunk = sess.scoped(&st.vu.prefix, |sess| {
                let up = st.vu.forward(sess, trunk, hw)?;
                sess.tape_mut().crop(up, h, w)
            })?;
            if let Some(ess) = &st.ess {
                trunk = sess.scoped(&format!("dec{}", st.index), |sess| ess.forward(sess, trunk))?;
            }
        }
        if let Some(sq) = &self.squeeze {
            trunk = sess.scoped("dec", |sess| sq.forward(sess, trunk))?;
        }
        match &self.head {
            Head::Decision { head, gam } => sess.scoped("du", |sess| {
                let joined = sess.tape_mut().concat_channels(&[trunk, image])?;
                let logits = head.forward(sess, joined)?;
                let (lambda, _) = gam.forward(sess, logits)?;
                Ok(lambda)
            }),
            Head::Plain { head } => sess.scoped("head", |sess| {
                let logits = head.forward(sess, trunk)?;
                sess.tape_mut().activation(logits, Activation::SoftmaxChannels)
            }),
        }
    }
}

/// Per-module cost at the configured input size, batch 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModuleCost {
    pub name: String,
    pub params: usize,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GamCost {
    pub name: String,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    /// Enumerated depth-wise kernel scalars.
    pub depthwise: usize,
    /// Enumerated scalars including fuse conv and batch norm.
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Profile {
    pub params: usize,
    pub flops: u64,
    pub modules: Vec<ModuleCost>,
    pub gams: Vec<GamCost>,
}

/// A network layout plus its parameter values.
#[derive(Clone, Debug)]
pub struct RganetModel<T> {
    pub net: Network,
    pub params: ParamStore<T>,
}

/// Builds and initializes a model; identical seeds give bit-identical parameters.
pub fn build_model<T: Scalar>(config: ModelConfig, seed: u64) -> Result<RganetModel<T>> {
    let net = Network::new(config)?;
    let mut params = ParamStore::new();
    net.init(&mut params, seed)?;
    Ok(RganetModel { net, params })
}

impl<T: Scalar> RganetModel<T> {
    pub fn config(&self) -> &ModelConfig {
        self.net.config()
    }

    /// Class probabilities for a batch of images.
    pub fn forward(&mut self, images: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut sess = Session::new(&mut self.params, mode);
        let x = sess.input(images.clone());
        let y = self.net.forward(&mut sess, x)?;
        Ok(sess.into_tape().value_owned(y))
    }

    pub fn count_params_flops(&self) -> Result<Profile> {
        let mut scratch = self.params.clone();
        let mut sess = Session::dry(&mut scratch, Mode::Eval);
        let x = sess.tape_mut().leaf_shape(self.net.input_shape(1));
        self.net.forward(&mut sess, x)?;
        let by_scope = sess.tape().flops_by_scope();
        let flops = sess.tape().total_flops();
        let modules = self
            .net
            .module_names()
            .into_iter()
            .map(|name| {
                let dotted = format!("{name}.");
                let f = by_scope
                    .iter()
                    .filter(|(s, _)| *s == name || s.starts_with(&dotted))
                    .map(|(_, f)| f)
                    .sum();
                ModuleCost {
                    params: self.params.count_trainable(&dotted),
                    flops: f,
                    name,
                }
            })
            .collect();
        let gams = self
            .net
            .gams()
            .into_iter()
            .map(|g| GamCost {
                name: g.prefix.clone(),
                h: g.h,
                w: g.w,
                c: g.c,
                depthwise: g
                    .depthwise_params()
                    .iter()
                    .map(|(n, _)| self.params.get(n).map(|e| e.numel()).unwrap_or(0))
                    .sum(),
                total: self.params.count_trainable(&format!("{}.", g.prefix)),
            })
            .collect();
        Ok(Profile {
            params: self.params.count_trainable(""),
            flops,
            modules,
            gams,
        })
    }

    pub fn cast<U: Scalar>(&self) -> RganetModel<U> {
        RganetModel {
            net: self.net.clone(),
            params: self.params.cast(),
        }
    }

    /// Parameters plus the configuration text in one container file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let header = RawEntry::from_text(CONFIG_ENTRY, &self.config().to_kv().to_text());
        self.params
            .write_to(&mut out, &[header])
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let (stored, raw) = ParamStore::<T>::read_from(&mut BufReader::new(file), &[CONFIG_ENTRY])?;
        let header = raw
            .first()
            .ok_or_else(|| Error::Format(format!("{}: checkpoint has no {CONFIG_ENTRY} entry", path.display())))?;
        let mut kv = KvMap::parse(&header.to_text()?)?;
        let config = ModelConfig::from_kv(&mut kv)?;
        kv.finish("checkpoint config")?;
        let mut model = build_model::<T>(config, 0)?;
        model.params.assign_from(&stored)?;
        Ok(model)
    }
}
