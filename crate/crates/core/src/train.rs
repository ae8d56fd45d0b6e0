//! Training configuration and the epoch loop.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::augment::{self, Augment};
use crate::data::{load_dir, synth_dataset, Sample, SynthSpec};
use crate::engine::{Mode, Session, Tensor};
use crate::error::{Error, Result};
use crate::io::kv::{parse_extent, KvMap};
use crate::io::raster::LabelMap;
use crate::mask::SegMask;
use crate::metrics::{classic_metrics, confusion, Confusion};
use crate::model::{build_model, ModelConfig, RganetModel};
use crate::optim::{record_loss, AdamW, AdamWConfig, LossConfig, LossKind};
use crate::scalar::Scalar;

/// Class scored by the online metrics and by default evaluation.
pub const SUCTION_CLASS: u8 = 2;

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Dirs {
        images: PathBuf,
        masks: PathBuf,
        label_map: Option<String>,
    },
    Synth { spec: SynthSpec, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optim: AdamWConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub augment: Vec<Augment>,
    pub data: DataSource,
    /// Checkpoint period in epochs; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub positive_class: u8,
}

impl TrainConfig {
    /// Defaults around `model`, training on a four-image synthetic set.
    pub fn new(model: ModelConfig) -> Self {
        let (height, width) = model.input_size;
        TrainConfig {
            model,
            loss: LossConfig::default(),
            optim: AdamWConfig::default(),
            epochs: 100,
            batch_size: 4,
            seed: 0,
            augment: Vec::new(),
            data: DataSource::Synth {
                spec: SynthSpec {
                    height,
                    width,
                    ..SynthSpec::default()
                },
                seed: 0,
            },
            checkpoint_every: 0,
            positive_class: SUCTION_CLASS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        if self.loss.alphas.len() != self.model.num_classes {
            return Err(Error::Config(format!(
                "{} loss alphas for {} classes",
                self.loss.alphas.len(),
                self.model.num_classes
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.positive_class as usize >= self.model.num_classes {
            return Err(Error::Config(format!(
                "positive class {} outside {} classes",
                self.positive_class, self.model.num_classes
            )));
        }
        if !(self.optim.lr >= 0.0) || !(0.0..1.0).contains(&self.optim.beta1) || !(0.0..1.0).contains(&self.optim.beta2) {
            return Err(Error::Config("optimizer needs lr ≥ 0 and betas in [0, 1)".into()));
        }
        if let DataSource::Synth { spec, .. } = &self.data {
            spec.validate()?;
            if (spec.height, spec.width) != self.model.input_size {
                return Err(Error::Config(format!(
                    "synthetic images are {}x{} but the model expects {}x{}",
                    spec.height, spec.width, self.model.input_size.0, self.model.input_size.1
                )));
            }
        }
        Ok(())
    }

    /// Parses config text; relative data paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut kv = KvMap::parse(text)?;
        let mut model_kv = kv.take_section("model");
        let model = ModelConfig::from_kv(&mut model_kv)?;
        model_kv.finish("model")?;
        let mut cfg = TrainConfig::new(model);

        let mut loss = kv.take_section("loss");
        if let Some(kind) = loss.take_str("kind") {
            cfg.loss.kind = match kind.as_str() {
                "focal" => LossKind::Focal,
                "ce" => LossKind::Ce,
                other => return Err(Error::Config(format!("loss.kind must be focal or ce, got {other}"))),
            };
        }
        if let Some(v) = loss.take("gamma")? {
            cfg.loss.gamma = v;
        }
        if let Some(v) = loss.take_list("alphas")? {
            cfg.loss.alphas = v;
        }
        loss.finish("loss")?;

        let mut optim = kv.take_section("optim");
        for (key, slot) in [
            ("lr", &mut cfg.optim.lr),
            ("beta1", &mut cfg.optim.beta1),
            ("beta2", &mut cfg.optim.beta2),
            ("eps", &mut cfg.optim.eps),
            ("weight_decay", &mut cfg.optim.weight_decay),
        ] {
            if let Some(v) = optim.take(key)? {
                *slot = v;
            }
        }
        optim.finish("optim")?;

        let mut train = kv.take_section("train");
        if let Some(v) = train.take("epochs")? {
            cfg.epochs = v;
        }
        if let Some(v) = train.take("batch_size")? {
            cfg.batch_size = v;
        }
        if let Some(v) = train.take("seed")? {
            cfg.seed = v;
        }
        if let Some(v) = train.take_list("augment")? {
            cfg.augment = v;
        }
        if let Some(v) = train.take("checkpoint_every")? {
            cfg.checkpoint_every = v;
        }
        if let Some(v) = train.take("positive_class")? {
            cfg.positive_class = v;
        }
        train.finish("train")?;

        let mut data = kv.take_section("data");
        let mut synth = kv.take_section("synth");
        let images = data.take_str("images");
        let masks = data.take_str("masks");
        let label_map = data.take_str("label_map");
        data.finish("data")?;
        match (images, masks) {
            (Some(i), Some(m)) => {
                synth.finish("synth (unused with data.images)")?;
                cfg.data = DataSource::Dirs {
                    images: base.join(i),
                    masks: base.join(m),
                    label_map,
                };
            }
            (None, None) => {
                let DataSource::Synth { spec, seed } = &mut cfg.data else {
                    unreachable!("new() defaults to synthetic data")
                };
                if let Some(v) = synth.take("count")? {
                    spec.count = v;
                }
                if let Some(v) = synth.take_str("size") {
                    (spec.height, spec.width) = parse_extent(&v)?;
                }
                if let Some(v) = synth.take_list::<usize>("objects")? {
                    spec.objects = pair(&v, "synth.objects")?;
                }
                if let Some(v) = synth.take_list::<f64>("coverage")? {
                    spec.coverage = pair(&v, "synth.coverage")?;
                }
                if let Some(v) = synth.take("border")? {
                    spec.border = v;
                }
                if let Some(v) = synth.take("seed")? {
                    *seed = v;
                }
                synth.finish("synth")?;
            }
            _ => return Err(Error::Config("data.images and data.masks must be given together".into())),
        }
        kv.finish("top-level")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn load_samples<T: Scalar>(&self) -> Result<Vec<Sample<T>>> {
        let samples = match &self.data {
            DataSource::Dirs {
                images,
                masks,
                label_map,
            } => {
                let map = label_map.as_deref().map(LabelMap::parse).transpose()?;
                load_dir(images, masks, map.as_ref())?
            }
            DataSource::Synth { spec, seed } => synth_dataset(spec, *seed)?
                .iter()
                .enumerate()
                .map(|(i, s)| Sample::from_synth(format!("{i:04}"), s))
                .collect::<Result<_>>()?,
        };
        for s in &samples {
            if s.mask.extent() != self.model.input_size {
                return Err(Error::Format(format!(
                    "sample {} is {}x{}, model expects {}x{}",
                    s.name,
                    s.mask.height(),
                    s.mask.width(),
                    self.model.input_size.0,
                    self.model.input_size.1
                )));
            }
            s.mask.check_classes(self.model.num_classes)?;
        }
        Ok(samples)
    }
}

fn pair<V: Copy>(v: &[V], key: &str) -> Result<(V, V)> {
    match v {
        [a, b] => Ok((*a, *b)),
        _ => Err(Error::Config(format!("{key} needs exactly two values"))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean batch loss.
    pub loss: f64,
    pub jaccard: f64,
    pub precision: f64,
    pub recall: f64,
}

pub struct Trainer<T: Scalar> {
    pub model: RganetModel<T>,
    pub optimizer: AdamW<T>,
    loss: LossConfig,
    batch_size: usize,
    augment: Vec<Augment>,
    positive: u8,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Trainer {
            model: build_model(cfg.model.clone(), cfg.seed)?,
            optimizer: AdamW::new(cfg.optim.clone()),
            loss: cfg.loss.clone(),
            batch_size: cfg.batch_size,
            augment: cfg.augment.clone(),
            positive: cfg.positive_class,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed),
            epoch: 0,
        })
    }

    /// One forward, backward and update on a batch; returns the loss and the
    /// predicted probabilities.
    pub fn step(&mut self, images: &Tensor<T>, masks: &[SegMask]) -> Result<(f64, Tensor<T>)> {
        let mut sess = Session::new(&mut self.model.params, Mode::Train);
        let x = sess.input(images.clone());
        let probs = self.model.net.forward(&mut sess, x)?;
        let loss = record_loss(sess.tape_mut(), probs, masks, &self.loss)?;
        let value = sess.value(loss).data()[0].as_f64();
        if !value.is_finite() {
            return Err(Error::Numerical(format!(
                "loss became {value} at epoch {}",
                self.epoch + 1
            )));
        }
        let grads = sess.backward(loss)?;
        let grads = sess.param_grads(&grads);
        if !grads.all_finite() {
            let bad: Vec<&str> = grads.iter().filter(|(_, g)| !g.is_finite()).map(|(n, _)| n).collect();
            return Err(Error::Numerical(format!("non-finite gradients in {}", bad.join(", "))));
        }
        let probs = sess.into_tape().value_owned(probs);
        self.optimizer.step(&mut self.model.params, &grads)?;
        Ok((value, probs))
    }

    pub fn train_epoch(&mut self, samples: &[Sample<T>]) -> Result<EpochLog> {
        if samples.is_empty() {
            return Err(Error::Invalid("no training samples".into()));
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        let mut batches = 0;
        let mut conf = Confusion::default();
        for chunk in order.chunks(self.batch_size) {
            let mut images = Vec::with_capacity(chunk.len());
            let mut masks = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let s = &samples[i];
                let t = augment::draw(&self.augment, s.image.shape(), &mut self.rng);
                let (img, m) = augment::apply(&t, &s.image, &s.mask);
                images.push(img);
                masks.push(m);
            }
            let batch = Tensor::stack(&images)?;
            let (loss, probs) = self.step(&batch, &masks)?;
            total += loss;
            batches += 1;
            for (n, m) in masks.iter().enumerate() {
                conf = conf + confusion(&SegMask::from_probs(&probs, n), m, self.positive)?;
            }
        }
        self.epoch += 1;
        let m = classic_metrics::<f64>(&conf);
        Ok(EpochLog {
            epoch: self.epoch,
            loss: total / batches as f64,
            jaccard: m.jaccard,
            precision: m.precision,
            recall: m.recall,
        })
    }
}

/// Eval-mode argmax masks for every sample, one forward per sample.
pub fn predict_masks<T: Scalar>(model: &mut RganetModel<T>, samples: &[Sample<T>]) -> Result<Vec<SegMask>> {
    samples
        .iter()
        .map(|s| Ok(SegMask::from_probs(&model.forward(&s.image, Mode::Eval)?, 0)))
        .collect()
}

/// Pooled confusion of eval-mode predictions against the labels.
pub fn dataset_confusion<T: Scalar>(model: &mut RganetModel<T>, samples: &[Sample<T>], positive: u8) -> Result<Confusion> {
    let preds = predict_masks(model, samples)?;
    let mut c = Confusion::default();
    for (p, s) in preds.iter().zip(samples) {
        c = c + confusion(p, &s.mask, positive)?;
    }
    Ok(c)
}
