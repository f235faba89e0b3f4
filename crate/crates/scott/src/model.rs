//! Encoder, projector and classifier assembly, plus checkpointing.
//!
//! The encoder lifts each scalar point to the model width with a pointwise
//! dense layer, runs one or more encoder blocks, and global-average-pools
//! over time into a fixed-width representation `r`. The projector maps `r`
//! to the low-dimensional embedding `z` consumed by the contrastive losses;
//! the classifier consumes `r` (not `z`), which is the convention of
//! discarding the projector for downstream use — a config switch can point
//! it at `z` for ablation.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{
    linalg::softmax_rows, Dense, DenseCache, DenseGrads, Dropout, EncoderBlock, EncoderBlockCache,
    EncoderBlockGrads, Phase, Tensor3,
};
use crate::rng;

/// Which vector the downstream classifier consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifyOn {
    Representation,
    Embedding,
}

/// Architecture hyperparameters. The defaults are the full-scale settings:
/// width 256, three heads of size 256, three conv layers (dilations 1, 4, 16)
/// with 256 filters and kernel size 4, projector 128→64→8 with 0.3 dropout,
/// classifier 256→64→C with 0.4 dropout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub width: usize,
    pub heads: usize,
    /// 0 means "use the model width" (full-width heads, projected back after concatenation).
    pub head_dim: usize,
    pub kernel_size: usize,
    /// 0 means "use the model width".
    pub conv_filters: usize,
    pub dilations: Vec<usize>,
    pub blocks: usize,
    pub block_dropout: f64,
    pub layer_norm: bool,
    pub projector_hidden: Vec<usize>,
    pub projector_out: usize,
    pub projector_dropout: f64,
    pub classifier_hidden: Vec<usize>,
    pub classifier_dropout: f64,
    pub classify_on: ClassifyOn,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            width: 256,
            heads: 3,
            head_dim: 0,
            kernel_size: 4,
            conv_filters: 0,
            dilations: vec![1, 4, 16],
            blocks: 1,
            block_dropout: 0.0,
            layer_norm: false,
            projector_hidden: vec![128, 64],
            projector_out: 8,
            projector_dropout: 0.3,
            classifier_hidden: vec![256, 64],
            classifier_dropout: 0.4,
            classify_on: ClassifyOn::Representation,
        }
    }
}

impl ModelConfig {
    /// A small configuration for desk-scale experiments.
    pub fn desk_scale(width: usize) -> Self {
        ModelConfig {
            width,
            ..Default::default()
        }
    }

    pub fn resolved_head_dim(&self) -> usize {
        if self.head_dim == 0 {
            self.width
        } else {
            self.head_dim
        }
    }

    pub fn resolved_filters(&self) -> usize {
        if self.conv_filters == 0 {
            self.width
        } else {
            self.conv_filters
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.heads == 0 || self.blocks == 0 {
            return Err(Error::config("width, heads and blocks must be positive"));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return Err(Error::config("dilations must be positive and nonempty"));
        }
        if self.kernel_size == 0 || self.projector_out == 0 {
            return Err(Error::config("kernel size and projector width must be positive"));
        }
        Ok(())
    }
}

/// Encoder f(·): pointwise input embedding, encoder blocks, average pooling.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub embed: Dense,
    pub blocks: Vec<EncoderBlock>,
}

pub struct EncoderCache {
    embed: DenseCache,
    blocks: Vec<EncoderBlockCache>,
    b: usize,
    t: usize,
}

#[derive(Debug, Clone)]
pub struct EncoderGrads {
    pub embed: DenseGrads,
    pub blocks: Vec<EncoderBlockGrads>,
}

impl Encoder {
    pub fn new(config: &ModelConfig, rng_: &mut rng::ChaCha8Rng) -> Self {
        let embed = Dense::new(1, config.width, rng_);
        let blocks = (0..config.blocks)
            .map(|_| {
                EncoderBlock::new(
                    config.width,
                    config.heads,
                    config.resolved_head_dim(),
                    config.kernel_size,
                    config.resolved_filters(),
                    &config.dilations,
                    config.block_dropout,
                    config.layer_norm,
                    rng_,
                )
            })
            .collect();
        Encoder { embed, blocks }
    }

    pub fn width(&self) -> usize {
        self.embed.out_dim()
    }

    /// (B, T) raw series → (B, width) representations.
    pub fn forward(
        &self,
        batch: &Array2<f64>,
        phase: &mut Phase,
    ) -> Result<(Array2<f64>, EncoderCache)> {
        let (b, t) = batch.dim();
        if t == 0 {
            return Err(Error::shape("empty series"));
        }
        let flat = batch
            .to_owned()
            .into_shape_with_order((b * t, 1))
            .map_err(|e| Error::shape(e.to_string()))?;
        let (embedded, embed_cache) = self.embed.forward(flat.view());
        let mut h: Tensor3 = embedded
            .into_shape_with_order((b, t, self.width()))
            .map_err(|e| Error::shape(e.to_string()))?;

        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (out, cache) = block.forward(&h, phase)?;
            block_caches.push(cache);
            h = out;
        }

        // Global average pooling over time.
        let mut r = Array2::zeros((b, self.width()));
        for bi in 0..b {
            for ti in 0..t {
                for d in 0..self.width() {
                    r[(bi, d)] += h[(bi, ti, d)];
                }
            }
        }
        r.mapv_inplace(|v| v / t as f64);

        Ok((
            r,
            EncoderCache {
                embed: embed_cache,
                blocks: block_caches,
                b,
                t,
            },
        ))
    }

    /// Backpropagates d(loss)/d(representation) to the raw input batch.
    pub fn backward(
        &self,
        cache: &EncoderCache,
        dr: &Array2<f64>,
        grads: &mut EncoderGrads,
    ) -> Array2<f64> {
        let (b, t) = (cache.b, cache.t);
        let d = self.width();
        let inv_t = 1.0 / t as f64;
        let mut dh = Array3::zeros((b, t, d));
        for bi in 0..b {
            for ti in 0..t {
                for di in 0..d {
                    dh[(bi, ti, di)] = dr[(bi, di)] * inv_t;
                }
            }
        }

        for i in (0..self.blocks.len()).rev() {
            dh = self.blocks[i].backward(&cache.blocks[i], &dh, &mut grads.blocks[i]);
        }

        let dflat = dh
            .into_shape_with_order((b * t, d))
            .expect("contiguous");
        let dx = self.embed.backward(&cache.embed, dflat.view(), &mut grads.embed);
        dx.into_shape_with_order((b, t)).expect("contiguous")
    }

    pub fn zero_grads(&self) -> EncoderGrads {
        EncoderGrads {
            embed: self.embed.zero_grads(),
            blocks: self.blocks.iter().map(|b| b.zero_grads()).collect(),
        }
    }
}

/// Multi-layer perceptron with ReLU hidden activations and inverted dropout
/// after each hidden layer. The final layer is linear; softmax (when wanted)
/// is applied by the caller.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub dropout: f64,
}

pub struct MlpCache {
    dense: Vec<DenseCache>,
    relu_out: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<DenseGrads>,
}

impl Mlp {
    pub fn new(dims: &[usize], dropout: f64, rng_: &mut rng::ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2);
        let layers = dims
            .windows(2)
            .map(|w| Dense::new(w[0], w[1], rng_))
            .collect();
        Mlp { layers, dropout }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn forward(&self, x: &Array2<f64>, phase: &mut Phase) -> Result<(Array2<f64>, MlpCache)> {
        if x.ncols() != self.in_dim() {
            return Err(Error::shape(format!(
                "mlp expects width {}, got {}",
                self.in_dim(),
                x.ncols()
            )));
        }
        let mut h = x.to_owned();
        let mut dense = Vec::new();
        let mut relu_out = Vec::new();
        let mut masks = Vec::new();
        let n_layers = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            let (mut out, cache) = layer.forward(h.view());
            dense.push(cache);
            if i + 1 < n_layers {
                out.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
                relu_out.push(out.clone());
                let mask = Dropout {
                    rate: self.dropout,
                }
                .forward(&mut out, phase);
                masks.push(mask);
            }
            h = out;
        }
        Ok((
            h,
            MlpCache {
                dense,
                relu_out,
                masks,
            },
        ))
    }

    pub fn backward(&self, cache: &MlpCache, dy: &Array2<f64>, grads: &mut MlpGrads) -> Array2<f64> {
        let mut dh = dy.to_owned();
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                dh = Dropout::backward(&cache.masks[i], &dh);
                for (dv, yv) in dh.iter_mut().zip(cache.relu_out[i].iter()) {
                    if *yv <= 0.0 {
                        *dv = 0.0;
                    }
                }
            }
            dh = self.layers[i].backward(&cache.dense[i], dh.view(), &mut grads.layers[i]);
        }
        dh
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self.layers.iter().map(|l| l.zero_grads()).collect(),
        }
    }
}

/// How far through the two-stage schedule a model has been trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainStage {
    Fresh,
    EncoderTrained,
    FullyTrained,
}

/// Everything persisted alongside the weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: ModelConfig,
    pub classes: usize,
    pub stage: TrainStage,
    /// Sliding-window geometry for change-point models.
    pub window: Option<crate::cpd::WindowSpec>,
    pub z_norm: bool,
    pub seed: u64,
}

/// The full pipeline model.
#[derive(Debug, Clone)]
pub struct ScottModel {
    pub encoder: Encoder,
    pub projector: Mlp,
    pub classifier: Mlp,
    pub meta: ModelMeta,
}

impl ScottModel {
    pub fn new(config: &ModelConfig, classes: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if classes < 2 {
            return Err(Error::config("need at least 2 classes"));
        }
        let mut init_rng = rng::stream_rng(seed, "init");
        let encoder = Encoder::new(config, &mut init_rng);

        let mut proj_dims = vec![config.width];
        proj_dims.extend_from_slice(&config.projector_hidden);
        proj_dims.push(config.projector_out);
        let projector = Mlp::new(&proj_dims, config.projector_dropout, &mut init_rng);

        let clf_in = match config.classify_on {
            ClassifyOn::Representation => config.width,
            ClassifyOn::Embedding => config.projector_out,
        };
        let mut clf_dims = vec![clf_in];
        clf_dims.extend_from_slice(&config.classifier_hidden);
        clf_dims.push(classes);
        let classifier = Mlp::new(&clf_dims, config.classifier_dropout, &mut init_rng);

        Ok(ScottModel {
            encoder,
            projector,
            classifier,
            meta: ModelMeta {
                config: config.clone(),
                classes,
                stage: TrainStage::Fresh,
                window: None,
                z_norm: false,
                seed,
            },
        })
    }

    /// Per-instance representations r for a batch of equal-length series.
    pub fn encode(&self, batch: &Array2<f64>, phase: &mut Phase) -> Result<Array2<f64>> {
        Ok(self.encoder.forward(batch, phase)?.0)
    }

    /// Projector embeddings z (one row per instance).
    pub fn project(&self, r: &Array2<f64>, phase: &mut Phase) -> Result<Array2<f64>> {
        Ok(self.projector.forward(r, phase)?.0)
    }

    /// Class probability rows (softmax of the classifier logits).
    pub fn classify(&self, features: &Array2<f64>, phase: &mut Phase) -> Result<Array2<f64>> {
        let (mut logits, _) = self.classifier.forward(features, phase)?;
        softmax_rows(&mut logits);
        Ok(logits)
    }

    /// The vector the classifier consumes for a batch, per configuration.
    pub fn classifier_features(
        &self,
        batch: &Array2<f64>,
        phase: &mut Phase,
    ) -> Result<Array2<f64>> {
        let r = {
            let mut p = phase.reborrow();
            self.encode(batch, &mut p)?
        };
        match self.meta.config.classify_on {
            ClassifyOn::Representation => Ok(r),
            ClassifyOn::Embedding => self.project(&r, phase),
        }
    }

    /// End-to-end class probabilities for raw series.
    pub fn predict_proba(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        let features = self.classifier_features(batch, &mut Phase::Eval)?;
        self.classify(&features, &mut Phase::Eval)
    }
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    meta: ModelMeta,
    tensors: BTreeMap<String, TensorRecord>,
}

fn named_tensors(model: &ScottModel) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    let mut out = Vec::new();
    let push2 = |out: &mut Vec<_>, name: String, a: &Array2<f64>| {
        out.push((name, a.shape().to_vec(), a.iter().cloned().collect()));
    };
    let e = &model.encoder;
    push2(&mut out, "encoder.embed.w".into(), &e.embed.w);
    out.push((
        "encoder.embed.b".into(),
        vec![e.embed.b.len()],
        e.embed.b.to_vec(),
    ));
    for (bi, block) in e.blocks.iter().enumerate() {
        let p = format!("encoder.block{bi}");
        for (name, arr) in [
            ("attn.wq", &block.attn.wq),
            ("attn.wk", &block.attn.wk),
            ("attn.wv", &block.attn.wv),
        ] {
            out.push((
                format!("{p}.{name}"),
                arr.shape().to_vec(),
                arr.iter().cloned().collect(),
            ));
        }
        push2(&mut out, format!("{p}.attn.wo"), &block.attn.wo);
        for (ci, conv) in block.convs.iter().enumerate() {
            out.push((
                format!("{p}.conv{ci}.w"),
                conv.w.shape().to_vec(),
                conv.w.iter().cloned().collect(),
            ));
            out.push((
                format!("{p}.conv{ci}.b"),
                vec![conv.b.len()],
                conv.b.to_vec(),
            ));
        }
        if let Some(norm) = &block.norm {
            out.push((
                format!("{p}.norm.gamma"),
                vec![norm.gamma.len()],
                norm.gamma.to_vec(),
            ));
            out.push((
                format!("{p}.norm.beta"),
                vec![norm.beta.len()],
                norm.beta.to_vec(),
            ));
        }
    }
    for (prefix, mlp) in [("projector", &model.projector), ("classifier", &model.classifier)] {
        for (li, layer) in mlp.layers.iter().enumerate() {
            push2(&mut out, format!("{prefix}.l{li}.w"), &layer.w);
            out.push((
                format!("{prefix}.l{li}.b"),
                vec![layer.b.len()],
                layer.b.to_vec(),
            ));
        }
    }
    out
}

fn assign_tensor(name: &str, record: &TensorRecord, dst_shape: &[usize], dst: &mut [f64]) -> Result<()> {
    if record.shape != dst_shape {
        return Err(Error::Checkpoint(format!(
            "tensor {name}: shape {:?} does not match model shape {:?}",
            record.shape, dst_shape
        )));
    }
    if record.data.len() != dst.len() {
        return Err(Error::Checkpoint(format!(
            "tensor {name}: {} values for {} slots",
            record.data.len(),
            dst.len()
        )));
    }
    dst.copy_from_slice(&record.data);
    Ok(())
}

/// Serialises the model (weights + metadata) as a versioned JSON map.
pub fn save_checkpoint(model: &ScottModel, path: impl AsRef<Path>) -> Result<()> {
    let tensors: BTreeMap<String, TensorRecord> = named_tensors(model)
        .into_iter()
        .map(|(name, shape, data)| (name, TensorRecord { shape, data }))
        .collect();
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        meta: model.meta.clone(),
        tensors,
    };
    let json = serde_json::to_string(&file)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Loads a checkpoint, reconstructing the architecture from its metadata.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ScottModel> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let file: CheckpointFile =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}",
            file.version
        )));
    }
    let mut model = ScottModel::new(&file.meta.config, file.meta.classes, file.meta.seed)?;
    model.meta = file.meta.clone();

    let fill = |name: String, shape: Vec<usize>, dst: &mut [f64]| -> Result<()> {
        let record = file
            .tensors
            .get(&name)
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name} missing")))?;
        assign_tensor(&name, record, &shape, dst)
    };

    {
        let e = &mut model.encoder;
        fill(
            "encoder.embed.w".into(),
            e.embed.w.shape().to_vec(),
            e.embed.w.as_slice_mut().unwrap(),
        )?;
        fill(
            "encoder.embed.b".into(),
            vec![e.embed.b.len()],
            e.embed.b.as_slice_mut().unwrap(),
        )?;
        for (bi, block) in e.blocks.iter_mut().enumerate() {
            let p = format!("encoder.block{bi}");
            fill(
                format!("{p}.attn.wq"),
                block.attn.wq.shape().to_vec(),
                block.attn.wq.as_slice_mut().unwrap(),
            )?;
            fill(
                format!("{p}.attn.wk"),
                block.attn.wk.shape().to_vec(),
                block.attn.wk.as_slice_mut().unwrap(),
            )?;
            fill(
                format!("{p}.attn.wv"),
                block.attn.wv.shape().to_vec(),
                block.attn.wv.as_slice_mut().unwrap(),
            )?;
            fill(
                format!("{p}.attn.wo"),
                block.attn.wo.shape().to_vec(),
                block.attn.wo.as_slice_mut().unwrap(),
            )?;
            for (ci, conv) in block.convs.iter_mut().enumerate() {
                fill(
                    format!("{p}.conv{ci}.w"),
                    conv.w.shape().to_vec(),
                    conv.w.as_slice_mut().unwrap(),
                )?;
                fill(
                    format!("{p}.conv{ci}.b"),
                    vec![conv.b.len()],
                    conv.b.as_slice_mut().unwrap(),
                )?;
            }
            if let Some(norm) = &mut block.norm {
                fill(
                    format!("{p}.norm.gamma"),
                    vec![norm.gamma.len()],
                    norm.gamma.as_slice_mut().unwrap(),
                )?;
                fill(
                    format!("{p}.norm.beta"),
                    vec![norm.beta.len()],
                    norm.beta.as_slice_mut().unwrap(),
                )?;
            }
        }
        for (prefix, mlp) in [
            ("projector", &mut model.projector),
            ("classifier", &mut model.classifier),
        ] {
            for (li, layer) in mlp.layers.iter_mut().enumerate() {
                fill(
                    format!("{prefix}.l{li}.w"),
                    layer.w.shape().to_vec(),
                    layer.w.as_slice_mut().unwrap(),
                )?;
                fill(
                    format!("{prefix}.l{li}.b"),
                    vec![layer.b.len()],
                    layer.b.as_slice_mut().unwrap(),
                )?;
            }
        }
    }
    Ok(model)
}

/// Builds the (B, T) batch matrix from a set of equal-length series.
pub fn batch_matrix(series: &[&crate::data::TimeSeries]) -> Result<Array2<f64>> {
    if series.is_empty() {
        return Err(Error::config("empty batch"));
    }
    let t = series[0].len();
    if series.iter().any(|s| s.len() != t) {
        return Err(Error::shape("series lengths differ within a batch"));
    }
    let mut m = Array2::zeros((series.len(), t));
    for (i, s) in series.iter().enumerate() {
        for (j, v) in s.values().iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}
