use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Task};
use super::encoding::canvas_encoding;
use super::CorrError;
use crate::phantom::Image2D;
use crate::tensornet::{
    conv, init_attention, init_conv, init_layer_norm, init_mlp, layer_norm, mlp, multi_head_attention, Graph,
    ParameterStore, Tensor, Var,
};

/// Canvas point the untrained head predicts: the center of the target half.
pub const TARGET_CENTER: (f64, f64) = (0.75, 0.5);

/// Point-to-point or curve-to-curve correspondence transformer.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrModel {
    pub config: ModelConfig,
    pub store: ParameterStore,
}

/// Encoder output for one ordered image pair, reusable across queries.
#[derive(Debug, Clone, PartialEq)]
pub struct PairContext {
    pub memory: Tensor,
}

impl CorrModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, CorrError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let c = config.channels;
        let widths = config.backbone_widths();
        let mut cin = 1;
        for (i, &w) in widths.iter().enumerate() {
            let k = if i == 4 { 1 } else { 3 };
            init_conv(&mut store, &mut rng, &format!("backbone.conv{i}"), cin, w, k)?;
            cin = w;
        }
        for l in 0..config.encoder_layers {
            init_attention(&mut store, &mut rng, &format!("encoder.{l}.attn"), c)?;
            init_layer_norm(&mut store, &format!("encoder.{l}.ln1"), c)?;
            init_mlp(&mut store, &mut rng, &format!("encoder.{l}.ffn"), &[c, config.ffn_dim, c])?;
            init_layer_norm(&mut store, &format!("encoder.{l}.ln2"), c)?;
        }
        for l in 0..config.decoder_layers {
            init_attention(&mut store, &mut rng, &format!("decoder.{l}.attn"), c)?;
            init_layer_norm(&mut store, &format!("decoder.{l}.ln1"), c)?;
            init_mlp(&mut store, &mut rng, &format!("decoder.{l}.ffn"), &[c, config.ffn_dim, c])?;
            init_layer_norm(&mut store, &format!("decoder.{l}.ln2"), c)?;
        }
        if config.task == Task::C2c {
            init_mlp(&mut store, &mut rng, "segment", &[config.waypoint_n * c, c, c, c])?;
        }
        let out = config.task.output_dim();
        let mut dims = vec![c; config.head_mlp_layers];
        dims.push(out);
        init_mlp(&mut store, &mut rng, "head", &dims)?;
        let last = format!("head.{}.bias", config.head_mlp_layers - 1);
        let bias = store.get_mut(&last).expect("head bias just created");
        for (i, b) in bias.data_mut().iter_mut().enumerate() {
            *b = if i % 2 == 0 { TARGET_CENTER.0 } else { TARGET_CENTER.1 };
        }
        Ok(Self { config, store })
    }

    pub fn task(&self) -> Task {
        self.config.task
    }

    /// Network input for an image: inverted intensities so vessels are
    /// positive on a zero background, shape `[1, 1, S, S]`.
    pub fn image_tensor(&self, img: &Image2D) -> Result<Tensor, CorrError> {
        let s = self.config.input_size;
        if img.width != s || img.height != s {
            return Err(CorrError::ImageSize { expected: s, width: img.width, height: img.height });
        }
        Ok(Tensor::new(vec![1, 1, s, s], img.values.iter().map(|v| 1.0 - v).collect())?)
    }

    /// Convolutional encoder: `[1, 1, S, S]` to `[1, C, h, w]`.
    pub fn backbone(&self, g: &mut Graph, img: Var) -> Result<Var, CorrError> {
        let st = &self.store;
        let mut x = img;
        for i in 0..5 {
            let (stride, pad) = match i {
                0..=2 => (2, 1),
                3 => (1, 1),
                _ => (1, 0),
            };
            x = conv(g, st, &format!("backbone.conv{i}"), x, stride, pad)?;
            if i < 4 {
                x = g.relu(x);
            }
        }
        let (h, w) = self.config.feature_hw;
        if g.shape(x)[2] != h || g.shape(x)[3] != w {
            x = g.adaptive_avg_pool(x, h, w)?;
        }
        Ok(x)
    }

    /// Side-by-side features plus canvas encodings through the transformer
    /// encoder, giving memory `[1, L, C]`.
    pub fn encode_features(&self, g: &mut Graph, left: Var, right: Var) -> Result<Var, CorrError> {
        let c = self.config.channels;
        let (h, w) = self.config.feature_hw;
        let z = g.concat(&[left, right], 3)?;
        let z = g.reshape(z, &[1, c, h * 2 * w])?;
        let z = g.permute(z, &[0, 2, 1])?;
        let pe = g.constant(canvas_encoding(h, 2 * w, c));
        let mut x = g.add(z, pe)?;
        for l in 0..self.config.encoder_layers {
            let a = multi_head_attention(g, &self.store, &format!("encoder.{l}.attn"), x, x, self.config.heads)?;
            let r = g.add(x, a)?;
            x = layer_norm(g, &self.store, &format!("encoder.{l}.ln1"), r)?;
            let f = mlp(g, &self.store, &format!("encoder.{l}.ffn"), 2, x)?;
            let r = g.add(x, f)?;
            x = layer_norm(g, &self.store, &format!("encoder.{l}.ln2"), r)?;
        }
        Ok(x)
    }

    /// Query embeddings `[1, Q, C]` from canvas points `[1, Q, 2]` (points)
    /// or waypoints `[1, Q, N, 2]` (curves).
    pub fn embed_queries(&self, g: &mut Graph, queries: Var) -> Result<Var, CorrError> {
        let c = self.config.channels;
        let s = g.shape(queries).to_vec();
        match self.config.task {
            Task::P2p => {
                if s.len() != 3 || s[0] != 1 || s[2] != 2 {
                    return Err(CorrError::QueryShape(s));
                }
                Ok(g.fourier_pe(queries, c)?)
            }
            Task::C2c => {
                if s.len() != 4 || s[0] != 1 || s[3] != 2 {
                    return Err(CorrError::QueryShape(s));
                }
                if s[2] != self.config.waypoint_n {
                    return Err(CorrError::WaypointSize { expected: self.config.waypoint_n, got: s[2] });
                }
                let pe = g.fourier_pe(queries, c)?;
                let flat = g.reshape(pe, &[1, s[1], s[2] * c])?;
                Ok(mlp(g, &self.store, "segment", 3, flat)?)
            }
        }
    }

    /// Decoder with cross-attention only, then the prediction head,
    /// giving `[Q, 2]` points or `[Q, 8]` control points in canvas units.
    pub fn decode(&self, g: &mut Graph, memory: Var, embedding: Var) -> Result<Var, CorrError> {
        let mut x = embedding;
        for l in 0..self.config.decoder_layers {
            let a = multi_head_attention(g, &self.store, &format!("decoder.{l}.attn"), x, memory, self.config.heads)?;
            let r = g.add(x, a)?;
            x = layer_norm(g, &self.store, &format!("decoder.{l}.ln1"), r)?;
            let f = mlp(g, &self.store, &format!("decoder.{l}.ffn"), 2, x)?;
            let r = g.add(x, f)?;
            x = layer_norm(g, &self.store, &format!("decoder.{l}.ln2"), r)?;
        }
        let y = mlp(g, &self.store, "head", self.config.head_mlp_layers, x)?;
        let q = g.shape(y)[1];
        Ok(g.reshape(y, &[q, self.config.task.output_dim()])?)
    }

    pub fn forward(&self, g: &mut Graph, memory: Var, queries: Var) -> Result<Var, CorrError> {
        let e = self.embed_queries(g, queries)?;
        self.decode(g, memory, e)
    }

    /// Runs both images through the encoder for inference.
    pub fn encode_pair(&self, reference: &Image2D, target: &Image2D) -> Result<PairContext, CorrError> {
        let mut g = Graph::new();
        let a = g.constant(self.image_tensor(reference)?);
        let b = g.constant(self.image_tensor(target)?);
        let fa = self.backbone(&mut g, a)?;
        let fb = self.backbone(&mut g, b)?;
        let m = self.encode_features(&mut g, fa, fb)?;
        Ok(PairContext { memory: g.value(m).clone() })
    }

    /// Pre-encoder canvas features `[1, C, h, 2w]` of an image pair.
    pub fn canvas_features(&self, reference: &Image2D, target: &Image2D) -> Result<Tensor, CorrError> {
        let mut g = Graph::new();
        let a = g.constant(self.image_tensor(reference)?);
        let b = g.constant(self.image_tensor(target)?);
        let fa = self.backbone(&mut g, a)?;
        let fb = self.backbone(&mut g, b)?;
        let z = g.concat(&[fa, fb], 3)?;
        Ok(g.value(z).clone())
    }

    /// Raw head outputs for canvas queries against an encoded pair.
    pub fn predict(&self, ctx: &PairContext, queries: Tensor) -> Result<Tensor, CorrError> {
        let mut g = Graph::new();
        let m = g.constant(ctx.memory.clone());
        let q = g.constant(queries);
        let y = self.forward(&mut g, m, q)?;
        Ok(g.value(y).clone())
    }
}
