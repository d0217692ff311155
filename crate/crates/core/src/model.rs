//! The spatio-temporal convolutional forecaster.
//!
//! Every frame of the one-hot image sequence is encoded by strided 3×3
//! convolutions (a depth-1 3D convolution, so all frames share one pass). A
//! 3D convolution with temporal extent `s` then collapses each window of `s`
//! frames into one latent map, optionally concatenated with features of a
//! reference image. Further 3×3 convolutions, stride-2 transposed
//! convolutions and a 1×1 head produce one logit per grid cell.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stcnn_tensor::{conv_output_len, glorot_uniform, Bindings, Graph, ParameterStore, Tensor, Var};

use crate::checkpoint::Checkpoint;
use crate::data::{rasterize_segment, ReferenceImage};
use crate::distribution::GridDistribution;
use crate::forecast::score_continuation;
use crate::grid::{GridSpec, Point};
use crate::provider::{check_window, Conditioning, GridModel};
use crate::trainer::Trainable;
use crate::{Error, Result};

const DEC_KERNEL: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchConfig {
    /// Frames per window.
    pub s: usize,
    pub grid: GridSpec,
    /// Output channels of the stride-2 encoder blocks.
    pub enc_channels: Vec<usize>,
    pub latent_channels: usize,
    /// 3×3 convolutions between the temporal layer and the decoder.
    pub latent_convs: usize,
    /// Spatial extent of the temporal convolution (odd).
    pub temporal_kernel: usize,
    /// Output channels of the stride-2 transposed convolutions.
    pub dec_channels: Vec<usize>,
    pub use_reference: bool,
    /// Output channels of the reference-image encoder blocks.
    pub ref_channels: Vec<usize>,
    /// 1 for grey, 3 for colour reference images.
    pub ref_image_channels: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            s: 4,
            grid: GridSpec::default(),
            enc_channels: vec![16, 32],
            latent_channels: 32,
            latent_convs: 2,
            temporal_kernel: 3,
            dec_channels: vec![16, 8],
            use_reference: false,
            ref_channels: vec![16, 32],
            ref_image_channels: 1,
        }
    }
}

fn halve(n: usize) -> usize {
    conv_output_len(n, 3, 2, 1).expect("3x3 stride-2 conv with padding 1 accepts any extent")
}

impl ArchConfig {
    /// Spatial extent of the latent maps.
    pub fn latent_extent(&self) -> (usize, usize) {
        self.enc_channels
            .iter()
            .fold((self.grid.height, self.grid.width), |(h, w), _| (halve(h), halve(w)))
    }

    pub fn validate(&self) -> Result<()> {
        let geo = |m: String| Err(Error::Geometry(m));
        if self.s == 0 {
            return Err(Error::Config("window length s must be at least 1".into()));
        }
        let zero = |v: &[usize]| v.iter().any(|&c| c == 0);
        if self.latent_channels == 0 || zero(&self.enc_channels) || zero(&self.dec_channels) {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        if self.temporal_kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "temporal kernel {} must be odd",
                self.temporal_kernel
            )));
        }
        let (h, w) = self.latent_extent();
        if self.temporal_kernel > 2 * h + 1 || self.temporal_kernel > 2 * w + 1 {
            return geo(format!(
                "temporal kernel {} too large for {h}x{w} latent",
                self.temporal_kernel
            ));
        }
        let up = 1usize << self.dec_channels.len();
        if h * up != self.grid.height || w * up != self.grid.width {
            return geo(format!(
                "latent {h}x{w} upsampled by {up} gives {}x{}, grid is {}",
                h * up,
                w * up,
                self.grid
            ));
        }
        if self.use_reference {
            if !matches!(self.ref_image_channels, 1 | 3) {
                return Err(Error::Config("reference images have 1 or 3 channels".into()));
            }
            if self.ref_channels.is_empty() || zero(&self.ref_channels) {
                return Err(Error::Config("reference encoder needs positive channel widths".into()));
            }
            let r = self
                .ref_channels
                .iter()
                .fold((self.grid.height, self.grid.width), |(h, w), _| (halve(h), halve(w)));
            if r != (h, w) {
                return geo(format!(
                    "reference features {}x{} do not match the {h}x{w} latent",
                    r.0, r.1
                ));
            }
        }
        Ok(())
    }

    fn ref_out(&self) -> usize {
        if self.use_reference {
            *self.ref_channels.last().expect("validated")
        } else {
            0
        }
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let list = |v: &[usize]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
        vec![
            ("s".into(), self.s.to_string()),
            ("grid".into(), self.grid.to_string()),
            ("enc_channels".into(), list(&self.enc_channels)),
            ("latent_channels".into(), self.latent_channels.to_string()),
            ("latent_convs".into(), self.latent_convs.to_string()),
            ("temporal_kernel".into(), self.temporal_kernel.to_string()),
            ("dec_channels".into(), list(&self.dec_channels)),
            ("use_reference".into(), self.use_reference.to_string()),
            ("ref_channels".into(), list(&self.ref_channels)),
            ("ref_image_channels".into(), self.ref_image_channels.to_string()),
        ]
    }

    /// Overrides fields from `key=value` pairs; unknown keys are errors.
    pub fn apply_pairs<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        fn num(k: &str, v: &str) -> Result<usize> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{k}: expected an integer, got {v:?}")))
        }
        fn list(k: &str, v: &str) -> Result<Vec<usize>> {
            v.split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| num(k, t))
                .collect()
        }
        for (k, v) in pairs {
            match k {
                "s" => self.s = num(k, v)?,
                "grid" => self.grid = v.parse()?,
                "enc_channels" => self.enc_channels = list(k, v)?,
                "latent_channels" => self.latent_channels = num(k, v)?,
                "latent_convs" => self.latent_convs = num(k, v)?,
                "temporal_kernel" => self.temporal_kernel = num(k, v)?,
                "dec_channels" => self.dec_channels = list(k, v)?,
                "use_reference" => {
                    self.use_reference = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("{k}: expected true or false, got {v:?}")))?
                }
                "ref_channels" => self.ref_channels = list(k, v)?,
                "ref_image_channels" => self.ref_image_channels = num(k, v)?,
                _ => return Err(Error::Config(format!("unknown architecture key {k:?}"))),
            }
        }
        Ok(())
    }

    /// Expected parameter names and shapes, in store order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut conv = |name: String, shape: Vec<usize>| {
            let cout = shape[0];
            out.push((format!("{name}.w"), shape));
            out.push((format!("{name}.b"), vec![cout]));
        };
        let mut cin = 1;
        for (i, &c) in self.enc_channels.iter().enumerate() {
            conv(format!("enc{i}"), vec![c, cin, 1, 3, 3]);
            cin = c;
        }
        let (l, k) = (self.latent_channels, self.temporal_kernel);
        conv("temporal".into(), vec![l, cin, self.s, k, k]);
        if self.use_reference {
            let mut rin = self.ref_image_channels;
            for (i, &c) in self.ref_channels.iter().enumerate() {
                conv(format!("ref{i}"), vec![c, rin, 3, 3]);
                rin = c;
            }
        }
        let mut cin = l + self.ref_out();
        for i in 0..self.latent_convs {
            conv(format!("latent{i}"), vec![l, cin, 3, 3]);
            cin = l;
        }
        for (i, &c) in self.dec_channels.iter().enumerate() {
            // transposed-convolution weights are [in, out, k, k]
            out.push((format!("dec{i}.w"), vec![cin, c, DEC_KERNEL, DEC_KERNEL]));
            out.push((format!("dec{i}.b"), vec![c]));
            cin = c;
        }
        out.push(("head.w".into(), vec![1, cin, 1, 1]));
        out.push(("head.b".into(), vec![1]));
        out
    }
}

impl fmt::Display for ArchConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.to_pairs() {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Stcnn {
    arch: ArchConfig,
    params: ParameterStore,
}

impl Stcnn {
    /// Glorot-uniform kernels, zero biases and a zero head, so the untrained
    /// model is exactly uniform.
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterStore::new(seed);
        for (name, shape) in arch.parameter_shapes() {
            let t = if name.starts_with("head.") || shape.len() == 1 {
                Tensor::zeros(&shape)
            } else {
                glorot_uniform(&shape, &mut rng)
            };
            params.insert(name, t)?;
        }
        Ok(Self { arch, params })
    }

    /// Wraps loaded parameters after checking names and shapes.
    pub fn from_parts(arch: ArchConfig, params: ParameterStore) -> Result<Self> {
        arch.validate()?;
        let want = arch.parameter_shapes();
        if want.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "architecture has {} parameters, store has {}",
                want.len(),
                params.len()
            )));
        }
        for ((name, shape), (got, t)) in want.iter().zip(params.iter()) {
            if name != got || shape.as_slice() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "expected {name} {shape:?}, found {got} {:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    /// Adds uniform noise in `±scale` to every parameter, head included.
    pub fn perturb(&mut self, scale: f32, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..self.params.len() {
            for v in self.params.values_mut(i) {
                *v += rng.gen_range(-scale..scale);
            }
        }
    }

    fn conv_block(g: &mut Graph<f32>, b: &Bindings, name: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
        let y = g.conv2d(x, b.var(&format!("{name}.w"))?, Some(b.var(&format!("{name}.b"))?), stride, pad)?;
        Ok(g.relu(y))
    }

    fn reference_features(&self, g: &mut Graph<f32>, b: &Bindings, image: Tensor<f32>) -> Result<Var> {
        let mut x = g.leaf(image, false);
        for i in 0..self.arch.ref_channels.len() {
            x = Self::conv_block(g, b, &format!("ref{i}"), x, 2, 1)?;
        }
        Ok(x)
    }

    /// Flat logits for every window of `frames` (`[D, H, W]`, `D ≥ s`).
    fn window_logits(
        &self,
        g: &mut Graph<f32>,
        b: &Bindings,
        frames: Tensor<f32>,
        reference: Option<Var>,
    ) -> Result<Vec<Var>> {
        let a = &self.arch;
        let d = frames.shape()[0];
        let (h, w) = (a.grid.height, a.grid.width);
        let mut x = g.leaf(frames.reshape(&[1, d, h, w])?, false);
        for i in 0..a.enc_channels.len() {
            let y = g.conv3d(x, b.var(&format!("enc{i}.w"))?, Some(b.var(&format!("enc{i}.b"))?), [1, 2, 2], [0, 1, 1])?;
            x = g.relu(y);
        }
        let p = a.temporal_kernel / 2;
        let t = g.conv3d(x, b.var("temporal.w")?, Some(b.var("temporal.b")?), [1, 1, 1], [0, p, p])?;
        let t = g.relu(t);
        let mut out = Vec::with_capacity(d + 1 - a.s);
        for i in 0..=d - a.s {
            let mut z = g.select_depth(t, i)?;
            if let Some(r) = reference {
                z = g.concat_channels(z, r)?;
            }
            for j in 0..a.latent_convs {
                z = Self::conv_block(g, b, &format!("latent{j}"), z, 1, 1)?;
            }
            for j in 0..a.dec_channels.len() {
                let y = g.conv_transpose2d(z, b.var(&format!("dec{j}.w"))?, Some(b.var(&format!("dec{j}.b"))?), 2, 1)?;
                z = g.relu(y);
            }
            let l = g.conv2d(z, b.var("head.w")?, Some(b.var("head.b")?), 1, 0)?;
            out.push(g.reshape(l, &[h * w])?);
        }
        Ok(out)
    }

    fn check_features(&self, reference: Option<&Tensor<f32>>) -> Result<()> {
        match (self.arch.use_reference, reference) {
            (true, None) => Err(Error::Reference("model expects reference features".into())),
            (false, Some(_)) => Err(Error::Reference("model was built without reference input".into())),
            _ => Ok(()),
        }
    }

    fn check_frames(&self, frames: &Tensor<f32>, min: usize) -> Result<()> {
        let g = self.arch.grid;
        let s = frames.shape();
        if s.len() != 3 || s[1] != g.height || s[2] != g.width {
            return Err(Error::Config(format!(
                "frames must be [T, {}, {}], got {s:?}",
                g.height, g.width
            )));
        }
        if s[0] < min {
            return Err(Error::TooShort {
                what: "frame sequence",
                need: min,
                got: s[0],
            });
        }
        Ok(())
    }

    fn infer(&self, frames: Tensor<f32>, reference: Option<&Tensor<f32>>) -> Result<Vec<GridDistribution>> {
        self.check_features(reference)?;
        let mut g = Graph::new();
        let b = self.params.bind_frozen(&mut g);
        let r = reference.map(|t| g.leaf(t.clone(), false));
        let logits = self.window_logits(&mut g, &b, frames, r)?;
        logits
            .into_iter()
            .map(|l| GridDistribution::softmax(self.arch.grid, g.value(l).data()))
            .collect()
    }

    /// Spatial feature map `[C, h, w]` matching the latent extent.
    pub fn encode_reference(&self, image: &ReferenceImage) -> Result<Tensor<f32>> {
        if !self.arch.use_reference {
            return Err(Error::Reference("model has no reference encoder".into()));
        }
        image.check_grid(&self.arch.grid)?;
        if image.channels != self.arch.ref_image_channels {
            return Err(Error::Reference(format!(
                "image has {} channels, model expects {}",
                image.channels, self.arch.ref_image_channels
            )));
        }
        let mut g = Graph::new();
        let b = self.params.bind_frozen(&mut g);
        let f = self.reference_features(&mut g, &b, image.to_tensor())?;
        Ok(g.value(f).clone())
    }

    /// One-step distribution for a window of exactly `s` frames.
    pub fn forward_step(&self, frames: &Tensor<f32>, reference: Option<&Tensor<f32>>) -> Result<GridDistribution> {
        self.check_frames(frames, self.arch.s)?;
        if frames.shape()[0] != self.arch.s {
            return Err(Error::Config(format!(
                "forward_step takes {} frames, got {}",
                self.arch.s,
                frames.shape()[0]
            )));
        }
        Ok(self.infer(frames.clone(), reference)?.remove(0))
    }

    /// All `T - s` one-step distributions of a `T`-frame sequence from a
    /// single network evaluation; entry `i` scores frame `i + s`.
    pub fn forward_sequence(&self, frames: &Tensor<f32>, reference: Option<&Tensor<f32>>) -> Result<Vec<GridDistribution>> {
        self.check_frames(frames, self.arch.s + 1)?;
        let [t, h, w] = [frames.shape()[0], frames.shape()[1], frames.shape()[2]];
        let inputs = Tensor::new(vec![t - 1, h, w], frames.data()[..(t - 1) * h * w].to_vec())?;
        self.infer(inputs, reference)
    }

    pub fn header(&self) -> Vec<(String, String)> {
        let mut h = vec![
            ("model".to_string(), "stcnn".to_string()),
            ("seed".to_string(), self.params.seed().to_string()),
        ];
        h.extend(self.arch.to_pairs());
        h
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(self.header());
        c.stores.push(("params".into(), self.params.clone()));
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.get("model") != Some("stcnn") {
            return Err(Error::Checkpoint("not an STCNN checkpoint".into()));
        }
        let mut arch = ArchConfig::default();
        arch.apply_pairs(
            c.header
                .iter()
                .filter(|(k, _)| k != "model" && k != "seed" && !k.starts_with("train."))
                .map(|(k, v)| (k.as_str(), v.as_str())),
        )?;
        let mut params = c
            .store("params")
            .ok_or_else(|| Error::Checkpoint("no parameters".into()))?
            .clone();
        params.set_seed(c.parse("seed")?);
        Self::from_parts(arch, params)
    }

    /// `Σ log g(window)[next]` over the windows sliding from `segment` into
    /// `continuation`.
    pub fn trajectory_log_prob(&self, segment: &[Point], continuation: &[Point], cond: &Conditioning) -> Result<f64> {
        score_continuation(self, segment, continuation, cond)
    }
}

impl GridModel for Stcnn {
    fn name(&self) -> &str {
        "stcnn"
    }

    fn grid(&self) -> GridSpec {
        self.arch.grid
    }

    fn window_len(&self) -> usize {
        self.arch.s
    }

    fn condition(&self, reference: Option<&ReferenceImage>) -> Result<Conditioning> {
        match (self.arch.use_reference, reference) {
            (true, Some(img)) => Ok(Conditioning(Some(self.encode_reference(img)?))),
            (true, None) => Err(Error::Reference("model expects a reference image".into())),
            (false, _) => Ok(Conditioning::NONE),
        }
    }

    fn predict(&self, frames: &[Point], cond: &Conditioning) -> Result<GridDistribution> {
        check_window(self, frames)?;
        self.forward_step(&rasterize_segment(frames, &self.arch.grid)?, cond.0.as_ref())
    }

    fn predict_sequence(&self, points: &[Point], cond: &Conditioning) -> Result<Vec<GridDistribution>> {
        self.forward_sequence(&rasterize_segment(points, &self.arch.grid)?, cond.0.as_ref())
    }
}

impl Trainable for Stcnn {
    fn params(&self) -> &ParameterStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    fn checkpoint_header(&self) -> Vec<(String, String)> {
        self.header()
    }

    fn window_loss(
        &self,
        frames: &[Point],
        target: Point,
        reference: Option<&ReferenceImage>,
    ) -> Result<(f64, Vec<Tensor<f32>>)> {
        check_window(self, frames)?;
        let grid = self.arch.grid;
        let t = grid.index(target).ok_or(Error::OutOfGrid {
            id: "target".into(),
            index: 0,
            point: target,
            height: grid.height,
            width: grid.width,
        })?;
        let mut g = Graph::new();
        let b = self.params.bind(&mut g);
        let r = match (self.arch.use_reference, reference) {
            (true, Some(img)) => {
                image_matches(img, &self.arch)?;
                Some(self.reference_features(&mut g, &b, img.to_tensor())?)
            }
            (true, None) => return Err(Error::Reference("model expects a reference image".into())),
            (false, _) => None,
        };
        let logits = self.window_logits(&mut g, &b, rasterize_segment(frames, &grid)?, r)?[0];
        let loss = g.nll(logits, t, 0.0)?;
        let value = g.value(loss).item().expect("scalar") as f64;
        let mut grads = g.backward(loss)?;
        Ok((value, b.collect(&self.params, &mut grads)))
    }
}

fn image_matches(img: &ReferenceImage, arch: &ArchConfig) -> Result<()> {
    img.check_grid(&arch.grid)?;
    if img.channels != arch.ref_image_channels {
        return Err(Error::Reference(format!(
            "image has {} channels, model expects {}",
            img.channels, arch.ref_image_channels
        )));
    }
    Ok(())
}

/// Parses `key=value` lines, ignoring blanks and `#` comments.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected key=value, got {line:?}"),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}
