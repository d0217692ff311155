//! Recurrent coordinate regressor with a discretised Gaussian output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stcnn_tensor::{glorot_uniform, Bindings, Graph, ParameterStore, Tensor, Var};

use crate::baselines::gaussian::{gaussian_grid, grid_search, SearchResult};
use crate::checkpoint::Checkpoint;
use crate::data::{Dataset, ReferenceImage};
use crate::distribution::GridDistribution;
use crate::grid::{GridSpec, Point};
use crate::metrics::cross_entropy;
use crate::provider::{check_window, Conditioning, GridModel};
use crate::trainer::{train, TrainConfig, TrainReport, Trainable};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LstmConfig {
    pub s: usize,
    pub grid: GridSpec,
    pub hidden: usize,
    /// Output spread and uniform mixing weight used for prediction.
    pub sigma: f64,
    pub lambda: f64,
    /// Spread and mixing weight of the training likelihood.
    pub train_sigma: f64,
    pub train_lambda: f64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            s: 4,
            grid: GridSpec::default(),
            hidden: 32,
            sigma: 1.0,
            lambda: 1e-2,
            train_sigma: 1.0,
            train_lambda: 1e-2,
        }
    }
}

impl LstmConfig {
    fn validate(&self) -> Result<()> {
        if self.s == 0 || self.hidden == 0 {
            return Err(Error::Config("LSTM needs s ≥ 1 and a positive hidden size".into()));
        }
        for (name, sigma, lambda) in [
            ("", self.sigma, self.lambda),
            ("train_", self.train_sigma, self.train_lambda),
        ] {
            if !(sigma > 0.0) || !(0.0..=1.0).contains(&lambda) {
                return Err(Error::Config(format!(
                    "{name}sigma must be positive and {name}lambda in [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// LSTM over normalised coordinates; the mean is the last point plus a
/// learned offset.
#[derive(Clone, Debug)]
pub struct LstmGaussian {
    config: LstmConfig,
    params: ParameterStore,
}

impl LstmGaussian {
    pub fn new(config: LstmConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterStore::new(seed);
        params.insert("lstm.wx", glorot_uniform(&[4 * h, 2], &mut rng))?;
        params.insert("lstm.wh", glorot_uniform(&[4 * h, h], &mut rng))?;
        // forget-gate bias starts at one
        params.insert("lstm.b", Tensor::from_fn(&[4 * h], |i| if (h..2 * h).contains(&i) { 1.0 } else { 0.0 }))?;
        params.insert("head.w", Tensor::zeros(&[2, h]))?;
        params.insert("head.b", Tensor::zeros(&[2]))?;
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &LstmConfig {
        &self.config
    }

    pub fn set_output(&mut self, sigma: f64, lambda: f64) -> Result<()> {
        let mut c = self.config.clone();
        c.sigma = sigma;
        c.lambda = lambda;
        c.validate()?;
        self.config = c;
        Ok(())
    }

    fn mean_var(&self, g: &mut Graph<f32>, b: &Bindings, frames: &[Point]) -> Result<Var> {
        let hd = self.config.hidden;
        let grid = self.config.grid;
        let norm = |n: usize| if n > 1 { 1.0 / (n - 1) as f32 } else { 1.0 };
        let (nr, nc) = (norm(grid.height), norm(grid.width));
        let (wx, wh, bias) = (b.var("lstm.wx")?, b.var("lstm.wh")?, b.var("lstm.b")?);
        let mut h = g.leaf(Tensor::zeros(&[hd]), false);
        let mut c = g.leaf(Tensor::zeros(&[hd]), false);
        for p in frames {
            let x = g.leaf(Tensor::new(vec![2], vec![p.row as f32 * nr, p.col as f32 * nc])?, false);
            let zx = g.linear(wx, x, Some(bias))?;
            let zh = g.linear(wh, h, None)?;
            let z = g.add(zx, zh)?;
            let gate = |g: &mut Graph<f32>, k: usize| g.narrow(z, k * hd, hd);
            let (i, f, u, o) = (gate(g, 0)?, gate(g, 1)?, gate(g, 2)?, gate(g, 3)?);
            let (i, f, u, o) = (g.sigmoid(i), g.sigmoid(f), g.tanh(u), g.sigmoid(o));
            let keep = g.mul(f, c)?;
            let write = g.mul(i, u)?;
            c = g.add(keep, write)?;
            let tc = g.tanh(c);
            h = g.mul(o, tc)?;
        }
        let last = frames.last().expect("window is non-empty");
        let offset = g.linear(b.var("head.w")?, h, Some(b.var("head.b")?))?;
        let base = g.leaf(Tensor::new(vec![2], vec![last.row as f32, last.col as f32])?, false);
        Ok(g.add(base, offset)?)
    }

    /// Predicted mean location `(row, col)` of the next point.
    pub fn mean(&self, frames: &[Point]) -> Result<[f64; 2]> {
        check_window(self, frames)?;
        let mut g = Graph::new();
        let b = self.params.bind_frozen(&mut g);
        let mu = self.mean_var(&mut g, &b, frames)?;
        let d = g.value(mu).data();
        Ok([d[0] as f64, d[1] as f64])
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(self.header());
        c.stores.push(("params".into(), self.params.clone()));
        c
    }

    pub fn header(&self) -> Vec<(String, String)> {
        let c = &self.config;
        vec![
            ("model".into(), "lstm".into()),
            ("seed".into(), self.params.seed().to_string()),
            ("s".into(), c.s.to_string()),
            ("grid".into(), c.grid.to_string()),
            ("hidden".into(), c.hidden.to_string()),
            ("sigma".into(), c.sigma.to_string()),
            ("lambda".into(), c.lambda.to_string()),
            ("train_sigma".into(), c.train_sigma.to_string()),
            ("train_lambda".into(), c.train_lambda.to_string()),
        ]
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.get("model") != Some("lstm") {
            return Err(Error::Checkpoint("not an LSTM checkpoint".into()));
        }
        let config = LstmConfig {
            s: c.parse("s")?,
            grid: c.require("grid")?.parse()?,
            hidden: c.parse("hidden")?,
            sigma: c.parse("sigma")?,
            lambda: c.parse("lambda")?,
            train_sigma: c.parse("train_sigma")?,
            train_lambda: c.parse("train_lambda")?,
        };
        let mut params = c
            .store("params")
            .ok_or_else(|| Error::Checkpoint("no parameters".into()))?
            .clone();
        params.set_seed(c.parse("seed")?);
        let fresh = Self::new(config, 0)?;
        let same = fresh.params.len() == params.len()
            && fresh
                .params
                .iter()
                .zip(params.iter())
                .all(|((a, x), (b, y))| a == b && x.shape() == y.shape());
        if !same {
            return Err(Error::Checkpoint("parameter shapes do not match the LSTM header".into()));
        }
        Ok(Self {
            config: fresh.config,
            params,
        })
    }
}

impl GridModel for LstmGaussian {
    fn name(&self) -> &str {
        "lstm"
    }

    fn grid(&self) -> GridSpec {
        self.config.grid
    }

    fn window_len(&self) -> usize {
        self.config.s
    }

    fn predict(&self, frames: &[Point], _: &Conditioning) -> Result<GridDistribution> {
        let mu = self.mean(frames)?;
        gaussian_grid(self.config.grid, mu, self.config.sigma, self.config.lambda)
    }
}

impl Trainable for LstmGaussian {
    fn params(&self) -> &ParameterStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    fn checkpoint_header(&self) -> Vec<(String, String)> {
        self.header()
    }

    fn window_loss(&self, frames: &[Point], target: Point, _: Option<&ReferenceImage>) -> Result<(f64, Vec<Tensor<f32>>)> {
        check_window(self, frames)?;
        let grid = self.config.grid;
        let t = grid.index(target).ok_or(Error::OutOfGrid {
            id: "target".into(),
            index: 0,
            point: target,
            height: grid.height,
            width: grid.width,
        })?;
        let mut g = Graph::new();
        let b = self.params.bind(&mut g);
        let mu = self.mean_var(&mut g, &b, frames)?;
        let logits = g.gaussian_logits(mu, grid.height, grid.width, self.config.train_sigma)?;
        let flat = g.reshape(logits, &[grid.cells()])?;
        let loss = g.nll(flat, t, self.config.train_lambda)?;
        let value = g.value(loss).item().expect("scalar") as f64;
        let mut grads = g.backward(loss)?;
        Ok((value, b.collect(&self.params, &mut grads)))
    }
}

/// Fits the mean by maximum likelihood at the training spread, then picks
/// `sigma` and `lambda` on the validation set.
pub fn lstm_train(
    fit: &Dataset,
    validation: &Dataset,
    config: LstmConfig,
    train_config: &TrainConfig,
) -> Result<(LstmGaussian, TrainReport, SearchResult)> {
    let mut model = LstmGaussian::new(config, train_config.seed)?;
    let report = train(&mut model, fit, Some(validation), train_config)?;
    let search = grid_search(|sigma, lambda| {
        let mut m = model.clone();
        m.set_output(sigma, lambda)?;
        Ok(cross_entropy(&m, validation)?.per_step)
    })?;
    model.set_output(search.sigma, search.lambda)?;
    Ok((model, report, search))
}
