//! Flat JSON experiment configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::datafit::{DataFit, LossKind};
use crate::error::{Error, Result};
use crate::ops::Haar;
use crate::perturbation::{NoiseKind, NoiseSpec};
use crate::regularizer::{Regularizer, TvInner};
use crate::solver::Schedule;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// The 2×2 system with columns (1,1), (1,0) and exact datum (2,1).
    Toy,
    /// A dense matrix from `matrix` applied to `x_true`.
    Matrix,
    /// A generated image, see [`Generator`].
    Synthetic,
    /// A PGM image read from `image_path`.
    Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Blocks,
    Bumps,
    Checkerboard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegKind {
    SquaredNorm,
    HaarL1,
    Tv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Vanilla,
    Polynomial,
    Warm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseName {
    None,
    Gaussian,
    SaltPepper,
    Poisson,
    Mixed,
}

/// One experiment. Every key has a default, so `{}` is a valid (toy) config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub generator: Generator,
    pub image_path: Option<PathBuf>,
    /// Side length of square synthetic images; `rows`/`cols` override it.
    pub size: usize,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub blur: bool,
    pub matrix: Option<Vec<Vec<f64>>>,
    pub x_true: Option<Vec<f64>>,

    pub loss: LossKind,
    pub huber_sigma: f64,
    pub l1l2_a1: f64,
    pub l1l2_a2: f64,

    pub regularizer: RegKind,
    pub reg_mu: f64,
    pub reg_sigma: f64,
    pub haar_levels: usize,
    pub tv_inner_iters: usize,
    pub tv_inner_tol: f64,

    pub schedule: ScheduleKind,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub n_v: usize,
    pub lambda0: f64,
    pub beta: f64,
    pub n_wr: usize,
    pub eps_wr: f64,

    pub noise: NoiseName,
    pub noise_variance: f64,
    pub noise_intensity: f64,
    pub noise_peak: f64,

    /// Noise variance used by SURE; the realized `‖ŷ − ȳ‖²/d` when absent.
    pub sure_sigma2: Option<f64>,
    pub sure_window: usize,
    /// Also run the noise-scale sweep in `semiconv`.
    pub delta_sweep: bool,

    pub max_iters: usize,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: ProblemKind::Toy,
            generator: Generator::Blocks,
            image_path: None,
            size: 64,
            rows: None,
            cols: None,
            blur: true,
            matrix: None,
            x_true: None,
            loss: LossKind::Square,
            huber_sigma: 1.0,
            l1l2_a1: 1.0,
            l1l2_a2: 1.0,
            regularizer: RegKind::SquaredNorm,
            reg_mu: 0.1,
            reg_sigma: 1.0,
            haar_levels: 3,
            tv_inner_iters: TvInner::default().iters,
            tv_inner_tol: TvInner::default().tol,
            schedule: ScheduleKind::Polynomial,
            lambda_max: 10.0,
            lambda_min: 0.1,
            n_v: 1000,
            lambda0: 1.0,
            beta: 1.0,
            n_wr: 30,
            eps_wr: 1e-5,
            noise: NoiseName::None,
            noise_variance: 0.0,
            noise_intensity: 0.0,
            noise_peak: 1.0,
            sure_sigma2: None,
            sure_window: crate::stopping::DEFAULT_SURE_WINDOW,
            delta_sweep: false,
            max_iters: 1000,
            seed: 0,
            out_dir: None,
        }
    }
}

/// Seed offsets for the independent random streams of one experiment.
pub const TRUTH_STREAM: u64 = 0;
pub const NOISE_STREAM: u64 = 1;
pub const SURE_STREAM: u64 = 2;

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. A relative `image_path` is resolved against the
    /// config's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        if let Some(p) = &cfg.image_path {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.image_path = Some(dir.join(p));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn stream_seed(&self, stream: u64) -> u64 {
        self.seed.wrapping_add(stream)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.unwrap_or(self.size), self.cols.unwrap_or(self.size))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(msg));
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                bad(format!("{name} must be positive, got {v}"))
            }
        };
        match self.problem {
            ProblemKind::Image => match &self.image_path {
                None => return bad("problem \"image\" needs image_path".into()),
                Some(p) if !p.exists() => {
                    return bad(format!("image {} does not exist", p.display()))
                }
                _ => {}
            },
            ProblemKind::Matrix => {
                let (Some(m), Some(x)) = (&self.matrix, &self.x_true) else {
                    return bad("problem \"matrix\" needs matrix and x_true".into());
                };
                if m.is_empty() || m.iter().any(|r| r.len() != x.len()) {
                    return bad("matrix rows must all have x_true's length".into());
                }
            }
            ProblemKind::Synthetic => {
                let (r, c) = self.shape();
                if r == 0 || c == 0 {
                    return bad("image size must be positive".into());
                }
            }
            ProblemKind::Toy => {}
        }
        positive(self.huber_sigma, "huber_sigma")?;
        positive(self.l1l2_a1, "l1l2_a1")?;
        positive(self.l1l2_a2, "l1l2_a2")?;
        positive(self.reg_mu, "reg_mu")?;
        positive(self.reg_sigma, "reg_sigma")?;
        if self.tv_inner_iters == 0 {
            return bad("tv_inner_iters must be at least 1".into());
        }
        if !(self.tv_inner_tol >= 0.0) {
            return bad("tv_inner_tol must be nonnegative".into());
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if self.sure_window == 0 {
            return bad("sure_window must be at least 1".into());
        }
        if let Some(s) = self.sure_sigma2 {
            if !(s >= 0.0) {
                return bad(format!("sure_sigma2 must be nonnegative, got {s}"));
            }
        }
        self.schedule_spec()?;
        self.noise_spec().validate()?;
        Ok(())
    }

    pub fn schedule_spec(&self) -> Result<Schedule> {
        match self.schedule {
            ScheduleKind::Vanilla => Schedule::vanilla_exp(self.lambda_max, self.lambda_min, self.n_v),
            ScheduleKind::Polynomial => Schedule::polynomial(self.lambda0, self.beta),
            ScheduleKind::Warm => {
                Schedule::warm_restart(self.lambda_max, self.lambda_min, self.n_wr, self.eps_wr)
            }
        }
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        let kind = match self.noise {
            NoiseName::None => NoiseKind::None,
            NoiseName::Gaussian => NoiseKind::Gaussian {
                variance: self.noise_variance,
            },
            NoiseName::SaltPepper => NoiseKind::SaltPepper {
                intensity: self.noise_intensity,
            },
            NoiseName::Poisson => NoiseKind::Poisson {
                peak: self.noise_peak,
            },
            NoiseName::Mixed => NoiseKind::Mixed {
                variance: self.noise_variance,
                intensity: self.noise_intensity,
            },
        };
        NoiseSpec {
            kind,
            seed: self.stream_seed(NOISE_STREAM),
        }
    }

    pub fn datafit(&self, y: Tensor) -> Result<DataFit> {
        match self.loss {
            LossKind::Square => DataFit::square(y),
            LossKind::L1 => DataFit::l1(y),
            LossKind::Kl => DataFit::kl(y),
            LossKind::Huber => DataFit::huber(y, self.huber_sigma),
            LossKind::L1l2 => DataFit::l1l2(y, self.l1l2_a1, self.l1l2_a2),
        }
    }

    pub fn regularizer(&self, shape: (usize, usize)) -> Result<Regularizer> {
        match self.regularizer {
            RegKind::SquaredNorm => Ok(Regularizer::squared_norm()),
            RegKind::HaarL1 => {
                let w = Haar::new(shape.0, shape.1, self.haar_levels)?;
                Regularizer::l1_analysis(Arc::new(w), self.reg_mu, self.reg_sigma)
            }
            RegKind::Tv => Regularizer::tv_quad(
                self.reg_mu,
                self.reg_sigma,
                TvInner {
                    iters: self.tv_inner_iters,
                    tol: self.tv_inner_tol,
                },
            ),
        }
    }

    /// True when both configs describe the same ground truth, operator and
    /// noisy datum.
    pub fn same_problem(&self, other: &ExperimentConfig) -> bool {
        self.problem == other.problem
            && self.generator == other.generator
            && self.image_path == other.image_path
            && self.shape() == other.shape()
            && self.blur == other.blur
            && self.matrix == other.matrix
            && self.x_true == other.x_true
            && self.noise_spec() == other.noise_spec()
    }
}
