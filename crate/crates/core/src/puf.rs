//! Arbiter PUF simulation.
//!
//! A chain of `n` switch stages carries two racing edges. Each stage holds
//! four path delays; with select bit 0 the edges pass straight through, with
//! select bit 1 they cross. After the last stage the arbiter outputs 1 when
//! the top edge arrives strictly first, i.e. when
//! `delta = bottom - top > 0`. A tie resolves to 0.
//!
//! The same race is also expressed as an additive linear model: with
//! `a_i = d_bb - d_tt` and `b_i = d_tb - d_bt` for stage `i`, the final delay
//! difference equals `<w, phi(c)>` for the weight vector returned by
//! [`ArbiterChain::to_linear`] and the parity features of
//! [`crate::features::phi`].

use rand_distr::{Distribution, Normal, StandardNormal};

use crate::bits::{BitWord, Challenge, Response};
use crate::error::{Error, Result};
use crate::features;
use crate::seed;

/// Anything that maps challenges to responses.
pub trait Puf {
    fn challenge_width(&self) -> usize;

    fn response_width(&self) -> usize;

    /// Standard deviation of the evaluation noise; zero means deterministic.
    fn noise_sigma(&self) -> f64;

    /// Evaluate one challenge. Noise is only applied when `noise_seed` is
    /// given and the instance has a positive noise sigma.
    fn respond(&self, challenge: &Challenge, noise_seed: Option<u64>) -> Result<Response>;
}

/// The four path delays of one switch stage, in arbitrary time units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageDelays {
    /// top in to top out, select 0
    pub d_tt: f64,
    /// bottom in to bottom out, select 0
    pub d_bb: f64,
    /// top in to bottom out, select 1
    pub d_tb: f64,
    /// bottom in to top out, select 1
    pub d_bt: f64,
}

impl StageDelays {
    pub fn new(d_tt: f64, d_bb: f64, d_tb: f64, d_bt: f64) -> Result<Self> {
        let stage = StageDelays {
            d_tt,
            d_bb,
            d_tb,
            d_bt,
        };
        let all_finite = [
            d_tt,
            d_bb,
            d_tb,
            d_bt,
            stage.straight_diff(),
            stage.cross_diff(),
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::invalid_parameter("stage delays must be finite"));
        }
        Ok(stage)
    }

    /// `a = d_bb - d_tt`
    pub fn straight_diff(&self) -> f64 {
        self.d_bb - self.d_tt
    }

    /// `b = d_tb - d_bt`
    pub fn cross_diff(&self) -> f64 {
        self.d_tb - self.d_bt
    }
}

/// Manufacturing-variation distribution for individual path delays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayParams {
    pub mean: f64,
    pub sigma: f64,
}

impl Default for DelayParams {
    fn default() -> Self {
        DelayParams {
            mean: 10.0,
            sigma: 0.5,
        }
    }
}

impl DelayParams {
    pub fn new(mean: f64, sigma: f64) -> Result<Self> {
        let params = DelayParams { mean, sigma };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() {
            return Err(Error::invalid_parameter("delay mean must be finite"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid_parameter(format!(
                "delay sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Where a sampled chain came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub params: DelayParams,
    pub seed: u64,
}

/// A classical single-output arbiter PUF.
#[derive(Debug, Clone, PartialEq)]
pub struct ArbiterChain {
    stages: Vec<StageDelays>,
    noise_sigma: f64,
    provenance: Option<Provenance>,
}

fn check_noise_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid_parameter(format!(
            "noise sigma must be finite and non-negative, got {sigma}"
        )))
    }
}

/// Standard-normal noise sample scaled by `sigma`. Scaling a shared draw
/// keeps sweeps over sigma comparable under a fixed seed.
fn noise_sample(noise_seed: u64, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(&mut seed::rng(noise_seed));
    sigma * z
}

impl ArbiterChain {
    /// Chain with explicitly given stages and no recorded sampling provenance.
    pub fn from_stages(stages: Vec<StageDelays>, noise_sigma: f64) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::invalid_parameter("a chain needs at least one stage"));
        }
        check_noise_sigma(noise_sigma)?;
        Ok(ArbiterChain {
            stages,
            noise_sigma,
            provenance: None,
        })
    }

    /// Sample `n` stages with every delay drawn independently from
    /// `Normal(params.mean, params.sigma^2)`.
    pub fn sample(n: usize, params: DelayParams, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid_parameter("stage count must be at least 1"));
        }
        params.validate()?;
        let dist = Normal::new(params.mean, params.sigma)
            .map_err(|e| Error::invalid_parameter(e.to_string()))?;
        let mut rng = seed::rng(seed);
        let stages = (0..n)
            .map(|_| StageDelays {
                d_tt: dist.sample(&mut rng),
                d_bb: dist.sample(&mut rng),
                d_tb: dist.sample(&mut rng),
                d_bt: dist.sample(&mut rng),
            })
            .collect();
        Ok(ArbiterChain {
            stages,
            noise_sigma: 0.0,
            provenance: Some(Provenance { params, seed }),
        })
    }

    pub fn with_noise_sigma(mut self, sigma: f64) -> Result<Self> {
        check_noise_sigma(sigma)?;
        self.noise_sigma = sigma;
        Ok(self)
    }

    pub fn stages(&self) -> &[StageDelays] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn provenance(&self) -> Option<Provenance> {
        self.provenance
    }

    /// Noise-free `bottom - top` arrival difference after the last stage.
    pub fn delay_difference(&self, c: &Challenge) -> Result<f64> {
        Error::check_width(self.stages.len(), c.width())?;
        let (mut top, mut bottom) = (0.0f64, 0.0f64);
        for (i, s) in self.stages.iter().enumerate() {
            if c.get(i) {
                (top, bottom) = (bottom + s.d_bt, top + s.d_tb);
            } else {
                (top, bottom) = (top + s.d_tt, bottom + s.d_bb);
            }
        }
        Ok(bottom - top)
    }

    /// Race the two edges through the chain and let the arbiter decide.
    pub fn eval_brute(&self, c: &Challenge, noise_seed: Option<u64>) -> Result<bool> {
        let mut delta = self.delay_difference(c)?;
        if let Some(ns) = noise_seed {
            if self.noise_sigma > 0.0 {
                delta += noise_sample(ns, self.noise_sigma);
            }
        }
        Ok(delta > 0.0)
    }

    /// Weights of the equivalent additive linear delay model.
    pub fn to_linear(&self) -> LinearModel {
        let n = self.stages.len();
        let mut w = vec![0.0; n + 1];
        for (k, s) in self.stages.iter().enumerate() {
            let (a, b) = (s.straight_diff(), s.cross_diff());
            w[k] += (a - b) / 2.0;
            w[k + 1] += (a + b) / 2.0;
        }
        LinearModel { weights: w }
    }
}

impl Puf for ArbiterChain {
    fn challenge_width(&self) -> usize {
        self.stages.len()
    }

    fn response_width(&self) -> usize {
        1
    }

    fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    fn respond(&self, challenge: &Challenge, noise_seed: Option<u64>) -> Result<Response> {
        let bit = self.eval_brute(challenge, noise_seed)?;
        Ok(Response::from_bits(&[bit]))
    }
}

/// Additive delay model: response is `1` iff `<w, phi(c)> > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    weights: Vec<f64>,
}

impl LinearModel {
    /// `weights` has one entry per stage plus a trailing constant term.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::invalid_parameter(
                "a linear model needs n + 1 >= 2 weights",
            ));
        }
        Ok(LinearModel { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn stages(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn margin(&self, c: &Challenge) -> Result<f64> {
        Error::check_width(self.stages(), c.width())?;
        let phi = features::phi(c);
        Ok(self
            .weights
            .iter()
            .zip(phi.values())
            .map(|(w, x)| w * x)
            .sum())
    }

    pub fn eval_linear(&self, c: &Challenge) -> Result<bool> {
        Ok(self.margin(c)? > 0.0)
    }
}

/// N parallel arbiter chains of N stages sharing one N-bit challenge; bit `k`
/// of the response is the arbiter output of chain `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiBitPuf {
    chains: Vec<ArbiterChain>,
    seed: Option<u64>,
}

impl MultiBitPuf {
    pub fn from_chains(chains: Vec<ArbiterChain>) -> Result<Self> {
        let width = chains.len();
        if width == 0 {
            return Err(Error::invalid_parameter("need at least one chain"));
        }
        for chain in &chains {
            Error::check_width(width, chain.len())?;
        }
        Ok(MultiBitPuf { chains, seed: None })
    }

    /// Chain `k` is sampled from child seed `k` of `seed`.
    pub fn sample(width: usize, params: DelayParams, seed: u64) -> Result<Self> {
        if width == 0 {
            return Err(Error::invalid_parameter(
                "response width must be at least 1",
            ));
        }
        let chains = (0..width as u64)
            .map(|k| ArbiterChain::sample(width, params, seed::derive_seed(seed, k)))
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiBitPuf {
            chains,
            seed: Some(seed),
        })
    }

    pub fn with_noise_sigma(self, sigma: f64) -> Result<Self> {
        let seed = self.seed;
        let chains = self
            .chains
            .into_iter()
            .map(|c| c.with_noise_sigma(sigma))
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiBitPuf { chains, seed })
    }

    pub fn chains(&self) -> &[ArbiterChain] {
        &self.chains
    }

    pub fn width(&self) -> usize {
        self.chains.len()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn eval_multibit(&self, c: &Challenge, noise_seed: Option<u64>) -> Result<Response> {
        Error::check_width(self.width(), c.width())?;
        let mut out = BitWord::zeros(self.width());
        for (k, chain) in self.chains.iter().enumerate() {
            let chain_noise = noise_seed.map(|s| seed::derive_seed(s, k as u64));
            if chain.eval_brute(c, chain_noise)? {
                out.set(k, true);
            }
        }
        Ok(Response::new(out))
    }
}

impl Puf for MultiBitPuf {
    fn challenge_width(&self) -> usize {
        self.width()
    }

    fn response_width(&self) -> usize {
        self.width()
    }

    fn noise_sigma(&self) -> f64 {
        self.chains[0].noise_sigma
    }

    fn respond(&self, challenge: &Challenge, noise_seed: Option<u64>) -> Result<Response> {
        self.eval_multibit(challenge, noise_seed)
    }
}
