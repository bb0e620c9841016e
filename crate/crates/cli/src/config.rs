//! Run configuration: a `key = value` file, overridden by command-line flags.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use apuf::{DelayParams, FeatureMapKind, LrHyperParams};

/// Keys accepted in a config file.
pub const KEYS: &[&str] = &[
    "n",
    "chains",
    "delay_mean",
    "delay_sigma",
    "noise_sigma",
    "seed",
    "features",
    "lr",
    "epochs",
    "l2",
    "tol",
    "count",
    "test",
    "counts",
    "test_fractions",
    "instances",
    "challenges",
    "repetitions",
    "output",
    "threads",
];

/// Every field is optional so that explicit settings can be told apart
/// from defaults; the accessors apply the defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub n: Option<usize>,
    pub chains: Option<usize>,
    pub delay_mean: Option<f64>,
    pub delay_sigma: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub seed: Option<u64>,
    pub features: Option<FeatureMapKind>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub l2: Option<f64>,
    pub tol: Option<f64>,
    pub count: Option<usize>,
    pub test: Option<f64>,
    pub counts: Option<Vec<usize>>,
    pub test_fractions: Option<Vec<f64>>,
    pub instances: Option<usize>,
    pub challenges: Option<usize>,
    pub repetitions: Option<usize>,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: Display,
{
    raw.parse()
        .map_err(|e| anyhow!("{key}: cannot parse {raw:?}: {e}"))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    let items = raw
        .split(',')
        .map(|s| parse_value(key, s.trim()))
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        bail!("{key}: empty list");
    }
    Ok(items)
}

fn join<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Parse config file text. Unknown and repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {line_no}: expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                bail!("line {line_no}: duplicate key {key}");
            }
            cfg.set(key, value)
                .with_context(|| format!("line {line_no}"))?;
            seen.push(key);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n" => self.n = Some(parse_value(key, value)?),
            "chains" => self.chains = Some(parse_value(key, value)?),
            "delay_mean" => self.delay_mean = Some(parse_value(key, value)?),
            "delay_sigma" => self.delay_sigma = Some(parse_value(key, value)?),
            "noise_sigma" => self.noise_sigma = Some(parse_value(key, value)?),
            "seed" => self.seed = Some(parse_value(key, value)?),
            "features" => self.features = Some(parse_value(key, value)?),
            "lr" => self.lr = Some(parse_value(key, value)?),
            "epochs" => self.epochs = Some(parse_value(key, value)?),
            "l2" => self.l2 = Some(parse_value(key, value)?),
            "tol" => self.tol = Some(parse_value(key, value)?),
            "count" => self.count = Some(parse_value(key, value)?),
            "test" => self.test = Some(parse_value(key, value)?),
            "counts" => self.counts = Some(parse_list(key, value)?),
            "test_fractions" => self.test_fractions = Some(parse_list(key, value)?),
            "instances" => self.instances = Some(parse_value(key, value)?),
            "challenges" => self.challenges = Some(parse_value(key, value)?),
            "repetitions" => self.repetitions = Some(parse_value(key, value)?),
            "output" => self.output = Some(PathBuf::from(value)),
            "threads" => self.threads = Some(parse_value(key, value)?),
            _ => bail!("unknown key {key:?} (known: {})", KEYS.join(", ")),
        }
        Ok(())
    }

    /// Overlay every field that `other` sets.
    pub fn merge(&mut self, other: RunConfig) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            n,
            chains,
            delay_mean,
            delay_sigma,
            noise_sigma,
            seed,
            features,
            lr,
            epochs,
            l2,
            tol,
            count,
            test,
            counts,
            test_fractions,
            instances,
            challenges,
            repetitions,
            output,
            threads
        );
    }

    pub fn stages(&self) -> usize {
        self.n.unwrap_or(64)
    }

    /// Defaults to `n`, the multi-bit design.
    pub fn chain_count(&self) -> usize {
        self.chains.unwrap_or_else(|| self.stages())
    }

    pub fn delay_params(&self) -> Result<DelayParams> {
        Ok(DelayParams::new(
            self.delay_mean.unwrap_or(10.0),
            self.delay_sigma.unwrap_or(0.5),
        )?)
    }

    pub fn noise(&self) -> f64 {
        self.noise_sigma.unwrap_or(0.0)
    }

    pub fn master_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn feature_map(&self) -> FeatureMapKind {
        self.features.unwrap_or(FeatureMapKind::RawBits)
    }

    pub fn hyper_params(&self) -> Result<LrHyperParams> {
        let d = LrHyperParams::default();
        let hp = LrHyperParams {
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            epochs: self.epochs.unwrap_or(d.epochs),
            l2: self.l2.unwrap_or(d.l2),
            tol: self.tol.unwrap_or(d.tol),
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn crp_count(&self) -> usize {
        self.count.unwrap_or(4920)
    }

    pub fn test_fraction(&self) -> f64 {
        self.test.unwrap_or(0.25)
    }

    pub fn crp_counts(&self) -> Vec<usize> {
        self.counts
            .clone()
            .unwrap_or_else(|| vec![750, 1650, 2850, 4920])
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.test_fractions
            .clone()
            .unwrap_or_else(|| vec![0.15, 0.25, 0.35])
    }

    pub fn instance_count(&self) -> usize {
        self.instances.unwrap_or(50)
    }

    pub fn challenge_count(&self) -> usize {
        self.challenges.unwrap_or(1000)
    }

    pub fn repetition_count(&self) -> usize {
        self.repetitions.unwrap_or(10)
    }

    /// Check the values shared by every command.
    pub fn validate(&self) -> Result<()> {
        if self.stages() == 0 {
            bail!("n must be at least 1");
        }
        if self.chain_count() == 0 {
            bail!("chains must be at least 1");
        }
        if self.chain_count() > 1 && self.chain_count() != self.stages() {
            bail!(
                "a multi-bit device needs chains == n (got n={}, chains={})",
                self.stages(),
                self.chain_count()
            );
        }
        self.delay_params()?;
        let noise = self.noise();
        if !(noise.is_finite() && noise >= 0.0) {
            bail!("noise_sigma must be finite and non-negative");
        }
        self.hyper_params()?;
        if self.count == Some(0) {
            bail!("count must be at least 1");
        }
        for f in std::iter::once(self.test_fraction()).chain(self.fractions()) {
            if !(f > 0.0 && f < 1.0) {
                bail!("test fraction {f} is outside (0, 1)");
            }
        }
        if self.crp_counts().contains(&0) {
            bail!("counts must be at least 1");
        }
        if self.instances == Some(0) || self.challenges == Some(0) {
            bail!("instances and challenges must be at least 1");
        }
        if self.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        Ok(())
    }

    /// Resolved settings as `# key = value` lines. Output paths and the
    /// thread count are left out so they cannot change artifact bytes.
    pub fn echo(&self) -> String {
        let hp = self.hyper_params().unwrap_or_default();
        let params = self.delay_params().unwrap_or_default();
        let lines = [
            ("n", self.stages().to_string()),
            ("chains", self.chain_count().to_string()),
            ("delay_mean", params.mean.to_string()),
            ("delay_sigma", params.sigma.to_string()),
            ("noise_sigma", self.noise().to_string()),
            ("seed", self.master_seed().to_string()),
            ("features", self.feature_map().to_string()),
            ("lr", hp.learning_rate.to_string()),
            ("epochs", hp.epochs.to_string()),
            ("l2", hp.l2.to_string()),
            ("tol", hp.tol.to_string()),
            ("count", self.crp_count().to_string()),
            ("test", self.test_fraction().to_string()),
            ("counts", join(&self.crp_counts())),
            ("test_fractions", join(&self.fractions())),
            ("instances", self.instance_count().to_string()),
            ("challenges", self.challenge_count().to_string()),
            ("repetitions", self.repetition_count().to_string()),
        ];
        lines
            .into_iter()
            .map(|(k, v)| format!("# {k} = {v}\n"))
            .collect()
    }
}
