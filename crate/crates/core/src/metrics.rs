//! PUF quality statistics.
//!
//! Hamming distances are normalized by the response width. Definitions:
//!
//! - uniformity: fraction of 1 bits over all responses of one instance;
//! - uniqueness: mean pairwise inter-instance distance over all `i < j`;
//! - reliability: one minus the mean distance between a noise-free reference
//!   response and `r` noisy re-evaluations;
//! - bit aliasing: per response position, the fraction of 1s across all
//!   instances and challenges.

use std::fmt;

use rayon::prelude::*;

use crate::bits::{Challenge, Response};
use crate::error::{Error, Result};
use crate::puf::Puf;
use crate::seed;

fn responses<P: Puf + Sync>(puf: &P, challenges: &[Challenge]) -> Result<Vec<Response>> {
    challenges
        .par_iter()
        .map(|c| puf.respond(c, None))
        .collect()
}

fn check_challenges(challenges: &[Challenge]) -> Result<()> {
    if challenges.is_empty() {
        Err(Error::invalid_input("need at least one challenge"))
    } else {
        Ok(())
    }
}

fn check_population<P: Puf>(instances: &[P]) -> Result<()> {
    if instances.len() < 2 {
        return Err(Error::invalid_parameter(format!(
            "need at least two instances, got {}",
            instances.len()
        )));
    }
    let (cw, rw) = (
        instances[0].challenge_width(),
        instances[0].response_width(),
    );
    for p in instances {
        Error::check_width(cw, p.challenge_width())?;
        Error::check_width(rw, p.response_width())?;
    }
    Ok(())
}

pub fn uniformity<P: Puf + Sync>(instance: &P, challenges: &[Challenge]) -> Result<f64> {
    check_challenges(challenges)?;
    let ones: usize = responses(instance, challenges)?
        .iter()
        .map(|r| r.count_ones())
        .sum();
    Ok(ones as f64 / (challenges.len() * instance.response_width()) as f64)
}

pub fn uniqueness<P: Puf + Sync>(instances: &[P], challenges: &[Challenge]) -> Result<f64> {
    check_population(instances)?;
    check_challenges(challenges)?;
    let all: Vec<Vec<Response>> = instances
        .iter()
        .map(|p| responses(p, challenges))
        .collect::<Result<_>>()?;
    let width = instances[0].response_width() as f64;
    let t = challenges.len() as f64;
    let k = instances.len();
    let mut total = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            let hd: usize = all[i]
                .iter()
                .zip(&all[j])
                .map(|(a, b)| a.hamming_distance(b))
                .sum();
            total += hd as f64 / (width * t);
        }
    }
    Ok(2.0 * total / (k * (k - 1)) as f64)
}

/// Noise seed for repetition `rep` of challenge `index`.
pub fn repetition_seed(noise_seed: u64, rep: usize, index: usize) -> u64 {
    seed::derive_seed(seed::derive_seed(noise_seed, rep as u64), index as u64)
}

pub fn reliability<P: Puf + Sync>(
    instance: &P,
    challenges: &[Challenge],
    repetitions: usize,
    noise_seed: u64,
) -> Result<f64> {
    check_challenges(challenges)?;
    if instance.noise_sigma() == 0.0 {
        return Ok(1.0);
    }
    if repetitions < 2 {
        return Err(Error::invalid_parameter(
            "reliability needs at least two repetitions",
        ));
    }
    let reference = responses(instance, challenges)?;
    let width = instance.response_width() as f64;
    let flips: usize = (0..repetitions)
        .into_par_iter()
        .map(|rep| {
            challenges
                .iter()
                .zip(&reference)
                .enumerate()
                .map(|(i, (c, r))| {
                    let noisy = instance.respond(c, Some(repetition_seed(noise_seed, rep, i)))?;
                    Ok(noisy.hamming_distance(r))
                })
                .sum::<Result<usize>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    let mean_hd = flips as f64 / (width * (challenges.len() * repetitions) as f64);
    Ok(1.0 - mean_hd)
}

pub fn bit_aliasing<P: Puf + Sync>(instances: &[P], challenges: &[Challenge]) -> Result<Vec<f64>> {
    check_population(instances)?;
    check_challenges(challenges)?;
    let width = instances[0].response_width();
    let mut ones = vec![0usize; width];
    for p in instances {
        for r in responses(p, challenges)? {
            for (k, slot) in ones.iter_mut().enumerate() {
                if r.get(k) {
                    *slot += 1;
                }
            }
        }
    }
    let total = (instances.len() * challenges.len()) as f64;
    Ok(ones.into_iter().map(|c| c as f64 / total).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Mean uniformity over instances.
    pub uniformity: f64,
    pub uniqueness: f64,
    /// Mean reliability over instances.
    pub reliability: f64,
    pub bit_aliasing: Vec<f64>,
    pub instances: usize,
    pub challenges: usize,
    pub repetitions: usize,
    pub noise_sigma: f64,
    pub puf_seed: u64,
    pub challenge_seed: u64,
    pub noise_seed: u64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "instances,challenges,repetitions,noise_sigma,\
         uniformity,uniqueness,reliability,bit_aliasing_min,bit_aliasing_max";

    pub fn csv_row(&self) -> String {
        let (lo, hi) = self.aliasing_range();
        format!(
            "{},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4}",
            self.instances,
            self.challenges,
            self.repetitions,
            self.noise_sigma,
            self.uniformity,
            self.uniqueness,
            self.reliability,
            lo,
            hi
        )
    }

    fn aliasing_range(&self) -> (f64, f64) {
        self.bit_aliasing
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (lo, hi) = self.aliasing_range();
        writeln!(
            f,
            "instances={} challenges={} repetitions={} noise_sigma={}",
            self.instances, self.challenges, self.repetitions, self.noise_sigma
        )?;
        writeln!(
            f,
            "seeds: puf={} challenge={} noise={}",
            self.puf_seed, self.challenge_seed, self.noise_seed
        )?;
        writeln!(f, "{:<14}{:>8}", "metric", "value")?;
        writeln!(f, "{:<14}{:>8.4}", "uniformity", self.uniformity)?;
        writeln!(f, "{:<14}{:>8.4}", "uniqueness", self.uniqueness)?;
        writeln!(f, "{:<14}{:>8.4}", "reliability", self.reliability)?;
        write!(f, "{:<14}{:>8.4} .. {:.4}", "bit aliasing", lo, hi)
    }
}
