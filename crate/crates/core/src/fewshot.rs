//! Seeded N-way K-shot episodes.
//!
//! Protocol: the classes with at least K+Q members are shuffled and the
//! first N kept, in shuffled order; each kept class then shuffles its
//! members and takes K support and the next Q query shapes. Episode labels
//! are the class positions 0..N. Every draw comes from one ChaCha8 stream
//! seeded with the episode seed.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::inference::ClsBank;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeSpec {
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    /// Original class ids in episode-label order.
    pub classes: Vec<usize>,
    /// (pool index, episode label)
    pub support: Vec<(usize, usize)>,
    pub query: Vec<(usize, usize)>,
}

pub fn sample_episode(labels: &[usize], spec: EpisodeSpec, seed: u64) -> Result<Episode> {
    let insufficient = || Error::InsufficientPool {
        ways: spec.ways,
        shots: spec.shots,
        queries: spec.queries,
    };
    if spec.ways == 0 || spec.shots == 0 {
        return Err(insufficient());
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    let need = spec.shots + spec.queries;
    let mut eligible: Vec<usize> = members
        .iter()
        .filter(|(_, m)| m.len() >= need)
        .map(|(&c, _)| c)
        .collect();
    if eligible.len() < spec.ways {
        return Err(insufficient());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    eligible.truncate(spec.ways);

    let mut support = Vec::with_capacity(spec.ways * spec.shots);
    let mut query = Vec::with_capacity(spec.ways * spec.queries);
    for (episode_label, class) in eligible.iter().enumerate() {
        let mut idx = members[class].clone();
        idx.shuffle(&mut rng);
        support.extend(idx[..spec.shots].iter().map(|&i| (i, episode_label)));
        query.extend(idx[spec.shots..need].iter().map(|&i| (i, episode_label)));
    }
    Ok(Episode {
        classes: eligible,
        support,
        query,
    })
}

/// Solves one episode over pre-computed pool descriptors: the support set
/// becomes a bank and query accuracy is returned.
pub fn run_episode(
    descriptors: &[Vec<f64>],
    labels: &[usize],
    spec: EpisodeSpec,
    seed: u64,
    gamma: f64,
) -> Result<f64> {
    let ep = sample_episode(labels, spec, seed)?;
    let support: Vec<Vec<f64>> = ep.support.iter().map(|(i, _)| descriptors[*i].clone()).collect();
    let names = (0..spec.ways).map(|c| ep.classes[c].to_string()).collect();
    let bank = ClsBank::from_descriptors(
        &support,
        ep.support.iter().map(|(_, l)| *l).collect(),
        names,
        gamma,
        [0; 32],
    )?;
    if ep.query.is_empty() {
        return Ok(1.0);
    }
    let mut correct = 0;
    for (i, label) in &ep.query {
        if bank.classify(&descriptors[*i])?.label == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / ep.query.len() as f64)
}

/// Encodes only the shapes an episode touches, then solves it.
pub fn fewshot_episode(
    pool: &[(PointCloud, usize)],
    encoder: &Encoder,
    spec: EpisodeSpec,
    seed: u64,
) -> Result<f64> {
    let labels: Vec<usize> = pool.iter().map(|(_, l)| *l).collect();
    let ep = sample_episode(&labels, spec, seed)?;
    let used: Vec<usize> = ep.support.iter().chain(&ep.query).map(|(i, _)| *i).collect();
    let encoded: Vec<(usize, Vec<f64>)> = used
        .par_iter()
        .map(|&i| Ok((i, encoder.encode_classification(&pool[i].0)?.vector)))
        .collect::<Result<_>>()?;
    let mut descriptors = vec![Vec::new(); pool.len()];
    for (i, d) in encoded {
        descriptors[i] = d;
    }
    run_episode(&descriptors, &labels, spec, seed, encoder.config().gamma)
}
