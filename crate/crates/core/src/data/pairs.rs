//! Source/target pair scheduling.
//!
//! One epoch visits every source index once in a fresh shuffled order. The
//! target side runs its own sequence of shuffled passes and simply wraps
//! around, so its cycle is independent of the source epoch. Both orders are
//! a pure function of `(seed, step)`, which makes resuming trivial.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{Domain, Sample};

/// Indexed collection of samples (in memory or on disk).
pub trait SampleSource {
    fn len(&self) -> usize;
    fn get(&self, index: usize) -> Result<Sample>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SampleSource for [Sample] {
    fn len(&self) -> usize {
        <[Sample]>::len(self)
    }

    fn get(&self, index: usize) -> Result<Sample> {
        <[Sample]>::get(self, index)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("sample index {index} out of range (len {})", self.len())))
    }
}

impl SampleSource for Vec<Sample> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn get(&self, index: usize) -> Result<Sample> {
        SampleSource::get(self.as_slice(), index)
    }
}

/// Index-level schedule.
#[derive(Debug, Clone)]
pub struct PairSchedule {
    seed: u64,
    n_source: usize,
    n_target: usize,
    cache: [Option<(u64, Vec<usize>)>; 2],
}

impl PairSchedule {
    pub fn new(n_source: usize, n_target: usize, seed: u64) -> Result<Self> {
        if n_source == 0 || n_target == 0 {
            return Err(Error::Config(format!(
                "pair iterator needs non-empty datasets (source {n_source}, target {n_target})"
            )));
        }
        Ok(PairSchedule {
            seed,
            n_source,
            n_target,
            cache: [None, None],
        })
    }

    pub fn epoch_len(&self) -> usize {
        self.n_source
    }

    /// (source index, target index) for global step `step`.
    pub fn at(&mut self, step: u64) -> (usize, usize) {
        let (ns, nt) = (self.n_source as u64, self.n_target as u64);
        let s = self.perm(0, step / ns)[(step % ns) as usize];
        let t = self.perm(1, step / nt)[(step % nt) as usize];
        (s, t)
    }

    fn perm(&mut self, side: usize, pass: u64) -> &[usize] {
        let fresh = !matches!(&self.cache[side], Some((p, _)) if *p == pass);
        if fresh {
            let n = if side == 0 { self.n_source } else { self.n_target };
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(2 * pass + side as u64);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            self.cache[side] = Some((pass, idx));
        }
        &self.cache[side].as_ref().expect("filled above").1
    }
}

/// Iterator over `(source, target)` sample pairs for steps
/// `start..start + count`.
pub struct PairIterator<'a, S: SampleSource + ?Sized, T: SampleSource + ?Sized> {
    source: &'a S,
    target: &'a T,
    schedule: PairSchedule,
    step: u64,
    end: u64,
}

impl<'a, S: SampleSource + ?Sized, T: SampleSource + ?Sized> PairIterator<'a, S, T> {
    /// Restricts the iterator to the step range `start..start + count`.
    pub fn range(mut self, start: u64, count: u64) -> Self {
        self.step = start;
        self.end = start + count;
        self
    }

    pub fn epoch_len(&self) -> usize {
        self.schedule.epoch_len()
    }
}

/// One epoch of pairs (length = source length); use [`PairIterator::range`]
/// for other spans.
pub fn make_pair_iterator<'a, S, T>(source: &'a S, target: &'a T, seed: u64) -> Result<PairIterator<'a, S, T>>
where
    S: SampleSource + ?Sized,
    T: SampleSource + ?Sized,
{
    let schedule = PairSchedule::new(source.len(), target.len(), seed)?;
    let end = schedule.epoch_len() as u64;
    Ok(PairIterator {
        source,
        target,
        schedule,
        step: 0,
        end,
    })
}

impl<S: SampleSource + ?Sized, T: SampleSource + ?Sized> Iterator for PairIterator<'_, S, T> {
    type Item = Result<(Sample, Sample)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.step >= self.end {
            return None;
        }
        let (si, ti) = self.schedule.at(self.step);
        self.step += 1;
        Some(load_pair(self.source, self.target, si, ti))
    }
}

fn load_pair<S: SampleSource + ?Sized, T: SampleSource + ?Sized>(
    source: &S,
    target: &T,
    si: usize,
    ti: usize,
) -> Result<(Sample, Sample)> {
    let s = source.get(si)?;
    let t = target.get(ti)?;
    if s.domain != Domain::Source || t.domain != Domain::Target {
        return Err(Error::Config(format!(
            "pair ({}, {}) has domains ({:?}, {:?}), expected (Source, Target)",
            s.id, t.id, s.domain, t.domain
        )));
    }
    Ok((s, t))
}
