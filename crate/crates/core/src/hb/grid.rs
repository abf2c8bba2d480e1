//! Box-truncated multitone frequency grids.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

/// Frequencies are compared exactly as integer multiples of this quantum (Hz).
const QUANTUM_HZ: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GridEntry {
    /// Representative mixing vector.
    pub k: Vec<i32>,
    pub freq: f64,
    /// Other canonical vectors landing on the same frequency.
    pub aliases: Vec<Vec<i32>>,
}

impl GridEntry {
    pub fn vectors(&self) -> impl Iterator<Item = &Vec<i32>> {
        std::iter::once(&self.k).chain(self.aliases.iter())
    }
}

#[derive(Debug, Clone)]
pub struct FrequencyGrid {
    pub base_tones: Vec<f64>,
    pub truncation: Vec<u32>,
    /// Sorted by frequency; entry 0 is DC.
    pub entries: Vec<GridEntry>,
    index: HashMap<Vec<i32>, usize>,
}

fn quantize(f: f64) -> i128 {
    (f / QUANTUM_HZ).round() as i128
}

fn canonical(k: &[i32], f: i128) -> Vec<i32> {
    let first_negative = k.iter().find(|&&x| x != 0).is_some_and(|&x| x < 0);
    if f < 0 || (f == 0 && first_negative) {
        k.iter().map(|x| -x).collect()
    } else {
        k.to_vec()
    }
}

pub fn build_frequency_grid(base_tones: &[f64], truncation: &[u32]) -> Result<FrequencyGrid> {
    FrequencyGrid::new(base_tones, truncation, true)
}

impl FrequencyGrid {
    /// Enumerates the truncation box and folds it to non-negative frequencies.
    /// With `merge` false, two distinct vectors on one frequency are an error.
    pub fn new(base_tones: &[f64], truncation: &[u32], merge: bool) -> Result<Self> {
        let d = base_tones.len();
        if !(1..=3).contains(&d) {
            return Err(Error::Config(format!("need 1 to 3 base tones, got {d}")));
        }
        if truncation.len() != d {
            return Err(Error::Config(format!("{} truncation orders for {d} base tones", truncation.len())));
        }
        if let Some(f) = base_tones.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
            return Err(Error::Config(format!("base tone must be positive, got {f}")));
        }
        if truncation.contains(&0) {
            return Err(Error::Config("truncation orders must be at least 1".into()));
        }
        let q: Vec<i128> = base_tones.iter().map(|&f| quantize(f)).collect();
        if q.contains(&0) {
            return Err(Error::Config("base tone below frequency resolution".into()));
        }

        let mut by_freq: BTreeMap<i128, Vec<Vec<i32>>> = BTreeMap::new();
        let h: Vec<i32> = truncation.iter().map(|&t| t as i32).collect();
        let sizes: Vec<usize> = h.iter().map(|&x| (2 * x + 1) as usize).collect();
        let mut k = vec![0i32; d];
        for flat in 0..sizes.iter().product::<usize>() {
            let mut rest = flat;
            for dim in (0..d).rev() {
                k[dim] = (rest % sizes[dim]) as i32 - h[dim];
                rest /= sizes[dim];
            }
            let f: i128 = k.iter().zip(&q).map(|(&ki, &qi)| ki as i128 * qi).sum();
            let c = canonical(&k, f);
            let group = by_freq.entry(f.abs()).or_default();
            if !group.contains(&c) {
                group.push(c);
            }
        }

        let mut entries = Vec::with_capacity(by_freq.len());
        let mut index = HashMap::new();
        for (_, mut group) in by_freq {
            group.sort_by_key(|v| (v.iter().map(|x| x.unsigned_abs()).sum::<u32>(), v.clone()));
            if group.len() > 1 && !merge {
                return Err(Error::Config(format!(
                    "frequency collision between mixing vectors {:?} and {:?}",
                    group[0], group[1]
                )));
            }
            let primary = group.remove(0);
            let freq: f64 = primary.iter().zip(base_tones).map(|(&ki, &fi)| ki as f64 * fi).sum();
            let e = entries.len();
            index.insert(primary.clone(), e);
            for a in &group {
                index.insert(a.clone(), e);
            }
            entries.push(GridEntry { k: primary, freq: freq.abs(), aliases: group });
        }
        debug_assert!(entries[0].k.iter().all(|&x| x == 0));
        Ok(Self { base_tones: base_tones.to_vec(), truncation: truncation.to_vec(), entries, index })
    }

    pub fn dims(&self) -> usize {
        self.base_tones.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry index of `k`, and whether `k` is the conjugate of its canonical form.
    pub fn lookup(&self, k: &[i32]) -> Result<(usize, bool)> {
        if let Some(&i) = self.index.get(k) {
            return Ok((i, false));
        }
        let neg: Vec<i32> = k.iter().map(|x| -x).collect();
        self.index.get(&neg).map(|&i| (i, true)).ok_or_else(|| Error::Lookup(k.to_vec()))
    }

    pub fn index_of(&self, k: &[i32]) -> Result<usize> {
        self.lookup(k).map(|(i, _)| i)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.freq).collect()
    }
}
