//! Arbitrary samplings over subsets of `{0, …, n−1}`.
//!
//! A sampler is a distribution over nonempty subsets `C` with every inclusion
//! probability `p_i = Prob(i ∈ C)` positive. Drawn subsets carry the weights
//! `w_i = 1/(n p_i)`, which make `Σ_{i∈C} w_i f_i` an unbiased estimate of `f`.

use crate::error::{Error, Result};
use crate::numerics::{Categorical, Rng};

/// Largest support [`Sampler::enumerate_support`] will materialize.
pub const SUPPORT_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
enum Scheme {
    Full,
    Singleton {
        probs: Vec<f64>,
        dist: Categorical,
    },
    Nice {
        tau: usize,
    },
    Block {
        blocks: Vec<Vec<usize>>,
        probs: Vec<f64>,
        dist: Categorical,
    },
    Stratified {
        blocks: Vec<Vec<usize>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sampler {
    n: usize,
    scheme: Scheme,
    inclusion: Vec<f64>,
    weights: Vec<f64>,
}

fn validate_partition(n: usize, blocks: &[Vec<usize>]) -> Result<Vec<Vec<usize>>> {
    let mut seen = vec![false; n];
    let mut out = Vec::with_capacity(blocks.len());
    for b in blocks {
        if b.is_empty() {
            return Err(Error::InvalidSampler("empty block".into()));
        }
        let mut b = b.clone();
        b.sort_unstable();
        for &i in &b {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, n });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidSampler(format!("index {i} appears in two blocks")));
            }
        }
        out.push(b);
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidSampler(format!("index {i} is not covered by any block")));
    }
    Ok(out)
}

fn check_positive(probs: &[f64]) -> Result<()> {
    if probs.iter().any(|p| *p <= 0.0) {
        return Err(Error::InvalidSampler(
            "every probability must be positive for the sampling to be proper".into(),
        ));
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc.saturating_mul((n - j) as u128) / (j as u128 + 1);
        if acc >= u128::MAX / (n as u128 + 1) {
            return u128::MAX;
        }
    }
    acc
}

impl Sampler {
    fn build(n: usize, scheme: Scheme) -> Self {
        let inclusion: Vec<f64> = match &scheme {
            Scheme::Full => vec![1.0; n],
            Scheme::Singleton { probs, .. } => probs.clone(),
            Scheme::Nice { tau } => vec![*tau as f64 / n as f64; n],
            Scheme::Block { blocks, probs, .. } => {
                let mut p = vec![0.0; n];
                for (b, q) in blocks.iter().zip(probs) {
                    for &i in b {
                        p[i] = *q;
                    }
                }
                p
            }
            Scheme::Stratified { blocks } => {
                let mut p = vec![0.0; n];
                for b in blocks {
                    for &i in b {
                        p[i] = 1.0 / b.len() as f64;
                    }
                }
                p
            }
        };
        let weights = inclusion.iter().map(|p| 1.0 / (n as f64 * p)).collect();
        Self {
            n,
            scheme,
            inclusion,
            weights,
        }
    }

    /// Always returns the whole index set.
    pub fn full(n: usize) -> Self {
        assert!(n >= 1, "sampler over an empty index set");
        Self::build(n, Scheme::Full)
    }

    /// A single index drawn uniformly.
    pub fn uniform(n: usize) -> Self {
        assert!(n >= 1, "sampler over an empty index set");
        Self::singleton(vec![1.0 / n as f64; n]).expect("uniform probabilities are valid")
    }

    /// A single index drawn with probabilities `probs`.
    pub fn singleton(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidSampler("no probabilities".into()));
        }
        let dist = Categorical::new(&probs)?;
        check_positive(&probs)?;
        Ok(Self::build(probs.len(), Scheme::Singleton { probs, dist }))
    }

    /// A uniformly random subset of size `tau`.
    pub fn nice(n: usize, tau: usize) -> Result<Self> {
        if tau == 0 || tau > n {
            return Err(Error::InvalidSampler(format!(
                "nice sampling needs 1 ≤ τ ≤ n, got τ={tau}, n={n}"
            )));
        }
        Ok(Self::build(n, Scheme::Nice { tau }))
    }

    /// One block of a partition, chosen with probabilities `probs`.
    pub fn block(n: usize, blocks: Vec<Vec<usize>>, probs: Vec<f64>) -> Result<Self> {
        let blocks = validate_partition(n, &blocks)?;
        if probs.len() != blocks.len() {
            return Err(Error::InvalidSampler(format!(
                "{} block probabilities for {} blocks",
                probs.len(),
                blocks.len()
            )));
        }
        let dist = Categorical::new(&probs)?;
        check_positive(&probs)?;
        Ok(Self::build(n, Scheme::Block { blocks, probs, dist }))
    }

    /// One uniformly chosen member from every block of a partition.
    pub fn stratified(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let blocks = validate_partition(n, &blocks)?;
        Ok(Self::build(n, Scheme::Stratified { blocks }))
    }

    /// Splits `0..n` into `b` contiguous blocks whose sizes differ by at most one.
    pub fn contiguous_blocks(n: usize, b: usize) -> Vec<Vec<usize>> {
        assert!(b >= 1 && b <= n, "need 1 ≤ b ≤ n");
        let (base, extra) = (n / b, n % b);
        let mut start = 0;
        (0..b)
            .map(|j| {
                let len = base + usize::from(j < extra);
                let block = (start..start + len).collect();
                start += len;
                block
            })
            .collect()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scheme_name(&self) -> &'static str {
        match self.scheme {
            Scheme::Full => "full",
            Scheme::Singleton { .. } => "singleton",
            Scheme::Nice { .. } => "nice",
            Scheme::Block { .. } => "block",
            Scheme::Stratified { .. } => "stratified",
        }
    }

    /// Every drawn set has exactly one member.
    pub fn is_singleton(&self) -> bool {
        match &self.scheme {
            Scheme::Full => self.n == 1,
            Scheme::Singleton { .. } => true,
            Scheme::Nice { tau } => *tau == 1,
            Scheme::Block { blocks, .. } => blocks.iter().all(|b| b.len() == 1),
            Scheme::Stratified { blocks } => blocks.len() == 1,
        }
    }

    /// Single-index sampling with all probabilities equal to `1/n` (to 1e−12).
    pub fn is_uniform_singleton(&self) -> bool {
        let u = 1.0 / self.n as f64;
        self.is_singleton() && self.inclusion.iter().all(|p| (p - u).abs() <= 1e-12)
    }

    /// `p_i = Prob(i ∈ C)`
    pub fn inclusion_probs(&self) -> &[f64] {
        &self.inclusion
    }

    /// `1/(n p_i)`
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Draws a subset; members are returned in increasing order.
    pub fn draw(&self, rng: &mut Rng) -> Vec<usize> {
        match &self.scheme {
            Scheme::Full => (0..self.n).collect(),
            Scheme::Singleton { dist, .. } => vec![dist.sample(rng)],
            Scheme::Nice { tau } => {
                let mut perm: Vec<usize> = (0..self.n).collect();
                for j in 0..*tau {
                    let k = j + rng.below(self.n - j);
                    perm.swap(j, k);
                }
                perm.truncate(*tau);
                perm.sort_unstable();
                perm
            }
            Scheme::Block { blocks, dist, .. } => blocks[dist.sample(rng)].clone(),
            Scheme::Stratified { blocks } => {
                let mut c: Vec<usize> = blocks.iter().map(|b| b[rng.below(b.len())]).collect();
                c.sort_unstable();
                c
            }
        }
    }

    /// Number of subsets with positive probability (saturating).
    pub fn support_size(&self) -> u128 {
        match &self.scheme {
            Scheme::Full => 1,
            Scheme::Singleton { .. } => self.n as u128,
            Scheme::Nice { tau } => binomial(self.n, *tau),
            Scheme::Block { blocks, .. } => blocks.len() as u128,
            Scheme::Stratified { blocks } => blocks.iter().fold(1u128, |acc, b| acc.saturating_mul(b.len() as u128)),
        }
    }

    /// Every subset with its probability; `nice` subsets in lexicographic order.
    pub fn enumerate_support(&self) -> Result<Vec<(Vec<usize>, f64)>> {
        let size = self.support_size();
        if size > SUPPORT_CAP {
            return Err(Error::SupportTooLarge { size, cap: SUPPORT_CAP });
        }
        Ok(match &self.scheme {
            Scheme::Full => vec![((0..self.n).collect(), 1.0)],
            Scheme::Singleton { probs, .. } => probs.iter().enumerate().map(|(i, p)| (vec![i], *p)).collect(),
            Scheme::Nice { tau } => {
                let p = 1.0 / size as f64;
                let mut out = Vec::with_capacity(size as usize);
                let mut c: Vec<usize> = (0..*tau).collect();
                loop {
                    out.push((c.clone(), p));
                    // advance to the next combination in lexicographic order
                    let Some(j) = (0..*tau).rev().find(|&j| c[j] < self.n - tau + j) else {
                        break;
                    };
                    c[j] += 1;
                    for l in j + 1..*tau {
                        c[l] = c[l - 1] + 1;
                    }
                }
                out
            }
            Scheme::Block { blocks, probs, .. } => blocks.iter().cloned().zip(probs.iter().cloned()).collect(),
            Scheme::Stratified { blocks } => {
                let p = 1.0 / size as f64;
                let mut out = Vec::with_capacity(size as usize);
                let mut pick = vec![0usize; blocks.len()];
                loop {
                    let mut c: Vec<usize> = blocks.iter().zip(&pick).map(|(b, &k)| b[k]).collect();
                    c.sort_unstable();
                    out.push((c, p));
                    let Some(j) = (0..blocks.len()).rev().find(|&j| pick[j] + 1 < blocks[j].len()) else {
                        break;
                    };
                    pick[j] += 1;
                    for k in pick.iter_mut().skip(j + 1) {
                        *k = 0;
                    }
                }
                out
            }
        })
    }

    /// `min_C Σ_{i∈C} μ_i/(n p_i)` over the support, in closed form per scheme.
    pub fn mu_as(&self, mu_each: &[f64]) -> f64 {
        assert_eq!(mu_each.len(), self.n);
        let n = self.n as f64;
        match &self.scheme {
            Scheme::Full => mu_each.iter().sum::<f64>() / n,
            Scheme::Singleton { .. } => mu_each
                .iter()
                .zip(&self.weights)
                .map(|(m, w)| m * w)
                .fold(f64::INFINITY, f64::min),
            Scheme::Nice { tau } => {
                let mut sorted = mu_each.to_vec();
                sorted.sort_by(f64::total_cmp);
                sorted[..*tau].iter().sum::<f64>() / *tau as f64
            }
            Scheme::Block { blocks, .. } => blocks
                .iter()
                .map(|b| b.iter().map(|&i| mu_each[i] * self.weights[i]).sum::<f64>())
                .fold(f64::INFINITY, f64::min),
            Scheme::Stratified { blocks } => blocks
                .iter()
                .map(|b| {
                    let m = b.iter().map(|&i| mu_each[i]).fold(f64::INFINITY, f64::min);
                    m * b.len() as f64 / n
                })
                .sum(),
        }
    }
}
