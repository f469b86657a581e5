//! Shared fixtures for the integration tests: random streams and plain,
//! independently written level rules for each regime.
//!
//! The rules below recompute every quantity from its definition at every
//! step (quadratic time) and never touch the engine. They follow the same
//! floating-point grouping as the engine so comparisons can be exact:
//! LORD++ sums the gamma terms before scaling by alpha, the wealth of the
//! SAFFRON family scales each term first.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use conflictfdr::gamma::{make_gamma, GammaKind, GammaSequence};
use conflictfdr::simgen::trial_rng;

pub const ALPHA: f64 = 0.05;
pub const W0: f64 = 0.025;
pub const LAMBDA: f64 = 0.5;

pub fn gamma() -> GammaSequence {
    make_gamma(GammaKind::LogDecay, 100_000).unwrap()
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    trial_rng(0xC0FFEE ^ seed, seed)
}

/// Mixture of uniform nulls and strong signals; a fraction of exact zeros
/// and ones keeps boundary comparisons exercised.
pub fn pvalues(rng: &mut ChaCha20Rng, m: usize, signal: f64) -> Vec<f64> {
    (0..m)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            if u < 0.01 {
                0.0
            } else if u < 0.02 {
                1.0
            } else if u < 0.02 + signal {
                v.powi(6) * 0.05
            } else {
                v
            }
        })
        .collect()
}

/// `E_j = j + Geometric(p)` failures, clipped to `m` when `clip` is set.
pub fn finish_times(rng: &mut ChaCha20Rng, m: usize, p: f64, clip: bool) -> Vec<usize> {
    (1..=m)
        .map(|j| {
            let mut e = j;
            while rng.random::<f64>() >= p {
                e += 1;
            }
            if clip {
                e.min(m)
            } else {
                e
            }
        })
        .collect()
}

/// A random lag sequence with `L_(t+1) <= L_t + 1`, `L_t <= t - 1`.
pub fn lags(rng: &mut ChaCha20Rng, m: usize, max_lag: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(m);
    for t in 1..=m {
        let prev = out.last().copied().unwrap_or(0);
        let cap = (prev + 1).min(t - 1).min(max_lag);
        out.push(rng.random_range(0..=cap));
    }
    out
}

pub fn batch_sizes(rng: &mut ChaCha20Rng, m: usize, max_size: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut left = m;
    while left > 0 {
        let n = rng.random_range(1..=max_size.min(left));
        out.push(n);
        left -= n;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Lord,
    Lond,
    Saffron,
    AlphaInvesting,
}

/// What a level rule may see when assigning the next level: the times at
/// which rejections became usable (ascending, one entry per rejection),
/// for each entry plus the leading "j = 0" slot how many usable candidates
/// (or rejections, for alpha-investing) came after it, and which earlier
/// tests have usable outcomes.
struct Usable {
    r: Vec<i64>,
    after: Vec<i64>,
    released: Vec<bool>,
}

fn lord_level(g: &GammaSequence, n: i64, r: &[i64]) -> f64 {
    let first = match r.first() {
        Some(&r1) => g.at(n - r1),
        None => 0.0,
    };
    let mut tail = 0.0;
    for &rj in r.iter().skip(1) {
        tail += g.at(n - rj);
    }
    g.at(n) * W0 + first * (ALPHA - W0) + tail * ALPHA
}

fn lond_level(g: &GammaSequence, n: i64, k: usize) -> f64 {
    ALPHA * g.at(n) * (k.max(1) as f64)
}

fn wealth(g: &GammaSequence, n: i64, u: &Usable) -> f64 {
    let lead = W0 * g.at(n - u.after[0]);
    let mut first = 0.0;
    let mut tail = 0.0;
    for (k, &rj) in u.r.iter().enumerate() {
        let w = g.at(n - rj - u.after[k + 1]);
        if k == 0 {
            first = (ALPHA - W0) * w;
        } else {
            tail += ALPHA * w;
        }
    }
    lead + first + tail
}

fn apply(rule: Rule, g: &GammaSequence, n: i64, u: &Usable) -> (f64, f64) {
    match rule {
        Rule::Lord => (lord_level(g, n, &u.r), f64::NAN),
        Rule::Lond => (lond_level(g, n, u.r.len()), f64::NAN),
        Rule::Saffron => {
            let level = LAMBDA.min((1.0 - LAMBDA) * wealth(g, n, u));
            (level, LAMBDA)
        }
        Rule::AlphaInvesting => {
            let s = wealth(g, n, u);
            let a = s / (1.0 + s);
            (a, a)
        }
    }
}

/// Shrinks a SAFFRON-family level until the estimate, counting every test
/// without a usable candidate outcome at full weight, stays under alpha.
fn saffron_cap(rule: Rule, level: f64, levels: &[f64], lambdas: &[f64], cand: &[bool], u: &Usable) -> f64 {
    let mut spent = 0.0;
    for j in 0..levels.len() {
        if !(u.released[j] && cand[j]) {
            spent += levels[j] / (1.0 - lambdas[j]);
        }
    }
    let den = u.r.len().max(1) as f64;
    let weight = |a: f64| match rule {
        Rule::AlphaInvesting => a / (1.0 - a),
        _ => a / (1.0 - LAMBDA),
    };
    let fits = |a: f64| (spent + weight(a)) / den <= ALPHA * (1.0 - 1e-10);
    if fits(level) {
        return level;
    }
    let (mut lo, mut hi) = (0.0f64, level);
    while lo.next_up() < hi {
        let mid = 0.5 * (lo + hi);
        let mid = if mid <= lo { lo.next_up() } else if mid >= hi { hi.next_down() } else { mid };
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Drives a transcription: `usable(t, rejected, candidate)` describes what
/// the rule may use when assigning the level of test `t`.
fn drive<F>(rule: Rule, p: &[f64], mut usable: F) -> Vec<f64>
where
    F: FnMut(usize, &[bool], &[bool]) -> Usable,
{
    let g = gamma();
    let mut levels = Vec::with_capacity(p.len());
    let mut rejected = Vec::with_capacity(p.len());
    let mut candidate = Vec::with_capacity(p.len());
    let mut lambdas: Vec<f64> = Vec::with_capacity(p.len());
    for t in 1..=p.len() {
        let u = usable(t, &rejected, &candidate);
        let (mut a, mut lam) = apply(rule, &g, t as i64, &u);
        if matches!(rule, Rule::Saffron | Rule::AlphaInvesting) {
            a = saffron_cap(rule, a, &levels, &lambdas, &candidate, &u);
            if rule == Rule::AlphaInvesting {
                lam = a;
            }
        }
        lambdas.push(lam);
        levels.push(a);
        rejected.push(p[t - 1] <= a);
        candidate.push(match rule {
            Rule::Saffron | Rule::AlphaInvesting => p[t - 1] <= lam,
            _ => false,
        });
    }
    levels
}

fn weights(rule: Rule, rejected: &[bool], candidate: &[bool]) -> Vec<bool> {
    if rule == Rule::AlphaInvesting {
        rejected.to_vec()
    } else {
        candidate.to_vec()
    }
}

/// Classic synchronous rules: rejection times are the test indices.
pub fn plain(rule: Rule, p: &[f64]) -> Vec<f64> {
    drive(rule, p, |t, rej, cand| {
        let c = weights(rule, rej, cand);
        let r: Vec<i64> = (1..t).filter(|&j| rej[j - 1]).map(|j| j as i64).collect();
        let mut after = vec![(1..t).filter(|&i| c[i - 1]).count() as i64];
        for &rj in &r {
            after.push(((rj as usize + 1)..t).filter(|&i| c[i - 1]).count() as i64);
        }
        Usable { r, after, released: vec![true; t - 1] }
    })
}

/// `r_k = min{ i : counts[i] >= k }` for `k = 1..=counts[last]`, where
/// `counts[i]` is non-decreasing and `counts[0] = 0`.
fn first_reaching(counts: &[usize]) -> Vec<i64> {
    let total = counts.last().copied().unwrap_or(0);
    let mut r = Vec::with_capacity(total);
    let mut i = 0;
    for k in 1..=total {
        while counts[i] < k {
            i += 1;
        }
        r.push(i as i64);
    }
    r
}

/// Asynchronous rules; `e[j - 1]` is the decision time of test `j`.
pub fn asynchronous(rule: Rule, p: &[f64], e: &[usize]) -> Vec<f64> {
    drive(rule, p, |t1, rej, cand| {
        // assigning alpha_(t+1) with t = t1 - 1
        let t = t1 - 1;
        let c = weights(rule, rej, cand);
        // r_k = min{ i in [t] : sum_(j<=i) R_j 1{E_j <= i} >= k }
        let mut newly = vec![0usize; t + 1];
        for j in 1..=t {
            if rej[j - 1] && e[j - 1] <= t {
                newly[e[j - 1]] += 1;
            }
        }
        let counts: Vec<usize> = newly
            .iter()
            .scan(0, |s, &x| {
                *s += x;
                Some(*s)
            })
            .collect();
        let r = first_reaching(&counts);
        // |C_i|: candidates decided at time i
        let mut decided_at = vec![0i64; t + 1];
        for j in 1..=t {
            if c[j - 1] && e[j - 1] <= t {
                decided_at[e[j - 1]] += 1;
            }
        }
        let plus = |from: usize| decided_at[from + 1..].iter().sum::<i64>();
        let mut after = vec![plus(0)];
        for &rj in &r {
            after.push(plus(rj as usize));
        }
        let released = (1..=t).map(|j| e[j - 1] <= t).collect();
        Usable { r, after, released }
    })
}

/// Local-dependence rules; `l[t - 1]` is `L_t`.
pub fn lagged(rule: Rule, p: &[f64], l: &[usize]) -> Vec<f64> {
    drive(rule, p, |t1, rej, cand| {
        let t = t1 - 1;
        let c = weights(rule, rej, cand);
        // i - L_(i+1), the last index usable after step i
        let upto = |i: usize| i - l[i];
        // r_k = min{ i in [t] : sum_(j <= i - L_(i+1)) R_j >= k }
        let mut prefix = vec![0usize; t + 1];
        for j in 1..=t {
            prefix[j] = prefix[j - 1] + rej[j - 1] as usize;
        }
        let counts: Vec<usize> = (0..=t).map(|i| if i == 0 { 0 } else { prefix[upto(i)] }).collect();
        let r = first_reaching(&counts);
        let end = if t == 0 { 0 } else { upto(t) };
        let plus = |from: usize| ((from + 1)..=end).filter(|&i| c[i - 1]).count() as i64;
        let mut after = vec![plus(0)];
        for &rj in &r {
            after.push(plus(rj as usize));
        }
        let released = (1..=t).map(|j| j <= end).collect();
        Usable { r, after, released }
    })
}

/// Mini-batch rules with double indexing. The level of test `t` in batch
/// `b` uses batches `1..b`; offsets are global positions.
pub fn minibatch(rule: Rule, p: &[f64], sizes: &[usize]) -> Vec<f64> {
    let mut start = Vec::with_capacity(sizes.len());
    let mut acc = 0;
    for &n in sizes {
        start.push(acc);
        acc += n;
    }
    let batch_of = move |g: usize| start.iter().rposition(|&s| s < g).unwrap();
    let ends: Vec<usize> = sizes
        .iter()
        .scan(0, |s, &n| {
            *s += n;
            Some(*s)
        })
        .collect();
    drive(rule, p, move |g1, rej, cand| {
        let c = weights(rule, rej, cand);
        let b = batch_of(g1) + 1; // 1-based batch
        let batch_count = |i: usize, flags: &[bool]| {
            let lo = ends[i - 1] - sizes[i - 1];
            (lo + 1..=ends[i - 1]).filter(|&j| flags[j - 1]).count()
        };
        // r_k = min{ i in [b-1] : sum_(j<=i) |R_j| >= k }, as batch numbers
        let cum = |i: usize| (1..=i).map(|j| batch_count(j, rej)).sum::<usize>();
        let total = if b > 1 { cum(b - 1) } else { 0 };
        let mut rb = Vec::new();
        for k in 1..=total {
            rb.push((1..b).find(|&i| cum(i) >= k).unwrap());
        }
        // |C+_j| = sum over batches r_j + 1 ..= b - 1
        let plus = |from: usize| ((from + 1)..b).map(|i| batch_count(i, &c)).sum::<usize>() as i64;
        let mut after = vec![plus(0)];
        for &i in &rb {
            after.push(plus(i));
        }
        // gamma offsets subtract sum_(i <= r_j) n_i
        let r = rb.iter().map(|&i| ends[i - 1] as i64).collect();
        let done = if b > 1 { ends[b - 2] } else { 0 };
        let released = (1..g1).map(|j| j <= done).collect();
        Usable { r, after, released }
    })
}
