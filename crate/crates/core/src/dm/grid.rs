use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::theorem1::{check_rate_len, evaluate_fast, DmBoundReport, FastEvaluator};
use crate::error::{Error, Result};
use crate::model::discrete::{DiscreteHTInstance, TestChannelFamily};

pub const DEFAULT_GRID_BUDGET: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchOptions {
    /// Simplex step is 1/resolution.
    pub resolution: usize,
    /// |U_k| per sensor; `None` uses |Y_k| + 1.
    pub u_sizes: Option<Vec<usize>>,
    pub budget: u128,
}

impl GridSearchOptions {
    pub fn new(resolution: usize) -> Self {
        Self { resolution, u_sizes: None, budget: DEFAULT_GRID_BUDGET }
    }

    pub fn with_u_sizes(mut self, u: Vec<usize>) -> Self {
        self.u_sizes = Some(u);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub schema_version: String,
    /// Best exponent on the grid; a lower bound on the region's exponent at these rates.
    pub exponent: f64,
    pub channels: TestChannelFamily,
    pub report: DmBoundReport,
    pub resolution: usize,
    pub u_sizes: Vec<usize>,
    pub grid_points: u64,
}

/// All nonnegative integer vectors of length `n` summing to `m`, in lexicographic order.
fn compositions(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, m: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if n == 1 {
            prefix.push(m);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for c in 0..=m {
            prefix.push(c);
            rec(n - 1, m - c, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, m, &mut Vec::with_capacity(n), &mut out);
    out
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Number of grid points: Π_k C(m + |U_k| − 1, |U_k| − 1)^{|Y_k|}, saturating at `u128::MAX`.
pub fn grid_size(y_sizes: &[usize], u_sizes: &[usize], resolution: usize) -> u128 {
    let mut total: u128 = 1;
    for (&ny, &nu) in y_sizes.iter().zip(u_sizes) {
        let per = binomial((resolution + nu - 1) as u128, (nu - 1) as u128).unwrap_or(u128::MAX);
        for _ in 0..ny {
            total = total.saturating_mul(per);
        }
    }
    total
}

/// Maximizes the subset-bound exponent over uniform barycentric grids of P_{U_k|Y_k}
/// (no time sharing). Ties go to the lowest grid index, so the result does not
/// depend on the thread count.
pub fn grid_search_dm_exponent(
    instance: &DiscreteHTInstance,
    rates: &[f64],
    opts: &GridSearchOptions,
) -> Result<GridSearchResult> {
    let k = instance.num_sensors();
    check_rate_len(k, rates)?;
    let y_sizes = instance.pmfs().sensors.clone();
    let u_sizes = opts.u_sizes.clone().unwrap_or_else(|| y_sizes.iter().map(|n| n + 1).collect());
    if u_sizes.len() != k || u_sizes.contains(&0) {
        return Err(Error::AlphabetMismatch(format!("need {k} positive |U_k| values")));
    }
    if opts.resolution == 0 {
        return Err(Error::InvalidInput("grid resolution must be at least 1".into()));
    }
    let required = grid_size(&y_sizes, &u_sizes, opts.resolution);
    if required > opts.budget {
        return Err(Error::BudgetExceeded { required, budget: opts.budget });
    }
    let total = required as u64;

    let comps: Vec<Vec<Vec<usize>>> = u_sizes.iter().map(|&n| compositions(n, opts.resolution)).collect();
    // Digit positions, most significant first: (sensor 1, y = 0), (sensor 1, y = 1), ...
    let slots: Vec<(usize, usize)> = (0..k).flat_map(|i| (0..y_sizes[i]).map(move |y| (i, y))).collect();
    let ev = FastEvaluator::new(instance);
    let nsub = ev.subsets().len();
    let step = 1.0 / opts.resolution as f64;

    let fill = |idx: u64, kernels: &mut [Vec<f64>]| {
        let mut rem = idx;
        for &(i, y) in slots.iter().rev() {
            let base = comps[i].len() as u64;
            let c = &comps[i][(rem % base) as usize];
            rem /= base;
            let nu = u_sizes[i];
            for u in 0..nu {
                kernels[i][y * nu + u] = c[u] as f64 * step;
            }
        }
    };

    const CHUNK: u64 = 2048;
    let chunks = total.div_ceil(CHUNK);
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut kernels: Vec<Vec<f64>> = (0..k).map(|i| vec![0.0; y_sizes[i] * u_sizes[i]]).collect();
            let mut out = vec![0.0; nsub];
            let mut best = (f64::NEG_INFINITY, u64::MAX);
            for idx in c * CHUNK..((c + 1) * CHUNK).min(total) {
                fill(idx, &mut kernels);
                let refs: Vec<&[f64]> = kernels.iter().map(|v| v.as_slice()).collect();
                ev.eval(&refs, &u_sizes, rates, &mut out);
                let v = out.iter().cloned().fold(f64::INFINITY, f64::min);
                if v > best.0 {
                    best = (v, idx);
                }
            }
            best
        })
        .reduce(
            || (f64::NEG_INFINITY, u64::MAX),
            |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );

    let mut kernels: Vec<Vec<f64>> = (0..k).map(|i| vec![0.0; y_sizes[i] * u_sizes[i]]).collect();
    fill(best.1, &mut kernels);
    let channels = TestChannelFamily::without_time_sharing(
        kernels
            .iter()
            .enumerate()
            .map(|(i, flat)| flat.chunks(u_sizes[i]).map(|r| r.to_vec()).collect())
            .collect(),
    );
    let report = DmBoundReport::from_values(evaluate_fast(instance, &channels, rates)?);
    Ok(GridSearchResult {
        schema_version: crate::SCHEMA_VERSION.into(),
        exponent: report.exponent,
        channels,
        report,
        resolution: opts.resolution,
        u_sizes,
        grid_points: total,
    })
}
