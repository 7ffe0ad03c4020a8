//! Machine probe: miss cost, switch cost, hardware prefetch effectiveness
//! per layout, and the best interleaving degree.

use std::hint::black_box;
use std::rc::Rc;
use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{tune, PrefetchStrategy, TaskClass, DEFAULT_HOTNESS_PREFIX};
use crate::access::TaskCtx;
use crate::engine::{build_pool, polling_scheduler};
use crate::error::ProbeError;

/// Memory layouts with distinct hardware prefetch behavior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayoutClass {
    /// Consecutive cache lines.
    Sequential,
    /// Linked blocks laid out in link order.
    Chained,
    /// Root-to-leaf descents; effectively random.
    Tree,
}

/// One value per layout class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutCosts {
    pub sequential: f64,
    pub chained: f64,
    pub tree: f64,
}

impl LayoutCosts {
    pub fn get(&self, layout: LayoutClass) -> f64 {
        match layout {
            LayoutClass::Sequential => self.sequential,
            LayoutClass::Chained => self.chained,
            LayoutClass::Tree => self.tree,
        }
    }
}

/// Inputs of the software-prefetch redundancy rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModelParams {
    /// Cost of a cache miss, ns.
    pub c_m_ns: f64,
    /// Cost of a cache hit, ns.
    pub c_hit_ns: f64,
    /// Cost of one suspend/resume pair, ns.
    pub c_coro_ns: f64,
    /// Probability that the hardware prefetcher already fetched a block.
    pub p_h: LayoutCosts,
}

impl Default for CostModelParams {
    fn default() -> Self {
        CostModelParams {
            c_m_ns: 90.0,
            c_hit_ns: 1.5,
            c_coro_ns: 8.0,
            p_h: LayoutCosts {
                sequential: 0.95,
                chained: 0.5,
                tree: 0.0,
            },
        }
    }
}

impl CostModelParams {
    /// True when the expected miss cost on `layout` is below the switch
    /// cost, i.e. a software prefetch plus yield there would not pay off.
    pub fn redundant(&self, layout: LayoutClass) -> bool {
        self.c_m_ns * (1.0 - self.p_h.get(layout)) < self.c_coro_ns
    }
}

/// Everything the probe measured, plus the strategy it implies per task
/// class. Serializable so probing can be a separate step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// Tasks per thread with the lowest chase time in the sweep.
    pub recommended_m: usize,
    pub params: CostModelParams,
    /// Measured dependent-load latency per layout, ns per hop.
    pub latency_ns: LayoutCosts,
    /// `(m, ns per hop)` for each swept interleaving degree.
    pub sweep: Vec<(usize, f64)>,
    pub working_set_bytes: usize,
    pub llc_bytes: usize,
    pub hotness_prefix: u32,
    pub strategies: Vec<(TaskClass, PrefetchStrategy)>,
}

impl Default for ProbeResult {
    fn default() -> Self {
        let mut p = ProbeResult {
            recommended_m: 8,
            params: CostModelParams::default(),
            latency_ns: LayoutCosts {
                sequential: 5.0,
                chained: 45.0,
                tree: 90.0,
            },
            sweep: Vec::new(),
            working_set_bytes: 0,
            llc_bytes: 0,
            hotness_prefix: DEFAULT_HOTNESS_PREFIX,
            strategies: Vec::new(),
        };
        p.strategies = classify(&p);
        p
    }
}

fn classify(p: &ProbeResult) -> Vec<(TaskClass, PrefetchStrategy)> {
    [TaskClass::FullScan, TaskClass::Frontier, TaskClass::PointQuery, TaskClass::BatchUpdate]
        .into_iter()
        .map(|c| (c, tune(c, p).prefetch_strategy))
        .collect()
}

#[derive(Clone, Debug)]
pub struct ProbeOptions {
    /// Interleaving degrees to try.
    pub sweep: Vec<usize>,
    /// Timed repetitions per measurement; the median is kept.
    pub trials: usize,
    /// Dependent loads per timed chase.
    pub hops: usize,
    /// Overrides the default of four times the last-level cache.
    pub working_set_bytes: Option<usize>,
    /// Overrides cache detection.
    pub llc_bytes: Option<usize>,
    pub hotness_prefix: u32,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            sweep: vec![1, 2, 4, 8, 16, 32],
            trials: 3,
            hops: 1 << 20,
            working_set_bytes: None,
            llc_bytes: None,
            hotness_prefix: DEFAULT_HOTNESS_PREFIX,
            seed: 0x5eed,
        }
    }
}

/// Largest cache size reported under sysfs, if any.
pub fn detect_llc_bytes() -> Option<usize> {
    let dir = std::fs::read_dir("/sys/devices/system/cpu/cpu0/cache").ok()?;
    dir.filter_map(|e| {
        let size = std::fs::read_to_string(e.ok()?.path().join("size")).ok()?;
        parse_size(size.trim())
    })
    .max()
}

fn parse_size(s: &str) -> Option<usize> {
    let (num, mult) = match s.as_bytes().last()? {
        b'K' => (&s[..s.len() - 1], 1 << 10),
        b'M' => (&s[..s.len() - 1], 1 << 20),
        b'G' => (&s[..s.len() - 1], 1 << 30),
        _ => (s, 1),
    };
    num.parse::<usize>().ok().map(|n| n * mult)
}

const LINE: usize = 64;

#[repr(C, align(64))]
#[derive(Clone, Copy)]
struct Line {
    next: usize,
    _pad: [usize; 7],
}

fn alloc_lines(n: usize) -> Result<Vec<Line>, ProbeError> {
    let mut v = Vec::new();
    v.try_reserve_exact(n)
        .map_err(|_| ProbeError::InsufficientMemory { bytes: n * LINE })?;
    v.resize(n, Line { next: 0, _pad: [0; 7] });
    Ok(v)
}

/// Links `lines` into one random cycle (Sattolo's algorithm).
fn random_cycle(lines: &mut [Line], rng: &mut ChaCha8Rng) {
    for (i, l) in lines.iter_mut().enumerate() {
        l.next = i;
    }
    for i in (1..lines.len()).rev() {
        let j = rng.random_range(0..i);
        let t = lines[i].next;
        lines[i].next = lines[j].next;
        lines[j].next = t;
    }
}

fn strided_cycle(lines: &mut [Line], stride: usize) {
    let n = lines.len();
    let blocks = n / stride;
    for b in 0..blocks {
        lines[b * stride].next = ((b + 1) % blocks) * stride;
    }
}

/// Nanoseconds per dependent load, starting at `start`.
fn chase(lines: &[Line], start: usize, hops: usize) -> f64 {
    let mut i = start;
    let t = Instant::now();
    for _ in 0..hops {
        i = black_box(lines[i].next);
    }
    black_box(i);
    t.elapsed().as_nanos() as f64 / hops.max(1) as f64
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

/// Interleaved chase: `m` tasks each follow `hops / m` links, prefetching
/// the next line and yielding before dereferencing it.
fn interleaved_chase(lines: &[Line], starts: &[usize], hops: usize) -> Result<f64, ProbeError> {
    let m = starts.len();
    let per = hops / m;
    let ctx = Rc::new(TaskCtx::new(PrefetchStrategy::AllSoft));
    let t = Instant::now();
    let mut pool = build_pool(m, &ctx, |k| {
        let ctx = ctx.clone();
        let mut i = starts[k];
        async move {
            for _ in 0..per {
                let line = &lines[i];
                ctx.prefetch_and_yield(line as *const Line).await;
                i = black_box(line.next);
            }
            i
        }
    })?;
    polling_scheduler(&mut pool)?;
    let dt = t.elapsed().as_nanos() as f64;
    black_box(pool.into_outputs());
    Ok(dt / (per * m).max(1) as f64)
}

/// Nanoseconds per suspend/resume pair between two resident tasks.
fn switch_cost(rounds: usize) -> Result<f64, ProbeError> {
    let ctx = Rc::new(TaskCtx::new(PrefetchStrategy::AllSoft));
    let t = Instant::now();
    let mut pool = build_pool(2, &ctx, |_| {
        let ctx = ctx.clone();
        async move {
            for _ in 0..rounds {
                ctx.suspend().await;
            }
        }
    })?;
    let stats = polling_scheduler(&mut pool)?;
    Ok(t.elapsed().as_nanos() as f64 / stats.resumes.max(1) as f64)
}

/// Runs the probe. Allocation failure of the working set is reported as
/// [`ProbeError::InsufficientMemory`].
pub fn probe_config(opts: &ProbeOptions) -> Result<ProbeResult, ProbeError> {
    if opts.sweep.is_empty() || opts.sweep.contains(&0) {
        return Err(ProbeError::EmptySweep);
    }
    let trials = opts.trials.max(1);
    let llc = opts.llc_bytes.or_else(detect_llc_bytes).unwrap_or(32 << 20);
    let ws = opts.working_set_bytes.unwrap_or(llc.saturating_mul(4));
    let n = (ws / LINE).max(64);
    let hops = opts.hops.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut lines = alloc_lines(n)?;
    random_cycle(&mut lines, &mut rng);

    let c_rand = median((0..trials).map(|_| chase(&lines, rng.random_range(0..n), hops)).collect());
    let c_tree = median((0..trials).map(|_| chase(&lines, rng.random_range(0..n), hops)).collect());

    let mut sweep = Vec::with_capacity(opts.sweep.len());
    for &m in &opts.sweep {
        let mut times = Vec::with_capacity(trials);
        for _ in 0..trials {
            let starts: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
            times.push(interleaved_chase(&lines, &starts, hops)?);
        }
        sweep.push((m, median(times)));
    }
    let recommended_m = sweep
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|&(m, _)| m)
        .expect("sweep is non-empty");

    let mut hot = alloc_lines(64)?;
    random_cycle(&mut hot, &mut rng);
    chase(&hot, 0, 4096);
    let c_hit = median((0..trials).map(|_| chase(&hot, 0, hops)).collect());

    strided_cycle(&mut lines, 1);
    let c_seq = median((0..trials).map(|_| chase(&lines, 0, hops.min(n - 1))).collect());
    let stride = 4;
    strided_cycle(&mut lines, stride);
    let c_chain = median((0..trials).map(|_| chase(&lines, 0, hops.min(n / stride - 1))).collect());
    drop(lines);

    let c_coro = median((0..trials).map(|_| switch_cost(hops / 4 + 1)).collect::<Result<_, _>>()?);

    let span = (c_rand - c_hit).max(f64::EPSILON);
    let hit_rate = |c: f64| ((c_rand - c) / span).clamp(0.0, 1.0);
    let mut result = ProbeResult {
        recommended_m,
        params: CostModelParams {
            c_m_ns: c_rand,
            c_hit_ns: c_hit,
            c_coro_ns: c_coro,
            p_h: LayoutCosts {
                sequential: hit_rate(c_seq),
                chained: hit_rate(c_chain),
                tree: hit_rate(c_tree),
            },
        },
        latency_ns: LayoutCosts {
            sequential: c_seq,
            chained: c_chain,
            tree: c_tree,
        },
        sweep,
        working_set_bytes: n * LINE,
        llc_bytes: llc,
        hotness_prefix: opts.hotness_prefix,
        strategies: Vec::new(),
    };
    result.strategies = classify(&result);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ProbeOptions {
        ProbeOptions {
            sweep: vec![1, 2, 4],
            trials: 1,
            hops: 20_000,
            working_set_bytes: Some(1 << 20),
            llc_bytes: Some(1 << 18),
            ..ProbeOptions::default()
        }
    }

    #[test]
    fn sizes_parse() {
        assert_eq!(parse_size("32K"), Some(32 << 10));
        assert_eq!(parse_size("300M"), Some(300 << 20));
        assert_eq!(parse_size("512"), Some(512));
        assert_eq!(parse_size("x"), None);
    }

    #[test]
    fn random_cycle_is_one_cycle() {
        let mut lines = alloc_lines(1000).unwrap();
        random_cycle(&mut lines, &mut ChaCha8Rng::seed_from_u64(1));
        let mut seen = vec![false; 1000];
        let mut i = 0;
        for _ in 0..1000 {
            assert!(!seen[i]);
            seen[i] = true;
            i = lines[i].next;
        }
        assert_eq!(i, 0);
    }

    #[test]
    fn probe_is_well_formed() {
        let p = probe_config(&small()).unwrap();
        assert!([1, 2, 4].contains(&p.recommended_m));
        assert_eq!(p.sweep.len(), 3);
        assert!(p.params.c_coro_ns > 0.0);
        assert!(p.params.c_m_ns > 0.0);
        for x in [p.params.p_h.sequential, p.params.p_h.chained, p.params.p_h.tree] {
            assert!((0.0..=1.0).contains(&x));
        }
        assert_eq!(p.strategies.len(), 4);
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let opts = ProbeOptions { sweep: vec![], ..small() };
        assert_eq!(probe_config(&opts), Err(ProbeError::EmptySweep));
    }

    #[test]
    fn oversized_working_set_is_reported() {
        let opts = ProbeOptions {
            working_set_bytes: Some(usize::MAX / 2),
            ..small()
        };
        assert!(matches!(probe_config(&opts), Err(ProbeError::InsufficientMemory { .. })));
    }
}
