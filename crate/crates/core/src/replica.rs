//! Replicated simulation of the covering at a fixed horizon.
//!
//! A replica simulates the span `[left - margin, right]` by the path formula.
//! The boundary policy decides how much margin is simulated and what
//! workload enters at its left edge: nothing (an empty half-line to the left)
//! or a draw from the stationary workload law, which makes every statistic
//! on the span exact.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{Covering, Straddle, Sweep};
use crate::arrivals::{
    margin_arrivals, window_arrivals, ArrivalStream, SizeMeasure, SizeSampler, Window,
};
use crate::error::{domain, Result};
use crate::rng::{Purpose, StreamSeed};

/// Default margin in units of the typical block scale `m₂ / (m (1 - mt)²)`.
pub const DEFAULT_MARGIN_FACTOR: f64 = 50.0;
/// A block open at the right edge is followed this many block scales further.
const EXTENSION_FACTOR: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Start {
    /// No data enters from the left of the simulated span.
    Empty,
    /// The workload entering from the left is drawn from its stationary law.
    Stationary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginRule {
    /// Multiple of the typical block scale at the horizon.
    Factor(f64),
    /// Fixed length.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPolicy {
    pub start: Start,
    pub margin: MarginRule,
}

impl Default for BoundaryPolicy {
    fn default() -> Self {
        Self {
            start: Start::Empty,
            margin: MarginRule::Factor(DEFAULT_MARGIN_FACTOR),
        }
    }
}

/// `m₂ / (m (1 - mt)²)`, the length scale of blocks near saturation.
pub fn typical_block_scale(nu: &SizeMeasure, t: f64) -> f64 {
    let load = nu.mean() * t;
    nu.second_moment() / (nu.mean() * (1.0 - load).powi(2))
}

impl BoundaryPolicy {
    pub fn stationary(margin: MarginRule) -> Self {
        Self {
            start: Start::Stationary,
            margin,
        }
    }

    pub fn margin_for(&self, nu: &SizeMeasure, t: f64) -> Result<f64> {
        let load = nu.mean() * t;
        if self.start == Start::Empty && load >= 1.0 {
            return domain(format!(
                "an empty start cannot represent the saturated line (mt = {load}); use a stationary start"
            ));
        }
        let margin = match self.margin {
            MarginRule::Fixed(x) => x,
            MarginRule::Factor(_) if t == 0.0 => 0.0,
            MarginRule::Factor(_) if load >= 1.0 => 0.0,
            MarginRule::Factor(f) => f * typical_block_scale(nu, t),
        };
        if !(margin >= 0.0 && margin.is_finite()) {
            return domain(format!(
                "margin must be finite and >= 0, got {margin}; use a fixed margin"
            ));
        }
        Ok(margin)
    }
}

/// Everything a replica needs besides its seed.
#[derive(Clone, Debug)]
pub struct ReplicaSetup {
    pub sampler: SizeSampler,
    pub window: Window,
    pub t: f64,
    pub start: Start,
}

impl ReplicaSetup {
    pub fn new(
        nu: &SizeMeasure,
        t: f64,
        left: f64,
        right: f64,
        policy: &BoundaryPolicy,
    ) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return domain(format!("time must be finite and >= 0, got {t}"));
        }
        let margin = policy.margin_for(nu, t)?;
        Ok(Self {
            sampler: nu.sampler()?,
            window: Window::new(left, right, margin)?,
            t,
            start: policy.start,
        })
    }

    pub fn measure(&self) -> &SizeMeasure {
        self.sampler.measure()
    }

    fn initial_workload(&self, seed: StreamSeed) -> f64 {
        match self.start {
            Start::Empty => 0.0,
            Start::Stationary => self
                .sampler
                .sample_stationary_workload(self.t, &mut seed.rng(Purpose::WarmStart)),
        }
    }

    /// Simulates one replica and reports the workload at `probe`.
    ///
    /// The block open at the right edge is followed past it until it closes,
    /// so every block starting inside the window has its true length.
    pub fn run(&self, seed: StreamSeed, probe: f64) -> ReplicaRun {
        let w = &self.window;
        let initial_workload = self.initial_workload(seed);
        let mut sweep = Sweep::new(w.origin(), initial_workload);
        let mut blocks = Vec::new();
        let mut probe_workload = None;
        let margin = margin_arrivals(&self.sampler, self.t, w, seed);
        let beyond = ArrivalStream::new(
            &self.sampler,
            self.t,
            w.left,
            f64::INFINITY,
            seed.rng(Purpose::Window),
        );
        // cap on how far past the right edge a block is followed
        let reach = if self.measure().mean() * self.t < 1.0 && initial_workload.is_finite() {
            w.right + EXTENSION_FACTOR * typical_block_scale(self.measure(), self.t)
        } else {
            w.right
        };
        let mut open_at_end = false;
        for (x, l) in margin.into_iter().chain(beyond) {
            if probe_workload.is_none() && x > probe {
                blocks.extend(sweep.advance(probe));
                probe_workload = Some(sweep.workload());
            }
            if x >= w.right {
                if sweep.open_block().is_none() || !(x < reach) {
                    break;
                }
                if let Some(b) = sweep.advance(x) {
                    blocks.push(b);
                    break;
                }
                sweep.add(l);
                continue;
            }
            blocks.extend(sweep.advance(x));
            sweep.add(l);
        }
        if probe_workload.is_none() {
            blocks.extend(sweep.advance(probe.min(w.right)));
            probe_workload = Some(sweep.workload());
        }
        if let Some(a) = sweep.open_block() {
            let end = sweep.position() + sweep.workload();
            if end <= w.right {
                blocks.push((a, end));
            } else {
                open_at_end = true;
                blocks.push((a, sweep.position().max(w.right)));
            }
        }
        blocks.retain(|&(a, b)| b > a);
        ReplicaRun {
            covering: Covering::from_blocks(*w, blocks),
            probe_workload: probe_workload.unwrap_or(0.0),
            initial_workload,
            open_at_end,
        }
    }

    /// Block containing `probe`, sweeping only as far as needed. Returns
    /// `None` when the block reaches either end of the simulated span.
    pub fn straddle_probe(&self, seed: StreamSeed, probe: f64) -> Option<Straddle> {
        let w = &self.window;
        let mut sweep = Sweep::new(w.origin(), self.initial_workload(seed));
        let margin = margin_arrivals(&self.sampler, self.t, w, seed);
        let inside = window_arrivals(&self.sampler, self.t, w, seed);
        let mut passed = false;
        for (x, l) in margin.into_iter().chain(inside) {
            if !passed && x > probe {
                sweep.advance(probe);
                if sweep.open_block().is_none() {
                    return Some(Straddle {
                        left: probe,
                        right: probe,
                        length: 0.0,
                    });
                }
                passed = true;
            }
            if let Some((a, b)) = sweep.advance(x) {
                if passed {
                    return clipped_or(a, b, w);
                }
            }
            sweep.add(l);
        }
        if !passed {
            sweep.advance(probe);
            if sweep.open_block().is_none() {
                return Some(Straddle {
                    left: probe,
                    right: probe,
                    length: 0.0,
                });
            }
        }
        None
    }
}

fn clipped_or(a: f64, b: f64, w: &Window) -> Option<Straddle> {
    (a > w.origin() && b < w.right).then_some(Straddle {
        left: a,
        right: b,
        length: b - a,
    })
}

/// Covering of one replica plus the workload at its probe point.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaRun {
    pub covering: Covering,
    pub probe_workload: f64,
    pub initial_workload: f64,
    /// The last block was cut before it closed.
    pub open_at_end: bool,
}

/// Statistics of one replica at a fixed horizon, measured on the window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedTimeSample {
    pub covered_fraction: f64,
    /// Blocks meeting the window, clipped ones included.
    pub block_count: usize,
    /// Blocks whose left end lies in `[left, right)`.
    pub block_starts: usize,
    /// Block straddling the window midpoint, relative to it: `left = g <= 0`, `right = d >= 0`.
    pub straddle: Straddle,
    /// Free gap immediately left of `g`; `None` if it reaches the span edge.
    pub left_gap: Option<f64>,
    /// Free gap immediately right of `d`; `None` if it reaches the span edge.
    pub right_gap: Option<f64>,
    /// Workload `R` at the midpoint.
    pub workload: f64,
    /// Number, sum and sum of squares of the lengths of the blocks starting
    /// in the window, each followed to its end.
    pub complete_blocks: (usize, f64, f64),
}

impl FixedTimeSample {
    pub fn from_run(run: &ReplicaRun) -> Self {
        let cov = &run.covering;
        let w = cov.window;
        let mid = w.midpoint();
        let s = cov.straddle(mid);
        let blocks = cov.blocks();
        let before = blocks.partition_point(|&(_, b)| b <= s.left);
        let after = blocks.partition_point(|&(a, _)| a <= s.left);
        let left_gap = before.checked_sub(1).map(|i| s.left - blocks[i].1);
        let right_gap = blocks.get(after).map(|&(a, _)| a - s.right);
        let starts = blocks
            .iter()
            .filter(|&&(a, _)| a >= w.left && a < w.right)
            .count();
        let complete = blocks.len() - usize::from(run.open_at_end);
        let (mut n, mut sum, mut sq) = (0, 0.0, 0.0);
        for &(a, b) in blocks[..complete]
            .iter()
            .filter(|&&(a, _)| a >= w.left && a < w.right)
        {
            n += 1;
            sum += b - a;
            sq += (b - a) * (b - a);
        }
        Self {
            covered_fraction: cov.covered_fraction(),
            block_count: cov.census().count,
            block_starts: starts,
            straddle: Straddle {
                left: s.left - mid,
                right: s.right - mid,
                length: s.length,
            },
            left_gap,
            right_gap,
            workload: run.probe_workload,
            complete_blocks: (n, sum, sq),
        }
    }
}

/// Runs `replicas` replicas in parallel; results are ordered by replica index.
pub fn replicate<T, F>(master: u64, replicas: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(StreamSeed) -> T + Sync,
{
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| f(StreamSeed::new(master, r)))
        .collect()
}

/// Fixed-horizon samples of `replicas` replicas over `[left, right]`.
pub fn fixed_time_samples(
    nu: &SizeMeasure,
    t: f64,
    left: f64,
    right: f64,
    policy: &BoundaryPolicy,
    master: u64,
    replicas: usize,
) -> Result<Vec<FixedTimeSample>> {
    let setup = ReplicaSetup::new(nu, t, left, right, policy)?;
    let mid = setup.window.midpoint();
    Ok(replicate(master, replicas, |seed| {
        FixedTimeSample::from_run(&setup.run(seed, mid))
    }))
}
