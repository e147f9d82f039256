//! Coverings of the line: the first-fit allocator and the path formula.
//!
//! The allocator stores files one at a time in arrival order: a file arriving
//! at `x` fills the free space to the right of `x`, possibly split across
//! several gaps. The path formula builds the same covering in one location
//! sweep: with `Y` the free path (drift `-1`, jump `l_i` at `x_i`) and `I` its
//! running infimum, the covered set is `{Y > I}` and `R = Y - I` is the
//! workload carried rightwards.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::arrivals::{FileArrival, Window};
use crate::error::{domain, Error, Result};

/// Disjoint half-open covered blocks `[a, b)` in increasing order. Touching
/// blocks are always merged.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Covering {
    pub window: Window,
    blocks: Vec<(f64, f64)>,
    /// Exact total size stored in each block, kept by the allocator so that
    /// block ends do not depend on the order of storage.
    #[serde(skip)]
    stored: Vec<ExactSum>,
}

impl PartialEq for Covering {
    fn eq(&self, other: &Self) -> bool {
        self.window == other.window && self.blocks == other.blocks
    }
}

/// Non-overlapping partial sums whose exact total is the represented value.
#[derive(Clone, Debug, Default)]
struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    fn of(x: f64) -> Self {
        Self { partials: vec![x] }
    }

    fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    fn absorb(&mut self, other: &ExactSum) {
        for &x in &other.partials {
            self.add(x);
        }
    }

    /// Correctly rounded total.
    fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            let y = p[n - 1];
            n -= 1;
            hi = x + y;
            lo = y - (hi - x);
            if lo != 0.0 {
                break;
            }
        }
        // round half to even across the remaining partials
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

/// Blocks of a covering restricted to the statistics window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCensus {
    /// Blocks meeting the window, clipped ones included.
    pub count: usize,
    /// Clipped lengths, decreasing.
    pub lengths: Vec<f64>,
    /// Largest clipped length, 0 if there is none.
    pub largest: f64,
}

/// The covered block containing a point, in absolute coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Straddle {
    pub left: f64,
    pub right: f64,
    pub length: f64,
}

impl Covering {
    pub fn empty(window: Window) -> Self {
        Self {
            window,
            blocks: Vec::new(),
            stored: Vec::new(),
        }
    }

    /// Covering with the given sorted, disjoint blocks. Touching blocks are
    /// kept apart, as needed for excursion sets of continuous paths.
    pub fn from_blocks(window: Window, blocks: Vec<(f64, f64)>) -> Self {
        debug_assert!(blocks.windows(2).all(|p| p[0].1 <= p[1].0));
        Self {
            window,
            blocks,
            stored: Vec::new(),
        }
    }

    pub fn blocks(&self) -> &[(f64, f64)] {
        &self.blocks
    }

    /// Whether `x` is covered.
    pub fn is_covered(&self, x: f64) -> bool {
        let i = self.blocks.partition_point(|&(_, b)| b <= x);
        i < self.blocks.len() && self.blocks[i].0 <= x
    }

    /// Stores a file first-fit to the right of `location`.
    pub fn store_file(&mut self, location: f64, size: f64) -> Result<()> {
        let origin = self.window.origin();
        let right = self.window.right;
        if !(location >= origin && location <= right) {
            return domain(format!("location {location} outside [{origin}, {right}]"));
        }
        if !(size >= 0.0 && size.is_finite()) {
            return domain(format!("file size must be finite and >= 0, got {size}"));
        }
        if size == 0.0 {
            return Ok(());
        }
        let lo = self.blocks.partition_point(|&(_, b)| b < location);
        let mut p = location;
        let mut r = size;
        let mut i = lo;
        if i < self.blocks.len() && self.blocks[i].0 <= p {
            p = p.max(self.blocks[i].1);
            i += 1;
        }
        loop {
            let next = self.blocks.get(i).map_or(f64::INFINITY, |b| b.0);
            let gap = next - p;
            if r <= gap {
                p += r;
                break;
            }
            r -= gap;
            p = self.blocks[i].1;
            i += 1;
        }
        if p > right {
            return Err(Error::Overflow {
                location,
                size,
                right_edge: right,
            });
        }
        let hi = self.blocks.partition_point(|&(a, _)| a <= p);
        if self.stored.len() != self.blocks.len() {
            self.stored = self
                .blocks
                .iter()
                .map(|&(a, b)| ExactSum::of(b - a))
                .collect();
        }
        let mut total = ExactSum::of(size);
        for s in &self.stored[lo..hi] {
            total.absorb(s);
        }
        let start = if hi > lo {
            self.blocks[lo].0.min(location)
        } else {
            location
        };
        let end = start + total.value();
        self.blocks.splice(lo..hi, [(start, end)]);
        self.stored.splice(lo..hi, [total]);
        Ok(())
    }

    /// Lebesgue measure of the covered part of `[left, right]` over its length.
    pub fn covered_fraction(&self) -> f64 {
        let (l, r) = (self.window.left, self.window.right);
        self.clipped().fold(0.0, |acc, (a, b)| acc + (b - a)) / (r - l)
    }

    fn clipped(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.clipped_to(self.window.left, self.window.right)
    }

    fn clipped_to(&self, l: f64, r: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.blocks
            .iter()
            .filter(move |&&(a, b)| b > l && a < r)
            .map(move |&(a, b)| (a.max(l), b.min(r)))
    }

    /// Census over the statistics window.
    pub fn census(&self) -> BlockCensus {
        self.census_on(self.window.left, self.window.right)
    }

    /// Census of the blocks meeting `[a, b]`, clipped to it.
    pub fn census_on(&self, a: f64, b: f64) -> BlockCensus {
        let mut lengths: Vec<f64> = self.clipped_to(a, b).map(|(a, b)| b - a).collect();
        lengths.sort_by(|a, b| b.total_cmp(a));
        BlockCensus {
            count: lengths.len(),
            largest: lengths.first().copied().unwrap_or(0.0),
            lengths,
        }
    }

    /// Block containing `at`; a zero-length block at `at` if it is free.
    pub fn straddle(&self, at: f64) -> Straddle {
        let i = self.blocks.partition_point(|&(_, b)| b <= at);
        match self.blocks.get(i) {
            Some(&(a, b)) if a <= at => Straddle {
                left: a,
                right: b,
                length: b - a,
            },
            _ => Straddle {
                left: at,
                right: at,
                length: 0.0,
            },
        }
    }

    /// Writes the blocks as CSV rows `a,b` after a `# t=… seed=…` line.
    pub fn write_csv<W: Write>(&self, t: f64, seed: u64, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# t={t} seed={seed}")?;
        for &(a, b) in &self.blocks {
            writeln!(out, "{a},{b}")?;
        }
        Ok(())
    }
}

/// Stores every file with `time <= t` in arrival order.
pub fn build_covering_allocator(
    arrivals: &[FileArrival],
    t: f64,
    window: &Window,
) -> Result<Covering> {
    let mut files: Vec<&FileArrival> = arrivals.iter().filter(|f| f.time <= t).collect();
    files.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut cov = Covering::empty(*window);
    for f in files {
        cov.store_file(f.location, f.size)?;
    }
    Ok(cov)
}

/// Streaming evaluation of the path formula over increasing locations.
#[derive(Clone, Debug)]
pub struct Sweep {
    pos: f64,
    workload: f64,
    open: Option<f64>,
}

impl Sweep {
    /// Starts at `origin` carrying `workload` from the left.
    pub fn new(origin: f64, workload: f64) -> Self {
        Self {
            pos: origin,
            workload,
            open: (workload > 0.0).then_some(origin),
        }
    }

    pub fn position(&self) -> f64 {
        self.pos
    }

    pub fn workload(&self) -> f64 {
        self.workload
    }

    /// Start of the block covering the current position, if any.
    pub fn open_block(&self) -> Option<f64> {
        self.open
    }

    /// Moves to `x >= position`, returning the block closed on the way.
    pub fn advance(&mut self, x: f64) -> Option<(f64, f64)> {
        let gap = x - self.pos;
        debug_assert!(gap >= 0.0, "sweep moved backwards");
        let closed = if self.workload >= gap {
            self.workload -= gap;
            None
        } else {
            let end = self.pos + self.workload;
            self.workload = 0.0;
            self.open.take().map(|a| (a, end))
        };
        self.pos = x;
        closed
    }

    /// Adds a file of length `size` at the current position.
    pub fn add(&mut self, size: f64) {
        if size > 0.0 {
            self.workload += size;
            self.open.get_or_insert(self.pos);
        }
    }

    /// Closes the sweep at `right`, clipping an open block there.
    pub fn finish(&mut self, right: f64) -> Option<(f64, f64)> {
        match self.advance(right) {
            Some(b) => Some(b),
            None => self.open.take().map(|a| (a, right)),
        }
    }
}

/// A covering built by the path formula with the jumps that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub covering: Covering,
    /// Workload entering at the left edge of the simulated span.
    pub initial_workload: f64,
    /// `(location, size)` of the files with `time <= t`, sorted.
    pub jumps: Vec<(f64, f64)>,
}

impl PathSample {
    /// Workload `R(at)` just after any file at `at`.
    pub fn workload(&self, at: f64) -> Result<f64> {
        workload(self, at)
    }
}

fn sweep_blocks(jumps: &[(f64, f64)], window: &Window, initial_workload: f64) -> Vec<(f64, f64)> {
    let mut sweep = Sweep::new(window.origin(), initial_workload);
    let mut blocks = Vec::new();
    for &(x, l) in jumps {
        blocks.extend(sweep.advance(x));
        sweep.add(l);
    }
    blocks.extend(sweep.finish(window.right));
    blocks.retain(|&(a, b)| b > a);
    blocks
}

/// Builds the covering at time `t` from the path formula, clipping at the
/// right edge instead of failing on overflow.
pub fn build_covering_path(
    arrivals: &[FileArrival],
    t: f64,
    window: &Window,
    initial_workload: f64,
) -> Result<PathSample> {
    if !(initial_workload >= 0.0) {
        return domain(format!(
            "initial workload must be >= 0, got {initial_workload}"
        ));
    }
    let origin = window.origin();
    let mut jumps: Vec<(f64, f64)> = arrivals
        .iter()
        .filter(|f| f.time <= t)
        .map(|f| (f.location, f.size))
        .collect();
    if let Some(&(x, _)) = jumps
        .iter()
        .find(|(x, _)| !(*x >= origin && *x <= window.right))
    {
        return domain(format!("location {x} outside the simulated span"));
    }
    jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let blocks = sweep_blocks(&jumps, window, initial_workload);
    Ok(PathSample {
        covering: Covering::from_blocks(*window, blocks),
        initial_workload,
        jumps,
    })
}

/// Workload `R(at) = Y(at) - I(at)` of a path sample.
pub fn workload(path: &PathSample, at: f64) -> Result<f64> {
    let w = &path.covering.window;
    if !(at >= w.origin() && at <= w.right) {
        return domain(format!("point {at} outside the simulated span"));
    }
    let mut sweep = Sweep::new(w.origin(), path.initial_workload);
    for &(x, l) in path.jumps.iter().take_while(|j| j.0 <= at) {
        sweep.advance(x);
        sweep.add(l);
    }
    sweep.advance(at);
    Ok(sweep.workload())
}

/// Block of `cov` containing `at`.
pub fn straddle_block(cov: &Covering, at: f64) -> Straddle {
    cov.straddle(at)
}

/// Census of the blocks of `cov` meeting `[a, b]`.
pub fn block_census(cov: &Covering, a: f64, b: f64) -> Result<BlockCensus> {
    let w = &cov.window;
    if !(a <= b && a >= w.origin() && b <= w.right) {
        return domain(format!("[{a}, {b}] is not inside the simulated span"));
    }
    Ok(cov.census_on(a, b))
}
