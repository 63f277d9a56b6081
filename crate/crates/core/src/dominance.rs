//! Weighted dominance sums: for every query `q`, the total weight of the
//! points `p` with `p ⪯ q`.
//!
//! One dimension is a sorted sweep, two dimensions a sweep with a Fenwick tree
//! over the second coordinate, and higher dimensions divide and conquer on the
//! lexicographic order, dropping one coordinate per level. Every sort uses a
//! strict total order (coordinates, then points before queries, then input
//! index), so the output depends only on the input, never on the sort
//! algorithm or the thread count.

use std::cmp::Ordering;

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

struct Problem<'a> {
    dim: usize,
    points: &'a [f64],
    weights: &'a [f64],
    queries: &'a [f64],
}

impl Problem<'_> {
    #[inline]
    fn point(&self, i: u32) -> &[f64] {
        let i = i as usize;
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    fn query(&self, i: u32) -> &[f64] {
        let i = i as usize;
        &self.queries[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    fn coords(&self, item: Item) -> &[f64] {
        match item {
            Item::Point(i) => self.point(i),
            Item::Query(i) => self.query(i),
        }
    }

    /// Lexicographic over coordinates `from..`, then points first, then index.
    fn cmp_items(&self, from: usize, a: Item, b: Item) -> Ordering {
        for (x, y) in self.coords(a)[from..].iter().zip(&self.coords(b)[from..]) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                other => return other,
            }
        }
        a.tie_key().cmp(&b.tie_key())
    }
}

#[derive(Debug, Clone, Copy)]
enum Item {
    Point(u32),
    Query(u32),
}

impl Item {
    #[inline]
    fn tie_key(self) -> (u8, u32) {
        match self {
            Item::Point(i) => (0, i),
            Item::Query(i) => (1, i),
        }
    }
}

/// `out[q] = Σ { weights[p] : points[p] ⪯ queries[q] }`, with points and
/// queries stored flat with `dim` coordinates each.
pub(crate) fn dominance_sums(
    dim: usize,
    points: &[f64],
    weights: &[f64],
    queries: &[f64],
) -> Vec<f64> {
    assert!(dim >= 1);
    debug_assert_eq!(points.len(), weights.len() * dim);
    let problem = Problem {
        dim,
        points,
        weights,
        queries,
    };
    let n_points = weights.len() as u32;
    let n_queries = (queries.len() / dim) as u32;
    let mut out = vec![Neumaier::default(); n_queries as usize];
    let items: Vec<Item> = (0..n_points)
        .map(Item::Point)
        .chain((0..n_queries).map(Item::Query))
        .collect();
    solve(&problem, 0, items, &mut out);
    out.iter().map(Neumaier::value).collect()
}

fn solve(problem: &Problem<'_>, from: usize, mut items: Vec<Item>, out: &mut [Neumaier]) {
    let has_point = items.iter().any(|i| matches!(i, Item::Point(_)));
    let has_query = items.iter().any(|i| matches!(i, Item::Query(_)));
    if !has_point || !has_query {
        return;
    }
    match problem.dim - from {
        1 => sweep_1d(problem, from, &mut items, out),
        2 => sweep_2d(problem, from, &mut items, out),
        _ => {
            items.sort_unstable_by(|&a, &b| problem.cmp_items(from, a, b));
            divide(problem, from, &items, out);
        }
    }
}

fn sweep_1d(problem: &Problem<'_>, from: usize, items: &mut [Item], out: &mut [Neumaier]) {
    items.sort_unstable_by(|&a, &b| problem.cmp_items(from, a, b));
    let mut running = Neumaier::default();
    for &item in items.iter() {
        match item {
            Item::Point(i) => running.add(problem.weights[i as usize]),
            Item::Query(i) => out[i as usize].add(running.value()),
        }
    }
}

fn sweep_2d(problem: &Problem<'_>, from: usize, items: &mut [Item], out: &mut [Neumaier]) {
    let second = from + 1;
    let mut ys: Vec<f64> = items
        .iter()
        .filter_map(|&it| match it {
            Item::Point(i) => Some(problem.point(i)[second]),
            Item::Query(_) => None,
        })
        .collect();
    ys.sort_unstable_by(|a, b| a.total_cmp(b));
    ys.dedup();

    // Sweep on the first active coordinate; ties put points before queries.
    items.sort_unstable_by(|&a, &b| {
        problem.coords(a)[from]
            .total_cmp(&problem.coords(b)[from])
            .then_with(|| a.tie_key().cmp(&b.tie_key()))
    });
    let mut tree = Fenwick::new(ys.len());
    for &item in items.iter() {
        match item {
            Item::Point(i) => {
                let y = problem.point(i)[second];
                let slot = ys.partition_point(|v| v.total_cmp(&y) == Ordering::Less);
                tree.add(slot, problem.weights[i as usize]);
            }
            Item::Query(i) => {
                let y = problem.query(i)[second];
                let count = ys.partition_point(|v| v.total_cmp(&y) != Ordering::Greater);
                out[i as usize].add(tree.prefix(count));
            }
        }
    }
}

/// `items` is sorted lexicographically on coordinates `from..`. Any point
/// dominating-below a query precedes it, so each such pair is split at exactly
/// one level, where the first active coordinate is already ordered and only
/// the remaining ones need checking.
fn divide(problem: &Problem<'_>, from: usize, items: &[Item], out: &mut [Neumaier]) {
    if items.len() < 2 {
        return;
    }
    let mid = items.len() / 2;
    let (left, right) = items.split_at(mid);
    divide(problem, from, left, out);
    divide(problem, from, right, out);
    let cross: Vec<Item> = left
        .iter()
        .copied()
        .filter(|i| matches!(i, Item::Point(_)))
        .chain(
            right
                .iter()
                .copied()
                .filter(|i| matches!(i, Item::Query(_))),
        )
        .collect();
    solve(problem, from + 1, cross, out);
}

struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self {
            tree: vec![0.0; n + 1],
        }
    }

    /// Adds `w` at 0-based `slot`.
    fn add(&mut self, slot: usize, w: f64) {
        let mut i = slot + 1;
        while i < self.tree.len() {
            self.tree[i] += w;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over slots `0..count`.
    fn prefix(&self, count: usize) -> f64 {
        let mut i = count;
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}
