//! Online prototype selection maximising `log det(K + I)`.
//!
//! The selector keeps the Gram matrix `K` of the current prototype set and the
//! inverse `A = (K + I)⁻¹`. The kernel is an action indicator times
//! `exp(-½ dᵀ Σ⁻¹ d)` over `(s, s', r, γ)`, with `Σ` the empirical covariance
//! of observed transitions. Because prototypes with different actions have
//! zero similarity, `K` and `A` are block diagonal by action and every update
//! only touches one or two blocks.
//!
//! Once the budget is full, a new transition is compared against the members
//! of its nearest k-means cluster. Swapping member `j` for the candidate `t`
//! changes the utility by
//!
//! ```text
//! ln A_jj + ln(2 − k'ᵀ M₋ⱼ⁻¹ k')
//! ```
//!
//! where `M₋ⱼ⁻¹` follows from `A` by a Schur downdate, so all members can be
//! scored from a single product `A k`. The swap is committed only if the best
//! gain exceeds the utility threshold.
//!
//! `Σ` is snapshotted when the budget first fills and again on
//! [`PrototypeSelector::refresh_metric`]; between snapshots the Gram matrix is
//! exactly the kernel matrix under the snapshot metric.

use nalgebra::{Cholesky, DMatrix};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kernels::Transition;
use crate::linalg::{log_det_spd, RunningCovariance};
use crate::{rng_from_seed, SimRng};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SelectorConfig {
    pub budget: usize,
    /// Minimum utility gain for a swap to be committed.
    pub utility_threshold: f64,
    /// Re-run k-means after this many committed swaps.
    pub recluster_period: usize,
    /// Cluster count; `None` means `⌈√budget⌉`.
    pub clusters: Option<usize>,
    pub kmeans_iterations: usize,
    /// Ridge added to the empirical covariance before inversion.
    pub metric_floor: f64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            budget: 1000,
            utility_threshold: 0.01,
            recluster_period: 10,
            clusters: None,
            kmeans_iterations: 5,
            metric_floor: 1e-6,
        }
    }
}

impl SelectorConfig {
    pub fn cluster_count(&self) -> usize {
        self.clusters
            .unwrap_or_else(|| (self.budget as f64).sqrt().ceil() as usize)
            .clamp(1, self.budget.max(1))
    }
}

/// Outcome of offering a transition to the selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    AddedToFreeSlot(usize),
    /// The prototype previously in this slot was replaced.
    Swapped(usize),
    Rejected,
}

/// A prototype as the selector sees it: the continuous part `(s, s', r, γ)`
/// and the action.
#[derive(Debug, Clone, PartialEq)]
pub struct SelPoint {
    pub z: Vec<f64>,
    pub a: usize,
}

impl SelPoint {
    pub fn from_transition(t: &Transition) -> Self {
        let mut z = Vec::with_capacity(2 * t.s.len() + 2);
        z.extend_from_slice(&t.s);
        z.extend_from_slice(&t.s_next);
        z.push(t.r);
        z.push(t.gamma);
        Self { z, a: t.a }
    }
}

/// Inverse covariance of the selection kernel.
#[derive(Debug, Clone)]
pub struct SelectionMetric {
    inv: DMatrix<f64>,
}

impl SelectionMetric {
    /// Metric from a covariance; a ridge of `floor · I` keeps it invertible.
    pub fn from_covariance(cov: &DMatrix<f64>, floor: f64) -> Self {
        let n = cov.nrows();
        let reg = cov + DMatrix::identity(n, n) * floor;
        let inv = Cholesky::new(reg)
            .map(|c| c.inverse())
            .unwrap_or_else(|| DMatrix::identity(n, n) / floor);
        Self { inv }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            inv: DMatrix::identity(dim, dim),
        }
    }

    #[inline]
    fn mahalanobis_sq(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let mut acc = 0.0;
        for j in 0..n {
            let dj = x[j] - y[j];
            if dj == 0.0 {
                continue;
            }
            let col = self.inv.column(j);
            let mut row = 0.0;
            for i in 0..n {
                row += col[i] * (x[i] - y[i]);
            }
            acc += dj * row;
        }
        acc
    }

    /// Selection kernel between two points.
    #[inline]
    pub fn kernel(&self, p: &SelPoint, q: &SelPoint) -> f64 {
        if p.a != q.a {
            return 0.0;
        }
        (-0.5 * self.mahalanobis_sq(&p.z, &q.z)).exp()
    }

    /// Ordering key equivalent to the clustering distance `1 − k(p, q)`:
    /// action mismatch first, then Mahalanobis distance. Avoids ties when the
    /// exponential underflows.
    #[inline]
    fn distance_key(&self, p: &SelPoint, q: &SelPoint) -> (bool, f64) {
        (p.a != q.a, self.mahalanobis_sq(&p.z, &q.z))
    }

    /// The clustering distance `1 − k(p, q)`.
    pub fn distance(&self, p: &SelPoint, q: &SelPoint) -> f64 {
        1.0 - self.kernel(p, q)
    }
}

/// Kernel matrix of a point set.
pub fn gram_matrix(points: &[SelPoint], metric: &SelectionMetric) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in 0..i {
            let v = metric.kernel(&points[i], &points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// `log det(K + I)` via Cholesky. Panics if `K + I` is not positive definite,
/// which cannot happen for a valid kernel matrix.
pub fn selector_utility(gram: &DMatrix<f64>) -> f64 {
    let n = gram.nrows();
    let m = gram + DMatrix::identity(n, n);
    log_det_spd(&m).expect("K + I is not positive definite; gram matrix corrupted")
}

/// Weighted centroid of a cluster: mean `z` and majority action.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroid {
    pub point: SelPoint,
}

fn centroid_of(points: &[SelPoint], members: &[usize]) -> Option<Centroid> {
    let first = members.first()?;
    let dim = points[*first].z.len();
    let mut z = vec![0.0; dim];
    let mut votes: Vec<usize> = Vec::new();
    for &m in members {
        for (acc, v) in z.iter_mut().zip(&points[m].z) {
            *acc += v;
        }
        let a = points[m].a;
        if votes.len() <= a {
            votes.resize(a + 1, 0);
        }
        votes[a] += 1;
    }
    for v in &mut z {
        *v /= members.len() as f64;
    }
    let a = votes
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(&x.0)))
        .map(|(a, _)| a)
        .unwrap_or(0);
    Some(Centroid {
        point: SelPoint { z, a },
    })
}

fn nearest_centroid(metric: &SelectionMetric, p: &SelPoint, centroids: &[Option<Centroid>], current: Option<usize>) -> usize {
    let mut best: Option<(usize, (bool, f64))> = None;
    for (c, cen) in centroids.iter().enumerate() {
        let Some(cen) = cen else { continue };
        let key = metric.distance_key(p, &cen.point);
        let better = match &best {
            None => true,
            Some((bc, bk)) => {
                key < *bk || (key == *bk && Some(c) == current && Some(*bc) != current)
            }
        };
        if better {
            best = Some((c, key));
        }
    }
    best.map(|(c, _)| c).unwrap_or(0)
}

/// Warm-started k-means under the distance `1 − k(·,·)`.
///
/// `assignment` is read as the starting partition and overwritten. Empty
/// clusters are reseeded with the point farthest from its centroid (never
/// emptying a singleton). Returns the number of assignment changes made in the
/// final iteration (0 means converged).
pub fn kmeans(
    points: &[SelPoint],
    metric: &SelectionMetric,
    k: usize,
    assignment: &mut [usize],
    max_iterations: usize,
) -> usize {
    assert!(k >= 1 && k <= points.len(), "k = {k} with {} points", points.len());
    assert_eq!(assignment.len(), points.len());
    for a in assignment.iter_mut() {
        if *a >= k {
            *a = k - 1;
        }
    }
    let mut changes = 0;
    for _ in 0..max_iterations.max(1) {
        let centroids = recompute_centroids(points, metric, k, assignment);
        changes = 0;
        for (i, p) in points.iter().enumerate() {
            let c = nearest_centroid(metric, p, &centroids, Some(assignment[i]));
            if c != assignment[i] {
                assignment[i] = c;
                changes += 1;
            }
        }
        if changes == 0 {
            break;
        }
    }
    changes
}

/// Centroids for a partition, repairing empty clusters in place.
fn recompute_centroids(points: &[SelPoint], metric: &SelectionMetric, k: usize, assignment: &mut [usize]) -> Vec<Option<Centroid>> {
    let mut members = vec![Vec::new(); k];
    for (i, &c) in assignment.iter().enumerate() {
        members[c].push(i);
    }
    let mut centroids: Vec<Option<Centroid>> = members.iter().map(|m| centroid_of(points, m)).collect();
    for e in 0..k {
        if !members[e].is_empty() {
            continue;
        }
        // farthest point from its own centroid, taken from a cluster of size > 1
        let mut best: Option<(usize, (bool, f64))> = None;
        for (i, p) in points.iter().enumerate() {
            let c = assignment[i];
            if members[c].len() <= 1 {
                continue;
            }
            let Some(cen) = &centroids[c] else { continue };
            let key = metric.distance_key(p, &cen.point);
            if best.as_ref().map_or(true, |(_, bk)| key > *bk) {
                best = Some((i, key));
            }
        }
        let Some((i, _)) = best else { continue };
        let old = assignment[i];
        members[old].retain(|&m| m != i);
        centroids[old] = centroid_of(points, &members[old]);
        assignment[i] = e;
        members[e].push(i);
        centroids[e] = centroid_of(points, &members[e]);
    }
    centroids
}

#[derive(Debug, Clone)]
pub struct PrototypeSelector {
    config: SelectorConfig,
    points: Vec<SelPoint>,
    stats: Option<RunningCovariance>,
    metric: Option<SelectionMetric>,
    gram: DMatrix<f64>,
    /// `(K + I)⁻¹`, block diagonal by action.
    inv: DMatrix<f64>,
    by_action: Vec<Vec<usize>>,
    assignment: Vec<usize>,
    centroids: Vec<Option<Centroid>>,
    swaps_since_recluster: usize,
    swaps_since_refresh: usize,
    total_swaps: usize,
    rng: SimRng,
}

impl PrototypeSelector {
    pub fn new(config: SelectorConfig, seed: u64) -> Self {
        assert!(config.budget > 0, "prototype budget must be positive");
        Self {
            config,
            points: Vec::new(),
            stats: None,
            metric: None,
            gram: DMatrix::zeros(0, 0),
            inv: DMatrix::zeros(0, 0),
            by_action: Vec::new(),
            assignment: Vec::new(),
            centroids: Vec::new(),
            swaps_since_recluster: 0,
            swaps_since_refresh: 0,
            total_swaps: 0,
            rng: rng_from_seed(seed),
        }
    }

    pub fn config(&self) -> &SelectorConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.points.len() >= self.config.budget
    }

    pub fn points(&self) -> &[SelPoint] {
        &self.points
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn total_swaps(&self) -> usize {
        self.total_swaps
    }

    pub fn swaps_since_refresh(&self) -> usize {
        self.swaps_since_refresh
    }

    /// Metric currently used by the Gram matrix. Before the budget first fills
    /// this is the live empirical estimate.
    pub fn metric(&self) -> SelectionMetric {
        match &self.metric {
            Some(m) => m.clone(),
            None => self.live_metric(),
        }
    }

    fn live_metric(&self) -> SelectionMetric {
        match &self.stats {
            Some(st) if st.count() >= 2 => SelectionMetric::from_covariance(&st.covariance(), self.config.metric_floor),
            _ => SelectionMetric::identity(self.points.first().map_or(0, |p| p.z.len())),
        }
    }

    /// The maintained Gram matrix (only meaningful once full).
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// The maintained `(K + I)⁻¹`.
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inv
    }

    /// Kernel matrix of the current set recomputed from scratch.
    pub fn gram_from_scratch(&self) -> DMatrix<f64> {
        gram_matrix(&self.points, &self.metric())
    }

    /// `log det(K + I)` of the current set, recomputed from scratch.
    pub fn utility(&self) -> f64 {
        selector_utility(&self.gram_from_scratch())
    }

    /// Utility of an arbitrary set of transitions under the current metric.
    pub fn utility_of(&self, set: &[Transition]) -> f64 {
        let pts: Vec<SelPoint> = set.iter().map(SelPoint::from_transition).collect();
        selector_utility(&gram_matrix(&pts, &self.metric()))
    }

    /// Offer a transition. Fills free slots unconditionally (exact duplicates
    /// excepted); once full, swaps it in for the member of its nearest cluster
    /// whose exchange raises the utility most, if that gain exceeds the
    /// threshold.
    pub fn consider(&mut self, t: &Transition) -> Decision {
        let p = SelPoint::from_transition(t);
        self.stats.get_or_insert_with(|| RunningCovariance::new(p.z.len())).push(&p.z);
        if self.points.iter().any(|q| *q == p) {
            return Decision::Rejected;
        }
        if !self.is_full() {
            self.points.push(p);
            let slot = self.points.len() - 1;
            if self.is_full() {
                self.build();
            }
            return Decision::AddedToFreeSlot(slot);
        }
        match self.best_swap(&p) {
            Some((slot, gain, cluster)) if gain > self.config.utility_threshold => {
                self.commit_swap(slot, p, cluster);
                Decision::Swapped(slot)
            }
            _ => Decision::Rejected,
        }
    }

    /// Best swap candidate as `(slot, gain, cluster)` without committing.
    pub fn best_swap(&self, p: &SelPoint) -> Option<(usize, f64, usize)> {
        let metric = self.metric.as_ref()?;
        let cluster = nearest_centroid(metric, p, &self.centroids, None);
        let block: &[usize] = self.by_action.get(p.a).map_or(&[], |v| v.as_slice());

        // k over the candidate's action block; zero elsewhere
        let kt: Vec<f64> = block.iter().map(|&i| metric.kernel(p, &self.points[i])).collect();
        let mut u = vec![0.0; block.len()];
        for (l, &col) in block.iter().enumerate() {
            let kl = kt[l];
            if kl == 0.0 {
                continue;
            }
            let column = self.inv.column(col);
            for (ui, &row) in u.iter_mut().zip(block) {
                *ui += column[row] * kl;
            }
        }
        let q: f64 = kt.iter().zip(&u).map(|(a, b)| a * b).sum();
        let mut pos_in_block = vec![usize::MAX; self.points.len()];
        for (pos, &i) in block.iter().enumerate() {
            pos_in_block[i] = pos;
        }

        let mut best: Option<(usize, f64)> = None;
        for j in (0..self.points.len()).filter(|&j| self.assignment[j] == cluster) {
            let ajj = self.inv[(j, j)];
            let (kj, uj) = match pos_in_block[j] {
                usize::MAX => (0.0, 0.0),
                pos => (kt[pos], u[pos]),
            };
            let k_a_k = q - 2.0 * kj * uj + kj * kj * ajj;
            let ak_j = uj - ajj * kj;
            let quad = k_a_k - ak_j * ak_j / ajj;
            let add = 2.0 - quad;
            if !(add > 0.0) || !(ajj > 0.0) {
                continue;
            }
            let gain = ajj.ln() + add.ln();
            if best.map_or(true, |(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        best.map(|(j, g)| (j, g, cluster))
    }

    fn commit_swap(&mut self, j: usize, p: SelPoint, cluster: usize) {
        let metric = self.metric.clone().expect("swap before build");
        let old_a = self.points[j].a;

        // Schur downdate: remove j from its block
        let old_block = self.by_action[old_a].clone();
        let ajj = self.inv[(j, j)];
        let col: Vec<f64> = old_block.iter().map(|&i| self.inv[(i, j)]).collect();
        for (x, &i) in old_block.iter().enumerate() {
            for (y, &l) in old_block.iter().enumerate() {
                self.inv[(i, l)] -= col[x] * col[y] / ajj;
            }
        }
        for &i in &old_block {
            self.inv[(i, j)] = 0.0;
            self.inv[(j, i)] = 0.0;
        }
        self.by_action[old_a].retain(|&i| i != j);

        // new gram row
        self.points[j] = p;
        for i in 0..self.points.len() {
            let v = if i == j { 1.0 } else { metric.kernel(&self.points[j], &self.points[i]) };
            self.gram[(i, j)] = v;
            self.gram[(j, i)] = v;
        }

        // border update: add j to the new block
        let a = self.points[j].a;
        if self.by_action.len() <= a {
            self.by_action.resize(a + 1, Vec::new());
        }
        let block = self.by_action[a].clone();
        let g: Vec<f64> = block.iter().map(|&i| self.gram[(i, j)]).collect();
        let mut w = vec![0.0; block.len()];
        for (l, &c) in block.iter().enumerate() {
            if g[l] == 0.0 {
                continue;
            }
            let column = self.inv.column(c);
            for (wi, &row) in w.iter_mut().zip(&block) {
                *wi += column[row] * g[l];
            }
        }
        let s = 2.0 - g.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        for (x, &i) in block.iter().enumerate() {
            for (y, &l) in block.iter().enumerate() {
                self.inv[(i, l)] += w[x] * w[y] / s;
            }
            self.inv[(i, j)] = -w[x] / s;
            self.inv[(j, i)] = -w[x] / s;
        }
        self.inv[(j, j)] = 1.0 / s;
        self.by_action[a].push(j);
        self.by_action[a].sort_unstable();

        self.assignment[j] = cluster;
        self.total_swaps += 1;
        self.swaps_since_refresh += 1;
        self.swaps_since_recluster += 1;
        if self.swaps_since_recluster >= self.config.recluster_period {
            self.swaps_since_recluster = 0;
            let k = self.config.cluster_count().min(self.points.len());
            let mut rng = self.rng.clone();
            self.recluster(k, &mut rng);
            self.rng = rng;
        }
    }

    /// Warm-started k-means over the prototypes (at most the configured
    /// number of iterations). Panics if `k` exceeds the prototype count.
    pub fn recluster<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) {
        assert!(k <= self.points.len(), "k = {k} exceeds {} prototypes", self.points.len());
        let metric = self.metric();
        if self.assignment.len() != self.points.len() || self.assignment.iter().any(|&c| c >= k) {
            self.assignment = initial_assignment(&self.points, &metric, k, rng);
        }
        kmeans(&self.points, &metric, k, &mut self.assignment, self.config.kmeans_iterations);
        let mut members = vec![Vec::new(); k];
        for (i, &c) in self.assignment.iter().enumerate() {
            members[c].push(i);
        }
        self.centroids = members.iter().map(|m| centroid_of(&self.points, m)).collect();
    }

    /// Re-estimate the metric from every transition seen so far and rebuild
    /// the Gram matrix, its inverse and the clustering.
    pub fn refresh_metric(&mut self) {
        if !self.is_full() {
            return;
        }
        self.build();
    }

    fn build(&mut self) {
        let metric = self.live_metric();
        self.gram = gram_matrix(&self.points, &metric);
        self.metric = Some(metric);
        self.rebuild_inverse();
        let k = self.config.cluster_count().min(self.points.len());
        let mut rng = self.rng.clone();
        let iters = self.config.kmeans_iterations;
        if self.assignment.len() != self.points.len() {
            self.assignment = initial_assignment(&self.points, self.metric.as_ref().unwrap(), k, &mut rng);
            // a fresh partition gets a few extra sweeps
            self.config.kmeans_iterations = iters.max(20);
        }
        self.recluster(k, &mut rng);
        self.config.kmeans_iterations = iters;
        self.rng = rng;
        self.swaps_since_refresh = 0;
        self.swaps_since_recluster = 0;
    }

    fn rebuild_inverse(&mut self) {
        let n = self.points.len();
        let num_actions = self.points.iter().map(|p| p.a + 1).max().unwrap_or(0);
        self.by_action = vec![Vec::new(); num_actions];
        for (i, p) in self.points.iter().enumerate() {
            self.by_action[p.a].push(i);
        }
        self.inv = DMatrix::zeros(n, n);
        for block in &self.by_action {
            if block.is_empty() {
                continue;
            }
            let m = block.len();
            let mut sub = DMatrix::zeros(m, m);
            for (x, &i) in block.iter().enumerate() {
                for (y, &l) in block.iter().enumerate() {
                    sub[(x, y)] = self.gram[(i, l)];
                }
                sub[(x, x)] += 1.0;
            }
            let inv = Cholesky::new(sub).expect("K + I block not positive definite").inverse();
            for (x, &i) in block.iter().enumerate() {
                for (y, &l) in block.iter().enumerate() {
                    self.inv[(i, l)] = inv[(x, y)];
                }
            }
        }
    }

    /// Rebuild a selector holding exactly `points` (used when restoring
    /// snapshots).
    pub(crate) fn restore(config: SelectorConfig, transitions: &[Transition], seed: u64) -> Self {
        let mut sel = Self::new(config, seed);
        for t in transitions {
            let p = SelPoint::from_transition(t);
            sel.stats.get_or_insert_with(|| RunningCovariance::new(p.z.len())).push(&p.z);
            sel.points.push(p);
        }
        if sel.is_full() {
            sel.build();
        }
        sel
    }
}

fn initial_assignment<R: Rng + ?Sized>(points: &[SelPoint], metric: &SelectionMetric, k: usize, rng: &mut R) -> Vec<usize> {
    let seeds = sample_indices(rng, points.len(), k).into_vec();
    let centroids: Vec<Option<Centroid>> = seeds
        .iter()
        .map(|&i| Some(Centroid { point: points[i].clone() }))
        .collect();
    points
        .iter()
        .map(|p| nearest_centroid(metric, p, &centroids, None))
        .collect()
}
