//! Communication graphs and consensus matrices.
//!
//! Static graphs carry a symmetric doubly stochastic weight matrix with a
//! strictly positive diagonal (Metropolis max-degree weights). Time-varying
//! schedules emit the base matrix with probability `lambda` and the identity
//! otherwise, independently per step. The module also computes the
//! consensus-deviation sums `sum_k sum_j |[prod A]_ij - 1/m|` that the
//! approximation-error bounds are stated in.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::rng::unit_uniform;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("graph is not connected")]
    DisconnectedGraph,
    #[error("product requires k <= t, got k = {k}, t = {t}")]
    IndexOrder { k: u64, t: u64 },
    #[error("edge ({i}, {j}) out of range for {m} nodes")]
    EdgeOutOfRange { i: usize, j: usize, m: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("agent index {agent} out of range for {m} agents")]
    AgentOutOfRange { agent: usize, m: usize },
    #[error("failed to read topology: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse topology line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// An undirected simple graph on `m` zero-based nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    m: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Topology {
    /// Builds a topology from undirected pairs; each pair is stored once
    /// with the smaller index first.
    pub fn new(
        m: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        if m == 0 {
            return Err(GraphError::EmptyGraph);
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            if i >= m || j >= m {
                return Err(GraphError::EdgeOutOfRange { i, j, m });
            }
            set.insert((i.min(j), i.max(j)));
        }
        Ok(Self { m, edges: set })
    }

    pub fn complete(m: usize) -> Result<Self, GraphError> {
        let edges = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j)));
        Self::new(m, edges)
    }

    pub fn ring(m: usize) -> Result<Self, GraphError> {
        if m <= 2 {
            return Self::path(m);
        }
        Self::new(m, (0..m).map(|i| (i, (i + 1) % m)))
    }

    pub fn path(m: usize) -> Result<Self, GraphError> {
        if m == 0 {
            return Err(GraphError::EmptyGraph);
        }
        Self::new(m, (1..m).map(|i| (i - 1, i)))
    }

    pub fn star(m: usize) -> Result<Self, GraphError> {
        if m == 0 {
            return Err(GraphError::EmptyGraph);
        }
        Self::new(m, (1..m).map(|i| (0, i)))
    }

    /// Random connected graph: a random spanning tree plus independent
    /// extra edges. Deterministic in `seed`.
    pub fn random_connected(m: usize, extra_edge_prob: f64, seed: u64) -> Result<Self, GraphError> {
        if m == 0 {
            return Err(GraphError::EmptyGraph);
        }
        let mut edges = Vec::new();
        let mut counter = 0u64;
        let mut next = || {
            counter += 1;
            unit_uniform(seed, counter)
        };
        for v in 1..m {
            let parent = (next() * v as f64).floor() as usize;
            edges.push((parent.min(v - 1), v));
        }
        for i in 0..m {
            for j in i + 1..m {
                if next() < extra_edge_prob {
                    edges.push((i, j));
                }
            }
        }
        Self::new(m, edges)
    }

    /// Reads the edge-list format: first line `m`, then one `i j` pair per
    /// line. Blank lines are ignored.
    pub fn from_edge_list_file(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_edge_list_str(&text)
    }

    pub fn from_edge_list_str(text: &str) -> Result<Self, GraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (first_no, first) = lines.next().ok_or(GraphError::Parse {
            line: 1,
            reason: "missing node-count line".into(),
        })?;
        let m: usize = first.trim().parse().map_err(|e| GraphError::Parse {
            line: first_no + 1,
            reason: format!("bad node count: {e}"),
        })?;
        let mut edges = Vec::new();
        for (no, line) in lines {
            let mut it = line.split_whitespace();
            let parse = |s: Option<&str>| -> Result<usize, GraphError> {
                s.ok_or(GraphError::Parse {
                    line: no + 1,
                    reason: "expected two indices".into(),
                })?
                .parse()
                .map_err(|e| GraphError::Parse {
                    line: no + 1,
                    reason: format!("bad index: {e}"),
                })
            };
            let i = parse(it.next())?;
            let j = parse(it.next())?;
            edges.push((i, j));
        }
        Self::new(m, edges)
    }

    pub fn node_count(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(i, j)| i == v || j == v)
            .count()
    }

    /// Reachability of every node from node 0.
    pub fn is_connected(&self) -> bool {
        if self.m == 0 {
            return false;
        }
        let mut seen = vec![false; self.m];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(i, j) in &self.edges {
                let w = if i == v {
                    j
                } else if j == v {
                    i
                } else {
                    continue;
                };
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// A symmetric doubly stochastic consensus matrix with positive diagonal.
///
/// `nu` is the smallest strictly positive entry and `delta = 1 - nu/(4 m^2)`
/// is the geometric mixing factor used by the deviation bounds. The
/// exponent convention is fixed project-wide: the weight on sender `i`'s
/// belief in receiver `j`'s update is entry `(i, j)`; symmetry makes the
/// orientation invisible, and only symmetric matrices are admitted.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    m: usize,
    w: DMatrix<f64>,
    nu: f64,
    delta: f64,
}

impl AdjacencyMatrix {
    fn validate(w: DMatrix<f64>) -> Self {
        let m = w.nrows();
        assert_eq!(m, w.ncols(), "weight matrix must be square");
        for i in 0..m {
            assert!(w[(i, i)] > 0.0, "diagonal entry {i} not positive");
            let row: f64 = (0..m).map(|j| w[(i, j)]).sum();
            let col: f64 = (0..m).map(|j| w[(j, i)]).sum();
            assert!((row - 1.0).abs() <= 1e-12, "row {i} sums to {row}");
            assert!((col - 1.0).abs() <= 1e-12, "column {i} sums to {col}");
            for j in 0..m {
                assert!(w[(i, j)] >= 0.0, "negative weight at ({i}, {j})");
                assert_eq!(w[(i, j)], w[(j, i)], "asymmetric weight at ({i}, {j})");
            }
        }
        let nu = w
            .iter()
            .copied()
            .filter(|&x| x > 0.0)
            .fold(f64::INFINITY, f64::min);
        let delta = 1.0 - nu / (4.0 * (m * m) as f64);
        Self { m, w, nu, delta }
    }

    pub fn identity(m: usize) -> Self {
        Self::validate(DMatrix::identity(m, m))
    }

    pub fn agent_count(&self) -> usize {
        self.m
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    /// Smallest strictly positive entry.
    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Mixing factor `1 - nu / (4 m^2)`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Row-major CSV with 17 significant digits per entry.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.m {
            for j in 0..self.m {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{:.16e}", self.w[(i, j)]);
            }
            out.push('\n');
        }
        out
    }
}

/// Metropolis max-degree weights: `1 / (1 + max(deg_i, deg_j))` on edges,
/// diagonal filling each row to one. Symmetric, doubly stochastic and
/// positive-diagonal for any connected undirected graph.
pub fn metropolis_weights(topology: &Topology) -> Result<AdjacencyMatrix, GraphError> {
    let m = topology.node_count();
    if m == 0 {
        return Err(GraphError::EmptyGraph);
    }
    if !topology.is_connected() {
        return Err(GraphError::DisconnectedGraph);
    }
    let deg: Vec<usize> = (0..m).map(|v| topology.degree(v)).collect();
    let mut w = DMatrix::zeros(m, m);
    for (i, j) in topology.edges() {
        let weight = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
        w[(i, j)] = weight;
        w[(j, i)] = weight;
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    Ok(AdjacencyMatrix::validate(w))
}

/// How the communication matrix evolves over steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleMode {
    Static,
    /// Emit the base matrix with probability `lambda`, identity otherwise,
    /// independently per step.
    BernoulliSwitch {
        lambda: f64,
    },
}

/// A deterministic (seeded) sequence of consensus matrices.
#[derive(Debug, Clone)]
pub struct GraphSchedule {
    mode: ScheduleMode,
    base: AdjacencyMatrix,
    seed: u64,
}

impl GraphSchedule {
    pub fn new_static(base: AdjacencyMatrix) -> Self {
        Self {
            mode: ScheduleMode::Static,
            base,
            seed: 0,
        }
    }

    pub fn bernoulli(base: AdjacencyMatrix, lambda: f64, seed: u64) -> Self {
        assert!((0.0..=1.0).contains(&lambda), "lambda must lie in [0, 1]");
        Self {
            mode: ScheduleMode::BernoulliSwitch { lambda },
            base,
            seed,
        }
    }

    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    pub fn base(&self) -> &AdjacencyMatrix {
        &self.base
    }

    pub fn agent_count(&self) -> usize {
        self.base.agent_count()
    }

    /// Whether the base matrix (rather than identity) is emitted at `step`.
    /// Deterministic in `(seed, step)`.
    pub fn is_active(&self, step: u64) -> bool {
        match self.mode {
            ScheduleMode::Static => true,
            ScheduleMode::BernoulliSwitch { lambda } => unit_uniform(self.seed, step) < lambda,
        }
    }

    /// The matrix emitted at `step`.
    pub fn matrix_at(&self, step: u64) -> AdjacencyMatrix {
        if self.is_active(step) {
            self.base.clone()
        } else {
            AdjacencyMatrix::identity(self.base.agent_count())
        }
    }

    /// Number of active steps in `[from, to)`.
    pub fn active_count(&self, from: u64, to: u64) -> u64 {
        match self.mode {
            ScheduleMode::Static => to.saturating_sub(from),
            ScheduleMode::BernoulliSwitch { .. } => {
                (from..to).filter(|&s| self.is_active(s)).count() as u64
            }
        }
    }
}

const RENORM_EVERY: u32 = 64;

fn renormalize_rows(p: &mut DMatrix<f64>) {
    for i in 0..p.nrows() {
        let s: f64 = p.row(i).iter().sum();
        for j in 0..p.ncols() {
            p[(i, j)] /= s;
        }
    }
}

/// The product `prod_{tau = k}^{t - 1} A_tau` (identity when `k == t`),
/// accumulated factor by factor with a row renormalization every 64
/// multiplications to contain floating-point drift.
pub fn matrix_power_product(
    schedule: &GraphSchedule,
    k: u64,
    t: u64,
) -> Result<DMatrix<f64>, GraphError> {
    if k > t {
        return Err(GraphError::IndexOrder { k, t });
    }
    let m = schedule.agent_count();
    let mut p = DMatrix::identity(m, m);
    let mut muls: u32 = 0;
    for tau in k..t {
        if schedule.is_active(tau) {
            p *= schedule.base().weights();
            muls += 1;
            if muls % RENORM_EVERY == 0 {
                renormalize_rows(&mut p);
            }
        }
    }
    Ok(p)
}

/// `sum_{k = 1}^{t} sum_{j} | [prod_{tau = k}^{t - 1} A_tau]_{ij} - 1/m |`
/// for one agent `i`.
///
/// Every factor is either the base matrix or identity, so each product is a
/// power of the base; the powers' rows are built once by incremental right
/// multiplication (O(t m^2)) and reused across `k`.
pub fn consensus_deviation(
    schedule: &GraphSchedule,
    agent: usize,
    t: u64,
) -> Result<f64, GraphError> {
    let m = schedule.agent_count();
    if agent >= m {
        return Err(GraphError::AgentOutOfRange { agent, m });
    }
    if t == 0 {
        return Ok(0.0);
    }
    // exponents n(k) = #active steps in [k, t - 1]
    let t_us = t as usize;
    let mut exponents = vec![0u64; t_us + 1]; // index k in 1..=t, exponents[t] = 0
    for k in (1..t_us).rev() {
        exponents[k] = exponents[k + 1] + schedule.is_active(k as u64) as u64;
    }
    let max_pow = exponents[1];

    // row_i of base^s for s = 0..=max_pow
    let inv_m = 1.0 / m as f64;
    let base = schedule.base().weights();
    let mut row = vec![0.0; m];
    row[agent] = 1.0;
    let mut dev_by_power = Vec::with_capacity(max_pow as usize + 1);
    let l1_dev = |r: &[f64]| r.iter().map(|x| (x - inv_m).abs()).sum::<f64>();
    dev_by_power.push(l1_dev(&row));
    let mut next = vec![0.0; m];
    for s in 1..=max_pow {
        for (j, slot) in next.iter_mut().enumerate() {
            *slot = (0..m).map(|l| row[l] * base[(l, j)]).sum();
        }
        std::mem::swap(&mut row, &mut next);
        if s % RENORM_EVERY as u64 == 0 {
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= sum);
        }
        dev_by_power.push(l1_dev(&row));
    }

    Ok((1..=t_us)
        .map(|k| dev_by_power[exponents[k] as usize])
        .sum())
}

/// Rows `[prod_{tau = k}^{t - 1} A_tau]_{agent, .}` for every `k` in
/// `1..=t` (entry `[k - 1][i]` weights agent `i`'s step-`k` observation in
/// `agent`'s step-`t` posterior). Shares the incremental power-table
/// construction with [`consensus_deviation`]; every product here is a
/// power of the symmetric base, hence itself symmetric.
pub fn weight_rows(schedule: &GraphSchedule, agent: usize, t: u64) -> Vec<Vec<f64>> {
    let m = schedule.agent_count();
    assert!(agent < m);
    let t_us = t as usize;
    let mut exponents = vec![0u64; t_us + 1];
    for k in (1..t_us).rev() {
        exponents[k] = exponents[k + 1] + schedule.is_active(k as u64) as u64;
    }
    let max_pow = if t_us >= 1 { exponents[1] } else { 0 };
    let base = schedule.base().weights();
    let mut rows_by_power: Vec<Vec<f64>> = Vec::with_capacity(max_pow as usize + 1);
    let mut row = vec![0.0; m];
    row[agent] = 1.0;
    rows_by_power.push(row.clone());
    let mut next = vec![0.0; m];
    for s in 1..=max_pow {
        for (j, slot) in next.iter_mut().enumerate() {
            *slot = (0..m).map(|l| row[l] * base[(l, j)]).sum();
        }
        std::mem::swap(&mut row, &mut next);
        if s % RENORM_EVERY as u64 == 0 {
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= sum);
        }
        rows_by_power.push(row.clone());
    }
    (1..=t_us)
        .map(|k| rows_by_power[exponents[k] as usize].clone())
        .collect()
}

/// A deviation bound that may be infinite (the `lambda = 0` regime).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegimeBound {
    Finite(f64),
    Infinite,
}

impl RegimeBound {
    pub fn finite(self) -> Option<f64> {
        match self {
            RegimeBound::Finite(v) => Some(v),
            RegimeBound::Infinite => None,
        }
    }
}

/// Asymptotic deviation bound for the Bernoulli-switch schedule.
///
/// `lambda >= 2/m`: `(16 m^2 ln m + 8 m^2 ln lambda) / (lambda nu)`;
/// `0 < lambda < 2/m`: `4 m^3 / nu`; `lambda = 0`: infinite. All logs are
/// natural. For `lambda < 1` the first branch is evaluated as written
/// (its `ln lambda` term is negative but the total stays positive).
pub fn regime_bound(m: usize, lambda: f64, nu: f64) -> RegimeBound {
    assert!(nu > 0.0, "nu must be positive");
    assert!((0.0..=1.0).contains(&lambda), "lambda must lie in [0, 1]");
    if lambda == 0.0 {
        return RegimeBound::Infinite;
    }
    assert!(m >= 2, "lambda regimes require m >= 2");
    let mf = m as f64;
    if lambda >= 2.0 / mf {
        RegimeBound::Finite(
            (16.0 * mf * mf * mf.ln() + 8.0 * mf * mf * lambda.ln()) / (lambda * nu),
        )
    } else {
        RegimeBound::Finite(4.0 * mf * mf * mf / nu)
    }
}

/// Static-graph deviation bound `16 m^2 ln m / nu`.
pub fn static_deviation_bound(m: usize, nu: f64) -> f64 {
    let mf = m as f64;
    16.0 * mf * mf * mf.ln() / nu
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn complete3() -> AdjacencyMatrix {
        metropolis_weights(&Topology::complete(3).unwrap()).unwrap()
    }

    #[test]
    fn complete_graph_metropolis_is_uniform() {
        let a = complete3();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(a.entry(i, j), 1.0 / 3.0, epsilon = 1e-15);
            }
        }
        assert_relative_eq!(a.nu(), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn path_metropolis_hand_values() {
        let a = metropolis_weights(&Topology::path(3).unwrap()).unwrap();
        assert_relative_eq!(a.entry(0, 1), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(a.entry(1, 2), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(a.entry(0, 2), 0.0);
        assert_relative_eq!(a.entry(0, 0), 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(a.entry(1, 1), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(a.entry(2, 2), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn single_node_is_identity() {
        let a = metropolis_weights(&Topology::new(1, []).unwrap()).unwrap();
        assert_eq!(a.entry(0, 0), 1.0);
        assert_eq!(a.nu(), 1.0);
    }

    #[test]
    fn disconnected_graph_rejected() {
        let top = Topology::new(4, [(0, 1), (2, 3)]).unwrap();
        assert!(matches!(
            metropolis_weights(&top),
            Err(GraphError::DisconnectedGraph)
        ));
    }

    #[test]
    fn power_product_complete_graph() {
        let sched = GraphSchedule::new_static(complete3());
        // J/3 is idempotent: any nonempty product is J/3
        let p = matrix_power_product(&sched, 2, 7).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(p[(i, j)], 1.0 / 3.0, epsilon = 1e-12);
            }
        }
        // empty product is the identity
        let id = matrix_power_product(&sched, 5, 5).unwrap();
        assert_eq!(id, DMatrix::identity(3, 3));
        assert!(matches!(
            matrix_power_product(&sched, 6, 5),
            Err(GraphError::IndexOrder { .. })
        ));
    }

    #[test]
    fn power_product_single_factor_is_base() {
        let a = metropolis_weights(&Topology::path(3).unwrap()).unwrap();
        let sched = GraphSchedule::new_static(a.clone());
        let p = matrix_power_product(&sched, 9, 10).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(p[(i, j)], a.entry(i, j), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn products_remain_doubly_stochastic() {
        let a = metropolis_weights(&Topology::ring(5).unwrap()).unwrap();
        let sched = GraphSchedule::new_static(a);
        let p = matrix_power_product(&sched, 1, 301).unwrap();
        for i in 0..5 {
            let row: f64 = (0..5).map(|j| p[(i, j)]).sum();
            let col: f64 = (0..5).map(|j| p[(j, i)]).sum();
            assert!((row - 1.0).abs() < 1e-10);
            assert!((col - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn deviation_complete_graph_exact() {
        // only the k = t identity term deviates: 2(m-1)/m = 4/3
        let sched = GraphSchedule::new_static(complete3());
        for i in 0..3 {
            assert_relative_eq!(
                consensus_deviation(&sched, i, 5).unwrap(),
                4.0 / 3.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn deviation_single_agent_is_zero() {
        let a = metropolis_weights(&Topology::new(1, []).unwrap()).unwrap();
        let sched = GraphSchedule::new_static(a);
        assert_eq!(consensus_deviation(&sched, 0, 50).unwrap(), 0.0);
    }

    #[test]
    fn deviation_matches_brute_force_and_bound() {
        let a = metropolis_weights(&Topology::path(3).unwrap()).unwrap();
        let nu = a.nu();
        let sched = GraphSchedule::new_static(a.clone());
        let t = 50u64;
        // brute force: explicit matrix powers for every k
        for agent in 0..3 {
            let mut brute = 0.0;
            for k in 1..=t {
                let p = matrix_power_product(&sched, k, t).unwrap();
                brute += (0..3)
                    .map(|j| (p[(agent, j)] - 1.0 / 3.0).abs())
                    .sum::<f64>();
            }
            let fast = consensus_deviation(&sched, agent, t).unwrap();
            assert_relative_eq!(fast, brute, epsilon = 1e-10);
            assert!(fast <= static_deviation_bound(3, nu));
        }
    }

    #[test]
    fn bernoulli_schedule_bit_reproducible() {
        let a = metropolis_weights(&Topology::ring(4).unwrap()).unwrap();
        let s1 = GraphSchedule::bernoulli(a.clone(), 0.3, 1234);
        let s2 = GraphSchedule::bernoulli(a, 0.3, 1234);
        for step in 0..200 {
            assert_eq!(s1.is_active(step), s2.is_active(step));
        }
        let d1 = consensus_deviation(&s1, 2, 150).unwrap();
        let d2 = consensus_deviation(&s2, 2, 150).unwrap();
        assert_eq!(d1, d2);
    }

    #[test]
    fn weight_rows_match_power_products() {
        let a = metropolis_weights(&Topology::ring(4).unwrap()).unwrap();
        let sched = GraphSchedule::bernoulli(a, 0.6, 88);
        let t = 30u64;
        for agent in [0usize, 3] {
            let rows = weight_rows(&sched, agent, t);
            for k in [1u64, 7, 15, 30] {
                let p = matrix_power_product(&sched, k, t).unwrap();
                for i in 0..4 {
                    assert_relative_eq!(rows[(k - 1) as usize][i], p[(agent, i)], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn regime_bound_examples() {
        // m = 4, lambda = 1, nu = 1/4: (16*16*ln 4)/0.25 = 1024 ln 4
        let b = regime_bound(4, 1.0, 0.25).finite().unwrap();
        assert_relative_eq!(b, 1024.0 * 4.0f64.ln(), epsilon = 1e-10);
        assert_relative_eq!(b, 1419.565425786768, epsilon = 1e-9);
        // m = 4, lambda = 0.1 < 2/m: 4 * 64 / 0.25 = 1024
        let b = regime_bound(4, 0.1, 0.25).finite().unwrap();
        assert_relative_eq!(b, 1024.0, epsilon = 1e-12);
        assert_eq!(regime_bound(4, 0.0, 0.25), RegimeBound::Infinite);
    }

    #[test]
    fn edge_list_round_trip() {
        let text = "3\n0 1\n1 2\n";
        let top = Topology::from_edge_list_str(text).unwrap();
        assert_eq!(top.node_count(), 3);
        assert_eq!(top.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
        assert!(Topology::from_edge_list_str("3\n0 5\n").is_err());
        assert!(Topology::from_edge_list_str("").is_err());
    }

    #[test]
    fn csv_export_has_17_significant_digits() {
        let a = metropolis_weights(&Topology::path(2).unwrap()).unwrap();
        let csv = a.to_csv();
        let first = csv.lines().next().unwrap();
        assert_eq!(first.split(',').count(), 2);
        assert!(first.starts_with("5.0000000000000000e-1"));
    }
}
