//! Markov chains induced by a fixed policy.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    DeterministicPolicy, MarkovPolicy, MdpInstance, OccupationMeasure, StationaryPolicy,
};

/// Default cap on the number of deterministic policies enumerated.
pub const DEFAULT_POLICY_CAP: u128 = 1_000_000;
/// Componentwise tolerance under which two vertices are the same point.
pub const VERTEX_DEDUP_TOL: f64 = 1e-8;
/// Residual allowed in a computed stationary distribution.
pub const STATIONARY_TOL: f64 = 1e-10;

/// `P^d(j|i) = Σₐ d(a|i) P(j|i,a)`.
pub fn transition_matrix(instance: &MdpInstance, policy: &StationaryPolicy) -> DMatrix<f64> {
    let n = instance.n_states();
    DMatrix::from_fn(n, n, |i, j| {
        policy
            .rule(i)
            .iter()
            .enumerate()
            .map(|(a, &p)| p * instance.prob(i, a, j))
            .sum()
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainClassification {
    /// Closed communicating classes, each sorted, ordered by smallest state.
    pub recurrent_classes: Vec<Vec<usize>>,
    pub transient_states: Vec<usize>,
    /// Aperiodicity of each recurrent class.
    pub aperiodic: Vec<bool>,
}

impl ChainClassification {
    pub fn is_unichain(&self) -> bool {
        self.recurrent_classes.len() == 1
    }

    /// Assumption 1: one recurrent class, and it is aperiodic.
    pub fn is_unichain_aperiodic(&self) -> bool {
        self.is_unichain() && self.aperiodic[0]
    }
}

fn successors(matrix: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = matrix.nrows();
    (0..n)
        .map(|i| (0..n).filter(|&j| matrix[(i, j)] > 0.0).collect())
        .collect()
}

/// Strongly connected components (Tarjan), each sorted.
fn strongly_connected(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    struct Tarjan<'a> {
        adj: &'a [Vec<usize>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        counter: usize,
        out: Vec<Vec<usize>>,
    }
    impl Tarjan<'_> {
        fn visit(&mut self, v: usize) {
            self.index[v] = Some(self.counter);
            self.low[v] = self.counter;
            self.counter += 1;
            self.stack.push(v);
            self.on_stack[v] = true;
            for k in 0..self.adj[v].len() {
                let w = self.adj[v][k];
                match self.index[w] {
                    None => {
                        self.visit(w);
                        self.low[v] = self.low[v].min(self.low[w]);
                    }
                    Some(iw) if self.on_stack[w] => self.low[v] = self.low[v].min(iw),
                    _ => {}
                }
            }
            if Some(self.low[v]) == self.index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = self.stack.pop().unwrap();
                    self.on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                self.out.push(comp);
            }
        }
    }
    let n = adj.len();
    let mut t = Tarjan {
        adj,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        counter: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if t.index[v].is_none() {
            t.visit(v);
        }
    }
    t.out
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of a strongly connected class from breadth-first levels: the gcd
/// of `level(u) + 1 − level(v)` over all edges `u → v` inside the class.
fn period(adj: &[Vec<usize>], class: &[usize]) -> usize {
    let n = adj.len();
    let mut in_class = vec![false; n];
    class.iter().for_each(|&v| in_class[v] = true);
    let mut level = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::from([class[0]]);
    level[class[0]] = 0;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if in_class[v] && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0;
    for &u in class {
        for &v in &adj[u] {
            if in_class[v] {
                g = gcd(g, (level[u] + 1).abs_diff(level[v]));
            }
        }
    }
    g
}

/// Recurrent classes are the strongly connected components of the
/// positive-probability graph with no edge leaving them.
pub fn classify_chain(instance: &MdpInstance, policy: &StationaryPolicy) -> ChainClassification {
    classify_matrix(&transition_matrix(instance, policy))
}

pub fn classify_matrix(matrix: &DMatrix<f64>) -> ChainClassification {
    let adj = successors(matrix);
    let mut comps = strongly_connected(&adj);
    comps.sort_by_key(|c| c[0]);
    let mut recurrent_classes = Vec::new();
    let mut transient_states = Vec::new();
    for comp in comps {
        let closed = comp
            .iter()
            .all(|&u| adj[u].iter().all(|v| comp.binary_search(v).is_ok()));
        if closed {
            recurrent_classes.push(comp);
        } else {
            transient_states.extend(comp);
        }
    }
    transient_states.sort_unstable();
    let aperiodic = recurrent_classes
        .iter()
        .map(|c| period(&adj, c) == 1)
        .collect();
    ChainClassification {
        recurrent_classes,
        transient_states,
        aperiodic,
    }
}

/// True when every state can reach every other state under some policy,
/// i.e. the union of all actions' transition graphs is strongly connected.
pub fn is_communicating(instance: &MdpInstance) -> bool {
    let n = instance.n_states();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| (0..instance.n_actions(i)).any(|a| instance.prob(i, a, j) > 0.0))
                .collect()
        })
        .collect();
    strongly_connected(&adj).len() == 1
}

/// Stationary law of the chain restricted to one closed class, solved as a
/// linear system with the normalization row replacing one balance row.
fn class_stationary(matrix: &DMatrix<f64>, class: &[usize]) -> Result<Vec<f64>> {
    let m = class.len();
    let mut a = DMatrix::zeros(m, m);
    for (r, &j) in class.iter().enumerate() {
        for (c, &i) in class.iter().enumerate() {
            // Row r: Σ_i π_i P(j|i) − π_j = 0.
            a[(r, c)] = matrix[(i, j)] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for c in 0..m {
        a[(m - 1, c)] = 1.0;
    }
    let mut b = DVector::zeros(m);
    b[m - 1] = 1.0;
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical("singular stationary system on a closed class".into()))?;
    let mut n_full = vec![0.0; matrix.nrows()];
    for (k, &i) in class.iter().enumerate() {
        n_full[i] = sol[k].max(0.0);
    }
    Ok(n_full)
}

fn to_occupation(
    instance: &MdpInstance,
    policy: &StationaryPolicy,
    state_law: &[f64],
) -> OccupationMeasure {
    let values = instance
        .pairs()
        .map(|(i, a)| state_law[i] * policy.prob(i, a))
        .collect();
    OccupationMeasure::from_values(values)
}

/// Stationary state-action distribution `x(i,a) = π(i) d(a|i)` of a
/// unichain policy. Transient states receive zero mass.
pub fn stationary_distribution(
    instance: &MdpInstance,
    policy: &StationaryPolicy,
) -> Result<OccupationMeasure> {
    let matrix = transition_matrix(instance, policy);
    let class = classify_matrix(&matrix);
    if !class.is_unichain() {
        return Err(Error::NotUnichain {
            classes: class.recurrent_classes.len(),
        });
    }
    let pi = class_stationary(&matrix, &class.recurrent_classes[0])?;
    let x = to_occupation(instance, policy, &pi);
    let residual = x.polytope_residual(instance);
    if residual > STATIONARY_TOL {
        return Err(Error::Numerical(format!(
            "stationary distribution residual {residual:e}"
        )));
    }
    Ok(x)
}

/// One stationary distribution per recurrent class; these are the extreme
/// points of the policy's set of invariant laws.
pub fn class_stationary_distributions(
    instance: &MdpInstance,
    policy: &StationaryPolicy,
) -> Result<Vec<OccupationMeasure>> {
    let matrix = transition_matrix(instance, policy);
    let class = classify_matrix(&matrix);
    class
        .recurrent_classes
        .iter()
        .map(|c| {
            Ok(to_occupation(
                instance,
                policy,
                &class_stationary(&matrix, c)?,
            ))
        })
        .collect()
}

/// Law of `(s_t, a_t)` in flat pair order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateActionLaw {
    pub t: usize,
    pub probs: Vec<f64>,
}

impl StateActionLaw {
    pub fn total_variation(&self, x: &OccupationMeasure) -> f64 {
        self.l1_distance(x) / 2.0
    }

    /// `Σ |P_t(i,a) − x(i,a)|`.
    pub fn l1_distance(&self, x: &OccupationMeasure) -> f64 {
        self.probs
            .iter()
            .zip(x.values())
            .map(|(p, q)| (p - q).abs())
            .sum()
    }
}

/// Forward evolution of the state-action law from a fixed initial state.
pub struct Evolution<'a, P: MarkovPolicy + ?Sized> {
    instance: &'a MdpInstance,
    policy: &'a P,
    state_law: Vec<f64>,
    t: usize,
}

impl<'a, P: MarkovPolicy + ?Sized> Evolution<'a, P> {
    pub fn new(instance: &'a MdpInstance, policy: &'a P, s0: usize) -> Result<Self> {
        if s0 >= instance.n_states() {
            return Err(Error::InvalidParameter(format!(
                "initial state {s0} out of range"
            )));
        }
        let mut state_law = vec![0.0; instance.n_states()];
        state_law[s0] = 1.0;
        Ok(Self {
            instance,
            policy,
            state_law,
            t: 0,
        })
    }

    /// Returns the law of `(s_t, a_t)` and advances to `t + 1`.
    pub fn step(&mut self) -> Result<StateActionLaw> {
        let rule = self.policy.rule_at(self.t)?;
        let inst = self.instance;
        let probs: Vec<f64> = inst
            .pairs()
            .map(|(i, a)| self.state_law[i] * rule.prob(i, a))
            .collect();
        let mut next = vec![0.0; inst.n_states()];
        for ((i, a), &w) in inst.pairs().zip(&probs) {
            if w != 0.0 {
                for (j, &p) in inst.kernel_row(i, a).iter().enumerate() {
                    next[j] += w * p;
                }
            }
        }
        self.state_law = next;
        let law = StateActionLaw { t: self.t, probs };
        self.t += 1;
        Ok(law)
    }
}

/// Exact law `P^{u,t}_s(i,a)` of the state-action pair at step `t`.
pub fn t_step_distribution<P: MarkovPolicy + ?Sized>(
    instance: &MdpInstance,
    policy: &P,
    s0: usize,
    t: usize,
) -> Result<StateActionLaw> {
    if let Some(h) = policy.horizon() {
        if t >= h {
            return Err(Error::HorizonExceeded { t, horizon: h });
        }
    }
    let mut evo = Evolution::new(instance, policy, s0)?;
    for _ in 0..t {
        evo.step()?;
    }
    evo.step()
}

fn enumerate_capped(instance: &MdpInstance, cap: u128) -> Result<Vec<DeterministicPolicy>> {
    let count = instance.deterministic_policy_count();
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    Ok(DeterministicPolicy::enumerate(instance).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionViolation {
    pub policy: DeterministicPolicy,
    pub classification: ChainClassification,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub policies_checked: usize,
    pub violators: Vec<AssumptionViolation>,
}

impl AssumptionReport {
    pub fn holds(&self) -> bool {
        self.violators.is_empty()
    }
}

/// Classifies the chain of every deterministic policy and lists those that
/// are not unichain and aperiodic.
pub fn check_assumption(instance: &MdpInstance, cap: u128) -> Result<AssumptionReport> {
    let policies = enumerate_capped(instance, cap)?;
    let violators = policies
        .par_iter()
        .filter_map(|d| {
            let classification = classify_chain(instance, &d.to_stationary(instance));
            (!classification.is_unichain_aperiodic()).then(|| AssumptionViolation {
                policy: d.clone(),
                classification,
            })
        })
        .collect();
    Ok(AssumptionReport {
        policies_checked: policies.len(),
        violators,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Vertex {
    pub x: OccupationMeasure,
    /// First deterministic policy (in enumeration order) generating `x`.
    pub policy: DeterministicPolicy,
}

#[derive(Debug, Clone, Serialize)]
pub struct VertexSet {
    pub vertices: Vec<Vertex>,
}

impl VertexSet {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// Extreme points of the stationary-distribution polytope: the stationary
/// distribution of every deterministic policy, one per recurrent class,
/// deduplicated.
pub fn polytope_vertices(instance: &MdpInstance, cap: u128) -> Result<VertexSet> {
    let policies = enumerate_capped(instance, cap)?;
    let per_policy: Vec<Vec<OccupationMeasure>> = policies
        .par_iter()
        .map(|d| class_stationary_distributions(instance, &d.to_stationary(instance)))
        .collect::<Result<_>>()?;
    let mut vertices: Vec<Vertex> = Vec::new();
    for (policy, xs) in policies.into_iter().zip(per_policy) {
        for x in xs {
            let duplicate = vertices.iter().any(|v| {
                v.x.values()
                    .iter()
                    .zip(x.values())
                    .all(|(a, b)| (a - b).abs() <= VERTEX_DEDUP_TOL)
            });
            if !duplicate {
                vertices.push(Vertex {
                    x,
                    policy: policy.clone(),
                });
            }
        }
    }
    Ok(VertexSet { vertices })
}
