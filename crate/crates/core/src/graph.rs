//! Rauzy diagrams of signed permutations.
//!
//! Vertices are canonical permutation texts (top row relabeled to the
//! identity); every reducible successor is collapsed to one Hole sentinel
//! with no outgoing edges. The successor map commutes with relabeling, so
//! the canonical quotient is well defined; path searches re-walk the raw
//! permutations so the reified arrows chain in a single fixed alphabet.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::induction::{arrow_for, successor_perm, RauzyPath, StepCase};
use crate::matrix::SupportMatrix;
use crate::perm::SignedPermutation;

pub const HOLE_TEXT: &str = "HOLE";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphTarget {
    Vertex(usize),
    Hole,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("seed permutation {0:?} is reducible")]
    ReducibleSeed(String),
    #[error("vertex {0:?} is not in the graph")]
    UnknownVertex(String),
    #[error("vertex budget {limit} exhausted before closure")]
    LimitExceeded { limit: usize },
    #[error("malformed graph file: {0}")]
    BadFile(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RauzyGraph {
    vertices: Vec<String>,
    perms: Vec<SignedPermutation>,
    index: HashMap<String, usize>,
    /// Per vertex, case A then case B. `None` only when the vertex has no
    /// arrow of that case (single-symbol shapes).
    edges: Vec<[Option<GraphTarget>; 2]>,
    /// False when a vertex budget interrupted the closure.
    closed: bool,
}

/// One case-labeled successor of an irreducible permutation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Successor {
    Perm(SignedPermutation),
    Hole,
}

/// The case-labeled successors of `p`, at most one per case. The targets
/// are canonical. Reducible inputs are rejected.
pub fn successors(p: &SignedPermutation) -> Result<Vec<(StepCase, Successor)>, GraphError> {
    if !p.is_irreducible() {
        return Err(GraphError::ReducibleSeed(p.to_string()));
    }
    let mut out = Vec::new();
    for case in [StepCase::A, StepCase::B] {
        if let Some(next) = successor_perm(p, case) {
            let target = if next.is_irreducible() {
                Successor::Perm(next.canonical())
            } else {
                Successor::Hole
            };
            out.push((case, target));
        }
    }
    Ok(out)
}

impl RauzyGraph {
    fn empty() -> RauzyGraph {
        RauzyGraph {
            vertices: Vec::new(),
            perms: Vec::new(),
            index: HashMap::new(),
            edges: Vec::new(),
            closed: false,
        }
    }

    fn add_vertex(&mut self, perm: SignedPermutation) -> usize {
        let text = perm.to_string();
        debug_assert!(perm.is_canonical_form());
        let id = self.vertices.len();
        self.index.insert(text.clone(), id);
        self.vertices.push(text);
        self.perms.push(perm);
        self.edges.push([None, None]);
        id
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn perm(&self, id: usize) -> &SignedPermutation {
        &self.perms[id]
    }

    pub fn contains(&self, text: &str) -> bool {
        self.index.contains_key(text)
    }

    pub fn vertex_id(&self, text: &str) -> Option<usize> {
        self.index.get(text).copied()
    }

    /// Case A then case B target of a vertex.
    pub fn targets(&self, id: usize) -> &[Option<GraphTarget>; 2] {
        &self.edges[id]
    }

    /// True when the successor closure completed within the budget.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn hole_in_degree(&self) -> usize {
        self.edges
            .iter()
            .flatten()
            .filter(|t| matches!(t, Some(GraphTarget::Hole)))
            .count()
    }

    fn edge_records(&self) -> Vec<EdgeRecord> {
        let mut records = Vec::new();
        for (id, pair) in self.edges.iter().enumerate() {
            for (case, target) in [(StepCase::A, &pair[0]), (StepCase::B, &pair[1])] {
                if let Some(t) = target {
                    records.push(EdgeRecord {
                        from: self.vertices[id].clone(),
                        case: case.to_string(),
                        to: match t {
                            GraphTarget::Vertex(v) => self.vertices[*v].clone(),
                            GraphTarget::Hole => HOLE_TEXT.to_string(),
                        },
                    });
                }
            }
        }
        records
    }

    pub fn to_json_string(&self) -> String {
        let file = GraphFile {
            vertices: self.vertices.clone(),
            edges: self.edge_records(),
        };
        serde_json::to_string_pretty(&file).expect("graph serializes")
    }

    pub fn from_json_str(text: &str) -> Result<RauzyGraph, GraphError> {
        let file: GraphFile =
            serde_json::from_str(text).map_err(|e| GraphError::BadFile(e.to_string()))?;
        let mut g = RauzyGraph::empty();
        for v in &file.vertices {
            let perm: SignedPermutation = v
                .parse()
                .map_err(|e| GraphError::BadFile(format!("vertex {v:?}: {e}")))?;
            if g.index.contains_key(v) {
                return Err(GraphError::BadFile(format!("duplicate vertex {v:?}")));
            }
            g.add_vertex(perm);
        }
        for e in &file.edges {
            let from = *g
                .index
                .get(&e.from)
                .ok_or_else(|| GraphError::BadFile(format!("unknown edge source {:?}", e.from)))?;
            let case = match e.case.as_str() {
                "A" => 0usize,
                "B" => 1,
                other => return Err(GraphError::BadFile(format!("bad case {other:?}"))),
            };
            let target = if e.to == HOLE_TEXT {
                GraphTarget::Hole
            } else {
                GraphTarget::Vertex(*g.index.get(&e.to).ok_or_else(|| {
                    GraphError::BadFile(format!("unknown edge target {:?}", e.to))
                })?)
            };
            if g.edges[from][case].is_some() {
                return Err(GraphError::BadFile(format!(
                    "duplicate case-{} edge from {:?}",
                    e.case, e.from
                )));
            }
            g.edges[from][case] = Some(target);
        }
        g.closed = true;
        Ok(g)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EdgeRecord {
    from: String,
    case: String,
    to: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphFile {
    vertices: Vec<String>,
    edges: Vec<EdgeRecord>,
}

/// Breadth-first closure under successors from one seed; vertices in
/// discovery order, case A explored before case B. On budget exhaustion the
/// closure stops and the partial graph is marked not closed.
pub fn build_graph(seed: &SignedPermutation, limit: usize) -> Result<RauzyGraph, GraphError> {
    build_graph_multi(std::slice::from_ref(seed), limit)
}

fn build_graph_multi(
    seeds: &[SignedPermutation],
    limit: usize,
) -> Result<RauzyGraph, GraphError> {
    let mut g = RauzyGraph::empty();
    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut seed_iter = seeds.iter();
    let mut hit_limit = false;

    'outer: loop {
        if queue.is_empty() {
            // Pull the next seed not already discovered.
            let next_seed = loop {
                match seed_iter.next() {
                    None => break 'outer,
                    Some(s) => {
                        if !s.is_irreducible() {
                            return Err(GraphError::ReducibleSeed(s.to_string()));
                        }
                        let c = s.canonical();
                        if !g.index.contains_key(&c.to_string()) {
                            break c;
                        }
                    }
                }
            };
            if g.vertex_count() >= limit {
                hit_limit = true;
                break;
            }
            let id = g.add_vertex(next_seed);
            queue.push_back(id);
        }
        while let Some(id) = queue.pop_front() {
            let perm = g.perms[id].clone();
            for (slot, case) in [(0usize, StepCase::A), (1, StepCase::B)] {
                let Some(next) = successor_perm(&perm, case) else {
                    continue;
                };
                let target = if next.is_irreducible() {
                    let canon = next.canonical();
                    let text = canon.to_string();
                    let tid = match g.index.get(&text) {
                        Some(&t) => t,
                        None => {
                            if g.vertex_count() >= limit {
                                hit_limit = true;
                                break 'outer;
                            }
                            let t = g.add_vertex(canon);
                            queue.push_back(t);
                            t
                        }
                    };
                    GraphTarget::Vertex(tid)
                } else {
                    GraphTarget::Hole
                };
                g.edges[id][slot] = Some(target);
            }
        }
    }
    g.closed = !hit_limit;
    if hit_limit {
        // The partial graph is still useful; signal via the closed flag and
        // the error carrying the budget.
        return Err(GraphError::LimitExceeded { limit });
    }
    Ok(g)
}

/// Like [`build_graph`] but hands back the partial graph on budget
/// exhaustion instead of dropping it.
pub fn build_graph_partial(seed: &SignedPermutation, limit: usize) -> (RauzyGraph, bool) {
    match build_graph(seed, limit) {
        Ok(g) => (g, true),
        Err(GraphError::LimitExceeded { .. }) => {
            // Re-run tracking the partial result.
            let mut g = RauzyGraph::empty();
            let seed = seed.canonical();
            let mut queue = VecDeque::new();
            let id = g.add_vertex(seed);
            queue.push_back(id);
            while let Some(id) = queue.pop_front() {
                let perm = g.perms[id].clone();
                for (slot, case) in [(0usize, StepCase::A), (1, StepCase::B)] {
                    let Some(next) = successor_perm(&perm, case) else {
                        continue;
                    };
                    if next.is_irreducible() {
                        let canon = next.canonical();
                        let text = canon.to_string();
                        if let Some(&t) = g.index.get(&text) {
                            g.edges[id][slot] = Some(GraphTarget::Vertex(t));
                        } else if g.vertex_count() < limit {
                            let t = g.add_vertex(canon);
                            queue.push_back(t);
                            g.edges[id][slot] = Some(GraphTarget::Vertex(t));
                        }
                        // else: edge dropped with its undiscovered target.
                    } else {
                        g.edges[id][slot] = Some(GraphTarget::Hole);
                    }
                }
            }
            g.closed = false;
            (g, false)
        }
        Err(e) => panic!("unexpected graph error: {e}"),
    }
}

fn lex_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut used = vec![false; n + 1];
    fn rec(
        n: usize,
        current: &mut Vec<usize>,
        used: &mut Vec<bool>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if current.len() == n {
            out.push(current.clone());
            return;
        }
        for v in 1..=n {
            if !used[v] {
                used[v] = true;
                current.push(v);
                rec(n, current, used, out);
                current.pop();
                used[v] = false;
            }
        }
    }
    rec(n, &mut current, &mut used, &mut out);
    out
}

/// All irreducible canonical signed permutations on n symbols, in
/// lexicographic (bottom row, then flip mask) order.
pub fn all_irreducible(n: usize) -> Vec<SignedPermutation> {
    let mut out = Vec::new();
    for bottom in lex_permutations(n) {
        for mask in 0..(1u32 << n) {
            let flips: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let top: Vec<usize> = (1..=n).collect();
            let p = SignedPermutation::new(top, bottom.clone(), flips)
                .expect("valid signed permutation");
            if p.is_irreducible() {
                out.push(p);
            }
        }
    }
    out
}

/// Unsigned variant: flip masks all zero.
pub fn all_irreducible_unsigned(n: usize) -> Vec<SignedPermutation> {
    all_irreducible(n)
        .into_iter()
        .filter(|p| !p.has_flip())
        .collect()
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n).collect(),
        }
    }
    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn weak_components(perms: &[SignedPermutation]) -> Vec<Vec<usize>> {
    let index: HashMap<String, usize> = perms
        .iter()
        .enumerate()
        .map(|(i, p)| (p.to_string(), i))
        .collect();
    let mut uf = UnionFind::new(perms.len());
    for (i, p) in perms.iter().enumerate() {
        for (_, target) in successors(p).expect("irreducible by construction") {
            if let Successor::Perm(next) = target {
                let j = index[&next.to_string()];
                uf.union(i, j);
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..perms.len() {
        let root = uf.find(i);
        groups.entry(root).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    // Deterministic order: by smallest member index (lexicographic
    // enumeration order).
    out.sort_by_key(|g| g[0]);
    out
}

/// Partition of all irreducible signed n-permutations into connected
/// components of the diagram (hole excluded from connectivity). Each class
/// is returned as a graph seeded from its lexicographically first member;
/// extra seeds guarantee coverage even if some member were not forward
/// reachable.
pub fn rauzy_classes(n: usize) -> Result<Vec<RauzyGraph>, GraphError> {
    let perms = all_irreducible(n);
    let comps = weak_components(&perms);
    let mut out = Vec::new();
    for comp in comps {
        let seeds: Vec<SignedPermutation> = comp.iter().map(|&i| perms[i].clone()).collect();
        let g = build_graph_multi(&seeds, usize::MAX)?;
        out.push(g);
    }
    Ok(out)
}

/// (signed class count, unsigned class count); the unsigned count ignores
/// flips entirely.
pub fn class_counts(n: usize) -> (usize, usize) {
    let signed = weak_components(&all_irreducible(n)).len();
    let unsigned = weak_components(&all_irreducible_unsigned(n)).len();
    (signed, unsigned)
}

/// Shortest hole-avoiding path between two vertices, reified from the raw
/// permutation walk so the arrows chain in the `from` vertex's alphabet.
/// `Ok(None)` when no such path exists.
pub fn find_path(
    g: &RauzyGraph,
    from: &str,
    to: &str,
) -> Result<Option<RauzyPath>, GraphError> {
    let from_id = g
        .vertex_id(from)
        .ok_or_else(|| GraphError::UnknownVertex(from.to_string()))?;
    let to_id = g
        .vertex_id(to)
        .ok_or_else(|| GraphError::UnknownVertex(to.to_string()))?;
    if from_id == to_id {
        return Ok(Some(RauzyPath::new(g.perms[from_id].clone())));
    }
    // BFS over canonical vertices.
    let mut prev: Vec<Option<(usize, StepCase)>> = vec![None; g.vertex_count()];
    let mut seen = vec![false; g.vertex_count()];
    let mut queue = VecDeque::new();
    seen[from_id] = true;
    queue.push_back(from_id);
    'bfs: while let Some(u) = queue.pop_front() {
        for (slot, case) in [(0usize, StepCase::A), (1, StepCase::B)] {
            if let Some(GraphTarget::Vertex(v)) = g.edges[u][slot] {
                if !seen[v] {
                    seen[v] = true;
                    prev[v] = Some((u, case));
                    if v == to_id {
                        break 'bfs;
                    }
                    queue.push_back(v);
                }
            }
        }
    }
    if !seen[to_id] {
        return Ok(None);
    }
    let mut cases = Vec::new();
    let mut at = to_id;
    while at != from_id {
        let (u, case) = prev[at].expect("path recorded");
        cases.push(case);
        at = u;
    }
    cases.reverse();
    Ok(Some(reify_cases(g.perms[from_id].clone(), &cases)))
}

/// Walk raw permutations along a case sequence, building chained arrows.
pub fn reify_cases(start: SignedPermutation, cases: &[StepCase]) -> RauzyPath {
    let mut path = RauzyPath::new(start);
    for &case in cases {
        let arrow = arrow_for(path.end(), case).expect("walk stays on irreducible vertices");
        path.push(arrow).expect("arrows chain by construction");
    }
    path
}

/// Search for a loop at `at` whose cocycle is positive, optionally also
/// neat (border-free). The search walks raw permutations so the result is a
/// literal loop usable as a Markov section selector. Breadth-first over
/// (permutation, cocycle support) states, so the returned loop has minimal
/// length; when neatness is requested, longer candidates are enumerated in
/// length order with a bounded exhaustive search.
pub fn find_positive_loop(
    g: &RauzyGraph,
    at: &str,
    max_len: usize,
    require_neat: bool,
) -> Result<Option<RauzyPath>, GraphError> {
    let at_id = g
        .vertex_id(at)
        .ok_or_else(|| GraphError::UnknownVertex(at.to_string()))?;
    let start = g.perms[at_id].clone();
    let n = start.n();

    // Shortest positive literal loop by BFS with state dedup.
    let shortest = bfs_positive_loop(&start, max_len);
    let Some(cases) = shortest else {
        return Ok(None);
    };
    let candidate = reify_cases(start.clone(), &cases);
    debug_assert!(candidate.is_positive());
    debug_assert_eq!(candidate.end(), &start);
    if !require_neat || candidate.is_neat() {
        return Ok(Some(candidate));
    }

    // Neat demanded but the shortest loop has a border: enumerate loops in
    // length order. Pruned depth-first search; the node guard keeps the
    // worst case bounded.
    let dist_back = raw_distances_to(&start, n);
    let mut budget_nodes = 2_000_000usize;
    for target_len in cases.len()..=max_len {
        let mut stack_cases: Vec<StepCase> = Vec::new();
        if let Some(found) = dfs_neat_loop(
            &start,
            &start,
            SupportMatrix::identity(n),
            target_len,
            &dist_back,
            &mut stack_cases,
            &mut budget_nodes,
        ) {
            return Ok(Some(reify_cases(start, &found)));
        }
        if budget_nodes == 0 {
            break;
        }
    }
    Ok(None)
}

fn hole_avoiding_raw_successors(p: &SignedPermutation) -> Vec<(StepCase, SignedPermutation)> {
    let mut out = Vec::new();
    for case in [StepCase::A, StepCase::B] {
        if let Some(next) = successor_perm(p, case) {
            if next.is_irreducible() {
                out.push((case, next));
            }
        }
    }
    out
}

fn bfs_positive_loop(start: &SignedPermutation, max_len: usize) -> Option<Vec<StepCase>> {
    type State = (SignedPermutation, SupportMatrix);
    let n = start.n();
    let init: State = (start.clone(), SupportMatrix::identity(n));
    let mut seen: HashSet<State> = HashSet::new();
    let mut prev: HashMap<State, (State, StepCase)> = HashMap::new();
    let mut queue: VecDeque<(State, usize)> = VecDeque::new();
    seen.insert(init.clone());
    queue.push_back((init.clone(), 0));
    while let Some(((perm, support), depth)) = queue.pop_front() {
        if depth >= max_len {
            continue;
        }
        for (case, next) in hole_avoiding_raw_successors(&perm) {
            let arrow = arrow_for(&perm, case).expect("successor exists");
            let mut s = support.clone();
            s.or_row_into(arrow.semantic_winner(), arrow.semantic_loser());
            let state: State = (next, s);
            if state.0 == *start && state.1.is_full() {
                // Reconstruct case sequence.
                let mut cases = vec![case];
                let mut cur: State = (perm, support);
                while cur != init {
                    let (p, c) = prev[&cur].clone();
                    cases.push(c);
                    cur = p;
                }
                cases.reverse();
                return Some(cases);
            }
            if seen.insert(state.clone()) {
                prev.insert(state.clone(), ((perm.clone(), support.clone()), case));
                queue.push_back((state, depth + 1));
            }
        }
    }
    None
}

/// Shortest raw-walk distance from each reachable permutation back to
/// `start`, for pruning the neat-loop search.
fn raw_distances_to(start: &SignedPermutation, _n: usize) -> HashMap<SignedPermutation, usize> {
    // Forward closure of raw permutations reachable from start.
    let mut nodes: Vec<SignedPermutation> = vec![start.clone()];
    let mut index: HashMap<SignedPermutation, usize> = HashMap::new();
    index.insert(start.clone(), 0);
    let mut adj: Vec<Vec<usize>> = Vec::new();
    let mut i = 0;
    while i < nodes.len() {
        let p = nodes[i].clone();
        let mut outs = Vec::new();
        for (_, next) in hole_avoiding_raw_successors(&p) {
            let id = match index.get(&next) {
                Some(&id) => id,
                None => {
                    let id = nodes.len();
                    index.insert(next.clone(), id);
                    nodes.push(next);
                    id
                }
            };
            outs.push(id);
        }
        adj.push(outs);
        i += 1;
    }
    // Reverse BFS from start.
    let mut radj: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (u, outs) in adj.iter().enumerate() {
        for &v in outs {
            radj[v].push(u);
        }
    }
    let mut dist: Vec<Option<usize>> = vec![None; nodes.len()];
    dist[0] = Some(0);
    let mut queue = VecDeque::new();
    queue.push_back(0usize);
    while let Some(v) = queue.pop_front() {
        for &u in &radj[v] {
            if dist[u].is_none() {
                dist[u] = Some(dist[v].unwrap() + 1);
                queue.push_back(u);
            }
        }
    }
    nodes
        .into_iter()
        .enumerate()
        .filter_map(|(id, p)| dist[id].map(|d| (p, d)))
        .collect()
}

fn dfs_neat_loop(
    start: &SignedPermutation,
    current: &SignedPermutation,
    support: SupportMatrix,
    remaining: usize,
    dist_back: &HashMap<SignedPermutation, usize>,
    cases: &mut Vec<StepCase>,
    budget_nodes: &mut usize,
) -> Option<Vec<StepCase>> {
    if *budget_nodes == 0 {
        return None;
    }
    *budget_nodes -= 1;
    if remaining == 0 {
        if current == start && support.is_full() {
            let path = reify_cases(start.clone(), cases);
            if path.is_neat() {
                return Some(cases.clone());
            }
        }
        return None;
    }
    match dist_back.get(current) {
        None => return None,
        Some(&d) if d > remaining => return None,
        _ => {}
    }
    for (case, next) in hole_avoiding_raw_successors(current) {
        let arrow = arrow_for(current, case).expect("successor exists");
        let mut s = support.clone();
        s.or_row_into(arrow.semantic_winner(), arrow.semantic_loser());
        cases.push(case);
        if let Some(found) =
            dfs_neat_loop(start, &next, s, remaining - 1, dist_back, cases, budget_nodes)
        {
            return Some(found);
        }
        cases.pop();
    }
    None
}
