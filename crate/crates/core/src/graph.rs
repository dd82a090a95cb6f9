//! Directed acyclic graphs with do-operator surgery and d-separation.
//!
//! Graphs are immutable values over string-labeled nodes; surgery returns
//! fresh copies. d-separation uses the linear-time reachability formulation
//! (Bayes-ball style): a trail is followed through states `(node, direction)`
//! where colliders pass only when the collider or one of its descendants is
//! conditioned on.

use std::collections::HashMap;
use std::fmt;

use crate::{Error, Result};

/// Direction of travel used by the d-separation reachability walk.
const FROM_CHILD: usize = 0;
const FROM_PARENT: usize = 1;

/// One of the three do-calculus substitution rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// Insertion/deletion of observations.
    InsertDeleteObservation,
    /// Exchange of action and observation.
    ActionObservationExchange,
    /// Insertion/deletion of actions.
    InsertDeleteAction,
}

impl TryFrom<u8> for Rule {
    type Error = Error;

    fn try_from(index: u8) -> Result<Self> {
        match index {
            1 => Ok(Rule::InsertDeleteObservation),
            2 => Ok(Rule::ActionObservationExchange),
            3 => Ok(Rule::InsertDeleteAction),
            other => Err(Error::UnknownRule(other)),
        }
    }
}

/// An immutable DAG over named nodes.
#[derive(Debug, Clone)]
pub struct Dag {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

/// Graphs compare by node-label set and edge set; insertion order is not
/// semantic.
impl PartialEq for Dag {
    fn eq(&self, other: &Self) -> bool {
        let sorted = |g: &Dag| {
            let mut nodes: Vec<&str> = g.nodes().collect();
            nodes.sort_unstable();
            let mut edges: Vec<(String, String)> = g
                .edges()
                .into_iter()
                .map(|(p, c)| (p.to_owned(), c.to_owned()))
                .collect();
            edges.sort();
            (nodes.iter().map(|s| s.to_string()).collect::<Vec<_>>(), edges)
        };
        sorted(self) == sorted(other)
    }
}

impl Eq for Dag {}

impl Dag {
    /// Builds a DAG from node labels (order preserved) and `(parent, child)`
    /// edges. Rejects unknown endpoints, duplicate edges, self-loops and
    /// directed cycles.
    pub fn new<S, T>(nodes: &[S], edges: &[(T, T)]) -> Result<Dag>
    where
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let mut index = HashMap::new();
        let mut labels = Vec::with_capacity(nodes.len());
        for n in nodes {
            let label = n.as_ref().to_owned();
            if index.insert(label.clone(), labels.len()).is_some() {
                return Err(Error::Parse(format!("duplicate node `{label}`")));
            }
            labels.push(label);
        }
        let n = labels.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for (p, c) in edges {
            let (p, c) = (p.as_ref(), c.as_ref());
            let pi = *index
                .get(p)
                .ok_or_else(|| Error::UnknownNode(p.to_owned()))?;
            let ci = *index
                .get(c)
                .ok_or_else(|| Error::UnknownNode(c.to_owned()))?;
            if pi == ci {
                return Err(Error::SelfLoop(p.to_owned()));
            }
            if children[pi].contains(&ci) {
                return Err(Error::DuplicateEdge(p.to_owned(), c.to_owned()));
            }
            children[pi].push(ci);
            parents[ci].push(pi);
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }
        let dag = Dag {
            nodes: labels,
            index,
            parents,
            children,
        };
        if let Some(v) = dag.find_cycle_member() {
            return Err(Error::Cyclic(dag.nodes[v].clone()));
        }
        Ok(dag)
    }

    /// The five-node M-structure over `{U, W, Z, T, Y}`:
    /// `U -> T`, `U -> Z`, `W -> Z`, `W -> Y`, `T -> Y`.
    pub fn m_graph() -> Dag {
        Dag::new(
            &["U", "W", "Z", "T", "Y"],
            &[("U", "T"), ("U", "Z"), ("W", "Z"), ("W", "Y"), ("T", "Y")],
        )
        .expect("m-graph is valid")
    }

    /// Node labels in insertion order.
    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(String::as_str)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    /// Edges as `(parent, child)` label pairs, ordered by parent then child.
    pub fn edges(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        for (p, ch) in self.children.iter().enumerate() {
            for &c in ch {
                out.push((self.nodes[p].as_str(), self.nodes[c].as_str()));
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    /// Returns a kth node on a cycle, if any (used by the constructor).
    fn find_cycle_member(&self) -> Option<usize> {
        // Kahn's algorithm; any node never drained sits on a cycle.
        let n = self.nodes.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut drained = 0;
        while let Some(v) = queue.pop() {
            drained += 1;
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push(c);
                }
            }
        }
        if drained == n {
            None
        } else {
            (0..n).find(|&v| indeg[v] > 0)
        }
    }

    fn resolve(&self, label: &str) -> Result<usize> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownNode(label.to_owned()))
    }

    fn resolve_set<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(labels.len());
        for l in labels {
            let idx = self.resolve(l.as_ref())?;
            if !out.contains(&idx) {
                out.push(idx);
            }
        }
        Ok(out)
    }

    /// Removes every edge pointing *into* a target node (the do-operator's
    /// graph surgery). Nodes and all other edges are preserved.
    pub fn mutilate<S: AsRef<str>>(&self, targets: &[S]) -> Result<Dag> {
        let t = self.resolve_set(targets)?;
        Ok(self.without_incoming(&t))
    }

    /// Removes every edge pointing *out of* a target node (used by the
    /// rule-2 condition).
    pub fn remove_outgoing<S: AsRef<str>>(&self, targets: &[S]) -> Result<Dag> {
        let t = self.resolve_set(targets)?;
        Ok(self.without_outgoing(&t))
    }

    fn without_incoming(&self, targets: &[usize]) -> Dag {
        let mut g = self.clone();
        for &t in targets {
            for p in std::mem::take(&mut g.parents[t]) {
                g.children[p].retain(|&c| c != t);
            }
        }
        g
    }

    fn without_outgoing(&self, targets: &[usize]) -> Dag {
        let mut g = self.clone();
        for &t in targets {
            for c in std::mem::take(&mut g.children[t]) {
                g.parents[c].retain(|&p| p != t);
            }
        }
        g
    }

    /// Proper ancestors of the seed set (nodes with a directed path of length
    /// at least one into some seed).
    fn ancestor_mask(&self, seeds: &[usize]) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = Vec::new();
        for &s in seeds {
            stack.extend_from_slice(&self.parents[s]);
        }
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut mask[v], true) {
                continue;
            }
            stack.extend_from_slice(&self.parents[v]);
        }
        mask
    }

    fn check_disjoint(&self, sets: &[&[usize]]) -> Result<()> {
        let mut seen = vec![false; self.nodes.len()];
        for set in sets {
            for &v in *set {
                if std::mem::replace(&mut seen[v], true) {
                    return Err(Error::OverlappingSets(self.nodes[v].clone()));
                }
            }
        }
        Ok(())
    }

    /// Tests whether every trail between `x` and `y` is blocked given `z`
    /// under d-separation semantics. `x` and `y` must be nonempty; the three
    /// sets must be pairwise disjoint subsets of the node set.
    pub fn d_separated<S: AsRef<str>>(&self, x: &[S], y: &[S], z: &[S]) -> Result<bool> {
        let xs = self.resolve_set(x)?;
        let ys = self.resolve_set(y)?;
        let zs = self.resolve_set(z)?;
        if xs.is_empty() {
            return Err(Error::EmptyNodeSet("x"));
        }
        if ys.is_empty() {
            return Err(Error::EmptyNodeSet("y"));
        }
        self.check_disjoint(&[&xs, &ys, &zs])?;
        Ok(self.d_separated_idx(&xs, &ys, &zs))
    }

    fn d_separated_idx(&self, xs: &[usize], ys: &[usize], zs: &[usize]) -> bool {
        let n = self.nodes.len();
        let mut in_z = vec![false; n];
        for &v in zs {
            in_z[v] = true;
        }
        // Collider gate: open iff the collider is in Z or an ancestor of Z.
        let mut opens_collider = self.ancestor_mask(zs);
        for &v in zs {
            opens_collider[v] = true;
        }
        let mut in_y = vec![false; n];
        for &v in ys {
            in_y[v] = true;
        }

        let mut visited = vec![[false; 2]; n];
        let mut stack: Vec<(usize, usize)> = xs.iter().map(|&v| (v, FROM_CHILD)).collect();
        while let Some((v, dir)) = stack.pop() {
            if std::mem::replace(&mut visited[v][dir], true) {
                continue;
            }
            if in_y[v] {
                return false;
            }
            if dir == FROM_CHILD {
                // Arrived against the arrows (or started here): may continue
                // to parents and children unless v is conditioned on.
                if !in_z[v] {
                    for &p in &self.parents[v] {
                        stack.push((p, FROM_CHILD));
                    }
                    for &c in &self.children[v] {
                        stack.push((c, FROM_PARENT));
                    }
                }
            } else {
                // Arrived along an arrow: chain continues downward when v is
                // unconditioned; the collider bounce upward needs the gate.
                if !in_z[v] {
                    for &c in &self.children[v] {
                        stack.push((c, FROM_PARENT));
                    }
                }
                if opens_collider[v] {
                    for &p in &self.parents[v] {
                        stack.push((p, FROM_CHILD));
                    }
                }
            }
        }
        true
    }

    /// Evaluates the graphical applicability condition of one do-calculus
    /// rule for the query sets `(y, x, z, w)`.
    ///
    /// - Rule 1: `Y ⊥ Z | X ∪ W` with incoming edges to `X` removed.
    /// - Rule 2: `Y ⊥ Z | X ∪ W` with incoming edges to `X` and outgoing
    ///   edges from `Z` removed.
    /// - Rule 3: `Y ⊥ Z | X ∪ W` with incoming edges to `X` and to `Z(W)`
    ///   removed, where `Z(W)` keeps the `Z`-nodes that are not ancestors of
    ///   any `W`-node once `X`'s incoming edges are gone.
    ///
    /// An empty `z` (or empty `y`) makes the independence claim vacuous and
    /// returns `true`.
    pub fn rule_condition_holds<S: AsRef<str>>(
        &self,
        rule: Rule,
        y: &[S],
        x: &[S],
        z: &[S],
        w: &[S],
    ) -> Result<bool> {
        let ys = self.resolve_set(y)?;
        let xs = self.resolve_set(x)?;
        let zs = self.resolve_set(z)?;
        let ws = self.resolve_set(w)?;
        self.check_disjoint(&[&ys, &xs, &zs, &ws])?;
        if zs.is_empty() || ys.is_empty() {
            return Ok(true);
        }
        let mut given = xs.clone();
        given.extend_from_slice(&ws);
        let surgered = match rule {
            Rule::InsertDeleteObservation => self.without_incoming(&xs),
            Rule::ActionObservationExchange => self.without_incoming(&xs).without_outgoing(&zs),
            Rule::InsertDeleteAction => {
                let gx = self.without_incoming(&xs);
                let an_w = gx.ancestor_mask(&ws);
                let z_not_anc: Vec<usize> =
                    zs.iter().copied().filter(|&v| !an_w[v]).collect();
                gx.without_incoming(&z_not_anc)
            }
        };
        Ok(surgered.d_separated_idx(&ys, &zs, &given))
    }

    /// Parses a plain-text edge list: one `parent child` pair per line,
    /// `#` starts a comment, blank lines ignored. Node order follows first
    /// appearance.
    pub fn parse_edge_list(text: &str) -> Result<Dag> {
        let mut nodes: Vec<String> = Vec::new();
        let mut edges: Vec<(String, String)> = Vec::new();
        let note = |label: &str, nodes: &mut Vec<String>| {
            if !nodes.iter().any(|n| n == label) {
                nodes.push(label.to_owned());
            }
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let (p, c) = match (it.next(), it.next(), it.next()) {
                (Some(p), Some(c), None) => (p, c),
                _ => {
                    return Err(Error::Parse(format!(
                        "line {}: expected `parent child`, got `{line}`",
                        lineno + 1
                    )))
                }
            };
            note(p, &mut nodes);
            note(c, &mut nodes);
            edges.push((p.to_owned(), c.to_owned()));
        }
        Dag::new(&nodes, &edges)
    }

    /// Serializes to the edge-list format accepted by [`Dag::parse_edge_list`].
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (p, c) in self.edges() {
            out.push_str(p);
            out.push(' ');
            out.push_str(c);
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dag({} nodes, {} edges)", self.node_count(), self.edge_count())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m() -> Dag {
        Dag::m_graph()
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(matches!(
            Dag::new(&["a", "b"], &[("a", "c")]),
            Err(Error::UnknownNode(_))
        ));
        assert!(matches!(
            Dag::new(&["a"], &[("a", "a")]),
            Err(Error::SelfLoop(_))
        ));
        assert!(matches!(
            Dag::new(&["a", "b"], &[("a", "b"), ("a", "b")]),
            Err(Error::DuplicateEdge(_, _))
        ));
        assert!(matches!(
            Dag::new(&["a", "b", "c"], &[("a", "b"), ("b", "c"), ("c", "a")]),
            Err(Error::Cyclic(_))
        ));
    }

    #[test]
    fn mutilate_removes_only_incoming() {
        let g = m();
        let cut = g.mutilate(&["T"]).unwrap();
        let mut expected = g.edges();
        expected.retain(|&(_, c)| c != "T");
        assert_eq!(cut.edges(), expected);
        assert_eq!(cut.edge_count(), 4);
        // original untouched
        assert_eq!(g.edge_count(), 5);
    }

    #[test]
    fn mutilate_empty_is_identity() {
        let g = m();
        let same = g.mutilate(&[] as &[&str]).unwrap();
        assert_eq!(same, g);
    }

    #[test]
    fn mutilate_parentless_node_is_identity() {
        let g = m();
        assert_eq!(g.mutilate(&["U"]).unwrap(), g);
    }

    #[test]
    fn mutilate_unknown_target_errors() {
        assert!(matches!(
            m().mutilate(&["Q"]),
            Err(Error::UnknownNode(_))
        ));
    }

    #[test]
    fn d_separation_on_the_m_graph() {
        let g = m();
        // Adjacent nodes are never d-separated.
        assert!(!g.d_separated(&["T"], &["Y"], &[]).unwrap());
        // Dropping T -> Y blocks the remaining trail at the collider Z...
        let cut = g.remove_outgoing(&["T"]).unwrap();
        assert!(cut.d_separated(&["T"], &["Y"], &[]).unwrap());
        // ...and conditioning on Z reopens it.
        assert!(!cut.d_separated(&["T"], &["Y"], &["Z"]).unwrap());
        // Latent independence: U and W are marginally separated, coupled by Z.
        assert!(g.d_separated(&["U"], &["W"], &[]).unwrap());
        assert!(!g.d_separated(&["U"], &["W"], &["Z"]).unwrap());
    }

    #[test]
    fn d_separation_validates_inputs() {
        let g = m();
        assert!(matches!(
            g.d_separated(&["T"], &["T"], &[]),
            Err(Error::OverlappingSets(_))
        ));
        assert!(matches!(
            g.d_separated(&[] as &[&str], &["Y"], &[]),
            Err(Error::EmptyNodeSet("x"))
        ));
        assert!(matches!(
            g.d_separated(&["T"], &["Y"], &["nope"]),
            Err(Error::UnknownNode(_))
        ));
    }

    #[test]
    fn rule2_licenses_do_t_as_observe_t() {
        let g = m();
        let holds = g
            .rule_condition_holds(Rule::ActionObservationExchange, &["Y"], &[], &["T"], &[])
            .unwrap();
        assert!(holds);
    }

    #[test]
    fn rule1_fails_for_ignoring_z_given_t() {
        // In the T-incoming-removed graph the trail Z <- W -> Y stays open,
        // so Y and Z are not independent given T.
        let g = m();
        let holds = g
            .rule_condition_holds(
                Rule::InsertDeleteObservation,
                &["Y"],
                &["T"],
                &["Z"],
                &[],
            )
            .unwrap();
        assert!(!holds);
    }

    #[test]
    fn rules_vacuous_on_empty_z() {
        let g = m();
        for rule in [
            Rule::InsertDeleteObservation,
            Rule::ActionObservationExchange,
            Rule::InsertDeleteAction,
        ] {
            assert!(g
                .rule_condition_holds(rule, &["Y"], &["T"], &[], &[])
                .unwrap());
        }
    }

    #[test]
    fn rule3_drops_actions_without_effect() {
        // do(Z) has no effect on Y given do(T): Z's outgoing edges do not
        // exist, so in the surgered graph Z is isolated from Y.
        let g = m();
        assert!(g
            .rule_condition_holds(Rule::InsertDeleteAction, &["Y"], &["T"], &["Z"], &[])
            .unwrap());
    }

    #[test]
    fn unknown_rule_index_is_an_error() {
        assert!(matches!(Rule::try_from(0), Err(Error::UnknownRule(0))));
        assert!(matches!(Rule::try_from(4), Err(Error::UnknownRule(4))));
        assert_eq!(Rule::try_from(2).unwrap(), Rule::ActionObservationExchange);
    }

    #[test]
    fn edge_list_round_trip() {
        let g = m();
        let text = g.to_edge_list();
        let parsed = Dag::parse_edge_list(&text).unwrap();
        assert_eq!(parsed, g);
    }

    #[test]
    fn edge_list_accepts_comments_and_rejects_garbage() {
        let g = Dag::parse_edge_list("# the M-structure\nU T # treatment\nU Z\nW Z\nW Y\nT Y\n")
            .unwrap();
        assert_eq!(g, m());
        assert!(matches!(
            Dag::parse_edge_list("a b c\n"),
            Err(Error::Parse(_))
        ));
    }
}
