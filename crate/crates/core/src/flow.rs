//! Min-cost max-flow by successive shortest paths, with lexicographic edge
//! costs. Used to route user totals over downlinks; graphs are small
//! bipartite networks, so Bellman-Ford per augmentation is plenty.

use std::ops::{Add, Neg};

use crate::scalar::Real;

/// Edge cost compared lexicographically: `primary`, then `secondary` up to a
/// tolerance, then `tertiary`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cost<T> {
    pub primary: i64,
    pub secondary: T,
    pub tertiary: i64,
}

impl<T: Real> Cost<T> {
    pub fn zero() -> Self {
        Cost { primary: 0, secondary: T::zero(), tertiary: 0 }
    }

    pub fn new(primary: i64, secondary: T, tertiary: i64) -> Self {
        Cost { primary, secondary, tertiary }
    }

    fn less(&self, other: &Self, tol: T) -> bool {
        if self.primary != other.primary {
            return self.primary < other.primary;
        }
        if self.secondary < other.secondary - tol {
            return true;
        }
        if self.secondary > other.secondary + tol {
            return false;
        }
        self.tertiary < other.tertiary
    }
}

impl<T: Real> Add for Cost<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Cost {
            primary: self.primary + o.primary,
            secondary: self.secondary + o.secondary,
            tertiary: self.tertiary + o.tertiary,
        }
    }
}

impl<T: Real> Neg for Cost<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Cost { primary: -self.primary, secondary: -self.secondary, tertiary: -self.tertiary }
    }
}

#[derive(Debug, Clone)]
struct Edge<T> {
    to: usize,
    cap: T,
    flow: T,
    cost: Cost<T>,
}

#[derive(Debug, Clone)]
pub struct FlowNetwork<T> {
    edges: Vec<Edge<T>>,
    adj: Vec<Vec<usize>>,
}

impl<T: Real> FlowNetwork<T> {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork { edges: Vec::new(), adj: vec![Vec::new(); nodes] }
    }

    /// Adds a directed edge and returns its id for [`FlowNetwork::flow`].
    pub fn add_edge(&mut self, from: usize, to: usize, cap: T, cost: Cost<T>) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, flow: T::zero(), cost });
        self.edges.push(Edge { to: from, cap: T::zero(), flow: T::zero(), cost: -cost });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    pub fn flow(&self, edge: usize) -> T {
        self.edges[edge].flow
    }

    fn residual(&self, e: usize) -> T {
        self.edges[e].cap - self.edges[e].flow
    }

    /// Pushes as much flow as possible from `s` to `t` at minimum cost.
    /// Residual capacities at or below `cap_eps` are treated as saturated.
    pub fn min_cost_max_flow(&mut self, s: usize, t: usize, cap_eps: T, cost_tol: T) -> T {
        let n = self.adj.len();
        let mut total = T::zero();
        loop {
            let mut dist: Vec<Option<Cost<T>>> = vec![None; n];
            let mut via: Vec<Option<usize>> = vec![None; n];
            dist[s] = Some(Cost::zero());
            for _ in 0..n {
                let mut changed = false;
                for u in 0..n {
                    let Some(du) = dist[u] else { continue };
                    for &e in &self.adj[u] {
                        if self.residual(e) <= cap_eps {
                            continue;
                        }
                        let v = self.edges[e].to;
                        let cand = du + self.edges[e].cost;
                        if dist[v].is_none_or(|dv| cand.less(&dv, cost_tol)) {
                            dist[v] = Some(cand);
                            via[v] = Some(e);
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if dist[t].is_none() {
                return total;
            }
            let mut push = T::infinity();
            let mut v = t;
            let mut hops = 0;
            while v != s {
                let e = via[v].expect("path predecessor");
                push = push.min(self.residual(e));
                v = self.edges[e ^ 1].to;
                hops += 1;
                if hops > n {
                    // A cycle in the predecessor chain means costs were only
                    // tolerance-consistent; stop with what has been routed.
                    return total;
                }
            }
            if !push.is_finite() || push <= T::zero() {
                return total;
            }
            let mut v = t;
            while v != s {
                let e = via[v].expect("path predecessor");
                self.edges[e].flow = self.edges[e].flow + push;
                self.edges[e ^ 1].flow = self.edges[e ^ 1].flow - push;
                v = self.edges[e ^ 1].to;
            }
            total = total + push;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheapest_route_is_used_first() {
        // s -> a (2), a -> t via two parallel paths of capacity 1.
        let mut g = FlowNetwork::<f64>::new(4);
        g.add_edge(0, 1, 2.0, Cost::zero());
        let cheap = g.add_edge(1, 2, 1.5, Cost::new(0, 1.0, 0));
        let dear = g.add_edge(1, 3, 5.0, Cost::new(0, 2.0, 0));
        g.add_edge(2, 3, 1.0, Cost::zero());
        let f = g.min_cost_max_flow(0, 3, 0.0, 1e-12);
        assert_eq!(f, 2.0);
        assert_eq!(g.flow(cheap), 1.0);
        assert_eq!(g.flow(dear), 1.0);
    }

    #[test]
    fn primary_cost_dominates() {
        let mut g = FlowNetwork::<f64>::new(3);
        g.add_edge(0, 1, 1.0, Cost::zero());
        let a = g.add_edge(1, 2, 1.0, Cost::new(-1, 100.0, 0));
        let b = g.add_edge(1, 2, 1.0, Cost::new(0, 0.0, 0));
        g.min_cost_max_flow(0, 2, 0.0, 1e-12);
        assert_eq!(g.flow(a), 1.0);
        assert_eq!(g.flow(b), 0.0);
    }
}
