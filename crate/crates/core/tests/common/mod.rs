//! Independent test oracles: conditional mutual information on the exact
//! joint, brute-force path-enumeration d-separation, tied generative models
//! for surgered graphs, and Monte-Carlo error helpers.
//!
//! Everything here deliberately avoids the library's reachability and
//! sampling code paths so the two sides stay independent.

#![allow(dead_code)]

use std::collections::HashMap;

use mbias_core::graph::Dag;
use mbias_core::model::{GenerativeParams, JointDistribution, Record};
use rand::Rng;

/// The five variables of the M-structure, in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    U,
    W,
    Z,
    T,
    Y,
}

pub const ALL_VARS: [Var; 5] = [Var::U, Var::W, Var::Z, Var::T, Var::Y];

impl Var {
    pub fn label(self) -> &'static str {
        match self {
            Var::U => "U",
            Var::W => "W",
            Var::Z => "Z",
            Var::T => "T",
            Var::Y => "Y",
        }
    }

    fn bit(self, r: Record) -> u8 {
        match self {
            Var::U => r.u,
            Var::W => r.w,
            Var::Z => r.z,
            Var::T => r.t,
            Var::Y => r.y,
        }
    }
}

pub fn labels(vars: &[Var]) -> Vec<&'static str> {
    vars.iter().map(|v| v.label()).collect()
}

fn key(vars: &[Var], r: Record) -> u8 {
    vars.iter()
        .fold(0u8, |acc, v| (acc << 1) | v.bit(r))
}

/// Conditional mutual information I(X; Y | Z) in nats on an exact joint.
pub fn conditional_mutual_information(
    joint: &JointDistribution,
    xs: &[Var],
    ys: &[Var],
    zs: &[Var],
) -> f64 {
    let mut p_xyz: HashMap<(u8, u8, u8), f64> = HashMap::new();
    let mut p_xz: HashMap<(u8, u8), f64> = HashMap::new();
    let mut p_yz: HashMap<(u8, u8), f64> = HashMap::new();
    let mut p_z: HashMap<u8, f64> = HashMap::new();
    for (r, p) in joint.cells() {
        if p <= 0.0 {
            continue;
        }
        let (kx, ky, kz) = (key(xs, r), key(ys, r), key(zs, r));
        *p_xyz.entry((kx, ky, kz)).or_insert(0.0) += p;
        *p_xz.entry((kx, kz)).or_insert(0.0) += p;
        *p_yz.entry((ky, kz)).or_insert(0.0) += p;
        *p_z.entry(kz).or_insert(0.0) += p;
    }
    let mut info = 0.0;
    for (&(kx, ky, kz), &pxyz) in &p_xyz {
        let ratio = pxyz * p_z[&kz] / (p_xz[&(kx, kz)] * p_yz[&(ky, kz)]);
        info += pxyz * ratio.ln();
    }
    info
}

/// Surgeries whose post-surgery distribution we can realize by tying CPT
/// entries of the generative model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surgery {
    /// The untouched M-graph.
    None,
    /// do(T): drop U -> T.
    DoT,
    /// do(Z): drop U -> Z and W -> Z.
    DoZ,
    /// do(Y): drop T -> Y and W -> Y.
    DoY,
    /// Remove T's outgoing edge T -> Y (rule-2 surgery).
    CutOutgoingT,
    /// do(T) and do(Z) together.
    DoTZ,
}

pub const ALL_SURGERIES: [Surgery; 6] = [
    Surgery::None,
    Surgery::DoT,
    Surgery::DoZ,
    Surgery::DoY,
    Surgery::CutOutgoingT,
    Surgery::DoTZ,
];

impl Surgery {
    /// The surgered graph, built through the library's surgery operations.
    pub fn apply(self, g: &Dag) -> Dag {
        match self {
            Surgery::None => g.clone(),
            Surgery::DoT => g.mutilate(&["T"]).unwrap(),
            Surgery::DoZ => g.mutilate(&["Z"]).unwrap(),
            Surgery::DoY => g.mutilate(&["Y"]).unwrap(),
            Surgery::CutOutgoingT => g.remove_outgoing(&["T"]).unwrap(),
            Surgery::DoTZ => g.mutilate(&["T", "Z"]).unwrap(),
        }
    }

    /// A generative model whose joint is Markov to the surgered graph:
    /// every removed edge becomes a CPT constant in that parent.
    pub fn tie(self, gp: &GenerativeParams) -> GenerativeParams {
        let mut out = gp.clone();
        match self {
            Surgery::None => {}
            Surgery::DoT => {
                out.t_given_u = [gp.t_given_u[0]; 2];
            }
            Surgery::DoZ => {
                out.z_given_uw = [[gp.z_given_uw[0][0]; 2]; 2];
            }
            Surgery::DoY => {
                out.y_given_tw = [[gp.y_given_tw[0][0]; 2]; 2];
            }
            Surgery::CutOutgoingT => {
                out.y_given_tw = [gp.y_given_tw[0], gp.y_given_tw[0]];
            }
            Surgery::DoTZ => {
                out.t_given_u = [gp.t_given_u[0]; 2];
                out.z_given_uw = [[gp.z_given_uw[0][0]; 2]; 2];
            }
        }
        out
    }
}

/// A generative model with every probability drawn from U(0.1, 0.9); keeps
/// conditionals well away from degeneracy so d-connection shows up as
/// clearly positive mutual information.
pub fn random_gp<R: Rng>(rng: &mut R) -> GenerativeParams {
    let mut p = || rng.random_range(0.1..0.9);
    GenerativeParams {
        p_u: p(),
        p_w: p(),
        z_given_uw: [[p(), p()], [p(), p()]],
        t_given_u: [p(), p()],
        y_given_tw: [[p(), p()], [p(), p()]],
    }
}

// ---------------------------------------------------------------------------
// Path-enumeration d-separation oracle
// ---------------------------------------------------------------------------

/// Brute-force d-separation by enumerating every simple trail between the
/// sets and applying the blocking rules directly.
pub fn d_separated_by_paths(g: &Dag, xs: &[&str], ys: &[&str], zs: &[&str]) -> bool {
    let nodes: Vec<String> = g.nodes().map(str::to_owned).collect();
    let idx = |l: &str| nodes.iter().position(|n| n == l).unwrap();
    let n = nodes.len();
    // adjacency with orientation: (neighbor, points_into_neighbor)
    let mut adj: Vec<Vec<(usize, bool)>> = vec![Vec::new(); n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (p, c) in g.edges() {
        let (pi, ci) = (idx(p), idx(c));
        adj[pi].push((ci, true));
        adj[ci].push((pi, false));
        children[pi].push(ci);
    }
    // descendants including self
    let descendants = |v: usize| -> Vec<bool> {
        let mut seen = vec![false; n];
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            if std::mem::replace(&mut seen[u], true) {
                continue;
            }
            stack.extend_from_slice(&children[u]);
        }
        seen
    };
    let in_z: Vec<bool> = {
        let mut m = vec![false; n];
        for l in zs {
            m[idx(l)] = true;
        }
        m
    };
    let collider_open: Vec<bool> = (0..n)
        .map(|v| {
            let de = descendants(v);
            (0..n).any(|u| de[u] && in_z[u])
        })
        .collect();
    let y_set: Vec<bool> = {
        let mut m = vec![false; n];
        for l in ys {
            m[idx(l)] = true;
        }
        m
    };

    // DFS over simple trails keeping the orientation of the last step.
    // `arrived_in`: the previous edge points into the current node.
    fn active_trail_exists(
        v: usize,
        arrived_in: Option<bool>,
        visited: &mut Vec<bool>,
        adj: &[Vec<(usize, bool)>],
        in_z: &[bool],
        collider_open: &[bool],
        y_set: &[bool],
    ) -> bool {
        if y_set[v] {
            return true;
        }
        visited[v] = true;
        for &(next, out_into_next) in &adj[v] {
            if visited[next] {
                continue;
            }
            // Blocking test applies to v as an interior node when we extend
            // the trail through it.
            if let Some(arr) = arrived_in {
                let is_collider = arr && !out_into_next;
                let blocked = if is_collider {
                    !collider_open[v]
                } else {
                    in_z[v]
                };
                if blocked {
                    continue;
                }
            }
            if active_trail_exists(
                next,
                Some(out_into_next),
                visited,
                adj,
                in_z,
                collider_open,
                y_set,
            ) {
                return true;
            }
            visited[next] = false;
        }
        false
    }

    for x in xs {
        let mut visited = vec![false; n];
        if active_trail_exists(
            idx(x),
            None,
            &mut visited,
            &adj,
            &in_z,
            &collider_open,
            &y_set,
        ) {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Monte-Carlo helpers
// ---------------------------------------------------------------------------

// ---------------------------------------------------------------------------
// Deterministic quadrature oracle for the example-table posterior
// ---------------------------------------------------------------------------
//
// The posterior factorizes over the two treatment blocks. Within block `t`
// with parameters (th0, th1, a_0, a_1) and cell counts (n1_z, n0_z), the
// mixed success probability `p_z = th0 * a_z + th1 * (1 - a_z)` sweeps the
// interval [min(th0,th1), max(th0,th1)] uniformly as `a_z` does [0, 1], so
// integrating `a_z` out gives an incomplete-beta mass divided by |th0 - th1|.
// All posterior moments of theta then reduce to a 2-D grid quadrature.

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7, n = 9.
    const COEF: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection; not hit for the count arguments used here
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, c) in COEF.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for the regularized incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-14;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn betainc(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_bt = -ln_beta(a, b) + a * x.ln() + b * (1.0 - x).ln();
    let bt = ln_bt.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * beta_cf(a, b, x) / a
    } else {
        1.0 - bt * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Exact posterior moments of one treatment block by 2-D grid quadrature.
struct BlockMoments {
    e_th: [f64; 2],
    e_psi: [f64; 2],
}

fn block_moments(cells: [(f64, f64); 2], grid: usize) -> BlockMoments {
    let lnb1: Vec<f64> = cells.iter().map(|&(n1, n0)| ln_beta(n1 + 1.0, n0 + 1.0)).collect();
    let lnb2: Vec<f64> = cells.iter().map(|&(n1, n0)| ln_beta(n1 + 2.0, n0 + 1.0)).collect();
    let mut z_total = 0.0;
    let mut s_th = [0.0; 2];
    let mut s_psi = [0.0; 2];
    for i in 0..grid {
        let th0 = (i as f64 + 0.5) / grid as f64;
        for j in 0..grid {
            let th1 = (j as f64 + 0.5) / grid as f64;
            let (lo, hi) = if th0 < th1 { (th0, th1) } else { (th1, th0) };
            let diff = hi - lo;
            let mut weight = 1.0;
            let mut psi_given = [0.0; 2];
            let mut dead = false;
            for (z, &(n1, n0)) in cells.iter().enumerate() {
                if diff < 1e-12 {
                    // degenerate mixture: p_z is pinned at th0
                    weight *= (n1 * th0.ln() + n0 * (1.0 - th0).ln()).exp();
                    psi_given[z] = th0;
                    continue;
                }
                let mass1 = lnb1[z].exp()
                    * (betainc(n1 + 1.0, n0 + 1.0, hi) - betainc(n1 + 1.0, n0 + 1.0, lo));
                if mass1 <= 0.0 {
                    dead = true;
                    break;
                }
                let mass2 = lnb2[z].exp()
                    * (betainc(n1 + 2.0, n0 + 1.0, hi) - betainc(n1 + 2.0, n0 + 1.0, lo));
                weight *= mass1 / diff;
                psi_given[z] = mass2 / mass1;
            }
            if dead || weight <= 0.0 {
                continue;
            }
            z_total += weight;
            s_th[0] += weight * th0;
            s_th[1] += weight * th1;
            s_psi[0] += weight * psi_given[0];
            s_psi[1] += weight * psi_given[1];
        }
    }
    BlockMoments {
        e_th: [s_th[0] / z_total, s_th[1] / z_total],
        e_psi: [s_psi[0] / z_total, s_psi[1] / z_total],
    }
}

/// Deterministic posterior means on the example table: the half-sum average
/// effect and the four `psi[z][t]` cells, by incomplete-beta quadrature.
pub struct QuadraturePosterior {
    pub ate_half_sum: f64,
    /// indexed `[z][t]`
    pub psi: [[f64; 2]; 2],
}

pub fn example_posterior_by_quadrature(grid: usize) -> QuadraturePosterior {
    // (n1, n0) per z for each treatment block of the example table
    let t0 = block_moments([(2.0, 33.0), (50.0, 95.0)], grid);
    let t1 = block_moments([(47.0, 100.0), (240.0, 60.0)], grid);
    let e_dw0 = t1.e_th[0] - t0.e_th[0];
    let e_dw1 = t1.e_th[1] - t0.e_th[1];
    QuadraturePosterior {
        ate_half_sum: 0.5 * (e_dw0 + e_dw1),
        psi: [[t0.e_psi[0], t1.e_psi[0]], [t0.e_psi[1], t1.e_psi[1]]],
    }
}

// ---------------------------------------------------------------------------
// Monte-Carlo helpers
// ---------------------------------------------------------------------------

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Standard error of the mean of a (possibly autocorrelated) series via
/// batch means.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    assert!(size >= 2, "need at least 2 points per batch");
    let means: Vec<f64> = (0..batches)
        .map(|b| mean(&xs[b * size..(b + 1) * size]))
        .collect();
    sample_std(&means) / (batches as f64).sqrt()
}
