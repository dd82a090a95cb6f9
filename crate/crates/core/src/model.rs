//! The generative M-structure and its two-plate reparameterization.
//!
//! All five variables are binary in the generator. Index conventions are
//! spelled out on every table; treatment comes first in the outcome table
//! `theta[t][w]`, matching the `psi`/`rho` mixing formulas
//!
//! ```text
//! psi[z][t] = sum_w theta[t][w] * alpha[w | z, t]
//! rho[z][t] = sum_w theta[t][w] * omega[w | z]
//! ```
//!
//! The reparameterized model keeps `W`-cardinality `K` general (default 2);
//! the generator itself is fixed at binary `W`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-12;

/// Full parameterization of the un-mutilated M-structure.
///
/// `nu` in the literature names two different things: the generative CPT
/// `P(Z|U,W)` and the reparameterized marginal `P(Z)`. Here the CPT is
/// `z_given_uw` and `nu` is reserved for the marginal (see [`Reparam`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FlatParams", into = "FlatParams")]
pub struct GenerativeParams {
    /// P(U = 1).
    pub p_u: f64,
    /// P(W = 1).
    pub p_w: f64,
    /// P(Z = 1 | U = u, W = w), indexed `[u][w]`.
    pub z_given_uw: [[f64; 2]; 2],
    /// P(T = 1 | U = u), indexed `[u]`.
    pub t_given_u: [f64; 2],
    /// P(Y = 1 | T = t, W = w), indexed `[t][w]`.
    pub y_given_tw: [[f64; 2]; 2],
}

/// Flat JSON layout for [`GenerativeParams`]: one named probability per key.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FlatParams {
    p_u: f64,
    p_w: f64,
    z_given_u0_w0: f64,
    z_given_u0_w1: f64,
    z_given_u1_w0: f64,
    z_given_u1_w1: f64,
    t_given_u0: f64,
    t_given_u1: f64,
    y_given_t0_w0: f64,
    y_given_t0_w1: f64,
    y_given_t1_w0: f64,
    y_given_t1_w1: f64,
}

impl From<GenerativeParams> for FlatParams {
    fn from(gp: GenerativeParams) -> Self {
        FlatParams {
            p_u: gp.p_u,
            p_w: gp.p_w,
            z_given_u0_w0: gp.z_given_uw[0][0],
            z_given_u0_w1: gp.z_given_uw[0][1],
            z_given_u1_w0: gp.z_given_uw[1][0],
            z_given_u1_w1: gp.z_given_uw[1][1],
            t_given_u0: gp.t_given_u[0],
            t_given_u1: gp.t_given_u[1],
            y_given_t0_w0: gp.y_given_tw[0][0],
            y_given_t0_w1: gp.y_given_tw[0][1],
            y_given_t1_w0: gp.y_given_tw[1][0],
            y_given_t1_w1: gp.y_given_tw[1][1],
        }
    }
}

impl TryFrom<FlatParams> for GenerativeParams {
    type Error = Error;

    fn try_from(f: FlatParams) -> Result<Self> {
        let gp = GenerativeParams {
            p_u: f.p_u,
            p_w: f.p_w,
            z_given_uw: [
                [f.z_given_u0_w0, f.z_given_u0_w1],
                [f.z_given_u1_w0, f.z_given_u1_w1],
            ],
            t_given_u: [f.t_given_u0, f.t_given_u1],
            y_given_tw: [
                [f.y_given_t0_w0, f.y_given_t0_w1],
                [f.y_given_t1_w0, f.y_given_t1_w1],
            ],
        };
        gp.validate()?;
        Ok(gp)
    }
}

impl GenerativeParams {
    /// Checks that every entry is a probability.
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("p_u", self.p_u),
            ("p_w", self.p_w),
            ("z_given_u0_w0", self.z_given_uw[0][0]),
            ("z_given_u0_w1", self.z_given_uw[0][1]),
            ("z_given_u1_w0", self.z_given_uw[1][0]),
            ("z_given_u1_w1", self.z_given_uw[1][1]),
            ("t_given_u0", self.t_given_u[0]),
            ("t_given_u1", self.t_given_u[1]),
            ("y_given_t0_w0", self.y_given_tw[0][0]),
            ("y_given_t0_w1", self.y_given_tw[0][1]),
            ("y_given_t1_w0", self.y_given_tw[1][0]),
            ("y_given_t1_w1", self.y_given_tw[1][1]),
        ];
        for (name, value) in named {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(Error::InvalidProbability {
                    name: name.to_owned(),
                    value,
                });
            }
        }
        Ok(())
    }

    /// A demonstration parameter set with a strong M-bias gap: the true
    /// average effect is 0.35, while the Z-stratified contrasts are 0.292
    /// (z=0) and 0.240 (z=1).
    pub fn mbias_demo() -> GenerativeParams {
        GenerativeParams {
            p_u: 0.5,
            p_w: 0.5,
            z_given_uw: [[0.95, 0.5], [0.5, 0.05]],
            t_given_u: [0.1, 0.9],
            y_given_tw: [[0.1, 0.5], [0.4, 0.9]],
        }
    }
}

/// One sampled unit; all fields are 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Record {
    pub u: u8,
    pub w: u8,
    pub z: u8,
    pub t: u8,
    pub y: u8,
}

/// Aggregated observation counts over the observed triple `(T, Z, Y)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: [[[u64; 2]; 2]; 2],
    total: u64,
}

impl ContingencyTable {
    /// Builds a table from counts indexed `[t][z][y]`.
    pub fn from_counts(counts: [[[u64; 2]; 2]; 2]) -> ContingencyTable {
        let total = counts
            .iter()
            .flatten()
            .flatten()
            .sum();
        ContingencyTable { counts, total }
    }

    /// All-zero table.
    pub fn empty() -> ContingencyTable {
        ContingencyTable::from_counts([[[0; 2]; 2]; 2])
    }

    /// The bundled example dataset (627 units).
    pub fn example() -> ContingencyTable {
        ContingencyTable::from_counts([[[33, 2], [95, 50]], [[100, 47], [60, 240]]])
    }

    pub fn count(&self, t: usize, z: usize, y: usize) -> u64 {
        self.counts[t][z][y]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Units observed in treatment arm `t`.
    pub fn arm_total(&self, t: usize) -> u64 {
        self.counts[t].iter().flatten().sum()
    }

    /// Units observed in cell `(t, z)`.
    pub fn cell_total(&self, t: usize, z: usize) -> u64 {
        self.counts[t][z].iter().sum()
    }

    /// Units with Z = z.
    pub fn z_total(&self, z: usize) -> u64 {
        self.counts[0][z].iter().sum::<u64>() + self.counts[1][z].iter().sum::<u64>()
    }

    /// Serializes as CSV with header `T,Z,Y,N`, rows in (t, z, y) order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("T,Z,Y,N\n");
        for t in 0..2 {
            for z in 0..2 {
                for y in 0..2 {
                    out.push_str(&format!("{t},{z},{y},{}\n", self.counts[t][z][y]));
                }
            }
        }
        out
    }

    /// Parses the CSV layout produced by [`ContingencyTable::to_csv`]. Rows
    /// may appear in any order; missing cells count as zero; duplicate cells
    /// are rejected.
    pub fn from_csv(text: &str) -> Result<ContingencyTable> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .next()
            .map(|(_, l)| l.trim())
            .ok_or_else(|| Error::Parse("empty table file".into()))?;
        if !header.eq_ignore_ascii_case("t,z,y,n") {
            return Err(Error::Parse(format!(
                "expected header `T,Z,Y,N`, got `{header}`"
            )));
        }
        let mut counts = [[[0u64; 2]; 2]; 2];
        let mut seen = [[[false; 2]; 2]; 2];
        for (lineno, raw) in lines {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::Parse(format!(
                    "line {}: expected 4 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let bit = |s: &str, what: &str| -> Result<usize> {
                match s {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    _ => Err(Error::Parse(format!(
                        "line {}: {what} must be 0 or 1, got `{s}`",
                        lineno + 1
                    ))),
                }
            };
            let t = bit(fields[0], "T")?;
            let z = bit(fields[1], "Z")?;
            let y = bit(fields[2], "Y")?;
            let n: u64 = fields[3].parse().map_err(|_| {
                Error::Parse(format!("line {}: bad count `{}`", lineno + 1, fields[3]))
            })?;
            if std::mem::replace(&mut seen[t][z][y], true) {
                return Err(Error::Parse(format!(
                    "line {}: duplicate cell ({t},{z},{y})",
                    lineno + 1
                )));
            }
            counts[t][z][y] = n;
        }
        Ok(ContingencyTable::from_counts(counts))
    }
}

/// Counts records into a [`ContingencyTable`]; the latent `u`, `w` are
/// discarded.
pub fn tabulate(records: &[Record]) -> ContingencyTable {
    let mut counts = [[[0u64; 2]; 2]; 2];
    for r in records {
        counts[r.t as usize][r.z as usize][r.y as usize] += 1;
    }
    ContingencyTable::from_counts(counts)
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> u8 {
    u8::from(rng.random::<f64>() < p)
}

/// Draws `m` records in ancestral order `U, W -> Z, T -> Y`.
///
/// Deterministic given `seed` (ChaCha8 stream; five uniform draws per record
/// in the ancestral order). Distinct seeds give independent streams, so
/// parallel generation across seeds is safe.
pub fn ancestral_sample(gp: &GenerativeParams, m: usize, seed: u64) -> Vec<Record> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let u = bernoulli(&mut rng, gp.p_u);
        let w = bernoulli(&mut rng, gp.p_w);
        let z = bernoulli(&mut rng, gp.z_given_uw[u as usize][w as usize]);
        let t = bernoulli(&mut rng, gp.t_given_u[u as usize]);
        let y = bernoulli(&mut rng, gp.y_given_tw[t as usize][w as usize]);
        out.push(Record { u, w, z, t, y });
    }
    out
}

/// Exact joint distribution over `(u, w, z, t, y)`; 32 cells summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    probs: [f64; 32],
}

fn joint_index(u: usize, w: usize, z: usize, t: usize, y: usize) -> usize {
    ((((u * 2 + w) * 2 + z) * 2 + t) * 2) + y
}

impl JointDistribution {
    pub fn prob(&self, u: usize, w: usize, z: usize, t: usize, y: usize) -> f64 {
        self.probs[joint_index(u, w, z, t, y)]
    }

    /// Iterates all 32 cells as `(record, probability)`.
    pub fn cells(&self) -> impl Iterator<Item = (Record, f64)> + '_ {
        (0..32usize).map(|i| {
            let r = Record {
                u: ((i >> 4) & 1) as u8,
                w: ((i >> 3) & 1) as u8,
                z: ((i >> 2) & 1) as u8,
                t: ((i >> 1) & 1) as u8,
                y: (i & 1) as u8,
            };
            (r, self.probs[i])
        })
    }

    /// Sums cell probabilities over an arbitrary event.
    pub fn sum_where(&self, event: impl Fn(Record) -> bool) -> f64 {
        self.cells()
            .filter(|&(r, _)| event(r))
            .map(|(_, p)| p)
            .sum()
    }

    /// Marginal P(t, z, y), indexed `[t][z][y]`.
    pub fn marginal_tzy(&self) -> [[[f64; 2]; 2]; 2] {
        let mut m = [[[0.0; 2]; 2]; 2];
        for (r, p) in self.cells() {
            m[r.t as usize][r.z as usize][r.y as usize] += p;
        }
        m
    }
}

/// Enumerates the exact 32-cell joint of the generative model as the product
/// of its factors.
pub fn enumerate_joint(gp: &GenerativeParams) -> JointDistribution {
    let mut probs = [0.0; 32];
    let bern = |p: f64, v: usize| if v == 1 { p } else { 1.0 - p };
    for u in 0..2 {
        for w in 0..2 {
            for z in 0..2 {
                for t in 0..2 {
                    for y in 0..2 {
                        probs[joint_index(u, w, z, t, y)] = bern(gp.p_u, u)
                            * bern(gp.p_w, w)
                            * bern(gp.z_given_uw[u][w], z)
                            * bern(gp.t_given_u[u], t)
                            * bern(gp.y_given_tw[t][w], y);
                    }
                }
            }
        }
    }
    JointDistribution { probs }
}

/// The reparameterized parameters implied by a generative model, obtained by
/// exact enumeration over the latents.
#[derive(Debug, Clone, PartialEq)]
pub struct Reparam {
    /// P(W = w | Z = z, T = t), indexed `[z][t][w]`.
    pub alpha: [[[f64; 2]; 2]; 2],
    /// P(W = w | Z = z), indexed `[z][w]`.
    pub omega: [[f64; 2]; 2],
    /// P(T = 1).
    pub kappa: f64,
    /// P(Z = z), indexed `[z]`.
    pub nu: [f64; 2],
}

/// Computes `(alpha, omega, kappa, nu)` from the exact joint. Errors when a
/// conditioning event `(Z = z, T = t)` or `(Z = z)` has zero probability.
pub fn derive_reparam(gp: &GenerativeParams) -> Result<Reparam> {
    let joint = enumerate_joint(gp);
    let mut alpha = [[[0.0; 2]; 2]; 2];
    let mut omega = [[0.0; 2]; 2];
    let mut nu = [0.0; 2];
    for z in 0..2 {
        let p_z = joint.sum_where(|r| r.z as usize == z);
        nu[z] = p_z;
        if p_z <= 0.0 {
            return Err(Error::UndefinedConditional(format!("(Z={z})")));
        }
        for w in 0..2 {
            omega[z][w] = joint.sum_where(|r| r.z as usize == z && r.w as usize == w) / p_z;
        }
        for t in 0..2 {
            let p_zt = joint.sum_where(|r| r.z as usize == z && r.t as usize == t);
            if p_zt <= 0.0 {
                return Err(Error::UndefinedConditional(format!("(Z={z},T={t})")));
            }
            for w in 0..2 {
                alpha[z][t][w] = joint.sum_where(|r| {
                    r.z as usize == z && r.t as usize == t && r.w as usize == w
                }) / p_zt;
            }
        }
    }
    let kappa = joint.sum_where(|r| r.t == 1);
    Ok(Reparam {
        alpha,
        omega,
        kappa,
        nu,
    })
}

/// Ground-truth interventional effects of a generative model:
/// `effect_given_w[w] = theta[1][w] - theta[0][w]` and the W-marginalized
/// average effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueEffects {
    pub ate: f64,
    pub effect_given_w: [f64; 2],
}

pub fn true_effects(gp: &GenerativeParams) -> TrueEffects {
    let effect_given_w = [
        gp.y_given_tw[1][0] - gp.y_given_tw[0][0],
        gp.y_given_tw[1][1] - gp.y_given_tw[0][1],
    ];
    let ate = (1.0 - gp.p_w) * effect_given_w[0] + gp.p_w * effect_given_w[1];
    TrueEffects {
        ate,
        effect_given_w,
    }
}

/// One draw of the reparameterized two-plate parameters.
///
/// Storage is flat with `W`-cardinality `k`:
///
/// - `theta[t * k + w]` = P(Y=1 | T=t, W=w)
/// - `alpha[(z * 2 + t) * k + w]` = P(W=w | Z=z, T=t); each `(z, t)` column is
///   a simplex over `w`
/// - `omega[z * k + w]` = P(W=w | Z=z); each `z` column is a simplex over `w`
/// - `nu[z]` = P(Z=z), a simplex over the two `z` values
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDraw {
    pub k: usize,
    pub theta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub omega: Vec<f64>,
    pub nu: [f64; 2],
}

impl ParameterDraw {
    pub fn theta(&self, t: usize, w: usize) -> f64 {
        self.theta[t * self.k + w]
    }

    pub fn alpha(&self, w: usize, z: usize, t: usize) -> f64 {
        self.alpha[(z * 2 + t) * self.k + w]
    }

    pub fn omega(&self, w: usize, z: usize) -> f64 {
        self.omega[z * self.k + w]
    }

    /// P(Y=1 | Z=z, T=t) on the observation plate, indexed `[z][t]`.
    pub fn psi(&self) -> [[f64; 2]; 2] {
        psi(&self.theta, &self.alpha, self.k)
    }

    /// P(Y=1 | Z=z, T=t) on the intervention plate, indexed `[z][t]`.
    pub fn rho(&self) -> [[f64; 2]; 2] {
        rho(&self.theta, &self.omega, self.k)
    }

    /// Checks probability ranges and simplex normalization (1e-12).
    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        if self.theta.len() != 2 * k || self.alpha.len() != 4 * k || self.omega.len() != 2 * k {
            return Err(Error::InvalidConfig(format!(
                "parameter buffers inconsistent with k = {k}"
            )));
        }
        for (i, &v) in self.theta.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) || v.is_nan() {
                return Err(Error::InvalidProbability {
                    name: format!("theta[{i}]"),
                    value: v,
                });
            }
        }
        let check_simplex = |name: &str, col: &[f64]| -> Result<()> {
            let sum: f64 = col.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL || col.iter().any(|&v| v < 0.0 || v.is_nan()) {
                return Err(Error::InvalidSimplex {
                    name: name.to_owned(),
                    sum,
                    tol: SIMPLEX_TOL,
                });
            }
            Ok(())
        };
        for z in 0..2 {
            for t in 0..2 {
                let col = &self.alpha[(z * 2 + t) * k..(z * 2 + t + 1) * k];
                check_simplex(&format!("alpha[:,z={z},t={t}]"), col)?;
            }
            check_simplex(&format!("omega[:,z={z}]"), &self.omega[z * k..(z + 1) * k])?;
        }
        check_simplex("nu", &self.nu)?;
        Ok(())
    }
}

/// `psi[z][t] = sum_w theta[t*k+w] * alpha[(z*2+t)*k+w]`.
pub fn psi(theta: &[f64], alpha: &[f64], k: usize) -> [[f64; 2]; 2] {
    debug_assert_eq!(theta.len(), 2 * k);
    debug_assert_eq!(alpha.len(), 4 * k);
    let mut out = [[0.0; 2]; 2];
    for z in 0..2 {
        for t in 0..2 {
            let col = &alpha[(z * 2 + t) * k..(z * 2 + t + 1) * k];
            let th = &theta[t * k..(t + 1) * k];
            out[z][t] = th.iter().zip(col).map(|(a, b)| a * b).sum();
        }
    }
    out
}

/// `rho[z][t] = sum_w theta[t*k+w] * omega[z*k+w]`.
pub fn rho(theta: &[f64], omega: &[f64], k: usize) -> [[f64; 2]; 2] {
    debug_assert_eq!(theta.len(), 2 * k);
    debug_assert_eq!(omega.len(), 2 * k);
    let mut out = [[0.0; 2]; 2];
    for z in 0..2 {
        for t in 0..2 {
            let col = &omega[z * k..(z + 1) * k];
            let th = &theta[t * k..(t + 1) * k];
            out[z][t] = th.iter().zip(col).map(|(a, b)| a * b).sum();
        }
    }
    out
}
