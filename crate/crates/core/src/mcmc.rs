//! Posterior computation for the two-plate model.
//!
//! The proposal distribution of the Markov chain *is* the prior, so the
//! Metropolis-Hastings ratio reduces to a likelihood ratio: the prior and
//! proposal densities cancel exactly (they are the same uniform-concentration
//! product measure). A proposal is accepted when
//! `log L(psi*) - log L(psi) > log u`, `u ~ U(0,1)`.
//!
//! The likelihood is evaluated over the eight aggregated table cells rather
//! than per record, which keeps the inner loop at a handful of fused
//! multiply-adds and logs per iteration. Only `theta` and `alpha` enter the
//! likelihood; `omega` and `nu` ride along with the proposal and are only
//! materialized when a proposal is accepted (the acceptance event is
//! independent of them, so the chain law is unchanged).
//!
//! RNG contract: `ChaCha8` seeded from the run seed; parallel chains use the
//! generator's stream feature (`set_stream(chain_index)`) so chains with the
//! same seed and distinct stream ids draw from provably non-overlapping
//! streams. Per iteration the draw order is: `2k` theta uniforms, four
//! `alpha` columns of `k` exponentials each (in `(z, t)` storage order), one
//! acceptance uniform, and - only on acceptance - two `omega` columns and
//! the `nu` column.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::effects_of_draw;
use crate::model::{psi, rho, ContingencyTable, ParameterDraw};
use crate::{Error, Result};

/// Prior family: `Dirichlet(1_K)` for every `alpha`/`omega`/`nu` column and
/// `Beta(1,1)` for every `theta` entry. The unit concentrations are pinned;
/// only the latent cardinality `k` varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PriorSpec {
    pub k: usize,
}

impl PriorSpec {
    pub fn new(k: usize) -> Result<PriorSpec> {
        if k < 2 {
            return Err(Error::InvalidConfig(format!(
                "latent cardinality k = {k}, need k >= 2"
            )));
        }
        Ok(PriorSpec { k })
    }
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec { k: 2 }
    }
}

/// Iteration counts and seed for one sampler run.
///
/// `kept_count = (total - burn_in) / thin` draws are retained: the defaults
/// give `(2e8 - 5e4) / 5e4 = 3999` (the exact count is exposed rather than
/// rounded up).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub burn_in: u64,
    pub total: u64,
    pub thin: u64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            burn_in: 50_000,
            total: 200_000_000,
            thin: 50_000,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total < self.burn_in {
            return Err(Error::InvalidConfig(format!(
                "total {} < burn_in {}",
                self.total, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of draws the run will keep.
    pub fn kept_count(&self) -> u64 {
        (self.total - self.burn_in) / self.thin
    }
}

/// A retained draw, augmented with its outcome tables.
#[derive(Debug, Clone, PartialEq)]
pub struct KeptDraw {
    pub params: ParameterDraw,
    /// P(Y=1|Z=z,T=t) on the observation plate, `[z][t]`.
    pub psi: [[f64; 2]; 2],
    /// P(Y=1|Z=z,T=t) on the intervention plate, `[z][t]`.
    pub rho: [[f64; 2]; 2],
}

/// Ordered kept draws plus run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub draws: Vec<KeptDraw>,
    pub accepted: u64,
    pub proposed: u64,
    pub config: RunConfig,
}

impl Chain {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Draws one parameter set from the prior.
pub fn sample_prior<R: Rng + ?Sized>(spec: &PriorSpec, rng: &mut R) -> ParameterDraw {
    let k = spec.k;
    let mut theta = vec![0.0; 2 * k];
    let mut alpha = vec![0.0; 4 * k];
    let mut omega = vec![0.0; 2 * k];
    let mut nu = [0.0; 2];
    for v in theta.iter_mut() {
        *v = rng.random::<f64>();
    }
    for col in alpha.chunks_mut(k) {
        sample_unit_dirichlet(rng, col);
    }
    for col in omega.chunks_mut(k) {
        sample_unit_dirichlet(rng, col);
    }
    sample_unit_dirichlet(rng, &mut nu);
    ParameterDraw {
        k,
        theta,
        alpha,
        omega,
        nu,
    }
}

/// Fills `col` with one `Dirichlet(1_K)` draw: `K` unit-rate exponentials
/// normalized onto the simplex.
fn sample_unit_dirichlet<R: Rng + ?Sized>(rng: &mut R, col: &mut [f64]) {
    let mut sum = 0.0;
    for v in col.iter_mut() {
        // -ln(1 - u) with u in [0, 1) keeps the argument strictly positive.
        let e = -(-rng.random::<f64>()).ln_1p();
        *v = e;
        sum += e;
    }
    if sum > 0.0 {
        for v in col.iter_mut() {
            *v /= sum;
        }
    } else {
        // all exponentials underflowed to zero; fall back to uniform
        let uniform = 1.0 / col.len() as f64;
        col.fill(uniform);
    }
}

/// Per-cell counts as floats, indexed `[z][t]`.
#[derive(Debug, Clone, Copy)]
struct CellCounts {
    n1: [[f64; 2]; 2],
    n0: [[f64; 2]; 2],
}

impl CellCounts {
    fn from_table(tab: &ContingencyTable) -> CellCounts {
        let mut n1 = [[0.0; 2]; 2];
        let mut n0 = [[0.0; 2]; 2];
        for z in 0..2 {
            for t in 0..2 {
                n1[z][t] = tab.count(t, z, 1) as f64;
                n0[z][t] = tab.count(t, z, 0) as f64;
            }
        }
        CellCounts { n1, n0 }
    }
}

fn log_likelihood_cells(psi: &[[f64; 2]; 2], cells: &CellCounts) -> f64 {
    let mut acc = 0.0;
    for z in 0..2 {
        for t in 0..2 {
            let p = psi[z][t];
            let n1 = cells.n1[z][t];
            if n1 > 0.0 {
                acc += n1 * p.ln();
            }
            let n0 = cells.n0[z][t];
            if n0 > 0.0 {
                acc += n0 * (1.0 - p).ln();
            }
        }
    }
    acc
}

/// Aggregated Bernoulli log-likelihood
/// `sum_{t,z} c[t,z,1] ln psi[z][t] + c[t,z,0] ln(1 - psi[z][t])`.
///
/// Returns `-inf` (not an error) when a degenerate `psi` entry faces a
/// contradicting positive count; an empty table gives 0.
pub fn log_likelihood(psi: &[[f64; 2]; 2], tab: &ContingencyTable) -> f64 {
    log_likelihood_cells(psi, &CellCounts::from_table(tab))
}

struct State {
    theta: Vec<f64>,
    alpha: Vec<f64>,
    omega: Vec<f64>,
    nu: [f64; 2],
    psi: [[f64; 2]; 2],
    log_l: f64,
}

impl State {
    fn to_kept(&self, k: usize) -> KeptDraw {
        let params = ParameterDraw {
            k,
            theta: self.theta.clone(),
            alpha: self.alpha.clone(),
            omega: self.omega.clone(),
            nu: self.nu,
        };
        let rho = rho(&self.theta, &self.omega, k);
        KeptDraw {
            params,
            psi: self.psi,
            rho,
        }
    }
}

/// Runs the prior-proposal independence sampler on stream 0.
pub fn independence_sampler(
    tab: &ContingencyTable,
    spec: &PriorSpec,
    config: &RunConfig,
) -> Result<Chain> {
    independence_sampler_stream(tab, spec, config, 0)
}

/// Runs one chain on an explicit RNG stream id. Chains sharing a seed but
/// using distinct stream ids are independent; results are deterministic in
/// `(tab, spec, config, stream)`.
pub fn independence_sampler_stream(
    tab: &ContingencyTable,
    spec: &PriorSpec,
    config: &RunConfig,
    stream: u64,
) -> Result<Chain> {
    config.validate()?;
    let spec = PriorSpec::new(spec.k)?;
    let k = spec.k;
    let cells = CellCounts::from_table(tab);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);

    let init = sample_prior(&spec, &mut rng);
    let psi0 = init.psi();
    let mut cur = State {
        log_l: log_likelihood_cells(&psi0, &cells),
        psi: psi0,
        theta: init.theta,
        alpha: init.alpha,
        omega: init.omega,
        nu: init.nu,
    };
    let mut prop = State {
        theta: vec![0.0; 2 * k],
        alpha: vec![0.0; 4 * k],
        omega: vec![0.0; 2 * k],
        nu: [0.5; 2],
        psi: [[0.0; 2]; 2],
        log_l: f64::NEG_INFINITY,
    };

    let mut draws = Vec::with_capacity(config.kept_count() as usize);
    let mut accepted = 0u64;
    let mut next_keep = if config.kept_count() > 0 {
        config.burn_in + config.thin
    } else {
        u64::MAX
    };

    for iter in 1..=config.total {
        for v in prop.theta.iter_mut() {
            *v = rng.random::<f64>();
        }
        for col in prop.alpha.chunks_mut(k) {
            sample_unit_dirichlet(&mut rng, col);
        }
        prop.psi = psi(&prop.theta, &prop.alpha, k);
        prop.log_l = log_likelihood_cells(&prop.psi, &cells);

        let log_u = rng.random::<f64>().ln();
        // A -inf (or NaN) proposal never passes; a higher likelihood always
        // does because log_u < 0.
        let accept = if !(prop.log_l > f64::NEG_INFINITY) {
            false
        } else if cur.log_l == f64::NEG_INFINITY {
            true
        } else {
            prop.log_l - cur.log_l > log_u
        };
        if accept {
            for col in prop.omega.chunks_mut(k) {
                sample_unit_dirichlet(&mut rng, col);
            }
            sample_unit_dirichlet(&mut rng, &mut prop.nu);
            std::mem::swap(&mut cur, &mut prop);
            accepted += 1;
        }
        if iter == next_keep {
            draws.push(cur.to_kept(k));
            next_keep = next_keep.saturating_add(config.thin);
        }
    }

    Ok(Chain {
        draws,
        accepted,
        proposed: config.total,
        config: *config,
    })
}

/// Prior draws with likelihood weights: the importance-sampling counterpart
/// of the independence sampler, used as its oracle.
#[derive(Debug, Clone)]
pub struct ImportanceSample {
    pub draws: Vec<ParameterDraw>,
    /// Unnormalized log-weights (the log-likelihoods).
    pub log_weights: Vec<f64>,
    weights: Vec<f64>,
    ess: f64,
}

impl ImportanceSample {
    /// Normalized weights summing to one.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Effective sample size `1 / sum w_i^2`.
    pub fn ess(&self) -> f64 {
        self.ess
    }

    /// Weighted posterior mean of a scalar function of the draw.
    pub fn posterior_mean(&self, f: impl Fn(&ParameterDraw) -> f64) -> f64 {
        self.draws
            .iter()
            .zip(&self.weights)
            .map(|(d, w)| w * f(d))
            .sum()
    }

    /// Weighted mean plus its Monte-Carlo standard error (variance scaled by
    /// the effective sample size).
    pub fn posterior_mean_and_se(&self, f: impl Fn(&ParameterDraw) -> f64) -> (f64, f64) {
        let mean = self.posterior_mean(&f);
        let var: f64 = self
            .draws
            .iter()
            .zip(&self.weights)
            .map(|(d, w)| {
                let dev = f(d) - mean;
                w * dev * dev
            })
            .sum();
        (mean, (var / self.ess).sqrt())
    }
}

/// Draws `n` prior samples and weights them by likelihood. Errors when every
/// weight underflows to zero.
pub fn importance_sampler(
    tab: &ContingencyTable,
    spec: &PriorSpec,
    n: usize,
    seed: u64,
) -> Result<ImportanceSample> {
    if n == 0 {
        return Err(Error::InvalidConfig("importance sample size 0".into()));
    }
    let spec = PriorSpec::new(spec.k)?;
    let cells = CellCounts::from_table(tab);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(n);
    let mut log_weights = Vec::with_capacity(n);
    for _ in 0..n {
        let d = sample_prior(&spec, &mut rng);
        let lw = log_likelihood_cells(&d.psi(), &cells);
        draws.push(d);
        log_weights.push(lw);
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > f64::NEG_INFINITY) {
        return Err(Error::DegenerateWeights(n));
    }
    let mut weights: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= sum;
    }
    let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    Ok(ImportanceSample {
        draws,
        log_weights,
        weights,
        ess,
    })
}

/// One estimated posterior expectation from the streaming oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantityEstimate {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// Monte-Carlo standard error of `mean` (sd scaled by sqrt(ESS)).
    pub se: f64,
}

/// Constant-memory importance-sampling estimates of the effect quantities
/// (see [`crate::analysis::effect_quantities`] for the quantity list).
#[derive(Debug, Clone)]
pub struct PosteriorEstimates {
    pub n: usize,
    pub ess: f64,
    pub entries: Vec<QuantityEstimate>,
}

impl PosteriorEstimates {
    pub fn get(&self, name: &str) -> Option<&QuantityEstimate> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Streams `n` weighted prior draws through online moment accumulators,
/// never materializing the draw set. Weights are kept relative to the
/// running maximum log-weight, so no two-pass normalization is needed.
pub fn importance_estimates(
    tab: &ContingencyTable,
    spec: &PriorSpec,
    n: usize,
    seed: u64,
) -> Result<PosteriorEstimates> {
    if n == 0 {
        return Err(Error::InvalidConfig("importance sample size 0".into()));
    }
    let spec = PriorSpec::new(spec.k)?;
    let cells = CellCounts::from_table(tab);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let names = crate::analysis::effect_quantity_names(spec.k);
    let q = names.len();
    let mut shift = f64::NEG_INFINITY; // current reference log-weight
    let mut s_w = 0.0;
    let mut s_w2 = 0.0;
    let mut s_f = vec![0.0; q];
    let mut s_f2 = vec![0.0; q];
    let mut values = vec![0.0; q];

    for _ in 0..n {
        let d = sample_prior(&spec, &mut rng);
        let lw = log_likelihood_cells(&d.psi(), &cells);
        if !(lw > f64::NEG_INFINITY) {
            continue; // zero weight
        }
        if lw > shift {
            // rescale accumulated sums to the new reference
            let scale = (shift - lw).exp(); // < 1; 0 on the first draw
            s_w *= scale;
            s_w2 *= scale * scale;
            for v in s_f.iter_mut().chain(s_f2.iter_mut()) {
                *v *= scale;
            }
            shift = lw;
        }
        let w = (lw - shift).exp();
        crate::analysis::effect_quantity_values(&d, &mut values);
        s_w += w;
        s_w2 += w * w;
        for (i, &v) in values.iter().enumerate() {
            s_f[i] += w * v;
            s_f2[i] += w * v * v;
        }
    }
    if s_w <= 0.0 {
        return Err(Error::DegenerateWeights(n));
    }
    let ess = s_w * s_w / s_w2;
    let entries = names
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let mean = s_f[i] / s_w;
            let var = (s_f2[i] / s_w - mean * mean).max(0.0);
            let sd = var.sqrt();
            QuantityEstimate {
                name,
                mean,
                sd,
                se: sd / ess.sqrt(),
            }
        })
        .collect();
    Ok(PosteriorEstimates { n, ess, entries })
}

/// Conjugate Dirichlet posterior over `z`: concentration `1 + sum_ty c[t,z,y]`
/// per component (the `nu` margin updates independently of the sampler).
pub fn infer_nu(tab: &ContingencyTable) -> [f64; 2] {
    [
        1.0 + tab.z_total(0) as f64,
        1.0 + tab.z_total(1) as f64,
    ]
}

/// Column names of the chain CSV, in emission order.
pub fn chain_columns(k: usize) -> Vec<String> {
    let mut cols = Vec::new();
    for t in 0..2 {
        for w in 0..k {
            cols.push(format!("theta_t{t}_w{w}"));
        }
    }
    for z in 0..2 {
        for t in 0..2 {
            for w in 0..k {
                cols.push(format!("alpha_w{w}_z{z}_t{t}"));
            }
        }
    }
    for z in 0..2 {
        for w in 0..k {
            cols.push(format!("omega_w{w}_z{z}"));
        }
    }
    cols.push("nu_z0".into());
    cols.push("nu_z1".into());
    for z in 0..2 {
        for t in 0..2 {
            cols.push(format!("psi_z{z}_t{t}"));
        }
    }
    for z in 0..2 {
        for t in 0..2 {
            cols.push(format!("rho_z{z}_t{t}"));
        }
    }
    for w in 0..k {
        cols.push(format!("d_w{w}"));
    }
    cols.push("d_z0".into());
    cols.push("d_z1".into());
    cols.push("ate_half_sum".into());
    cols.push("ate_marginal".into());
    cols
}

/// Numeric row matching [`chain_columns`] for one kept draw.
pub fn chain_row(kept: &KeptDraw) -> Vec<f64> {
    let d = &kept.params;
    let k = d.k;
    let effects = effects_of_draw(d);
    let mut row = Vec::with_capacity(chain_columns(k).len());
    row.extend_from_slice(&d.theta);
    row.extend_from_slice(&d.alpha);
    row.extend_from_slice(&d.omega);
    row.extend_from_slice(&d.nu);
    for z in 0..2 {
        for t in 0..2 {
            row.push(kept.psi[z][t]);
        }
    }
    for z in 0..2 {
        for t in 0..2 {
            row.push(kept.rho[z][t]);
        }
    }
    row.extend_from_slice(&effects.d_w);
    row.extend_from_slice(&effects.d_z);
    row.push(effects.ate_half_sum);
    row.push(effects.ate_marginal);
    row
}

impl Chain {
    /// Serializes kept draws as CSV. Floats use the shortest round-trip
    /// representation, so parsing recovers them bit-exactly.
    pub fn to_csv(&self) -> String {
        let k = self.draws.first().map_or(2, |d| d.params.k);
        let mut out = chain_columns(k).join(",");
        out.push('\n');
        let mut buf = String::new();
        for kept in &self.draws {
            buf.clear();
            for (i, v) in chain_row(kept).iter().enumerate() {
                if i > 0 {
                    buf.push(',');
                }
                buf.push_str(&format!("{v}"));
            }
            out.push_str(&buf);
            out.push('\n');
        }
        out
    }
}

/// Parses a chain CSV back into kept draws. The latent cardinality is
/// inferred from the header; the stored `psi`/`rho` columns are taken as-is
/// (they round-trip bit-exactly) and parameter invariants are re-validated.
pub fn read_chain_draws(text: &str) -> Result<Vec<KeptDraw>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty chain file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let k = cols
        .iter()
        .filter(|c| c.starts_with("theta_t0_w"))
        .count();
    if k < 2 {
        return Err(Error::Parse(format!(
            "chain header describes k = {k}; need k >= 2"
        )));
    }
    let expected = chain_columns(k);
    if cols != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::Parse("chain header does not match the column contract".into()));
    }
    let mut draws = Vec::new();
    for (lineno, raw) in lines.enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut values = Vec::with_capacity(expected.len());
        for field in line.split(',') {
            let v: f64 = field.parse().map_err(|_| {
                Error::Parse(format!("line {}: bad float `{field}`", lineno + 2))
            })?;
            values.push(v);
        }
        if values.len() != expected.len() {
            return Err(Error::Parse(format!(
                "line {}: expected {} fields, got {}",
                lineno + 2,
                expected.len(),
                values.len()
            )));
        }
        let mut it = values.into_iter();
        let theta: Vec<f64> = it.by_ref().take(2 * k).collect();
        let alpha: Vec<f64> = it.by_ref().take(4 * k).collect();
        let omega: Vec<f64> = it.by_ref().take(2 * k).collect();
        let nu_vec: Vec<f64> = it.by_ref().take(2).collect();
        let mut psi = [[0.0; 2]; 2];
        let mut rho = [[0.0; 2]; 2];
        for z in 0..2 {
            for t in 0..2 {
                psi[z][t] = it.next().expect("length checked");
            }
        }
        for z in 0..2 {
            for t in 0..2 {
                rho[z][t] = it.next().expect("length checked");
            }
        }
        let params = ParameterDraw {
            k,
            theta,
            alpha,
            omega,
            nu: [nu_vec[0], nu_vec[1]],
        };
        params.validate()?;
        draws.push(KeptDraw { params, psi, rho });
    }
    Ok(draws)
}
