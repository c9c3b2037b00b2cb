//! Euler–Maruyama simulation of the diffusion generated by the model, with
//! hitting, last-visit and explosion bookkeeping.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::McError;
use crate::expr::Expr;
use crate::model::ModelSpec;

/// Itô coefficients: b_i = Σ_j ∂_j(φ a_ji)/φ + B_i and σσᵀ = 2ã.
#[derive(Debug, Clone)]
pub struct SdeCoefficients {
    pub dim: usize,
    phi: Expr,
    /// Σ_j ∂_j(φ a_ji) per component
    div_phi_a: Vec<Vec<Expr>>,
    b: Vec<Expr>,
    a: Vec<Expr>,
    domain: Option<ModelSpec>,
    singular: Vec<Vec<f64>>,
    pub exclusion_radius: f64,
    constant_sigma: Option<DMatrix<f64>>,
}

impl SdeCoefficients {
    /// Constant-coefficient SDE dX = b dt + σ dW; used for reference runs.
    pub fn constant(b: &[f64], sigma: &[f64]) -> SdeCoefficients {
        let d = b.len();
        let s = DMatrix::from_row_slice(d, d, sigma);
        let a2 = &s * s.transpose();
        SdeCoefficients {
            dim: d,
            phi: Expr::constant(1.0, d),
            div_phi_a: vec![Vec::new(); d],
            b: b.iter().map(|v| Expr::constant(*v, d)).collect(),
            a: a2.transpose().iter().map(|v| Expr::constant(v / 2.0, d)).collect(),
            domain: None,
            singular: Vec::new(),
            exclusion_radius: 1e-3,
            constant_sigma: Some(s),
        }
    }

    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        let phi = self.phi.eval(x);
        for i in 0..self.dim {
            let s: f64 = self.div_phi_a[i].iter().map(|e| e.eval(x)).sum();
            out[i] = s / phi + self.b[i].eval(x);
        }
    }

    /// 2ã(x), row-major
    pub fn diffusion(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_fn(d, d, |i, j| self.a[i * d + j].eval(x) + self.a[j * d + i].eval(x))
    }

    /// Lower Cholesky factor of 2ã(x).
    pub fn sigma(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        if let Some(s) = &self.constant_sigma {
            return Some(s.clone());
        }
        nalgebra::Cholesky::new(self.diffusion(x)).map(|c| c.l())
    }

    pub fn valid(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.is_finite())
            && self.domain.as_ref().is_none_or(|m| m.in_domain(x))
            && self
                .singular
                .iter()
                .all(|s| s.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= self.exclusion_radius)
    }
}

/// Requires the smoothness flags; differentiates φ·A symbolically.
pub fn derive_sde(model: &ModelSpec) -> Result<SdeCoefficients, McError> {
    let f = model.flags();
    if !f.smooth_phi || !f.smooth_a {
        return Err(McError::NotSmoothEnough(format!(
            "{} needs smooth phi and A (smooth_phi={}, smooth_a={})",
            model.name(),
            f.smooth_phi,
            f.smooth_a
        )));
    }
    let d = model.dim;
    let constant_sigma = if model.a.iter().all(|e| e.as_const().is_some()) {
        let m = DMatrix::from_fn(d, d, |i, j| {
            model.a[i * d + j].as_const().unwrap() + model.a[j * d + i].as_const().unwrap()
        });
        nalgebra::Cholesky::new(m).map(|c| c.l())
    } else {
        None
    };
    let div_phi_a = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| model.phi.times(&model.a[j * d + i]).diff(j))
                .filter(|e| e.as_const() != Some(0.0))
                .collect()
        })
        .collect();
    Ok(SdeCoefficients {
        dim: d,
        phi: model.phi.clone(),
        div_phi_a,
        b: model.b.clone(),
        a: model.a.clone(),
        domain: Some(model.clone()),
        singular: model.config.singularities.clone(),
        exclusion_radius: 1e-3,
        constant_sigma,
    })
}

/// Closed ball used as the target set B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    /// Signed distance to the sphere; negative inside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        self.center.iter().zip(x).map(|(c, v)| (v - c).powi(2)).sum::<f64>().sqrt() - self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub x0: Vec<f64>,
    pub horizon: f64,
    /// Smallest step; steps grow away from the target.
    pub dt: f64,
    /// Largest step.
    pub dt_max: f64,
    /// Step is at most eta·dist²/λ and eta·dist/|b| where dist is the
    /// distance to the target sphere; zero gives fixed steps.
    pub eta: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub blowup_radius: f64,
    pub target: Ball,
    /// Distance from the target center past which a path counts as exited.
    pub exit_radius: f64,
    /// Brownian-bridge crossing test between steps that both end outside.
    pub bridge: bool,
    /// Bucket ends for explosion counts.
    pub buckets: Vec<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            x0: vec![0.0],
            horizon: 10.0,
            dt: 1e-3,
            dt_max: 1.0,
            eta: 0.01,
            n_paths: 10_000,
            seed: 0,
            blowup_radius: 1e6,
            target: Ball {
                center: vec![0.0],
                radius: 1.0,
            },
            exit_radius: 100.0,
            bridge: true,
            buckets: Vec::new(),
        }
    }
}

/// Outcome of one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathRecord {
    pub first_hit: Option<f64>,
    pub last_visit: Option<f64>,
    pub exploded_at: Option<f64>,
    /// left the exit radius after its last visit and did not come back
    pub exited: bool,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathEnsemble {
    pub config: SimConfig,
    pub paths: Vec<PathRecord>,
    /// final positions, one per path (empty for exploded paths)
    #[serde(skip)]
    pub finals: Vec<Vec<f64>>,
}

fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index as u64);
    r
}

fn simulate_path(sde: &SdeCoefficients, cfg: &SimConfig, index: usize) -> (PathRecord, Vec<f64>) {
    let d = sde.dim;
    let mut rng = path_rng(cfg.seed, index);
    let mut x = cfg.x0.clone();
    let mut t = 0.0;
    let mut b = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut xc = vec![0.0; d];
    let const_a2 = sde.constant_sigma.as_ref().map(|s| s * s.transpose());
    let dt_max = cfg.dt_max.max(cfg.dt);
    let mut rec = PathRecord {
        first_hit: None,
        last_visit: None,
        exploded_at: None,
        exited: false,
        steps: 0,
    };
    let mut dist = cfg.target.signed_distance(&x);
    let mut outside_exit = false;
    if dist <= 0.0 {
        rec.first_hit = Some(0.0);
        rec.last_visit = Some(0.0);
    }
    let explode = |x: &[f64]| !sde.valid(x) || x.iter().map(|v| v * v).sum::<f64>().sqrt() > cfg.blowup_radius;
    if explode(&x) {
        rec.exploded_at = Some(0.0);
        return (rec, Vec::new());
    }
    while t < cfg.horizon {
        sde.drift(&x, &mut b);
        let local;
        let sig = match &sde.constant_sigma {
            Some(s) => s,
            None => match sde.sigma(&x) {
                Some(s) => {
                    local = s;
                    &local
                }
                None => {
                    rec.exploded_at = Some(t);
                    return (rec, Vec::new());
                }
            },
        };
        let lam = (0..d).map(|i| (0..d).map(|j| sig[(i, j)].powi(2)).sum::<f64>()).sum::<f64>();
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut h = cfg.dt;
        if cfg.eta > 0.0 {
            let a = dist.abs();
            let mut cap = dt_max;
            if lam > 0.0 {
                cap = cap.min(cfg.eta * a * a / lam);
            }
            if bn > 0.0 {
                cap = cap.min(cfg.eta * a.max(1.0) / bn);
            }
            h = h.max(cap);
        }
        h = h.min(cfg.horizon - t);
        for zi in z.iter_mut() {
            *zi = rng.sample::<f64, _>(StandardNormal);
        }
        let prev = dist;
        let sh = h.sqrt();
        for i in 0..d {
            let dw: f64 = (0..d).map(|j| sig[(i, j)] * z[j]).sum();
            x[i] += b[i] * h + dw * sh;
        }
        t += h;
        rec.steps += 1;
        if explode(&x) {
            rec.exploded_at = Some(t);
            return (rec, Vec::new());
        }
        dist = cfg.target.signed_distance(&x);
        let mut visited = dist <= 0.0;
        if !visited && cfg.bridge && prev > 0.0 {
            // crossing probability of a Brownian bridge over the tangent plane
            for i in 0..d {
                xc[i] = x[i] - cfg.target.center[i];
            }
            let r = xc.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            let local_a2;
            let a2 = match &const_a2 {
                Some(m) => m,
                None => {
                    local_a2 = sde.diffusion(&x);
                    &local_a2
                }
            };
            let mut s2 = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s2 += xc[i] * a2[(i, j)] * xc[j];
                }
            }
            s2 /= r * r;
            let u: f64 = rng.gen();
            if s2 > 0.0 && u < (-2.0 * prev * dist / (s2 * h)).exp() {
                visited = true;
            }
        }
        if visited {
            rec.first_hit.get_or_insert(t);
            rec.last_visit = Some(t);
            outside_exit = false;
        } else if dist + cfg.target.radius > cfg.exit_radius {
            outside_exit = true;
        }
    }
    rec.exited = outside_exit;
    (rec, x)
}

/// Paths are independent: path k draws from ChaCha8 stream k of `seed`, so
/// results do not depend on the thread count.
pub fn simulate(sde: &SdeCoefficients, cfg: &SimConfig) -> Result<PathEnsemble, McError> {
    if cfg.x0.len() != sde.dim || cfg.target.center.len() != sde.dim {
        return Err(McError::InvalidConfig(format!("x0 and target center need dimension {}", sde.dim)));
    }
    if !(cfg.dt > 0.0) || !(cfg.horizon > 0.0) || !(cfg.eta >= 0.0) || !(cfg.target.radius >= 0.0) {
        return Err(McError::InvalidConfig("dt, horizon must be positive; eta, radius nonnegative".into()));
    }
    if !sde.valid(&cfg.x0) {
        return Err(McError::InvalidConfig(format!("x0 {:?} outside the validity region", cfg.x0)));
    }
    let out: Vec<(PathRecord, Vec<f64>)> = (0..cfg.n_paths).into_par_iter().map(|k| simulate_path(sde, cfg, k)).collect();
    let (paths, finals) = out.into_iter().unzip();
    Ok(PathEnsemble {
        config: cfg.clone(),
        paths,
        finals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Hint {
    RecurrentConsistent,
    TransientConsistent,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderPoint {
    pub t: f64,
    pub hits: usize,
    pub n: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurrenceStats {
    pub ladder: Vec<LadderPoint>,
    pub exited_fraction: f64,
    pub hint: Hint,
    /// start-point caveat: the analytic statements hold μ-a.e.
    pub note: String,
}

/// Wilson score interval at 3 standard deviations.
fn wilson(hits: usize, n: usize) -> (f64, f64) {
    let z = 3.0;
    let nf = n as f64;
    let p = hits as f64 / nf;
    let den = 1.0 + z * z / nf;
    let mid = (p + z * z / (2.0 * nf)) / den;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / den;
    ((mid - half).max(0.0), (mid + half).min(1.0))
}

const MIN_PATHS: usize = 100;

/// p̂(t) = fraction of paths visiting the target during [t, T].
pub fn recurrence_statistics(ens: &PathEnsemble, ladder: &[f64]) -> Result<RecurrenceStats, McError> {
    let n = ens.paths.len();
    if n < MIN_PATHS {
        return Err(McError::InsufficientPaths(n));
    }
    let points: Vec<LadderPoint> = ladder
        .iter()
        .map(|&t| {
            let hits = ens.paths.iter().filter(|p| p.last_visit.is_some_and(|lv| lv >= t)).count();
            let p = hits as f64 / n as f64;
            let (lo, hi) = wilson(hits, n);
            LadderPoint {
                t,
                hits,
                n,
                p_hat: p,
                ci_low: lo,
                ci_high: hi,
                std_err: (p * (1.0 - p) / n as f64).sqrt(),
            }
        })
        .collect();
    let hint = match (points.first(), points.last()) {
        (Some(f), Some(l)) if points.len() >= 2 => {
            let se = (f.std_err.powi(2) + l.std_err.powi(2)).sqrt().max(1.0 / n as f64);
            if l.ci_high >= 0.95 {
                Hint::RecurrentConsistent
            } else if f.p_hat - l.p_hat > 3.0 * se {
                Hint::TransientConsistent
            } else {
                Hint::Undetermined
            }
        }
        _ => Hint::Undetermined,
    };
    Ok(RecurrenceStats {
        ladder: points,
        exited_fraction: ens.paths.iter().filter(|p| p.exited).count() as f64 / n as f64,
        hint,
        note: "single start point: agreement with a.e. statements assumes strong Feller".into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LifetimeStats {
    /// (bucket end, exploded fraction by then)
    pub buckets: Vec<(f64, f64)>,
    pub exploded_fraction: f64,
    pub conservative_consistent: bool,
}

pub fn lifetime_statistics(ens: &PathEnsemble) -> LifetimeStats {
    let n = ens.paths.len().max(1) as f64;
    let mut ends = ens.config.buckets.clone();
    if ends.is_empty() {
        ends = (1..=10).map(|k| ens.config.horizon * k as f64 / 10.0).collect();
    }
    let buckets: Vec<(f64, f64)> = ends
        .iter()
        .map(|&e| (e, ens.paths.iter().filter(|p| p.exploded_at.is_some_and(|t| t <= e)).count() as f64 / n))
        .collect();
    let exploded_fraction = ens.paths.iter().filter(|p| p.exploded_at.is_some()).count() as f64 / n;
    LifetimeStats {
        buckets,
        exploded_fraction,
        conservative_consistent: exploded_fraction == 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalvingCheck {
    /// largest |Δp̂| / combined standard error over the ladder and the
    /// exploded fraction
    pub max_z: f64,
    pub flagged: bool,
}

/// Re-runs with dt/2 on the same seeds and compares every reported fraction.
pub fn step_halving_check(sde: &SdeCoefficients, cfg: &SimConfig, ladder: &[f64]) -> Result<HalvingCheck, McError> {
    let a = simulate(sde, cfg)?;
    let mut half = cfg.clone();
    half.dt /= 2.0;
    half.eta /= 2.0;
    let b = simulate(sde, &half)?;
    let (ra, rb) = (recurrence_statistics(&a, ladder)?, recurrence_statistics(&b, ladder)?);
    let n = a.paths.len() as f64;
    let z = |p: f64, q: f64| {
        let se = ((p * (1.0 - p) + q * (1.0 - q)) / n).sqrt().max(1.0 / n);
        (p - q).abs() / se
    };
    let mut max_z = 0.0f64;
    for (x, y) in ra.ladder.iter().zip(&rb.ladder) {
        max_z = max_z.max(z(x.p_hat, y.p_hat));
    }
    max_z = max_z.max(z(lifetime_statistics(&a).exploded_fraction, lifetime_statistics(&b).exploded_fraction));
    Ok(HalvingCheck { max_z, flagged: max_z > 3.0 })
}

/// CSV with columns t, hits, n, p_hat, ci_low, ci_high.
pub fn ensemble_csv(stats: &RecurrenceStats) -> String {
    let mut s = String::from("t,hits,n,p_hat,ci_low,ci_high\n");
    for p in &stats.ladder {
        s.push_str(&format!("{},{},{},{},{},{}\n", p.t, p.hits, p.n, p.p_hat, p.ci_low, p.ci_high));
    }
    s
}
