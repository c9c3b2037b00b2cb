use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use petgraph::visit::{Bfs, Reversed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{GeneratorMatrix, GridSpec};
use crate::error::LabError;
use crate::linalg::{expm_action, expm_dense, Csr, Factor, DENSE_EXPM_MAX};
use crate::model::ModelSpec;

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Row sums below this (relative to the diagonal) count as killing.
fn killing_tol(g: &GeneratorMatrix, i: usize) -> f64 {
    1e-12 * g.l.get(i, i).abs().max(1e-300)
}

fn killing_rate(g: &GeneratorMatrix) -> Vec<f64> {
    g.l.row_sums()
        .into_iter()
        .enumerate()
        .map(|(i, s)| if -s > killing_tol(g, i) { -s } else { 0.0 })
        .collect()
}

/// (α − L)u = f
pub fn resolvent(g: &GeneratorMatrix, alpha: f64, f: &[f64]) -> Result<Vec<f64>, LabError> {
    if !(alpha > 0.0) {
        return Err(LabError::InvalidGrid(format!("alpha must be positive (got {alpha})")));
    }
    g.shifted_factor(alpha, None)?.solve(f).map_err(|_| LabError::SingularSystem)
}

/// ‖G_α f − G_β f + (α−β) G_α G_β f‖∞ / ‖f‖∞
pub fn resolvent_identity_residual(g: &GeneratorMatrix, alpha: f64, beta: f64, f: &[f64]) -> Result<f64, LabError> {
    let ga = g.shifted_factor(alpha, None)?;
    let gb = g.shifted_factor(beta, None)?;
    let solve = |fac: &Factor, v: &[f64]| fac.solve(v).map_err(|_| LabError::SingularSystem);
    let uf = solve(&ga, f)?;
    let vf = solve(&gb, f)?;
    let uvf = solve(&ga, &vf)?;
    let r: Vec<f64> = (0..g.n).map(|i| uf[i] - vf[i] + (alpha - beta) * uvf[i]).collect();
    Ok(sup(&r) / sup(f).max(1e-300))
}

/// Worst violation of 0 ≤ αG_α f ≤ 1 for the given 0 ≤ f ≤ 1, for L and
/// for its μ-adjoint. Zero means both bounds hold.
pub fn sub_markov_violation(g: &GeneratorMatrix, alpha: f64, f: &[f64]) -> Result<f64, LabError> {
    let mut worst = 0.0f64;
    for l in [g.l.clone(), g.adjoint()] {
        let a = l.axpby(-1.0, &Csr::identity(g.n), alpha);
        let u = Factor::new(&a).and_then(|fac| fac.solve(f)).map_err(|_| LabError::SingularSystem)?;
        for v in u {
            let au = alpha * v;
            worst = worst.max(-au).max(au - 1.0);
        }
    }
    Ok(worst.max(0.0))
}

/// Falsifiable evidence that G_α f blows up like 1/α as α ↓ 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceCertificate {
    pub alphas: Vec<f64>,
    /// max over divergent states of G_α f, per α
    pub potential: Vec<f64>,
    /// log-log slope of the last five ladder points; −1 for Θ(1/α)
    pub slope: f64,
    /// αG_α f at the smallest α
    pub limit: Vec<f64>,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Finite { values: Vec<f64> },
    /// Infinite entries are +∞; the rest are exact finite values.
    Divergent { values: Vec<f64>, certificate: DivergenceCertificate },
}

impl Potential {
    pub fn values(&self) -> &[f64] {
        match self {
            Potential::Finite { values } | Potential::Divergent { values, .. } => values,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Potential::Finite { .. })
    }
}

fn transition_graph(g: &GeneratorMatrix) -> DiGraph<(), ()> {
    let mut gr = DiGraph::<(), ()>::with_capacity(g.n, g.l.nnz());
    for _ in 0..g.n {
        gr.add_node(());
    }
    for (i, j, v) in g.l.triplets() {
        if i != j && v > 0.0 {
            gr.add_edge((i as u32).into(), (j as u32).into(), ());
        }
    }
    gr
}

/// Recurrent classes: closed communicating classes without killing.
fn recurrent_classes(g: &GeneratorMatrix, gr: &DiGraph<(), ()>) -> (Vec<Vec<usize>>, Vec<Option<usize>>) {
    let kill = killing_rate(g);
    let sccs = tarjan_scc(gr);
    let mut class_of = vec![usize::MAX; g.n];
    for (c, s) in sccs.iter().enumerate() {
        for v in s {
            class_of[v.index()] = c;
        }
    }
    let mut rec = Vec::new();
    let mut rec_of = vec![None; g.n];
    for (c, s) in sccs.iter().enumerate() {
        let closed = s.iter().all(|v| gr.neighbors(*v).all(|w| class_of[w.index()] == c));
        if closed && s.iter().all(|v| kill[v.index()] == 0.0) {
            let mut members: Vec<usize> = s.iter().map(|v| v.index()).collect();
            members.sort_unstable();
            for &m in &members {
                rec_of[m] = Some(rec.len());
            }
            rec.push(members);
        }
    }
    (rec, rec_of)
}

/// Gf = lim_{α↓0} G_α f for f ≥ 0. States that can reach a recurrent class
/// meeting supp f get +∞; the others solve −L u = f on the finite part.
pub fn potential_dichotomy(g: &GeneratorMatrix, f: &[f64]) -> Result<Potential, LabError> {
    if f.len() != g.n || f.iter().any(|v| !(*v >= 0.0)) {
        return Err(LabError::InvalidGrid("potential needs f ≥ 0 with one entry per state".into()));
    }
    let gr = transition_graph(g);
    let (rec, rec_of) = recurrent_classes(g, &gr);
    let charged: Vec<usize> = rec
        .iter()
        .filter(|c| c.iter().any(|&i| f[i] > 0.0))
        .flat_map(|c| c.iter().copied())
        .collect();
    let mut infinite = vec![false; g.n];
    let rev = Reversed(&gr);
    for &s in &charged {
        if infinite[s] {
            continue;
        }
        let mut bfs = Bfs::new(rev, (s as u32).into());
        while let Some(v) = bfs.next(rev) {
            infinite[v.index()] = true;
        }
    }
    // finite part: transient states not reaching a charged class
    let idx: Vec<usize> = (0..g.n).filter(|&i| !infinite[i] && rec_of[i].is_none()).collect();
    let mut values = vec![0.0; g.n];
    if !idx.is_empty() {
        let sub = g.l.principal(&idx).axpby(-1.0, &Csr::zeros(idx.len()), 0.0);
        let fs: Vec<f64> = idx.iter().map(|&i| f[i]).collect();
        let u = Factor::new(&sub).and_then(|fac| fac.solve(&fs)).map_err(|_| LabError::SingularSystem)?;
        for (k, &i) in idx.iter().enumerate() {
            values[i] = u[k];
        }
    }
    if !infinite.iter().any(|b| *b) {
        return Ok(Potential::Finite { values });
    }
    let certificate = divergence_certificate(g, f, &infinite)?;
    for (i, inf) in infinite.iter().enumerate() {
        if *inf {
            values[i] = f64::INFINITY;
        }
    }
    Ok(Potential::Divergent { values, certificate })
}

/// α ladder 1, 1/4, …, 4⁻¹²
pub fn alpha_ladder() -> Vec<f64> {
    (0..=12).map(|k| 0.25f64.powi(k)).collect()
}

fn divergence_certificate(g: &GeneratorMatrix, f: &[f64], infinite: &[bool]) -> Result<DivergenceCertificate, LabError> {
    let alphas = alpha_ladder();
    let sols: Vec<Vec<f64>> = alphas.iter().map(|&a| resolvent(g, a, f)).collect::<Result<_, _>>()?;
    let potential: Vec<f64> = sols
        .iter()
        .map(|u| u.iter().zip(infinite).filter(|(_, b)| **b).fold(0.0f64, |m, (v, _)| m.max(*v)))
        .collect();
    let k = alphas.len();
    let xs: Vec<f64> = alphas[k - 5..].iter().map(|a| a.ln()).collect();
    let ys: Vec<f64> = potential[k - 5..].iter().map(|p| p.max(1e-300).ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 5.0, ys.iter().sum::<f64>() / 5.0);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let limit: Vec<f64> = sols[k - 1].iter().map(|v| alphas[k - 1] * v).collect();
    let certified = (slope + 1.0).abs() < 0.05 && potential.windows(2).all(|w| w[1] >= w[0]);
    Ok(DivergenceCertificate {
        alphas,
        potential,
        slope,
        limit,
        certified,
    })
}

/// One α of the energy comparison ℰ⁰(u,u) ≤ ℰ(u,u) at u = G_α f.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TitEntry {
    pub alpha: f64,
    pub energy0: f64,
    pub energy: f64,
    /// |ℰ(u,u) − ℰ⁰(u,u)| / ‖u‖²_μ
    pub drift_energy: f64,
}

/// Energy domination at resolvent outputs for random f ∈ [0,1]^n.
pub fn verify_tit(g: &GeneratorMatrix, alphas: &[f64], seed: u64) -> Result<Vec<TitEntry>, LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    alphas
        .iter()
        .map(|&alpha| {
            let f: Vec<f64> = (0..g.n).map(|_| rng.gen::<f64>()).collect();
            let u = resolvent(g, alpha, &f)?;
            let e0 = g.energy0(&u, &u);
            let e = g.energy(&u, &u);
            Ok(TitEntry {
                alpha,
                energy0: e0,
                energy: e,
                drift_energy: (e - e0).abs() / g.inner(&u, &u).max(1e-300),
            })
        })
        .collect()
}

/// |⟨Nu,u⟩_μ| / ‖u‖²_μ
pub fn diagonal_drift_energy(g: &GeneratorMatrix, u: &[f64]) -> f64 {
    g.inner(&g.drift.matvec(u), u).abs() / g.inner(u, u).max(1e-300)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Notran1Residual {
    pub residual: f64,
    /// |⟨u,g⟩_μ| + |ℰ⁰(Gg,u)| + |⟨Gg,Nu⟩_μ|
    pub scale: f64,
}

impl Notran1Residual {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.residual
        } else {
            self.residual / self.scale
        }
    }
}

/// ⟨u,g⟩_μ − ℰ⁰(Gg,u) − ⟨Gg, Nu⟩_μ
pub fn verify_notran1(g: &GeneratorMatrix, gvec: &[f64], u: &[f64]) -> Result<Notran1Residual, LabError> {
    let gg = match potential_dichotomy(g, gvec)? {
        Potential::Finite { values } => values,
        Potential::Divergent { .. } => return Err(LabError::NotTransient),
    };
    let a = g.inner(u, gvec);
    let b = g.energy0(&gg, u);
    let c = g.inner(&gg, &g.drift.matvec(u));
    Ok(Notran1Residual {
        residual: (a - b - c).abs(),
        scale: a.abs() + b.abs() + c.abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoodG {
    pub g: Vec<f64>,
    /// G g
    pub potential: Vec<f64>,
    /// Σ m k / (2^m 2^k c_mk) over the nonempty pieces
    pub bound: f64,
    /// (m, k, c_mk) of each nonempty piece
    pub pieces: Vec<(usize, usize, f64)>,
}

/// Level/onset construction of a strictly positive g with bounded potential.
/// Levels are A_m = {m−1 < Gf ≤ m}; within A_m each state joins the first k
/// with g_mk = (Gf∧m) − T_k(Gf∧m) > 0 there.
pub fn find_good_g(g: &GeneratorMatrix, f: &[f64]) -> Result<GoodG, LabError> {
    const K_MAX: usize = 200;
    if f.iter().any(|v| !(*v > 0.0)) {
        return Err(LabError::InvalidGrid("f must be strictly positive".into()));
    }
    let gf = match potential_dichotomy(g, f)? {
        Potential::Finite { values } => values,
        Potential::Divergent { .. } => return Err(LabError::NotTransient),
    };
    let level = |v: f64| (v.ceil() as usize).max(1);
    let mut levels: Vec<usize> = gf.iter().map(|v| level(*v)).collect();
    levels.sort_unstable();
    levels.dedup();
    let mut out = vec![0.0; g.n];
    let mut pieces = Vec::new();
    let mut bound = 0.0;
    let dense = (g.n <= DENSE_EXPM_MAX).then(|| expm_dense(&g.l, 1.0));
    let step = |w: &[f64]| -> Vec<f64> {
        match &dense {
            Some(t1) => {
                let v = t1 * nalgebra::DVector::from_column_slice(w);
                v.iter().copied().collect()
            }
            None => expm_action(&g.l, 1.0, w),
        }
    };
    for m in levels {
        let am: Vec<usize> = (0..g.n).filter(|&i| level(gf[i]) == m).collect();
        let w: Vec<f64> = gf.iter().map(|v| v.min(m as f64)).collect();
        let mut tw = w.clone();
        let mut pending = am.clone();
        let mut k = 0;
        while !pending.is_empty() {
            k += 1;
            if k > K_MAX {
                return Err(LabError::NotTransient);
            }
            tw = step(&tw);
            let gmk: Vec<f64> = (0..g.n).map(|i| w[i] - tw[i]).collect();
            let (now, later): (Vec<usize>, Vec<usize>) = pending.iter().partition(|&&i| gmk[i] > 0.0);
            if now.is_empty() {
                continue;
            }
            let l1 = now.iter().map(|&i| g.mu[i] * gmk[i]).sum::<f64>();
            let c = 1.0 + l1;
            let wt = 1.0 / (2f64.powi(m as i32) * 2f64.powi(k as i32) * c);
            for &i in &now {
                out[i] += wt * gmk[i];
            }
            bound += (m * k) as f64 * wt;
            pieces.push((m, k, c));
            pending = later;
        }
    }
    let potential = potential_dichotomy(g, &out)?.values().to_vec();
    Ok(GoodG {
        g: out,
        potential,
        bound,
        pieces,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolventCheck {
    pub u: Vec<f64>,
    /// residual of the defining identity, relative to ‖u‖∞ + ‖f‖∞/α
    pub identity_residual: f64,
    /// worst violation of 0 ≤ αu ≤ 1 when 0 ≤ f ≤ 1, else 0
    pub sub_markov_violation: f64,
}

fn sub_markov_of(alpha: f64, f: &[f64], u: &[f64]) -> f64 {
    if f.iter().all(|v| (0.0..=1.0).contains(v)) {
        u.iter().fold(0.0f64, |m, v| m.max(-alpha * v).max(alpha * v - 1.0)).max(0.0)
    } else {
        0.0
    }
}

/// G^h_α f = (α + h − L)⁻¹ f, checked against G^h_α f = G_α(f − h G^h_α f).
pub fn killed_resolvent(g: &GeneratorMatrix, h: &[f64], alpha: f64, f: &[f64]) -> Result<ResolventCheck, LabError> {
    if h.iter().any(|v| !(*v >= 0.0)) {
        return Err(LabError::InvalidGrid("killing rate must be nonnegative".into()));
    }
    let u = g.shifted_factor(alpha, Some(h))?.solve(f).map_err(|_| LabError::SingularSystem)?;
    let rhs: Vec<f64> = (0..g.n).map(|i| f[i] - h[i] * u[i]).collect();
    let v = resolvent(g, alpha, &rhs)?;
    let scale = sup(&u) + sup(f) / alpha;
    Ok(ResolventCheck {
        identity_residual: sup_diff(&u, &v) / scale.max(1e-300),
        sub_markov_violation: sub_markov_of(alpha, f, &u),
        u,
    })
}

/// G^ε_α f = (α − L/(h+ε))⁻¹ f, checked against
/// G^ε_α f = G_α((h+ε)f + α(1 − (h+ε))G^ε_α f).
pub fn time_changed_resolvent(
    g: &GeneratorMatrix,
    h: &[f64],
    eps: f64,
    alpha: f64,
    f: &[f64],
) -> Result<ResolventCheck, LabError> {
    if !(eps > 0.0) || h.iter().any(|v| !(*v >= 0.0)) {
        return Err(LabError::InvalidGrid("time change needs h ≥ 0 and ε > 0".into()));
    }
    let w: Vec<f64> = h.iter().map(|v| 1.0 / (v + eps)).collect();
    let a = g.l.scale_rows(&w).axpby(-1.0, &Csr::identity(g.n), alpha);
    let u = Factor::new(&a).and_then(|fac| fac.solve(f)).map_err(|_| LabError::SingularSystem)?;
    let rhs: Vec<f64> = (0..g.n).map(|i| (h[i] + eps) * f[i] + alpha * (1.0 - (h[i] + eps)) * u[i]).collect();
    let v = resolvent(g, alpha, &rhs)?;
    let scale = sup(&u) + sup(f) / alpha;
    Ok(ResolventCheck {
        identity_residual: sup_diff(&u, &v) / scale.max(1e-300),
        sub_markov_violation: sub_markov_of(alpha, f, &u),
        u,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rec3Entry {
    pub n: f64,
    pub min: f64,
    pub max: f64,
    /// ⟨−Lχ_n, χ_n⟩_μ
    pub energy: f64,
    /// Σ μ_i h_i (1 − χ_n,i)
    pub bound: f64,
    /// ‖Lχ_n‖_{L¹(μ)}
    pub l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rec3Report {
    pub entries: Vec<Rec3Entry>,
    pub in_unit_interval: bool,
    pub monotone: bool,
    pub energy_bounded: bool,
    /// energy and ‖Lχ_n‖₁ both decrease along n and end below 1e−2 of their start
    pub vanishing: bool,
    /// ‖(h − L)1 − h‖∞ relative to max |L_ii|, the n = ∞ limit
    pub limit_residual: f64,
}

impl Rec3Report {
    pub fn passed(&self) -> bool {
        self.in_unit_interval && self.monotone && self.energy_bounded && self.vanishing
    }
}

/// χ_n = (1/n + h − L)⁻¹ h on a conservative chain.
pub fn rec3_chi(g: &GeneratorMatrix, h: &[f64], n_list: &[f64]) -> Result<Rec3Report, LabError> {
    let kill = killing_rate(g);
    if let Some(k) = kill.iter().cloned().find(|k| *k > 0.0) {
        return Err(LabError::NotConservative(-k));
    }
    if h.iter().any(|v| !(*v > 0.0)) {
        return Err(LabError::InvalidGrid("rec3 needs h > 0".into()));
    }
    let tol = 1e-8;
    let mut entries: Vec<Rec3Entry> = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    let mut monotone = true;
    for &n in n_list {
        let chi = g.shifted_factor(1.0 / n, Some(h))?.solve(h).map_err(|_| LabError::SingularSystem)?;
        let lchi = g.l.matvec(&chi);
        let energy = -g.inner(&lchi, &chi);
        let bound = (0..g.n).map(|i| g.mu[i] * h[i] * (1.0 - chi[i])).sum();
        let l1 = (0..g.n).map(|i| g.mu[i] * lchi[i].abs()).sum();
        if let Some(p) = &prev {
            monotone &= chi.iter().zip(p).all(|(c, q)| *c >= q - tol);
        }
        entries.push(Rec3Entry {
            n,
            min: chi.iter().cloned().fold(f64::INFINITY, f64::min),
            max: chi.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            energy,
            bound,
            l1,
        });
        prev = Some(chi);
    }
    let in_unit_interval = entries.iter().all(|e| e.min >= -tol && e.max <= 1.0 + tol);
    let energy_bounded = entries.iter().all(|e| e.energy <= e.bound + tol * (1.0 + e.bound));
    let dec = |v: Vec<f64>| {
        v.windows(2).all(|w| w[1] <= w[0] + tol)
            && v.first().is_none_or(|f| *v.last().unwrap() <= 1e-2 * f.max(tol) + tol)
    };
    let vanishing = dec(entries.iter().map(|e| e.energy).collect()) && dec(entries.iter().map(|e| e.l1).collect());
    let ones = vec![1.0; g.n];
    let l1v = g.l.matvec(&ones);
    let diag = (0..g.n).fold(0.0f64, |m, i| m.max(g.l.get(i, i).abs()));
    let limit_residual = sup(&l1v) / diag.max(f64::MIN_POSITIVE);
    Ok(Rec3Report {
        entries,
        in_unit_interval,
        monotone,
        energy_bounded,
        vanishing,
        limit_residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservativenessEntry {
    pub t: f64,
    /// max_i |1 − (e^{tL}1)_i|
    pub deviation: f64,
    /// Σ μ_i (1 − (e^{tL}1)_i)
    pub mass_loss: f64,
}

pub fn conservativeness_check(g: &GeneratorMatrix, t_list: &[f64]) -> Vec<ConservativenessEntry> {
    let ones = vec![1.0; g.n];
    t_list
        .iter()
        .map(|&t| {
            let v = expm_action(&g.l, t, &ones);
            ConservativenessEntry {
                t,
                deviation: v.iter().fold(0.0f64, |m, x| m.max((1.0 - x).abs())),
                mass_loss: (0..g.n).map(|i| g.mu[i] * (1.0 - v[i])).sum(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantSets {
    /// Nontrivial weakly invariant sets generated by single classes: for
    /// each communicating class, every state that can reach it.
    pub sets: Vec<Vec<usize>>,
    pub irreducible: bool,
    /// Whether e^{tL} is entrywise positive at t = 1 (dense sizes only).
    /// Positivity implies irreducibility; the converse can fail to
    /// underflow on long chains.
    pub heat_kernel_positive: Option<bool>,
}

/// B is weakly invariant when no state outside B can reach B; these are
/// the unions of the ancestor closures of communicating classes.
pub fn weakly_invariant_sets(g: &GeneratorMatrix) -> InvariantSets {
    let gr = transition_graph(g);
    let rev = Reversed(&gr);
    let mut sets: Vec<Vec<usize>> = Vec::new();
    for scc in tarjan_scc(&gr) {
        let mut seen = vec![false; g.n];
        let mut bfs = Bfs::new(rev, scc[0]);
        while let Some(v) = bfs.next(rev) {
            seen[v.index()] = true;
        }
        let set: Vec<usize> = (0..g.n).filter(|&i| seen[i]).collect();
        if set.len() < g.n && !sets.contains(&set) {
            sets.push(set);
        }
    }
    sets.sort();
    let heat_kernel_positive = (g.n <= DENSE_EXPM_MAX).then(|| expm_dense(&g.l, 1.0).iter().all(|v| *v > 0.0));
    InvariantSets {
        irreducible: sets.is_empty(),
        sets,
        heat_kernel_positive,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExhaustionReport {
    pub radii: Vec<f64>,
    pub n_states: Vec<usize>,
    /// Ḡ^{V_k}_α f zero-extended to the outermost grid
    pub levels: Vec<Vec<f64>>,
    /// smallest increment between consecutive levels (≥ −1e−12 required)
    pub min_increment: f64,
    pub coords: Vec<Vec<f64>>,
}

/// Resolvents killed outside the boxes ‖x‖∞ ≤ r for increasing r, taken as
/// principal submatrices of one absorbing grid so the truncations nest
/// exactly.
pub fn domain_exhaustion(
    model: &ModelSpec,
    grid: &GridSpec,
    radii: &[f64],
    alpha: f64,
    f: &dyn Fn(&[f64]) -> f64,
) -> Result<ExhaustionReport, LabError> {
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::InvalidGrid("exhaustion radii must increase".into()));
    }
    let g = super::build_generator(model, grid)?;
    let fv: Vec<f64> = g.coords.iter().map(|x| f(x)).collect();
    if fv.iter().any(|v| !(*v >= 0.0)) {
        return Err(LabError::InvalidGrid("exhaustion needs f ≥ 0".into()));
    }
    let mut levels: Vec<Vec<f64>> = Vec::new();
    let mut n_states = Vec::new();
    let mut min_increment = f64::INFINITY;
    for &r in radii {
        let idx: Vec<usize> = (0..g.n).filter(|&i| g.coords[i].iter().all(|c| c.abs() <= r)).collect();
        let mut u = vec![0.0; g.n];
        if !idx.is_empty() {
            let a = g.l.principal(&idx).axpby(-1.0, &Csr::identity(idx.len()), alpha);
            let fs: Vec<f64> = idx.iter().map(|&i| fv[i]).collect();
            let us = Factor::new(&a).and_then(|fac| fac.solve(&fs)).map_err(|_| LabError::SingularSystem)?;
            for (k, &i) in idx.iter().enumerate() {
                u[i] = us[k];
            }
        }
        if let Some(p) = levels.last() {
            for i in 0..g.n {
                let d = u[i] - p[i];
                min_increment = min_increment.min(d);
                if d < -1e-12 * (1.0 + p[i].abs()) {
                    return Err(LabError::MonotonicityViolation {
                        cell: i,
                        prev: p[i],
                        next: u[i],
                    });
                }
            }
        }
        n_states.push(idx.len());
        levels.push(u);
    }
    Ok(ExhaustionReport {
        radii: radii.to_vec(),
        n_states,
        levels,
        min_increment: if min_increment.is_finite() { min_increment } else { 0.0 },
        coords: g.coords.clone(),
    })
}
