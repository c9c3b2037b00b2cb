//! Finite-volume generators L = L⁰ + N on cell grids and random chains,
//! with the matrix analogues of the resolvent and potential machinery.

mod ops;
mod report;
mod suite;

pub use ops::*;
pub use report::{run_lab, LabConfig, LabReport};
pub use suite::{invariant_suite, SuiteReport, SUITE_TOLERANCES};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::LabError;
use crate::linalg::{Csr, Factor};
use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Reflecting,
    Absorbing,
    /// Wraps to the opposite side; both sides of the axis must be periodic.
    Periodic,
}

/// Cell-centered tensor grid in one or two dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
    /// (low side, high side) per axis.
    pub sides: Vec<(Side, Side)>,
}

impl GridSpec {
    pub fn interval(lo: f64, hi: f64, n: usize, side: Side) -> GridSpec {
        GridSpec::interval_sides(lo, hi, n, side, side)
    }

    pub fn interval_sides(lo: f64, hi: f64, n: usize, left: Side, right: Side) -> GridSpec {
        GridSpec {
            lo: vec![lo],
            hi: vec![hi],
            cells: vec![n],
            sides: vec![(left, right)],
        }
    }

    pub fn square(half: f64, n: usize, side: Side) -> GridSpec {
        GridSpec {
            lo: vec![-half; 2],
            hi: vec![half; 2],
            cells: vec![n; 2],
            sides: vec![(side, side); 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn n_states(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.cells[axis] as f64
    }

    fn validate(&self) -> Result<(), LabError> {
        let d = self.dim();
        if !(1..=2).contains(&d) || self.lo.len() != d || self.hi.len() != d || self.sides.len() != d {
            return Err(LabError::InvalidGrid("grids are 1-d or 2-d with matching lo/hi/sides".into()));
        }
        let limit = if d == 1 { 100_000 } else { 10_000 };
        if self.n_states() > limit || self.cells.contains(&0) {
            return Err(LabError::InvalidGrid(format!(
                "{} states outside 1..={limit} for a {d}-d grid",
                self.n_states()
            )));
        }
        for k in 0..d {
            if !(self.hi[k] > self.lo[k]) {
                return Err(LabError::InvalidGrid(format!("empty axis {k}")));
            }
            let (a, b) = self.sides[k];
            if (a == Side::Periodic) != (b == Side::Periodic) {
                return Err(LabError::InvalidGrid("periodic sides must come in pairs".into()));
            }
            if a == Side::Periodic && self.cells[k] < 3 {
                return Err(LabError::InvalidGrid("periodic axes need at least 3 cells".into()));
            }
        }
        Ok(())
    }

    fn index(&self, c: &[usize]) -> usize {
        if c.len() == 1 {
            c[0]
        } else {
            c[1] * self.cells[0] + c[0]
        }
    }

    fn cell(&self, i: usize) -> Vec<usize> {
        if self.dim() == 1 {
            vec![i]
        } else {
            vec![i % self.cells[0], i / self.cells[0]]
        }
    }

    pub fn center(&self, i: usize) -> Vec<f64> {
        self.cell(i)
            .iter()
            .enumerate()
            .map(|(k, c)| self.lo[k] + (*c as f64 + 0.5) * self.spacing(k))
            .collect()
    }
}

/// Edge of the transition graph with conductance c and antisymmetric flux
/// q (flowing from `i` to `j`); `j = None` is a killing ghost cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Edge {
    pub i: usize,
    pub j: Option<usize>,
    pub c: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorMatrix {
    pub n: usize,
    /// Cell masses μ_i.
    pub mu: Vec<f64>,
    /// μ-symmetric Dirichlet part.
    pub l0: Csr,
    /// μ-antisymmetric drift part.
    pub drift: Csr,
    /// L = L0 + drift
    pub l: Csr,
    pub edges: Vec<Edge>,
    /// Cell centers (empty for abstract chains).
    pub coords: Vec<Vec<f64>>,
    /// Max |Σ_j q_ij| before the diagonal of the drift part was set to zero.
    pub divergence_residual: f64,
    pub has_killing: bool,
}

impl GeneratorMatrix {
    /// Assembles L⁰ and N from edges. Fluxes are first projected onto the
    /// divergence-free subspace (net flux zero at every real state; ghost
    /// cells are unconstrained), then checked against |q|/2 ≤ c.
    pub fn assemble(mu: Vec<f64>, mut edges: Vec<Edge>, coords: Vec<Vec<f64>>) -> Result<GeneratorMatrix, LabError> {
        let n = mu.len();
        if n == 0 {
            return Err(LabError::InvalidGrid("no states".into()));
        }
        if let Some(i) = mu.iter().position(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(LabError::NonPositiveWeight(i));
        }
        let scale = edges.iter().map(|e| e.q.abs()).fold(0.0, f64::max);
        project_divergence_free(n, &mut edges)?;
        for e in edges.iter_mut() {
            if e.q.abs() <= 1e-13 * scale {
                e.q = 0.0;
            }
        }
        for e in &edges {
            let j = e.j.unwrap_or(usize::MAX);
            if !(e.c > 0.0) || !(e.q.abs() / 2.0 <= e.c) || !e.c.is_finite() {
                return Err(LabError::EllipticityLoss {
                    i: e.i,
                    j,
                    c: e.c,
                    q: e.q / 2.0,
                });
            }
        }
        let mut t0 = Vec::with_capacity(4 * edges.len());
        let mut tn = Vec::with_capacity(2 * edges.len());
        let mut div = vec![0.0; n];
        for e in &edges {
            t0.push((e.i, e.i, -e.c / mu[e.i]));
            div[e.i] += e.q;
            if let Some(j) = e.j {
                t0.push((j, j, -e.c / mu[j]));
                t0.push((e.i, j, e.c / mu[e.i]));
                t0.push((j, e.i, e.c / mu[j]));
                tn.push((e.i, j, e.q / (2.0 * mu[e.i])));
                tn.push((j, e.i, -e.q / (2.0 * mu[j])));
                div[j] -= e.q;
            }
        }
        let divergence_residual = div.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if divergence_residual > 1e-9 * scale.max(1e-300) {
            return Err(LabError::InvalidGrid(format!(
                "flux projection left divergence {divergence_residual}"
            )));
        }
        let l0 = Csr::from_triplets(n, t0);
        let drift = Csr::from_triplets(n, tn);
        let l = l0.axpby(1.0, &drift, 1.0);
        let has_killing = edges.iter().any(|e| e.j.is_none());
        Ok(GeneratorMatrix {
            n,
            mu,
            l0,
            drift,
            l,
            edges,
            coords,
            divergence_residual,
            has_killing,
        })
    }

    /// ⟨f, g⟩_μ
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        let v: Vec<f64> = (0..self.n).map(|i| self.mu[i] * f[i] * g[i]).collect();
        crate::quadrature::tree_sum(&v)
    }

    /// ℰ⁰(u, v) = ⟨−L⁰u, v⟩_μ
    pub fn energy0(&self, u: &[f64], v: &[f64]) -> f64 {
        let lu = self.l0.matvec(u);
        -self.inner(&lu, v)
    }

    /// ℰ(u, v) = ⟨−Lu, v⟩_μ
    pub fn energy(&self, u: &[f64], v: &[f64]) -> f64 {
        let lu = self.l.matvec(u);
        -self.inner(&lu, v)
    }

    /// μ-weighted adjoint: L̂_ij = μ_j L_ji / μ_i.
    pub fn adjoint(&self) -> Csr {
        Csr::from_triplets(
            self.n,
            self.l.triplets().into_iter().map(|(i, j, v)| (j, i, self.mu[i] * v / self.mu[j])).collect(),
        )
    }

    /// The generator with the drift reversed.
    pub fn reversed(&self) -> GeneratorMatrix {
        let mut g = self.clone();
        for e in g.edges.iter_mut() {
            e.q = -e.q;
        }
        g.drift = self.drift.axpby(-1.0, &self.drift, 0.0);
        g.l = g.l0.axpby(1.0, &g.drift, 1.0);
        g
    }

    /// Factorization of αI + diag(h) − L.
    pub fn shifted_factor(&self, alpha: f64, h: Option<&[f64]>) -> Result<Factor, LabError> {
        let d: Vec<f64> = (0..self.n).map(|i| alpha + h.map_or(0.0, |h| h[i])).collect();
        let a = self.l.axpby(-1.0, &Csr::diag(&d), 1.0);
        Factor::new(&a).map_err(|_| LabError::SingularSystem)
    }

    /// Coordinate text format, one `row col value` line per nonzero of L.
    pub fn to_coo(&self) -> String {
        let mut s = String::new();
        for (i, j, v) in self.l.triplets() {
            s.push_str(&format!("{i} {j} {v:e}\n"));
        }
        s
    }

    pub fn weights_text(&self) -> String {
        self.mu.iter().map(|m| format!("{m:e}\n")).collect()
    }
}

/// Least-squares projection of edge fluxes onto {Σ_j q_ij = 0 at every real
/// state}: q ← q − Dᵀλ with (D Dᵀ)λ = D q. Components without a ghost edge
/// are grounded at one state, which is exact because their net divergence
/// sums to zero.
fn project_divergence_free(n: usize, edges: &mut [Edge]) -> Result<(), LabError> {
    let mut div = vec![0.0; n];
    let mut t = Vec::new();
    for e in edges.iter() {
        div[e.i] += e.q;
        t.push((e.i, e.i, 1.0));
        if let Some(j) = e.j {
            div[j] -= e.q;
            t.push((j, j, 1.0));
            t.push((e.i, j, -1.0));
            t.push((j, e.i, -1.0));
        }
    }
    let scale = edges.iter().map(|e| e.q.abs()).fold(0.0, f64::max);
    if scale == 0.0 || div.iter().all(|v| v.abs() <= 1e-14 * scale) {
        return Ok(());
    }
    // ground one state in each component that has no ghost edge
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let nx = p[y];
            p[y] = r;
            y = nx;
        }
        r
    }
    for e in edges.iter() {
        if let Some(j) = e.j {
            let (a, b) = (find(&mut parent, e.i), find(&mut parent, j));
            if a != b {
                parent[a] = b;
            }
        }
    }
    let mut grounded = vec![false; n];
    for e in edges.iter().filter(|e| e.j.is_none()) {
        let r = find(&mut parent, e.i);
        grounded[r] = true;
    }
    for i in 0..n {
        let r = find(&mut parent, i);
        if !grounded[r] {
            grounded[r] = true;
            // a unit ghost here forces λ_i = 0 and leaves the solve exact
            t.push((i, i, 1.0));
        }
    }
    let lap = Csr::from_triplets(n, t);
    let lambda = Factor::new(&lap)
        .and_then(|f| f.solve(&div))
        .map_err(|_| LabError::SingularSystem)?;
    for e in edges.iter_mut() {
        let lj = e.j.map_or(0.0, |j| lambda[j]);
        e.q -= lambda[e.i] - lj;
    }
    Ok(())
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Finite-volume generator of a model on a 1-d or 2-d grid: two-point
/// conductances from the harmonic mean of φ·ã along each axis, fluxes φB·n at
/// face midpoints, and absorbing sides realized as killing ghost cells one
/// spacing outside the grid.
pub fn build_generator(model: &ModelSpec, grid: &GridSpec) -> Result<GeneratorMatrix, LabError> {
    grid.validate()?;
    let d = grid.dim();
    if model.dim != d {
        return Err(LabError::InvalidGrid(format!(
            "model dimension {} does not match grid dimension {d}",
            model.dim
        )));
    }
    let n = grid.n_states();
    let vol: f64 = (0..d).map(|k| grid.spacing(k)).product();
    let coords: Vec<Vec<f64>> = (0..n).map(|i| grid.center(i)).collect();
    let mut mu = Vec::with_capacity(n);
    for (i, x) in coords.iter().enumerate() {
        let p = model.phi(x);
        if !(p > 0.0 && p.is_finite()) {
            return Err(LabError::NonPositiveWeight(i));
        }
        mu.push(p * vol);
    }
    let weight = |x: &[f64], k: usize| model.phi(x) * model.a_at(x, k, k);
    let mut edges = Vec::new();
    for i in 0..n {
        let c = grid.cell(i);
        for k in 0..d {
            let h = grid.spacing(k);
            let area = vol / h;
            let xi = &coords[i];
            let wi = weight(xi, k);
            // face to the high neighbour, and ghost faces on absorbing sides
            let last = c[k] + 1 == grid.cells[k];
            let mut face = xi.clone();
            face[k] += h / 2.0;
            let flux_hi = model.flux[k].eval(&face) * area;
            if !last || grid.sides[k].1 == Side::Periodic {
                let mut cj = c.clone();
                cj[k] = if last { 0 } else { c[k] + 1 };
                let j = grid.index(&cj);
                let wj = weight(&coords[j], k);
                let cond = harmonic(wi, wj) * area / h;
                if !(cond > 0.0) {
                    return Err(LabError::EllipticityLoss { i, j, c: cond, q: flux_hi / 2.0 });
                }
                edges.push(Edge {
                    i,
                    j: Some(j),
                    c: cond,
                    q: flux_hi,
                });
            } else if grid.sides[k].1 == Side::Absorbing {
                edges.push(ghost_edge(model, i, xi, k, wi, flux_hi, 1.0, (h, area)));
            }
            if c[k] == 0 && grid.sides[k].0 == Side::Absorbing {
                let mut f = xi.clone();
                f[k] -= h / 2.0;
                let flux_lo = model.flux[k].eval(&f) * area;
                edges.push(ghost_edge(model, i, xi, k, wi, flux_lo, -1.0, (h, area)));
            }
        }
    }
    GeneratorMatrix::assemble(mu, edges, coords)
}

/// Killing edge to a ghost cell one spacing past the boundary face; the
/// ghost takes the cell's own weight when φ is not usable there.
#[allow(clippy::too_many_arguments)]
fn ghost_edge(model: &ModelSpec, i: usize, xi: &[f64], k: usize, wi: f64, flux: f64, dir: f64, (h, area): (f64, f64)) -> Edge {
    let mut xg = xi.to_vec();
    xg[k] += dir * h;
    let wg = model.phi(&xg) * model.a_at(&xg, k, k);
    let wg = if wg > 0.0 && wg.is_finite() { wg } else { wi };
    Edge {
        i,
        j: None,
        c: harmonic(wi, wg) * area / h,
        q: dir * flux,
    }
}

/// Boundary kind for random chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainBoundary {
    Reflecting,
    Absorbing,
}

/// Random chain on n states: a ring (reflecting) or path with killing at both
/// ends (absorbing), plus random chords, random masses and conductances, and
/// random fluxes projected to be divergence-free and scaled below the
/// ellipticity limit.
pub fn random_generator(n: usize, boundary: ChainBoundary, seed: u64) -> Result<GeneratorMatrix, LabError> {
    if n == 0 {
        return Err(LabError::InvalidGrid("no states".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    let mut edges = Vec::new();
    let mut push = |i: usize, j: Option<usize>, rng: &mut ChaCha8Rng| {
        edges.push(Edge {
            i,
            j,
            c: rng.gen_range(0.5..2.0),
            q: rng.gen_range(-1.0..1.0),
        });
    };
    for i in 0..n.saturating_sub(1) {
        push(i, Some(i + 1), &mut rng);
    }
    match boundary {
        ChainBoundary::Reflecting => {
            if n > 2 {
                push(n - 1, Some(0), &mut rng);
            }
        }
        ChainBoundary::Absorbing => {
            push(0, None, &mut rng);
            if n > 1 {
                push(n - 1, None, &mut rng);
            }
        }
    }
    if n > 3 {
        for _ in 0..n / 3 {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i != j {
                push(i, Some(j), &mut rng);
            }
        }
    }
    project_divergence_free(n, &mut edges)?;
    let worst = edges.iter().map(|e| e.q.abs() / (2.0 * e.c)).fold(0.0, f64::max);
    if worst > 0.0 {
        let s = rng.gen_range(0.2..0.9) / worst;
        for e in edges.iter_mut() {
            e.q *= s;
        }
    }
    GeneratorMatrix::assemble(mu, edges, Vec::new())
}
