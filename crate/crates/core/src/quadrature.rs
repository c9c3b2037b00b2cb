//! Globally adaptive Gauss–Kronrod (7,15) quadrature with nested cubature
//! for boxes in up to three dimensions.

use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::QuadError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Hard budget of integrand evaluations for one top-level call.
    pub max_evals: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            rel_tol: 1e-7,
            abs_tol: 1e-13,
            max_evals: 10_000_000,
        }
    }
}

impl QuadConfig {
    pub fn with_rel(rel_tol: f64) -> Self {
        QuadConfig {
            rel_tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One GK15 panel: (integral, error estimate). Fails on a non-finite sample.
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64), QuadError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(QuadError::NonFinite);
    }
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        if !f1.is_finite() || !f2.is_finite() {
            return Err(QuadError::NonFinite);
        }
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = resk * 0.5;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let hh = h.abs();
    let result = resk * h;
    resabs *= hh;
    resasc *= hh;
    let mut err = ((resk - resg) * h).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Ok((result, err))
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err
            .total_cmp(&other.err)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

/// Pairwise summation with a topology fixed by the length only.
pub fn tree_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let m = n / 2;
            tree_sum(&v[..m]) + tree_sum(&v[m..])
        }
    }
}

/// Adaptive integration over `[points[0], points[last]]`, with the interior
/// points used as initial subdivision (breakpoints).
pub fn integrate_points<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    cfg: &QuadConfig,
) -> Result<QuadResult, QuadError> {
    let budget = Cell::new(cfg.max_evals);
    integrate_budgeted(&mut f, points, cfg, &budget)
}

pub fn integrate<F: FnMut(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult, QuadError> {
    integrate_points(f, &[a, b], cfg)
}

fn integrate_budgeted<F: FnMut(f64) -> f64>(
    f: &mut F,
    points: &[f64],
    cfg: &QuadConfig,
    budget: &Cell<usize>,
) -> Result<QuadResult, QuadError> {
    if points.len() < 2 {
        return Err(QuadError::QuadratureFailure("need at least two points".into()));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(QuadError::QuadratureFailure("non-finite limit".into()));
    }
    let (lo, hi) = (points[0], points[points.len() - 1]);
    if lo == hi {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            evals: 0,
        });
    }
    let sgn = if hi < lo { -1.0 } else { 1.0 };
    let mut pts: Vec<f64> = points.to_vec();
    if sgn < 0.0 {
        pts.reverse();
    }
    pts.dedup();
    let mut heap = BinaryHeap::new();
    let mut evals = 0usize;
    let take = |n: usize, evals: &mut usize| -> Result<(), QuadError> {
        let left = budget.get();
        if left < n {
            return Err(QuadError::QuadratureFailure(
                "evaluation budget exhausted".into(),
            ));
        }
        budget.set(left - n);
        *evals += n;
        Ok(())
    };
    let mut total = 0.0;
    let mut total_err = 0.0;
    for w in pts.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        take(15, &mut evals)?;
        let (v, e) = gk15(f, w[0], w[1])?;
        total += v;
        total_err += e;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value: v,
            err: e,
        });
    }
    // Panels narrower than this are not split further; if their error alone
    // exceeds the tolerance the integrand is treated as non-integrable.
    let min_width = 4.0 * f64::EPSILON * (pts[pts.len() - 1] - pts[0]);
    let mut frozen: Vec<Panel> = Vec::new();
    let mut frozen_err = 0.0;
    loop {
        let tol = cfg.abs_tol.max(cfg.rel_tol * total.abs());
        if total_err <= tol {
            break;
        }
        if frozen_err > tol {
            return Err(QuadError::QuadratureFailure(format!(
                "unresolvable singularity: error {frozen_err:.3e} on roundoff-width panels"
            )));
        }
        let Some(p) = heap.pop() else { break };
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) || p.b - p.a <= min_width {
            frozen_err += p.err;
            frozen.push(p);
            continue;
        }
        if budget.get() < 30 {
            return Err(QuadError::QuadratureFailure(format!(
                "evaluation budget exhausted with error {total_err:.3e} above tolerance {tol:.3e}"
            )));
        }
        take(30, &mut evals)?;
        let (v1, e1) = gk15(f, p.a, mid)?;
        let (v2, e2) = gk15(f, mid, p.b)?;
        total += v1 + v2 - p.value;
        total_err += e1 + e2 - p.err;
        heap.push(Panel { a: p.a, b: mid, value: v1, err: e1 });
        heap.push(Panel { a: mid, b: p.b, value: v2, err: e2 });
    }
    let mut panels: Vec<Panel> = heap.into_vec();
    panels.extend(frozen);
    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    let vals: Vec<f64> = panels.iter().map(|p| p.value).collect();
    let errs: Vec<f64> = panels.iter().map(|p| p.err).collect();
    let value = tree_sum(&vals);
    let error = tree_sum(&errs);
    if !value.is_finite() {
        return Err(QuadError::NonFinite);
    }
    let tol = cfg.abs_tol.max(cfg.rel_tol * value.abs());
    if error > 2.0 * tol {
        return Err(QuadError::QuadratureFailure(format!(
            "error {error:.3e} above tolerance {tol:.3e}"
        )));
    }
    Ok(QuadResult {
        value: sgn * value,
        error,
        evals,
    })
}

/// Integral over `[a, ∞)` via the substitution x = a + t/(1-t).
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    cfg: &QuadConfig,
) -> Result<QuadResult, QuadError> {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let u = 1.0 - t;
            let v = f(a + t / u) / (u * u);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        cfg,
    )
}

/// Nested adaptive cubature over a box in dimension 1 to 3.
///
/// `breaks[k]` lists interior points in coordinate k where the integrand is
/// known to kink or jump. The inner integrals are solved to a tenth of the
/// requested relative tolerance so their noise does not drive the outer
/// subdivision.
pub fn integrate_box<F: Fn(&[f64]) -> f64>(
    f: F,
    lo: &[f64],
    hi: &[f64],
    breaks: &[Vec<f64>],
    cfg: &QuadConfig,
) -> Result<QuadResult, QuadError> {
    integrate_region(f, None::<fn(&[f64]) -> f64>, lo, hi, breaks, cfg)
}

/// Like [`integrate_box`] but restricted to `{x : mask(x) < 0}`.
///
/// The boundary of the masked set is located by sampling and bisection along
/// the innermost coordinate, so the adaptive rule never sees the jump.
pub fn integrate_masked<F: Fn(&[f64]) -> f64, M: Fn(&[f64]) -> f64>(
    f: F,
    mask: M,
    lo: &[f64],
    hi: &[f64],
    breaks: &[Vec<f64>],
    cfg: &QuadConfig,
) -> Result<QuadResult, QuadError> {
    integrate_region(f, Some(mask), lo, hi, breaks, cfg)
}

fn integrate_region<F: Fn(&[f64]) -> f64, M: Fn(&[f64]) -> f64>(
    f: F,
    mask: Option<M>,
    lo: &[f64],
    hi: &[f64],
    breaks: &[Vec<f64>],
    cfg: &QuadConfig,
) -> Result<QuadResult, QuadError> {
    let d = lo.len();
    if d == 0 || d > 3 || hi.len() != d {
        return Err(QuadError::QuadratureFailure(format!(
            "unsupported box dimension {d}"
        )));
    }
    let budget = Cell::new(cfg.max_evals);
    let mut x = vec![0.0; d];
    let pts: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let mut p = vec![lo[k]];
            if let Some(bk) = breaks.get(k) {
                let mut bs: Vec<f64> = bk.iter().copied().filter(|v| *v > lo[k] && *v < hi[k]).collect();
                bs.sort_by(f64::total_cmp);
                p.extend(bs);
            }
            p.push(hi[k]);
            p
        })
        .collect();
    let (value, error) = nested(&f, mask.as_ref(), &pts, 0, &mut x, cfg, &budget)?;
    Ok(QuadResult {
        value,
        error,
        evals: cfg.max_evals - budget.get(),
    })
}

/// Sub-intervals of `[pts[0], pts[last]]` on which `mask < 0`, each carrying
/// the breakpoints that fall inside it.
fn masked_pieces<M: FnMut(f64) -> f64>(mut mask: M, pts: &[f64]) -> Vec<Vec<f64>> {
    const SAMPLES: usize = 64;
    let (lo, hi) = (pts[0], pts[pts.len() - 1]);
    let mut grid: Vec<f64> = (0..=SAMPLES)
        .map(|i| lo + (hi - lo) * i as f64 / SAMPLES as f64)
        .collect();
    grid.extend_from_slice(&pts[1..pts.len() - 1]);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let vals: Vec<f64> = grid.iter().map(|t| mask(*t)).collect();
    let mut cuts = vec![lo];
    for i in 0..grid.len() - 1 {
        let (mut a, mut b) = (grid[i], grid[i + 1]);
        let (fa, fb) = (vals[i] < 0.0, vals[i + 1] < 0.0);
        if fa != fb {
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if (mask(m) < 0.0) == fa {
                    a = m;
                } else {
                    b = m;
                }
            }
            cuts.push(0.5 * (a + b));
        }
    }
    cuts.push(hi);
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        if mask(0.5 * (w[0] + w[1])) < 0.0 {
            let mut piece = vec![w[0]];
            piece.extend(pts.iter().copied().filter(|p| *p > w[0] && *p < w[1]));
            piece.push(w[1]);
            out.push(piece);
        }
    }
    out
}

fn nested<F: Fn(&[f64]) -> f64, M: Fn(&[f64]) -> f64>(
    f: &F,
    mask: Option<&M>,
    pts: &[Vec<f64>],
    k: usize,
    x: &mut Vec<f64>,
    cfg: &QuadConfig,
    budget: &Cell<usize>,
) -> Result<(f64, f64), QuadError> {
    let d = pts.len();
    if k == d - 1 {
        let pieces = match mask {
            None => vec![pts[k].clone()],
            Some(m) => {
                let mut y = x.clone();
                masked_pieces(
                    |t| {
                        y[k] = t;
                        m(&y)
                    },
                    &pts[k],
                )
            }
        };
        let mut g = |t: f64| {
            x[k] = t;
            f(x)
        };
        let (mut v, mut e) = (0.0, 0.0);
        for piece in &pieces {
            let r = integrate_budgeted(&mut g, piece, cfg, budget)?;
            v += r.value;
            e += r.error;
        }
        return Ok((v, e));
    }
    let inner_cfg = QuadConfig {
        rel_tol: cfg.rel_tol * 0.1,
        abs_tol: cfg.abs_tol * 0.1,
        ..*cfg
    };
    let mut failure: Option<QuadError> = None;
    let mut g = |t: f64| {
        if failure.is_some() {
            return 0.0;
        }
        x[k] = t;
        match nested(f, mask, pts, k + 1, x, &inner_cfg, budget) {
            Ok((v, _)) => v,
            Err(e) => {
                failure = Some(e);
                0.0
            }
        }
    };
    // Outer panels only cost one "evaluation" each in the budget accounting of
    // this level; the inner calls charge the shared budget directly.
    let outer_cfg = QuadConfig {
        max_evals: usize::MAX,
        ..*cfg
    };
    let outer_budget = Cell::new(usize::MAX);
    let r = integrate_budgeted(&mut g, &pts[k], &outer_cfg, &outer_budget);
    if let Some(e) = failure {
        return Err(e);
    }
    let r = r?;
    Ok((r.value, r.error))
}
