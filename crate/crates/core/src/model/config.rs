use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    #[default]
    Full,
    Interval,
    Ball,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default)]
    pub kind: DomainKind,
    /// `[a, b]` for intervals, `[R]` for balls centred at the origin.
    #[serde(default)]
    pub bounds: Vec<f64>,
    #[serde(default)]
    pub open: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    #[serde(default)]
    pub smooth_phi: bool,
    #[serde(default, rename = "smooth_A")]
    pub smooth_a: bool,
    /// φ, ⟨A∇ρ,∇ρ⟩ and ⟨B,∇ρ⟩ depend on |x| only (spot-checked).
    #[serde(default)]
    pub radial: bool,
    #[serde(default)]
    pub irreducible: bool,
    /// Density of the bounded-support core of L⁰ is assumed, never checked.
    #[serde(default)]
    pub condition_c: bool,
    /// Standing hypotheses for the symmetric transience test are assumed.
    #[serde(default)]
    pub heat_kernel_bounds: bool,
}

/// Declared asymptotics v1(r) ~ c·r^gamma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailLaw {
    pub c: f64,
    pub gamma: f64,
}

/// Serializable model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub dimension: usize,
    #[serde(default)]
    pub domain: DomainConfig,
    pub phi: String,
    #[serde(rename = "A")]
    pub a: Vec<Vec<String>>,
    #[serde(rename = "B")]
    pub b: Vec<String>,
    #[serde(default = "default_rho")]
    pub rho: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub flags: Flags,
    /// Points where φ or the coefficients are singular.
    #[serde(default)]
    pub singularities: Vec<Vec<f64>>,
    /// 1-d points where φ has a kink; derivatives there are classical off this set.
    #[serde(default)]
    pub kinks: Vec<f64>,
    #[serde(default)]
    pub tail_law: Option<TailLaw>,
    /// k with E_r ⊂ B_{k r}.
    #[serde(default)]
    pub gauge_bound: Option<f64>,
    #[serde(default)]
    pub irreducibility_note: Option<String>,
    /// Half-width of the default lab grid.
    #[serde(default)]
    pub lab_extent: Option<f64>,
}

fn default_rho() -> String {
    "norm(x)".to_string()
}
