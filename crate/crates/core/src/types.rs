//! System and pointer types plus the gauge constants attached to them.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SystemType {
    name: Arc<str>,
    dim: usize,
}

impl SystemType {
    /// An unregistered type, used for ancillas and other internal wires.
    pub fn new(name: &str, dim: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::Range(format!("system `{name}` needs dim >= 1")));
        }
        Ok(SystemType { name: name.into(), dim })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl fmt::Display for SystemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.name, self.dim)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointerType {
    name: Arc<str>,
    card: usize,
}

impl PointerType {
    pub fn new(name: &str, card: usize) -> Result<Self> {
        if card < 1 {
            return Err(Error::Range(format!("pointer `{name}` needs card >= 1")));
        }
        Ok(PointerType { name: name.into(), card })
    }

    /// The cardinality-one type `0`.
    pub fn null() -> Self {
        PointerType { name: "0".into(), card: 1 }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn card(&self) -> usize {
        self.card
    }
}

impl fmt::Display for PointerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.name, self.card)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeRegistry {
    systems: BTreeMap<String, SystemType>,
    pointers: BTreeMap<String, PointerType>,
}

impl Default for TypeRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl TypeRegistry {
    pub fn new() -> Self {
        let mut pointers = BTreeMap::new();
        pointers.insert("0".to_string(), PointerType::null());
        TypeRegistry { systems: BTreeMap::new(), pointers }
    }

    fn check_unused(&self, name: &str) -> Result<()> {
        if self.systems.contains_key(name) || self.pointers.contains_key(name) {
            return Err(Error::Registry(format!("type name `{name}` already registered")));
        }
        Ok(())
    }

    pub fn register_system(&mut self, name: &str, dim: usize) -> Result<SystemType> {
        self.check_unused(name)?;
        let t = SystemType::new(name, dim)?;
        self.systems.insert(name.to_string(), t.clone());
        Ok(t)
    }

    pub fn register_pointer(&mut self, name: &str, card: usize) -> Result<PointerType> {
        self.check_unused(name)?;
        let t = PointerType::new(name, card)?;
        self.pointers.insert(name.to_string(), t.clone());
        Ok(t)
    }

    pub fn system(&self, name: &str) -> Option<&SystemType> {
        self.systems.get(name)
    }

    pub fn pointer(&self, name: &str) -> Option<&PointerType> {
        self.pointers.get(name)
    }

    pub fn systems(&self) -> impl Iterator<Item = &SystemType> {
        self.systems.values()
    }

    pub fn pointers(&self) -> impl Iterator<Item = &PointerType> {
        self.pointers.values()
    }

    pub fn is_empty(&self) -> bool {
        self.systems.is_empty() && self.pointers.len() == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaugePreset {
    Forward,
    Backward,
    Symmetric,
    Custom,
}

impl GaugePreset {
    pub fn alpha_for_dim(self, dim: usize) -> f64 {
        let n = dim as f64;
        match self {
            GaugePreset::Forward => 1.0 / n.sqrt(),
            GaugePreset::Backward => n.sqrt(),
            GaugePreset::Symmetric | GaugePreset::Custom => 1.0,
        }
    }

    pub fn beta_for_card(self, card: usize) -> f64 {
        let n = card as f64;
        match self {
            GaugePreset::Forward => n.sqrt(),
            GaugePreset::Backward => 1.0 / n.sqrt(),
            GaugePreset::Symmetric | GaugePreset::Custom => 1.0,
        }
    }
}

impl fmt::Display for GaugePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GaugePreset::Forward => "forward",
            GaugePreset::Backward => "backward",
            GaugePreset::Symmetric => "symmetric",
            GaugePreset::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// Positive gauge constants α per system type and β per pointer type.
///
/// Types without an explicit entry (ancillas, the null pointer) take the
/// preset formula for their dimension; under a custom gauge that is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeConfig {
    preset: GaugePreset,
    alpha: BTreeMap<String, f64>,
    beta: BTreeMap<String, f64>,
}

impl GaugeConfig {
    pub fn preset(kind: GaugePreset, registry: &TypeRegistry) -> Self {
        let alpha = registry
            .systems()
            .map(|s| (s.name().to_string(), kind.alpha_for_dim(s.dim())))
            .collect();
        let beta = registry
            .pointers()
            .map(|p| (p.name().to_string(), kind.beta_for_card(p.card())))
            .collect();
        GaugeConfig { preset: kind, alpha, beta }
    }

    /// A preset gauge with no registry; every type uses the preset formula.
    pub fn from_preset(kind: GaugePreset) -> Self {
        GaugeConfig { preset: kind, alpha: BTreeMap::new(), beta: BTreeMap::new() }
    }

    pub fn forward() -> Self {
        Self::from_preset(GaugePreset::Forward)
    }

    pub fn backward() -> Self {
        Self::from_preset(GaugePreset::Backward)
    }

    pub fn symmetric() -> Self {
        Self::from_preset(GaugePreset::Symmetric)
    }

    pub fn custom(alpha: BTreeMap<String, f64>, beta: BTreeMap<String, f64>) -> Result<Self> {
        for (k, &v) in alpha.iter().chain(beta.iter()) {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Gauge(format!("gauge value for `{k}` must be positive, got {v}")));
            }
        }
        Ok(GaugeConfig { preset: GaugePreset::Custom, alpha, beta })
    }

    pub fn kind(&self) -> GaugePreset {
        self.preset
    }

    pub fn alpha(&self, a: &SystemType) -> f64 {
        self.alpha.get(a.name()).copied().unwrap_or_else(|| self.preset.alpha_for_dim(a.dim()))
    }

    pub fn beta(&self, x: &PointerType) -> f64 {
        self.beta.get(x.name()).copied().unwrap_or_else(|| self.preset.beta_for_card(x.card()))
    }

    pub fn alpha_composite(&self, factors: &[SystemType]) -> f64 {
        factors.iter().map(|a| self.alpha(a)).product()
    }

    pub fn beta_composite(&self, factors: &[PointerType]) -> f64 {
        factors.iter().map(|x| self.beta(x)).product()
    }

    pub fn explicit_alphas(&self) -> &BTreeMap<String, f64> {
        &self.alpha
    }

    pub fn explicit_betas(&self) -> &BTreeMap<String, f64> {
        &self.beta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg() -> TypeRegistry {
        let mut r = TypeRegistry::new();
        r.register_system("a", 2).unwrap();
        r.register_system("b", 3).unwrap();
        r.register_pointer("x", 2).unwrap();
        r
    }

    #[test]
    fn forward_alpha_dim_two() {
        let r = reg();
        let g = GaugeConfig::preset(GaugePreset::Forward, &r);
        assert!((g.alpha(r.system("a").unwrap()) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((g.beta(r.pointer("x").unwrap()) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn symmetric_is_all_ones() {
        let r = reg();
        let g = GaugeConfig::preset(GaugePreset::Symmetric, &r);
        for s in r.systems() {
            assert_eq!(g.alpha(s), 1.0);
        }
        for p in r.pointers() {
            assert_eq!(g.beta(p), 1.0);
        }
    }

    #[test]
    fn backward_composite_alpha() {
        let r = reg();
        let g = GaugeConfig::preset(GaugePreset::Backward, &r);
        let ab = [r.system("a").unwrap().clone(), r.system("b").unwrap().clone()];
        assert!((g.alpha_composite(&ab) - 6f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn presets_are_reciprocal() {
        let r = reg();
        let f = GaugeConfig::preset(GaugePreset::Forward, &r);
        let b = GaugeConfig::preset(GaugePreset::Backward, &r);
        for s in r.systems() {
            assert!((f.alpha(s) * b.alpha(s) - 1.0).abs() < 1e-15);
        }
        for p in r.pointers() {
            assert!((f.beta(p) * b.beta(p) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn registry_rules() {
        let mut r = TypeRegistry::new();
        assert_eq!(r.pointer("0").unwrap().card(), 1);
        assert_eq!(r.register_pointer("x", 2).unwrap().card(), 2);
        assert_eq!(r.pointer("x").unwrap().card(), 2);
        assert!(matches!(r.register_pointer("x", 3), Err(Error::Registry(_))));
        assert!(matches!(r.register_system("0", 2), Err(Error::Registry(_))));
        assert!(matches!(r.register_system("q", 0), Err(Error::Range(_))));
    }

    #[test]
    fn custom_rejects_nonpositive() {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), 0.0);
        assert!(GaugeConfig::custom(m, BTreeMap::new()).is_err());
    }
}
