//! Transfer methods as ordered compositions of retrieval, mapping and
//! evaluation, and their worst-case gain.
//!
//! Stage lists are in execution order, left to right: `e>m` evaluates first
//! and maps the survivor. Under that reading mapping after evaluation keeps
//! the gate's floor and adds the mapping improvement, while mapping before
//! evaluation is capped by the gate at zero.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use super::TransferError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Stage {
    Retrieval,
    Mapping,
    Evaluation,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Retrieval, Stage::Mapping, Stage::Evaluation];

    pub fn letter(self) -> char {
        match self {
            Stage::Retrieval => 'r',
            Stage::Mapping => 'm',
            Stage::Evaluation => 'e',
        }
    }

    fn from_letter(s: &str) -> Option<Self> {
        match s {
            "r" => Some(Stage::Retrieval),
            "m" => Some(Stage::Mapping),
            "e" => Some(Stage::Evaluation),
            _ => None,
        }
    }
}

/// One to three distinct stages in execution order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransferMethod {
    stages: Vec<Stage>,
}

impl TransferMethod {
    pub fn new(stages: Vec<Stage>) -> Result<Self, TransferError> {
        if stages.is_empty() || stages.len() > 3 {
            return Err(TransferError::InvalidMethod(format!(
                "{} stages (need 1 to 3)",
                stages.len()
            )));
        }
        for (i, s) in stages.iter().enumerate() {
            if stages[..i].contains(s) {
                return Err(TransferError::InvalidMethod(format!(
                    "stage '{}' repeated",
                    s.letter()
                )));
            }
        }
        Ok(Self { stages })
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn contains(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    fn position(&self, stage: Stage) -> Option<usize> {
        self.stages.iter().position(|&s| s == stage)
    }

    pub fn infimum_class(&self) -> InfimumClass {
        match (self.position(Stage::Evaluation), self.position(Stage::Mapping)) {
            (Some(e), Some(m)) if e < m => InfimumClass::DeltaU,
            (Some(_), _) => InfimumClass::ZeroFloor,
            (None, Some(_)) => InfimumClass::MappingBound,
            (None, None) => InfimumClass::RetrievalBound,
        }
    }

    /// Methods whose worst-case gain is nonnegative.
    pub fn is_safe(&self) -> bool {
        self.contains(Stage::Evaluation)
    }
}

impl fmt::Display for TransferMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.stages.iter().enumerate() {
            if i > 0 {
                f.write_str(">")?;
            }
            write!(f, "{}", s.letter())?;
        }
        Ok(())
    }
}

impl FromStr for TransferMethod {
    type Err = TransferError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let stages = s
            .trim()
            .to_ascii_lowercase()
            .split('>')
            .map(|part| {
                Stage::from_letter(part.trim())
                    .ok_or_else(|| TransferError::InvalidMethod(format!("unknown stage '{part}' in '{s}'")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(stages)
    }
}

impl Serialize for TransferMethod {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// All 15 compositions: 3 singletons, 6 ordered pairs, 6 ordered triples.
pub fn enumerate_methods() -> Vec<TransferMethod> {
    use Stage::*;
    let lists: [&[Stage]; 15] = [
        &[Retrieval],
        &[Mapping],
        &[Evaluation],
        &[Retrieval, Mapping],
        &[Mapping, Retrieval],
        &[Retrieval, Evaluation],
        &[Evaluation, Retrieval],
        &[Mapping, Evaluation],
        &[Evaluation, Mapping],
        &[Retrieval, Mapping, Evaluation],
        &[Retrieval, Evaluation, Mapping],
        &[Mapping, Retrieval, Evaluation],
        &[Mapping, Evaluation, Retrieval],
        &[Evaluation, Retrieval, Mapping],
        &[Evaluation, Mapping, Retrieval],
    ];
    lists
        .iter()
        .map(|l| TransferMethod { stages: l.to_vec() })
        .collect()
}

/// Parse a comma-separated method list; `all15` expands to every method.
pub fn parse_method_list(spec: &str) -> Result<Vec<TransferMethod>, TransferError> {
    let mut out: Vec<TransferMethod> = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let batch = if item.eq_ignore_ascii_case("all15") {
            enumerate_methods()
        } else {
            vec![item.parse()?]
        };
        for m in batch {
            if !out.contains(&m) {
                out.push(m);
            }
        }
    }
    if out.is_empty() {
        return Err(TransferError::InvalidMethod("empty method list".into()));
    }
    Ok(out)
}

/// The four worst-case gain classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum InfimumClass {
    /// `u_min - u_tau`: retrieval alone.
    RetrievalBound,
    /// `u_min + delta_u - u_tau`: mapping without evaluation.
    MappingBound,
    /// `0`: evaluation with no mapping after it.
    ZeroFloor,
    /// `delta_u`: evaluation followed (eventually) by mapping.
    DeltaU,
}

impl InfimumClass {
    pub fn label(self) -> &'static str {
        match self {
            InfimumClass::RetrievalBound => "retrieval-bound",
            InfimumClass::MappingBound => "mapping-bound",
            InfimumClass::ZeroFloor => "zero-infimum",
            InfimumClass::DeltaU => "delta-u",
        }
    }

    pub fn formula(self) -> &'static str {
        match self {
            InfimumClass::RetrievalBound => "u_min - u_tau",
            InfimumClass::MappingBound => "u_min + delta_u - u_tau",
            InfimumClass::ZeroFloor => "0",
            InfimumClass::DeltaU => "delta_u",
        }
    }

    pub fn value(self, u_min: f64, u_tau: f64, delta_u: f64) -> f64 {
        match self {
            InfimumClass::RetrievalBound => u_min - u_tau,
            InfimumClass::MappingBound => u_min + delta_u - u_tau,
            InfimumClass::ZeroFloor => 0.0,
            InfimumClass::DeltaU => delta_u,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfimumAnalysis {
    pub u_min: f64,
    pub u_tau: f64,
    pub delta_u: f64,
    pub per_method: Vec<(TransferMethod, f64)>,
}

impl InfimumAnalysis {
    pub fn get(&self, method: &TransferMethod) -> Option<f64> {
        self.per_method
            .iter()
            .find(|(m, _)| m == method)
            .map(|&(_, v)| v)
    }
}

/// Worst-case gain of every method given the pool's minimum usefulness, the
/// incumbent's usefulness and the mapping improvement.
pub fn infimum_table(u_min: f64, u_tau: f64, delta_u: f64) -> Result<InfimumAnalysis, TransferError> {
    if !(delta_u >= 0.0) {
        return Err(TransferError::NegativeDeltaU(delta_u));
    }
    let per_method = enumerate_methods()
        .into_iter()
        .map(|m| {
            let v = m.infimum_class().value(u_min, u_tau, delta_u);
            (m, v)
        })
        .collect();
    Ok(InfimumAnalysis {
        u_min,
        u_tau,
        delta_u,
        per_method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;
    use proptest::prelude::*;

    fn m(s: &str) -> TransferMethod {
        s.parse().unwrap()
    }

    #[test]
    fn fifteen_methods() {
        let all = enumerate_methods();
        assert_eq!(all.len(), 15);
        assert_eq!(all.iter().filter(|m| m.stages().len() == 1).count(), 3);
        assert_eq!(all.iter().filter(|m| m.stages().len() == 2).count(), 6);
        let singles: Vec<String> = all.iter().filter(|m| m.stages().len() == 1).map(|m| m.to_string()).collect();
        assert_eq!(singles, ["r", "m", "e"]);
        // triples are exactly the 3! permutations
        let triples: std::collections::BTreeSet<Vec<Stage>> = all
            .iter()
            .filter(|m| m.stages().len() == 3)
            .map(|m| m.stages().to_vec())
            .collect();
        let perms: std::collections::BTreeSet<Vec<Stage>> = Stage::ALL.into_iter().permutations(3).collect();
        assert_eq!(triples, perms);
        let distinct: std::collections::BTreeSet<_> = all.iter().collect();
        assert_eq!(distinct.len(), 15);
    }

    #[test]
    fn parse_and_display() {
        assert_eq!(m("r>m>e").to_string(), "r>m>e");
        assert_eq!(m(" E > M ").to_string(), "e>m");
        assert!("r>r".parse::<TransferMethod>().is_err());
        assert!("x".parse::<TransferMethod>().is_err());
        assert!("r>m>e>r".parse::<TransferMethod>().is_err());
        assert_eq!(parse_method_list("all15").unwrap().len(), 15);
        assert_eq!(parse_method_list("r, e>m, r").unwrap().len(), 2);
        assert!(parse_method_list(" , ").is_err());
    }

    #[test]
    fn infimum_examples() {
        let t = infimum_table(-10.0, 0.0, 2.0).unwrap();
        assert_eq!(t.get(&m("r")), Some(-10.0));
        assert_eq!(t.get(&m("e")), Some(0.0));
        assert_eq!(t.get(&m("e>m")), Some(2.0));
        assert_eq!(t.get(&m("m")), Some(-8.0));
        assert_eq!(t.get(&m("m>e")), Some(0.0));
        assert!(matches!(infimum_table(0.0, 0.0, -1.0), Err(TransferError::NegativeDeltaU(_))));
    }

    #[test]
    fn classes_match_the_four_case_table() {
        let class_of = |s: &str| m(s).infimum_class();
        assert_eq!(class_of("r"), InfimumClass::RetrievalBound);
        for s in ["m", "r>m", "m>r"] {
            assert_eq!(class_of(s), InfimumClass::MappingBound, "{s}");
        }
        for s in ["e", "r>e", "e>r", "m>e", "r>m>e", "m>r>e", "m>e>r"] {
            assert_eq!(class_of(s), InfimumClass::ZeroFloor, "{s}");
        }
        for s in ["e>m", "r>e>m", "e>r>m", "e>m>r"] {
            assert_eq!(class_of(s), InfimumClass::DeltaU, "{s}");
        }
        let safe = enumerate_methods().into_iter().filter(|m| m.is_safe()).count();
        assert_eq!(safe, 11);
    }

    proptest! {
        #[test]
        fn safe_classes_never_negative(u_min in -100.0f64..0.0, u_tau in -100.0f64..0.0, du in 0.0f64..50.0) {
            let t = infimum_table(u_min, u_tau, du).unwrap();
            for (method, v) in &t.per_method {
                if method.is_safe() {
                    prop_assert!(*v >= 0.0);
                }
            }
        }
    }
}
