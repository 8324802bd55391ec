use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::HarnessError;
use crate::fusion::{diff_operand_tags, FeatureTag};

/// A named subset of feature sets. Differential features are kept when both
/// of their operand sets are included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub tags: BTreeSet<FeatureTag>,
}

pub const SCENARIO_NAMES: [&str; 8] = ["S_ONLY", "S_P_LOS", "S_P_LOS_TR", "S_R_LOS", "S_R_LOS_TR", "S_BE", "S_ENV", "S_ALL"];

impl Scenario {
    pub fn new(name: &str, tags: impl IntoIterator<Item = FeatureTag>) -> Self {
        let mut tags: BTreeSet<FeatureTag> = tags.into_iter().collect();
        tags.insert(FeatureTag::Survey);
        tags.remove(&FeatureTag::Diff);
        Self { name: name.to_string(), tags }
    }

    pub fn named(name: &str) -> Result<Self, HarnessError> {
        use FeatureTag::*;
        let unimodal = [WalkingLos, CyclingLos, CarLos];
        let tags: Vec<FeatureTag> = match name {
            "S_ONLY" => vec![],
            "S_P_LOS" => [&unimodal[..], &[PlanPtLos]].concat(),
            "S_P_LOS_TR" => [&unimodal[..], &[ECarLos, PlanPtLos]].concat(),
            "S_R_LOS" => [&unimodal[..], &[RealPtLos]].concat(),
            "S_R_LOS_TR" => [&unimodal[..], &[ECarLos, RealPtLos]].concat(),
            "S_BE" => vec![BuiltEnv],
            "S_ENV" => vec![Weather, Pollution],
            "S_ALL" => FeatureTag::ALL.to_vec(),
            _ => return Err(HarnessError::Config(format!("unknown scenario {name}"))),
        };
        Ok(Self::new(name, tags))
    }

    pub fn includes_diff(&self) -> bool {
        self.tags.iter().filter(|t| t.is_los()).count() >= 2
    }

    pub fn keeps(&self, name: &str, tag: FeatureTag) -> bool {
        if tag == FeatureTag::Diff {
            return diff_operand_tags(name).is_some_and(|(a, b)| self.tags.contains(&a) && self.tags.contains(&b));
        }
        self.tags.contains(&tag)
    }
}

/// Keeps the columns of `ds` that belong to the scenario, in their original order.
pub fn select_features(ds: &Dataset, scenario: &Scenario) -> Dataset {
    let cols: Vec<usize> = ds.columns.iter().enumerate().filter(|(_, c)| scenario.keeps(&c.name, c.tag)).map(|(i, _)| i).collect();
    ds.columns_subset(&cols)
}
