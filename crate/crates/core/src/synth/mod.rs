//! Synthetic city generator producing a coherent fixture set for every stage.

mod kinematics;
mod network;

pub use kinematics::{position_at, sample_trace, Halt, Waypoint};
pub use network::{grid_street_graph, random_transit_city, GridSpec};
mod city;

pub use city::{fixture_config, generate_city, CityReport, CitySpec, GridConfig, ModeRule, RuleInputs, SurveyConfig, SynthError, TraceConfig, TransitConfig};
