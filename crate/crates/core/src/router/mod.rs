//! Street routing for walk, cycle and car, public-transport connection
//! search within a mode-choice window, and aggregation of connections into
//! level-of-service features.

mod los;
mod street;
mod transit;

use thiserror::Error;

pub use los::{aggregate_pt_los, pt_los_names, PricingTable, PtLosFeatures, PT_QUANTITIES};
pub use street::{route_unimodal, ModeSet, RouteEstimate, Speeds, StreetEdge, StreetGraph, StreetMode, MAX_SNAP_M};
pub use transit::{Connection, Leg, LegMode, ModeChoiceWindow, TransitNetwork, TransitParams, TripView};

#[derive(Debug, Error)]
pub enum RouterError {
    #[error("no route between the requested points")]
    NoRoute,
    #[error("invalid street graph: {0}")]
    InvalidGraph(String),
    #[error("cannot load street graph: {0}")]
    Load(String),
    #[error("invalid mode-choice window ({delta_s}, {delta_f})")]
    InvalidWindow { delta_s: i64, delta_f: i64 },
}
