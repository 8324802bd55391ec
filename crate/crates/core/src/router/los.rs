use serde::{Deserialize, Serialize};

use super::transit::Connection;
use crate::gtfs::VehicleKind;

/// Fare tiers by duration of the fastest connection: below `bounds_s[0]`,
/// below `bounds_s[1]`, up to and including `bounds_s[2]`, and above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PricingTable {
    pub bounds_s: [f64; 3],
    pub prices: [f64; 4],
}

impl Default for PricingTable {
    fn default() -> Self {
        Self { bounds_s: [1200.0, 4500.0, 5400.0], prices: [1.0, 2.0, 3.0, 4.0] }
    }
}

impl PricingTable {
    pub fn tier(&self, duration_s: f64) -> usize {
        if duration_s < self.bounds_s[0] {
            1
        } else if duration_s < self.bounds_s[1] {
            2
        } else if duration_s <= self.bounds_s[2] {
            3
        } else {
            4
        }
    }

    pub fn price(&self, duration_s: f64) -> f64 {
        self.prices[self.tier(duration_s) - 1]
    }
}

pub const PT_QUANTITIES: [&str; 6] = ["Duration", "Distance", "Speed", "WalkDistance", "WaitTime", "Transfers"];

/// Aggregated public-transport level of service, in a fixed feature order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtLosFeatures {
    pub suffix: String,
    pub values: Vec<(String, f64)>,
}

impl PtLosFeatures {
    /// Value by name without suffix, e.g. `minDuration`.
    pub fn get(&self, base: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == base).map(|(_, v)| *v)
    }

    pub fn named(&self) -> impl Iterator<Item = (String, f64)> + '_ {
        self.values.iter().map(|(n, v)| (format!("{n}{}", self.suffix), *v))
    }

    pub fn has_transit(&self) -> bool {
        self.get("hasTransit") == Some(1.0)
    }
}

fn los_suffix(real: bool) -> &'static str {
    if real {
        "_TRANSIT_REAL"
    } else {
        "_TRANSIT"
    }
}

/// Feature names (without suffix) in emission order.
pub fn pt_los_names() -> Vec<String> {
    let mut names = Vec::new();
    for q in PT_QUANTITIES {
        for stat in ["min", "avg", "max"] {
            names.push(format!("{stat}{q}"));
        }
    }
    for k in VehicleKind::ALL {
        for stat in ["min", "max"] {
            names.push(format!("{stat}{}Share", k.feature_label()));
        }
    }
    names.push("minCost".into());
    names.push("hasTransit".into());
    names
}

/// Statistics over a connection set with uniform weighting.
///
/// `minCost` is the price of the fastest connection, or 0 when no connection
/// walks less than `direct_walk_m`. An empty set yields `sentinel` for every
/// numeric quantity, `minCost = 0` and `hasTransit = 0`.
pub fn aggregate_pt_los(connections: &[Connection], direct_walk_m: f64, pricing: &PricingTable, real: bool, sentinel: f64) -> PtLosFeatures {
    let suffix = los_suffix(real).to_string();
    let names = pt_los_names();
    if connections.is_empty() {
        let values = names
            .into_iter()
            .map(|n| {
                let v = match n.as_str() {
                    "minCost" | "hasTransit" => 0.0,
                    _ => sentinel,
                };
                (n, v)
            })
            .collect();
        return PtLosFeatures { suffix, values };
    }
    let quantity = |c: &Connection, q: &str| -> f64 {
        match q {
            "Duration" => c.total_duration_s as f64,
            "Distance" => c.total_distance_m,
            "Speed" => {
                if c.total_duration_s > 0 {
                    c.total_distance_m / c.total_duration_s as f64
                } else {
                    0.0
                }
            }
            "WalkDistance" => c.walk_distance_m,
            "WaitTime" => c.wait_time_s as f64,
            "Transfers" => c.transfers as f64,
            _ => unreachable!(),
        }
    };
    let n = connections.len() as f64;
    let mut values = Vec::with_capacity(names.len());
    for q in PT_QUANTITIES {
        let xs: Vec<f64> = connections.iter().map(|c| quantity(c, q)).collect();
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let avg = (xs.iter().sum::<f64>() / n).clamp(min, max);
        values.push((format!("min{q}"), min));
        values.push((format!("avg{q}"), avg));
        values.push((format!("max{q}"), max));
    }
    for k in VehicleKind::ALL {
        let xs: Vec<f64> = connections.iter().map(|c| c.mode_share.get(&k).copied().unwrap_or(0.0)).collect();
        values.push((format!("min{}Share", k.feature_label()), xs.iter().copied().fold(f64::INFINITY, f64::min)));
        values.push((format!("max{}Share", k.feature_label()), xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
    }
    let fastest = connections.iter().map(|c| c.total_duration_s).min().unwrap_or(0) as f64;
    let walk_saving = connections.iter().any(|c| c.walk_distance_m < direct_walk_m);
    values.push(("minCost".into(), if walk_saving { pricing.price(fastest) } else { 0.0 }));
    values.push(("hasTransit".into(), 1.0));
    PtLosFeatures { suffix, values }
}
