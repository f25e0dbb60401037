use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng as _;

use super::{MilpInstance, Row, RowSense};
use crate::rng::{seeded, Rng};
use crate::{Error, Result};

const MAX_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    IndependentSet,
    SetCover,
    CombAuction,
    Knapsack,
    SetPacking,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::IndependentSet,
        Family::SetCover,
        Family::CombAuction,
        Family::Knapsack,
        Family::SetPacking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::IndependentSet => "independent_set",
            Family::SetCover => "set_cover",
            Family::CombAuction => "comb_auction",
            Family::Knapsack => "knapsack",
            Family::SetPacking => "set_packing",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Family::IndependentSet => "is",
            Family::SetCover => "sc",
            Family::CombAuction => "ca",
            Family::Knapsack => "kp",
            Family::SetPacking => "pac",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s || f.short() == s)
            .ok_or_else(|| Error::Argument(format!("unknown family `{s}`")))
    }
}

/// Size knobs per family. Defaults are desk-scale (30-50 binaries).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyParams {
    IndependentSet { nodes: usize, edge_prob: f64 },
    SetCover { rows: usize, cols: usize, density: f64 },
    CombAuction { items: usize, bids: usize, max_bundle: usize },
    Knapsack { items: usize },
    SetPacking { rows: usize, cols: usize, density: f64 },
}

impl FamilyParams {
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::IndependentSet => FamilyParams::IndependentSet { nodes: 40, edge_prob: 0.1 },
            Family::SetCover => FamilyParams::SetCover { rows: 30, cols: 40, density: 0.12 },
            Family::CombAuction => FamilyParams::CombAuction { items: 30, bids: 40, max_bundle: 5 },
            Family::Knapsack => FamilyParams::Knapsack { items: 30 },
            Family::SetPacking => FamilyParams::SetPacking { rows: 20, cols: 40, density: 0.1 },
        }
    }

    /// Same family with its variable count set to `vars`, other dimensions
    /// scaled proportionally to the defaults.
    pub fn with_vars(family: Family, vars: usize) -> Self {
        let vars = vars.max(1);
        let scale = |default_other: usize, default_vars: usize| {
            ((default_other * vars) as f64 / default_vars as f64).round().max(1.0) as usize
        };
        match family {
            Family::IndependentSet => FamilyParams::IndependentSet { nodes: vars, edge_prob: 4.0 / vars.max(5) as f64 },
            Family::SetCover => FamilyParams::SetCover { rows: scale(30, 40), cols: vars, density: 0.12_f64.max(3.0 / vars as f64).min(1.0) },
            Family::CombAuction => FamilyParams::CombAuction { items: scale(30, 40), bids: vars, max_bundle: 5 },
            Family::Knapsack => FamilyParams::Knapsack { items: vars },
            Family::SetPacking => FamilyParams::SetPacking { rows: scale(20, 40), cols: vars, density: 0.1_f64.max(2.0 / vars as f64).min(1.0) },
        }
    }

    pub fn family(&self) -> Family {
        match self {
            FamilyParams::IndependentSet { .. } => Family::IndependentSet,
            FamilyParams::SetCover { .. } => Family::SetCover,
            FamilyParams::CombAuction { .. } => Family::CombAuction,
            FamilyParams::Knapsack { .. } => Family::Knapsack,
            FamilyParams::SetPacking { .. } => Family::SetPacking,
        }
    }

    fn validate(&self) -> Result<()> {
        let prob_ok = |p: f64| p > 0.0 && p <= 1.0;
        let ok = match *self {
            FamilyParams::IndependentSet { nodes, edge_prob } => nodes >= 1 && prob_ok(edge_prob),
            FamilyParams::SetCover { rows, cols, density } => rows >= 1 && cols >= 1 && prob_ok(density),
            FamilyParams::CombAuction { items, bids, max_bundle } => items >= 1 && bids >= 1 && max_bundle >= 1,
            FamilyParams::Knapsack { items } => items >= 1,
            FamilyParams::SetPacking { rows, cols, density } => rows >= 1 && cols >= 1 && prob_ok(density),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!("invalid generator parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorConfig {
    pub params: FamilyParams,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn new(family: Family, seed: u64) -> Self {
        GeneratorConfig { params: FamilyParams::default_for(family), seed }
    }

    pub fn family(&self) -> Family {
        self.params.family()
    }
}

/// Generates a seeded instance whose family feasibility witness holds
/// (`x = 0` for packing-type families, `x = 1` for set cover).
pub fn generate(config: &GeneratorConfig) -> Result<MilpInstance> {
    config.params.validate()?;
    let mut rng = seeded(config.seed);
    let family = config.family();
    let name = format!("{}_{:016x}", family.short(), config.seed);
    let tag = family.name();
    match config.params {
        FamilyParams::IndependentSet { nodes, edge_prob } => {
            let mut rows = Vec::new();
            for u in 0..nodes {
                for v in (u + 1)..nodes {
                    if rng.gen::<f64>() < edge_prob {
                        rows.push(Row::new(vec![u, v], vec![1.0, 1.0], RowSense::Le, 1.0));
                    }
                }
            }
            MilpInstance::binary(name, tag, true, vec![-1.0; nodes], rows)
        }
        FamilyParams::SetCover { rows, cols, density } => {
            for _ in 0..MAX_RETRIES {
                if let Some(inst) = try_set_cover(&mut rng, &name, rows, cols, density)? {
                    return Ok(inst);
                }
            }
            Err(Error::Generation(format!(
                "set cover with {rows} rows, {cols} cols, density {density}: a row stayed empty after {MAX_RETRIES} attempts"
            )))
        }
        FamilyParams::CombAuction { items, bids, max_bundle } => {
            let base: Vec<f64> = (0..items).map(|_| rng.gen_range(5..=15) as f64).collect();
            let mut bidders_of_item = vec![Vec::new(); items];
            let mut values = Vec::with_capacity(bids);
            for b in 0..bids {
                let size = rng.gen_range(1..=max_bundle.min(items));
                let mut bundle = sample(&mut rng, items, size).into_vec();
                bundle.sort_unstable();
                let noise = rng.gen_range(0..=5 * size) as f64;
                values.push(bundle.iter().map(|&i| base[i]).sum::<f64>() + noise);
                for i in bundle {
                    bidders_of_item[i].push(b);
                }
            }
            let rows = bidders_of_item
                .into_iter()
                .filter(|bs| !bs.is_empty())
                .map(|bs| {
                    let k = bs.len();
                    Row::new(bs, vec![1.0; k], RowSense::Le, 1.0)
                })
                .collect();
            MilpInstance::binary(name, tag, true, values.into_iter().map(|v| -v).collect(), rows)
        }
        FamilyParams::Knapsack { items } => {
            let values: Vec<f64> = (0..items).map(|_| rng.gen_range(1..=100) as f64).collect();
            let weights: Vec<f64> = (0..items).map(|_| rng.gen_range(1..=100) as f64).collect();
            let capacity = (0.5 * weights.iter().sum::<f64>()).round();
            knapsack_from(name, &values, &weights, capacity)
        }
        FamilyParams::SetPacking { rows, cols, density } => {
            let mut out = Vec::with_capacity(rows);
            for _ in 0..rows {
                let idx: Vec<usize> = (0..cols).filter(|_| rng.gen::<f64>() < density).collect();
                if !idx.is_empty() {
                    let k = idx.len();
                    out.push(Row::new(idx, vec![1.0; k], RowSense::Le, 1.0));
                }
            }
            MilpInstance::binary(name, tag, true, vec![-1.0; cols], out)
        }
    }
}

fn try_set_cover(
    rng: &mut Rng,
    name: &str,
    rows: usize,
    cols: usize,
    density: f64,
) -> Result<Option<MilpInstance>> {
    let mut out = Vec::with_capacity(rows);
    let mut empty = false;
    for _ in 0..rows {
        let idx: Vec<usize> = (0..cols).filter(|_| rng.gen::<f64>() < density).collect();
        empty |= idx.is_empty();
        let k = idx.len();
        out.push(Row::new(idx, vec![1.0; k], RowSense::Ge, 1.0));
    }
    let costs: Vec<f64> = (0..cols).map(|_| rng.gen_range(1..=100) as f64).collect();
    if empty {
        return Ok(None);
    }
    MilpInstance::binary(name, Family::SetCover.name(), false, costs, out).map(Some)
}

/// Single-row 0/1 knapsack `max v'x s.t. w'x <= capacity`.
pub fn knapsack_from(
    name: impl Into<String>,
    values: &[f64],
    weights: &[f64],
    capacity: f64,
) -> Result<MilpInstance> {
    if values.len() != weights.len() {
        return Err(Error::Argument("values and weights differ in length".into()));
    }
    let (idx, coefs): (Vec<usize>, Vec<f64>) = weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w != 0.0)
        .map(|(j, &w)| (j, w))
        .unzip();
    let rows = if idx.is_empty() {
        vec![]
    } else {
        vec![Row::new(idx, coefs, RowSense::Le, capacity)]
    };
    MilpInstance::binary(
        name,
        Family::Knapsack.name(),
        true,
        values.iter().map(|v| -v).collect(),
        rows,
    )
}
