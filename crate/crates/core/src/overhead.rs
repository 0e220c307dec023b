//! Memory and computation overhead of parity protection versus a
//! checksum-based ABFT scheme, in XOR-equivalent operations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cost weights, all in XOR equivalents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    /// XORs to compute the parity of one 32-bit word (31-gate reduction tree).
    pub xor_per_word_encode: u64,
    pub xor_per_word_check: u64,
    pub add_to_xor: f64,
    /// `[low, high]` XOR cost of one multiplication.
    pub mul_to_xor_range: [f64; 2],
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            xor_per_word_encode: 31,
            xor_per_word_check: 31,
            add_to_xor: 2.0,
            mul_to_xor_range: [10.0, 50.0],
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.mul_to_xor_range;
        if self.xor_per_word_encode == 0 || self.xor_per_word_check == 0 || !(self.add_to_xor > 0.0) || !(lo > 0.0) || lo > hi {
            return Err(Error::Config(format!("invalid cost model {self:?}")));
        }
        Ok(())
    }
}

/// Published ABFT cost for one model: operation counts plus extra memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbftCost {
    pub multiplies: f64,
    pub adds: f64,
    pub memory_overhead_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParityCost {
    pub xor_count: f64,
    pub memory_overhead_fraction: f64,
}

/// One parity check per parameter per protected pass; no extra storage.
pub fn parity_cost(num_params: u64, model: &CostModel) -> Result<ParityCost> {
    if num_params == 0 {
        return Err(Error::Config("num_params must be positive".into()));
    }
    Ok(ParityCost {
        xor_count: model.xor_per_word_check as f64 * num_params as f64,
        memory_overhead_fraction: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// ABFT XOR-equivalents over parity XORs at the cheapest multiply weight.
    pub factor_low: f64,
    /// Same ratio at the most expensive multiply weight.
    pub factor_high: f64,
    /// ABFT memory overhead minus parity memory overhead, as a fraction.
    pub memory_delta: f64,
    /// Multiply weight above which the factor exceeds 500.
    pub mul_weight_for_500x: f64,
}

pub fn abft_xor_equivalent(abft: &AbftCost, mul_weight: f64, model: &CostModel) -> f64 {
    abft.multiplies * mul_weight + abft.adds * model.add_to_xor
}

pub fn compare(parity: &ParityCost, abft: &AbftCost, model: &CostModel) -> Result<Comparison> {
    if !(parity.xor_count > 0.0) {
        return Err(Error::Config("parity xor_count must be positive".into()));
    }
    let [lo, hi] = model.mul_to_xor_range;
    let mul_weight_for_500x = if abft.multiplies > 0.0 {
        (500.0 * parity.xor_count - abft.adds * model.add_to_xor) / abft.multiplies
    } else {
        f64::INFINITY
    };
    Ok(Comparison {
        factor_low: abft_xor_equivalent(abft, lo, model) / parity.xor_count,
        factor_high: abft_xor_equivalent(abft, hi, model) / parity.xor_count,
        memory_delta: abft.memory_overhead_fraction - parity.memory_overhead_fraction,
        mul_weight_for_500x,
    })
}

/// A row of the published comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverheadCase {
    pub network: String,
    pub num_params: u64,
    pub abft: AbftCost,
}

/// ViT-Base and DeiT-Base with ALBERTA's published multiply/add counts.
pub fn published_cases() -> Vec<OverheadCase> {
    vec![
        OverheadCase {
            network: "ViT_base".into(),
            num_params: 86_000_000,
            abft: AbftCost {
                multiplies: 124.85e9,
                adds: 126.66e6,
                memory_overhead_fraction: 0.25,
            },
        },
        OverheadCase {
            network: "DeiT_base".into(),
            num_params: 85_800_000,
            abft: AbftCost {
                multiplies: 125.48e9,
                adds: 127.10e6,
                memory_overhead_fraction: 0.25,
            },
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    pub network: String,
    pub num_params: u64,
    pub parity: ParityCost,
    pub abft: AbftCost,
    pub comparison: Comparison,
    /// Human-readable memory comparison, e.g. "memory: 0% vs 25%".
    pub memory: String,
}

pub fn overhead_table(cases: &[OverheadCase], model: &CostModel) -> Result<Vec<OverheadRow>> {
    model.validate()?;
    cases
        .iter()
        .map(|c| {
            let parity = parity_cost(c.num_params, model)?;
            let comparison = compare(&parity, &c.abft, model)?;
            Ok(OverheadRow {
                network: c.network.clone(),
                num_params: c.num_params,
                parity,
                abft: c.abft,
                comparison,
                memory: format!(
                    "memory: {}% vs {}%",
                    fmt_pct(parity.memory_overhead_fraction),
                    fmt_pct(c.abft.memory_overhead_fraction)
                ),
            })
        })
        .collect()
}

fn fmt_pct(f: f64) -> String {
    let p = f * 100.0;
    if (p - p.round()).abs() < 1e-9 {
        format!("{}", p.round() as i64)
    } else {
        format!("{p}")
    }
}
