//! Seeded bit-flip fault plans.
//!
//! A plan is a sorted list of distinct `(tensor, element, bit)` triples
//! sampled without replacement, so the realized bit error rate equals the
//! target exactly and no two flips cancel. Flipping is an involution:
//! applying the same plan twice restores the original words.

use std::io::{BufRead, Write};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::tensor::TensorF32;

/// Ratio of flipped parameter bits to total parameter bits, in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct BitErrorRate(f64);

impl BitErrorRate {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value <= 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::BitErrorRate(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for BitErrorRate {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BitErrorRate> for f64 {
    fn from(b: BitErrorRate) -> f64 {
        b.0
    }
}

/// What the BER is a fraction of.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BerDenominator {
    /// Total parameter bits (32 per element).
    #[default]
    Bits,
    /// Parameter count.
    Params,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "bit")]
pub enum InjectionMode {
    /// Any bit not in the exclusion set.
    #[default]
    RandomBit,
    /// Every flip hits this bit position; exclusions do not apply.
    FixedBit(u32),
}

pub const DEFAULT_EXCLUDED_BITS: [u32; 1] = [crate::bitcodec::EXPONENT_MSB];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub ber: BitErrorRate,
    pub excluded_bits: Vec<u32>,
    pub mode: InjectionMode,
    pub denominator: BerDenominator,
}

impl FaultSpec {
    pub fn random(ber: BitErrorRate) -> Self {
        Self {
            ber,
            excluded_bits: DEFAULT_EXCLUDED_BITS.to_vec(),
            mode: InjectionMode::RandomBit,
            denominator: BerDenominator::Bits,
        }
    }

    pub fn fixed_bit(ber: BitErrorRate, bit: u32) -> Self {
        Self {
            ber,
            excluded_bits: Vec::new(),
            mode: InjectionMode::FixedBit(bit),
            denominator: BerDenominator::Bits,
        }
    }

    /// Number of flips for a layout with `total_elements` parameters.
    pub fn fault_count(&self, total_elements: u64) -> u64 {
        let units = match self.denominator {
            BerDenominator::Bits => total_elements * 32,
            BerDenominator::Params => total_elements,
        };
        num_faults(units, self.ber)
    }

    /// Bit positions a random-mode flip may land on.
    pub fn allowed_bits(&self) -> Result<Vec<u32>> {
        match self.mode {
            InjectionMode::FixedBit(b) if b > 31 => Err(Error::BitPosition(b)),
            InjectionMode::FixedBit(b) => Ok(vec![b]),
            InjectionMode::RandomBit => {
                if let Some(&b) = self.excluded_bits.iter().find(|&&b| b > 31) {
                    return Err(Error::BitPosition(b));
                }
                Ok((0..32).filter(|b| !self.excluded_bits.contains(b)).collect())
            }
        }
    }
}

/// `round(units × ber)`. A result of 0 is kept: it means an empty plan.
pub fn num_faults(units: u64, ber: BitErrorRate) -> u64 {
    (units as f64 * ber.value()).round() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Flip {
    pub tensor: usize,
    pub element: usize,
    pub bit: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub seed: u64,
    pub ber: BitErrorRate,
    pub mode: InjectionMode,
    pub excluded_bits: Vec<u32>,
    pub denominator: BerDenominator,
    pub flips: Vec<Flip>,
}

impl FaultPlan {
    pub fn len(&self) -> usize {
        self.flips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flips.is_empty()
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }

    /// Number of distinct words receiving an odd number of flips; parity
    /// detects exactly these.
    pub fn odd_flip_words(&self) -> usize {
        let mut count = 0;
        let mut i = 0;
        while i < self.flips.len() {
            let (t, e) = (self.flips[i].tensor, self.flips[i].element);
            let mut j = i;
            while j < self.flips.len() && self.flips[j].tensor == t && self.flips[j].element == e {
                j += 1;
            }
            if (j - i) % 2 == 1 {
                count += 1;
            }
            i = j;
        }
        count
    }
}

pub fn write_plans_jsonl<W: Write>(mut w: W, plans: &[FaultPlan]) -> Result<()> {
    for p in plans {
        writeln!(w, "{}", p.to_json_line()?).map_err(|e| Error::io("<jsonl>", e))?;
    }
    Ok(())
}

pub fn read_plans_jsonl<R: BufRead>(r: R) -> Result<Vec<FaultPlan>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::io("<jsonl>", e))?;
        if !line.trim().is_empty() {
            out.push(FaultPlan::from_json_line(&line)?);
        }
    }
    Ok(out)
}

/// Element counts per tensor.
pub fn layout_of(params: &[TensorF32]) -> Vec<usize> {
    params.iter().map(TensorF32::len).collect()
}

/// Samples a plan over `layout` (element count per tensor).
///
/// Random mode draws distinct `(element, bit)` pairs uniformly over all
/// allowed positions; fixed-bit mode draws distinct elements.
pub fn plan_faults(layout: &[usize], spec: &FaultSpec, seed: u64) -> Result<FaultPlan> {
    if layout.is_empty() || layout.iter().all(|&n| n == 0) {
        return Err(Error::EmptyLayout);
    }
    let allowed = spec.allowed_bits()?;
    let total: u64 = layout.iter().map(|&n| n as u64).sum();
    let requested = spec.fault_count(total);
    let available = total * allowed.len() as u64;
    if requested > available {
        return Err(Error::TooManyFaults {
            requested,
            available,
        });
    }

    let mut starts = Vec::with_capacity(layout.len());
    let mut acc = 0usize;
    for &n in layout {
        starts.push(acc);
        acc += n;
    }

    let mut rng = rng_from_seed(seed);
    let per_element = allowed.len();
    let mut flips: Vec<Flip> = index::sample(&mut rng, available as usize, requested as usize)
        .into_iter()
        .map(|pos| {
            let global = pos / per_element;
            let bit = allowed[pos % per_element];
            // last tensor starting at or before `global`; never an empty one,
            // since an empty tensor shares its start with its successor
            let tensor = starts.partition_point(|&s| s <= global) - 1;
            Flip {
                tensor,
                element: global - starts[tensor],
                bit,
            }
        })
        .collect();
    flips.sort_unstable();

    let excluded_bits = match spec.mode {
        InjectionMode::RandomBit => {
            let mut e = spec.excluded_bits.clone();
            e.sort_unstable();
            e.dedup();
            e
        }
        InjectionMode::FixedBit(_) => Vec::new(),
    };

    Ok(FaultPlan {
        seed,
        ber: spec.ber,
        mode: spec.mode,
        excluded_bits,
        denominator: spec.denominator,
        flips,
    })
}

fn check_bounds(params: &[TensorF32], plan: &FaultPlan) -> Result<()> {
    for f in &plan.flips {
        let ok = f.bit < 32 && params.get(f.tensor).is_some_and(|t| f.element < t.len());
        if !ok {
            return Err(Error::PlanOutOfBounds {
                tensor: f.tensor,
                element: f.element,
                bit: f.bit,
            });
        }
    }
    Ok(())
}

/// Flips every planned bit in place. Bounds are checked before anything is
/// modified, so an invalid plan leaves `params` untouched.
pub fn apply_faults_in_place(params: &mut [TensorF32], plan: &FaultPlan) -> Result<()> {
    check_bounds(params, plan)?;
    for f in &plan.flips {
        let v = &mut params[f.tensor].data[f.element];
        *v = f32::from_bits(v.to_bits() ^ (1u32 << f.bit));
    }
    Ok(())
}

pub fn apply_faults(params: &[TensorF32], plan: &FaultPlan) -> Result<Vec<TensorF32>> {
    check_bounds(params, plan)?;
    let mut out = params.to_vec();
    apply_faults_in_place(&mut out, plan)?;
    Ok(out)
}

/// Undoes [`apply_faults_in_place`] for the same plan.
pub fn revert_faults_in_place(params: &mut [TensorF32], plan: &FaultPlan) -> Result<()> {
    apply_faults_in_place(params, plan)
}

pub fn revert_faults(params: &[TensorF32], plan: &FaultPlan) -> Result<Vec<TensorF32>> {
    apply_faults(params, plan)
}
