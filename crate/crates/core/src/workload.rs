//! YCSB-style transaction generators.
//!
//! Keys follow a Zipfian distribution over `[0, records)` with key `r - 1`
//! holding rank `r`. Each worker owns a [`Generator`] seeded from the run
//! seed and its worker id.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, Txn};

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("mix must sum to 100, got {0}")]
    Mix(u32),
    #[error("theta must be in [0, 1), got {0}")]
    Theta(f64),
    #[error("records must be positive")]
    NoRecords,
    #[error("ops_per_txn must be between 1 and records")]
    Ops,
}

/// Percentages of reads, blind writes and read-modify-writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mix {
    pub read: u32,
    pub blind_write: u32,
    pub rmw: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub records: u64,
    pub ops_per_txn: usize,
    pub mix: Mix,
    pub theta: f64,
    pub value_size: usize,
    pub seed: u64,
}

pub const DEFAULT_RECORDS: u64 = 100_000;

impl WorkloadConfig {
    pub fn ycsb_a() -> Self {
        Self::with_mix(Mix {
            read: 50,
            blind_write: 50,
            rmw: 0,
        })
    }

    pub fn ycsb_b() -> Self {
        Self::with_mix(Mix {
            read: 95,
            blind_write: 5,
            rmw: 0,
        })
    }

    /// Only read-modify-writes: nothing is ever omittable.
    pub fn rmw_only() -> Self {
        Self::with_mix(Mix {
            read: 0,
            blind_write: 0,
            rmw: 100,
        })
    }

    fn with_mix(mix: Mix) -> Self {
        WorkloadConfig {
            records: DEFAULT_RECORDS,
            ops_per_txn: 4,
            mix,
            theta: 0.9,
            value_size: 8,
            seed: 1,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "ycsb-a" | "ycsb_a" => Some(Self::ycsb_a()),
            "ycsb-b" | "ycsb_b" => Some(Self::ycsb_b()),
            "rmw" => Some(Self::rmw_only()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let sum = self.mix.read + self.mix.blind_write + self.mix.rmw;
        if sum != 100 {
            return Err(WorkloadError::Mix(sum));
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(WorkloadError::Theta(self.theta));
        }
        if self.records == 0 {
            return Err(WorkloadError::NoRecords);
        }
        if self.ops_per_txn == 0 || self.ops_per_txn as u64 > self.records {
            return Err(WorkloadError::Ops);
        }
        Ok(())
    }
}

/// Named presets.
pub fn presets() -> Vec<(&'static str, WorkloadConfig)> {
    vec![
        ("ycsb-a", WorkloadConfig::ycsb_a()),
        ("ycsb-b", WorkloadConfig::ycsb_b()),
        ("rmw", WorkloadConfig::rmw_only()),
    ]
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn worker_seed(seed: u64, worker: u64) -> u64 {
    splitmix64(seed ^ splitmix64(worker))
}

/// Zipfian key sampler.
#[derive(Debug, Clone)]
pub struct ZipfKeys {
    dist: Zipf<f64>,
    rng: ChaCha8Rng,
}

impl ZipfKeys {
    pub fn new(records: u64, theta: f64, seed: u64) -> Self {
        ZipfKeys {
            dist: Zipf::new(records, theta).expect("records > 0 and theta >= 0"),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_key(&mut self) -> u64 {
        self.dist.sample(&mut self.rng) as u64 - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Access {
    pub kind: OpKind,
    pub key: u64,
}

/// Per-worker transaction generator.
#[derive(Debug, Clone)]
pub struct Generator {
    config: WorkloadConfig,
    keys: ZipfKeys,
    rng: ChaCha8Rng,
}

impl Generator {
    pub fn new(config: &WorkloadConfig, worker: u64) -> Result<Self, WorkloadError> {
        config.validate()?;
        let seed = worker_seed(config.seed, worker);
        Ok(Generator {
            config: config.clone(),
            keys: ZipfKeys::new(config.records, config.theta, seed),
            rng: ChaCha8Rng::seed_from_u64(splitmix64(seed)),
        })
    }

    pub fn config(&self) -> &WorkloadConfig {
        &self.config
    }

    /// The next transaction's accesses. A read-modify-write expands to a
    /// read followed by a write of the same key.
    pub fn next_txn(&mut self) -> Vec<Access> {
        let mut keys: Vec<u64> = Vec::with_capacity(self.config.ops_per_txn);
        let mut out = Vec::with_capacity(self.config.ops_per_txn + 2);
        while keys.len() < self.config.ops_per_txn {
            let k = self.keys.next_key();
            if keys.contains(&k) {
                continue;
            }
            keys.push(k);
            let roll = self.rng.gen_range(0..100);
            if roll < self.config.mix.read {
                out.push(Access {
                    kind: OpKind::Read,
                    key: k,
                });
            } else if roll < self.config.mix.read + self.config.mix.blind_write {
                out.push(Access {
                    kind: OpKind::Write,
                    key: k,
                });
            } else {
                out.push(Access {
                    kind: OpKind::Read,
                    key: k,
                });
                out.push(Access {
                    kind: OpKind::Write,
                    key: k,
                });
            }
        }
        out
    }

    /// A fresh value for a write.
    pub fn value(&mut self) -> Vec<u8> {
        let mut v = vec![0u8; self.config.value_size];
        self.rng.fill(&mut v[..]);
        v
    }
}

/// Runs `accesses` inside `txn`. Written values come from `value`.
pub fn execute(
    txn: &mut Txn<'_>,
    accesses: &[Access],
    mut value: impl FnMut(u64) -> Vec<u8>,
) -> Result<(), EngineError> {
    for a in accesses {
        match a.kind {
            OpKind::Read => {
                txn.read(a.key)?;
            }
            OpKind::Write => txn.write(a.key, &value(a.key))?,
        }
    }
    Ok(())
}

/// The probability of rank 1 under Zipf(n, theta), from the harmonic sum.
pub fn top_rank_weight(records: u64, theta: f64) -> f64 {
    let h: f64 = (1..=records).map(|r| (r as f64).powf(-theta)).sum();
    1.0 / h
}
