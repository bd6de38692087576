//! Probability that a given majority example of a label is used by at least
//! one of `c` undersampled classifiers, in closed form and by simulation.

use std::io::Write;

use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampling::{tag, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploitationQuery {
    pub minority: usize,
    pub majority: usize,
    pub chains: usize,
    pub runs: usize,
}

impl ExploitationQuery {
    pub fn new(minority: usize, majority: usize, chains: usize, runs: usize) -> Result<Self> {
        if minority == 0 || majority < minority {
            return Err(Error::Config(format!(
                "need 0 < m <= M, got m = {minority}, M = {majority}"
            )));
        }
        if chains == 0 || runs == 0 {
            return Err(Error::Config("chains and runs must be positive".into()));
        }
        Ok(Self {
            minority,
            majority,
            chains,
            runs,
        })
    }
}

/// `1 − (1 − m/M)^c`, treating each chain's selection as independent.
pub fn exploitation_probability(q: &ExploitationQuery) -> f64 {
    let miss = 1.0 - q.minority as f64 / q.majority as f64;
    1.0 - miss.powi(q.chains as i32)
}

/// Fraction of runs in which majority example 0 survives at least one of `c`
/// draws of `m` out of `M` majority examples without replacement.
pub fn exploitation_probability_mc(q: &ExploitationQuery, stream: RngStream) -> f64 {
    let hits = (0..q.runs)
        .into_par_iter()
        .filter(|&run| {
            let mut rng = stream.child(run as u64).rng();
            (0..q.chains).any(|_| {
                index::sample(&mut rng, q.majority, q.minority)
                    .iter()
                    .any(|i| i == 0)
            })
        })
        .count();
    hits as f64 / q.runs as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepParams {
    /// Training-set size; the majority count is `n − m`.
    pub n: usize,
    pub chains: usize,
    pub m_start: usize,
    pub m_end: usize,
    pub m_step: usize,
    pub runs: usize,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            n: 1000,
            chains: 10,
            m_start: 20,
            m_end: 400,
            m_step: 20,
            runs: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub m: usize,
    pub majority: usize,
    pub imr: f64,
    pub p_closed: f64,
    pub p_mc: f64,
}

pub fn sweep(params: &SweepParams, stream: RngStream) -> Result<Vec<SweepRow>> {
    if params.m_step == 0 {
        return Err(Error::Config("m-step must be positive".into()));
    }
    if params.m_start == 0 || params.m_start > params.m_end || 2 * params.m_end > params.n {
        return Err(Error::Config(format!(
            "minority range {}..={} must lie within (0, n/2] for n = {}",
            params.m_start, params.m_end, params.n
        )));
    }
    (params.m_start..=params.m_end)
        .step_by(params.m_step)
        .map(|m| {
            let q = ExploitationQuery::new(m, params.n - m, params.chains, params.runs)?;
            Ok(SweepRow {
                m,
                majority: q.majority,
                imr: q.majority as f64 / m as f64,
                p_closed: exploitation_probability(&q),
                p_mc: exploitation_probability_mc(&q, stream.derive(&[tag::MONTE_CARLO, m as u64])),
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
