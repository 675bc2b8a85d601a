use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::soldb::BudgetStamp;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("budget exhausted")]
pub struct BudgetExhausted;

/// Run-wide counters for both budget axes, shared by every lead agent.
#[derive(Debug)]
pub struct BudgetLedger {
    llm_limit: u64,
    eval_limit: u64,
    llm_used: AtomicU64,
    eval_used: AtomicU64,
}

fn charge(counter: &AtomicU64, limit: u64) -> Result<u64, BudgetExhausted> {
    counter
        .fetch_update(Ordering::AcqRel, Ordering::Acquire, |used| (used < limit).then_some(used + 1))
        .map(|prev| prev + 1)
        .map_err(|_| BudgetExhausted)
}

impl BudgetLedger {
    pub fn new(llm_limit: u64, eval_limit: u64) -> Self {
        BudgetLedger {
            llm_limit,
            eval_limit,
            llm_used: AtomicU64::new(0),
            eval_used: AtomicU64::new(0),
        }
    }

    pub fn charge_llm_call(&self) -> Result<u64, BudgetExhausted> {
        charge(&self.llm_used, self.llm_limit)
    }

    pub fn charge_evaluation(&self) -> Result<(), BudgetExhausted> {
        charge(&self.eval_used, self.eval_limit).map(drop)
    }

    pub fn llm_calls_used(&self) -> u64 {
        self.llm_used.load(Ordering::Acquire)
    }

    pub fn evaluations_used(&self) -> u64 {
        self.eval_used.load(Ordering::Acquire)
    }

    pub fn llm_limit(&self) -> u64 {
        self.llm_limit
    }

    pub fn eval_limit(&self) -> u64 {
        self.eval_limit
    }

    pub fn llm_exhausted(&self) -> bool {
        self.llm_calls_used() >= self.llm_limit
    }

    pub fn evaluations_exhausted(&self) -> bool {
        self.evaluations_used() >= self.eval_limit
    }

    pub fn exhausted(&self) -> bool {
        self.llm_exhausted() || self.evaluations_exhausted()
    }

    pub fn stamp(&self) -> BudgetStamp {
        BudgetStamp {
            llm_calls: self.llm_calls_used(),
            evaluations: self.evaluations_used(),
        }
    }
}
