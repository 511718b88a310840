//! Multiply-accumulate accounting.
//!
//! Only the core MAC paths are counted: dense products, convolutions and
//! outer products. Element-wise work (activations, Hadamard products, the
//! optimizer recurrences) is deliberately left out, so the totals are a lower
//! bound on the arithmetic actually performed. One MAC is two FLOPs.

use std::fmt;
use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};

/// Where a MAC was spent during one parameter update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Feed-forward pass, including forward initialization of PC activities.
    Forward,
    /// Moving an error signal to a hidden layer: Θᵀδ in BP, Ψδ in DFA/DKP.
    ErrorTransport,
    /// Outer products that produce forward and feedback weight gradients.
    WeightUpdate,
    /// Predictions and Jacobian-transpose products inside inference sweeps.
    Inference,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Forward, Phase::ErrorTransport, Phase::WeightUpdate, Phase::Inference];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Forward => "forward",
            Phase::ErrorTransport => "error_transport",
            Phase::WeightUpdate => "weight_update",
            Phase::Inference => "inference",
        }
    }

    fn index(self) -> usize {
        match self {
            Phase::Forward => 0,
            Phase::ErrorTransport => 1,
            Phase::WeightUpdate => 2,
            Phase::Inference => 3,
        }
    }

    fn from_index(i: u8) -> Phase {
        Phase::ALL[i as usize]
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// MAC counters per [`Phase`]. Shared by reference; counters only grow.
#[derive(Debug, Default)]
pub struct FlopLedger {
    macs: [AtomicU64; 4],
    current: AtomicU8,
}

impl FlopLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the phase that subsequent [`FlopLedger::record`] calls charge.
    pub fn enter(&self, phase: Phase) {
        self.current.store(phase.index() as u8, Ordering::Relaxed);
    }

    pub fn phase(&self) -> Phase {
        Phase::from_index(self.current.load(Ordering::Relaxed))
    }

    pub fn record(&self, macs: u64) {
        self.record_in(self.phase(), macs);
    }

    pub fn record_in(&self, phase: Phase, macs: u64) {
        self.macs[phase.index()].fetch_add(macs, Ordering::Relaxed);
    }

    pub fn macs(&self, phase: Phase) -> u64 {
        self.macs[phase.index()].load(Ordering::Relaxed)
    }

    pub fn flops(&self, phase: Phase) -> u64 {
        2 * self.macs(phase)
    }

    pub fn total_macs(&self) -> u64 {
        Phase::ALL.iter().map(|&p| self.macs(p)).sum()
    }

    pub fn total_flops(&self) -> u64 {
        2 * self.total_macs()
    }

    /// Everything except the forward pass.
    pub fn backward_macs(&self) -> u64 {
        self.total_macs() - self.macs(Phase::Forward)
    }

    pub fn snapshot(&self) -> LedgerSummary {
        LedgerSummary {
            macs: Phase::ALL.map(|p| (p, self.macs(p))),
        }
    }
}

/// Frozen copy of a ledger's counters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerSummary {
    pub macs: [(Phase, u64); 4],
}

impl LedgerSummary {
    pub fn macs(&self, phase: Phase) -> u64 {
        self.macs.iter().find(|(p, _)| *p == phase).map_or(0, |&(_, m)| m)
    }

    pub fn flops(&self, phase: Phase) -> u64 {
        2 * self.macs(phase)
    }

    pub fn total_macs(&self) -> u64 {
        self.macs.iter().map(|&(_, m)| m).sum()
    }

    pub fn total_flops(&self) -> u64 {
        2 * self.total_macs()
    }

    pub fn backward_flops(&self) -> u64 {
        self.total_flops() - self.flops(Phase::Forward)
    }
}

/// Charges `macs` to the ledger's current phase when a ledger is attached.
#[inline]
pub fn charge(ledger: Option<&FlopLedger>, macs: u64) {
    if let Some(l) = ledger {
        l.record(macs);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flops_are_twice_macs() {
        let l = FlopLedger::new();
        l.enter(Phase::Inference);
        l.record(21);
        l.record_in(Phase::Forward, 4);
        assert_eq!(l.macs(Phase::Inference), 21);
        assert_eq!(l.flops(Phase::Inference), 42);
        assert_eq!(l.total_flops(), 2 * l.total_macs());
        assert_eq!(l.backward_macs(), 21);
        let s = l.snapshot();
        assert_eq!(s.total_flops(), 50);
        assert_eq!(s.backward_flops(), 42);
    }
}
