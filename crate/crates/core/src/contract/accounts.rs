use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::AgentId;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Account {
    Agent(AgentId),
    Escrow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PaymentKind {
    Escrow,
    Settlement,
    ProRata,
    Refund,
    Penalty,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FundsError {
    #[error("unknown account {0}")]
    UnknownAccount(AgentId),
    #[error("{account} holds {balance} cents, needs {needed}")]
    Insufficient { account: AgentId, balance: u64, needed: u64 },
    #[error("escrow pool holds {pool} cents, cannot release {needed}")]
    EscrowShort { pool: u64, needed: u64 },
}

/// Balances in euro-cents plus the shared escrow pool. Money only moves,
/// so `total()` is constant.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accounts {
    balances: BTreeMap<AgentId, u64>,
    escrow: u64,
}

impl Accounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open(&mut self, id: AgentId, balance: u64) {
        self.balances.insert(id, balance);
    }

    pub fn balance(&self, id: &AgentId) -> u64 {
        self.balances.get(id).copied().unwrap_or(0)
    }

    pub fn escrow_pool(&self) -> u64 {
        self.escrow
    }

    pub fn total(&self) -> u64 {
        self.balances.values().sum::<u64>() + self.escrow
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AgentId, u64)> {
        self.balances.iter().map(|(k, v)| (k, *v))
    }

    fn slot(&mut self, id: &AgentId) -> Result<&mut u64, FundsError> {
        self.balances
            .get_mut(id)
            .ok_or_else(|| FundsError::UnknownAccount(id.clone()))
    }

    fn debit(&mut self, account: &Account, amount: u64) -> Result<(), FundsError> {
        match account {
            Account::Escrow => {
                if self.escrow < amount {
                    return Err(FundsError::EscrowShort { pool: self.escrow, needed: amount });
                }
                self.escrow -= amount;
            }
            Account::Agent(id) => {
                let b = self.slot(id)?;
                if *b < amount {
                    return Err(FundsError::Insufficient {
                        account: id.clone(),
                        balance: *b,
                        needed: amount,
                    });
                }
                *b -= amount;
            }
        }
        Ok(())
    }

    fn credit(&mut self, account: &Account, amount: u64) -> Result<(), FundsError> {
        match account {
            Account::Escrow => self.escrow += amount,
            Account::Agent(id) => *self.slot(id)? += amount,
        }
        Ok(())
    }

    /// Moves `amount` cents. Nothing changes on error.
    pub fn transfer(&mut self, from: &Account, to: &Account, amount: u64) -> Result<(), FundsError> {
        if let Account::Agent(id) = to {
            if !self.balances.contains_key(id) {
                return Err(FundsError::UnknownAccount(id.clone()));
            }
        }
        self.debit(from, amount)?;
        self.credit(to, amount)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transfers_conserve_total() {
        let mut a = Accounts::new();
        a.open("ev".into(), 1000);
        a.open("st".into(), 0);
        let ev = Account::Agent("ev".into());
        let st = Account::Agent("st".into());
        a.transfer(&ev, &Account::Escrow, 400).unwrap();
        a.transfer(&Account::Escrow, &st, 300).unwrap();
        a.transfer(&Account::Escrow, &ev, 100).unwrap();
        assert_eq!(a.balance(&"ev".into()), 700);
        assert_eq!(a.balance(&"st".into()), 300);
        assert_eq!(a.escrow_pool(), 0);
        assert_eq!(a.total(), 1000);
    }

    #[test]
    fn failed_transfer_changes_nothing() {
        let mut a = Accounts::new();
        a.open("ev".into(), 10);
        let before = a.clone();
        assert!(a.transfer(&Account::Agent("ev".into()), &Account::Escrow, 11).is_err());
        assert!(a.transfer(&Account::Agent("ev".into()), &Account::Agent("nobody".into()), 1).is_err());
        assert!(a.transfer(&Account::Escrow, &Account::Agent("ev".into()), 1).is_err());
        assert_eq!(a, before);
    }
}
