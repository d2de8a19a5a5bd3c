use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::identity::AgentId;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvMetrics {
    pub id: AgentId,
    /// Completed contract and back home when the run ended.
    pub charged_by_deadline: bool,
    pub home: bool,
    pub stranded: bool,
    /// Won an auction and set out.
    pub admitted: bool,
    pub energy_received_wh: u64,
    /// Energy payments to stations, fees included.
    pub paid_cents: u64,
    pub penalties_received_cents: u64,
    pub distance_m: u64,
    pub driven_energy_wh: u64,
    pub initial_soc_wh: u64,
    pub final_soc_wh: u64,
    pub initial_balance: u64,
    pub final_balance: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StationMetrics {
    pub id: AgentId,
    /// Station itself, or its private owner.
    pub revenue_account: AgentId,
    pub contracts: u64,
    pub energy_sold_wh: u64,
    pub revenue_cents: u64,
    pub penalties_paid_cents: u64,
    /// Charging ticks over slots times window length.
    pub utilization: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub evs: Vec<EvMetrics>,
    pub stations: Vec<StationMetrics>,
    /// Contract count per final stage name.
    pub contracts_by_state: BTreeMap<String, u64>,
    pub contracts: u64,
    pub violations: u64,
    pub mediations: u64,
    pub auction_sessions: u64,
    pub platoons: u64,
    pub penalties_cents: u64,
    pub ledger_blocks: u64,
    pub ledger_transactions: u64,
    pub initial_total_balance: u64,
    pub final_total_balance: u64,
    pub escrow_pool: u64,
    pub final_balances: BTreeMap<AgentId, u64>,
}

impl MetricsReport {
    pub fn ev(&self, id: &str) -> Option<&EvMetrics> {
        self.evs.iter().find(|e| e.id.as_str() == id)
    }

    pub fn station(&self, id: &str) -> Option<&StationMetrics> {
        self.stations.iter().find(|s| s.id.as_str() == id)
    }

    pub fn completed(&self) -> u64 {
        self.contracts_by_state.get("completed").copied().unwrap_or(0)
    }

    /// Money neither appears nor vanishes, and no funds are left in escrow.
    pub fn money_conserved(&self) -> bool {
        self.initial_total_balance == self.final_total_balance && self.escrow_pool == 0
    }

    /// Energy sold equals energy received, and every battery closes its books:
    /// final = initial - driven + received.
    pub fn energy_conserved(&self) -> bool {
        let sold: u64 = self.stations.iter().map(|s| s.energy_sold_wh).sum();
        let received: u64 = self.evs.iter().map(|e| e.energy_received_wh).sum();
        sold == received
            && self
                .evs
                .iter()
                .all(|e| e.initial_soc_wh + e.energy_received_wh == e.final_soc_wh + e.driven_energy_wh)
    }

    /// Payments made equal revenue earned.
    pub fn payments_balance(&self) -> bool {
        let paid: u64 = self.evs.iter().map(|e| e.paid_cents).sum();
        let revenue: u64 = self.stations.iter().map(|s| s.revenue_cents).sum();
        let penalties_in: u64 = self.evs.iter().map(|e| e.penalties_received_cents).sum();
        let penalties_out: u64 = self.stations.iter().map(|s| s.penalties_paid_cents).sum();
        paid == revenue && penalties_in == penalties_out && penalties_in == self.penalties_cents
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "ev,charged_by_deadline,home,stranded,energy_received_wh,paid_cents,penalties_received_cents,distance_m,final_soc_wh"
        )?;
        for e in &self.evs {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                e.id,
                e.charged_by_deadline,
                e.home,
                e.stranded,
                e.energy_received_wh,
                e.paid_cents,
                e.penalties_received_cents,
                e.distance_m,
                e.final_soc_wh
            )?;
        }
        Ok(())
    }
}
