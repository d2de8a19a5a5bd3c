use serde::{Deserialize, Serialize};

use super::Price;
use crate::identity::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Settlement {
    Agreement { clearing_price: Price },
    NoAgreement,
}

/// One buyer, one seller: trade at the seller's reserve whenever the bid
/// reaches it. A bid equal to the reserve trades.
pub fn settle_one_to_one(buyer_bid: Price, seller_reserve: Price) -> Settlement {
    if buyer_bid >= seller_reserve {
        Settlement::Agreement {
            clearing_price: seller_reserve,
        }
    } else {
        Settlement::NoAgreement
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub buyer: AgentId,
    pub seller: AgentId,
    pub clearing_price: Price,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AuctionOutcome {
    pub matches: Vec<Match>,
    /// Unmatched participants in rank order.
    pub unmatched_buyers: Vec<AgentId>,
    pub unmatched_sellers: Vec<AgentId>,
}

impl AuctionOutcome {
    pub fn match_for(&self, buyer: &AgentId, seller: &AgentId) -> Option<&Match> {
        self.matches.iter().find(|m| &m.buyer == buyer && &m.seller == seller)
    }

    pub fn match_of_buyer(&self, buyer: &AgentId) -> Option<&Match> {
        self.matches.iter().find(|m| &m.buyer == buyer)
    }
}

fn ranked(entries: &[(AgentId, Price)]) -> Vec<(AgentId, Price)> {
    let mut v = entries.to_vec();
    v.sort_by(|(ia, pa), (ib, pb)| pb.cmp(pa).then_with(|| ia.cmp(ib)));
    v
}

/// Many-to-many settlement by rank pairing.
///
/// Buyers are ranked by bid and sellers by reserve, both descending with
/// ties broken by ascending id. Rank `k` pairs buyer `k` with seller `k` at
/// `max(reserve_k, bid_{k+1})` (just `reserve_k` without a next buyer) and
/// matches iff `bid_k` covers that price. Pairing stops at the first
/// failing rank. Ids are expected to be unique within each side.
pub fn settle_many(buyer_bids: &[(AgentId, Price)], seller_reserves: &[(AgentId, Price)]) -> AuctionOutcome {
    let buyers = ranked(buyer_bids);
    let sellers = ranked(seller_reserves);
    let mut matches = Vec::new();
    let mut k = 0;
    while k < buyers.len() && k < sellers.len() {
        let (buyer, bid) = &buyers[k];
        let (seller, reserve) = &sellers[k];
        let price = match buyers.get(k + 1) {
            Some((_, next_bid)) => (*reserve).max(*next_bid),
            None => *reserve,
        };
        if *bid < price {
            break;
        }
        matches.push(Match {
            buyer: buyer.clone(),
            seller: seller.clone(),
            clearing_price: price,
        });
        k += 1;
    }
    AuctionOutcome {
        matches,
        unmatched_buyers: buyers[k..].iter().map(|(id, _)| id.clone()).collect(),
        unmatched_sellers: sellers[k..].iter().map(|(id, _)| id.clone()).collect(),
    }
}
