mod common;

use common::{d2_oracle, ids};
use m2x_core::auction::{
    commit_bid, open_bid, run_auction_session, settle_many, settle_one_to_one, BidReveal, Nonce, Participant, Price,
    Role, Settlement,
};
use m2x_core::identity::{AgentIdentity, KeyRegistry};
use m2x_core::ledger::{Ledger, Recorder};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn flatten(o: &m2x_core::auction::AuctionOutcome) -> Vec<(m2x_core::identity::AgentId, m2x_core::identity::AgentId, u32)> {
    o.matches
        .iter()
        .map(|m| (m.buyer.clone(), m.seller.clone(), m.clearing_price.0))
        .collect()
}

#[test]
fn worked_example() {
    assert_eq!(
        settle_one_to_one(Price(35), Price(33)),
        Settlement::Agreement { clearing_price: Price(33) }
    );
    assert_eq!(settle_one_to_one(Price(30), Price(33)), Settlement::NoAgreement);
}

#[test]
fn session_writes_five_events() {
    let ev = AgentIdentity::derive("ev", 3);
    let cs = AgentIdentity::derive("station", 3);
    let host = AgentIdentity::derive("escrow", 3);
    let mut reg = KeyRegistry::new();
    for a in [&ev, &cs, &host] {
        reg.register(a);
    }
    let mut ledger = Ledger::new(reg);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let report = {
        let mut rec = Recorder::new(&mut ledger, 0);
        let r = run_auction_session(
            1,
            &[
                Participant { identity: &ev, role: Role::Buyer, price: Price(35), reveals: true },
                Participant { identity: &cs, role: Role::Seller, price: Price(33), reveals: true },
            ],
            &host,
            &mut rec,
            &mut rng,
        )
        .unwrap();
        rec.seal().unwrap();
        r
    };
    assert_eq!(report.outcome.matches[0].clearing_price, Price(33));
    let kinds: Vec<_> = ledger.events().map(|e| e.kind()).collect();
    assert_eq!(
        kinds,
        ["auction_commit", "auction_commit", "auction_reveal", "auction_reveal", "auction_outcome"]
    );
    assert!(ledger.verify_chain().is_ok());
}

#[test]
fn commitment_binds_every_price() {
    let bidder = AgentIdentity::derive("b", 0);
    let mut reg = KeyRegistry::new();
    reg.register(&bidder);
    let nonce = [7u8; 16];
    let sealed = commit_bid(Role::Buyer, &bidder, Price(123), &nonce).unwrap();
    for p in 0..=255u32 {
        let reveal = BidReveal {
            bidder: bidder.id().clone(),
            price: Price(p),
            nonce: Nonce(nonce),
        };
        assert_eq!(open_bid(&sealed, &reveal, &reg).is_ok(), p == 123, "price {p}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn settle_many_matches_oracle(
        b in prop::collection::vec(0u32..=20, 0..=4),
        s in prop::collection::vec(0u32..=20, 0..=4),
    ) {
        let buyers = ids("b", &b);
        let sellers = ids("s", &s);
        prop_assert_eq!(flatten(&settle_many(&buyers, &sellers)), d2_oracle(&buyers, &sellers));
    }

    #[test]
    fn no_profitable_deviation(
        values in prop::collection::vec(0u32..=50, 1..=5),
        reserve in 0u32..=50,
        who in 0usize..5,
        lie in 0u32..=60,
    ) {
        let who = who % values.len();
        let sellers = ids("s", &[reserve]);
        let utility = |bids: &[u32]| -> i64 {
            let buyers = ids("b", bids);
            settle_many(&buyers, &sellers)
                .match_of_buyer(&buyers[who].0)
                .map_or(0, |m| values[who] as i64 - m.clearing_price.0 as i64)
        };
        let honest = utility(&values);
        let mut bids = values.clone();
        bids[who] = lie;
        prop_assert!(utility(&bids) <= honest);
    }

    #[test]
    fn clearing_respects_both_sides(
        b in prop::collection::vec(0u32..=100, 0..=6),
        s in prop::collection::vec(0u32..=100, 0..=6),
    ) {
        let buyers = ids("b", &b);
        let sellers = ids("s", &s);
        let out = settle_many(&buyers, &sellers);
        for m in &out.matches {
            let bid = buyers.iter().find(|x| x.0 == m.buyer).unwrap().1;
            let res = sellers.iter().find(|x| x.0 == m.seller).unwrap().1;
            prop_assert!(res <= m.clearing_price && m.clearing_price <= bid);
        }
        prop_assert_eq!(out.matches.len() + out.unmatched_buyers.len(), b.len());
        prop_assert_eq!(out.matches.len() + out.unmatched_sellers.len(), s.len());
    }
}
