use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Action, Agent, Message, StepContext};
use crate::gateway::parent_tx_id;
use crate::ledger::{ReceiptKind, SettlementReceipt};
use crate::types::{AccountId, Balance, TxId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OrderState {
    AwaitingPayment,
    /// Goods released against a settled tranche plus an active escrow lock.
    FulfilledConditional,
    Fulfilled,
    /// Escrowed remainder went back to the buyer after conditional fulfilment.
    Refunded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub item: String,
    pub price: Balance,
    pub buyer: Option<AccountId>,
    pub settled: Balance,
    pub escrowed: Balance,
    pub state: OrderState,
}

pub struct SellerAgent {
    id: AccountId,
    catalog: BTreeMap<String, Balance>,
    orders: BTreeMap<TxId, Order>,
}

impl SellerAgent {
    pub fn new(id: AccountId, catalog: BTreeMap<String, Balance>) -> Self {
        Self { id, catalog, orders: BTreeMap::new() }
    }

    pub fn catalog(&self) -> &BTreeMap<String, Balance> {
        &self.catalog
    }

    pub fn orders(&self) -> &BTreeMap<TxId, Order> {
        &self.orders
    }

    fn on_receipt(&mut self, r: &SettlementReceipt, out: &mut Vec<Action>) {
        if r.payee != self.id {
            return;
        }
        let order_tx = parent_tx_id(&r.tx_id).map_or_else(|| r.tx_id.clone(), |(p, _)| p);
        let Some(order) = self.orders.get_mut(&order_tx) else {
            return;
        };
        order.buyer.get_or_insert_with(|| r.payer.clone());
        match r.kind {
            ReceiptKind::Direct | ReceiptKind::EscrowRelease => {
                order.settled = order.settled.checked_add(r.amount).unwrap_or(order.settled);
                if r.kind == ReceiptKind::EscrowRelease {
                    order.escrowed = order.escrowed.checked_sub(r.amount).unwrap_or_default();
                }
            }
            ReceiptKind::EscrowLock => {
                order.escrowed = order.escrowed.checked_add(r.amount).unwrap_or(order.escrowed);
            }
            ReceiptKind::EscrowRefund => {
                order.escrowed = order.escrowed.checked_sub(r.amount).unwrap_or_default();
            }
        }
        let next = if order.settled >= order.price {
            OrderState::Fulfilled
        } else if r.kind == ReceiptKind::EscrowRefund {
            OrderState::Refunded
        } else if order.settled.checked_add(order.escrowed).is_some_and(|t| t >= order.price) && !order.settled.is_zero() {
            OrderState::FulfilledConditional
        } else {
            order.state
        };
        if next != order.state {
            order.state = next;
            out.push(Action::UpdateOrder { tx_id: order_tx, state: next });
        }
    }
}

impl Agent for SellerAgent {
    fn id(&self) -> &AccountId {
        &self.id
    }

    fn step(&mut self, _ctx: &StepContext<'_>, inbox: Vec<Message>) -> Vec<Action> {
        let mut out = Vec::new();
        for msg in inbox {
            match msg {
                Message::ChallengeIssued(req) if req.payee == self.id => {
                    let order = Order {
                        item: req.resource.clone(),
                        price: req.amount,
                        buyer: None,
                        settled: Balance::ZERO,
                        escrowed: Balance::ZERO,
                        state: OrderState::AwaitingPayment,
                    };
                    self.orders.insert(req.tx_id.clone(), order);
                    out.push(Action::UpdateOrder { tx_id: req.tx_id, state: OrderState::AwaitingPayment });
                }
                Message::Receipt(r) => self.on_receipt(&r, &mut out),
                _ => {}
            }
        }
        out
    }
}
