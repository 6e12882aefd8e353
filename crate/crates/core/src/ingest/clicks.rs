//! Per-user event histories and click deduplication for buyers.

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::tables::RawTables;

/// Channel assigned to orders that have no preceding click on their SKU.
pub const UNKNOWN_CHANNEL: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub timestamp: NaiveDateTime,
    pub sku_id: String,
    pub channel: String,
    pub is_order: bool,
    /// Set for order events.
    pub order_id: Option<String>,
    pub is_gift: bool,
}

impl Event {
    fn click(timestamp: NaiveDateTime, sku_id: &str, channel: &str) -> Self {
        Self {
            timestamp,
            sku_id: sku_id.to_string(),
            channel: channel.to_string(),
            is_order: false,
            order_id: None,
            is_gift: false,
        }
    }
}

/// Time-ordered events per user. Ties keep input order, with all clicks of
/// the input placed before all orders.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickHistory {
    pub users: BTreeMap<String, Vec<Event>>,
}

impl ClickHistory {
    /// Every click and order line, before any deduplication.
    pub fn raw(tables: &RawTables) -> Self {
        let mut users: BTreeMap<String, Vec<Event>> = BTreeMap::new();
        for c in &tables.clicks {
            users
                .entry(c.user_id.clone())
                .or_default()
                .push(Event::click(c.timestamp, &c.sku_id, &c.channel));
        }
        for o in &tables.orders {
            users.entry(o.user_id.clone()).or_default().push(Event {
                timestamp: o.timestamp,
                sku_id: o.sku_id.clone(),
                channel: String::new(),
                is_order: true,
                order_id: Some(o.order_id.clone()),
                is_gift: o.gift_flag,
            });
        }
        for events in users.values_mut() {
            // sort_by_key is stable
            events.sort_by_key(|e| e.timestamp);
        }
        Self { users }
    }

    pub fn is_buyer(&self, user: &str) -> bool {
        self.users
            .get(user)
            .is_some_and(|ev| ev.iter().any(|e| e.is_order && !e.is_gift))
    }

    /// Channel attributed to each `(order_id, sku_id)`: the most recent click
    /// on that SKU before the order, or `unknown`.
    pub fn order_channels(&self) -> HashMap<(String, String), String> {
        let mut out = HashMap::new();
        for events in self.users.values() {
            let mut last_click: HashMap<&str, &str> = HashMap::new();
            for e in events {
                if e.is_order {
                    let channel = last_click
                        .get(e.sku_id.as_str())
                        .copied()
                        .unwrap_or(UNKNOWN_CHANNEL);
                    if let Some(oid) = &e.order_id {
                        out.insert((oid.clone(), e.sku_id.clone()), channel.to_string());
                    }
                } else {
                    last_click.insert(e.sku_id.as_str(), e.channel.as_str());
                }
            }
        }
        out
    }

    /// Seconds between each user's first and last event.
    pub fn spans(&self) -> BTreeMap<String, i64> {
        self.users
            .iter()
            .map(|(u, ev)| {
                let span = match (ev.first(), ev.last()) {
                    (Some(a), Some(b)) => (b.timestamp - a.timestamp).num_seconds(),
                    _ => 0,
                };
                (u.clone(), span)
            })
            .collect()
    }
}

/// Deduplicated histories built from the raw tables.
pub fn dedup_clicks(tables: &RawTables) -> ClickHistory {
    dedup_history(&ClickHistory::raw(tables))
}

/// For each buyer, clicks before an order are dropped except the last click
/// on each ordered SKU; an ordered SKU with no such click gets a synthetic
/// click on the `unknown` channel. Non-buyers are untouched. Idempotent.
pub fn dedup_history(history: &ClickHistory) -> ClickHistory {
    let users = history
        .users
        .iter()
        .map(|(user, events)| (user.clone(), dedup_user(events)))
        .collect();
    ClickHistory { users }
}

fn dedup_user(events: &[Event]) -> Vec<Event> {
    if !events.iter().any(|e| e.is_order) {
        return events.to_vec();
    }
    let mut out = Vec::with_capacity(events.len());
    let mut pending: Vec<&Event> = Vec::new();
    let mut i = 0;
    while i < events.len() {
        if !events[i].is_order {
            pending.push(&events[i]);
            i += 1;
            continue;
        }
        // Order lines sharing a timestamp form one purchase.
        let ts = events[i].timestamp;
        let mut j = i;
        while j < events.len() && events[j].is_order && events[j].timestamp == ts {
            j += 1;
        }
        let group = &events[i..j];
        let mut keep = vec![false; pending.len()];
        let mut synthetic = Vec::new();
        for line in group.iter().filter(|e| !e.is_gift) {
            match pending.iter().rposition(|c| c.sku_id == line.sku_id) {
                Some(p) => keep[p] = true,
                None => {
                    if !synthetic.iter().any(|s: &Event| s.sku_id == line.sku_id) {
                        synthetic.push(Event::click(ts, &line.sku_id, UNKNOWN_CHANNEL));
                    }
                }
            }
        }
        out.extend(
            pending
                .iter()
                .zip(&keep)
                .filter(|(_, k)| **k)
                .map(|(c, _)| (*c).clone()),
        );
        out.extend(synthetic);
        out.extend(group.iter().cloned());
        pending.clear();
        i = j;
    }
    out.extend(pending.into_iter().cloned());
    out
}
