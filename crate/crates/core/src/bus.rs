//! Round-synchronous message bus with optional random drops and delays.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dcop::AgentId;
use crate::stream::{mix, stream, Purpose};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusConfig {
    pub drop: f64,
    /// Extra delay is uniform in `0..=max_delay` rounds.
    pub max_delay: usize,
    pub seed: u64,
}

impl Default for BusConfig {
    fn default() -> Self {
        BusConfig { drop: 0.0, max_delay: 0, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Envelope<T> {
    pub from: AgentId,
    pub to: AgentId,
    pub sent: usize,
    pub deliver_at: usize,
    pub payload: T,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusStats {
    pub sent: u64,
    pub dropped: u64,
    pub delivered: u64,
}

impl BusStats {
    pub fn in_flight(&self) -> u64 {
        self.sent - self.dropped - self.delivered
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropRecord {
    pub round: usize,
    pub from: AgentId,
    pub to: AgentId,
    pub reason: String,
}

#[derive(Debug)]
pub struct MessageBus<T> {
    cfg: BusConfig,
    round: usize,
    pending: Vec<Envelope<T>>,
    inboxes: Vec<Vec<Envelope<T>>>,
    per_pair: HashMap<(usize, usize), u64>,
    stats: BusStats,
    drops: Vec<DropRecord>,
}

impl<T> MessageBus<T> {
    pub fn new(agents: usize, cfg: BusConfig) -> MessageBus<T> {
        MessageBus {
            cfg,
            round: 0,
            pending: Vec::new(),
            inboxes: (0..agents).map(|_| Vec::new()).collect(),
            per_pair: HashMap::new(),
            stats: BusStats::default(),
            drops: Vec::new(),
        }
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Queues a message for delivery after the current round. The drop and
    /// delay draw depends only on (seed, sender, receiver, round, count).
    pub fn send(&mut self, from: AgentId, to: AgentId, payload: T) {
        self.stats.sent += 1;
        let n = self.per_pair.entry((from.0, to.0)).or_insert(0);
        let key = mix(mix(from.0 as u64, to.0 as u64), *n);
        *n += 1;
        let mut rng = stream(self.cfg.seed, Purpose::Bus, key, self.round as u64);
        if self.cfg.drop > 0.0 && rng.gen::<f64>() < self.cfg.drop {
            self.stats.dropped += 1;
            self.drops.push(DropRecord {
                round: self.round,
                from,
                to,
                reason: format!("random drop (p={})", self.cfg.drop),
            });
            return;
        }
        let delay = if self.cfg.max_delay > 0 { rng.gen_range(0..=self.cfg.max_delay) } else { 0 };
        self.pending.push(Envelope { from, to, sent: self.round, deliver_at: self.round + 1 + delay, payload });
    }

    /// Ends the current round and delivers every message now due.
    pub fn advance_round(&mut self) {
        self.round += 1;
        self.per_pair.clear();
        let round = self.round;
        let (due, rest): (Vec<_>, Vec<_>) = std::mem::take(&mut self.pending).into_iter().partition(|e| e.deliver_at <= round);
        self.pending = rest;
        for e in due {
            self.stats.delivered += 1;
            self.inboxes[e.to.0].push(e);
        }
    }

    /// Delivered messages for `agent`, ordered by send round then sender.
    pub fn take_inbox(&mut self, agent: AgentId) -> Vec<Envelope<T>> {
        let mut msgs = std::mem::take(&mut self.inboxes[agent.0]);
        msgs.sort_by_key(|e| (e.sent, e.from));
        msgs
    }

    pub fn stats(&self) -> BusStats {
        self.stats
    }

    pub fn drops(&self) -> &[DropRecord] {
        &self.drops
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nothing_is_visible_in_the_sending_round() {
        let mut bus = MessageBus::new(2, BusConfig::default());
        bus.send(AgentId(0), AgentId(1), "hi");
        assert!(bus.take_inbox(AgentId(1)).is_empty());
        bus.advance_round();
        let got = bus.take_inbox(AgentId(1));
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].sent, 0);
        assert_eq!(bus.stats().delivered, bus.stats().sent);
    }

    #[test]
    fn drops_and_delays_are_accounted() {
        let cfg = BusConfig { drop: 0.3, max_delay: 2, seed: 9 };
        let mut bus = MessageBus::new(5, cfg);
        let mut received = 0;
        for _ in 0..200 {
            for a in 0..5 {
                for b in 0..5 {
                    if a != b {
                        bus.send(AgentId(a), AgentId(b), ());
                    }
                }
            }
            bus.advance_round();
            for a in 0..5 {
                for e in bus.take_inbox(AgentId(a)) {
                    assert!(e.deliver_at > e.sent && e.deliver_at <= e.sent + 3);
                    received += 1;
                }
            }
        }
        let s = bus.stats();
        assert_eq!(received, s.delivered);
        assert_eq!(s.sent, s.dropped + s.delivered + s.in_flight());
        let rate = s.dropped as f64 / s.sent as f64;
        assert!((rate - 0.3).abs() < 0.03, "{rate}");
        assert_eq!(bus.drops().len() as u64, s.dropped);
    }

    #[test]
    fn same_seed_same_fate() {
        let run = || {
            let mut bus = MessageBus::new(3, BusConfig { drop: 0.5, max_delay: 1, seed: 4 });
            for r in 0..20 {
                bus.send(AgentId(r % 3), AgentId((r + 1) % 3), r);
                bus.advance_round();
            }
            (bus.stats(), (0..3).map(|a| bus.take_inbox(AgentId(a)).len()).collect::<Vec<_>>())
        };
        assert_eq!(run(), run());
    }
}
