use std::sync::Arc;

use crate::state::StateValue;

#[derive(Debug, Clone, PartialEq)]
pub struct Broadcast {
    pub topic: String,
    pub payload: StateValue,
}

/// Handle passed to receivers during delivery. Receivers registered
/// through it start listening after the current broadcast completes.
#[derive(Default)]
pub struct Delivery {
    added: Vec<(String, Receiver)>,
}

impl Delivery {
    pub fn register(&mut self, topic: impl Into<String>, receiver: Receiver) {
        self.added.push((topic.into(), receiver));
    }
}

pub type Receiver = Arc<dyn Fn(&Broadcast, &mut Delivery) + Send + Sync>;

/// Synchronous, ordered broadcast bus.
#[derive(Clone, Default)]
pub struct BroadcastBus {
    receivers: Vec<(String, Receiver)>,
    log: Vec<Broadcast>,
}

impl std::fmt::Debug for BroadcastBus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BroadcastBus")
            .field("receivers", &self.receivers.len())
            .field("log", &self.log)
            .finish()
    }
}

impl BroadcastBus {
    pub fn register(&mut self, topic: impl Into<String>, receiver: Receiver) {
        self.receivers.push((topic.into(), receiver));
    }

    /// Delivers to current receivers of `topic` in registration order and
    /// returns how many received it.
    pub fn broadcast(&mut self, topic: &str, payload: StateValue) -> usize {
        let msg = Broadcast { topic: topic.to_string(), payload };
        let targets: Vec<Receiver> =
            self.receivers.iter().filter(|(t, _)| t == topic).map(|(_, r)| Arc::clone(r)).collect();
        let mut delivery = Delivery::default();
        for r in &targets {
            r(&msg, &mut delivery);
        }
        self.receivers.extend(delivery.added);
        self.log.push(msg);
        targets.len()
    }

    /// Every broadcast sent so far, in order.
    pub fn log(&self) -> &[Broadcast] {
        &self.log
    }

    pub fn clear_log(&mut self) {
        self.log.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::sync::Mutex;

    #[test]
    fn ordered_delivery_and_counts() {
        let mut bus = BroadcastBus::default();
        assert_eq!(bus.broadcast("t", json!(1)), 0);
        let seen = Arc::new(Mutex::new(Vec::new()));
        for i in 0..3 {
            let seen = Arc::clone(&seen);
            bus.register("t", Arc::new(move |_, _| seen.lock().unwrap().push(i)));
        }
        bus.register("other", Arc::new(|_, _| panic!("wrong topic")));
        assert_eq!(bus.broadcast("t", json!(2)), 3);
        assert_eq!(*seen.lock().unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn receiver_added_during_delivery_misses_in_flight_message() {
        let mut bus = BroadcastBus::default();
        let late_hits = Arc::new(Mutex::new(0));
        let hits = Arc::clone(&late_hits);
        bus.register(
            "t",
            Arc::new(move |_, d: &mut Delivery| {
                let hits = Arc::clone(&hits);
                d.register("t", Arc::new(move |_, _| *hits.lock().unwrap() += 1));
            }),
        );
        assert_eq!(bus.broadcast("t", json!(null)), 1);
        assert_eq!(*late_hits.lock().unwrap(), 0);
        assert_eq!(bus.broadcast("t", json!(null)), 2);
        assert_eq!(*late_hits.lock().unwrap(), 1);
    }
}
