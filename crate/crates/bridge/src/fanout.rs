use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use bendaid::haptic::HapticMode;
use bendaid::protocol::TelemetryFrame;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tokio::sync::Notify;

/// Telemetry as sent to UI clients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryJson {
    pub seq: u64,
    pub t_ms: u64,
    pub angle: f64,
    pub velocity: f64,
    pub torque: f64,
    pub mode: HapticMode,
}

impl From<&TelemetryFrame> for TelemetryJson {
    fn from(f: &TelemetryFrame) -> Self {
        Self {
            seq: f.seq,
            t_ms: f.t_ms,
            angle: f.angle_deg,
            velocity: f.velocity_dps,
            torque: f.torque,
            mode: f.mode,
        }
    }
}

#[derive(Debug)]
struct ClientQueue {
    id: u64,
    cap: usize,
    frames: Mutex<VecDeque<TelemetryJson>>,
    dropped: AtomicU64,
    delivered: AtomicU64,
    notify: Notify,
}

impl ClientQueue {
    fn push(&self, frame: TelemetryJson) {
        {
            let mut q = self.frames.lock();
            if q.len() == self.cap {
                q.pop_front();
                self.dropped.fetch_add(1, Ordering::Relaxed);
            }
            q.push_back(frame);
        }
        self.notify.notify_one();
    }
}

/// Per-client delivery counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClientStats {
    pub id: u64,
    pub queued: usize,
    pub delivered: u64,
    pub dropped: u64,
}

/// Single producer, many consumers. Publishing never waits on a consumer: each client has
/// a bounded queue that discards its oldest frame when full.
#[derive(Debug)]
pub struct Fanout {
    cap: usize,
    next_id: AtomicU64,
    clients: Mutex<Vec<Arc<ClientQueue>>>,
}

impl Fanout {
    pub fn new(queue_capacity: usize) -> Self {
        Self {
            cap: queue_capacity.max(1),
            next_id: AtomicU64::new(1),
            clients: Mutex::new(Vec::new()),
        }
    }

    pub fn subscribe(self: &Arc<Self>) -> Subscription {
        self.subscribe_with_capacity(self.cap)
    }

    pub fn subscribe_with_capacity(self: &Arc<Self>, cap: usize) -> Subscription {
        let q = Arc::new(ClientQueue {
            id: self.next_id.fetch_add(1, Ordering::Relaxed),
            cap: cap.max(1),
            frames: Mutex::new(VecDeque::with_capacity(cap.max(1))),
            dropped: AtomicU64::new(0),
            delivered: AtomicU64::new(0),
            notify: Notify::new(),
        });
        self.clients.lock().push(q.clone());
        Subscription {
            queue: q,
            fanout: Arc::downgrade(self),
        }
    }

    pub fn publish(&self, frame: TelemetryJson) {
        for c in self.clients.lock().iter() {
            c.push(frame);
        }
    }

    pub fn client_count(&self) -> usize {
        self.clients.lock().len()
    }

    pub fn stats(&self) -> Vec<ClientStats> {
        self.clients
            .lock()
            .iter()
            .map(|c| ClientStats {
                id: c.id,
                queued: c.frames.lock().len(),
                delivered: c.delivered.load(Ordering::Relaxed),
                dropped: c.dropped.load(Ordering::Relaxed),
            })
            .collect()
    }

    fn remove(&self, id: u64) {
        self.clients.lock().retain(|c| c.id != id);
    }
}

/// A client's end of the fan-out. Unsubscribes on drop.
#[derive(Debug)]
pub struct Subscription {
    queue: Arc<ClientQueue>,
    fanout: std::sync::Weak<Fanout>,
}

impl Subscription {
    pub fn id(&self) -> u64 {
        self.queue.id
    }

    pub fn dropped(&self) -> u64 {
        self.queue.dropped.load(Ordering::Relaxed)
    }

    /// Everything queued right now, oldest first.
    pub fn drain(&self) -> Vec<TelemetryJson> {
        let out: Vec<_> = self.queue.frames.lock().drain(..).collect();
        self.queue
            .delivered
            .fetch_add(out.len() as u64, Ordering::Relaxed);
        out
    }

    /// Waits until at least one frame is queued, then drains.
    pub async fn next_batch(&self) -> Vec<TelemetryJson> {
        loop {
            let batch = self.drain();
            if !batch.is_empty() {
                return batch;
            }
            self.queue.notify.notified().await;
        }
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        if let Some(f) = self.fanout.upgrade() {
            f.remove(self.queue.id);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(seq: u64) -> TelemetryJson {
        TelemetryJson {
            seq,
            t_ms: seq,
            angle: 0.0,
            velocity: 0.0,
            torque: 0.0,
            mode: HapticMode::Smooth,
        }
    }

    #[test]
    fn slow_client_drops_oldest_fast_client_keeps_all() {
        let f = Arc::new(Fanout::new(4));
        let slow = f.subscribe();
        let fast = f.subscribe_with_capacity(100);
        for s in 1..=10 {
            f.publish(frame(s));
        }
        let seqs: Vec<u64> = slow.drain().iter().map(|t| t.seq).collect();
        assert_eq!(seqs, vec![7, 8, 9, 10]);
        assert_eq!(slow.dropped(), 6);
        assert_eq!(fast.drain().len(), 10);
        assert_eq!(fast.dropped(), 0);
    }

    #[test]
    fn drop_unsubscribes() {
        let f = Arc::new(Fanout::new(4));
        let a = f.subscribe();
        assert_eq!(f.client_count(), 1);
        drop(a);
        assert_eq!(f.client_count(), 0);
    }

    #[tokio::test]
    async fn next_batch_wakes_on_publish() {
        let f = Arc::new(Fanout::new(8));
        let sub = f.subscribe();
        let p = f.clone();
        let h = tokio::spawn(async move { sub.next_batch().await });
        tokio::task::yield_now().await;
        p.publish(frame(1));
        assert_eq!(h.await.unwrap()[0].seq, 1);
    }
}
