use std::collections::VecDeque;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};

struct State<T> {
    items: VecDeque<T>,
    closed: bool,
    dropped: u64,
    high_water: usize,
}

/// Bounded FIFO that never blocks producers: when full, the oldest item is
/// evicted. Live view prefers fresh frames over complete ones.
pub struct DropOldestQueue<T> {
    state: Mutex<State<T>>,
    ready: Condvar,
    capacity: usize,
}

impl<T> DropOldestQueue<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        Self {
            state: Mutex::new(State {
                items: VecDeque::with_capacity(capacity),
                closed: false,
                dropped: 0,
                high_water: 0,
            }),
            ready: Condvar::new(),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Enqueues `item`, returning the evicted item if the queue was full.
    /// Pushing to a closed queue drops the item silently.
    pub fn push(&self, item: T) -> Option<T> {
        let mut st = self.state.lock();
        if st.closed {
            return None;
        }
        let evicted = if st.items.len() == self.capacity {
            st.dropped += 1;
            st.items.pop_front()
        } else {
            None
        };
        st.items.push_back(item);
        st.high_water = st.high_water.max(st.items.len());
        drop(st);
        self.ready.notify_one();
        evicted
    }

    /// Blocks until an item is available; `None` once closed and drained.
    pub fn pop(&self) -> Option<T> {
        let mut st = self.state.lock();
        loop {
            if let Some(item) = st.items.pop_front() {
                return Some(item);
            }
            if st.closed {
                return None;
            }
            self.ready.wait(&mut st);
        }
    }

    pub fn pop_timeout(&self, timeout: Duration) -> Option<T> {
        let mut st = self.state.lock();
        if st.items.is_empty() && !st.closed {
            self.ready.wait_for(&mut st, timeout);
        }
        st.items.pop_front()
    }

    pub fn try_pop(&self) -> Option<T> {
        self.state.lock().items.pop_front()
    }

    pub fn close(&self) {
        self.state.lock().closed = true;
        self.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.state.lock().closed
    }

    pub fn len(&self) -> usize {
        self.state.lock().items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped(&self) -> u64 {
        self.state.lock().dropped
    }

    /// Largest length ever observed.
    pub fn high_water(&self) -> usize {
        self.state.lock().high_water
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn evicts_oldest_when_full() {
        let q = DropOldestQueue::new(2);
        assert_eq!(q.push(1), None);
        assert_eq!(q.push(2), None);
        assert_eq!(q.push(3), Some(1));
        assert_eq!(q.dropped(), 1);
        assert_eq!(q.pop(), Some(2));
        assert_eq!(q.pop(), Some(3));
        assert_eq!(q.high_water(), 2);
    }

    #[test]
    fn close_wakes_consumers() {
        let q = Arc::new(DropOldestQueue::<u32>::new(4));
        let consumer = {
            let q = q.clone();
            std::thread::spawn(move || q.pop())
        };
        std::thread::sleep(Duration::from_millis(20));
        q.close();
        assert_eq!(consumer.join().unwrap(), None);
        q.push(5);
        assert!(q.is_empty());
    }

    #[test]
    fn never_exceeds_capacity_under_contention() {
        let q = Arc::new(DropOldestQueue::new(3));
        let producers: Vec<_> = (0..4)
            .map(|p| {
                let q = q.clone();
                std::thread::spawn(move || {
                    for i in 0..1000 {
                        q.push(p * 1000 + i);
                    }
                })
            })
            .collect();
        let mut got = 0;
        while got < 100 {
            if q.pop_timeout(Duration::from_millis(5)).is_some() {
                got += 1;
            }
            if producers.iter().all(|h| h.is_finished()) {
                break;
            }
        }
        for h in producers {
            h.join().unwrap();
        }
        assert!(q.high_water() <= 3);
        assert!(q.dropped() > 0);
    }
}
