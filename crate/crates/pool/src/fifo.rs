//! A ticket lock: waiters are admitted strictly in the order they asked.

use std::ops::{Deref, DerefMut};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex, MutexGuard};

fn relock<T>(r: std::sync::LockResult<MutexGuard<'_, T>>) -> MutexGuard<'_, T> {
    r.unwrap_or_else(|poisoned| poisoned.into_inner())
}

#[derive(Debug, Default)]
pub struct FifoMutex<T> {
    next: AtomicU64,
    serving: Mutex<u64>,
    turn: Condvar,
    data: Mutex<T>,
}

pub struct FifoGuard<'a, T> {
    owner: &'a FifoMutex<T>,
    data: Option<MutexGuard<'a, T>>,
}

impl<T> FifoMutex<T> {
    pub fn new(value: T) -> Self {
        Self { next: AtomicU64::new(0), serving: Mutex::new(0), turn: Condvar::new(), data: Mutex::new(value) }
    }

    /// Takes a ticket and blocks until it is served.
    pub fn lock(&self) -> FifoGuard<'_, T> {
        let ticket = self.next.fetch_add(1, Ordering::SeqCst);
        let mut serving = relock(self.serving.lock());
        while *serving != ticket {
            serving = relock(self.turn.wait(serving));
        }
        drop(serving);
        FifoGuard { owner: self, data: Some(relock(self.data.lock())) }
    }

    /// Tickets issued so far, including the one being served.
    pub fn tickets(&self) -> u64 {
        self.next.load(Ordering::SeqCst)
    }
}

impl<T> Deref for FifoGuard<'_, T> {
    type Target = T;
    fn deref(&self) -> &T {
        self.data.as_ref().expect("held until drop")
    }
}

impl<T> DerefMut for FifoGuard<'_, T> {
    fn deref_mut(&mut self) -> &mut T {
        self.data.as_mut().expect("held until drop")
    }
}

impl<T> Drop for FifoGuard<'_, T> {
    fn drop(&mut self) {
        self.data.take();
        *relock(self.owner.serving.lock()) += 1;
        self.owner.turn.notify_all();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use std::thread;
    use std::time::Duration;

    #[test]
    fn waiters_run_in_ticket_order() {
        let m = Arc::new(FifoMutex::new(Vec::new()));
        let first = m.lock();
        let mut handles = Vec::new();
        for i in 0..8 {
            let shared = Arc::clone(&m);
            handles.push(thread::spawn(move || shared.lock().push(i)));
            // Wait until thread i holds its ticket before starting the next.
            while m.tickets() < i as u64 + 2 {
                thread::sleep(Duration::from_millis(1));
            }
        }
        drop(first);
        handles.into_iter().for_each(|h| h.join().unwrap());
        assert_eq!(*m.lock(), (0..8).collect::<Vec<_>>());
    }
}
