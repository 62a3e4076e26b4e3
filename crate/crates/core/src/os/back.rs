use std::sync::Arc;

use super::OsError;

pub const PRIORITY_PERMISSION: i32 = 1000;
pub const PRIORITY_SHADE: i32 = 800;
pub const PRIORITY_KEYBOARD: i32 = 700;
pub const PRIORITY_APP_PAGE: i32 = 100;
pub const PRIORITY_DESKTOP: i32 = 0;

/// Reported when no handler consumes the event.
pub const HOME: &str = "home";

pub type Consume<S> = Arc<dyn Fn(&S) -> bool + Send + Sync>;

pub struct BackHandler<S> {
    pub id: String,
    pub priority: i32,
    pub consume: Consume<S>,
}

impl<S> Clone for BackHandler<S> {
    fn clone(&self) -> Self {
        Self { id: self.id.clone(), priority: self.priority, consume: Arc::clone(&self.consume) }
    }
}

/// Priority-chain back dispatch with a per-frame lock.
pub struct BackDispatcher<S> {
    handlers: Vec<BackHandler<S>>,
    locked: bool,
    fired_this_frame: u32,
}

impl<S> Clone for BackDispatcher<S> {
    fn clone(&self) -> Self {
        Self { handlers: self.handlers.clone(), locked: self.locked, fired_this_frame: self.fired_this_frame }
    }
}

impl<S> Default for BackDispatcher<S> {
    fn default() -> Self {
        Self { handlers: Vec::new(), locked: false, fired_this_frame: 0 }
    }
}

impl<S> std::fmt::Debug for BackDispatcher<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ids: Vec<(&str, i32)> = self.handlers.iter().map(|h| (h.id.as_str(), h.priority)).collect();
        f.debug_struct("BackDispatcher").field("handlers", &ids).field("locked", &self.locked).finish()
    }
}

impl<S> BackDispatcher<S> {
    /// Registers one of the built-in system handlers.
    pub fn register_system(&mut self, id: &str, priority: i32, consume: Consume<S>) {
        self.insert(BackHandler { id: id.to_string(), priority, consume });
    }

    /// App handlers must sit strictly between desktop and permission dialog.
    pub fn register_app(&mut self, id: &str, priority: i32, consume: Consume<S>) -> Result<(), OsError> {
        if priority <= PRIORITY_DESKTOP || priority >= PRIORITY_PERMISSION {
            return Err(OsError::InvalidPriority(priority));
        }
        self.insert(BackHandler { id: id.to_string(), priority, consume });
        Ok(())
    }

    fn insert(&mut self, h: BackHandler<S>) {
        let at = self.handlers.partition_point(|x| x.priority >= h.priority);
        self.handlers.insert(at, h);
    }

    pub fn begin_frame(&mut self) {
        self.locked = false;
        self.fired_this_frame = 0;
    }

    pub fn fired_this_frame(&self) -> u32 {
        self.fired_this_frame
    }

    /// Highest-priority handler that consumes, or [`HOME`]. Pure: ignores
    /// and does not touch the frame lock.
    pub fn select(&self, state: &S) -> String {
        self.handlers
            .iter()
            .find(|h| (h.consume)(state))
            .map(|h| h.id.clone())
            .unwrap_or_else(|| HOME.to_string())
    }

    /// One back event. Returns `None` when a back event was already
    /// handled in the current frame.
    pub fn dispatch(&mut self, state: &S) -> Option<String> {
        if self.locked {
            return None;
        }
        self.locked = true;
        self.fired_this_frame += 1;
        debug_assert!(self.fired_this_frame <= 1);
        Some(self.select(state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn back_lock_drops_second_event_in_frame() {
        let mut d: BackDispatcher<bool> = BackDispatcher::default();
        d.register_system("kbd", PRIORITY_KEYBOARD, Arc::new(|s: &bool| *s));
        d.begin_frame();
        assert_eq!(d.dispatch(&true).as_deref(), Some("kbd"));
        assert_eq!(d.dispatch(&true), None);
        assert_eq!(d.fired_this_frame(), 1);
        d.begin_frame();
        assert_eq!(d.dispatch(&false).as_deref(), Some(HOME));
    }

    #[test]
    fn app_priority_bounds() {
        let mut d: BackDispatcher<()> = BackDispatcher::default();
        assert!(d.register_app("x", 0, Arc::new(|_| true)).is_err());
        assert!(d.register_app("x", 1000, Arc::new(|_| true)).is_err());
        d.register_app("x", 999, Arc::new(|_| true)).unwrap();
        assert_eq!(d.select(&()), "x");
    }
}
