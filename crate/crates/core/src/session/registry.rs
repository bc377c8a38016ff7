use super::{Session, SessionError};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, RwLock};

/// Live sessions by id. Each session sits behind its own mutex so that its
/// mutators run one at a time while different sessions proceed in parallel.
#[derive(Debug, Default)]
pub struct SessionRegistry {
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Session>>>>,
}

impl SessionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.sessions.read().expect("registry lock").contains_key(id)
    }

    pub fn insert(&self, session: Session) -> Result<Arc<Mutex<Session>>, SessionError> {
        let mut map = self.sessions.write().expect("registry lock");
        let id = session.id().to_string();
        if map.contains_key(&id) {
            return Err(SessionError::DuplicateSession(id));
        }
        let handle = Arc::new(Mutex::new(session));
        map.insert(id, handle.clone());
        Ok(handle)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, SessionError> {
        self.sessions
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        self.sessions.read().expect("registry lock").keys().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::PlantConfig;
    use crate::session::{Condition, SessionConfig, SessionTimings, VirtualClock};

    #[test]
    fn duplicate_ids_are_rejected() {
        let timings = SessionTimings {
            training_duration_s: 1.0,
            assessment_duration_s: 1.0,
        };
        let make = || {
            let c = SessionConfig::new("dup", Condition::SelfTaught, &timings, PlantConfig::default());
            Session::start(c, None, Arc::new(VirtualClock::new()), None).unwrap()
        };
        let reg = SessionRegistry::new();
        reg.insert(make()).unwrap();
        assert_eq!(reg.insert(make()).unwrap_err(), SessionError::DuplicateSession("dup".into()));
        assert!(reg.get("dup").is_ok());
        assert!(matches!(reg.get("nope"), Err(SessionError::UnknownSession(_))));
        assert_eq!(reg.ids(), vec!["dup".to_string()]);
    }
}
