//! Round-robin task placement over the registered actor roster.

use thiserror::Error;

use crate::addr::Address;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedulerError {
    #[error("actor roster is empty")]
    EmptyRoster,
}

/// One registered actor: its logical name and the address task commands are
/// dispatched to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActorEntry {
    pub name: String,
    pub address: Address,
}

/// Actor roster in registration order plus the cursor of the next pick.
///
/// Invariant: `cursor < max(1, roster.len())`.
#[derive(Debug, Clone, Default)]
pub struct SchedulerState {
    roster: Vec<ActorEntry>,
    cursor: usize,
}

impl SchedulerState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an actor. Re-registration under the same name updates the
    /// address in place (a restarted pod keeps its roster slot).
    pub fn register(&mut self, name: impl Into<String>, address: Address) {
        let name = name.into();
        if let Some(entry) = self.roster.iter_mut().find(|e| e.name == name) {
            entry.address = address;
        } else {
            self.roster.push(ActorEntry { name, address });
        }
    }

    /// Removes an actor by name, compacting the roster and clamping the
    /// cursor so the rotation continues with the element that followed the
    /// removed one.
    pub fn remove(&mut self, name: &str) -> bool {
        let Some(idx) = self.roster.iter().position(|e| e.name == name) else {
            return false;
        };
        self.roster.remove(idx);
        if idx < self.cursor {
            self.cursor -= 1;
        }
        if self.cursor >= self.roster.len() {
            self.cursor = 0;
        }
        true
    }

    /// Picks the next actor and advances the cursor.
    pub fn next_actor(&mut self) -> Result<ActorEntry, SchedulerError> {
        if self.roster.is_empty() {
            return Err(SchedulerError::EmptyRoster);
        }
        let entry = self.roster[self.cursor].clone();
        self.cursor = (self.cursor + 1) % self.roster.len();
        Ok(entry)
    }

    pub fn len(&self) -> usize {
        self.roster.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roster.is_empty()
    }

    pub fn roster(&self) -> &[ActorEntry] {
        &self.roster
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(n: u8) -> Address {
        Address::new(std::net::Ipv4Addr::new(192, 0, 0, n), 7000)
    }

    fn scheduler(names: &[&str]) -> SchedulerState {
        let mut s = SchedulerState::new();
        for (i, name) in names.iter().enumerate() {
            s.register(*name, addr(i as u8 + 1));
        }
        s
    }

    #[test]
    fn empty_roster_errors() {
        let mut s = SchedulerState::new();
        assert_eq!(s.next_actor(), Err(SchedulerError::EmptyRoster));
    }

    #[test]
    fn single_actor_repeats() {
        let mut s = scheduler(&["A"]);
        for _ in 0..5 {
            assert_eq!(s.next_actor().expect("non-empty").name, "A");
        }
    }

    #[test]
    fn two_actors_alternate() {
        let mut s = scheduler(&["A", "B"]);
        let picks: Vec<String> = (0..4).map(|_| s.next_actor().expect("ok").name).collect();
        assert_eq!(picks, ["A", "B", "A", "B"]);
    }

    #[test]
    fn four_picks_over_three_actors_wrap_once() {
        let mut s = scheduler(&["A", "B", "C"]);
        let picks: Vec<String> = (0..4).map(|_| s.next_actor().expect("ok").name).collect();
        assert_eq!(picks, ["A", "B", "C", "A"]);
        let count = |name: &str| picks.iter().filter(|p| *p == name).count();
        assert_eq!((count("A"), count("B"), count("C")), (2, 1, 1));
    }

    #[test]
    fn removal_compacts_and_clamps() {
        // enumerated cursor walk: pick A (cursor -> B), remove B, the
        // rotation continues with C then wraps to A
        let mut s = scheduler(&["A", "B", "C"]);
        assert_eq!(s.next_actor().expect("ok").name, "A");
        assert!(s.remove("B"));
        assert_eq!(s.next_actor().expect("ok").name, "C");
        assert_eq!(s.next_actor().expect("ok").name, "A");
    }

    #[test]
    fn removal_before_cursor_keeps_position() {
        let mut s = scheduler(&["A", "B", "C"]);
        s.next_actor().expect("ok"); // A, cursor 1
        s.next_actor().expect("ok"); // B, cursor 2
        assert!(s.remove("A"));
        assert_eq!(s.next_actor().expect("ok").name, "C");
        assert_eq!(s.next_actor().expect("ok").name, "B");
    }

    #[test]
    fn removal_of_last_wraps_cursor() {
        let mut s = scheduler(&["A", "B"]);
        s.next_actor().expect("ok"); // A, cursor 1 -> B
        assert!(s.remove("B"));
        assert_eq!(s.cursor(), 0);
        assert_eq!(s.next_actor().expect("ok").name, "A");
    }

    #[test]
    fn remove_unknown_is_noop() {
        let mut s = scheduler(&["A"]);
        assert!(!s.remove("Z"));
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn reregistration_updates_address_in_place() {
        let mut s = scheduler(&["A", "B"]);
        s.next_actor().expect("ok"); // cursor -> B
        s.register("A", addr(9));
        assert_eq!(s.len(), 2);
        assert_eq!(s.roster()[0].address, addr(9));
        // cursor untouched: next pick is still B
        assert_eq!(s.next_actor().expect("ok").name, "B");
    }

    #[test]
    fn rotation_is_fair() {
        let mut s = scheduler(&["A", "B", "C"]);
        let mut counts = std::collections::BTreeMap::new();
        for _ in 0..1000 {
            *counts
                .entry(s.next_actor().expect("ok").name)
                .or_insert(0usize) += 1;
        }
        let max = counts.values().max().expect("non-empty");
        let min = counts.values().min().expect("non-empty");
        assert!(max - min <= 1, "counts {counts:?}");
    }

    #[test]
    fn cursor_invariant_holds_under_churn() {
        let mut s = SchedulerState::new();
        let names = ["A", "B", "C", "D", "E"];
        for round in 0..50usize {
            let name = names[round % names.len()];
            if round % 3 == 0 {
                s.remove(name);
            } else {
                s.register(name, addr((round % 250) as u8));
            }
            let _ = s.next_actor();
            assert!(
                s.cursor() < s.len().max(1),
                "cursor escaped at round {round}"
            );
        }
    }
}
