//! Centralized MAC: pilot period, BS computing period, then TDMA data slots
//! on every sub-channel in parallel.
//!
//! Every user sends one pilot per sub-frame, including users that were not
//! scheduled in the previous sub-frame.

use serde::{Deserialize, Serialize};

use super::{FramePlan, PeriodKind};

/// Sort key handed to the scheduler: a requesting user and its aligned rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserRate {
    pub user: usize,
    pub rate: f64,
}

/// Assignment of `(sub-channel, data slot)` cells to users.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub slots: usize,
    pub subchannels: usize,
    cells: Vec<Option<usize>>,
}

impl Schedule {
    pub fn empty(slots: usize, subchannels: usize) -> Self {
        Self {
            slots,
            subchannels,
            cells: vec![None; slots * subchannels],
        }
    }

    pub fn get(&self, subchannel: usize, slot: usize) -> Option<usize> {
        self.cells[slot * self.subchannels + subchannel]
    }

    pub fn assigned_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Users holding at least one cell, ascending.
    pub fn users(&self) -> Vec<usize> {
        let mut u: Vec<usize> = self.cells.iter().flatten().copied().collect();
        u.sort_unstable();
        u.dedup();
        u
    }

    pub fn cells_of(&self, user: usize) -> Vec<(usize, usize)> {
        (0..self.slots)
            .flat_map(|j| (0..self.subchannels).map(move |s| (s, j)))
            .filter(|&(s, j)| self.get(s, j) == Some(user))
            .collect()
    }

    /// No user in two sub-channels of one slot, and every user piloted.
    pub fn is_feasible(&self, piloted: &[usize]) -> bool {
        for j in 0..self.slots {
            let mut seen: Vec<usize> = (0..self.subchannels).filter_map(|s| self.get(s, j)).collect();
            let n = seen.len();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != n {
                return false;
            }
        }
        self.users().iter().all(|u| piloted.contains(u))
    }
}

/// Rate-ordered round-robin over cells walked slot by slot, sub-channel by
/// sub-channel. A cell whose turn would repeat a user already in that slot
/// stays idle; users beyond capacity wait for the next sub-frame.
pub fn build_schedule(requests: &[UserRate], slots: usize, subchannels: usize) -> Schedule {
    let mut order: Vec<UserRate> = requests.to_vec();
    order.sort_by(|a, b| b.rate.total_cmp(&a.rate).then(a.user.cmp(&b.user)));
    let mut schedule = Schedule::empty(slots, subchannels);
    if order.is_empty() {
        return schedule;
    }
    let n = order.len();
    for j in 0..slots {
        let mut in_slot: Vec<usize> = Vec::with_capacity(subchannels);
        for s in 0..subchannels {
            let user = order[(j * subchannels + s) % n].user;
            if !in_slot.contains(&user) {
                in_slot.push(user);
                schedule.cells[j * subchannels + s] = Some(user);
            }
        }
    }
    schedule
}

/// `[pilot, compute, scheduled]` with the given computing time.
pub fn plan(
    users: usize,
    pilot_slot: f64,
    compute: f64,
    data_slots: usize,
    data_slot: f64,
    subchannels: usize,
) -> FramePlan {
    FramePlan {
        periods: vec![
            (PeriodKind::Pilot, users as f64 * pilot_slot),
            (PeriodKind::Compute, compute),
            (PeriodKind::Scheduled, data_slots as f64 * data_slot),
        ],
        pilot_slots: users,
        data_slots,
        subchannels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reqs(rates: &[f64]) -> Vec<UserRate> {
        rates
            .iter()
            .enumerate()
            .map(|(user, &rate)| UserRate { user, rate })
            .collect()
    }

    #[test]
    fn single_user_holds_every_slot() {
        let s = build_schedule(&reqs(&[1.0]), 10, 1);
        assert_eq!(s.cells_of(0).len(), 10);
    }

    #[test]
    fn four_users_two_subchannels_two_slots() {
        let s = build_schedule(&reqs(&[1.0, 4.0, 3.0, 2.0]), 2, 2);
        assert_eq!(s.assigned_cells(), 4);
        for u in 0..4 {
            assert_eq!(s.cells_of(u).len(), 1);
        }
        // Descending rate: users 1, 2 take slot 0; users 3, 0 take slot 1.
        assert_eq!(s.get(0, 0), Some(1));
        assert_eq!(s.get(1, 0), Some(2));
        assert_eq!(s.get(0, 1), Some(3));
        assert_eq!(s.get(1, 1), Some(0));
    }

    #[test]
    fn no_users_empty_schedule() {
        let s = build_schedule(&[], 10, 2);
        assert_eq!(s.assigned_cells(), 0);
    }

    #[test]
    fn excess_users_wait() {
        let s = build_schedule(&reqs(&[5.0, 4.0, 3.0, 2.0, 1.0]), 2, 2);
        assert_eq!(s.users(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn fewer_users_than_subchannels_leave_idle_cells() {
        let s = build_schedule(&reqs(&[1.0]), 3, 2);
        assert_eq!(s.assigned_cells(), 3);
        assert!(s.is_feasible(&[0]));
    }

    #[test]
    fn plan_layout() {
        let p = plan(4, 1e-4, 2e-3, 10, 1e-3, 2);
        assert_eq!(
            p.kinds(),
            vec![PeriodKind::Pilot, PeriodKind::Compute, PeriodKind::Scheduled]
        );
        assert!((p.periods[0].1 - 4e-4).abs() < 1e-15);
        assert!((p.periods[2].1 - 1e-2).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn schedules_are_feasible(
            rates in proptest::collection::vec(0.0f64..1e8, 0..40),
            slots in 1usize..20,
            subs in 1usize..6,
        ) {
            let r = reqs(&rates);
            let s = build_schedule(&r, slots, subs);
            let piloted: Vec<usize> = (0..rates.len()).collect();
            prop_assert!(s.is_feasible(&piloted));
            let capacity = slots * subs.min(rates.len().max(1));
            if !rates.is_empty() {
                prop_assert_eq!(s.assigned_cells(), capacity);
            }
        }
    }
}
