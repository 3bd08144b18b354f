use serde::{Deserialize, Serialize};

/// Resources consumed by a simulated MPC run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub rounds_used: usize,
    pub peak_local_memory: usize,
    /// Largest total number of units held across all machines at any barrier.
    pub total_memory: usize,
    pub total_messages: u64,
    pub machine_count: usize,
    pub local_memory_s: usize,
    pub seed: u64,
}

impl ResourceReport {
    /// Combines runs executed side by side: rounds and peaks are maxima, volumes add up.
    pub fn parallel<'a>(reports: impl IntoIterator<Item = &'a ResourceReport>) -> ResourceReport {
        let mut out = ResourceReport::default();
        for r in reports {
            out.rounds_used = out.rounds_used.max(r.rounds_used);
            out.peak_local_memory = out.peak_local_memory.max(r.peak_local_memory);
            out.total_memory += r.total_memory;
            out.total_messages += r.total_messages;
            out.machine_count += r.machine_count;
            out.local_memory_s = out.local_memory_s.max(r.local_memory_s);
            out.seed = r.seed;
        }
        out
    }

    /// Appends a run executed after this one.
    pub fn then(&self, next: &ResourceReport) -> ResourceReport {
        ResourceReport {
            rounds_used: self.rounds_used + next.rounds_used,
            peak_local_memory: self.peak_local_memory.max(next.peak_local_memory),
            total_memory: self.total_memory.max(next.total_memory),
            total_messages: self.total_messages + next.total_messages,
            machine_count: self.machine_count.max(next.machine_count),
            local_memory_s: self.local_memory_s.max(next.local_memory_s),
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinators() {
        let a = ResourceReport {
            rounds_used: 3,
            peak_local_memory: 10,
            total_memory: 40,
            total_messages: 7,
            machine_count: 4,
            local_memory_s: 64,
            seed: 1,
        };
        let b = ResourceReport {
            rounds_used: 5,
            peak_local_memory: 8,
            total_memory: 30,
            total_messages: 2,
            machine_count: 4,
            local_memory_s: 64,
            seed: 1,
        };
        let p = ResourceReport::parallel([&a, &b]);
        assert_eq!((p.rounds_used, p.peak_local_memory, p.total_memory, p.total_messages), (5, 10, 70, 9));
        let s = a.then(&b);
        assert_eq!((s.rounds_used, s.peak_local_memory, s.total_memory, s.total_messages), (8, 10, 40, 9));
    }

    #[test]
    fn json_field_names() {
        let v = serde_json::to_value(ResourceReport::default()).unwrap();
        for f in [
            "rounds_used",
            "peak_local_memory",
            "total_memory",
            "total_messages",
            "machine_count",
            "local_memory_s",
            "seed",
        ] {
            assert!(v.get(f).is_some(), "missing {f}");
        }
    }
}
