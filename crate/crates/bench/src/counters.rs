//! Software counters from the engine and optional hardware cache counters.

use cbgraph::engine::ExecStats;
use serde::{Deserialize, Serialize};

/// Engine-side counters for one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoftwareCounters {
    pub hints: u64,
    pub yields: u64,
    pub blocks_visited: u64,
    pub node_visits: u64,
    pub tasks: u64,
    pub resumes: u64,
    pub rounds: u64,
    pub suspensions: u64,
}

impl SoftwareCounters {
    pub fn from_stats(s: &ExecStats) -> Self {
        SoftwareCounters {
            hints: s.counters.hints,
            yields: s.counters.yields,
            blocks_visited: s.counters.blocks_visited,
            node_visits: s.counters.node_visits,
            tasks: s.sched.tasks as u64,
            resumes: s.sched.resumes as u64,
            rounds: s.sched.rounds as u64,
            suspensions: s.sched.suspensions as u64,
        }
    }

    /// Every resume follows task creation or a suspension, and every
    /// suspension is a yield.
    pub fn consistent(&self) -> bool {
        self.resumes == self.tasks + self.suspensions && self.suspensions == self.yields && self.resumes >= self.yields
    }
}

/// Hardware counters; `available` is false when the platform offers no
/// counter interface or denies access, with the reason attached.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardwareCounters {
    pub available: bool,
    pub cache_references: Option<u64>,
    pub cache_misses: Option<u64>,
    pub stalled_cycles: Option<u64>,
    pub reason: Option<String>,
}

impl HardwareCounters {
    pub fn unavailable(reason: impl Into<String>) -> Self {
        HardwareCounters {
            reason: Some(reason.into()),
            ..Default::default()
        }
    }
}

/// Runs `f` while counting cache references, cache misses and backend
/// stall cycles for this process and threads it spawns. Never fails: any
/// counter error marks the result unavailable.
pub fn capture<T>(f: impl FnOnce() -> T) -> (T, HardwareCounters) {
    match hw::Session::start() {
        Ok(mut s) => {
            let out = f();
            (out, s.finish())
        }
        Err(reason) => (f(), HardwareCounters::unavailable(reason)),
    }
}

#[cfg(target_os = "linux")]
mod hw {
    use perf_event::events::Hardware;
    use perf_event::{Builder, Counter};

    use super::HardwareCounters;

    pub struct Session {
        refs: Counter,
        misses: Counter,
        stalls: Option<Counter>,
    }

    fn counter(kind: Hardware) -> std::io::Result<Counter> {
        let mut b = Builder::new().kind(kind);
        b.inherit(true);
        b.build()
    }

    impl Session {
        pub fn start() -> Result<Self, String> {
            let err = |e: std::io::Error| format!("perf counters unavailable: {e}");
            let mut s = Session {
                refs: counter(Hardware::CACHE_REFERENCES).map_err(err)?,
                misses: counter(Hardware::CACHE_MISSES).map_err(err)?,
                // Many cores lack a stall event; the other two still count.
                stalls: counter(Hardware::STALLED_CYCLES_BACKEND).ok(),
            };
            s.refs.enable().map_err(err)?;
            s.misses.enable().map_err(err)?;
            if let Some(c) = &mut s.stalls {
                c.enable().map_err(err)?;
            }
            Ok(s)
        }

        pub fn finish(&mut self) -> HardwareCounters {
            let mut read = |c: &mut Counter| c.disable().and_then(|_| c.read()).ok();
            let refs = read(&mut self.refs);
            let misses = read(&mut self.misses);
            let stalls = self.stalls.as_mut().and_then(&mut read);
            if refs.is_none() || misses.is_none() {
                return HardwareCounters::unavailable("perf counter read failed");
            }
            HardwareCounters {
                available: true,
                cache_references: refs,
                cache_misses: misses,
                stalled_cycles: stalls,
                reason: None,
            }
        }
    }
}

#[cfg(not(target_os = "linux"))]
mod hw {
    use super::HardwareCounters;

    pub struct Session;

    impl Session {
        pub fn start() -> Result<Self, String> {
            Err("no hardware counter interface on this platform".into())
        }

        pub fn finish(&mut self) -> HardwareCounters {
            unreachable!()
        }
    }
}
