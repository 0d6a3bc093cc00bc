//! Engine recommendation from the execution environment.

use std::fmt;

use crate::search::EngineKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EnvironmentProfile {
    pub dataset_bytes: u64,
    pub available_memory_bytes: u64,
    pub gpu_available: bool,
    pub distributed_available: bool,
}

/// The execution model the environment calls for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Recommendation {
    /// Multi-node in-memory search (Odyssey).
    Distributed,
    /// GPU-accelerated in-memory search (SING).
    Gpu,
    /// Multi-threaded in-memory search (MESSI).
    InMemory,
    /// Disk-resident search (ParIS+).
    Disk,
}

impl Recommendation {
    pub fn is_implemented(self) -> bool {
        matches!(self, Recommendation::InMemory | Recommendation::Disk)
    }
}

impl fmt::Display for Recommendation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Recommendation::Distributed => "Odyssey",
            Recommendation::Gpu => "SING",
            Recommendation::InMemory => "MESSI",
            Recommendation::Disk => "ParIS+",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineChoice {
    pub recommended: Recommendation,
    /// The implemented engine to run.
    pub engine: EngineKind,
    /// Set when the recommendation is not available here.
    pub note: Option<String>,
}

/// Walks the decision tree: data that fits in memory goes to distributed,
/// then GPU, then CPU in-memory search; anything else goes to disk.
///
/// A dataset fits when it is strictly smaller than the available memory.
pub fn select_engine(profile: &EnvironmentProfile) -> EngineChoice {
    let recommended = if profile.dataset_bytes >= profile.available_memory_bytes {
        Recommendation::Disk
    } else if profile.distributed_available {
        Recommendation::Distributed
    } else if profile.gpu_available {
        Recommendation::Gpu
    } else {
        Recommendation::InMemory
    };
    let engine = match recommended {
        Recommendation::Disk => EngineKind::Disk,
        _ => EngineKind::Parallel,
    };
    let note = (!recommended.is_implemented())
        .then(|| format!("recommended: {recommended} (not implemented); falling back to {engine}"));
    EngineChoice {
        recommended,
        engine,
        note,
    }
}
