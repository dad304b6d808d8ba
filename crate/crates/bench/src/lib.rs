//! Fixtures shared by the benchmarks.

use recompose::coverage::{tokens_of, TokenSet};
use recompose::synthetic::{generate_queries, random_library_demos, SyntheticQuery};
use recompose::{CodecConfig, DemoLibrary, SkillSequence};

pub struct Workload {
    pub library: DemoLibrary,
    pub query: SyntheticQuery,
    pub plan: SkillSequence,
}

/// Random synthetic library of `n` demos and one query against it.
pub fn workload(n: usize, seed: u64) -> Workload {
    let cfg = CodecConfig::default();
    let library = DemoLibrary::new(random_library_demos(seed, n, &cfg), cfg, "bench", "synthetic")
        .expect("synthetic demos are valid");
    let query = generate_queries(seed, 1, &cfg).remove(0);
    let plan = SkillSequence::parse_all(&query.plan).expect("synthetic plans parse");
    Workload { library, query, plan }
}

/// Plan tokens not covered by the first `k` demos of the library.
pub fn gap_after(w: &Workload, k: usize) -> TokenSet {
    let covered: TokenSet = w.library.demos().iter().take(k).flat_map(|d| tokens_of(&d.skills)).collect();
    tokens_of(&w.plan).difference(&covered).cloned().collect()
}
