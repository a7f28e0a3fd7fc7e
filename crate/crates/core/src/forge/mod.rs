//! Role-reversed training pairs, similarity splits, easy/hard benchmark
//! cases and on-disk datasets.

mod bench;
mod dataset;
mod pair;
mod split;

pub use bench::{identity_affinity, select_easy_hard, BenchCase};
pub use dataset::{
    bench_pool, build_bench, build_dataset, load_pair, read_bench, read_manifest, BenchConfig, BenchEntry,
    DatasetSummary, ForgeConfig, Manifest, ManifestEntry, Skipped, SwapperKind, BENCH_FILE, MANIFEST_FILE,
    SUMMARY_FILE,
};
pub use pair::{forge_pair, pair_similarity, SwapPair, MAX_FAILED_FRACTION};
pub use split::{split_by_similarity, Scored, SortDirection, Split};
