//! Regenerates the golden container fixture used by the layout test.
//! Run from the workspace root:
//!   cargo run -p lodmsq --example make_golden

use lodmsq::baselines::{build_baseline, BaselineKind};
use lodmsq::format::index_to_bytes;
use lodmsq::index::ProjDirMode;
use lodmsq::synth;

fn main() {
    let set = synth::lossless_lod_msq(144, 9001);
    let index = build_baseline(
        BaselineKind::MipsLodMsq,
        &set.data,
        set.config,
        ProjDirMode::Center,
        7,
    )
    .unwrap();
    let bytes = index_to_bytes(&index);
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/golden_index.bin");
    std::fs::write(path, &bytes).unwrap();
    println!("wrote {} bytes to {path}", bytes.len());
}
