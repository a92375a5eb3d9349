use clap::Args;
use serde::Serialize;

use rflab::scene::write_synthetic_corpus;

use crate::output::write_json;
use crate::Common;

#[derive(Debug, Args)]
pub struct SynthGenArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Serialize)]
struct GenRecord<'a> {
    command: &'static str,
    root: &'a std::path::Path,
    distribution: crate::config::Distribution,
    synth_seed: u64,
    maps: u64,
    tx_per_map: u64,
    scenes: usize,
}

/// Writes the corpus to the data root (`--data`, `data.root` or
/// `$RFLAB_DATA_ROOT`). The manifest `meta.json` lists every scene with its
/// transmitter and the generator settings including the seed.
pub fn run(args: &SynthGenArgs) -> anyhow::Result<()> {
    let cfg = args.common.load()?;
    let root = cfg.data.resolve_root(args.common.data.as_deref())?;
    let synth = cfg.data.synth();
    let meta = write_synthetic_corpus(&synth, cfg.data.maps, cfg.data.tx_per_map, &root)?;
    log::info!("wrote {} scenes to {}", meta.scenes.len(), root.display());
    write_json(
        &cfg.out_dir.join("synth_gen.json"),
        &GenRecord {
            command: "synth-gen",
            root: &root,
            distribution: cfg.data.distribution,
            synth_seed: synth.seed,
            maps: meta.maps,
            tx_per_map: meta.tx_per_map,
            scenes: meta.scenes.len(),
        },
    )
}
