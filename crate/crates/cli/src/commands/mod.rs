pub mod decode;
pub mod eval;
pub mod featurize;
pub mod segment;
pub mod stub_scorer;
pub mod synth;
pub mod train;

use std::path::Path;

use anyhow::{Context, Result};

use acsr_core::ctc::{LabelSequence, PhoneInventory};
use acsr_core::features::StreamBundle;

use crate::manifest::ManifestEntry;

pub(crate) fn load_inventory(path: &Path) -> Result<PhoneInventory> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("read inventory {}", path.display()))?;
    PhoneInventory::from_text(&text).with_context(|| format!("parse {}", path.display()))
}

pub(crate) fn load_bundle(streams_dir: &Path, id: &str) -> Result<StreamBundle> {
    let path = streams_dir.join(format!("{id}.json"));
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("read stream file {}", path.display()))?;
    StreamBundle::from_json(&text).with_context(|| format!("parse {}", path.display()))
}

pub(crate) fn entry_labels(
    entry: &ManifestEntry,
    inventory: &PhoneInventory,
) -> Result<LabelSequence> {
    LabelSequence::from_symbols(inventory, &entry.phone_symbols())
        .with_context(|| format!("{}: phone transcript", entry.id))
}
