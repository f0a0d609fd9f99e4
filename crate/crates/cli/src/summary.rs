//! Run summaries: one deterministic JSON document per subcommand invocation.
//! No wall-clock fields, so reruns with the same inputs are byte-identical.

use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Value};

pub fn write_summary(
    dir: &Path,
    command: &str,
    config: Value,
    outputs: Value,
    metrics: Value,
) -> Result<()> {
    let summary = json!({
        "command": command,
        "config": config,
        "outputs": outputs,
        "metrics": metrics,
    });
    let path = dir.join(format!("summary.{command}.json"));
    let mut text = serde_json::to_string_pretty(&summary).context("serialize summary")?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("write {}", path.display()))?;
    Ok(())
}
