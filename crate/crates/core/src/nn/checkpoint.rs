use std::fs;
use std::path::Path;

use super::Network;
use crate::{Error, Result};

/// Writes a network as JSON: input shape, layer specs and flat weight arrays.
/// Floats are written in shortest round-trip form, so a reload is bit-exact.
pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let text = serde_json::to_string(net).map_err(|e| Error::json(path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let net: Network = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    net.output_shape()?;
    Ok(net)
}
