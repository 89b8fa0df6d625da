//! Canonical, versioned MDP JSON format.
//!
//! ```json
//! {"version":1,"n":2,"gamma":0.9,"actions":[{"state":0,"reward":1.0,"transitions":[[1,1.0]]}, ...]}
//! ```
//!
//! State ids are 0-based. Generators add a `meta` block that loaders ignore.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Action, Mdp};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MdpDocument {
    version: u32,
    n: usize,
    gamma: f64,
    actions: Vec<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

/// Serializes an MDP, optionally embedding a `meta` block.
pub fn to_json(mdp: &Mdp, meta: Option<&serde_json::Value>) -> Result<String> {
    let doc = MdpDocument {
        version: FORMAT_VERSION,
        n: mdp.n(),
        gamma: mdp.gamma(),
        actions: mdp.actions().to_vec(),
        meta: meta.cloned(),
    };
    Ok(serde_json::to_string(&doc)?)
}

/// Parses and validates an MDP. Any `meta` block is ignored.
pub fn from_json(text: &str) -> Result<Mdp> {
    let doc: MdpDocument = serde_json::from_str(text)?;
    if doc.version != FORMAT_VERSION {
        return Err(Error::InvalidParameter(format!(
            "unsupported MDP format version {}",
            doc.version
        )));
    }
    Mdp::new(doc.n, doc.gamma, doc.actions)
}

pub fn read_mdp(path: impl AsRef<Path>) -> Result<Mdp> {
    from_json(&fs::read_to_string(path)?)
}

pub fn write_mdp(path: impl AsRef<Path>, mdp: &Mdp, meta: Option<&serde_json::Value>) -> Result<()> {
    fs::write(path, to_json(mdp, meta)?)?;
    Ok(())
}
