//! The versioned report envelope shared by every command.

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

pub fn digest(inputs: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for (k, bytes) in inputs.iter().enumerate() {
        if k > 0 {
            h.update([0u8]);
        }
        h.update(bytes);
    }
    let hex: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

pub struct Outcome {
    pub digest: String,
    pub results: Value,
    pub text: String,
    pub exit_code: i32,
}

impl Outcome {
    pub fn ok(digest: String, results: Value, text: String) -> Self {
        Outcome {
            digest,
            results,
            text,
            exit_code: 0,
        }
    }
}

pub fn envelope(command: &str, arguments: &[String], outcome: &Outcome, timing_ms: Option<f64>) -> Value {
    let mut v = json!({
        "schema_version": SCHEMA_VERSION,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "arguments": arguments,
        "input_digest": outcome.digest,
        "results": outcome.results,
    });
    if let Some(ms) = timing_ms {
        v["timing_ms"] = json!(ms);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable_and_separated() {
        assert_eq!(
            digest(&[b"abc"]),
            "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_ne!(digest(&[b"ab", b"c"]), digest(&[b"a", b"bc"]));
    }
}
