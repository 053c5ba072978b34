//! Document plumbing for the CLI: JSON parsing with positional errors and
//! the machine-readable schema of every wire format.

use serde::de::DeserializeOwned;
use serde_json::{json, Value};

/// Parse a JSON document, naming the source and the position on failure.
pub fn parse_json<T: DeserializeOwned>(source: &str, text: &str) -> Result<T, String> {
    serde_json::from_str(text).map_err(|e| format!("{source}: {e}"))
}

/// The machine-readable description of every document format the CLI
/// reads or writes.
pub fn schema() -> Value {
    json!({
        "rational": "string \"p/q\" with q > 0 and gcd(p, q) = 1; a bare integer string is accepted on input",
        "clopenSet": {
            "level": "natural number n; the mask covers the 2^(n+1) atoms of the level-n algebra",
            "atoms": "hex string of the atom mask, most significant nibble first; bit i is atom index i",
            "atomList": "alternative input form: array of atom indices",
            "indexConvention": "bit j of an atom index is the coordinate value x(j) (little-endian)"
        },
        "atomId": { "level": "natural", "index": "integer in [0, 2^(level+1))" },
        "signedMeasure": {
            "level": "natural",
            "atomValues": "array of 2^(level+1) rationals, one per atom"
        },
        "family": "array of clopenSet",
        "witnessPrefix": {
            "entries": [{ "index": "natural", "nu": "signedMeasure", "h": "clopenSet" }]
        },
        "solverInstance": {
            "t": "positive natural", "eta": "rational", "n": "natural >= t",
            "p": "clopenSet", "r": "clopenSet", "z": "clopenSet", "q": "clopenSet",
            "g": "atomId at level t", "relaxed": "boolean"
        },
        "quadruple": {
            "families": "array of family, increasing",
            "kernels": "array of clopenSet, pairwise disjoint",
            "mLevels": "strictly increasing positive naturals, one per step",
            "nIndices": "strictly increasing naturals, two per step"
        },
        "context": {
            "prefix": "witnessPrefix",
            "theta": "signedMeasure",
            "decomposition": {
                "theta1": "signedMeasure (nonnegative)",
                "theta2": "signedMeasure (nonnegative)",
                "modulus": "array of [epsilon, delta] rational pairs",
                "ortho": "array of [epsilonX, clopenSet] rows"
            }
        },
        "constructInputs": {
            "blocks": "array of pairwise disjoint clopenSet, length >= 2",
            "t": "positive natural", "eta": "rational",
            "x": "clopenSet", "w": "clopenSet", "y": "clopenSet", "h": "clopenSet",
            "mode": "\"strict\" or \"relaxed\""
        },
        "exitCodes": {
            "0": "pass / constructed and validated",
            "1": "checked and failed (violations, missed bounds, rejected validations)",
            "2": "malformed input or unsatisfied precondition",
            "3": "scale refusal: the operation would exceed the level cap"
        },
        "determinism": "all randomness flows from the --seed flag through ChaCha8 streams; equal manifests give byte-identical stdout"
    })
}
