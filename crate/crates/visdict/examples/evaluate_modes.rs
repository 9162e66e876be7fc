//! Evaluate the three correction modes over one test set from a single
//! shared forward pass per sample, then round-trip the report through disk
//! and verify its determinism digest.
//!
//!     cargo run --release --example evaluate_modes

use visdict::eval::{emit_report, evaluate, EvalReport, ReportFormat};
use visdict::presets::{execute, smoke};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let preset = smoke();
    println!("training preset `{}`...", preset.name);
    let run = execute(&preset)?;

    print!("\n{}", run.report.render_table());

    // Reports are validated on load: schema version, mode order, count
    // consistency, and a digest over the canonical content.
    let dir = tempfile::tempdir()?;
    let json_path = dir.path().join("report.json");
    emit_report(&run.report, &json_path, ReportFormat::Json)?;
    let back = EvalReport::load(&json_path)?;
    assert_eq!(back, run.report);
    println!("report round-tripped through {}", json_path.display());

    // Evaluating again over the same inputs reproduces the digest exactly.
    let again = evaluate(
        &run.params,
        &run.index,
        &run.test_data,
        &preset.eval,
        &run.manifest.digest_hex(),
    )?;
    assert_eq!(again.determinism_digest, run.report.determinism_digest);
    println!("re-evaluation reproduced digest {}", &again.determinism_digest[..16]);

    // Tampering with any accuracy is caught on load.
    let tampered = std::fs::read_to_string(&json_path)?.replacen("\"correct\":", "\"correct\": 1, \"was\":", 1);
    std::fs::write(&json_path, tampered)?;
    match EvalReport::load(&json_path) {
        Err(e) => println!("tampered file rejected: {e}"),
        Ok(_) => panic!("tampered report must not validate"),
    }
    Ok(())
}
