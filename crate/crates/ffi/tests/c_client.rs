//! Compiles a C program against the generated header and the static
//! library, then runs it.

use std::path::PathBuf;
use std::process::Command;

fn static_lib() -> Option<PathBuf> {
    // Test binaries live in target/<profile>/deps.
    let deps = std::env::current_exe().ok()?.parent()?.to_path_buf();
    [
        deps.join("libdpmi_ffi.a"),
        deps.parent()?.join("libdpmi_ffi.a"),
    ]
    .into_iter()
    .find(|p| p.exists())
}

#[test]
fn c_program_links_and_runs() {
    let lib = static_lib().expect("static library built alongside the tests");
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(crate_dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler on PATH");
    assert!(status.success(), "compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout)
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("epsilon="));
}
