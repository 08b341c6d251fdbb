use std::process::Command;

// Bake the git-describe string into the binary so every output file can
// name the exact tree it came from.
fn main() {
    let describe = Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unversioned".to_string());
    println!("cargo:rustc-env=FIETLAB_GIT={describe}");
    println!("cargo:rerun-if-changed=../../.git/HEAD");
}
