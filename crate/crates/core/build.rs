use std::fmt::Write as _;
use std::path::Path;
use std::{env, fs};

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/configs");
    println!("cargo:rerun-if-changed={}", dir.display());

    let mut files: Vec<_> = fs::read_dir(&dir)
        .expect("assets/configs is missing")
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();

    let mut src = String::from("pub(crate) static BUILTIN_CONFIGS: &[&str] = &[\n");
    for path in &files {
        println!("cargo:rerun-if-changed={}", path.display());
        writeln!(src, "    include_str!({:?}),", path.display().to_string()).unwrap();
    }
    src.push_str("];\n");

    let out = Path::new(&env::var("OUT_DIR").unwrap()).join("builtin_configs.rs");
    fs::write(out, src).unwrap();
}
