use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    let config = cbindgen::Config::from_file(crate_dir.join("cbindgen.toml"))
        .expect("cbindgen.toml is valid");
    let bindings = cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("cbindgen generates the C header");

    let out = PathBuf::from(env::var("OUT_DIR").unwrap()).join("crahn.h");
    bindings.write_to_file(&out);
    // Keep the committed header in sync for consumers that do not run the
    // Rust build.
    bindings.write_to_file(crate_dir.join("include").join("crahn.h"));
}
