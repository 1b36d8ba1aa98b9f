// Links the system OpenBLAS, which also exports the reference LAPACK symbols.
fn main() {
    println!("cargo:rustc-link-lib=dylib=openblas");
    println!("cargo:rerun-if-changed=build.rs");
}
