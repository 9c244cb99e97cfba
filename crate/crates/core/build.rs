fn main() {
    // zgeev comes from the system OpenBLAS, which bundles BLAS and LAPACK
    // in one shared object on this image. lapack-sys only declares the FFI
    // signatures; the link line is ours to provide.
    println!("cargo:rustc-link-lib=dylib=openblas");
}
