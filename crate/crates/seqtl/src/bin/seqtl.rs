fn main() {
    seqtl::cli::run();
}
