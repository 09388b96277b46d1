fn main() {
    let desc = fgf::ring::RingDescriptor::with_defaults(2, 1, 1, 6, 0).unwrap();
    let law = fgf::fgl::multiplicative_law(&desc, 24).unwrap();
    let json = fgf::io::to_pretty(&fgf::io::fgl_json(&law)).unwrap();
    std::fs::write("/tmp/mult.json", json).unwrap();
}
