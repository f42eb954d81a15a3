use secvar::model::{build_magnetic, build_oscillator};
use secvar::spectral::spectrum;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let rep = spectrum(&build_oscillator(1.0), 4096).unwrap();
    println!("oscillator N=4096 (n=4095): {:?}, neg len {}", t0.elapsed(), rep.neg.len());

    let t0 = Instant::now();
    let rep = spectrum(&build_magnetic(1.0), 2048).unwrap();
    println!("magnetic N=2048 (n=4094): {:?}, pos len {}", t0.elapsed(), rep.pos.len());
}
