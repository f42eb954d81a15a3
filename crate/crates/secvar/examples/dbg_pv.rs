use secvar::model::build_oscillator;
use secvar::spectral::{pv_det, pv_trace, spectrum};

fn main() {
    let rep = spectrum(&build_oscillator(1.0), 1024).unwrap();
    println!("pos: {} neg: {}", rep.pos.len(), rep.neg.len());
    println!("pos head: {:?}", &rep.pos[..rep.pos.len().min(5)]);
    println!("pos tail: {:?}", &rep.pos[rep.pos.len().saturating_sub(3)..]);
    println!("neg tail: {:?}", &rep.neg[rep.neg.len().saturating_sub(3)..]);
    let det = pv_det(&rep, &[]);
    println!("det estimate {} converged {}", det.estimate, det.converged);
    for (e, v) in &det.series {
        println!("  eps {e:.6e}  P {v:.9}");
    }
    let tr = pv_trace(&rep, &[]);
    println!("tr estimate {} converged {}", tr.estimate, tr.converged);
}
