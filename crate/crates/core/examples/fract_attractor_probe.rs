use pundit::complex::ComplexScalar;
use pundit::dynamics::{rollout, System};
use pundit::evaluation::model_rhs;

fn main() {
    let truth = System::LorenzFract.truth_model();
    let rhs = model_rhs(&truth);
    for start in [[1.0, 1.0, 1.0], [5.0, 5.0, 5.0], [10.0, 3.0, 15.0], [19.0, 19.0, 19.0], [30.0, 35.0, 20.0]] {
        let s: Vec<ComplexScalar> = start.iter().map(|&v| ComplexScalar::new(v, 0.0)).collect();
        let roll = rollout(&rhs, &s, 0.01, 100_000);
        let n = roll.states.len();
        // ranges over the last 80% (post-transient)
        let tail = &roll.states[n / 5..];
        let mut lo = [f64::MAX; 3];
        let mut hi = [f64::MIN; 3];
        let mut imax: f64 = 0.0;
        for st in tail {
            for i in 0..3 {
                lo[i] = lo[i].min(st[i].re);
                hi[i] = hi[i].max(st[i].re);
                imax = imax.max(st[i].im.abs());
            }
        }
        println!(
            "start {start:?}: failure={:?} x=[{:.2},{:.2}] y=[{:.2},{:.2}] z=[{:.2},{:.2}] |im|max={:.2e}",
            roll.failure, lo[0], hi[0], lo[1], hi[1], lo[2], hi[2], imax
        );
    }
}
