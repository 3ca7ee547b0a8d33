//! From-scratch reverse-mode gradient engine and small layer library shared
//! by the agent, the diagnostic probe, and the level autoencoder.

mod adam;
mod layers;
mod params;
mod tape;

pub use adam::Adam;
pub use layers::{bind, Conv2d, Dense, GruCell};
pub use params::ParamVector;
pub use tape::{NnError, NodeId, Tape};

/// Worst relative disagreement between analytic gradients and central finite
/// differences of `loss` over every parameter coordinate.
///
/// The denominator floors at 1e-6 so coordinates whose true derivative is
/// zero compare absolutely rather than blowing up the ratio.
pub fn fd_max_rel_err(
    pv: &ParamVector,
    grads: &[f64],
    h: f64,
    mut loss: impl FnMut(&ParamVector) -> f64,
) -> f64 {
    let mut probe = pv.clone();
    let mut worst = 0.0f64;
    for i in 0..pv.len() {
        let x = pv.data()[i];
        probe.data_mut()[i] = x + h;
        let up = loss(&probe);
        probe.data_mut()[i] = x - h;
        let down = loss(&probe);
        probe.data_mut()[i] = x;
        let fd = (up - down) / (2.0 * h);
        let denom = grads[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((grads[i] - fd).abs() / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};

    #[test]
    fn quadratic_gradient() {
        let mut pv = ParamVector::new();
        pv.register("x", &[1], || 3.0);
        let mut tape = Tape::new(pv.len());
        let x = bind(&mut tape, &pv, "x").unwrap();
        let sq = tape.square(x);
        let loss = tape.sum_all(sq);
        assert_eq!(tape.scalar(loss), 9.0);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads, vec![6.0]);
    }

    #[test]
    fn constant_loss_zero_gradient() {
        let mut pv = ParamVector::new();
        pv.register("x", &[3], || 1.5);
        let mut tape = Tape::new(pv.len());
        let c = tape.leaf(ArrayD::from_elem(IxDyn(&[2]), 7.0));
        let loss = tape.sum_all(c);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads, vec![0.0; 3]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut tape = Tape::new(0);
        let a = tape.leaf(ArrayD::zeros(IxDyn(&[2, 3])));
        let b = tape.leaf(ArrayD::zeros(IxDyn(&[3, 3])));
        assert!(matches!(tape.add(a, b), Err(NnError::ShapeMismatch { .. })));
        assert!(tape.matmul(b, b).is_ok());
        assert!(tape.matmul(a, a).is_err());
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let mut tape = Tape::new(0);
        let a = tape.leaf(ArrayD::from_elem(IxDyn(&[1]), 0.0));
        let l = tape.ln(a); // ln(0) = -inf
        assert!(matches!(
            tape.backward(l),
            Err(NnError::NonFiniteValue { .. })
        ));
    }

    #[test]
    fn backward_accumulates_shared_nodes() {
        // loss = x·x + x ⇒ grad = 2x + 1.
        let mut pv = ParamVector::new();
        pv.register("x", &[1], || 2.0);
        let mut tape = Tape::new(pv.len());
        let x = bind(&mut tape, &pv, "x").unwrap();
        let xx = tape.mul(x, x).unwrap();
        let s = tape.add(xx, x).unwrap();
        let loss = tape.sum_all(s);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads, vec![5.0]);
    }
}
