//! Central-difference gradient checking.
//!
//! This is the independent oracle for the tape: it never touches the adjoint
//! rules, only repeated forward evaluations. Keep it that way.

use super::tape::{GradTape, Var};
use super::tensor::{NumericsError, Tensor};

/// Max relative error between tape gradients and central differences for a
/// scalar function of one tensor.
///
/// `f` must build the loss from the given leaf on the given tape. The error
/// per coordinate is `|fd - g| / max(1, |fd|, |g|)`, so it reads as relative
/// error for large gradients and absolute error near zero.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64, NumericsError>
where
    F: Fn(&mut GradTape, Var) -> Result<Var, NumericsError>,
{
    grad_check_params(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), eps)
}

/// Multi-tensor variant: checks the gradient of `f` with respect to every
/// coordinate of every parameter tensor.
pub fn grad_check_params<F>(f: F, params: &[Tensor], eps: f64) -> Result<f64, NumericsError>
where
    F: Fn(&mut GradTape, &[Var]) -> Result<Var, NumericsError>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(NumericsError::BadStep { eps });
    }

    let eval = |tensors: &[Tensor]| -> Result<(f64, Option<Vec<Tensor>>), NumericsError> {
        let mut tape = GradTape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(NumericsError::NonFinite { label: "grad_check objective".into() });
        }
        let grads = tape.backward(loss)?;
        let collected = vars
            .iter()
            .map(|&v| grads.get(v).expect("leaf gradient present").clone())
            .collect();
        Ok((value, Some(collected)))
    };

    let (_, tape_grads) = eval(params)?;
    let tape_grads = tape_grads.expect("gradients requested");

    let mut work: Vec<Tensor> = params.to_vec();
    let mut max_err = 0.0f64;
    for (pi, grad) in tape_grads.iter().enumerate() {
        for ci in 0..params[pi].numel() {
            let orig = work[pi].data()[ci];
            work[pi].data_mut()[ci] = orig + eps;
            let plus = eval_value(&f, &work)?;
            work[pi].data_mut()[ci] = orig - eps;
            let minus = eval_value(&f, &work)?;
            work[pi].data_mut()[ci] = orig;

            let fd = (plus - minus) / (2.0 * eps);
            let g = grad.data()[ci];
            let denom = 1.0f64.max(fd.abs()).max(g.abs());
            max_err = max_err.max((fd - g).abs() / denom);
        }
    }
    Ok(max_err)
}

fn eval_value<F>(f: &F, tensors: &[Tensor]) -> Result<f64, NumericsError>
where
    F: Fn(&mut GradTape, &[Var]) -> Result<Var, NumericsError>,
{
    let mut tape = GradTape::new();
    let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(NumericsError::NonFinite { label: "grad_check objective".into() });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::{gaussian_matrix, RngState};

    #[test]
    fn quadratic_is_exact_to_second_order() {
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let err = grad_check(
            |tape, v| {
                let sq = tape.mul(v, v)?;
                Ok(tape.sum(sq))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-6, "err {err}");
    }

    #[test]
    fn linear_is_exact() {
        let mut rng = RngState::new(3);
        let x = gaussian_matrix(&mut rng, 1, 5, 1.0);
        let err = grad_check(|tape, v| Ok(tape.sum(v)), &x, 1e-5).unwrap();
        assert!(err <= 1e-10, "err {err}");
    }

    #[test]
    fn two_layer_mlp_matches_finite_differences() {
        let mut rng = RngState::new(11);
        let x = gaussian_matrix(&mut rng, 2, 4, 1.0);
        let w1 = gaussian_matrix(&mut rng, 4, 6, 0.5);
        let w2 = gaussian_matrix(&mut rng, 6, 3, 0.5);
        let params = vec![x, w1, w2];
        let err = grad_check_params(
            |tape, vs| {
                let h = tape.matmul(vs[0], vs[1])?;
                let h = tape.silu(h);
                let o = tape.matmul(h, vs[2])?;
                let o = tape.silu(o);
                let sq = tape.mul(o, o)?;
                Ok(tape.sum(sq))
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-5, "err {err}");
    }

    #[test]
    fn rejects_bad_eps() {
        let x = Tensor::scalar(1.0);
        assert!(matches!(
            grad_check(|tape, v| Ok(tape.sum(v)), &x, 0.5),
            Err(NumericsError::BadStep { .. })
        ));
    }

    #[test]
    fn covers_every_toylm_primitive() {
        // One composite objective touching each differentiable op the toy
        // model uses: gather, rms-norm, row ops, slices, concat, softmax,
        // matmuls, silu, cross-entropy.
        let mut rng = RngState::new(29);
        let table = gaussian_matrix(&mut rng, 5, 4, 1.0);
        let gain = gaussian_matrix(&mut rng, 1, 4, 1.0)
            .map(|x| 1.0 + 0.1 * x);
        let gain = Tensor::from_vec(&[4], gain.data().to_vec()).unwrap();
        let bias = Tensor::from_vec(&[4], vec![0.1, -0.2, 0.3, 0.05]).unwrap();
        let w = gaussian_matrix(&mut rng, 4, 5, 0.7);
        let params = vec![table, gain, bias, w];
        let err = grad_check_params(
            |tape, vs| {
                let h = tape.gather_rows(vs[0], vec![0, 2, 4])?;
                let h = tape.rms_norm_rows(h, 1e-6)?;
                let h = tape.mul_row(h, vs[1])?;
                let h = tape.add_row(h, vs[2])?;
                let a = tape.slice_cols(h, 0, 2)?;
                let b = tape.slice_cols(h, 2, 4)?;
                let s = tape.matmul_nt(a, b)?;
                let s = tape.scale(s, 0.5);
                let p = tape.softmax_rows(s)?;
                let o = tape.matmul(p, a)?;
                let h2 = tape.concat_cols(&[o, b])?;
                let h2 = tape.silu(h2);
                let logits = tape.matmul(h2, vs[3])?;
                tape.cross_entropy_rows(logits, vec![1, 0, 3], vec![1.0, 0.0, 2.0])
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-5, "err {err}");
    }
}
