use super::GeneratorMatrix;

/// Largest `q t` handled in one uniformization pass; longer horizons are
/// split into equal chunks.
pub const UNIFORMIZATION_CHUNK: f64 = 500.0;

/// `p(t) = exp(t W) p0` by uniformization. The Poisson series is cut once the
/// remaining weight falls below `tol`; the result is clipped at zero.
pub fn transient_distribution(w: &GeneratorMatrix, p0: &[f64], t: f64, tol: f64) -> Vec<f64> {
    assert_eq!(p0.len(), w.dim(), "p0 has the wrong length");
    assert!(t >= 0.0 && t.is_finite(), "t must be finite and nonnegative");
    assert!(tol > 0.0, "tol must be positive");
    let q = w.max_exit_rate() * 1.02;
    if t == 0.0 || q == 0.0 {
        return p0.to_vec();
    }
    let chunks = (q * t / UNIFORMIZATION_CHUNK).ceil().max(1.0) as usize;
    let dt = t / chunks as f64;
    let mut p = p0.to_vec();
    for _ in 0..chunks {
        p = pass(w, &p, q, q * dt, tol / chunks as f64);
    }
    p
}

/// One pass with uniformization rate `q` over `qt = q dt`.
fn pass(w: &GeneratorMatrix, p0: &[f64], q: f64, qt: f64, tol: f64) -> Vec<f64> {
    let n = p0.len();
    let mut v = p0.to_vec();
    let mut wv = vec![0.0; n];
    let mut out = vec![0.0; n];
    // ln of the Poisson(qt) weight of term k.
    let mut log_w = -qt;
    let mut mass = 0.0;
    let mut k = 0usize;
    loop {
        let weight = log_w.exp();
        if weight > 0.0 {
            for (o, x) in out.iter_mut().zip(&v) {
                *o += weight * x;
            }
        }
        mass += weight;
        if k as f64 > qt && 1.0 - mass <= tol {
            break;
        }
        // Past the mode the weights only shrink; stop once they are
        // negligible even if rounding keeps the mass short of one.
        if k as f64 > qt + 10.0 * qt.sqrt() + 50.0 && weight < tol * 1e-3 {
            break;
        }
        w.apply(&v, &mut wv);
        for (x, d) in v.iter_mut().zip(&wv) {
            *x += d / q;
        }
        k += 1;
        log_w += qt.ln() - (k as f64).ln();
    }
    for x in out.iter_mut() {
        *x = x.max(0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> GeneratorMatrix {
        GeneratorMatrix::from_triplets(2, &[(0, 0, -1.0), (1, 0, 1.0), (0, 1, 1.0), (1, 1, -1.0)])
    }

    #[test]
    fn identity_at_zero() {
        assert_eq!(transient_distribution(&two_state(), &[0.3, 0.7], 0.0, 1e-10), vec![0.3, 0.7]);
    }

    #[test]
    fn long_horizon_chunks() {
        let w = two_state();
        let p = transient_distribution(&w, &[1.0, 0.0], 1000.0, 1e-10);
        assert!((p[0] - 0.5).abs() < 1e-9);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
