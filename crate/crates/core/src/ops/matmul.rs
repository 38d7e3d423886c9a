use crate::error::{ensure_eq, Result};
use crate::par::for_each_chunk;
use crate::tensor::BatchMatrix;

/// `c[b] = a[b] · b[b]`, summing over the inner dim in ascending order.
pub fn batched_matmul(a: &BatchMatrix, b: &BatchMatrix) -> Result<BatchMatrix> {
    ensure_eq("batched_matmul", "batch", a.batch, b.batch)?;
    ensure_eq("batched_matmul", "inner dim", a.cols, b.rows)?;
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut out = BatchMatrix::zeros(a.batch, m, n);
    let ad = a.data();
    let bd = b.data();
    for_each_chunk(out.data_mut(), n, |row, acc| {
        let batch = row / m;
        let arow = &ad[row * k..(row + 1) * k];
        let bmat = &bd[batch * k * n..(batch + 1) * k * n];
        for (kk, av) in arow.iter().enumerate() {
            let brow = &bmat[kk * n..(kk + 1) * n];
            for (c, bv) in acc.iter_mut().zip(brow) {
                *c += av * bv;
            }
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_multiply() {
        let a = BatchMatrix::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = BatchMatrix::new(1, 2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let c = batched_matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn identity_right_operand() {
        let a = BatchMatrix::from_fn(3, 4, 5, |b, r, c| (b as f32 - r as f32) * 0.3 + c as f32);
        let eye = BatchMatrix::from_fn(3, 5, 5, |_, r, c| if r == c { 1.0 } else { 0.0 });
        assert!(batched_matmul(&a, &eye).unwrap().bit_eq(&a));
    }

    #[test]
    fn inner_dim_mismatch() {
        let a = BatchMatrix::zeros(1, 2, 3);
        let b = BatchMatrix::zeros(1, 2, 3);
        let err = batched_matmul(&a, &b).unwrap_err();
        assert!(err.to_string().contains("inner dim"));
    }
}
