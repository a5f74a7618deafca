//! Derivative bookkeeping. Tables list all partial derivatives up to order 3
//! as `(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), (3,0), (2,1), (1,2), (0,3)`,
//! i.e. by total order and then by the number of y-derivatives.

use nalgebra::Matrix2;

/// Number of table entries up to and including each order.
pub const N_DERIVS: [usize; 4] = [1, 3, 6, 10];

pub fn deriv_index(px: usize, py: usize) -> usize {
    let k = px + py;
    k * (k + 1) / 2 + py
}

/// Matrix `T` with `d_phys = T d_ref` for an affine map whose inverse
/// Jacobian is `k` (`k[(b, a)] = ∂x̂_b / ∂x_a`).
pub fn derivative_transform(k: &Matrix2<f64>) -> [[f64; 10]; 10] {
    let mut t = [[0.0; 10]; 10];
    t[0][0] = 1.0;
    for order in 1..=3 {
        for py in 0..=order {
            let px = order - py;
            // Expand prod of (k00 ∂x̂ + k10 ∂ŷ)^px (k01 ∂x̂ + k11 ∂ŷ)^py as
            // coefficients of ∂x̂^(order-i) ∂ŷ^i.
            let mut coeffs = vec![1.0];
            let factors = std::iter::repeat_n((k[(0, 0)], k[(1, 0)]), px)
                .chain(std::iter::repeat_n((k[(0, 1)], k[(1, 1)]), py));
            for (cx, cy) in factors {
                let mut next = vec![0.0; coeffs.len() + 1];
                for (i, &c) in coeffs.iter().enumerate() {
                    next[i] += c * cx;
                    next[i + 1] += c * cy;
                }
                coeffs = next;
            }
            let row = deriv_index(px, py);
            for (i, &c) in coeffs.iter().enumerate() {
                t[row][deriv_index(order - i, i)] = c;
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_layout() {
        let expected = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)];
        for (i, &(px, py)) in expected.iter().enumerate() {
            assert_eq!(deriv_index(px, py), i);
        }
    }

    #[test]
    fn scaling_map() {
        // x = 2 x̂ ⇒ ∂x = ½ ∂x̂.
        let k = Matrix2::new(0.5, 0.0, 0.0, 0.5);
        let t = derivative_transform(&k);
        assert_eq!(t[deriv_index(2, 1)][deriv_index(2, 1)], 0.125);
        assert_eq!(t[1][1], 0.5);
        assert_eq!(t[1][2], 0.0);
    }
}
