//! Quadrature rules on the reference triangle and the unit interval.
//!
//! Triangle weights are normalized to sum to one, so an integral over a
//! physical triangle `T` is `|T| * sum_q w_q f(x_q)`.

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// Barycentric coordinates of the points.
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Highest total polynomial degree integrated exactly.
    pub order: usize,
}

impl QuadratureRule {
    /// Centroid rule, exact for affine integrands.
    pub fn triangle_centroid() -> Self {
        Self {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
            order: 1,
        }
    }

    /// Symmetric 6-point rule of Dunavant, exact up to degree 4.
    pub fn triangle_order4() -> Self {
        const A1: f64 = 0.4459484909159649;
        const W1: f64 = 0.22338158967801147;
        const A2: f64 = 0.09157621350977074;
        const W2: f64 = 0.10995174365532187;
        let b1 = 1.0 - 2.0 * A1;
        let b2 = 1.0 - 2.0 * A2;
        Self {
            points: vec![
                [A1, A1, b1],
                [A1, b1, A1],
                [b1, A1, A1],
                [A2, A2, b2],
                [A2, b2, A2],
                [b2, A2, A2],
            ],
            weights: vec![W1, W1, W1, W2, W2, W2],
            order: 4,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 3], f64)> + '_ {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

/// Gauss-Legendre rule on `[0, 1]` with weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub order: usize,
}

impl EdgeRule {
    /// Three-point Gauss rule, exact up to degree 5.
    pub fn gauss3() -> Self {
        let d = 0.5 * (0.6f64).sqrt();
        Self {
            points: vec![0.5 - d, 0.5, 0.5 + d],
            weights: vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
            order: 5,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}
