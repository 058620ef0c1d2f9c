//! Sparse multivariate polynomials with exact derivatives.

use alloc::vec::Vec;

use nalgebra::DVector;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    /// `(coefficient, exponents)` pairs.
    pub terms: Vec<(f64, Vec<u32>)>,
}

fn pow(x: f64, e: u32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..e {
        acc *= x;
    }
    acc
}

impl Polynomial {
    pub fn new(terms: Vec<(f64, Vec<u32>)>) -> Self {
        Self { terms }
    }

    /// Largest variable index used plus one.
    pub fn arity(&self) -> usize {
        self.terms.iter().map(|(_, e)| e.len()).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.terms
            .iter()
            .map(|(c, e)| c * e.iter().enumerate().map(|(i, &k)| pow(x[i], k)).product::<f64>())
            .sum()
    }

    pub fn partial(&self, var: usize, x: &DVector<f64>) -> f64 {
        self.terms
            .iter()
            .filter(|(_, e)| e.get(var).copied().unwrap_or(0) > 0)
            .map(|(c, e)| {
                let mut v = *c;
                for (i, &k) in e.iter().enumerate() {
                    v *= if i == var { k as f64 * pow(x[i], k - 1) } else { pow(x[i], k) };
                }
                v
            })
            .sum()
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(x.len(), (0..x.len()).map(|i| self.partial(i, x)))
    }
}
