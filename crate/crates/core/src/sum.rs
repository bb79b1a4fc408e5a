// Pairwise summation keeps the rounding error at O(log n · eps) instead of
// O(n · eps) for the naive left fold.

const BASE_CASE: usize = 32;

pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= BASE_CASE {
        values.iter().sum()
    } else {
        let (left, right) = values.split_at(values.len() / 2);
        pairwise_sum(left) + pairwise_sum(right)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let products: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&products)
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    let squares: Vec<f64> = a.iter().map(|x| x * x).collect();
    pairwise_sum(&squares)
}
