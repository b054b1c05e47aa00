use crate::scalar::Scalar;

/// `sum_{s,a} u(s,a)^2 / (lambda(s,a) + lambda0(s,a))`.
///
/// Returns `+inf` when some coordinate with `u != 0` has zero total mass.
pub fn design_value<T: Scalar>(lambda: &[T], lambda0: Option<&[T]>, u: &[T]) -> T {
    weighted_design_value(lambda, lambda0, u.iter().map(|&x| x * x))
}

/// Same as [`design_value`] with the squared direction supplied directly.
pub fn weighted_design_value<T: Scalar>(
    lambda: &[T],
    lambda0: Option<&[T]>,
    squared: impl IntoIterator<Item = T>,
) -> T {
    let mut total = T::zero();
    for (idx, c) in squared.into_iter().enumerate() {
        if c == T::zero() {
            continue;
        }
        let mass = lambda[idx] + lambda0.map_or(T::zero(), |l0| l0[idx]);
        if mass <= T::zero() {
            return T::infinity();
        }
        total += c / mass;
    }
    total
}
