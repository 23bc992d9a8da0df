use std::cmp::Ordering;

use super::PolyError;

/// Largest basis the enumerator will materialize unless told otherwise.
pub const DEFAULT_MAX_BASIS: usize = 1_000_000;

/// Graded lexicographic order: total degree first, then the exponent tuple
/// compared lexicographically with larger leading exponents first, so that
/// `x1` precedes `x2` and `x1^2` precedes `x1*x2`.
pub fn grlex_cmp(a: &[u32], b: &[u32]) -> Ordering {
    let da: u32 = a.iter().sum();
    let db: u32 = b.iter().sum();
    da.cmp(&db).then_with(|| b.cmp(a))
}

/// Number of monomials in `n_vars` variables of total degree at most `degree`,
/// i.e. C(n_vars + degree, degree). Saturates at `u128::MAX`.
pub fn basis_size(n_vars: usize, degree: u32) -> u128 {
    let k = degree as u128;
    let n = n_vars as u128 + k;
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All exponent tuples with total degree `<= degree`, in graded lexicographic
/// order.
pub fn enumerate_basis(n_vars: usize, degree: u32) -> Result<Vec<Vec<u32>>, PolyError> {
    enumerate_basis_capped(n_vars, degree, DEFAULT_MAX_BASIS)
}

pub fn enumerate_basis_capped(
    n_vars: usize,
    degree: u32,
    max_terms: usize,
) -> Result<Vec<Vec<u32>>, PolyError> {
    if n_vars == 0 {
        return Err(PolyError::NoVariables);
    }
    let count = basis_size(n_vars, degree);
    if count > max_terms as u128 {
        return Err(PolyError::Capacity {
            requested: count,
            limit: max_terms,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut current = vec![0u32; n_vars];
    for d in 0..=degree {
        compositions(d, 0, &mut current, &mut out);
    }
    debug_assert_eq!(out.len() as u128, count);
    Ok(out)
}

// Emits every split of `remaining` over current[pos..], leading exponent
// descending.
fn compositions(remaining: u32, pos: usize, current: &mut [u32], out: &mut Vec<Vec<u32>>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.to_vec());
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        compositions(remaining - e, pos + 1, current, out);
    }
    current[pos] = 0;
}

/// Like [`enumerate_basis`] but keeps only tuples whose combined degree in
/// the first `leading` variables is at most `leading_cap`.
pub fn enumerate_basis_with_leading_cap(
    n_vars: usize,
    degree: u32,
    leading: usize,
    leading_cap: u32,
) -> Result<Vec<Vec<u32>>, PolyError> {
    let all = enumerate_basis(n_vars, degree)?;
    Ok(all
        .into_iter()
        .filter(|e| e[..leading.min(n_vars)].iter().sum::<u32>() <= leading_cap)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial_oracle(n: u64, k: u64) -> u64 {
        // Pascal's triangle, independent of the multiplicative formula.
        let mut row = vec![1u64];
        for _ in 0..n {
            let mut next = vec![1u64; row.len() + 1];
            for i in 1..row.len() {
                next[i] = row[i - 1] + row[i];
            }
            row = next;
        }
        row[k as usize]
    }

    #[test]
    fn two_vars_degree_two_in_grlex() {
        let b = enumerate_basis(2, 2).unwrap();
        assert_eq!(
            b,
            vec![
                vec![0, 0],
                vec![1, 0],
                vec![0, 1],
                vec![2, 0],
                vec![1, 1],
                vec![0, 2]
            ]
        );
    }

    #[test]
    fn univariate_degree_six() {
        let b = enumerate_basis(1, 6).unwrap();
        assert_eq!(b.len(), 7);
        assert_eq!(b[6], vec![6]);
    }

    #[test]
    fn eight_vars_degree_four() {
        assert_eq!(binomial_oracle(12, 4), 495);
        assert_eq!(enumerate_basis(8, 4).unwrap().len(), 495);
    }

    #[test]
    fn counts_match_binomial_table() {
        for n in 1..=8usize {
            for d in 0..=6u32 {
                let got = enumerate_basis(n, d).unwrap().len() as u64;
                assert_eq!(got, binomial_oracle(n as u64 + d as u64, d as u64), "n={n} d={d}");
            }
        }
    }

    #[test]
    fn ordering_is_strictly_increasing() {
        let b = enumerate_basis(4, 4).unwrap();
        for w in b.windows(2) {
            assert_eq!(grlex_cmp(&w[0], &w[1]), Ordering::Less);
        }
    }

    #[test]
    fn capacity_error() {
        let err = enumerate_basis(40, 8).unwrap_err();
        assert!(matches!(err, PolyError::Capacity { .. }));
        assert!(enumerate_basis_capped(3, 3, 10).is_err());
        assert!(enumerate_basis_capped(3, 3, 20).is_ok());
    }

    #[test]
    fn leading_cap_filters() {
        let b = enumerate_basis_with_leading_cap(3, 3, 2, 1).unwrap();
        assert!(b.iter().all(|e| e[0] + e[1] <= 1));
        assert!(b.contains(&vec![0, 0, 3]));
        assert!(b.contains(&vec![1, 0, 2]));
    }
}
