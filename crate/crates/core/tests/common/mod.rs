//! Generators and independent oracles shared by the property tests and the
//! acceptance harness.
#![allow(dead_code)]

use polyinv_core::controller::{cost, InverseModel, PolynomialMap};
use polyinv_core::poly::{enumerate_basis, Interval, Monomial, SparsePolynomial};
use polyinv_core::sysid::{fit, regressor_at, ModelSpec, SystemData};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_poly(rng: &mut ChaCha8Rng, n_vars: usize, degree: u32, density: f64) -> SparsePolynomial {
    let mut pairs: Vec<(Vec<u32>, f64)> = Vec::new();
    for e in enumerate_basis(n_vars, degree).unwrap() {
        if rng.random_bool(density) {
            pairs.push((e, rng.random_range(-1.0..1.0)));
        }
    }
    let refs: Vec<(&[u32], f64)> = pairs.iter().map(|(e, c)| (e.as_slice(), *c)).collect();
    SparsePolynomial::from_pairs(n_vars, &refs).unwrap()
}

pub fn random_box(rng: &mut ChaCha8Rng, n: usize) -> Vec<Interval> {
    (0..n)
        .map(|_| {
            let lo = rng.random_range(-2.0..0.5);
            let w = rng.random_range(0.0..2.0);
            Interval::new(lo, lo + w).unwrap()
        })
        .collect()
}

pub struct Instance {
    pub map: PolynomialMap,
    pub r: Vec<f64>,
    pub q: Vec<f64>,
    pub bounds: Vec<Interval>,
}

pub fn general_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_dec = rng.random_range(1..=4);
    let n_fixed = rng.random_range(0..=2);
    let n_comp = rng.random_range(1..=3);
    let degree = rng.random_range(1..=4);
    let comps = (0..n_comp)
        .map(|_| random_poly(&mut rng, n_dec + n_fixed, degree, 0.6))
        .collect();
    Instance {
        map: PolynomialMap::new(comps, n_dec, 1).unwrap(),
        r: (0..n_comp).map(|_| rng.random_range(-2.0..2.0)).collect(),
        q: (0..n_fixed).map(|_| rng.random_range(-1.0..1.0)).collect(),
        bounds: random_box(&mut rng, n_dec),
    }
}

// Components b_j + sum_i A_ji u_i + q-dependent terms, still affine in u.
pub fn affine_instance(seed: u64, tall: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_dec = rng.random_range(1..=4);
    let n_comp = if tall { n_dec + rng.random_range(1..=3) } else { rng.random_range(1..=5) };
    let n_vars = n_dec + 1;
    let comps = (0..n_comp)
        .map(|_| {
            let mut pairs: Vec<(Vec<u32>, f64)> = vec![(vec![0; n_vars], rng.random_range(-1.0..1.0))];
            for i in 0..n_vars {
                let mut e = vec![0; n_vars];
                e[i] = 1;
                pairs.push((e.clone(), rng.random_range(-1.0..1.0)));
                if i < n_dec {
                    e[n_dec] = 1;
                    pairs.push((e, rng.random_range(-0.5..0.5)));
                }
            }
            let mut sq = vec![0; n_vars];
            sq[n_dec] = 2;
            pairs.push((sq, rng.random_range(-1.0..1.0)));
            let refs: Vec<(&[u32], f64)> = pairs.iter().map(|(e, c)| (e.as_slice(), *c)).collect();
            SparsePolynomial::from_pairs(n_vars, &refs).unwrap()
        })
        .collect();
    Instance {
        map: PolynomialMap::new(comps, n_dec, 1).unwrap(),
        r: (0..n_comp).map(|_| rng.random_range(-2.0..2.0)).collect(),
        q: vec![rng.random_range(-1.0..1.0)],
        bounds: random_box(&mut rng, n_dec),
    }
}

pub fn in_box(u: &[f64], bounds: &[Interval]) -> bool {
    u.iter().zip(bounds).all(|(v, b)| b.lo() <= *v && *v <= b.hi())
}

/// Accelerated projected gradient on the dense quadratic, with the model
/// linearized by finite evaluation at the unit vectors.
pub fn projected_gradient(inst: &Instance, mu: f64) -> f64 {
    let n = inst.bounds.len();
    let m = inst.r.len();
    let eval = |u: &[f64]| -> Vec<f64> {
        let x: Vec<f64> = u.iter().chain(&inst.q).copied().collect();
        InverseModel::components(&inst.map)
            .iter()
            .map(|f| f.eval(&x).unwrap())
            .collect()
    };
    let b = eval(&vec![0.0; n]);
    let mut a = vec![vec![0.0; n]; m];
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let col = eval(&e);
        for j in 0..m {
            a[j][i] = col[j] - b[j];
        }
    }
    let mut h = vec![vec![0.0; n]; n];
    let mut g = vec![0.0; n];
    for i in 0..n {
        for k in 0..n {
            h[i][k] = (0..m).map(|j| a[j][i] * a[j][k]).sum::<f64>();
        }
        h[i][i] += mu;
        g[i] = (0..m).map(|j| a[j][i] * (inst.r[j] - b[j])).sum();
    }
    // Frobenius norm bounds the largest eigenvalue.
    let lip = 2.0 * h.iter().flatten().map(|v| v * v).sum::<f64>().sqrt() + 1e-12;
    let project = |v: Vec<f64>| -> Vec<f64> {
        v.iter().zip(&inst.bounds).map(|(x, bd)| bd.clamp(*x)).collect()
    };
    let quad = |u: &[f64]| -> f64 {
        (0..n)
            .map(|i| u[i] * ((0..n).map(|k| h[i][k] * u[k]).sum::<f64>() - 2.0 * g[i]))
            .sum()
    };
    // FISTA with function-value restarts; stops on a tiny gradient mapping.
    let mut x = project(vec![0.0; n]);
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..1_000_000 {
        let grad: Vec<f64> = (0..n)
            .map(|i| 2.0 * ((0..n).map(|k| h[i][k] * y[k]).sum::<f64>() - g[i]))
            .collect();
        let next = project(y.iter().zip(&grad).map(|(v, d)| v - d / lip).collect());
        let mapping: f64 = next.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if quad(&next) > quad(&x) {
            y = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = next
            .iter()
            .zip(&x)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        x = next;
        t = t_next;
        if mapping < 1e-10 {
            break;
        }
    }
    cost(&inst.map, &x, &inst.r, &inst.q, mu).unwrap()
}

/// A single-input multi-step map for the shared-command mode.
pub struct SimoInstance {
    pub map: PolynomialMap,
    pub tau: usize,
    pub r: Vec<f64>,
    pub q: Vec<f64>,
    pub bound: Interval,
}

pub fn simo_instance(seed: u64) -> SimoInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = rng.random_range(1..=4);
    let n_fixed = rng.random_range(0..=2);
    let degree = rng.random_range(1..=3);
    let comps: Vec<_> = (0..tau)
        .map(|_| random_poly(&mut rng, tau + n_fixed, degree, 0.5))
        .collect();
    SimoInstance {
        map: PolynomialMap::new(comps, tau, 1).unwrap(),
        tau,
        r: (0..tau).map(|_| rng.random_range(-2.0..2.0)).collect(),
        q: (0..n_fixed).map(|_| rng.random_range(-1.0..1.0)).collect(),
        bound: random_box(&mut rng, 1)[0],
    }
}

/// Smallest objective over `steps + 1` evenly spaced shared commands.
pub fn simo_grid_min(inst: &SimoInstance, mu: f64, steps: usize) -> f64 {
    let b = inst.bound;
    (0..=steps)
        .map(|i| {
            let t = b.lo() + b.width() * i as f64 / steps as f64;
            cost(&inst.map, &vec![t; inst.tau], &inst.r, &inst.q, mu).unwrap()
        })
        .fold(f64::INFINITY, f64::min)
}

pub const ID_TOL: f64 = 1e-8;

/// Every exponent vector over `n_vars` variables with total degree at most `degree`.
pub fn all_exponents(n_vars: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..n_vars {
        let mut next = Vec::new();
        for e in &out {
            let used: u32 = e.iter().sum();
            for p in 0..=degree - used {
                let mut f = e.clone();
                f.push(p);
                next.push(f);
            }
        }
        out = next;
    }
    out
}

fn random_terms(rng: &mut ChaCha8Rng, n_vars: usize, degree: u32, terms: usize, scale: impl Fn(&[u32]) -> f64) -> Vec<(Vec<u32>, f64)> {
    let mut pool = all_exponents(n_vars, degree);
    pool.shuffle(rng);
    pool.truncate(terms);
    pool.into_iter()
        .map(|e| {
            let c = rng.random_range(0.2..1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 } * scale(&e);
            (e, c)
        })
        .collect()
}

pub fn eval_terms(terms: &[(Vec<u32>, f64)], x: &[f64]) -> f64 {
    terms
        .iter()
        .map(|(e, c)| c * e.iter().zip(x).map(|(p, v)| v.powi(*p as i32)).product::<f64>())
        .sum()
}

fn compare(fitted: &SparsePolynomial, expected: &[(Vec<u32>, f64)], label: &str) -> Result<(), String> {
    for (e, c) in expected {
        let got = fitted.coefficient(e);
        if (got - c).abs() > ID_TOL {
            return Err(format!("{label}: {e:?} fitted {got}, true {c}"));
        }
    }
    for Monomial { exponents, coefficient } in fitted.terms() {
        if !expected.iter().any(|(e, _)| e == exponents) && coefficient.abs() > ID_TOL {
            return Err(format!("{label}: spurious {exponents:?} = {coefficient}"));
        }
    }
    Ok(())
}

/// One-step system with output feedback: `y_t = p(u_t, q-_t)`.
pub fn feedback_instance(rng: &mut ChaCha8Rng, label: &str) -> Result<(), String> {
    loop {
        let (n_u, n_y) = (rng.random_range(1..=2), rng.random_range(1..=2));
        let order = rng.random_range(1..=2);
        let degree = rng.random_range(1..=3);
        let spec = ModelSpec::new(order, 1, degree, n_u, n_y).with_ridge(0.0);
        let n_vars = spec.n_vars();
        let y_start = n_u * (1 + order);
        // Output terms are damped so the recursion stays bounded.
        let polys: Vec<_> = (0..n_y)
            .map(|_| {
                random_terms(rng, n_vars, degree, 6, |e| {
                    let y_deg: u32 = e[y_start..].iter().sum();
                    if y_deg == 0 { 1.0 } else { 0.15 }
                })
            })
            .collect();
        let len = 40 * all_exponents(n_vars, degree).len() + 100;
        let u: Vec<Vec<f64>> = (0..len).map(|_| (0..n_u).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut y = vec![vec![0.0; n_y]; order];
        let mut bounded = true;
        for t in order..len {
            let mut x = u[t].clone();
            x.extend(regressor_at(&u, &y, t, order));
            let row: Vec<f64> = polys.iter().map(|p| eval_terms(p, &x)).collect();
            bounded &= row.iter().all(|v| v.abs() < 10.0);
            y.push(row);
        }
        if !bounded {
            continue;
        }
        let data = SystemData::new(u, y, 1.0).unwrap();
        let model = fit(&data, &spec).map_err(|e| format!("{label}: {e}"))?;
        for (j, p) in polys.iter().enumerate() {
            compare(&model.components()[j], p, &format!("{label} y{j}"))?;
        }
        return Ok(());
    }
}

/// Input-only system `y_t = p(u_t, ..., u_{t-n})`, fitted with a horizon
/// above one. Step `s` of the predictor is `p` with every input shifted by
/// `s`, which is again in the model class.
pub fn shifted_instance(rng: &mut ChaCha8Rng, label: &str) -> Result<(), String> {
    let n_u = rng.random_range(1..=2);
    let n_y = rng.random_range(1..=n_u);
    let order = rng.random_range(1..=2);
    let horizon = rng.random_range(2..=3);
    let degree = rng.random_range(1..=2);
    let spec = ModelSpec::new(order, horizon, degree, n_u, n_y).with_ridge(0.0);
    let lag_vars = (order + 1) * n_u;
    let polys: Vec<Vec<(Vec<u32>, f64)>> = (0..n_y)
        .map(|j| {
            let mut p = random_terms(rng, lag_vars, degree, 5, |_| 1.0);
            // A term in the oldest input keeps each output channel informative
            // about a sample the regressor does not see.
            let mut e = vec![0; lag_vars];
            e[order * n_u + j] = 1;
            p.retain(|(f, _)| *f != e);
            p.push((e, 0.8));
            p
        })
        .collect();
    let len = 30 * all_exponents(spec.n_vars(), degree).len() + 100;
    let u: Vec<Vec<f64>> = (0..len + order).map(|_| (0..n_u).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<Vec<f64>> = (order..len + order)
        .map(|t| {
            let x: Vec<f64> = (0..=order).flat_map(|l| u[t - l].clone()).collect();
            polys.iter().map(|p| eval_terms(p, &x)).collect()
        })
        .collect();
    let data = SystemData::new(u[order..].to_vec(), y, 1.0).unwrap();
    let model = fit(&data, &spec).map_err(|e| format!("{label}: {e}"))?;
    let n_vars = spec.n_vars();
    for s in 0..horizon {
        for (j, p) in polys.iter().enumerate() {
            let shifted: Vec<(Vec<u32>, f64)> = p
                .iter()
                .map(|(e, c)| {
                    let mut f = vec![0; n_vars];
                    for l in 0..=order {
                        for i in 0..n_u {
                            let k = if s >= l {
                                (s - l) * n_u + i
                            } else {
                                horizon * n_u + (l - s - 1) * n_u + i
                            };
                            f[k] += e[l * n_u + i];
                        }
                    }
                    (f, *c)
                })
                .collect();
            compare(&model.components()[s * n_y + j], &shifted, &format!("{label} step {s} y{j}"))?;
        }
    }
    Ok(())
}

/// Round trip on `count` systems, alternating the two families.
pub fn identification_round_trips(seed: u64, count: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        let label = format!("instance {i}");
        if i % 2 == 0 {
            feedback_instance(&mut rng, &label)?;
        } else {
            shifted_instance(&mut rng, &label)?;
        }
    }
    Ok(())
}
