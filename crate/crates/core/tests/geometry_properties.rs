use minimax_gda::geometry::{generalized_project, gradient_mapping, project, ConstraintSet, Metric};
use minimax_gda::rng::RngStream;
use minimax_gda::Vector;
use proptest::prelude::*;

fn normal_vec(rng: &mut RngStream, d: usize, scale: f64) -> Vector {
    Vector::from_fn(d, |_| scale * rng.standard_normal())
}

fn random_set(rng: &mut RngStream, kind: usize, d: usize) -> ConstraintSet {
    match kind {
        0 => ConstraintSet::Unconstrained,
        1 => {
            let lower = Vector::from_fn(d, |_| -0.2 - rng.uniform());
            let upper = Vector::from_fn(d, |_| 0.2 + rng.uniform());
            ConstraintSet::boxed(lower, upper).unwrap()
        }
        2 => ConstraintSet::ball(normal_vec(rng, d, 0.5), 0.1 + 2.0 * rng.uniform()).unwrap(),
        _ => ConstraintSet::simplex(d).unwrap(),
    }
}

fn random_metric(rng: &mut RngStream, d: usize, rho: f64) -> Metric {
    match rng.index(3) {
        0 => Metric::Scalar(rho + 3.0 * rng.uniform()),
        1 => Metric::Diagonal(Vector::from_fn(d, |_| rho + 5.0 * rng.uniform().powi(2))),
        // Badly conditioned diagonal.
        _ => Metric::Diagonal(Vector::from_fn(d, |i| if i % 2 == 0 { rho } else { rho + 20.0 * rng.uniform() })),
    }
}

fn mul(metric: &Metric, d: &Vector) -> Vector {
    match metric {
        Metric::Identity => d.clone(),
        Metric::Scalar(s) => d.scale(*s),
        Metric::Diagonal(a) => d.zip_with(a, |x, w| x * w).unwrap(),
    }
}

struct Case {
    set: ConstraintSet,
    x_t: Vector,
    v: Vector,
    metric: Metric,
    gamma: f64,
    rho: f64,
}

fn random_case(rng: &mut RngStream, i: usize) -> Case {
    let d = 1 + rng.index(6);
    let set = random_set(rng, i % 4, d);
    let x_t = project(&set, &normal_vec(rng, d, 2.0)).unwrap();
    let v = normal_vec(rng, d, 3.0);
    let rho = 0.01 + rng.uniform();
    let metric = random_metric(rng, d, rho);
    let gamma = 10.0 * (1.0 - rng.uniform());
    Case {
        set,
        x_t,
        v,
        metric,
        gamma,
        rho,
    }
}

#[test]
fn descent_inequality_holds_on_random_tuples() {
    let mut rng = RngStream::new(101, 0);
    for i in 0..1000 {
        let c = random_case(&mut rng, i);
        let g = gradient_mapping(&c.set, &c.x_t, &c.v, &c.metric, c.gamma).unwrap();
        let lhs = c.v.dot(&g).unwrap();
        let rhs = c.rho * g.norm_sq();
        assert!(lhs >= rhs - 1e-9, "case {i}: {lhs} < {rhs} on {:?}", c.set);
    }
}

#[test]
fn projection_satisfies_variational_inequality() {
    let mut rng = RngStream::new(102, 0);
    for i in 0..200 {
        let c = random_case(&mut rng, i);
        let x_plus = generalized_project(&c.set, &c.x_t, &c.v, &c.metric, c.gamma).unwrap();
        assert!(c.set.contains(&x_plus, 1e-9));
        let step = mul(&c.metric, &x_plus.sub(&c.x_t).unwrap()).scale(1.0 / c.gamma);
        let residual = c.v.add(&step).unwrap();
        for _ in 0..100 {
            let z = project(&c.set, &normal_vec(&mut rng, c.x_t.dim(), 3.0)).unwrap();
            let gap = residual.dot(&z.sub(&x_plus).unwrap()).unwrap();
            assert!(gap >= -1e-9, "case {i}: {gap} on {:?}", c.set);
        }
    }
}

/// Best point of the `h`-grid on the simplex for `Σ aᵢ (xᵢ − zᵢ)²`.
///
/// The leading coordinates are enumerated; the last two share what is left,
/// and along that segment the objective is a 1-d convex quadratic, so its
/// best grid point is the floor or ceiling of the continuous minimizer.
fn simplex_grid_search(a: &[f64], z: &[f64], steps: i64) -> Vec<f64> {
    let h = 1.0 / steps as f64;
    let n = a.len();
    let mut best = (f64::INFINITY, vec![0i64; n]);
    let mut prefix = vec![0i64; n - 2];
    loop {
        let used: i64 = prefix.iter().sum();
        if used <= steps {
            let rest = steps - used;
            let head: f64 = prefix
                .iter()
                .enumerate()
                .map(|(i, &k)| a[i] * (k as f64 * h - z[i]).powi(2))
                .sum();
            let (a1, a2, z1, z2) = (a[n - 2], a[n - 1], z[n - 2], z[n - 1]);
            let cont = (a1 * z1 + a2 * (rest as f64 * h - z2)) / ((a1 + a2) * h);
            for k in [cont.floor() as i64, cont.ceil() as i64] {
                let k = k.clamp(0, rest);
                let value = head + a1 * (k as f64 * h - z1).powi(2) + a2 * ((rest - k) as f64 * h - z2).powi(2);
                if value < best.0 {
                    let mut point = prefix.clone();
                    point.extend([k, rest - k]);
                    best = (value, point);
                }
            }
        }
        // Odometer over the leading coordinates.
        let mut i = 0;
        loop {
            if i == prefix.len() {
                return best.1.iter().map(|&k| k as f64 * h).collect();
            }
            prefix[i] += 1;
            if prefix[..=i].iter().sum::<i64>() <= steps {
                break;
            }
            prefix[i] = 0;
            i += 1;
        }
    }
}

#[test]
fn grid_search_oracle_finds_known_projection() {
    let got = simplex_grid_search(&[1.0, 1.0, 1.0], &[0.5, 0.3, -0.4], 1000);
    let expected = [0.6, 0.4, 0.0];
    for (g, e) in got.iter().zip(expected) {
        assert!((g - e).abs() <= 1e-3, "{got:?}");
    }
}

#[test]
fn weighted_simplex_projection_matches_grid_search() {
    let mut rng = RngStream::new(103, 0);
    for i in 0..100 {
        let d = 3 + i % 2;
        let set = ConstraintSet::simplex(d).unwrap();
        let x_t = project(&set, &normal_vec(&mut rng, d, 1.0)).unwrap();
        let v = normal_vec(&mut rng, d, 1.0);
        let a = Vector::from_fn(d, |_| 0.1 + 4.0 * rng.uniform());
        let gamma = 0.1 + rng.uniform();
        let metric = Metric::Diagonal(a.clone());
        let got = generalized_project(&set, &x_t, &v, &metric, gamma).unwrap();
        let z: Vec<f64> = (0..d).map(|j| x_t[j] - gamma * v[j] / a[j]).collect();
        let grid = simplex_grid_search(a.as_slice(), &z, 1000);
        let err = got.max_abs_diff(&Vector::new(grid).unwrap()).unwrap();
        assert!(err <= 2e-3, "instance {i}: error {err}");
    }
}

fn set_strategy() -> impl Strategy<Value = (usize, u64)> {
    (0usize..4, any::<u64>())
}

proptest! {
    #[test]
    fn projection_is_idempotent_and_nonexpansive((kind, seed) in set_strategy(), d in 1usize..6) {
        let mut rng = RngStream::new(seed, 0);
        let set = random_set(&mut rng, kind, d);
        let a = normal_vec(&mut rng, d, 3.0);
        let b = normal_vec(&mut rng, d, 3.0);
        let pa = project(&set, &a).unwrap();
        let pb = project(&set, &b).unwrap();
        prop_assert!(set.contains(&pa, 1e-12));
        prop_assert!(project(&set, &pa).unwrap().max_abs_diff(&pa).unwrap() <= 1e-12);
        prop_assert!(pa.distance(&pb).unwrap() <= a.distance(&b).unwrap() + 1e-12);
    }

    #[test]
    fn unit_metric_reduces_to_projected_step((kind, seed) in set_strategy(), d in 1usize..6, gamma in 0.01f64..5.0) {
        let mut rng = RngStream::new(seed, 1);
        let set = random_set(&mut rng, kind, d);
        let x_t = project(&set, &normal_vec(&mut rng, d, 1.0)).unwrap();
        let v = normal_vec(&mut rng, d, 1.0);
        let plain = project(&set, &x_t.zip_with(&v, |x, g| x - gamma * g).unwrap()).unwrap();
        for metric in [Metric::Identity, Metric::Scalar(1.0), Metric::Diagonal(Vector::filled(d, 1.0))] {
            let got = generalized_project(&set, &x_t, &v, &metric, gamma).unwrap();
            prop_assert!(got.max_abs_diff(&plain).unwrap() <= 1e-9);
        }
    }
}
