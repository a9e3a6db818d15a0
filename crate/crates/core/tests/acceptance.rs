//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero on any FAIL.

use std::f64::consts::TAU;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cdegree::convex::ConvexSet;
use cdegree::degree::{
    constrained_index, degree_homotopy_check, degree_rhs, locate_zero, DegreeOptions, OpenRegion, Shape,
};
use cdegree::harness::{boundary_exclusion_scan, homotopy_bridge_check, verify, Scenario};
use cdegree::integrator::{self, HomotopyFlowSpec, Scheme};
use cdegree::scenario::bundled;
use cdegree::{LinearOperator, SelectionRule, SetValuedMap, TangentSelection, VectorField};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn scenario(name: &str) -> Scenario {
    bundled(name).unwrap().build().unwrap()
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| {
        let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    })
}

/// sign det(I − exp(tA)) for a real 2×2 `A`, from its eigenvalues.
fn poincare_index_2x2(a: &DMatrix<f64>, t: f64) -> i64 {
    let tr = a[(0, 0)] + a[(1, 1)];
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    let disc = tr * tr / 4.0 - det;
    if disc < 0.0 {
        // |1 − e^{tλ}|² for a conjugate pair
        return 1;
    }
    let l1 = tr / 2.0 + disc.sqrt();
    let l2 = tr / 2.0 - disc.sqrt();
    let p = (1.0 - (t * l1).exp()) * (1.0 - (t * l2).exp());
    p.signum() as i64
}

/// Brouwer degree of a scalar map on `(a, b)` by counting endpoint signs.
fn scalar_degree(g: impl Fn(f64) -> f64, a: f64, b: f64) -> i64 {
    ((g(b).signum() - g(a).signum()) / 2.0) as i64
}

fn criterion_1() -> Outcome {
    // sign det(I − P_t) oracles; the orthant case has P_t(x) = 1 + (x − 1)e^{−t}
    let frozen = [("linear_sink_2d", 1), ("saddle_2d", -1), ("rotation_sink_2d", 1), ("orthant_contraction", 1)];
    let mut notes = Vec::new();
    for (name, expected) in frozen {
        let s = scenario(name);
        let oracle = if name == "orthant_contraction" {
            poincare_index_2x2(&(-DMatrix::identity(2, 2)), 0.1)
        } else {
            poincare_index_2x2(s.op.matrix(), 0.1)
        };
        if oracle != expected {
            return Err(format!("{name}: oracle {oracle} != frozen {expected}"));
        }
        if s.sweeps.poincare_h != 1e-3 || s.sweeps.t != [0.5, 0.2, 0.1, 0.05, 0.02] {
            return Err(format!("{name}: sweep differs from the criterion"));
        }
        let start = Instant::now();
        let r = verify(&s).map_err(|e| format!("{name}: {e}"))?;
        let secs = start.elapsed().as_secs_f64();
        let mut rows = r.index_table.clone();
        rows.sort_by(|a, b| a.t.total_cmp(&b.t));
        let smallest: Vec<Option<i64>> = rows.iter().take(3).map(|r| r.index).collect();
        if !r.pass
            || r.rhs_certificate.value != expected
            || smallest.iter().any(|i| *i != Some(expected))
            || secs > 60.0
        {
            return Err(format!(
                "{name}: pass {} rhs {} smallest-t indices {smallest:?} in {secs:.1}s",
                r.pass, r.rhs_certificate.value
            ));
        }
        notes.push(format!("{name}={expected} ({secs:.2}s)"));
    }
    Ok(notes.join(", "))
}

fn criterion_2() -> Outcome {
    let mut notes = Vec::new();
    for name in ["linear_sink_2d", "saddle_2d", "rotation_sink_2d", "orthant_contraction"] {
        let s = scenario(name);
        let base = s.region().unwrap().clone();
        let perturbed = match base.shape() {
            Shape::Ball { center, radius } => Shape::ball(center.add_scalar(0.03), radius * 1.07).unwrap(),
            Shape::Box { lo, hi } => Shape::boxed(lo.add_scalar(-0.04), hi.add_scalar(0.06)).unwrap(),
        };
        let regions = [
            base.clone(),
            OpenRegion::new(s.set.clone(), perturbed).unwrap().with_margin(2.5),
        ];
        let alpha = *s.sweeps.alpha.last().unwrap();
        let mut values = Vec::new();
        for h in [1e-1, 3e-2, 1e-2] {
            for seed in [3u64, 17] {
                for region in &regions {
                    let opts = DegreeOptions {
                        rule: SelectionRule::Seeded(seed),
                        ..DegreeOptions::default()
                    };
                    let c = constrained_index(&s.op, &s.map, region, alpha, h, &opts)
                        .map_err(|e| format!("{name} h={h} seed={seed}: {e}"))?;
                    values.push(c.value);
                }
            }
        }
        if values.len() != 12 || values.iter().any(|v| *v != values[0]) {
            return Err(format!("{name}: {values:?}"));
        }
        notes.push(format!("{name}: 12x{}", values[0]));
    }
    Ok(notes.join(", "))
}

fn criterion_3() -> Outcome {
    let cubic = |x: f64| x * (1.0 - x) * (2.0 - x);
    let line = ConvexSet::whole(1).unwrap();
    let op = LinearOperator::zero(1).unwrap();
    let map = SetValuedMap::single_valued(1, move |_, x| v(&[cubic(x[0])]), 20.0).unwrap();
    let sweep = [(1e-3, 1e-1), (1e-4, 3e-2), (1e-5, 1e-2)];
    let opts = DegreeOptions::default();
    let mut degrees = Vec::new();
    for (a, b) in [(-0.5, 2.5), (-0.5, 1.5), (1.5, 2.5)] {
        let region = OpenRegion::new(line.clone(), Shape::boxed(v(&[a]), v(&[b])).unwrap()).unwrap();
        // deg_K(G, U) = deg_B(−G, U)
        let oracle = scalar_degree(|x| -cubic(x), a, b);
        let c = degree_rhs(&op, &map, &region, &sweep, &opts).map_err(|e| e.to_string())?;
        if c.value != oracle {
            return Err(format!("({a}, {b}): degree {} but sign count {oracle}", c.value));
        }
        if c.value != 0 {
            let zero = locate_zero(&op, &map, &region, 0.0, 1e-6).map_err(|e| e.to_string())?;
            if zero.is_none() {
                return Err(format!("({a}, {b}): nonzero degree without a located zero"));
            }
        }
        degrees.push(c.value);
    }
    if degrees != [-1, 0, -1] || degrees[0] != degrees[1] + degrees[2] {
        return Err(format!("additivity broken: {degrees:?}"));
    }

    // existence on the shipped nonzero scenarios
    for name in ["linear_sink_2d", "saddle_2d", "rotation_sink_2d", "orthant_contraction"] {
        let s = scenario(name);
        let region = s.region().unwrap();
        if locate_zero(&s.op, &s.map, region, 0.0, 1e-6).map_err(|e| e.to_string())?.is_none() {
            return Err(format!("{name}: no zero located"));
        }
    }

    // A + zJ stays zero-free on the unit circle for A = −I
    let s = scenario("linear_sink_2d");
    let family = |z: f64| {
        SetValuedMap::linear(DMatrix::from_row_slice(2, 2, &[0.0, -2.0 * z, 2.0 * z, 0.0]), DVector::zeros(2), 0.0)
    };
    let z: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let report = degree_homotopy_check(&s.op, &family, s.region().unwrap(), &z, &sweep, &opts)
        .map_err(|e| e.to_string())?;
    if !report.constant || report.values[0] != 1 {
        return Err(format!("homotopy values {:?}", report.values));
    }
    Ok(format!(
        "degrees {degrees:?}, homotopy constant 1 over 11 z (min residual {:.3})",
        report.min_residual
    ))
}

fn set_kinds() -> Vec<(&'static str, ConvexSet)> {
    vec![
        ("box", ConvexSet::boxed(v(&[-1.0, 0.0, -2.0]), v(&[1.0, 2.0, 0.5])).unwrap()),
        (
            "halfspaces",
            ConvexSet::halfspaces(
                vec![v(&[1.0, 1.0, 0.0]), v(&[-1.0, 0.5, 0.0]), v(&[0.0, 0.0, 1.0])],
                vec![1.0, 1.0, 0.5],
            )
            .unwrap(),
        ),
        ("ball", ConvexSet::ball(v(&[0.5, -0.2, 0.1]), 1.3).unwrap()),
        (
            "product",
            ConvexSet::product(vec![
                ConvexSet::boxed(v(&[0.0]), v(&[1.0])).unwrap(),
                ConvexSet::ball(v(&[0.0, 0.0]), 1.0).unwrap(),
            ])
            .unwrap(),
        ),
        ("whole", ConvexSet::whole(3).unwrap()),
        ("orthant", ConvexSet::orthant(3).unwrap()),
    ]
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_vi = f64::NEG_INFINITY;
    let (step, slope_in, band) = (1e-7, 1e-5, (1e-9, 1e-4));
    let mut ambiguous = 0;
    let mut checked = 0;
    for (name, set) in set_kinds() {
        for _ in 0..1000 {
            let y = gaussian_vec(&mut rng, 3) * 3.0;
            let k = set.project(&(gaussian_vec(&mut rng, 3) * 3.0)).unwrap();
            let r = set.variational_residual(&y, &k).map_err(|e| format!("{name}: {e}"))?;
            worst_vi = worst_vi.max(r);
        }
        if worst_vi > 1e-10 {
            return Err(format!("{name}: variational residual {worst_vi:e}"));
        }
        // boundary points from projections, each probed with random and cone-projected directions
        for _ in 0..10 {
            let x = set.project(&(gaussian_vec(&mut rng, 3) * 3.0)).unwrap();
            let cone = set.tangent_cone_default(&x).unwrap();
            for j in 0..10 {
                let raw = gaussian_vec(&mut rng, 3);
                let dir = if j % 2 == 0 { raw } else { cone.project(&raw) };
                let len = dir.norm();
                if len < 1e-6 {
                    continue;
                }
                let gap = cone.distance(&dir) / len;
                if gap > band.0 && gap < band.1 {
                    ambiguous += 1;
                    continue;
                }
                checked += 1;
                let inside_by_cone = cone.contains(&dir, band.0 * len);
                let slope = set.distance(&(&x + &dir * step)).unwrap() / (step * len);
                if inside_by_cone != (slope <= slope_in) {
                    return Err(format!(
                        "{name}: direction {:?} at {:?}: cone says {inside_by_cone}, slope {slope:e}",
                        dir.as_slice(),
                        x.as_slice()
                    ));
                }
            }
        }
    }
    Ok(format!(
        "max variational residual {worst_vi:.1e}; {checked} cone checks, 0 misclassified, {ambiguous} in the band"
    ))
}

fn criterion_5() -> Outcome {
    let logistic = bundled("orthant_logistic").unwrap();
    let s = logistic.build().unwrap();
    let sim = logistic.simulate.clone().unwrap();
    let f = s.selection(SelectionRule::Barycenter).unwrap();
    let traj = integrator::solve(&s.op, &s.set, &f, &v(&sim.x0), 1.0, 1e-3, s.scheme).map_err(|e| e.to_string())?;
    if traj.len() != 1001 || traj.max_distance() > 1e-9 {
        return Err(format!("{} states, max distance {:e}", traj.len(), traj.max_distance()));
    }

    let hs = [1e-2, 1e-3, 1e-4, 1e-5];
    let disc = ConvexSet::ball(DVector::zeros(2), 1.0).unwrap();
    let still = LinearOperator::zero(2).unwrap();
    let rotation = VectorField::new(2, |_, x| v(&[-x[1], x[0]]));
    let outward = VectorField::new(2, |_, _| v(&[1.0, 0.0]));
    let on_circle = v(&[1.0, 0.0]);
    let mut grid = Vec::new();
    let mut turning = Vec::new();
    let mut control = Vec::new();
    for h in hs {
        grid.push(integrator::viability_drift(&s.op, &s.set, &f, &v(&sim.x0), 0.1, h).map_err(|e| e.to_string())?);
        turning.push(integrator::viability_drift(&still, &disc, &rotation, &on_circle, 1.0, h).map_err(|e| e.to_string())?);
        control.push(integrator::viability_drift(&still, &disc, &outward, &on_circle, 1.0, h).map_err(|e| e.to_string())?);
    }
    let non_increasing = |r: &[f64]| r.windows(2).all(|w| w[1] <= w[0]);
    let strictly = |r: &[f64]| r.windows(2).all(|w| w[1] < w[0]);
    if !non_increasing(&grid) || grid[3] > 1e-2 {
        return Err(format!("logistic grid drift {grid:?}"));
    }
    if !strictly(&turning) || turning[3] > 1e-2 {
        return Err(format!("rotation drift {turning:?}"));
    }
    if control.iter().any(|r| *r < 0.9) {
        return Err(format!("negative control drift {control:?}"));
    }
    Ok(format!(
        "max d(u_k;K) {:.1e} over 10^3 steps; drift grid {:.1e}, rotation {:.1e} -> {:.1e}, control min {:.2}",
        traj.max_distance(),
        grid[3],
        turning[0],
        turning[3],
        control.iter().copied().fold(f64::INFINITY, f64::min)
    ))
}

fn criterion_6() -> Outcome {
    let op = LinearOperator::new(DMatrix::from_element(1, 1, -1.0)).unwrap();
    let line = ConvexSet::whole(1).unwrap();
    let forcing = SetValuedMap::single_valued(1, |t, _| v(&[t.sin()]), 1.0).unwrap();
    let f = TangentSelection::new(forcing, line.clone(), 0.0, SelectionRule::Barycenter).unwrap();
    let (x0, t_end) = (0.5_f64, 1.0_f64);
    // x(t) = (x0 + 1/2) e^{−t} + (sin t − cos t)/2
    let exact = (x0 + 0.5) * (-t_end).exp() + (t_end.sin() - t_end.cos()) / 2.0;
    let hs = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4];
    let mut errors = Vec::new();
    for h in hs {
        let end = integrator::poincare(&op, &line, &f, &v(&[x0]), t_end, h, Scheme::ProjectedResolvent)
            .map_err(|e| e.to_string())?;
        errors.push((end[0] - exact).abs());
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = hs.iter().zip(&errors).map(|(h, e)| (h.ln(), e.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let last = errors[errors.len() - 1];
    if slope < 0.9 || last > 5e-3 {
        return Err(format!("slope {slope:.3}, error at 1e-4 {last:e}"));
    }
    Ok(format!("slope {slope:.3}, error at h=1e-4 {last:.2e}"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_resolvent: f64 = 0.0;
    let mut worst_semigroup: f64 = 0.0;
    for _ in 0..100 {
        let b = DMatrix::from_fn(5, 5, |_, _| gaussian_vec(&mut rng, 1)[0]);
        let op = LinearOperator::new((&b + b.transpose()) * 0.5).unwrap();
        let x = gaussian_vec(&mut rng, 5).normalize();
        let cap = 0.9 / op.growth_omega().max(1e-3);
        let a = rng.random_range(0.01..1.0) * cap.min(1.0);
        let bh = rng.random_range(0.01..1.0) * cap.min(1.0);
        worst_resolvent = worst_resolvent.max(op.resolvent_identity_residual(a, bh, &x).unwrap());
        let s = rng.random_range(0.0..0.5);
        let t = rng.random_range(0.0..0.5);
        let lhs = op.semigroup_apply(s + t, &x).unwrap();
        let rhs = op.semigroup_apply(s, &op.semigroup_apply(t, &x).unwrap()).unwrap();
        worst_semigroup = worst_semigroup.max((lhs - rhs).norm());
    }
    if worst_resolvent > 1e-10 || worst_semigroup > 1e-10 {
        return Err(format!("resolvent {worst_resolvent:e}, semigroup {worst_semigroup:e}"));
    }
    Ok(format!("resolvent {worst_resolvent:.1e}, semigroup {worst_semigroup:.1e}"))
}

fn criterion_8() -> Outcome {
    let s = scenario("linear_sink_2d");
    let z: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
    let r = homotopy_bridge_check(&s, 0.05, 1e-2, &z).map_err(|e| e.to_string())?;
    if r.stage1.len() != 21 || r.stage1.iter().chain(&r.stage2).any(|m| m.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)) {
        return Err(format!("stage minima {:?} / {:?}", r.stage1, r.stage2));
    }
    let f = s.selection(SelectionRule::Barycenter).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let zz = rng.random_range(0.0..=1.0);
        let spec = HomotopyFlowSpec::new(zz, 1e-2, &s.op, &s.set, &f).unwrap();
        let x = gaussian_vec(&mut rng, 2);
        worst = worst.max(spec.identity_residual(0.0, &x).unwrap());
    }
    if worst > 1e-10 {
        return Err(format!("identity residual {worst:e}"));
    }
    Ok(format!(
        "stage minima {:.3e} / {:.3e}, identity residual {worst:.1e}",
        r.stage1_min, r.stage2_min
    ))
}

fn criterion_9() -> Outcome {
    let ts = [0.02, 0.05, 0.1, 0.2, 0.5];
    let z = [0.0, 0.25, 0.5, 0.75, 1.0];
    let sink = scenario("linear_sink_2d");
    let r = boundary_exclusion_scan(&sink, None, &z, &ts, 1e-6).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for row in &r.rows {
        worst = worst.max((row.floor - (1.0 - (-row.t).exp())).abs());
    }
    if worst > 1e-3 {
        return Err(format!("sink floors off by {worst:e}"));
    }

    let center = scenario("center_2d");
    let mut with_period = ts.to_vec();
    with_period.push(TAU);
    let c = boundary_exclusion_scan(&center, None, &z, &with_period, 1e-6).map_err(|e| e.to_string())?;
    let (short, period) = c.rows.split_at(ts.len());
    // ‖x − R(t)x‖ = 2 sin(t/2) on the unit circle
    let chord = short.iter().map(|r| (r.floor - 2.0 * (r.t / 2.0).sin()).abs()).fold(0.0, f64::max);
    if period[0].floor > 1e-6 || chord > 1e-3 || c.t_star != Some(0.5) {
        return Err(format!(
            "center floors {:?}, t_star {:?}",
            c.rows.iter().map(|r| r.floor).collect::<Vec<_>>(),
            c.t_star
        ));
    }
    Ok(format!(
        "sink floors within {worst:.1e}; center floor {:.1e} at 2 pi, chord error {chord:.1e} for t <= 0.5",
        period[0].floor
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 index of the Poincare operator equals the constrained degree", criterion_1),
        ("2 degree independent of h, selection seed and bounding box", criterion_2),
        ("3 additivity, existence and homotopy invariance", criterion_3),
        ("4 projection and tangent cone suite", criterion_4),
        ("5 viability and drift", criterion_5),
        ("6 integrator convergence", criterion_6),
        ("7 resolvent identity and semigroup law", criterion_7),
        ("8 homotopy bridge", criterion_8),
        ("9 boundary exclusion", criterion_9),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        match run() {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{:.1}s]", start.elapsed().as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail} [{:.1}s]", start.elapsed().as_secs_f64());
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
