use proptest::prelude::*;

use spinn_elastic::domain::{linspace, simpson_weights};
use spinn_elastic::loss::{bc_dirichlet_loss, energy_loss};
use spinn_elastic::mechanics::{
    dim_reduce, dim_restore, stress_with, strain, von_mises, Constitutive, HookeCoefficients, ScaleSpec, SymTensor3,
};
use spinn_elastic::nn::{
    grid_points, load_checkpoint, save_checkpoint, spinn_eval_grid_with_derivatives, spinn_eval_points, Activation,
    Checkpoint, CheckpointMeta, FieldBatch, FieldModel, Network, SeparableModel, SeparableSpec,
};
use spinn_elastic::train::{lr_at, mean_std, relative_l2, time_to_accuracy, Metric, RunRecord, ScheduleSpec};

fn sym() -> impl Strategy<Value = SymTensor3> {
    prop::array::uniform6(-1e3..1e3f64).prop_map(SymTensor3::from_array)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #[test]
    fn schedule_never_increases(lr0 in 1e-6..1.0f64, rate in 0.1..1.0f64, every in 1u64..10_000, e in 0u64..1_000_000) {
        let s = ScheduleSpec { lr0, decay_rate: rate, decay_every: every };
        prop_assert!(lr_at(&s, e + 1) <= lr_at(&s, e));
        prop_assert!(lr_at(&s, e) <= lr0);
    }

    #[test]
    fn von_mises_ignores_pressure(s in sym(), p in -1e3..1e3f64) {
        let mut t = s;
        t.xx += p;
        t.yy += p;
        t.zz += p;
        let (a, b) = (von_mises(&s).unwrap(), von_mises(&t).unwrap());
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-9 * (a + 1e3));
    }

    #[test]
    fn hooke_is_linear_and_symmetric(g in prop::array::uniform3(prop::array::uniform3(-1.0..1.0f64)), c in -5.0..5.0f64) {
        let h = HookeCoefficients::new(150.0, 100.0, Constitutive::Standard);
        let e = strain(&g);
        let gt = [0, 1, 2].map(|i| [0, 1, 2].map(|k| g[k][i]));
        prop_assert_eq!(strain(&gt), e);
        let scaled = stress_with(&e.scaled(c), h).to_array();
        let base = stress_with(&e, h).to_array();
        for (a, b) in scaled.iter().zip(base) {
            prop_assert!((a - c * b).abs() <= 1e-12 * (1.0 + b.abs() * c.abs()));
        }
    }

    #[test]
    fn nondim_round_trip(u in prop::array::uniform3(-1e3..1e3f64), s in sym(), l in 0.1..10.0f64, d in 1e-6..1.0f64, m in 1e6..1e12f64) {
        let scale = ScaleSpec { length: l, displacement: d, modulus: m };
        let (du, ds) = dim_restore(u, s, &scale);
        let (bu, bs) = dim_reduce(du, ds, &scale);
        for (a, b) in u.iter().chain(&s.to_array()).zip(bu.iter().chain(&bs.to_array())) {
            prop_assert!(close(*a, *b, 1e-14));
        }
    }

    #[test]
    fn simpson_is_exact_on_cubics(half in 1usize..40, a in -5.0..5.0f64, len in 0.01..10.0f64, c in prop::array::uniform4(-3.0..3.0f64)) {
        let n = 2 * half + 1;
        let b = a + len;
        let w = simpson_weights(n, a, b).unwrap();
        let f = |x: f64| c[0] + x * (c[1] + x * (c[2] + x * c[3]));
        let prim = |x: f64| x * (c[0] + x * (c[1] / 2.0 + x * (c[2] / 3.0 + x * c[3] / 4.0)));
        let q: f64 = linspace(a, b, n).iter().zip(&w).map(|(x, w)| w * f(*x)).sum();
        let exact = prim(b) - prim(a);
        prop_assert!((q - exact).abs() <= 1e-11 * (1.0 + exact.abs()));
        prop_assert!(close(w.iter().sum::<f64>(), len, 1e-13));
    }

    #[test]
    fn relative_l2_is_scale_invariant(v in prop::collection::vec((-1.0..1.0f64, 0.1..1.0f64), 1..50), c in 0.01..100.0f64) {
        let (p, r): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        let e = relative_l2(&p, &r).unwrap();
        let ps: Vec<f64> = p.iter().map(|x| x * c).collect();
        let rs: Vec<f64> = r.iter().map(|x| x * c).collect();
        prop_assert!(close(e, relative_l2(&ps, &rs).unwrap(), 1e-12));
        prop_assert_eq!(relative_l2(&r, &r).unwrap(), 0.0);
    }

    #[test]
    fn mean_std_shift(v in prop::collection::vec(-10.0..10.0f64, 2..20), s in -100.0..100.0f64) {
        let (m, sd) = mean_std(&v).unwrap();
        let shifted: Vec<f64> = v.iter().map(|x| x + s).collect();
        let (m2, sd2) = mean_std(&shifted).unwrap();
        prop_assert!(sd >= 0.0);
        prop_assert!((m2 - m - s).abs() < 1e-9);
        prop_assert!((sd2 - sd).abs() < 1e-9);
    }

    #[test]
    fn first_crossing_wins(errs in prop::collection::vec(0.0..0.2f64, 1..30)) {
        let records: Vec<RunRecord> = errs.iter().enumerate().map(|(i, e)| RunRecord {
            epoch: i as u64,
            loss: Default::default(),
            l2: [(Metric::Uz, *e)].into_iter().collect(),
            lr: 1e-3,
            seed: 0,
            elapsed_s: i as f64,
        }).collect();
        let expected = errs.iter().position(|e| *e <= 0.05).map(|i| i as f64);
        prop_assert_eq!(time_to_accuracy(&records, Metric::Uz, 0.05), expected);
    }

    #[test]
    fn dirichlet_loss_is_quadratic(c in prop::array::uniform3(-10.0..10.0f64), n in 1usize..20, k in -4.0..4.0f64) {
        let mut b = FieldBatch::empty(vec![[0.0; 3]; n], 3);
        for l in 0..3 { b.values[l] = vec![c[l]; n]; }
        let base = bc_dirichlet_loss(&b, [0.0; 3]).unwrap();
        prop_assert!(close(base, c.iter().map(|v| v * v).sum::<f64>() / 3.0, 1e-12));
        for l in 0..3 { b.values[l] = vec![k * c[l]; n]; }
        prop_assert!(close(bc_dirichlet_loss(&b, [0.0; 3]).unwrap(), k * k * base, 1e-12));
    }

    #[test]
    fn unloaded_energy_is_quadratic(a in prop::array::uniform3(prop::array::uniform3(-1.0..1.0f64)), k in -3.0..3.0f64) {
        let h = HookeCoefficients::new(150.0, 100.0, Constitutive::Standard);
        let axis = linspace(0.0, 1.0, 5);
        let pts = grid_points(&[axis.clone(), axis.clone(), axis]);
        let w = vec![1.0 / pts.len() as f64; pts.len()];
        let field = |s: f64| {
            let mut b = FieldBatch::empty(pts.clone(), 3);
            for (p, q) in pts.iter().enumerate() {
                for l in 0..3 {
                    b.values[l][p] = s * (0..3).map(|j| a[l][j] * q[j]).sum::<f64>();
                    b.d_values[l][p] = a[l].map(|v| s * v);
                }
            }
            b
        };
        let e1 = energy_loss(&field(1.0), &w, h, [0.0; 3], &[]).unwrap();
        let ek = energy_loss(&field(k), &w, h, [0.0; 3], &[]).unwrap();
        prop_assert!(e1 >= 0.0);
        prop_assert!((ek - k * k * e1).abs() <= 1e-10 * (1.0 + e1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn separable_grid_matches_points(seed in 0u64..1000, rank in 1usize..6, n in 2usize..5) {
        let spec = SeparableSpec { hidden: vec![6], rank, outputs: 2, activation: Activation::Tanh };
        let mut m = SeparableModel::new(spec, seed).unwrap();
        for b in &mut m.bodies {
            let len = b.flat.len();
            for (i, v) in b.flat[len - 2 * rank..].iter_mut().enumerate() {
                *v = 0.1 * (i as f64 + 1.0);
            }
        }
        let axes = [linspace(0.0, 1.0, n), linspace(-0.5, 0.2, n + 1), linspace(0.1, 0.3, n)];
        let grid = spinn_eval_grid_with_derivatives(&m, &axes).unwrap();
        let pts = spinn_eval_points(&m, &grid.points).unwrap();
        for c in 0..2 {
            for p in 0..grid.len() {
                prop_assert!(close(grid.values[c][p], pts.values[c][p], 1e-10) || (grid.values[c][p] - pts.values[c][p]).abs() < 1e-14);
                for k in 0..3 {
                    let (a, b) = (grid.d_values[c][p][k], pts.d_values[c][p][k]);
                    prop_assert!(close(a, b, 1e-10) || (a - b).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn checkpoint_round_trip(seed in 0u64..1000, epoch in 0u64..100_000) {
        let spec = SeparableSpec { hidden: vec![4, 3], rank: 2, outputs: 3, activation: Activation::Swish };
        let model = FieldModel::new(vec![Network::Separable(SeparableModel::new(spec, seed).unwrap())], vec![]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let meta = CheckpointMeta { problem: "beam".into(), mode: "spinn-dem".into(), seed, epoch };
        save_checkpoint(&path, &Checkpoint { meta: meta.clone(), model: model.clone() }).unwrap();
        let back = load_checkpoint(&path).unwrap();
        prop_assert_eq!(back.meta, meta);
        prop_assert_eq!(back.model.flat(), model.flat());
    }
}
