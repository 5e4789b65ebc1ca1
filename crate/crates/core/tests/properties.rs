use ppseg_core::check::random_tensor;
use ppseg_core::grouping::inverse_density;
use ppseg_core::tensor::{kernels, mlp_forward, Eager, MlpSpec, ParamSet};
use ppseg_core::Tensor;
use proptest::prelude::*;

fn shape_pair() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..4, 1usize..4, 1usize..4, 0u8..4).prop_map(|(a, b, c, mask)| {
        let full = vec![a, b, c];
        let other = vec![if mask & 1 == 0 { a } else { 1 }, if mask & 2 == 0 { b } else { 1 }, c];
        (full, other)
    })
}

proptest! {
    #[test]
    fn broadcast_mul_commutes((sa, sb) in shape_pair(), seed in 0u64..1000) {
        let a = random_tensor(&sa, seed, 1.0);
        let b = random_tensor(&sb, seed + 1, 1.0);
        let ab = kernels::mul(&a, &b).unwrap();
        let ba = kernels::mul(&b, &a).unwrap();
        prop_assert_eq!(ab.shape(), ba.shape());
        prop_assert_eq!(ab.data(), ba.data());
        prop_assert_eq!(ab.shape(), &sa[..]);
    }

    #[test]
    fn mlp_is_pointwise(rows in 1usize..8, c in 1usize..5, hidden in 1usize..6, seed in 0u64..500, rot in 0usize..8) {
        let spec = MlpSpec::relu(&[c, hidden, 3], seed);
        let mut params = ParamSet::new();
        spec.init("m", &mut params).unwrap();
        let x = random_tensor(&[rows, c], seed + 9, 1.0);
        let y = mlp_forward(&mut Eager, &params, "m", &spec, x.clone()).unwrap();
        let rot = rot % rows;
        let mut perm = x.data().to_vec();
        perm.rotate_left(rot * c);
        let yp = mlp_forward(&mut Eager, &params, "m", &spec, Tensor::new([rows, c], perm).unwrap()).unwrap();
        let mut expect = y.data().to_vec();
        expect.rotate_left(rot * 3);
        prop_assert_eq!(yp.data(), &expect[..]);
    }

    #[test]
    fn max_pool_bounds(m in 1usize..5, s in 1usize..7, c in 1usize..4, seed in 0u64..500) {
        let x = random_tensor(&[m, s, c], seed, 2.0);
        let (out, arg) = kernels::max_pool_axis(&x, 1).unwrap();
        prop_assert_eq!(out.shape(), &[m, c][..]);
        for i in 0..m {
            for k in 0..c {
                let col: Vec<f64> = (0..s).map(|j| x.at(&[i, j, k])).collect();
                let top = out.at(&[i, k]);
                prop_assert!(col.iter().all(|&v| v <= top));
                prop_assert!(col.contains(&top));
                prop_assert_eq!(col[arg[i * c + k]], top);
            }
        }
    }

    #[test]
    fn density_in_unit_interval(m in 1usize..4, s in 1usize..9, seed in 0u64..500) {
        let d: Vec<f64> = random_tensor(&[m * s], seed, 3.0).data().iter().map(|v| v.abs()).collect();
        let mask: Vec<f64> = d.iter().map(|&v| f64::from(u8::from(v <= 2.0))).collect();
        let dens = inverse_density(&d, &mask, s, 1.0);
        prop_assert!(dens.iter().all(|&v| (0.0..=1.0).contains(&v) && v.is_finite()));
    }
}
