use dda_core::nn::{Activation, Architecture, Network};
use dda_core::Matrix;
use proptest::prelude::*;

fn arch() -> impl Strategy<Value = Architecture> {
    (
        1usize..5,
        prop::collection::vec(1usize..6, 0..4),
        prop_oneof![
            Just(Activation::Relu),
            Just(Activation::Tanh),
            Just(Activation::Identity)
        ],
    )
        .prop_map(|(i, h, a)| Architecture::new(i, h, a).unwrap())
}

fn net_and_rows() -> impl Strategy<Value = (Network, Matrix)> {
    (arch(), any::<u64>(), 1usize..12).prop_flat_map(|(a, seed, m)| {
        let z = a.input_dim();
        prop::collection::vec(-3.0f64..3.0, m * z)
            .prop_map(move |data| (Network::xavier(a.clone(), seed), Matrix::new(m, z, data).unwrap()))
    })
}

fn same_arch_triple() -> impl Strategy<Value = (Network, Network, Network)> {
    (arch(), any::<u64>(), any::<u64>(), any::<u64>()).prop_map(|(a, s1, s2, s3)| {
        (
            Network::xavier(a.clone(), s1),
            Network::xavier(a.clone(), s2),
            Network::xavier(a, s3),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn forward_commutes_with_row_permutation((net, x) in net_and_rows(), shuffle_seed in any::<u64>()) {
        let m = x.rows();
        let mut order: Vec<usize> = (0..m).collect();
        let mut s = shuffle_seed;
        for i in (1..m).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let out = net.forward(&x).unwrap();
        let shuffled = net.forward(&x.select_rows(&order)).unwrap();
        for (pos, &row) in order.iter().enumerate() {
            prop_assert_eq!(shuffled[pos].to_bits(), out[row].to_bits());
        }
    }

    #[test]
    fn backprop_is_linear_in_upstream((net, x) in net_and_rows(), scale in -3.0f64..3.0) {
        let up: Vec<f64> = (0..x.rows()).map(|i| 0.1 * i as f64 - 0.3).collect();
        let scaled: Vec<f64> = up.iter().map(|u| u * scale).collect();
        let g = net.backward(&x, &up).unwrap().to_flat();
        let gs = net.backward(&x, &scaled).unwrap().to_flat();
        for (a, b) in g.iter().zip(&gs) {
            prop_assert!((a * scale - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let doubled: Vec<f64> = up.iter().map(|u| 2.0 * u).collect();
        let g2 = net.backward(&x, &doubled).unwrap().to_flat();
        for (a, b) in g.iter().zip(&g2) {
            prop_assert_eq!((2.0 * a).to_bits(), b.to_bits());
        }
    }

    #[test]
    fn distance_is_a_metric((a, b, c) in same_arch_triple()) {
        let ab = a.distance(&b).unwrap();
        let ba = b.distance(&a).unwrap();
        let bc = b.distance(&c).unwrap();
        let ac = a.distance(&c).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(a.distance(&a).unwrap(), 0.0);
        prop_assert_eq!(ab, ba);
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn distance_is_euclidean_norm_of_parameter_difference((a, b, _c) in same_arch_triple()) {
        let direct: f64 = a
            .parameters()
            .iter()
            .zip(b.parameters())
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt();
        prop_assert!((a.distance(&b).unwrap() - direct).abs() <= 1e-12 * (1.0 + direct));
    }

    #[test]
    fn zero_rate_or_zero_gradient_keeps_weights((net, x) in net_and_rows()) {
        let up = vec![0.5; x.rows()];
        let g = net.backward(&x, &up).unwrap();
        prop_assert_eq!(&net.sgd_step(&g, 0.0).unwrap(), &net);
        let zero = net.backward(&x, &vec![0.0; x.rows()]).unwrap();
        prop_assert_eq!(&net.sgd_step(&zero, 0.3).unwrap(), &net);
    }

    #[test]
    fn sgd_step_is_elementwise((net, x) in net_and_rows(), eta in 0.0f64..1.0) {
        let up: Vec<f64> = (0..x.rows()).map(|i| (i as f64).sin()).collect();
        let g = net.backward(&x, &up).unwrap();
        let stepped = net.sgd_step(&g, eta).unwrap().parameters();
        for ((w, gi), s) in net.parameters().iter().zip(g.to_flat()).zip(stepped) {
            prop_assert_eq!((w - eta * gi).to_bits(), s.to_bits());
        }
    }
}

#[test]
fn xavier_seeds_differ_and_repeat() {
    let arch = Architecture::new(40, vec![64; 5], Activation::Relu).unwrap();
    let a = Network::xavier(arch.clone(), 1);
    assert_eq!(a, Network::xavier(arch.clone(), 1));
    assert_ne!(a.parameters(), Network::xavier(arch, 2).parameters());
}

#[test]
fn default_architecture_shape() {
    let arch = Architecture::with_input(40);
    assert_eq!(arch.input_dim(), 40);
    assert_eq!(arch.hidden_dims(), &[64; 5]);
    assert_eq!(arch.output_dim(), 1);
    let net = Network::xavier(arch, 0);
    assert!(net.layers().iter().all(|l| l.biases.iter().all(|b| *b == 0.0)));
}
