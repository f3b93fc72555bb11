use pivotal::nn::{train, Mlp, TrainConfig};
use pivotal::{Mlp32, Mlp64};
use proptest::prelude::*;

fn architecture() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=8, 2..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn backward_matches_central_differences(sizes in architecture(), seed in 0u64..1000, x0 in -2.0f64..2.0) {
        let net = Mlp64::new(&sizes, seed).unwrap();
        let x: Vec<f64> = (0..sizes[0]).map(|i| x0 + 0.3 * i as f64).collect();
        let out = net.forward(&x).unwrap();
        // L = ½ Σ out²
        let grads = net.backward(&x, &out).unwrap();
        let loss = |p: &[f64]| {
            let n = Mlp::from_params(&sizes, p.to_vec()).unwrap();
            n.forward(&x).unwrap().iter().map(|o| 0.5 * o * o).sum::<f64>()
        };
        let h = 1e-5;
        let mut params = net.params().to_vec();
        for i in 0..params.len() {
            let orig = params[i];
            params[i] = orig + h;
            let up = loss(&params);
            params[i] = orig - h;
            let down = loss(&params);
            params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let scale = fd.abs().max(grads.params[i].abs()).max(1e-6);
            prop_assert!((fd - grads.params[i]).abs() / scale < 1e-4, "param {i}: {fd} vs {}", grads.params[i]);
        }
    }

    #[test]
    fn f32_network_tracks_f64(sizes in architecture(), seed in 0u64..1000, x0 in -1.0f64..1.0) {
        let wide = Mlp64::new(&sizes, seed).unwrap();
        let narrow = Mlp32::from_params(&sizes, wide.params().iter().map(|&p| p as f32).collect()).unwrap();
        let x: Vec<f64> = (0..sizes[0]).map(|i| x0 - 0.2 * i as f64).collect();
        let xf: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        for (a, b) in wide.forward(&x).unwrap().iter().zip(narrow.forward(&xf).unwrap()) {
            prop_assert!((a - b as f64).abs() < 1e-4);
        }
    }
}

#[test]
fn training_is_reproducible() {
    let inputs: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64 / 32.0 - 1.0]).collect();
    let targets: Vec<f64> = inputs.iter().map(|x| (2.0 * x[0]).sin()).collect();
    let config = TrainConfig {
        epochs: 20,
        batch_size: Some(16),
        ..TrainConfig::default()
    };
    let run = || {
        let mut net = Mlp64::new(&[1, 8, 1], 5).unwrap();
        let trace = train(&mut net, &inputs, &config, |i, out, grad| {
            let r = out[0] - targets[i];
            grad[0] = r;
            0.5 * r * r
        })
        .unwrap();
        (net, trace)
    };
    let (a, ta) = run();
    let (b, tb) = run();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    assert!(ta.last().unwrap() < &ta[0]);
}
