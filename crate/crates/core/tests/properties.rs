use approx::assert_relative_eq;
use percept_core::autodiff::{conv1d_forward, kernels::maxpool1d_backward, linear_forward, maxpool1d_forward, ConvGeometry};
use percept_core::data::{
    gen_synthetic_signals, mahalanobis_gt, sample_triplets, ConfusionMatrix, GroundTruthMetric, MarginClass, Metric, Sample,
    SignalId,
};
use percept_core::features::{cqfb, dft321, SignalRecord, BAND_COUNT};
use percept_core::models::{EmbeddingModel, LayerSchedule};
use percept_core::train::{high_margin_loss, low_margin_loss, pr_curve, tga, TripletMargins};
use percept_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

fn tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn combine(a: &Tensor, b: &Tensor, alpha: f64, beta: f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| alpha * x + beta * y).collect();
    Tensor::new(a.shape().to_vec(), data).unwrap()
}

fn assert_close(a: &[f64], b: &[f64], eps: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert_relative_eq!(*x, *y, epsilon = eps, max_relative = eps);
    }
}

fn record(seed: u64, len: usize, scale: f64) -> SignalRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axes = std::array::from_fn(|_| (0..len).map(|_| scale * rng.random_range(-1.0..1.0)).collect());
    SignalRecord::new(SignalId::new(0, 0), 1000.0, axes).unwrap()
}

/// Householder reflection `I − 2vvᵀ/‖v‖²`.
fn householder(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm2: f64 = v.iter().map(|x| x * x).sum();
    let mut q = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            q[r * n + c] = f64::from(u8::from(r == c)) - 2.0 * v[r] * v[c] / norm2;
        }
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv1d_is_linear_in_input(seed in any::<u64>(), alpha in -2.0..2.0f64, beta in -2.0..2.0f64,
                                 c_in in 1usize..4, len in 3usize..12, stride in 1usize..3, padding in 0usize..2) {
        let x = tensor(&[c_in, len], seed);
        let y = tensor(&[c_in, len], seed ^ 1);
        let k = tensor(&[2, c_in, 3], seed ^ 2);
        let geom = ConvGeometry { stride, padding };
        let lhs = conv1d_forward(&combine(&x, &y, alpha, beta), &k, None, geom).unwrap();
        let rhs = combine(&conv1d_forward(&x, &k, None, geom).unwrap(), &conv1d_forward(&y, &k, None, geom).unwrap(), alpha, beta);
        assert_close(lhs.data(), rhs.data(), 1e-12);
    }

    #[test]
    fn linear_is_linear_in_input(seed in any::<u64>(), alpha in -2.0..2.0f64, beta in -2.0..2.0f64,
                                 d_in in 1usize..10, d_out in 1usize..10) {
        let x = tensor(&[d_in], seed);
        let y = tensor(&[d_in], seed ^ 1);
        let w = tensor(&[d_in, d_out], seed ^ 2);
        let lhs = linear_forward(&combine(&x, &y, alpha, beta), &w, None).unwrap();
        let rhs = combine(&linear_forward(&x, &w, None).unwrap(), &linear_forward(&y, &w, None).unwrap(), alpha, beta);
        assert_close(lhs.data(), rhs.data(), 1e-12);
    }

    #[test]
    fn maxpool_routes_each_gradient_to_one_input(seed in any::<u64>(), c in 1usize..4, len in 4usize..16, window in 1usize..4) {
        let x = tensor(&[c, len], seed);
        let (out, argmax) = maxpool1d_forward(&x, window).unwrap();
        let grad_out = tensor(out.shape(), seed ^ 1);
        let grad_in = maxpool1d_backward(x.shape(), &argmax, &grad_out);
        let total_in: f64 = grad_in.data().iter().sum();
        let total_out: f64 = grad_out.data().iter().sum();
        assert_relative_eq!(total_in, total_out, epsilon = 1e-12);
        for (v, &src) in out.data().iter().zip(&argmax) {
            prop_assert_eq!(*v, x.data()[src]);
        }
    }

    #[test]
    fn spectrum_scales_with_amplitude(seed in any::<u64>(), len in 64usize..300, c in -5.0..5.0f64) {
        let base = dft321(&record(seed, len, 1.0)).unwrap();
        let scaled = dft321(&record(seed, len, c)).unwrap();
        let expected: Vec<f64> = base.iter().map(|v| c.abs() * v).collect();
        assert_close(&scaled, &expected, 1e-9);
    }

    #[test]
    fn spectrum_ignores_axis_order(seed in any::<u64>(), len in 64usize..300, perm in 0usize..6) {
        let r = record(seed, len, 1.0);
        let order = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]][perm];
        let axes = order.map(|a| r.axes()[a].clone());
        let permuted = SignalRecord::new(r.id, r.sample_rate, axes).unwrap();
        prop_assert_eq!(dft321(&r).unwrap(), dft321(&permuted).unwrap());
    }

    #[test]
    fn filter_bank_is_monotone_and_nonnegative(seed in any::<u64>(), len in 64usize..600) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let low: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1.0)).collect();
        let high: Vec<f64> = low.iter().map(|v| v + rng.random_range(0.0..1.0)).collect();
        let (a, b) = (cqfb(&low).unwrap(), cqfb(&high).unwrap());
        prop_assert_eq!(a.len(), BAND_COUNT);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(*x >= 0.0 && x <= y);
        }
    }

    #[test]
    fn high_margin_loss_below_one_iff_positive_margin(rho in -700.0..700.0f64) {
        prop_assert_eq!(high_margin_loss(rho) < 1.0, rho > 0.0);
        prop_assert!((0.0..1.0).contains(&low_margin_loss(rho)) || rho.abs() > 36.0);
    }

    #[test]
    fn tga_at_zero_threshold_is_ordering_accuracy(seed in any::<u64>(), n_high in 1usize..50, n_low in 1usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let margins = TripletMargins {
            high: (0..n_high).map(|_| rng.random_range(-1.0..1.0)).collect(),
            low: (0..n_low).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let t = tga(&margins, 0.0).unwrap();
        prop_assert_eq!(t.low, 0.0);
        let nonneg = margins.high.iter().filter(|&&m| m >= 0.0).count() as f64 / n_high as f64;
        prop_assert_eq!(t.high, nonneg);
        prop_assert_eq!(t.high, t.ordering);
    }

    #[test]
    fn pr_auc_ignores_monotone_transforms(seed in any::<u64>(), n in 2usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let distances: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let labels: Vec<bool> = (0..n).map(|i| i == 0 || (i > 1 && rng.random_bool(0.5))).collect();
        let warped: Vec<f64> = distances.iter().map(|d| (2.0 * d).exp() + 5.0).collect();
        let a = pr_curve(&distances, &labels).unwrap().auc;
        let b = pr_curve(&warped, &labels).unwrap().auc;
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn confusion_distance_depends_only_on_classes(seed in any::<u64>(), size in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = vec![0.0; size * size];
        for a in 0..size {
            for b in a + 1..size {
                let v = rng.random_range(0.0..1.0);
                entries[a * size + b] = v;
                entries[b * size + a] = v;
            }
        }
        let matrix = ConfusionMatrix::new(size, entries).unwrap();
        let metric = Metric::Confusion { matrix: matrix.clone() };
        let sample = |rng: &mut ChaCha8Rng| {
            let class = rng.random_range(0..size as u32);
            Sample::new(SignalId::new(class, rng.random_range(0..100)), vec![rng.random_range(-1.0..1.0)])
        };
        for _ in 0..20 {
            let (a, b) = (sample(&mut rng), sample(&mut rng));
            prop_assert_eq!(metric.distance(&a, &b), matrix.get(a.id.class_id as usize, b.id.class_id as usize));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sampled_triplets_respect_their_margin_class(seed in any::<u64>(), fraction in 0.1..0.6f64) {
        let samples = gen_synthetic_signals(15, 4, seed).unwrap();
        let metric = mahalanobis_gt(4, seed ^ 1).unwrap();
        let mean = samples.iter().flat_map(|a| samples.iter().map(|b| metric.distance(a, b))).sum::<f64>() / 225.0;
        let xi = fraction * mean;
        let gt = GroundTruthMetric::new(metric, xi).unwrap();
        let pool: Vec<usize> = (0..samples.len()).collect();
        let triplets = sample_triplets(&samples, &gt, &pool, 20, 5, seed, &HashSet::new()).unwrap();
        for t in &triplets {
            let gap = gt.distance(&samples[t.base], &samples[t.far]) - gt.distance(&samples[t.base], &samples[t.near]);
            match t.margin {
                MarginClass::High => prop_assert!(gap >= xi),
                MarginClass::Low => prop_assert!(gap.abs() < xi),
            }
        }
    }

    #[test]
    fn sampling_ignores_pool_order(seed in any::<u64>(), shuffle in any::<u64>()) {
        let samples = gen_synthetic_signals(15, 4, seed).unwrap();
        let gt = GroundTruthMetric::new(mahalanobis_gt(4, seed ^ 1).unwrap(), 0.3).unwrap();
        let pool: Vec<usize> = (0..samples.len()).collect();
        let mut shuffled = pool.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let a = sample_triplets(&samples, &gt, &pool, 30, 30, seed, &HashSet::new());
        let b = sample_triplets(&samples, &gt, &shuffled, 30, 30, seed, &HashSet::new());
        prop_assert_eq!(a.ok(), b.ok());
    }

    #[test]
    fn mahalanobis_distance_is_a_quadratic_form(seed in any::<u64>(), dim in 1usize..8) {
        let model = EmbeddingModel::mahalanobis(dim, seed).unwrap();
        let (_, w) = model.params().iter().find(|(name, _)| *name == "w").unwrap();
        let out = w.shape()[1];
        let x = tensor(&[dim], seed ^ 1);
        let y = tensor(&[dim], seed ^ 2);
        let diff: Vec<f64> = x.data().iter().zip(y.data()).map(|(a, b)| a - b).collect();
        let expected: f64 = (0..out)
            .map(|c| (0..dim).map(|r| diff[r] * w.data()[r * out + c]).sum::<f64>().powi(2))
            .sum();
        let d = model.distance(x.data(), y.data()).unwrap();
        assert_relative_eq!(d * d, expected, epsilon = 1e-12, max_relative = 1e-10);
    }

    #[test]
    fn model_distance_is_a_pseudometric(seed in any::<u64>()) {
        let models = [
            EmbeddingModel::euclidean(32).unwrap(),
            EmbeddingModel::mahalanobis(32, seed).unwrap(),
            EmbeddingModel::perceptnet(32, LayerSchedule::scaled(2), seed).unwrap(),
        ];
        let (x, y, z) = (tensor(&[32], seed ^ 1), tensor(&[32], seed ^ 2), tensor(&[32], seed ^ 3));
        for m in &models {
            let d = |a: &Tensor, b: &Tensor| m.distance(a.data(), b.data()).unwrap();
            prop_assert_eq!(d(&x, &x), 0.0);
            prop_assert!(d(&x, &y) >= 0.0);
            assert_relative_eq!(d(&x, &y), d(&y, &x), epsilon = 1e-12);
            prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-12);
        }
    }

    #[test]
    fn perceptnet_distance_survives_output_rotation(seed in any::<u64>()) {
        let model = EmbeddingModel::perceptnet(32, LayerSchedule::scaled(2), seed).unwrap();
        let mut rotated = model.clone();
        let id = rotated.params().ids().find(|&id| rotated.params().name(id) == "fc.weight").unwrap();
        let w = rotated.params_mut().get_mut(id);
        let (rows, out) = (w.shape()[0], w.shape()[1]);
        let q = householder(out, seed ^ 7);
        let original = w.data().to_vec();
        for r in 0..rows {
            for c in 0..out {
                w.data_mut()[r * out + c] = (0..out).map(|k| original[r * out + k] * q[k * out + c]).sum();
            }
        }
        let (x, y) = (tensor(&[32], seed ^ 1), tensor(&[32], seed ^ 2));
        let before = model.distance(x.data(), y.data()).unwrap();
        let after = rotated.distance(x.data(), y.data()).unwrap();
        assert_relative_eq!(before, after, epsilon = 1e-10, max_relative = 1e-10);
    }
}
