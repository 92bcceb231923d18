use super::*;
use ndarray::{array, Array2};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::rng;

fn dist(m: &Array2<f64>, a: usize, b: usize) -> f64 {
    (0..m.ncols()).map(|k| (m[[a, k]] - m[[b, k]]).powi(2)).sum::<f64>().sqrt()
}

fn silhouette(m: &Array2<f64>, labels: &[usize]) -> f64 {
    let n = m.nrows();
    let k = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            if i != j {
                sums[labels[j]] += dist(m, i, j);
                counts[labels[j]] += 1;
            }
        }
        let a = sums[labels[i]] / counts[labels[i]] as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i])
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

fn blobs(n_per: usize, d: usize, sep: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut r = rng::rng(seed);
    let mut g = Array2::zeros((2 * n_per, d));
    let mut labels = Vec::new();
    for i in 0..2 * n_per {
        let c = i % 2;
        for k in 0..d {
            let z: f64 = StandardNormal.sample(&mut r);
            g[[i, k]] = z + if c == 1 && k == 0 { sep } else { 0.0 };
        }
        labels.push(c);
    }
    (g, labels)
}

#[test]
fn normalization_examples() {
    let s = array![[1.0, 2.0], [3.0, 2.0], [5.0, 2.0]];
    let n = normalize_unit_square(&s);
    assert_eq!(n.column(0).to_vec(), vec![0.0, 0.5, 1.0]);
    assert_eq!(n.column(1).to_vec(), vec![0.5, 0.5, 0.5]);
    let unit = array![[0.0, 1.0], [0.25, 0.0], [1.0, 0.5]];
    assert_eq!(normalize_unit_square(&unit), unit);
}

#[test]
fn pca_preserves_planar_geometry() {
    let mut r = rng::rng(9);
    // orthonormal pair in R^10 via Gram-Schmidt
    let u: Vec<f64> = (0..10).map(|_| r.random::<f64>() - 0.5).collect();
    let nu = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u: Vec<f64> = u.iter().map(|v| v / nu).collect();
    let w: Vec<f64> = (0..10).map(|_| r.random::<f64>() - 0.5).collect();
    let dot: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
    let w: Vec<f64> = w.iter().zip(&u).map(|(a, b)| a - dot * b).collect();
    let nw = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let w: Vec<f64> = w.iter().map(|v| v / nw).collect();
    let offset: Vec<f64> = (0..10).map(|k| k as f64).collect();
    let n = 40;
    let plane: Vec<(f64, f64)> = (0..n).map(|_| (r.random::<f64>() * 4.0, r.random::<f64>())).collect();
    let g = Array2::from_shape_fn((n, 10), |(i, k)| offset[k] + plane[i].0 * u[k] + plane[i].1 * w[k]);
    let e = reduce_pca2(&g).unwrap();
    let mut scale = None;
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in a + 1..n {
            let orig = dist(&g, a, b);
            let emb = dist(&e.coords, a, b);
            let s = *scale.get_or_insert(emb / orig);
            worst = worst.max((emb / orig - s).abs() / s);
        }
    }
    assert!(worst < 1e-6, "distortion {worst}");
}

#[test]
fn pca_eigenvalues_are_rotation_invariant() {
    let mut r = rng::rng(3);
    let d = 5;
    let g = Array2::from_shape_fn((200, d), |_| StandardNormal.sample(&mut r));
    // random orthogonal matrix from QR of a Gaussian matrix
    let a = nalgebra::DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut r));
    let q = a.qr().q();
    let rot = Array2::from_shape_fn((d, d), |(i, j)| q[(i, j)]);
    let e1 = reduce_pca2(&g).unwrap().explained_variance.unwrap();
    let e2 = reduce_pca2(&g.dot(&rot)).unwrap().explained_variance.unwrap();
    for k in 0..2 {
        assert!((e1[k] - e2[k]).abs() < 1e-9 * e1[k].max(1.0));
    }
    assert!(e1[0] >= e1[1]);
}

#[test]
fn pca_two_points_span_the_square() {
    let g = array![[0.0, 1.0, 2.0], [3.0, -1.0, 0.5]];
    let e = reduce_pca2(&g).unwrap();
    let mut xs = vec![e.normalized[[0, 0]], e.normalized[[1, 0]]];
    xs.sort_by(f64::total_cmp);
    assert_eq!(xs, vec![0.0, 1.0]);
    // the second component is degenerate and maps to the centre
    assert_eq!(e.normalized.column(1).to_vec(), vec![0.5, 0.5]);
}

#[test]
fn pca_sign_convention() {
    let g = array![[0.0, 0.0], [1.0, 0.1], [2.0, -0.1], [3.0, 0.0]];
    let e = reduce_pca2(&g).unwrap();
    // first axis ~ +x, so the point with the largest x gets the largest coordinate
    assert!(e.coords[[3, 0]] > e.coords[[0, 0]]);
}

#[test]
fn reducer_gradient_matches_central_differences() {
    let mut r = rng::rng(21);
    let (n, d) = (6, 4);
    let x = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut r));
    let p = joint_affinities(&x, 2.0);
    let mut model = Autoencoder::new(d, &[5, 3], 8);
    // positive biases keep most rectifiers active
    for p in model.params_mut().into_iter() {
        if p.len() <= 5 {
            p.iter_mut().for_each(|b| *b = 0.1);
        }
    }
    let (_, grads) = model.loss_and_grad(&x, &p, 0.7);
    let analytic = grads.to_flat();
    let base = model.to_flat();
    let h = 1e-6;
    for i in 0..base.len() {
        let mut q = base.clone();
        q[i] += h;
        let mut plus = model.clone();
        plus.load_flat(&q);
        q[i] -= 2.0 * h;
        let mut minus = model.clone();
        minus.load_flat(&q);
        let numeric = (plus.loss(&x, &p, 0.7).total - minus.loss(&x, &p, 0.7).total) / (2.0 * h);
        let rel = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-7);
        assert!(rel < 1e-4, "param {i}: numeric {numeric} analytic {}", analytic[i]);
    }
}

#[test]
fn affinities_hit_the_requested_perplexity() {
    let (g, _) = blobs(30, 6, 3.0, 2);
    let n = g.nrows();
    let p = joint_affinities(&g, 10.0);
    assert!((p.sum() - 1.0).abs() < 1e-9);
    for i in 0..n {
        assert_eq!(p[[i, i]], 0.0);
        for j in 0..n {
            assert_eq!(p[[i, j]], p[[j, i]]);
        }
    }
}

#[test]
fn two_blobs_separate_cleanly() {
    let (g, labels) = blobs(150, 32, 12.0, 5);
    let red = fit_reducer(&g, &ReducerConfig::default(), 1).unwrap();
    let e = red.embed(&g);
    let s = silhouette(&e.coords, &labels);
    assert!(s >= 0.8, "silhouette {s}");
    let first = red.losses.first().unwrap().total;
    let last = red.losses.last().unwrap().total;
    assert!(last < first, "{first} -> {last}");
    for l in &red.losses {
        assert!(l.kl >= 0.0 && l.reconstruction >= 0.0 && l.total.is_finite());
    }
    let again = fit_reducer(&g, &ReducerConfig::default(), 1).unwrap();
    assert_eq!(again.transform(&g), red.transform(&g));
}

#[test]
fn duplicate_rows_share_a_point() {
    let (mut g, _) = blobs(10, 8, 4.0, 6);
    let row = g.row(3).to_owned();
    g.row_mut(7).assign(&row);
    let cfg = ReducerConfig {
        epochs: 5,
        ..Default::default()
    };
    let e = fit_reducer(&g, &cfg, 2).unwrap().embed(&g);
    assert_eq!(e.coords.row(3), e.coords.row(7));
}

#[test]
fn degenerate_inputs() {
    let same = Array2::from_elem((12, 3), 1.5);
    assert!(matches!(
        fit_reducer(&same, &ReducerConfig::default(), 0),
        Err(Error::DegenerateInput(_))
    ));
    let small = Array2::from_shape_fn((5, 3), |(i, j)| (i * j) as f64);
    assert!(fit_reducer(&small, &ReducerConfig::default(), 0).is_err());
    let mut nan = Array2::from_shape_fn((12, 3), |(i, j)| (i + j) as f64);
    nan[[2, 1]] = f64::NAN;
    assert!(matches!(fit_reducer(&nan, &ReducerConfig::default(), 0), Err(Error::Numerical(_))));
}

#[test]
fn scatter_export() {
    let e = reduce_pca2(&array![[0.0, 0.0], [1.0, 2.0], [2.0, 1.0]]).unwrap();
    let mut buf = Vec::new();
    e.write_scatter(&mut buf, &[7, 8, 9], &[0.1, 0.9, 0.5]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("image_id,x,y,confidence\n7,"));
    assert_eq!(text.lines().count(), 4);
    assert!(e.write_scatter(Vec::new(), &[1], &[0.5]).is_err());
}
