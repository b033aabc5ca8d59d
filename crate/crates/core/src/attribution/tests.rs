use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use super::*;
use crate::autodiff::{DifferentiableFunction, NodeId, Stamp, Tape, Unary};
use crate::manifold::{AnalyticManifold, EmbeddedCircle};
use crate::models::{exact_chart_autoencoder, Head, Layer, Sequential};

fn linear(w: &[f64]) -> Sequential {
    Sequential::new(
        w.len(),
        vec![Layer::dense(w.to_vec(), vec![0.5]).unwrap()],
        Head::Linear,
    )
    .unwrap()
}

fn v(x: &[f64]) -> Tensor {
    Tensor::vector(x.to_vec())
}

struct SumSquares(usize, Stamp);

impl DifferentiableFunction for SumSquares {
    fn input_shape(&self) -> Vec<usize> {
        vec![self.0]
    }
    fn output_shape(&self) -> Vec<usize> {
        vec![1]
    }
    fn record(&self, tape: &mut Tape, input: NodeId) -> crate::Result<NodeId> {
        let sq = tape.unary(input, Unary::Square);
        Ok(tape.sum(sq))
    }
    fn stamp(&self) -> Stamp {
        self.1
    }
}

fn close(a: &Tensor, b: &[f64], tol: f64) {
    for (x, y) in a.data().iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn riemann_on_linear_is_exact_for_any_monotone_trace() {
    let f = linear(&[2.0, -1.0, 0.5]);
    let t = Target::new(&f, 0);
    let states = vec![
        v(&[0.0, 0.0, 0.0]),
        v(&[0.1, 0.7, 0.0]),
        v(&[0.4, 0.7, 1.0]),
        v(&[1.0, 2.0, 3.0]),
    ];
    let a = riemann_attribute(&PathTrace::from_states(states), &t).unwrap();
    close(&a, &[2.0, -2.0, 1.5], 1e-15);
}

#[test]
fn constant_function_gets_zero_attribution() {
    let f = linear(&[0.0, 0.0]);
    let t = Target::new(&f, 0);
    let trace = ig_path(&v(&[1.0, 3.0]), &v(&[0.0, 0.0]), 10).unwrap();
    assert_eq!(riemann_attribute(&trace, &t).unwrap().data(), &[0.0, 0.0]);
}

#[test]
fn gxi_linear_and_zero_input() {
    let f = linear(&[2.0, -3.0]);
    let t = Target::new(&f, 0);
    close(&gxi(&v(&[1.5, 2.0]), &t).unwrap(), &[3.0, -6.0], 0.0);
    assert_eq!(gxi(&v(&[0.0, 0.0]), &t).unwrap().data(), &[0.0, 0.0]);
}

#[test]
fn ig_midpoint_and_endpoints() {
    let x = v(&[1.0, 1.0]);
    let b = v(&[0.0, 0.0]);
    let tr = ig_path(&x, &b, 2).unwrap();
    assert_eq!(tr.states(), &[b.clone(), v(&[0.5, 0.5]), x.clone()]);
    let tr = ig_path(&v(&[0.3, 0.7]), &v(&[0.1, 0.9]), 7).unwrap();
    assert_eq!(tr.states()[0], v(&[0.1, 0.9]));
    assert_eq!(tr.states()[7], v(&[0.3, 0.7]));
}

#[test]
fn ig_sum_of_squares_integral() {
    let f = SumSquares(2, Stamp::fresh());
    let t = Target::new(&f, 0);
    let trace = ig_path(&v(&[1.0, 2.0]), &v(&[0.0, 0.0]), 1000).unwrap();
    let a = riemann_attribute(&trace, &t).unwrap();
    // ∫ 2t xᵢ² dt = xᵢ²; left sums undershoot by xᵢ²/K
    close(&a, &[1.0, 4.0], 4.0 / 1000.0 + 1e-12);
    assert!((a.sum() - 5.0).abs() / 5.0 < 1e-2);
}

#[test]
fn gig_constant_function_reaches_input_at_first_step() {
    let f = linear(&[0.0, 0.0, 0.0]);
    let t = Target::new(&f, 0);
    let x = v(&[1.0, -2.0, 3.0]);
    let tr = gig_path(&x, &v(&[0.0; 3]), &t, 5, 0.3, 1.0).unwrap();
    assert_eq!(tr.states()[1], x);
    assert!(tr.selected().iter().all(|s| s.len() == 3));
    assert_eq!(riemann_attribute(&tr, &t).unwrap().data(), &[0.0; 3]);
}

#[test]
fn gig_hand_trace() {
    let f = linear(&[10.0, 1.0]);
    let t = Target::new(&f, 0);
    let x = v(&[1.0, 1.0]);
    let tr = gig_path(&x, &v(&[0.0, 0.0]), &t, 3, 0.5, 1.0).unwrap();
    assert_eq!(
        tr.states(),
        &[v(&[0.0, 0.0]), v(&[0.0, 1.0]), v(&[0.0, 1.0]), x.clone()]
    );
    assert_eq!(tr.selected(), &[vec![1], vec![1]]);
    close(&riemann_attribute(&tr, &t).unwrap(), &[10.0, 1.0], 1e-15);
}

#[test]
fn quantile_selection_includes_ties() {
    let g = [0.5, -0.1, 0.1, 3.0, 0.1];
    assert_eq!(quantile_select(&g, 0.2), vec![1, 2, 4]);
    assert_eq!(quantile_select(&g, 0.01), vec![1, 2, 4]);
    assert_eq!(quantile_select(&[4.0, 3.0, 2.0, 1.0], 0.5), vec![2, 3]);
    assert_eq!(selection_count(0.05, 20), 1);
    assert_eq!(selection_count(0.05, 64), 4);
    assert_eq!(selection_count(0.05, 1), 1);
}

fn linear_ae() -> Autoencoder {
    let enc = Sequential::new(
        3,
        vec![Layer::dense(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0], vec![0.0, 0.0]).unwrap()],
        Head::Linear,
    )
    .unwrap();
    let dec = Sequential::new(
        2,
        vec![Layer::dense(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0], vec![0.0; 3]).unwrap()],
        Head::Linear,
    )
    .unwrap();
    Autoencoder::trained(enc, dec).unwrap()
}

#[test]
fn latent_linear_midpoint() {
    let ae = linear_ae();
    let tr = latent_interp_path(
        &v(&[2.0, 0.0, 0.0]),
        &v(&[0.0; 3]),
        &ae,
        2,
        Interpolation::Linear,
    )
    .unwrap();
    assert_eq!(tr.latents().unwrap()[1], v(&[1.0, 0.0]));
}

#[test]
fn slerp_quarter_arc_midpoint() {
    let m = slerp(&[1.0, 0.0], &[0.0, 1.0], 0.5).unwrap();
    assert!((m[0] - FRAC_1_SQRT_2).abs() < 1e-15 && (m[1] - FRAC_1_SQRT_2).abs() < 1e-15);
    let ae = linear_ae();
    let tr = latent_interp_path(
        &v(&[1.0, 0.0, 0.0]),
        &v(&[0.0, 1.0, 0.0]),
        &ae,
        2,
        Interpolation::Slerp,
    )
    .unwrap();
    close(&tr.latents().unwrap()[1], &[FRAC_1_SQRT_2, FRAC_1_SQRT_2], 1e-15);
}

#[test]
fn slerp_antiparallel_is_reported_and_path_falls_back() {
    assert!(matches!(
        slerp(&[1.0, 0.0], &[-1.0, 0.0], 0.5),
        Err(Error::SlerpDegenerate { .. })
    ));
    let ae = linear_ae();
    let tr = latent_interp_path(
        &v(&[1.0, 0.0, 0.0]),
        &v(&[-1.0, 0.0, 0.0]),
        &ae,
        4,
        Interpolation::Slerp,
    )
    .unwrap();
    assert!(tr.notes().iter().any(|n| n.contains("slerp")));
    assert_eq!(tr.latents().unwrap()[2], v(&[0.0, 0.0]));
}

fn circle_setup() -> (Arc<dyn AnalyticManifold>, Autoencoder) {
    let m: Arc<dyn AnalyticManifold> = Arc::new(EmbeddedCircle::embedded(8, 3));
    let ae = exact_chart_autoencoder(m.clone()).unwrap();
    (m, ae)
}

#[test]
fn exact_chart_latent_paths_stay_on_manifold() {
    let (m, ae) = circle_setup();
    let x = v(&m.chart(&[2.5]));
    let b = v(&m.chart(&[-2.9]));
    let tr = latent_interp_path(&x, &b, &ae, 20, Interpolation::Linear).unwrap();
    for s in tr.states() {
        assert!(m.distance(s.data()) < 1e-9);
    }
    // shorter arc across the seam: latent moves by 2π − 5.4, not 5.4
    let l = tr.latents().unwrap();
    assert!((l[20].data()[0] - l[0].data()[0]).abs() < 1.0);
}

#[test]
fn magig_interior_on_manifold_gig_off() {
    let (m, ae) = circle_setup();
    let w: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
    let f = linear(&w);
    let t = Target::new(&f, 0);
    let x = v(&m.chart(&[1.1]));
    let b = v(&[0.0; 8]);
    let mg = magig_path(&x, &b, &t, &ae, 200, 0.05, 0.2, Interpolation::Linear).unwrap();
    let k = mg.steps();
    assert!(mg.states()[1..k].iter().all(|s| m.distance(s.data()) < 1e-9));
    let gg = gig_path(&x, &b, &t, 200, 0.05, 0.2).unwrap();
    let max = gg.states()[1..k]
        .iter()
        .map(|s| m.distance(s.data()))
        .fold(0.0, f64::max);
    assert!(max > 0.01, "{max}");
    // linear integrand: any path gives w ⊙ (x − x')
    let a = riemann_attribute(&mg, &t).unwrap();
    let expect: Vec<f64> = w.iter().zip(x.data()).map(|(wi, xi)| wi * xi).collect();
    close(&a, &expect, 1e-6);
}

#[test]
fn magig_constant_function_reaches_latent_at_first_step() {
    let ae = linear_ae();
    let f = linear(&[0.0; 3]);
    let t = Target::new(&f, 0);
    let x = v(&[0.4, -0.3, 0.0]);
    let tr = magig_path(&x, &v(&[0.0; 3]), &t, &ae, 6, 0.05, 1.0, Interpolation::Linear)
        .unwrap();
    assert_eq!(tr.latents().unwrap()[1], v(&[0.4, -0.3]));
    assert!(tr.selected().iter().all(|s| s.len() == 2));
    assert_eq!(riemann_attribute(&tr, &t).unwrap().data(), &[0.0; 3]);
}

#[test]
fn dummy_coordinate_and_degenerate_input_for_all_methods() {
    let (m, ae) = circle_setup();
    let mut w: Vec<f64> = (0..8).map(|i| 1.0 + i as f64).collect();
    w[3] = 0.0;
    let f = linear(&w);
    let x = v(&m.chart(&[0.4]));
    for method in Method::ALL {
        for baseline in [v(&[0.0; 8]), x.clone()] {
            let req = AttributionRequest {
                input: &x,
                baseline: &baseline,
                target: Target::new(&f, 0),
                method,
                params: PathParams {
                    steps: 50,
                    ..PathParams::default()
                },
                autoencoder: Some(&ae),
            };
            let map = attribute(&req).unwrap();
            assert_eq!(map.values.data()[3], 0.0, "{method}");
            if baseline == x {
                assert!(map.values.data().iter().all(|&a| a == 0.0), "{method}");
            }
        }
    }
}

#[test]
fn latent_methods_require_an_autoencoder() {
    let f = linear(&[1.0, 1.0]);
    let x = v(&[1.0, 1.0]);
    let b = v(&[0.0, 0.0]);
    let req = AttributionRequest {
        input: &x,
        baseline: &b,
        target: Target::new(&f, 0),
        method: Method::Magig,
        params: PathParams::default(),
        autoencoder: None,
    };
    assert!(attribute(&req).is_err());
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
    }
    assert!("agi".parse::<Method>().is_err());
}
