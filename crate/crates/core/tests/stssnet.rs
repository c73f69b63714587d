use stss::net::{forward, init_params, NetConfig};
use stss::nn::Binder;
use stss::numerics::{grad_check_subset, Graph, Tensor};
use stss::rrm::inference_input;
use stss::scene::{MemoryClip, SceneSpec};
use stss::train::data::{build_samples, Sample};
use stss::warp::FrameRole;

fn micro_samples() -> Vec<Sample> {
    build_samples(&MemoryClip::render(&SceneSpec::random(4, 16, 8, 9))).unwrap()
}

fn run(cfg: &NetConfig, params: &stss::numerics::ParamStore, s: &Sample) -> (Tensor, Vec<String>) {
    let mut g = Graph::new();
    let mut b = Binder::new(params, false);
    let x = g.constant(inference_input(&s.input).unwrap().to_tensor());
    let h = g.constant(s.history().to_tensor());
    let y = forward(&mut g, &mut b, cfg, x, h).unwrap();
    (g.value(y).clone(), b.bound().map(String::from).collect())
}

#[test]
fn end_to_end_parameter_gradients() {
    let cfg = NetConfig::desk();
    let params = init_params(&cfg).unwrap();
    let sample = micro_samples().into_iter().find(|s| s.role == FrameRole::Ef).unwrap();
    let input = inference_input(&sample.input).unwrap().to_tensor();
    let history = sample.history().to_tensor();
    // Twenty parameter tensors spread over every part of the network.
    let names: Vec<String> = params.names().map(String::from).collect();
    let chosen: Vec<String> = (0..20).map(|i| names[i * names.len() / 20].clone()).collect();
    assert!(chosen.iter().any(|n| n.starts_with("erm.")));
    assert!(chosen.iter().any(|n| n.starts_with("history.")));
    let tensors: Vec<Tensor> = chosen.iter().map(|n| params.get(n).unwrap().clone()).collect();
    let r = grad_check_subset(
        |g, v| {
            let mut b = Binder::new(&params, false);
            for (n, &var) in chosen.iter().zip(v) {
                b.bind(n, var);
            }
            let x = g.constant(input.clone());
            let h = g.constant(history.clone());
            forward(g, &mut b, &cfg, x, h)
        },
        &tensors,
        1e-3,
        |i, e| e % (tensors[i].len() / 6).max(1) == 0,
    )
    .unwrap();
    assert!(r.checked >= 100, "{r:?}");
    assert!(r.max_rel_error < 1e-2, "{r:?}");
}

#[test]
fn one_parameter_set_serves_both_roles() {
    let cfg = NetConfig::desk();
    let params = init_params(&cfg).unwrap();
    let samples = micro_samples();
    let sf = samples.iter().find(|s| s.role == FrameRole::Sf).unwrap();
    let ef = samples.iter().find(|s| s.role == FrameRole::Ef).unwrap();
    let (ys, ns) = run(&cfg, &params, sf);
    let (ye, ne) = run(&cfg, &params, ef);
    assert_eq!(ns, ne);
    assert_eq!(ns.len(), params.len());
    assert!(ys.all_finite() && ye.all_finite());
    assert_ne!(ys, ye);
}

#[test]
fn output_doubles_resolution() {
    let samples = build_samples(&MemoryClip::render(&SceneSpec::random(6, 24, 12, 7))).unwrap();
    for cfg in [
        NetConfig::desk(),
        NetConfig {
            use_erm: false,
            history: 0,
            ..NetConfig::desk()
        },
    ] {
        let params = init_params(&cfg).unwrap();
        let (y, _) = run(&cfg, &params, &samples[0]);
        assert_eq!(y.shape(), &[1, 3, 24, 48]);
    }
    let odd = build_samples(&MemoryClip::render(&SceneSpec::random(6, 18, 10, 7))).unwrap();
    let cfg = NetConfig::desk();
    let params = init_params(&cfg).unwrap();
    let mut g = Graph::new();
    let mut b = Binder::new(&params, false);
    let x = g.constant(inference_input(&odd[0].input).unwrap().to_tensor());
    let h = g.constant(odd[0].history().to_tensor());
    assert!(forward(&mut g, &mut b, &cfg, x, h).is_err());
}
