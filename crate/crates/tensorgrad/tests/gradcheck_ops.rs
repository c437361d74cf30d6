use rand::Rng;
use tensorgrad::gradcheck::check;
use tensorgrad::{init_tensor, rng_from_seed, Binding, Init, ParamStore, Tape, Tensor, Var};

const H: f64 = 1e-4;
const TOL: f64 = 1e-4;

fn random(shape: &[usize], seed: u64) -> Tensor {
    init_tensor(shape, Init::Uniform(1.0), &mut rng_from_seed(seed))
}

/// Build a loss from the store, then compare tape gradients with central
/// differences.
fn assert_grads(params: &ParamStore, f: impl for<'t> Fn(&Binding<'t, '_>) -> Var<'t>) {
    let tape = Tape::new();
    let bind = Binding::new(&tape, params);
    let loss = f(&bind);
    let grads = tape.backward(loss).unwrap();
    let analytic = bind.gradients(&grads);
    let mut rng = rng_from_seed(99);
    let report = check(params, &analytic, 200, H, &mut rng, |p| {
        let tape = Tape::new();
        let bind = Binding::new(&tape, p);
        f(&bind).item()
    });
    assert!(report.max_rel_err() < TOL, "worst coordinate: {:?}", report.worst());
}

#[test]
fn elementwise_and_broadcast_ops() {
    let mut ps = ParamStore::new();
    let a = ps.add("a", random(&[3, 4], 1));
    let b = ps.add("b", random(&[3, 4], 2));
    let r = ps.add("r", random(&[4], 3));
    let s = ps.add("s", random(&[1], 4));
    assert_grads(&ps, |bd| {
        let x = bd.get(a).add(&bd.get(b)).unwrap();
        let y = x.mul(&bd.get(b)).unwrap().sub(&bd.get(a)).unwrap();
        let z = y.add_row(&bd.get(r)).unwrap().mul_row(&bd.get(r)).unwrap();
        let w = z.add_scalar(&bd.get(s)).unwrap().scale(0.7);
        w.tanh().sum()
    });
}

#[test]
fn matmul_transpose_and_slices() {
    let mut ps = ParamStore::new();
    let a = ps.add("a", random(&[3, 5], 5));
    let b = ps.add("b", random(&[5, 2], 6));
    assert_grads(&ps, |bd| {
        let ab = bd.get(a).matmul(&bd.get(b)).unwrap();
        let t = ab.transpose().unwrap().reshape(&[3, 2]).unwrap();
        let rows = t.slice_rows(1, 1).unwrap();
        let cols = bd.get(a).slice_cols(2, 2).unwrap();
        let c = bd.tape().concat_cols(&[cols, ab]).unwrap();
        let st = bd.tape().concat_rows(&[c, c.scale(-0.5)]).unwrap();
        st.sigmoid().mean().add(&rows.relu().sum()).unwrap()
    });
}

#[test]
fn gather_softmax_layer_norm_log() {
    let mut ps = ParamStore::new();
    let table = ps.add("table", random(&[6, 4], 7));
    assert_grads(&ps, |bd| {
        let rows = bd.get(table).gather_rows(&[1, 4, 1, 0]).unwrap();
        let sm = rows.softmax_rows().unwrap();
        let ln = rows.layer_norm_rows(1e-5).unwrap();
        let l = sm.log().mean();
        l.add(&ln.mul(&ln).unwrap().tanh().sum()).unwrap()
    });
}

#[test]
fn bilinear_form() {
    let mut ps = ParamStore::new();
    let x = ps.add("x", random(&[4, 3], 8));
    let w = ps.add("w", random(&[2, 3, 5], 9));
    let y = ps.add("y", random(&[4, 5], 10));
    assert_grads(&ps, |bd| {
        bd.get(x).bilinear(&bd.get(w), &bd.get(y)).unwrap().sigmoid().sum()
    });
}

#[test]
fn losses() {
    let mut ps = ParamStore::new();
    let logits = ps.add("logits", random(&[3, 4], 11));
    let other = ps.add("other", random(&[3, 4], 12));
    let mut rng = rng_from_seed(5);
    let targets = Tensor::new(&[3, 4], (0..12).map(|_| rng.gen::<f64>()).collect()).unwrap();
    assert_grads(&ps, |bd| bd.get(logits).bce_with_logits(&targets).unwrap());
    assert_grads(&ps, |bd| bd.get(logits).cross_entropy(&[3, 0, 2]).unwrap());
    assert_grads(&ps, |bd| {
        bd.get(logits).sigmoid().mse(&bd.get(other).sigmoid()).unwrap()
    });
}
