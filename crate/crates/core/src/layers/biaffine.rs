use rand::Rng;
use tensorgrad::{init_tensor, Binding, Init, ParamId, ParamStore, Tensor, TensorError, Var};

/// Biaffine scorer `s(head i, dep j) = h_dep[j] U h_head[i]^T + b`.
///
/// `U` is stored as `[k x d_dep x d_head]` and `b` as `[k]`; `k = 1` is the
/// scalar (edge/order) form, `k > 1` scores label classes.
#[derive(Clone, Debug)]
pub struct Biaffine {
    pub weight: ParamId,
    pub bias: ParamId,
    classes: usize,
    dep_dim: usize,
    head_dim: usize,
}

impl Biaffine {
    pub fn new<R: Rng>(
        params: &mut ParamStore,
        prefix: &str,
        dep_dim: usize,
        head_dim: usize,
        classes: usize,
        rng: &mut R,
    ) -> Self {
        let weight = params.add(
            format!("{prefix}.weight"),
            init_tensor(&[classes, dep_dim, head_dim], Init::Xavier, rng),
        );
        let bias = params.add(format!("{prefix}.bias"), Tensor::zeros(&[classes]));
        Biaffine {
            weight,
            bias,
            classes,
            dep_dim,
            head_dim,
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Scalar scores for every pair: `[L_dep x L_head]`, entry `(j, i)` is
    /// the score of head `i` for dependent `j`.
    pub fn score_pairs<'t>(&self, bind: &Binding<'t, '_>, dep: Var<'t>, head: Var<'t>) -> Result<Var<'t>, TensorError> {
        assert_eq!(self.classes, 1, "score_pairs is for the scalar form");
        let u = bind.get(self.weight).reshape(&[self.dep_dim, self.head_dim])?;
        dep.matmul(&u)?
            .matmul(&head.transpose()?)?
            .add_scalar(&bind.get(self.bias))
    }

    /// Scores for aligned rows: `[n x k]`, row `r` scoring
    /// `dep[r]` against `head[r]`.
    pub fn score_rows<'t>(&self, bind: &Binding<'t, '_>, dep: Var<'t>, head: Var<'t>) -> Result<Var<'t>, TensorError> {
        dep.bilinear(&bind.get(self.weight), &head)?
            .add_row(&bind.get(self.bias))
    }

    /// All-pairs class scores without recording: `[L_dep x L_head x k]`.
    pub fn score_all(&self, params: &ParamStore, dep: &Tensor, head: &Tensor) -> Result<Tensor, TensorError> {
        let (nd, nh, k) = (dep.rows(), head.rows(), self.classes);
        let u = params.get(self.weight);
        let b = params.get(self.bias);
        if dep.cols() != self.dep_dim || head.cols() != self.head_dim {
            return Err(TensorError::Shape {
                op: "biaffine",
                left: dep.shape().to_vec(),
                right: u.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; nd * nh * k];
        for c in 0..k {
            let uc = Tensor::new(
                &[self.dep_dim, self.head_dim],
                u.data()[c * self.dep_dim * self.head_dim..(c + 1) * self.dep_dim * self.head_dim].to_vec(),
            )?;
            let s = dep.matmul(&uc)?.matmul(&head.transpose())?;
            for j in 0..nd {
                for i in 0..nh {
                    out[(j * nh + i) * k + c] = s.get2(j, i) + b.data()[c];
                }
            }
        }
        Tensor::new(&[nd, nh, k], out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tensorgrad::{rng_from_seed, Tape};

    fn random(shape: &[usize], seed: u64) -> Tensor {
        init_tensor(shape, Init::Uniform(1.0), &mut rng_from_seed(seed))
    }

    /// Independent double-loop evaluation of the bilinear form.
    fn brute(u: &Tensor, b: &Tensor, dep: &Tensor, head: &Tensor, c: usize, j: usize, i: usize) -> f64 {
        let (d1, d2) = (u.shape()[1], u.shape()[2]);
        let mut s = b.data()[c];
        for p in 0..d1 {
            for q in 0..d2 {
                s += dep.get2(j, p) * u.data()[(c * d1 + p) * d2 + q] * head.get2(i, q);
            }
        }
        s
    }

    #[test]
    fn zero_weight_gives_bias() {
        let mut ps = ParamStore::new();
        let bi = Biaffine::new(&mut ps, "edge", 3, 3, 1, &mut rng_from_seed(0));
        ps.get_mut(bi.weight).data_mut().fill(0.0);
        ps.get_mut(bi.bias).data_mut()[0] = 0.7;
        let tape = Tape::new();
        let bind = Binding::new(&tape, &ps);
        let s = bi
            .score_pairs(&bind, tape.leaf(random(&[4, 3], 1)), tape.leaf(random(&[5, 3], 2)))
            .unwrap()
            .value();
        assert_eq!(s.shape(), &[4, 5]);
        assert!(s.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn identity_weight_is_dot_product() {
        let mut ps = ParamStore::new();
        let bi = Biaffine::new(&mut ps, "edge", 2, 2, 1, &mut rng_from_seed(0));
        *ps.get_mut(bi.weight) = Tensor::new(&[1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        ps.get_mut(bi.bias).data_mut()[0] = 0.25;
        let dep = Tensor::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]]).unwrap();
        let head = Tensor::from_rows(&[vec![3.0, -1.0], vec![0.0, 4.0], vec![2.0, 2.0]]).unwrap();
        let tape = Tape::new();
        let bind = Binding::new(&tape, &ps);
        let s = bi
            .score_pairs(&bind, tape.leaf(dep.clone()), tape.leaf(head.clone()))
            .unwrap()
            .value();
        for j in 0..2 {
            for i in 0..3 {
                let dot: f64 = dep.row(j).iter().zip(head.row(i)).map(|(a, b)| a * b).sum();
                assert_eq!(s.get2(j, i), dot + 0.25);
            }
        }
    }

    #[test]
    fn batched_forms_match_double_loop() {
        let mut ps = ParamStore::new();
        let edge = Biaffine::new(&mut ps, "edge", 4, 3, 1, &mut rng_from_seed(5));
        let label = Biaffine::new(&mut ps, "label", 4, 3, 3, &mut rng_from_seed(6));
        *ps.get_mut(edge.bias) = random(&[1], 7);
        *ps.get_mut(label.bias) = random(&[3], 8);
        let dep = random(&[5, 4], 9);
        let head = random(&[6, 3], 10);

        let tape = Tape::new();
        let bind = Binding::new(&tape, &ps);
        let pairs = edge
            .score_pairs(&bind, tape.leaf(dep.clone()), tape.leaf(head.clone()))
            .unwrap()
            .value();
        let all = label.score_all(&ps, &dep, &head).unwrap();
        assert_eq!(all.shape(), &[5, 6, 3]);
        for j in 0..5 {
            for i in 0..6 {
                let e = brute(ps.get(edge.weight), ps.get(edge.bias), &dep, &head, 0, j, i);
                assert!((pairs.get2(j, i) - e).abs() < 1e-12);
                for c in 0..3 {
                    let e = brute(ps.get(label.weight), ps.get(label.bias), &dep, &head, c, j, i);
                    assert!((all.data()[(j * 6 + i) * 3 + c] - e).abs() < 1e-12);
                }
            }
        }

        // aligned rows: dependent j against head (j + 1)
        let heads: Vec<usize> = (0..5).map(|j| j + 1).collect();
        let hv = tape.leaf(head.clone()).gather_rows(&heads).unwrap();
        let rows = label.score_rows(&bind, tape.leaf(dep.clone()), hv).unwrap().value();
        assert_eq!(rows.shape(), &[5, 3]);
        for j in 0..5 {
            for c in 0..3 {
                let e = brute(ps.get(label.weight), ps.get(label.bias), &dep, &head, c, j, j + 1);
                assert!((rows.get2(j, c) - e).abs() < 1e-12);
            }
        }
    }
}
