use rand::Rng;
use tensorgrad::{init_tensor, Binding, Init, ParamId, ParamStore, TensorError, Var};

/// Word and POS lookup tables; each position is `word row ++ pos row`.
/// The word table is optional so POS-only encoders can share the layer.
#[derive(Clone, Debug)]
pub struct Embedding {
    words: Option<ParamId>,
    pos: ParamId,
    word_dim: usize,
    pos_dim: usize,
}

impl Embedding {
    pub fn new<R: Rng>(
        params: &mut ParamStore,
        prefix: &str,
        n_words: Option<usize>,
        word_dim: usize,
        n_pos: usize,
        pos_dim: usize,
        rng: &mut R,
    ) -> Self {
        let words = n_words.map(|n| {
            params.add(
                format!("{prefix}.word"),
                init_tensor(&[n, word_dim], Init::Uniform(0.1), rng),
            )
        });
        let pos = params.add(
            format!("{prefix}.pos"),
            init_tensor(&[n_pos, pos_dim], Init::Uniform(0.1), rng),
        );
        Embedding {
            words,
            pos,
            word_dim: if words.is_some() { word_dim } else { 0 },
            pos_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.word_dim + self.pos_dim
    }

    pub fn word_table(&self) -> Option<ParamId> {
        self.words
    }

    pub fn pos_table(&self) -> ParamId {
        self.pos
    }

    /// `[L x output_dim]`. `words` is ignored for POS-only tables.
    pub fn forward<'t>(&self, bind: &Binding<'t, '_>, words: &[usize], pos: &[usize]) -> Result<Var<'t>, TensorError> {
        let p = bind.get(self.pos).gather_rows(pos)?;
        match self.words {
            Some(w) => {
                if words.len() != pos.len() {
                    return Err(TensorError::Shape {
                        op: "embed",
                        left: vec![words.len()],
                        right: vec![pos.len()],
                    });
                }
                let w = bind.get(w).gather_rows(words)?;
                bind.tape().concat_cols(&[w, p])
            }
            None => Ok(p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tensorgrad::{rng_from_seed, Tape, Tensor};

    fn layer() -> (ParamStore, Embedding) {
        let mut ps = ParamStore::new();
        let e = Embedding::new(&mut ps, "emb", Some(2), 3, 2, 2, &mut rng_from_seed(0));
        *ps.get_mut(e.word_table().unwrap()) = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        *ps.get_mut(e.pos_table()) = Tensor::from_rows(&[vec![-1.0, -2.0], vec![-3.0, -4.0]]).unwrap();
        (ps, e)
    }

    #[test]
    fn rows_are_concatenations() {
        let (ps, e) = layer();
        let tape = Tape::new();
        let bind = Binding::new(&tape, &ps);
        let out = e.forward(&bind, &[0, 1], &[1, 0]).unwrap().value();
        assert_eq!(out.shape(), &[2, 5]);
        assert_eq!(out.row(0), &[1.0, 2.0, 3.0, -3.0, -4.0]);
        assert_eq!(out.row(1), &[4.0, 5.0, 6.0, -1.0, -2.0]);
    }

    #[test]
    fn empty_sequence() {
        let (ps, e) = layer();
        let tape = Tape::new();
        let bind = Binding::new(&tape, &ps);
        let out = e.forward(&bind, &[], &[]).unwrap();
        assert_eq!(out.shape(), vec![0, e.output_dim()]);
    }

    #[test]
    fn errors_on_bad_input() {
        let (ps, e) = layer();
        let tape = Tape::new();
        let bind = Binding::new(&tape, &ps);
        assert!(e.forward(&bind, &[0], &[5]).is_err());
        assert!(e.forward(&bind, &[0, 1], &[0]).is_err());
    }
}
