use tensorgrad::Tensor;

/// Every `(head, dep)` pair with a non-negative score, `dep` 1-based.
/// `edge` is `[L x (L+1)]` as in [`ParseOutput`](super::ParseOutput).
pub fn decode_graph(edge: &Tensor) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..edge.rows() {
        for (i, &s) in edge.row(j).iter().enumerate() {
            if s >= 0.0 {
                out.push((i, j + 1));
            }
        }
    }
    out
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Highest-scoring head per dependent (first index wins ties), then the
/// best label at that head. The result need not be a tree.
pub fn decode_tree(edge: &Tensor, labels: &Tensor) -> (Vec<usize>, Vec<usize>) {
    let n1 = edge.cols();
    let k = labels.shape().get(2).copied().unwrap_or(0);
    let mut heads = Vec::with_capacity(edge.rows());
    let mut ids = Vec::with_capacity(edge.rows());
    for j in 0..edge.rows() {
        let h = argmax(edge.row(j));
        heads.push(h);
        let base = (j * n1 + h) * k;
        ids.push(if k == 0 {
            0
        } else {
            argmax(&labels.data()[base..base + k])
        });
    }
    (heads, ids)
}
