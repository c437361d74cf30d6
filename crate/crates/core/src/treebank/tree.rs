use std::fmt;

use super::Sentence;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    Empty,
    /// Token ids are not `1..=L` in order.
    BadIds,
    NoRoot,
    MultipleRoots(Vec<usize>),
    HeadOutOfRange {
        id: usize,
        head: usize,
    },
    /// Ids on a cycle, starting from the smallest.
    Cycle(Vec<usize>),
    EmptyField(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "empty sentence"),
            Violation::BadIds => write!(f, "token ids are not consecutive from 1"),
            Violation::NoRoot => write!(f, "no token attached to the root"),
            Violation::MultipleRoots(ids) => write!(f, "multiple roots at ids {ids:?}"),
            Violation::HeadOutOfRange { id, head } => {
                write!(f, "token {id} has out-of-range head {head}")
            }
            Violation::Cycle(ids) => write!(f, "cycle at ids {ids:?}"),
            Violation::EmptyField(id) => write!(f, "token {id} has an empty UPOS or DEPREL"),
        }
    }
}

/// Children of each position `0..=L` (0 is the virtual root), in order.
pub fn children(heads: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); heads.len() + 1];
    for (i, &h) in heads.iter().enumerate() {
        if h <= heads.len() {
            out[h].push(i + 1);
        }
    }
    out
}

/// Empty iff the sentence is a well-formed single-rooted tree.
pub fn validate_tree(s: &Sentence) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = s.len();
    if n == 0 {
        out.push(Violation::Empty);
        return out;
    }
    if s.tokens.iter().enumerate().any(|(i, t)| t.id != i + 1) {
        out.push(Violation::BadIds);
    }
    for t in &s.tokens {
        if t.upos.is_empty() || t.deprel.is_empty() {
            out.push(Violation::EmptyField(t.id));
        }
    }
    let heads = s.heads();
    let mut in_range = true;
    for (i, &h) in heads.iter().enumerate() {
        if h > n {
            out.push(Violation::HeadOutOfRange { id: i + 1, head: h });
            in_range = false;
        }
    }
    let roots: Vec<usize> = (1..=n).filter(|&i| heads[i - 1] == 0).collect();
    match roots.len() {
        0 => out.push(Violation::NoRoot),
        1 => {}
        _ => out.push(Violation::MultipleRoots(roots)),
    }
    if in_range {
        out.extend(find_cycles(&heads).into_iter().map(Violation::Cycle));
    }
    out
}

/// Cycles in the head graph, each reported once.
fn find_cycles(heads: &[usize]) -> Vec<Vec<usize>> {
    let n = heads.len();
    // 0 unvisited, 1 on current path, 2 done
    let mut state = vec![0u8; n + 1];
    let mut cycles = Vec::new();
    for start in 1..=n {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut cur = start;
        while cur != 0 && state[cur] == 0 {
            state[cur] = 1;
            path.push(cur);
            cur = heads[cur - 1];
        }
        if cur != 0 && state[cur] == 1 {
            let pos = path.iter().position(|&p| p == cur).unwrap();
            let mut cycle = path[pos..].to_vec();
            let min_pos = cycle
                .iter()
                .enumerate()
                .min_by_key(|(_, &v)| v)
                .map(|(i, _)| i)
                .unwrap();
            cycle.rotate_left(min_pos);
            cycles.push(cycle);
        }
        for p in path {
            state[p] = 2;
        }
    }
    cycles
}
