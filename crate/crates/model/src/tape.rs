//! Minimal reverse-mode differentiation over dense row-major matrices.
//!
//! Every value is a 2-D array. Operations append to the tape; `backward`
//! walks it once in reverse, accumulating adjoints.

use ndarray::{s, Array2, Axis, Zip};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    /// `a + b` with `b` a single row broadcast over `a`.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    /// out[i] = a[idx[i]]
    GatherRows(Var, Vec<usize>),
    /// out[dst] += a[src] over the pairs; out has `rows` rows.
    ScatterAdd(Var, Vec<(usize, usize)>),
    /// out[g] = mean of a[i] for i in segs[g]
    SegmentMean(Var, Vec<Vec<usize>>),
    ConcatCols(Var, Var),
    /// Mean binary cross-entropy of sigmoid(logits) against the targets.
    BceWithLogits(Var, Vec<f64>),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A leaf whose adjoint is reported by `backward` under `index`.
    pub fn param(&mut self, index: usize, value: Array2<f64>) -> Var {
        self.push(value, Op::Param(index))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| 1.0 - x);
        self.push(v, Op::OneMinus(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let v = self.value(a).select(Axis(0), &idx);
        self.push(v, Op::GatherRows(a, idx))
    }

    pub fn scatter_add(&mut self, a: Var, pairs: Vec<(usize, usize)>, rows: usize) -> Var {
        let src = self.value(a);
        let mut out = Array2::zeros((rows, src.ncols()));
        for &(s, d) in &pairs {
            let mut row = out.row_mut(d);
            row += &src.row(s);
        }
        self.push(out, Op::ScatterAdd(a, pairs))
    }

    pub fn segment_mean(&mut self, a: Var, segs: Vec<Vec<usize>>) -> Var {
        let src = self.value(a);
        let mut out = Array2::zeros((segs.len(), src.ncols()));
        for (g, seg) in segs.iter().enumerate() {
            let mut row = out.row_mut(g);
            for &i in seg {
                row += &src.row(i);
            }
            row /= seg.len().max(1) as f64;
        }
        self.push(out, Op::SegmentMean(a, segs))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let v = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("row counts agree");
        self.push(v, Op::ConcatCols(a, b))
    }

    pub fn bce_with_logits(&mut self, logits: Var, targets: Vec<f64>) -> Var {
        let z = self.value(logits);
        let n = targets.len() as f64;
        let loss: f64 = z
            .iter()
            .zip(&targets)
            // log(1 + e^z) - y z, written to stay finite for large |z|
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        self.push(Array2::from_elem((1, 1), loss), Op::BceWithLogits(logits, targets))
    }

    /// Adjoints of every parameter leaf with respect to the 1×1 `out`,
    /// summed per parameter index.
    pub fn backward(&self, out: Var, n_params: usize, shapes: &[(usize, usize)]) -> Vec<Array2<f64>> {
        let mut grads: Vec<Option<Array2<f64>>> = (0..=out.0).map(|_| None).collect();
        grads[out.0] = Some(Array2::ones(self.value(out).raw_dim()));
        let mut params: Vec<Array2<f64>> = shapes.iter().map(|&s| Array2::zeros(s)).collect();
        debug_assert_eq!(params.len(), n_params);

        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => params[*p] += &g,
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *row, gr);
                    acc(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::OneMinus(a) => acc(&mut grads, *a, -g),
                Op::Scale(a, c) => acc(&mut grads, *a, g * *c),
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(&node.value).for_each(|g, &y| *g *= y * (1.0 - y));
                    acc(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(&node.value).for_each(|g, &y| *g *= 1.0 - y * y);
                    acc(&mut grads, *a, ga);
                }
                Op::GatherRows(a, idx) => {
                    let mut ga = Array2::zeros(self.value(*a).raw_dim());
                    for (r, &src) in idx.iter().enumerate() {
                        let mut row = ga.row_mut(src);
                        row += &g.row(r);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ScatterAdd(a, pairs) => {
                    let mut ga = Array2::zeros(self.value(*a).raw_dim());
                    for &(s, d) in pairs {
                        let mut row = ga.row_mut(s);
                        row += &g.row(d);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SegmentMean(a, segs) => {
                    let mut ga = Array2::zeros(self.value(*a).raw_dim());
                    for (s, seg) in segs.iter().enumerate() {
                        let scale = 1.0 / seg.len().max(1) as f64;
                        for &i in seg {
                            let mut row = ga.row_mut(i);
                            row.scaled_add(scale, &g.row(s));
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(a, b) => {
                    let k = self.value(*a).ncols();
                    acc(&mut grads, *a, g.slice(s![.., ..k]).to_owned());
                    acc(&mut grads, *b, g.slice(s![.., k..]).to_owned());
                }
                Op::BceWithLogits(logits, targets) => {
                    let scale = g[[0, 0]] / targets.len() as f64;
                    let z = self.value(*logits);
                    let mut gz = Array2::zeros(z.raw_dim());
                    for ((o, &zi), &y) in gz.iter_mut().zip(z.iter()).zip(targets) {
                        *o = (sigmoid(zi) - y) * scale;
                    }
                    acc(&mut grads, *logits, gz);
                }
            }
        }
        params
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central differences of a scalar function of one parameter matrix.
    fn numeric(f: &dyn Fn(&Array2<f64>) -> f64, x: &Array2<f64>) -> Array2<f64> {
        let h = 1e-6;
        let mut g = Array2::zeros(x.raw_dim());
        for idx in ndarray::indices(x.dim()) {
            let mut p = x.clone();
            p[idx] += h;
            let up = f(&p);
            p[idx] -= 2.0 * h;
            g[idx] = (up - f(&p)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let w0 = array![[0.3, -0.2, 0.5], [0.1, 0.4, -0.7]];
        let build = |w: &Array2<f64>, tape: &mut Tape| {
            let x = tape.constant(array![[1.0, -2.0], [0.5, 0.25], [-1.0, 0.75]]);
            let w = tape.param(0, w.clone());
            let b = tape.constant(array![[0.1, 0.0, -0.1]]);
            let h = tape.matmul(x, w);
            let h = tape.add_row(h, b);
            let s = tape.sigmoid(h);
            let t = tape.tanh(h);
            let m = tape.mul(s, t);
            let o = tape.one_minus(s);
            let a = tape.add(m, o);
            let d = tape.sub(a, t);
            let d = tape.scale(d, -1.5);
            let g = tape.gather_rows(d, vec![2, 0, 0]);
            let sc = tape.scatter_add(g, vec![(0, 1), (1, 1), (2, 0)], 2);
            let c = tape.concat_cols(sc, sc);
            let r = tape.segment_mean(c, vec![vec![0, 1], vec![1]]);
            let v = tape.constant(Array2::from_elem((6, 1), 0.3));
            let z = tape.matmul(r, v);
            tape.bce_with_logits(z, vec![1.0, 0.0])
        };
        let f = |w: &Array2<f64>| {
            let mut tape = Tape::new();
            let out = build(w, &mut tape);
            tape.value(out)[[0, 0]]
        };
        let mut tape = Tape::new();
        let out = build(&w0, &mut tape);
        let g = tape.backward(out, 1, &[(2, 3)]).remove(0);
        let n = numeric(&f, &w0);
        for (a, b) in g.iter().zip(n.iter()) {
            assert!((a - b).abs() < 1e-7, "{g} vs {n}");
        }
    }

    #[test]
    fn bce_is_stable() {
        let mut tape = Tape::new();
        let z = tape.constant(array![[800.0], [-800.0]]);
        let l = tape.bce_with_logits(z, vec![1.0, 0.0]);
        assert_eq!(tape.value(l)[[0, 0]], 0.0);
        let z = tape.constant(array![[0.0], [0.0]]);
        let l = tape.bce_with_logits(z, vec![1.0, 0.0]);
        assert!((tape.value(l)[[0, 0]] - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
