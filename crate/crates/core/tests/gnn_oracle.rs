//! The policy network checked against a plain-loop re-implementation,
//! finite differences and node relabeling.

use synthplan::molspace::{ExpansionOracle, Inventory, MoleculeId, TableDomain};
use synthplan::numerics::{Matrix, Tape};
use synthplan::policygnn::{forward, loss_on_tape, open_labels, score, GnnConfig, GnnInput, GnnParameters, DEFAULT_MARGIN};
use synthplan::searchgraph::{GraphSnapshot, Label, NodeTag, SearchGraph};

const BITS: usize = 16;

fn config() -> GnnConfig {
    GnnConfig {
        layers: 2,
        ..GnnConfig::with_widths(3, BITS)
    }
}

fn snapshot() -> GraphSnapshot {
    let domain = TableDomain::parse_jsonl("two_targets", include_str!("data/two_targets.jsonl")).unwrap();
    let inventory: Inventory = ["M2", "M9"].iter().map(MoleculeId::new).collect();
    let mut g = SearchGraph::new();
    g.add_target(&MoleculeId::new("M0"), &inventory);
    g.add_target(&MoleculeId::new("M1"), &inventory);
    for key in ["M0", "M1", "M4"] {
        let v = g.lookup(&MoleculeId::new(key)).unwrap();
        let rs = domain.expand(&MoleculeId::new(key), 50).unwrap();
        let a = g.merge_expand(v, &rs, &inventory).unwrap();
        g.propagate_update(&a);
    }
    let feat = |m: &MoleculeId| domain.features(m, BITS);
    let mut snap = GraphSnapshot::capture(&g, Some((BITS, &feat)));
    for (k, i) in snap.open_nodes().into_iter().enumerate() {
        snap.nodes[i].label = Some(if k == 1 || k == 3 { Label::Positive } else { Label::Negative });
    }
    snap
}

struct Naive<'a> {
    p: &'a GnnParameters,
}

type Rows = Vec<Vec<f64>>;

impl Naive<'_> {
    fn tensor(&self, name: &str) -> &Matrix {
        self.p.params.iter().find(|(n, _)| *n == name).unwrap_or_else(|| panic!("no tensor {name}")).1
    }

    fn affine(&self, x: &[f64], prefix: &str) -> Vec<f64> {
        let w = self.tensor(&format!("{prefix}.w"));
        let b = self.tensor(&format!("{prefix}.b"));
        assert_eq!(w.nrows(), x.len());
        (0..w.ncols())
            .map(|j| b[[0, j]] + (0..x.len()).map(|i| x[i] * w[[i, j]]).sum::<f64>())
            .collect()
    }

    fn mlp(&self, x: &[f64], name: &str) -> Vec<f64> {
        let relu = |v: Vec<f64>| v.into_iter().map(|a| a.max(0.0)).collect::<Vec<_>>();
        let h1 = self.affine(x, &format!("{name}.l1"));
        let h2 = self.affine(&relu(h1.clone()), &format!("{name}.l2"));
        let h3 = self.affine(&relu(h2), &format!("{name}.l3"));
        let skip = if x.len() == h3.len() { x.to_vec() } else { h1 };
        skip.iter().zip(&h3).map(|(a, b)| a + b).collect()
    }

    fn rbf(&self, x: f64) -> Vec<f64> {
        let c = self.p.config.rbf;
        let x = x.clamp(c.low, c.high);
        let step = (c.high - c.low) / c.size as f64;
        (0..c.size).map(|k| (-(x - k as f64 * step).powi(2) / c.tau).exp()).collect()
    }

    fn logits(&self, snap: &GraphSnapshot) -> Vec<f64> {
        let h = self.p.config.hidden;
        let fp_w = self.tensor("fp.w");
        let fp_b = self.tensor("fp.b");
        let mut v: Rows = snap
            .nodes
            .iter()
            .map(|n| {
                let mut row = self.rbf(n.hist_cost);
                match n.kind {
                    NodeTag::Molecule => {
                        let mut proj: Vec<f64> = fp_b.row(0).to_vec();
                        for &bit in n.features.as_ref().unwrap() {
                            for (j, x) in proj.iter_mut().enumerate() {
                                *x += fp_w[[bit as usize, j]];
                            }
                        }
                        row.extend(proj);
                    }
                    NodeTag::Reaction => row.extend(self.rbf(n.reaction_cost.unwrap())),
                }
                row
            })
            .collect();
        let mut arcs = Vec::new();
        for &[s, d] in &snap.edges {
            arcs.push((s, d, 0));
            arcs.push((d, s, 1));
        }
        let embed = self.tensor("edge_embed");
        let mut e: Rows = arcs.iter().map(|&(_, _, dir)| embed.row(dir).to_vec()).collect();
        let mut u = vec![0.0; h];
        for layer in 0..self.p.config.layers {
            let cat = |parts: &[&[f64]]| parts.concat();
            let e_new: Rows = arcs
                .iter()
                .enumerate()
                .map(|(k, &(s, d, _))| self.mlp(&cat(&[&e[k], &v[s], &v[d], &u]), &format!("layer{layer}.edge")))
                .collect();
            let mut msg = vec![vec![0.0; h]; v.len()];
            let mut count = vec![0usize; v.len()];
            for (k, &(s, d, _)) in arcs.iter().enumerate() {
                let m = self.mlp(&cat(&[&v[s], &e_new[k]]), &format!("layer{layer}.message"));
                msg[d].iter_mut().zip(&m).for_each(|(a, b)| *a += b);
                count[d] += 1;
            }
            for (row, c) in msg.iter_mut().zip(&count) {
                if *c > 0 {
                    row.iter_mut().for_each(|x| *x /= *c as f64);
                }
            }
            let v_new: Rows = (0..v.len())
                .map(|i| self.mlp(&cat(&[&v[i], &msg[i], &u]), &format!("layer{layer}.node")))
                .collect();
            let mean: Vec<f64> = (0..h).map(|j| v_new.iter().map(|r| r[j]).sum::<f64>() / v_new.len() as f64).collect();
            u = self.mlp(&cat(&[&u, &mean]), &format!("layer{layer}.global"));
            v = v_new;
            e = e_new;
        }
        v.iter().map(|row| self.affine(row, "head")[0]).collect()
    }
}

fn tape_logits(snap: &GraphSnapshot, p: &GnnParameters) -> Vec<f64> {
    let input = GnnInput::encode(snap, &p.config).unwrap();
    let mut tape = Tape::new();
    let z = forward(&mut tape, &input, p, None).unwrap();
    tape.value(z).column(0).to_vec()
}

#[test]
fn forward_matches_plain_loop_oracle() {
    let snap = snapshot();
    for seed in [1, 2, 3] {
        let p = GnnParameters::init(config(), seed).unwrap();
        let naive = Naive { p: &p }.logits(&snap);
        let fast = tape_logits(&snap, &p);
        assert_eq!(naive.len(), snap.nodes.len());
        for (a, b) in naive.iter().zip(&fast) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn default_width_forward_matches_oracle() {
    let snap = snapshot();
    let mut cfg = GnnConfig::with_widths(64, BITS);
    cfg.layers = 1;
    let p = GnnParameters::init(cfg, 4).unwrap();
    let naive = Naive { p: &p }.logits(&snap);
    for (a, b) in naive.iter().zip(tape_logits(&snap, &p)) {
        assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }
}

#[test]
fn relabeling_nodes_permutes_logits() {
    let snap = snapshot();
    let n = snap.nodes.len();
    let p = GnnParameters::init(config(), 7).unwrap();
    let base = tape_logits(&snap, &p);
    for shift in [1, 5, n - 1] {
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + shift) % n).collect();
        let mut seen = vec![false; n];
        perm.iter().for_each(|&j| seen[j] = true);
        assert!(seen.iter().all(|&s| s), "not a permutation");
        let moved = tape_logits(&snap.permuted(&perm), &p);
        for i in 0..n {
            assert!((base[i] - moved[perm[i]]).abs() < 1e-10);
        }
    }
}

#[test]
fn relabeling_preserves_open_scores() {
    let snap = snapshot();
    let n = snap.nodes.len();
    let p = GnnParameters::init(config(), 8).unwrap();
    let perm: Vec<usize> = (0..n).rev().collect();
    let a = score(&snap, &p).unwrap();
    let b = score(&snap.permuted(&perm), &p).unwrap();
    for (k, &i) in a.nodes.iter().enumerate() {
        let j = b.nodes.iter().position(|&x| x == perm[i]).unwrap();
        assert!((a.normalized[k] - b.normalized[j]).abs() < 1e-12);
    }
}

fn loss_value(snap: &GraphSnapshot, p: &GnnParameters) -> f64 {
    let input = GnnInput::encode(snap, &p.config).unwrap();
    let labels = open_labels(snap).unwrap();
    let mut tape = Tape::new();
    let (_, _, t) = loss_on_tape(&mut tape, &input, &labels, p, DEFAULT_MARGIN, None).unwrap();
    tape.scalar(t)
}

#[test]
fn gradients_match_finite_differences() {
    let snap = snapshot();
    let p = GnnParameters::init(config(), 11).unwrap();
    let input = GnnInput::encode(&snap, &p.config).unwrap();
    let labels = open_labels(&snap).unwrap();
    let mut tape = Tape::new();
    let (_, _, t) = loss_on_tape(&mut tape, &input, &labels, &p, DEFAULT_MARGIN, None).unwrap();
    let grads = tape.backward(t, &p.params).unwrap();

    let h = 1e-6;
    let mut checked = 0;
    let mut nonzero = 0;
    for (idx, g) in grads.iter().enumerate() {
        let (rows, cols) = g.dim();
        // A few entries per tensor, always including the first and last.
        let picks = [(0, 0), (rows / 2, cols / 2), (rows - 1, cols - 1)];
        for &(r, c) in &picks {
            let mut plus = p.params.clone();
            plus.get_mut(idx)[[r, c]] += h;
            let mut minus = p.params.clone();
            minus.get_mut(idx)[[r, c]] -= h;
            let fp = loss_value(&snap, &p.with_params(plus).unwrap());
            let fm = loss_value(&snap, &p.with_params(minus).unwrap());
            let numeric = (fp - fm) / (2.0 * h);
            let analytic = g[[r, c]];
            let err = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-4);
            assert!(err < 1e-4, "{} [{r},{c}]: analytic {analytic} numeric {numeric}", p.params.name(idx));
            checked += 1;
            if analytic.abs() > 1e-8 {
                nonzero += 1;
            }
        }
    }
    assert!(checked > 50);
    assert!(nonzero * 2 > checked, "too few informative entries: {nonzero} of {checked}");
}
