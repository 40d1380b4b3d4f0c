use rand::Rng;

use super::{ExtractorConfig, GraphFusion, Pooling};
use crate::autodiff::{AutodiffError, Tape, Tensor, Var};
use crate::params::{glorot, Bound, ParamId, ParamSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphKind {
    Forward,
    Backward,
    Undirected,
}

impl GraphKind {
    pub const ALL: [GraphKind; 3] = [GraphKind::Forward, GraphKind::Backward, GraphKind::Undirected];

    fn name(self) -> &'static str {
        match self {
            GraphKind::Forward => "forward",
            GraphKind::Backward => "backward",
            GraphKind::Undirected => "undirected",
        }
    }
}

/// Directed edge set over `len` frame nodes, stored sorted and deduplicated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    len: usize,
    edges: Vec<(usize, usize)>,
}

impl Adjacency {
    pub fn from_edges(len: usize, mut edges: Vec<(usize, usize)>) -> Self {
        assert!(edges.iter().all(|&(i, j)| i < len && j < len), "edge out of range");
        edges.sort_unstable();
        edges.dedup();
        Self { len, edges }
    }

    /// Edges `i -> j` with `0 < j - i <= window`, reversed or symmetrised per kind.
    pub fn window(kind: GraphKind, len: usize, window: usize) -> Self {
        let mut edges = Vec::new();
        for i in 0..len {
            for j in i + 1..len.min(i + window + 1) {
                match kind {
                    GraphKind::Forward => edges.push((i, j)),
                    GraphKind::Backward => edges.push((j, i)),
                    GraphKind::Undirected => edges.extend([(i, j), (j, i)]),
                }
            }
        }
        Self::from_edges(len, edges)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Dense `[len, len]` matrix with each non-empty row summing to one.
    pub fn normalized(&self) -> Tensor {
        let n = self.len;
        let mut a = vec![0.0; n * n];
        let mut degree = vec![0usize; n];
        for &(i, _) in &self.edges {
            degree[i] += 1;
        }
        for &(i, j) in &self.edges {
            a[i * n + j] = 1.0 / degree[i] as f64;
        }
        Tensor::matrix(n, n, a).expect("square adjacency")
    }
}

#[derive(Clone, Debug)]
pub struct GraphBranch {
    pub kind: GraphKind,
    /// Message transform per propagation pass, `[hidden, hidden]`.
    pub pass_weights: Vec<ParamId>,
}

/// Frame-node message passing over forward, backward and undirected window
/// graphs. Each pass updates `H <- H + relu((A H) W)`; the three branch
/// outputs are fused, pooled over nodes and projected to `hidden`.
#[derive(Clone, Debug)]
pub struct Gnn {
    pub hidden: usize,
    pub pooling: Pooling,
    pub window: usize,
    pub fusion: GraphFusion,
    pub in_weight: ParamId,
    pub in_bias: ParamId,
    pub branches: Vec<GraphBranch>,
    pub out_weight: ParamId,
    pub out_bias: ParamId,
}

impl Gnn {
    pub fn init(cfg: &ExtractorConfig, input_dim: usize, params: &mut ParamSet, rng: &mut impl Rng) -> Self {
        let h = cfg.hidden;
        let in_weight = params.add("gnn.in.weight", glorot(&[input_dim, h], input_dim, h, rng));
        let in_bias = params.add("gnn.in.bias", Tensor::zeros(&[h]));
        let branches = GraphKind::ALL
            .iter()
            .map(|&kind| GraphBranch {
                kind,
                pass_weights: (0..cfg.gnn_passes)
                    .map(|p| params.add(format!("gnn.{}.pass{p}.weight", kind.name()), glorot(&[h, h], h, h, rng)))
                    .collect(),
            })
            .collect::<Vec<_>>();
        let fused = match cfg.gnn_fusion {
            GraphFusion::Concat => h * branches.len(),
            GraphFusion::Sum => h,
        };
        Self {
            hidden: h,
            pooling: cfg.pooling,
            window: cfg.gnn_window,
            fusion: cfg.gnn_fusion,
            in_weight,
            in_bias,
            out_weight: params.add("gnn.out.weight", glorot(&[fused, h], fused, h, rng)),
            out_bias: params.add("gnn.out.bias", Tensor::zeros(&[h])),
            branches,
        }
    }

    /// Node features `[L, hidden]` after propagation on one branch's graph.
    pub fn branch_nodes(
        &self,
        tape: &mut Tape,
        p: &Bound,
        x: Var,
        branch: &GraphBranch,
        adjacency: &Adjacency,
    ) -> Result<Var, AutodiffError> {
        let a = tape.constant(adjacency.normalized());
        let mut h = tape.linear(x, p[self.in_weight], Some(p[self.in_bias]))?;
        for &w in &branch.pass_weights {
            let msg = tape.matmul(a, h)?;
            let msg = tape.linear(msg, p[w], None)?;
            let msg = tape.relu(msg);
            h = tape.add(h, msg)?;
        }
        Ok(h)
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, AutodiffError> {
        let len = tape.shape(x)[0];
        let mut nodes = Vec::with_capacity(self.branches.len());
        for b in &self.branches {
            let adj = Adjacency::window(b.kind, len, self.window);
            nodes.push(self.branch_nodes(tape, p, x, b, &adj)?);
        }
        let fused = match self.fusion {
            GraphFusion::Concat => {
                let pooled = nodes
                    .into_iter()
                    .map(|n| tape.reduce_time(n, self.pooling.into()))
                    .collect::<Result<Vec<_>, _>>()?;
                tape.concat(&pooled)?
            }
            GraphFusion::Sum => {
                let mut acc = nodes[0];
                for &n in &nodes[1..] {
                    acc = tape.add(acc, n)?;
                }
                tape.reduce_time(acc, self.pooling.into())?
            }
        };
        tape.linear(fused, p[self.out_weight], Some(p[self.out_bias]))
    }
}
