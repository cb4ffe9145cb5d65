//! Keyframe pose graph with odometry and loop constraints, optimized by
//! damped Gauss-Newton on SE(3). Node 0 is held fixed as the gauge.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Matrix6};

use crate::dataset_io::rotation_to_quaternion;
use crate::error::{Error, Result};
use crate::geometry::{se3_exp, se3_log, Pose, Twist};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    Odometry,
    Loop,
}

#[derive(Clone, Debug)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub measurement: Pose,
    pub information: Matrix6<f64>,
    pub kind: EdgeKind,
}

#[derive(Clone, Debug, Default)]
pub struct PoseGraph {
    nodes: Vec<Pose>,
    edges: Vec<Edge>,
}

impl PoseGraph {
    pub fn new(initial: Pose) -> Self {
        PoseGraph {
            nodes: vec![initial],
            edges: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: usize) -> Option<&Pose> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> &[Pose] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Appends an odometry edge between consecutive keyframes, creating the
    /// destination node at the predicted pose when absent.
    pub fn add_odometry_edge(
        &mut self,
        from: usize,
        to: usize,
        measurement: Pose,
        information: Matrix6<f64>,
    ) -> Result<()> {
        if from >= self.nodes.len() {
            return Err(Error::Contract(format!("odometry edge from missing node {from}")));
        }
        if to != from + 1 {
            return Err(Error::Contract(
                "odometry edges must connect consecutive keyframes".into(),
            ));
        }
        if to == self.nodes.len() {
            let pose = self.nodes[from].compose(&measurement);
            self.nodes.push(pose);
        }
        self.edges.push(Edge {
            from,
            to,
            measurement,
            information,
            kind: EdgeKind::Odometry,
        });
        Ok(())
    }

    pub fn add_loop_edge(
        &mut self,
        from: usize,
        to: usize,
        measurement: Pose,
        information: Matrix6<f64>,
    ) -> Result<()> {
        if from >= self.nodes.len() || to >= self.nodes.len() {
            return Err(Error::Contract("loop edge references a missing node".into()));
        }
        if from == to {
            return Err(Error::Contract("self-loops are not allowed".into()));
        }
        self.edges.push(Edge {
            from,
            to,
            measurement,
            information,
            kind: EdgeKind::Loop,
        });
        Ok(())
    }

    fn edge_error(&self, edge: &Edge, nodes: &[Pose]) -> Twist {
        let rel = nodes[edge.from].inverse().compose(&nodes[edge.to]);
        let err = edge.measurement.inverse().compose(&rel);
        // Rotation angles stay well below pi for any sane graph; fall back to
        // a large finite residual if an iterate wanders there.
        se3_log(&err).unwrap_or_else(|_| Twist::repeat(std::f64::consts::PI))
    }

    pub fn total_error(&self) -> f64 {
        self.total_error_of(&self.nodes)
    }

    fn total_error_of(&self, nodes: &[Pose]) -> f64 {
        self.edges
            .iter()
            .map(|e| {
                let r = self.edge_error(e, nodes);
                (r.transpose() * e.information * r)[0]
            })
            .sum()
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for e in &self.edges {
            let a = find(&mut parent, e.from);
            let b = find(&mut parent, e.to);
            parent[a] = b;
        }
        let root = find(&mut parent, 0);
        for i in 1..n {
            if find(&mut parent, i) != root {
                return Err(Error::Contract(format!("graph is disconnected at node {i}")));
            }
        }
        Ok(())
    }

    /// Damped Gauss-Newton over all non-fixed nodes. Jacobians are numeric
    /// (central differences on the left-multiplicative perturbation). Returns
    /// the number of accepted iterations.
    pub fn optimize(&mut self, max_iters: usize, eps: f64) -> Result<usize> {
        self.check_connected()?;
        let n = self.nodes.len();
        if n <= 1 || self.edges.is_empty() {
            return Ok(0);
        }
        let dof = 6 * (n - 1);
        let mut damping = 1e-6;
        let mut err = self.total_error_of(&self.nodes);
        let mut accepted = 0usize;
        let h_step = 1e-6;
        for _ in 0..max_iters {
            let mut hess = DMatrix::<f64>::zeros(dof, dof);
            let mut grad = DVector::<f64>::zeros(dof);
            for edge in &self.edges {
                let r = self.edge_error(edge, &self.nodes);
                let mut jacobians: Vec<(usize, [Twist; 6])> = Vec::new();
                for &node in &[edge.from, edge.to] {
                    if node == 0 {
                        continue;
                    }
                    let mut cols = [Twist::zeros(); 6];
                    for k in 0..6 {
                        let mut xi = Twist::zeros();
                        xi[k] = h_step;
                        let mut nodes_p = self.nodes.clone();
                        nodes_p[node] = se3_exp(&xi).compose(&self.nodes[node]);
                        let up = self.edge_error(edge, &nodes_p);
                        xi[k] = -h_step;
                        nodes_p[node] = se3_exp(&xi).compose(&self.nodes[node]);
                        let down = self.edge_error(edge, &nodes_p);
                        cols[k] = (up - down) / (2.0 * h_step);
                    }
                    jacobians.push((node, cols));
                }
                // Accumulate J^T O J and J^T O r blockwise.
                for &(ni, ref ji) in &jacobians {
                    let bi = 6 * (ni - 1);
                    let omega_r = edge.information * r;
                    for k in 0..6 {
                        grad[bi + k] += ji[k].dot(&omega_r);
                    }
                    for &(nj, ref jj) in &jacobians {
                        let bj = 6 * (nj - 1);
                        for a in 0..6 {
                            let oj_a = edge.information * ji[a];
                            for b2 in 0..6 {
                                hess[(bi + a, bj + b2)] += oj_a.dot(&jj[b2]);
                            }
                        }
                    }
                }
            }
            // Damped solve with retry on rejection.
            let mut improved = false;
            for _ in 0..10 {
                let mut a = hess.clone();
                for i in 0..dof {
                    a[(i, i)] += damping;
                }
                let Some(chol) = a.cholesky() else {
                    damping *= 10.0;
                    continue;
                };
                let delta = chol.solve(&(-&grad));
                let mut trial = self.nodes.clone();
                for i in 1..n {
                    let xi = Twist::from_iterator((0..6).map(|k| delta[6 * (i - 1) + k]));
                    trial[i] = se3_exp(&xi).compose(&self.nodes[i]);
                }
                let trial_err = self.total_error_of(&trial);
                if trial_err < err {
                    let gain = err - trial_err;
                    self.nodes = trial;
                    err = trial_err;
                    accepted += 1;
                    improved = true;
                    if gain < eps {
                        return Ok(accepted);
                    }
                    break;
                }
                damping *= 10.0;
            }
            if !improved {
                break;
            }
        }
        Ok(accepted)
    }

    /// Plain-text export: `NODE id tx ty tz qx qy qz qw` and
    /// `EDGE from to tx ty tz qx qy qz qw i11 i12 ... i66` with the
    /// upper-triangular information coefficients.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for (id, pose) in self.nodes.iter().enumerate() {
            let q = rotation_to_quaternion(&pose.rotation);
            let t = pose.translation;
            writeln!(
                out,
                "NODE {id} {} {} {} {} {} {} {}",
                t.x, t.y, t.z, q[0], q[1], q[2], q[3]
            )
            .unwrap();
        }
        for e in &self.edges {
            let q = rotation_to_quaternion(&e.measurement.rotation);
            let t = e.measurement.translation;
            write!(
                out,
                "EDGE {} {} {} {} {} {} {} {} {}",
                e.from, e.to, t.x, t.y, t.z, q[0], q[1], q[2], q[3]
            )
            .unwrap();
            for i in 0..6 {
                for j in i..6 {
                    write!(out, " {}", e.information[(i, j)]).unwrap();
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Identity-scaled information for an odometry step of the given length.
pub fn odometry_information(step_length: f64) -> Matrix6<f64> {
    let s = step_length.max(1e-3);
    Matrix6::identity() / (s * s)
}
