//! Python bindings: thin wrappers that take and return plain Python values.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::PyErr;

fn py_err(e: fluidtcp::Error) -> PyErr {
    use fluidtcp::Error as E;
    match e {
        E::Divergence(_) | E::NonConvergence { .. } | E::Stagnation(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyo3::pymodule]
mod pyfluidtcp {
    use fluidtcp::aimd_net::{CapacityStrategy, NetsimConfig};
    use fluidtcp::tcp_finite::{buffer_loss_ratio_a as a_of, solve_finite_distribution, FiniteBufferParams, DEFAULT_HEADROOM};
    use fluidtcp::tcp_infinite::{compute_residues, AnalyticWindowDistribution, TcpParams, Variant};
    use fluidtcp::tree_analytic;
    use fluidtcp::tree_gen::{grow, measure, TreeParams};
    use fluidtcp::window_sim::{simulate, SimConfig};
    use pyo3::prelude::*;
    use pyo3::types::PyDict;

    use super::py_err;

    type Edge = (usize, usize, usize, usize, usize, u64);

    fn tcp(p: f64, m: f64, alpha: f64, beta: f64, bdp: f64) -> PyResult<TcpParams> {
        TcpParams::new(m, alpha, beta, p * alpha).and_then(|t| t.with_delay(bdp / (2.0 * alpha))).map_err(py_err)
    }

    fn variant(name: &str) -> PyResult<Variant> {
        name.parse().map_err(py_err)
    }

    /// Residues h_0..h_{k_max} of the stationary window law for c = beta^(m+1).
    #[pyfunction]
    fn residues(c: f64, k_max: usize) -> PyResult<Vec<f64>> {
        Ok(compute_residues(c, k_max).map_err(py_err)?.h)
    }

    /// Moments of the infinite-buffer window law.
    #[pyfunction]
    #[pyo3(signature = (p, variant="plain", m=1.0, alpha=1.0, beta=0.5, bdp=0.0))]
    fn window_moments<'py>(py: Python<'py>, p: f64, variant: &str, m: f64, alpha: f64, beta: f64, bdp: f64) -> PyResult<Bound<'py, PyDict>> {
        let law = AnalyticWindowDistribution::new(tcp(p, m, alpha, beta, bdp)?, self::variant(variant)?).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("mean", law.mean().map_err(py_err)?)?;
        d.set_item("std_dev", law.std_dev().map_err(py_err)?)?;
        d.set_item("second_moment", law.moment(2.0).map_err(py_err)?)?;
        d.set_item("upper_limit", law.upper_limit())?;
        Ok(d)
    }

    /// Rows (w, pdf, ccdf) of the infinite-buffer window law on `grid`.
    #[pyfunction]
    #[pyo3(signature = (p, grid, variant="plain", m=1.0, alpha=1.0, beta=0.5, bdp=0.0))]
    fn window_table(p: f64, grid: Vec<f64>, variant: &str, m: f64, alpha: f64, beta: f64, bdp: f64) -> PyResult<Vec<(f64, f64, f64)>> {
        let law = AnalyticWindowDistribution::new(tcp(p, m, alpha, beta, bdp)?, self::variant(variant)?).map_err(py_err)?;
        Ok(law.table(&grid).map_err(py_err)?.into_iter().map(|[w, f, s]| (w, f, s)).collect())
    }

    /// Buffer loss ratio A(x) for c = beta^(m+1).
    #[pyfunction]
    fn buffer_loss_ratio(x: f64, c: f64) -> PyResult<f64> {
        a_of(x, c).map_err(py_err)
    }

    /// Finite-buffer summary: A, x, c, B_eff, lambda_eff and the window mean.
    #[pyfunction]
    #[pyo3(signature = (p, buffer, headroom=DEFAULT_HEADROOM, m=1.0, alpha=1.0, beta=0.5))]
    fn finite_buffer<'py>(py: Python<'py>, p: f64, buffer: f64, headroom: f64, m: f64, alpha: f64, beta: f64) -> PyResult<Bound<'py, PyDict>> {
        let params = FiniteBufferParams::with_headroom(tcp(p, m, alpha, beta, 0.0)?, buffer, headroom).map_err(py_err)?;
        let sol = solve_finite_distribution(&params).map_err(py_err)?;
        let s = sol.summary().map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("A", s.a)?;
        d.set_item("x", s.x)?;
        d.set_item("c", s.c)?;
        d.set_item("B_eff", s.b_eff)?;
        d.set_item("lambda_eff", s.lambda_eff)?;
        d.set_item("mean", sol.moment(1.0).map_err(py_err)?)?;
        d.set_item("frfr_mean", sol.frfr_moment(1.0).map_err(py_err)?)?;
        Ok(d)
    }

    /// Simulated window process; `limit` is the effective window limit B~.
    #[pyfunction]
    #[pyo3(signature = (p, events, seed=1, limit=None, frfr=false))]
    fn simulate_window<'py>(py: Python<'py>, p: f64, events: u64, seed: u64, limit: Option<f64>, frfr: bool) -> PyResult<Bound<'py, PyDict>> {
        let mut c = SimConfig::new(TcpParams::lan(p).map_err(py_err)?, limit, events, seed);
        c.frfr = frfr;
        let r = py.detach(|| simulate(&c)).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("mean_window", r.mean_window())?;
        d.set_item("loss_rate", r.loss_rate())?;
        d.set_item("buffer_loss_fraction", r.buffer_loss_fraction())?;
        d.set_item("losses", r.n_losses())?;
        Ok(d)
    }

    /// Joint probability P_tau(n, q) for a tree with tau edges.
    #[pyfunction]
    fn joint_pnq(tau: usize, alpha: f64, n: usize, q: usize) -> PyResult<f64> {
        tree_analytic::joint_pnq(tau, alpha, n, q).map_err(py_err)
    }

    /// Edge records (edge_id, tau_e, n, q_younger, q_older, L) of one grown tree.
    #[pyfunction]
    #[pyo3(signature = (tau, alpha, seed=1, stream=0))]
    fn grow_tree(py: Python<'_>, tau: usize, alpha: f64, seed: u64, stream: u64) -> PyResult<Vec<Edge>> {
        let params = TreeParams::new(alpha, tau, seed).map_err(py_err)?.with_stream(stream);
        let tree = py.detach(|| grow(&params)).map_err(py_err)?;
        Ok(measure(&tree).into_iter().map(|r| (r.edge_id, r.tau_e, r.n, r.q_younger, r.q_older, r.l)).collect())
    }

    /// Mean flow throughput per capacity strategy on a grown tree network.
    #[pyfunction]
    #[pyo3(signature = (strategies=None, nodes=10_000, flows=10_000, epochs=100, mean_capacity=1e5, pi=0.5, seed=1))]
    fn strategy_throughput(
        py: Python<'_>,
        strategies: Option<Vec<String>>,
        nodes: usize,
        flows: usize,
        epochs: u64,
        mean_capacity: f64,
        pi: f64,
        seed: u64,
    ) -> PyResult<Vec<(String, f64)>> {
        let chosen: Vec<CapacityStrategy> = match strategies {
            None => CapacityStrategy::ALL.to_vec(),
            Some(v) => v.iter().map(|s| s.parse()).collect::<Result<_, _>>().map_err(py_err)?,
        };
        let config = NetsimConfig { nodes, flows, epochs, mean_capacity, pi, seed, ..NetsimConfig::default() };
        py.detach(|| {
            let exp = config.prepare()?;
            chosen.iter().map(|&s| Ok((s.name().to_string(), exp.run(s)?.q_mean))).collect::<fluidtcp::Result<Vec<_>>>()
        })
        .map_err(py_err)
    }

    /// Special-function self-test as (name, value, reference, pass) rows.
    #[pyfunction]
    fn specfun_selftest() -> Vec<(String, f64, f64, bool)> {
        fluidtcp::specfun::selftest().into_iter().map(|c| (c.name.to_string(), c.value, c.reference, c.pass)).collect()
    }
}
