"""Finite-horizon LQR and LQG with signal-dependent control noise.

lqr_solve runs the plain backward Riccati recursion.  lqg_solve handles the
stochastic problem: additive control noise, control-multiplicative
(signal-dependent) noise with scale sigma_u, and noisy full- or partial-state
observations.  Control gains and estimator gains are coupled in that setting,
so the solver alternates between the two until the gains stop changing
(coordinate descent on the pair), starting from the noise-free LQR gains.

Conventions: dynamics x_{k+1} = A x_k + B u_k, policy u_k = -L_k x_hat_k,
estimator x_hat_{k+1} = A x_hat_k + B u_k + K_k (y_k - H x_hat_k) with
y_k = H x_k + omega_k.  The signal-dependent term perturbs each applied
control channel as u_i * (1 + sigma_u * eps_i).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plants import NoiseSpec, ZERO_NOISE
from .trajectory import Trajectory


def _symmetrize(mat):
    return 0.5 * (mat + mat.T)


def _pinv_psd(mat, rtol=1e-12):
    """Pseudoinverse of a PSD matrix with a coarse relative eigenvalue cutoff.

    np.linalg.pinv's default cutoff (~1e-15 relative) sits exactly where
    floating-point residue of the covariance recursion lands when process
    noise decays geometrically along the horizon, making the rank decision
    flap between iterations.  A 1e-12 cutoff leaves that residue orders of
    magnitude below the threshold.
    """
    evals, evecs = np.linalg.eigh(_symmetrize(mat))
    top = evals.max(initial=0.0)
    if top <= 0.0:
        return np.zeros_like(mat)
    inv_vals = np.where(evals > rtol * top, 1.0 / np.where(evals > 0, evals, 1.0), 0.0)
    return (evecs * inv_vals) @ evecs.T


def _check_psd(name, mat, tol=1e-8):
    mat = np.asarray(mat, dtype=float)
    if mat.shape[0] != mat.shape[1] or not np.allclose(mat, mat.T, atol=1e-10):
        raise ValueError(f"{name} must be symmetric")
    eigs = np.linalg.eigvalsh(mat)
    if eigs.min() < -tol * max(1.0, eigs.max()):
        raise ValueError(f"{name} must be positive semidefinite")
    return mat


@dataclass(eq=False)
class LqgProblem:
    """Matrices, noise, and initial belief of one finite-horizon instance.

    Q may be a single (n, n) stage cost or a stack of N of them.  H defaults
    to the identity (full-state observation).
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Q_N: np.ndarray
    horizon: int
    H: np.ndarray | None = None
    noise: NoiseSpec = ZERO_NOISE
    x0_mean: np.ndarray | None = None
    x0_cov: np.ndarray | None = None

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("A must be square")
        if self.B.ndim != 2 or self.B.shape[0] != n:
            raise ValueError("B must have one row per state")
        m = self.B.shape[1]
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        self.H = np.eye(n) if self.H is None else np.asarray(self.H, dtype=float)
        if self.H.ndim != 2 or self.H.shape[1] != n:
            raise ValueError("H must have one column per state")
        self.R = _check_psd("R", self.R)
        if np.linalg.eigvalsh(self.R).min() <= 0:
            raise ValueError("R must be positive definite")
        if self.R.shape != (m, m):
            raise ValueError("R dimension must match control dimension")
        self.Q_N = _check_psd("Q_N", self.Q_N)
        q_arr = np.asarray(self.Q, dtype=float)
        if q_arr.ndim == 2:
            _check_psd("Q", q_arr)
            q_arr = np.broadcast_to(q_arr, (self.horizon, n, n))
        elif q_arr.ndim == 3:
            if len(q_arr) != self.horizon:
                raise ValueError("per-stage Q needs one matrix per step")
            for qk in q_arr:
                _check_psd("Q", qk)
        else:
            raise ValueError("Q must be a matrix or a stack of matrices")
        self.Q = q_arr
        self.x0_mean = (
            np.zeros(n) if self.x0_mean is None else np.asarray(self.x0_mean, dtype=float)
        )
        self.x0_cov = (
            np.zeros((n, n))
            if self.x0_cov is None
            else _check_psd("x0_cov", self.x0_cov)
        )

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_controls(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.H.shape[0]


@dataclass(eq=False)
class LqgSolution:
    control_gains: np.ndarray
    estimator_gains: np.ndarray
    predicted_cost: float
    iterations: int
    converged: bool


def lqr_solve(A, B, Q, R, Q_N, horizon: int):
    """Backward Riccati recursion for the deterministic problem.

    Args:
        A, B: dynamics matrices.
        Q, R, Q_N: stage state cost (matrix or stack), control cost, terminal cost.
        horizon: number of steps N.

    Returns:
        (L, P): gains L[k] for k = 0..N-1 (policy u = -L[k] x) and value
        matrices P[k] for k = 0..N with P[N] = Q_N.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    m = B.shape[1]
    R = np.asarray(R, dtype=float)
    q_arr = np.asarray(Q, dtype=float)
    if q_arr.ndim == 2:
        q_arr = np.broadcast_to(q_arr, (horizon, n, n))
    p_mats = np.empty((horizon + 1, n, n))
    p_mats[horizon] = np.asarray(Q_N, dtype=float)
    gains = np.empty((horizon, m, n))
    for k in reversed(range(horizon)):
        p_next = p_mats[k + 1]
        g_mat = R + B.T @ p_next @ B
        try:
            gains[k] = np.linalg.solve(g_mat, B.T @ p_next @ A)
        except np.linalg.LinAlgError as exc:
            raise ValueError("singular (R + B^T P B); problem is ill-posed") from exc
        p_mats[k] = _symmetrize(q_arr[k] + A.T @ p_next @ (A - B @ gains[k]))
    return gains, p_mats


def _control_pass(problem: LqgProblem, est_gains: np.ndarray):
    """Control gains given estimator gains (generalized backward recursion)."""
    A, B, H = problem.A, problem.B, problem.H
    n = problem.n_states
    m = problem.n_controls
    sigu2 = problem.noise.signal_dependent_scale**2
    s_x = np.asarray(problem.Q_N, dtype=float)
    s_e = np.zeros((n, n))
    gains = np.empty((problem.horizon, m, n))
    for k in reversed(range(problem.horizon)):
        bsb = B.T @ s_x @ B
        sd = sigu2 * np.diag(np.diag(B.T @ (s_x + s_e) @ B))
        g_mat = problem.R + bsb + sd
        w_mat = B.T @ s_x @ A
        try:
            gains[k] = np.linalg.solve(g_mat, w_mat)
        except np.linalg.LinAlgError as exc:
            raise ValueError("singular control Hessian in LQG recursion") from exc
        a_cl = A - est_gains[k] @ H
        s_e = _symmetrize(w_mat.T @ gains[k] + a_cl.T @ s_e @ a_cl)
        s_x = _symmetrize(problem.Q[k] + A.T @ s_x @ (A - B @ gains[k]))
    return gains


def _estimator_pass(problem: LqgProblem, ctrl_gains: np.ndarray):
    """Kalman gains given control gains, with control-dependent process noise
    evaluated at the mean-propagated controls of the current iterate."""
    A, B, H = problem.A, problem.B, problem.H
    n = problem.n_states
    add_var = problem.noise.additive_vector(problem.n_controls) ** 2
    obs_var = problem.noise.observation_vector(problem.n_outputs) ** 2
    sigu2 = problem.noise.signal_dependent_scale**2

    xbar = problem.x0_mean.copy()
    sig = problem.x0_cov.copy()
    est_gains = np.empty((problem.horizon, n, problem.n_outputs))
    for k in range(problem.horizon):
        ubar = -ctrl_gains[k] @ xbar
        innov = H @ sig @ H.T + np.diag(obs_var)
        num = A @ sig @ H.T
        # Pseudoinverse rather than solve: with zero observation noise the
        # innovation covariance is singular whenever sig is rank-deficient,
        # yet num = A sig H^T always lies in its range, so the pseudoinverse
        # gain is an exact (minimum-norm) solution.
        est_gains[k] = num @ _pinv_psd(innov)
        proc = B @ np.diag(add_var + sigu2 * ubar**2) @ B.T
        # Joseph-form update: equal to A sig A^T - K S K^T + proc for the
        # optimal gain, but keeps sig positive semidefinite in floating
        # point (the subtraction form leaves eps-scale negative residue
        # that destabilizes the pinv rank decision above).
        a_cl = A - est_gains[k] @ H
        sig = _symmetrize(
            proc
            + a_cl @ sig @ a_cl.T
            + est_gains[k] @ np.diag(obs_var) @ est_gains[k].T
        )
        xbar = (A - B @ ctrl_gains[k]) @ xbar
    return est_gains


def _moment_pass(problem: LqgProblem, ctrl_gains, est_gains):
    """Propagate the joint second moment of (x, x_hat) under the gains.

    The multiplicative control noise stays closed in second moments, so the
    expected cost is exact. Returns (cost, final state mean, final state
    covariance).
    """
    A, B, H = problem.A, problem.B, problem.H
    n = problem.n_states
    add_var = problem.noise.additive_vector(problem.n_controls) ** 2
    obs_var = problem.noise.observation_vector(problem.n_outputs) ** 2
    sigu2 = problem.noise.signal_dependent_scale**2

    m0 = problem.x0_mean
    outer0 = np.outer(m0, m0)
    moment = np.block(
        [[problem.x0_cov + outer0, outer0], [outer0, outer0]]
    )
    mean = np.concatenate([m0, m0])
    total = 0.0
    for k in range(problem.horizon):
        l_k = ctrl_gains[k]
        k_k = est_gains[k]
        m_xx = moment[:n, :n]
        m_hh = moment[n:, n:]
        uu = l_k @ m_hh @ l_k.T
        total += float(np.trace(problem.Q[k] @ m_xx)) + float(np.trace(problem.R @ uu))
        f_mat = np.block(
            [[A, -B @ l_k], [k_k @ H, A - B @ l_k - k_k @ H]]
        )
        proc = B @ np.diag(add_var + sigu2 * np.diag(uu)) @ B.T
        noise_blk = np.zeros((2 * n, 2 * n))
        noise_blk[:n, :n] = proc
        noise_blk[n:, n:] = k_k @ np.diag(obs_var) @ k_k.T
        moment = _symmetrize(f_mat @ moment @ f_mat.T + noise_blk)
        mean = f_mat @ mean
    total += float(np.trace(problem.Q_N @ moment[:n, :n]))
    final_mean = mean[:n]
    final_cov = _symmetrize(moment[:n, :n] - np.outer(final_mean, final_mean))
    return total, final_mean, final_cov


def _predicted_cost(problem: LqgProblem, ctrl_gains, est_gains) -> float:
    return _moment_pass(problem, ctrl_gains, est_gains)[0]


def predicted_endpoint(problem: LqgProblem, solution: "LqgSolution"):
    """Mean and covariance of the true final state under the solution's gains.

    Computed by the same exact joint moment propagation that prices the
    policy, so no rollouts are involved.
    """
    _, mean, cov = _moment_pass(problem, solution.control_gains, solution.estimator_gains)
    return mean, cov


def lqg_solve(problem: LqgProblem, tol: float = 1e-9, max_iter: int = 500) -> LqgSolution:
    """Alternate control and estimator gain passes to a fixed point.

    Args:
        problem: the LqgProblem instance.
        tol: terminate when the largest entry change across both gain
            sequences falls below tol.
        max_iter: alternation budget; on exhaustion the best iterate is
            returned with converged=False.
    """
    ctrl_gains, _ = lqr_solve(
        problem.A, problem.B, problem.Q, problem.R, problem.Q_N, problem.horizon
    )
    est_gains = np.zeros((problem.horizon, problem.n_states, problem.n_outputs))
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        est_new = _estimator_pass(problem, ctrl_gains)
        ctrl_new = _control_pass(problem, est_new)
        delta = max(
            float(np.max(np.abs(ctrl_new - ctrl_gains))),
            float(np.max(np.abs(est_new - est_gains))),
        )
        ctrl_gains, est_gains = ctrl_new, est_new
        if delta < tol:
            converged = True
            break
    cost = _predicted_cost(problem, ctrl_gains, est_gains)
    return LqgSolution(
        control_gains=ctrl_gains,
        estimator_gains=est_gains,
        predicted_cost=cost,
        iterations=iterations,
        converged=converged,
    )


def lqg_rollout(
    problem: LqgProblem,
    solution: LqgSolution,
    n_trials: int,
    seed: int = 0,
    dt: float = 1.0,
):
    """Closed-loop Monte-Carlo trials with per-trial independent RNG streams.

    Trials are simulated in one vectorized batch; trial t draws all of its
    noise from the t-th child of SeedSequence(seed), so results do not depend
    on the batch layout.  dt only stamps the returned trajectories (the
    problem itself is discrete-time).  Returns one Trajectory per trial with
    the commanded controls and the estimator states in aux["x_hat"].
    """
    if n_trials == 0:
        return []
    n = problem.n_states
    m = problem.n_controls
    p = problem.n_outputs
    horizon = problem.horizon
    add_std = problem.noise.additive_vector(m)
    obs_std = problem.noise.observation_vector(p)
    sigu = problem.noise.signal_dependent_scale
    draw_x0 = np.any(problem.x0_cov != 0)
    chol0 = np.linalg.cholesky(problem.x0_cov) if draw_x0 else None

    eps = np.zeros((n_trials, horizon, m))
    eta = np.zeros((n_trials, horizon, m))
    omega = np.zeros((n_trials, horizon, p))
    x0 = np.tile(problem.x0_mean, (n_trials, 1))
    for t, child in enumerate(np.random.SeedSequence(seed).spawn(n_trials)):
        gen = np.random.default_rng(child)
        if draw_x0:
            x0[t] += chol0 @ gen.standard_normal(n)
        if sigu > 0:
            eps[t] = gen.standard_normal((horizon, m))
        if np.any(add_std > 0):
            eta[t] = gen.standard_normal((horizon, m))
        if np.any(obs_std > 0):
            omega[t] = gen.standard_normal((horizon, p))

    states = np.empty((horizon + 1, n_trials, n))
    estimates = np.empty((horizon + 1, n_trials, n))
    controls = np.empty((horizon, n_trials, m))
    states[0] = x0
    estimates[0] = np.tile(problem.x0_mean, (n_trials, 1))
    a_t, b_t, h_t = problem.A.T, problem.B.T, problem.H.T
    for k in range(horizon):
        u_cmd = -estimates[k] @ solution.control_gains[k].T
        controls[k] = u_cmd
        u_eff = u_cmd * (1.0 + sigu * eps[:, k, :]) + add_std * eta[:, k, :]
        states[k + 1] = states[k] @ a_t + u_eff @ b_t
        y = states[k] @ h_t + obs_std * omega[:, k, :]
        innovation = y - estimates[k] @ h_t
        estimates[k + 1] = (
            estimates[k] @ a_t + u_cmd @ b_t + innovation @ solution.estimator_gains[k].T
        )

    trials = []
    for t in range(n_trials):
        trials.append(
            Trajectory(
                dt=dt,
                states=states[:, t, :],
                controls=controls[:, t, :],
                seed=seed,
                aux={"x_hat": estimates[:, t, :]},
            )
        )
    return trials
