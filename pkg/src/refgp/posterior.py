"""Negative log posterior of (ell, eta) under the reference prior.

Integrating ``beta`` and ``sigma2`` out against the conditional prior
``1/sigma2`` leaves the integrated likelihood

    L(ell, eta) ~ |G|^-1/2 |X'G^-1 X|^-1/2 (S2)^-(n-p)/2,

with ``G = eta I + K(ell)``, ``R = G^-1 - G^-1 X A^-1 X' G^-1``,
``A = X'G^-1 X`` and ``S2 = y'R y``.  The reference prior on (ell, eta)
is ``|Sigma|^1/2`` where ``Sigma`` is the 3x3 trace matrix assembled in
:func:`build_workspace`.  The ``1/sigma2`` factor of the full prior is
consumed by the integration above and must not be added again.

Everything here is parameterised by ``u = (log ell, log eta)``; the
objective carries the change-of-variables terms ``-u1 - u2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky, qr, solve_triangular

from .errors import DomainBoundaryError, NumericalError
from .model import corr_matrix, corr_matrix_d1, corr_matrix_d2, corr_matrix_d3

__all__ = [
    "PosteriorWorkspace",
    "PosteriorEval",
    "build_workspace",
    "neg_log_integrated_likelihood",
    "neg_log_reference_prior",
    "f_value",
    "f_value_or_inf",
    "f_eval_full",
    "ml_objective",
]


@dataclass(frozen=True)
class PosteriorWorkspace:
    n: int
    p: int
    ell: float
    eta: float
    L_G: np.ndarray
    R_A: np.ndarray
    Q: np.ndarray
    G_inv: np.ndarray
    H: np.ndarray
    R: np.ndarray
    S2: float
    A_inv: np.ndarray
    beta_bar: np.ndarray
    Kd: np.ndarray
    Sigma: np.ndarray

    @property
    def F(self):
        """``R_A'^-1 X' G^-1``, so that ``H = F'F``."""
        return self.Q.T @ solve_triangular(self.L_G, np.eye(self.n), lower=True)


@dataclass(frozen=True)
class PosteriorEval:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray


# bound on (max L_ii / min L_ii)^2, a cheap lower estimate of cond(G); beyond it
# the objective is dominated by roundoff
MAX_CONDITION = 1e10


def _cholesky(M, what, max_condition=None):
    try:
        L = cholesky(M, lower=True, check_finite=False)
    except (LinAlgError, ValueError):
        raise DomainBoundaryError(f"{what} is not numerically positive definite") from None
    if max_condition is not None:
        d = np.abs(np.diag(L))
        if not d.min() * np.sqrt(max_condition) >= d.max():
            raise DomainBoundaryError(f"{what} is too ill-conditioned to evaluate reliably")
    return L


def build_workspace(dataset, kernel, ell, eta):
    """Factor ``G`` and assemble ``R``, ``S2``, ``A^-1`` and ``Sigma`` at (ell, eta)."""
    n, p = dataset.n, dataset.p
    if not (ell > 0 and eta > 0 and np.isfinite(ell) and np.isfinite(eta)):
        raise DomainBoundaryError(f"(ell, eta) = ({ell}, {eta}) outside the open domain")
    D = dataset.distances
    G = corr_matrix(kernel, ell, D)
    G[np.diag_indices(n)] += eta
    L = _cholesky(G, "G = eta I + K(ell)", MAX_CONDITION)

    LiX = solve_triangular(L, dataset.X, lower=True, check_finite=False)
    Q, R_A = qr(LiX, mode="economic", check_finite=False)
    diag = np.abs(np.diag(R_A))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise DomainBoundaryError("L_G^-1 X is numerically rank deficient")

    Linv = solve_triangular(L, np.eye(n), lower=True, check_finite=False)
    G_inv = Linv.T @ Linv
    F = Q.T @ Linv
    H = F.T @ F
    R = G_inv - H

    Liy = solve_triangular(L, dataset.y, lower=True, check_finite=False)
    qty = Q.T @ Liy
    resid = Liy - Q @ qty
    S2 = float(resid @ resid)
    if not S2 > 0:
        raise NumericalError("S2 = y'Ry is not positive (y lies in the column space of X?)")
    R_A_inv = solve_triangular(R_A, np.eye(p), check_finite=False)
    A_inv = R_A_inv @ R_A_inv.T
    beta_bar = R_A_inv @ qty

    Kd = corr_matrix_d1(kernel, ell, D)
    RKd = R @ Kd
    s11 = np.sum(RKd * RKd.T)
    s12 = np.sum(R * RKd)
    s13 = np.trace(RKd)
    s22 = np.sum(R * R)
    s23 = np.trace(R)
    Sigma = np.array([[s11, s12, s13], [s12, s22, s23], [s13, s23, float(n - p)]])
    return PosteriorWorkspace(
        n=n, p=p, ell=float(ell), eta=float(eta), L_G=L, R_A=R_A, Q=Q, G_inv=G_inv, H=H, R=R,
        S2=S2, A_inv=A_inv, beta_bar=beta_bar, Kd=Kd, Sigma=Sigma,
    )


def _half_logdet_G(ws):
    return float(np.sum(np.log(np.diag(ws.L_G))))


def _half_logdet_A(ws):
    return float(np.sum(np.log(np.abs(np.diag(ws.R_A)))))


def neg_log_integrated_likelihood(ws, n=None, p=None):
    """``1/2 log|G| + 1/2 log|A| + (n-p)/2 log S2``."""
    n = ws.n if n is None else n
    p = ws.p if p is None else p
    if not ws.S2 > 0:
        raise NumericalError("nonpositive S2")
    return _half_logdet_G(ws) + _half_logdet_A(ws) + 0.5 * (n - p) * np.log(ws.S2)


def neg_log_reference_prior(ws):
    """``-1/2 log|Sigma(ell, eta)|`` (up to a constant)."""
    L = _cholesky(ws.Sigma, "reference-prior information matrix")
    return -float(np.sum(np.log(np.diag(L))))


def f_value(dataset, kernel, u):
    """Negative log posterior density of ``u = (log ell, log eta)``, up to a constant."""
    u1, u2 = (float(v) for v in u)
    with np.errstate(over="ignore"):
        phi = np.exp([u1, u2])
    ws = build_workspace(dataset, kernel, phi[0], phi[1])
    return neg_log_integrated_likelihood(ws) + neg_log_reference_prior(ws) - u1 - u2


def f_value_or_inf(dataset, kernel, u):
    """:func:`f_value`, mapping numerical breakdown to ``+inf`` (zero density)."""
    try:
        value = f_value(dataset, kernel, u)
    except (NumericalError, FloatingPointError):
        return np.inf
    return value if np.isfinite(value) else np.inf


def _tr(A, B):
    """``tr(A B)``."""
    return float(np.sum(A * B.T))


def _phi_pieces(ws, dataset, kernel, need_prior=True):
    """Values, gradients and Hessians with respect to ``phi = (ell, eta)`` of

    ``ldG = 1/2 log|G|``, ``ldA = 1/2 log|A|``, ``lS2 = log S2`` and
    ``ldS = 1/2 log|Sigma|``.
    """
    n = ws.n
    X, y = dataset.X, dataset.y
    D = dataset.distances
    ell = ws.ell
    Gi, H, R = ws.G_inv, ws.H, ws.R
    I = np.eye(n)
    Kd = ws.Kd
    Kdd = corr_matrix_d2(kernel, ell, D)
    Kddd = corr_matrix_d3(kernel, ell, D)
    zero = np.zeros((n, n))

    Gd = (Kd, I)

    def Gdd(s, t):
        return Kdd if s == t == 0 else zero

    Kd_d = (Kdd, zero)

    def Kd_dd(s, t):
        return Kddd if s == t == 0 else zero

    Gi_half = Gi - 0.5 * H
    P = [Gi @ Gd[s] for s in range(2)]
    dGi = [-(P[s] @ Gi) for s in range(2)]
    dH = []
    for s in range(2):
        M = Gi_half @ Gd[s] @ H
        dH.append(-(M + M.T))
    dR = [dGi[s] - dH[s] for s in range(2)]
    dA = [X.T @ dGi[s] @ X for s in range(2)]
    Ai = ws.A_inv
    S2 = ws.S2

    out = {k: [0.0, np.zeros(2), np.zeros((2, 2))] for k in ("ldG", "ldA", "lS2", "ldS")}
    out["ldG"][0] = _half_logdet_G(ws)
    out["ldA"][0] = _half_logdet_A(ws)
    out["lS2"][0] = np.log(S2)

    dS2 = np.array([y @ dR[s] @ y for s in range(2)])
    for s in range(2):
        out["ldG"][1][s] = 0.5 * np.trace(P[s])
        out["ldA"][1][s] = 0.5 * _tr(Ai, dA[s])
        out["lS2"][1][s] = dS2[s] / S2

    d2R = {}
    for s in range(2):
        for t in range(s, 2):
            d2Gi = P[s] @ P[t] @ Gi
            d2Gi = d2Gi + d2Gi.T - Gi @ Gdd(s, t) @ Gi
            N1 = (dGi[s] - 0.5 * dH[s]) @ Gd[t] @ H
            N2 = Gi_half @ Gd[t] @ dH[s]
            N3 = Gi_half @ Gdd(s, t) @ H
            d2H = -(N1 + N1.T) - (N2 + N2.T) - (N3 + N3.T)
            d2R[s, t] = d2Gi - d2H
            d2A = X.T @ d2Gi @ X
            hG = 0.5 * (-_tr(P[s], P[t]) + _tr(Gi, Gdd(s, t)))
            hA = 0.5 * (-_tr(Ai @ dA[s], Ai @ dA[t]) + _tr(Ai, d2A))
            hS = -dS2[s] * dS2[t] / S2**2 + (y @ d2R[s, t] @ y) / S2
            for key, val in (("ldG", hG), ("ldA", hA), ("lS2", hS)):
                out[key][2][s, t] = out[key][2][t, s] = val
    if not need_prior:
        return out, dR

    # reference prior block
    L_S = _cholesky(ws.Sigma, "reference-prior information matrix")
    out["ldS"][0] = float(np.sum(np.log(np.diag(L_S))))
    Si = solve_triangular(L_S, np.eye(3), lower=True)
    Si = Si.T @ Si
    W = R @ Kd
    RR = R @ R
    dW = [dR[s] @ Kd + R @ Kd_d[s] for s in range(2)]
    dRR = [dR[s] @ R + R @ dR[s] for s in range(2)]
    dSig = []
    for s in range(2):
        m = np.zeros((3, 3))
        m[0, 0] = 2.0 * _tr(W, dW[s])
        m[0, 1] = np.sum(dRR[s] * Kd) + np.sum(RR * Kd_d[s])
        m[0, 2] = np.trace(dW[s])
        m[1, 1] = np.trace(dRR[s])
        m[1, 2] = np.trace(dR[s])
        m[1, 0], m[2, 0], m[2, 1] = m[0, 1], m[0, 2], m[1, 2]
        dSig.append(m)
        out["ldS"][1][s] = 0.5 * _tr(Si, m)

    for s in range(2):
        for t in range(s, 2):
            d2W = d2R[s, t] @ Kd + dR[s] @ Kd_d[t] + dR[t] @ Kd_d[s] + R @ Kd_dd(s, t)
            d2RR = d2R[s, t] @ R + R @ d2R[s, t] + dR[s] @ dR[t] + dR[t] @ dR[s]
            m = np.zeros((3, 3))
            m[0, 0] = 2.0 * (_tr(dW[s], dW[t]) + _tr(W, d2W))
            m[0, 1] = (np.sum(d2RR * Kd) + np.sum(dRR[s] * Kd_d[t])
                       + np.sum(dRR[t] * Kd_d[s]) + np.sum(RR * Kd_dd(s, t)))
            m[0, 2] = np.trace(d2W)
            m[1, 1] = np.trace(d2RR)
            m[1, 2] = np.trace(d2R[s, t])
            m[1, 0], m[2, 0], m[2, 1] = m[0, 1], m[0, 2], m[1, 2]
            val = 0.5 * (-_tr(Si @ dSig[s], Si @ dSig[t]) + _tr(Si, m))
            out["ldS"][2][s, t] = out["ldS"][2][t, s] = val
    return out, dR


def _to_log_scale(phi, grad_phi, hess_phi):
    """Chain rule through ``phi = exp(u)``."""
    g = phi * grad_phi
    h = np.outer(phi, phi) * hess_phi + np.diag(g)
    return g, h


def f_eval_full(dataset, kernel, u):
    """Value, gradient and Hessian of :func:`f_value` at ``u``."""
    u = np.asarray(u, dtype=float)
    phi = np.exp(u)
    ws = build_workspace(dataset, kernel, phi[0], phi[1])
    pieces, _ = _phi_pieces(ws, dataset, kernel)
    c = 0.5 * (ws.n - ws.p)
    val, grad, hess = 0.0, np.zeros(2), np.zeros((2, 2))
    for key, w in (("ldG", 1.0), ("ldA", 1.0), ("lS2", c), ("ldS", -1.0)):
        v, g, h = pieces[key]
        val += w * v
        grad += w * g
        hess += w * h
    g_u, h_u = _to_log_scale(phi, grad, hess)
    h_u = 0.5 * (h_u + h_u.T)
    return PosteriorEval(value=float(val - u.sum()), gradient=g_u - 1.0, hessian=h_u)


def ml_objective(dataset, kernel, u, kind="restricted"):
    """Negative log likelihood criterion for the plug-in fit, in ``u`` coordinates.

    ``kind="profile"``: ``1/2 log|G| + n/2 log S2`` (beta and sigma2 maximised out).
    ``kind="restricted"``: ``1/2 log|G| + 1/2 log|A| + (n-p)/2 log S2``,
    i.e. the integrated likelihood without the prior.
    """
    u = np.asarray(u, dtype=float)
    phi = np.exp(u)
    ws = build_workspace(dataset, kernel, phi[0], phi[1])
    pieces, _ = _phi_pieces(ws, dataset, kernel, need_prior=False)
    if kind == "profile":
        weights = (("ldG", 1.0), ("lS2", 0.5 * ws.n))
    elif kind == "restricted":
        weights = (("ldG", 1.0), ("ldA", 1.0), ("lS2", 0.5 * (ws.n - ws.p)))
    else:
        raise ValueError(f"unknown likelihood kind {kind!r}")
    val, grad, hess = 0.0, np.zeros(2), np.zeros((2, 2))
    for key, w in weights:
        v, g, h = pieces[key]
        val += w * v
        grad += w * g
        hess += w * h
    g_u, h_u = _to_log_scale(phi, grad, hess)
    return PosteriorEval(value=float(val), gradient=g_u, hessian=0.5 * (h_u + h_u.T)), ws
