"""Damped Gauss-Newton (Levenberg-Marquardt) least squares for sums of
Lorentzians on a constant background, with analytic Jacobian."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import kernels

MAX_ITER = 200
XTOL = 1e-8
FTOL = 1e-10
ROBUST_COVARIANCE = True


@dataclass
class LeastSquaresResult:
    params: np.ndarray
    covariance: np.ndarray
    rss: float
    iterations: int
    converged: bool


def multi_lorentzian(x, params):
    """Constant ``params[0]`` plus peaks ``(height, center, fwhm)`` in ``params[1:]``."""
    model, _ = kernels.lorentzian_model_jac(np.ascontiguousarray(x, dtype=float),
                                            np.ascontiguousarray(params, dtype=float))
    return model


def levenberg_marquardt(fun_jac, y, p0, max_iter=MAX_ITER, xtol=XTOL, ftol=FTOL, lam=1e-3,
                        robust=ROBUST_COVARIANCE):
    """Minimize ``|y - f(p)|^2`` given ``fun_jac(p) -> (f, J)``.

    Steps solve ``(J^T J + lam diag(J^T J)) dp = J^T r``; ``lam`` shrinks by
    10 on accepted steps and grows by 10 on rejected ones.  Convergence is a
    relative parameter change below ``xtol`` or a relative cost reduction
    below ``ftol`` (a flat valley the parameters crawl along).

    The covariance is the sandwich estimate when ``robust`` (valid when the
    noise variance changes across the data, as it does under a peak), else
    ``(J^T J)^-1`` times the residual variance.
    """
    p = np.array(p0, dtype=float)
    f, jac = fun_jac(p)
    r = y - f
    cost = r @ r
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        jtj = jac.T @ jac
        g = jac.T @ r
        diag = np.diag(jtj).copy()
        diag[diag == 0] = 1.0
        while True:
            try:
                dp = np.linalg.solve(jtj + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                dp = np.linalg.lstsq(jtj + lam * np.diag(diag), g, rcond=None)[0]
            p_new = p + dp
            f_new, jac_new = fun_jac(p_new)
            r_new = y - f_new
            cost_new = r_new @ r_new
            if np.isfinite(cost_new) and cost_new <= cost:
                break
            lam *= 10.0
            if lam > 1e16:
                dp = np.zeros_like(p)
                p_new, f_new, jac_new, r_new, cost_new = p, f, jac, r, cost
                break
        step_small = np.all(np.abs(dp) <= xtol * (np.abs(p) + xtol))
        step_small |= cost - cost_new <= ftol * cost
        p, f, jac, r, cost = p_new, f_new, jac_new, r_new, cost_new
        lam = max(lam / 10.0, 1e-12)
        if step_small:
            converged = True
            break

    dof = max(y.size - p.size, 1)
    jtj = jac.T @ jac
    try:
        inv = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        inv = np.full((p.size, p.size), np.nan)
    if robust:
        # heteroscedasticity-consistent sandwich with the HC3 leverage
        # correction, which keeps narrow few-point fits from looking precise
        lev = np.einsum("ij,jk,ik->i", jac, inv, jac)
        u = r / np.clip(1.0 - lev, 1e-3, None)
        meat = (jac * (u * u)[:, None]).T @ jac
        cov = inv @ meat @ inv
    else:
        cov = inv * (cost / dof)
    return LeastSquaresResult(params=p, covariance=cov, rss=float(cost),
                              iterations=it, converged=converged)


def _enveloped(model, jac, offset, env):
    """Apply a fixed multiplicative envelope to the peak part of the model."""
    if env is None:
        return model, jac
    jac[:, 1:] *= env[:, None]
    return offset + env * (model - offset), jac


def fit_lorentzians(x, y, p0, envelope=None, **kw) -> LeastSquaresResult:
    """Fit a constant plus ``len(p0)//3`` Lorentzians.

    ``envelope`` (an array over ``x``) multiplies the Lorentzians but not
    the constant, e.g. a known instrument filter.  ``x`` is rescaled
    internally to unit grid spacing around its midpoint so the normal
    equations stay well conditioned for rad/s axes.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x0 = 0.5 * (x[0] + x[-1])
    scale = float(x[1] - x[0]) if x.size > 1 else 1.0
    xs = np.ascontiguousarray((x - x0) / scale)

    p = np.array(p0, dtype=float)
    p[2::3] = (p[2::3] - x0) / scale
    p[3::3] = p[3::3] / scale

    env = None if envelope is None else np.asarray(envelope, dtype=float)

    def fun_jac(q):
        f, j = kernels.lorentzian_model_jac(xs, np.ascontiguousarray(q))
        return _enveloped(f, j, q[0], env)

    res = levenberg_marquardt(fun_jac, y, p, **kw)
    t = np.ones(p.size)
    shift = np.zeros(p.size)
    t[2::3] = scale
    t[3::3] = scale
    shift[2::3] = x0
    params = res.params * t + shift
    params[3::3] = np.abs(params[3::3])
    res.params = params
    res.covariance = res.covariance * np.outer(t, t)
    return res


def fit_linked_lorentzians(blocks, p0, x0=0.0, scale=1.0, **kw) -> LeastSquaresResult:
    """Fit several data blocks whose Lorentzian models share parameters.

    ``blocks`` is a list of ``(x, y, index)`` or ``(x, y, index, envelope)``:
    block ``b`` is modelled by :func:`multi_lorentzian` with local
    parameters ``p[index]`` (peaks optionally times ``envelope``), so two
    blocks that list the same global index share that parameter.  Centers
    and widths of ``p0`` are in the units of ``x``; ``x0``/``scale`` set the
    internal rescaling (pass the expected center and the grid step).
    """
    blocks = [(np.ascontiguousarray((np.asarray(b[0], float) - x0) / scale), np.asarray(b[1], float),
               np.asarray(b[2], dtype=int), None if len(b) < 4 or b[3] is None else np.asarray(b[3], float))
              for b in blocks]
    npar = len(p0)
    # which global parameters are centers/widths: positions 2,3 mod 3 of some block
    kind = np.zeros(npar, dtype=int)
    for _, _, idx, _ in blocks:
        kind[idx[2::3]] = 1
        kind[idx[3::3]] = 2
    p = np.array(p0, dtype=float)
    p[kind == 1] = (p[kind == 1] - x0) / scale
    p[kind == 2] = p[kind == 2] / scale
    y_all = np.concatenate([b[1] for b in blocks])

    def fun_jac(q):
        fs, rows = [], []
        for x, _, idx, env in blocks:
            local = np.ascontiguousarray(q[idx])
            f, j = _enveloped(*kernels.lorentzian_model_jac(x, local), local[0], env)
            full = np.zeros((x.size, npar))
            np.add.at(full.T, idx, j.T)
            fs.append(f)
            rows.append(full)
        return np.concatenate(fs), np.vstack(rows)

    res = levenberg_marquardt(fun_jac, y_all, p, **kw)
    t = np.where(kind > 0, scale, 1.0)
    shift = np.where(kind == 1, x0, 0.0)
    res.params = res.params * t + shift
    res.params[kind == 2] = np.abs(res.params[kind == 2])
    res.covariance = res.covariance * np.outer(t, t)
    return res
