"""Linear time-series baseline: ARMAX models mapping tool signals to
force components.

Each of the 6 outputs is fitted independently against all inputs (MISO
decomposition).  Coefficients are in predictor form,

    y_t = sum_k a_k y_{t-k} + sum_m sum_k b_{m,k} u_{m,t-nk-k}
        + sum_k c_k e_{t-k} + e_t,

estimated by extended least squares (pseudo-linear regression with
recursive residual re-estimation) followed by Levenberg-Marquardt
refinement of the one-step prediction error.  Multiple training
sequences are stacked; lags never cross a sequence boundary, and
residuals restart at zero per sequence.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

MAX_ELS_ITERATIONS = 50
ELS_TOLERANCE = 1e-8
RIDGE = 1e-8


@dataclass
class ArmaxOrders:
    na: int = 2
    nb: int = 2
    nc: int = 2
    nk: int = 1

    def __post_init__(self):
        if min(self.na, self.nb, self.nc, self.nk) < 0:
            raise ValueError("orders must be nonnegative")

    def n_params(self, n_inputs: int) -> int:
        n = self.na + self.nb * n_inputs + self.nc
        if n == 0:
            raise ValueError("model has no parameters")
        return n

    def min_history(self) -> int:
        return max(self.na, self.nb + self.nk, self.nc)


@dataclass
class ArmaxModel:
    """One fitted single-output model."""

    orders: ArmaxOrders
    a: np.ndarray                    # (na,)
    b: np.ndarray                    # (n_inputs, nb)
    c: np.ndarray                    # (nc,)
    noise_var: float = 0.0
    ridge_used: bool = False
    stable: bool = True              # reported, not enforced

    def theta(self) -> np.ndarray:
        return np.concatenate([self.a, self.b.reshape(-1), self.c])

    @classmethod
    def from_theta(cls, theta: np.ndarray, orders: ArmaxOrders, n_inputs: int,
                   **kw) -> "ArmaxModel":
        na, nb, nc = orders.na, orders.nb, orders.nc
        a = theta[:na]
        b = theta[na:na + nb * n_inputs].reshape(n_inputs, nb)
        c = theta[na + nb * n_inputs:]
        stable = True
        if na > 0:
            roots = np.roots(np.concatenate([[1.0], -a]))
            stable = bool(np.all(np.abs(roots) < 1.0))
        return cls(orders=orders, a=a.copy(), b=b.copy(), c=c.copy(),
                   stable=stable, **kw)


def _as_sequences(u_seqs, y_seqs):
    u_list = [np.atleast_2d(np.asarray(u, dtype=float).T).T for u in u_seqs]
    y_list = [np.asarray(y, dtype=float).reshape(len(u), -1)
              for u, y in zip(u_list, y_seqs)]
    if len(u_list) != len(y_seqs) or not u_list:
        raise ValueError("need matching, nonempty input/output sequence lists")
    n_in = u_list[0].shape[1]
    if any(u.shape[1] != n_in for u in u_list):
        raise ValueError("inconsistent input widths across sequences")
    return u_list, y_list, n_in


def _regressors(u, y, e, orders):
    """Rows phi_t for t >= t0 within one sequence: [y lags, u lags, e lags]."""
    na, nb, nc, nk = orders.na, orders.nb, orders.nc, orders.nk
    t0 = orders.min_history()
    n = len(y)
    rows = []
    for t in range(t0, n):
        row = [y[t - k] for k in range(1, na + 1)]
        for m in range(u.shape[1]):
            row.extend(u[t - nk - k, m] for k in range(nb))
        row.extend(e[t - k] for k in range(1, nc + 1))
        rows.append(row)
    return np.asarray(rows, dtype=float), np.asarray(y[t0:], dtype=float)


def _solve_ls(x, y):
    """Least squares with a ridge fallback on rank deficiency."""
    theta, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    if rank == x.shape[1]:
        return theta, False
    gram = x.T @ x + RIDGE * np.eye(x.shape[1])
    return np.linalg.solve(gram, x.T @ y), True


def _residuals(theta, u_list, y_list, orders, n_in):
    """Recursive one-step residuals per sequence (zero initial state)."""
    na, nb, nc, nk = orders.na, orders.nb, orders.nc, orders.nk
    a = theta[:na]
    b = theta[na:na + nb * n_in].reshape(n_in, nb)
    c = theta[na + nb * n_in:]
    a_poly = np.concatenate([[1.0], -a])
    c_poly = np.concatenate([[1.0], c])
    out = []
    for u, y in zip(u_list, y_list):
        e = lfilter(a_poly, c_poly, y)
        for m in range(n_in):
            b_poly = np.concatenate([np.zeros(nk), b[m]])
            if len(b_poly):
                e = e - lfilter(b_poly, c_poly, u[:, m])
        out.append(e)
    return out


def _jacobian(theta, u_list, y_list, e_list, orders, n_in):
    """Columns d e_t / d theta: regressors filtered by 1/C(q)."""
    na, nb, nc, nk = orders.na, orders.nb, orders.nc, orders.nk
    c = theta[na + nb * n_in:]
    c_poly = np.concatenate([[1.0], c])
    cols_all = []
    for u, y, e in zip(u_list, y_list, e_list):
        cols = []
        for k in range(1, na + 1):
            sig = np.concatenate([np.zeros(k), y[:-k] if k else y])
            cols.append(-lfilter([1.0], c_poly, sig))
        for m in range(n_in):
            for k in range(nb):
                lag = nk + k
                sig = np.concatenate([np.zeros(lag), u[:len(u) - lag, m]]) \
                    if lag else u[:, m]
                cols.append(-lfilter([1.0], c_poly, sig))
        for k in range(1, nc + 1):
            sig = np.concatenate([np.zeros(k), e[:-k]])
            cols.append(-lfilter([1.0], c_poly, sig))
        cols_all.append(np.column_stack(cols))
    return cols_all


def _fit_single(u_list, y_list, orders, n_in) -> ArmaxModel:
    nth = orders.n_params(n_in)
    if all(np.all(y == 0) for y in y_list) and all(np.all(u == 0) for u in u_list):
        return ArmaxModel(orders=orders, a=np.zeros(orders.na),
                          b=np.zeros((n_in, orders.nb)), c=np.zeros(orders.nc))

    # extended least squares
    e_list = [np.zeros(len(y)) for y in y_list]
    theta = np.zeros(nth)
    ridge_used = False
    for _ in range(MAX_ELS_ITERATIONS):
        xs, ys = [], []
        for u, y, e in zip(u_list, y_list, e_list):
            x_b, y_b = _regressors(u, y, e, orders)
            xs.append(x_b)
            ys.append(y_b)
        x = np.vstack(xs)
        yv = np.concatenate(ys)
        new_theta, ridge = _solve_ls(x, yv)
        ridge_used = ridge_used or ridge
        e_list = _residuals(new_theta, u_list, y_list, orders, n_in)
        change = np.linalg.norm(new_theta - theta) / max(np.linalg.norm(new_theta), 1e-300)
        theta = new_theta
        if change < ELS_TOLERANCE:
            break

    # Levenberg-Marquardt refinement of the one-step prediction error
    e_list = _residuals(theta, u_list, y_list, orders, n_in)
    cost = sum(float(e @ e) for e in e_list)
    mu = 1e-3
    for _ in range(50):
        jac = _jacobian(theta, u_list, y_list, e_list, orders, n_in)
        jtj = sum(j.T @ j for j in jac)
        jte = sum(j.T @ e for j, e in zip(jac, e_list))
        improved = False
        for _ in range(12):
            try:
                step = np.linalg.solve(jtj + mu * np.eye(nth), -jte)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            cand = theta + step
            cand_e = _residuals(cand, u_list, y_list, orders, n_in)
            cand_cost = sum(float(e @ e) for e in cand_e)
            if np.isfinite(cand_cost) and cand_cost < cost:
                rel = (cost - cand_cost) / max(cost, 1e-300)
                theta, e_list, cost = cand, cand_e, cand_cost
                mu = max(mu / 10.0, 1e-12)
                improved = True
                break
            mu *= 10.0
        if not improved or rel < 1e-12:
            break

    n_res = sum(len(e) for e in e_list)
    model = ArmaxModel.from_theta(theta, orders, n_in, ridge_used=ridge_used)
    model.noise_var = cost / max(n_res - nth, 1)
    return model


def fit_armax(u_seqs, y_seqs, orders: ArmaxOrders | None = None) -> list[ArmaxModel]:
    """Fit one model per output column; returns a list of ArmaxModel."""
    orders = orders or ArmaxOrders()
    u_list, y_list, n_in = _as_sequences(u_seqs, y_seqs)
    need = 10 * (orders.na + orders.nb + orders.nc)
    if any(len(y) <= need for y in y_list):
        raise ValueError(f"sequences must be longer than {need} samples")
    n_out = y_list[0].shape[1]
    return [_fit_single(u_list, [y[:, j] for y in y_list], orders, n_in)
            for j in range(n_out)]


def predict_armax(model: ArmaxModel, u, y) -> tuple[np.ndarray, int]:
    """One-step-ahead predictions with running innovation estimates.

    Returns (y_hat, start): entries before ``start`` lean on
    zero-padded history and should be excluded from scoring.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float).T).T
    y = np.asarray(y, dtype=float).reshape(-1)
    t0 = model.orders.min_history()
    if len(y) < t0:
        raise ValueError(f"need at least {t0} samples of history")
    e = _residuals(model.theta(), [u], [y], model.orders, u.shape[1])[0]
    return y - e, t0


def simulate_armax(model: ArmaxModel, u) -> np.ndarray:
    """Free-run simulation from the inputs alone (no output history,
    innovations zero) -- the sensorless test-time protocol."""
    u = np.atleast_2d(np.asarray(u, dtype=float).T).T
    na, nb, nk = model.orders.na, model.orders.nb, model.orders.nk
    n = len(u)
    drive = np.zeros(n)
    for m in range(u.shape[1]):
        b_poly = np.concatenate([np.zeros(nk), model.b[m]])
        if len(b_poly):
            drive += lfilter(b_poly, [1.0], u[:, m])
    a_poly = np.concatenate([[1.0], -model.a]) if na else np.array([1.0])
    return lfilter([1.0], a_poly, drive)


# ---------------------------------------------------------------------------
# persistence

def save_models(path: Path, models: list[ArmaxModel], output_names) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["output", "name", "value"])
        for name, model in zip(output_names, models):
            wr.writerow([name, "na", model.orders.na])
            wr.writerow([name, "nb", model.orders.nb])
            wr.writerow([name, "nc", model.orders.nc])
            wr.writerow([name, "nk", model.orders.nk])
            for k, v in enumerate(model.a, 1):
                wr.writerow([name, f"a{k}", repr(float(v))])
            for m in range(model.b.shape[0]):
                for k, v in enumerate(model.b[m]):
                    wr.writerow([name, f"b{m}_{k}", repr(float(v))])
            for k, v in enumerate(model.c, 1):
                wr.writerow([name, f"c{k}", repr(float(v))])
            wr.writerow([name, "noise_var", repr(float(model.noise_var))])
