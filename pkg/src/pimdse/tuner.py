"""Hardware configuration search over the discrete design ladders.

A design is seven choices: node-array rows/cols, PE-array rows/cols, and
the three buffer capacities. Each maps onto a normalized coordinate in
[0, 1) through its ladder, so the whole design is a 7-vector that models
can digest; encode/decode round-trips exactly on ladder values.

Two learned helpers drive the loop:

* an area filter: a small MLP regressing die area from the design vector,
  used to discard out-of-budget candidates cheaply (exact area is checked
  again before any evaluation, so filter errors only cost efficiency);
* a surrogate: a GP over MLP-learned features (deep kernel). Fitting
  maximizes the exact log marginal likelihood by gradient ascent with a
  backtracking line search; gradients for the kernel hyperparameters and
  the feature-network weights are analytic.

Targets enter the GP as standardized log-costs. Each iteration samples a
candidate batch, filters, ranks by posterior mean, and evaluates the best
legal unseen design with the real evaluator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .arch import HwConstraints, HwParams, area_model, legal_na_values, validate_params

N_DIMS = 7


# ---- design vector codec ----


def ladders(cons: HwConstraints) -> list[list[int]]:
    na = legal_na_values(cons)
    pea = list(range(cons.pea_min, cons.pea_max + 1))
    buf = []
    k = cons.buf_min_kib
    while k <= cons.buf_max_kib:
        buf.append(k)
        k *= 2
    return [na, na, pea, pea, buf, buf, buf]


def encode(params: HwParams, cons: HwConstraints) -> np.ndarray:
    """Design -> canonical 7-vector (each coordinate a ladder-cell center)."""
    lads = ladders(cons)
    vals = params.astuple()
    out = np.empty(N_DIMS)
    for i, (lad, v) in enumerate(zip(lads, vals)):
        try:
            idx = lad.index(v)
        except ValueError:
            raise ValueError(f"value {v} not on ladder for dimension {i}") from None
        out[i] = (idx + 0.5) / len(lad)
    return out


def decode(vec, cons: HwConstraints) -> HwParams:
    lads = ladders(cons)
    vals = []
    for i, lad in enumerate(lads):
        u = min(max(float(vec[i]), 0.0), np.nextafter(1.0, 0.0))
        vals.append(lad[min(int(u * len(lad)), len(lad) - 1)])
    return HwParams(*vals)


def sample_vectors(rng: np.random.Generator, cons: HwConstraints, n: int) -> np.ndarray:
    """n canonical design vectors drawn uniformly over the ladders."""
    lads = ladders(cons)
    cols = []
    for lad in lads:
        idx = rng.integers(0, len(lad), size=n)
        cols.append((idx + 0.5) / len(lad))
    return np.stack(cols, axis=1)


# ---- multilayer perceptron with Adam ----


class Mlp:
    """Dense tanh network; the last layer is linear unless final_tanh."""

    def __init__(self, sizes: tuple, seed: int = 0, final_tanh: bool = False):
        rng = np.random.default_rng(seed)
        self.sizes = tuple(sizes)
        self.final_tanh = final_tanh
        self.Ws = []
        self.bs = []
        for a, b in zip(sizes, sizes[1:]):
            scale = math.sqrt(2.0 / (a + b))
            self.Ws.append(rng.normal(0.0, scale, size=(a, b)))
            self.bs.append(np.zeros(b))

    def forward(self, X: np.ndarray):
        acts = [X]
        n = len(self.Ws)
        for i, (W, b) in enumerate(zip(self.Ws, self.bs)):
            z = acts[-1] @ W + b
            if i < n - 1 or self.final_tanh:
                z = np.tanh(z)
            acts.append(z)
        return acts

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.forward(X)[-1]

    def backward(self, acts: list, d_out: np.ndarray):
        """Gradients of a scalar loss given dLoss/d(output); returns
        (dWs, dbs, dX)."""
        n = len(self.Ws)
        dWs = [None] * n
        dbs = [None] * n
        d = d_out
        for i in range(n - 1, -1, -1):
            if i < n - 1 or self.final_tanh:
                d = d * (1.0 - acts[i + 1] ** 2)
            dWs[i] = acts[i].T @ d
            dbs[i] = d.sum(axis=0)
            d = d @ self.Ws[i].T
        return dWs, dbs, d

    # flat views over (Ws, bs) for the line-search ascent
    def get_flat(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.Ws] + [b for b in self.bs])

    def set_flat(self, flat: np.ndarray) -> None:
        at = 0
        for i, W in enumerate(self.Ws):
            self.Ws[i] = flat[at:at + W.size].reshape(W.shape)
            at += W.size
        for i, b in enumerate(self.bs):
            self.bs[i] = flat[at:at + b.size].copy()
            at += b.size

    @staticmethod
    def flatten_grads(dWs, dbs) -> np.ndarray:
        return np.concatenate([g.ravel() for g in dWs] + [g for g in dbs])


class Adam:
    def __init__(self, n: int, lr: float = 1e-2, b1: float = 0.9, b2: float = 0.999):
        self.lr, self.b1, self.b2 = lr, b1, b2
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, flat: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mh = self.m / (1 - self.b1 ** self.t)
        vh = self.v / (1 - self.b2 ** self.t)
        return flat - self.lr * mh / (np.sqrt(vh) + 1e-8)


# ---- area filter ----


@dataclass
class FilterModel:
    mlp: Mlp
    y_mu: float
    y_sd: float
    margin: float = 1.05

    def predict_area(self, X: np.ndarray) -> np.ndarray:
        return np.exp(self.mlp.predict(X)[:, 0] * self.y_sd + self.y_mu)

    def accept(self, X: np.ndarray, cons: HwConstraints) -> np.ndarray:
        return self.predict_area(X) <= cons.cstr_area_mm2 * self.margin


def fit_filter(X: np.ndarray, area: np.ndarray, seed: int = 0,
               hidden: tuple = (32, 16, 8), epochs: int = 300,
               lr: float = 1e-2) -> FilterModel:
    """Regress log die area from design vectors (MSE, full-batch Adam).

    Area spans several orders of magnitude over the ladders; log targets
    keep the fit sharp near the legality boundary instead of near the tail.
    """
    y_log = np.log(area)
    mu = float(y_log.mean())
    sd = float(y_log.std()) or 1.0
    y = ((y_log - mu) / sd)[:, None]
    mlp = Mlp((X.shape[1],) + tuple(hidden) + (1,), seed=seed)
    opt = Adam(mlp.get_flat().size, lr=lr)
    flat = mlp.get_flat()
    for _ in range(epochs):
        mlp.set_flat(flat)
        acts = mlp.forward(X)
        err = acts[-1] - y
        dWs, dbs, _ = mlp.backward(acts, 2.0 * err / len(X))
        flat = opt.step(flat, Mlp.flatten_grads(dWs, dbs))
    mlp.set_flat(flat)
    return FilterModel(mlp=mlp, y_mu=mu, y_sd=sd)


# ---- deep-kernel GP surrogate ----


_JITTER = 1e-10
_LOG_SN_FLOOR = math.log(1e-5)


class DklCore:
    """Feature MLP plus RBF kernel hyperparameters, as one flat vector."""

    def __init__(self, in_dim: int = N_DIMS, hidden: tuple = (32, 16, 8), seed: int = 0):
        self.mlp = Mlp((in_dim,) + tuple(hidden), seed=seed, final_tanh=True)
        self.log_ell = 0.0
        self.log_sf = 0.0
        self.log_sn = math.log(0.1)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.mlp.get_flat(),
                               [self.log_ell, self.log_sf, self.log_sn]])

    def set_flat(self, flat: np.ndarray) -> None:
        self.mlp.set_flat(flat[:-3])
        self.log_ell = float(flat[-3])
        self.log_sf = float(flat[-2])
        self.log_sn = max(float(flat[-1]), _LOG_SN_FLOOR)

    def _kernel(self, Z: np.ndarray):
        ell2 = math.exp(2 * self.log_ell)
        sf2 = math.exp(2 * self.log_sf)
        sn2 = math.exp(2 * self.log_sn)
        sq = np.sum(Z * Z, axis=1)
        D = sq[:, None] + sq[None, :] - 2.0 * (Z @ Z.T)
        np.maximum(D, 0.0, out=D)
        Krbf = sf2 * np.exp(-D / (2 * ell2))
        K = Krbf + (sn2 + _JITTER) * np.eye(len(Z))
        return Krbf, K, D, ell2, sf2, sn2

    def lml(self, X: np.ndarray, y: np.ndarray) -> float:
        Z = self.mlp.forward(X)[-1]
        _, K, _, _, _, _ = self._kernel(Z)
        L = np.linalg.cholesky(K)
        alpha = np.linalg.solve(L.T, np.linalg.solve(L, y))
        return float(-0.5 * y @ alpha - np.log(np.diag(L)).sum()
                     - 0.5 * len(y) * math.log(2 * math.pi))

    def lml_grad(self, X: np.ndarray, y: np.ndarray):
        """(log marginal likelihood, gradient w.r.t. the flat vector)."""
        acts = self.mlp.forward(X)
        Z = acts[-1]
        Krbf, K, D, ell2, sf2, sn2 = self._kernel(Z)
        L = np.linalg.cholesky(K)
        alpha = np.linalg.solve(L.T, np.linalg.solve(L, y))
        lml = float(-0.5 * y @ alpha - np.log(np.diag(L)).sum()
                    - 0.5 * len(y) * math.log(2 * math.pi))
        Kinv = np.linalg.solve(L.T, np.linalg.solve(L, np.eye(len(y))))
        G = np.outer(alpha, alpha) - Kinv

        d_log_sf = float(np.sum(G * Krbf))            # dK/dlog_sf = 2*Krbf
        d_log_ell = float(0.5 * np.sum(G * Krbf * D) / ell2)
        d_log_sn = float(sn2 * np.trace(G))

        M = G * Krbf
        rows = M.sum(axis=1)
        dZ = (M @ Z - rows[:, None] * Z) / ell2
        dWs, dbs, _ = self.mlp.backward(acts, dZ)
        grad = np.concatenate([Mlp.flatten_grads(dWs, dbs),
                               [d_log_ell, d_log_sf, d_log_sn]])
        return lml, grad


@dataclass
class Surrogate:
    core: DklCore
    X: np.ndarray
    Z: np.ndarray
    alpha: np.ndarray
    y_mu: float
    y_sd: float
    lml: float

    def mean_log(self, Xq: np.ndarray) -> np.ndarray:
        """Posterior mean in standardized log-cost space, de-standardized."""
        Zq = self.core.mlp.predict(Xq)
        ell2 = math.exp(2 * self.core.log_ell)
        sf2 = math.exp(2 * self.core.log_sf)
        d = (np.sum(Zq * Zq, axis=1)[:, None] + np.sum(self.Z * self.Z, axis=1)[None, :]
             - 2.0 * (Zq @ self.Z.T))
        np.maximum(d, 0.0, out=d)
        kq = sf2 * np.exp(-d / (2 * ell2))
        return (kq @ self.alpha) * self.y_sd + self.y_mu

    def mean_cost(self, Xq: np.ndarray) -> np.ndarray:
        return np.exp(self.mean_log(Xq))


def surrogate_fit(X: np.ndarray, costs: np.ndarray, seed: int = 0, steps: int = 80,
                  hidden: tuple = (32, 16, 8), warm: DklCore | None = None) -> Surrogate:
    """Maximize the exact LML by line-searched gradient ascent (monotone)."""
    y_log = np.log(np.maximum(costs, 1e-300))
    mu = float(y_log.mean())
    sd = float(y_log.std()) or 1.0
    y = (y_log - mu) / sd

    core = warm if warm is not None else DklCore(in_dim=X.shape[1], hidden=hidden, seed=seed)
    flat = core.get_flat()
    core.set_flat(flat)
    lml, grad = core.lml_grad(X, y)
    step = 1e-2
    for _ in range(steps):
        gnorm = float(np.linalg.norm(grad))
        if gnorm < 1e-9:
            break
        improved = False
        for _try in range(25):
            cand = flat + step * grad / gnorm
            core.set_flat(cand)
            try:
                cand_lml = core.lml(X, y)
            except np.linalg.LinAlgError:
                cand_lml = -np.inf
            if cand_lml > lml:
                flat = core.get_flat()  # re-read: set_flat may clamp
                lml = cand_lml
                step = min(step * 1.3, 1.0)
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        core.set_flat(flat)
        lml, grad = core.lml_grad(X, y)

    core.set_flat(flat)
    acts_Z = core.mlp.predict(X)
    _, K, _, _, _, _ = core._kernel(acts_Z)
    L = np.linalg.cholesky(K)
    alpha = np.linalg.solve(L.T, np.linalg.solve(L, y))
    return Surrogate(core=core, X=X.copy(), Z=acts_Z, alpha=alpha,
                     y_mu=mu, y_sd=sd, lml=lml)


def surrogate_rank(s: Surrogate, Xq: np.ndarray) -> np.ndarray:
    """Candidate indices by ascending predicted cost; ties break on bytes."""
    mean = s.mean_log(Xq)
    keys = [(mean[i], tuple(Xq[i])) for i in range(len(Xq))]
    return np.array(sorted(range(len(Xq)), key=lambda i: keys[i]), dtype=np.intp)


# ---- search loop ----


@dataclass
class TuneResult:
    best_params: HwParams | None
    best_cost: float
    history: list = field(default_factory=list)
    evaluations: list = field(default_factory=list)  # (HwParams, cost)
    filter_false_negative_rate: float = 0.0


def _legal(params: HwParams, cons: HwConstraints) -> bool:
    return not validate_params(params, cons)


def random_search(cons: HwConstraints, evaluate_fn, budget: int, seed: int = 0,
                  max_draws_factor: int = 100) -> TuneResult:
    """Uniform sampling over legal designs; the reference for the tuner."""
    rng = np.random.default_rng(seed)
    res = TuneResult(best_params=None, best_cost=math.inf)
    seen = set()
    draws = 0
    while len(res.evaluations) < budget and draws < budget * max_draws_factor:
        v = sample_vectors(rng, cons, 1)[0]
        draws += 1
        p = decode(v, cons)
        key = p.astuple()
        if key in seen or not _legal(p, cons):
            continue
        seen.add(key)
        c = float(evaluate_fn(p))
        res.evaluations.append((p, c))
        if c < res.best_cost:
            res.best_cost, res.best_params = c, p
        res.history.append({"evaluation": len(res.evaluations), "cost": c,
                            "best_cost": res.best_cost})
    return res


def tune_loop(cons: HwConstraints, evaluate_fn, budget: int = 64, seed: int = 0,
              n_sample: int = 1024, gp_cap: int = 512, init_evals: int = 8,
              filter_pool: int = 2048, wide_models: bool = False,
              gp_steps: int = 80, gp_refit_steps: int = 15) -> TuneResult:
    """Model-guided search for the minimum-cost legal design.

    evaluate_fn(HwParams) -> positive scalar cost. The budget counts
    evaluator calls. Candidates outside the area budget (per the filter)
    are dropped before ranking; exact legality is re-checked before any
    evaluation, so the models never corrupt the result, only the ranking.
    """
    rng = np.random.default_rng(seed)
    hidden = (256, 64, 16) if wide_models else (32, 16, 8)

    pool = sample_vectors(rng, cons, filter_pool)
    pool_area = np.array([area_model(decode(v, cons), cons) for v in pool])
    filt = fit_filter(pool, pool_area, seed=seed, hidden=hidden)

    res = TuneResult(best_params=None, best_cost=math.inf)
    seen: set = set()
    X_hist: list = []
    y_hist: list = []

    def try_eval(p: HwParams) -> bool:
        key = p.astuple()
        if key in seen or not _legal(p, cons):
            return False
        seen.add(key)
        c = float(evaluate_fn(p))
        res.evaluations.append((p, c))
        X_hist.append(encode(p, cons))
        y_hist.append(c)
        if c < res.best_cost:
            res.best_cost, res.best_params = c, p
        res.history.append({"evaluation": len(res.evaluations), "cost": c,
                            "best_cost": res.best_cost})
        return True

    draws = 0
    while len(res.evaluations) < min(init_evals, budget) and draws < budget * 1000:
        draws += 1
        try_eval(decode(sample_vectors(rng, cons, 1)[0], cons))

    core = None
    while len(res.evaluations) < budget:
        X = np.array(X_hist)
        y = np.array(y_hist)
        if len(y) > gp_cap:
            keep = np.argsort(y)[:gp_cap]
            X, y = X[keep], y[keep]
        steps = gp_steps if core is None else gp_refit_steps
        sur = surrogate_fit(X, y, seed=seed, steps=steps,
                            hidden=hidden, warm=core)
        core = sur.core

        cands = sample_vectors(rng, cons, n_sample)
        mask = filt.accept(cands, cons)
        cands = cands[mask]
        if len(cands) == 0:
            warnings.warn("area filter rejected the whole batch; sampling wider")
            cands = sample_vectors(rng, cons, n_sample)
        placed = False
        for i in surrogate_rank(sur, cands):
            if try_eval(decode(cands[i], cons)):
                placed = True
                break
        if not placed:
            for _ in range(budget * 1000):
                if try_eval(decode(sample_vectors(rng, cons, 1)[0], cons)):
                    placed = True
                    break
            if not placed:
                break  # design space exhausted

    audit = sample_vectors(rng, cons, 512)
    rej = ~filt.accept(audit, cons)
    if rej.any():
        actually_legal = np.array([_legal(decode(v, cons), cons) for v in audit[rej]])
        res.filter_false_negative_rate = float(actually_legal.mean())
    return res


def make_cost_evaluator(workloads: list, cons: HwConstraints, alpha: float = 1.0,
                        beta: float = 1.0, quantum_kib: int = 64,
                        exact_limit: int = 8, seed: int = 0,
                        schedule_method: str = "ilp", max_iters: int = 3):
    """evaluate_fn running the full mapping search on every workload."""
    from .costmodel import total_cost
    from .mapper import map_dnn

    def evaluate(params: HwParams) -> float:
        per = []
        for graph in workloads:
            r = map_dnn(graph, params, cons, quantum_kib=quantum_kib,
                        exact_limit=exact_limit, seed=seed,
                        schedule_method=schedule_method, max_iters=max_iters)
            per.append((r.energy_pj, r.latency_cycles, graph.gamma))
        return total_cost(per, alpha, beta)

    return evaluate
