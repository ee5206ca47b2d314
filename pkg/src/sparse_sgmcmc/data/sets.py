"""Experiment datasets: generation, persistence and train/test problems."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..numcore import RngStream
from .darcy import darcy_solve, n_faces, rel_errors
from .io import config_hash, read_json, read_matrix, write_json, write_matrix
from .kle import kle_build, sample_permeability
from .regression import gen_regression

# child stream ids for the regression splits; Darcy samples use 100 + index
TRAIN_STREAM, TEST_STREAM = 1, 2


@dataclass
class Problem:
    """Inputs/targets for training plus a metric function for the test split.

    Targets may be standardized (``y_shift``/``y_scale``); metrics always work
    on the original scale.
    """

    kind: str
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    meta: dict = field(default_factory=dict)
    y_shift: np.ndarray | float = 0.0
    y_scale: float = 1.0
    kappa_test: np.ndarray | None = None

    @property
    def n_train(self) -> int:
        return self.x_train.shape[0]

    def unscale(self, pred) -> np.ndarray:
        return np.asarray(pred) * self.y_scale + self.y_shift

    def metrics(self, pred_test) -> dict[str, float]:
        pred = self.unscale(pred_test).reshape(self.y_test.shape[0], -1)
        truth = self.unscale(self.y_test).reshape(pred.shape)
        d = pred - truth
        out = {"mse": float(np.mean(d * d)), "mae": float(np.mean(np.abs(d)))}
        if self.kind == "darcy":
            errs = np.array([rel_errors(pred[i], truth[i], self.kappa_test[i]) for i in range(len(pred))])
            out["e1"], out["e2"] = float(errs[:, 0].mean()), float(errs[:, 1].mean())
        return out


def make_regression_set(
    n: int = 100,
    p: int = 200,
    corr_base: float = 0.6,
    beta_nonzero=(3.0, 1.0),
    noise_var: float = 3.0,
    col_scales: dict[int, float] | None = None,
    n_test: int = 200,
    seed: int = 7,
) -> dict:
    """Train and test draws sharing ``beta_true`` and column scales.

    ``col_scales`` maps 1-based column numbers to multipliers.
    """
    beta = np.zeros(p)
    beta[: len(beta_nonzero)] = beta_nonzero
    scales = np.ones(p)
    for col, s in (col_scales or {}).items():
        if not 1 <= int(col) <= p:
            raise ValueError(f"column {col} outside 1..{p}")
        scales[int(col) - 1] = s
    root = RngStream(seed)
    train = gen_regression(n, p, corr_base, beta, noise_var, scales, root.child(TRAIN_STREAM))
    test = gen_regression(n_test, p, corr_base, beta, noise_var, scales, root.child(TEST_STREAM))
    manifest = dict(
        kind="regression",
        seed=seed,
        n=n,
        p=p,
        n_test=n_test,
        corr_base=corr_base,
        noise_var=noise_var,
        beta_nonzero=list(map(float, beta_nonzero)),
        col_scales={str(k): float(v) for k, v in sorted((col_scales or {}).items())},
    )
    return dict(manifest=manifest, X_train=train.X, y_train=train.y, X_test=test.X, y_test=test.y, beta_true=beta)


def make_darcy_set(
    grid: int = 16,
    kle: int = 16,
    samples: int = 360,
    n_train: int = 300,
    seed: int = 7,
    l_x: float = 0.2,
    l_y: float = 0.3,
    sigma_cov: float = 2.0,
    kappa0: float = 0.0,
    source: float = 1.0,
    mode: str = "lognormal",
) -> dict:
    """Sample permeabilities from a KLE and solve Darcy flow for each.

    Sample ``i`` draws its coefficients from its own child stream of
    ``seed``, so the set does not depend on generation order.
    """
    if not 0 < n_train < samples:
        raise ValueError("need 0 < n_train < samples")
    basis = kle_build(grid, l_x, l_y, sigma_cov, kle, kappa0)
    root = RngStream(seed)
    mu = np.stack([root.child(100 + i).generator().standard_normal(kle) for i in range(samples)])
    kappa = np.empty((samples, grid * grid))
    flux = np.empty((samples, n_faces(grid)))
    for i in range(samples):
        k = sample_permeability(basis, mu[i], mode=mode)
        sol = darcy_solve(k, f=source)
        kappa[i] = k.ravel()
        flux[i] = sol.flux
    manifest = dict(
        kind="darcy",
        seed=seed,
        grid=grid,
        kle=kle,
        samples=samples,
        n_train=n_train,
        l_x=l_x,
        l_y=l_y,
        sigma_cov=sigma_cov,
        kappa0=kappa0,
        source=source,
        mode=mode,
        eigenvalues=[float(v) for v in basis.eigenvalues],
    )
    return dict(manifest=manifest, mu=mu, kappa=kappa, flux=flux)


def save_dataset(data: dict, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    man = data["manifest"]
    stamp = f"seed={man.get('seed')} config_hash={config_hash(man)}"
    for key, val in data.items():
        if key != "manifest":
            write_matrix(out / f"{key}.csv", val, key, stamp)
    write_json(out / "manifest.json", data["manifest"])
    return out


def load_dataset(path) -> dict:
    path = Path(path)
    manifest = read_json(path / "manifest.json")
    data = {"manifest": manifest}
    for f in sorted(path.glob("*.csv")):
        data[f.stem] = read_matrix(f)
    return data


def regression_problem(data: dict) -> Problem:
    return Problem(
        "regression",
        data["X_train"],
        data["y_train"].reshape(-1, 1),
        data["X_test"],
        data["y_test"].reshape(-1, 1),
        meta=dict(data["manifest"], beta_true=np.ravel(data["beta_true"]).tolist()),
    )


def darcy_problem(data: dict) -> Problem:
    """Log-permeability in, standardized face velocities out.

    Inputs are divided by the pooled std of the training log-fields; targets
    have the per-face training mean removed and are divided by one pooled std.
    """
    man = data["manifest"]
    n_train = int(man["n_train"])
    logk = np.log(data["kappa"])
    x_scale = float(np.std(logk[:n_train])) or 1.0
    u = data["flux"]
    shift = u[:n_train].mean(axis=0)
    scale = float(np.std(u[:n_train] - shift)) or 1.0
    y = (u - shift) / scale
    m = int(man["grid"])
    return Problem(
        "darcy",
        logk[:n_train] / x_scale,
        y[:n_train],
        logk[n_train:] / x_scale,
        y[n_train:],
        meta=dict(man),
        y_shift=shift,
        y_scale=scale,
        kappa_test=data["kappa"][n_train:].reshape(-1, m, m),
    )


def load_problem(path) -> Problem:
    data = load_dataset(path)
    kind = data["manifest"]["kind"]
    if kind == "regression":
        return regression_problem(data)
    if kind == "darcy":
        return darcy_problem(data)
    raise ValueError(f"unknown dataset kind {kind!r}")


__all__ = [
    "Problem",
    "darcy_problem",
    "load_dataset",
    "load_problem",
    "make_darcy_set",
    "make_regression_set",
    "regression_problem",
    "save_dataset",
]
