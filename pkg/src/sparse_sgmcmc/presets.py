"""Named run configurations for the two experiment families.

Each preset pairs a sampler configuration with the dataset it was tuned on
(see :data:`PRESET_DATA`), so a preset can run without a dataset on disk.
"""

from __future__ import annotations

from dataclasses import replace

from .harness import RunConfig
from .hyper import PriorConfig
from .sampler import SamplerConfig, ScheduleSet

REGRESSION_SCHEDULES = ScheduleSet(eps_c=0.05, eps_d=0.0, eps_gamma=1 / 3, omega_c1=100.0, omega_c2=100.0, omega_gamma=0.7)
DARCY_SCHEDULES = ScheduleSet(eps_c=0.003, eps_d=1000.0, eps_gamma=1 / 3, omega_c1=100.0, omega_c2=100.0, omega_gamma=0.7)


def regression_prior(variant: str, p: int = 200) -> PriorConfig:
    # preconditioned runs use the wider Laplace component
    v0 = 100.0 if variant.startswith("psgld") else 10.0
    return PriorConfig(v0=v0, v1=0.1, a=1.0, b=float(p), nu=1.0, lam=1.0)


def regression_preset(variant: str, p: int = 200, **overrides) -> RunConfig:
    schedules = REGRESSION_SCHEDULES
    if variant.startswith("psgld"):
        schedules = replace(schedules, alpha_floor=0.999)
    cfg = RunConfig(
        model={"kind": "linear"},
        sampler=SamplerConfig(variant=variant, schedules=schedules, thinning=10),
        prior=regression_prior(variant, p),
        batch_size=50,
        iterations=10_000,
        eval_every=100,
        delta0=0.5,
        label=variant,
    )
    return replace(cfg, **overrides)


def darcy_preset(variant: str, **overrides) -> RunConfig:
    """Two hidden tanh layers of 64 with every weight matrix sparse."""
    schedules = DARCY_SCHEDULES
    if variant.startswith("psgld"):
        schedules = replace(schedules, alpha_floor=0.99)
    cfg = RunConfig(
        model={"kind": "mlp", "hidden": [64, 64], "activation": "tanh", "sparse_from": 0},
        sampler=SamplerConfig(variant=variant, schedules=schedules, thinning=10),
        prior=PriorConfig(v0=10.0, v1=0.1, a=1.0, b=1.0, nu=1.0, lam=1.0),
        batch_size=30,
        iterations=20_000,
        eval_every=500,
        sparse_rate=50.0,
        store_samples=False,
        label=variant,
    )
    return replace(cfg, **overrides)


PRESETS = {
    "regression-test1": regression_preset,
    "regression-test2": regression_preset,
    "darcy-desk": darcy_preset,
}
# alternative spellings accepted on the command line
ALIASES = {"sec61-test1": "regression-test1", "sec61-test2": "regression-test2", "sec62-desk": "darcy-desk"}

# (dataset kind, generator keyword arguments) used when no dataset is given
PRESET_DATA = {
    "regression-test1": ("regression", {"n": 100, "p": 200, "seed": 7}),
    "regression-test2": ("regression", {"n": 100, "p": 200, "seed": 7, "col_scales": {1: 0.3}}),
    "darcy-desk": ("darcy", {"grid": 16, "kle": 16, "samples": 360, "n_train": 300, "seed": 7}),
}


def canonical_preset(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return name


def get_preset(name: str, variant: str, **overrides) -> RunConfig:
    return PRESETS[canonical_preset(name)](variant, **overrides)


def preset_problem(name: str, seed: int | None = None):
    """Generate the dataset a preset was tuned on, optionally with another seed."""
    from .data.sets import darcy_problem, make_darcy_set, make_regression_set, regression_problem

    kind, kwargs = PRESET_DATA[canonical_preset(name)]
    kwargs = dict(kwargs)
    if seed is not None:
        kwargs["seed"] = seed
    if kind == "regression":
        return regression_problem(make_regression_set(**kwargs))
    return darcy_problem(make_darcy_set(**kwargs))
