import numpy as np

from sparse_sgmcmc.model import Batch, ParamState


def random_batch(rng, net, n=5, n_total=20):
    x = rng.standard_normal((n, net.layers[0].fan_in))
    y = rng.standard_normal((n, net.layers[-1].fan_out))
    return Batch(x, y, n_total)


def random_params(rng, net, scale=0.7):
    return ParamState(scale * rng.standard_normal(net.size))


# acceptance verdict lines, echoed in the terminal summary
ACCEPTANCE_LINES: list[tuple[int, str]] = []
