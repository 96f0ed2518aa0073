"""Central-difference check of the network's analytic gradient."""

import numpy as np

from steercomp import tdnn


def max_relative_error(seed, taps=6, batch=24, step=1e-5):
    rng = np.random.default_rng(seed)
    model = tdnn.TdnnModel.create(taps=taps, seed=seed)
    z = rng.normal(size=(1, batch, model.input_dim))
    y = rng.normal(size=(1, batch))
    params = tdnn._stack([model])
    _, grads = tdnn.loss_and_grads(params, z, y)
    worst = 0.0
    for p, g in zip(params, grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = tdnn.loss_and_grads(params, z, y)[0][0]
            flat[i] = keep - step
            down = tdnn.loss_and_grads(params, z, y)[0][0]
            flat[i] = keep
            numeric = (up - down) / (2 * step)
            analytic = gflat[i]
            rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-7)
            worst = max(worst, rel)
    return worst
