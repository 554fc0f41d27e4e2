import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_simplex_rows(rng, n, k, alpha=1.0):
    """Dirichlet(alpha) rows; small alpha gives spiky (near one-hot) rows."""
    return rng.dirichlet(np.full(k, alpha), size=n)


def perturb_entry(params, layer, kind, index, eps):
    """Return a copy of MlpParams with one weight/bias entry shifted by eps."""
    out = params.copy()
    if kind == "w":
        out.weights[layer].flat[index] += eps
    else:
        out.biases[layer].flat[index] += eps
    return out


def param_coords(params):
    """All (layer, kind, flat_index) coordinates of an MlpParams instance."""
    coords = []
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        coords.extend((layer, "w", i) for i in range(w.size))
        coords.extend((layer, "b", i) for i in range(b.size))
    return coords


def grad_entry(grads, layer, kind, index):
    arr = grads.weights[layer] if kind == "w" else grads.biases[layer]
    return arr.flat[index]


def pair_loss_value(encoder, mnet, batch, centers, m, thr, mode, frozen_gates=None):
    """Pair-loss value via a full forward pass (FD oracle for the phase-2 losses).

    With frozen_gates=(sim, dis) the indicator masks stay fixed at the base
    point, which is the function the analytic gradient differentiates (no
    gradient flows through the gates); otherwise gates are recomputed.
    """
    from dcss.membership import memberships
    from dcss.nn import mlp_forward

    u, _ = mlp_forward(encoder, batch)
    q, _ = mlp_forward(mnet, u)
    s_q = q @ q.T
    if frozen_gates is not None:
        sim, dis = frozen_gates
    else:
        s_gate = (lambda p: p @ p.T)(memberships(u, centers, m)) if mode == "u" else s_q
        sim, dis = s_gate >= thr.zeta, s_gate <= thr.gamma
    return float((1.0 - s_q[sim]).sum() + s_q[dis].sum())


def choose_clear_thresholds(values, lo=0.15, hi=0.7):
    """Pick (zeta, gamma) at least 0.02 away from every realized inner product,
    so indicator gates stay constant inside a finite-difference stencil."""
    from dcss.phase2 import PairThresholds

    vals = np.unique(np.round(np.asarray(values).ravel(), 12))

    def clear(c):
        return np.abs(vals - c).min() > 0.02

    zeta = next(c for c in np.linspace(hi, 0.99, 40) if clear(c))
    gamma = next(c for c in np.linspace(lo, 0.01, 40) if clear(c))
    return PairThresholds(float(zeta), float(gamma))
