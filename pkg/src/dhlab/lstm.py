"""
Stacked LSTM regressor in plain numpy with exact backpropagation through
time.  Two gated recurrent layers feed an affine readout; gradients are
derived analytically and verified against central finite differences in
the test suite.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

import numpy as np


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class LstmRegressor:
    """Sequence-to-sequence regressor: (B, T, n_in) -> (B, T, n_out).

    Parameters live in ``self.params``: per layer a stacked gate matrix
    W{l} of shape (n_prev + H, 4H) with gate order (input, forget, cell,
    output) and bias b{l} (forget bias initialized to 1), plus the
    readout Wo (H_last, n_out), bo (n_out,).
    """

    def __init__(self, n_in: int, n_out: int, hidden: Tuple[int, ...] = (32, 32),
                 seed: int = 0):
        self.n_in = n_in
        self.n_out = n_out
        self.hidden = tuple(hidden)
        rng = np.random.default_rng(seed)
        self.params: Dict[str, np.ndarray] = {}
        prev = n_in
        for l, H in enumerate(self.hidden):
            scale = 1.0 / np.sqrt(prev + H)
            self.params[f"W{l}"] = rng.uniform(-scale, scale, (prev + H, 4 * H))
            b = np.zeros(4 * H)
            b[H:2 * H] = 1.0
            self.params[f"b{l}"] = b
            prev = H
        scale = 1.0 / np.sqrt(prev)
        self.params["Wo"] = rng.uniform(-scale, scale, (prev, n_out))
        self.params["bo"] = np.zeros(n_out)

    # -- forward -------------------------------------------------------------

    def init_state(self, batch: int = 1) -> List[Tuple[np.ndarray, np.ndarray]]:
        return [(np.zeros((batch, H)), np.zeros((batch, H)))
                for H in self.hidden]

    def forward(self, X: np.ndarray, return_cache: bool = False):
        """Full-sequence forward pass from zero initial state."""
        B, T, _ = X.shape
        state = self.init_state(B)
        Y = np.empty((B, T, self.n_out))
        cache = [] if return_cache else None
        for t in range(T):
            inp = X[:, t, :]
            step_cache = [] if return_cache else None
            for l, H in enumerate(self.hidden):
                h_prev, c_prev = state[l]
                za = np.concatenate([inp, h_prev], axis=1)
                z = za @ self.params[f"W{l}"] + self.params[f"b{l}"]
                i = _sigmoid(z[:, :H])
                f = _sigmoid(z[:, H:2 * H])
                g = np.tanh(z[:, 2 * H:3 * H])
                o = _sigmoid(z[:, 3 * H:])
                c = f * c_prev + i * g
                hc = np.tanh(c)
                h = o * hc
                if return_cache:
                    step_cache.append((za, i, f, g, o, c_prev, hc))
                state[l] = (h, c)
                inp = h
            Y[:, t, :] = inp @ self.params["Wo"] + self.params["bo"]
            if return_cache:
                cache.append((step_cache, inp))
        if return_cache:
            return Y, cache
        return Y

    def step(self, x: np.ndarray, state):
        """Stateful single-step forward for streaming inference."""
        inp = np.atleast_2d(x)
        new_state = []
        for l, H in enumerate(self.hidden):
            h_prev, c_prev = state[l]
            z = (np.concatenate([inp, h_prev], axis=1) @ self.params[f"W{l}"]
                 + self.params[f"b{l}"])
            i = _sigmoid(z[:, :H])
            f = _sigmoid(z[:, H:2 * H])
            g = np.tanh(z[:, 2 * H:3 * H])
            o = _sigmoid(z[:, 3 * H:])
            c = f * c_prev + i * g
            h = o * np.tanh(c)
            new_state.append((h, c))
            inp = h
        y = inp @ self.params["Wo"] + self.params["bo"]
        return y[0] if x.ndim == 1 else y, new_state

    # -- backward ------------------------------------------------------------

    def backward(self, X: np.ndarray, cache, dY: np.ndarray
                 ) -> Dict[str, np.ndarray]:
        """BPTT given upstream gradients dY of the forward outputs."""
        B, T, _ = X.shape
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        L = len(self.hidden)
        dh_next = [np.zeros((B, H)) for H in self.hidden]
        dc_next = [np.zeros((B, H)) for H in self.hidden]
        for t in reversed(range(T)):
            step_cache, h_top = cache[t]
            dy = dY[:, t, :]
            grads["Wo"] += h_top.T @ dy
            grads["bo"] += dy.sum(axis=0)
            d_inp = dy @ self.params["Wo"].T
            for l in reversed(range(L)):
                H = self.hidden[l]
                za, i, f, g, o, c_prev, hc = step_cache[l]
                dh = d_inp + dh_next[l]
                do = dh * hc
                dc = dc_next[l] + dh * o * (1.0 - hc * hc)
                di = dc * g
                df = dc * c_prev
                dg = dc * i
                dz = np.concatenate([
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g * g),
                    do * o * (1.0 - o)], axis=1)
                grads[f"W{l}"] += za.T @ dz
                grads[f"b{l}"] += dz.sum(axis=0)
                dza = dz @ self.params[f"W{l}"].T
                n_prev = za.shape[1] - H
                d_inp = dza[:, :n_prev]       # to the layer below (same t)
                dh_next[l] = dza[:, n_prev:]  # to the previous time step
                dc_next[l] = dc * f
        return grads


def mae_loss_and_grad(Y: np.ndarray, targets: np.ndarray,
                      mask: Optional[np.ndarray] = None):
    """Mean absolute error over (optionally masked) sequence outputs and
    its gradient with respect to Y."""
    diff = Y - targets
    if mask is None:
        n = diff.size
        loss = float(np.abs(diff).mean())
        dY = np.sign(diff) / n
    else:
        m = mask[..., None] if mask.ndim == diff.ndim - 1 else mask
        n = float(np.sum(m) * (diff.shape[-1] if m.shape[-1] == 1 else 1))
        loss = float(np.sum(np.abs(diff) * m) / n)
        dY = np.sign(diff) * m / n
    return loss, dY
