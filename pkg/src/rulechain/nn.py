"""Dense numeric building blocks: GRU cell, losses, Adam, gradient checking.

Everything is float64. The public functions here are pure numpy (no graph);
the model module drives the same cell through the autodiff tape.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .prng import Stream, derive_seed


class ShapeMismatch(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass(slots=True)
class GruParams:
    """Gate / candidate weights for one GRU cell.

    W_* map the input (hidden x input), U_* map the carried state
    (hidden x hidden), b_* are biases (hidden,).
    """

    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    @property
    def input_size(self) -> int:
        return self.W_z.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.W_z.shape[0]

    def named(self, prefix: str) -> list[tuple[str, np.ndarray]]:
        return [
            (f"{prefix}.{name}", getattr(self, name))
            for name in ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")
        ]


def init_matrix(shape: tuple[int, ...], fan_in: int, seed: int) -> np.ndarray:
    """Uniform in +/- sqrt(1/fan_in), drawn from the package PRNG."""
    bound = (1.0 / fan_in) ** 0.5
    rng = Stream(seed)
    flat = np.array(
        [rng.uniform(-bound, bound) for _ in range(int(np.prod(shape)))],
        dtype=np.float64,
    )
    return flat.reshape(shape)


def init_gru(input_size: int, hidden_size: int, seed: int, name: str) -> GruParams:
    def w(field_name: str, shape, fan_in):
        return init_matrix(shape, fan_in, derive_seed(seed, "init", name, field_name))

    h, i = hidden_size, input_size
    return GruParams(
        W_z=w("W_z", (h, i), i), W_r=w("W_r", (h, i), i), W_h=w("W_h", (h, i), i),
        U_z=w("U_z", (h, h), h), U_r=w("U_r", (h, h), h), U_h=w("U_h", (h, h), h),
        b_z=np.zeros(h), b_r=np.zeros(h), b_h=np.zeros(h),
    )


def gru_cell(p, x, h) -> ag.Var:
    """One GRU step through the tape. `p` holds Vars or ndarrays.

    z = sigma(W_z x + U_z h + b_z)
    r = sigma(W_r x + U_r h + b_r)
    hcand = tanh(W_h x + U_h (r * h) + b_h)
    out = (1 - z) * h + z * hcand
    """
    z = ag.sigmoid(ag.lincomb2(x, p.W_z, h, p.U_z, p.b_z))
    r = ag.sigmoid(ag.lincomb2(x, p.W_r, h, p.U_r, p.b_r))
    hcand = ag.tanh(ag.lincomb2(x, p.W_h, ag.mul(r, h), p.U_h, p.b_h))
    return ag.add(ag.mul(ag.rsub_const(1.0, z), h), ag.mul(z, hcand))


def gru_step(p: GruParams, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Pure-numpy GRU step; validates shapes."""
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if x.shape[-1] != p.input_size or h.shape[-1] != p.hidden_size:
        raise ShapeMismatch(
            f"gru_step: x has {x.shape[-1]} features (want {p.input_size}), "
            f"h has {h.shape[-1]} (want {p.hidden_size})"
        )
    return gru_cell(p, x, h).value


def softmax(scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("softmax of an empty vector")
    return ag.softmax(scores).value


def sigmoid(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


PROB_EPS = 1e-7


def bce_loss(prediction: float, label: int) -> float:
    """Binary cross entropy with the prediction clamped away from {0, 1}."""
    p = min(max(float(prediction), PROB_EPS), 1.0 - PROB_EPS)
    y = float(label)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


@dataclass(slots=True)
class AdamState:
    """First/second moment accumulators for one parameter list."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    learning_rate: float = 1e-2

    @classmethod
    def for_params(cls, params: list[np.ndarray], learning_rate: float = 1e-2) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            learning_rate=learning_rate,
        )


def adam_step(
    state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]
) -> tuple[list[np.ndarray], AdamState]:
    """Bias-corrected Adam update, applied in place; returns (params, state)."""
    if len(params) != len(grads):
        raise ShapeMismatch(f"{len(params)} params vs {len(grads)} grads")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeMismatch(f"param {p.shape} vs grad {g.shape}")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def grad_check(
    loss_fn,
    params: list[np.ndarray],
    probe_count: int = 200,
    seed: int = 0,
    fd_step: float = 1e-5,
    noise_floor: float = 1e-9,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    `loss_fn(params) -> (loss, grads)`; finite differences re-evaluate only
    the loss. Probed scalar coordinates are chosen by the package PRNG.

    Per probe: err = |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
    except that probes agreeing within `noise_floor` absolutely count as
    exact. Central differences at this step cannot resolve disagreements
    below ~eps * |loss| / step (about 1e-11 here), so near-zero-gradient
    coordinates would otherwise report pure roundoff as error; a genuinely
    wrong gradient on any coordinate FD can resolve still gets flagged.
    """
    loss, grads = loss_fn(params)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss!r} at the probe point")
    sizes = [p.size for p in params]
    total = sum(sizes)
    rng = Stream(derive_seed(seed, "grad-check"))
    worst = 0.0
    for _ in range(probe_count):
        flat = rng.randint(total)
        t_idx = 0
        while flat >= sizes[t_idx]:
            flat -= sizes[t_idx]
            t_idx += 1
        original = params[t_idx].flat[flat]

        params[t_idx].flat[flat] = original + fd_step
        loss_plus, _ = loss_fn(params)
        params[t_idx].flat[flat] = original - fd_step
        loss_minus, _ = loss_fn(params)
        params[t_idx].flat[flat] = original

        if not (np.isfinite(loss_plus) and np.isfinite(loss_minus)):
            raise NonFiniteLoss("non-finite loss during finite-difference probe")
        numeric = (loss_plus - loss_minus) / (2.0 * fd_step)
        analytic = grads[t_idx].flat[flat]
        if abs(analytic - numeric) <= noise_floor:
            continue
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


# ------------------------------------------------------------- checkpointing

_MAGIC = b"RULECHAIN-CKPT-1\n"


def save_checkpoint(path, named_params: list[tuple[str, np.ndarray]], config: dict) -> None:
    """Write a checkpoint: magic, JSON header line, then raw float64 blobs.

    The header records the config and each entry's name and shape; data is
    little-endian row-major float64 in header order. Round trips exactly.
    """
    header = {
        "config": config,
        "entries": [{"name": n, "shape": list(a.shape)} for n, a in named_params],
    }
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for _, arr in named_params:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a rulechain checkpoint")
        header = json.loads(fh.readline().decode("utf-8"))
        arrays: dict[str, np.ndarray] = {}
        for entry in header["entries"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"{path}: truncated checkpoint at {entry['name']}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return header["config"], arrays
