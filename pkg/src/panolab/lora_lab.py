"""Low-rank adapter theory on toy dense networks.

The module makes the rank story of low-rank adaptation checkable at desk
scale: exact network Jacobians with a finite-difference cross-check, the
first-order output change induced by factored weight updates, numerical rank
of probe matrices, randomized verification of the bound
rank(dF) <= min(rank(J), r), and a coverage experiment that asks how large
the adapter rank must be before the reachable output subspace contains the
8 projection-parameter directions of the reduced camera family.

Parameter flattening is canonical everywhere: layers in order, each layer
contributing its weight entries row-major followed by its bias.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import GeometryDomainError, InvalidInputError, ReluKinkWarning
from .geometry import ImageBuffer, Projection8DoF, SceneModel, warp_perspective_to_equirect

_RELU_KINK_TOL = 1e-7

PLACEMENTS = ("full", "attention_like_only", "linear_only")
LAYER_KINDS = ("linear", "attention_like")


def _activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    raise InvalidInputError(f"unknown activation {name!r}")


def _activation_grad(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    raise InvalidInputError(f"unknown activation {name!r}")


@dataclass
class LinearNetwork:
    """Dense feed-forward net y = act(W x + b) per layer.

    ``layer_kinds`` labels each layer "linear" or "attention_like" purely so
    adapter placement policies have something to select on; the layers
    themselves are ordinary dense maps.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]
    layer_kinds: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.weights:
            raise InvalidInputError("network needs at least one layer")
        if len(self.biases) != len(self.weights) or len(self.activations) != len(self.weights):
            raise InvalidInputError("weights, biases, and activations must align")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise InvalidInputError(f"layer {i} has inconsistent shapes {w.shape}, {b.shape}")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise InvalidInputError(
                    f"layer {i} input dim {w.shape[1]} does not match previous output "
                    f"{self.weights[i - 1].shape[0]}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise InvalidInputError(f"layer {i} has non-finite parameters")
        for name in self.activations:
            if name not in ("identity", "relu", "tanh"):
                raise InvalidInputError(f"unknown activation {name!r}")
        if not self.layer_kinds:
            self.layer_kinds = ["linear"] * len(self.weights)
        if len(self.layer_kinds) != len(self.weights):
            raise InvalidInputError("layer_kinds must align with layers")
        for kind in self.layer_kinds:
            if kind not in LAYER_KINDS:
                raise InvalidInputError(f"unknown layer kind {kind!r}")

    # -- structure -----------------------------------------------------

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def layer_input_dim(self, layer: int) -> int:
        return self.weights[layer].shape[1]

    def layer_output_dim(self, layer: int) -> int:
        return self.weights[layer].shape[0]

    def weight_slice(self, layer: int) -> slice:
        """Canonical flat index range of a layer's weight entries."""
        off = 0
        for l in range(layer):
            off += self.weights[l].size + self.biases[l].size
        return slice(off, off + self.weights[layer].size)

    def bias_slice(self, layer: int) -> slice:
        ws = self.weight_slice(layer)
        return slice(ws.stop, ws.stop + self.biases[layer].size)

    def to_vector(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def with_parameters(self, theta: np.ndarray) -> "LinearNetwork":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.param_count,):
            raise InvalidInputError(
                f"parameter vector must have length {self.param_count}, got {theta.shape}"
            )
        weights, biases, off = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(theta[off : off + w.size].reshape(w.shape))
            off += w.size
            biases.append(theta[off : off + b.size])
            off += b.size
        return LinearNetwork(weights, biases, list(self.activations), list(self.layer_kinds))

    # -- evaluation ----------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.input_dim,):
            raise InvalidInputError(f"input must have shape ({self.input_dim},), got {x.shape}")
        a = x
        for w, b, act in zip(self.weights, self.biases, self.activations):
            a = _activation(act, w @ a + b)
        return a

    def forward_trace(self, x: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Returns (pre-activations per layer, activations including input)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.input_dim,):
            raise InvalidInputError(f"input must have shape ({self.input_dim},), got {x.shape}")
        pre, acts = [], [x]
        a = x
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = w @ a + b
            pre.append(z)
            a = _activation(act, z)
            acts.append(a)
        return pre, acts

    @classmethod
    def random(cls, dims: Sequence[int], activation: str = "identity", rng=None,
               layer_kinds: Sequence[str] | None = None) -> "LinearNetwork":
        """Generic random net for dims = (n_0, n_1, ..., n_L); weights scale
        like 1/sqrt(fan-in) so outputs stay O(1)."""
        if len(dims) < 2:
            raise InvalidInputError("dims must list at least input and output size")
        rng = np.random.default_rng(rng)
        weights, biases = [], []
        for n_in, n_out in zip(dims, dims[1:]):
            weights.append(rng.standard_normal((n_out, n_in)) / math.sqrt(n_in))
            biases.append(0.1 * rng.standard_normal(n_out))
        acts = [activation] * (len(dims) - 1)
        kinds = list(layer_kinds) if layer_kinds is not None else None
        return cls(weights, biases, acts, kinds or [])


# ---------------------------------------------------------------------------
# Adapters

@dataclass
class LoraModule:
    """Factored weight update for one layer: dW = alpha * up @ down."""

    target_layer: int
    up: np.ndarray    # (n_out, r)
    down: np.ndarray  # (r, n_in)
    alpha: float = 1.0

    def __post_init__(self):
        self.up = np.asarray(self.up, dtype=np.float64)
        self.down = np.asarray(self.down, dtype=np.float64)
        if self.up.ndim != 2 or self.down.ndim != 2:
            raise InvalidInputError("lora factors must be matrices")
        if self.up.shape[1] != self.down.shape[0]:
            raise InvalidInputError(
                f"factor ranks disagree: up {self.up.shape}, down {self.down.shape}"
            )
        if self.up.shape[1] < 1:
            raise InvalidInputError("lora rank must be >= 1")
        if not (np.all(np.isfinite(self.up)) and np.all(np.isfinite(self.down))
                and math.isfinite(self.alpha)):
            raise InvalidInputError("lora factors must be finite")

    @property
    def rank(self) -> int:
        return self.up.shape[1]

    def delta_weight(self) -> np.ndarray:
        """The applied update alpha * up @ down; rank is at most r by
        construction."""
        return self.alpha * (self.up @ self.down)

    @classmethod
    def random(cls, net: LinearNetwork, layer: int, rank: int, rng=None,
               alpha: float = 1.0) -> "LoraModule":
        if not 0 <= layer < net.depth:
            raise InvalidInputError(f"layer {layer} out of range for depth {net.depth}")
        rng = np.random.default_rng(rng)
        n_out, n_in = net.layer_output_dim(layer), net.layer_input_dim(layer)
        return cls(layer, rng.standard_normal((n_out, rank)),
                   rng.standard_normal((rank, n_in)), alpha)


def lora_forward(h: np.ndarray, lora: LoraModule, base_output: np.ndarray) -> np.ndarray:
    """Adapter application: base_output + alpha * up @ (down @ h)."""
    h = np.asarray(h, dtype=np.float64)
    base = np.asarray(base_output, dtype=np.float64)
    if h.shape != (lora.down.shape[1],):
        raise InvalidInputError(
            f"hidden input must have shape ({lora.down.shape[1]},), got {h.shape}"
        )
    if base.shape != (lora.up.shape[0],):
        raise InvalidInputError(
            f"base output must have shape ({lora.up.shape[0]},), got {base.shape}"
        )
    return base + lora.alpha * (lora.up @ (lora.down @ h))


def placement_layers(net: LinearNetwork, placement: str) -> list[int]:
    """Layers an adapter placement policy selects."""
    if placement not in PLACEMENTS:
        raise InvalidInputError(f"unknown placement {placement!r}, expected one of {PLACEMENTS}")
    if placement == "full":
        layers = list(range(net.depth))
    elif placement == "attention_like_only":
        layers = [i for i, k in enumerate(net.layer_kinds) if k == "attention_like"]
    else:
        layers = [i for i, k in enumerate(net.layer_kinds) if k == "linear"]
    if not layers:
        raise InvalidInputError(f"placement {placement!r} selects no layers")
    return layers


def lora_param_direction(net: LinearNetwork, loras: Sequence[LoraModule]) -> np.ndarray:
    """Flatten a set of adapters into a canonical parameter-space vector.

    Weight blocks receive vec(alpha * up @ down) row-major; bias blocks stay
    zero. Each adapter must target a distinct layer.
    """
    theta = np.zeros(net.param_count)
    seen = set()
    for lora in loras:
        layer = lora.target_layer
        if not 0 <= layer < net.depth:
            raise InvalidInputError(f"lora targets layer {layer}, net depth is {net.depth}")
        if layer in seen:
            raise InvalidInputError(f"multiple adapters target layer {layer}")
        seen.add(layer)
        expected = (net.layer_output_dim(layer), net.layer_input_dim(layer))
        delta = lora.delta_weight()
        if delta.shape != expected:
            raise InvalidInputError(
                f"adapter on layer {layer} produces {delta.shape}, expected {expected}"
            )
        theta[net.weight_slice(layer)] = delta.ravel()
    return theta


# ---------------------------------------------------------------------------
# Jacobians

def _warn_relu_kinks(net: LinearNetwork, pre: list[np.ndarray]) -> None:
    for layer, (act, z) in enumerate(zip(net.activations, pre)):
        if act == "relu" and np.any(np.abs(z) < _RELU_KINK_TOL):
            warnings.warn(
                f"relu pre-activation within {_RELU_KINK_TOL:g} of the kink at layer "
                f"{layer}; Jacobian is one-sided there",
                ReluKinkWarning,
                stacklevel=3,
            )


def network_jacobian(net: LinearNetwork, x: np.ndarray, method: str = "analytic") -> np.ndarray:
    """d output / d parameters, shape (output_dim, param_count).

    The analytic path backpropagates exact layer sensitivities; the ``fd``
    path uses central differences with per-coordinate step
    1e-5 * max(1, |theta_i|) and exists as an independent cross-check.
    """
    if method == "fd":
        return _fd_jacobian(net, x)
    if method != "analytic":
        raise InvalidInputError(f"unknown Jacobian method {method!r}")
    pre, acts = net.forward_trace(x)
    _warn_relu_kinks(net, pre)
    q = net.output_dim
    jac = np.empty((q, net.param_count))
    # m holds dF/dz_l while walking layers back to front.
    m = np.diag(_activation_grad(net.activations[-1], pre[-1]))
    for layer in range(net.depth - 1, -1, -1):
        jac[:, net.weight_slice(layer)] = np.kron(m, acts[layer][None, :])
        jac[:, net.bias_slice(layer)] = m
        if layer > 0:
            m = (m @ net.weights[layer]) * _activation_grad(
                net.activations[layer - 1], pre[layer - 1]
            )[None, :]
    return jac


def _fd_jacobian(net: LinearNetwork, x: np.ndarray) -> np.ndarray:
    pre, _ = net.forward_trace(x)
    _warn_relu_kinks(net, pre)
    theta = net.to_vector()
    jac = np.empty((net.output_dim, theta.size))
    for i in range(theta.size):
        step = 1e-5 * max(1.0, abs(theta[i]))
        plus = theta.copy()
        plus[i] += step
        minus = theta.copy()
        minus[i] -= step
        jac[:, i] = (
            net.with_parameters(plus).forward(x) - net.with_parameters(minus).forward(x)
        ) / (2.0 * step)
    return jac


def first_order_delta(net: LinearNetwork, loras: Sequence[LoraModule], x: np.ndarray) -> np.ndarray:
    """First-order output change J(theta) @ delta_theta for a set of adapters."""
    return network_jacobian(net, x) @ lora_param_direction(net, loras)


# ---------------------------------------------------------------------------
# Probe directions and the reachable-output matrix

def random_lora_directions(net: LinearNetwork, rank: int, placement: str, count: int,
                           rng=None, alpha: float = 1.0) -> list[list[LoraModule]]:
    """``count`` independent random factor draws on every placed layer."""
    rng = np.random.default_rng(rng)
    layers = placement_layers(net, placement)
    return [
        [LoraModule.random(net, layer, rank, rng, alpha) for layer in layers]
        for _ in range(count)
    ]


def tangent_lora_directions(net: LinearNetwork, rank: int, placement: str,
                            rng=None, alpha: float = 1.0) -> list[list[LoraModule]]:
    """Tangent basis of the factored family at a random base point.

    For each placed layer with base factors (A0, B0) this yields the
    directions A0 @ dB and dA @ B0 over elementary dB and dA, i.e.
    r * (n_in + n_out) directions per layer. Every direction is itself a
    valid rank-<=r module, touching one layer at a time.
    """
    rng = np.random.default_rng(rng)
    directions: list[list[LoraModule]] = []
    for layer in placement_layers(net, placement):
        n_out, n_in = net.layer_output_dim(layer), net.layer_input_dim(layer)
        a0 = rng.standard_normal((n_out, rank))
        b0 = rng.standard_normal((rank, n_in))
        for a in range(rank):
            for j in range(n_in):
                db = np.zeros((rank, n_in))
                db[a, j] = 1.0
                directions.append([LoraModule(layer, a0, db, alpha)])
        for i in range(n_out):
            for a in range(rank):
                da = np.zeros((n_out, rank))
                da[i, a] = 1.0
                directions.append([LoraModule(layer, da, b0, alpha)])
    return directions


def delta_output_matrix(net: LinearNetwork, rank: int, placement: str,
                        inputs: Sequence[np.ndarray],
                        directions: Sequence[Sequence[LoraModule]]) -> np.ndarray:
    """Stack first-order output deltas: one column per (input, direction).

    Columns are grouped in input-major blocks, so duplicating an input
    duplicates a column block and leaves the rank unchanged. The column
    space estimates the first-order reachable output set for the given
    placement.
    """
    if len(inputs) < 1:
        raise InvalidInputError("delta_output_matrix needs at least one input")
    placed = set(placement_layers(net, placement))
    for k, direction in enumerate(directions):
        for lora in direction:
            if lora.target_layer not in placed:
                raise InvalidInputError(
                    f"direction {k} targets layer {lora.target_layer}, outside placement "
                    f"{placement!r}"
                )
            if lora.rank > rank:
                raise InvalidInputError(
                    f"direction {k} has rank {lora.rank}, above the declared {rank}"
                )
    columns = []
    for x in inputs:
        jac = network_jacobian(net, x)
        for direction in directions:
            columns.append(jac @ lora_param_direction(net, direction))
    if not columns:
        return np.zeros((net.output_dim, 0))
    return np.stack(columns, axis=1)


# ---------------------------------------------------------------------------
# Numerical rank

@dataclass
class RankReport:
    """Singular spectrum with the tolerance-based rank decision."""

    singular_values: np.ndarray
    numerical_rank: int
    rel_tolerance: float
    bound: int | None = None
    satisfied: bool | None = None

    def to_dict(self) -> dict:
        return {
            "numerical_rank": self.numerical_rank,
            "rel_tolerance": self.rel_tolerance,
            "bound": self.bound,
            "satisfied": self.satisfied,
            "singular_values": [float(s) for s in self.singular_values],
        }


def numerical_rank(matrix: np.ndarray, rel_tol: float = 1e-8,
                   bound: int | None = None) -> RankReport:
    """Count singular values at or above rel_tol times the largest.

    A zero (or zero-width) matrix has rank 0. When ``bound`` is given the
    report records whether the measured rank satisfies it.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidInputError(f"rank needs a matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("matrix contains non-finite entries")
    if not 0.0 < rel_tol < 1.0:
        raise InvalidInputError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    if min(m.shape) == 0:
        sv = np.zeros(0)
    else:
        sv = np.linalg.svd(m, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        rank = 0
    else:
        rank = int(np.count_nonzero(sv >= rel_tol * sv[0]))
    satisfied = None if bound is None else bool(rank <= bound)
    return RankReport(sv, rank, rel_tol, bound, satisfied)


# ---------------------------------------------------------------------------
# Randomized verification of rank(dF) <= min(rank(J), r)

def rank_bound_trial(jacobian: np.ndarray, rank: int, rng,
                     rel_tol: float = 1e-8,
                     probe_columns: int | None = None) -> tuple[RankReport, float]:
    """One draw of the theorem check on a given Jacobian.

    The parameter perturbation enters in its factored form: a stack of
    probe_columns parameter vectors A @ B with A of shape (p, r), so the
    stack has rank at most r by construction. Returns the rank report of
    J @ A @ B against bound min(rank(J), r) plus the violation margin
    sigma_{bound+1} / sigma_1 (0 when the spectrum ends at the bound).
    """
    jac = np.asarray(jacobian, dtype=np.float64)
    if rank < 1:
        raise InvalidInputError(f"rank must be >= 1, got {rank}")
    s = probe_columns if probe_columns is not None else rank + 8
    if s < rank:
        raise InvalidInputError("probe_columns must be at least the rank")
    p = jac.shape[1]
    a = rng.standard_normal((p, rank))
    b = rng.standard_normal((rank, s))
    delta = (jac @ a) @ b
    rank_j = numerical_rank(jac, rel_tol).numerical_rank
    bound = min(rank_j, rank)
    report = numerical_rank(delta, rel_tol, bound=bound)
    sv = report.singular_values
    margin = 0.0
    if sv.size > bound and sv[0] > 0.0:
        margin = float(sv[bound] / sv[0])
    return report, margin


@dataclass
class RankBoundSummary:
    dims: tuple[int, ...]
    activation: str
    rank: int
    trials: int
    rel_tolerance: float
    violations: list[int]
    worst_margin: float
    worst_trial: int
    passed: bool

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "activation": self.activation,
            "rank": self.rank,
            "trials": self.trials,
            "rel_tolerance": self.rel_tolerance,
            "violations": list(self.violations),
            "worst_margin": self.worst_margin,
            "worst_trial": self.worst_trial,
            "passed": self.passed,
        }


def verify_rank_bound(dims: Sequence[int], rank: int, trials: int,
                      activation: str = "identity", rel_tol: float = 1e-8,
                      probe_columns: int | None = None, seed=0) -> RankBoundSummary:
    """Randomized trials of the rank bound on fresh nets.

    Each trial draws a new random network of the given architecture, a random
    evaluation point, and random rank-r perturbation factors, then checks
    rank(J @ A @ B) <= min(rank(J), r) at ``rel_tol``. The summary lists any
    violating trial indices and the worst margin observed.
    """
    if trials < 1:
        raise InvalidInputError(f"trials must be >= 1, got {trials}")
    key = tuple(seed) if isinstance(seed, (tuple, list)) else (seed,)
    violations: list[int] = []
    worst_margin = -1.0
    worst_trial = 0
    for t in range(trials):
        rng = np.random.default_rng((*key, t))
        net = LinearNetwork.random(dims, activation, rng)
        x = rng.standard_normal(net.input_dim)
        jac = network_jacobian(net, x)
        report, margin = rank_bound_trial(jac, rank, rng, rel_tol, probe_columns)
        if not report.satisfied:
            violations.append(t)
        if margin > worst_margin:
            worst_margin = margin
            worst_trial = t
    return RankBoundSummary(
        dims=tuple(int(d) for d in dims),
        activation=activation,
        rank=rank,
        trials=trials,
        rel_tolerance=rel_tol,
        violations=violations,
        worst_margin=float(max(worst_margin, 0.0)),
        worst_trial=worst_trial,
        passed=not violations,
    )


DEFAULT_RANK_CONFIG = {
    "architectures": [[64, 32], [64, 64, 64, 32]],
    "activations": ["identity", "tanh"],
    "ranks": [1, 2, 4, 8, 16],
    "trials": 1000,
    "rel_tol": 1e-8,
    "probe_columns": None,
    "seed": 0,
}


def run_rank_experiment(config: dict | None = None) -> dict:
    """Spread a trial budget over architecture x activation x rank combos.

    Returns a deterministic report dict; ``passed`` is true only with zero
    violations anywhere.
    """
    cfg = dict(DEFAULT_RANK_CONFIG)
    if config:
        unknown = set(config) - set(cfg)
        if unknown:
            raise InvalidInputError(f"unknown rank experiment keys: {sorted(unknown)}")
        cfg.update(config)
    combos = [
        (arch, act, rank)
        for arch in cfg["architectures"]
        for act in cfg["activations"]
        for rank in cfg["ranks"]
    ]
    total = int(cfg["trials"])
    if total < len(combos):
        raise InvalidInputError(
            f"trial budget {total} is below the {len(combos)} combinations"
        )
    base, extra = divmod(total, len(combos))
    summaries = []
    worst_margin = 0.0
    violation_count = 0
    for index, (arch, act, rank) in enumerate(combos):
        per = base + (1 if index < extra else 0)
        summary = verify_rank_bound(
            arch, rank, per, activation=act, rel_tol=cfg["rel_tol"],
            probe_columns=cfg["probe_columns"], seed=(cfg["seed"], index),
        )
        summaries.append(summary)
        worst_margin = max(worst_margin, summary.worst_margin)
        violation_count += len(summary.violations)
    return {
        "trials": total,
        "rel_tol": cfg["rel_tol"],
        "seed": cfg["seed"],
        "violations": violation_count,
        "worst_margin": worst_margin,
        "passed": violation_count == 0,
        "combos": [s.to_dict() for s in summaries],
    }


# ---------------------------------------------------------------------------
# Projection target family

PROJECTION_PARAMS = ("fx", "fy", "cx", "cy", "skew", "tx", "ty", "yaw_deg")

# Steps keep the finite-difference stencil inside one interpolation cell of
# the source, where the sampled warp is locally linear in each parameter.
DEFAULT_TARGET_STEPS = {
    "fx": 1e-6,
    "fy": 1e-6,
    "cx": 1e-6,
    "cy": 1e-6,
    "skew": 1e-6,
    "tx": 1e-8,
    "ty": 1e-8,
    "yaw_deg": 1e-6,
}


@dataclass
class TargetFamily:
    """Central-difference warp responses to the 8 projection parameters.

    ``directions`` holds one flattened output-delta column per parameter, in
    PROJECTION_PARAMS order, zeroed outside ``mask`` (the pixels covered by
    every perturbed warp, so coverage flips never pollute the differences).
    """

    directions: np.ndarray
    mask: np.ndarray
    base: Projection8DoF
    steps: dict[str, float]
    out_width: int
    out_height: int
    channels: int

    @property
    def count(self) -> int:
        return self.directions.shape[1]


def projection_target_family(base: Projection8DoF, src: ImageBuffer,
                             out_width: int, out_height: int,
                             scene: SceneModel = SceneModel(),
                             steps: dict[str, float] | None = None,
                             mask: np.ndarray | None = None) -> TargetFamily:
    """Probe the warp around ``base`` with central differences per parameter."""
    resolved = dict(DEFAULT_TARGET_STEPS)
    if steps:
        unknown = set(steps) - set(PROJECTION_PARAMS)
        if unknown:
            raise InvalidInputError(f"unknown projection parameters: {sorted(unknown)}")
        resolved.update(steps)
    for name, step in resolved.items():
        if not (math.isfinite(step) and step > 0):
            raise InvalidInputError(f"step for {name} must be positive, got {step}")

    def run(params: Projection8DoF):
        frame, cov = warp_perspective_to_equirect(src, params, out_width, out_height, scene)
        return frame.data, cov.data[..., 0] > 0.5

    base_data, common = run(base)
    pairs = []
    for name in PROJECTION_PARAMS:
        step = resolved[name]
        try:
            plus, mask_p = run(replace(base, **{name: getattr(base, name) + step}))
            minus, mask_m = run(replace(base, **{name: getattr(base, name) - step}))
        except (InvalidInputError, GeometryDomainError) as err:
            raise GeometryDomainError(
                f"perturbing {name} by {step:g} leaves the valid projection domain: {err}"
            ) from None
        common &= mask_p & mask_m
        pairs.append((plus, minus, 2.0 * step))
    if mask is not None:
        extra = np.asarray(mask, dtype=bool)
        if extra.shape != common.shape:
            raise InvalidInputError(
                f"mask shape {extra.shape} does not match output {common.shape}"
            )
        common &= extra

    columns = []
    for plus, minus, denom in pairs:
        diff = (plus - minus) / denom
        diff = diff * common[..., None]
        columns.append(diff.ravel())
    return TargetFamily(
        directions=np.stack(columns, axis=1),
        mask=common,
        base=base,
        steps=resolved,
        out_width=out_width,
        out_height=out_height,
        channels=base_data.shape[2],
    )


# ---------------------------------------------------------------------------
# DoF coverage experiment

@dataclass
class CoverageReport:
    """How much of a target direction family a rank-r adapter can reach.

    ``fit_residual`` is the worst relative least-squares residual over the
    targets after projecting onto the best reachable subspace of dimension
    <= r; ``unconstrained_residuals`` show the same fit without the rank cap
    (they isolate plain reachability through the Jacobian).
    """

    target_dimension: int
    lora_rank: int
    placement: str
    fit_residual: float
    per_target_residuals: list[float]
    unconstrained_residuals: list[float]
    principal_angles_rad: list[float]
    sampled_span_rank: int
    tangent_span_rank: int
    rel_tolerance: float
    seed: int
    net_dims: list[int]
    n_inputs: int

    def to_dict(self) -> dict:
        return {
            "target_dimension": self.target_dimension,
            "lora_rank": self.lora_rank,
            "placement": self.placement,
            "fit_residual": self.fit_residual,
            "per_target_residuals": self.per_target_residuals,
            "unconstrained_residuals": self.unconstrained_residuals,
            "principal_angles_rad": self.principal_angles_rad,
            "sampled_span_rank": self.sampled_span_rank,
            "tangent_span_rank": self.tangent_span_rank,
            "rel_tolerance": self.rel_tolerance,
            "seed": self.seed,
            "net_dims": self.net_dims,
            "n_inputs": self.n_inputs,
        }


def dof_coverage_experiment(targets, net: LinearNetwork, rank: int,
                            placement: str = "full", inputs=1,
                            rel_tol: float = 1e-6, seed: int = 0) -> CoverageReport:
    """Ask whether a rank-r adapter family can cover the target directions.

    The targets (a TargetFamily or a (D, d) column matrix) are compressed by
    a seeded random projection into the network's stacked output space, then
    fitted through the weight columns of the placed layers: the best
    adapter-reachable subspace of dimension <= r is built from the
    least-squares preimages of the targets, and each target's relative
    residual against that subspace is reported, along with principal angles
    (padded with pi/2 for dimensions a small rank simply cannot supply).
    The sampled and tangent span ranks of randomized factor probes are
    attached for context.
    """
    if rank < 1:
        raise InvalidInputError(f"rank must be >= 1, got {rank}")
    t = targets.directions if isinstance(targets, TargetFamily) else np.asarray(targets, dtype=np.float64)
    if t.ndim != 2:
        raise InvalidInputError(f"targets must form a (D, d) matrix, got shape {t.shape}")
    d = t.shape[1]
    rng = np.random.default_rng(seed)
    if isinstance(inputs, int):
        xs = [rng.standard_normal(net.input_dim) for _ in range(inputs)]
    else:
        xs = [np.asarray(x, dtype=np.float64) for x in inputs]
    if not xs:
        raise InvalidInputError("coverage experiment needs at least one input")

    if d == 0:
        return CoverageReport(
            target_dimension=0, lora_rank=rank, placement=placement,
            fit_residual=0.0, per_target_residuals=[], unconstrained_residuals=[],
            principal_angles_rad=[], sampled_span_rank=0, tangent_span_rank=0,
            rel_tolerance=rel_tol, seed=seed, net_dims=_net_dims(net), n_inputs=len(xs),
        )

    norms = np.linalg.norm(t, axis=0)
    if np.any(norms == 0):
        raise InvalidInputError("target directions must be nonzero")
    t = t / norms
    if numerical_rank(t, rel_tol).numerical_rank != d:
        raise InvalidInputError(
            f"target directions are not linearly independent at rel_tol {rel_tol:g}"
        )

    q_total = net.output_dim * len(xs)
    if q_total < d:
        raise InvalidInputError(
            f"stacked output dimension {q_total} cannot hold {d} independent targets"
        )
    if t.shape[0] == q_total:
        compressed = t
    else:
        projector = rng.standard_normal((q_total, t.shape[0])) / math.sqrt(t.shape[0])
        compressed = projector @ t
        compressed /= np.linalg.norm(compressed, axis=0)
        if numerical_rank(compressed, rel_tol).numerical_rank != d:
            raise InvalidInputError(
                "targets lost independence under compression; retry with another seed"
            )

    jac = np.vstack([network_jacobian(net, x) for x in xs])
    cols = np.concatenate(
        [np.arange(net.weight_slice(l).start, net.weight_slice(l).stop)
         for l in placement_layers(net, placement)]
    )
    jac_w = jac[:, cols]
    theta_hat, *_ = np.linalg.lstsq(jac_w, compressed, rcond=None)
    reached = jac_w @ theta_hat
    unconstrained = [float(np.linalg.norm(compressed[:, k] - reached[:, k]))
                     for k in range(d)]

    u, sv, _ = np.linalg.svd(reached, full_matrices=False)
    keep = int(np.count_nonzero(sv > (sv[0] * 1e-12 if sv.size and sv[0] > 0 else 0)))
    subspace = u[:, : min(rank, keep)]
    residual_matrix = compressed - subspace @ (subspace.T @ compressed)
    residuals = [float(np.linalg.norm(residual_matrix[:, k])) for k in range(d)]

    if subspace.shape[1] == 0:
        angles = [math.pi / 2.0] * d
    else:
        angles = sorted(float(a) for a in scipy.linalg.subspace_angles(compressed, subspace))
        angles += [math.pi / 2.0] * (d - len(angles))

    probe_rng = np.random.default_rng((seed, 1))
    sampled = delta_output_matrix(
        net, rank, placement, xs[:1],
        random_lora_directions(net, rank, placement, 50 * rank, probe_rng),
    )
    tangent = delta_output_matrix(
        net, rank, placement, xs[:1],
        tangent_lora_directions(net, rank, placement, probe_rng),
    )
    return CoverageReport(
        target_dimension=d,
        lora_rank=rank,
        placement=placement,
        fit_residual=float(max(residuals)),
        per_target_residuals=residuals,
        unconstrained_residuals=unconstrained,
        principal_angles_rad=angles,
        sampled_span_rank=numerical_rank(sampled, rel_tol).numerical_rank,
        tangent_span_rank=numerical_rank(tangent, rel_tol).numerical_rank,
        rel_tolerance=rel_tol,
        seed=seed,
        net_dims=_net_dims(net),
        n_inputs=len(xs),
    )


def _net_dims(net: LinearNetwork) -> list[int]:
    return [net.input_dim] + [net.layer_output_dim(l) for l in range(net.depth)]


DEFAULT_COVERAGE_CONFIG = {
    "ranks": [16],
    "net": {"dims": [64, 32], "activation": "identity", "seed": 1},
    "placement": "full",
    "inputs": 1,
    "seed": 0,
    "rel_tol": 1e-6,
    "residual_threshold": 1e-6,
    "targets": {
        "source_size": 256,
        "out_width": 128,
        "out_height": 64,
        "texture_seed": 5,
        "texture_cycles": 4,
        "scene_radius": 1.0,
    },
}


def run_coverage_experiment(config: dict | None = None) -> dict:
    """Build the 8-direction projection family and fit it at each rank.

    ``passed`` is true only when every configured rank achieves a fit
    residual below the threshold.
    """
    from .synthetic import smooth_texture  # local import to avoid a cycle

    cfg = {k: (dict(v) if isinstance(v, dict) else v)
           for k, v in DEFAULT_COVERAGE_CONFIG.items()}
    if config:
        unknown = set(config) - set(cfg) - {"rank"}
        if unknown:
            raise InvalidInputError(f"unknown coverage experiment keys: {sorted(unknown)}")
        for key, value in config.items():
            if key == "rank":
                cfg["ranks"] = [int(value)]
            elif isinstance(value, dict):
                sub = dict(cfg[key])
                bad = set(value) - set(sub)
                if bad:
                    raise InvalidInputError(f"unknown {key} keys: {sorted(bad)}")
                sub.update(value)
                cfg[key] = sub
            else:
                cfg[key] = value

    tcfg = cfg["targets"]
    size = int(tcfg["source_size"])
    src = smooth_texture(size, size, seed=int(tcfg["texture_seed"]),
                         max_cycles=int(tcfg["texture_cycles"]))
    base = Projection8DoF(fx=size / 2.0, fy=size / 2.0, cx=size / 2.0,
                          cy=size / 2.0, skew=0.0, tx=0.0, ty=0.0, yaw_deg=0.0)
    family = projection_target_family(
        base, src, int(tcfg["out_width"]), int(tcfg["out_height"]),
        SceneModel(float(tcfg["scene_radius"])),
    )
    family_rank = numerical_rank(
        family.directions / np.linalg.norm(family.directions, axis=0), cfg["rel_tol"]
    ).numerical_rank

    ncfg = cfg["net"]
    net = LinearNetwork.random(ncfg["dims"], ncfg.get("activation", "identity"),
                               np.random.default_rng(ncfg.get("seed", 1)))
    ranks = [int(r) for r in cfg["ranks"]]
    reports = [
        dof_coverage_experiment(family, net, rank, cfg["placement"], cfg["inputs"],
                                cfg["rel_tol"], cfg["seed"])
        for rank in ranks
    ]
    threshold = float(cfg["residual_threshold"])
    return {
        "ranks": ranks,
        "residual_threshold": threshold,
        "family_rank": family_rank,
        "family_dimension": family.count,
        "net_dims": list(ncfg["dims"]),
        "placement": cfg["placement"],
        "seed": cfg["seed"],
        "passed": all(r.fit_residual < threshold for r in reports),
        "per_rank": [r.to_dict() for r in reports],
    }
