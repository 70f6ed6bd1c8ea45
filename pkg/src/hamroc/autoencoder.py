"""Dense autoencoder with hand-written reverse-mode differentiation.

The encoder compresses a configuration q in R^n to a latent vector in R^m;
the decoder maps back. Training minimizes the reconstruction loss
||q - decode(encode(q))||^2 (per-sample sum of squares, averaged over the
batch) plus an L2 penalty on the weights, with Adam and a stepwise
learning-rate decay.

Besides plain forward passes, the model exposes the analytic derivatives
the reduced dynamics need: encoder/decoder Jacobians and the directional
derivative of the decoder Jacobian (a second derivative, computed
forward-over-reverse so no finite differences enter the dynamics loop).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from . import serialize
from .errors import DimensionMismatch, InvalidConfig, NonFiniteLoss

ACTIVATIONS = ("elu", "linear")


def elu(x):
    """x for x > 0, exp(x) - 1 otherwise; C1 at 0 with slope 1."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_prime(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


def elu_second(x):
    """Second derivative: exp(x) on the negative branch, 0 on the positive."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, 0.0, np.exp(np.minimum(x, 0.0)))


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "elu"

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise InvalidConfig("layer dimensions must be positive")
        if self.activation not in ACTIVATIONS:
            raise InvalidConfig(f"unknown activation {self.activation!r}")


@dataclass
class Layer:
    weights: np.ndarray  # (out_dim, in_dim)
    biases: np.ndarray   # (out_dim,)
    spec: LayerSpec

    def __post_init__(self):
        if self.weights.shape != (self.spec.out_dim, self.spec.in_dim):
            raise DimensionMismatch("weight shape does not match layer spec")
        if self.biases.shape != (self.spec.out_dim,):
            raise DimensionMismatch("bias shape does not match layer spec")


@dataclass
class MlpAutoencoder:
    encoder_layers: list[Layer]
    decoder_layers: list[Layer]
    latent_dim: int

    def __post_init__(self):
        for chain in (self.encoder_layers, self.decoder_layers):
            for a, b in zip(chain, chain[1:]):
                if a.spec.out_dim != b.spec.in_dim:
                    raise DimensionMismatch("layer chain dims inconsistent")
        if self.encoder_layers[-1].spec.out_dim != self.latent_dim:
            raise DimensionMismatch("encoder output dim must equal latent_dim")
        if self.decoder_layers[0].spec.in_dim != self.latent_dim:
            raise DimensionMismatch("decoder input dim must equal latent_dim")
        if self.encoder_layers[0].spec.in_dim != self.decoder_layers[-1].spec.out_dim:
            raise DimensionMismatch("encoder input dim must equal decoder output dim")

    @property
    def input_dim(self) -> int:
        return self.encoder_layers[0].spec.in_dim

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.encoder_layers + self.decoder_layers:
            out.extend((layer.weights, layer.biases))
        return out


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-6
    lr_gamma: float = 0.5
    lr_step: int = 100
    epochs: int = 500
    batch_size: int = 64
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidConfig("lr must be positive")
        if not 0.0 < self.lr_gamma <= 1.0:
            raise InvalidConfig("lr_gamma must be in (0, 1]")
        if self.lr_step < 1 or self.epochs < 1 or self.batch_size < 1:
            raise InvalidConfig("lr_step, epochs and batch_size must be >= 1")

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "lr_gamma": self.lr_gamma,
            "lr_step": self.lr_step,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
        }


# Hyperparameter grid searched during model selection (flat autoencoder).
GRID_LR = (1e-3, 5e-4, 1e-4)
GRID_WEIGHT_DECAY = (1e-5, 1e-6, 1e-7)
GRID_GAMMA = (0.3, 0.5)
GRID_STEP = (100, 200)


def default_hidden_widths(n: int) -> tuple[int, int, int]:
    """Encoder hidden widths at 3/4, 1/2, 1/4 of the input dimension."""
    return (max(1, round(0.75 * n)), max(1, round(0.5 * n)), max(1, round(0.25 * n)))


def init_autoencoder(
    n: int,
    latent_dim: int,
    hidden: tuple[int, ...] | None = None,
    seed: int = 0,
    output_bias: np.ndarray | None = None,
) -> MlpAutoencoder:
    """Fresh autoencoder with Glorot-uniform weights and zero biases.

    hidden lists the encoder hidden widths (mirrored in the decoder); the
    last layer of both chains is linear, everything before is ELU. When
    output_bias is given (typically the rest configuration or the data
    mean), the decoder's final bias starts there so untrained decodes land
    near meaningful configurations.
    """
    if hidden is None:
        # hidden widths below the latent size would bottleneck the decoder
        # Jacobian rank under m and make the latent inertia singular
        hidden = tuple(max(w, latent_dim) for w in default_hidden_widths(n))
    rng = np.random.default_rng(seed)
    enc_dims = [n, *hidden, latent_dim]
    dec_dims = [latent_dim, *reversed(hidden), n]

    def build(dims: list[int]) -> list[Layer]:
        layers = []
        for li, (din, dout) in enumerate(zip(dims, dims[1:])):
            act = "linear" if li == len(dims) - 2 else "elu"
            bound = np.sqrt(6.0 / (din + dout))
            layers.append(
                Layer(
                    weights=rng.uniform(-bound, bound, size=(dout, din)),
                    biases=np.zeros(dout),
                    spec=LayerSpec(in_dim=din, out_dim=dout, activation=act),
                )
            )
        return layers

    enc = build(enc_dims)
    dec = build(dec_dims)
    if output_bias is not None:
        bias = np.asarray(output_bias, dtype=float)
        if bias.shape != (n,):
            raise DimensionMismatch(f"output bias has shape {bias.shape}, expected ({n},)")
        dec[-1].biases[:] = bias
    return MlpAutoencoder(encoder_layers=enc, decoder_layers=dec, latent_dim=latent_dim)


def identity_autoencoder(n: int) -> MlpAutoencoder:
    """Exact identity map with m = n (single linear layers, W = I)."""
    spec = LayerSpec(in_dim=n, out_dim=n, activation="linear")
    return MlpAutoencoder(
        encoder_layers=[Layer(np.eye(n), np.zeros(n), spec)],
        decoder_layers=[Layer(np.eye(n), np.zeros(n), spec)],
        latent_dim=n,
    )


def linear_autoencoder(basis: np.ndarray) -> MlpAutoencoder:
    """Linear decoder q = W xi with encoder W^+ (PCA/Galerkin style).

    basis is (n, m) with full column rank; the encoder uses the left
    inverse so encode(decode(xi)) = xi.
    """
    w = np.asarray(basis, dtype=float)
    n, m = w.shape
    left = np.linalg.solve(w.T @ w, w.T)
    return MlpAutoencoder(
        encoder_layers=[Layer(left, np.zeros(m), LayerSpec(n, m, "linear"))],
        decoder_layers=[Layer(w.copy(), np.zeros(n), LayerSpec(m, n, "linear"))],
        latent_dim=m,
    )


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------

def _forward(layers: list[Layer], x: np.ndarray) -> np.ndarray:
    for layer in layers:
        x = x @ layer.weights.T + layer.biases
        if layer.spec.activation == "elu":
            x = elu(x)
    return x


def _check_input(x, dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise DimensionMismatch(f"input has shape {x.shape}, expected (*, {dim})")
    return x, single


def encode(ae: MlpAutoencoder, q: np.ndarray) -> np.ndarray:
    x, single = _check_input(q, ae.input_dim)
    out = _forward(ae.encoder_layers, x)
    return out[0] if single else out


def decode(ae: MlpAutoencoder, xi: np.ndarray) -> np.ndarray:
    x, single = _check_input(xi, ae.latent_dim)
    out = _forward(ae.decoder_layers, x)
    return out[0] if single else out


def reconstruct(ae: MlpAutoencoder, q: np.ndarray) -> np.ndarray:
    return decode(ae, encode(ae, q))


def reconstruction_loss(ae: MlpAutoencoder, q: np.ndarray) -> float:
    """||q - decode(encode(q))||^2 for one configuration."""
    q = np.asarray(q, dtype=float)
    r = reconstruct(ae, q)
    return float(np.sum((q - r) ** 2))


def dataset_mse(ae: MlpAutoencoder, qs: np.ndarray) -> float:
    """Mean over samples of the per-sample sum-of-squares loss."""
    qs = np.asarray(qs, dtype=float)
    r = reconstruct(ae, qs)
    return float(np.mean(np.sum((qs - r) ** 2, axis=1)))


# ---------------------------------------------------------------------------
# Reverse-mode gradients
# ---------------------------------------------------------------------------

def loss_gradient(
    ae: MlpAutoencoder, batch: np.ndarray, weight_decay: float = 0.0
) -> list[np.ndarray]:
    """Gradients of mean batch loss + weight_decay * sum(W^2).

    Returns one array per parameter, in the order of ae.parameters().
    """
    batch, _ = _check_input(np.atleast_2d(batch), ae.input_dim)
    b = batch.shape[0]
    if b == 0:
        raise DimensionMismatch("batch must be non-empty")
    layers = ae.encoder_layers + ae.decoder_layers

    # Forward, remembering inputs and pre-activations per layer.
    inputs, preacts = [], []
    x = batch
    for layer in layers:
        inputs.append(x)
        z = x @ layer.weights.T + layer.biases
        preacts.append(z)
        x = elu(z) if layer.spec.activation == "elu" else z

    # Reverse: d(mean loss)/d(output) then back through the chain.
    delta = 2.0 * (x - batch) / b
    grads: list[np.ndarray] = [None] * (2 * len(layers))
    for li in range(len(layers) - 1, -1, -1):
        layer = layers[li]
        if layer.spec.activation == "elu":
            delta = delta * elu_prime(preacts[li])
        dw = delta.T @ inputs[li]
        if weight_decay:
            dw += 2.0 * weight_decay * layer.weights
        grads[2 * li] = dw
        grads[2 * li + 1] = delta.sum(axis=0)
        if li > 0:
            delta = delta @ layer.weights
    return grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
    cfg: TrainConfig,
) -> AdamState:
    """One Adam update with bias correction; parameters updated in place."""
    state.t += 1
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Stepwise decay: the rate is multiplied by gamma after every lr_step epochs."""
    if epoch < 1:
        raise InvalidConfig("epochs are 1-based")
    return cfg.lr * cfg.lr_gamma ** ((epoch - 1) // cfg.lr_step)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    ae: MlpAutoencoder
    train_mse: list[float] = field(default_factory=list)
    valid_mse: list[float] = field(default_factory=list)

    def history(self) -> dict:
        out = {"train_mse": self.train_mse}
        if self.valid_mse:
            out["valid_mse"] = self.valid_mse
        return out


def train(
    ae: MlpAutoencoder,
    train_set: np.ndarray,
    cfg: TrainConfig,
    valid_set: np.ndarray | None = None,
) -> TrainResult:
    """Mini-batch training; reshuffles per epoch from cfg.seed.

    Mutates ae in place and logs the reconstruction MSE of the full train
    (and validation) set after each epoch.
    """
    train_set = np.asarray(train_set, dtype=float)
    if train_set.ndim != 2 or train_set.shape[0] == 0:
        raise DimensionMismatch("train set must be a non-empty (S, n) array")
    rng = np.random.default_rng(cfg.seed)
    params = ae.parameters()
    state = AdamState.for_params(params)
    result = TrainResult(ae=ae)

    for epoch in range(1, cfg.epochs + 1):
        lr = lr_at_epoch(cfg, epoch)
        perm = rng.permutation(train_set.shape[0])
        for start in range(0, len(perm), cfg.batch_size):
            batch = train_set[perm[start : start + cfg.batch_size]]
            grads = loss_gradient(ae, batch, cfg.weight_decay)
            state = adam_step(params, grads, state, lr, cfg)
        epoch_mse = dataset_mse(ae, train_set)
        if not np.isfinite(epoch_mse):
            raise NonFiniteLoss(f"training diverged at epoch {epoch} (lr={lr:g})")
        result.train_mse.append(epoch_mse)
        if valid_set is not None and len(valid_set):
            result.valid_mse.append(dataset_mse(ae, valid_set))
    return result


def grid_search(
    n: int,
    latent_dim: int,
    train_set: np.ndarray,
    valid_set: np.ndarray,
    base: TrainConfig = TrainConfig(),
    hidden: tuple[int, ...] | None = None,
    output_bias: np.ndarray | None = None,
) -> tuple[TrainResult, TrainConfig, list[dict]]:
    """Train over the full hyperparameter grid; keep the lowest validation MSE."""
    best: tuple[TrainResult, TrainConfig] | None = None
    best_score = np.inf
    table = []
    for lr, wd, gamma, step in itertools.product(
        GRID_LR, GRID_WEIGHT_DECAY, GRID_GAMMA, GRID_STEP
    ):
        cfg = replace(base, lr=lr, weight_decay=wd, lr_gamma=gamma, lr_step=step)
        ae = init_autoencoder(
            n, latent_dim, hidden=hidden, seed=cfg.seed, output_bias=output_bias
        )
        result = train(ae, train_set, cfg, valid_set)
        score = result.valid_mse[-1] if result.valid_mse else result.train_mse[-1]
        table.append(
            {
                "lr": lr,
                "weight_decay": wd,
                "lr_gamma": gamma,
                "lr_step": step,
                "train_mse": result.train_mse[-1],
                "valid_mse": score,
            }
        )
        if best is None or score < best_score:
            best, best_score = (result, cfg), score
    return best[0], best[1], table


# ---------------------------------------------------------------------------
# Analytic Jacobians and the directional second derivative
# ---------------------------------------------------------------------------

def _chain_jacobian(layers: list[Layer], x: np.ndarray) -> np.ndarray:
    """Jacobian of the layer chain at x, propagated forward."""
    jac = np.eye(layers[0].spec.in_dim)
    a = x
    for layer in layers:
        z = layer.weights @ a + layer.biases
        jac = layer.weights @ jac
        if layer.spec.activation == "elu":
            jac = elu_prime(z)[:, None] * jac
            a = elu(z)
        else:
            a = z
    return jac


def decoder_jacobian(ae: MlpAutoencoder, xi: np.ndarray) -> np.ndarray:
    """(n, m) Jacobian of the decoder at xi."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (ae.latent_dim,):
        raise DimensionMismatch(f"xi has shape {xi.shape}, expected ({ae.latent_dim},)")
    return _chain_jacobian(ae.decoder_layers, xi)


def encoder_jacobian(ae: MlpAutoencoder, q: np.ndarray) -> np.ndarray:
    """(m, n) Jacobian of the encoder at q."""
    q = np.asarray(q, dtype=float)
    if q.shape != (ae.input_dim,):
        raise DimensionMismatch(f"q has shape {q.shape}, expected ({ae.input_dim},)")
    return _chain_jacobian(ae.encoder_layers, q)


def decoder_jacobian_directional_derivative(
    ae: MlpAutoencoder, xi: np.ndarray, v: np.ndarray
) -> np.ndarray:
    """d/de of decoder_jacobian(xi + e v) at e = 0, forward-over-reverse.

    Propagates the tangent of the input alongside the Jacobian, using the
    ELU second derivative on the activation curvature term.
    """
    xi = np.asarray(xi, dtype=float)
    v = np.asarray(v, dtype=float)
    m = ae.latent_dim
    if xi.shape != (m,) or v.shape != (m,):
        raise DimensionMismatch("xi and v must have the latent dimension")
    a, da = xi, v
    jac = np.eye(m)
    djac = np.zeros((m, m))
    for layer in ae.decoder_layers:
        w = layer.weights
        z = w @ a + layer.biases
        dz = w @ da
        jz = w @ jac
        djz = w @ djac
        if layer.spec.activation == "elu":
            s1 = elu_prime(z)
            curvature = elu_second(z) * dz
            djac = curvature[:, None] * jz + s1[:, None] * djz
            jac = s1[:, None] * jz
            a, da = elu(z), s1 * dz
        else:
            jac, djac = jz, djz
            a, da = z, dz
    return djac


def decoder_bundle(
    ae: MlpAutoencoder, xi: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Decode xi returning (q, J, dJ) in a single fused pass.

    dJ has shape (n, m, m) with dJ[:, :, k] the directional derivative of
    the Jacobian along the k-th latent basis vector. The reduced dynamics
    evaluate all three at every right-hand side call, so fusing the passes
    matters.
    """
    xi = np.asarray(xi, dtype=float)
    m = ae.latent_dim
    if xi.shape != (m,):
        raise DimensionMismatch(f"xi has shape {xi.shape}, expected ({m},)")
    a = xi
    da = np.eye(m)            # tangent per direction, (dim, m)
    jac = np.eye(m)           # (dim, m)
    djac = np.zeros((m, m, m))
    for layer in ae.decoder_layers:
        w = layer.weights
        z = w @ a + layer.biases
        dz = w @ da
        jz = w @ jac
        djz = np.tensordot(w, djac, axes=1)
        if layer.spec.activation == "elu":
            s1 = elu_prime(z)
            curv = elu_second(z)
            djac = curv[:, None, None] * jz[:, :, None] * dz[:, None, :] + s1[:, None, None] * djz
            jac = s1[:, None] * jz
            a = elu(z)
            da = s1[:, None] * dz
        else:
            a, da, jac, djac = z, dz, jz, djz
    return a, jac, djac


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _layers_to_json(layers: list[Layer]) -> list[dict]:
    return [
        {
            "in": layer.spec.in_dim,
            "out": layer.spec.out_dim,
            "activation": layer.spec.activation,
            "weights": layer.weights.reshape(-1).tolist(),
            "biases": layer.biases.tolist(),
        }
        for layer in layers
    ]


def _layers_from_json(docs: list[dict]) -> list[Layer]:
    layers = []
    for doc in docs:
        spec = LayerSpec(in_dim=doc["in"], out_dim=doc["out"], activation=doc["activation"])
        layers.append(
            Layer(
                weights=np.array(doc["weights"], dtype=float).reshape(
                    spec.out_dim, spec.in_dim
                ),
                biases=np.array(doc["biases"], dtype=float),
                spec=spec,
            )
        )
    return layers


def save_model(
    path,
    ae: MlpAutoencoder,
    train_config: TrainConfig | None = None,
    loss_history: dict | None = None,
) -> None:
    doc = {
        "latent_dim": ae.latent_dim,
        "encoder": _layers_to_json(ae.encoder_layers),
        "decoder": _layers_to_json(ae.decoder_layers),
        "train_config": train_config.to_dict() if train_config else None,
        "loss_history": loss_history,
    }
    serialize.write_json(path, doc)


def load_model(path) -> MlpAutoencoder:
    doc = serialize.read_json(path)
    return MlpAutoencoder(
        encoder_layers=_layers_from_json(doc["encoder"]),
        decoder_layers=_layers_from_json(doc["decoder"]),
        latent_dim=doc["latent_dim"],
    )
