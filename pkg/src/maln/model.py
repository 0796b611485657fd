"""Per-sensor encoder/decoder stacks sharing one latent dimensionality.

Encoders end in tanh so latents are bounded in (-1, 1); decoders end in
sigmoid because inputs are normalized to [0, 1].  Hidden layers are
dense with a configurable activation (tanh by default).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numerics as nm
from .config import format_kv, parse_kv_file
from .errors import ConfigError, DataError, DimensionError
from .numerics import Tensor

_ACTIVATIONS = {"tanh": nm.tanh, "sigmoid": nm.sigmoid, "relu": nm.relu, "linear": None}


def _check_widths(name: str, widths) -> tuple[int, ...]:
    widths = tuple(int(w) for w in widths)
    if any(w < 1 for w in widths):
        raise ConfigError(f"{name}: layer widths must be positive, got {widths}")
    return widths


class SensorAutoencoder:
    """Encoder/decoder pair for one sensor's flattened feature vectors."""

    def __init__(self, sensor_id: str, input_dim: int, latent_dim: int,
                 enc_hidden: tuple[int, ...], dec_hidden: tuple[int, ...],
                 hidden_activation: str, params: dict[str, Tensor]):
        self.sensor_id = sensor_id
        self.input_dim = input_dim
        self.latent_dim = latent_dim
        self.enc_hidden = enc_hidden
        self.dec_hidden = dec_hidden
        self.hidden_activation = hidden_activation
        self.params = params
        self._enc_layers = [(w, hidden_activation) for w in enc_hidden] + [(latent_dim, "tanh")]
        self._dec_layers = [(w, hidden_activation) for w in dec_hidden] + [(input_dim, "sigmoid")]

    @classmethod
    def build(cls, sensor_id: str, input_dim: int, latent_dim: int,
              enc_hidden=(128, 64), dec_hidden=None, hidden_activation: str = "tanh",
              seed: int = 0) -> "SensorAutoencoder":
        if input_dim < 1 or latent_dim < 1:
            raise ConfigError(f"input_dim {input_dim} and latent_dim {latent_dim} must be positive")
        if hidden_activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation '{hidden_activation}'; "
                              f"choose from {sorted(_ACTIVATIONS)}")
        enc_hidden = _check_widths("enc_hidden", enc_hidden)
        dec_hidden = (_check_widths("dec_hidden", dec_hidden) if dec_hidden is not None
                      else tuple(reversed(enc_hidden)))
        rng = np.random.default_rng(seed)
        params: dict[str, Tensor] = {}

        def stack(prefix: str, fan_in: int, widths: tuple[int, ...]):
            for i, width in enumerate(widths):
                params[f"{prefix}.w{i}"] = Tensor(nm.glorot_uniform(rng, fan_in, width),
                                                  requires_grad=True)
                params[f"{prefix}.b{i}"] = Tensor(np.zeros((1, width)), requires_grad=True)
                fan_in = width

        stack("enc", input_dim, enc_hidden + (latent_dim,))
        stack("dec", latent_dim, dec_hidden + (input_dim,))
        return cls(sensor_id, input_dim, latent_dim, enc_hidden, dec_hidden,
                   hidden_activation, params)

    # -- forward passes ----------------------------------------------------

    def _apply(self, x: Tensor, prefix: str, layers) -> Tensor:
        h = x
        for i, (_, activation) in enumerate(layers):
            h = nm.affine(h, self.params[f"{prefix}.w{i}"], self.params[f"{prefix}.b{i}"])
            fn = _ACTIVATIONS[activation]
            if fn is not None:
                h = fn(h)
        return h

    def encode(self, batch) -> Tensor:
        x = batch if isinstance(batch, Tensor) else Tensor(batch)
        if x.data.ndim != 2 or x.data.shape[1] != self.input_dim:
            raise DimensionError(
                f"encode('{self.sensor_id}'): batch {x.data.shape} vs input_dim {self.input_dim}")
        return self._apply(x, "enc", self._enc_layers)

    def decode(self, latents) -> Tensor:
        z = latents if isinstance(latents, Tensor) else Tensor(latents)
        if z.data.ndim != 2 or z.data.shape[1] != self.latent_dim:
            raise DimensionError(
                f"decode('{self.sensor_id}'): batch {z.data.shape} vs latent_dim {self.latent_dim}")
        return self._apply(z, "dec", self._dec_layers)

    def embed(self, batch: np.ndarray) -> np.ndarray:
        """Latent codes as a plain array, no gradient graph."""
        return self.encode(Tensor(np.asarray(batch))).data

    def reconstruct(self, batch: np.ndarray) -> np.ndarray:
        return self.decode(self.encode(Tensor(np.asarray(batch)))).data

    # -- parameter plumbing ---------------------------------------------------

    def parameters(self) -> list[Tensor]:
        return [self.params[name] for name in sorted(self.params)]

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def set_arrays(self, named: dict[str, np.ndarray]) -> None:
        if sorted(named) != sorted(self.params):
            raise ConfigError(f"parameter names {sorted(named)} do not match model")
        for name, arr in named.items():
            if self.params[name].data.shape != arr.shape:
                raise DimensionError(
                    f"parameter '{name}': stored shape {arr.shape} vs model "
                    f"{self.params[name].data.shape}")
            self.params[name].data = np.asarray(arr, dtype=np.float64).copy()

    def copy(self) -> "SensorAutoencoder":
        clone = SensorAutoencoder.build(self.sensor_id, self.input_dim, self.latent_dim,
                                        self.enc_hidden, self.dec_hidden,
                                        self.hidden_activation, seed=0)
        clone.set_arrays(self.named_arrays())
        return clone

    def params_digest(self) -> str:
        """SHA-256 over the canonical serialized parameter bytes."""
        digest = hashlib.sha256()
        for name in sorted(self.params):
            digest.update(name.encode())
            digest.update(np.ascontiguousarray(self.params[name].data).tobytes())
        return digest.hexdigest()

    # -- persistence ------------------------------------------------------------

    def config_dict(self) -> dict[str, str]:
        return {
            "sensor_id": self.sensor_id,
            "input_dim": str(self.input_dim),
            "latent_dim": str(self.latent_dim),
            "enc_hidden": ",".join(str(w) for w in self.enc_hidden),
            "dec_hidden": ",".join(str(w) for w in self.dec_hidden),
            "hidden_activation": self.hidden_activation,
        }

    def save(self, basepath) -> None:
        """Writes <basepath>.cfg (architecture) and <basepath>.maln (weights)."""
        base = Path(basepath)
        base.with_suffix(".cfg").write_text(format_kv(self.config_dict()))
        nm.save_tensors(base.with_suffix(".maln"), self.named_arrays())

    @classmethod
    def load(cls, basepath) -> "SensorAutoencoder":
        base = Path(basepath)
        cfg = parse_kv_file(base.with_suffix(".cfg"))
        model = build_from_config(cfg)
        model.set_arrays(nm.load_tensors(base.with_suffix(".maln")))
        return model


def build_from_config(cfg: dict[str, str]) -> SensorAutoencoder:
    """Construct an untrained autoencoder from key-value architecture text."""
    required = {"sensor_id", "input_dim", "latent_dim"}
    missing = required - cfg.keys()
    if missing:
        raise ConfigError(f"model config missing keys: {sorted(missing)}")

    def widths(key, default):
        raw = cfg.get(key)
        if raw is None:
            return default
        return tuple(int(tok) for tok in raw.split(",") if tok.strip())

    try:
        return SensorAutoencoder.build(
            cfg["sensor_id"], int(cfg["input_dim"]), int(cfg["latent_dim"]),
            enc_hidden=widths("enc_hidden", (128, 64)),
            dec_hidden=widths("dec_hidden", None) if "dec_hidden" in cfg else None,
            hidden_activation=cfg.get("hidden_activation", "tanh"),
            seed=int(cfg.get("seed", 0)))
    except ValueError as err:
        raise ConfigError(f"bad model config value: {err}") from None


@dataclass
class EmbeddingSet:
    """Latent codes for one sensor over an indexed set of samples."""

    sensor_id: str
    z: np.ndarray
    labels: np.ndarray
    sample_ids: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        if self.z.ndim != 2:
            raise DataError(f"embeddings must be 2-d, got {self.z.shape}")
        n = self.z.shape[0]
        if self.labels.shape != (n,) or self.sample_ids.shape != (n,):
            raise DataError(
                f"embeddings ({n} rows), labels {self.labels.shape}, and "
                f"sample_ids {self.sample_ids.shape} disagree")
        if n and np.abs(self.z).max() >= 1.0:
            raise DataError("embedding values must lie strictly inside (-1, 1)")

    @classmethod
    def from_model(cls, model: SensorAutoencoder, batch: np.ndarray, labels,
                   sample_ids=None) -> "EmbeddingSet":
        batch = np.asarray(batch, dtype=np.float64)
        if sample_ids is None:
            sample_ids = np.arange(batch.shape[0])
        return cls(model.sensor_id, model.embed(batch), labels, sample_ids)

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def d(self) -> int:
        return self.z.shape[1]
