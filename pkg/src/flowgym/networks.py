"""Network architectures: the velocity field and the reward regressor.

Parameters for each network live in a single flat vector; the architecture
dataclass owns the (name, shape) layout and slices named views out of the
vector.  Keeping parameters flat makes the optimizer, checkpointing, and
finite-difference checks trivial.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .checks import require


def _spec_size(spec) -> int:
    return sum(int(np.prod(shape)) for _, shape in spec)


def _spec_offsets(spec) -> dict:
    offsets = {}
    start = 0
    for name, shape in spec:
        size = int(np.prod(shape))
        offsets[name] = (start, start + size, shape)
        start += size
    return offsets


class _ArchBase:
    """Shared flat-vector bookkeeping for both architectures."""

    def param_spec(self):
        raise NotImplementedError

    @property
    def n_params(self) -> int:
        return _spec_size(self.param_spec())

    def param_views(self, params: np.ndarray, needs_grad: bool) -> dict:
        """Slice the flat vector into named Tensor leaves."""
        params = np.asarray(params)
        require(params.ndim == 1 and params.size == self.n_params,
                f"expected flat parameter vector of size {self.n_params}, "
                f"got shape {params.shape}")
        views = {}
        for name, (start, stop, shape) in _spec_offsets(self.param_spec()).items():
            views[name] = ad.Tensor(params[start:stop].reshape(shape),
                                    needs_grad=needs_grad)
        return views

    def gather_grads(self, views: dict, dtype=None) -> np.ndarray:
        """Flatten per-layer gradients back into one vector (zeros if unused)."""
        parts = []
        for name, (start, stop, shape) in _spec_offsets(self.param_spec()).items():
            t = views[name]
            if t.grad is None:
                parts.append(np.zeros(stop - start, dtype=t.value.dtype))
            else:
                parts.append(np.asarray(t.grad).ravel())
        flat = np.concatenate(parts)
        return flat.astype(dtype) if dtype is not None else flat

    def describe(self) -> dict:
        return asdict(self)


def he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


NUM_TAU_FEATURES = 8


def tau_features(tau: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Sinusoidal embedding of flow time: sin/cos at octave frequencies.

    ``tau``: (B,) in [0, 1] -> (B, 8).
    """
    tau = np.asarray(tau, dtype=np.float64).reshape(-1)
    freqs = np.pi * (2.0 ** np.arange(NUM_TAU_FEATURES // 2))
    angles = tau[:, None] * freqs[None, :]
    feats = np.concatenate([np.sin(angles), np.cos(angles)], axis=1)
    return feats.astype(dtype)


@dataclass(frozen=True)
class VelocityArch(_ArchBase):
    """U-Net over the chunk horizon predicting the flow velocity.

    Three resolution levels (H, H/2, H/4) with widths (w, 2w, 4w), kernel
    size ``kernel``, skip connections, and a conditioning MLP whose output
    is broadcast along the horizon and concatenated to the noisy chunk.
    """

    h_prime: int = 64
    channels: int = 3
    obs_dim: int = 7
    width: int = 32
    cond_dim: int = 32
    kernel: int = 5

    def __post_init__(self):
        require(self.h_prime % 4 == 0, "h_prime must be divisible by 4")
        require(self.kernel % 2 == 1, "kernel size must be odd")

    def param_spec(self):
        w1, w2, w3 = self.width, 2 * self.width, 4 * self.width
        c, k = self.cond_dim, self.kernel
        cond_in = self.obs_dim + NUM_TAU_FEATURES
        return [
            ("cond1.w", (cond_in, c)),
            ("cond1.b", (c,)),
            ("cond2.w", (c, c)),
            ("cond2.b", (c,)),
            ("enc1.w", (w1, self.channels + c, k)),
            ("enc1.b", (w1,)),
            ("enc2.w", (w2, w1, k)),
            ("enc2.b", (w2,)),
            ("mid.w", (w3, w2, k)),
            ("mid.b", (w3,)),
            ("dec2.w", (w2, w3 + w2, k)),
            ("dec2.b", (w2,)),
            ("dec1.w", (w1, w2 + w1, k)),
            ("dec1.b", (w1,)),
            ("out.w", (self.channels, w1, k)),
            ("out.b", (self.channels,)),
        ]

    def init_params(self, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
        """He-uniform hidden layers, zero output head."""
        parts = []
        for name, shape in self.param_spec():
            if name.startswith("out.") or name.endswith(".b"):
                parts.append(np.zeros(int(np.prod(shape)), dtype=dtype))
            elif len(shape) == 2:
                parts.append(he_uniform(rng, shape, shape[0], dtype).ravel())
            else:
                fan_in = shape[1] * shape[2]
                parts.append(he_uniform(rng, shape, fan_in, dtype).ravel())
        return np.concatenate(parts)

    def apply(self, views: dict, chunk, obs: np.ndarray, tau: np.ndarray):
        """Velocity prediction for a batch.

        ``chunk``: Tensor or array (B, 3, H'); ``obs``: (B, 7); ``tau``: (B,).
        Returns a Tensor (B, 3, H').
        """
        chunk = ad.as_tensor(chunk)
        batch = chunk.value.shape[0]
        dtype = chunk.value.dtype
        require(chunk.value.shape == (batch, self.channels, self.h_prime),
                f"bad chunk shape {chunk.value.shape}")
        cond_in = np.concatenate(
            [np.asarray(obs, dtype=dtype).reshape(batch, self.obs_dim),
             tau_features(tau, dtype)], axis=1)
        z = ad.relu(ad.add(ad.matmul(ad.Tensor(cond_in), views["cond1.w"]),
                           views["cond1.b"]))
        z = ad.relu(ad.add(ad.matmul(z, views["cond2.w"]), views["cond2.b"]))

        x0 = ad.concat_channels([chunk, ad.broadcast_time(z, self.h_prime)])
        e1 = ad.relu(ad.conv1d(x0, views["enc1.w"], views["enc1.b"]))
        e2 = ad.relu(ad.conv1d(ad.avg_pool2(e1), views["enc2.w"], views["enc2.b"]))
        m = ad.relu(ad.conv1d(ad.avg_pool2(e2), views["mid.w"], views["mid.b"]))
        d2 = ad.relu(ad.conv1d(ad.concat_channels([ad.upsample2(m), e2]),
                               views["dec2.w"], views["dec2.b"]))
        d1 = ad.relu(ad.conv1d(ad.concat_channels([ad.upsample2(d2), e1]),
                               views["dec1.w"], views["dec1.b"]))
        return ad.conv1d(d1, views["out.w"], views["out.b"])

    def velocity(self, params: np.ndarray, chunk: np.ndarray, obs: np.ndarray,
                 tau: np.ndarray) -> np.ndarray:
        """Forward pass without gradient tracking."""
        views = self.param_views(params, needs_grad=False)
        return self.apply(views, chunk, obs, tau).value


@dataclass(frozen=True)
class SurrogateArch(_ArchBase):
    """Temporal-conv reward regressor.

    The observation vector is broadcast along the horizon and concatenated
    to the encoded chunk together with two fixed positional channels (a
    linear ramp and a half-cosine), so the global average pool does not
    erase where along the horizon a feature occurred.  Four conv blocks,
    global average pooling, zero-initialized linear head.
    """

    h_prime: int = 64
    channels: int = 3
    obs_dim: int = 7
    width: int = 32
    kernel: int = 5

    POS_CHANNELS = 2

    def __post_init__(self):
        require(self.h_prime % 4 == 0, "h_prime must be divisible by 4")
        require(self.kernel % 2 == 1, "kernel size must be odd")

    @property
    def in_channels(self) -> int:
        return self.channels + self.obs_dim + self.POS_CHANNELS

    def positional_channels(self, dtype=np.float32) -> np.ndarray:
        ramp = np.linspace(-1.0, 1.0, self.h_prime)
        cosine = np.cos(np.pi * np.linspace(0.0, 1.0, self.h_prime))
        return np.stack([ramp, cosine]).astype(dtype)

    def param_spec(self):
        w, k = self.width, self.kernel
        return [
            ("conv1.w", (w, self.in_channels, k)),
            ("conv1.b", (w,)),
            ("conv2.w", (w, w, k)),
            ("conv2.b", (w,)),
            ("conv3.w", (w, w, k)),
            ("conv3.b", (w,)),
            ("conv4.w", (w, w, k)),
            ("conv4.b", (w,)),
            ("head.w", (w, 1)),
            ("head.b", (1,)),
        ]

    def init_params(self, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
        parts = []
        for name, shape in self.param_spec():
            if name.startswith("head.") or name.endswith(".b"):
                parts.append(np.zeros(int(np.prod(shape)), dtype=dtype))
            else:
                fan_in = shape[1] * shape[2]
                parts.append(he_uniform(rng, shape, fan_in, dtype).ravel())
        return np.concatenate(parts)

    def apply(self, views: dict, chunk, obs: np.ndarray):
        """Predicted reward for a batch: (B, 3, H') x (B, 7) -> Tensor (B, 1)."""
        chunk = ad.as_tensor(chunk)
        batch = chunk.value.shape[0]
        dtype = chunk.value.dtype
        require(chunk.value.shape == (batch, self.channels, self.h_prime),
                f"bad chunk shape {chunk.value.shape}")
        obs_t = ad.broadcast_time(
            ad.Tensor(np.asarray(obs, dtype=dtype).reshape(batch, self.obs_dim)),
            self.h_prime)
        pos = np.broadcast_to(self.positional_channels(dtype)[None],
                              (batch, self.POS_CHANNELS, self.h_prime)).copy()
        x = ad.concat_channels([chunk, obs_t, ad.Tensor(pos)])
        x = ad.relu(ad.conv1d(x, views["conv1.w"], views["conv1.b"]))
        x = ad.avg_pool2(x)
        x = ad.relu(ad.conv1d(x, views["conv2.w"], views["conv2.b"]))
        x = ad.avg_pool2(x)
        x = ad.relu(ad.conv1d(x, views["conv3.w"], views["conv3.b"]))
        x = ad.relu(ad.conv1d(x, views["conv4.w"], views["conv4.b"]))
        pooled = ad.mean(x, axes=(2,))
        return ad.add(ad.matmul(pooled, views["head.w"]), views["head.b"])

    def predict(self, params: np.ndarray, chunk: np.ndarray,
                obs: np.ndarray) -> np.ndarray:
        """Forward pass without gradient tracking -> (B,) predictions."""
        views = self.param_views(params, needs_grad=False)
        return self.apply(views, chunk, obs).value[:, 0]
