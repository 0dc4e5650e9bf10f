"""Spatio-temporal generator and 3D-convolutional patch discriminator.

Sequences are ``(N, T, 1, H, W)`` with time on axis 1. A context window is a
sequence of ``2k`` frames with the centre frame removed.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import Tensor, nn

from .nn import Conv2d, Conv3d, ConvLSTMCell, ConvLSTMState, Deconv2d, elu, guided_elu


@dataclass(frozen=True)
class GeneratorConfig:
    input_size: int = 224
    base_channels: int = 16
    half_window: int = 5
    convlstm_hidden: int | None = None  # None -> 4 * base_channels

    def __post_init__(self):
        if self.input_size < 8 or self.input_size % 8:
            raise ValueError(f"input_size must be a positive multiple of 8, got {self.input_size}")
        if self.half_window < 1:
            raise ValueError("half_window must be >= 1")
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")

    @property
    def hidden(self) -> int:
        return self.convlstm_hidden or 4 * self.base_channels

    @property
    def latent_size(self) -> int:
        return self.input_size // 8


# (temporal, spatial) kernel and spatial stride of the six 3D conv layers.
DISC_LAYERS = ((5, 5, 2), (3, 5, 2), (3, 3, 2), (3, 3, 2), (1, 3, 2), (1, 3, 1))


@dataclass(frozen=True)
class DiscriminatorConfig:
    input_size: int = 224
    base_channels: int = 16
    sequence_length: int = 11

    def __post_init__(self):
        reach = sum(kt - 1 for kt, _, _ in DISC_LAYERS)
        if self.sequence_length != reach + 1:
            raise ValueError(f"sequence_length must be {reach + 1} for the fixed temporal kernels")
        if self.input_size < 1:
            raise ValueError("input_size must be >= 1")

    @property
    def channels(self) -> tuple[int, ...]:
        b = self.base_channels
        return (2 * b, 4 * b, 8 * b, 16 * b, 32 * b, 1)

    @property
    def patch_grid(self) -> int:
        s = self.input_size
        for _, _, stride in DISC_LAYERS:
            s = -(-s // stride)
        return s


def _trace(trace, name, t):
    if trace is not None:
        trace.append((name, tuple(t.shape)))


class Generator(nn.Module):
    """Spatial encoder -> bidirectional ConvLSTM -> spatial decoder."""

    def __init__(self, config: GeneratorConfig = GeneratorConfig()):
        super().__init__()
        self.config = config
        b, hid = config.base_channels, config.hidden
        self.encoder = nn.ModuleList([
            Conv2d(1, b, 5, 2),
            Conv2d(b, 2 * b, 5, 2),
            Conv2d(2 * b, 4 * b, 3, 2),
            Conv2d(4 * b, 8 * b, 3, 1),
        ])
        self.forward_lstm = ConvLSTMCell(8 * b, hid)
        self.backward_lstm = ConvLSTMCell(8 * b, hid)
        self.combined_lstm = ConvLSTMCell(2 * hid, 2 * hid)
        self.decoder = nn.ModuleList([
            Deconv2d(2 * hid, 4 * b, 3, 1),
            Deconv2d(4 * b, 2 * b, 3, 2),
            Deconv2d(2 * b, b, 5, 2),
            Deconv2d(b, 1, 5, 2),
        ])

    def encode(self, frames: Tensor, trace=None) -> Tensor:
        x = frames
        for i, layer in enumerate(self.encoder, 1):
            x = elu(layer(x))
            _trace(trace, f"Conv{i}", x)
        return x

    def decode(self, z: Tensor, trace=None) -> Tensor:
        x = z
        last = len(self.decoder)
        for i, layer in enumerate(self.decoder, 1):
            x = layer(x)
            x = torch.tanh(x) if i == last else elu(x)
            _trace(trace, f"DeConv{i}", x)
        return x

    def forward(self, window: Tensor, trace=None) -> Tensor:
        """Generate the centre frame ``(N, 1, H, W)`` from a ``(N, 2k, 1, H, W)`` window."""
        k = self.config.half_window
        size = self.config.input_size
        if window.dim() != 5 or window.shape[1] != 2 * k:
            raise ValueError(f"expected window of shape (N, {2 * k}, 1, H, W), got {tuple(window.shape)}")
        if window.shape[2:] != (1, size, size):
            raise ValueError(f"frames must be 1x{size}x{size}, got {tuple(window.shape[2:])}")
        n = window.shape[0]
        feats = self.encode(window.reshape(n * 2 * k, 1, size, size), trace)
        feats = feats.reshape(n, 2 * k, *feats.shape[1:])

        fwd = None
        for t in range(k):  # t-k ... t-1
            fwd = self.forward_lstm(feats[:, t], fwd)
        _trace(trace, "Forward ConvLSTM", fwd.h)
        bwd = None
        for t in range(2 * k - 1, k - 1, -1):  # t+k ... t+1
            bwd = self.backward_lstm(feats[:, t], bwd)
        _trace(trace, "Backward ConvLSTM", bwd.h)

        h = torch.cat([fwd.h, bwd.h], dim=1)
        c = torch.cat([fwd.c, bwd.c], dim=1)
        comb = self.combined_lstm(h, ConvLSTMState(h, c))
        _trace(trace, "Combined ConvLSTM", comb.h)
        return self.decode(comb.h, trace)


class Discriminator(nn.Module):
    """Six 3D conv layers mapping an 11-frame sequence to a grid of realness probabilities."""

    def __init__(self, config: DiscriminatorConfig = DiscriminatorConfig()):
        super().__init__()
        self.config = config
        layers = []
        c_in = 1
        for (kt, ks, stride), c_out in zip(DISC_LAYERS, config.channels):
            layers.append(Conv3d(c_in, c_out, (kt, ks, ks), (1, stride, stride)))
            c_in = c_out
        self.layers = nn.ModuleList(layers)

    def forward(self, seq: Tensor, trace=None, guided: bool = False) -> Tensor:
        """Return the ``(N, g, g)`` patch map for a ``(N, 11, 1, H, W)`` sequence.

        ``guided=True`` swaps the hidden activations for the gradient-gated
        variant used by guided backpropagation; the forward values are unchanged.
        """
        length = self.config.sequence_length
        if seq.dim() != 5 or seq.shape[1] != length or seq.shape[2] != 1:
            raise ValueError(f"expected sequence of shape (N, {length}, 1, H, W), got {tuple(seq.shape)}")
        act = guided_elu if guided else elu
        x = seq.transpose(1, 2)
        last = len(self.layers)
        for i, layer in enumerate(self.layers, 1):
            x = layer(x)
            x = torch.sigmoid(x) if i == last else act(x)
            _trace(trace, f"3D Conv{i}", x)
        return x[:, 0, 0]


def context_of(seq: Tensor, k: int = 5) -> Tensor:
    """Drop the centre frame of a ``(N, 2k+1, ...)`` sequence."""
    return torch.cat([seq[:, :k], seq[:, k + 1:]], dim=1)


def assemble_fake_sequence(window: Tensor, generated: Tensor) -> Tensor:
    """Insert ``generated`` ``(N, 1, H, W)`` at the centre of a ``(N, 2k, 1, H, W)`` window."""
    if window.shape[0] != generated.shape[0] or window.shape[2:] != generated.shape[1:]:
        raise ValueError(f"generated frame {tuple(generated.shape)} does not fit window {tuple(window.shape)}")
    k = window.shape[1] // 2
    return torch.cat([window[:, :k], generated[:, None], window[:, k:]], dim=1)


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


# --- checkpoints -----------------------------------------------------------

def save_checkpoint(module: nn.Module, path: str | Path, config=None) -> None:
    """Write ``<path>.json`` (manifest) and ``<path>.bin`` (little-endian float32 blob)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for name, tensor in module.state_dict().items():
        arr = tensor.detach().cpu().numpy().astype("<f4", copy=False)
        raw = np.ascontiguousarray(arr).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "float32",
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = {"format": "stan-ckpt-1", "byte_order": "little",
                "config": asdict(config) if config is not None else None,
                "blob": path.name + ".bin", "tensors": entries}
    path.with_name(path.name + ".bin").write_bytes(b"".join(chunks))
    path.with_name(path.name + ".json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_state(path: str | Path) -> tuple[dict, dict]:
    """Read a checkpoint back into ``(state_dict, manifest)``."""
    path = Path(path)
    manifest = json.loads(path.with_name(path.name + ".json").read_text())
    blob = path.with_name(manifest["blob"]).read_bytes()
    state = {}
    for e in manifest["tensors"]:
        arr = np.frombuffer(blob, dtype="<f4", count=int(np.prod(e["shape"], dtype=np.int64)),
                            offset=e["offset"]).reshape(e["shape"])
        state[e["name"]] = torch.from_numpy(arr.astype(np.float32))
    return state, manifest


def load_generator(path: str | Path) -> Generator:
    state, manifest = load_state(path)
    g = Generator(GeneratorConfig(**manifest["config"]))
    g.load_state_dict(state)
    return g


def load_discriminator(path: str | Path) -> Discriminator:
    state, manifest = load_state(path)
    d = Discriminator(DiscriminatorConfig(**manifest["config"]))
    d.load_state_dict(state)
    return d
