"""The enhancement network as a validated layer graph.

The canonical configuration reproduces the encoder/decoder channel table:
a 2048-channel feature extractor (R1) and five dilated conv blocks (E1-E5),
their concatenation (CF), a dense middle block (M), four up-convolution blocks
with skips (D1-D4), a final conv + sigmoid (F) and the learnable Gabor layer
(G).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import layers
from .gabor_layer import LearnableGaborLayer
from .ops import charbonnier_loss
from .seeding import derive_seed

__all__ = [
    "LayerSpec",
    "NetworkConfig",
    "Network",
    "ShapeError",
    "NonFiniteError",
    "ShapeReport",
    "TABLE_1",
    "canonical_config",
    "scaled_config",
    "build_network",
    "validate_shapes",
    "count_params",
    "train_step",
    "enhance_image",
]

KINDS = ("resnet_stub", "conv", "concat", "dense", "upconv", "final", "gabor")


class ShapeError(ValueError):
    def __init__(self, layer_id: str, message: str):
        super().__init__(f"{layer_id}: {message}")
        self.layer_id = layer_id


class NonFiniteError(FloatingPointError):
    def __init__(self, layer_id: str):
        super().__init__(f"{layer_id}: non-finite values in layer output")
        self.layer_id = layer_id


@dataclass(frozen=True)
class LayerSpec:
    id: str
    kind: str
    in_channels: int
    out_channels: int
    stride: int = 1
    dilation: int = 1
    source: str | None = None
    skip_source: str | None = None


TABLE_1 = (
    LayerSpec("R1", "resnet_stub", 1, 2048, stride=16, source="input"),
    LayerSpec("E1", "conv", 1, 32, stride=1, dilation=2, source="input"),
    LayerSpec("E2", "conv", 32, 64, stride=2, dilation=2),
    LayerSpec("E3", "conv", 64, 128, stride=2, dilation=2),
    LayerSpec("E4", "conv", 128, 256, stride=2, dilation=2),
    LayerSpec("E5", "conv", 256, 512, stride=2, dilation=2),
    LayerSpec("CF", "concat", 2560, 2560, skip_source="R1"),
    LayerSpec("M", "dense", 2560, 1024),
    LayerSpec("D1", "upconv", 1024, 512, stride=2),
    LayerSpec("D2", "upconv", 768, 256, stride=2, skip_source="E4"),
    LayerSpec("D3", "upconv", 384, 128, stride=2, skip_source="E3"),
    LayerSpec("D4", "upconv", 192, 64, stride=2, skip_source="E2"),
    LayerSpec("F", "final", 64, 1),
    LayerSpec("G", "gabor", 1, 1),
)


@dataclass(frozen=True)
class NetworkConfig:
    layers: tuple = TABLE_1
    dropout: float = 0.1
    se_reduction: int = 16
    gabor_filters: int = 8
    gabor_ksize: int = 15
    gabor_frequency: float = 0.125
    gabor_sigma: float = 4.0
    gabor_dc_free: bool = False
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layers"] = [asdict(s) for s in self.layers]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        d = dict(d)
        d["layers"] = tuple(LayerSpec(**s) for s in d["layers"])
        return cls(**d)


def canonical_config(**overrides) -> NetworkConfig:
    return NetworkConfig(**overrides)


def scaled_config(divisor: int, **overrides) -> NetworkConfig:
    """Canonical graph with every channel count except the 1-channel image ends divided by ``divisor``."""

    def scale(c):
        return c if c == 1 else c // divisor

    specs = tuple(replace(s, in_channels=scale(s.in_channels), out_channels=scale(s.out_channels)) for s in TABLE_1)
    return NetworkConfig(layers=specs, **overrides)


def _resolve_sources(specs) -> list[LayerSpec]:
    out = []
    prev = "input"
    for s in specs:
        out.append(s if s.source is not None else replace(s, source=prev))
        prev = s.id
    return out


class Network:
    def __init__(self, cfg: NetworkConfig, specs: list[LayerSpec], blocks: dict):
        self.cfg = cfg
        self.specs = specs
        self.blocks = blocks

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.specs]

    def spec(self, layer_id: str) -> LayerSpec:
        return next(s for s in self.specs if s.id == layer_id)

    def parameters(self) -> dict:
        """``{layer_id: {name: array}}`` for every layer that has parameters."""
        return {lid: b.params for lid, b in self.blocks.items()}

    def forward(self, x, training: bool = False, seed: int = 0, return_cache: bool = False,
                return_intermediates: bool = False):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[1] != 1:
            raise ShapeError("input", f"expected (n, 1, h, w), got {x.shape}")
        acts = {"input": x}
        caches = {}
        for i, s in enumerate(self.specs):
            src = acts[s.source]
            if s.kind == "concat" or s.skip_source is not None:
                skip = acts[s.skip_source]
                if skip.shape[2:] != src.shape[2:]:
                    skip = _resize_bilinear(skip, src.shape[2:])
                inp = np.concatenate([src, skip], axis=1)
            else:
                inp = src
            if s.kind == "concat":
                out = inp
            else:
                out, caches[s.id] = self.blocks[s.id].forward(inp, training, derive_seed(seed, i))
            if not np.all(np.isfinite(out)):
                raise NonFiniteError(s.id)
            acts[s.id] = out
        y = acts[self.specs[-1].id]
        if not (return_cache or return_intermediates):
            return y
        result = [y]
        if return_cache:
            result.append({"caches": caches, "acts": {k: v.shape for k, v in acts.items()}})
        if return_intermediates:
            result.append(acts)
        return tuple(result)

    def backward(self, dy, cache) -> dict:
        """Gradients ``{layer_id: {name: grad}}`` for the forward that produced ``cache``."""
        caches, shapes = cache["caches"], cache["acts"]
        upstream = {self.specs[-1].id: dy}
        grads = {}

        def push(layer_id, g):
            if layer_id in upstream:
                upstream[layer_id] = upstream[layer_id] + g
            else:
                upstream[layer_id] = g

        for s in reversed(self.specs):
            g_out = upstream.pop(s.id, None)
            if g_out is None:
                g_out = np.zeros(shapes[s.id], dtype=self.dtype)
            if s.kind == "concat":
                g_in = g_out
            else:
                g_in, grads[s.id] = self.blocks[s.id].backward(g_out, caches[s.id])
            if s.kind == "concat" or s.skip_source is not None:
                c_src = shapes[s.source][1]
                push(s.source, g_in[:, :c_src])
                # a resized skip (external extractor) receives no gradient
                if shapes[s.skip_source][2:] == g_in.shape[2:]:
                    push(s.skip_source, g_in[:, c_src:])
            else:
                push(s.source, g_in)
        return grads

    @property
    def dtype(self):
        block = next(iter(self.blocks.values()))
        return next(iter(block.params.values())).dtype


def _resize_bilinear(x, size):
    """Bilinear resize of (n, c, h, w) to spatial ``size`` (align-corners)."""
    from scipy import ndimage

    n, c, h, w = x.shape
    zoom = (1, 1, size[0] / h, size[1] / w)
    return ndimage.zoom(x, zoom, order=1, grid_mode=False).astype(x.dtype)


def _check_graph(specs: list[LayerSpec]) -> None:
    seen = {"input": 1}
    for s in specs:
        if s.kind not in KINDS:
            raise ShapeError(s.id, f"unknown layer kind {s.kind!r}")
        if s.id in seen:
            raise ShapeError(s.id, "duplicate layer id")
        if s.source not in seen:
            raise ShapeError(s.id, f"source {s.source} does not precede this layer")
        expected = seen[s.source]
        detail = f"{s.source} {seen[s.source]}"
        if s.skip_source is not None:
            if s.skip_source not in seen:
                raise ShapeError(s.id, f"skip source {s.skip_source} does not precede this layer")
            expected += seen[s.skip_source]
            detail += f" + {s.skip_source} {seen[s.skip_source]}"
        elif s.kind == "concat":
            raise ShapeError(s.id, "concat layer needs a skip source")
        if expected != s.in_channels:
            raise ShapeError(s.id, f"expects {s.in_channels} input channels but receives {expected} ({detail})")
        if s.kind == "concat" and s.out_channels != s.in_channels:
            raise ShapeError(s.id, "concat cannot change the channel count")
        seen[s.id] = s.out_channels
    if specs[-1].out_channels != 1:
        raise ShapeError(specs[-1].id, "network must end in one channel")


def build_network(cfg: NetworkConfig | None = None, seed: int | None = None, dtype=np.float32,
                  materialize: bool = True) -> Network:
    """Instantiate and validate the layer graph. Raises ShapeError on an inconsistent table.

    With ``materialize=False`` no weights are allocated; the result only
    supports graph queries such as :func:`validate_shapes`.
    """
    cfg = cfg or canonical_config()
    specs = _resolve_sources(cfg.layers)
    _check_graph(specs)
    kinds = [s.kind for s in specs]
    for required in ("final", "gabor"):
        if required not in kinds:
            raise ShapeError(required, "missing layer kind")
    if not materialize:
        return Network(cfg, specs, {})
    base = cfg.seed if seed is None else seed
    blocks = {}
    for i, s in enumerate(specs):
        r = np.random.default_rng(derive_seed(base, i))
        if s.kind == "resnet_stub":
            blocks[s.id] = layers.ResNetStub(s.in_channels, s.out_channels, s.stride, rng=r, dtype=dtype)
        elif s.kind == "conv":
            blocks[s.id] = layers.ConvBlock(s.in_channels, s.out_channels, s.stride, s.dilation, dropout=cfg.dropout,
                                            reduction=cfg.se_reduction, rng=r, dtype=dtype)
        elif s.kind == "dense":
            blocks[s.id] = layers.DenseBlock(s.in_channels, s.out_channels, cfg.se_reduction, rng=r, dtype=dtype)
        elif s.kind == "upconv":
            blocks[s.id] = layers.UpConvBlock(s.in_channels, s.out_channels, s.stride, cfg.dropout,
                                              cfg.se_reduction, rng=r, dtype=dtype)
        elif s.kind == "final":
            blocks[s.id] = layers.FinalConv(s.in_channels, s.out_channels, rng=r, dtype=dtype)
        elif s.kind == "gabor":
            blocks[s.id] = LearnableGaborLayer(cfg.gabor_filters, cfg.gabor_ksize, cfg.gabor_frequency,
                                               cfg.gabor_sigma, cfg.gabor_dc_free, cfg.se_reduction, rng=r,
                                               dtype=dtype)
    return Network(cfg, specs, blocks)


# -- shape validation -----------------------------------------------------------

@dataclass
class ShapeReport:
    input_shape: tuple
    layers: list = field(default_factory=list)
    joins: dict = field(default_factory=dict)

    def summary_lines(self) -> list[str]:
        lines = []
        for lid, j in self.joins.items():
            parts = " + ".join(f"{k} {v}" for k, v in j["parts"].items())
            label = lid if lid == "CF" else f"{lid}-in"
            lines.append(f"{label}={j['total']} ({parts})")
        last = self.layers[-1]
        for entry in self.layers:
            if entry["id"] == "F":
                lines.append(f"F={entry['in_channels']}->{entry['out_channels']}")
        lines.append(f"output={tuple(last['out_shape'])}")
        return lines

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _spatial_factor(specs) -> int:
    f = 1
    for s in specs:
        if s.kind == "conv":
            f *= s.stride
    return f


def validate_shapes(net: Network, input_shape=(1, 1, 64, 64)) -> ShapeReport:
    """Symbolic pass over the graph, recording every intermediate shape."""
    n, c, h, w = input_shape
    if c != 1:
        raise ShapeError("input", f"expected 1 input channel, got {c}")
    factor = _spatial_factor(net.specs)
    if h % factor or w % factor:
        raise ShapeError("input", f"spatial size not divisible by {factor}: {h}x{w}")
    shapes = {"input": (n, c, h, w)}
    report = ShapeReport(tuple(input_shape))
    for s in net.specs:
        src = shapes[s.source]
        in_c = src[1]
        parts = {s.source: src[1]}
        if s.skip_source is not None:
            skip = shapes[s.skip_source]
            if skip[2:] != src[2:] and s.kind != "concat":
                raise ShapeError(s.id, f"skip {s.skip_source} spatial {skip[2:]} != {s.source} spatial {src[2:]}")
            in_c += skip[1]
            parts[s.skip_source] = skip[1]
        if in_c != s.in_channels:
            raise ShapeError(s.id, f"expects {s.in_channels} input channels but receives {in_c}")
        sh, sw = src[2], src[3]
        if s.kind == "resnet_stub":
            if sh % s.stride or sw % s.stride:
                raise ShapeError(s.id, f"spatial size not divisible by {s.stride}")
            sh, sw = sh // s.stride, sw // s.stride
        elif s.kind == "conv":
            sh, sw = (sh - 1) // s.stride + 1, (sw - 1) // s.stride + 1
        elif s.kind == "upconv":
            sh, sw = sh * s.stride, sw * s.stride
        if s.kind in ("conv", "dense", "upconv") and sh * sw < 2:
            raise ShapeError(s.id, f"spatial size {sh}x{sw} too small for instance normalization")
        out = (n, s.out_channels, sh, sw)
        report.layers.append({"id": s.id, "kind": s.kind, "in_shape": (n, in_c, src[2], src[3]),
                              "out_shape": out, "in_channels": in_c, "out_channels": s.out_channels})
        if s.skip_source is not None:
            report.joins[s.id] = {"parts": parts, "total": in_c}
        shapes[s.id] = out
    final = shapes[net.specs[-1].id]
    if final != (n, 1, h, w):
        raise ShapeError(net.specs[-1].id, f"output shape {final} differs from input {(n, 1, h, w)}")
    return report


# -- parameters, training, inference ------------------------------------------

def count_params(net: Network) -> dict:
    per_layer = {
        s.id: int(sum(a.size for a in net.blocks[s.id].params.values())) if s.id in net.blocks else 0
        for s in net.specs
    }
    stub = sum(per_layer[s.id] for s in net.specs if s.kind == "resnet_stub")
    total = sum(per_layer.values())
    return {"layers": per_layer, "feature_extractor": stub, "total": total - stub, "total_with_extractor": total}


def train_step(net: Network, x, target, lr: float, eps: float = 1e-3, training: bool = False, seed: int = 0):
    """One plain gradient-descent step on the Charbonnier loss. Returns (loss, grads)."""
    y, cache = net.forward(x, training=training, seed=seed, return_cache=True)
    loss, dy = charbonnier_loss(y, np.asarray(target, dtype=y.dtype), eps)
    grads = net.backward(dy.astype(y.dtype), cache)
    for lid, g in grads.items():
        params = net.blocks[lid].params
        for name, gv in g.items():
            params[name] -= np.asarray(lr * gv, dtype=params[name].dtype)
    for block in net.blocks.values():
        if isinstance(block, LearnableGaborLayer):
            block.project()
    return loss, grads


def enhance_image(net: Network, img: np.ndarray, tile: int = 64, batch: int = 4) -> np.ndarray:
    """Run the network over an arbitrary-size image in reflect-padded tiles."""
    h, w = img.shape
    ph, pw = -h % tile, -w % tile
    padded = np.pad(img, ((0, ph), (0, pw)), mode="reflect" if min(h, w) > 1 else "edge")
    gh, gw = padded.shape[0] // tile, padded.shape[1] // tile
    tiles = padded.reshape(gh, tile, gw, tile).transpose(0, 2, 1, 3).reshape(gh * gw, 1, tile, tile)
    outs = [net.forward(tiles[i : i + batch]) for i in range(0, len(tiles), batch)]
    out = np.concatenate(outs).reshape(gh, gw, tile, tile).transpose(0, 2, 1, 3).reshape(gh * tile, gw * tile)
    return np.asarray(out[:h, :w], dtype=np.float64)
