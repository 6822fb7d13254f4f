"""Block-structured image generators and the block-removal ("cut") operation.

A generator is an ordered list of blocks mapping a low-dimensional latent to
an image in [-1, 1]. Cutting at index ``c`` discards blocks 0..c-1 and turns
every tensor that crossed the boundary (the main activation entering block
``c`` plus any skip tensors sourced before the cut) into one flat optimizable
input vector. ``lift`` evaluates the discarded blocks so that any original
latent has an exact counterpart in the cut input space.

Canonical packing order of the cut input: main input first, then skip
tensors in ascending (source block, destination block) order, each flattened
row-major. This order is load-bearing; recovery would silently corrupt if it
changed.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from math import prod

import numpy as np

from gencut import autodiff as ad
from gencut.autodiff import Tensor

__all__ = [
    "Block",
    "GeneratorNet",
    "CutGenerator",
    "WeightFormatError",
    "build_generator",
    "cut",
    "lift",
    "forward_cut",
    "sample",
    "param_count",
    "overparam_ratio",
    "save_weights",
    "load_weights",
    "RECIPES",
]

_ACTIVATIONS = {"relu": ad.relu, "elu": ad.elu, "tanh": ad.tanh, "sigmoid": ad.sigmoid}


class WeightFormatError(ValueError):
    """Weight file is malformed, corrupted, or for a different architecture."""


# ---------------------------------------------------------------------------
# layers


@dataclass
class Dense:
    w: Tensor
    b: Tensor

    def __call__(self, x: Tensor) -> Tensor:
        return ad.dense(x, self.w, self.b)

    def out_shape(self, in_shape):
        return (self.w.shape[1],)

    def params(self):
        return [("w", self.w), ("b", self.b)]


@dataclass
class Conv:
    w: Tensor
    b: Tensor
    stride: int = 1
    pad: int = 0

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.w, self.b, stride=self.stride, pad=self.pad)

    def out_shape(self, in_shape):
        _, h, w = in_shape
        o, _, kh, kw = self.w.shape
        return (o, (h + 2 * self.pad - kh) // self.stride + 1, (w + 2 * self.pad - kw) // self.stride + 1)

    def params(self):
        return [("w", self.w), ("b", self.b)]


@dataclass
class ConvTranspose:
    w: Tensor
    b: Tensor
    stride: int = 1
    pad: int = 0

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv_transpose2d(x, self.w, self.b, stride=self.stride, pad=self.pad)

    def out_shape(self, in_shape):
        _, h, w = in_shape
        _, o, kh, kw = self.w.shape
        return (o, (h - 1) * self.stride - 2 * self.pad + kh, (w - 1) * self.stride - 2 * self.pad + kw)

    def params(self):
        return [("w", self.w), ("b", self.b)]


@dataclass
class Upsample:
    factor: int

    def __call__(self, x: Tensor) -> Tensor:
        return ad.upsample_nearest(x, self.factor)

    def out_shape(self, in_shape):
        c, h, w = in_shape
        return (c, h * self.factor, w * self.factor)

    def params(self):
        return []


@dataclass
class Reshape:
    shape: tuple[int, ...]

    def __call__(self, x: Tensor) -> Tensor:
        return ad.reshape(x, (x.shape[0],) + self.shape)

    def out_shape(self, in_shape):
        return self.shape

    def params(self):
        return []


@dataclass
class Activation:
    kind: str

    def __call__(self, x: Tensor) -> Tensor:
        return _ACTIVATIONS[self.kind](x)

    def out_shape(self, in_shape):
        return in_shape

    def params(self):
        return []


# ---------------------------------------------------------------------------
# blocks and nets


@dataclass
class Block:
    """One generator stage: optional skip merge at entry, then a layer chain.

    ``skip_sources`` lists earlier block indices whose outputs are added to
    the main input after nearest upsampling by the per-source factor.
    """

    index: int
    layers: list
    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]
    skip_sources: tuple[int, ...] = ()
    skip_factors: dict = field(default_factory=dict)
    skip_shapes: dict = field(default_factory=dict)

    def input_dim(self) -> int:
        """Total scalar count of the full input spec (main + skips)."""
        return prod(self.in_shape) + sum(prod(s) for s in self.skip_shapes.values())

    def forward(self, x: Tensor, skips: dict) -> Tensor:
        for src in self.skip_sources:
            s = skips[src]
            f = self.skip_factors[src]
            if f > 1:
                s = ad.upsample_nearest(s, f)
            x = ad.add(x, s)
        for layer in self.layers:
            x = layer(x)
        return x

    def params(self):
        out = []
        for li, layer in enumerate(self.layers):
            for pname, p in layer.params():
                out.append((f"b{self.index}.l{li}.{pname}", p))
        return out


class GeneratorNet:
    """Ordered blocks B0..B{d-1} mapping a latent of size ``latent_dim`` to an image.

    Every block input dimension is at least ``latent_dim`` (checked at
    construction) so that cutting never shrinks the optimizable input.
    """

    def __init__(self, recipe: str, latent_dim: int, blocks: list[Block], out_shape: tuple[int, int, int]):
        self.recipe = recipe
        self.latent_dim = latent_dim
        self.blocks = blocks
        self.out_shape = out_shape
        self.skip_topology = tuple(
            (src, b.index) for b in blocks for src in b.skip_sources
        )
        self._validate()

    def _validate(self) -> None:
        k0 = self.latent_dim
        for b in self.blocks:
            ki = b.input_dim()
            if ki < k0:
                raise ValueError(
                    f"block {b.index} input dim {ki} < latent dim {k0}; generator must be expansive"
                )
        for src, dst in self.skip_topology:
            if not 0 <= src < dst < len(self.blocks):
                raise ValueError(f"invalid skip edge {src}->{dst}")
        # shape-trace each block against its declaration
        shape = (self.latent_dim,)
        for b in self.blocks:
            if b.in_shape != shape:
                raise ValueError(f"block {b.index} declares input {b.in_shape}, got {shape}")
            for layer in b.layers:
                shape = layer.out_shape(shape)
            if b.out_shape != shape:
                raise ValueError(f"block {b.index} declares output {b.out_shape}, computed {shape}")
        if shape != self.out_shape:
            raise ValueError(f"net output {shape} != declared {self.out_shape}")

    @property
    def depth(self) -> int:
        return len(self.blocks)

    @property
    def output_dim(self) -> int:
        return prod(self.out_shape)

    def input_dims(self) -> list[int]:
        """Per-block full input dimensions k_0..k_{d-1}."""
        return [b.input_dim() for b in self.blocks]

    def params(self) -> list[tuple[str, Tensor]]:
        out = []
        for b in self.blocks:
            out.extend(b.params())
        return out

    def set_trainable(self, flag: bool) -> None:
        for _, p in self.params():
            p.requires_grad = flag
            p.grad = None

    def weight_checksum(self) -> int:
        crc = 0
        for _, p in self.params():
            crc = zlib.crc32(np.ascontiguousarray(p.data).tobytes(), crc)
        return crc

    def _run_blocks(self, start: int, x: Tensor, injected: dict) -> Tensor:
        """Run blocks start..d-1; ``injected`` maps source index -> skip value."""
        cache = dict(injected)
        for b in self.blocks[start:]:
            x = b.forward(x, cache)
            cache[b.index] = x
        return x

    def forward_batch(self, z: Tensor | np.ndarray) -> Tensor:
        z = z if isinstance(z, Tensor) else Tensor(z)
        if z.ndim != 2 or z.shape[1] != self.latent_dim:
            raise ad.ShapeError(f"expected latent batch (N,{self.latent_dim}), got {z.shape}")
        return self._run_blocks(0, z, {})

    def forward(self, z0: Tensor | np.ndarray) -> Tensor:
        """Map one latent vector to one image (C,H,W)."""
        z0 = z0 if isinstance(z0, Tensor) else Tensor(z0)
        if z0.shape != (self.latent_dim,):
            raise ad.ShapeError(f"expected latent ({self.latent_dim},), got {z0.shape}")
        out = self._run_blocks(0, ad.reshape(z0, (1, self.latent_dim)), {})
        return ad.reshape(out, self.out_shape)


class CutGenerator:
    """View of a GeneratorNet starting at block ``cut_index``.

    Input parts are every tensor crossing the cut: the main activation
    entering the first kept block, then skip tensors from removed blocks in
    ascending (source, destination) order. The flat input dimension is
    ``input_dim``. Weights are shared with the underlying net, never copied.
    """

    def __init__(self, net: GeneratorNet, cut_index: int):
        if not 0 <= cut_index < net.depth:
            raise ValueError(
                f"cut index {cut_index} out of range: cannot cut all {net.depth} blocks"
            )
        self.net = net
        self.cut_index = cut_index
        main_shape = net.blocks[cut_index].in_shape
        parts: list[tuple[str, int | None, tuple[int, ...]]] = [("main", None, main_shape)]
        for src, dst in sorted(net.skip_topology):
            if src < cut_index <= dst:
                parts.append((f"skip{src}to{dst}", src, net.blocks[dst].skip_shapes[src]))
        self.parts = parts
        self.input_dim = sum(prod(shape) for _, _, shape in parts)

    @property
    def out_shape(self) -> tuple[int, int, int]:
        return self.net.out_shape

    @property
    def output_dim(self) -> int:
        return self.net.output_dim

    def unpack(self, zc: Tensor) -> tuple[Tensor, dict]:
        """Split a flat cut input into the batched main tensor and skip values."""
        if zc.shape != (self.input_dim,):
            raise ad.ShapeError(f"expected cut input ({self.input_dim},), got {zc.shape}")
        offset = 0
        main = None
        injected: dict[int, Tensor] = {}
        for name, src, shape in self.parts:
            size = prod(shape)
            flat = ad.narrow(zc, offset, size)
            value = ad.reshape(flat, (1,) + shape)
            offset += size
            if name == "main":
                main = value
            else:
                injected[src] = value
        return main, injected

    def forward(self, zc: Tensor | np.ndarray) -> Tensor:
        zc = zc if isinstance(zc, Tensor) else Tensor(zc)
        main, injected = self.unpack(zc)
        out = self.net._run_blocks(self.cut_index, main, injected)
        return ad.reshape(out, self.net.out_shape)

    def params(self) -> list[tuple[str, Tensor]]:
        out = []
        for b in self.net.blocks[self.cut_index :]:
            out.extend(b.params())
        return out


def cut(net: GeneratorNet, c: int) -> CutGenerator:
    """Remove the first ``c`` blocks; ``c=0`` reproduces the uncut generator."""
    return CutGenerator(net, c)


def forward_cut(gc: CutGenerator, zc: Tensor | np.ndarray) -> Tensor:
    return gc.forward(zc)


def lift(net: GeneratorNet, z0: Tensor | np.ndarray, c: int) -> Tensor:
    """Map an original latent into the cut input space of ``cut(net, c)``.

    Evaluates the removed blocks and packs every boundary-crossing tensor in
    canonical order, so forward_cut(cut(net, c), lift(net, z0, c)) equals
    forward(net, z0) exactly.
    """
    gc = CutGenerator(net, c)
    z0 = z0 if isinstance(z0, Tensor) else Tensor(z0)
    if z0.shape != (net.latent_dim,):
        raise ad.ShapeError(f"expected latent ({net.latent_dim},), got {z0.shape}")
    if c == 0:
        return Tensor(z0.data.copy())
    x = ad.reshape(Tensor(z0.data), (1, net.latent_dim))
    cache: dict[int, Tensor] = {}
    for b in net.blocks[:c]:
        x = b.forward(x, cache)
        cache[b.index] = x
    pieces = []
    for name, src, shape in gc.parts:
        value = x if name == "main" else cache[src]
        pieces.append(value.data.reshape(-1))
    return Tensor(np.concatenate(pieces))


def sample(net: GeneratorNet, count: int, seed: int, return_latents: bool = False):
    """Draw ``count`` images from i.i.d. standard-normal latents."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, net.latent_dim))
    images = net.forward_batch(z).data
    return (images, z) if return_latents else images


def param_count(obj: GeneratorNet | CutGenerator) -> int:
    """Number of weight scalars (all blocks for a net, kept blocks for a cut)."""
    return sum(p.size for _, p in obj.params())


def overparam_ratio(tunable_dim: int, n: int) -> float:
    """Tunable parameters at inversion time divided by pixel count."""
    if n <= 0:
        raise ValueError("pixel count must be positive")
    return tunable_dim / n


# ---------------------------------------------------------------------------
# recipes


def _dense(rng, k_in, k_out):
    w = Tensor(rng.normal(0.0, 1.0 / np.sqrt(k_in), (k_in, k_out)))
    return Dense(w, Tensor(np.zeros(k_out)))


def _conv(rng, c_in, c_out, k, stride, pad):
    w = Tensor(rng.normal(0.0, 1.0 / np.sqrt(c_in * k * k), (c_out, c_in, k, k)))
    return Conv(w, Tensor(np.zeros(c_out)), stride, pad)


def _convT(rng, c_in, c_out, k, stride, pad):
    w = Tensor(rng.normal(0.0, 1.0 / np.sqrt(c_in * k * k), (c_in, c_out, k, k)))
    return ConvTranspose(w, Tensor(np.zeros(c_out)), stride, pad)


def _build_dcgan_mini(rng) -> GeneratorNet:
    blocks = [
        Block(0, [_dense(rng, 32, 1024), Reshape((64, 4, 4)), Activation("relu")], (32,), (64, 4, 4)),
        Block(1, [_convT(rng, 64, 32, 4, 2, 1), Activation("elu")], (64, 4, 4), (32, 8, 8)),
        Block(2, [_convT(rng, 32, 16, 4, 2, 1), Activation("elu")], (32, 8, 8), (16, 16, 16)),
        Block(3, [_convT(rng, 16, 1, 4, 2, 1), Activation("tanh")], (16, 16, 16), (1, 32, 32)),
    ]
    return GeneratorNet("dcgan-mini", 32, blocks, (1, 32, 32))


def _build_began_mini(rng) -> GeneratorNet:
    # one skip: block 0's (16,8,8) output re-enters block 2 after x2 upsampling
    blocks = [
        Block(0, [_dense(rng, 32, 1024), Reshape((16, 8, 8)), Activation("elu")], (32,), (16, 8, 8)),
        Block(1, [_conv(rng, 16, 16, 3, 1, 1), Activation("elu"), Upsample(2)], (16, 8, 8), (16, 16, 16)),
        Block(
            2,
            [_conv(rng, 16, 16, 3, 1, 1), Activation("elu"), Upsample(2)],
            (16, 16, 16),
            (16, 32, 32),
            skip_sources=(0,),
            skip_factors={0: 2},
            skip_shapes={0: (16, 8, 8)},
        ),
        Block(3, [_conv(rng, 16, 1, 3, 1, 1), Activation("tanh")], (16, 32, 32), (1, 32, 32)),
    ]
    return GeneratorNet("began-mini", 32, blocks, (1, 32, 32))


def _build_vae_mini(rng) -> GeneratorNet:
    blocks = [
        Block(0, [_dense(rng, 32, 512), Reshape((32, 4, 4)), Activation("elu")], (32,), (32, 4, 4)),
        Block(1, [_convT(rng, 32, 32, 4, 2, 1), Activation("elu")], (32, 4, 4), (32, 8, 8)),
        Block(2, [_convT(rng, 32, 16, 4, 2, 1), Activation("elu")], (32, 8, 8), (16, 16, 16)),
        Block(3, [_convT(rng, 16, 1, 4, 2, 1), Activation("tanh")], (16, 16, 16), (1, 32, 32)),
    ]
    return GeneratorNet("vae-mini", 32, blocks, (1, 32, 32))


RECIPES = {
    "dcgan-mini": _build_dcgan_mini,
    "began-mini": _build_began_mini,
    "vae-mini": _build_vae_mini,
}


def build_generator(recipe: str, seed: int = 0) -> GeneratorNet:
    """Construct a recipe with freshly initialized (untrained) weights."""
    if recipe not in RECIPES:
        raise ValueError(f"unknown recipe {recipe!r}; known: {sorted(RECIPES)}")
    return RECIPES[recipe](np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# weight files: little-endian binary, magic GSGN, CRC32 trailer

_MAGIC = b"GSGN"
_VERSION = 1


def save_weights(net: GeneratorNet, path) -> None:
    """Write a self-describing weight file (recipe, dims, topology, f64 payload)."""
    chunks = [_MAGIC, struct.pack("<I", _VERSION)]
    recipe_b = net.recipe.encode()
    chunks.append(struct.pack("<I", len(recipe_b)))
    chunks.append(recipe_b)
    chunks.append(struct.pack("<I", net.latent_dim))
    chunks.append(struct.pack("<3I", *net.out_shape))
    chunks.append(struct.pack("<I", len(net.skip_topology)))
    for src, dst in net.skip_topology:
        chunks.append(struct.pack("<2I", src, dst))
    params = net.params()
    chunks.append(struct.pack("<I", len(params)))
    for name, p in params:
        name_b = name.encode()
        chunks.append(struct.pack("<I", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<I", p.ndim))
        chunks.append(struct.pack(f"<{p.ndim}I", *p.shape))
    for _, p in params:
        chunks.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    body = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise WeightFormatError("truncated weight file")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_weights(path, recipe: str | None = None) -> GeneratorNet:
    """Load a weight file, verifying checksum and architecture metadata.

    Pass ``recipe`` to require a specific architecture; a mismatch raises
    WeightFormatError rather than returning a structurally wrong net.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12:
        raise WeightFormatError("truncated weight file")
    body, trailer = raw[:-4], raw[-4:]
    if struct.unpack("<I", trailer)[0] != zlib.crc32(body) & 0xFFFFFFFF:
        raise WeightFormatError("checksum mismatch: file corrupted")
    r = _Reader(body)
    if r.take(4) != _MAGIC:
        raise WeightFormatError("bad magic: not a generator weight file")
    version = r.u32()
    if version != _VERSION:
        raise WeightFormatError(f"unsupported weight file version {version}")
    file_recipe = r.take(r.u32()).decode()
    if recipe is not None and file_recipe != recipe:
        raise WeightFormatError(f"weight file is for recipe {file_recipe!r}, expected {recipe!r}")
    latent_dim = r.u32()
    out_shape = struct.unpack("<3I", r.take(12))
    n_skips = r.u32()
    skips = tuple(struct.unpack("<2I", r.take(8)) for _ in range(n_skips))
    n_params = r.u32()
    table = []
    for _ in range(n_params):
        name = r.take(r.u32()).decode()
        ndim = r.u32()
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        table.append((name, shape))

    net = build_generator(file_recipe, seed=0)
    if net.latent_dim != latent_dim or net.out_shape != out_shape or net.skip_topology != skips:
        raise WeightFormatError("weight file dimensions do not match the recipe")
    params = net.params()
    if [(n, p.shape) for n, p in params] != table:
        raise WeightFormatError("weight file parameter table does not match the recipe")
    for _, p in params:
        payload = r.take(8 * p.size)
        p.data = np.frombuffer(payload, dtype="<f8").reshape(p.shape).copy()
    if r.pos != len(body):
        raise WeightFormatError("trailing bytes after parameter payload")
    return net
