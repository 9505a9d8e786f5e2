"""Token layout of multi-frame sequences and reproducible binary fixtures.

A frame carries ``n_camera`` camera tokens and ``n_register`` register tokens
first, then its H x W patch tokens in row-major order.  A sequence of S frames
is stored densely as an (S, N, C) array with N tokens per frame; flattening
the frame axis gives the single global sequence of K = S * N tokens that
global attention runs over.  K is defined here and nowhere else.

Tensors are frozen after construction (read-only buffers) so they can be
shared across threads without copies.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .kernels import rng

DUMP_MAGIC = b"TOKS"
DUMP_VERSION = 1
_HEADER = struct.Struct("<4sIIIIIIII")  # magic, version, S, H, W, n_camera, n_register, C, elem_width


class DumpError(ValueError):
    """Base class for malformed sequence dumps."""


class BadMagicError(DumpError):
    """The byte stream does not start with the dump magic tag."""


class VersionMismatchError(DumpError):
    """The dump was written by an incompatible format version."""


class TruncatedPayloadError(DumpError):
    """Header-declared payload size disagrees with the bytes present."""


@dataclass(frozen=True)
class FrameLayout:
    """Shape of one frame's token block."""

    h: int = 8
    w: int = 8
    n_camera: int = 1
    n_register: int = 4
    channels: int = 32

    def __post_init__(self):
        if self.h < 1 or self.w < 1 or self.channels < 1:
            raise ValueError(f"grid and channel sizes must be >= 1, got {self}")
        if self.n_camera < 0 or self.n_register < 0:
            raise ValueError(f"special-token counts must be >= 0, got {self}")

    @property
    def n_special(self) -> int:
        return self.n_camera + self.n_register

    @property
    def tokens_per_frame(self) -> int:
        return self.n_special + self.h * self.w


def image_grid_layout(channels: int, longest_side: int = 518, patch: int = 14,
                      n_camera: int = 1, n_register: int = 4) -> FrameLayout:
    """Layout whose patch grid matches a square image encoded at ``patch``-pixel
    granularity (default 518 px / 14 px patches -> a 37 x 37 grid)."""
    side = longest_side // patch
    return FrameLayout(h=side, w=side, n_camera=n_camera,
                       n_register=n_register, channels=channels)


@dataclass(frozen=True)
class TokenTensor:
    """An (S, N, C) block of frame tokens; immutable once constructed."""

    layout: FrameLayout
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = self.values
        if v.ndim != 3:
            raise ValueError(f"token values must be (S, N, C), got shape {v.shape}")
        s, n, c = v.shape
        if n != self.layout.tokens_per_frame or c != self.layout.channels:
            raise ValueError(
                f"values shape {v.shape} does not match layout "
                f"(N={self.layout.tokens_per_frame}, C={self.layout.channels})")
        if s < 1:
            raise ValueError("a sequence needs at least one frame")
        if not v.flags.c_contiguous:
            v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def tokens_per_frame(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def total_tokens(self) -> int:
        """K = S * N, the length of the flattened global sequence."""
        return self.frames * self.tokens_per_frame

    @property
    def dtype(self) -> np.dtype:
        return self.values.dtype

    def flat(self) -> np.ndarray:
        """The (K, C) global sequence view (frame-major, token order preserved)."""
        return self.values.reshape(self.total_tokens, self.channels)

    def token_frames(self) -> np.ndarray:
        """Frame index of each token in the flattened global sequence."""
        return np.repeat(np.arange(self.frames), self.tokens_per_frame)

    def with_values(self, values: np.ndarray) -> "TokenTensor":
        return TokenTensor(self.layout, values)

    @classmethod
    def from_flat(cls, flat: np.ndarray, layout: FrameLayout, frames: int) -> "TokenTensor":
        return cls(layout, flat.reshape(frames, layout.tokens_per_frame, layout.channels))


def generate_synthetic(frames: int, layout: FrameLayout, seed: int,
                       dtype=np.float32) -> TokenTensor:
    """Seeded unit-variance Gaussian tokens; deterministic per (frames, layout, seed)."""
    if frames < 1:
        raise ValueError("frames must be >= 1")
    values = rng(seed).standard_normal(
        (frames, layout.tokens_per_frame, layout.channels), dtype=np.dtype(dtype))
    return TokenTensor(layout, values)


def split_grid(t: TokenTensor, frame: int) -> tuple[np.ndarray, np.ndarray]:
    """Split one frame into (special tokens, H x W x C patch grid).

    Concatenating the two parts in layout order reproduces the frame exactly.
    """
    if not 0 <= frame < t.frames:
        raise IndexError(f"frame {frame} out of range for {t.frames} frames")
    lay = t.layout
    row = t.values[frame]
    special = row[:lay.n_special]
    grid = row[lay.n_special:].reshape(lay.h, lay.w, lay.channels)
    return special, grid


def save_dump(t: TokenTensor) -> bytes:
    """Serialize to the versioned little-endian dump format (bitwise round-trip)."""
    lay = t.layout
    elem_width = t.values.dtype.itemsize
    header = _HEADER.pack(DUMP_MAGIC, DUMP_VERSION, t.frames, lay.h, lay.w,
                          lay.n_camera, lay.n_register, lay.channels, elem_width)
    payload = np.ascontiguousarray(t.values, dtype=t.values.dtype.newbyteorder("<"))
    return header + payload.tobytes()


def load_dump(data: bytes) -> TokenTensor:
    """Parse bytes produced by save_dump; rejects bad magic, wrong version,
    and payload-size mismatches with distinct error types."""
    if len(data) < _HEADER.size or data[:4] != DUMP_MAGIC:
        raise BadMagicError("not a token dump: bad magic tag")
    magic, version, s, h, w, n_cam, n_reg, c, elem_width = _HEADER.unpack_from(data)
    if version != DUMP_VERSION:
        raise VersionMismatchError(f"dump version {version}, expected {DUMP_VERSION}")
    if elem_width not in (4, 8):
        raise DumpError(f"unsupported element width {elem_width}")
    layout = FrameLayout(h=h, w=w, n_camera=n_cam, n_register=n_reg, channels=c)
    expected = s * layout.tokens_per_frame * c * elem_width
    payload = data[_HEADER.size:]
    if len(payload) != expected:
        raise TruncatedPayloadError(
            f"payload is {len(payload)} bytes, header declares {expected}")
    dtype = np.dtype("<f4" if elem_width == 4 else "<f8")
    values = np.frombuffer(payload, dtype=dtype).reshape(
        s, layout.tokens_per_frame, c).astype(dtype.newbyteorder("="))
    return TokenTensor(layout, values)
