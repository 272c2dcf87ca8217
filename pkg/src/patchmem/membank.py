"""Memory banks: build from reference images, cap, persist, query.

Six banks per category: {global, individual} x {small, middle, image}.
Global banks hold window class tokens and patch tokens of full reference
images; individual banks hold the same for each segmented object crop.
Augmented variants (flips, small rotations, small translations) multiply
the rows. Distance is (1 - cos)/2 over unit-norm rows, minimized exactly
by a blocked dot-product scan.

File format (little-endian): magic "MSMB", version u16, descriptor JSON
(u32 length prefix), bank count u8, then per bank: kind u8, scale u8,
rows u64, dim u32, raw float32 row-major matrix, provenance JSON (u32
length prefix); finally CRC32 (u32) of everything before it.
"""

import json
import struct
import zlib
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage

from . import kernels
from .config import AugmentationSpec, EngineConfig
from .decompose import (
    PatchGrid,
    Scale,
    enumerate_windows,
    resize_to_canonical,
    validate_image,
)
from .errors import BankFormatError, ContractViolationError, InvalidInputError
from .providers.base import Provider, ProviderDescriptor

FORMAT_MAGIC = b"MSMB"
FORMAT_VERSION = 1


class BankKind(str, Enum):
    GLOBAL = "global"
    INDIVIDUAL = "individual"


_KIND_CODE = {BankKind.GLOBAL: 0, BankKind.INDIVIDUAL: 1}
_SCALE_CODE = {Scale.SMALL: 0, Scale.MIDDLE: 1, Scale.IMAGE: 2}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}
_CODE_SCALE = {v: k for k, v in _SCALE_CODE.items()}


@dataclass(frozen=True)
class BankQueryResult:
    distance: float
    nearest_row: int


class MemoryBank:
    """Frozen matrix of unit-norm reference embeddings with provenance."""

    def __init__(self, kind: BankKind, scale: Scale, embeddings: np.ndarray,
                 provenance: list):
        emb = np.ascontiguousarray(embeddings, dtype=np.float32)
        if emb.ndim != 2 or emb.shape[0] == 0:
            raise InvalidInputError(f"bank needs a nonempty matrix, got {emb.shape}")
        if len(provenance) != emb.shape[0]:
            raise InvalidInputError(
                f"{len(provenance)} provenance rows for {emb.shape[0]} embeddings")
        norms = np.linalg.norm(emb.astype(np.float64), axis=1)
        bad = np.abs(norms - 1.0) > 1e-5
        if bad.any():
            emb = emb.copy()
            emb[bad] = (emb[bad].astype(np.float64) / norms[bad, None]).astype(np.float32)
        emb.setflags(write=False)
        self.kind = kind
        self.scale = scale
        self.embeddings = emb
        self.provenance = tuple(provenance)

    @property
    def rows(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def query(self, e: np.ndarray) -> BankQueryResult:
        d, idx = self.query_many(np.asarray(e, dtype=np.float32)[None, :])
        return BankQueryResult(distance=float(d[0]), nearest_row=int(idx[0]))

    def query_many(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Exact minimum (1-cos)/2 distance and argmin row per query."""
        q = np.asarray(queries, dtype=np.float32)
        if q.ndim != 2 or q.shape[1] != self.dim:
            raise ContractViolationError(
                f"query dim {q.shape} does not match bank dim {self.dim}")
        best_dot, best_row = kernels.bank_search(q, self.embeddings)
        dist = (1.0 - best_dot.astype(np.float64)) / 2.0
        return np.clip(dist, 0.0, 1.0), best_row


BankSetDict = dict  # {(BankKind, Scale): MemoryBank}


@dataclass(frozen=True)
class BankSet:
    descriptor: ProviderDescriptor
    banks: BankSetDict

    def bank(self, kind: BankKind, scale: Scale) -> MemoryBank:
        return self.banks[(kind, scale)]

    def __iter__(self):
        return iter(self.banks.items())


def _mean_color(image: np.ndarray) -> np.ndarray:
    return image.reshape(-1, 3).mean(axis=0, dtype=np.float64)


def translate_image(image: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Shift by (dx right, dy down) pixels, filling with the image mean."""
    h, w = image.shape[:2]
    out = np.empty_like(image)
    out[:] = _mean_color(image).astype(image.dtype)
    src_r = slice(max(0, -dy), min(h, h - dy))
    src_c = slice(max(0, -dx), min(w, w - dx))
    dst_r = slice(max(0, dy), min(h, h + dy))
    dst_c = slice(max(0, dx), min(w, w + dx))
    out[dst_r, dst_c] = image[src_r, src_c]
    return out


def rotate_image(image: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the center, bilinear, mean-fill outside the frame."""
    mean = _mean_color(image).astype(np.float64)
    shifted = image.astype(np.float64) - mean
    rot = ndimage.rotate(shifted, degrees, axes=(1, 0), reshape=False,
                         order=1, mode="constant", cval=0.0)
    return np.clip(rot + mean, 0.0, 1.0).astype(np.float32)


def augment_variants(image: np.ndarray,
                     spec: AugmentationSpec) -> list[tuple[str, np.ndarray]]:
    """Named augmented copies of one canonical image, identity first."""
    arr = validate_image(image)
    out = [("identity", arr)]
    if spec.h_flip:
        out.append(("h_flip", arr[:, ::-1].copy()))
    if spec.v_flip:
        out.append(("v_flip", arr[::-1, :].copy()))
    for deg in spec.rotations:
        out.append((f"rot{deg:+g}", rotate_image(arr, deg)))
    for dx, dy in spec.translations:
        out.append((f"shift{dx:+d},{dy:+d}", translate_image(arr, dx, dy)))
    return out


def _collect_image(provider: Provider, image: np.ndarray, cfg: EngineConfig,
                   image_id: str, aug_id: str, sink: dict):
    """Append one image's window and patch embeddings to per-scale lists."""
    grid = PatchGrid.for_image(image.shape[0], image.shape[1], cfg.patch_size)
    for scale, stride in ((Scale.SMALL, cfg.stride_small),
                          (Scale.MIDDLE, cfg.stride_middle)):
        windows = enumerate_windows(grid, scale, stride)
        for widx, w in enumerate(windows):
            sink[scale][0].append(provider.embed_window(image, w))
            sink[scale][1].append((image_id, aug_id, widx))
    tokens = provider.embed_image(image).patch_tokens
    flat = tokens.reshape(-1, tokens.shape[2])
    for pidx in range(flat.shape[0]):
        sink[Scale.IMAGE][0].append(flat[pidx])
        sink[Scale.IMAGE][1].append((image_id, aug_id, pidx))


def build_banks(provider: Provider, refs: list[np.ndarray],
                cfg: EngineConfig) -> BankSet:
    """Build all six frozen banks from the few-shot reference images.

    Global banks see augmented variants of each full canonical image;
    individual banks see augmented variants of every object crop (whole
    image when segmentation finds nothing). Each bank is capped at
    cfg.capacity_cap rows by a seeded subsample.
    """
    if not refs:
        raise InvalidInputError("need at least one reference image")
    from .zeroshot import segment_crops

    sinks = {kind: {s: ([], []) for s in Scale} for kind in BankKind}
    for ridx, ref in enumerate(refs):
        original = validate_image(ref)
        canonical = resize_to_canonical(original, cfg.canonical_side)
        image_id = f"ref{ridx}"
        for aug_id, variant in augment_variants(canonical, cfg.augment):
            _collect_image(provider, variant, cfg, image_id, aug_id,
                           sinks[BankKind.GLOBAL])
        for cidx, crop in enumerate(segment_crops(provider, original, cfg)):
            crop_id = f"{image_id}/obj{cidx}"
            for aug_id, variant in augment_variants(crop.crop, cfg.augment):
                _collect_image(provider, variant, cfg, crop_id, aug_id,
                               sinks[BankKind.INDIVIDUAL])

    banks = {}
    for kind in BankKind:
        for scale in Scale:
            embs, prov = sinks[kind][scale]
            bank = MemoryBank(kind, scale, np.stack(embs), prov)
            banks[(kind, scale)] = subsample(bank, cfg.capacity_cap, cfg.seed)
    return BankSet(descriptor=provider.descriptor(), banks=banks)


def subsample(bank: MemoryBank, cap: int, seed: int) -> MemoryBank:
    """Seeded uniform sample without replacement down to cap rows."""
    if cap < 1:
        raise InvalidInputError(f"cap must be >= 1, got {cap}")
    if bank.rows <= cap:
        return bank
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(bank.rows, size=cap, replace=False))
    return MemoryBank(bank.kind, bank.scale, bank.embeddings[keep],
                      [bank.provenance[i] for i in keep])


def save_banks(bank_set: BankSet, path) -> None:
    d = bank_set.descriptor
    desc_blob = json.dumps({
        "name": d.name, "dim": d.dim, "patch_size": d.patch_size,
        "deterministic": d.deterministic,
    }, sort_keys=True).encode()
    parts = [FORMAT_MAGIC, struct.pack("<H", FORMAT_VERSION),
             struct.pack("<I", len(desc_blob)), desc_blob,
             struct.pack("<B", len(bank_set.banks))]
    for (kind, scale), bank in sorted(
            bank_set.banks.items(),
            key=lambda kv: (_KIND_CODE[kv[0][0]], _SCALE_CODE[kv[0][1]])):
        prov_blob = json.dumps([list(p) for p in bank.provenance]).encode()
        parts.append(struct.pack("<BBQI", _KIND_CODE[kind], _SCALE_CODE[scale],
                                 bank.rows, bank.dim))
        parts.append(np.ascontiguousarray(bank.embeddings, dtype="<f4").tobytes())
        parts.append(struct.pack("<I", len(prov_blob)))
        parts.append(prov_blob)
    payload = b"".join(parts)
    payload += struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(payload)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise BankFormatError("truncated bank file")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_banks(path, expected_descriptor: ProviderDescriptor | None = None) -> BankSet:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(FORMAT_MAGIC) + 2 + 4:
        raise BankFormatError("file too short to be a bank file")
    body, crc_bytes = blob[:-4], blob[-4:]
    (stored_crc,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise BankFormatError("checksum mismatch (corrupt or truncated file)")
    r = _Reader(body)
    if r.take(4) != FORMAT_MAGIC:
        raise BankFormatError("bad magic bytes")
    (version,) = r.unpack("<H")
    if version != FORMAT_VERSION:
        raise BankFormatError(f"unsupported bank format version {version}")
    (desc_len,) = r.unpack("<I")
    try:
        desc_d = json.loads(r.take(desc_len))
        descriptor = ProviderDescriptor(
            name=desc_d["name"], dim=int(desc_d["dim"]),
            patch_size=int(desc_d["patch_size"]),
            deterministic=bool(desc_d["deterministic"]))
    except (ValueError, KeyError, TypeError) as exc:
        raise BankFormatError(f"bad descriptor block: {exc}") from exc
    (count,) = r.unpack("<B")
    banks = {}
    for _ in range(count):
        kind_c, scale_c, rows, dim = r.unpack("<BBQI")
        if kind_c not in _CODE_KIND or scale_c not in _CODE_SCALE:
            raise BankFormatError(f"unknown bank kind/scale codes {kind_c}/{scale_c}")
        if dim != descriptor.dim:
            raise BankFormatError(
                f"bank dim {dim} conflicts with descriptor dim {descriptor.dim}")
        mat = np.frombuffer(r.take(rows * dim * 4), dtype="<f4").reshape(rows, dim)
        (prov_len,) = r.unpack("<I")
        try:
            prov = [tuple(p) for p in json.loads(r.take(prov_len))]
        except ValueError as exc:
            raise BankFormatError(f"bad provenance block: {exc}") from exc
        kind, scale = _CODE_KIND[kind_c], _CODE_SCALE[scale_c]
        banks[(kind, scale)] = MemoryBank(kind, scale, mat.copy(), prov)
    if r.pos != len(body):
        raise BankFormatError(f"{len(body) - r.pos} trailing bytes after banks")
    if expected_descriptor is not None and (
            descriptor.dim != expected_descriptor.dim
            or descriptor.patch_size != expected_descriptor.patch_size):
        raise ContractViolationError(
            f"bank descriptor {descriptor} does not match provider "
            f"{expected_descriptor}")
    return BankSet(descriptor=descriptor, banks=banks)
