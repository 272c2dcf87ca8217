"""Wire encoding shared with the model server: base64 tensors and RLE masks.

Tensors travel as little-endian float32 bytes in C order with an explicit
shape list. Masks travel run-length encoded over the flattened C-order
array, counts alternating runs of zeros and ones, starting with zeros.
"""

import base64

import numpy as np

from ..errors import ContractViolationError


def encode_tensor(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    return {
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
        "shape": list(arr.shape),
        "dtype": "float32",
    }


def decode_tensor(obj: dict, what: str = "tensor") -> np.ndarray:
    try:
        raw = base64.b64decode(obj["data"], validate=True)
        shape = tuple(int(s) for s in obj["shape"])
        dtype = obj.get("dtype", "float32")
    except (KeyError, TypeError, ValueError) as exc:
        raise ContractViolationError(f"malformed {what} payload: {exc}") from exc
    if dtype != "float32":
        raise ContractViolationError(f"{what}: unsupported dtype {dtype!r}")
    expected = int(np.prod(shape)) * 4 if shape else 4
    if len(raw) != expected:
        raise ContractViolationError(
            f"{what}: payload {len(raw)} bytes, shape {shape} needs {expected}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


def rle_encode(mask: np.ndarray) -> dict:
    """Run-length encode a bool mask; counts start with a (possibly 0) zero-run."""
    flat = np.asarray(mask, dtype=bool).ravel(order="C")
    if flat.size == 0:
        counts: list[int] = []
    else:
        boundaries = np.nonzero(np.diff(flat))[0] + 1
        edges = np.concatenate([[0], boundaries, [flat.size]])
        counts = np.diff(edges).astype(int).tolist()
        if flat[0]:
            counts.insert(0, 0)
    return {
        "counts": counts,
        "shape": [int(s) for s in mask.shape],
        "order": "C",
    }


def rle_decode(obj: dict) -> np.ndarray:
    try:
        counts = [int(c) for c in obj["counts"]]
        shape = tuple(int(s) for s in obj["shape"])
        order = obj.get("order", "C")
    except (KeyError, TypeError, ValueError) as exc:
        raise ContractViolationError(f"malformed RLE payload: {exc}") from exc
    if order != "C":
        raise ContractViolationError(f"unsupported RLE order {order!r}")
    total = int(np.prod(shape)) if shape else 0
    if sum(counts) != total:
        raise ContractViolationError(
            f"RLE counts sum {sum(counts)} != mask size {total}")
    if any(c < 0 for c in counts):
        raise ContractViolationError("negative RLE run length")
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for c in counts:
        if value:
            flat[pos:pos + c] = True
        pos += c
        value = not value
    return flat.reshape(shape)
