"""Base64 float32 tensors and run-length-encoded masks.

The server half of the wire protocol: tensors travel as little-endian
float32 bytes in C order with an explicit shape list, masks as run
lengths over the flattened C-order array, alternating zero and one runs
starting with zeros (a leading 0 when the first pixel is set). Malformed
payloads raise ValueError, which the endpoints map to HTTP 400.
"""

import base64
import binascii

import numpy as np


def encode_tensor(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    return {
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
        "shape": list(arr.shape),
        "dtype": "float32",
    }


def decode_tensor(obj, what: str = "tensor") -> np.ndarray:
    if not isinstance(obj, dict):
        raise ValueError(f"{what} payload must be an object, got {type(obj).__name__}")
    try:
        raw = base64.b64decode(obj["data"], validate=True)
        shape = tuple(int(s) for s in obj["shape"])
    except (KeyError, TypeError, ValueError, binascii.Error) as exc:
        raise ValueError(f"malformed {what} payload: {exc}") from exc
    dtype = obj.get("dtype", "float32")
    if dtype != "float32":
        raise ValueError(f"{what}: unsupported dtype {dtype!r}")
    if any(s < 0 for s in shape):
        raise ValueError(f"{what}: negative dimension in shape {shape}")
    expected = int(np.prod(shape)) * 4 if shape else 4
    if len(raw) != expected:
        raise ValueError(
            f"{what}: payload {len(raw)} bytes, shape {shape} needs {expected}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


def rle_encode(mask: np.ndarray) -> dict:
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


def rle_decode(obj) -> np.ndarray:
    if not isinstance(obj, dict):
        raise ValueError(f"RLE payload must be an object, got {type(obj).__name__}")
    try:
        counts = [int(c) for c in obj["counts"]]
        shape = tuple(int(s) for s in obj["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed RLE payload: {exc}") from exc
    if obj.get("order", "C") != "C":
        raise ValueError(f"unsupported RLE order {obj.get('order')!r}")
    if any(c < 0 for c in counts):
        raise ValueError("negative RLE run length")
    total = int(np.prod(shape)) if shape else 0
    if sum(counts) != total:
        raise ValueError(f"RLE counts sum {sum(counts)} != mask size {total}")
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for c in counts:
        if value:
            flat[pos:pos + c] = True
        pos += c
        value = not value
    return flat.reshape(shape)
