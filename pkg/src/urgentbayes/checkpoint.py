"""Binary checkpoint format.

Layout: a magic line, a little-endian uint32 format version, a
length-prefixed JSON header (model kind, hyperparameters, sampling
configs, vocabulary tokens in id order), then named parameter blocks.
Each block stores the name, the shape, and the values as row-major
float64 little-endian bytes. Loading rejects unknown versions, bad
magic, truncation, and any name or shape that disagrees with the model
rebuilt from the header.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import Vocabulary
from .encoder import BaseClassifier, HyperParams
from .errors import CheckpointError
from .mcd import McdConfig
from .vi import ViConfig

MAGIC = b"URGENTBAYES-CKPT\n"
FORMAT_VERSION = 1


@dataclass
class CheckpointData:
    model_kind: str
    hyperparams: HyperParams
    mcd_cfg: McdConfig | None
    vi_cfg: ViConfig | None
    vocab_tokens: list[str]
    params: dict[str, np.ndarray]

    def vocabulary(self) -> Vocabulary:
        token_to_id = {tok: i for i, tok in enumerate(self.vocab_tokens)}
        return Vocabulary(
            token_to_id=token_to_id,
            id_to_token=list(self.vocab_tokens),
            min_frequency=1,
        )


def _write_block(out, name: str, array: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    out.write(struct.pack("<I", len(encoded)))
    out.write(encoded)
    out.write(struct.pack("<I", array.ndim))
    for dim in array.shape:
        out.write(struct.pack("<Q", dim))
    out.write(np.ascontiguousarray(array, dtype="<f8").tobytes())


def save_checkpoint(
    path: str,
    model: BaseClassifier,
    vocab_tokens: list[str],
) -> None:
    header = {
        "model_kind": model.kind,
        "hyperparams": asdict(model.hp),
        "mcd": asdict(model.cfg) if model.kind == "mcd" else None,
        "vi": asdict(model.cfg) if model.kind == "vi" else None,
        "vocab": list(vocab_tokens),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    params = model.parameters()
    with open(path, "wb") as out:
        out.write(MAGIC)
        out.write(struct.pack("<I", FORMAT_VERSION))
        out.write(struct.pack("<Q", len(header_bytes)))
        out.write(header_bytes)
        out.write(struct.pack("<I", len(params)))
        for p in params:
            _write_block(out, p.name, p.data)


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        chunk = self.blob[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def load_checkpoint(path: str) -> CheckpointData:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    r = _Reader(blob, path)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version {version}, expected {FORMAT_VERSION}"
        )
    header_len = r.u64()
    try:
        header = json.loads(r.take(header_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    for key in ("model_kind", "hyperparams", "vocab"):
        if key not in header:
            raise CheckpointError(f"{path}: header missing {key!r}")

    n_params = r.u32()
    params: dict[str, np.ndarray] = {}
    for _ in range(n_params):
        name = r.take(r.u32()).decode("utf-8")
        ndim = r.u32()
        shape = tuple(r.u64() for _ in range(ndim))
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        values = np.frombuffer(r.take(count * 8), dtype="<f8")
        if name in params:
            raise CheckpointError(f"{path}: duplicate parameter block {name!r}")
        params[name] = values.reshape(shape).astype(np.float64)
    if r.pos != len(blob):
        raise CheckpointError(f"{path}: trailing bytes after last block")

    try:
        hp = HyperParams(**header["hyperparams"])
        hp.validate()
        mcd_cfg = McdConfig(**header["mcd"]) if header.get("mcd") else None
        vi_cfg = ViConfig(**header["vi"]) if header.get("vi") else None
    except TypeError as exc:
        raise CheckpointError(f"{path}: bad header fields: {exc}") from exc
    return CheckpointData(
        model_kind=header["model_kind"],
        hyperparams=hp,
        mcd_cfg=mcd_cfg,
        vi_cfg=vi_cfg,
        vocab_tokens=list(header["vocab"]),
        params=params,
    )


def restore_model(data: CheckpointData) -> BaseClassifier:
    """Rebuild a model from checkpoint data, verifying every block."""
    from .training import build_model

    vocab_size = len(data.vocab_tokens)
    placeholder = np.zeros((vocab_size, data.hyperparams.embed_dim))
    model = build_model(
        data.hyperparams,
        placeholder,
        data.model_kind,
        seed=0,
        mcd_cfg=data.mcd_cfg,
        vi_cfg=data.vi_cfg,
    )
    expected = {p.name: p for p in model.parameters()}
    missing = sorted(set(expected) - set(data.params))
    extra = sorted(set(data.params) - set(expected))
    if missing or extra:
        raise CheckpointError(
            f"parameter blocks do not match model: missing {missing}, unexpected {extra}"
        )
    for name, p in expected.items():
        stored = data.params[name]
        if stored.shape != p.data.shape:
            raise CheckpointError(
                f"shape mismatch for {name!r}: checkpoint {stored.shape}, model {p.data.shape}"
            )
        p.data[...] = stored
    return model
