"""Binary checkpoint format.

Layout (all integers and floats little-endian)::

    b"HGIN" | u32 version | u32 n + config text (utf-8, key = value)
    6 tensor tables: gen, disc, gen.m, gen.v, disc.m, disc.v
        u32 count, then per entry:
        u16 n + name | u8 dtype (0 = f64, 1 = f32) | u8 ndim | u32 * ndim shape | raw data
    state: u64 iteration | u64 epoch | f64 learning rate | u64 seed | u64 gen step | u64 disc step
"""

from __future__ import annotations

import io
import os
import struct
from pathlib import Path

import numpy as np

from .config import parse_config

MAGIC = b"HGIN"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_CODES = {np.dtype("float64"): 0, np.dtype("float32"): 1}
TABLES = ("gen", "disc", "gen.m", "gen.v", "disc.m", "disc.v")


class CheckpointError(ValueError):
    pass


def _write_table(buf: io.BytesIO, table: dict[str, np.ndarray]) -> None:
    buf.write(struct.pack("<I", len(table)))
    for name, arr in table.items():
        raw = name.encode()
        arr = np.asarray(arr)
        buf.write(struct.pack("<H", len(raw)) + raw)
        buf.write(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype=_DTYPES[_CODES[arr.dtype]]).tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def table(self) -> dict[str, np.ndarray]:
        (count,) = self.unpack("<I")
        out = {}
        for _ in range(count):
            (n,) = self.unpack("<H")
            name = self.take(n).decode()
            code, ndim = self.unpack("<BB")
            if code not in _DTYPES:
                raise CheckpointError(f"unknown dtype code {code} for {name}")
            shape = self.unpack(f"<{ndim}I")
            dt = _DTYPES[code]
            size = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
            arr = np.frombuffer(self.take(size), dtype=dt).reshape(shape)
            out[name] = arr.astype(dt.newbyteorder("="))
        return out


def encode_checkpoint(trainer) -> bytes:
    st = trainer.state
    buf = io.BytesIO()
    buf.write(MAGIC + struct.pack("<I", VERSION))
    text = trainer.cfg.to_text().encode()
    buf.write(struct.pack("<I", len(text)) + text)
    tables = {
        "gen": {p.name: p.data for p in trainer.gen.parameters()},
        "disc": {p.name: p.data for p in trainer.disc.parameters()},
        "gen.m": st.gen_opt.m, "gen.v": st.gen_opt.v,
        "disc.m": st.disc_opt.m, "disc.v": st.disc_opt.v,
    }
    for key in TABLES:
        _write_table(buf, tables[key])
    buf.write(struct.pack("<QQdQQQ", st.iteration, st.epoch, st.learning_rate, st.rng_seed,
                          st.gen_opt.step, st.disc_opt.step))
    return buf.getvalue()


def decode_checkpoint(data: bytes) -> dict:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    (n,) = r.unpack("<I")
    out = {"config": parse_config(r.take(n).decode())}
    for key in TABLES:
        out[key] = r.table()
    it, ep, lr, seed, gs, ds = r.unpack("<QQdQQQ")
    out["state"] = dict(iteration=it, epoch=ep, learning_rate=lr, rng_seed=seed, gen_step=gs, disc_step=ds)
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after checkpoint payload")
    return out


def save_checkpoint(path, trainer) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(trainer))
    os.replace(tmp, path)


def restore(trainer, ck: dict) -> None:
    from .training import AdamState, TrainingState

    for key, params in (("gen", trainer.gen.parameters()), ("disc", trainer.disc.parameters())):
        table = ck[key]
        names = [p.name for p in params]
        if sorted(names) != sorted(table):
            raise CheckpointError(f"{key} parameters in checkpoint do not match the network")
        for p in params:
            if table[p.name].shape != p.shape:
                raise CheckpointError(f"{p.name}: shape {table[p.name].shape} vs network {p.shape}")
            p.data = table[p.name].astype(p.dtype).copy()
            p.zero_grad()
    s = ck["state"]
    trainer.state = TrainingState(
        iteration=s["iteration"], epoch=s["epoch"], learning_rate=s["learning_rate"], rng_seed=s["rng_seed"],
        gen_opt=AdamState({k: v.copy() for k, v in ck["gen.m"].items()},
                          {k: v.copy() for k, v in ck["gen.v"].items()}, s["gen_step"]),
        disc_opt=AdamState({k: v.copy() for k, v in ck["disc.m"].items()},
                           {k: v.copy() for k, v in ck["disc.v"].items()}, s["disc_step"]),
    )


def load_trainer(path, corpus=None, **overrides):
    """Rebuild a :class:`Trainer` from a checkpoint file."""
    from .training import Trainer

    ck = decode_checkpoint(Path(path).read_bytes())
    cfg = ck["config"].replace(**overrides) if overrides else ck["config"]
    trainer = Trainer(cfg, corpus=corpus)
    restore(trainer, ck)
    return trainer


def load_generator(path):
    """Return (RunConfig, Generator) with weights from a checkpoint."""
    from .nets import Generator

    ck = decode_checkpoint(Path(path).read_bytes())
    gen = Generator(ck["config"].network())
    table = ck["gen"]
    for p in gen.parameters():
        if p.name not in table or table[p.name].shape != p.shape:
            raise CheckpointError(f"checkpoint does not match generator parameter {p.name}")
        p.data = table[p.name].astype(p.dtype).copy()
    return ck["config"], gen
