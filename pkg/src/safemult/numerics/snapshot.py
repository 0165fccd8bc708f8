"""Byte-stable parameter snapshots.

Format (one net per blob)::

    SAFEMULT-MLP 1\\n
    sizes=<n0>,<n1>,...,<nk>\\n
    activation=<tanh|relu>\\n
    head=<identity|sigmoid|squash>\\n
    count=<number of float64 values>\\n
    \\n
    <count little-endian float64 values: W0 row-major, b0, W1, b1, ...>
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .mlp import Mlp

MAGIC = b"SAFEMULT-MLP 1\n"


def dumps(net: Mlp) -> bytes:
    flat = net.get_flat().astype("<f8")
    header = (
        f"sizes={','.join(str(n) for n in net.sizes)}\n"
        f"activation={net.activation}\n"
        f"head={net.head}\n"
        f"count={flat.size}\n\n"
    ).encode("ascii")
    return MAGIC + header + flat.tobytes()


def loads(blob: bytes) -> Mlp:
    if not blob.startswith(MAGIC):
        raise ValueError("not a SAFEMULT-MLP snapshot")
    body = blob[len(MAGIC) :]
    head, sep, payload = body.partition(b"\n\n")
    if not sep:
        raise ValueError("truncated snapshot header")
    fields = dict(line.split("=", 1) for line in head.decode("ascii").splitlines())
    sizes = [int(n) for n in fields["sizes"].split(",")]
    net = Mlp(sizes, activation=fields["activation"], head=fields["head"], seed=0)
    count = int(fields["count"])
    flat = np.frombuffer(payload, dtype="<f8")
    if flat.size != count or count != net.n_params:
        raise ValueError(f"snapshot holds {flat.size} values, header says {count}, net needs {net.n_params}")
    net.set_flat(flat.astype(np.float64))
    return net


def save(net: Mlp, path: str | Path) -> None:
    Path(path).write_bytes(dumps(net))


def load(path: str | Path) -> Mlp:
    return loads(Path(path).read_bytes())
