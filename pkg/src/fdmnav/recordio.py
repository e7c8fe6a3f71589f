"""Self-describing dataset containers for labeled rollout tuples.

Two interchangeable encodings share one header schema (beam count, horizon,
per-field dims):

- binary: header JSON line, then length-prefixed little-endian float32
  records (4-byte u32 length + concatenated fields in header order)
- jsonl: header JSON line, then one JSON object per record

The format is chosen by file extension (".bin" / ".jsonl") or explicitly.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = "fdmnav-records-v1"


def _header(fields: dict[str, int], meta: dict | None) -> dict:
    # explicit order key: the payload layout must survive any key reordering
    return {"magic": MAGIC, "fields": fields, "order": list(fields),
            "meta": meta or {}}


class RecordWriter:
    """Streaming writer; `fields` maps name -> flat per-record length."""

    def __init__(self, path: str, fields: dict[str, int], meta: dict | None = None,
                 fmt: str | None = None):
        self.fields = dict(fields)
        self.fmt = fmt or ("jsonl" if path.endswith(".jsonl") else "binary")
        if self.fmt not in ("binary", "jsonl"):
            raise ValueError(f"unknown format {self.fmt!r}")
        self._order = list(self.fields)
        self._tmp = f"{path}.tmp"
        self._path = path
        mode = "w" if self.fmt == "jsonl" else "wb"
        self._f = open(self._tmp, mode)
        header = json.dumps(_header(self.fields, meta), sort_keys=True)
        if self.fmt == "jsonl":
            self._f.write(header + "\n")
        else:
            self._f.write(header.encode() + b"\n")
        self.count = 0

    def write(self, record: dict[str, np.ndarray]):
        missing = set(self._order) - set(record)
        if missing:
            raise KeyError(f"record missing fields {sorted(missing)}")
        flats = []
        for name in self._order:
            arr = np.asarray(record[name], dtype=np.float32).ravel()
            if arr.size != self.fields[name]:
                raise ValueError(
                    f"field {name!r} has {arr.size} values, header says {self.fields[name]}")
            flats.append(arr)
        if self.fmt == "jsonl":
            doc = {name: np.round(flat, 6).tolist() for name, flat in zip(self._order, flats)}
            self._f.write(json.dumps(doc) + "\n")
        else:
            payload = np.concatenate(flats).astype("<f4").tobytes()
            self._f.write(struct.pack("<I", len(payload)))
            self._f.write(payload)
        self.count += 1

    def close(self):
        self._f.close()
        os.replace(self._tmp, self._path)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        if exc[0] is None:
            self.close()
        else:
            self._f.close()
            os.unlink(self._tmp)
        return False


def read_records(path: str, fmt: str | None = None):
    """Returns (header dict, list of {field: float32 array})."""
    fmt = fmt or ("jsonl" if path.endswith(".jsonl") else "binary")
    records = []
    if fmt == "jsonl":
        with open(path) as f:
            header = json.loads(f.readline())
            _check_header(header, path)
            for line in f:
                doc = json.loads(line)
                records.append({k: np.asarray(v, dtype=np.float32)
                                for k, v in doc.items()})
    else:
        with open(path, "rb") as f:
            header = json.loads(f.readline().decode())
            _check_header(header, path)
            fields = header["fields"]
            order = header["order"]
            sizes = [fields[name] for name in order]
            offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
            while True:
                raw = f.read(4)
                if not raw:
                    break
                (n_bytes,) = struct.unpack("<I", raw)
                flat = np.frombuffer(f.read(n_bytes), dtype="<f4")
                records.append({name: flat[offsets[i]:offsets[i + 1]].copy()
                                for i, name in enumerate(order)})
    return header, records


def _check_header(header, path):
    if header.get("magic") != MAGIC:
        raise ValueError(f"{path}: not a record dataset (bad magic)")


def write_fdm_tuples(path: str, tuples, beam_count: int, horizon: int,
                     fmt: str | None = None) -> int:
    """Dump (obs, cmds, xs, ys, ps) training arrays as one record per tuple."""
    obs, cmds, xs, ys, ps = tuples
    fields = {"obs": obs.shape[1], "cmds": horizon * 3, "xs": horizon,
              "ys": horizon, "ps": horizon}
    meta = {"beam_count": beam_count, "horizon": horizon,
            "obs_dim": int(obs.shape[1])}
    with RecordWriter(path, fields, meta, fmt) as w:
        for i in range(obs.shape[0]):
            w.write({"obs": obs[i], "cmds": cmds[i], "xs": xs[i],
                     "ys": ys[i], "ps": ps[i]})
        return w.count


def read_fdm_tuples(path: str, fmt: str | None = None):
    """Inverse of write_fdm_tuples: returns (obs, cmds, xs, ys, ps) arrays."""
    header, records = read_records(path, fmt)
    horizon = header["meta"]["horizon"]
    obs = np.stack([r["obs"] for r in records])
    cmds = np.stack([r["cmds"].reshape(horizon, 3) for r in records])
    xs = np.stack([r["xs"] for r in records])
    ys = np.stack([r["ys"] for r in records])
    ps = np.stack([r["ps"] for r in records])
    return obs, cmds, xs, ys, ps
