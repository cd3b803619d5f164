"""Model files, trajectory CSVs and run manifests.

Model file layout (all integers little-endian)::

    4 bytes   magic b"PFNN"
    uint16    format version (1)
    uint16    reserved, 0
    uint32    header length H
    H bytes   UTF-8 JSON header, keys sorted
    P * 8     float64 parameters, little-endian, in ``MlpParams`` layer order

The header holds ``algo``, ``role``, ``widths``, ``param_count``,
``observable_neighbors``, ``seed``, ``config_hash`` and ``config`` (the
training settings as key/value strings).
"""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .evaluation import Trajectory
from .nn import MlpParams, MlpSpec

MAGIC = b"PFNN"
FORMAT_VERSION = 1
TRAJECTORY_COLUMNS = ["frame", "kind", "id", "x", "y", "orientation_deg", "caught_flag"]


class ModelFormatError(ConfigError):
    pass


class TrajectoryFormatError(ValueError):
    pass


@dataclass
class ModelFile:
    params: MlpParams
    algo: str
    role: str
    observable_neighbors: int
    seed: int
    config_hash: str = ""
    config: dict = None

    @property
    def spec(self) -> MlpSpec:
        return self.params.spec


def encode_model(model: ModelFile) -> bytes:
    header = {
        "algo": model.algo,
        "role": model.role,
        "widths": list(model.spec.widths),
        "param_count": model.spec.n_params,
        "observable_neighbors": model.observable_neighbors,
        "seed": model.seed,
        "config_hash": model.config_hash,
        "config": model.config or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return (
        MAGIC
        + struct.pack("<HHI", FORMAT_VERSION, 0, len(blob))
        + blob
        + model.params.flat.astype("<f8").tobytes()
    )


def decode_model(data: bytes) -> ModelFile:
    if len(data) < 12 or data[:4] != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    version, _, hlen = struct.unpack("<HHI", data[4:12])
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    try:
        header = json.loads(data[12:12 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"corrupt model header: {exc}") from None
    spec = MlpSpec(tuple(header["widths"]))
    payload = data[12 + hlen:]
    if len(payload) % 8:
        raise ModelFormatError("parameter block is not a whole number of float64 values")
    count = len(payload) // 8
    if count != spec.n_params or header.get("param_count") != spec.n_params:
        raise ModelFormatError(
            f"parameter count mismatch: file has {count}, spec needs {spec.n_params}"
        )
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return ModelFile(
        MlpParams(spec, flat),
        header["algo"],
        header["role"],
        int(header["observable_neighbors"]),
        int(header["seed"]),
        header.get("config_hash", ""),
        header.get("config", {}),
    )


def save_model(path, model: ModelFile) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_model(model))
    return path


def load_model(path) -> ModelFile:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"model file not found: {path}")
    return decode_model(path.read_bytes())


def provenance_line(config_hash: str, seed, **extra) -> str:
    parts = [f"config_sha256={config_hash}", f"seed={seed}"]
    parts += [f"{k}={v}" for k, v in extra.items()]
    return "# " + " ".join(parts) + "\n"


def write_trajectory(path, traj: Trajectory, provenance: str = "") -> Path:
    """One row per entity per frame; floats written with round-trip precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    N = traj.num_agents
    lines = [provenance, ",".join(TRAJECTORY_COLUMNS) + "\n"]
    for t in range(traj.num_frames):
        px, py = (float(v) for v in traj.pred_pos[t])
        lines.append(f"{t},predator,0,{px!r},{py!r},{float(traj.pred_ori[t])!r},0\n")
        pos, ori, caught = traj.prey_pos[t], traj.prey_ori[t], traj.caught[t]
        for i in range(N):
            lines.append(
                f"{t},prey,{i},{float(pos[i, 0])!r},{float(pos[i, 1])!r},"
                f"{float(ori[i])!r},{int(caught[i])}\n"
            )
    path.write_text("".join(lines))
    return path


def read_trajectory(path) -> Trajectory:
    """Parse a trajectory CSV; raises ``TrajectoryFormatError`` with the line number."""
    path = Path(path)
    frames = {}
    with path.open(newline="") as fh:
        header_seen = False
        for lineno, line in enumerate(fh, 1):
            if line.startswith("#") or not line.strip():
                continue
            row = next(csv.reader([line]))
            if not header_seen:
                if [c.strip() for c in row] != TRAJECTORY_COLUMNS:
                    raise TrajectoryFormatError(f"{path}:{lineno}: bad header {row}")
                header_seen = True
                continue
            try:
                if len(row) != len(TRAJECTORY_COLUMNS):
                    raise ValueError(f"expected {len(TRAJECTORY_COLUMNS)} fields, got {len(row)}")
                t, kind, i = int(row[0]), row[1].strip(), int(row[2])
                x, y, o, c = float(row[3]), float(row[4]), float(row[5]), int(row[6])
                if kind not in ("prey", "predator") or c not in (0, 1) or t < 0 or i < 0:
                    raise ValueError("invalid kind, id, frame or caught flag")
            except ValueError as exc:
                raise TrajectoryFormatError(f"{path}:{lineno}: {exc}") from None
            entry = frames.setdefault(t, {"pred": None, "prey": {}})
            if kind == "predator":
                entry["pred"] = (x, y, o)
            else:
                entry["prey"][i] = (x, y, o, c)
    if not frames:
        return Trajectory(
            np.zeros((0, 0, 2)), np.zeros((0, 0)), np.zeros((0, 0), dtype=bool),
            np.zeros((0, 2)), np.zeros(0),
        )
    T = max(frames) + 1
    N = max((max(f["prey"]) + 1 for f in frames.values() if f["prey"]), default=0)
    if sorted(frames) != list(range(T)):
        raise TrajectoryFormatError(f"{path}: frames are not contiguous from 0")
    prey_pos = np.zeros((T, N, 2))
    prey_ori = np.zeros((T, N))
    caught = np.zeros((T, N), dtype=bool)
    pred_pos = np.zeros((T, 2))
    pred_ori = np.zeros(T)
    for t, entry in frames.items():
        if entry["pred"] is None or len(entry["prey"]) != N:
            raise TrajectoryFormatError(f"{path}: frame {t} is incomplete")
        pred_pos[t] = entry["pred"][:2]
        pred_ori[t] = entry["pred"][2]
        for i, (x, y, o, c) in entry["prey"].items():
            prey_pos[t, i] = (x, y)
            prey_ori[t, i] = o
            caught[t, i] = bool(c)
    return Trajectory(prey_pos, prey_ori, caught, pred_pos, pred_ori)


def write_csv(path, columns, rows, provenance: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if provenance:
            fh.write(provenance)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(v) for v in r])
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_manifest(out_dir, command: str, config_hash: str, seeds, config_text: str,
                   artifacts=()) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config_sha256": config_hash,
        "seeds": list(seeds),
        "artifacts": sorted(str(a) for a in artifacts),
    }
    (out / "config.cfg").write_text(config_text)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
