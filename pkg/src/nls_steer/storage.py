"""On-disk formats: trajectories, sampled programs, ladders and run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .integrator import Trajectory
from .program import ControlProgram

SIGN_CONVENTION = "-i u_t + Lap u = |u|^2 u + V; free multiplier exp(+i|k|^2 t)"


def write_trajectory(traj: Trajectory, directory, name: str = "trajectory") -> list:
    """Concatenated little-endian complex128 blocks plus a JSON index."""
    directory = Path(directory)
    bin_path = directory / f"{name}.bin"
    block = int(np.prod(traj.coeffs.shape[1:]))
    with open(bin_path, "wb") as fh:
        for c in traj.coeffs:
            fh.write(np.ascontiguousarray(c, dtype="<c16").tobytes(order="C"))
    index = {
        "dim": traj.dim, "cutoff": traj.cutoff, "s": traj.s, "dtype": "complex128-le",
        "order": "row-major", "block_values": block,
        "blocks": [{"time": float(t), "offset": i * block * 16} for i, t in enumerate(traj.times)],
    }
    idx_path = directory / f"{name}.json"
    idx_path.write_text(json.dumps(index, indent=1, sort_keys=True))
    return [bin_path, idx_path]


def read_trajectory(directory, name: str = "trajectory") -> Trajectory:
    directory = Path(directory)
    index = json.loads((directory / f"{name}.json").read_text())
    shape = (2 * index["cutoff"] + 1,) * index["dim"]
    raw = np.frombuffer((directory / f"{name}.bin").read_bytes(), dtype="<c16")
    coeffs = raw.reshape((-1,) + shape).astype(complex)
    times = np.array([b["time"] for b in index["blocks"]])
    return Trajectory(times, coeffs, index["dim"], index["cutoff"], index["s"])


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_program(program: ControlProgram, directory, samples: int = 2048) -> list:
    """One CSV per mode with cell-averaged rotated-basis coefficients."""
    directory = Path(directory)
    times, values = program.cell_averages(samples)
    paths = []
    for j, k in enumerate(program.modes):
        label = "_".join(str(v) for v in k)
        rows = ((t, v.real, v.imag) for t, v in zip(times, values[:, j]))
        paths.append(write_rows(directory / f"program_mode_{label}.csv",
                                ["time", "re", "im"], rows))
    return paths


def read_program_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1] + 1j * data[:, 2]


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch is not None else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


@dataclass
class RunManifest:
    """Provenance of one run and an index of every file it wrote."""

    command: str
    config_hash: str
    discretization: dict
    eps_ladder: list = field(default_factory=list)
    chain: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    tool_version: str = __version__
    sign_convention: str = SIGN_CONVENTION
    created: str = field(default_factory=_timestamp)
    diagnostics: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def digests(self) -> dict:
        return {o["path"]: o["sha256"] for o in self.outputs}

    def index(self, paths, root) -> None:
        root = Path(root)
        seen = {o["path"] for o in self.outputs}
        for p in paths:
            rel = Path(p).resolve().relative_to(root.resolve()).as_posix()
            if rel in seen:
                raise ValueError(f"output {rel} indexed twice")
            seen.add(rel)
            self.outputs.append({"path": rel, "sha256": file_digest(p),
                                 "bytes": Path(p).stat().st_size})
        self.outputs.sort(key=lambda o: o["path"])

    def write(self, root) -> Path:
        path = Path(root) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=1, sort_keys=True))
        return path

    @classmethod
    def read(cls, root) -> "RunManifest":
        return cls(**json.loads((Path(root) / "manifest.json").read_text()))
