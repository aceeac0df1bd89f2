"""Bit-exact demonstration serialization: JSON manifest + binary records.

One record file per trajectory (magic "AFDS", little-endian, length-prefixed
header, fixed-width steps, trailing CRC32); optional per-demo depth blobs
(magic "AFDP"). The byte layout is documented in FORMAT.md, which is
normative for every reader.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .planner import Trajectory

FORMAT_VERSION = 1
RECORD_MAGIC = b"AFDS"
DEPTH_MAGIC = b"AFDP"
NO_DEPTH = 0xFFFFFFFF
LOCK_NAME = ".lock"
MANIFEST_NAME = "manifest.json"


class DatasetVersionError(RuntimeError):
    pass


class ChecksumError(RuntimeError):
    def __init__(self, path: str):
        super().__init__(f"checksum mismatch in {path}")
        self.path = path


class DatasetLockedError(RuntimeError):
    pass


@dataclass(frozen=True)
class DemoRecord:
    """One generated demonstration plus its provenance flags."""

    trajectory: Trajectory
    seed: int
    success: bool
    subtasks: dict[str, bool] = field(default_factory=dict)
    visual: dict = field(default_factory=dict)
    grasp_audits: tuple = ()
    depth_frames: np.ndarray | None = None  # (T, H, W) float32 meters


def _step_dtype(dof: int, n_objects: int) -> np.dtype:
    return np.dtype(
        [
            ("t", "<u4"),
            ("joints", "<f8", (dof,)),
            ("ee", "<f8", (7,)),
            ("gripper", "<f8"),
            ("objects", "<f8", (n_objects, 7)),
            ("depth_ref", "<u4"),
            ("action", "<f8", (8,)),
        ]
    )


def _pose_vec(pose) -> np.ndarray:
    return np.concatenate([pose.translation, pose.rotation])


def _encode_record(traj: Trajectory, header: dict) -> bytes:
    dof = len(traj.steps[0].joints) if traj.steps else header["dof"]
    object_ids = header["object_ids"]
    dtype = _step_dtype(dof, len(object_ids))
    arr = np.zeros(len(traj.steps), dtype=dtype)
    for i, s in enumerate(traj.steps):
        arr[i]["t"] = s.t
        arr[i]["joints"] = s.joints
        arr[i]["ee"] = _pose_vec(s.ee)
        arr[i]["gripper"] = s.gripper_open
        for j, oid in enumerate(object_ids):
            arr[i]["objects"][j] = _pose_vec(s.object_poses[oid])
        arr[i]["depth_ref"] = NO_DEPTH if s.depth_ref is None else s.depth_ref
        arr[i]["action"] = np.concatenate(
            [s.action_pose.translation, s.action_pose.rotation, [s.action_gripper]]
        )
    header = dict(header)
    header["step_size"] = dtype.itemsize
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = (
        RECORD_MAGIC
        + struct.pack("<H", FORMAT_VERSION)
        + struct.pack("<I", len(header_bytes))
        + header_bytes
        + struct.pack("<Q", len(traj.steps))
        + arr.tobytes()
    )
    return body + struct.pack("<I", zlib.crc32(body))


def _encode_depth(frames: np.ndarray) -> bytes:
    frames = np.ascontiguousarray(frames, dtype="<f4")
    count, h, w = frames.shape
    body = (
        DEPTH_MAGIC
        + struct.pack("<H", FORMAT_VERSION)
        + struct.pack("<II", h, w)
        + struct.pack("<Q", count)
        + frames.tobytes()
    )
    return body + struct.pack("<I", zlib.crc32(body))


def write_dataset(
    demos: list[DemoRecord],
    task_id: str,
    embodiment: str,
    randomization: dict,
    out_dir: str | Path,
) -> dict:
    """Serialize demos under out_dir; returns the manifest.

    Byte-identical output for identical inputs. An advisory lock file guards
    against concurrent writers.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lock = out / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise DatasetLockedError(f"dataset directory {out} is locked by another writer")
    try:
        os.close(fd)
        manifest_demos = []
        for i, demo in enumerate(demos):
            name = f"demo_{i:05d}.afds"
            traj = demo.trajectory
            object_ids = sorted(traj.steps[0].object_poses) if traj.steps else []
            dof = len(traj.steps[0].joints) if traj.steps else 0
            depth_header = None
            depth_name = None
            depth_crc = None
            if demo.depth_frames is not None:
                depth_name = f"demo_{i:05d}.depth"
                depth_bytes = _encode_depth(demo.depth_frames)
                (out / depth_name).write_bytes(depth_bytes)
                depth_crc = f"{zlib.crc32(depth_bytes):08x}"
                depth_header = {
                    "h": int(demo.depth_frames.shape[1]),
                    "w": int(demo.depth_frames.shape[2]),
                }
            header = {
                "task_id": task_id,
                "embodiment": embodiment,
                "seed": demo.seed,
                "dof": dof,
                "object_ids": object_ids,
                "phases": [[p, a, b] for p, a, b in traj.phase_table],
                "grasp_audits": [a.to_json() for a in demo.grasp_audits],
                "depth": depth_header,
            }
            payload = _encode_record(traj, header)
            (out / name).write_bytes(payload)
            manifest_demos.append(
                {
                    "file": name,
                    "seed": demo.seed,
                    "success": bool(demo.success),
                    "subtasks": {k: bool(v) for k, v in sorted(demo.subtasks.items())},
                    "visual": demo.visual,
                    "checksum": f"{zlib.crc32(payload):08x}",
                    "depth_file": depth_name,
                    "depth_checksum": depth_crc,
                    "steps": len(traj.steps),
                }
            )
        manifest = {
            "format_version": FORMAT_VERSION,
            "task_id": task_id,
            "embodiment": embodiment,
            "demo_count": len(demos),
            "randomization": randomization,
            "demos": manifest_demos,
        }
        (out / MANIFEST_NAME).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
        return manifest
    finally:
        lock.unlink(missing_ok=True)


@dataclass(frozen=True)
class LoadedDemo:
    header: dict
    steps: np.ndarray  # structured array per _step_dtype
    manifest_entry: dict

    @property
    def step_count(self) -> int:
        return len(self.steps)

    def actions(self) -> np.ndarray:
        return np.asarray(self.steps["action"])

    def joints(self) -> np.ndarray:
        return np.asarray(self.steps["joints"])


def _verify_crc(blob: bytes, path: str) -> bytes:
    if len(blob) < 4:
        raise ChecksumError(path)
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise ChecksumError(path)
    return body


def parse_record(blob: bytes, path: str = "<memory>") -> LoadedDemo:
    body = _verify_crc(blob, path)
    if body[:4] != RECORD_MAGIC:
        raise DatasetVersionError(f"{path}: bad magic {body[:4]!r}")
    (version,) = struct.unpack_from("<H", body, 4)
    if version != FORMAT_VERSION:
        raise DatasetVersionError(f"{path}: unsupported format version {version}")
    (header_len,) = struct.unpack_from("<I", body, 6)
    header = json.loads(body[10 : 10 + header_len])
    off = 10 + header_len
    (count,) = struct.unpack_from("<Q", body, off)
    off += 8
    dtype = _step_dtype(header["dof"], len(header["object_ids"]))
    if dtype.itemsize != header["step_size"]:
        raise DatasetVersionError(f"{path}: step size mismatch")
    steps = np.frombuffer(body, dtype=dtype, count=count, offset=off)
    return LoadedDemo(header, steps, {})


def parse_depth(blob: bytes, path: str = "<memory>") -> np.ndarray:
    body = _verify_crc(blob, path)
    if body[:4] != DEPTH_MAGIC:
        raise DatasetVersionError(f"{path}: bad depth magic")
    (version,) = struct.unpack_from("<H", body, 4)
    if version != FORMAT_VERSION:
        raise DatasetVersionError(f"{path}: unsupported depth version {version}")
    h, w = struct.unpack_from("<II", body, 6)
    (count,) = struct.unpack_from("<Q", body, 14)
    return np.frombuffer(body, dtype="<f4", count=count * h * w, offset=22).reshape(count, h, w)


def read_dataset(directory: str | Path):
    """(manifest, lazy demo iterator); every file's checksum is verified
    before its demo is yielded."""
    root = Path(directory)
    manifest = json.loads((root / MANIFEST_NAME).read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DatasetVersionError(
            f"manifest format version {manifest.get('format_version')} unsupported"
        )
    if manifest["demo_count"] != len(manifest["demos"]):
        raise DatasetVersionError("manifest demo_count does not match records present")

    def _iter():
        for entry in manifest["demos"]:
            path = root / entry["file"]
            blob = path.read_bytes()
            if f"{zlib.crc32(blob):08x}" != entry["checksum"]:
                raise ChecksumError(str(path))
            demo = parse_record(blob, str(path))
            yield LoadedDemo(demo.header, demo.steps, entry)

    return manifest, _iter()


def load_depth(directory: str | Path, entry: dict) -> np.ndarray | None:
    if not entry.get("depth_file"):
        return None
    path = Path(directory) / entry["depth_file"]
    blob = path.read_bytes()
    if f"{zlib.crc32(blob):08x}" != entry["depth_checksum"]:
        raise ChecksumError(str(path))
    return parse_depth(blob, str(path))


def summarize(manifest: dict) -> dict:
    """Demo counts, step statistics, success fraction, failure histogram."""
    demos = manifest["demos"]
    steps = [d["steps"] for d in demos]
    successes = sum(1 for d in demos if d["success"])
    histogram: dict[str, int] = {}
    for d in demos:
        if d["success"]:
            continue
        failed = [k for k, v in d["subtasks"].items() if not v]
        key = failed[0] if failed else "unknown"
        histogram[key] = histogram.get(key, 0) + 1
    return {
        "demo_count": len(demos),
        "mean_steps": float(np.mean(steps)) if steps else 0.0,
        "min_steps": int(min(steps)) if steps else 0,
        "max_steps": int(max(steps)) if steps else 0,
        "success_fraction": successes / len(demos) if demos else 0.0,
        "failure_histogram": histogram,
    }
