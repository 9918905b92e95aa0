"""Scene data model, OBJ/MTL ingestion and camera conventions.

Conventions used by every later stage:

* clip space follows OpenGL: a point is inside the frustum when
  ``-w <= x, y, z <= w``;
* pixel ``(i, j)`` has its center at ``(i + 0.5, j + 0.5)``; pixel rows grow
  downwards, so NDC ``y = +1`` is the top image edge;
* depth is ``0.5 * z_ndc + 0.5``, growing with distance from the camera.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_WIDTH = 2560
MAX_HEIGHT = 2048


class SceneError(ValueError):
    """Malformed or inconsistent scene input."""


@dataclass(frozen=True)
class Vertex:
    position: tuple[float, float, float]
    normal: tuple[float, float, float] = (0.0, 0.0, 0.0)
    color: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    uv: tuple[float, float] = (0.0, 0.0)


@dataclass
class Material:
    name: str = "default"
    base_color: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    opacity: float = 1.0
    texture: np.ndarray | None = None  # (H, W, 4) float32 in [0, 1]
    uses_vertex_colors: bool = False
    uses_vertex_normals: bool = False
    uses_uvs: bool = False

    def __post_init__(self):
        if not 0.0 <= self.opacity <= 1.0:
            raise SceneError(f"material {self.name!r}: opacity {self.opacity} outside [0, 1]")


@dataclass
class Camera:
    view_projection: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        self.view_projection = np.asarray(self.view_projection, dtype=np.float64).reshape(4, 4)
        if self.width <= 0 or self.height <= 0:
            raise SceneError("viewport size must be positive")
        if self.width > MAX_WIDTH or self.height > MAX_HEIGHT:
            raise SceneError(f"viewport {self.width}x{self.height} exceeds {MAX_WIDTH}x{MAX_HEIGHT}")

    @property
    def eye(self) -> np.ndarray:
        """Homogeneous eye position in world space (w = 0 for orthographic cameras)."""
        e = np.linalg.solve(self.view_projection, np.array([0.0, 0.0, -1.0, 0.0]))
        if e[3] < 0:
            e = -e
        return e


@dataclass
class Scene:
    positions: np.ndarray  # (N, 3)
    quads: np.ndarray  # (Q, 4) int64
    quad_material: np.ndarray  # (Q,) int64
    materials: list[Material] = field(default_factory=lambda: [Material()])
    normals: np.ndarray | None = None  # (N, 3)
    colors: np.ndarray | None = None  # (N, 4)
    uvs: np.ndarray | None = None  # (N, 2)
    name: str = "scene"

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        n = len(self.positions)
        self.quads = np.ascontiguousarray(self.quads, dtype=np.int64).reshape(-1, 4)
        self.quad_material = np.ascontiguousarray(self.quad_material, dtype=np.int64).reshape(-1)
        if self.normals is None:
            self.normals = np.zeros((n, 3))
        if self.colors is None:
            self.colors = np.ones((n, 4))
        if self.uvs is None:
            self.uvs = np.zeros((n, 2))
        self.normals = np.ascontiguousarray(self.normals, dtype=np.float64).reshape(n, 3)
        self.colors = np.ascontiguousarray(self.colors, dtype=np.float64).reshape(n, 4)
        self.uvs = np.ascontiguousarray(self.uvs, dtype=np.float64).reshape(n, 2)
        self.validate()

    @property
    def quad_count(self) -> int:
        return len(self.quads)

    def validate(self):
        n = len(self.positions)
        if len(self.quad_material) != len(self.quads):
            raise SceneError("quad_material length differs from quad count")
        if self.quads.size and (self.quads.min() < 0 or self.quads.max() >= n):
            bad = int(np.argmax((self.quads < 0).any(1) | (self.quads >= n).any(1)))
            raise SceneError(f"quad {bad} references a vertex outside [0, {n})")
        if self.quad_material.size and (
            self.quad_material.min() < 0 or self.quad_material.max() >= len(self.materials)
        ):
            raise SceneError("quad references an unknown material")
        if self.colors.size and (self.colors.min() < 0 or self.colors.max() > 1):
            raise SceneError("vertex colors must lie in [0, 1]")
        lengths = np.linalg.norm(self.normals, axis=1)
        present = lengths > 0
        if np.any(np.abs(lengths[present] - 1.0) > 1e-3):
            raise SceneError("vertex normals must be unit length")

    def triangles(self) -> np.ndarray:
        """All 2*Q triangles, (v0, v1, v2) then (v0, v2, v3) for each quad."""
        q = self.quads
        tris = np.empty((2 * len(q), 3), dtype=np.int64)
        tris[0::2] = q[:, [0, 1, 2]]
        tris[1::2] = q[:, [0, 2, 3]]
        return tris

    def vertex(self, i: int) -> Vertex:
        return Vertex(
            tuple(self.positions[i]), tuple(self.normals[i]), tuple(self.colors[i]), tuple(self.uvs[i])
        )


def is_degenerate_triangle(tris: np.ndarray) -> np.ndarray:
    t = np.asarray(tris)
    return (t[..., 0] == t[..., 1]) | (t[..., 1] == t[..., 2]) | (t[..., 0] == t[..., 2])


# -- camera ------------------------------------------------------------------

def perspective(fov_y_deg: float, aspect: float, near: float, far: float) -> np.ndarray:
    f = 1.0 / math.tan(math.radians(fov_y_deg) / 2.0)
    m = np.zeros((4, 4))
    m[0, 0] = f / aspect
    m[1, 1] = f
    m[2, 2] = (far + near) / (near - far)
    m[2, 3] = 2.0 * far * near / (near - far)
    m[3, 2] = -1.0
    return m


def orthographic(left, right, bottom, top, near, far) -> np.ndarray:
    m = np.eye(4)
    m[0, 0] = 2.0 / (right - left)
    m[1, 1] = 2.0 / (top - bottom)
    m[2, 2] = -2.0 / (far - near)
    m[0, 3] = -(right + left) / (right - left)
    m[1, 3] = -(top + bottom) / (top - bottom)
    m[2, 3] = -(far + near) / (far - near)
    return m


def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> np.ndarray:
    eye, target, up = (np.asarray(v, dtype=np.float64) for v in (eye, target, up))
    fwd = target - eye
    fwd /= np.linalg.norm(fwd)
    side = np.cross(fwd, up)
    side /= np.linalg.norm(side)
    upv = np.cross(side, fwd)
    m = np.eye(4)
    m[0, :3], m[1, :3], m[2, :3] = side, upv, -fwd
    m[:3, 3] = -m[:3, :3] @ eye
    return m


def project_to_ndc(position, camera: Camera) -> np.ndarray:
    """Clip-space position of a world point; divide by w (when w > 0) for NDC."""
    p = np.append(np.asarray(position, dtype=np.float64), 1.0)
    return camera.view_projection @ p


def ndc_to_pixel(ndc_x, ndc_y, camera: Camera) -> tuple[float, float]:
    """Continuous pixel coordinates; pixel centers sit at half-integers."""
    return (ndc_x + 1.0) * 0.5 * camera.width, (1.0 - ndc_y) * 0.5 * camera.height


def load_camera(path: str | Path) -> Camera:
    """Read a ``key = value`` camera file.

    Either ``view_projection`` (16 numbers, row-major) or the perspective keys
    ``eye``, ``target``, ``up``, ``fov``, ``near``, ``far`` must be present,
    together with ``width`` and ``height``.
    """
    values: dict[str, list[float]] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, rest = line.partition("=") if "=" in line else line.partition(" ")
        try:
            values[key.strip()] = [float(v) for v in re.split(r"[\s,]+", rest.strip()) if v]
        except ValueError as exc:
            raise SceneError(f"{path}:{lineno}: {exc}") from None
    try:
        width, height = int(values["width"][0]), int(values["height"][0])
    except KeyError as exc:
        raise SceneError(f"{path}: missing camera key {exc}") from None
    if "view_projection" in values:
        vp = np.array(values["view_projection"])
        if vp.size != 16:
            raise SceneError(f"{path}: view_projection needs 16 numbers")
        return Camera(vp.reshape(4, 4), width, height)
    try:
        view = look_at(values["eye"], values["target"], values.get("up", [0.0, 1.0, 0.0]))
        proj = perspective(values["fov"][0], width / height, values["near"][0], values["far"][0])
    except KeyError as exc:
        raise SceneError(f"{path}: missing camera key {exc}") from None
    return Camera(proj @ view, width, height)


# -- OBJ / MTL ---------------------------------------------------------------

def load_texture(path: str | Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGBA"), dtype=np.float32) / 255.0


def load_mtl(path: str | Path) -> dict[str, Material]:
    path = Path(path)
    materials: dict[str, Material] = {}
    cur: dict | None = None

    def flush():
        if cur is not None:
            materials[cur["name"]] = Material(**cur)

    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        tag, args = parts[0], parts[1:]
        try:
            if tag == "newmtl":
                flush()
                cur = {"name": " ".join(args)}
            elif cur is None:
                continue
            elif tag == "Kd":
                cur["base_color"] = (float(args[0]), float(args[1]), float(args[2]), 1.0)
            elif tag == "d":
                cur["opacity"] = float(args[0])
            elif tag == "Tr":
                cur["opacity"] = 1.0 - float(args[0])
            elif tag == "map_Kd":
                cur["texture"] = load_texture(path.parent / args[-1])
        except (IndexError, ValueError, OSError) as exc:
            raise SceneError(f"{path}:{lineno}: {exc}") from None
    flush()
    return materials


def _obj_index(token: str, count: int, lineno: int, path) -> int:
    i = int(token)
    i = i - 1 if i > 0 else count + i
    if not 0 <= i < count:
        raise SceneError(f"{path}:{lineno}: index {token} out of range (have {count})")
    return i


def load_obj(mesh_path: str | Path, material_path: str | Path | None = None) -> Scene:
    """Load a Wavefront OBJ subset (v/vt/vn/f, usemtl, mtllib).

    Triangles become degenerate quads whose fourth index repeats the third.
    ``v x y z r g b`` vertex colors are accepted.
    """
    mesh_path = Path(mesh_path)
    pos, col, tex, nrm = [], [], [], []
    faces: list[tuple[list[tuple[int, int, int]], int]] = []
    mat_index: dict[str, int] = {}
    mtl_files: list[Path] = [Path(material_path)] if material_path else []
    current = -1
    for lineno, raw in enumerate(mesh_path.read_text().splitlines(), 1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        tag, args = parts[0], parts[1:]
        try:
            if tag == "v":
                pos.append([float(a) for a in args[:3]])
                col.append([float(a) for a in args[3:6]] + [1.0] if len(args) >= 6 else None)
                if len(pos[-1]) != 3:
                    raise ValueError("vertex needs 3 coordinates")
            elif tag == "vt":
                tex.append([float(args[0]), float(args[1]) if len(args) > 1 else 0.0])
            elif tag == "vn":
                n = np.array([float(a) for a in args[:3]])
                nrm.append(n / np.linalg.norm(n))
            elif tag == "f":
                if len(args) < 3:
                    raise SceneError(f"{mesh_path}:{lineno}: face needs at least 3 vertices")
                if len(args) > 4:
                    raise SceneError(f"{mesh_path}:{lineno}: unsupported face arity {len(args)}")
                corners = []
                for a in args:
                    f = a.split("/")
                    vi = _obj_index(f[0], len(pos), lineno, mesh_path)
                    ti = _obj_index(f[1], len(tex), lineno, mesh_path) if len(f) > 1 and f[1] else -1
                    ni = _obj_index(f[2], len(nrm), lineno, mesh_path) if len(f) > 2 and f[2] else -1
                    corners.append((vi, ti, ni))
                faces.append((corners, current))
            elif tag == "usemtl":
                name = " ".join(args)
                current = mat_index.setdefault(name, len(mat_index))
            elif tag == "mtllib" and material_path is None:
                mtl_files.append(mesh_path.parent / " ".join(args))
        except SceneError:
            raise
        except (ValueError, IndexError) as exc:
            raise SceneError(f"{mesh_path}:{lineno}: {exc}") from None

    library: dict[str, Material] = {}
    for mtl in mtl_files:
        library.update(load_mtl(mtl))

    # every distinct (position, uv, normal) triple becomes one vertex
    remap: dict[tuple[int, int, int], int] = {}
    quads, quad_mat = [], []
    for corners, m in faces:
        idx = [remap.setdefault(c, len(remap)) for c in corners]
        if len(idx) == 3:
            idx.append(idx[2])
        quads.append(idx)
        quad_mat.append(max(m, 0))
    keys = sorted(remap, key=remap.get)
    has_colors = any(c is not None for c in col)
    positions = np.array([pos[k[0]] for k in keys]).reshape(-1, 3)
    colors = np.array([col[k[0]] if col[k[0]] is not None else [1.0] * 4 for k in keys]).reshape(-1, 4)
    uvs = np.array([tex[k[1]] if k[1] >= 0 else [0.0, 0.0] for k in keys]).reshape(-1, 2)
    normals = np.array([nrm[k[2]] if k[2] >= 0 else [0.0, 0.0, 0.0] for k in keys]).reshape(-1, 3)
    has_normals = any(k[2] >= 0 for k in keys)
    has_uvs = any(k[1] >= 0 for k in keys)

    names = sorted(mat_index, key=mat_index.get) or ["default"]
    materials = []
    for name in names:
        base = library.get(name, Material(name=name))
        materials.append(
            Material(
                name=name,
                base_color=base.base_color,
                opacity=base.opacity,
                texture=base.texture,
                uses_vertex_colors=has_colors,
                uses_vertex_normals=has_normals,
                uses_uvs=has_uvs and base.texture is not None,
            )
        )
    return Scene(
        positions=positions,
        quads=np.array(quads, dtype=np.int64).reshape(-1, 4),
        quad_material=np.array(quad_mat, dtype=np.int64),
        materials=materials,
        normals=normals,
        colors=np.clip(colors, 0.0, 1.0),
        uvs=uvs,
        name=mesh_path.stem,
    )


def load_scene(mesh_path, material_path=None, camera_config=None) -> tuple[Scene, Camera | None]:
    scene = load_obj(mesh_path, material_path)
    camera = load_camera(camera_config) if camera_config else None
    return scene, camera
