"""Static 3D mesh map: ascii PLY in, validated asset out, plus a utility that
extrudes the exposed faces of an occupancy snapshot into a colored mesh so
the explore -> offline mesh -> render workflow is demonstrable.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .occupancy import VoxelSnapshot, height_color, pack_voxels


class ParseError(ValueError):
    """Unparseable PLY input."""


class ValidationError(ValueError):
    """Structurally invalid mesh (bad index, bad normal)."""


@dataclass(frozen=True)
class MeshAsset:
    vertices: np.ndarray  # (V, 3) float
    normals: np.ndarray  # (V, 3) unit float
    colors: np.ndarray  # (V, 3) float in [0,1]
    triangles: np.ndarray  # (T, 3) int
    dropped_degenerate: int = 0

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        n = np.asarray(self.normals, dtype=float).reshape(-1, 3)
        c = np.asarray(self.colors, dtype=float).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(n) != len(v) or len(c) != len(v):
            raise ValidationError("normals/colors must match vertex count")
        bad = np.flatnonzero((t < 0).any(axis=1) | (t >= len(v)).any(axis=1))
        if len(bad):
            raise ValidationError(f"triangle {int(bad[0])} has an out-of-range vertex index")
        norms = np.linalg.norm(n, axis=1)
        if len(n) and not np.all(np.abs(norms - 1.0) <= 1e-6):
            raise ValidationError("normals must be unit length within 1e-6")
        for name, arr in (("vertices", v), ("normals", n), ("colors", c), ("triangles", t)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def load_mesh(path) -> MeshAsset:
    """Parse and validate an ascii PLY; degenerate triangles are dropped."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("not a PLY file")
    i = 1
    fmt = None
    elements: list[tuple[str, int, list[str]]] = []
    while i < len(lines):
        tok = lines[i].split()
        i += 1
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise ParseError("property before element")
            elements[-1][2].append(tok[-1])
        elif tok[0] == "end_header":
            break
    else:
        raise ParseError("missing end_header")
    if fmt != "ascii":
        raise ParseError(f"only ascii PLY is supported, got {fmt!r}")

    data: dict[str, list[list[str]]] = {}
    for name, count, _props in elements:
        rows = lines[i : i + count]
        if len(rows) < count:
            raise ParseError(f"element {name}: expected {count} rows")
        data[name] = [r.split() for r in rows]
        i += count

    velem = next((e for e in elements if e[0] == "vertex"), None)
    felem = next((e for e in elements if e[0] == "face"), None)
    if velem is None or felem is None:
        raise ParseError("PLY must contain vertex and face elements")
    props = velem[2]

    def col(name, default=None):
        if name not in props:
            if default is None:
                raise ParseError(f"vertex property {name!r} missing")
            return np.full(velem[1], default, dtype=float)
        k = props.index(name)
        return np.array([float(r[k]) for r in data["vertex"]], dtype=float)

    vertices = np.stack([col("x"), col("y"), col("z")], axis=1)
    normals = np.stack([col("nx", 0.0), col("ny", 0.0), col("nz", 1.0)], axis=1)
    if "nx" not in props:
        normals[:] = (0.0, 0.0, 1.0)
    colors = np.stack([col("red", 255.0), col("green", 255.0), col("blue", 255.0)], axis=1) / 255.0

    tris = []
    for r in data["face"]:
        n = int(r[0])
        idx = [int(x) for x in r[1 : 1 + n]]
        for k in range(1, n - 1):  # fan-triangulate polygons
            tris.append((idx[0], idx[k], idx[k + 1]))
    triangles = np.asarray(tris, dtype=np.int64).reshape(-1, 3)

    bad = np.flatnonzero((triangles < 0).any(axis=1) | (triangles >= len(vertices)).any(axis=1))
    if len(bad):
        raise ValidationError(f"triangle {int(bad[0])} has an out-of-range vertex index")
    areas = _triangle_areas(vertices, triangles)
    keep = areas > 1e-12
    dropped = int((~keep).sum())
    return MeshAsset(vertices, normals, colors, triangles[keep], dropped_degenerate=dropped)


def serialize_mesh(asset: MeshAsset) -> str:
    """Ascii PLY text; load_mesh(serialize_mesh(a)) == a."""
    out = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(asset.vertices)}",
        "property float x",
        "property float y",
        "property float z",
        "property float nx",
        "property float ny",
        "property float nz",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        f"element face {len(asset.triangles)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    rgb = np.rint(np.clip(asset.colors, 0.0, 1.0) * 255).astype(int)
    for v, n, c in zip(asset.vertices, asset.normals, rgb):
        out.append(
            f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g} {n[0]:.17g} {n[1]:.17g} {n[2]:.17g} {c[0]} {c[1]} {c[2]}"
        )
    for t in asset.triangles:
        out.append(f"3 {t[0]} {t[1]} {t[2]}")
    return "\n".join(out) + "\n"


def save_mesh(asset: MeshAsset, path) -> None:
    Path(path).write_text(serialize_mesh(asset))


# exposed-face extrusion: for each occupied voxel, emit 2 triangles per face
# whose 6-neighbor is not occupied
_FACES = [
    (np.array([-1, 0, 0]), [(0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 0)]),
    (np.array([1, 0, 0]), [(1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1)]),
    (np.array([0, -1, 0]), [(0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)]),
    (np.array([0, 1, 0]), [(0, 1, 0), (0, 1, 1), (1, 1, 1), (1, 1, 0)]),
    (np.array([0, 0, -1]), [(0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 0)]),
    (np.array([0, 0, 1]), [(0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]),
]


def exposed_face_count(occupied: np.ndarray) -> int:
    """6-neighbor scan: number of occupied-voxel faces adjacent to non-occupied."""
    occ = np.asarray(occupied, dtype=np.int64).reshape(-1, 3)
    have = set(map(tuple, occ))
    count = 0
    for v in occ:
        for normal, _ in _FACES:
            if tuple(v + normal) not in have:
                count += 1
    return count


def voxel_surface_mesh(snapshot: VoxelSnapshot, z_min=None, z_max=None) -> MeshAsset:
    """Mesh of all exposed voxel faces with height-gradient vertex colors."""
    occ = snapshot.occupied
    res = snapshot.resolution
    if len(occ) == 0:
        e = np.empty((0, 3))
        return MeshAsset(e, e, e, np.empty((0, 3), dtype=np.int64))
    if z_min is None:
        z_min = float(occ[:, 2].min()) * res
    if z_max is None:
        z_max = float(occ[:, 2].max() + 1) * res
    if z_max <= z_min:
        z_max = z_min + res
    have = set(map(int, pack_voxels(occ)))
    verts, norms, cols, tris = [], [], [], []
    for v in occ:
        color = height_color(v, res, z_min, z_max)
        base = v.astype(float) * res
        for normal, corners in _FACES:
            if int(pack_voxels(v + normal)) in have:
                continue
            i0 = len(verts)
            for c in corners:
                verts.append(base + np.asarray(c, dtype=float) * res)
                norms.append(normal.astype(float))
                cols.append(color)
            tris.append((i0, i0 + 1, i0 + 2))
            tris.append((i0, i0 + 2, i0 + 3))
    return MeshAsset(
        np.asarray(verts), np.asarray(norms), np.asarray(cols), np.asarray(tris, dtype=np.int64)
    )


def mesh_payload(asset: MeshAsset) -> dict:
    """Flat-array JSON document for the /mesh_map topic."""
    return {
        "vertices": np.asarray(asset.vertices, dtype=float).ravel().tolist(),
        "normals": np.asarray(asset.normals, dtype=float).ravel().tolist(),
        "colors": np.asarray(asset.colors, dtype=float).ravel().tolist(),
        "triangles": np.asarray(asset.triangles, dtype=np.int64).ravel().tolist(),
    }
