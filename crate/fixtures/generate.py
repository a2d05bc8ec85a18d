#!/usr/bin/env python3
"""Regenerates the fixture scenes. Output is deterministic."""

import math
import os
import random

ROOT = os.path.dirname(os.path.abspath(__file__))


def write(rel, text):
    path = os.path.join(ROOT, rel)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        f.write(text)


# --- molecules -------------------------------------------------------------

def pdb(name, atoms):
    lines = [f"HEADER    {name.upper()}"]
    for i, (el, x, y, z) in enumerate(atoms, 1):
        lines.append(
            f"ATOM  {i:5d} {el:<4} MOL A   1    {x:8.3f}{y:8.3f}{z:8.3f}  1.00  0.00          {el:>2}"
        )
    lines.append("END")
    return "\n".join(lines) + "\n"


def blob(rng, n, radii, elements, min_dist):
    """Rejection-sampled points inside an ellipsoid."""
    atoms = []
    while len(atoms) < n:
        p = [rng.uniform(-1, 1) for _ in range(3)]
        if sum(c * c for c in p) > 1:
            continue
        p = [p[i] * radii[i] for i in range(3)]
        if all(math.dist(p, a[1:]) >= min_dist for a in atoms):
            atoms.append((rng.choice(elements), *p))
    return atoms


def lipid(rng):
    """Head group on top of two tails along y."""
    atoms = []
    for k in range(2):
        x = -1.1 if k == 0 else 1.1
        for i in range(16):
            atoms.append(("C", x + rng.uniform(-0.3, 0.3), -8.0 + 1.1 * i, rng.uniform(-0.4, 0.4)))
    for i in range(8):
        a = 2 * math.pi * i / 8
        atoms.append((["N", "O", "P", "O"][i % 4], 1.8 * math.cos(a), 10.0, 1.8 * math.sin(a)))
    return atoms


def molecules():
    rng = random.Random(7)
    write("molecules/lipid.pdb", pdb("lipid", lipid(rng)))
    write("molecules/globule.pdb", pdb("globule", blob(rng, 24, (3.2, 3.2, 3.2), ["C", "N", "O", "S"], 1.4)))
    write("molecules/small.pdb", pdb("small", blob(rng, 12, (2.2, 1.6, 2.2), ["C", "O", "H"], 1.2)))
    write("molecules/blob100.pdb", pdb("blob100", blob(rng, 100, (3.5, 3.5, 3.5), ["C", "N", "O", "H"], 0.9)))


# --- meshes ----------------------------------------------------------------

def normalize(v):
    n = math.sqrt(sum(c * c for c in v))
    return [c / n for c in v]


def rotate_to_y(v, axis):
    """Rotation taking unit `axis` to +y, applied to v (Rodrigues)."""
    y = [0.0, 1.0, 0.0]
    k = [axis[1] * y[2] - axis[2] * y[1], axis[2] * y[0] - axis[0] * y[2], axis[0] * y[1] - axis[1] * y[0]]
    s = math.sqrt(sum(c * c for c in k))
    c = sum(axis[i] * y[i] for i in range(3))
    if s < 1e-15:
        return v
    k = [c_ / s for c_ in k]
    ang = math.atan2(s, c)
    kv = [k[1] * v[2] - k[2] * v[1], k[2] * v[0] - k[0] * v[2], k[0] * v[1] - k[1] * v[0]]
    kd = sum(k[i] * v[i] for i in range(3))
    return [v[i] * math.cos(ang) + kv[i] * math.sin(ang) + k[i] * kd * (1 - math.cos(ang)) for i in range(3)]


def icosphere(radius):
    t = (1 + math.sqrt(5)) / 2
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    axis = normalize(verts[5])
    verts = [rotate_to_y(normalize(v), axis) for v in verts]
    # One subdivision.
    cache = {}

    def mid(a, b):
        key = (min(a, b), max(a, b))
        if key not in cache:
            cache[key] = len(verts)
            verts.append(normalize([(verts[a][i] + verts[b][i]) / 2 for i in range(3)]))
        return cache[key]

    sub = []
    for a, b, c in faces:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        sub += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    verts = [[c * radius for c in v] for v in verts]
    return verts, sub, 5, 11  # top pole vertex, a neighbour on the upper ring


def sphere_uv(verts, faces, top):
    """Latitude/longitude uv with the seam cut along a chain of edges from
    pole to pole, so no triangle straddles it and every uv stays in [0,1]."""
    r = math.sqrt(sum(c * c for c in verts[0]))
    bottom = min(range(len(verts)), key=lambda i: verts[i][1])
    adj = {}
    for f in faces:
        for i in range(3):
            adj.setdefault(f[i], set()).update((f[(i + 1) % 3], f[(i + 2) % 3]))

    def phi(i):
        return math.atan2(verts[i][2], verts[i][0]) % (2 * math.pi)

    # Greedy descent: from the top pole, step to the lower neighbour whose
    # longitude stays closest to the previous one.
    path = [top]
    while path[-1] != bottom:
        cur = path[-1]
        cands = [n for n in adj[cur] if verts[n][1] < verts[cur][1] - 1e-9]
        if bottom in cands:
            path.append(bottom)
            break
        ref = phi(cur) if cur != top else 0.0
        path.append(min(cands, key=lambda n: (abs(((phi(n) - ref + math.pi) % (2 * math.pi)) - math.pi), verts[n][1])))
    on_path = set(path)
    inner = [p for p in path if p not in (top, bottom)]
    knots = sorted((verts[p][1], phi(p)) for p in inner)

    def cut(y):
        # Unwrapped piecewise-linear cut longitude as a function of height.
        ys = [k[0] for k in knots]
        ps = [knots[0][1]]
        for k in knots[1:]:
            d = (k[1] - ps[-1] + math.pi) % (2 * math.pi) - math.pi
            ps.append(ps[-1] + d)
        if y <= ys[0]:
            return ps[0]
        if y >= ys[-1]:
            return ps[-1]
        for i in range(len(ys) - 1):
            if ys[i] <= y <= ys[i + 1]:
                s = (y - ys[i]) / (ys[i + 1] - ys[i]) if ys[i + 1] > ys[i] else 0
                return ps[i] + s * (ps[i + 1] - ps[i])

    def u_of(i):
        return ((phi(i) - cut(verts[i][1])) % (2 * math.pi)) / (2 * math.pi)

    def v_of(i):
        return math.acos(max(-1.0, min(1.0, verts[i][1] / r))) / math.pi

    tri_uvs = []
    for f in faces:
        free = [u_of(i) for i in f if i not in on_path]
        side = 1.0 if sum(free) / len(free) > 0.5 else 0.0
        us = []
        for i in f:
            if i in (top, bottom):
                us.append(None)
            elif i in on_path:
                us.append(side)
            else:
                us.append(u_of(i))
        known = [u for u in us if u is not None]
        us = [sum(known) / len(known) if u is None else u for u in us]
        tri_uvs.append([(us[k], v_of(f[k])) for k in range(3)])
    return tri_uvs


def obj_with_uvs(verts, faces, tri_uvs, normals=None):
    lines = [f"v {x:.9f} {y:.9f} {z:.9f}" for x, y, z in verts]
    uv_index = {}
    uv_lines = []
    face_lines = []
    for f, uvs in zip(faces, tri_uvs):
        corner = []
        for vi, uv in zip(f, uvs):
            key = (round(uv[0], 12), round(uv[1], 12))
            if key not in uv_index:
                uv_index[key] = len(uv_lines) + 1
                uv_lines.append(f"vt {uv[0]:.12f} {uv[1]:.12f}")
            if normals:
                corner.append(f"{vi + 1}/{uv_index[key]}/{vi + 1}")
            else:
                corner.append(f"{vi + 1}/{uv_index[key]}")
        face_lines.append("f " + " ".join(corner))
    if normals:
        lines += [f"vn {x:.9f} {y:.9f} {z:.9f}" for x, y, z in normals]
    return "\n".join(lines + uv_lines + face_lines) + "\n"


def meshes():
    verts, faces, top, _ = icosphere(60.0)
    uvs = sphere_uv(verts, faces, top)
    normals = [normalize(v) for v in verts]
    write("meshes/icosphere.obj", "# level-1 icosphere, radius 60\n" + obj_with_uvs(verts, faces, uvs, normals))

    # 40 x 40 quad in the xz plane facing +y; u along +x, v along -z.
    write(
        "meshes/quad.obj",
        "v 0 0 0\nv 40 0 0\nv 40 0 -40\nv 0 0 -40\n"
        "vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nvn 0 1 0\n"
        "f 1/1/1 2/2/1 3/3/1\nf 1/1/1 3/3/1 4/4/1\n",
    )

    # Closed cube [0,80]^3, outward counter-clockwise faces.
    s = []
    for z in (0, 80):
        for y in (0, 80):
            for x in (0, 80):
                s.append(f"v {x} {y} {z}")
    s.append("vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1")
    for f in [(1, 3, 4, 2), (5, 6, 8, 7), (1, 2, 6, 5), (3, 7, 8, 4), (1, 5, 7, 3), (2, 4, 8, 6)]:
        s.append("f " + " ".join(f"{i}/{k + 1}" for k, i in enumerate(f)))
    write("meshes/cube80.obj", "\n".join(s) + "\n")

    # One triangle whose first two vertex normals lean across each other, so
    # the offset top face comes out mirrored.
    write(
        "meshes/folded.obj",
        "v 0 0 0\nv 12 0 0\nv 0 0 -12\n"
        "vt 0 0\nvt 1 0\nvt 0 1\n"
        "vn 0.9 0.4 0\nvn -0.9 0.4 0\nvn 0 1 0\n"
        "f 1/1/1 2/2/2 3/3/3\n",
    )


# --- tiles -----------------------------------------------------------------

def quat(rng):
    while True:
        q = [rng.gauss(0, 1) for _ in range(4)]
        n = math.sqrt(sum(c * c for c in q))
        if n > 1e-3:
            return [round(c / n, 9) for c in q]


def fmt(v):
    return "[" + ", ".join(repr(float(round(c, 6))) for c in v) + "]"


def tile_file(kind, world_size, tiles):
    out = [f"version = 1", f'kind = "{kind}"', f"world_size = {float(world_size)!r}", ""]
    for colors, instances in tiles:
        out.append("[[tiles]]")
        out.append("colors = [" + ", ".join(str(c) for c in colors) + "]")
        for mol, pos, rot in instances:
            out.append("[[tiles.instances]]")
            out.append(f"molecule = {mol}")
            out.append(f"position = {fmt(pos)}")
            out.append(f"rotation = {fmt(rot)}")
        out.append("")
    return "\n".join(out)


def tiles():
    rng = random.Random(11)
    # Square edges are N, E, S, W; one tile per (W, S) pair keeps every
    # scanline fill satisfiable.
    square_edges = [(0, 1, 0, 0), (1, 0, 1, 0), (1, 1, 0, 1), (0, 0, 1, 1)]
    squares = []
    for edges in square_edges:
        inst = []
        for k in range(4):
            x = (k % 2 - 0.5) * 8 + rng.uniform(-1.5, 1.5)
            z = (k // 2 - 0.5) * 8 + rng.uniform(-1.5, 1.5)
            mol = [0, 1, 2, 1][k]
            y = [11.0, 5.0, 3.0, 5.0][k] + rng.uniform(-0.5, 0.5)
            inst.append((mol, [x, y, z], quat(rng) if mol != 0 else [1, 0, 0, 0]))
        squares.append((edges, inst))
    write("tiles/squares.toml", tile_file("square", 16, squares))

    # Cube faces are +x, -x, +y, -y, +z, -z; one tile per (-x, -y) pair,
    # z faces all colour 0.
    cube_faces = [(1, 0, 0, 0, 0, 0), (0, 0, 1, 1, 0, 0), (0, 1, 1, 0, 0, 0), (1, 1, 0, 1, 0, 0)]
    cubes = []
    for faces in cube_faces:
        inst = []
        for k in range(3):
            mol = [1, 2, 2][k]
            pos = [rng.uniform(-4, 4) for _ in range(3)]
            inst.append((mol, pos, quat(rng)))
        cubes.append((faces, inst))
    write("tiles/cubes.toml", tile_file("cube", 20, cubes))

    write("tiles/single_square.toml", tile_file("square", 10, [((0, 0, 0, 0), [(0, [0, 3, 0], [1, 0, 0, 0])])]))
    write("tiles/single_cube100.toml", tile_file("cube", 10, [((0,) * 6, [(0, [0, 0, 0], [1, 0, 0, 0])])]))
    write(
        "tiles/tall_square.toml",
        tile_file("square", 10, [((0, 0, 0, 0), [(0, [0, 12, 0], [1, 0, 0, 0])])]),
    )

    # 3x3 recipe over the four squares; the second row sits on tiles whose
    # north colour does not match its south colour.
    write("recipes/bad_square.toml", "version = 1\ndims = [3, 3]\ncells = [0, 2, 3, 1, 1, 1, 0, 0, 0]\n")


# --- scenes ----------------------------------------------------------------

MICRO_HEAD = """version = 1

[[molecules]]
file = "../molecules/lipid.pdb"
color = [0.93, 0.76, 0.35]

[[molecules]]
file = "../molecules/globule.pdb"
color = [0.36, 0.62, 0.9]

[[molecules]]
file = "../molecules/small.pdb"
color = [0.85, 0.35, 0.38]

[square_tiles]
file = "../tiles/squares.toml"
tile_uv_size = 0.041666666666666664
seed = 3

[cube_tiles]
file = "../tiles/cubes.toml"
seed = 5

[[meshes]]
file = "../meshes/icosphere.obj"
shell = true
core = true
"""


def scenes():
    write(
        "scenes/micro-cell.toml",
        MICRO_HEAD
        + """
[camera]
position = [0.0, 0.0, 200.0]
target = [0.0, 0.0, 0.0]
fov = 40.0
width = 256
height = 256
""",
    )

    inst = []
    for j in range(10):
        for i in range(10):
            inst.append(
                "[[meshes.instances]]\n"
                f"translation = [{(i - 4.5) * 150.0}, {(j - 4.5) * 150.0}, 0.0]\n"
            )
    write(
        "scenes/micro-cell-100.toml",
        MICRO_HEAD
        + "\n"
        + "\n".join(inst)
        + """
[camera]
position = [0.0, 0.0, 2200.0]
target = [0.0, 0.0, 0.0]
fov = 40.0
width = 256
height = 256
""",
    )

    write(
        "scenes/minimal.toml",
        """version = 1

[[molecules]]
file = "../molecules/small.pdb"
color = [0.9, 0.5, 0.2]

[square_tiles]
file = "../tiles/single_square.toml"
tile_uv_size = 0.25

[[meshes]]
file = "../meshes/quad.obj"

[camera]
position = [20.0, 60.0, -20.0]
target = [20.0, 0.0, -20.0]
up = [0.0, 0.0, -1.0]
fov = 50.0
width = 64
height = 64
""",
    )

    write(
        "scenes/grid512.toml",
        """version = 1

[[molecules]]
file = "../molecules/blob100.pdb"
color = [0.4, 0.8, 0.5]

[cube_tiles]
file = "../tiles/single_cube100.toml"

[[meshes]]
file = "../meshes/cube80.obj"
shell = false
core = true

[camera]
position = [40.0, 40.0, 40.0]
target = [40.0, 40.0, 0.0]
fov = 60.0
width = 64
height = 64
""",
    )

    write(
        "scenes/bad-recipe.toml",
        """version = 1

[[molecules]]
file = "../molecules/lipid.pdb"

[[molecules]]
file = "../molecules/globule.pdb"

[[molecules]]
file = "../molecules/small.pdb"

[square_tiles]
file = "../tiles/squares.toml"
tile_uv_size = 0.5
recipe = "../recipes/bad_square.toml"

[[meshes]]
file = "../meshes/quad.obj"
""",
    )

    write(
        "scenes/degenerate-prism.toml",
        """version = 1

[[molecules]]
file = "../molecules/small.pdb"

[square_tiles]
file = "../tiles/tall_square.toml"
tile_uv_size = 0.5

[[meshes]]
file = "../meshes/folded.obj"
""",
    )


if __name__ == "__main__":
    molecules()
    meshes()
    tiles()
    scenes()
