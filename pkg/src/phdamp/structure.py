"""Frame structures: description, generation and second-order FEM assembly.

A structure is a set of nodes joined by 3-D Euler-Bernoulli beams and axial
links. Links only touch the translational DOFs of a node; rotational DOFs
exist only where at least one beam attaches. Constrained DOFs are removed
from the system by deleting rows and columns.

Assembly yields ``M q'' + D q' + K q = F_u u`` with Rayleigh damping
``D = alpha1 * M + alpha2 * K``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import tomli
import tomli_w

AXES = ("ux", "uy", "uz", "rx", "ry", "rz")
LAYOUTS = ("none", "lower_three", "columns_lower_three", "all_storeys")


class StructureError(ValueError):
    """Invalid structure description or ill-posed assembly."""


@dataclass(frozen=True)
class Material:
    E: float
    rho: float
    nu: float = 0.3

    @property
    def G(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))


STEEL = Material(E=2.1e11, rho=7850.0, nu=0.3)


@dataclass(frozen=True)
class Section:
    """Cross-section data. ``Iy``, ``Iz`` and ``J`` are only used by beams."""

    A: float
    Iy: float = 0.0
    Iz: float = 0.0
    J: float = 0.0


@dataclass(frozen=True)
class Node:
    id: int
    position: tuple[float, float, float]
    fixed: tuple[bool, ...] = (False,) * 6


@dataclass(frozen=True)
class Element:
    kind: str  # "beam" | "link"
    nodes: tuple[int, int]
    material: Material
    section: Section


@dataclass(frozen=True)
class Actuator:
    nodes: tuple[int, int]
    direction: tuple[float, float, float]


@dataclass(frozen=True)
class StructureSpec:
    nodes: tuple[Node, ...]
    elements: tuple[Element, ...]
    actuators: tuple[Actuator, ...] = ()
    alpha1: float = 0.05
    alpha2: float = 0.005
    name: str = "structure"
    meta: dict = field(default_factory=dict, compare=False)

    def node_index(self) -> dict[int, Node]:
        return {n.id: n for n in self.nodes}

    @property
    def ground_nodes(self) -> list[int]:
        return [n.id for n in self.nodes if all(n.fixed[:3])]


@dataclass(frozen=True)
class DofLabel:
    node: int
    axis: str

    @property
    def kind(self) -> str:
        return "translational" if self.axis.startswith("u") else "rotational"


@dataclass(frozen=True, eq=False)
class SecondOrderModel:
    """Assembled ``M, D, K, F_u`` (sparse CSR) with per-DOF labels."""

    M: sp.csr_matrix
    D: sp.csr_matrix
    K: sp.csr_matrix
    Fu: sp.csr_matrix
    dof_labels: tuple[DofLabel, ...]
    alpha1: float
    alpha2: float

    @property
    def n_dof(self) -> int:
        return self.M.shape[0]

    @property
    def m(self) -> int:
        return self.Fu.shape[1]

    def dofs_of(self, node_ids: Sequence[int]) -> np.ndarray:
        wanted = set(node_ids)
        return np.array([i for i, d in enumerate(self.dof_labels) if d.node in wanted], dtype=int)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def validate(spec: StructureSpec) -> StructureSpec:
    ids = [n.id for n in spec.nodes]
    if len(set(ids)) != len(ids):
        raise StructureError("nodes: duplicate node id")
    index = spec.node_index()
    for n in spec.nodes:
        if len(n.fixed) != 6:
            raise StructureError(f"nodes[{n.id}].fixed: expected 6 flags")
    for i, el in enumerate(spec.elements):
        if el.kind not in ("beam", "link"):
            raise StructureError(f"elements[{i}].kind: unknown element kind {el.kind!r}")
        for nid in el.nodes:
            if nid not in index:
                raise StructureError(f"elements[{i}].nodes: dangling reference to node {nid}")
        if el.nodes[0] == el.nodes[1] or _length(index, el.nodes) <= 0.0:
            raise StructureError(f"elements[{i}]: degenerate element (zero length)")
        if el.material.E <= 0 or el.material.rho <= 0 or el.section.A <= 0:
            raise StructureError(f"elements[{i}]: E, rho and A must be positive")
        if el.kind == "beam" and min(el.section.Iy, el.section.Iz, el.section.J) <= 0:
            raise StructureError(f"elements[{i}]: beams need positive Iy, Iz and J")
    for i, act in enumerate(spec.actuators):
        for nid in act.nodes:
            if nid not in index:
                raise StructureError(f"actuators[{i}].nodes: dangling reference to node {nid}")
        if not math.isclose(float(np.linalg.norm(act.direction)), 1.0, rel_tol=1e-9):
            raise StructureError(f"actuators[{i}].direction: not a unit vector")
    if spec.alpha1 < 0 or spec.alpha2 < 0 or (spec.alpha1 == 0 and spec.alpha2 == 0):
        raise StructureError("damping: alpha1, alpha2 must be >= 0 and not both zero")
    return spec


def _length(index: dict[int, Node], nodes: tuple[int, int]) -> float:
    a, b = (np.asarray(index[n].position, dtype=float) for n in nodes)
    return float(np.linalg.norm(b - a))


# ---------------------------------------------------------------------------
# element matrices
# ---------------------------------------------------------------------------


def _rotation(p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    """Rows are the element's local x, y, z axes in global coordinates."""
    ex = (p2 - p1) / np.linalg.norm(p2 - p1)
    ref = np.array([0.0, 0.0, 1.0])
    if abs(ex @ ref) > 0.999:
        ref = np.array([1.0, 0.0, 0.0])
    ez = np.cross(ex, ref)
    ez /= np.linalg.norm(ez)
    ey = np.cross(ez, ex)
    return np.vstack([ex, ey, ez])


def beam_local_matrices(mat: Material, sec: Section, L: float) -> tuple[np.ndarray, np.ndarray]:
    """12x12 Euler-Bernoulli stiffness and consistent mass in local axes.

    DOF order per node is ``(ux, uy, uz, rx, ry, rz)``; bending in the
    local x-y plane uses ``Iz`` and in the x-z plane ``Iy``.
    """
    E, G = mat.E, mat.G
    k = np.zeros((12, 12))
    ea, gj = E * sec.A / L, G * sec.J / L
    k[np.ix_([0, 6], [0, 6])] = ea * np.array([[1, -1], [-1, 1]])
    k[np.ix_([3, 9], [3, 9])] = gj * np.array([[1, -1], [-1, 1]])

    def bend(EI, sign):
        s = sign
        return EI / L**3 * np.array(
            [
                [12, s * 6 * L, -12, s * 6 * L],
                [s * 6 * L, 4 * L**2, -s * 6 * L, 2 * L**2],
                [-12, -s * 6 * L, 12, -s * 6 * L],
                [s * 6 * L, 2 * L**2, -s * 6 * L, 4 * L**2],
            ]
        )

    k[np.ix_([1, 5, 7, 11], [1, 5, 7, 11])] = bend(E * sec.Iz, +1)
    k[np.ix_([2, 4, 8, 10], [2, 4, 8, 10])] = bend(E * sec.Iy, -1)

    m = np.zeros((12, 12))
    mt = mat.rho * sec.A * L
    pair = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    m[np.ix_([0, 6], [0, 6])] = mt * pair
    m[np.ix_([3, 9], [3, 9])] = mat.rho * (sec.Iy + sec.Iz) * L * pair

    def bend_mass(sign):
        s = sign
        return mt / 420.0 * np.array(
            [
                [156, s * 22 * L, 54, -s * 13 * L],
                [s * 22 * L, 4 * L**2, s * 13 * L, -3 * L**2],
                [54, s * 13 * L, 156, -s * 22 * L],
                [-s * 13 * L, -3 * L**2, -s * 22 * L, 4 * L**2],
            ]
        )

    m[np.ix_([1, 5, 7, 11], [1, 5, 7, 11])] = bend_mass(+1)
    m[np.ix_([2, 4, 8, 10], [2, 4, 8, 10])] = bend_mass(-1)
    return k, m


def element_matrices(element: Element, positions: dict[int, Sequence[float]]) -> tuple[np.ndarray, np.ndarray]:
    """Global-coordinate stiffness and mass of one element.

    Beams return 12x12 matrices over ``(u, r)`` of both end nodes; links
    return 6x6 matrices over the translations of both end nodes.
    """
    p1 = np.asarray(positions[element.nodes[0]], dtype=float)
    p2 = np.asarray(positions[element.nodes[1]], dtype=float)
    L = float(np.linalg.norm(p2 - p1))
    if L <= 0.0:
        raise StructureError("zero-length element")
    mat, sec = element.material, element.section
    if element.kind == "link":
        c = (p2 - p1) / L
        cc = np.outer(c, c)
        k = mat.E * sec.A / L * np.block([[cc, -cc], [-cc, cc]])
        eye = np.eye(3)
        m = mat.rho * sec.A * L / 6.0 * np.block([[2 * eye, eye], [eye, 2 * eye]])
        return k, m
    if element.kind != "beam":
        raise StructureError(f"unknown element kind {element.kind!r}")
    k_loc, m_loc = beam_local_matrices(mat, sec, L)
    T = sla.block_diag(*([_rotation(p1, p2)] * 4))
    return T.T @ k_loc @ T, T.T @ m_loc @ T


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def _dof_table(spec: StructureSpec) -> tuple[dict[tuple[int, int], int], list[DofLabel]]:
    """Map (node id, axis index) -> reduced DOF index for all free, active DOFs."""
    has_beam = {nid: False for nid in (n.id for n in spec.nodes)}
    touched = set()
    for el in spec.elements:
        for nid in el.nodes:
            touched.add(nid)
            if el.kind == "beam":
                has_beam[nid] = True
    table: dict[tuple[int, int], int] = {}
    labels: list[DofLabel] = []
    for node in spec.nodes:
        if node.id not in touched:
            continue
        axes = range(6) if has_beam[node.id] else range(3)
        for a in axes:
            if node.fixed[a]:
                continue
            table[(node.id, a)] = len(labels)
            labels.append(DofLabel(node.id, AXES[a]))
    return table, labels


def assemble(spec: StructureSpec) -> SecondOrderModel:
    """Assemble the reduced second-order model of a validated structure."""
    validate(spec)
    table, labels = _dof_table(spec)
    n = len(labels)
    if n == 0:
        raise StructureError("structure has no free DOFs")
    positions = {node.id: node.position for node in spec.nodes}
    rows, cols, kv, mv = [], [], [], []
    for el in spec.elements:
        k, m = element_matrices(el, positions)
        axes = range(6) if el.kind == "beam" else range(3)
        gdofs = [table.get((nid, a), -1) for nid in el.nodes for a in axes]
        keep = [i for i, g in enumerate(gdofs) if g >= 0]
        g = np.array([gdofs[i] for i in keep], dtype=int)
        sub = np.ix_(keep, keep)
        rows.append(np.repeat(g, len(g)))
        cols.append(np.tile(g, len(g)))
        kv.append(k[sub].ravel())
        mv.append(m[sub].ravel())
    r, c = np.concatenate(rows), np.concatenate(cols)
    K = sp.csr_matrix((np.concatenate(kv), (r, c)), shape=(n, n))
    M = sp.csr_matrix((np.concatenate(mv), (r, c)), shape=(n, n))
    K = ((K + K.T) * 0.5).tocsr()
    M = ((M + M.T) * 0.5).tocsr()
    K.sum_duplicates()
    M.sum_duplicates()
    for name, mat in (("mass", M), ("stiffness", K)):
        if not _is_positive_definite(mat):
            raise StructureError(
                f"{name} matrix is not positive definite after constraint elimination "
                "(under-constrained structure or rigid-body mode)"
            )
    D = (spec.alpha1 * M + spec.alpha2 * K).tocsr()

    fu = np.zeros((n, len(spec.actuators)))
    for j, act in enumerate(spec.actuators):
        d = np.asarray(act.direction, dtype=float)
        for sign, nid in ((-1.0, act.nodes[0]), (1.0, act.nodes[1])):
            for a in range(3):
                idx = table.get((nid, a))
                if idx is not None:
                    fu[idx, j] += sign * d[a]
    return SecondOrderModel(M, D, K, sp.csr_matrix(fu), tuple(labels), spec.alpha1, spec.alpha2)


def _is_positive_definite(A: sp.spmatrix) -> bool:
    dense = A.toarray()
    try:
        L = np.linalg.cholesky(dense)
    except np.linalg.LinAlgError:
        return False
    d = np.diag(L) ** 2
    # Cholesky of a numerically singular matrix can succeed with a tiny pivot.
    return bool(d.min() > 1e-12 * d.max())


# ---------------------------------------------------------------------------
# frame generator
# ---------------------------------------------------------------------------

DEFAULT_COLUMN = Section(A=6.0e-3, Iy=3.5e-5, Iz=3.5e-5, J=5.0e-5)
DEFAULT_LINK = Section(A=1.2e-3)


def generate_frame(
    storeys: int = 6,
    bay_width: float = 2.0,
    storey_height: float = 2.5,
    material: Material = STEEL,
    actuator_layout: str = "lower_three",
    column_section: Section = DEFAULT_COLUMN,
    link_section: Section = DEFAULT_LINK,
    alpha1: float = 0.05,
    alpha2: float = 0.005,
    floor_diagonals: bool = False,
) -> StructureSpec:
    """Slender square-plan frame with four corner columns.

    Each level carries four corner nodes, so ``storeys=6`` gives 28 nodes of
    which the four at level 0 are ground nodes. Columns are continuous beams;
    perimeter horizontals and one face diagonal per storey and face are
    links. Ground nodes keep only their rotations about the two horizontal
    axes.

    ``actuator_layout``:

    * ``"lower_three"`` - every column segment and every face diagonal in the
      lowest three storeys carries an actuator (24 actuators).
    * ``"columns_lower_three"`` - column segments of the lowest three storeys.
    * ``"all_storeys"`` - columns and diagonals in every storey.
    * ``"none"``.
    """
    if storeys < 1:
        raise StructureError("storeys must be >= 1")
    if bay_width <= 0 or storey_height <= 0:
        raise StructureError("bay_width and storey_height must be positive")
    if actuator_layout not in LAYOUTS:
        raise StructureError(f"unknown actuator layout {actuator_layout!r}")
    if actuator_layout in ("lower_three", "columns_lower_three") and storeys < 3:
        raise StructureError("layout-infeasible: three-storey actuator layout needs at least 3 storeys")

    corners = [(0.0, 0.0), (bay_width, 0.0), (bay_width, bay_width), (0.0, bay_width)]

    def nid(level: int, corner: int) -> int:
        return 4 * level + corner

    ground_fixed = (True, True, True, False, False, True)
    nodes = [
        Node(nid(lv, c), (x, y, lv * storey_height), ground_fixed if lv == 0 else (False,) * 6)
        for lv in range(storeys + 1)
        for c, (x, y) in enumerate(corners)
    ]
    pos = {n.id: np.asarray(n.position) for n in nodes}
    elements: list[Element] = []
    actuators: list[Actuator] = []

    def actuate(storey: int) -> tuple[bool, bool]:
        if actuator_layout == "none":
            return False, False
        if actuator_layout == "all_storeys":
            return True, True
        lower = storey <= 3
        return lower, lower and actuator_layout == "lower_three"

    def add_actuator(a: int, b: int) -> None:
        d = pos[b] - pos[a]
        actuators.append(Actuator((a, b), tuple(float(v) for v in d / np.linalg.norm(d))))

    for s in range(1, storeys + 1):
        on_col, on_diag = actuate(s)
        for c in range(4):
            elements.append(Element("beam", (nid(s - 1, c), nid(s, c)), material, column_section))
            if on_col:
                add_actuator(nid(s - 1, c), nid(s, c))
        for c in range(4):
            elements.append(Element("link", (nid(s, c), nid(s, (c + 1) % 4)), material, link_section))
        for c in range(4):
            # diagonals alternate direction from storey to storey
            a, b = (nid(s - 1, c), nid(s, (c + 1) % 4)) if s % 2 else (nid(s - 1, (c + 1) % 4), nid(s, c))
            elements.append(Element("link", (a, b), material, link_section))
            if on_diag:
                add_actuator(a, b)
        if floor_diagonals:
            elements.append(Element("link", (nid(s, 0), nid(s, 2)), material, link_section))

    meta = {
        "generator": "frame",
        "storeys": storeys,
        "bay_width": bay_width,
        "storey_height": storey_height,
        "actuator_layout": actuator_layout,
        "top_nodes": [nid(storeys, c) for c in range(4)],
    }
    return validate(
        StructureSpec(tuple(nodes), tuple(elements), tuple(actuators), alpha1, alpha2, f"frame{storeys}", meta)
    )


def top_nodes(spec: StructureSpec) -> list[int]:
    """Nodes of the upmost level (highest z coordinate)."""
    if "top_nodes" in spec.meta:
        return list(spec.meta["top_nodes"])
    z = max(n.position[2] for n in spec.nodes)
    return [n.id for n in spec.nodes if math.isclose(n.position[2], z, abs_tol=1e-9)]


# ---------------------------------------------------------------------------
# structure file I/O
# ---------------------------------------------------------------------------


def _fixed_flags(value, where: str) -> tuple[bool, ...]:
    if isinstance(value, str):
        value = {"all": list(AXES), "none": [], "pinned": ["ux", "uy", "uz"]}.get(value, [value])
    bad = [v for v in value if v not in AXES]
    if bad:
        raise StructureError(f"{where}.fixed: unknown axis {bad[0]!r}")
    return tuple(a in value for a in AXES)


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise StructureError(f"{where}.{key}: missing field")
    return table[key]


def parse_structure_spec(text: str) -> StructureSpec:
    """Parse a structure document (TOML dialect, see ``docs/structure_format.md``)."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise StructureError(f"document: {exc}") from None
    materials = {}
    for name, t in doc.get("materials", {}).items():
        where = f"materials.{name}"
        materials[name] = Material(
            float(_require(t, "E", where)), float(_require(t, "rho", where)), float(t.get("nu", 0.3))
        )
    sections = {}
    for name, t in doc.get("sections", {}).items():
        where = f"sections.{name}"
        sections[name] = Section(
            float(_require(t, "A", where)), float(t.get("Iy", 0.0)), float(t.get("Iz", 0.0)), float(t.get("J", 0.0))
        )

    if "nodes" not in doc:
        raise StructureError("nodes: missing section")
    nodes = []
    for i, t in enumerate(doc["nodes"]):
        where = f"nodes[{i}]"
        position = _require(t, "position", where)
        if len(position) != 3:
            raise StructureError(f"{where}.position: expected 3 coordinates")
        nodes.append(
            Node(int(_require(t, "id", where)), tuple(float(v) for v in position), _fixed_flags(t.get("fixed", []), where))
        )

    elements = []
    for i, t in enumerate(doc.get("elements", [])):
        where = f"elements[{i}]"
        mat = t.get("material", "steel")
        if isinstance(mat, str):
            if mat not in materials:
                if mat != "steel":
                    raise StructureError(f"{where}.material: unknown material {mat!r}")
                materials[mat] = STEEL
            mat = materials[mat]
        else:
            mat = Material(float(mat["E"]), float(mat["rho"]), float(mat.get("nu", 0.3)))
        sec = _require(t, "section", where)
        if isinstance(sec, str):
            if sec not in sections:
                raise StructureError(f"{where}.section: unknown section {sec!r}")
            sec = sections[sec]
        else:
            sec = Section(float(sec["A"]), float(sec.get("Iy", 0)), float(sec.get("Iz", 0)), float(sec.get("J", 0)))
        ends = _require(t, "nodes", where)
        if len(ends) != 2:
            raise StructureError(f"{where}.nodes: expected two node ids")
        elements.append(Element(str(_require(t, "kind", where)), (int(ends[0]), int(ends[1])), mat, sec))

    index = {n.id: n for n in nodes}
    actuators = []
    for i, t in enumerate(doc.get("actuators", [])):
        where = f"actuators[{i}]"
        a, b = (int(v) for v in _require(t, "nodes", where))
        if a not in index or b not in index:
            raise StructureError(f"{where}.nodes: dangling reference to node {a if a not in index else b}")
        if "direction" in t:
            d = np.asarray(t["direction"], dtype=float)
        else:
            d = np.asarray(index[b].position) - np.asarray(index[a].position)
        norm = np.linalg.norm(d)
        if norm == 0:
            raise StructureError(f"{where}.direction: zero vector")
        actuators.append(Actuator((a, b), tuple(float(v) for v in d / norm)))

    damping = doc.get("damping", {})
    meta = dict(doc.get("meta", {}))
    spec = StructureSpec(
        tuple(nodes),
        tuple(elements),
        tuple(actuators),
        float(damping.get("alpha1", 0.05)),
        float(damping.get("alpha2", 0.005)),
        str(meta.get("name", "structure")),
        meta,
    )
    return validate(spec)


def load_structure(path: str | Path) -> StructureSpec:
    return parse_structure_spec(Path(path).read_text())


def dump_structure_spec(spec: StructureSpec) -> str:
    """Serialize to the structure document format (named materials/sections)."""
    mats: dict[Material, str] = {}
    secs: dict[Section, str] = {}
    for el in spec.elements:
        mats.setdefault(el.material, f"mat{len(mats)}")
        secs.setdefault(el.section, f"sec{len(secs)}")
    doc = {
        "meta": {"name": spec.name, **{k: v for k, v in spec.meta.items() if k != "name"}},
        "damping": {"alpha1": spec.alpha1, "alpha2": spec.alpha2},
        "materials": {name: {"E": m.E, "rho": m.rho, "nu": m.nu} for m, name in mats.items()},
        "sections": {name: {"A": s.A, "Iy": s.Iy, "Iz": s.Iz, "J": s.J} for s, name in secs.items()},
        "nodes": [
            {"id": n.id, "position": list(n.position), "fixed": [a for a, f in zip(AXES, n.fixed) if f]}
            for n in spec.nodes
        ],
        "elements": [
            {"kind": el.kind, "nodes": list(el.nodes), "material": mats[el.material], "section": secs[el.section]}
            for el in spec.elements
        ],
        "actuators": [{"nodes": list(a.nodes), "direction": list(a.direction)} for a in spec.actuators],
    }
    return tomli_w.dumps(doc)


def spring_mass_chain(
    masses: Sequence[float],
    stiffnesses: Sequence[float],
    actuated: Sequence[tuple[int, int]] = ((-1, 0),),
    alpha1: float = 0.05,
    alpha2: float = 0.005,
) -> SecondOrderModel:
    """Masses in series, the first one tied to ground by ``stiffnesses[0]``.

    Each actuator ``(a, b)`` pushes mass ``b`` forward and mass ``a``
    back; ``a = -1`` means ground.
    """
    masses = np.asarray(masses, dtype=float)
    ks = np.asarray(stiffnesses, dtype=float)
    n = masses.size
    if n == 0 or ks.size != n:
        raise StructureError("need one stiffness per mass")
    if np.any(masses <= 0) or np.any(ks <= 0):
        raise StructureError("masses and stiffnesses must be positive")
    K = np.zeros((n, n))
    for i, k in enumerate(ks):
        K[i, i] += k
        if i > 0:
            K[i - 1, i - 1] += k
            K[i - 1, i] -= k
            K[i, i - 1] -= k
    M = np.diag(masses)
    fu = np.zeros((n, len(actuated)))
    for j, (a, b) in enumerate(actuated):
        if a >= 0:
            fu[a, j] -= 1.0
        fu[b, j] += 1.0
    D = alpha1 * M + alpha2 * K
    labels = tuple(DofLabel(i, "ux") for i in range(n))
    return SecondOrderModel(
        sp.csr_matrix(M), sp.csr_matrix(D), sp.csr_matrix(K), sp.csr_matrix(fu), labels, alpha1, alpha2
    )


def natural_frequencies(model: SecondOrderModel, count: int = 6) -> np.ndarray:
    """Lowest undamped natural frequencies in Hz."""
    w2 = sla.eigh(model.K.toarray(), model.M.toarray(), eigvals_only=True)
    return np.sqrt(np.clip(w2[:count], 0.0, None)) / (2 * math.pi)


def model_summary(spec: StructureSpec, model: SecondOrderModel) -> dict:
    rec = {
        "name": spec.name,
        "nodes": len(spec.nodes),
        "elements": len(spec.elements),
        "actuators": len(spec.actuators),
        "n_dof": model.n_dof,
        "alpha1": model.alpha1,
        "alpha2": model.alpha2,
    }
    for i, f in enumerate(natural_frequencies(model), 1):
        rec[f"frequency_{i}_hz"] = float(f)
    return rec
