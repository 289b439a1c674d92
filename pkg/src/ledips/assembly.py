"""Find Vehicles: group detected LED points into vehicles from distance
constraints alone.

Every point gets an *area*: the set of points it could share a vehicle with.
Points that have a partner at vehicle-width are back points; their area is
limited to the partner plus the lens-shaped regions where the front LED and
the identification LED of that back pair can lie. All other points accept
anything within vehicle-length. The relation is made symmetric (a pair is
related when either point admits the other). Vehicles are then carved out in
sweeps by intersecting areas, starting from the point with the fewest
candidates; points claimed in one sweep leave the areas for the next.

Sets are Python ints used as bitmasks over point indices.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, OracleLimitError
from .geometry import VehicleGeometry
from .pose import label_vehicle

BRUTE_FORCE_LIMIT = 30


def _bits(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def _mask(indices) -> int:
    m = 0
    for i in indices:
        m |= 1 << int(i)
    return m


def _row_masks(m: np.ndarray) -> tuple[int, ...]:
    packed = np.packbits(m, axis=1, bitorder="little")
    return tuple(int.from_bytes(row.tobytes(), "little") for row in packed)


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    d = p[:, None, :] - p[None, :, :]
    return np.hypot(d[..., 0], d[..., 1])


_PAIRS = {k: tuple(itertools.combinations(range(k), 2)) for k in (3, 4)}


def matches_geometry(points, geom: VehicleGeometry) -> bool:
    """Sorted pairwise distances agree element-wise with the reference within tolerance."""
    pts = np.asarray(points, dtype=float).tolist()
    pairs = _PAIRS.get(len(pts))
    if pairs is None:
        return False
    ref = geom.reference_distances[len(pts)]
    d = sorted(math.hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]) for i, j in pairs)
    tau = geom.tolerance
    return all(abs(a - b) <= tau for a, b in zip(d, ref.tolist()))


def merge_duplicates(points, min_separation: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Drop points closer than ``min_separation`` to an earlier one.

    Returns (kept points, indices into the input).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        return pts, np.arange(len(pts))
    d = pairwise_distances(pts)
    close = np.triu(d < min_separation, k=1)
    if not close.any():
        return pts, np.arange(len(pts))
    drop = np.zeros(len(pts), dtype=bool)
    for i in range(len(pts)):
        if not drop[i]:
            drop |= close[i]
    keep = np.flatnonzero(~drop)
    return pts[keep], keep


@dataclass(frozen=True, eq=False)
class NeighborMap:
    """Per-point candidate sets.

    ``back_partners[p]`` are points at vehicle-width from p. ``areas[p]`` is p's
    vehicle mapping, which includes p itself.
    """

    points: np.ndarray
    back_partners: tuple[int, ...]
    areas: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.areas)

    def area(self, p: int) -> frozenset[int]:
        return frozenset(_bits(self.areas[p]))

    def partners(self, p: int) -> frozenset[int]:
        return frozenset(_bits(self.back_partners[p]))


def _restricted_regions(d: np.ndarray, pts: np.ndarray, p: np.ndarray, b: np.ndarray,
                        geom: VehicleGeometry) -> np.ndarray:
    """Points where the front or identification LED of back pair (p[k], b[k])
    may lie, one row per pair.

    Both labelings of each pair are tried; each one fixes which side of the
    back line the vehicle extends to.
    """
    g = geom.points
    tau = geom.tolerance
    ab = pts[b] - pts[p]                                   # (P, 2)
    rel = pts[None, :, :] - pts[p][:, None, :]             # (P, n, 2)
    side = np.sign(ab[:, None, 0] * rel[..., 1] - ab[:, None, 1] * rel[..., 0])
    dp, db = d[p], d[b]
    hit = np.zeros(dp.shape, dtype=bool)
    g12 = g[1] - g[0]
    for k in (2, 3):
        r0 = np.linalg.norm(g[k] - g[0])
        r1 = np.linalg.norm(g[k] - g[1])
        s = np.sign(g12[0] * (g[k] - g[0])[1] - g12[1] * (g[k] - g[0])[0])
        # p plays back_left, b back_right
        hit |= (np.abs(dp - r0) <= tau) & (np.abs(db - r1) <= tau) & (side == s)
        # p plays back_right, b back_left: the side flips with the pair direction
        hit |= (np.abs(dp - r1) <= tau) & (np.abs(db - r0) <= tau) & (side == -s)
    return hit


def build_neighbor_map(points, geom: VehicleGeometry) -> NeighborMap:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    d = pairwise_distances(pts)
    tau = geom.tolerance
    eye = np.eye(n, dtype=bool)
    partner = (np.abs(d - geom.vehicle_width) <= tau) & ~eye
    accept = (d <= geom.vehicle_length + tau) | eye
    backs = partner.any(axis=1)
    if backs.any():
        p, b = np.nonzero(partner)
        regions = _restricted_regions(d, pts, p, b, geom)
        rows = partner | eye
        np.logical_or.at(rows, p, regions)
        accept[backs] = rows[backs]
    # q may share a vehicle with p if either one's rule admits the other
    sym = accept | accept.T
    return NeighborMap(pts, _row_masks(partner), _row_masks(sym))


class MatchKind(enum.Enum):
    VEHICLE = "vehicle"
    DISTURBANCE = "disturbance"
    NOT_YET = "not_yet"


@dataclass(frozen=True)
class MatchResult:
    kind: MatchKind
    members: frozenset[int] = frozenset()


def match_step(p: int, nm: NeighborMap, geom: VehicleGeometry, alive: int | None = None) -> MatchResult:
    """One step of matching point ``p`` against its area.

    ``alive`` masks out points already assigned; ``None`` means all points.
    """
    if alive is None:
        alive = (1 << len(nm)) - 1
    mapping = nm.areas[p] & alive
    members = _bits(mapping)
    n = len(members)
    if n < 3:
        return MatchResult(MatchKind.DISTURBANCE)
    if n > 4:
        return MatchResult(MatchKind.NOT_YET)
    s = mapping
    for q in members:
        if q != p:
            s &= nm.areas[q]
    if s == mapping:
        if matches_geometry(nm.points[members], geom):
            return MatchResult(MatchKind.VEHICLE, frozenset(members))
        if n == 3:
            return MatchResult(MatchKind.DISTURBANCE)
        return MatchResult(MatchKind.NOT_YET)
    if n == 3:
        return MatchResult(MatchKind.DISTURBANCE)
    return MatchResult(MatchKind.NOT_YET)


@dataclass(frozen=True)
class AssembledVehicle:
    back_left: int
    back_right: int
    front: int
    id_led: int | None = None

    @property
    def indices(self) -> tuple[int, ...]:
        idx = [self.back_left, self.back_right, self.front]
        if self.id_led is not None:
            idx.append(self.id_led)
        return tuple(sorted(idx))

    @property
    def positioning(self) -> tuple[int, int, int]:
        return (self.back_left, self.back_right, self.front)

    @property
    def roles(self) -> dict[int, str]:
        r = {self.back_left: "back_left", self.back_right: "back_right", self.front: "front"}
        if self.id_led is not None:
            r[self.id_led] = "id_led"
        return r


def make_vehicle(indices, points: np.ndarray, geom: VehicleGeometry) -> AssembledVehicle:
    idx = sorted(int(i) for i in indices)
    (a, b, f), k = label_vehicle(points[idx], geom)
    return AssembledVehicle(idx[a], idx[b], idx[f], None if k is None else idx[k])


@dataclass(frozen=True)
class AssemblyOutcome:
    vehicles: tuple[AssembledVehicle, ...]
    disturbance: frozenset[int]
    unmapped: frozenset[int]
    used_fallback: bool = False
    iterations: int = 0


@dataclass(frozen=True)
class BruteForceResult:
    candidates: tuple[tuple[int, ...], ...]
    conflicts: tuple[tuple[int, int], ...] = field(default=())

    def maximal(self) -> tuple[tuple[int, ...], ...]:
        """Candidates not strictly contained in another candidate (a visible
        3-LED triangle inside a 4-LED vehicle is the same vehicle)."""
        sets = [frozenset(c) for c in self.candidates]
        return tuple(c for c, s in zip(self.candidates, sets)
                     if not any(s < t for t in sets))

    @property
    def conflict_free(self) -> bool:
        return not self.conflicts


def brute_force_assemble(points, geom: VehicleGeometry, prune: bool = True,
                         limit: int = BRUTE_FORCE_LIMIT) -> BruteForceResult:
    """Enumerate every 3- and 4-subset whose distances match the geometry.

    With ``prune`` only subsets whose points are pairwise within vehicle-length
    plus tolerance are examined; that bound holds for every matching subset,
    so the result is the same.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n > limit:
        raise OracleLimitError(f"brute force supports at most {limit} points, got {n}")
    found: list[tuple[int, ...]] = []
    if prune:
        near = pairwise_distances(pts) <= geom.vehicle_length + geom.tolerance
        for i in range(n):
            nbr = [j for j in range(i + 1, n) if near[i, j]]
            for size in (3, 4):
                for rest in itertools.combinations(nbr, size - 1):
                    if all(near[a, b] for a, b in itertools.combinations(rest, 2)):
                        combo = (i, *rest)
                        if matches_geometry(pts[list(combo)], geom):
                            found.append(combo)
    else:
        for size in (3, 4):
            for combo in itertools.combinations(range(n), size):
                if matches_geometry(pts[list(combo)], geom):
                    found.append(combo)
    found.sort(key=lambda c: (len(c), c))
    conflicts = tuple((a, b) for a, b in itertools.combinations(range(len(found)), 2)
                      if set(found[a]) & set(found[b]))
    return BruteForceResult(tuple(found), conflicts)


def resolve_conflicts(candidates) -> list[tuple[int, ...]]:
    """Greedy pick: largest candidates first, then lowest indices; skip overlaps."""
    chosen: list[tuple[int, ...]] = []
    used: set[int] = set()
    for c in sorted(candidates, key=lambda c: (-len(c), tuple(sorted(c)))):
        if used.isdisjoint(c):
            chosen.append(tuple(sorted(c)))
            used.update(c)
    return chosen


def assemble(points, geom: VehicleGeometry, fallback: bool = True,
             nm: NeighborMap | None = None) -> AssemblyOutcome:
    """Partition points into vehicles, disturbance points and unmapped points."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if nm is None:
        nm = build_neighbor_map(pts, geom)
    alive = (1 << n) - 1
    pending = set(range(n))
    vehicles: list[AssembledVehicle] = []
    disturbance: set[int] = set()
    iterations = 0
    areas = nm.areas
    while pending:
        iterations += 1
        # Every unmapped point is matched against the areas as they stand at
        # the start of the sweep; removals take effect for the next sweep.
        order = sorted(pending, key=lambda p: ((areas[p] & alive).bit_count(), p))
        results = [(p, match_step(p, nm, geom, alive)) for p in order]
        taken = 0
        for p, res in results:
            if res.kind is MatchKind.VEHICLE:
                m = _mask(res.members)
                if m & taken:
                    continue
                vehicles.append(make_vehicle(res.members, pts, geom))
                pending.difference_update(res.members)
                taken |= m
        for p, res in results:
            if res.kind is MatchKind.DISTURBANCE and not taken >> p & 1:
                disturbance.add(p)
                pending.discard(p)
                taken |= 1 << p
        alive &= ~taken
        progressed = taken != 0
        if not progressed:
            break

    used_fallback = False
    if pending and fallback and len(pending) <= BRUTE_FORCE_LIMIT:
        rest = sorted(pending)
        bf = brute_force_assemble(pts[rest], geom)
        for combo in resolve_conflicts(bf.candidates):
            members = [rest[i] for i in combo]
            vehicles.append(make_vehicle(members, pts, geom))
            pending.difference_update(members)
        used_fallback = True
    return AssemblyOutcome(tuple(vehicles), frozenset(disturbance), frozenset(pending),
                           used_fallback, iterations)


def check_outcome(outcome: AssemblyOutcome, points, geom: VehicleGeometry) -> list[str]:
    """Invariant violations of an assembly outcome (empty list when sound)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    problems = []
    seen: set[int] = set()
    for v in outcome.vehicles:
        idx = v.indices
        if len(idx) not in (3, 4):
            problems.append(f"vehicle {idx} has {len(idx)} points")
        if not matches_geometry(pts[list(idx)], geom):
            problems.append(f"vehicle {idx} does not match the LED geometry")
        if seen & set(idx):
            problems.append(f"vehicle {idx} reuses points")
        seen.update(idx)
    parts = [seen, set(outcome.disturbance), set(outcome.unmapped)]
    if any(a & b for a, b in itertools.combinations(parts, 2)):
        problems.append("vehicles, disturbance and unmapped sets overlap")
    if set().union(*parts) != set(range(len(pts))):
        problems.append("outcome does not cover every input point")
    return problems


def vehicle_index_sets(outcome: AssemblyOutcome) -> set[frozenset[int]]:
    return {frozenset(v.indices) for v in outcome.vehicles}


__all__ = [
    "AssembledVehicle", "AssemblyOutcome", "BruteForceResult", "GeometryError", "MatchKind",
    "MatchResult", "NeighborMap", "assemble", "brute_force_assemble", "build_neighbor_map",
    "check_outcome", "match_step", "matches_geometry", "merge_duplicates", "resolve_conflicts",
    "vehicle_index_sets",
]
