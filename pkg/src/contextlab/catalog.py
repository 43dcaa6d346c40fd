"""Canonical observable sets and states, addressable by name.

Four observable sets are provided: two four-observable cyclic sets whose
pairwise-compatible edges feed the four-term correlation inequality, the
nine-observable three-by-three square used for the state-independent test,
and the five-observable pentagram on a three-level system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np

from .engine import Observable, QuantumState, commutator_norm
from .errors import UnknownSetName, UnknownStateName
from .tolerances import TOL

IDENTITY_2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

SET_NAMES = ("chsh_entangled", "chsh_product", "mermin_peres", "kcbs_pentagram")
STATE_NAMES = (
    "phi_plus",
    "x_plus_zero",
    "fig2_psi",
    "singlet",
    "max_mixed_2q",
    "kcbs_optimal",
    "max_mixed_qutrit",
)


@dataclass(frozen=True)
class ObservableSet:
    """A named family of dichotomic observables with declared compatibilities.

    ``compatibility_edges`` lists the pairs (or triples) that commute, in the
    measurement order used when the corresponding inequality is evaluated.
    """

    name: str
    observables: Mapping[str, Observable]
    compatibility_edges: tuple[tuple[str, ...], ...]
    inequality_kind: str

    def __post_init__(self) -> None:
        for edge in self.compatibility_edges:
            ops = [self.observables[label].operator for label in edge]
            for i in range(len(ops)):
                for j in range(i + 1, len(ops)):
                    norm = commutator_norm(ops[i], ops[j])
                    if norm >= TOL.commuting:
                        raise ValueError(
                            f"declared compatible pair {edge[i]},{edge[j]} in {self.name!r} "
                            f"has commutator norm {norm!r}"
                        )

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.observables)

    @property
    def dim(self) -> int:
        return next(iter(self.observables.values())).dim

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.inequality_kind,
            "dim": self.dim,
            "compatibility_edges": [list(edge) for edge in self.compatibility_edges],
            "observables": {
                label: pack_complex_matrix(obs.plus_projector)
                for label, obs in self.observables.items()
            },
        }


@dataclass(frozen=True)
class NamedState:
    name: str
    state: QuantumState

    def to_json_dict(self) -> dict:
        if self.state.is_pure:
            payload = {"type": "pure", "vector": pack_complex_vector(self.state.vector)}
        else:
            payload = {"type": "mixed", "matrix": pack_complex_matrix(self.state.density())}
        return {"name": self.name, "dim": self.state.dim, **payload}


def pack_complex_vector(vector) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in np.asarray(vector).reshape(-1)]


def pack_complex_matrix(matrix) -> list[list[list[float]]]:
    return [pack_complex_vector(row) for row in np.asarray(matrix)]


def unpack_complex_vector(entries) -> np.ndarray:
    return np.array([complex(re, im) for re, im in entries], dtype=complex)


def unpack_complex_matrix(entries) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in entries], dtype=complex)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(a, b)


def _chsh_entangled() -> ObservableSet:
    half = 1.0 / math.sqrt(2.0)
    observables = {
        "A": Observable.from_operator("A", kron(SIGMA_X, IDENTITY_2)),
        "B": Observable.from_operator("B", kron(IDENTITY_2, (SIGMA_Z + SIGMA_X) * half)),
        "C": Observable.from_operator("C", kron(SIGMA_Z, IDENTITY_2)),
        "D": Observable.from_operator("D", kron(IDENTITY_2, (SIGMA_Z - SIGMA_X) * half)),
    }
    return ObservableSet(
        name="chsh_entangled",
        observables=observables,
        compatibility_edges=(("A", "B"), ("C", "B"), ("C", "D"), ("A", "D")),
        inequality_kind="CHSH",
    )


def _chsh_product() -> ObservableSet:
    half = 1.0 / math.sqrt(2.0)
    b_matrix = half * np.array(
        [
            [1, 1, 0, 0],
            [1, -1, 0, 0],
            [0, 0, -1, 1],
            [0, 0, 1, 1],
        ],
        dtype=complex,
    )
    d_matrix = half * np.array(
        [
            [1, -1, 0, 0],
            [-1, -1, 0, 0],
            [0, 0, -1, -1],
            [0, 0, -1, 1],
        ],
        dtype=complex,
    )
    observables = {
        "A": Observable.from_operator("A", kron(SIGMA_X, SIGMA_X)),
        "B": Observable.from_operator("B", b_matrix),
        "C": Observable.from_operator("C", kron(SIGMA_Z, IDENTITY_2)),
        "D": Observable.from_operator("D", d_matrix),
    }
    return ObservableSet(
        name="chsh_product",
        observables=observables,
        compatibility_edges=(("A", "B"), ("C", "B"), ("C", "D"), ("A", "D")),
        inequality_kind="CHSH",
    )


def _mermin_peres() -> ObservableSet:
    grid = {
        "A": kron(SIGMA_Z, IDENTITY_2),
        "B": kron(IDENTITY_2, SIGMA_Z),
        "C": kron(SIGMA_Z, SIGMA_Z),
        "a": kron(IDENTITY_2, SIGMA_X),
        "b": kron(SIGMA_X, IDENTITY_2),
        "c": kron(SIGMA_X, SIGMA_X),
        "alpha": kron(SIGMA_Z, SIGMA_X),
        "beta": kron(SIGMA_X, SIGMA_Z),
        "gamma": kron(SIGMA_Y, SIGMA_Y),
    }
    observables = {label: Observable.from_operator(label, op) for label, op in grid.items()}
    return ObservableSet(
        name="mermin_peres",
        observables=observables,
        compatibility_edges=(
            ("A", "B", "C"),
            ("a", "b", "c"),
            ("alpha", "beta", "gamma"),
            ("A", "a", "alpha"),
            ("B", "b", "beta"),
            ("C", "c", "gamma"),
        ),
        inequality_kind="KS",
    )


def _pentagram_vectors() -> list[np.ndarray]:
    # Five real unit vectors on a cone about the z axis, consecutive ones
    # orthogonal. The cone angle is fixed by (1 - c) cos(4 pi / 5) + c = 0
    # with c = cos(theta)^2, i.e. c = cos(pi/5) / (1 + cos(pi/5)).
    c = math.cos(math.pi / 5.0) / (1.0 + math.cos(math.pi / 5.0))
    cos_theta = math.sqrt(c)
    sin_theta = math.sqrt(1.0 - c)
    vectors = []
    for j in range(5):
        phi = 4.0 * math.pi * j / 5.0
        vectors.append(
            np.array(
                [sin_theta * math.cos(phi), sin_theta * math.sin(phi), cos_theta],
                dtype=complex,
            )
        )
    return vectors


def _kcbs_pentagram() -> ObservableSet:
    labels = ("A", "B", "C", "D", "E")
    vectors = _pentagram_vectors()
    observables = {
        label: Observable(label=label, dim=3, plus_projector=np.outer(v, v.conj()))
        for label, v in zip(labels, vectors)
    }
    built = ObservableSet(
        name="kcbs_pentagram",
        observables=observables,
        compatibility_edges=(("A", "B"), ("C", "B"), ("C", "D"), ("E", "D"), ("E", "A")),
        inequality_kind="KCBS",
    )
    minimum, _ = kcbs_extremal_state(built)
    target = 5.0 - 4.0 * math.sqrt(5.0)
    if abs(minimum - target) > 1e-9:
        raise AssertionError(
            f"pentagram construction reaches {minimum!r}, expected {target!r}"
        )
    return built


def kcbs_extremal_state(obs_set: ObservableSet) -> tuple[float, QuantumState]:
    """Minimum of the five-edge correlation sum and the state reaching it.

    The sum of the five edge products is a single Hermitian operator, so the
    minimizer is its lowest eigenvector.
    """
    total = np.zeros((obs_set.dim, obs_set.dim), dtype=complex)
    for first, second in obs_set.compatibility_edges:
        total += obs_set.observables[first].operator @ obs_set.observables[second].operator
    eigenvalues, eigenvectors = np.linalg.eigh(total)
    return float(eigenvalues[0]), QuantumState.pure(eigenvectors[:, 0], normalize=True)


@lru_cache(maxsize=None)
def load_set(name: str) -> ObservableSet:
    builders = {
        "chsh_entangled": _chsh_entangled,
        "chsh_product": _chsh_product,
        "mermin_peres": _mermin_peres,
        "kcbs_pentagram": _kcbs_pentagram,
    }
    try:
        return builders[name]()
    except KeyError:
        raise UnknownSetName(f"unknown observable set {name!r}; known: {SET_NAMES}") from None


@lru_cache(maxsize=None)
def load_state(name: str) -> NamedState:
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    if name == "phi_plus":
        state = QuantumState.pure([inv_sqrt2, 0, 0, inv_sqrt2])
    elif name == "x_plus_zero":
        state = QuantumState.pure([inv_sqrt2, 0, inv_sqrt2, 0])
    elif name == "fig2_psi":
        phase = np.exp(1j * math.pi / 4.0)
        state = QuantumState.pure([0, phase / 2.0, phase / 2.0, inv_sqrt2])
    elif name == "singlet":
        state = QuantumState.pure([0, inv_sqrt2, -inv_sqrt2, 0])
    elif name == "max_mixed_2q":
        state = QuantumState.maximally_mixed(4)
    elif name == "kcbs_optimal":
        _, state = kcbs_extremal_state(load_set("kcbs_pentagram"))
    elif name == "max_mixed_qutrit":
        state = QuantumState.maximally_mixed(3)
    else:
        raise UnknownStateName(f"unknown state {name!r}; known: {STATE_NAMES}")
    return NamedState(name=name, state=state)
