"""FCIDUMP ingestion, orbital-space partitioning and active-space embedding."""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Sequence

import numpy as np


class FcidumpError(ValueError):
    """Raised for malformed FCIDUMP content."""


class ContractViolation(ValueError):
    """Raised when inputs break a documented precondition."""


@dataclass(frozen=True)
class OrbitalSpaces:
    """Partition of spatial orbitals into core, active and virtual blocks.

    Orbitals are ordered core < active < virtual.
    """

    n_core: int
    n_active: int
    n_virtual: int
    n_active_electrons: int
    total_electrons: int
    spin_2s: int = 0

    def __post_init__(self):
        for name in ("n_core", "n_active", "n_virtual", "n_active_electrons", "total_electrons"):
            if getattr(self, name) < 0:
                raise ContractViolation(f"{name} must be non-negative")
        if 2 * self.n_core + self.n_active_electrons != self.total_electrons:
            raise ContractViolation(
                "2*n_core + n_active_electrons must equal total_electrons "
                f"({2 * self.n_core} + {self.n_active_electrons} != {self.total_electrons})"
            )
        if self.n_active_electrons > 2 * self.n_active:
            raise ContractViolation("more active electrons than active spin-orbitals")
        if abs(self.spin_2s) > self.n_active_electrons or (self.n_active_electrons - self.spin_2s) % 2:
            raise ContractViolation(f"spin_2s={self.spin_2s} incompatible with active electron count")
        if self.n_alpha > self.n_active or self.n_beta < 0:
            raise ContractViolation("spin_2s puts too many alpha electrons in the active space")

    @classmethod
    def from_counts(
        cls,
        n_orbitals: int,
        total_electrons: int,
        n_active: int,
        n_active_electrons: int,
        spin_2s: int = 0,
    ) -> "OrbitalSpaces":
        """Build spaces with core inferred from the electron count."""
        n_core, rem = divmod(total_electrons - n_active_electrons, 2)
        if rem or n_core < 0:
            raise ContractViolation("inactive electron count must be even and non-negative")
        n_virtual = n_orbitals - n_core - n_active
        if n_virtual < 0:
            raise ContractViolation("core + active exceeds the number of orbitals")
        return cls(n_core, n_active, n_virtual, n_active_electrons, total_electrons, spin_2s)

    @property
    def n_orbitals(self) -> int:
        return self.n_core + self.n_active + self.n_virtual

    @property
    def n_alpha(self) -> int:
        return (self.n_active_electrons + self.spin_2s) // 2

    @property
    def n_beta(self) -> int:
        return (self.n_active_electrons - self.spin_2s) // 2

    @property
    def core(self) -> slice:
        return slice(0, self.n_core)

    @property
    def active(self) -> slice:
        return slice(self.n_core, self.n_core + self.n_active)

    @property
    def virtual(self) -> slice:
        return slice(self.n_core + self.n_active, self.n_orbitals)

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_active


@dataclass(frozen=True)
class MOIntegrals:
    """Molecular-orbital integrals in chemists' notation, Hartree units."""

    h1: np.ndarray
    eri: np.ndarray
    e_nuclear: float = 0.0
    n_electrons: int | None = None
    spin_2s: int = 0
    orbsym: tuple = field(default=())

    def __post_init__(self):
        h1 = np.asarray(self.h1, dtype=float)
        eri = np.asarray(self.eri, dtype=float)
        n = h1.shape[0]
        if h1.shape != (n, n) or eri.shape != (n, n, n, n):
            raise ContractViolation(f"inconsistent integral shapes {h1.shape} and {eri.shape}")
        h1.setflags(write=False)
        eri.setflags(write=False)
        object.__setattr__(self, "h1", h1)
        object.__setattr__(self, "eri", eri)
        object.__setattr__(self, "e_nuclear", float(self.e_nuclear))

    @property
    def n_orbitals(self) -> int:
        return self.h1.shape[0]

    def check_symmetry(self, atol: float = 1e-10) -> bool:
        """True when h1 is symmetric and eri has 8-fold permutational symmetry."""
        h1, g = self.h1, self.eri
        return bool(
            np.allclose(h1, h1.T, atol=atol)
            and np.allclose(g, g.transpose(1, 0, 2, 3), atol=atol)
            and np.allclose(g, g.transpose(0, 1, 3, 2), atol=atol)
            and np.allclose(g, g.transpose(2, 3, 0, 1), atol=atol)
        )

    def reorder(self, order: Sequence[int]) -> "MOIntegrals":
        """Return integrals with orbitals relabelled so new orbital k is old ``order[k]``."""
        order = np.asarray(order, dtype=int)
        if sorted(order.tolist()) != list(range(self.n_orbitals)):
            raise ContractViolation("orbital order must be a permutation")
        h1 = self.h1[np.ix_(order, order)]
        eri = self.eri[np.ix_(order, order, order, order)]
        return MOIntegrals(h1, eri, self.e_nuclear, self.n_electrons, self.spin_2s)


@dataclass(frozen=True)
class ActiveHamiltonian:
    """Active-space Hamiltonian with the frozen core folded in."""

    h1_eff: np.ndarray
    eri_act: np.ndarray
    e_frozen: float

    @property
    def n_active(self) -> int:
        return self.h1_eff.shape[0]


def _header_int(header: str, key: str, required: bool = True, default: int = 0) -> int:
    m = re.search(rf"\b{key}\s*=\s*([^,\s/&]+)", header, flags=re.IGNORECASE)
    if m is None:
        if required:
            raise FcidumpError(f"FCIDUMP header is missing field {key}")
        return default
    try:
        return int(m.group(1))
    except ValueError as exc:
        raise FcidumpError(f"FCIDUMP header field {key} is not an integer: {m.group(1)!r}") from exc


def _header_orbsym(header: str) -> tuple:
    m = re.search(r"\bORBSYM\s*=\s*([0-9,\s]*)", header, flags=re.IGNORECASE)
    if m is None:
        return ()
    return tuple(int(x) for x in re.split(r"[,\s]+", m.group(1)) if x)


def parse_fcidump(source: str | bytes | Path | IO) -> MOIntegrals:
    """Parse FCIDUMP text into fully symmetrized integrals.

    Args:
        source: path, raw text/bytes or an open file object.

    Returns:
        MOIntegrals with ``n_electrons`` and ``spin_2s`` taken from the header.
    """
    if isinstance(source, Path):
        text = source.read_text()
    elif isinstance(source, bytes):
        text = source.decode()
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode()

    lines = text.splitlines()
    end = next(
        (i for i, ln in enumerate(lines) if re.search(r"(&END|^\s*/)\s*$", ln, flags=re.IGNORECASE)),
        None,
    )
    if end is None or "&FCI" not in text.upper():
        raise FcidumpError("FCIDUMP header must start with &FCI and end with &END or /")
    header = "\n".join(lines[: end + 1])
    norb = _header_int(header, "NORB")
    nelec = _header_int(header, "NELEC")
    ms2 = _header_int(header, "MS2", required=False)
    if norb <= 0:
        raise FcidumpError(f"FCIDUMP header field NORB must be positive, got {norb}")
    orbsym = _header_orbsym(header)

    h1 = np.zeros((norb, norb))
    eri = np.zeros((norb, norb, norb, norb))
    e_nuc = 0.0
    for lineno, line in enumerate(lines[end + 1:], start=end + 2):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 5:
            raise FcidumpError(f"line {lineno}: expected 'value p q r s', got {line.strip()!r}")
        try:
            val = float(parts[0].replace("D", "E").replace("d", "e"))
        except ValueError as exc:
            raise FcidumpError(f"line {lineno}: non-numeric value {parts[0]!r}") from exc
        try:
            p, q, r, s = (int(x) for x in parts[1:])
        except ValueError as exc:
            raise FcidumpError(f"line {lineno}: non-integer index in {line.strip()!r}") from exc
        if min(p, q, r, s) < 0 or max(p, q, r, s) > norb:
            raise IndexError(f"line {lineno}: orbital index out of range 1..{norb}")
        if p == q == r == s == 0:
            e_nuc = val
        elif r == s == 0:
            if p == 0 or q == 0:
                # orbital energies, not needed downstream
                continue
            h1[p - 1, q - 1] = h1[q - 1, p - 1] = val
        else:
            if 0 in (p, q, r, s):
                raise FcidumpError(f"line {lineno}: partially zero two-electron index")
            i, j, a, b = p - 1, q - 1, r - 1, s - 1
            for w, x, y, z in (
                (i, j, a, b), (j, i, a, b), (i, j, b, a), (j, i, b, a),
                (a, b, i, j), (b, a, i, j), (a, b, j, i), (b, a, j, i),
            ):
                eri[w, x, y, z] = val
    return MOIntegrals(h1, eri, e_nuc, nelec, ms2, orbsym)


def write_fcidump(ints: MOIntegrals, dest: str | Path | IO | None = None, tol: float = 0.0) -> str:
    """Serialize integrals in FCIDUMP format; returns the text.

    Values are written with 17 significant digits so a round trip is exact.
    """
    n = ints.n_orbitals
    nelec = ints.n_electrons if ints.n_electrons is not None else 0
    out = io.StringIO()
    out.write(f" &FCI NORB={n:4d},NELEC={nelec:3d},MS2={ints.spin_2s},\n")
    orbsym = ints.orbsym or (1,) * n
    out.write("  ORBSYM=" + ",".join(str(x) for x in orbsym) + ",\n")
    out.write("  ISYM=1,\n &END\n")
    g = ints.eri
    for i in range(n):
        for j in range(i + 1):
            for k in range(n):
                for l in range(k + 1):
                    if i * (i + 1) // 2 + j < k * (k + 1) // 2 + l:
                        continue
                    v = g[i, j, k, l]
                    if abs(v) > tol:
                        out.write(f" {float(v)!r} {i + 1:4d} {j + 1:4d} {k + 1:4d} {l + 1:4d}\n")
    for i in range(n):
        for j in range(i + 1):
            v = ints.h1[i, j]
            if abs(v) > tol:
                out.write(f" {float(v)!r} {i + 1:4d} {j + 1:4d}    0    0\n")
    out.write(f" {ints.e_nuclear!r}    0    0    0    0\n")
    text = out.getvalue()
    if dest is not None:
        if isinstance(dest, (str, Path)):
            Path(dest).write_text(text)
        else:
            dest.write(text)
    return text


def load_fcidump(path: str | Path) -> MOIntegrals:
    """Read an FCIDUMP file from disk."""
    return parse_fcidump(Path(path))


def build_active_hamiltonian(ints: MOIntegrals, spaces: OrbitalSpaces) -> ActiveHamiltonian:
    """Fold the doubly occupied core into an effective active-space Hamiltonian."""
    if spaces.n_orbitals != ints.n_orbitals:
        raise ContractViolation(
            f"orbital spaces cover {spaces.n_orbitals} orbitals, integrals have {ints.n_orbitals}"
        )
    c, a = spaces.core, spaces.active
    g = ints.eri
    h1 = ints.h1
    core_j = np.einsum("pqii->pq", g[:, :, c, c])
    core_k = np.einsum("piiq->pq", g[:, c, c, :])
    fock_core = 2.0 * core_j - core_k
    h1_eff = (h1 + fock_core)[a, a]
    e_core = np.trace(h1[c, c]) + np.trace((h1 + fock_core)[c, c])
    eri_act = g[a, a, a, a]
    return ActiveHamiltonian(np.array(h1_eff), np.array(eri_act), float(ints.e_nuclear + e_core))


def core_fock(ints: MOIntegrals, spaces: OrbitalSpaces) -> np.ndarray:
    """One-body operator h1 + 2J - K of the doubly occupied core, full orbital range."""
    c = spaces.core
    g = ints.eri
    return ints.h1 + 2.0 * np.einsum("pqii->pq", g[:, :, c, c]) - np.einsum("piiq->pq", g[:, c, c, :])
