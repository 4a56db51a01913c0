"""Exact linear feasibility over joint distributions of four binary track variables.

Atoms are the 16 outcomes (ax, az, bx, bz) in {+1, -1}^4. A problem is a
list of linear constraints on the atom probabilities; nonnegativity of the
atoms is implicit. Everything runs in ``fractions.Fraction`` so that both
witnesses and infeasibility certificates can be checked exactly.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

VARIABLES = ("ax", "az", "bx", "bz")
ATOMS = tuple(itertools.product((1, -1), repeat=4))
RELATIONS = ("=", "<=", ">=")


class MalformedConstraint(ValueError):
    pass


def _frac(v) -> Fraction:
    if isinstance(v, float):
        raise MalformedConstraint(f"coefficient {v!r} is a float; use an exact rational")
    try:
        return Fraction(v)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise MalformedConstraint(f"not a rational number: {v!r}") from exc


@dataclass(frozen=True)
class Pattern:
    """A set of atoms given by fixed values of some variables; empty means all atoms."""

    fixed: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        seen = set()
        for var, val in self.fixed:
            if var not in VARIABLES:
                raise MalformedConstraint(f"unknown variable {var!r}")
            if val not in (1, -1):
                raise MalformedConstraint(f"value for {var} must be +1 or -1")
            if var in seen:
                raise MalformedConstraint(f"variable {var} repeated in pattern")
            seen.add(var)

    @classmethod
    def parse(cls, text: str) -> "Pattern":
        text = text.strip()
        if text == "*":
            return cls(())
        items = []
        for part in text.split(","):
            if "=" not in part:
                raise MalformedConstraint(f"bad pattern item {part!r}")
            var, val = part.split("=", 1)
            if val not in ("+1", "-1", "1"):
                raise MalformedConstraint(f"bad value {val!r} in pattern")
            items.append((var.strip(), -1 if val == "-1" else 1))
        return cls(tuple(sorted(items, key=lambda kv: VARIABLES.index(kv[0]) if kv[0] in VARIABLES else 99)))

    def matches(self, atom) -> bool:
        return all(atom[VARIABLES.index(v)] == s for v, s in self.fixed)

    def __str__(self) -> str:
        if not self.fixed:
            return "*"
        return ",".join(f"{v}={'+1' if s > 0 else '-1'}" for v, s in self.fixed)


def pattern(**kw) -> Pattern:
    return Pattern(tuple((v, kw[v]) for v in VARIABLES if v in kw))


@dataclass(frozen=True)
class Constraint:
    relation: str
    rhs: Fraction
    terms: tuple[tuple[Fraction, Pattern], ...]
    name: str = ""

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise MalformedConstraint(f"relation must be one of {RELATIONS}")
        if not self.terms:
            raise MalformedConstraint("constraint without terms")
        object.__setattr__(self, "rhs", _frac(self.rhs))
        object.__setattr__(self, "terms", tuple((_frac(c), p) for c, p in self.terms))

    def row(self) -> list[Fraction]:
        return [sum((c for c, p in self.terms if p.matches(a)), Fraction(0)) for a in ATOMS]

    def to_text(self) -> str:
        body = " ".join(f"{c} {p}" for c, p in self.terms)
        rhs = f"{self.rhs.numerator}/{self.rhs.denominator}"
        return f"{self.relation} {rhs} : {body}"

    @classmethod
    def parse(cls, line: str, name: str = "") -> "Constraint":
        if ":" not in line:
            raise MalformedConstraint(f"missing ':' in {line!r}")
        head, body = line.split(":", 1)
        hp = head.split()
        if len(hp) != 2:
            raise MalformedConstraint(f"expected '<rel> <rhs>' before ':' in {line!r}")
        rel, rhs = hp
        tok = body.split()
        if not tok or len(tok) % 2:
            raise MalformedConstraint(f"terms must be '<coef> <pattern>' pairs in {line!r}")
        terms = tuple((_frac(tok[i]), Pattern.parse(tok[i + 1])) for i in range(0, len(tok), 2))
        return cls(rel, _frac(rhs), terms, name)


@dataclass(frozen=True)
class FeasibilityProblem:
    constraints: tuple[Constraint, ...]

    def to_text(self) -> str:
        lines = []
        for c in self.constraints:
            if c.name:
                lines.append(f"# {c.name}")
            lines.append(c.to_text())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FeasibilityProblem":
        out = []
        name = ""
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                name = line[1:].strip()
                continue
            try:
                out.append(Constraint.parse(line, name))
            except MalformedConstraint as exc:
                raise MalformedConstraint(f"line {lineno}: {exc}") from None
            name = ""
        return cls(tuple(out))

    def without(self, name: str) -> "FeasibilityProblem":
        kept = tuple(c for c in self.constraints if c.name != name)
        if len(kept) == len(self.constraints):
            raise KeyError(name)
        return FeasibilityProblem(kept)

    def index(self, name: str) -> int:
        for i, c in enumerate(self.constraints):
            if c.name == name:
                return i
        raise KeyError(name)


SUM_TO_ONE = Constraint("=", Fraction(1), ((Fraction(1), Pattern()),), "normalization")


def hardy_constraints() -> FeasibilityProblem:
    """The four Hardy predictions plus normalization."""
    z, one = Fraction(0), Fraction(1)
    return FeasibilityProblem(
        (
            Constraint("=", z, ((one, pattern(ax=1, bz=1)),), "ax=+1 implies bz=-1"),
            Constraint("=", z, ((one, pattern(bx=1, az=1)),), "bx=+1 implies az=-1"),
            Constraint("=", z, ((one, pattern(az=-1, bz=-1)),), "never az=-1 and bz=-1"),
            Constraint("=", Fraction(1, 12), ((one, pattern(ax=1, bx=1)),), "ax=+1 and bx=+1 with 1/12"),
            SUM_TO_ONE,
        )
    )


def pair_constraints(table) -> FeasibilityProblem:
    """Constraints fixing every setting-pair joint probability.

    ``table`` maps (axis_a, axis_b, sign_a, sign_b) to an exact probability.
    """
    cons = []
    for (sa, sb, oa, ob), p in sorted(table.items()):
        pat = pattern(**{f"a{sa}": oa, f"b{sb}": ob})
        cons.append(Constraint("=", _frac(p), ((Fraction(1), pat),), f"P(a{sa}={oa:+d}, b{sb}={ob:+d})"))
    cons.append(SUM_TO_ONE)
    return FeasibilityProblem(tuple(cons))


def product_table(p_a: dict, p_b: dict) -> dict:
    """Setting-pair table of an uncorrelated pair; p_a[axis] = P(sign=+1)."""
    out = {}
    for sa in "xz":
        for sb in "xz":
            for oa in (1, -1):
                for ob in (1, -1):
                    pa = _frac(p_a[sa]) if oa > 0 else 1 - _frac(p_a[sa])
                    pb = _frac(p_b[sb]) if ob > 0 else 1 - _frac(p_b[sb])
                    out[(sa, sb, oa, ob)] = pa * pb
    return out


def product_witness(p_a: dict, p_b: dict) -> list[Fraction]:
    """The fully independent measure over the four variables."""
    probs = {"ax": p_a["x"], "az": p_a["z"], "bx": p_b["x"], "bz": p_b["z"]}
    w = []
    for atom in ATOMS:
        v = Fraction(1)
        for var, s in zip(VARIABLES, atom):
            p = _frac(probs[var])
            v *= p if s > 0 else 1 - p
        w.append(v)
    return w


# --------------------------------------------------------------------------
# exact simplex


@dataclass(frozen=True)
class Feasible:
    witness: tuple[Fraction, ...]


@dataclass(frozen=True)
class Infeasible:
    multipliers: tuple[Fraction, ...]  # one per constraint

    def to_text(self, problem: FeasibilityProblem) -> str:
        lines = []
        for y, c in zip(self.multipliers, problem.constraints):
            if y:
                lines.append(f"{y.numerator}/{y.denominator} x [{c.name or c.to_text()}]")
        return "\n".join(lines)


def _standard_form(problem: FeasibilityProblem):
    cons = problem.constraints
    m = len(cons)
    n_atoms = len(ATOMS)
    slack_cols = [i for i, c in enumerate(cons) if c.relation != "="]
    n = n_atoms + len(slack_cols)
    A, b, flip = [], [], []
    for i, c in enumerate(cons):
        row = c.row() + [Fraction(0)] * len(slack_cols)
        if c.relation != "=":
            row[n_atoms + slack_cols.index(i)] = Fraction(1 if c.relation == "<=" else -1)
        rhs = c.rhs
        f = rhs < 0
        if f:
            row = [-v for v in row]
            rhs = -rhs
        A.append(row)
        b.append(rhs)
        flip.append(f)
    return A, b, flip, m, n


class _Tableau:
    """Dense Fraction tableau [A | I | b] with Bland's pivoting rule."""

    def __init__(self, A, b):
        self.m = len(A)
        self.n = len(A[0]) if A else 0
        self.T = [list(A[i]) + [Fraction(int(i == j)) for j in range(self.m)] + [b[i]] for i in range(self.m)]
        self.basis = [self.n + i for i in range(self.m)]

    def pivot(self, r, c):
        T = self.T
        p = T[r][c]
        T[r] = [v / p for v in T[r]]
        for i in range(self.m):
            if i != r and T[i][c] != 0:
                f = T[i][c]
                T[i] = [a - f * bb for a, bb in zip(T[i], T[r])]
        self.basis[r] = c

    def binv(self):
        return [[self.T[i][self.n + j] for j in range(self.m)] for i in range(self.m)]

    def duals(self, cost):
        """y = c_B^T B^{-1}."""
        Bi = self.binv()
        return [sum(cost[self.basis[i]] * Bi[i][j] for i in range(self.m)) for j in range(self.m)]

    def optimize(self, cost, allowed):
        """Minimize cost over columns in ``allowed``; returns False if unbounded."""
        while True:
            y = self.duals(cost)
            enter = None
            for j in sorted(allowed):
                if j in self.basis:
                    continue
                col = [self.T[i][j] for i in range(self.m)]
                # reduced cost in terms of original columns: c_j - c_B B^-1 a_j
                red = cost[j] - sum(cost[self.basis[i]] * col[i] for i in range(self.m))
                if red < 0:
                    enter = j
                    break
            if enter is None:
                return True
            best = None
            for i in range(self.m):
                a = self.T[i][enter]
                if a > 0:
                    ratio = self.T[i][-1] / a
                    key = (ratio, self.basis[i])
                    if best is None or key < best[0]:
                        best = (key, i)
            if best is None:
                return False
            self.pivot(best[1], enter)
            del y


def _phase_one(problem: FeasibilityProblem):
    A, b, flip, m, n = _standard_form(problem)
    tab = _Tableau(A, b)
    cost = [Fraction(0)] * n + [Fraction(1)] * m
    tab.optimize(cost, set(range(n)))
    value = sum(tab.T[i][-1] for i in range(m) if tab.basis[i] >= n)
    return tab, cost, value, flip, n


def certify_no_measure(problem: FeasibilityProblem) -> Feasible | Infeasible:
    """Exact decision: a feasible atom distribution or a Farkas certificate.

    The certificate y (one multiplier per constraint) satisfies
    sum_i y_i row_i >= 0 on every atom and sum_i y_i rhs_i < 0, with
    y_i >= 0 for '<=' rows and y_i <= 0 for '>=' rows.
    """
    if not problem.constraints:
        raise MalformedConstraint("empty problem")
    tab, cost, value, flip, n = _phase_one(problem)
    m = tab.m
    if value == 0:
        x = [Fraction(0)] * n
        for i, j in enumerate(tab.basis):
            if j < n:
                x[j] = tab.T[i][-1]
        witness = tuple(x[: len(ATOMS)])
        if not verify_witness(problem, witness):
            raise AssertionError("internal error: witness fails exact check")
        return Feasible(witness)
    y = tab.duals(cost)
    z = [-(v if not f else -v) for v, f in zip(y, flip)]
    scale = max(abs(v) for v in z)
    cert = Infeasible(tuple(v / scale for v in z))
    if not verify_certificate(problem, cert):
        raise AssertionError("internal error: certificate fails exact check")
    return cert


def verify_witness(problem: FeasibilityProblem, witness) -> bool:
    if len(witness) != len(ATOMS) or any(_frac(w) < 0 for w in witness):
        return False
    for c in problem.constraints:
        lhs = sum(r * _frac(w) for r, w in zip(c.row(), witness))
        ok = {"=": lhs == c.rhs, "<=": lhs <= c.rhs, ">=": lhs >= c.rhs}[c.relation]
        if not ok:
            return False
    return True


def verify_certificate(problem: FeasibilityProblem, cert: Infeasible) -> bool:
    ys = [_frac(y) for y in cert.multipliers]
    if len(ys) != len(problem.constraints):
        return False
    for y, c in zip(ys, problem.constraints):
        if (c.relation == "<=" and y < 0) or (c.relation == ">=" and y > 0):
            return False
    rows = [c.row() for c in problem.constraints]
    combo = [sum(y * r[k] for y, r in zip(ys, rows)) for k in range(len(ATOMS))]
    rhs = sum(y * c.rhs for y, c in zip(ys, problem.constraints))
    return all(v >= 0 for v in combo) and rhs < 0


def implied_lower_bound(problem: FeasibilityProblem, cert: Infeasible, name: str) -> Fraction:
    """Lower bound on constraint ``name``'s left side forced by the other constraints.

    From sum_i y_i row_i >= 0: y_k row_k.x >= -sum_{i != k} y_i row_i.x
    >= -sum_{i != k} y_i rhs_i, valid when y_k > 0.
    """
    k = problem.index(name)
    yk = cert.multipliers[k]
    if yk <= 0:
        raise ValueError(f"certificate does not use constraint {name!r} with a positive weight")
    rest = sum(y * c.rhs for i, (y, c) in enumerate(zip(cert.multipliers, problem.constraints)) if i != k)
    return -rest / yk


def minimize(problem: FeasibilityProblem, objective: Pattern) -> tuple[Fraction, tuple[Fraction, ...]]:
    """Exact min of P(objective) subject to the problem, with dual multipliers.

    Returns (value, y) where sum_i y_i row_i <= indicator(objective) on every
    atom and sum_i y_i rhs_i = value, which is the dual proof of the bound.
    """
    tab, cost1, value, flip, n = _phase_one(problem)
    if value != 0:
        raise ValueError("problem is infeasible")
    m = tab.m
    # artificial variables may stay basic at zero; keep them out of phase 2
    cost = [Fraction(int(objective.matches(a))) for a in ATOMS] + [Fraction(0)] * (n - len(ATOMS))
    cost += [Fraction(0)] * m
    if not tab.optimize(cost, set(range(n))):
        raise ValueError("unbounded")
    y = tab.duals(cost)
    y = [(-v if f else v) for v, f in zip(y, flip)]
    val = sum(tab.T[i][-1] * cost[tab.basis[i]] for i in range(m))
    return val, tuple(y)
