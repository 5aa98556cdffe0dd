"""LASSO solutions on an augmented dataset as a function of the trial response.

Appending a query row (phi_new, y) to the training system and solving

    0.5 * || Psi_aug c - y_aug ||^2 + lam * ||c_{1:}||_1

(constant column unpenalized) yields coefficients that are piecewise
affine in y: with the active set and signs frozen, the KKT system is
linear, and the active set changes only at finitely many y values
(a coefficient hitting zero, or an inactive correlation reaching the
penalty boundary).  This module walks those breakpoints outward from an
anchor solution and records per-segment affine maps for the
coefficients, the n training residuals, and the prediction at the query
point, so downstream searches over y cost O(n) per evaluation instead
of one sparse solve.

Centering is exact: the augmented column means do not depend on y and
the augmented response mean is affine in y, so the centered response
moves along a fixed direction as y varies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CollinearityError, PathExplosionError
from .sparse import _lars_engine

__all__ = ["HomotopyPath", "homotopy_path"]

EVENT_TOL_REL = 1e-12
MERGE_TOL_REL = 1e-9
KKT_SLACK = 1e-9


@dataclass(frozen=True)
class HomotopyPath:
    """Piecewise-affine maps y -> (coeffs, training residuals, prediction)."""

    lo: float
    hi: float
    breakpoints: np.ndarray  # interior breakpoints, ascending, shape (K,)
    coef0: np.ndarray        # (K+1, P)
    coef1: np.ndarray
    resid0: np.ndarray       # (K+1, n)
    resid1: np.ndarray
    pred0: np.ndarray        # (K+1,)
    pred1: np.ndarray
    active_sets: tuple       # per segment, psi column indices incl. 0

    @property
    def n_segments(self) -> int:
        return self.pred0.shape[0]

    def segment_of(self, y: float) -> int:
        return int(np.searchsorted(self.breakpoints, y, side="right"))

    def coeffs_at(self, y: float) -> np.ndarray:
        k = self.segment_of(y)
        return self.coef0[k] + self.coef1[k] * y

    def residuals_at(self, y: float) -> np.ndarray:
        k = self.segment_of(y)
        return self.resid0[k] + self.resid1[k] * y

    def prediction_at(self, y: float) -> float:
        k = self.segment_of(y)
        return float(self.pred0[k] + self.pred1[k] * y)

    def new_residual_at(self, y: float) -> float:
        return y - self.prediction_at(y)


def _affine_response(y_train: np.ndarray):
    """Centered augmented response as base + slope * y."""
    n = y_train.shape[0]
    s0 = float(y_train.sum())
    base = np.concatenate([y_train, [0.0]]) - s0 / (n + 1)
    slope = np.full(n + 1, -1.0 / (n + 1))
    slope[n] = 1.0 - 1.0 / (n + 1)
    return base, slope


class _Walker:
    """One-directional breakpoint walk with frozen-state linear solves."""

    def __init__(self, z, base, slope, lam, span):
        self.z = z
        self.base = base
        self.slope = slope
        self.lam = lam
        self.tol_y = EVENT_TOL_REL * span + 1e-300
        self.probe = max(10.0 * self.tol_y, 1e-11 * span)

    def solve_state(self, active, signs):
        """Affine maps of the frozen-state solution: beta(y) = b0 + b1*y."""
        z_a = self.z[:, active]
        gram = z_a.T @ z_a
        rhs = np.column_stack([z_a.T @ self.base - self.lam * np.asarray(signs),
                               z_a.T @ self.slope])
        try:
            sol = np.linalg.solve(gram, rhs) if active else np.zeros((0, 2))
        except np.linalg.LinAlgError:
            raise CollinearityError(f"singular active Gram for columns {active}") from None
        b0, b1 = sol[:, 0], sol[:, 1]
        r0 = self.base - z_a @ b0
        r1 = self.slope - z_a @ b1
        return b0, b1, r0, r1

    def corr_maps(self, r0, r1):
        return self.z.T @ r0, self.z.T @ r1

    def _inactive_mask(self, active):
        mask = np.ones(self.z.shape[1], dtype=bool)
        if active:
            mask[np.asarray(active, dtype=int)] = False
        return mask

    def events_after(self, y_cur, active, b0, b1, c0, c1):
        """(y_event, kind, j) candidates strictly beyond y_cur; kind in {drop, add+, add-}."""
        out = []
        floor = y_cur + self.tol_y
        if active:
            b0a, b1a = np.asarray(b0), np.asarray(b1)
            with np.errstate(divide="ignore", invalid="ignore"):
                y_zero = -b0a / b1a
            for pos in np.nonzero((np.abs(b1a) > 0) & (y_zero > floor))[0]:
                out.append((float(y_zero[pos]), "drop", active[pos]))
        idx = np.nonzero(self._inactive_mask(active))[0]
        c0i, c1i = c0[idx], c1[idx]
        nz = np.abs(c1i) > 0
        for bound, kind in ((self.lam, "add+"), (-self.lam, "add-")):
            with np.errstate(divide="ignore", invalid="ignore"):
                y_hit = (bound - c0i) / c1i
            for pos in np.nonzero(nz & (y_hit > floor))[0]:
                out.append((float(y_hit[pos]), kind, int(idx[pos])))
        return out

    def violation(self, y, active, signs, b0, b1, r0, r1) -> float:
        """How far a frozen state is from KKT stationarity at y (0 = consistent)."""
        corr = self.z.T @ (r0 + r1 * y)
        score = 0.0
        if active:
            beta = b0 + b1 * y
            scale_b = max(1.0, float(np.max(np.abs(beta))))
            score += float(np.sum(np.maximum(0.0, -(beta * np.asarray(signs))))) / scale_b
        off = corr[self._inactive_mask(active)]
        score += float(np.sum(np.maximum(0.0, np.abs(off) - self.lam))) / max(self.lam, 1e-12)
        return score

    def walk(self, start, stop, active0, signs0, budget):
        """Segments [(y_from, y_to, active tuple, b0, b1, r0, r1)] covering [start, stop]."""
        active = list(active0)
        signs = list(signs0)
        segments = []
        y_cur = start
        guard = 0
        state = self.solve_state(active, signs)
        while True:
            guard += 1
            if guard > budget + 2:
                raise PathExplosionError(f"breakpoint budget {budget} exceeded")
            b0, b1, r0, r1 = state
            c0, c1 = self.corr_maps(r0, r1)
            events = self.events_after(y_cur, active, b0, b1, c0, c1)
            events.sort()
            applied = False
            for y_e, kind, j in events:
                if y_e >= stop:
                    break
                if kind == "drop":
                    pos = active.index(j)
                    new_active = active[:pos] + active[pos + 1:]
                    new_signs = signs[:pos] + signs[pos + 1:]
                else:
                    sgn = 1.0 if kind == "add+" else -1.0
                    new_active = active + [j]
                    new_signs = signs + [sgn]
                try:
                    new_state = self.solve_state(new_active, new_signs)
                except CollinearityError:
                    continue
                # adopt the event only if the new state fits KKT at least as
                # well just past it (rejects grazing touches of the boundary)
                y_probe = y_e + self.probe
                new_score = self.violation(y_probe, new_active, new_signs, *new_state)
                old_score = self.violation(y_probe, active, signs, b0, b1, r0, r1)
                if new_score > old_score:
                    continue
                segments.append((y_cur, y_e, tuple(active), b0, b1, r0, r1))
                active, signs = new_active, new_signs
                state = new_state
                y_cur = y_e
                applied = True
                break
            if not applied:
                segments.append((y_cur, stop, tuple(active), b0, b1, r0, r1))
                return segments


def homotopy_path(psi, y_train, phi_new, lam, y_range, max_breakpoints=None) -> HomotopyPath:
    """Build the piecewise-affine augmented-LASSO path over a y interval.

    psi is the n x P training regression matrix (constant column 0),
    phi_new the query basis row, lam >= 0 the frozen penalty.  Raises
    PathExplosionError past the breakpoint budget (default 10 * P).
    """
    psi = np.asarray(psi, dtype=float)
    y_train = np.asarray(y_train, dtype=float)
    phi_new = np.asarray(phi_new, dtype=float)
    lo, hi = float(y_range[0]), float(y_range[1])
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise ValueError(f"need a finite ordered y_range, got ({lo}, {hi})")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    n, p = psi.shape
    budget = max_breakpoints if max_breakpoints is not None else 10 * p
    const_val = psi[0, 0]

    x_aug = np.vstack([psi[:, 1:], phi_new[1:]])
    col_mean = x_aug.mean(axis=0)
    z = x_aug - col_mean
    base, slope = _affine_response(y_train)
    span = max(hi - lo, abs(hi), abs(lo), 1e-12)

    if lam == 0.0:
        sol0, _, rank, _ = np.linalg.lstsq(z, base, rcond=None)
        sol1 = np.linalg.lstsq(z, slope, rcond=None)[0]
        if rank < p - 1:
            raise CollinearityError("centered augmented design is rank deficient at lam=0")
        segs = [(lo, hi, tuple(range(p - 1)), sol0, sol1, base - z @ sol0, slope - z @ sol1)]
    else:
        y_mid = 0.5 * (lo + hi)
        v_mid = base + slope * y_mid
        cap = min(n, p - 1)  # centered rank is at most n
        knots, _ = _lars_engine(z, v_mid, cap, lasso=True, stop_lambda=lam)
        beta_mid = knots[-1][1] if knots else np.zeros(p - 1)
        active0 = [int(j) for j in np.nonzero(beta_mid)[0]]
        signs0 = [float(np.sign(beta_mid[j])) for j in active0]
        walker = _Walker(z, base, slope, lam, span)
        up = walker.walk(y_mid, hi, active0, signs0, budget)
        down_raw = _Walker(z, base, -slope, lam, span).walk(-y_mid, -lo, active0, signs0, budget)
        down = [(-b, -a, act, b0, -b1, r0, -r1) for (a, b, act, b0, b1, r0, r1) in reversed(down_raw)]
        segs = down + up

    merged = []
    merge_tol = MERGE_TOL_REL * span
    for seg in segs:
        if merged and (seg[1] - seg[0] <= merge_tol or merged[-1][2] == seg[2]):
            prev = merged.pop()
            if seg[1] - seg[0] <= merge_tol and prev[1] - prev[0] > merge_tol:
                merged.append((prev[0], seg[1], prev[2], prev[3], prev[4], prev[5], prev[6]))
            else:
                merged.append((prev[0], seg[1], seg[2], seg[3], seg[4], seg[5], seg[6]))
        else:
            merged.append(seg)
    if len(merged) - 1 > budget:
        raise PathExplosionError(f"{len(merged) - 1} breakpoints exceed budget {budget}")

    k = len(merged)
    coef0 = np.zeros((k, p))
    coef1 = np.zeros((k, p))
    resid0 = np.empty((k, n))
    resid1 = np.empty((k, n))
    pred0 = np.empty(k)
    pred1 = np.empty(k)
    actives = []
    s0 = float(y_train.sum())
    for i, (_, _, act, b0, b1, r0, r1) in enumerate(merged):
        cols = np.asarray(act, dtype=int)
        full0 = np.zeros(p - 1)
        full1 = np.zeros(p - 1)
        full0[cols] = b0
        full1[cols] = b1
        coef0[i, 1:] = full0
        coef1[i, 1:] = full1
        coef0[i, 0] = (s0 / (n + 1) - col_mean @ full0) / const_val
        coef1[i, 0] = (1.0 / (n + 1) - col_mean @ full1) / const_val
        resid0[i] = r0[:n]
        resid1[i] = r1[:n]
        pred0[i] = -r0[n]
        pred1[i] = 1.0 - r1[n]
        actives.append((0,) + tuple(int(c) + 1 for c in cols))

    breakpoints = np.array([seg[1] for seg in merged[:-1]])
    return HomotopyPath(lo=lo, hi=hi, breakpoints=breakpoints,
                        coef0=coef0, coef1=coef1, resid0=resid0, resid1=resid1,
                        pred0=pred0, pred1=pred1, active_sets=tuple(actives))
