"""Case grid (transfer x perturbation site x family x metric), per-case rank
correlation, per-transfer Stouffer summaries, and the on-disk formats.

File formats
------------
controllers (JSON lines), one record per controller::

    {"schema_version": 1, "n": 11, "in": 1, "out": 3, "tf": ..., "dt": 0.1,
     "bias": [...], "prob": ..., "seed": 42, "restart_index": 17}

metrics (CSV): ``controller_index, prob, family, site, logsens, mu, n, in, out``;
empty cells for metrics that were not computed.

stats (JSON): ``{"cases": [...], "summaries": [...]}`` whose entries carry the
field names of :class:`~spinring.stats.RankCorrelationResult` and
:class:`~spinring.stats.StoufferResult`.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .fidelity import QUAD_POINTS, windowed_probability
from .mu import assemble_plant, close_controller, mu_lower_bound, orth_complement
from .ring_model import (
    BiasController,
    PerturbationKind,
    PerturbationSpec,
    RingSpec,
    build_hamiltonian,
    check_spin,
    perturbation_structure,
)
from .sensitivity import sensitivity_from, windowed_derivative
from .spectral import decompose
from .stats import RankCorrelationResult, StoufferResult, rank_correlation, sigma_tau, stouffer

SCHEMA_VERSION = 1
CONTROLLER_FIELDS = ("schema_version", "n", "in", "out", "tf", "dt", "bias", "prob", "seed", "restart_index")
METRIC_COLUMNS = ("controller_index", "prob", "family", "site", "logsens", "mu", "n", "in", "out")


class MetricPair(str, Enum):
    LOGSENS = "prob_vs_logsens"
    MU = "prob_vs_mu"

    @property
    def column(self) -> str:
        return "logsens" if self is MetricPair.LOGSENS else "mu"


class RecordError(ValueError):
    """A malformed input record; the message names the file and line."""

    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.path, self.line = path, line


@dataclass(frozen=True)
class CaseSpec:
    in_spin: int
    out_spin: int
    perturbation: PerturbationSpec
    metric_pair: MetricPair

    @property
    def transfer(self) -> tuple[int, int]:
        return self.in_spin, self.out_spin


@dataclass(frozen=True)
class CaseResult:
    case: CaseSpec
    probs: np.ndarray  # descending
    metrics: np.ndarray
    correlation: RankCorrelationResult

    @property
    def per_controller(self) -> np.ndarray:
        """``(windowed_prob, metric)`` rows, descending probability."""
        return np.column_stack((self.probs, self.metrics))


@dataclass(frozen=True)
class TransferSummary:
    transfer: tuple[int, int]
    family: PerturbationKind
    metric_pair: MetricPair
    mean_tau: float
    mean_z: float
    stouffer: StoufferResult


def transfers_for(n: int) -> list[tuple[int, int]]:
    """``1 -> 1`` through ``1 -> floor(n/2) + 1``; the ring's reflection covers the rest."""
    return [(1, m) for m in range(1, n // 2 + 2)]


# ---------------------------------------------------------------- metrics


class ControllerAnalyzer:
    """Caches the per-controller pieces shared by every perturbation site."""

    def __init__(self, spec: RingSpec, ctrl: BiasController, quad_points: int = QUAD_POINTS):
        if ctrl.n != spec.n:
            raise ValueError(f"controller has {ctrl.n} biases, ring has {spec.n} spins")
        self.spec, self.ctrl, self.quad_points = spec, ctrl, quad_points
        self.H = build_hamiltonian(spec)
        self.decomp = decompose(self.H + np.diag(ctrl.bias))
        self.prob = windowed_probability(
            self.decomp, ctrl.in_spin, ctrl.out_spin, ctrl.t_f, ctrl.window_halfwidth, quad_points
        )
        self._C = None

    def log_sensitivity(self, pert: PerturbationSpec) -> float:
        c = self.ctrl
        S = perturbation_structure(self.spec, c, pert)
        d = windowed_derivative(self.decomp, S, c.in_spin, c.out_spin, c.t_f, c.window_halfwidth, self.quad_points)
        return sensitivity_from(d, self.prob).log_sensitivity

    def mu(self, pert: PerturbationSpec, **search) -> float:
        if self._C is None:
            self._C = orth_complement(self.ctrl.out_spin, self.spec.n)
        S = perturbation_structure(self.spec, self.ctrl, pert)
        P = assemble_plant(self.H, S, self._C, pert.kind.value)
        M = close_controller(P, self.ctrl.bias)
        return mu_lower_bound(M, **search).beta


def _check_ensemble(ensemble: Sequence[BiasController], transfer: tuple[int, int]):
    if not ensemble:
        raise ValueError("empty ensemble")
    for c in ensemble:
        if (c.in_spin, c.out_spin) != tuple(transfer):
            raise ValueError(f"controller transfer {c.in_spin}->{c.out_spin} does not match case {transfer[0]}->{transfer[1]}")


def correlate(case: CaseSpec, probs: Sequence[float], metrics: Sequence[float]) -> CaseResult:
    probs = np.asarray(probs, dtype=float)
    metrics = np.asarray(metrics, dtype=float)
    order = np.argsort(-probs, kind="stable")
    return CaseResult(case, probs[order], metrics[order], rank_correlation(probs, metrics))


def run_case(spec: RingSpec, ensemble: Sequence[BiasController], case: CaseSpec, quad_points: int = QUAD_POINTS) -> CaseResult:
    _check_ensemble(ensemble, case.transfer)
    probs, vals = [], []
    for ctrl in ensemble:
        a = ControllerAnalyzer(spec, ctrl, quad_points)
        probs.append(a.prob)
        if case.metric_pair is MetricPair.LOGSENS:
            vals.append(a.log_sensitivity(case.perturbation))
        else:
            vals.append(a.mu(case.perturbation))
    return correlate(case, probs, vals)


def summarize_transfer(results: Sequence[CaseResult], n_sites: int = 11) -> TransferSummary:
    if len(results) != n_sites:
        raise ValueError(f"expected {n_sites} case results, got {len(results)}")
    first = results[0].case
    key = (first.transfer, first.perturbation.kind, first.metric_pair)
    for r in results:
        if (r.case.transfer, r.case.perturbation.kind, r.case.metric_pair) != key:
            raise ValueError("case results mix transfers, families or metrics")
    taus = np.array([r.correlation.tau for r in results])
    zs = np.array([r.correlation.z for r in results])
    return TransferSummary(
        transfer=first.transfer,
        family=first.perturbation.kind,
        metric_pair=first.metric_pair,
        mean_tau=float(taus.mean()),
        mean_z=float(zs.mean()),
        stouffer=stouffer(zs),
    )


def analyze_ensemble(
    spec: RingSpec,
    ensemble: Sequence[BiasController],
    family: PerturbationKind | str,
    sites: Iterable[int] | None = None,
    metrics: Sequence[str] = ("logsens", "mu"),
    quad_points: int = QUAD_POINTS,
) -> list[dict]:
    """Metric rows (one per controller x site), ordered by site then controller index."""
    family = PerturbationKind(family)
    sites = list(range(1, spec.n + 1)) if sites is None else list(sites)
    for k in sites:
        check_spin(k, spec.n, "site")
    analyzers = [ControllerAnalyzer(spec, c, quad_points) for c in ensemble]
    rows = []
    for k in sites:
        pert = PerturbationSpec(family, k)
        for idx, a in enumerate(analyzers):
            rows.append(
                {
                    "controller_index": idx,
                    "prob": a.prob,
                    "family": family.value,
                    "site": k,
                    "logsens": a.log_sensitivity(pert) if "logsens" in metrics else None,
                    "mu": a.mu(pert) if "mu" in metrics else None,
                    "n": spec.n,
                    "in": a.ctrl.in_spin,
                    "out": a.ctrl.out_spin,
                }
            )
    return rows


def cases_from_rows(rows: Sequence[dict]) -> list[CaseResult]:
    """Group metric rows into per-case rank correlations, sorted by case key."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["n"], r["in"], r["out"], r["family"], r["site"]), []).append(r)
    out = []
    for (n, i, o, fam, site) in sorted(groups):
        grp = sorted(groups[(n, i, o, fam, site)], key=lambda r: r["controller_index"])
        for mp in MetricPair:
            vals = [r[mp.column] for r in grp]
            if any(v is None for v in vals):
                continue
            case = CaseSpec(i, o, PerturbationSpec(fam, site), mp)
            out.append(correlate(case, [r["prob"] for r in grp], vals))
    return out


def summaries_from_cases(cases: Sequence[CaseResult], n: int) -> list[TransferSummary]:
    groups: dict[tuple, list[CaseResult]] = {}
    for c in cases:
        groups.setdefault((c.case.transfer, c.case.perturbation.kind.value, c.case.metric_pair.value), []).append(c)
    return [summarize_transfer(groups[k], n) for k in sorted(groups) if len(groups[k]) == n]


# ---------------------------------------------------------------- I/O


def controller_record(ctrl: BiasController, **extra) -> dict:
    rec = {
        "schema_version": SCHEMA_VERSION,
        "n": ctrl.n,
        "in": ctrl.in_spin,
        "out": ctrl.out_spin,
        "tf": float(ctrl.t_f),
        "dt": float(ctrl.window_halfwidth),
        "bias": [float(b) for b in ctrl.bias],
        "prob": float(ctrl.windowed_prob),
        "seed": ctrl.seed,
        "restart_index": ctrl.restart_index,
    }
    rec.update(extra)
    return rec


def write_controllers(path, controllers: Iterable[BiasController], **extra) -> None:
    # json emits the shortest repr that round-trips each float
    with open(path, "w", encoding="utf-8") as fh:
        for c in controllers:
            fh.write(json.dumps(controller_record(c, **extra), allow_nan=False) + "\n")


def read_controllers(path) -> list[BiasController]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"controllers file not found: {path}")
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise RecordError(path, lineno, f"malformed JSON ({e.msg})") from None
            if not isinstance(rec, dict):
                raise RecordError(path, lineno, "record is not a JSON object")
            missing = [f for f in CONTROLLER_FIELDS if f not in rec]
            if missing:
                raise RecordError(path, lineno, f"missing fields {missing}")
            if rec["schema_version"] != SCHEMA_VERSION:
                raise RecordError(path, lineno, f"unsupported schema_version {rec['schema_version']}")
            if not isinstance(rec["bias"], list) or len(rec["bias"]) != rec["n"]:
                raise RecordError(path, lineno, f"bias has {len(rec['bias']) if isinstance(rec['bias'], list) else '?'} entries, n = {rec['n']}")
            try:
                ctrl = BiasController(
                    bias=np.array(rec["bias"], dtype=float),
                    t_f=float(rec["tf"]),
                    window_halfwidth=float(rec["dt"]),
                    in_spin=int(rec["in"]),
                    out_spin=int(rec["out"]),
                    windowed_prob=float(rec["prob"]),
                    seed=rec["seed"],
                    restart_index=rec["restart_index"],
                )
            except (TypeError, ValueError) as e:
                raise RecordError(path, lineno, str(e)) from None
            if out and (ctrl.n, ctrl.in_spin, ctrl.out_spin) != (out[0].n, out[0].in_spin, out[0].out_spin):
                raise RecordError(path, lineno, "record mixes ring size or transfer with earlier records")
            out.append(ctrl)
    if not out:
        raise RecordError(path, 0, "no controller records")
    return out


def _fmt(v) -> str:
    return "" if v is None else repr(float(v)) if isinstance(v, float) else str(v)


def write_metrics(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in METRIC_COLUMNS])


def read_metrics(path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"metrics file not found: {path}")
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != METRIC_COLUMNS:
            raise RecordError(path, 1, f"expected header {','.join(METRIC_COLUMNS)}")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(METRIC_COLUMNS):
                raise RecordError(path, lineno, f"expected {len(METRIC_COLUMNS)} columns, got {len(row)}")
            rec = dict(zip(METRIC_COLUMNS, row))
            try:
                parsed = {
                    "controller_index": int(rec["controller_index"]),
                    "prob": float(rec["prob"]),
                    "family": PerturbationKind(rec["family"]).value,
                    "site": int(rec["site"]),
                    "logsens": float(rec["logsens"]) if rec["logsens"] else None,
                    "mu": float(rec["mu"]) if rec["mu"] else None,
                    "n": int(rec["n"]),
                    "in": int(rec["in"]),
                    "out": int(rec["out"]),
                }
            except ValueError as e:
                raise RecordError(path, lineno, str(e)) from None
            if not 1 <= parsed["site"] <= parsed["n"]:
                raise RecordError(path, lineno, f"site {parsed['site']} out of range 1..{parsed['n']}")
            rows.append(parsed)
    return rows


def case_to_dict(c: CaseResult, n: int) -> dict:
    corr = asdict(c.correlation)
    corr["p_rounded"] = c.correlation.p_rounded
    return {
        "n": n,
        "in": c.case.in_spin,
        "out": c.case.out_spin,
        "family": c.case.perturbation.kind.value,
        "site": c.case.perturbation.site,
        "label": c.case.perturbation.label(n),
        "metric_pair": c.case.metric_pair.value,
        **corr,
    }


def summary_to_dict(s: TransferSummary, n: int) -> dict:
    return {
        "n": n,
        "in": s.transfer[0],
        "out": s.transfer[1],
        "family": s.family.value,
        "metric_pair": s.metric_pair.value,
        "mean_tau": s.mean_tau,
        "mean_z": s.mean_z,
        **asdict(s.stouffer),
        "p_s_rounded": round(s.stouffer.p_s, 4),
    }


def stats_document(rows: Sequence[dict]) -> dict:
    if not rows:
        raise ValueError("no metric rows")
    ns = {r["n"] for r in rows}
    if len(ns) != 1:
        raise ValueError(f"metric rows mix ring sizes {sorted(ns)}")
    n = ns.pop()
    cases = cases_from_rows(rows)
    return {
        "cases": [case_to_dict(c, n) for c in cases],
        "summaries": [summary_to_dict(s, n) for s in summaries_from_cases(cases, n)],
    }


def render_report(doc: dict, fmt: str = "md") -> str:
    """Summary tables shaped like the per-family Kendall/Stouffer tables (one per family)."""
    cols = ("mean_tau", "mean_z", "p_s")
    by_key = {(s["family"], s["in"], s["out"], s["metric_pair"]): s for s in doc["summaries"]}
    families = sorted({k[0] for k in by_key})
    buf = io.StringIO()
    if fmt == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["family", "transfer", "mu_mean_tau", "mu_mean_z", "mu_stouffer_p", "logsens_mean_tau", "logsens_mean_z", "logsens_stouffer_p"])
    for fam in families:
        transfers = sorted({(k[1], k[2]) for k in by_key if k[0] == fam})
        if fmt == "md":
            title = "Coupling Uncertainty Summary" if fam == "coupling" else "Bias Spillage Summary"
            buf.write(f"### {title}\n\n")
            buf.write("| Transfer | mu: Mean tau | mu: Mean Z | mu: Stouffer p | LogSens: Mean tau | LogSens: Mean Z | LogSens: Stouffer p |\n")
            buf.write("|---|---|---|---|---|---|---|\n")
        for i, o in transfers:
            cells = []
            for mp in (MetricPair.MU.value, MetricPair.LOGSENS.value):
                s = by_key.get((fam, i, o, mp))
                cells += [f"{s[c]:.4f}" for c in cols] if s else ["-"] * 3
            if fmt == "md":
                buf.write(f"| {i}->{o} | " + " | ".join(cells) + " |\n")
            else:
                w.writerow([fam, f"{i}->{o}", *cells])
        if fmt == "md":
            buf.write("\n")
    if fmt == "md":
        buf.write(_case_tables(doc))
    return buf.getvalue()


def _case_tables(doc: dict) -> str:
    groups: dict[tuple, list[dict]] = {}
    for c in doc["cases"]:
        groups.setdefault((c["in"], c["out"], c["family"], c["metric_pair"]), []).append(c)
    buf = io.StringIO()
    for (i, o, fam, mp), rows in sorted(groups.items()):
        metric = "mu" if mp == MetricPair.MU.value else "Log Sensitivity"
        buf.write(f"#### {i}->{o}, {fam}, prob vs {metric}\n\n")
        buf.write("| Site | tau | Z | p | Reject H0 | Power >= 0.80 |\n|---|---|---|---|---|---|\n")
        for c in sorted(rows, key=lambda c: c["site"]):
            buf.write(
                f"| {c['label']} | {c['tau']:.4g} | {c['z']:.4g} | {c['p_rounded']:.4f} | "
                f"{'Reject' if c['reject_h0'] else 'Accept'} | {'Yes' if c['power80'] else ''} |\n"
            )
        buf.write("\n")
    return buf.getvalue()


def trend_rows(rows: Sequence[dict], family: str, site: int, metric: str) -> list[tuple[int, float, float]]:
    """``(controller_rank, prob, log10 metric)`` ordered by descending probability."""
    sel = [r for r in rows if r["family"] == family and r["site"] == site and r[metric] is not None]
    if not sel:
        raise ValueError(f"no {metric} rows for family={family} site={site}")
    transfers = {(r["in"], r["out"]) for r in sel}
    if len(transfers) > 1:
        raise ValueError(f"metric rows mix transfers {sorted(transfers)}")
    sel.sort(key=lambda r: (-r["prob"], r["controller_index"]))
    with np.errstate(divide="ignore"):
        return [(rank, r["prob"], float(np.log10(r[metric])) if r[metric] > 0 else -math.inf) for rank, r in enumerate(sel, 1)]
