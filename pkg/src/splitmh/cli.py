"""Config-driven experiment harness and command line interface.

One JSON document describes an experiment: a Gaussian (or change-of-measure)
target, a proposal family with its tuning parameters, chain settings, and an
optional one-parameter sweep.  ``predict`` emits theory-only rows, ``run``
adds Monte Carlo columns next to the predictions, and ``verify`` executes
self-check suites.  Results land in a CSV with a fixed header (config
columns, then predicted_*, empirical_*, stderr_*, efficiency, wall_time_s,
matvecs), 17 significant digits, written atomically.

Exit codes: 0 success, 1 verification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from splitmh import theory
from splitmh.model import (
    ChangeOfMeasureTarget,
    GaussianTarget,
    SpectrumFamily,
    builtin_phi,
    exact_gaussian_sample,
    make_test_target,
)
from splitmh.proposals import (
    HmcSpec,
    ScalingLaw,
    ThetaLangevinSpec,
    cn_proposal,
    hmc_proposal,
    l_step_proposal,
    pcn_proposal,
    sla_proposal,
    theta_langevin_proposal,
)
from splitmh.sampler import (
    ChainConfig,
    estimate_kappa_gamma,
    log_accept_gaussian,
    run_chain,
)
from splitmh.splitting import (
    Ar1Proposal,
    ar1_to_splitting,
    splitting_to_ar1,
    symmetric_splitting,
)

FAMILIES = ("sla", "theta_langevin", "lstep", "hmc", "pcn", "cn")
SWEEPABLE = ("l", "h", "theta", "L", "T", "d")
SUITES = ("identities", "theory_vs_mc", "figures")

# Fixed CSV schema: config columns first, then prediction/empirical blocks.
CONFIG_COLUMNS = (
    "family",
    "dim",
    "kappa",
    "scale",
    "rotate",
    "target_seed",
    "shift_law",
    "phi_name",
    "phi_amplitude",
    "h",
    "l",
    "theta",
    "n_compositions",
    "total_time",
    "preconditioner",
    "t_phi_cost",
    "n_steps",
    "burn_in",
    "chain_seed",
    "mode",
    "accept_path",
    "sweep_parameter",
    "sweep_value",
)


class ConfigError(ValueError):
    """Invalid experiment configuration (exit code 2)."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetSpec:
    dim: int = 100
    kappa: float = 0.0
    scale: float = 1.0
    rotate: bool = False
    seed: int = 0
    shift_law: str = "zero"
    phi_name: str = "zero"
    phi_amplitude: float = 0.0


@dataclass(frozen=True)
class ProposalSpec:
    family: str = "sla"
    h: float | None = None
    scaling_l: float | None = None
    scaling_kappa: float | None = None
    theta: float = 1.0
    n_compositions: int = 1
    steps: int | None = None
    total_time: float | None = None
    preconditioner: str = "identity"


@dataclass(frozen=True)
class ChainSpec:
    n_steps: int = 200_000
    burn_in: int | None = None
    seed: int = 0
    mode: str = "metropolis"
    accept_path: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    target: TargetSpec
    proposal: ProposalSpec
    chain: ChainSpec
    sweep_parameter: str | None = None
    sweep_grid: tuple = ()
    jump_directions: int = 3
    t_phi_cost: float = 0.0
    record_timing: bool = True
    out: str | None = None


def _take(mapping: dict, known: dict, where: str) -> dict:
    unknown = set(mapping) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    merged = dict(known)
    merged.update(mapping)
    return merged


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a JSON document and return the experiment configuration."""
    if not isinstance(doc, dict):
        raise ConfigError("top-level config must be a JSON object")
    top = _take(
        doc,
        {
            "target": {},
            "proposal": {},
            "chain": {},
            "sweep": None,
            "jump_directions": 3,
            "t_phi_cost": 0.0,
            "record_timing": True,
            "out": None,
        },
        "config",
    )
    tgt = _take(
        top["target"],
        {
            "dim": 100,
            "kappa": 0.0,
            "scale": 1.0,
            "rotate": False,
            "seed": 0,
            "shift_law": "zero",
            "phi": None,
        },
        "target",
    )
    phi = tgt.pop("phi") or {}
    phi = _take(phi, {"name": "zero", "amplitude": 0.0}, "target.phi")
    if tgt["dim"] < 1:
        raise ConfigError(f"target.dim must be >= 1, got {tgt['dim']}")
    if tgt["shift_law"] not in ("zero", "random"):
        raise ConfigError(f"unknown shift_law {tgt['shift_law']!r}")
    target = TargetSpec(
        dim=int(tgt["dim"]),
        kappa=float(tgt["kappa"]),
        scale=float(tgt["scale"]),
        rotate=bool(tgt["rotate"]),
        seed=int(tgt["seed"]),
        shift_law=tgt["shift_law"],
        phi_name=phi["name"],
        phi_amplitude=float(phi["amplitude"]),
    )
    prop = _take(
        top["proposal"],
        {
            "family": "sla",
            "h": None,
            "scaling": None,
            "theta": 1.0,
            "L": 1,
            "steps": None,
            "T": None,
            "preconditioner": "identity",
        },
        "proposal",
    )
    if prop["family"] not in FAMILIES:
        raise ConfigError(f"unknown family {prop['family']!r}; choose from {FAMILIES}")
    scaling = prop["scaling"] or {}
    scaling = _take(scaling, {"l": None, "kappa": None}, "proposal.scaling")
    proposal = ProposalSpec(
        family=prop["family"],
        h=None if prop["h"] is None else float(prop["h"]),
        scaling_l=None if scaling["l"] is None else float(scaling["l"]),
        scaling_kappa=None if scaling["kappa"] is None else float(scaling["kappa"]),
        theta=float(prop["theta"]),
        n_compositions=int(prop["L"]),
        steps=None if prop["steps"] is None else int(prop["steps"]),
        total_time=None if prop["T"] is None else float(prop["T"]),
        preconditioner=prop["preconditioner"],
    )
    ch = _take(
        top["chain"],
        {
            "n_steps": 200_000,
            "burn_in": None,
            "seed": 0,
            "mode": "metropolis",
            "accept_path": None,
        },
        "chain",
    )
    chain = ChainSpec(
        n_steps=int(ch["n_steps"]),
        burn_in=None if ch["burn_in"] is None else int(ch["burn_in"]),
        seed=int(ch["seed"]),
        mode=ch["mode"],
        accept_path=ch["accept_path"],
    )
    sweep_parameter, sweep_grid = None, ()
    if top["sweep"] is not None:
        sw = _take(top["sweep"], {"parameter": None, "grid": None}, "sweep")
        if sw["parameter"] not in SWEEPABLE:
            raise ConfigError(
                f"sweep.parameter must be one of {SWEEPABLE}, got {sw['parameter']!r}"
            )
        if not sw["grid"]:
            raise ConfigError("sweep.grid must be a non-empty list")
        sweep_parameter = sw["parameter"]
        sweep_grid = tuple(sw["grid"])
    k = int(top["jump_directions"])
    if k < 0:
        raise ConfigError(f"jump_directions must be >= 0, got {k}")
    return ExperimentConfig(
        target=target,
        proposal=proposal,
        chain=chain,
        sweep_parameter=sweep_parameter,
        sweep_grid=sweep_grid,
        jump_directions=k,
        t_phi_cost=float(top["t_phi_cost"]),
        record_timing=bool(top["record_timing"]),
        out=top["out"],
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(doc)


def _apply_sweep(config: ExperimentConfig, value) -> ExperimentConfig:
    p = config.sweep_parameter
    if p is None:
        return config
    if p == "l":
        prop = replace(config.proposal, scaling_l=float(value), h=None)
        return replace(config, proposal=prop)
    if p == "h":
        prop = replace(config.proposal, h=float(value), scaling_l=None)
        return replace(config, proposal=prop)
    if p == "theta":
        return replace(config, proposal=replace(config.proposal, theta=float(value)))
    if p == "L":
        if config.proposal.family == "hmc":
            prop = replace(config.proposal, steps=int(value), total_time=None)
        else:
            prop = replace(config.proposal, n_compositions=int(value))
        return replace(config, proposal=prop)
    if p == "T":
        prop = replace(config.proposal, total_time=float(value), steps=None)
        return replace(config, proposal=prop)
    if p == "d":
        return replace(config, target=replace(config.target, dim=int(value)))
    raise ConfigError(f"unsupported sweep parameter {p!r}")


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------


def build_target(spec: TargetSpec):
    """Materialize the (possibly change-of-measure) target of a config."""
    reference = make_test_target(
        dim=spec.dim,
        family=SpectrumFamily(kappa=spec.kappa, scale=spec.scale),
        seed=spec.seed,
        rotate=spec.rotate,
        shift_law=spec.shift_law,
    )
    if spec.phi_name == "zero" or spec.phi_amplitude == 0.0:
        return reference
    phi, bound = builtin_phi(spec.phi_name, spec.phi_amplitude)
    return ChangeOfMeasureTarget(reference, phi, bound)


def _resolve_step(config: ExperimentConfig, reference: GaussianTarget) -> float:
    prop, tgt = config.proposal, config.target
    if prop.h is not None:
        return prop.h
    if prop.scaling_l is None:
        raise ConfigError("proposal needs either h or scaling.l")
    kappa = tgt.kappa if prop.scaling_kappa is None else prop.scaling_kappa
    family = "hmc" if prop.family == "hmc" else "langevin"
    return ScalingLaw(l=prop.scaling_l, kappa=kappa, family=family).step_size(tgt.dim)


def build_proposal(config: ExperimentConfig, target):
    """Construct the configured proposal against the given target."""
    reference = target.reference if isinstance(target, ChangeOfMeasureTarget) else target
    prop = config.proposal
    h = _resolve_step(config, reference)
    if prop.family == "sla":
        return sla_proposal(reference, h)
    if prop.family == "theta_langevin":
        spec = ThetaLangevinSpec(
            theta=prop.theta, h=h, preconditioner=prop.preconditioner
        )
        return theta_langevin_proposal(reference, spec)
    if prop.family == "lstep":
        return l_step_proposal(sla_proposal(reference, h), prop.n_compositions)
    if prop.family == "hmc":
        if prop.steps is None and prop.total_time is None:
            raise ConfigError("hmc proposal needs steps or T")
        spec = HmcSpec(
            h=h,
            steps=prop.steps,
            total_time=prop.total_time,
            preconditioner=prop.preconditioner,
        )
        return hmc_proposal(reference, spec)
    if prop.family == "pcn":
        return pcn_proposal(reference, h)
    if prop.family == "cn":
        return cn_proposal(reference, h)
    raise ConfigError(f"unknown family {prop.family!r}")


# ---------------------------------------------------------------------------
# Result rows and CSV
# ---------------------------------------------------------------------------


def csv_header(jump_directions: int) -> list[str]:
    cols = list(CONFIG_COLUMNS)
    cols.append("predicted_acceptance")
    cols.extend(f"predicted_jump_{i + 1}" for i in range(jump_directions))
    cols.append("empirical_acceptance")
    cols.extend(f"empirical_jump_{i + 1}" for i in range(jump_directions))
    cols.append("stderr_acceptance")
    cols.extend(f"stderr_jump_{i + 1}" for i in range(jump_directions))
    cols.extend(["efficiency", "wall_time_s", "matvecs"])
    return cols


def format_value(value) -> str:
    """One CSV cell: 17 significant digits for floats, plain text otherwise."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if value is None:
        return "nan"
    return str(value)


def write_csv(path: str, header: list[str], rows: list[dict]) -> None:
    """Write rows atomically: full temp file, then rename over the target."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(row.get(col)) for col in header))
    text = "\n".join(lines) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    tmp_path = os.path.join(directory, f".{os.path.basename(path)}.tmp")
    with open(tmp_path, "w") as fh:
        fh.write(text)
    os.replace(tmp_path, path)


def _config_cells(config: ExperimentConfig, h: float, value) -> dict:
    tgt, prop, ch = config.target, config.proposal, config.chain
    resolved_path = ch.accept_path
    if resolved_path is None:
        tilted = tgt.phi_name != "zero" and tgt.phi_amplitude != 0.0
        resolved_path = "general_density" if tilted else "gaussian_closed_form"
    return {
        "family": prop.family,
        "dim": tgt.dim,
        "kappa": tgt.kappa,
        "scale": tgt.scale,
        "rotate": tgt.rotate,
        "target_seed": tgt.seed,
        "shift_law": tgt.shift_law,
        "phi_name": tgt.phi_name,
        "phi_amplitude": tgt.phi_amplitude,
        "h": h,
        "l": math.nan if prop.scaling_l is None else prop.scaling_l,
        "theta": prop.theta,
        "n_compositions": prop.steps if prop.family == "hmc" and prop.steps is not None
        else prop.n_compositions,
        "total_time": math.nan if prop.total_time is None else prop.total_time,
        "preconditioner": prop.preconditioner,
        "t_phi_cost": config.t_phi_cost,
        "n_steps": ch.n_steps,
        "burn_in": -1 if ch.burn_in is None else ch.burn_in,
        "chain_seed": ch.seed,
        "mode": ch.mode,
        "accept_path": resolved_path,
        "sweep_parameter": config.sweep_parameter or "",
        "sweep_value": math.nan if value is None else value,
    }


def _predictions(config: ExperimentConfig, target, proposal, rng=None) -> dict:
    """Theory columns for one grid point.

    For change-of-measure targets the log-ratio moments are corrected with
    importance-sampling estimates of the tilted fluctuation moments, which
    consumes randomness; ``predict`` therefore reports the Gaussian-reference
    prediction (rng=None) while ``run`` reports the corrected one.
    """
    terms = theory.mode_terms(
        target.reference if isinstance(target, ChangeOfMeasureTarget) else target,
        proposal,
    )
    k = config.jump_directions
    tilted = isinstance(target, ChangeOfMeasureTarget)
    if tilted and rng is not None:
        est = estimate_kappa_gamma(target, n=100_000, rng=rng)
        mu, sigma_sq = theory.nongaussian_moments(terms, est.kappa, est.gamma)
        acceptance = theory.expected_acceptance(mu, math.sqrt(sigma_sq))
        lower, upper = theory.nongaussian_jump_bracket(terms, est.gamma, acceptance)
        jump = 0.5 * (lower + upper)
    else:
        summary = theory.summarize(terms)
        acceptance = summary.expected_acceptance
        jump = summary.jump_prediction
    cells = {"predicted_acceptance": float(acceptance)}
    for i in range(k):
        cells[f"predicted_jump_{i + 1}"] = (
            float(jump[i]) if i < jump.size else math.nan
        )
    return cells


def _empty_empirical(k: int) -> dict:
    cells = {"empirical_acceptance": math.nan, "stderr_acceptance": math.nan}
    for i in range(k):
        cells[f"empirical_jump_{i + 1}"] = math.nan
        cells[f"stderr_jump_{i + 1}"] = math.nan
    cells.update({"wall_time_s": math.nan, "matvecs": 0})
    return cells


def run_grid_point(config: ExperimentConfig, index: int, value, simulate: bool) -> dict:
    """Execute one grid point (prediction only, or prediction + chain)."""
    point = _apply_sweep(config, value)
    target = build_target(point.target)
    reference = target.reference if isinstance(target, ChangeOfMeasureTarget) else target
    proposal = build_proposal(point, target)
    h = _resolve_step(point, reference)
    row = _config_cells(point, h, value)
    k = config.jump_directions
    if not simulate:
        row.update(_predictions(point, target, proposal))
        row.update(_empty_empirical(k))
        jump_cols = [row[f"predicted_jump_{i + 1}"] for i in range(min(k, reference.dim))]
    else:
        seed_seq = np.random.SeedSequence([point.chain.seed, index])
        chain_seq, aux_seq = seed_seq.spawn(2)
        aux_rng = np.random.default_rng(aux_seq)
        tilted = isinstance(target, ChangeOfMeasureTarget)
        row.update(_predictions(point, target, proposal, rng=aux_rng if tilted else None))
        accept_path = row["accept_path"]
        init = (
            exact_gaussian_sample(reference, aux_rng)
            if tilted
            else "exact_equilibrium"
        )
        chain_config = ChainConfig(
            n_steps=point.chain.n_steps,
            burn_in=point.chain.burn_in,
            seed=0,
            init=init,
            mode=point.chain.mode,
            accept_path=accept_path,
        )
        diag = run_chain(
            target, proposal, chain_config, rng=np.random.default_rng(chain_seq)
        )
        row["burn_in"] = chain_config.resolved_burn_in()
        row["empirical_acceptance"] = diag.acceptance_rate
        row["stderr_acceptance"] = diag.acceptance_stderr
        for i in range(k):
            inside = i < diag.jump_sq.size
            row[f"empirical_jump_{i + 1}"] = diag.jump_sq[i] if inside else math.nan
            row[f"stderr_jump_{i + 1}"] = (
                diag.jump_sq_stderr[i] if inside else math.nan
            )
        row["wall_time_s"] = diag.wall_time if config.record_timing else math.nan
        row["matvecs"] = diag.matvec_count
        jump_cols = [row[f"empirical_jump_{i + 1}"] for i in range(min(k, reference.dim))]
    cost = proposal.cost_per_step + config.t_phi_cost
    row["efficiency"] = (float(np.mean(jump_cols)) / cost) if jump_cols else math.nan
    return row


def _point_worker(payload) -> dict:
    doc, index, value, simulate = payload
    return run_grid_point(parse_config(doc), index, value, simulate)


def _execute(config: ExperimentConfig, simulate: bool, workers: int, doc: dict | None) -> list[dict]:
    values = list(config.sweep_grid) if config.sweep_parameter else [None]
    if workers > 1 and len(values) > 1:
        if doc is None:
            raise ConfigError("workers > 1 needs the raw JSON document")
        payloads = [(doc, i, v, simulate) for i, v in enumerate(values)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_point_worker, payloads))
    return [run_grid_point(config, i, v, simulate) for i, v in enumerate(values)]


def cmd_predict(config: ExperimentConfig, workers: int = 1, doc: dict | None = None) -> list[dict]:
    """Theory-only rows for every grid point; consumes no randomness."""
    return _execute(config, simulate=False, workers=workers, doc=doc)


def cmd_run(config: ExperimentConfig, workers: int = 1, doc: dict | None = None) -> list[dict]:
    """Prediction plus Monte Carlo columns for every grid point."""
    return _execute(config, simulate=True, workers=workers, doc=doc)


# ---------------------------------------------------------------------------
# Verification suites
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.measured <= self.tolerance


def _suite_identities(scale: float) -> list[CheckResult]:
    rng = np.random.default_rng(20240817)
    checks: list[CheckResult] = []

    roundtrip_err = 0.0
    cov_err = 0.0
    sym_err = 0.0
    for trial in range(20):
        dim = int(rng.integers(2, 9))
        target = make_test_target(
            dim=dim, family=SpectrumFamily(kappa=0.5),
            seed=int(rng.integers(1 << 31)), rotate=True, shift_law="random",
        )
        h = 0.5 / target.spectrum.eigenvalues.max()
        prop = sla_proposal(target, h)
        dense_prop = Ar1Proposal(
            gain=prop.gain, shift=prop.shift, noise_cov=prop.noise_cov
        )
        dense = splitting_to_ar1(symmetric_splitting(dense_prop))
        roundtrip_err = max(
            roundtrip_err,
            np.max(np.abs(dense.gain - prop.gain)) / np.max(np.abs(prop.gain)),
            np.max(np.abs(dense.noise_cov - prop.noise_cov))
            / np.max(np.abs(prop.noise_cov)),
        )
        split = ar1_to_splitting(prop)
        prec = split.limit_precision()
        cov = np.linalg.inv(prec)
        identity_gap = cov - prop.gain @ cov @ prop.gain.T - prop.noise_cov
        cov_err = max(cov_err, np.max(np.abs(identity_gap)))
        general_m = ar1_to_splitting(
            Ar1Proposal(gain=prop.gain, shift=prop.shift, noise_cov=prop.noise_cov)
        ).m_mat
        sym_err = max(sym_err, np.max(np.abs(general_m - split.m_mat))
                      / np.max(np.abs(split.m_mat)))
    checks.append(CheckResult("roundtrip_ar1_splitting", roundtrip_err, 1e-10 * scale))
    checks.append(CheckResult("stationary_covariance_identity", cov_err, 1e-10 * scale))
    checks.append(CheckResult("symmetric_vs_general_m", sym_err, 1e-10 * scale))

    ratio_err = 0.0
    for trial in range(10):
        target = make_test_target(
            dim=4, family=SpectrumFamily(kappa=0.5), seed=trial, rotate=True,
            shift_law="random",
        )
        h = 0.4 / target.spectrum.eigenvalues.max()
        prop = sla_proposal(target, h)
        split = ar1_to_splitting(prop)
        x = rng.standard_normal((50, 4))
        y = rng.standard_normal((50, 4))
        z = log_accept_gaussian(split, target, x, y)
        brute = _brute_force_log_ratio(target, prop, x, y)
        ratio_err = max(ratio_err, float(np.max(np.abs(z - brute))))
    checks.append(CheckResult("log_ratio_vs_density_oracle", ratio_err, 1e-10 * scale))

    sig = np.linspace(0.1, 5.0, 25)
    uf1_err = float(
        np.max(
            np.abs(
                theory.expected_acceptance(-0.5 * sig**2, sig)
                - 2.0 * _phi_cdf(-0.5 * sig)
            )
        )
    )
    checks.append(CheckResult("acceptance_symmetric_case", uf1_err, 1e-12 * scale))

    gl_err = max(
        abs(theory.genlang_limit(l, tau, 0.0) - theory.sla_limit(l, tau)[0])
        for l in (0.5, 1.0, 2.0)
        for tau in (0.5, 1.0, 3.0)
    )
    checks.append(CheckResult("theta_zero_matches_sla_limit", gl_err, 1e-14 * scale))

    l1_err = max(
        abs(theory.lstep_limit(l, tau, 1)[0] - theory.sla_limit(l, tau)[0])
        for l in (0.5, 1.5)
        for tau in (1.0, 2.0)
    )
    inv_err = abs(
        theory.lstep_limit(1.0, 1.0, 8)[0]
        - theory.lstep_limit(8.0 ** (1.0 / 6.0), 1.0, 1)[0]
    )
    checks.append(CheckResult("lstep_limit_reduces_to_sla", l1_err, 1e-14 * scale))
    checks.append(CheckResult("lstep_acceptance_l6Ltau_invariance", inv_err, 1e-12 * scale))

    eff_err = max(
        abs(
            theory.lstep_efficiency(L, t) * (1.426 + 0.426 * t + L) / L ** (2.0 / 3.0)
            - 1.0
        )
        for L in (1, 3, 7, 16)
        for t in (0.0, 1.0, 4.0)
    )
    checks.append(CheckResult("lstep_efficiency_identity", eff_err, 1e-14 * scale))

    checks.extend(_hmc_structure_checks(scale))
    return checks


def _phi_cdf(x):
    from scipy.special import ndtr

    return ndtr(x)


def _brute_force_log_ratio(target, proposal, x, y):
    """log[pi(y) q(y,x) / (pi(x) q(x,y))] from explicit Gaussian densities."""
    cov = proposal.noise_cov
    cov_inv = np.linalg.inv(cov)

    def log_q(frm, to):
        mean = frm @ proposal.gain.T + proposal.shift
        resid = to - mean
        return -0.5 * np.einsum("...i,ij,...j->...", resid, cov_inv, resid)

    return (
        target.log_density(y)
        - target.log_density(x)
        + log_q(y, x)
        - log_q(x, y)
    )


def _hmc_structure_checks(scale: float) -> list[CheckResult]:
    from splitmh.proposals import hmc_transfer_matrices

    rng = np.random.default_rng(7)
    det_err = 0.0
    eig_err = 0.0
    mean_err = 0.0
    for trial in range(10):
        dim = int(rng.integers(2, 7))
        target = make_test_target(
            dim=dim, family=SpectrumFamily(kappa=0.5), seed=trial, rotate=True,
            shift_law="random",
        )
        lam_sq = target.spectrum.eigenvalues
        h = 1.2 / math.sqrt(lam_sq.max())
        steps = int(rng.integers(1, 6))
        k_mat, j_mat = hmc_transfer_matrices(target.precision(), None, h)
        det_err = max(det_err, abs(np.linalg.det(k_mat) - 1.0))
        k_pow = np.linalg.matrix_power(k_mat, steps)
        top_left = k_pow[:dim, :dim]
        eigs = np.sort(np.linalg.eigvals(top_left).real)
        angle = -np.arccos(np.clip(1.0 - 0.5 * h**2 * lam_sq, -1.0, 1.0))
        predicted = np.sort(np.cos(steps * angle))
        eig_err = max(eig_err, float(np.max(np.abs(eigs - predicted))))
        prop = hmc_proposal(target, HmcSpec(h=h, steps=steps))
        split = ar1_to_splitting(prop)
        sf = split.spectral_form
        limit_mean = target.spectrum.from_eigenbasis(sf.offset / sf.limit_precision)
        mean_err = max(mean_err, float(np.max(np.abs(limit_mean - target.mean))))
    return [
        CheckResult("hmc_transfer_det_one", det_err, 1e-10 * scale),
        CheckResult("hmc_mode_eigenvalues", eig_err, 1e-10 * scale),
        CheckResult("hmc_limit_mean_is_target_mean", mean_err, 1e-8 * scale),
    ]


def _suite_theory_vs_mc(scale: float) -> list[CheckResult]:
    checks: list[CheckResult] = []
    target = make_test_target(dim=200, seed=3, shift_law="random")
    h = ScalingLaw(l=1.2).step_size(200)

    for name, proposal in (
        ("sla", sla_proposal(target, h)),
        (
            "theta_langevin_1",
            theta_langevin_proposal(target, ThetaLangevinSpec(theta=1.0, h=h)),
        ),
    ):
        terms = theory.mode_terms(target, proposal)
        summary = theory.summarize(terms)
        cfg = ChainConfig(n_steps=50_000, seed=11)
        diag = run_chain(target, proposal, cfg)
        gap = abs(diag.acceptance_rate - summary.expected_acceptance)
        tol = 4.0 * diag.acceptance_stderr * scale
        checks.append(CheckResult(f"acceptance_{name}_d200", gap, tol))
        # Jump sizes: |empirical - U1*U2| must not exceed the analytic error
        # bound U3 plus Monte Carlo noise; expressed as a ratio so the
        # tolerance scale applies.
        allowance = summary.jump_u3[:3] + 4.0 * diag.jump_sq_stderr[:3]
        ratio = float(
            np.max(np.abs(diag.jump_sq[:3] - summary.jump_prediction[:3]) / allowance)
        )
        checks.append(CheckResult(f"jump_{name}_d200", ratio, 1.0 * scale))

    pcn = pcn_proposal(target, h=1.0)
    diag = run_chain(target, pcn, ChainConfig(n_steps=5_000, seed=5))
    checks.append(
        CheckResult("pcn_acceptance_exactly_one", abs(diag.acceptance_rate - 1.0), 0.0)
    )

    small = make_test_target(
        dim=4, family=SpectrumFamily(kappa=0.5), seed=9, shift_law="random"
    )
    ula = sla_proposal(small, h=0.6 / small.spectrum.eigenvalues.max())
    cfg = ChainConfig(n_steps=100_000, seed=13, mode="unadjusted")
    diag = run_chain(small, ula, cfg)
    limit_var = 1.0 / ar1_to_splitting(ula).spectral_form.limit_precision
    var_gap = float(np.max(np.abs(diag.sample_cov_diag / limit_var - 1.0)))
    checks.append(CheckResult("ula_biased_variance_5pct", var_gap, 0.05 * scale))
    return checks


def _suite_figures(scale: float, out: str) -> list[CheckResult]:
    """Emit the L-step efficiency table and check its per-t argmax."""
    rows = []
    checks = []
    t_values = (0.0, 1.0, 2.0, 4.0, 8.0)
    l_values = tuple(range(1, 17))
    base = ExperimentConfig(
        target=TargetSpec(dim=1000),
        proposal=ProposalSpec(family="lstep", h=0.01),
        chain=ChainSpec(),
        sweep_parameter="L",
        jump_directions=0,
    )
    for t in t_values:
        best_l, best_eff = None, -np.inf
        for L in l_values:
            eff = theory.lstep_efficiency(L, t)
            point = replace(
                base,
                proposal=replace(base.proposal, n_compositions=L),
                t_phi_cost=t,
            )
            row = _config_cells(point, math.nan, L)
            row.update({"predicted_acceptance": math.nan})
            row.update(_empty_empirical(0))
            row["efficiency"] = eff
            rows.append(row)
            if eff > best_eff:
                best_l, best_eff = L, eff
        _, expected = theory.optimal_lstep_count(t)
        checks.append(
            CheckResult(f"figure_argmax_t{t:g}", abs(best_l - expected), 0.0)
        )
    write_csv(out, csv_header(0), rows)
    return checks


def cmd_verify(suite: str, tolerance_scale: float = 1.0, out: str | None = None) -> int:
    """Run one verification suite, print its report, return the exit code."""
    if suite == "identities":
        checks = _suite_identities(tolerance_scale)
    elif suite == "theory_vs_mc":
        checks = _suite_theory_vs_mc(tolerance_scale)
    elif suite == "figures":
        checks = _suite_figures(tolerance_scale, out or "lstep_efficiency.csv")
    else:
        raise ConfigError(f"unknown suite {suite!r}; choose from {SUITES}")
    failures = 0
    for check in checks:
        status = "PASS" if check.passed else "FAIL"
        failures += not check.passed
        print(
            f"{status}  {check.name:<40s} measured={check.measured:.3e} "
            f"tolerance={check.tolerance:.3e}"
        )
    print(f"{len(checks) - failures}/{len(checks)} checks passed")
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splitmh",
        description="Predict and measure Metropolis-Hastings acceptance rates "
        "and jump sizes for AR(1) splitting proposals.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("predict", "emit theory-only rows for a config"),
        ("run", "run chains and emit prediction + Monte Carlo rows"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="JSON experiment config")
        cmd.add_argument("--out", default=None, help="output CSV path")
        cmd.add_argument(
            "--workers", type=int, default=1, help="parallel grid-point workers"
        )
    ver = sub.add_parser("verify", help="run a self-check suite")
    ver.add_argument("--suite", required=True, choices=SUITES)
    ver.add_argument(
        "--tolerance-scale",
        type=float,
        default=1.0,
        help="multiply every tolerance (0 makes all statistical checks fail)",
    )
    ver.add_argument("--out", default=None, help="CSV path for the figures suite")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args.suite, args.tolerance_scale, args.out)
        config = load_config(args.config)
        with open(args.config) as fh:
            doc = json.load(fh)
        if args.command == "predict":
            rows = cmd_predict(config, workers=args.workers, doc=doc)
        else:
            rows = cmd_run(config, workers=args.workers, doc=doc)
        header = csv_header(config.jump_directions)
        out = args.out or config.out
        if out:
            write_csv(out, header, rows)
        else:
            print(",".join(header))
            for row in rows:
                print(",".join(format_value(row.get(col)) for col in header))
        return 0
    except (ValueError, OSError) as exc:
        # Every library error type subclasses ValueError; a bad parameter in
        # the config (too-large step, non-convergent gain, unknown family)
        # is a configuration problem from the CLI's point of view, and so is
        # an unreadable config or unwritable output path.
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
