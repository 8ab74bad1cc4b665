import copy
import logging
import os
import platform
import pprint
import time
from datetime import datetime, timezone
import numpy as np
import pandas as pd
from .configuration import Configuration
from .configuration import build_neighbors
from .configuration import brute_force_neighbors
from .configuration import explicit_configuration
from .configuration import lattice_configuration
from .configuration import regularity_fit
from .configuration import regularity_stability
from .configuration import sample_hardcore
from .configuration import sample_poisson
from .dynamics import ProcessEnsemble
from .dynamics import TimeGrid
from .dynamics import euler_maruyama
from .dynamics import generate_noise
from .dynamics import locality_check
from .dynamics import summary_table
from .estimates import ContractionConstants
from .estimates import E_series
from .estimates import a_T
from .estimates import bound_table
from .estimates import growth_bound
from .estimates import hat_L
from .estimates import kolmogorov_fit
from .estimates import picard_bound
from .estimates import series_table
from .interactions import InteractionFamily
from .interactions import admissibility_check
from .interactions import gl_exponent_fit
from .operators import KernelSpec
from .operators import diagonal_blowup
from .operators import singularity_fit
from .picard import certified_lipschitz
from .picard import contraction_report
from .picard import cross_validate
from .picard import picard_iterate
from .picard import uniqueness_probe
from .scale import ScaleInterval
from .scale import WeightedSpinVector
from .scale import weighted_norm
from .scale import zp_norm_estimate
from .. import __version__
from ..utils import ConfigError
from ..utils import ExperimentConfig
from ..utils import SeriesDivergenceError
from ..utils import derive_seed
from ..utils import load_config
from ..utils import resolve_u0
from ..utils import serialize_as_csv
from ..utils import serialize_as_json

SUITE_PARTS = {
    "sample": ("sample",),
    "simulate": ("sample", "simulate"),
    "picard": ("sample", "simulate", "picard"),
    "estimates": ("estimates",),
    "operator-fit": ("operators",),
    "full": ("sample", "simulate", "picard", "estimates", "operators"),
}


class Sample(object):
    """
    First step of an experiment run: load the configuration, sample the
    quenched configuration and verify its neighbour structure, regularity and
    the interaction families.

    The run is organised as a chain of steps:
    1. sample
    2. simulate
    3. iterate
    4. bound
    5. experiment

    Parameters
    ----------
    data : str, dict or ExperimentConfig
        configuration file path or parsed configuration
    options : dict, optional
        overrides of `seed`, `workers`, `out` and `suite`

    Returns
    -------
    dict
        object created including
        - new key: checks
        - new key: tables
        - new key: configuration
        - new key: neighbors
    """

    def __init__(self, data, options={}):
        self._started = time.time()
        self._started_at = datetime.now(timezone.utc).isoformat()
        self.output = {
            "suite": None,
            "parts": (),
            "checks": [],
            "tables": {},
            "error": None,
        }
        self.options = None
        try:
            self.options = load_config(data).override(**options)
            errors = self.options.validate()
            if errors:
                raise ConfigError(errors)
        except ConfigError as err:
            self._fail("config", err)
            self.options = _fallback_config(data, options)
        else:
            self.output["suite"] = self.options.run["suite"]
            self.output["parts"] = SUITE_PARTS[self.output["suite"]]

        self._guarded("sample", self._sampler)

    def __repr__(self):
        return "Sample(\n{}\n)".format(pprint.pformat(self._summary()))

    def to_dict(self):
        """
        Convert the step to a dictionary.
        """
        result = copy.copy(self.output)
        result["options"] = self.options.to_dict() if self.options else None
        return result

    def _summary(self):
        return {
            "suite": self.output["suite"],
            "checks": [(c["name"], c["passed"]) for c in self.output["checks"]],
            "tables": sorted(self.output["tables"]),
            "error": self.output["error"],
        }

    # ------------------------- helpers --------------------------
    def _selected(self, part):
        return part in self.output["parts"]

    def _fail(self, step, err):
        logging.error("step {} failed: {}".format(step, err))
        self.output["error"] = {
            "step": step,
            "type": type(err).__name__,
            "message": str(err),
        }

    def _guarded(self, step, func):
        if self.output["error"] is not None:
            return
        try:
            func(self.output)
        except Exception as err:
            self._fail(step, err)

    def _record(self, name, passed, detail, measured=None, bound=None):
        passed = bool(passed)
        self.output["checks"].append(
            {
                "name": name,
                "passed": passed,
                "measured": measured,
                "bound": bound,
                "detail": detail,
            }
        )
        if passed:
            logging.info("check {} passed".format(name))
        else:
            logging.warning("check {} failed: {}".format(name, detail))

    def _seed(self, step, purpose):
        return derive_seed(self.options.seed, step, purpose)

    def _scale(self):
        scale = self.options.scale
        return ScaleInterval(
            scale["alpha_star"], scale["alpha_sup"], self.options.scale_grid()
        )

    def _families(self):
        return (
            InteractionFamily.from_dict(self.options.drift),
            InteractionFamily.from_dict(self.options.diffusion),
        )

    def _make_configuration(self):
        block = self.options.configuration
        seed = block["seed"]
        if seed is None:
            seed = self._seed("sample", "configuration")
        if block["kind"] == "poisson":
            return sample_poisson(
                block["dim"], block["box_halfwidth"], block["intensity"], seed
            )
        if block["kind"] == "hardcore":
            return sample_hardcore(
                block["dim"],
                block["box_halfwidth"],
                block["intensity"],
                block["hc_radius"],
                seed,
            )
        if block["kind"] == "lattice":
            return lattice_configuration(
                block["dim"], block["box_halfwidth"], block["spacing"]
            )
        return explicit_configuration(block["points"], block["box_halfwidth"])

    # -------------------------- step ----------------------------
    def _sampler(self, data):
        if not self._selected("sample"):
            return
        block = self.options.configuration
        drift, diffusion = self._families()
        r = max(drift.r, diffusion.r)

        config = self._make_configuration()
        ns = build_neighbors(config, r)
        data["configuration"] = config
        data["neighbors"] = ns
        logging.info("sampled {} sites, {} neighbour pairs".format(len(config), ns.indices.size))

        self._neighbor_oracle(block, r)

        q = self.options.dynamics["q"]
        fit = regularity_fit(ns, config, q)
        seeds = [
            self._seed("sample", "regularity/{}".format(i))
            for i in range(self.options.run["regularity_seeds"])
        ]
        stability = regularity_stability(
            block["dim"],
            self.options.run["regularity_halfwidths"],
            block["intensity"],
            r,
            q,
            seeds,
        )
        data["tables"]["regularity_stability"] = stability["table"]
        self._record(
            "regularity",
            np.isfinite(fit.a_fit) and stability["ratio"] <= 2.0,
            "a_fit finite and c_log_fit stable within a factor 2 across box sizes",
            measured={"a_fit": fit.a_fit, "c_log_fit": fit.c_log_fit, "ratio": stability["ratio"]},
            bound=2.0,
        )

        for name, family in (("drift", drift), ("diffusion", diffusion)):
            report = admissibility_check(
                family, self.options.run["n_samples"], self._seed("sample", "admissibility/" + name)
            )
            self._record(
                "admissibility_" + name,
                report["range_ok"] and report["lipschitz_ok"],
                "sampled Lipschitz ratio <= declared C and zero outside the range",
                measured=report["C_emp"],
                bound=family.lipschitz_C,
            )

        scale = self._scale()
        if len(scale) < 4:
            self._record("gl_fit", False, "scale grid has fewer than 4 indices")
            return
        for name, family in (("drift", drift), ("diffusion", diffusion)):
            report = gl_exponent_fit(
                name,
                family,
                config,
                ns,
                scale,
                self.options.run["n_pairs"],
                self._seed("sample", "gl_fit/" + name),
            )
            table = report["table"]
            data["tables"]["gl_fit_" + name] = table
            inside = bool(np.all(table["ratio_max"] <= table["bound"] * (1.0 + 1e-12)))
            self._record(
                "gl_fit_" + name,
                inside and report["q_emp"] >= 2.0,
                "measured ratios inside the fitted envelope and q_emp >= 2",
                measured={"q_emp": report["q_emp"], "L_emp": report["L_emp"], "K_emp": report["K_emp"]},
                bound=2.0,
            )

    def _neighbor_oracle(self, block, r):
        n_configs = self.options.run["oracle_configs"]
        intensity = block["intensity"]
        if intensity == 0:
            self._record("neighbor_oracle", True, "empty configurations")
            return
        targets = np.geomspace(10, 2000, n_configs)
        mismatches = 0
        for i, target in enumerate(targets):
            halfwidth = 0.5 * (target / intensity) ** (1.0 / block["dim"])
            config = sample_poisson(
                block["dim"], halfwidth, intensity, self._seed("sample", "oracle/{}".format(i))
            )
            fast = build_neighbors(config, r)
            slow = brute_force_neighbors(config, r)
            if not (
                np.array_equal(fast.indptr, slow.indptr)
                and np.array_equal(fast.indices, slow.indices)
            ):
                mismatches += 1
        self._record(
            "neighbor_oracle",
            mismatches == 0,
            "cell-list adjacency equals the brute-force adjacency",
            measured=mismatches,
            bound=0,
        )


class Simulate(Sample):
    """
    Second step: integrate the spin system with Euler-Maruyama under the
    experiment noise and check the increment exponent and locality.

    Returns
    -------
    dict
        object updated and expanded with
        - new key: u0
        - new key: grid
        - new key: noise
        - new key: ensemble
    """

    def __init__(self, data, options={}):
        # execute previous step
        super().__init__(data, options)

        # execute main function
        self._guarded("simulate", self._simulator)

    def __repr__(self):
        return "Simulate(\n{}\n)".format(pprint.pformat(self._summary()))

    def _simulator(self, data):
        if not (self._selected("simulate") or self._selected("picard")):
            return
        dynamics = self.options.dynamics
        workers = self.options.run["workers"]
        config = data["configuration"]
        ns = data["neighbors"]
        drift, diffusion = self._families()

        u0 = WeightedSpinVector(config, resolve_u0(dynamics["u0"], len(config)))
        grid = TimeGrid(dynamics["T"], dynamics["n_steps"])
        noise = generate_noise(
            config, grid, dynamics["M"], self._seed("simulate", "noise"), workers
        )
        data["u0"] = u0
        data["grid"] = grid
        data["noise"] = noise
        if not self._selected("simulate"):
            return

        ensemble = euler_maruyama(drift, diffusion, u0, ns, grid, noise, workers)
        data["ensemble"] = ensemble
        p = dynamics["p"]
        scale = self._scale()
        data["tables"]["summary"] = summary_table(ensemble, scale.grid, p)

        if grid.n_steps + 1 >= 8:
            fit = kolmogorov_fit(
                ensemble,
                scale.top,
                p,
                self.options.run["pair_budget"],
                self._seed("simulate", "kolmogorov"),
            )
            data["tables"]["kolmogorov"] = fit["table"]
            self._record(
                "kolmogorov",
                not fit["degenerate"] and fit["slope"] >= p / 2.0 - 0.15,
                "increment moment exponent >= p/2 - 0.15",
                measured=fit["slope"],
                bound=p / 2.0 - 0.15,
            )
            self._free_site_control(grid, dynamics["M"], p)
        else:
            self._record("kolmogorov", False, "fewer than 8 grid times")

        boundary = int(np.argmax(config.radii)) if len(config) else None
        if boundary is not None:
            k_steps = min(5, grid.n_steps)
            report = locality_check(drift, u0, ns, grid, boundary, k_steps)
            self._record(
                "locality",
                report["within"],
                "perturbation at the boundary site stays within k hops after k steps",
                measured=float(report["hops"].max()) if report["hops"].size else 0.0,
                bound=k_steps,
            )

    def _free_site_control(self, grid, M, p):
        config = Configuration([[0.0] * self.options.configuration["dim"]], 1.0)
        ns = build_neighbors(config, 1.0)
        silent = InteractionFamily(J=0.0, r=1.0)
        free = InteractionFamily(J=0.0, r=1.0, h=1.0)
        u0 = WeightedSpinVector(config, [0.0])
        noise = generate_noise(config, grid, M, self._seed("simulate", "control"))
        ensemble = euler_maruyama(silent, free, u0, ns, grid, noise)
        fit = kolmogorov_fit(
            ensemble, 0.0, 2.0, self.options.run["pair_budget"], self._seed("simulate", "control/pairs")
        )
        self._record(
            "kolmogorov_control",
            not fit["degenerate"] and abs(fit["slope"] - 1.0) <= 0.1,
            "free Brownian site has increment exponent 1 +- 0.1",
            measured=fit["slope"],
            bound=1.0,
        )


class Iterate(Simulate):
    """
    Third step: run the Picard iteration under common noise, compare its
    distances with the contraction bound and check the fixed point,
    uniqueness, the growth bound and the agreement with the integrator.

    Returns
    -------
    dict
        object updated and expanded with
        - new key: limit
        - new key: diagnostics
        - new key: lipschitz
    """

    def __init__(self, data, options={}):
        # execute previous step
        super().__init__(data, options)

        # execute main function
        self._guarded("picard", self._iterator)

    def __repr__(self):
        return "Iterate(\n{}\n)".format(pprint.pformat(self._summary()))

    def _iterator(self, data):
        if not self._selected("picard"):
            return
        dynamics = self.options.dynamics
        run = self.options.run
        workers = run["workers"]
        p, q, T = dynamics["p"], dynamics["q"], dynamics["T"]
        tol, n_max = run["tol"], run["n_max"]
        config, ns = data["configuration"], data["neighbors"]
        u0, grid, noise = data["u0"], data["grid"], data["noise"]
        drift, diffusion = self._families()
        scale = self._scale()

        L = certified_lipschitz(drift, diffusion, config, ns, scale, q)
        constants = ContractionConstants(p=p, q=q, L=L, T=T)
        data["lipschitz"] = L
        logging.info("certified scale-Lipschitz constant L={}".format(L))

        limit, diag = picard_iterate(
            u0, drift, diffusion, ns, grid, noise, scale, p, n_max, tol,
            constants=constants, workers=workers,
        )
        data["limit"] = limit
        data["diagnostics"] = diag
        data["tables"]["picard_diagnostics"] = diag.to_frame()
        report = contraction_report(diag, constants, scale, p, q, T)
        data["tables"]["contraction"] = report

        top = report[report["beta"] == scale.top]
        first = top[(top["n"] >= 1) & (top["n"] <= 5)]
        measured = top["d_n"].to_numpy()
        decreasing = bool(np.all(np.diff(measured[2:]) <= 0))
        self._record(
            "picard_contraction",
            not first["flagged"].any() and decreasing,
            "d_n <= bound_n (1 + 3 stderr/bound) for n = 1..5, decreasing from n = 2",
            measured=first["d_n"].tolist(),
            bound=first["bound_n"].tolist(),
        )

        residual_ok = diag.residual <= tol + 3.0 * diag.residual_std_error
        self._record(
            "fixed_point",
            diag.converged and residual_ok.all(),
            "residual <= tol + 3 stderr at every grid index",
            measured=diag.residual.tolist(),
            bound=tol,
        )

        rng = np.random.default_rng(self._seed("picard", "uniqueness"))
        offsets = rng.normal(0.0, 1.0, len(u0))
        starts = {
            "doubled": u0 * 2.0,
            "offset": WeightedSpinVector(u0.config, 2.0 * u0.values + offsets),
        }
        rows = []
        passed = True
        for name, value in starts.items():
            alt_start = ProcessEnsemble.constant(value, grid, noise.M)
            probe = uniqueness_probe(
                u0, alt_start, drift, diffusion, ns, grid, noise, scale, p, n_max, tol, workers
            )
            passed = passed and bool(
                np.all(probe["z_distance"] <= 2.0 * tol + 3.0 * probe["std_error"])
            )
            rows.append(
                _frame(
                    start=name,
                    beta=probe["betas"],
                    z_distance=probe["z_distance"],
                    stderr=probe["std_error"],
                )
            )
        table = pd.concat(rows, ignore_index=True)
        data["tables"]["uniqueness"] = table
        self._record(
            "uniqueness",
            passed,
            "limits from u0, 2 u0 and 2 u0 + seeded offsets agree within 2 tol + 3 stderr",
            measured=table["z_distance"].tolist(),
            bound=2.0 * tol,
        )

        delta = scale.top - scale.alpha_star
        u0_norm = weighted_norm(u0, scale.alpha_star)
        measured_norm = zp_norm_estimate(limit, scale.top, p).value
        bound = growth_bound(p, q, L, T, delta, u0_norm, run["tail_tol"])
        self._record(
            "growth_bound",
            measured_norm <= bound,
            "solution norm below the growth bound at the top grid index",
            measured=measured_norm,
            bound=bound,
        )

        if run["cross_validate"]:
            report = cross_validate(
                u0,
                drift,
                diffusion,
                ns,
                T,
                [grid.n_steps, 2 * grid.n_steps],
                noise.M,
                self._seed("picard", "cross_validation"),
                scale.top,
                p,
                tol,
                max(n_max, 2 * grid.n_steps),
                workers,
            )
            data["tables"]["cross_validation"] = report["table"]
            self._record(
                "integrator_agreement",
                report["deterministic_exact"] and 0.25 <= report["ratio"] <= 0.75,
                "exact agreement without noise; gap ratio in [0.25, 0.75] when n_steps doubles",
                measured=report["ratio"],
                bound=[0.25, 0.75],
            )


class Bound(Iterate):
    """
    Fourth step: closed-form constants, the series E^(p), the decay of the
    Picard bound and the operator examples.

    Returns
    -------
    dict
        object updated and expanded with
        - new tables: bounds, series, operator_sweep, diagonal_blowup
    """

    def __init__(self, data, options={}):
        # execute previous step
        super().__init__(data, options)

        # execute main function
        self._guarded("estimates", self._bounder)
        self._guarded("operator-fit", self._operator_fitter)

    def __repr__(self):
        return "Bound(\n{}\n)".format(pprint.pformat(self._summary()))

    def _bounder(self, data):
        if not self._selected("estimates"):
            return
        dynamics = self.options.dynamics
        p, q, T = dynamics["p"], dynamics["q"], dynamics["T"]
        scale = self.options.scale
        delta = scale["alpha_sup"] - scale["alpha_star"]
        L = data.get("lipschitz", 1.0)
        tail_tol = self.options.run["tail_tol"]

        exact = hat_L(2, 1, 1) == 4 and a_T(2, 1, 1) == 4 and a_T(2, 1, 0.25) == 2
        dominance = all(
            (hat_L(pp, 1.0, tt) * tt) ** (1.0 / pp) <= a_T(pp, 1.0, tt)
            for pp in (2, 3)
            for tt in (0.1, 0.5, 1, 2, 10)
        )
        self._record(
            "constants",
            exact and dominance,
            "closed-form constants and (hat_L T)^(1/p) <= a(T)",
        )

        errors = [abs(E_series(t, 1.0, 0.0, 1.0, tail_tol)[0] - np.exp(t)) for t in (0.1, 1.0, 5.0)]
        try:
            E_series(1.0, 1.0, 1.0 / p, p)
            refused = False
        except SeriesDivergenceError:
            refused = True
        self._record(
            "series",
            max(errors) <= 1e-10 and refused,
            "exponential special case to 1e-10 and refusal for theta >= 1/p",
            measured=max(errors),
            bound=1e-10,
        )

        tables = {
            "bounds": bound_table(np.arange(0, 201), p, q, delta, L, T),
            "bounds_unit": bound_table(np.arange(0, 201), p, q, delta, 1.0, T),
        }
        peaks = {}
        decaying = True
        for name, table in tables.items():
            data["tables"][name] = table
            values = table["bound"].to_numpy()
            peak = int(np.argmax(values))
            peaks[name] = peak
            decaying = decaying and bool(np.all(np.diff(values[peak:]) < 0))
        # the unit-L table must show a long decay, not only its onset
        unit = tables["bounds_unit"]["bound"].to_numpy()
        decaying = decaying and peaks["bounds_unit"] <= 100
        self._record(
            "bound_decay",
            decaying,
            "picard_bound decreases beyond its peak for n <= 200, "
            "with L = 1 peaking by n = 100",
            measured={"peak": peaks["bounds"], "peak_unit": peaks["bounds_unit"],
                      "last_unit": float(unit[-1])},
        )

        data["tables"]["series"] = series_table(
            [0.1, 0.5, 1.0, 2.0, 5.0], delta, 1.0 / q, p, tail_tol
        )

    def _operator_fitter(self, data):
        if not self._selected("operators"):
            return
        block = self.options.operator
        scale = self._scale()
        spec = KernelSpec(block["a"], block["beta_sup"], block["delta"], block["p"])
        report = singularity_fit(
            "kernel",
            spec,
            scale,
            self.options.run["n_pairs"],
            self._seed("operator-fit", "samples"),
        )
        data["tables"]["operator_sweep"] = report["table"]
        table = report["table"]
        inside = bool(np.all(table["ratio_max"] <= table["bound"] * (1.0 + 1e-12)))
        q_pred = spec.q_pred
        slope_ok = np.isinf(q_pred) or report["slope"] <= 1.25 / q_pred
        blowup = diagonal_blowup(
            block["a"], block["beta_sup"], block["delta"], block["p"], block["k_max"]
        )
        data["tables"]["diagonal_blowup"] = blowup["table"]
        growth = blowup["table"]
        growth_ok = bool(
            np.all(np.abs(growth["max_diag"] / growth["predicted"] - 1.0) <= 0.1)
        ) and abs(blowup["exponent"] - block["delta"]) <= 0.1 * max(block["delta"], 1e-12)
        self._record(
            "operator_exponent",
            inside and slope_ok and growth_ok,
            "ratios inside C (beta - alpha)^(-1/q_pred); diagonal grows like (1 + K)^delta",
            measured={"q_emp": report["q_emp"], "slope": report["slope"], "exponent": blowup["exponent"]},
            bound={"q_pred": q_pred},
        )


class Experiment(Bound):
    """
    Last step: write the manifest and the tables of the run to the output
    directory. The manifest is written even when a step failed.

    Returns
    -------
    dict
        object updated and expanded with
        - new key: manifest
        - new key: passed
    """

    def __init__(self, data, options={}):
        # execute previous step
        super().__init__(data, options)

        # execute main function
        self.output = self._finalizer(self.output)

    def __repr__(self):
        return "Experiment(\n{}\n)".format(pprint.pformat(self._summary()))

    @property
    def passed(self):
        return self.output["passed"]

    @property
    def manifest(self):
        return self.output["manifest"]

    def to_dict(self):
        """
        Manifest and tables of the run.
        """
        return {"manifest": self.output["manifest"], "tables": dict(self.output["tables"])}

    def _finalizer(self, data):
        out = self.options.run["out"]
        os.makedirs(out, exist_ok=True)
        written = []
        for name in sorted(data["tables"]):
            fp = os.path.join(out, name + ".csv")
            serialize_as_csv(data["tables"][name], fp)
            written.append(name + ".csv")
        if "configuration" in data:
            data["configuration"].to_json(os.path.join(out, "configuration.json"))
            written.append("configuration.json")

        checks = data["checks"]
        passed = data["error"] is None and all(check["passed"] for check in checks)
        data["passed"] = passed
        data["manifest"] = {
            "package": "scalesde",
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "config": self.options.to_dict(),
            "suite": data["suite"],
            "started": self._started_at,
            "finished": datetime.now(timezone.utc).isoformat(),
            "wall_time": time.time() - self._started,
            "tables": written,
            "checks": checks,
            "passed": passed,
            "error": data["error"],
        }
        serialize_as_json(data["manifest"], os.path.join(out, "manifest.json"), pretty=True)
        if passed:
            logging.info("all {} checks passed".format(len(checks)))
        else:
            logging.warning(
                "run failed: {}".format(
                    data["error"] or [c["name"] for c in checks if not c["passed"]]
                )
            )
        return data


def run_experiment(config, options={}):
    """
    Run the suite selected in the configuration and write its artifacts.

    Parameters
    ----------
    config : str, dict or ExperimentConfig
        configuration file path or parsed configuration
    options : dict, optional
        overrides of `seed`, `workers`, `out` and `suite`

    Returns
    -------
    Experiment
        finished run; `to_dict()` holds manifest and tables
    """
    return Experiment(config, options)


def _frame(**columns):
    return pd.DataFrame(columns, columns=list(columns))


def _fallback_config(data, options):
    # keep the output directory of an invalid configuration
    out = options.get("out")
    if out is None and isinstance(data, dict):
        out = (data.get("run") or {}).get("out")
    if out is None and isinstance(data, ExperimentConfig):
        out = data.run.get("out")
    fallback = ExperimentConfig()
    if isinstance(out, str):
        fallback.run["out"] = out
    return fallback
