from functools import singledispatch, update_wrapper
import numpy as np
import hashlib
import pprint
import copy
import json
import os


# ------------------------- errors ---------------------------
class ConfigurationMismatchError(ValueError):
    """Objects defined on different configurations were combined."""


class IntegrationDivergedError(ValueError):
    """A replica produced a non-finite state."""

    def __init__(self, replica, step, message=None):
        self.replica = int(replica)
        self.step = int(step)
        if message is None:
            message = "non-finite state in replica {} at step {}".format(
                self.replica, self.step
            )
        super().__init__(message)


class SeriesDivergenceError(ValueError):
    """The series is evaluated outside its region of convergence."""


class HypothesisError(ValueError):
    """The parameters violate the hypothesis p in [2, q)."""


class DegenerateGridError(ValueError):
    """A fit was requested on a grid with too few distinct indices."""


class ConfigError(ValueError):
    """
    Validation of an experiment configuration failed. All violations are
    collected in `errors` as "block.field: message" strings.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__(
            "invalid configuration:\n  " + "\n  ".join(self.errors)
            if self.errors
            else "invalid configuration"
        )


# ---------------- experiment options object -----------------
CONFIGURATION_KINDS = ("poisson", "hardcore", "lattice", "explicit")
INTERACTION_KINDS = ("clipped_linear", "tanh_coupling", "user_table")
PROFILES = ("linear", "quadratic", "constant")
SUITES = ("sample", "simulate", "picard", "estimates", "operator-fit", "full")

DEFAULT_BLOCKS = {
    "configuration": {
        "kind": "poisson",
        "dim": 1,
        "box_halfwidth": 50.0,
        "intensity": 1.0,
        "hc_radius": None,
        "spacing": 1.0,
        "points": None,
        "seed": None,
    },
    "drift": {
        "kind": "clipped_linear",
        "r": 1.5,
        "J": 0.2,
        "profile": "linear",
        "h": 0.0,
        "kappa": 0.0,
        "table": None,
        "lipschitz_C": None,
    },
    "diffusion": {
        "kind": "clipped_linear",
        "r": 1.5,
        "J": 0.1,
        "profile": "linear",
        "h": 0.1,
        "kappa": 0.0,
        "table": None,
        "lipschitz_C": None,
    },
    "scale": {"alpha_star": 0.5, "alpha_sup": 2.0, "n_grid": 6, "grid": None},
    "dynamics": {"T": 1.0, "n_steps": 64, "M": 256, "p": 2.0, "q": 4.0, "u0": 1.0},
    "operator": {
        "a": 1.0,
        "beta_sup": 2.5,
        "delta": 0.25,
        "p": 2.0,
        "k_max": [8, 16, 32, 64, 128],
    },
    "run": {
        "suite": "full",
        "out": "results",
        "workers": 1,
        "tol": 1e-6,
        "n_max": 50,
        "tail_tol": 1e-12,
        "n_pairs": 32,
        "n_samples": 1000,
        "pair_budget": 256,
        "oracle_configs": 20,
        "regularity_seeds": 20,
        "regularity_halfwidths": [25.0, 50.0, 100.0],
        "cross_validate": True,
    },
}
DEFAULT_SEED = 42


class ExperimentConfig(object):
    """
    Options object of an experiment. Every block falls back to its defaults for
    keys that are not given. Use `validate()` (or `load_config`) before running.
    """

    def __init__(
        self,
        object=None,
        configuration=None,
        drift=None,
        diffusion=None,
        scale=None,
        dynamics=None,
        operator=None,
        run=None,
        seed=DEFAULT_SEED,
    ):
        # get all arguments
        arguments = locals()
        if arguments["object"] is not None:
            arguments = dict(arguments["object"])
        else:
            arguments = {k: v for k, v in arguments.items() if v is not None}
            del arguments["self"]

        self._unknown = sorted(
            key for key in arguments if key not in DEFAULT_BLOCKS and key != "seed"
        )

        if "seed" in arguments:
            self.seed = arguments["seed"]
        else:
            self.seed = DEFAULT_SEED

        for block, defaults in DEFAULT_BLOCKS.items():
            values = copy.deepcopy(defaults)
            given = arguments.get(block)
            if isinstance(given, dict):
                values.update(copy.deepcopy(given))
            elif given is not None:
                values["__invalid__"] = given
            setattr(self, block, values)

    def __repr__(self):
        return "ExperimentConfig(\n  {}\n)".format(pprint.pformat(self.to_dict()))

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.to_dict() == other.to_dict()

    def to_dict(self):
        """
        Plain dictionary of the configuration; `ExperimentConfig(cfg.to_dict())`
        reproduces the object.
        """
        config = {"seed": self.seed}
        for block in DEFAULT_BLOCKS:
            config[block] = copy.deepcopy(getattr(self, block))
        return config

    def to_json(self, fp=None):
        return serialize_as_json(self.to_dict(), fp, pretty=True)

    def override(self, seed=None, workers=None, out=None, suite=None):
        """
        Return a copy with command line overrides applied.
        """
        config = self.to_dict()
        if seed is not None:
            config["seed"] = seed
        if workers is not None:
            config["run"]["workers"] = workers
        if out is not None:
            config["run"]["out"] = out
        if suite is not None:
            config["run"]["suite"] = suite
        return ExperimentConfig(config)

    def validate(self):
        """
        Collect every violation of the configuration constraints.

        Returns
        -------
        list of str
            messages formatted as "block.field: message", empty if valid
        """
        errors = ["{}: unknown block".format(key) for key in self._unknown]

        for block, defaults in DEFAULT_BLOCKS.items():
            values = getattr(self, block)
            if "__invalid__" in values:
                errors.append("{}: must be an object".format(block))
                continue
            for key in sorted(values):
                if key not in defaults:
                    errors.append("{}.{}: unknown field".format(block, key))

        if not _is_int(self.seed) or not 0 <= self.seed < 2 ** 64:
            errors.append("seed: must be an unsigned 64-bit integer")

        errors += _validate_configuration(self.configuration)
        errors += _validate_interaction("drift", self.drift)
        errors += _validate_interaction("diffusion", self.diffusion)
        errors += _validate_scale(self.scale)
        errors += _validate_dynamics(self.dynamics)
        errors += _validate_operator(self.operator, self.scale)
        errors += _validate_run(self.run)
        return errors

    def scale_grid(self):
        """
        Grid of scale indices, either given explicitly or uniform.
        """
        if self.scale["grid"] is not None:
            return [float(a) for a in self.scale["grid"]]
        return np.linspace(
            self.scale["alpha_star"], self.scale["alpha_sup"], self.scale["n_grid"]
        ).tolist()


def _is_int(value):
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool)


def _is_real(value):
    return isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(
        value, bool
    )


def _check(errors, condition, path, message):
    if not condition:
        errors.append("{}: {}".format(path, message))
    return condition


def _validate_configuration(block):
    errors = []
    if "__invalid__" in block:
        return errors
    _check(
        errors,
        block["kind"] in CONFIGURATION_KINDS,
        "configuration.kind",
        "must be one of {}".format(", ".join(CONFIGURATION_KINDS)),
    )
    _check(
        errors,
        _is_int(block["dim"]) and block["dim"] >= 1,
        "configuration.dim",
        "must be an integer >= 1",
    )
    _check(
        errors,
        _is_real(block["box_halfwidth"]) and block["box_halfwidth"] > 0,
        "configuration.box_halfwidth",
        "must be > 0",
    )
    _check(
        errors,
        _is_real(block["intensity"]) and block["intensity"] >= 0,
        "configuration.intensity",
        "must be >= 0",
    )
    if block["kind"] == "hardcore":
        _check(
            errors,
            _is_real(block["hc_radius"]) and block["hc_radius"] > 0,
            "configuration.hc_radius",
            "must be > 0 for kind hardcore",
        )
    if block["kind"] == "lattice":
        _check(
            errors,
            _is_real(block["spacing"]) and block["spacing"] > 0,
            "configuration.spacing",
            "must be > 0 for kind lattice",
        )
    if block["kind"] == "explicit":
        _check(
            errors,
            isinstance(block["points"], list),
            "configuration.points",
            "must be a list of coordinates for kind explicit",
        )
    if block["seed"] is not None:
        _check(
            errors,
            _is_int(block["seed"]) and 0 <= block["seed"] < 2 ** 64,
            "configuration.seed",
            "must be an unsigned 64-bit integer",
        )
    return errors


def _validate_interaction(name, block):
    errors = []
    if "__invalid__" in block:
        return errors
    _check(
        errors,
        block["kind"] in INTERACTION_KINDS,
        name + ".kind",
        "must be one of {}".format(", ".join(INTERACTION_KINDS)),
    )
    _check(errors, _is_real(block["r"]) and block["r"] > 0, name + ".r", "must be > 0")
    _check(errors, _is_real(block["J"]), name + ".J", "must be a real number")
    _check(errors, _is_real(block["h"]), name + ".h", "must be a real number")
    _check(errors, _is_real(block["kappa"]), name + ".kappa", "must be a real number")
    _check(
        errors,
        block["profile"] in PROFILES,
        name + ".profile",
        "must be one of {}".format(", ".join(PROFILES)),
    )
    if block["lipschitz_C"] is not None:
        _check(
            errors,
            _is_real(block["lipschitz_C"]) and block["lipschitz_C"] > 0,
            name + ".lipschitz_C",
            "must be > 0",
        )
    if block["kind"] == "user_table":
        table = block["table"]
        valid = (
            isinstance(table, dict)
            and isinstance(table.get("x"), list)
            and isinstance(table.get("y"), list)
            and len(table["x"]) == len(table["y"]) >= 2
        )
        if _check(
            errors,
            valid,
            name + ".table",
            "must be an object with lists x and y of equal length >= 2",
        ):
            _check(
                errors,
                bool(np.all(np.diff(np.asarray(table["x"], dtype=float)) > 0)),
                name + ".table",
                "x must be strictly increasing",
            )
    return errors


def _validate_scale(block):
    errors = []
    if "__invalid__" in block:
        return errors
    lower, upper = block["alpha_star"], block["alpha_sup"]
    valid = _check(
        errors, _is_real(lower) and lower >= 0, "scale.alpha_star", "must be >= 0"
    )
    if valid and _check(errors, _is_real(upper), "scale.alpha_sup", "must be real"):
        _check(
            errors,
            lower < upper,
            "scale.alpha_sup",
            "must satisfy alpha_star < alpha_sup",
        )
    if block["grid"] is None:
        _check(
            errors,
            _is_int(block["n_grid"]) and block["n_grid"] >= 2,
            "scale.n_grid",
            "must be an integer >= 2",
        )
    else:
        grid = np.asarray(block["grid"], dtype=float)
        ok = grid.ndim == 1 and grid.size >= 2 and bool(np.all(np.diff(grid) > 0))
        _check(errors, ok, "scale.grid", "must be strictly increasing with >= 2 points")
        if ok and _is_real(lower) and _is_real(upper):
            _check(
                errors,
                grid[0] >= lower and grid[-1] <= upper,
                "scale.grid",
                "must lie in [alpha_star, alpha_sup]",
            )
    return errors


def _validate_dynamics(block):
    errors = []
    if "__invalid__" in block:
        return errors
    _check(errors, _is_real(block["T"]) and block["T"] > 0, "dynamics.T", "must be > 0")
    _check(
        errors,
        _is_int(block["n_steps"]) and block["n_steps"] >= 1,
        "dynamics.n_steps",
        "must be an integer >= 1",
    )
    _check(
        errors,
        _is_int(block["M"]) and block["M"] >= 1,
        "dynamics.M",
        "must be an integer >= 1",
    )
    p, q = block["p"], block["q"]
    if _check(errors, _is_real(p) and p >= 2, "dynamics.p", "must be >= 2"):
        _check(
            errors,
            _is_real(q) and q > p,
            "dynamics.q",
            "must satisfy p in [2, q) (got p={}, q={})".format(p, q),
        )
    u0 = block["u0"]
    _check(
        errors,
        _is_real(u0)
        or isinstance(u0, str)
        or (isinstance(u0, list) and all(_is_real(v) for v in u0)),
        "dynamics.u0",
        "must be a number, a list of per-site values or a file path",
    )
    return errors


def _validate_operator(block, scale):
    errors = []
    if "__invalid__" in block:
        return errors
    _check(errors, _is_real(block["a"]) and block["a"] > 0, "operator.a", "must be > 0")
    _check(
        errors,
        _is_real(block["delta"]) and block["delta"] >= 0,
        "operator.delta",
        "must be >= 0",
    )
    if _check(errors, _is_real(block["p"]) and block["p"] > 1, "operator.p", "must be > 1"):
        if _is_real(block["delta"]):
            _check(
                errors,
                block["delta"] <= (block["p"] - 1) / block["p"],
                "operator.delta",
                "must be <= (p - 1) / p",
            )
    if _is_real(scale.get("alpha_sup")):
        _check(
            errors,
            _is_real(block["beta_sup"]) and block["beta_sup"] > scale["alpha_sup"],
            "operator.beta_sup",
            "must be > scale.alpha_sup",
        )
    _check(
        errors,
        isinstance(block["k_max"], list)
        and len(block["k_max"]) >= 2
        and all(_is_int(k) and k >= 1 for k in block["k_max"]),
        "operator.k_max",
        "must be a list of at least two integers >= 1",
    )
    return errors


def _validate_run(block):
    errors = []
    if "__invalid__" in block:
        return errors
    _check(
        errors,
        block["suite"] in SUITES,
        "run.suite",
        "must be one of {}".format(", ".join(SUITES)),
    )
    _check(errors, isinstance(block["out"], str), "run.out", "must be a path")
    _check(
        errors,
        _is_int(block["workers"]) and block["workers"] >= 1,
        "run.workers",
        "must be an integer >= 1",
    )
    for key in ("tol", "tail_tol"):
        _check(
            errors,
            _is_real(block[key]) and block[key] > 0,
            "run." + key,
            "must be > 0",
        )
    for key in ("n_max", "n_samples", "pair_budget", "oracle_configs", "regularity_seeds"):
        _check(
            errors,
            _is_int(block[key]) and block[key] >= 1,
            "run." + key,
            "must be an integer >= 1",
        )
    _check(
        errors,
        _is_int(block["n_pairs"]) and block["n_pairs"] >= 8,
        "run.n_pairs",
        "must be an integer >= 8",
    )
    _check(
        errors,
        isinstance(block["regularity_halfwidths"], list)
        and len(block["regularity_halfwidths"]) >= 1
        and all(_is_real(v) and v > 0 for v in block["regularity_halfwidths"]),
        "run.regularity_halfwidths",
        "must be a non-empty list of positive numbers",
    )
    return errors


def singledispatch_class(func):
    """
    The singledispatch function only applies to functions. This function creates a
    wrapper around the singledispatch so it can be used for class instances.

    Returns
    -------
    dispatch
        dispatcher for methods
    """

    dispatcher = singledispatch(func)

    def wrapper(*args, **kw):
        return dispatcher.dispatch(args[0].__class__)(*args, **kw)

    wrapper.register = dispatcher.register
    update_wrapper(wrapper, dispatcher)
    return wrapper


@singledispatch_class
def load_config(source):
    """
    Load and validate an experiment configuration.

    Parameters
    ----------
    source : str, dict or ExperimentConfig
        path to a JSON file, or an already parsed configuration

    Returns
    -------
    ExperimentConfig
        validated configuration

    Raises
    ------
    ConfigError
        listing every violation
    """
    raise ConfigError(
        ["config: unsupported source type {}".format(type(source).__name__)]
    )


@load_config.register(str)
def _load_config_path(source):
    try:
        with open(source) as f:
            parsed = json.load(f)
    except OSError as err:
        raise ConfigError(["config: cannot read {} ({})".format(source, err)])
    except json.JSONDecodeError as err:
        raise ConfigError(["config: invalid JSON in {} ({})".format(source, err)])
    if not isinstance(parsed, dict):
        raise ConfigError(["config: top level must be an object"])
    return load_config(parsed)


@load_config.register(dict)
def _load_config_dict(source):
    return load_config(ExperimentConfig(source))


@load_config.register(ExperimentConfig)
def _load_config_object(source):
    errors = source.validate()
    if errors:
        raise ConfigError(errors)
    return source


def resolve_u0(value, n_sites):
    """
    Per-site initial values from the `dynamics.u0` field.
    """
    if isinstance(value, str):
        with open(value) as f:
            value = json.load(f)
    if isinstance(value, list):
        values = np.asarray(value, dtype=np.float64)
        if values.shape != (n_sites,):
            raise ValueError(
                "u0 has {} values, the configuration has {} sites".format(
                    values.size, n_sites
                )
            )
        return values
    return np.full(n_sites, float(value))


# --------------------- seed derivation ----------------------
def derive_seed(master, suite, purpose):
    """
    Derive an independent 64-bit seed for one purpose within a suite: the first
    8 bytes (big endian) of sha256("{master}/{suite}/{purpose}").

    Parameters
    ----------
    master : int
        master seed of the experiment
    suite : str
        name of the pipeline step
    purpose : str
        what the randomness is used for

    Returns
    -------
    int
        seed in [0, 2**64)
    """
    digest = hashlib.sha256("{}/{}/{}".format(master, suite, purpose).encode()).digest()
    return int.from_bytes(digest[:8], "big")


# --------- supportive functions for serialization -----------
def to_builtin(obj):
    """
    Recursively convert numpy scalars and arrays into JSON compatible types.
    """
    if isinstance(obj, dict):
        return {str(k): to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_builtin(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_builtin(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def serialize_as_json(obj, fp=None, pretty=False, indent=2):
    obj = to_builtin(obj)
    if fp:
        with open(fp, "w") as f:
            if pretty:
                json.dump(obj, f, indent=indent)
                f.write("\n")
            else:
                json.dump(obj, f)
    else:
        if pretty:
            return json.dumps(obj, indent=indent)
        else:
            return json.dumps(obj)


def serialize_as_csv(frame, fp):
    """
    Write a table with its fixed column order and 17 significant digits, so
    identical floats always produce identical text.

    Parameters
    ----------
    frame : pandas.DataFrame
        table to write
    fp : str
        destination path
    """
    directory = os.path.dirname(fp)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(fp, index=False, float_format="%.17g", lineterminator="\n")
