"""
Command line entry point: ``smqtk-elbo <command> [options]``.

Commands:

``gen``
    Sample a dataset from a model document.
``fit``
    Fit a model to a dataset by EM, or probabilistic PCA in closed form.
``verify``
    Fit (or load a fit) and check that the ELBO equals the entropy sum.
``criterion``
    Certify the parameterization criterion of a model family.
``report``
    Merge verify and criterion artifacts into a summary table.

Options resolve with the precedence command line flags, then the
``--config`` JSON file, then ``RunConfig`` defaults. Every JSON artifact
embeds the resolved configuration and seed. Artifacts are only written once
the command has fully succeeded.

Exit status: 0 when all requested checks pass, 1 when a check fails or the
computation breaks down, 2 for malformed configuration or input documents,
3 for I/O errors.
"""
import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from smqtk_core.configuration import Configurable, from_config_dict
from smqtk_core.dict import merge_dict
from smqtk_dataprovider import DataElement
from smqtk_dataprovider.impls.data_element.file import DataFileElement
from smqtk_dataprovider.utils import SimpleTimer

# Imported for plugin registration when running from a source checkout.
import smqtk_elbo.impls.generative_model.ef_mixture  # noqa: F401
import smqtk_elbo.impls.generative_model.linear_gaussian  # noqa: F401
import smqtk_elbo.impls.generative_model.sigmoid_belief_net  # noqa: F401
from smqtk_elbo.criterion import DEFAULT_DRAWS, DEFAULT_TOL, DEFAULT_Z_SAMPLES, certify_model, summarize
from smqtk_elbo.dataset import Dataset
from smqtk_elbo.decompose import DEFAULT_TOL_EQ, verify_stationary
from smqtk_elbo.exceptions import ContractError
from smqtk_elbo.inference import (
    CLOSED_FORM,
    DEFAULT_MAX_ITERS,
    DEFAULT_TOL_ELBO,
    DEFAULT_TOL_GRAD,
    EM,
    FitReport,
    fit_em,
    fit_ppca_report,
    trajectory_header,
)
from smqtk_elbo.interfaces.generative_model import GenerativeModel
from smqtk_elbo.utils.artifacts import dumps, read_json, write_csv, write_json


LOG = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3

COMMANDS = ("gen", "fit", "verify", "criterion", "report")
INIT_DATA = "data"
INIT_MODEL = "model"

LOG_FORMAT = "%(levelname)7s - %(asctime)s - %(name)s.%(funcName)s - %(message)s"

ModelDocument = Dict[str, Any]


class RunConfig (Configurable):
    """
    Resolved options of one command line run.

    :param command: One of ``gen``, ``fit``, ``verify``, ``criterion`` or
        ``report``.
    :param model: Model document (SMQTK type configuration dictionary of a
        ``GenerativeModel``), inline JSON text of one, or a path to a JSON
        file holding one.
    :param data_path: JSON-lines dataset to read.
    :param fit_path: Fit artifact that ``verify`` loads instead of fitting.
    :param seed: Seed of sampling, initialization and parameter draws.
    :param n: Number of rows ``gen`` samples.
    :param method: ``em`` or ``closed-form`` (p-PCA only).
    :param latent_dim: Latent dimension of closed-form p-PCA; the model
        document's latent dimension when zero.
    :param init: ``data`` initializes the model from the data before EM,
        ``model`` starts from the given parameters.
    :param max_iters: EM iteration cap.
    :param tol_elbo: EM ELBO change threshold.
    :param tol_grad: EM gradient infinity-norm threshold.
    :param tol_eq: Relative tolerance of the stationary equality.
    :param tol_criterion: Residual tolerance of the parameterization
        criterion.
    :param draws: Criterion parameter draws.
    :param z_samples: Criterion latent samples per draw.
    :param threads: Worker threads; ``1`` gives bit-stable output.
    :param track_entropy_sum: Record the entropy sum at every EM iteration.
    :param output_path: Artifact to write. ``report`` prints its table when
        empty.
    :param trajectory_csv: Optional CSV of the ELBO trajectory of a fit.
    :param inputs: Artifacts merged by ``report``.
    """

    def __init__(
        self,
        command: str = "",
        model: Optional[Union[str, ModelDocument]] = None,
        data_path: str = "",
        fit_path: str = "",
        seed: int = 0,
        n: int = 1000,
        method: str = EM,
        latent_dim: int = 0,
        init: str = INIT_DATA,
        max_iters: int = DEFAULT_MAX_ITERS,
        tol_elbo: float = DEFAULT_TOL_ELBO,
        tol_grad: float = DEFAULT_TOL_GRAD,
        tol_eq: float = DEFAULT_TOL_EQ,
        tol_criterion: float = DEFAULT_TOL,
        draws: int = DEFAULT_DRAWS,
        z_samples: int = DEFAULT_Z_SAMPLES,
        threads: int = 1,
        track_entropy_sum: bool = False,
        output_path: str = "",
        trajectory_csv: str = "",
        inputs: Optional[Sequence[str]] = None,
    ):
        self.command = command
        self.model = model
        self.data_path = data_path
        self.fit_path = fit_path
        self.seed = int(seed)
        self.n = int(n)
        self.method = method
        self.latent_dim = int(latent_dim)
        self.init = init
        self.max_iters = int(max_iters)
        self.tol_elbo = float(tol_elbo)
        self.tol_grad = float(tol_grad)
        self.tol_eq = float(tol_eq)
        self.tol_criterion = float(tol_criterion)
        self.draws = int(draws)
        self.z_samples = int(z_samples)
        self.threads = int(threads)
        self.track_entropy_sum = bool(track_entropy_sum)
        self.output_path = output_path
        self.trajectory_csv = trajectory_csv
        self.inputs = list(inputs or [])
        self.validate()

    def validate(self) -> None:
        """
        :raises ContractError: Unknown tags or out of range values.
        """
        if self.command not in COMMANDS:
            raise ContractError(f"Unknown command {self.command!r}; expected one of {COMMANDS}.")
        if self.method not in (EM, CLOSED_FORM):
            raise ContractError(f"Unknown fit method {self.method!r}.")
        if self.init not in (INIT_DATA, INIT_MODEL):
            raise ContractError(f"Unknown initialization {self.init!r}.")
        for name in ("tol_elbo", "tol_grad", "tol_eq", "tol_criterion"):
            if not getattr(self, name) > 0.0:
                raise ContractError(f"Tolerance {name} must be positive, got {getattr(self, name)!r}.")
        for name in ("n", "draws", "z_samples"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be at least one, got {getattr(self, name)}.")
        if self.max_iters < 0 or self.latent_dim < 0:
            raise ContractError("max_iters and latent_dim must be non-negative.")

    def get_config(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "model": self.model,
            "data_path": self.data_path,
            "fit_path": self.fit_path,
            "seed": self.seed,
            "n": self.n,
            "method": self.method,
            "latent_dim": self.latent_dim,
            "init": self.init,
            "max_iters": self.max_iters,
            "tol_elbo": self.tol_elbo,
            "tol_grad": self.tol_grad,
            "tol_eq": self.tol_eq,
            "tol_criterion": self.tol_criterion,
            "draws": self.draws,
            "z_samples": self.z_samples,
            "threads": self.threads,
            "track_entropy_sum": self.track_entropy_sum,
            "output_path": self.output_path,
            "trajectory_csv": self.trajectory_csv,
            "inputs": list(self.inputs),
        }


def _input_element(path: str, what: str) -> DataElement:
    # DataFileElement reads missing files as empty content.
    if not path:
        raise ContractError(f"No {what} path given.")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{what.capitalize()} file does not exist: {path}")
    return DataFileElement(path, readonly=True)


def _output_element(path: str) -> DataElement:
    return DataFileElement(path, readonly=False)


def resolve_model_document(model: Optional[Union[str, ModelDocument]]) -> Optional[ModelDocument]:
    """
    :param model: Model document, inline JSON text of one or a path to a
        JSON file holding one.

    :raises ContractError: Text that is neither inline JSON nor a path, or a
        document that is not a JSON object.
    :raises FileNotFoundError: Missing model file.

    :return: Model document, or ``None`` when no model was given.
    """
    if model is None or isinstance(model, dict):
        return model
    text = model.strip()
    if not text:
        return None
    if text.startswith("{"):
        doc = json.loads(text)
    else:
        doc = read_json(_input_element(text, "model"))
    if not isinstance(doc, dict):
        raise ContractError("A model document must be a JSON object.")
    return doc


def build_config(
    flags: Dict[str, Any],
    config_path: Optional[str] = None
) -> RunConfig:
    """
    Merge command line flags over an optional JSON configuration file over
    the ``RunConfig`` defaults.

    :param flags: ``RunConfig`` parameters given on the command line.
    :param config_path: Optional JSON file of ``RunConfig`` parameters.

    :raises ContractError: Malformed values.
    :raises TypeError: Unknown parameters.
    :raises FileNotFoundError: Missing configuration or model file.

    :return: Resolved configuration with the model document loaded.
    """
    merged = RunConfig.get_default_config()
    if config_path:
        file_config = read_json(_input_element(config_path, "configuration"))
        if not isinstance(file_config, dict):
            raise ContractError("The configuration file must hold a JSON object.")
        merge_dict(merged, file_config)
    model = flags.get("model", merged.get("model"))
    merge_dict(merged, {k: v for k, v in flags.items() if k != "model"})
    merged["model"] = resolve_model_document(model)
    return RunConfig.from_config(merged, merge_default=False)


def load_model(config: RunConfig) -> GenerativeModel:
    """
    :param config: Run configuration.

    :raises ContractError: No model document was given.
    :raises ValueError: The document does not name a known model type.

    :return: Model built from the configuration's model document.
    """
    if not config.model:
        raise ContractError(f"Command {config.command!r} requires --model.")
    return from_config_dict(config.model, GenerativeModel.get_impls())


def _artifact(config: RunConfig, **content: Any) -> Dict[str, Any]:
    doc = {"command": config.command, "config": config.get_config(), "seed": config.seed}
    doc.update(content)
    return doc


def _fit(config: RunConfig, data: Dataset) -> FitReport:
    if config.method == CLOSED_FORM:
        latent_dim = config.latent_dim
        if not latent_dim:
            latent_dim = load_model(config).latent_dim
        return fit_ppca_report(data, latent_dim, config.tol_grad)
    model = load_model(config)
    if model.tag != data.family:
        LOG.warning("Fitting a %s model to data tagged %s", model.tag, data.family)
    if config.init == INIT_DATA:
        model = model.initialize(data.x, config.seed)
    return fit_em(model, data, max_iters=config.max_iters, tol_elbo=config.tol_elbo,
                  tol_grad=config.tol_grad, threads=config.threads,
                  track_entropy_sum=config.track_entropy_sum)


def _write_outputs(config: RunConfig, doc: Dict[str, Any], fit: Optional[FitReport] = None) -> None:
    if config.output_path:
        write_json(_output_element(config.output_path), doc)
        LOG.info("Wrote %s", config.output_path)
    if fit is not None and config.trajectory_csv:
        write_csv(_output_element(config.trajectory_csv), trajectory_header(fit), fit.trajectory_rows())
        LOG.info("Wrote %s", config.trajectory_csv)


def run_gen(config: RunConfig) -> int:
    model = load_model(config)
    if not config.output_path:
        raise ContractError("Command 'gen' requires --out.")
    data = model.sample(config.n, config.seed)
    data = Dataset(data.x, data.family, data.seed, metadata={"config": config.get_config()})
    data.write(_output_element(config.output_path))
    LOG.info("Wrote %s", data)
    return EXIT_OK


def run_fit(config: RunConfig) -> int:
    data = Dataset.read(_input_element(config.data_path, "data"))
    fit = _fit(config, data)
    _write_outputs(config, _artifact(config, family=fit.final_model.tag, fit=fit.to_dict()), fit)
    return EXIT_OK


def run_verify(config: RunConfig) -> int:
    data = Dataset.read(_input_element(config.data_path, "data"))
    if config.fit_path:
        doc = read_json(_input_element(config.fit_path, "fit"))
        fit = FitReport.from_dict(doc.get("fit", doc) if isinstance(doc, dict) else doc)
    else:
        fit = _fit(config, data)
    verdict = verify_stationary(fit, data, config.tol_eq)
    doc = _artifact(config, family=fit.final_model.tag, fit=fit.to_dict(), verdict=verdict.to_dict())
    _write_outputs(config, doc, fit)
    if not verdict.passed:
        LOG.error("Verification failed: %s", verdict.reason)
        return EXIT_FAILED
    return EXIT_OK


def run_criterion(config: RunConfig) -> int:
    model = load_model(config)
    with SimpleTimer(f"Certifying the {model.tag} family", LOG.info):
        certificates = certify_model(model, n_param_draws=config.draws, n_z_samples=config.z_samples,
                                     seed=config.seed, tol=config.tol_criterion, threads=config.threads)
    summary = summarize(certificates)
    doc = _artifact(config, family=model.tag, summary=summary,
                    certificates=[c.to_dict() for c in certificates])
    _write_outputs(config, doc)
    if not summary["pass"]:
        LOG.error("Parameterization criterion failed for %s", model.tag)
        return EXIT_FAILED
    return EXIT_OK


REPORT_HEADER = ("artifact", "command", "family", "pass", "measure", "value")


def report_row(path: str, doc: Any) -> Tuple[str, str, str, bool, str, Optional[float]]:
    """
    :param path: Artifact path, used as the row label.
    :param doc: Parsed verify or criterion artifact.

    :raises ContractError: The document is neither.

    :return: Summary row parallel to ``REPORT_HEADER``.
    """
    if isinstance(doc, dict) and "verdict" in doc:
        verdict = doc["verdict"]
        return (path, "verify", str(doc.get("family")), bool(verdict["pass"]),
                "rel_gap", verdict["rel_gap"])
    if isinstance(doc, dict) and "summary" in doc:
        summary = doc["summary"]
        residuals = [r for r in (summary.get("max_part_a_residual"), summary.get("max_part_b_residual"))
                     if r is not None]
        return (path, "criterion", str(summary.get("family")), bool(summary["pass"]),
                "max_residual", max(residuals) if residuals else None)
    raise ContractError(f"{path} is neither a verify nor a criterion artifact.")


def format_table(rows: Sequence[Sequence[Any]]) -> str:
    cells = [[str(c) for c in REPORT_HEADER]]
    cells.extend(["" if c is None else (repr(c) if isinstance(c, float) else str(c)) for c in row]
                 for row in rows)
    widths = [max(len(r[i]) for r in cells) for i in range(len(REPORT_HEADER))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells) + "\n"


def run_report(config: RunConfig) -> int:
    if not config.inputs:
        raise ContractError("Command 'report' requires --inputs.")
    rows: List[Tuple[str, str, str, bool, str, Optional[float]]] = []
    for path in config.inputs:
        rows.append(report_row(path, read_json(_input_element(path, "artifact"))))
    sys.stdout.write(format_table(rows))
    if config.output_path:
        write_csv(_output_element(config.output_path), REPORT_HEADER, rows)
        LOG.info("Wrote %s", config.output_path)
    return EXIT_OK if all(r[3] for r in rows) else EXIT_FAILED


RUNNERS = {
    "gen": run_gen,
    "fit": run_fit,
    "verify": run_verify,
    "criterion": run_criterion,
    "report": run_report,
}


def run(config: RunConfig) -> int:
    """
    Execute one command.

    :param config: Resolved run configuration.

    :return: Exit status.
    """
    try:
        return RUNNERS[config.command](config)
    except OSError as ex:
        LOG.error("I/O error: %s", ex)
        return EXIT_IO
    except (ValueError, KeyError, TypeError) as ex:
        LOG.error("Malformed input: %s", ex)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError) as ex:
        LOG.error("%s failed: %s", config.command, ex)
        return EXIT_FAILED


def get_parser() -> argparse.ArgumentParser:
    # Absent flags stay out of the namespace so they cannot shadow the
    # configuration file.
    shared = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    shared.add_argument("-c", "--config", help="JSON file of run configuration values.")
    shared.add_argument("--model", help="Model document: inline JSON or a JSON file path.")
    shared.add_argument("--data", dest="data_path", help="JSON-lines dataset file.")
    shared.add_argument("--seed", type=int, help="Random seed.")
    shared.add_argument("--out", dest="output_path", help="Artifact output path.")
    shared.add_argument("--tol-eq", type=float, help="Relative tolerance of the stationary equality.")
    shared.add_argument("--tol-grad", type=float, help="EM gradient infinity-norm threshold.")
    shared.add_argument("--tol-elbo", type=float, help="EM ELBO change threshold.")
    shared.add_argument("--tol-criterion", type=float, help="Criterion residual tolerance.")
    shared.add_argument("--draws", type=int, help="Criterion parameter draws.")
    shared.add_argument("--z-samples", type=int, help="Criterion latent samples per draw.")
    shared.add_argument("--threads", type=int, help="Worker threads; 1 gives bit-stable output.")
    shared.add_argument("-v", "--verbose", action="store_true", default=False, help="Debug logging.")

    fitting = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    fitting.add_argument("--method", choices=(EM, CLOSED_FORM), help="Fitting method.")
    fitting.add_argument("--latent-dim", type=int, help="Latent dimension of closed-form p-PCA.")
    fitting.add_argument("--init", choices=(INIT_DATA, INIT_MODEL), help="EM starting point.")
    fitting.add_argument("--max-iters", type=int, help="EM iteration cap.")
    fitting.add_argument("--track-entropy-sum", action="store_true",
                         help="Record the entropy sum at every EM iteration.")
    fitting.add_argument("--trajectory-csv", help="CSV output of the ELBO trajectory.")

    parser = argparse.ArgumentParser(
        prog="smqtk-elbo",
        description="Fit exponential family generative models and check that "
                    "their ELBO equals a sum of entropies at stationary points.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    gen = sub.add_parser("gen", parents=[shared], help="Sample a dataset from a model.")
    gen.add_argument("--n", type=int, default=argparse.SUPPRESS, help="Number of rows.")
    sub.add_parser("fit", parents=[shared, fitting], help="Fit a model to a dataset.")
    verify = sub.add_parser("verify", parents=[shared, fitting],
                            help="Check the ELBO / entropy sum equality of a fit.")
    verify.add_argument("--fit", dest="fit_path", default=argparse.SUPPRESS,
                        help="Fit artifact to verify instead of fitting.")
    sub.add_parser("criterion", parents=[shared], help="Certify the parameterization criterion.")
    report = sub.add_parser("report", parents=[shared], help="Summarize verify and criterion artifacts.")
    report.add_argument("--inputs", nargs="+", default=argparse.SUPPRESS, help="Artifacts to merge.")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = vars(get_parser().parse_args(argv))
    logging.basicConfig(format=LOG_FORMAT, level=logging.DEBUG if args.pop("verbose", False) else logging.INFO)
    config_path = args.pop("config", None)
    try:
        config = build_config(args, config_path)
    except OSError as ex:
        LOG.error("I/O error: %s", ex)
        return EXIT_IO
    except (ValueError, KeyError, TypeError) as ex:
        LOG.error("Malformed configuration: %s", ex)
        return EXIT_CONFIG
    LOG.debug("Run configuration:\n%s", dumps(config.get_config()))
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
