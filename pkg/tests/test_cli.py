import io
import json
import os
import tempfile
import unittest
import unittest.mock as mock

import numpy as np
import pytest

from smqtk_core.configuration import configuration_test_helper, to_config_dict
from smqtk_dataprovider.impls.data_element.file import DataFileElement

from smqtk_elbo.cli import (
    EXIT_CONFIG,
    EXIT_FAILED,
    EXIT_IO,
    EXIT_OK,
    RunConfig,
    build_config,
    format_table,
    main,
    report_row,
    resolve_model_document,
)
from smqtk_elbo.dataset import Dataset
from smqtk_elbo.exceptions import ContractError
from smqtk_elbo.impls.generative_model.ef_mixture import ExponentialFamilyMixture
from smqtk_elbo.impls.generative_model.linear_gaussian import LinearGaussianModel
from smqtk_elbo.impls.generative_model.sigmoid_belief_net import SigmoidBeliefNetwork


GMM = ExponentialFamilyMixture("gaussian-diagonal", [0.4, 0.6], [[-4.0, 0.0, 1.0, 1.0], [4.0, 1.0, 0.6, 1.4]])
PPCA = LinearGaussianModel([[2.0, 0.0], [1.0, 1.0], [0.0, 1.5], [0.5, -1.0], [1.0, 0.0]],
                           [0.0, 1.0, 0.0, -1.0, 0.5], 0.3)


class TestRunConfig (unittest.TestCase):

    def test_configuration(self) -> None:
        inst = RunConfig(command="verify", model=to_config_dict(GMM), seed=4, tol_eq=1e-5,
                         inputs=["a.json"])
        for i in configuration_test_helper(inst):  # type: RunConfig
            assert i.command == "verify"
            assert i.seed == 4 and i.tol_eq == 1e-5
            assert i.inputs == ["a.json"]
            assert i.model == inst.model

    def test_validation(self) -> None:
        with pytest.raises(ContractError):
            RunConfig(command="train")
        with pytest.raises(ContractError):
            RunConfig(command="fit", method="sgd")
        with pytest.raises(ContractError):
            RunConfig(command="fit", init="random")
        with pytest.raises(ContractError):
            RunConfig(command="verify", tol_eq=0.0)
        with pytest.raises(ContractError):
            RunConfig(command="criterion", draws=0)
        with pytest.raises(ContractError):
            RunConfig(command="fit", max_iters=-1)


class TestBuildConfig (unittest.TestCase):

    def setUp(self) -> None:
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.dir = tmp.name

    def write(self, name: str, content: str) -> str:
        path = os.path.join(self.dir, name)
        with open(path, "w") as f:
            f.write(content)
        return path

    def test_precedence(self) -> None:
        path = self.write("run.json", json.dumps({"seed": 5, "tol_eq": 1e-3, "draws": 7}))
        config = build_config({"command": "criterion", "seed": 9}, path)
        assert config.seed == 9
        assert config.tol_eq == 1e-3 and config.draws == 7
        assert config.tol_grad == 1e-8

    def test_model_sources(self) -> None:
        doc = to_config_dict(GMM)
        assert resolve_model_document(doc) is doc
        assert resolve_model_document(json.dumps(doc)) == doc
        assert resolve_model_document(self.write("model.json", json.dumps(doc))) == doc
        assert resolve_model_document(None) is None
        with pytest.raises(ContractError):
            resolve_model_document(self.write("list.json", "[1, 2]"))
        with pytest.raises(FileNotFoundError):
            resolve_model_document(os.path.join(self.dir, "absent.json"))

    def test_flag_model_overrides_file(self) -> None:
        path = self.write("run.json", json.dumps({"model": to_config_dict(PPCA)}))
        config = build_config({"command": "criterion", "model": json.dumps(to_config_dict(GMM))}, path)
        assert config.model == to_config_dict(GMM)
        config = build_config({"command": "criterion"}, path)
        assert config.model == to_config_dict(PPCA)

    def test_unknown_key(self) -> None:
        path = self.write("run.json", json.dumps({"sead": 5}))
        with pytest.raises(TypeError):
            build_config({"command": "fit"}, path)


class TestReport (unittest.TestCase):

    def test_rows(self) -> None:
        verify = {"family": "sbn", "verdict": {"pass": True, "rel_gap": 1e-12}}
        criterion = {"summary": {"family": "ef-mixture/gamma", "pass": False,
                                 "max_part_a_residual": None, "max_part_b_residual": 0.5}}
        assert report_row("v.json", verify) == ("v.json", "verify", "sbn", True, "rel_gap", 1e-12)
        assert report_row("c.json", criterion) == ("c.json", "criterion", "ef-mixture/gamma", False,
                                                   "max_residual", 0.5)
        with pytest.raises(ContractError):
            report_row("x.json", {"fit": {}})

    def test_table(self) -> None:
        table = format_table([("v.json", "verify", "sbn", True, "rel_gap", 1e-12)])
        lines = table.splitlines()
        assert lines[0].split() == ["artifact", "command", "family", "pass", "measure", "value"]
        assert lines[1].split() == ["v.json", "verify", "sbn", "True", "rel_gap", "1e-12"]


class TestMain (unittest.TestCase):

    def setUp(self) -> None:
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.dir = tmp.name

    def path(self, name: str) -> str:
        return os.path.join(self.dir, name)

    def read(self, name: str) -> dict:
        with open(self.path(name)) as f:
            return json.load(f)

    def gen(self, model, name: str, n: int = 300, seed: int = 1) -> str:
        out = self.path(name)
        status = main(["gen", "--model", json.dumps(to_config_dict(model)), "--n", str(n),
                       "--seed", str(seed), "--out", out])
        assert status == EXIT_OK
        return out

    def test_gen(self) -> None:
        out = self.gen(GMM, "gmm.jsonl", n=50)
        ds = Dataset.read(DataFileElement(out, readonly=True))
        assert ds.x.shape == (50, 2)
        assert ds.family == "ef-mixture/gaussian-diagonal" and ds.seed == 1
        assert ds.metadata["config"]["command"] == "gen"
        np.testing.assert_equal(ds.x, GMM.sample(50, 1).x)

    def test_gen_requires_out(self) -> None:
        assert main(["gen", "--model", json.dumps(to_config_dict(GMM))]) == EXIT_CONFIG

    def test_fit_and_verify(self) -> None:
        data = self.gen(GMM, "gmm.jsonl")
        model = json.dumps(to_config_dict(GMM))
        assert main(["fit", "--model", model, "--data", data, "--out", self.path("fit.json"),
                     "--trajectory-csv", self.path("traj.csv"), "--track-entropy-sum"]) == EXIT_OK
        fit_doc = self.read("fit.json")
        assert fit_doc["command"] == "fit" and fit_doc["seed"] == 0
        assert fit_doc["config"]["data_path"] == data
        assert fit_doc["fit"]["converged"] is True
        with open(self.path("traj.csv")) as f:
            assert f.readline().strip() == "iteration,elbo,entropy_sum"

        assert main(["verify", "--data", data, "--fit", self.path("fit.json"),
                     "--out", self.path("verdict.json")]) == EXIT_OK
        verdict = self.read("verdict.json")["verdict"]
        assert verdict["pass"] is True
        assert verdict["rel_gap"] <= 1e-6

    def test_verify_fits(self) -> None:
        data = self.gen(GMM, "gmm.jsonl")
        model = json.dumps(to_config_dict(GMM))
        assert main(["verify", "--model", model, "--data", data, "--out", self.path("ok.json")]) == EXIT_OK
        assert main(["verify", "--model", model, "--data", data, "--init", "model",
                     "--max-iters", "0", "--out", self.path("bad.json")]) == EXIT_FAILED
        bad = self.read("bad.json")["verdict"]
        assert bad["pass"] is False
        assert "non-stationary" in bad["reason"]

        with mock.patch("sys.stdout", new_callable=io.StringIO) as stdout:
            status = main(["report", "--inputs", self.path("ok.json"), self.path("bad.json"),
                           "--out", self.path("report.csv")])
        assert status == EXIT_FAILED
        assert "rel_gap" in stdout.getvalue()
        with open(self.path("report.csv")) as f:
            lines = f.read().splitlines()
        assert lines[0] == "artifact,command,family,pass,measure,value"
        assert len(lines) == 3

    def test_closed_form_ppca(self) -> None:
        data = self.gen(PPCA, "ppca.jsonl", n=2000)
        assert main(["verify", "--data", data, "--method", "closed-form", "--latent-dim", "2",
                     "--tol-grad", "1e-7", "--out", self.path("ppca.json")]) == EXIT_OK
        doc = self.read("ppca.json")
        assert doc["fit"]["method"] == "closed-form"
        assert doc["verdict"]["pass"] is True

    def test_criterion_all_families(self) -> None:
        models = [
            GMM,
            ExponentialFamilyMixture("gamma", [0.5, 0.5], [[2.0, 1.0], [3.0, 2.0]]),
            ExponentialFamilyMixture("poisson-product", [0.5, 0.5], [[1.0, 2.0], [3.0, 1.0]]),
            SigmoidBeliefNetwork([0.5, 0.5], np.zeros((3, 2)), np.zeros(3)),
            PPCA,
        ]
        outputs = []
        for i, model in enumerate(models):
            out = self.path(f"criterion{i}.json")
            assert main(["criterion", "--model", json.dumps(to_config_dict(model)), "--draws", "5",
                         "--out", out]) == EXIT_OK
            doc = self.read(f"criterion{i}.json")
            assert doc["summary"]["pass"] is True
            assert len(doc["certificates"]) == 5
            outputs.append(out)
        with mock.patch("sys.stdout", new_callable=io.StringIO):
            assert main(["report", "--inputs"] + outputs) == EXIT_OK

    def test_deterministic_artifacts(self) -> None:
        data = self.gen(GMM, "gmm.jsonl", n=100)
        args = ["fit", "--model", json.dumps(to_config_dict(GMM)), "--data", data, "--seed", "3",
                "--out", self.path("fit.json")]
        assert main(args) == EXIT_OK
        with open(self.path("fit.json"), "rb") as f:
            first = f.read()
        assert main(args) == EXIT_OK
        with open(self.path("fit.json"), "rb") as f:
            assert f.read() == first

    def test_missing_data(self) -> None:
        out = self.path("fit.json")
        status = main(["fit", "--model", json.dumps(to_config_dict(GMM)),
                       "--data", self.path("absent.jsonl"), "--out", out])
        assert status == EXIT_IO
        assert not os.path.exists(out)

    def test_malformed_configuration(self) -> None:
        path = self.path("run.json")
        with open(path, "w") as f:
            f.write("{not json")
        assert main(["criterion", "--config", path]) == EXIT_CONFIG
        assert main(["criterion", "--config", self.path("absent.json")]) == EXIT_IO
        assert main(["criterion", "--model", "{\"type\": \"no.such.Model\"}"]) == EXIT_CONFIG
        assert main(["criterion", "--model", json.dumps(to_config_dict(GMM)), "--tol-criterion", "-1"]) \
            == EXIT_CONFIG
        assert main(["criterion"]) == EXIT_CONFIG

    def test_malformed_dataset(self) -> None:
        data = self.path("broken.jsonl")
        with open(data, "w") as f:
            f.write("not a dataset\n")
        assert main(["fit", "--model", json.dumps(to_config_dict(GMM)), "--data", data]) == EXIT_CONFIG
