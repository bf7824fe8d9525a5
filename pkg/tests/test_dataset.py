import json
import unittest

import numpy as np
import numpy.testing
import pytest

from smqtk_dataprovider.impls.data_element.memory import DataMemoryElement

from smqtk_elbo.dataset import Dataset, data_array
from smqtk_elbo.exceptions import ContractError


class TestDataset (unittest.TestCase):

    def test_immutable_rows(self) -> None:
        ds = Dataset(np.array([[1., 2.], [3., 4.]]), "ef-mixture/gaussian-diagonal", seed=3)
        assert (ds.n, ds.dim) == (2, 2)
        with pytest.raises(ValueError):
            ds.x[0, 0] = 5.

    def test_vector_becomes_column(self) -> None:
        assert Dataset(np.arange(3.), "ef-mixture/gamma").x.shape == (3, 1)

    def test_invalid(self) -> None:
        with pytest.raises(ContractError):
            Dataset(np.zeros((0, 2)), "sbn")
        with pytest.raises(ContractError):
            Dataset(np.array([[np.inf]]), "sbn")

    def test_jsonl_round_trip(self) -> None:
        ds = Dataset(np.array([[0.1, -1.3], [2.5, 1e-17]]), "linear-gaussian", seed=7,
                     metadata={"config": {"n": 2}})
        e = DataMemoryElement(readonly=False)
        ds.write(e)
        back = Dataset.read(e)
        numpy.testing.assert_equal(back.x, ds.x)
        assert back.family == "linear-gaussian" and back.seed == 7
        assert back.metadata == {"config": {"n": 2}}
        assert json.loads(ds.to_jsonl().splitlines()[0]) == {
            "family": "linear-gaussian", "D": 2, "N": 2, "seed": 7, "meta": {"config": {"n": 2}},
        }

    def test_integral_rows_written_as_integers(self) -> None:
        lines = Dataset(np.array([[0., 3.]]), "ef-mixture/poisson-product").to_jsonl().decode().splitlines()
        assert json.loads(lines[0]) == {"family": "ef-mixture/poisson-product", "D": 2, "N": 1, "seed": None}
        assert lines[1] == '{"x": [0, 3]}'

    def test_header_mismatch(self) -> None:
        content = b'{"family": "sbn", "N": 3, "D": 1}\n{"x": [1]}\n'
        with pytest.raises(ContractError):
            Dataset.from_jsonl(content)

    def test_malformed(self) -> None:
        with pytest.raises(ContractError):
            Dataset.from_jsonl(b"")
        with pytest.raises(ContractError):
            Dataset.from_jsonl(b'{"N": 1}\n{"x": [1]}\n')
        with pytest.raises(ContractError):
            Dataset.from_jsonl(b'{"family": "sbn"}\n{"x": [1]}\n{"x": [1, 0]}\n')

    def test_data_array(self) -> None:
        ds = Dataset(np.ones((2, 2)), "sbn")
        assert data_array(ds) is ds.x
        assert data_array(np.arange(3)).shape == (3, 1)
