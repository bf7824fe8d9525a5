import json
import unittest

import numpy as np

from smqtk_dataprovider.impls.data_element.memory import DataMemoryElement

from smqtk_elbo.utils.artifacts import dumps, read_json, to_jsonable, write_csv, write_json


class TestArtifacts (unittest.TestCase):

    def test_to_jsonable(self) -> None:
        obj = {"a": np.array([[1., 2.]]), 3: (np.int64(4), [np.float32(0.5)])}
        assert to_jsonable(obj) == {"a": [[1.0, 2.0]], "3": [4, [0.5]]}

    def test_dumps_is_deterministic_and_round_trips(self) -> None:
        value = 0.1 + 0.2
        text = dumps({"b": value, "a": 1})
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(text)["b"] == value
        assert text == dumps({"a": 1, "b": value})

    def test_json_element_round_trip(self) -> None:
        e = DataMemoryElement(readonly=False)
        write_json(e, {"x": np.arange(3)})
        assert read_json(e) == {"x": [0, 1, 2]}

    def test_csv(self) -> None:
        e = DataMemoryElement(readonly=False)
        write_csv(e, ("iteration", "elbo"), [(0, -1.5), (1, np.float64(-1.25))])
        assert e.get_bytes().decode() == "iteration,elbo\n0,-1.5\n1,-1.25\n"
