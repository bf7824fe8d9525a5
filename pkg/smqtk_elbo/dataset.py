"""
Datasets of observable rows and their JSON-lines serialization.

A serialized dataset is a header object followed by one record per row::

    {"D": 2, "N": 3, "family": "ef-mixture/gaussian-diagonal", "seed": 0}
    {"x": [0.1, -1.3]}
    ...
"""
import json
import logging
from typing import Any, Dict, Optional, Union

import numpy as np
from smqtk_dataprovider import DataElement

from smqtk_elbo.exceptions import ContractError


LOG = logging.getLogger(__name__)


class Dataset (object):
    """
    Immutable ``(N, D)`` block of observable rows tagged with the model family
    that produced (or is paired with) it.

    :param x: ``(N, D)`` array of rows.
    :param family: Model family tag the rows belong to.
    :param seed: Seed the rows were sampled with, if any.
    :param metadata: JSON-compliant provenance stored under the header key
        ``"meta"``, e.g. the run configuration that produced the rows.

    :raises ContractError: Empty, ragged or non-finite data.
    """

    def __init__(
        self,
        x: np.ndarray,
        family: str,
        seed: Optional[int] = None,
        metadata: Optional[Dict[str, Any]] = None
    ):
        x = np.array(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ContractError(f"Dataset rows must form a non-empty (N, D) array, got shape {x.shape}.")
        if not np.isfinite(x).all():
            raise ContractError("Dataset rows must be finite.")
        x.flags.writeable = False
        self._x = x
        self.family = family
        self.seed = seed
        self.metadata = metadata

    def __repr__(self) -> str:
        return f"Dataset(family={self.family!r}, N={self.n}, D={self.dim}, seed={self.seed!r})"

    @property
    def x(self) -> np.ndarray:
        return self._x

    @property
    def n(self) -> int:
        return self._x.shape[0]

    @property
    def dim(self) -> int:
        return self._x.shape[1]

    def header(self) -> Dict[str, Any]:
        header: Dict[str, Any] = {"family": self.family, "D": self.dim, "N": self.n, "seed": self.seed}
        if self.metadata is not None:
            header["meta"] = self.metadata
        return header

    def to_jsonl(self) -> bytes:
        """
        :return: JSON-lines encoding of the dataset. Integral datasets are
            written with integer values.
        """
        integral = bool(np.all(self._x == np.floor(self._x)))
        lines = [json.dumps(self.header(), sort_keys=True)]
        for row in self._x:
            values = [int(v) for v in row] if integral else row.tolist()
            lines.append(json.dumps({"x": values}))
        return ("\n".join(lines) + "\n").encode("utf-8")

    @classmethod
    def from_jsonl(cls, content: bytes) -> "Dataset":
        """
        :param content: JSON-lines bytes as written by ``to_jsonl``.

        :raises ContractError: Malformed header or rows, or counts that
            disagree with the header.

        :return: Parsed dataset.
        """
        lines = [ln for ln in content.decode("utf-8").splitlines() if ln.strip()]
        if not lines:
            raise ContractError("Empty dataset document.")
        try:
            header = json.loads(lines[0])
            rows = [json.loads(ln)["x"] for ln in lines[1:]]
            family = header["family"]
        except (ValueError, KeyError, TypeError) as ex:
            raise ContractError(f"Malformed dataset document: {ex}") from ex
        if len({len(r) for r in rows}) > 1:
            raise ContractError("Dataset rows have differing dimensions.")
        ds = cls(np.array(rows, dtype=float), family, header.get("seed"), header.get("meta"))
        if header.get("N", ds.n) != ds.n or header.get("D", ds.dim) != ds.dim:
            raise ContractError(
                f"Dataset header declares N={header.get('N')}, D={header.get('D')} "
                f"but content has N={ds.n}, D={ds.dim}."
            )
        return ds

    def write(self, element: DataElement) -> None:
        """
        :param element: Writable data element to store the JSON-lines
            encoding in.
        """
        element.set_bytes(self.to_jsonl())
        LOG.debug("Wrote %s to %s", self, element)

    @classmethod
    def read(cls, element: DataElement) -> "Dataset":
        """
        :param element: Data element holding a JSON-lines dataset.

        :raises ContractError: Malformed content.

        :return: Parsed dataset.
        """
        return cls.from_jsonl(element.get_bytes())


def data_array(data: Union[Dataset, np.ndarray]) -> np.ndarray:
    """
    :param data: Dataset or array of rows.

    :return: ``(N, D)`` array of the rows.
    """
    if isinstance(data, Dataset):
        return data.x
    x = np.asarray(data, dtype=float)
    return x[:, None] if x.ndim == 1 else x
