"""
JSON and CSV artifact serialization through ``DataElement`` instances.

JSON output is deterministic: keys are sorted and floats use the shortest
representation that round-trips to the same double (at most 17 significant
digits).
"""
import csv
import io
import json
import logging
from typing import Any, Iterable, Sequence

import numpy as np
from smqtk_dataprovider import DataElement


LOG = logging.getLogger(__name__)


def to_jsonable(obj: Any) -> Any:
    """
    Recursively convert numpy containers and scalars into JSON-compliant
    Python types.

    >>> to_jsonable({"a": np.arange(2), "b": (np.float64(0.5),)})
    {'a': [0, 1], 'b': [0.5]}

    :param obj: Structure of dicts, lists, tuples, numpy arrays and scalars.

    :return: Equivalent structure of dicts, lists and Python scalars.
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dumps(obj: Any) -> str:
    """
    :param obj: Structure to serialize.

    :return: Deterministic, indented JSON text with a trailing newline.
    """
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_json(element: DataElement, obj: Any) -> None:
    """
    Serialize a structure as JSON into the given data element.

    :param element: Writable data element.
    :param obj: Structure to serialize.

    :raises smqtk_dataprovider.exceptions.ReadOnlyError: The element is not
        writable.
    """
    element.set_bytes(dumps(obj).encode("utf-8"))
    LOG.debug("Wrote JSON artifact to %s", element)


def read_json(element: DataElement) -> Any:
    """
    :param element: Data element holding JSON text.

    :raises ValueError: The element content is not valid JSON.

    :return: Parsed structure.
    """
    return json.loads(element.get_bytes().decode("utf-8"))


def write_csv(element: DataElement, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """
    Write rows of values as CSV into the given data element.

    :param element: Writable data element.
    :param header: Column names.
    :param rows: Row value sequences, parallel to ``header``.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                         for v in row])
    element.set_bytes(buf.getvalue().encode("utf-8"))
    LOG.debug("Wrote CSV artifact to %s", element)
