from itertools import product
from typing import Any, Dict, List, Mapping, Tuple

from anytime_ppi.utils.errors import ConfigError


def linearize(dictionary: Mapping, prefix: str = "") -> List[Tuple[str, list]]:
    """
    Flatten a nested parameter dict into (dotted key, list of values) pairs.
    A scalar leaf is a one-element list, ``None`` keeps the key with value None.
    :param dictionary: nested dict whose leaves are lists
    :return: list of (key, values)
    """
    pairs = []
    for key, value in dictionary.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            pairs.extend(linearize(value, prefix=f"{name}."))
        elif isinstance(value, list):
            pairs.append((name, value))
        elif value is None:
            pairs.append((name, [None]))
        else:
            pairs.append((name, [value]))
    return pairs


def delinearize(flat: Mapping[str, Any]) -> Dict[str, Any]:
    """Rebuild the nested dict from dotted keys."""
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        node = nested
        *parents, leaf = key.split(".")
        for parent in parents:
            node = node.setdefault(parent, {})
        node[leaf] = value
    return nested


def make_grid(dict_of_list: Mapping, return_cartesian_elements: bool = False):
    """
    Produce a list of dict for each combination of values in the input dict given by the list of values
    :param dict_of_list: a dictionary where values can be lists
    :param return_cartesian_elements: also return the (key, values) pairs with more than one value
    :return: a list of dictionaries given by the cartesian product of values in the input dictionary
    """
    linearized = linearize(dict_of_list)
    if not linearized:
        grid = [{}]
        return (grid, []) if return_cartesian_elements else grid
    keys, values = zip(*linearized)
    empty = [k for k, v in linearized if len(v) == 0]
    if empty:
        raise ConfigError(f"There shouldn't be empty lists in grid: {empty}")
    grid = [delinearize(dict(zip(keys, combo))) for combo in product(*values)]
    if return_cartesian_elements:
        varying = [(k, v) for k, v in linearized if len(v) > 1]
        return grid, varying
    return grid
