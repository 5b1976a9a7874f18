import enum
import io
from dataclasses import fields, is_dataclass
from fractions import Fraction
from pathlib import PurePath

import rich
from pydantic import BaseModel
from rich.console import Console
from rich.syntax import Syntax


def prepr(obj, indent=2, print_rich_theme=None) -> str:
    """
    ``prepr`` (pretty repr) renders the effective configuration of a command as nested, indented
    text, similar to pretty-printed JSON but keeping type names:

        MinerConfig(
          min_confidence=0.3,
          ...
        )

    Supported nesting: pydantic models, dataclasses, dicts, lists, tuples, sets and frozensets.
    Enums render as their value, ``Fraction`` as a decimal and paths as strings, so the output is
    stable across runs and platforms. Set members are sorted. Pydantic fields declared with
    ``exclude=True`` (credentials) are left out.

    :param obj: The object to render.
    :param indent: Number of spaces for each indentation level.
    :param print_rich_theme: If given, also print the result to the terminal, highlighted with this
        pygments theme.
    """

    def _repr_nested(obj, level=0):
        if isinstance(obj, enum.Enum):
            return repr(obj.value)
        elif isinstance(obj, Fraction):
            return repr(float(obj))
        elif isinstance(obj, PurePath):
            return repr(str(obj))
        elif isinstance(obj, BaseModel):
            pairs = [
                (name, getattr(obj, name))
                for name, info in type(obj).model_fields.items()
                if not info.exclude
            ]
            return repr_fields(obj.__class__.__name__, pairs, level)
        elif is_dataclass(obj) and not isinstance(obj, type):
            pairs = [(f.name, getattr(obj, f.name)) for f in fields(obj)]
            return repr_fields(obj.__class__.__name__, pairs, level)
        elif isinstance(obj, dict):
            return repr_dict(obj, level)
        elif isinstance(obj, (set, frozenset)):
            return repr_sequence(sorted(obj, key=repr), level)
        elif isinstance(obj, (list, tuple)):
            return repr_sequence(obj, level)
        else:
            return repr(obj)

    def repr_fields(class_name, pairs, level):
        if not pairs:
            return f"{class_name}()"
        result = f"{class_name}(\n"
        for field_name, field_value in pairs:
            result += " " * (level + indent) + f"{field_name}="
            result += _repr_nested(field_value, level + indent)
            result += ",\n"
        result += " " * level + ")"
        return result

    def repr_dict(d, level):
        if not d:
            return "{}"
        result = "{\n"
        for key, value in d.items():
            result += " " * (level + indent) + _repr_nested(key) + ": "
            result += _repr_nested(value, level + indent)
            result += ",\n"
        result += " " * level + "}"
        return result

    def repr_sequence(seq, level):
        bracket = "()" if isinstance(seq, tuple) else "[]"
        if not seq:
            return bracket
        result = f"{bracket[0]}\n"
        for item in seq:
            result += " " * (level + indent)
            result += _repr_nested(item, level + indent)
            result += ",\n"
        result += " " * level + f"{bracket[1]}"
        return result

    ret = _repr_nested(obj)
    if print_rich_theme:
        rich.print(Syntax(ret, "python", theme=print_rich_theme))
    return ret


def config_header(*objs, prefix: str = "# ") -> str:
    """
    Comment block echoing each object through ``prepr``, one prefixed line per output line,
    terminated by a newline. Rule files and text tables start with one.
    """
    lines = []
    for obj in objs:
        lines.extend(prepr(obj).split("\n"))
    return "".join(f"{prefix}{line}\n" for line in lines)


def render_text(renderable, width: int = 100) -> str:
    """Plain-text rendering of a rich renderable, free of colour codes, for file exports."""
    console = Console(file=io.StringIO(), width=width, color_system=None, force_terminal=False)
    console.print(renderable)
    return console.file.getvalue()
