"""Figure specifications loaded from JSON."""

import json
from dataclasses import dataclass, field


KINDS = ("importance_box", "accuracy_panel", "balance_dots", "pdp_curve")

ROLES = ("predictive", "confounder", "instrument", "prognostic")


class SpecError(ValueError):
    """The figure spec is malformed."""


@dataclass
class FigureSpec:
    """One figure to render: which kind, from which CSV, to which file.

    ``highlight`` maps variable labels to roles; roles pick colors so the
    caller states which variables are predictive, confounders, instruments
    or prognostic. Labels that never occur in the data are an error.
    """

    kind: str
    input: str
    output: str
    highlight: dict = field(default_factory=dict)
    title: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(
                f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if not self.input:
            raise SpecError("spec needs a non-empty 'input' CSV path")
        if not self.output:
            raise SpecError("spec needs a non-empty 'output' path")
        suffix = str(self.output).rsplit(".", 1)[-1].lower()
        if suffix not in ("svg", "png"):
            raise SpecError(
                f"output must end in .svg or .png, got {self.output!r}")
        for label, role in self.highlight.items():
            if role not in ROLES:
                raise SpecError(
                    f"unknown role {role!r} for {label!r}; "
                    f"expected one of {ROLES}")

    @property
    def format(self):
        return str(self.output).rsplit(".", 1)[-1].lower()

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise SpecError("figure spec must be a JSON object")
        unknown = set(doc) - {"kind", "input", "output", "highlight", "title"}
        if unknown:
            raise SpecError(f"unknown spec fields: {sorted(unknown)}")
        try:
            return cls(
                kind=doc.get("kind", ""),
                input=doc.get("input", ""),
                output=doc.get("output", ""),
                highlight=dict(doc.get("highlight", {})),
                title=str(doc.get("title", "")),
            )
        except (TypeError, AttributeError) as exc:
            raise SpecError(f"malformed figure spec: {exc}") from exc

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
